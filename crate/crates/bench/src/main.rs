use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use gridwrangle::bench::{parse_mix, run_bench, BenchParams, BenchReport, Latency};
use gridwrangle::synth::{generate_csv, SynthSpec};
use gridwrangle::{ingest_csv, AffectedMode, IngestOptions, SessionConfig};

/// Times seeded removal and imputation operations through the incremental
/// engine and through a full rebuild after every operation.
#[derive(Debug, Parser)]
#[command(name = "bench", version)]
struct Args {
    /// CSV file to load.
    #[arg(long, required_unless_present = "synthetic_rows")]
    csv: Option<PathBuf>,
    /// Generate a synthetic 15-column dataset with this many rows instead.
    #[arg(long, conflicts_with = "csv")]
    synthetic_rows: Option<usize>,
    #[arg(long, default_value_t = 50)]
    ops: usize,
    /// Comma-separated op kinds drawn uniformly: `remove`, `impute`.
    #[arg(long, default_value = "remove,impute")]
    mix: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = b',' as char)]
    delimiter: char,
    #[arg(long, default_value_t = 2.0)]
    outlier_k: f64,
    #[arg(long, default_value_t = 2)]
    min_group_size: usize,
    #[arg(long)]
    connected_components: bool,
    /// Print the report as JSON.
    #[arg(long)]
    json: bool,
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(report) => {
            if args.json {
                println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
            } else {
                print_table(&report);
            }
            if report.equivalent {
                ExitCode::SUCCESS
            } else {
                eprintln!("bench: incremental state diverged from the full rebuild");
                ExitCode::from(3)
            }
        }
        Err(e) => {
            eprintln!("bench: {e}");
            ExitCode::from(2)
        }
    }
}

fn run(args: &Args) -> Result<BenchReport, String> {
    let bytes = match (&args.csv, args.synthetic_rows) {
        (Some(path), _) => std::fs::read(path).map_err(|e| format!("{}: {e}", path.display()))?,
        (None, Some(rows)) => generate_csv(&SynthSpec {
            rows,
            ..SynthSpec::desk_scale(args.seed)
        })
        .into_bytes(),
        (None, None) => unreachable!("clap requires one source"),
    };
    if !args.delimiter.is_ascii() {
        return Err("delimiter must be a single ASCII character".into());
    }
    let options = IngestOptions {
        delimiter: args.delimiter as u8,
        dataset_id: None,
    };
    let ds = ingest_csv(&bytes, &options).map_err(|e| e.to_string())?;
    let config = SessionConfig {
        outlier_k: args.outlier_k,
        min_group_size: args.min_group_size,
        affected_mode: if args.connected_components {
            AffectedMode::ConnectedComponents
        } else {
            AffectedMode::OneHop
        },
        ..Default::default()
    };
    let params = BenchParams {
        ops: args.ops,
        mix: parse_mix(&args.mix).map_err(|e| e.to_string())?,
        seed: args.seed,
        config,
    };
    run_bench(ds, &params).map_err(|e| e.to_string())
}

fn ms(l: &Latency) -> String {
    format!(
        "{:>9.3} {:>9.3} {:>9.3}",
        l.mean_s * 1e3,
        l.median_s * 1e3,
        l.p95_s * 1e3
    )
}

fn print_table(r: &BenchReport) {
    println!(
        "{} rows x {} columns, {} groups, {}/{} ops, seed {}",
        r.rows, r.columns, r.groups, r.ops_run, r.ops_requested, r.seed
    );
    println!(
        "{:<8} {:>5}  {:>29}  {:>29}",
        "op", "n", "incremental ms (mean/med/p95)", "rebuild ms (mean/med/p95)"
    );
    for k in &r.kinds {
        let name = serde_json::to_value(k.kind).expect("kind serializes");
        println!(
            "{:<8} {:>5}  {}  {}",
            name.as_str().unwrap_or("?"),
            k.incremental.count,
            ms(&k.incremental),
            ms(&k.baseline)
        );
    }
    println!(
        "{:<8} {:>5}  {}  {}",
        "all",
        r.incremental.count,
        ms(&r.incremental),
        ms(&r.baseline)
    );
    println!("speedup {:.1}x, states equal: {}", r.speedup, r.equivalent);
}
