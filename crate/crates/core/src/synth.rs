//! Seeded synthetic datasets with injected anomalies, for benches and
//! randomized tests.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub rows: usize,
    pub cat_columns: usize,
    pub num_columns: usize,
    /// Distinct values per categorical column.
    pub cardinality: usize,
    pub null_rate: f64,
    pub text_rate: f64,
    pub outlier_rate: f64,
    pub seed: u64,
}

impl SynthSpec {
    /// 50,000 rows: 5 categorical and 10 numeric columns.
    pub fn desk_scale(seed: u64) -> SynthSpec {
        SynthSpec {
            rows: 50_000,
            cat_columns: 5,
            num_columns: 10,
            cardinality: 12,
            null_rate: 0.01,
            text_rate: 0.005,
            outlier_rate: 0.005,
            seed,
        }
    }
}

const TEXT_NOISE: &[&str] = &["n/a", "12k", "unknown", "\"$1,200\"", "?", "3.5M"];

/// Renders the dataset as CSV. Categorical columns are `c0..`, numeric
/// columns `x0..`; category values are `v0..` with a skewed distribution so
/// some groups fall under small minimum sizes.
pub fn generate_csv(spec: &SynthSpec) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let centres: Vec<(f64, f64)> = (0..spec.num_columns)
        .map(|_| (rng.random_range(10.0..1000.0), rng.random_range(1.0..50.0)))
        .collect();
    let mut out = String::with_capacity(spec.rows * (spec.cat_columns * 4 + spec.num_columns * 9));
    let header: Vec<String> = (0..spec.cat_columns)
        .map(|i| format!("c{i}"))
        .chain((0..spec.num_columns).map(|i| format!("x{i}")))
        .collect();
    out.push_str(&header.join(","));
    out.push('\n');
    let card = spec.cardinality.max(1);
    for _ in 0..spec.rows {
        let mut first = true;
        let mut sep = |out: &mut String| {
            if !first {
                out.push(',');
            }
            first = false;
        };
        for _ in 0..spec.cat_columns {
            sep(&mut out);
            // squaring a uniform skews toward low indices
            let u: f64 = rng.random();
            let v = ((u * u) * card as f64) as usize;
            out.push('v');
            out.push_str(&v.min(card - 1).to_string());
        }
        for &(mean, sd) in &centres {
            sep(&mut out);
            let roll: f64 = rng.random();
            if roll < spec.null_rate {
                continue;
            }
            if roll < spec.null_rate + spec.text_rate {
                out.push_str(TEXT_NOISE[rng.random_range(0..TEXT_NOISE.len())]);
                continue;
            }
            let normal = Normal::new(mean, sd).expect("positive sd");
            let mut x = normal.sample(&mut rng);
            if roll < spec.null_rate + spec.text_rate + spec.outlier_rate {
                x += sd * rng.random_range(8.0..40.0);
            }
            out.push_str(&format!("{:.2}", x));
        }
        out.push('\n');
    }
    out
}
