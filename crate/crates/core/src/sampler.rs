//! Bounded chart payloads: every error point of a group plus at most `k`
//! clean context points.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::detect::{CodeCounts, ErrorCode, ErrorStore};
use crate::error::{Error, Result};
use crate::groups::{Group, GroupKey, Groups};
use crate::store::{Dataset, RowId, Version};
use crate::value::CellValue;

pub const DEFAULT_K: usize = 20;
pub const DEFAULT_SEED: u64 = 0x5eed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampling {
    #[default]
    ErrorFirst,
    DistanceBased,
}

impl FromStr for Sampling {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "error_first" => Ok(Sampling::ErrorFirst),
            "distance_based" => Ok(Sampling::DistanceBased),
            other => Err(Error::UnknownSampling(other.to_string())),
        }
    }
}

impl fmt::Display for Sampling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sampling::ErrorFirst => "error_first",
            Sampling::DistanceBased => "distance_based",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleParams {
    pub sampling: Sampling,
    pub k: usize,
    pub seed: u64,
}

impl Default for SampleParams {
    fn default() -> Self {
        SampleParams {
            sampling: Sampling::ErrorFirst,
            k: DEFAULT_K,
            seed: DEFAULT_SEED,
        }
    }
}

/// One plotted row. `codes` is empty for clean context points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub row: RowId,
    pub value: CellValue,
    pub codes: Vec<ErrorCode>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupPayload {
    pub key: GroupKey,
    pub cardinality: usize,
    pub error_counts: CodeCounts,
    pub dominant_code: Option<ErrorCode>,
    pub points: Vec<Point>,
    /// Set when distance-based sampling had no anchor and fell back to
    /// error-first.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartPayload {
    pub cat_column: String,
    pub num_column: String,
    pub version: Version,
    pub params: SampleParams,
    pub groups: Vec<GroupPayload>,
}

/// Most frequent code; ties go to the higher-priority code.
pub fn dominant_code(counts: &CodeCounts) -> Option<ErrorCode> {
    let mut best: Option<(&ErrorCode, usize)> = None;
    // ascending code order, so strict `>` keeps the higher-priority code
    for (code, &n) in counts {
        if n > 0 && best.is_none_or(|(_, m)| n > m) {
            best = Some((code, n));
        }
    }
    best.map(|(c, _)| c.clone())
}

/// FNV-1a, used to derive per-group seeds independent of platform hashing.
fn stable_hash(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn point(ds: &Dataset, idx: usize, row: RowId, codes: Vec<ErrorCode>) -> Point {
    Point {
        row,
        value: ds.row(row).map(|c| c[idx].clone()).unwrap_or_default(),
        codes,
    }
}

fn clean_rows(group: &Group<'_>, errors: &BTreeMap<RowId, Vec<ErrorCode>>) -> Vec<RowId> {
    group.row_ids.iter().filter(|r| !errors.contains_key(r)).copied().collect()
}

fn assemble(
    ds: &Dataset,
    group: &Group<'_>,
    errors: &BTreeMap<RowId, Vec<ErrorCode>>,
    clean: impl IntoIterator<Item = RowId>,
) -> Vec<Point> {
    let idx = ds.column_index(group.num_column).expect("group column exists");
    let mut points: Vec<Point> = errors
        .iter()
        .map(|(r, codes)| point(ds, idx, *r, codes.clone()))
        .chain(clean.into_iter().map(|r| point(ds, idx, r, Vec::new())))
        .collect();
    points.sort_by_key(|p| p.row);
    points
}

/// All error rows plus `k` clean rows drawn uniformly without replacement.
pub fn sample_error_first(
    ds: &Dataset,
    group: &Group<'_>,
    errors: &BTreeMap<RowId, Vec<ErrorCode>>,
    k: usize,
    seed: u64,
) -> Vec<Point> {
    let clean = clean_rows(group, errors);
    let take = k.min(clean.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ stable_hash(&group.key().to_string()));
    let picked = rand::seq::index::sample(&mut rng, clean.len(), take);
    assemble(ds, group, errors, picked.into_iter().map(|i| clean[i]))
}

/// All error rows plus the `k` clean rows closest to the anomaly centroid.
/// Returns `None` when there is no anchor to measure from.
pub fn sample_distance_based(
    ds: &Dataset,
    group: &Group<'_>,
    errors: &BTreeMap<RowId, Vec<ErrorCode>>,
    group_has_errors: bool,
    k: usize,
) -> Option<Vec<Point>> {
    if !group_has_errors {
        return None;
    }
    let idx = ds.column_index(group.num_column)?;
    let value = |r: &RowId| ds.row(*r).and_then(|c| c[idx].as_number());
    let anchors: Vec<f64> = errors
        .iter()
        .filter(|(_, codes)| {
            codes
                .iter()
                .any(|c| matches!(c, ErrorCode::Outlier | ErrorCode::Custom(_)))
        })
        .filter_map(|(r, _)| value(r))
        .collect();
    let centroid = if anchors.is_empty() {
        crate::detect::group_mean(ds, group.row_ids, idx)?
    } else {
        anchors.iter().sum::<f64>() / anchors.len() as f64
    };
    let mut clean: Vec<(f64, RowId)> = clean_rows(group, errors)
        .into_iter()
        .map(|r| (value(&r).map_or(f64::INFINITY, |x| (x - centroid).abs()), r))
        .collect();
    clean.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    Some(assemble(
        ds,
        group,
        errors,
        clean.into_iter().take(k).map(|(_, r)| r),
    ))
}

pub fn group_payload(
    ds: &Dataset,
    groups: &Groups,
    store: &ErrorStore,
    key: &GroupKey,
    params: &SampleParams,
) -> Result<GroupPayload> {
    let group = groups
        .get(key)
        .ok_or_else(|| Error::UnknownGroup(key.to_string()))?;
    let errors = store.error_rows(groups, key);
    let counts = store.counts(key);
    let (points, fallback) = match params.sampling {
        Sampling::ErrorFirst => (sample_error_first(ds, &group, &errors, params.k, params.seed), false),
        Sampling::DistanceBased => {
            match sample_distance_based(ds, &group, &errors, !counts.is_empty(), params.k) {
                Some(points) => (points, false),
                None => (sample_error_first(ds, &group, &errors, params.k, params.seed), true),
            }
        }
    };
    Ok(GroupPayload {
        key: key.clone(),
        cardinality: group.cardinality(),
        dominant_code: dominant_code(&counts),
        error_counts: counts,
        points,
        fallback,
    })
}

/// Payload for every group of one `(cat, num)` chart.
pub fn chart(
    ds: &Dataset,
    groups: &Groups,
    store: &ErrorStore,
    cat: &str,
    num: &str,
    params: &SampleParams,
) -> Result<ChartPayload> {
    for c in [cat, num] {
        ds.column(c)?;
    }
    let Some(members) = groups.chart(cat, num) else {
        return Err(Error::UnknownColumn(format!("{num}|{cat}")));
    };
    let keys: Vec<GroupKey> = members.map(|g| g.key()).collect();
    let payloads = keys
        .iter()
        .map(|k| group_payload(ds, groups, store, k, params))
        .collect::<Result<Vec<_>>>()?;
    Ok(ChartPayload {
        cat_column: cat.to_string(),
        num_column: num.to_string(),
        version: ds.version(),
        params: *params,
        groups: payloads,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detect::{detect_all, DetectConfig, Detectors};
    use crate::fixture::SALARIES_CSV;
    use crate::groups::{generate_groups, GroupConfig};
    use crate::store::{ingest_csv, IngestOptions};

    fn world() -> (Dataset, Groups, ErrorStore) {
        let ds = ingest_csv(SALARIES_CSV.as_bytes(), &IngestOptions::default()).unwrap();
        let groups = generate_groups(&ds, &GroupConfig::default()).unwrap();
        let store = detect_all(&ds, &groups, &Detectors::default(), &DetectConfig::default());
        (ds, groups, store)
    }

    fn rows(points: &[Point]) -> Vec<u64> {
        points.iter().map(|p| p.row.0).collect()
    }

    fn key(cat: &str, v: &str) -> GroupKey {
        GroupKey::new(cat, v, "Income")
    }

    #[test]
    fn error_first_bhutan() {
        let (ds, groups, store) = world();
        let k = key("Country", "Bhutan");
        let g = groups.get(&k).unwrap();
        let errs = store.error_rows(&groups, &k);
        for seed in 0..20 {
            let pts = sample_error_first(&ds, &g, &errs, 1, seed);
            let r = rows(&pts);
            assert!(r == [1, 3, 4] || r == [2, 3, 4], "{r:?}");
            assert_eq!(pts, sample_error_first(&ds, &g, &errs, 1, seed));
        }
        assert_eq!(rows(&sample_error_first(&ds, &g, &errs, 0, 1)), [3, 4]);
    }

    #[test]
    fn error_first_exhausts_clean_group() {
        let (ds, groups, store) = world();
        let k = key("Degree", "MS");
        let g = groups.get(&k).unwrap();
        let errs = store.error_rows(&groups, &k);
        assert_eq!(rows(&sample_error_first(&ds, &g, &errs, 10, 3)), [3, 6]);
    }

    #[test]
    fn distance_based_chad() {
        let (ds, groups, store) = world();
        let k = key("Country", "Chad");
        let g = groups.get(&k).unwrap();
        let errs = store.error_rows(&groups, &k);
        let pts = sample_distance_based(&ds, &g, &errs, true, 2).unwrap();
        assert_eq!(rows(&pts), [5, 6, 7]);
        let pts = sample_distance_based(&ds, &g, &errs, true, 0).unwrap();
        assert_eq!(rows(&pts), [7]);
        // prefix stability
        let one = sample_distance_based(&ds, &g, &errs, true, 1).unwrap();
        assert_eq!(rows(&one), [6, 7]);
    }

    #[test]
    fn distance_based_without_errors_falls_back() {
        let (ds, groups, store) = world();
        let k = key("Degree", "MS");
        let params = SampleParams {
            sampling: Sampling::DistanceBased,
            k: 5,
            seed: 1,
        };
        let p = group_payload(&ds, &groups, &store, &k, &params).unwrap();
        assert!(!p.fallback);
        let (ds2, groups2, store2) = {
            let ds = ingest_csv(b"c,x\na,1\na,2\n", &IngestOptions::default()).unwrap();
            let g = generate_groups(&ds, &GroupConfig::default()).unwrap();
            let s = detect_all(&ds, &g, &Detectors::default(), &DetectConfig::default());
            (ds, g, s)
        };
        let p = group_payload(&ds2, &groups2, &store2, &GroupKey::new("c", "a", "x"), &params).unwrap();
        assert!(p.fallback);
        assert_eq!(p.points.len(), 2);
    }

    #[test]
    fn dominant_code_rules() {
        let c = |pairs: &[(ErrorCode, usize)]| pairs.iter().cloned().collect::<CodeCounts>();
        assert_eq!(
            dominant_code(&c(&[(ErrorCode::Missing, 2), (ErrorCode::Outlier, 1)])),
            Some(ErrorCode::Missing)
        );
        assert_eq!(dominant_code(&CodeCounts::new()), None);
        assert_eq!(
            dominant_code(&c(&[(ErrorCode::Outlier, 1), (ErrorCode::TypeMismatch, 1)])),
            Some(ErrorCode::Outlier)
        );
        assert_eq!(
            dominant_code(&c(&[
                (ErrorCode::Custom("b".into()), 3),
                (ErrorCode::Custom("a".into()), 3)
            ])),
            Some(ErrorCode::Custom("a".into()))
        );
    }

    #[test]
    fn chart_payload_keeps_every_error() {
        let (ds, groups, store) = world();
        let params = SampleParams {
            k: 0,
            ..Default::default()
        };
        let chart = chart(&ds, &groups, &store, "Degree", "Income", &params).unwrap();
        let keys: Vec<_> = chart.groups.iter().map(|g| g.key.cat_value.clone()).collect();
        assert_eq!(keys, ["BS", "MS", "PhD"]);
        let phd = &chart.groups[2];
        assert_eq!(phd.dominant_code, Some(ErrorCode::Outlier));
        assert_eq!(rows(&phd.points), [7]);
        assert!(matches!(
            super::chart(&ds, &groups, &store, "Nope", "Income", &params),
            Err(Error::UnknownColumn(_))
        ));
        assert_eq!("bogus".parse::<Sampling>(), Err(Error::UnknownSampling("bogus".into())));
    }
}
