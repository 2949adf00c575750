//! Objective metrics: unigram-entropy bitrate, ABX discrimination error and
//! clustering purity / NMI.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frontend::FeatureSequence;
use crate::graph::{dtw_distance, GraphError};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("total duration must be positive, got {0}")]
    InvalidDuration(f64),
    #[error("no triplets")]
    NoTriplets,
    #[error("labelings differ in length: {predicted} vs {reference}")]
    LengthMismatch { predicted: usize, reference: usize },
    #[error("empty labeling")]
    EmptyLabeling,
    #[error("metric {name} = {value} outside its range")]
    OutOfRange { name: &'static str, value: f64 },
    #[error(transparent)]
    Distance(#[from] GraphError),
}

impl EvalError {
    pub fn category(&self) -> &'static str {
        match self {
            EvalError::InvalidDuration(_) => "InvalidDuration",
            EvalError::NoTriplets => "NoTriplets",
            EvalError::LengthMismatch { .. } => "LengthMismatch",
            EvalError::EmptyLabeling => "EmptyLabeling",
            EvalError::OutOfRange { .. } => "MetricOutOfRange",
            EvalError::Distance(e) => e.category(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bitrate {
    pub bits_per_second: f64,
    /// Total symbol count M.
    pub symbols: usize,
    /// Unigram entropy H in bits.
    pub entropy_bits: f64,
    pub symbol_types: usize,
    /// Set when there were no symbols; the bitrate is then 0.
    pub warning: Option<String>,
}

/// `(M / duration) · H` with H the entropy of the pooled unigram distribution.
pub fn bitrate<'a, L: Ord + 'a>(
    transcriptions: impl IntoIterator<Item = &'a [L]>,
    total_duration_s: f64,
) -> Result<Bitrate, EvalError> {
    if !(total_duration_s > 0.0 && total_duration_s.is_finite()) {
        return Err(EvalError::InvalidDuration(total_duration_s));
    }
    let mut counts: BTreeMap<&L, usize> = BTreeMap::new();
    for t in transcriptions {
        for l in t {
            *counts.entry(l).or_default() += 1;
        }
    }
    let m: usize = counts.values().sum();
    if m == 0 {
        return Ok(Bitrate {
            bits_per_second: 0.0,
            symbols: 0,
            entropy_bits: 0.0,
            symbol_types: 0,
            warning: Some("empty transcriptions".into()),
        });
    }
    let h = entropy_bits(counts.values().copied(), m);
    Ok(Bitrate {
        bits_per_second: m as f64 / total_duration_s * h,
        symbols: m,
        entropy_bits: h,
        symbol_types: counts.len(),
        warning: None,
    })
}

fn entropy_bits(counts: impl Iterator<Item = usize>, total: usize) -> f64 {
    let n = total as f64;
    let h: f64 = counts.filter(|&c| c > 0).map(|c| c as f64 / n).map(|p| -p * p.log2()).sum();
    h.max(0.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Triplet<T> {
    pub a: T,
    pub b: T,
    /// Same category as `a`.
    pub x: T,
}

/// Fraction of triplets where X is closer to B than to A, ties counting one half.
/// Flat average over all triplets.
pub fn abx_error<T, E, F>(triplets: &[Triplet<T>], distance: F) -> Result<f64, E>
where
    T: Sync,
    E: Send + From<EvalError>,
    F: Fn(&T, &T) -> Result<f64, E> + Sync,
{
    if triplets.is_empty() {
        return Err(EvalError::NoTriplets.into());
    }
    // Half-units: 2 per error, 1 per tie.
    let halves: Vec<u64> = triplets
        .par_iter()
        .map(|t| {
            let (xa, xb) = (distance(&t.x, &t.a)?, distance(&t.x, &t.b)?);
            Ok(if xb < xa {
                2
            } else if xb == xa {
                1
            } else {
                0
            })
        })
        .collect::<Result<_, E>>()?;
    Ok(halves.iter().sum::<u64>() as f64 / (2 * triplets.len()) as f64)
}

/// [`abx_error`] with length-normalized DTW over feature sequences.
pub fn abx_error_dtw(triplets: &[Triplet<FeatureSequence>]) -> Result<f64, EvalError> {
    abx_error(triplets, |p, q| dtw_distance(p, q).map_err(EvalError::from))
}

/// Levenshtein distance divided by the longer length (0 for two empty sequences).
pub fn label_edit_distance<L: PartialEq>(a: &[L], b: &[L]) -> f64 {
    let longest = a.len().max(b.len());
    if longest == 0 {
        return 0.0;
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    for (i, x) in a.iter().enumerate() {
        let mut cur = vec![i + 1; b.len() + 1];
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = (prev[j] + usize::from(x != y)).min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        prev = cur;
    }
    prev[b.len()] as f64 / longest as f64
}

/// [`abx_error`] over decoded label sequences with [`label_edit_distance`].
pub fn abx_error_labels<L: PartialEq + Sync>(triplets: &[Triplet<Vec<L>>]) -> Result<f64, EvalError> {
    abx_error(triplets, |p, q| Ok::<_, EvalError>(label_edit_distance(p, q)))
}

/// Purity and NMI (normalized by the geometric mean of the two entropies).
///
/// When both labelings have zero entropy they are identical partitions and
/// NMI is 1; when only one does, NMI is 0.
pub fn cluster_quality<P: Ord, R: Ord>(predicted: &[P], reference: &[R]) -> Result<(f64, f64), EvalError> {
    if predicted.len() != reference.len() {
        return Err(EvalError::LengthMismatch { predicted: predicted.len(), reference: reference.len() });
    }
    if predicted.is_empty() {
        return Err(EvalError::EmptyLabeling);
    }
    let n = predicted.len();
    let mut joint: BTreeMap<(&P, &R), usize> = BTreeMap::new();
    let mut pc: BTreeMap<&P, usize> = BTreeMap::new();
    let mut rc: BTreeMap<&R, usize> = BTreeMap::new();
    for (p, r) in predicted.iter().zip(reference) {
        *joint.entry((p, r)).or_default() += 1;
        *pc.entry(p).or_default() += 1;
        *rc.entry(r).or_default() += 1;
    }
    let mut best: BTreeMap<&P, usize> = BTreeMap::new();
    for (&(p, _), &c) in &joint {
        let b = best.entry(p).or_default();
        *b = (*b).max(c);
    }
    let purity = best.values().sum::<usize>() as f64 / n as f64;

    let nf = n as f64;
    let mut mi = 0.0;
    for (&(p, r), &c) in &joint {
        let pxy = c as f64 / nf;
        mi += pxy * (c as f64 * nf / (pc[p] as f64 * rc[r] as f64)).ln();
    }
    let hp = entropy_bits(pc.values().copied(), n) * std::f64::consts::LN_2;
    let hr = entropy_bits(rc.values().copied(), n) * std::f64::consts::LN_2;
    let nmi = if hp <= 1e-15 && hr <= 1e-15 {
        1.0
    } else if hp <= 1e-15 || hr <= 1e-15 {
        0.0
    } else {
        (mi / (hp * hr).sqrt()).clamp(0.0, 1.0)
    };
    Ok((purity, nmi))
}

/// How each metric was computed, carried in every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricMethods {
    pub bitrate: String,
    pub abx: String,
    pub nmi: String,
}

impl Default for MetricMethods {
    fn default() -> Self {
        Self {
            bitrate: "symbols per second times unigram entropy (bits) over all transcriptions".into(),
            abx: "flat average over triplets; DTW over feature slices; ties count 0.5".into(),
            nmi: "mutual information over geometric mean of entropies".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub bitrate: f64,
    pub abx_error: Option<f64>,
    pub purity: Option<f64>,
    pub nmi: Option<f64>,
    pub symbol_count: usize,
    pub duration_s: f64,
    pub inventory_size: usize,
    pub methods: MetricMethods,
}

impl MetricReport {
    /// Report with only the bitrate fields filled in.
    pub fn from_bitrate(b: &Bitrate, duration_s: f64, inventory_size: usize) -> Self {
        Self {
            bitrate: b.bits_per_second,
            abx_error: None,
            purity: None,
            nmi: None,
            symbol_count: b.symbols,
            duration_s,
            inventory_size,
            methods: MetricMethods::default(),
        }
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        let check = |name, v: f64, hi: f64| {
            if v.is_finite() && (0.0..=hi).contains(&v) {
                Ok(())
            } else {
                Err(EvalError::OutOfRange { name, value: v })
            }
        };
        check("bitrate", self.bitrate, f64::MAX)?;
        check("duration_s", self.duration_s, f64::MAX)?;
        for (name, v) in [("abx_error", self.abx_error), ("purity", self.purity), ("nmi", self.nmi)] {
            if let Some(v) = v {
                check(name, v, 1.0)?;
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub const CSV_HEADER: &'static str = "bitrate,abx_error,purity,nmi,symbol_count,duration_s,inventory_size";

    /// One CSV data row matching [`MetricReport::CSV_HEADER`]; absent metrics are empty fields.
    pub fn to_csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{}",
            self.bitrate,
            opt(self.abx_error),
            opt(self.purity),
            opt(self.nmi),
            self.symbol_count,
            self.duration_s,
            self.inventory_size
        )
    }
}
