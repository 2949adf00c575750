use rayon::prelude::*;

use super::{DistanceMatrix, GraphError};
use crate::frontend::FeatureSequence;

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Accumulated cost and path length (cells visited) of a partial alignment.
#[derive(Debug, Clone, Copy)]
struct Cell {
    cost: f64,
    len: u32,
}

impl Cell {
    const UNREACHABLE: Cell = Cell { cost: f64::INFINITY, len: u32::MAX };

    fn better_than(&self, other: &Cell) -> bool {
        self.cost < other.cost || (self.cost == other.cost && self.len < other.len)
    }
}

/// Length-normalized DTW distance.
///
/// Finds the monotonic alignment path with steps `(1,0)`, `(0,1)`, `(1,1)` that
/// minimizes the summed Euclidean frame cost (ties to the shorter path) and
/// returns that cost divided by the number of cells on the path. `band`
/// optionally restricts `|i - j|` to a Sakoe-Chiba band, widened as needed so
/// the end cell stays reachable.
pub fn dtw_distance_banded(
    a: &FeatureSequence,
    b: &FeatureSequence,
    band: Option<usize>,
) -> Result<f64, GraphError> {
    if a.is_empty() || b.is_empty() {
        return Err(GraphError::EmptySequence);
    }
    if a.dim() != b.dim() {
        return Err(GraphError::DimensionMismatch { left: a.dim(), right: b.dim() });
    }
    let (n, m) = (a.num_frames(), b.num_frames());
    let band = band.map(|w| w.max(n.abs_diff(m)));
    let mut prev = vec![Cell::UNREACHABLE; m];
    let mut cur = vec![Cell::UNREACHABLE; m];
    for i in 0..n {
        let (lo, hi) = match band {
            Some(w) => (i.saturating_sub(w), (i + w + 1).min(m)),
            None => (0, m),
        };
        cur.fill(Cell::UNREACHABLE);
        for j in lo..hi {
            let mut best = if i == 0 && j == 0 { Cell { cost: 0.0, len: 0 } } else { Cell::UNREACHABLE };
            if i > 0 && j > 0 && prev[j - 1].better_than(&best) {
                best = prev[j - 1];
            }
            if i > 0 && prev[j].better_than(&best) {
                best = prev[j];
            }
            if j > 0 && cur[j - 1].better_than(&best) {
                best = cur[j - 1];
            }
            if best.cost.is_finite() {
                cur[j] = Cell { cost: best.cost + euclidean(a.frame(i), b.frame(j)), len: best.len + 1 };
            }
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    let end = prev[m - 1];
    Ok(end.cost / end.len as f64)
}

pub fn dtw_distance(a: &FeatureSequence, b: &FeatureSequence) -> Result<f64, GraphError> {
    dtw_distance_banded(a, b, None)
}

/// All-pairs DTW. Only the upper triangle is computed; rows are distributed
/// across rayon workers and written to disjoint cells.
pub fn pairwise_distances(
    segments: &[FeatureSequence],
    band: Option<usize>,
) -> Result<DistanceMatrix, GraphError> {
    if segments.iter().any(FeatureSequence::is_empty) {
        return Err(GraphError::EmptySequence);
    }
    let n = segments.len();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            ((i + 1)..n)
                .map(|j| dtw_distance_banded(&segments[i], &segments[j], band))
                .collect::<Result<Vec<_>, _>>()
        })
        .collect::<Result<_, _>>()?;
    let mut d = vec![0.0; n * n];
    for (i, row) in rows.into_iter().enumerate() {
        for (k, v) in row.into_iter().enumerate() {
            let j = i + 1 + k;
            d[i * n + j] = v;
            d[j * n + i] = v;
        }
    }
    Ok(DistanceMatrix::from_flat(n, d))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn seq(frames: &[&[f64]]) -> FeatureSequence {
        let v: Vec<Vec<f64>> = frames.iter().map(|f| f.to_vec()).collect();
        FeatureSequence::from_frames(&v, 0.01, 0.025)
    }

    #[test]
    fn hand_cases() {
        let a = seq(&[&[0.0], &[2.0]]);
        let b = seq(&[&[1.0]]);
        assert_eq!(dtw_distance(&seq(&[&[0.0]]), &b).unwrap(), 1.0);
        assert_eq!(dtw_distance(&a, &b).unwrap(), 1.0);
        assert_eq!(dtw_distance(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn errors() {
        let a = seq(&[&[0.0]]);
        let b = seq(&[&[0.0, 1.0]]);
        assert!(matches!(dtw_distance(&a, &b), Err(GraphError::DimensionMismatch { .. })));
        let empty = FeatureSequence::from_flat(vec![], 1, 0.01, 0.025);
        assert!(matches!(dtw_distance(&a, &empty), Err(GraphError::EmptySequence)));
    }

    #[test]
    fn band_wide_enough_matches_full() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let n = rng.random_range(1..20);
            let m = rng.random_range(1..20);
            let mk = |len: usize, rng: &mut ChaCha8Rng| {
                FeatureSequence::from_flat((0..len * 2).map(|_| rng.random::<f64>()).collect(), 2, 0.01, 0.025)
            };
            let (a, b) = (mk(n, &mut rng), mk(m, &mut rng));
            let full = dtw_distance(&a, &b).unwrap();
            assert_eq!(dtw_distance_banded(&a, &b, Some(40)).unwrap(), full);
            let narrow = dtw_distance_banded(&a, &b, Some(1)).unwrap();
            assert!(narrow.is_finite());
        }
    }

    #[test]
    fn pairwise_singleton_and_duplicates() {
        let s = seq(&[&[0.5], &[1.5]]);
        let d = pairwise_distances(std::slice::from_ref(&s), None).unwrap();
        assert_eq!(d.n(), 1);
        assert_eq!(d.get(0, 0), 0.0);
        let d = pairwise_distances(&[s.clone(), s], None).unwrap();
        assert_eq!(d.get(0, 1), 0.0);
        assert_eq!(d.get(1, 0), 0.0);
    }

    #[test]
    fn pairwise_matches_direct_calls() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let segs: Vec<FeatureSequence> = (0..10)
            .map(|_| {
                let len = rng.random_range(1..8);
                FeatureSequence::from_flat((0..len * 3).map(|_| rng.random::<f64>()).collect(), 3, 0.01, 0.025)
            })
            .collect();
        let d = pairwise_distances(&segs, None).unwrap();
        for i in 0..10 {
            for j in 0..10 {
                let direct = if i == j { 0.0 } else { dtw_distance(&segs[i], &segs[j]).unwrap() };
                assert!((d.get(i, j) - direct).abs() <= 1e-9);
            }
        }
    }
}
