use std::collections::BTreeMap;

use rayon::prelude::*;

use super::gmm::responsibilities;
use super::viterbi::check_path;
use super::{Alignment, GaussianMixture, HmmError, HmmUnit, UnitInventory, UnitKind, UnitLabel};
use crate::frontend::FeatureSequence;

/// Smallest variance any floor may take.
pub const MIN_VARIANCE: f64 = 1e-6;
/// Transition probabilities are kept within `[TRANSITION_FLOOR, 1 - TRANSITION_FLOOR]`.
pub const TRANSITION_FLOOR: f64 = 1e-3;
/// Relative perturbation of split component means, in standard deviations.
pub const MIXUP_PERTURBATION: f64 = 0.2;
/// Frames required per mixture component before a state may be split.
pub const FRAMES_PER_COMPONENT: f64 = 10.0;

/// Per-dimension floor `factor × global variance`, never below [`MIN_VARIANCE`].
pub fn variance_floor<'a>(frames: impl IntoIterator<Item = &'a [f64]>, dim: usize, factor: f64) -> Vec<f64> {
    let mut n = 0usize;
    let mut sum = vec![0.0; dim];
    let mut sq = vec![0.0; dim];
    for x in frames {
        n += 1;
        for d in 0..dim {
            sum[d] += x[d];
            sq[d] += x[d] * x[d];
        }
    }
    (0..dim)
        .map(|d| {
            if n == 0 {
                return MIN_VARIANCE;
            }
            let mean = sum[d] / n as f64;
            (factor * (sq[d] / n as f64 - mean * mean)).max(MIN_VARIANCE)
        })
        .collect()
}

fn pooled_gaussian(frames: &[&[f64]], floor: &[f64]) -> GaussianMixture {
    let dim = floor.len();
    let n = frames.len() as f64;
    let mut mean = vec![0.0; dim];
    for x in frames {
        for d in 0..dim {
            mean[d] += x[d];
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; dim];
    for x in frames {
        for d in 0..dim {
            var[d] += (x[d] - mean[d]).powi(2);
        }
    }
    for d in 0..dim {
        var[d] = (var[d] / n).max(floor[d]);
    }
    GaussianMixture::single(mean, var)
}

/// Region boundaries `[0, b_1, ..., T]` for relative region lengths `fractions`.
pub fn region_bounds(frames: usize, fractions: &[f64]) -> Vec<usize> {
    let total: f64 = fractions.iter().sum();
    let mut cum = 0.0;
    let mut bounds = vec![0usize];
    for f in &fractions[..fractions.len() - 1] {
        cum += f / total;
        bounds.push(((cum * frames as f64).round() as usize).min(frames));
    }
    bounds.push(frames);
    bounds
}

/// Whether every region of a `frames`-long segment can hold `states` states.
pub fn flat_start_feasible(frames: usize, fractions: &[f64], states: usize) -> bool {
    region_bounds(frames, fractions).windows(2).all(|w| w[1].saturating_sub(w[0]) >= states)
}

/// Flat start from time-split segments.
///
/// Every segment is cut into `fractions.len()` consecutive regions of the
/// given relative lengths; region `k` trains `labels[k]`. Inside a region the
/// frames are split uniformly across the unit's states and pooled over all
/// segments.
pub fn flat_start_regions(
    segments: &[FeatureSequence],
    fractions: &[f64],
    labels: &[UnitLabel],
    states_per_unit: usize,
    variance_floor: &[f64],
) -> Result<Vec<HmmUnit>, HmmError> {
    if segments.is_empty() || fractions.is_empty() || fractions.len() != labels.len() || states_per_unit == 0 {
        return Err(HmmError::EmptyInput);
    }
    if fractions.iter().any(|f| !(*f > 0.0)) || !fractions.iter().sum::<f64>().is_finite() {
        return Err(HmmError::Invalid(format!("bad region fractions {fractions:?}")));
    }
    let k = fractions.len();
    let mut pools: Vec<Vec<Vec<&[f64]>>> = vec![vec![Vec::new(); states_per_unit]; k];
    for seg in segments {
        if seg.dim() != variance_floor.len() {
            return Err(HmmError::DimensionMismatch { expected: variance_floor.len(), actual: seg.dim() });
        }
        let t = seg.num_frames();
        let bounds = region_bounds(t, fractions);
        for r in 0..k {
            let (lo, hi) = (bounds[r], bounds[r + 1]);
            let n = hi.saturating_sub(lo);
            if n < states_per_unit {
                return Err(HmmError::SegmentTooShort { frames: t, region_frames: n, states: states_per_unit });
            }
            for s in 0..states_per_unit {
                for i in (lo + s * n / states_per_unit)..(lo + (s + 1) * n / states_per_unit) {
                    pools[r][s].push(seg.frame(i));
                }
            }
        }
    }
    Ok(labels
        .iter()
        .zip(pools)
        .map(|(label, states)| HmmUnit {
            label: *label,
            occupancy: states.iter().map(|p| p.len() as f64).collect(),
            states: states.iter().map(|p| pooled_gaussian(p, variance_floor)).collect(),
            transitions: vec![[0.5, 0.5]; states_per_unit],
        })
        .collect())
}

/// Onset, rhyme and offset units for one cluster.
pub fn flat_start_unit(
    segments: &[FeatureSequence],
    fractions: [f64; 3],
    cluster: usize,
    states_per_unit: usize,
    variance_floor: &[f64],
) -> Result<Vec<HmmUnit>, HmmError> {
    let labels = [
        UnitLabel::new(UnitKind::Onset, cluster),
        UnitLabel::new(UnitKind::Rhyme, cluster),
        UnitLabel::new(UnitKind::Offset, cluster),
    ];
    flat_start_regions(segments, &fractions, &labels, states_per_unit, variance_floor)
}

#[derive(Debug, Clone)]
struct StateStats {
    occ: f64,
    gamma: Vec<f64>,
    sum: Vec<Vec<f64>>,
    sq: Vec<Vec<f64>>,
    stay: f64,
    advance: f64,
}

impl StateStats {
    fn new(components: usize, dim: usize) -> Self {
        Self {
            occ: 0.0,
            gamma: vec![0.0; components],
            sum: vec![vec![0.0; dim]; components],
            sq: vec![vec![0.0; dim]; components],
            stay: 0.0,
            advance: 0.0,
        }
    }

    fn merge(&mut self, o: &StateStats) {
        self.occ += o.occ;
        self.stay += o.stay;
        self.advance += o.advance;
        for m in 0..self.gamma.len() {
            self.gamma[m] += o.gamma[m];
            for d in 0..self.sum[m].len() {
                self.sum[m][d] += o.sum[m][d];
                self.sq[m][d] += o.sq[m][d];
            }
        }
    }
}

/// Sufficient statistics keyed by (unit, state). Merging is elementwise
/// addition, so partial accumulators from parallel workers combine in any
/// grouping; callers fold them in input order for bitwise reproducibility.
#[derive(Debug, Clone, Default)]
pub struct Accumulator {
    stats: BTreeMap<(UnitLabel, usize), StateStats>,
    /// Summed path score of the accumulated alignments.
    pub log_likelihood: f64,
    pub frames: usize,
}

impl Accumulator {
    pub fn merge(&mut self, other: &Accumulator) {
        for (k, v) in &other.stats {
            match self.stats.get_mut(k) {
                Some(s) => s.merge(v),
                None => {
                    self.stats.insert(*k, v.clone());
                }
            }
        }
        self.log_likelihood += other.log_likelihood;
        self.frames += other.frames;
    }

    /// Adds one aligned utterance. Component responsibilities come from the
    /// current state mixtures.
    pub fn add(&mut self, inv: &UnitInventory, f: &FeatureSequence, alignment: &Alignment) -> Result<(), HmmError> {
        if f.dim() != inv.feature_dim {
            return Err(HmmError::DimensionMismatch { expected: inv.feature_dim, actual: f.dim() });
        }
        check_path(inv, alignment, f.num_frames())?;
        let n = alignment.entries.len();
        let mut resp = Vec::new();
        for (k, e) in alignment.entries.iter().enumerate() {
            let g = &inv.get(&e.label)?.states[e.state];
            let st = self
                .stats
                .entry((e.label, e.state))
                .or_insert_with(|| StateStats::new(g.num_components(), inv.feature_dim));
            for t in e.start_frame..e.end_frame {
                let x = f.frame(t);
                if g.num_components() == 1 {
                    resp.clear();
                    resp.push(1.0);
                } else {
                    responsibilities(g, x, &mut resp);
                }
                st.occ += 1.0;
                for (m, r) in resp.iter().enumerate() {
                    if *r == 0.0 {
                        continue;
                    }
                    st.gamma[m] += r;
                    for d in 0..x.len() {
                        st.sum[m][d] += r * x[d];
                        st.sq[m][d] += r * x[d] * x[d];
                    }
                }
            }
            st.stay += (e.end_frame - e.start_frame - 1) as f64;
            if k + 1 < n {
                st.advance += 1.0;
            }
        }
        self.log_likelihood += alignment.total_log_likelihood;
        self.frames += f.num_frames();
        Ok(())
    }
}

/// Accumulates all utterances in parallel and folds the partial results in input order.
pub fn accumulate(inv: &UnitInventory, data: &[(&FeatureSequence, &Alignment)]) -> Result<Accumulator, HmmError> {
    let parts: Vec<Accumulator> = data
        .par_iter()
        .map(|(f, a)| {
            let mut acc = Accumulator::default();
            acc.add(inv, f, a).map(|_| acc)
        })
        .collect::<Result<_, _>>()?;
    let mut total = Accumulator::default();
    for p in &parts {
        total.merge(p);
    }
    Ok(total)
}

fn update_mixture(g: &GaussianMixture, st: &StateStats, floor: &[f64]) -> GaussianMixture {
    let mut out = g.clone();
    let gsum: f64 = st.gamma.iter().sum();
    for m in 0..g.num_components() {
        let gm = st.gamma[m];
        out.weights[m] = gm / gsum;
        if gm <= 0.0 {
            continue;
        }
        for d in 0..floor.len() {
            let mean = st.sum[m][d] / gm;
            out.means[m][d] = mean;
            out.variances[m][d] = (st.sq[m][d] / gm - mean * mean).max(floor[d]);
        }
    }
    out
}

/// Hard-EM M-step from accumulated statistics.
///
/// States that received no frames keep their parameters and are listed in
/// `meta.unvisited_states`. Transition rows are the clamped maximum-likelihood
/// stay/advance ratio; rows without any observed transition are kept.
pub fn reestimate_from(inv: &UnitInventory, acc: &Accumulator) -> UnitInventory {
    let mut out = inv.clone();
    out.meta.unvisited_states.clear();
    for (label, unit) in out.units.iter_mut() {
        for s in 0..unit.num_states() {
            let Some(st) = acc.stats.get(&(*label, s)).filter(|st| st.occ > 0.0) else {
                out.meta.unvisited_states.push(format!("{label}/{s}"));
                unit.occupancy[s] = 0.0;
                continue;
            };
            unit.states[s] = update_mixture(&unit.states[s], st, &inv.variance_floor);
            unit.occupancy[s] = st.occ;
            let n = st.stay + st.advance;
            if n > 0.0 {
                let p = (st.stay / n).clamp(TRANSITION_FLOOR, 1.0 - TRANSITION_FLOOR);
                unit.transitions[s] = [p, 1.0 - p];
            }
        }
    }
    out
}

/// Accumulate + M-step.
pub fn reestimate(inv: &UnitInventory, data: &[(&FeatureSequence, &Alignment)]) -> Result<UnitInventory, HmmError> {
    Ok(reestimate_from(inv, &accumulate(inv, data)?))
}

fn frames_ll(g: &GaussianMixture, frames: &[&[f64]]) -> f64 {
    let p = g.prepare();
    frames.iter().map(|x| p.log_density(x)).sum()
}

/// Doubles the components of each eligible state by perturbing means by
/// ±0.2σ, then runs one EM step on the state's aligned frames.
///
/// A state is eligible when it has fewer than `max_components` components and
/// at least [`FRAMES_PER_COMPONENT`] frames per resulting component. The split
/// is kept only when it does not lower the likelihood of those frames, so a
/// hard-EM iteration that includes mix-up stays monotone. Returns the number
/// of states split.
pub fn mix_up(
    inv: &UnitInventory,
    data: &[(&FeatureSequence, &Alignment)],
    max_components: usize,
) -> Result<(UnitInventory, usize), HmmError> {
    let mut frames: BTreeMap<(UnitLabel, usize), Vec<&[f64]>> = BTreeMap::new();
    for (f, a) in data {
        check_path(inv, a, f.num_frames())?;
        for e in &a.entries {
            let v = frames.entry((e.label, e.state)).or_default();
            v.extend((e.start_frame..e.end_frame).map(|t| f.frame(t)));
        }
    }
    let candidates: Vec<((UnitLabel, usize), GaussianMixture)> = frames
        .par_iter()
        .filter_map(|(key, xs)| {
            let g = &inv.units[&key.0].states[key.1];
            let live = g.weights.iter().filter(|w| **w > 0.0).count();
            let target = 2 * live;
            if target > max_components || (xs.len() as f64) < FRAMES_PER_COMPONENT * target as f64 {
                return None;
            }
            let split = split_components(g);
            let mut st = StateStats::new(split.num_components(), inv.feature_dim);
            let mut resp = Vec::new();
            for x in xs {
                responsibilities(&split, x, &mut resp);
                st.occ += 1.0;
                for (m, r) in resp.iter().enumerate() {
                    st.gamma[m] += r;
                    for d in 0..x.len() {
                        st.sum[m][d] += r * x[d];
                        st.sq[m][d] += r * x[d] * x[d];
                    }
                }
            }
            let trained = update_mixture(&split, &st, &inv.variance_floor);
            (frames_ll(&trained, xs) >= frames_ll(g, xs)).then(|| (*key, trained))
        })
        .collect();
    let mut out = inv.clone();
    let n = candidates.len();
    for ((label, s), g) in candidates {
        out.units.get_mut(&label).expect("label from inventory").states[s] = g;
    }
    Ok((out, n))
}

fn split_components(g: &GaussianMixture) -> GaussianMixture {
    let mut out = GaussianMixture { weights: Vec::new(), means: Vec::new(), variances: Vec::new() };
    for m in 0..g.num_components() {
        if g.weights[m] <= 0.0 {
            continue;
        }
        for sign in [-1.0, 1.0] {
            out.weights.push(g.weights[m] / 2.0);
            out.means.push(
                g.means[m]
                    .iter()
                    .zip(&g.variances[m])
                    .map(|(mu, v)| mu + sign * MIXUP_PERTURBATION * v.sqrt())
                    .collect(),
            );
            out.variances.push(g.variances[m].clone());
        }
    }
    out
}
