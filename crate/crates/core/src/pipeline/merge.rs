use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{MergeStrategy, PipelineConfig, PipelineError};
use crate::hmm::{GaussianMixture, HmmError, HmmUnit, InventoryMeta, UnitInventory, UnitKind, UnitLabel};

/// Old label → merged label. Silence maps to itself.
pub type LabelMap = BTreeMap<UnitLabel, UnitLabel>;

const KMEANS_RESTARTS: usize = 8;
const KMEANS_MAX_ITER: usize = 100;

/// Concatenated state means, each scaled by the state's share of the unit's
/// occupancy (uniform shares when the unit has no recorded occupancy).
pub fn unit_embedding(u: &HmmUnit) -> Vec<f64> {
    let total: f64 = u.occupancy.iter().sum();
    let n = u.num_states() as f64;
    u.states
        .iter()
        .zip(&u.occupancy)
        .flat_map(|(g, occ)| {
            let share = if total > 0.0 { occ / total } else { 1.0 / n };
            g.mean().into_iter().map(move |m| share * m)
        })
        .collect()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(p: &[f64], centers: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, ctr) in centers.iter().enumerate() {
        let d = sq_dist(p, ctr);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn kmeans_pp_init<R: Rng + ?Sized>(points: &[Vec<f64>], k: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let mut centers = vec![points[rng.random_range(0..points.len())].clone()];
    while centers.len() < k {
        let d2: Vec<f64> = points.iter().map(|p| nearest(p, &centers).1).collect();
        let total: f64 = d2.iter().sum();
        let idx = if total > 0.0 {
            let mut r = rng.random_range(0.0..total);
            d2.iter()
                .position(|&d| {
                    r -= d;
                    r < 0.0
                })
                .unwrap_or(points.len() - 1)
        } else {
            rng.random_range(0..points.len())
        };
        centers.push(points[idx].clone());
    }
    centers
}

/// Lloyd's k-means with k-means++ seeding and `KMEANS_RESTARTS` restarts;
/// returns the assignment with the lowest inertia (first found on ties).
/// Empty clusters keep their previous centre, so fewer than `k` labels may be used.
pub fn kmeans<R: Rng + ?Sized>(points: &[Vec<f64>], k: usize, rng: &mut R) -> Vec<usize> {
    let n = points.len();
    if n == 0 {
        return Vec::new();
    }
    let k = k.clamp(1, n);
    let mut best: Option<(f64, Vec<usize>)> = None;
    for _ in 0..KMEANS_RESTARTS {
        let mut centers = kmeans_pp_init(points, k, rng);
        let mut assign: Vec<usize> = points.iter().map(|p| nearest(p, &centers).0).collect();
        for _ in 0..KMEANS_MAX_ITER {
            for (c, ctr) in centers.iter_mut().enumerate() {
                let members: Vec<&Vec<f64>> = points.iter().zip(&assign).filter(|(_, a)| **a == c).map(|(p, _)| p).collect();
                if members.is_empty() {
                    continue;
                }
                for (d, v) in ctr.iter_mut().enumerate() {
                    *v = members.iter().map(|p| p[d]).sum::<f64>() / members.len() as f64;
                }
            }
            let next: Vec<usize> = points.iter().map(|p| nearest(p, &centers).0).collect();
            if next == assign {
                break;
            }
            assign = next;
        }
        let inertia: f64 = points.iter().zip(&assign).map(|(p, &a)| sq_dist(p, &centers[a])).sum();
        if best.as_ref().is_none_or(|(b, _)| inertia < *b) {
            best = Some((inertia, assign));
        }
    }
    best.expect("at least one restart").1
}

/// Largest-remainder split of `target` across groups, at least one and at
/// most the group size each.
fn allocate(target: usize, sizes: &[usize]) -> Vec<usize> {
    let total: usize = sizes.iter().sum();
    let quota: Vec<f64> = sizes.iter().map(|&s| target as f64 * s as f64 / total as f64).collect();
    let mut alloc: Vec<usize> = quota.iter().zip(sizes).map(|(q, &s)| (q.floor() as usize).clamp(1, s)).collect();
    while alloc.iter().sum::<usize>() > target {
        let i = (0..alloc.len()).filter(|&i| alloc[i] > 1).max_by_key(|&i| alloc[i]).expect("target >= groups");
        alloc[i] -= 1;
    }
    while alloc.iter().sum::<usize>() < target {
        let pick = (0..alloc.len())
            .filter(|&i| alloc[i] < sizes[i])
            .max_by(|&a, &b| (quota[a] - alloc[a] as f64).total_cmp(&(quota[b] - alloc[b] as f64)).then(b.cmp(&a)));
        match pick {
            Some(i) => alloc[i] += 1,
            None => break,
        }
    }
    alloc
}

/// Occupancy-weighted moment matching of the members' state `s` into one Gaussian.
fn pooled_state(members: &[&HmmUnit], s: usize, floor: &[f64]) -> (GaussianMixture, f64) {
    let occ: Vec<f64> = members.iter().map(|u| u.occupancy[s]).collect();
    let total: f64 = occ.iter().sum();
    let weights: Vec<f64> = if total > 0.0 { occ.iter().map(|o| o / total).collect() } else { vec![1.0 / members.len() as f64; members.len()] };
    let dim = floor.len();
    let mut mean = vec![0.0; dim];
    let mut second = vec![0.0; dim];
    for (u, w) in members.iter().zip(&weights) {
        let g = &u.states[s];
        for m in 0..g.num_components() {
            for d in 0..dim {
                let (mu, var) = (g.means[m][d], g.variances[m][d]);
                mean[d] += w * g.weights[m] * mu;
                second[d] += w * g.weights[m] * (var + mu * mu);
            }
        }
    }
    let var = (0..dim).map(|d| (second[d] - mean[d] * mean[d]).max(floor[d])).collect();
    (GaussianMixture::single(mean, var), total)
}

/// Merges non-silence units with a seeded generator.
pub fn merge_units_with_rng<R: Rng + ?Sized>(
    inv: &UnitInventory,
    target: usize,
    strategy: MergeStrategy,
    rng: &mut R,
) -> Result<(UnitInventory, LabelMap), PipelineError> {
    if target < 1 {
        return Err(PipelineError::InvalidConfig("merge target must be at least 1".into()));
    }
    let units: Vec<&HmmUnit> = inv.units.values().filter(|u| !u.label.is_silence()).collect();
    let identity = || inv.units.keys().map(|l| (*l, *l)).collect::<LabelMap>();
    let groups: Vec<(UnitKind, Vec<&HmmUnit>)> = match strategy {
        MergeStrategy::Plain => vec![(UnitKind::Generic, units.clone())],
        MergeStrategy::Stratified => {
            let (tr, st): (Vec<&HmmUnit>, Vec<&HmmUnit>) = units.iter().partition(|u| u.label.kind.is_transient());
            vec![(UnitKind::Transient, tr), (UnitKind::Rhyme, st)]
        }
    };
    let groups: Vec<(UnitKind, Vec<&HmmUnit>)> = groups.into_iter().filter(|(_, g)| !g.is_empty()).collect();
    if target < groups.len() {
        return Err(PipelineError::TargetExceedsKinds { target, kinds: groups.len() });
    }
    if target >= units.len() {
        return Ok((inv.clone(), identity()));
    }
    let states = units[0].num_states();
    if units.iter().any(|u| u.num_states() != states) {
        return Err(HmmError::Invalid("merging requires equal state counts".into()).into());
    }
    let sizes: Vec<usize> = groups.iter().map(|(_, g)| g.len()).collect();
    let alloc = allocate(target, &sizes);

    let mut out = UnitInventory::new(inv.feature_dim, inv.variance_floor.clone());
    out.meta = InventoryMeta { stage: "merged".into(), seed: inv.meta.seed, ..Default::default() };
    let mut map = LabelMap::new();
    let mut next_index = 0;
    for ((kind, members), k) in groups.iter().zip(alloc) {
        let points: Vec<Vec<f64>> = members.iter().map(|u| unit_embedding(u)).collect();
        let assign = kmeans(&points, k, rng);
        // Renumber clusters by their smallest member label.
        let mut order: Vec<usize> = Vec::new();
        for &a in &assign {
            if !order.contains(&a) {
                order.push(a);
            }
        }
        for c in order {
            let group: Vec<&HmmUnit> = members.iter().zip(&assign).filter(|(_, a)| **a == c).map(|(u, _)| *u).collect();
            let label = UnitLabel::new(*kind, next_index);
            next_index += 1;
            let pooled: Vec<(GaussianMixture, f64)> = (0..states).map(|s| pooled_state(&group, s, &inv.variance_floor)).collect();
            out.insert(HmmUnit {
                label,
                occupancy: pooled.iter().map(|p| p.1).collect(),
                states: pooled.into_iter().map(|p| p.0).collect(),
                transitions: vec![[0.5, 0.5]; states],
            });
            for u in group {
                map.insert(u.label, label);
            }
        }
    }
    if let Some(sil) = inv.units.get(&UnitLabel::SILENCE) {
        out.insert(sil.clone());
        map.insert(UnitLabel::SILENCE, UnitLabel::SILENCE);
    }
    Ok((out, map))
}

/// Kind-stratified (or plain) k-means merge seeded from `cfg.seed`.
pub fn merge_units(inv: &UnitInventory, target: usize, cfg: &PipelineConfig) -> Result<(UnitInventory, LabelMap), PipelineError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    merge_units_with_rng(inv, target, cfg.merge_strategy, &mut rng)
}
