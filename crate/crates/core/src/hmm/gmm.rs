use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::HmmError;

const LN_2PI: f64 = 1.837_877_066_409_345_5; // ln(2π)

/// Diagonal-covariance Gaussian mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianMixture {
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub variances: Vec<Vec<f64>>,
}

impl GaussianMixture {
    pub fn single(mean: Vec<f64>, variance: Vec<f64>) -> Self {
        Self { weights: vec![1.0], means: vec![mean], variances: vec![variance] }
    }

    pub fn dim(&self) -> usize {
        self.means.first().map_or(0, Vec::len)
    }

    pub fn num_components(&self) -> usize {
        self.weights.len()
    }

    /// Weighted average of the component means.
    pub fn mean(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        for (w, m) in self.weights.iter().zip(&self.means) {
            for (o, v) in out.iter_mut().zip(m) {
                *o += w * v;
            }
        }
        out
    }

    /// Precomputes per-component constants for repeated evaluation.
    pub fn prepare(&self) -> PreparedMixture {
        let comps = self
            .weights
            .iter()
            .zip(self.means.iter().zip(&self.variances))
            .filter(|(w, _)| **w > 0.0)
            .map(|(w, (m, v))| {
                let log_det: f64 = v.iter().map(|s| s.ln()).sum();
                PreparedComponent {
                    log_const: w.ln() - 0.5 * (m.len() as f64 * LN_2PI + log_det),
                    mean: m.clone(),
                    inv_var: v.iter().map(|s| 1.0 / s).collect(),
                }
            })
            .collect();
        PreparedMixture { comps }
    }
}

#[derive(Debug, Clone)]
struct PreparedComponent {
    log_const: f64,
    mean: Vec<f64>,
    inv_var: Vec<f64>,
}

impl PreparedComponent {
    fn log_density(&self, x: &[f64]) -> f64 {
        let mut q = 0.0;
        for ((xv, m), iv) in x.iter().zip(&self.mean).zip(&self.inv_var) {
            let d = xv - m;
            q += d * d * iv;
        }
        self.log_const - 0.5 * q
    }
}

/// Mixture ready for fast scoring. Components with zero weight are dropped.
#[derive(Debug, Clone)]
pub struct PreparedMixture {
    comps: Vec<PreparedComponent>,
}

impl PreparedMixture {
    pub fn log_density(&self, x: &[f64]) -> f64 {
        match self.comps.len() {
            0 => f64::NEG_INFINITY,
            1 => self.comps[0].log_density(x),
            _ => {
                let mut buf = [0.0f64; 16];
                if self.comps.len() <= buf.len() {
                    for (b, c) in buf.iter_mut().zip(&self.comps) {
                        *b = c.log_density(x);
                    }
                    log_sum_exp(&buf[..self.comps.len()])
                } else {
                    let v: Vec<f64> = self.comps.iter().map(|c| c.log_density(x)).collect();
                    log_sum_exp(&v)
                }
            }
        }
    }
}

pub fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// `log Σ_m w_m N(frame; µ_m, diag σ²_m)`, evaluated with log-sum-exp.
pub fn log_emission(g: &GaussianMixture, frame: &[f64]) -> Result<f64, HmmError> {
    if frame.len() != g.dim() {
        return Err(HmmError::DimensionMismatch { expected: g.dim(), actual: frame.len() });
    }
    let logs: Vec<f64> = (0..g.num_components())
        .filter(|&m| g.weights[m] > 0.0)
        .map(|m| {
            let mut acc = g.weights[m].ln();
            for ((x, mu), var) in frame.iter().zip(&g.means[m]).zip(&g.variances[m]) {
                acc -= 0.5 * ((2.0 * PI * var).ln() + (x - mu) * (x - mu) / var);
            }
            acc
        })
        .collect();
    Ok(log_sum_exp(&logs))
}

/// Posterior responsibilities of each component for `x`, written into `out`.
/// Returns the frame log-likelihood.
pub(crate) fn responsibilities(g: &GaussianMixture, x: &[f64], out: &mut Vec<f64>) -> f64 {
    out.clear();
    for m in 0..g.num_components() {
        if g.weights[m] <= 0.0 {
            out.push(f64::NEG_INFINITY);
            continue;
        }
        let mut acc = g.weights[m].ln();
        for ((xv, mu), var) in x.iter().zip(&g.means[m]).zip(&g.variances[m]) {
            acc -= 0.5 * (LN_2PI + var.ln() + (xv - mu) * (xv - mu) / var);
        }
        out.push(acc);
    }
    let total = log_sum_exp(out);
    for v in out.iter_mut() {
        *v = if *v == f64::NEG_INFINITY { 0.0 } else { (*v - total).exp() };
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_normal_at_mean() {
        let g = GaussianMixture::single(vec![0.0], vec![1.0]);
        let v = log_emission(&g, &[0.0]).unwrap();
        assert!((v - (-0.5 * (2.0 * PI).ln())).abs() < 1e-12);
        assert!((v + 0.918_938_533_204_672_7).abs() < 1e-12);
        assert!((g.prepare().log_density(&[0.0]) - v).abs() < 1e-12);
    }

    #[test]
    fn identical_components_collapse() {
        let one = GaussianMixture::single(vec![1.0, -2.0], vec![0.5, 2.0]);
        let two = GaussianMixture {
            weights: vec![0.5, 0.5],
            means: vec![vec![1.0, -2.0]; 2],
            variances: vec![vec![0.5, 2.0]; 2],
        };
        for x in [[0.0, 0.0], [1.0, -2.0], [10.0, 3.0]] {
            let a = log_emission(&one, &x).unwrap();
            let b = log_emission(&two, &x).unwrap();
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn far_frames_stay_finite() {
        let g = GaussianMixture {
            weights: vec![0.3, 0.7],
            means: vec![vec![0.0; 3], vec![1.0; 3]],
            variances: vec![vec![1e-3; 3]; 2],
        };
        let v = log_emission(&g, &[1e4, -1e4, 1e4]).unwrap();
        assert!(v.is_finite() && v < -1e9);
        assert!(g.prepare().log_density(&[1e4, -1e4, 1e4]).is_finite());
    }

    #[test]
    fn dimension_mismatch() {
        let g = GaussianMixture::single(vec![0.0, 0.0], vec![1.0, 1.0]);
        assert!(matches!(log_emission(&g, &[0.0]), Err(HmmError::DimensionMismatch { .. })));
    }

    #[test]
    fn responsibilities_sum_to_one() {
        let g = GaussianMixture {
            weights: vec![0.2, 0.8],
            means: vec![vec![0.0], vec![3.0]],
            variances: vec![vec![1.0], vec![1.0]],
        };
        let mut r = Vec::new();
        let ll = responsibilities(&g, &[1.0], &mut r);
        assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((ll - log_emission(&g, &[1.0]).unwrap()).abs() < 1e-12);
    }
}
