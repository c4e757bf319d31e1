//! Distances between filters and calculators for the error bounds.
//!
//! All total-variation values use the `sup_{|f| <= 1} |μ(f) - ν(f)|`
//! convention, i.e. `Σ_x |μ(x) - ν(x)|` with range `[0, 2]`, so measured
//! errors and bound values share one scale.

pub mod bounds;
pub mod report;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use bounds::{
    balance_stats, bias_bound, bias_eps0, corollary_bound, theorem1_envelope, theorem2_envelope,
    variance_bound, variance_eps0, BalanceStats, Bound, BoundParams,
};
pub use report::{bias_variance_report, Report, ReportConfig, ReportRow};

/// Largest table handled by the sign-vector search (`2^20` sign vectors).
pub const SIGN_MAX_STATES: usize = 20;

/// `Σ_x |p(x) - q(x)|`.
pub fn tv_distance(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::LengthMismatch {
            expected: p.len(),
            got: q.len(),
        });
    }
    Ok(p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormMode {
    /// `sqrt(mean_r tv_r²)`: root mean square of per-replicate distances.
    /// An upper surrogate for the sign-max value.
    #[default]
    RmsTv,
    /// `sqrt(max_{f ∈ {±1}^X} mean_r (f·δ_r)²)` by exhaustive search.
    SignMax,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormEstimate {
    pub subset: Vec<usize>,
    pub mode: NormMode,
    pub replicates: usize,
    pub value: f64,
    /// jackknife standard error over replicates
    pub std_error: f64,
}

fn deviations(reference: &[f64], replicates: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    replicates
        .iter()
        .map(|m| {
            if m.len() != reference.len() {
                return Err(Error::LengthMismatch {
                    expected: reference.len(),
                    got: m.len(),
                });
            }
            Ok(m.iter().zip(reference).map(|(a, b)| a - b).collect())
        })
        .collect()
}

fn rms_tv(deltas: &[&Vec<f64>]) -> f64 {
    let mean_sq = deltas
        .iter()
        .map(|d| {
            let tv: f64 = d.iter().map(|x| x.abs()).sum();
            tv * tv
        })
        .sum::<f64>()
        / deltas.len() as f64;
    mean_sq.sqrt()
}

fn sign_max(deltas: &[&Vec<f64>]) -> f64 {
    let k = deltas[0].len();
    if k == 0 {
        return 0.0;
    }
    // second-moment matrix of the deviations
    let mut moment = vec![0.0; k * k];
    for d in deltas {
        for i in 0..k {
            for j in 0..k {
                moment[i * k + j] += d[i] * d[j];
            }
        }
    }
    let r = deltas.len() as f64;
    moment.iter_mut().for_each(|m| *m /= r);
    // f and -f give the same quadratic form: fix the sign of the last entry
    let mut best: f64 = 0.0;
    let mut f = vec![0.0; k];
    for mask in 0u64..(1u64 << (k - 1)) {
        for (i, fi) in f.iter_mut().enumerate() {
            *fi = if i + 1 < k && (mask >> i) & 1 == 1 { -1.0 } else { 1.0 };
        }
        let mut q = 0.0;
        for i in 0..k {
            let row = &moment[i * k..(i + 1) * k];
            q += f[i] * row.iter().zip(&f).map(|(m, fj)| m * fj).sum::<f64>();
        }
        best = best.max(q);
    }
    best.max(0.0).sqrt()
}

/// Estimate `sup_{|f|<=1} E[|μ(f) - ν(f)|²]^{1/2}` from replicate marginals
/// around a fixed reference.
pub fn norm_estimate(
    subset: &[usize],
    reference: &[f64],
    replicates: &[Vec<f64>],
    mode: NormMode,
) -> Result<NormEstimate> {
    if replicates.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "norm estimates need at least 2 replicates, got {}",
            replicates.len()
        )));
    }
    if mode == NormMode::SignMax && reference.len() > SIGN_MAX_STATES {
        return Err(Error::InvalidArgument(format!(
            "sign-max search over {} states exceeds the limit of {SIGN_MAX_STATES}; use rms-tv",
            reference.len()
        )));
    }
    let deltas = deviations(reference, replicates)?;
    let all: Vec<&Vec<f64>> = deltas.iter().collect();
    let estimator = |set: &[&Vec<f64>]| match mode {
        NormMode::RmsTv => rms_tv(set),
        NormMode::SignMax => sign_max(set),
    };
    let value = estimator(&all);

    let r = deltas.len();
    let leave_one_out: Vec<f64> = (0..r)
        .map(|skip| {
            let subset: Vec<&Vec<f64>> = all
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != skip)
                .map(|(_, d)| *d)
                .collect();
            estimator(&subset)
        })
        .collect();
    let mean = leave_one_out.iter().sum::<f64>() / r as f64;
    let var = leave_one_out.iter().map(|x| (x - mean).powi(2)).sum::<f64>() * (r as f64 - 1.0) / r as f64;

    Ok(NormEstimate {
        subset: subset.to_vec(),
        mode,
        replicates: r,
        value,
        std_error: var.sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tv_examples() {
        assert_eq!(tv_distance(&[0.3, 0.7], &[0.3, 0.7]).unwrap(), 0.0);
        assert_eq!(tv_distance(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 2.0);
        assert_eq!(tv_distance(&[1.0, 0.0], &[0.5, 0.5]).unwrap(), 1.0);
        assert!(tv_distance(&[1.0], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn norm_of_exact_replicates_is_zero() {
        let reference = vec![0.2, 0.8];
        let reps = vec![reference.clone(); 5];
        for mode in [NormMode::RmsTv, NormMode::SignMax] {
            let est = norm_estimate(&[0], &reference, &reps, mode).unwrap();
            assert_eq!(est.value, 0.0);
            assert_eq!(est.std_error, 0.0);
        }
    }

    #[test]
    fn alternating_point_masses() {
        let reference = vec![0.5, 0.5];
        let reps: Vec<Vec<f64>> = (0..6)
            .map(|i| if i % 2 == 0 { vec![1.0, 0.0] } else { vec![0.0, 1.0] })
            .collect();
        let est = norm_estimate(&[0], &reference, &reps, NormMode::SignMax).unwrap();
        assert!((est.value - 1.0).abs() < 1e-15);
        let rms = norm_estimate(&[0], &reference, &reps, NormMode::RmsTv).unwrap();
        assert!((rms.value - 1.0).abs() < 1e-15);
    }

    #[test]
    fn sign_max_dominates_every_fixed_test_function() {
        let reference = vec![0.1, 0.2, 0.3, 0.4];
        let reps = vec![
            vec![0.15, 0.15, 0.3, 0.4],
            vec![0.1, 0.3, 0.2, 0.4],
            vec![0.0, 0.2, 0.35, 0.45],
            vec![0.1, 0.25, 0.3, 0.35],
        ];
        let est = norm_estimate(&[0, 1], &reference, &reps, NormMode::SignMax).unwrap();
        let probes = [[1.0, -1.0, 0.5, 0.0], [0.3, 0.3, -1.0, 1.0], [1.0, 1.0, 1.0, -1.0]];
        for f in probes {
            let mean_sq: f64 = reps
                .iter()
                .map(|m| {
                    let d: f64 = m.iter().zip(&reference).zip(&f).map(|((a, b), w)| (a - b) * w).sum();
                    d * d
                })
                .sum::<f64>()
                / reps.len() as f64;
            assert!(est.value + 1e-15 >= mean_sq.sqrt());
        }
    }

    #[test]
    fn sign_max_limits() {
        let reference = vec![1.0 / 32.0; 32];
        let reps = vec![reference.clone(); 2];
        assert!(norm_estimate(&[0], &reference, &reps, NormMode::SignMax).is_err());
        assert!(norm_estimate(&[0], &reference, &reps[..1], NormMode::RmsTv).is_err());
    }
}
