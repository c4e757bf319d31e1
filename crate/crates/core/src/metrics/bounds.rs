//! Explicit error-bound calculators for the enlarged blocked filter, the
//! structural envelopes of the blocked and adaptively blocked filters, and
//! the partition-balance statistics used by the latter.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{EnlargedPartition, SpatialGraph};

/// Every constant entering the bounds. Distances are hop counts; a missing
/// `border_distance` means the enlarged block has no boundary (distance
/// `+∞`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundParams {
    pub eps: f64,
    pub kappa: f64,
    pub r: usize,
    pub delta: usize,
    pub delta_k: usize,
    pub delta_kbar: usize,
    pub k_inf: usize,
    pub kbar_inf: usize,
    pub n_particles: usize,
    pub set_size: usize,
    pub border_distance: Option<usize>,
    pub b: usize,
}

/// Result of a bound whose theorem has a hypothesis on `eps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Bound {
    Value(f64),
    HypothesisNotSatisfied { eps: f64, eps0: f64 },
}

impl Bound {
    pub fn value(self) -> Option<f64> {
        match self {
            Bound::Value(v) => Some(v),
            Bound::HypothesisNotSatisfied { .. } => None,
        }
    }
}

/// Threshold of the bias bound: `(1 - 1/(18Δ²))^{1/(2Δ)}`.
pub fn bias_eps0(delta: usize) -> f64 {
    let d = delta as f64;
    (1.0 - 1.0 / (18.0 * d * d)).powf(1.0 / (2.0 * d))
}

/// Threshold of the variance bound: `(1 - 1/(6 Δ_K̄ Δ²))^{1/(2Δ)}`.
pub fn variance_eps0(delta: usize, delta_kbar: usize) -> f64 {
    let d = delta as f64;
    (1.0 - 1.0 / (6.0 * delta_kbar as f64 * d * d)).powf(1.0 / (2.0 * d))
}

fn mixing_gap(eps: f64, delta: usize) -> f64 {
    1.0 - eps.powi(2 * delta as i32)
}

/// `β = -(2r)^{-1} log(18 Δ² (1 - ε^{2Δ}))`; infinite when `r = 0`.
pub fn bias_beta(eps: f64, delta: usize, r: usize) -> f64 {
    let inner = 18.0 * (delta * delta) as f64 * mixing_gap(eps, delta);
    if r == 0 {
        return f64::INFINITY;
    }
    -inner.ln() / (2.0 * r as f64)
}

/// `β = -log(6 Δ_K̄ Δ² (1 - ε^{2Δ}))`.
pub fn variance_beta(eps: f64, delta: usize, delta_kbar: usize) -> f64 {
    -(6.0 * delta_kbar as f64 * (delta * delta) as f64 * mixing_gap(eps, delta)).ln()
}

fn check_eps(eps: f64) -> Result<()> {
    if eps > 0.0 && eps < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("eps must lie in (0, 1), got {eps}")))
    }
}

fn geometric_prefactor(beta: f64) -> f64 {
    let e = (-beta).exp();
    8.0 * e / (1.0 - e)
}

fn decay(beta: f64, distance: Option<usize>) -> f64 {
    match distance {
        None => 0.0,
        Some(d) if beta.is_infinite() && d == 0 => 1.0,
        Some(d) => (-beta * d as f64).exp(),
    }
}

/// Bias bound `8e^{-β}/(1-e^{-β}) (1-ε^{2Δ}) |I| e^{-β d(I, ∂K̄)}`.
pub fn bias_bound(p: &BoundParams) -> Result<Bound> {
    check_eps(p.eps)?;
    let eps0 = bias_eps0(p.delta);
    if p.eps <= eps0 {
        return Ok(Bound::HypothesisNotSatisfied { eps: p.eps, eps0 });
    }
    let beta = bias_beta(p.eps, p.delta, p.r);
    if beta.is_infinite() {
        return Ok(Bound::Value(0.0));
    }
    Ok(Bound::Value(
        geometric_prefactor(beta)
            * mixing_gap(p.eps, p.delta)
            * p.set_size as f64
            * decay(beta, p.border_distance),
    ))
}

/// Variance bound
/// `|I| 64 Δ_K/(1-e^{-β}) ε^{-4|K̄|∞} κ^{-4|K̄|∞ Δ_K} / √N`.
pub fn variance_bound(p: &BoundParams) -> Result<Bound> {
    check_eps(p.eps)?;
    if !(p.kappa > 0.0 && p.kappa <= 1.0) {
        return Err(Error::InvalidArgument(format!("kappa must lie in (0, 1], got {}", p.kappa)));
    }
    if p.n_particles == 0 {
        return Err(Error::InvalidArgument("variance bound needs N >= 1".into()));
    }
    let eps0 = variance_eps0(p.delta, p.delta_kbar);
    if p.eps <= eps0 {
        return Ok(Bound::HypothesisNotSatisfied { eps: p.eps, eps0 });
    }
    let beta = variance_beta(p.eps, p.delta, p.delta_kbar);
    let kbar = p.kbar_inf as f64;
    let exponent = -4.0 * kbar * p.eps.ln() - 4.0 * kbar * p.delta_k as f64 * p.kappa.ln();
    Ok(Bound::Value(
        p.set_size as f64 * 64.0 * p.delta_k as f64 / (1.0 - (-beta).exp()) * exponent.exp()
            / (p.n_particles as f64).sqrt(),
    ))
}

/// Site-uniform bias bound for singleton blocks enlarged by `b > r`:
/// `8e^{-β}/(1-e^{-β}) (1-ε^{2Δ}) e^{-β(b-r)}`.
pub fn corollary_bound(p: &BoundParams) -> Result<Bound> {
    check_eps(p.eps)?;
    if p.b <= p.r {
        return Err(Error::InvalidArgument(format!(
            "the homogeneous bound needs b > r (b = {}, r = {})",
            p.b, p.r
        )));
    }
    let eps0 = bias_eps0(p.delta);
    if p.eps <= eps0 {
        return Ok(Bound::HypothesisNotSatisfied { eps: p.eps, eps0 });
    }
    let beta = bias_beta(p.eps, p.delta, p.r);
    Ok(Bound::Value(
        geometric_prefactor(beta) * mixing_gap(p.eps, p.delta) * (-beta * (p.b - p.r) as f64).exp(),
    ))
}

/// Structural terms `α e^{-β₁ d(I,∂K)}` and `α e^{β₂|K|∞}/√N`. The constants
/// are free parameters for curve fitting, not theory values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Envelope {
    pub boundary_term: f64,
    pub sampling_term: f64,
}

impl Envelope {
    pub fn total(&self) -> f64 {
        self.boundary_term + self.sampling_term
    }
}

pub fn theorem1_envelope(
    alpha: f64,
    beta1: f64,
    beta2: f64,
    border_distance: Option<usize>,
    k_inf: usize,
    n_particles: usize,
) -> Envelope {
    Envelope {
        boundary_term: alpha * decay(beta1, border_distance),
        sampling_term: alpha * (beta2 * k_inf as f64).exp() / (n_particles as f64).sqrt(),
    }
}

/// How evenly a cyclic schedule spreads the block borders around one vertex.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BalanceStats {
    /// mean distance to the border of the block containing the vertex
    pub theta: f64,
    /// mean of `e^{-β · distance}`
    pub phi: f64,
    /// largest distance over the schedule
    pub delta_d: f64,
    /// smallest distance over the schedule
    pub nabla_d: f64,
    pub m: usize,
}

/// Border distances of `v` under each partition of the schedule. The border
/// is that of the enlarged block whose base contains `v` (the plain block
/// when `b = 0`); an empty border counts as infinitely far.
pub fn balance_stats(
    graph: &SpatialGraph,
    schedule: &[EnlargedPartition],
    v: usize,
    r: usize,
    beta: f64,
) -> Result<BalanceStats> {
    if schedule.is_empty() {
        return Err(Error::InvalidArgument("empty partition schedule".into()));
    }
    let distances = schedule
        .iter()
        .map(|p| {
            let k = p.base().block_of(v);
            p.border_distance(graph, &[v], k, r)
                .map(|d| d.map_or(f64::INFINITY, |d| d as f64))
        })
        .collect::<Result<Vec<f64>>>()?;
    let m = distances.len() as f64;
    Ok(BalanceStats {
        theta: distances.iter().sum::<f64>() / m,
        phi: distances.iter().map(|&d| (-beta * d).exp()).sum::<f64>() / m,
        delta_d: distances.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        nabla_d: distances.iter().copied().fold(f64::INFINITY, f64::min),
        m: schedule.len(),
    })
}

/// The two displayed forms of the cycle-averaged envelope:
/// form A `α(φ_m + |K|∞ e^{β|K|∞}/√N)` and form B
/// `α(exp(-β e^{-β(Δ_d-∇_d)} θ_m/m) + |K|∞ e^{β|K|∞}/√N)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CycleEnvelope {
    pub form_a: f64,
    pub form_b: f64,
}

pub fn theorem2_envelope(
    alpha: f64,
    beta: f64,
    stats: &BalanceStats,
    k_inf: usize,
    n_particles: usize,
) -> CycleEnvelope {
    let k = k_inf as f64;
    let sampling = k * (beta * k).exp() / (n_particles as f64).sqrt();
    let spread = stats.delta_d - stats.nabla_d;
    let shrink = if spread.is_nan() { 0.0 } else { (-beta * spread).exp() };
    let exponent = -beta * shrink * stats.theta / stats.m as f64;
    CycleEnvelope {
        form_a: alpha * (stats.phi + sampling),
        form_b: alpha * ((if exponent.is_nan() { 0.0 } else { exponent.exp() }) + sampling),
    }
}

/// Bound parameters for the set `set` under `partition`: `K` is the block
/// holding the first vertex of `set`.
pub fn params_for_set(
    graph: &SpatialGraph,
    partition: &EnlargedPartition,
    set: &[usize],
    r: usize,
    eps: f64,
    kappa: f64,
    n_particles: usize,
) -> Result<BoundParams> {
    let first = *set.first().ok_or(Error::EmptySet("params_for_set"))?;
    let k = partition.base().block_of(first);
    if set.iter().any(|&v| partition.base().block_of(v) != k) {
        return Err(Error::InvalidArgument("bound sets must lie inside one block".into()));
    }
    let stats = crate::graph::partition_stats(graph, partition, r)?;
    Ok(BoundParams {
        eps,
        kappa,
        r,
        delta: stats.delta,
        delta_k: stats.delta_k,
        delta_kbar: stats.delta_kbar,
        k_inf: stats.k_inf,
        kbar_inf: stats.kbar_inf,
        n_particles,
        set_size: set.len(),
        border_distance: partition.border_distance(graph, set, k, r)?,
        b: partition.b(),
    })
}
