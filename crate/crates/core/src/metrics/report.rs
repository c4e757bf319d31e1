//! Bias/variance decomposition of a particle filter's error against the
//! exact filter and the ideal (infinite-particle) filter of the same
//! partition schedule.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::exact::{BlockMarginals, ExactEngine, JointPmf};
use crate::metrics::bounds::{bias_bound, params_for_set, variance_bound, Bound};
use crate::metrics::{norm_estimate, tv_distance, NormEstimate, NormMode};
use crate::model::{InitialDist, LocalModel, ObsRecord};
use crate::particle::{derive_seed, empirical_marginal, FilterSpec, ParticleFilter};

#[derive(Debug, Clone)]
pub struct ReportConfig {
    pub replicates: usize,
    pub n_particles: usize,
    pub site_sets: Vec<Vec<usize>>,
    pub mode: NormMode,
    pub cap: u128,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub step: usize,
    pub site_set: Vec<usize>,
    /// exact filter vs ideal filter (deterministic)
    pub bias: f64,
    /// replicates vs ideal filter
    pub variance: NormEstimate,
    /// replicates vs exact filter
    pub total: NormEstimate,
    pub replicate_variance: Vec<f64>,
    pub replicate_total: Vec<f64>,
    pub partition_id: Option<usize>,
    pub bias_bound: Option<Bound>,
    pub variance_bound: Option<Bound>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub rows: Vec<ReportRow>,
}

impl Report {
    pub const CSV_HEADER: &'static str =
        "time,site_or_set,bias,variance,total,bias_bound,variance_bound,params_hash";

    pub fn to_csv(&self, params_hash: &str) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for row in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                row.step,
                format_set(&row.site_set),
                row.bias,
                row.variance.value,
                row.total.value,
                format_bound(row.bias_bound),
                format_bound(row.variance_bound),
                params_hash
            ));
        }
        out
    }
}

pub fn format_set(set: &[usize]) -> String {
    let items: Vec<String> = set.iter().map(usize::to_string).collect();
    format!("{{{}}}", items.join(" "))
}

pub fn format_bound(b: Option<Bound>) -> String {
    match b {
        Some(Bound::Value(v)) => v.to_string(),
        _ => String::new(),
    }
}

/// Exact filter and ideal filter of `spec`'s schedule on `obs`.
pub fn exact_oracles(
    model: &LocalModel,
    spec: &FilterSpec,
    init: &InitialDist,
    obs: &[ObsRecord],
    cap: u128,
) -> Result<(Vec<JointPmf>, Vec<BlockMarginals>)> {
    let engine = ExactEngine::with_cap(model, cap);
    let mu = JointPmf::from_initial(model, init, cap)?;
    let exact = engine.filter_run(&mu, obs)?;
    let ideal = engine.ideal_filter_run(&spec.schedule, &mu, obs)?;
    Ok((exact, ideal))
}

/// Run `cfg.replicates` independent filters (seeds derived from
/// `spec.seed`) and decompose their error on every site set and step.
pub fn bias_variance_report(
    model: &LocalModel,
    spec: &FilterSpec,
    init: &InitialDist,
    obs: &[ObsRecord],
    exact: &[JointPmf],
    ideal: &[BlockMarginals],
    cfg: &ReportConfig,
) -> Result<Report> {
    let steps = obs.len() + 1;
    if exact.len() != steps || ideal.len() != steps {
        return Err(Error::LengthMismatch {
            expected: steps,
            got: exact.len().min(ideal.len()),
        });
    }
    if cfg.replicates < 2 {
        return Err(Error::InvalidArgument("the report needs at least 2 replicates".into()));
    }

    // [replicate][step][set] -> marginal table
    let marginals: Vec<Vec<Vec<Vec<f64>>>> = (0..cfg.replicates)
        .into_par_iter()
        .map(|rep| {
            let mut rep_spec = spec.clone();
            rep_spec.seed = derive_seed(spec.seed, rep as u64);
            let filter = ParticleFilter::new(model, rep_spec)?;
            let mut per_step = Vec::with_capacity(steps);
            filter.run_with(init, cfg.n_particles, obs, |e| {
                let tables = cfg
                    .site_sets
                    .iter()
                    .map(|set| empirical_marginal(model, e, set, cfg.cap).map(|m| m.probs().to_vec()))
                    .collect::<Result<Vec<_>>>()?;
                per_step.push(tables);
                Ok(())
            })?;
            Ok(per_step)
        })
        .collect::<Result<_>>()?;

    let mixing = model.verify_mixing().ok();
    let mut rows = Vec::with_capacity(steps * cfg.site_sets.len());
    for step in 0..steps {
        let partition = (step > 0).then(|| spec.partition_at(step));
        for (s, set) in cfg.site_sets.iter().enumerate() {
            let exact_m = exact[step].marginal_on(set)?;
            let ideal_m = ideal[step].marginal_on(set)?;
            let reps: Vec<Vec<f64>> = marginals.iter().map(|r| r[step][s].clone()).collect();
            let replicate_total = reps
                .iter()
                .map(|m| tv_distance(m, exact_m.probs()))
                .collect::<Result<Vec<_>>>()?;
            let replicate_variance = reps
                .iter()
                .map(|m| tv_distance(m, ideal_m.probs()))
                .collect::<Result<Vec<_>>>()?;
            let (bias_b, var_b) = match (partition, mixing) {
                (Some((_, p)), Some(mix)) => {
                    match params_for_set(model.graph(), p, set, model.r(), mix.eps, mix.kappa, cfg.n_particles) {
                        Ok(params) => (bias_bound(&params).ok(), variance_bound(&params).ok()),
                        Err(_) => (None, None),
                    }
                }
                _ => (None, None),
            };
            rows.push(ReportRow {
                step,
                site_set: set.clone(),
                bias: tv_distance(exact_m.probs(), ideal_m.probs())?,
                variance: norm_estimate(set, ideal_m.probs(), &reps, cfg.mode)?,
                total: norm_estimate(set, exact_m.probs(), &reps, cfg.mode)?,
                replicate_variance,
                replicate_total,
                partition_id: partition.map(|(id, _)| id),
                bias_bound: bias_b,
                variance_bound: var_b,
            });
        }
    }
    Ok(Report { rows })
}
