//! Sampled filters: bootstrap, blocked and enlarged blocked particle filters,
//! with optional cyclic partition schedules.
//!
//! Every random draw comes from a ChaCha stream derived from the master seed
//! and the `(step, role, index)` of the work item, so results do not depend on
//! how rayon schedules the work.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::JointPmf;
use crate::graph::{strides_of, EnlargedPartition, Partition};
use crate::model::{InitialDist, LocalModel, ObsRecord};

/// Particles per predict work item.
const PREDICT_CHUNK: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
enum Role {
    Init = 0,
    Predict = 1,
    Update = 2,
}

fn stream_rng(seed: u64, step: usize, role: Role, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((step as u64) << 32) | ((role as u64) << 30) | (index as u64 & 0x3fff_ffff));
    rng
}

/// SplitMix64 finalizer; used to derive independent seeds (e.g. replicates).
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master ^ index.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(0x632b_e59b_d9b4_e019);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// `N` field configurations stored row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ensemble {
    num_sites: usize,
    states: Vec<u16>,
    /// step of the last update (0 for the initial ensemble)
    pub step: usize,
    /// index into the schedule of the partition used at the last update
    pub partition_id: Option<usize>,
}

impl Ensemble {
    pub fn from_states(num_sites: usize, states: Vec<u16>) -> Result<Self> {
        if num_sites == 0 || states.is_empty() || states.len() % num_sites != 0 {
            return Err(Error::InvalidArgument(format!(
                "{} values do not form particles over {num_sites} sites",
                states.len()
            )));
        }
        Ok(Self {
            num_sites,
            states,
            step: 0,
            partition_id: None,
        })
    }

    pub fn len(&self) -> usize {
        self.states.len() / self.num_sites
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn num_sites(&self) -> usize {
        self.num_sites
    }

    pub fn particle(&self, i: usize) -> &[u16] {
        &self.states[i * self.num_sites..(i + 1) * self.num_sites]
    }

    pub fn particles(&self) -> impl Iterator<Item = &[u16]> {
        self.states.chunks(self.num_sites)
    }

    pub fn states(&self) -> &[u16] {
        &self.states
    }

    /// Text snapshot: a header line `N V step`, then one particle per line.
    pub fn to_text(&self) -> String {
        let mut out = format!("{} {} {}\n", self.len(), self.num_sites, self.step);
        for p in self.particles() {
            let row: Vec<String> = p.iter().map(u16::to_string).collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header: Vec<usize> = lines
            .next()
            .ok_or_else(|| Error::Parse("empty snapshot".into()))?
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| Error::Parse(format!("bad header token {t:?}"))))
            .collect::<Result<_>>()?;
        let [n, v, step] = header[..] else {
            return Err(Error::Parse("snapshot header needs `N V step`".into()));
        };
        let mut states = Vec::with_capacity(n * v);
        for line in lines.filter(|l| !l.trim().is_empty()) {
            let before = states.len();
            for t in line.split_whitespace() {
                states.push(t.parse().map_err(|_| Error::Parse(format!("bad state {t:?}")))?);
            }
            if states.len() - before != v {
                return Err(Error::Parse(format!("particle row with {} values, expected {v}", states.len() - before)));
            }
        }
        if states.len() != n * v {
            return Err(Error::Parse(format!("expected {n} particles")));
        }
        let mut e = Self::from_states(v, states)?;
        e.step = step;
        Ok(e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Bootstrap,
    Blocked,
    Enlarged,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Bootstrap => "bootstrap",
            Variant::Blocked => "blocked",
            Variant::Enlarged => "enlarged",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Resampling {
    #[default]
    Multinomial,
    Systematic,
}

#[derive(Debug, Clone)]
pub struct FilterSpec {
    pub variant: Variant,
    pub schedule: Vec<EnlargedPartition>,
    pub resampling: Resampling,
    pub seed: u64,
}

impl FilterSpec {
    pub fn bootstrap(model: &LocalModel, seed: u64) -> Self {
        let whole = EnlargedPartition::new(model.graph(), Partition::whole(model.num_sites()), 0)
            .expect("whole partition is valid");
        Self {
            variant: Variant::Bootstrap,
            schedule: vec![whole],
            resampling: Resampling::Multinomial,
            seed,
        }
    }

    /// Enlarged blocked filter; a schedule whose partitions all have `b = 0`
    /// is reported as the blocked variant.
    pub fn blocked(schedule: Vec<EnlargedPartition>, seed: u64) -> Result<Self> {
        let variant = if schedule.iter().all(|p| p.b() == 0) {
            Variant::Blocked
        } else {
            Variant::Enlarged
        };
        let spec = Self {
            variant,
            schedule,
            resampling: Resampling::Multinomial,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_resampling(mut self, resampling: Resampling) -> Self {
        self.resampling = resampling;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.schedule.is_empty() {
            return Err(Error::InvalidArgument("empty partition schedule".into()));
        }
        match self.variant {
            Variant::Bootstrap if self.schedule.iter().any(|p| p.len() != 1) => Err(
                Error::InvalidArgument("bootstrap filter uses the single-block partition".into()),
            ),
            Variant::Blocked if self.schedule.iter().any(|p| p.b() != 0) => Err(
                Error::InvalidArgument("blocked filter requires b = 0".into()),
            ),
            _ => Ok(()),
        }
    }

    /// Partition used at step `n` (`n >= 1`).
    pub fn partition_at(&self, step: usize) -> (usize, &EnlargedPartition) {
        let id = step % self.schedule.len();
        (id, &self.schedule[id])
    }

    /// `max_s max_{K ∈ 𝒦_s} |K|`: the block-size constant of a cycled
    /// schedule. Per-partition values come from `partition_stats`.
    pub fn schedule_k_inf(&self) -> usize {
        self.schedule
            .iter()
            .map(|p| p.base().max_block_size())
            .max()
            .unwrap_or(0)
    }

    /// Work proxy of one update: `N · Σ_K |K̄|`, maximized over the schedule.
    pub fn work_per_step(&self, n: usize) -> usize {
        n * self
            .schedule
            .iter()
            .map(EnlargedPartition::total_enlarged_size)
            .max()
            .unwrap_or(0)
    }
}

/// `n` indices drawn i.i.d. from unnormalized `weights`.
pub fn multinomial_indices<R: Rng + ?Sized>(weights: &[f64], n: usize, rng: &mut R) -> Vec<usize> {
    let cumulative = cumulative(weights);
    let total = *cumulative.last().expect("non-empty weights");
    (0..n)
        .map(|_| {
            let u = rng.gen::<f64>() * total;
            cumulative.partition_point(|&c| c <= u).min(weights.len() - 1)
        })
        .collect()
}

/// Systematic resampling: one uniform offset, `n` evenly spaced points.
pub fn systematic_indices<R: Rng + ?Sized>(weights: &[f64], n: usize, rng: &mut R) -> Vec<usize> {
    let cumulative = cumulative(weights);
    let total = *cumulative.last().expect("non-empty weights");
    let offset: f64 = rng.gen();
    let mut out = Vec::with_capacity(n);
    let mut k = 0;
    for j in 0..n {
        let u = (offset + j as f64) / n as f64 * total;
        while k + 1 < weights.len() && cumulative[k] <= u {
            k += 1;
        }
        out.push(k);
    }
    out
}

fn cumulative(weights: &[f64]) -> Vec<f64> {
    weights
        .iter()
        .scan(0.0, |acc, &w| {
            *acc += w;
            Some(*acc)
        })
        .collect()
}

/// Probabilities from log-weights (max subtracted before exponentiating).
/// `None` when every weight is zero or a weight is not finite.
pub fn normalized_weights(log_weights: &[f64]) -> Option<Vec<f64>> {
    let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return None;
    }
    let mut w: Vec<f64> = log_weights.iter().map(|&l| (l - max).exp()).collect();
    let total: f64 = w.iter().sum();
    if !(total > 0.0 && total.is_finite()) {
        return None;
    }
    w.iter_mut().for_each(|x| *x /= total);
    Some(w)
}

/// A particle filter of one [`FilterSpec`] over one model.
#[derive(Debug, Clone)]
pub struct ParticleFilter<'a> {
    model: &'a LocalModel,
    spec: FilterSpec,
}

impl<'a> ParticleFilter<'a> {
    pub fn new(model: &'a LocalModel, spec: FilterSpec) -> Result<Self> {
        spec.validate()?;
        if let Some(p) = spec
            .schedule
            .iter()
            .find(|p| p.base().num_vertices() != model.num_sites())
        {
            return Err(Error::LengthMismatch {
                expected: model.num_sites(),
                got: p.base().num_vertices(),
            });
        }
        Ok(Self { model, spec })
    }

    pub fn spec(&self) -> &FilterSpec {
        &self.spec
    }

    /// `N` i.i.d. draws from `init`.
    pub fn initial_ensemble(&self, init: &InitialDist, n: usize) -> Result<Ensemble> {
        if n == 0 {
            return Err(Error::InvalidArgument("need at least one particle".into()));
        }
        init.validate(self.model)?;
        let v = self.model.num_sites();
        let mut states = vec![0u16; n * v];
        states
            .par_chunks_mut(PREDICT_CHUNK * v)
            .enumerate()
            .for_each(|(chunk, slab)| {
                let mut rng = stream_rng(self.spec.seed, 0, Role::Init, chunk);
                for slot in slab.chunks_mut(v) {
                    slot.copy_from_slice(init.sample(self.model, &mut rng).as_slice());
                }
            });
        Ensemble::from_states(v, states)
    }

    /// Move every particle through the transition kernel (prediction for step
    /// `step`).
    pub fn predict_sample(&self, e: &Ensemble, step: usize) -> Ensemble {
        let v = e.num_sites;
        let mut states = vec![0u16; e.states.len()];
        states
            .par_chunks_mut(PREDICT_CHUNK * v)
            .zip(e.states.par_chunks(PREDICT_CHUNK * v))
            .enumerate()
            .for_each(|(chunk, (out, input))| {
                let mut rng = stream_rng(self.spec.seed, step, Role::Predict, chunk);
                for (dst, src) in out.chunks_mut(v).zip(input.chunks(v)) {
                    self.model.sample_transition_into(src, dst, &mut rng);
                }
            });
        Ensemble {
            num_sites: v,
            states,
            step: e.step,
            partition_id: e.partition_id,
        }
    }

    /// Block-local weighting and resampling with the partition scheduled for
    /// `step`.
    ///
    /// Each block weights the particles with the observations on its enlarged
    /// block, resamples `N` indices from its own stream, and contributes only
    /// the coordinates of its original block to the output. Slot `j` of the
    /// new ensemble concatenates the `j`-th draw of every block.
    pub fn update(&self, e: &Ensemble, y: &ObsRecord, step: usize) -> Result<Ensemble> {
        self.model.check_obs(y)?;
        let (id, partition) = self.spec.partition_at(step);
        let out = enlarged_blocked_update(
            self.model,
            partition,
            e,
            y,
            self.spec.resampling,
            self.spec.seed,
            step,
        )?;
        Ok(Ensemble {
            partition_id: Some(id),
            ..out
        })
    }

    /// Full recursion; `visit` sees the initial ensemble and the ensemble after
    /// every update, in order.
    pub fn run_with<F>(&self, init: &InitialDist, n: usize, obs: &[ObsRecord], mut visit: F) -> Result<()>
    where
        F: FnMut(&Ensemble) -> Result<()>,
    {
        let mut current = self.initial_ensemble(init, n)?;
        visit(&current)?;
        for (i, y) in obs.iter().enumerate() {
            let step = i + 1;
            let predicted = self.predict_sample(&current, step);
            current = self.update(&predicted, y, step)?;
            current.step = step;
            visit(&current)?;
        }
        Ok(())
    }

    pub fn run(&self, init: &InitialDist, n: usize, obs: &[ObsRecord]) -> Result<Vec<Ensemble>> {
        let mut out = Vec::with_capacity(obs.len() + 1);
        self.run_with(init, n, obs, |e| {
            out.push(e.clone());
            Ok(())
        })?;
        Ok(out)
    }
}

/// Bootstrap update: weight by the full likelihood and resample, drawing from
/// the same stream a single-block partition would use.
pub fn bootstrap_update(
    model: &LocalModel,
    e: &Ensemble,
    y: &ObsRecord,
    resampling: Resampling,
    seed: u64,
    step: usize,
) -> Result<Ensemble> {
    let whole = EnlargedPartition::new(model.graph(), Partition::whole(model.num_sites()), 0)?;
    enlarged_blocked_update(model, &whole, e, y, resampling, seed, step)
}

/// One enlarged blocked update; `b = 0` gives the blocked filter.
pub fn enlarged_blocked_update(
    model: &LocalModel,
    partition: &EnlargedPartition,
    e: &Ensemble,
    y: &ObsRecord,
    resampling: Resampling,
    seed: u64,
    step: usize,
) -> Result<Ensemble> {
    let n = e.len();
    let v = e.num_sites;
    let draws: Vec<Vec<usize>> = partition
        .enlarged_blocks()
        .par_iter()
        .enumerate()
        .map(|(k, enlarged)| {
            let log_w: Vec<f64> = e
                .particles()
                .map(|x| model.obs_logweight(x, y, enlarged))
                .collect();
            let w = normalized_weights(&log_w).ok_or(Error::WeightUnderflow { step, block: k })?;
            let mut rng = stream_rng(seed, step, Role::Update, k);
            Ok(match resampling {
                Resampling::Multinomial => multinomial_indices(&w, n, &mut rng),
                Resampling::Systematic => systematic_indices(&w, n, &mut rng),
            })
        })
        .collect::<Result<_>>()?;

    let mut states = vec![0u16; e.states.len()];
    for (block, picks) in partition.base().blocks().iter().zip(&draws) {
        for (j, &src) in picks.iter().enumerate() {
            let (dst, from) = (j * v, src * v);
            for &site in block {
                states[dst + site] = e.states[from + site];
            }
        }
    }
    Ok(Ensemble {
        num_sites: v,
        states,
        step: e.step,
        partition_id: e.partition_id,
    })
}

/// Frequency table of the particles restricted to `set`.
pub fn empirical_marginal(model: &LocalModel, e: &Ensemble, set: &[usize], cap: u128) -> Result<JointPmf> {
    let set = crate::graph::normalize_set(set.to_vec());
    let sizes: Vec<usize> = set.iter().map(|&v| model.state_sizes()[v]).collect();
    let states = sizes
        .iter()
        .try_fold(1u128, |acc, &s| acc.checked_mul(s as u128))
        .unwrap_or(u128::MAX);
    if states > cap {
        return Err(Error::CapExceeded { states, cap });
    }
    let strides = strides_of(&sizes);
    let mut counts = vec![0.0; states as usize];
    for x in e.particles() {
        let idx: usize = set.iter().zip(&strides).map(|(&v, &s)| x[v] as usize * s).sum();
        counts[idx] += 1.0;
    }
    let total = e.len() as f64;
    counts.iter_mut().for_each(|c| *c /= total);
    JointPmf::new(set, sizes, counts)
}

/// Single-site frequencies, the common case of [`empirical_marginal`].
pub fn site_frequencies(model: &LocalModel, e: &Ensemble, v: usize) -> Vec<f64> {
    let mut counts = vec![0.0; model.state_sizes()[v]];
    for x in e.particles() {
        counts[x[v] as usize] += 1.0;
    }
    let total = e.len() as f64;
    counts.iter_mut().for_each(|c| *c /= total);
    counts
}
