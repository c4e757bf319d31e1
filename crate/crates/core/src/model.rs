//! Local transition and observation kernels of a dynamic random field on
//! finite site alphabets, and simulation of ground-truth trajectories.
//!
//! Site `v` evolves by `p^v(x^{N(v)}, z^v)` where `N(v)` is the radius-`r`
//! neighborhood; the table for `v` is indexed by the configuration of `N(v)`
//! alone, which makes the locality condition hold by construction. The
//! observation at `v` depends only on the state at `v` through `g^v`.

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::graph::{strides_of, GraphDoc, SpatialGraph};

pub const ROW_TOLERANCE: f64 = 1e-12;

/// One state value per vertex.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FieldConfig(pub Vec<u16>);

impl FieldConfig {
    pub fn as_slice(&self) -> &[u16] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Observation of the whole field at time `time` (times start at 1).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObsRecord {
    pub time: usize,
    pub values: Vec<u16>,
}

/// Mixing bounds of a model: every transition entry lies in `[eps, 1/eps]`
/// and every observation entry in `[kappa, 1/kappa]`, with both maximal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mixing {
    pub eps: f64,
    pub kappa: f64,
}

#[derive(Debug, Clone)]
struct SiteKernel {
    /// sorted `N(v)`
    neighborhood: Vec<usize>,
    /// mixed-radix strides over `neighborhood` (first entry fastest)
    strides: Vec<usize>,
    /// rows of length `state_size`, one per configuration of `N(v)`
    trans: Vec<f64>,
    log_trans: Vec<f64>,
    /// `state_size x obs_size`
    obs: Vec<f64>,
    log_obs: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct LocalModel {
    graph: SpatialGraph,
    r: usize,
    state_sizes: Vec<usize>,
    obs_sizes: Vec<usize>,
    sites: Vec<SiteKernel>,
}

impl LocalModel {
    /// Build a model from explicit tables.
    ///
    /// `trans[v]` holds one row of length `state_sizes[v]` for every
    /// configuration of `N(v)`, configurations enumerated with the lowest
    /// vertex of `N(v)` varying fastest. `obs[v]` is `state_sizes[v]` rows of
    /// length `obs_sizes[v]`.
    pub fn from_tables(
        graph: SpatialGraph,
        r: usize,
        state_sizes: Vec<usize>,
        obs_sizes: Vec<usize>,
        trans: Vec<Vec<f64>>,
        obs: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let n = graph.num_vertices();
        for (what, len) in [
            ("state_sizes", state_sizes.len()),
            ("obs_sizes", obs_sizes.len()),
            ("trans", trans.len()),
            ("obs", obs.len()),
        ] {
            if len != n {
                return Err(Error::InvalidModel(format!(
                    "{what} has {len} entries for {n} sites"
                )));
            }
        }
        if let Some(v) = state_sizes
            .iter()
            .chain(&obs_sizes)
            .position(|&s| s == 0 || s > u16::MAX as usize)
        {
            return Err(Error::InvalidModel(format!("bad alphabet size at entry {v}")));
        }

        let mut sites = Vec::with_capacity(n);
        for (v, (trans_v, obs_v)) in trans.into_iter().zip(obs).enumerate() {
            let neighborhood = graph.neighborhood(v, r)?;
            let radices: Vec<usize> = neighborhood.iter().map(|&w| state_sizes[w]).collect();
            let rows: usize = radices.iter().product();
            let s = state_sizes[v];
            if trans_v.len() != rows * s {
                return Err(Error::InvalidModel(format!(
                    "transition table of site {v} has {} entries, expected {}",
                    trans_v.len(),
                    rows * s
                )));
            }
            check_rows(&trans_v, s, v, "transition")?;
            let y = obs_sizes[v];
            if obs_v.len() != s * y {
                return Err(Error::InvalidModel(format!(
                    "observation table of site {v} has {} entries, expected {}",
                    obs_v.len(),
                    s * y
                )));
            }
            check_rows(&obs_v, y, v, "observation")?;
            sites.push(SiteKernel {
                strides: strides_of(&radices),
                neighborhood,
                log_trans: trans_v.iter().map(|p| p.ln()).collect(),
                trans: trans_v,
                log_obs: obs_v.iter().map(|p| p.ln()).collect(),
                obs: obs_v,
            });
        }
        Ok(Self {
            graph,
            r,
            state_sizes,
            obs_sizes,
            sites,
        })
    }

    pub fn graph(&self) -> &SpatialGraph {
        &self.graph
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn num_sites(&self) -> usize {
        self.state_sizes.len()
    }

    pub fn state_sizes(&self) -> &[usize] {
        &self.state_sizes
    }

    pub fn obs_sizes(&self) -> &[usize] {
        &self.obs_sizes
    }

    pub fn neighborhood(&self, v: usize) -> &[usize] {
        &self.sites[v].neighborhood
    }

    /// Index of the `N(v)`-configuration of `x` in the site-`v` table.
    #[inline]
    pub fn row_index(&self, v: usize, x: &[u16]) -> usize {
        let site = &self.sites[v];
        site.neighborhood
            .iter()
            .zip(&site.strides)
            .map(|(&w, &stride)| x[w] as usize * stride)
            .sum()
    }

    /// `p^v(x, ·)` as a slice over the alphabet of `v`.
    #[inline]
    pub fn trans_row(&self, v: usize, x: &[u16]) -> &[f64] {
        let s = self.state_sizes[v];
        let row = self.row_index(v, x);
        &self.sites[v].trans[row * s..(row + 1) * s]
    }

    /// Row of the site-`v` table by its `N(v)`-configuration index.
    #[inline]
    pub fn trans_row_by_index(&self, v: usize, row: usize) -> &[f64] {
        let s = self.state_sizes[v];
        &self.sites[v].trans[row * s..(row + 1) * s]
    }

    #[inline]
    pub fn trans_prob(&self, v: usize, x: &[u16], z: u16) -> f64 {
        self.trans_row(v, x)[z as usize]
    }

    #[inline]
    pub fn log_trans_prob(&self, v: usize, x: &[u16], z: u16) -> f64 {
        let s = self.state_sizes[v];
        self.sites[v].log_trans[self.row_index(v, x) * s + z as usize]
    }

    #[inline]
    pub fn obs_prob(&self, v: usize, x: u16, y: u16) -> f64 {
        self.sites[v].obs[x as usize * self.obs_sizes[v] + y as usize]
    }

    #[inline]
    pub fn log_obs_prob(&self, v: usize, x: u16, y: u16) -> f64 {
        self.sites[v].log_obs[x as usize * self.obs_sizes[v] + y as usize]
    }

    /// Largest `eps` and `kappa` such that every kernel entry lies in
    /// `[eps, 1/eps]` (resp. `[kappa, 1/kappa]`). Any non-positive entry
    /// rejects the model.
    pub fn verify_mixing(&self) -> Result<Mixing> {
        let mut eps = f64::INFINITY;
        let mut kappa = f64::INFINITY;
        for (v, site) in self.sites.iter().enumerate() {
            eps = eps.min(mixing_of(&site.trans, v, "transition")?);
            kappa = kappa.min(mixing_of(&site.obs, v, "observation")?);
        }
        Ok(Mixing {
            eps: eps.min(1.0),
            kappa: kappa.min(1.0),
        })
    }

    /// Draw one successor configuration, each site independently.
    pub fn sample_transition<R: Rng + ?Sized>(&self, x: &[u16], rng: &mut R) -> FieldConfig {
        let mut out = vec![0; x.len()];
        self.sample_transition_into(x, &mut out, rng);
        FieldConfig(out)
    }

    pub fn sample_transition_into<R: Rng + ?Sized>(&self, x: &[u16], out: &mut [u16], rng: &mut R) {
        for (v, slot) in out.iter_mut().enumerate() {
            *slot = sample_categorical(self.trans_row(v, x), rng);
        }
    }

    pub fn sample_observation<R: Rng + ?Sized>(
        &self,
        x: &[u16],
        time: usize,
        rng: &mut R,
    ) -> ObsRecord {
        let values = x
            .iter()
            .enumerate()
            .map(|(v, &xv)| {
                let y = self.obs_sizes[v];
                let row = &self.sites[v].obs[xv as usize * y..(xv as usize + 1) * y];
                sample_categorical(row, rng)
            })
            .collect();
        ObsRecord { time, values }
    }

    /// `Σ_{v in sites} log g^v(x^v, y^v)`.
    #[inline]
    pub fn obs_logweight(&self, x: &[u16], y: &ObsRecord, sites: &[usize]) -> f64 {
        sites
            .iter()
            .map(|&v| self.log_obs_prob(v, x[v], y.values[v]))
            .sum()
    }

    /// Initial state drawn from `init`, followed by `steps` transitions with an
    /// observation after each one.
    pub fn simulate_trajectory<R: Rng + ?Sized>(
        &self,
        init: &InitialDist,
        steps: usize,
        rng: &mut R,
    ) -> Result<(Vec<FieldConfig>, Vec<ObsRecord>)> {
        init.validate(self)?;
        let mut states = Vec::with_capacity(steps + 1);
        let mut observations = Vec::with_capacity(steps);
        states.push(init.sample(self, rng));
        for t in 1..=steps {
            let next = self.sample_transition(states[t - 1].as_slice(), rng);
            observations.push(self.sample_observation(next.as_slice(), t, rng));
            states.push(next);
        }
        Ok((states, observations))
    }

    pub fn check_obs(&self, y: &ObsRecord) -> Result<()> {
        if y.values.len() != self.num_sites() {
            return Err(Error::LengthMismatch {
                expected: self.num_sites(),
                got: y.values.len(),
            });
        }
        match y
            .values
            .iter()
            .zip(&self.obs_sizes)
            .position(|(&yv, &size)| yv as usize >= size)
        {
            Some(v) => Err(Error::InvalidArgument(format!(
                "observation {} at site {v} outside alphabet",
                y.values[v]
            ))),
            None => Ok(()),
        }
    }
}

fn check_rows(table: &[f64], width: usize, site: usize, what: &str) -> Result<()> {
    for (i, row) in table.chunks(width).enumerate() {
        let sum: f64 = row.iter().sum();
        if !sum.is_finite() || (sum - 1.0).abs() > ROW_TOLERANCE || row.iter().any(|&p| p < 0.0) {
            return Err(Error::InvalidModel(format!(
                "{what} row {i} of site {site} is not a distribution (sum {sum})"
            )));
        }
    }
    Ok(())
}

fn mixing_of(table: &[f64], site: usize, which: &'static str) -> Result<f64> {
    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    for &p in table {
        if p <= 0.0 {
            return Err(Error::NonPositiveKernel {
                table: which,
                site,
                value: p,
            });
        }
        lo = lo.min(p);
        hi = hi.max(p);
    }
    Ok(lo.min(1.0 / hi))
}

/// Inverse-CDF draw from a probability vector.
#[inline]
pub fn sample_categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> u16 {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i as u16;
        }
    }
    // rounding: fall back to the last state with positive mass
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0) as u16
}

/// Build transition tables by mixing an arbitrary local rule with the uniform
/// distribution: `p = (1 - eps_mix) * rule + eps_mix * uniform`.
///
/// `rule(v, values)` receives the states of `N(v)` (in sorted vertex order)
/// and returns a distribution over the alphabet of `v`.
pub fn mixture_kernel<F>(
    graph: &SpatialGraph,
    r: usize,
    state_sizes: &[usize],
    eps_mix: f64,
    rule: F,
) -> Result<Vec<Vec<f64>>>
where
    F: Fn(usize, &[u16]) -> Vec<f64>,
{
    if !(eps_mix > 0.0 && eps_mix <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "eps_mix must lie in (0, 1], got {eps_mix}"
        )));
    }
    let mut tables = Vec::with_capacity(graph.num_vertices());
    for v in 0..graph.num_vertices() {
        let nbhd = graph.neighborhood(v, r)?;
        let radices: Vec<usize> = nbhd.iter().map(|&w| state_sizes[w]).collect();
        let rows: usize = radices.iter().product();
        let s = state_sizes[v];
        let uniform = 1.0 / s as f64;
        let mut table = Vec::with_capacity(rows * s);
        let mut values = vec![0u16; nbhd.len()];
        for _ in 0..rows {
            let base = rule(v, &values);
            if base.len() != s {
                return Err(Error::InvalidModel(format!(
                    "rule returned {} probabilities for site {v} with {s} states",
                    base.len()
                )));
            }
            let total: f64 = base.iter().sum();
            if !(total > 0.0) || base.iter().any(|&p| p < 0.0) {
                return Err(Error::InvalidModel(format!("rule for site {v} is not a distribution")));
            }
            table.extend(
                base.iter()
                    .map(|&p| (1.0 - eps_mix) * p / total + eps_mix * uniform),
            );
            // odometer over N(v), first entry fastest
            for (slot, &radix) in values.iter_mut().zip(&radices) {
                *slot += 1;
                if (*slot as usize) < radix {
                    break;
                }
                *slot = 0;
            }
        }
        tables.push(table);
    }
    Ok(tables)
}

/// Distribution of the initial state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InitialDist {
    /// Every site uniform and independent.
    Uniform,
    /// A single known configuration.
    Point { state: Vec<u16> },
    /// Independent sites with the given marginals.
    Product { marginals: Vec<Vec<f64>> },
}

impl InitialDist {
    pub fn validate(&self, model: &LocalModel) -> Result<()> {
        let n = model.num_sites();
        match self {
            InitialDist::Uniform => Ok(()),
            InitialDist::Point { state } => {
                if state.len() != n {
                    return Err(Error::LengthMismatch {
                        expected: n,
                        got: state.len(),
                    });
                }
                if state
                    .iter()
                    .zip(model.state_sizes())
                    .any(|(&x, &s)| x as usize >= s)
                {
                    return Err(Error::InvalidArgument("initial state outside alphabet".into()));
                }
                Ok(())
            }
            InitialDist::Product { marginals } => {
                if marginals.len() != n {
                    return Err(Error::LengthMismatch {
                        expected: n,
                        got: marginals.len(),
                    });
                }
                for (v, (m, &s)) in marginals.iter().zip(model.state_sizes()).enumerate() {
                    let sum: f64 = m.iter().sum();
                    if m.len() != s || (sum - 1.0).abs() > 1e-9 || m.iter().any(|&p| p < 0.0) {
                        return Err(Error::InvalidArgument(format!(
                            "initial marginal of site {v} is not a distribution"
                        )));
                    }
                }
                Ok(())
            }
        }
    }

    /// Site marginals of this (product) distribution.
    pub fn site_marginals(&self, model: &LocalModel) -> Vec<Vec<f64>> {
        match self {
            InitialDist::Uniform => model
                .state_sizes()
                .iter()
                .map(|&s| vec![1.0 / s as f64; s])
                .collect(),
            InitialDist::Point { state } => state
                .iter()
                .zip(model.state_sizes())
                .map(|(&x, &s)| {
                    let mut m = vec![0.0; s];
                    m[x as usize] = 1.0;
                    m
                })
                .collect(),
            InitialDist::Product { marginals } => marginals.clone(),
        }
    }

    /// Draw from the initial law; `Uniform` resolves against the model alphabets.
    pub fn sample<R: Rng + ?Sized>(&self, model: &LocalModel, rng: &mut R) -> FieldConfig {
        match self {
            InitialDist::Uniform => FieldConfig(
                model
                    .state_sizes()
                    .iter()
                    .map(|&s| rng.gen_range(0..s) as u16)
                    .collect(),
            ),
            InitialDist::Point { state } => FieldConfig(state.clone()),
            InitialDist::Product { marginals } => {
                FieldConfig(marginals.iter().map(|m| sample_categorical(m, rng)).collect())
            }
        }
    }
}

/// Graph description inside a model file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GraphSpec {
    Path { n: usize },
    Cycle { n: usize },
    Grid { dims: Vec<usize> },
    Explicit(GraphDoc),
}

impl GraphSpec {
    pub fn build(&self) -> Result<SpatialGraph> {
        match self {
            GraphSpec::Path { n } => SpatialGraph::path(*n),
            GraphSpec::Cycle { n } => SpatialGraph::cycle(*n),
            GraphSpec::Grid { dims } => SpatialGraph::grid(dims),
            GraphSpec::Explicit(doc) => doc.build(),
        }
    }
}

/// Model family with its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum FamilySpec {
    /// Binary field: each site moves to the majority value of `N(v)` (ties
    /// keep the current value), mixed with uniform at rate `eps_mix`;
    /// observed through a binary symmetric channel with flip probability
    /// `obs_flip`.
    NoisyVoter { eps_mix: f64, obs_flip: f64 },
    /// Scalar autoregression quantized to `levels` states: the next level is
    /// a discretized Gaussian centred at `coupling` times the neighborhood
    /// mean (about the middle level) with spread `noise_sd`, mixed with
    /// uniform at `eps_mix`; observed with a discretized Gaussian of spread
    /// `obs_sd`.
    QuantizedAr {
        levels: usize,
        coupling: f64,
        noise_sd: f64,
        obs_sd: f64,
        eps_mix: f64,
    },
    /// Explicit tables, laid out as for [`LocalModel::from_tables`].
    Explicit {
        state_sizes: Vec<usize>,
        obs_sizes: Vec<usize>,
        trans: Vec<Vec<f64>>,
        obs: Vec<Vec<f64>>,
    },
}

/// Model definition file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub r: usize,
    pub graph: GraphSpec,
    pub family: FamilySpec,
}

impl ModelSpec {
    pub fn build(&self) -> Result<LocalModel> {
        let graph = self.graph.build()?;
        match &self.family {
            FamilySpec::NoisyVoter { eps_mix, obs_flip } => {
                noisy_voter(graph, self.r, *eps_mix, *obs_flip)
            }
            FamilySpec::QuantizedAr {
                levels,
                coupling,
                noise_sd,
                obs_sd,
                eps_mix,
            } => quantized_ar(graph, self.r, *levels, *coupling, *noise_sd, *obs_sd, *eps_mix),
            FamilySpec::Explicit {
                state_sizes,
                obs_sizes,
                trans,
                obs,
            } => LocalModel::from_tables(
                graph,
                self.r,
                state_sizes.clone(),
                obs_sizes.clone(),
                trans.clone(),
                obs.clone(),
            ),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("model spec serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    /// Hex SHA-256 of the canonical TOML form.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

pub fn noisy_voter(graph: SpatialGraph, r: usize, eps_mix: f64, obs_flip: f64) -> Result<LocalModel> {
    if !(obs_flip > 0.0 && obs_flip < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "obs_flip must lie in (0, 1), got {obs_flip}"
        )));
    }
    let n = graph.num_vertices();
    let sizes = vec![2; n];
    let trans = mixture_kernel(&graph, r, &sizes, eps_mix, |v, values| {
        let own = {
            let nbhd = graph.neighborhood(v, r).expect("valid vertex");
            values[nbhd.iter().position(|&w| w == v).expect("v in N(v)")]
        };
        let ones = values.iter().filter(|&&x| x == 1).count();
        let zeros = values.len() - ones;
        let winner = match ones.cmp(&zeros) {
            std::cmp::Ordering::Greater => 1,
            std::cmp::Ordering::Less => 0,
            std::cmp::Ordering::Equal => own,
        };
        let mut p = vec![0.0; 2];
        p[winner as usize] = 1.0;
        p
    })?;
    let channel = vec![1.0 - obs_flip, obs_flip, obs_flip, 1.0 - obs_flip];
    LocalModel::from_tables(graph, r, sizes.clone(), sizes, trans, vec![channel; n])
}

fn discretized_gaussian(levels: usize, center: f64, sd: f64) -> Vec<f64> {
    let w: Vec<f64> = (0..levels)
        .map(|z| {
            let d = (z as f64 - center) / sd;
            (-0.5 * d * d).exp()
        })
        .collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|x| x / total).collect()
}

pub fn quantized_ar(
    graph: SpatialGraph,
    r: usize,
    levels: usize,
    coupling: f64,
    noise_sd: f64,
    obs_sd: f64,
    eps_mix: f64,
) -> Result<LocalModel> {
    if levels < 2 || !(noise_sd > 0.0) || !(obs_sd > 0.0) {
        return Err(Error::InvalidArgument(
            "quantized-ar needs levels >= 2 and positive spreads".into(),
        ));
    }
    let n = graph.num_vertices();
    let sizes = vec![levels; n];
    let mid = (levels - 1) as f64 / 2.0;
    let trans = mixture_kernel(&graph, r, &sizes, eps_mix, |_, values| {
        let mean = values.iter().map(|&x| x as f64).sum::<f64>() / values.len() as f64;
        discretized_gaussian(levels, mid + coupling * (mean - mid), noise_sd)
    })?;
    // a small uniform floor keeps every likelihood strictly positive
    let floor = 1e-6;
    let obs_row = |x: usize| -> Vec<f64> {
        discretized_gaussian(levels, x as f64, obs_sd)
            .into_iter()
            .map(|p| (1.0 - floor) * p + floor / levels as f64)
            .collect()
    };
    let obs_table: Vec<f64> = (0..levels).flat_map(obs_row).collect();
    LocalModel::from_tables(graph, r, sizes.clone(), sizes, trans, vec![obs_table; n])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn single_site(trans: Vec<f64>, obs: Vec<f64>) -> LocalModel {
        let g = SpatialGraph::new(1, &[]).unwrap();
        LocalModel::from_tables(g, 1, vec![2], vec![2], vec![trans], vec![obs]).unwrap()
    }

    #[test]
    fn mixing_bounds() {
        let m = single_site(vec![0.5; 4], vec![0.5; 4]);
        let mix = m.verify_mixing().unwrap();
        assert_eq!(mix.eps, 0.5);
        let m = single_site(vec![0.2, 0.8, 0.8, 0.2], vec![0.5; 4]);
        assert!((m.verify_mixing().unwrap().eps - 0.2).abs() < 1e-15);
        let m = single_site(vec![1.0, 0.0, 0.5, 0.5], vec![0.5; 4]);
        assert!(matches!(
            m.verify_mixing(),
            Err(Error::NonPositiveKernel { table: "transition", .. })
        ));
    }

    #[test]
    fn mixing_entries_lie_inside_bounds() {
        let g = SpatialGraph::cycle(5).unwrap();
        let m = quantized_ar(g, 1, 4, 0.7, 0.9, 0.8, 0.05).unwrap();
        let mix = m.verify_mixing().unwrap();
        let mut min_entry = f64::INFINITY;
        for site in &m.sites {
            for &p in &site.trans {
                assert!(p >= mix.eps && p <= 1.0 / mix.eps);
                min_entry = min_entry.min(p.min(1.0 / p));
            }
        }
        assert!((min_entry - mix.eps).abs() < 1e-12);
    }

    #[test]
    fn rows_must_be_stochastic() {
        let g = SpatialGraph::new(1, &[]).unwrap();
        let err = LocalModel::from_tables(g, 0, vec![2], vec![2], vec![vec![0.5, 0.6]], vec![vec![0.5; 4]]);
        assert!(matches!(err, Err(Error::InvalidModel(_))));
    }

    #[test]
    fn mixture_of_majority_rule() {
        let g = SpatialGraph::cycle(4).unwrap();
        let uniform = mixture_kernel(&g, 1, &[2; 4], 1.0, |_, _| vec![1.0, 0.0]).unwrap();
        assert!(uniform.iter().flatten().all(|&p| (p - 0.5).abs() < 1e-15));

        let m = noisy_voter(g, 1, 0.2, 0.1).unwrap();
        for site in &m.sites {
            for &p in &site.trans {
                assert!((p - 0.1).abs() < 1e-12 || (p - 0.9).abs() < 1e-12, "{p}");
            }
        }
        assert!(m.verify_mixing().unwrap().eps >= 0.2 / 2.0 - 1e-15);
        assert!(mixture_kernel(m.graph(), 1, &[2; 4], 0.0, |_, _| vec![1.0, 0.0]).is_err());
        assert!(mixture_kernel(m.graph(), 1, &[2; 4], 1.5, |_, _| vec![1.0, 0.0]).is_err());
    }

    #[test]
    fn locality_is_exact() {
        // perturbing a vertex outside N(v) never changes p^v(x, .)
        let g = SpatialGraph::path(5).unwrap();
        let m = quantized_ar(g, 1, 3, 0.8, 0.6, 0.7, 0.1).unwrap();
        let total = 3usize.pow(5);
        for code in 0..total {
            let x: Vec<u16> = (0..5).map(|i| ((code / 3usize.pow(i)) % 3) as u16).collect();
            for v in 0..5 {
                for w in (0..5).filter(|w| !m.neighborhood(v).contains(w)) {
                    for val in 0..3u16 {
                        let mut x2 = x.clone();
                        x2[w] = val;
                        assert_eq!(m.trans_row(v, &x), m.trans_row(v, &x2));
                    }
                }
            }
        }
    }

    #[test]
    fn obs_logweights() {
        let g = SpatialGraph::path(2).unwrap();
        let obs = vec![vec![0.9, 0.1, 0.2, 0.8], vec![0.8, 0.2, 0.2, 0.8]];
        let m = LocalModel::from_tables(g, 1, vec![2, 2], vec![2, 2], vec![vec![0.5; 8]; 2], obs).unwrap();
        let y = ObsRecord {
            time: 1,
            values: vec![0, 0],
        };
        assert_eq!(m.obs_logweight(&[0, 1], &y, &[]), 0.0);
        assert!((m.obs_logweight(&[0, 1], &y, &[0]) - 0.9f64.ln()).abs() < 1e-15);
        assert!((m.obs_logweight(&[0, 1], &y, &[0, 1]) - 0.18f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn near_deterministic_rule_is_followed() {
        // sites copy their majority with probability 1 - eps_mix/2
        let g = SpatialGraph::cycle(6).unwrap();
        let eps_mix = 0.1;
        let m = noisy_voter(g, 1, eps_mix, 0.2).unwrap();
        let x = [1u16, 1, 0, 0, 0, 1];
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let draws = 100_000;
        let mut agree = 0usize;
        for _ in 0..draws {
            let z = m.sample_transition(&x, &mut rng);
            agree += usize::from(z.0[1] == 1);
        }
        let p = 1.0 - eps_mix / 2.0;
        let sd = (p * (1.0 - p) / draws as f64).sqrt();
        assert!((agree as f64 / draws as f64 - p).abs() < 3.0 * sd);
    }

    #[test]
    fn trajectories() {
        let g = SpatialGraph::cycle(8).unwrap();
        let m = noisy_voter(g, 1, 0.2, 0.2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (s, o) = m.simulate_trajectory(&InitialDist::Point { state: vec![0; 8] }, 0, &mut rng).unwrap();
        assert_eq!((s.len(), o.len()), (1, 0));
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            m.simulate_trajectory(&InitialDist::Product { marginals: vec![vec![0.5, 0.5]; 8] }, 50, &mut rng)
                .unwrap()
        };
        let (a, oa) = run(9);
        let (b, ob) = run(9);
        assert_eq!((a.len(), oa.len()), (51, 50));
        assert_eq!(a, b);
        assert_eq!(oa, ob);
        assert_eq!(oa[0].time, 1);
    }

    #[test]
    fn model_spec_round_trip_and_hash() {
        let spec = ModelSpec {
            r: 1,
            graph: GraphSpec::Cycle { n: 8 },
            family: FamilySpec::NoisyVoter {
                eps_mix: 0.2,
                obs_flip: 0.25,
            },
        };
        let text = spec.to_toml();
        let back = ModelSpec::from_toml(&text).unwrap();
        assert_eq!(back, spec);
        assert_eq!(back.hash(), spec.hash());
        assert_eq!(spec.hash().len(), 64);
        assert_eq!(back.build().unwrap().num_sites(), 8);
    }
}
