//! Exact filtering on small finite fields: the optimal filter and the ideal
//! (infinite-particle) blocked and enlarged-blocked filters.
//!
//! Tables are dense. A pmf over the vertex set `I = {i_0 < i_1 < ...}` stores
//! configuration `x` at flat index `Σ_j x^{i_j} · Π_{l<j} S_{i_l}`, i.e. the
//! lowest vertex id varies fastest.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::{normalize_set, strides_of, EnlargedPartition, Partition};
use crate::model::{InitialDist, LocalModel, ObsRecord};

/// Default limit on the number of joint configurations a table may hold.
pub const DEFAULT_STATE_CAP: u128 = 1 << 24;

pub const NORMALIZATION_TOLERANCE: f64 = 1e-12;

/// Probability table over the product space of a vertex set.
#[derive(Debug, Clone, PartialEq)]
pub struct JointPmf {
    vertices: Vec<usize>,
    sizes: Vec<usize>,
    probs: Vec<f64>,
}

impl JointPmf {
    /// `vertices` must be sorted; `sizes` are the matching alphabet sizes.
    pub fn new(vertices: Vec<usize>, sizes: Vec<usize>, probs: Vec<f64>) -> Result<Self> {
        if vertices.len() != sizes.len() {
            return Err(Error::LengthMismatch {
                expected: vertices.len(),
                got: sizes.len(),
            });
        }
        if vertices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument("pmf vertices must be strictly increasing".into()));
        }
        let len: usize = sizes.iter().product();
        if probs.len() != len {
            return Err(Error::LengthMismatch {
                expected: len,
                got: probs.len(),
            });
        }
        if probs.iter().any(|&p| !(p >= 0.0)) {
            return Err(Error::InvalidArgument("pmf has a negative or NaN entry".into()));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!("pmf sums to {total}")));
        }
        Ok(Self {
            vertices,
            sizes,
            probs,
        })
    }

    fn from_parts(vertices: Vec<usize>, sizes: Vec<usize>, probs: Vec<f64>) -> Self {
        Self {
            vertices,
            sizes,
            probs,
        }
    }

    /// Point mass on the empty configuration.
    pub fn trivial() -> Self {
        Self::from_parts(Vec::new(), Vec::new(), vec![1.0])
    }

    /// The initial law as a table over every site of `model`.
    pub fn from_initial(model: &LocalModel, init: &InitialDist, cap: u128) -> Result<Self> {
        init.validate(model)?;
        check_cap(model.state_sizes(), cap)?;
        let marginals = init.site_marginals(model);
        let factors: Vec<JointPmf> = marginals
            .into_iter()
            .enumerate()
            .map(|(v, m)| Self::from_parts(vec![v], vec![m.len()], m))
            .collect();
        Ok(product_of(&factors, model.num_sites()))
    }

    pub fn vertices(&self) -> &[usize] {
        &self.vertices
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }

    /// Configuration at a flat index, one value per vertex of the table.
    pub fn config_at(&self, mut index: usize) -> Vec<u16> {
        self.sizes
            .iter()
            .map(|&s| {
                let x = index % s;
                index /= s;
                x as u16
            })
            .collect()
    }

    /// Flat index of a configuration given over this table's vertices.
    pub fn index_of(&self, config: &[u16]) -> usize {
        config
            .iter()
            .zip(strides_of(&self.sizes))
            .map(|(&x, stride)| x as usize * stride)
            .sum()
    }

    /// Marginal onto `subset`, which must be contained in this table's vertices.
    pub fn marginal_on(&self, subset: &[usize]) -> Result<JointPmf> {
        let subset = normalize_set(subset.to_vec());
        let mut positions = Vec::with_capacity(subset.len());
        for &v in &subset {
            match self.vertices.binary_search(&v) {
                Ok(p) => positions.push(p),
                Err(_) => {
                    return Err(Error::InvalidArgument(format!(
                        "vertex {v} is not in the support of the pmf"
                    )))
                }
            }
        }
        let sub_sizes: Vec<usize> = positions.iter().map(|&p| self.sizes[p]).collect();
        let sub_strides = strides_of(&sub_sizes);
        let strides = strides_of(&self.sizes);
        // target stride of each source coordinate (0 when summed out)
        let mut map = vec![0usize; self.sizes.len()];
        for (j, &p) in positions.iter().enumerate() {
            map[p] = sub_strides[j];
        }
        let mut out = vec![0.0; sub_sizes.iter().product()];
        for (i, &p) in self.probs.iter().enumerate() {
            let mut target = 0;
            for ((&stride, &size), &m) in strides.iter().zip(&self.sizes).zip(&map) {
                if m != 0 {
                    target += ((i / stride) % size) * m;
                }
            }
            out[target] += p;
        }
        Ok(JointPmf::from_parts(subset, sub_sizes, out))
    }

    pub fn site_marginal(&self, v: usize) -> Result<Vec<f64>> {
        self.marginal_on(&[v]).map(|m| m.probs)
    }

    fn normalize(&mut self) -> Result<f64> {
        let total: f64 = self.probs.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::ZeroNormalizer);
        }
        self.probs.iter_mut().for_each(|p| *p /= total);
        Ok(total)
    }

    /// Multiply by `Π_{v in sites} g^v(x^v, y^v)` and renormalize.
    fn reweight(&mut self, model: &LocalModel, y: &ObsRecord, sites: &[usize]) -> Result<()> {
        let strides = strides_of(&self.sizes);
        for &v in sites {
            let p = self
                .vertices
                .binary_search(&v)
                .map_err(|_| Error::InvalidArgument(format!("site {v} not in table")))?;
            let (stride, size) = (strides[p], self.sizes[p]);
            let lik: Vec<f64> = (0..size)
                .map(|x| model.obs_prob(v, x as u16, y.values[v]))
                .collect();
            for (i, q) in self.probs.iter_mut().enumerate() {
                *q *= lik[(i / stride) % size];
            }
        }
        self.normalize().map(|_| ())
    }
}

/// Per-block tables whose product is the represented measure.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockMarginals {
    blocks: Vec<JointPmf>,
}

impl BlockMarginals {
    /// Blocks must have disjoint vertex sets.
    pub fn new(blocks: Vec<JointPmf>) -> Result<Self> {
        let mut seen: Vec<usize> = blocks.iter().flat_map(|b| b.vertices.clone()).collect();
        let n = seen.len();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != n {
            return Err(Error::InvalidArgument("block tables overlap".into()));
        }
        Ok(Self { blocks })
    }

    /// `B ρ`: the marginals of `joint` on each block of `partition`.
    pub fn from_joint(joint: &JointPmf, partition: &Partition) -> Result<Self> {
        let blocks = partition
            .blocks()
            .iter()
            .map(|k| joint.marginal_on(k))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { blocks })
    }

    pub fn blocks(&self) -> &[JointPmf] {
        &self.blocks
    }

    pub fn num_vertices(&self) -> usize {
        self.blocks.iter().map(|b| b.vertices.len()).sum()
    }

    /// The product measure as one table over every vertex.
    pub fn product(&self, cap: u128) -> Result<JointPmf> {
        let mut sizes = vec![0usize; self.num_vertices()];
        for b in &self.blocks {
            for (&v, &s) in b.vertices.iter().zip(&b.sizes) {
                if v >= sizes.len() {
                    return Err(Error::InvalidArgument("blocks do not cover 0..n".into()));
                }
                sizes[v] = s;
            }
        }
        check_cap(&sizes, cap)?;
        Ok(product_of(&self.blocks, sizes.len()))
    }

    /// Marginal of vertex `v` from the block holding it.
    pub fn site_marginal(&self, v: usize) -> Result<Vec<f64>> {
        let block = self
            .blocks
            .iter()
            .find(|b| b.vertices.binary_search(&v).is_ok())
            .ok_or_else(|| Error::InvalidArgument(format!("vertex {v} not covered")))?;
        block.site_marginal(v)
    }

    /// Marginal on an arbitrary set; sets spanning several blocks are
    /// assembled from the product of the relevant block marginals.
    pub fn marginal_on(&self, set: &[usize]) -> Result<JointPmf> {
        let set = normalize_set(set.to_vec());
        let mut parts = Vec::new();
        for b in &self.blocks {
            let inside: Vec<usize> = set
                .iter()
                .copied()
                .filter(|v| b.vertices.binary_search(v).is_ok())
                .collect();
            if !inside.is_empty() {
                parts.push(b.marginal_on(&inside)?);
            }
        }
        if parts.iter().map(|p| p.vertices.len()).sum::<usize>() != set.len() {
            return Err(Error::InvalidArgument("set not covered by blocks".into()));
        }
        Ok(product_of_subset(&parts, &set))
    }
}

fn check_cap(sizes: &[usize], cap: u128) -> Result<()> {
    let states = sizes
        .iter()
        .try_fold(1u128, |acc, &s| acc.checked_mul(s as u128))
        .unwrap_or(u128::MAX);
    if states > cap {
        Err(Error::CapExceeded { states, cap })
    } else {
        Ok(())
    }
}

/// Product of factor tables with disjoint supports covering `0..n`.
fn product_of(factors: &[JointPmf], n: usize) -> JointPmf {
    let all: Vec<usize> = (0..n).collect();
    product_of_subset(factors, &all)
}

/// Product of factor tables whose supports partition `set` (sorted).
fn product_of_subset(factors: &[JointPmf], set: &[usize]) -> JointPmf {
    let mut sizes = vec![0usize; set.len()];
    for f in factors {
        for (&v, &s) in f.vertices.iter().zip(&f.sizes) {
            let p = set.binary_search(&v).expect("factor vertex in set");
            sizes[p] = s;
        }
    }
    let strides = strides_of(&sizes);
    let len: usize = sizes.iter().product();
    let mut probs = vec![1.0; len];
    for f in factors {
        let pos: Vec<(usize, usize, usize)> = f
            .vertices
            .iter()
            .zip(strides_of(&f.sizes))
            .map(|(v, fs)| {
                let p = set.binary_search(v).expect("factor vertex in set");
                (strides[p], sizes[p], fs)
            })
            .collect();
        for (i, q) in probs.iter_mut().enumerate() {
            let j: usize = pos
                .iter()
                .map(|&(stride, size, fs)| ((i / stride) % size) * fs)
                .sum();
            *q *= f.probs[j];
        }
    }
    JointPmf::from_parts(set.to_vec(), sizes, probs)
}

/// `marginal_on(product_of_blocks(m), K) = m[K]`.
pub fn product_of_blocks(m: &BlockMarginals, cap: u128) -> Result<JointPmf> {
    m.product(cap)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Var {
    Old(usize),
    New(usize),
}

/// Exact filtering operators bound to one model.
#[derive(Debug, Clone, Copy)]
pub struct ExactEngine<'a> {
    model: &'a LocalModel,
    cap: u128,
}

impl<'a> ExactEngine<'a> {
    pub fn new(model: &'a LocalModel) -> Self {
        Self {
            model,
            cap: DEFAULT_STATE_CAP,
        }
    }

    pub fn with_cap(model: &'a LocalModel, cap: u128) -> Self {
        Self { model, cap }
    }

    pub fn model(&self) -> &LocalModel {
        self.model
    }

    pub fn cap(&self) -> u128 {
        self.cap
    }

    fn check_full(&self, pmf: &JointPmf) -> Result<()> {
        let n = self.model.num_sites();
        if pmf.vertices.len() != n || pmf.vertices.iter().enumerate().any(|(i, &v)| i != v) {
            return Err(Error::InvalidArgument(
                "expected a pmf over every site of the model".into(),
            ));
        }
        if pmf.sizes != self.model.state_sizes() {
            return Err(Error::InvalidArgument("pmf alphabet sizes differ from the model".into()));
        }
        Ok(())
    }

    /// Prediction `P ρ`.
    ///
    /// Sites are processed in vertex order: each step multiplies in the
    /// kernel of one site as a new variable, then sums out every previous-time
    /// variable that no later site reads. The working table thus spans the
    /// new variables plus a moving frontier of old ones instead of the
    /// `|X|^2` pairs of a dense transition matrix.
    pub fn predict(&self, prior: &JointPmf) -> Result<JointPmf> {
        self.check_full(prior)?;
        check_cap(self.model.state_sizes(), self.cap)?;
        let model = self.model;
        let n = model.num_sites();
        let sizes = model.state_sizes();

        let mut last_use = vec![0usize; n];
        for v in 0..n {
            for &w in model.neighborhood(v) {
                last_use[w] = last_use[w].max(v);
            }
        }

        let mut vars: Vec<(Var, usize)> = (0..n).map(|w| (Var::Old(w), sizes[w])).collect();
        let mut table = prior.probs.clone();

        for v in 0..n {
            let strides = strides_of(&vars.iter().map(|&(_, s)| s).collect::<Vec<_>>());
            // (stride, size, row stride) of each N(v) coordinate in the table
            let nbhd = model.neighborhood(v);
            let row_strides = strides_of(&nbhd.iter().map(|&w| sizes[w]).collect::<Vec<_>>());
            let lookup: Vec<(usize, usize, usize)> = nbhd
                .iter()
                .zip(&row_strides)
                .map(|(&w, &rs)| {
                    let p = vars
                        .iter()
                        .position(|&(var, _)| var == Var::Old(w))
                        .expect("old variable still live");
                    (strides[p], vars[p].1, rs)
                })
                .collect();
            let old_len = table.len();
            let s = sizes[v];
            let mut next = vec![0.0; old_len * s];
            for (i, &q) in table.iter().enumerate() {
                if q == 0.0 {
                    continue;
                }
                let row: usize = lookup
                    .iter()
                    .map(|&(stride, size, rs)| ((i / stride) % size) * rs)
                    .sum();
                for (z, &p) in model.trans_row_by_index(v, row).iter().enumerate() {
                    next[i + z * old_len] = q * p;
                }
            }
            table = next;
            vars.push((Var::New(v), s));

            for w in (0..n).filter(|&w| last_use[w] == v) {
                let p = vars
                    .iter()
                    .position(|&(var, _)| var == Var::Old(w))
                    .expect("old variable still live");
                table = sum_out(&table, &vars, p);
                vars.remove(p);
            }
        }
        debug_assert!(vars.iter().enumerate().all(|(i, &(var, _))| var == Var::New(i)));
        Ok(JointPmf::from_parts((0..n).collect(), sizes.to_vec(), table))
    }

    /// Correction `C_n ρ`.
    pub fn correct(&self, predicted: &JointPmf, y: &ObsRecord) -> Result<JointPmf> {
        self.check_full(predicted)?;
        self.model.check_obs(y)?;
        let mut out = predicted.clone();
        let all: Vec<usize> = (0..self.model.num_sites()).collect();
        out.reweight(self.model, y, &all)?;
        Ok(out)
    }

    /// `π_0 = μ, π_n = C_n P π_{n-1}`; returns `[π_0, ..., π_T]`.
    pub fn filter_run(&self, mu: &JointPmf, obs: &[ObsRecord]) -> Result<Vec<JointPmf>> {
        self.check_full(mu)?;
        let mut out = Vec::with_capacity(obs.len() + 1);
        out.push(mu.clone());
        for y in obs {
            let predicted = self.predict(out.last().expect("non-empty"))?;
            out.push(self.correct(&predicted, y)?);
        }
        Ok(out)
    }

    /// One step of the ideal enlarged blocked filter from a joint prior:
    /// predict, take the marginal on every enlarged block, correct each with
    /// the observations inside it, then keep only the marginal on the
    /// original block.
    pub fn ideal_step_from_joint(
        &self,
        partition: &EnlargedPartition,
        prior: &JointPmf,
        y: &ObsRecord,
    ) -> Result<BlockMarginals> {
        self.model.check_obs(y)?;
        let predicted = self.predict(prior)?;
        let model = self.model;
        let blocks = partition
            .base()
            .blocks()
            .par_iter()
            .zip(partition.enlarged_blocks().par_iter())
            .map(|(block, enlarged)| {
                let mut local = predicted.marginal_on(enlarged)?;
                local.reweight(model, y, enlarged)?;
                local.marginal_on(block)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(BlockMarginals { blocks })
    }

    /// One step of the ideal enlarged blocked filter from a product-of-blocks
    /// state. With `b = 0` this is the ideal blocked filter.
    pub fn ideal_enlarged_blocked_step(
        &self,
        partition: &EnlargedPartition,
        current: &BlockMarginals,
        y: &ObsRecord,
    ) -> Result<BlockMarginals> {
        let joint = current.product(self.cap)?;
        self.ideal_step_from_joint(partition, &joint, y)
    }

    /// Ideal filter over a cyclic schedule: step `n` uses
    /// `schedule[n % schedule.len()]`. Entry 0 is `μ` held as a single block.
    pub fn ideal_filter_run(
        &self,
        schedule: &[EnlargedPartition],
        mu: &JointPmf,
        obs: &[ObsRecord],
    ) -> Result<Vec<BlockMarginals>> {
        if schedule.is_empty() {
            return Err(Error::InvalidArgument("empty partition schedule".into()));
        }
        self.check_full(mu)?;
        let mut out = Vec::with_capacity(obs.len() + 1);
        out.push(BlockMarginals {
            blocks: vec![mu.clone()],
        });
        for (i, y) in obs.iter().enumerate() {
            let step = i + 1;
            let partition = &schedule[step % schedule.len()];
            let next = if step == 1 {
                self.ideal_step_from_joint(partition, mu, y)?
            } else {
                self.ideal_enlarged_blocked_step(partition, out.last().expect("non-empty"), y)?
            };
            out.push(next);
        }
        Ok(out)
    }
}

fn sum_out(table: &[f64], vars: &[(Var, usize)], p: usize) -> Vec<f64> {
    let stride: usize = vars[..p].iter().map(|&(_, s)| s).product();
    let size = vars[p].1;
    let mut out = vec![0.0; table.len() / size];
    for (i, &q) in table.iter().enumerate() {
        out[i % stride + (i / (stride * size)) * stride] += q;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::SpatialGraph;
    use crate::model::noisy_voter;

    fn one_site(trans: Vec<f64>, obs: Vec<f64>) -> LocalModel {
        let g = SpatialGraph::new(1, &[]).unwrap();
        LocalModel::from_tables(g, 1, vec![2], vec![2], vec![trans], vec![obs]).unwrap()
    }

    fn pmf(probs: Vec<f64>) -> JointPmf {
        let n = (probs.len() as f64).log2() as usize;
        JointPmf::new((0..n).collect(), vec![2; n], probs).unwrap()
    }

    #[test]
    fn single_site_predict_and_correct() {
        let m = one_site(vec![0.7, 0.3, 0.4, 0.6], vec![0.9, 0.1, 0.1, 0.9]);
        let e = ExactEngine::new(&m);
        let out = e.predict(&pmf(vec![1.0, 0.0])).unwrap();
        assert!((out.probs[0] - 0.7).abs() < 1e-15 && (out.probs[1] - 0.3).abs() < 1e-15);
        let y = ObsRecord { time: 1, values: vec![0] };
        let post = e.correct(&pmf(vec![0.5, 0.5]), &y).unwrap();
        assert!((post.probs[0] - 0.9).abs() < 1e-15);
    }

    #[test]
    fn uniform_kernel_forgets_the_prior() {
        let g = SpatialGraph::cycle(4).unwrap();
        let m = noisy_voter(g, 1, 1.0, 0.3).unwrap();
        let e = ExactEngine::new(&m);
        let mut prior = vec![0.0; 16];
        prior[5] = 1.0;
        let once = e.predict(&pmf(prior)).unwrap();
        let twice = e.predict(&once).unwrap();
        for p in once.probs.iter().chain(&twice.probs) {
            assert!((p - 1.0 / 16.0).abs() < 1e-15);
        }
    }

    #[test]
    fn uninformative_likelihood_leaves_prediction() {
        let g = SpatialGraph::path(3).unwrap();
        let m = noisy_voter(g, 1, 0.3, 0.5).unwrap();
        let e = ExactEngine::new(&m);
        let p = pmf(vec![0.1, 0.2, 0.05, 0.05, 0.1, 0.2, 0.1, 0.2]);
        let post = e.correct(&p, &ObsRecord { time: 1, values: vec![1, 0, 1] }).unwrap();
        for (a, b) in post.probs.iter().zip(&p.probs) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn marginals_by_explicit_summation() {
        let probs = vec![0.05, 0.1, 0.15, 0.2, 0.02, 0.08, 0.25, 0.15];
        let p = pmf(probs.clone());
        let m = p.marginal_on(&[0, 2]).unwrap();
        // index = x0 + 2 x1 + 4 x2; sum over x1
        let expect: Vec<f64> = (0..4)
            .map(|j| {
                let (x0, x2) = (j % 2, j / 2);
                probs[x0 + 4 * x2] + probs[x0 + 2 + 4 * x2]
            })
            .collect();
        for (a, b) in m.probs.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(p.marginal_on(&[0, 1, 2]).unwrap(), p);
        assert!(p.marginal_on(&[5]).is_err());
    }

    #[test]
    fn product_recovers_block_marginals() {
        let a = JointPmf::new(vec![0, 2], vec![2, 2], vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let b = JointPmf::new(vec![1], vec![3], vec![0.5, 0.25, 0.25]).unwrap();
        let bm = BlockMarginals::new(vec![a.clone(), b.clone()]).unwrap();
        let joint = product_of_blocks(&bm, DEFAULT_STATE_CAP).unwrap();
        assert!((joint.total() - 1.0).abs() < 1e-15);
        let ma = joint.marginal_on(&[0, 2]).unwrap();
        for (x, y) in ma.probs.iter().zip(&a.probs) {
            assert!((x - y).abs() < 1e-15);
        }
        assert!(matches!(bm.product(4), Err(Error::CapExceeded { states: 12, cap: 4 })));
    }

    #[test]
    fn whole_block_ideal_step_is_the_exact_step() {
        let g = SpatialGraph::cycle(5).unwrap();
        let m = noisy_voter(g.clone(), 1, 0.3, 0.2).unwrap();
        let e = ExactEngine::new(&m);
        let mu = JointPmf::from_initial(&m, &InitialDist::Uniform, DEFAULT_STATE_CAP).unwrap();
        let y = ObsRecord { time: 1, values: vec![1, 0, 0, 1, 1] };
        let exact = e.correct(&e.predict(&mu).unwrap(), &y).unwrap();
        for b in [0, 2] {
            let p = EnlargedPartition::new(&g, Partition::whole(5), b).unwrap();
            let ideal = e.ideal_step_from_joint(&p, &mu, &y).unwrap();
            for (a, c) in ideal.blocks()[0].probs().iter().zip(exact.probs()) {
                assert!((a - c).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn cap_is_enforced() {
        let g = SpatialGraph::cycle(6).unwrap();
        let m = noisy_voter(g, 1, 0.3, 0.2).unwrap();
        assert!(matches!(
            JointPmf::from_initial(&m, &InitialDist::Uniform, 32),
            Err(Error::CapExceeded { states: 64, cap: 32 })
        ));
    }
}
