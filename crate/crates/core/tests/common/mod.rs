//! Independent oracles. Nothing here goes through the engine's factored
//! code paths: neighborhoods come from Floyd–Warshall on the edge list, joint
//! states are enumerated directly, and the transition matrix is dense.

#![allow(dead_code)]

use fieldfilter::graph::SpatialGraph;
use fieldfilter::model::{LocalModel, ObsRecord};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random explicit model on `graph`: every table entry at least `floor`
/// before normalisation.
pub struct RawModel {
    pub n: usize,
    pub sizes: Vec<usize>,
    pub obs_sizes: Vec<usize>,
    pub nbhd: Vec<Vec<usize>>,
    pub trans: Vec<Vec<f64>>,
    pub obs: Vec<Vec<f64>>,
}

pub fn floyd_warshall(n: usize, edges: &[(usize, usize)]) -> Vec<Vec<usize>> {
    let inf = usize::MAX / 4;
    let mut d = vec![vec![inf; n]; n];
    for (i, row) in d.iter_mut().enumerate() {
        row[i] = 0;
    }
    for &(a, b) in edges {
        d[a][b] = 1;
        d[b][a] = 1;
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if d[i][k] + d[k][j] < d[i][j] {
                    d[i][j] = d[i][k] + d[k][j];
                }
            }
        }
    }
    d
}

fn random_rows(rng: &mut ChaCha8Rng, rows: usize, width: usize, floor: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(rows * width);
    for _ in 0..rows {
        let raw: Vec<f64> = (0..width).map(|_| floor + rng.gen::<f64>()).collect();
        let s: f64 = raw.iter().sum();
        out.extend(raw.iter().map(|x| x / s));
    }
    out
}

impl RawModel {
    pub fn random(
        n: usize,
        edges: &[(usize, usize)],
        r: usize,
        sizes: Vec<usize>,
        obs_sizes: Vec<usize>,
        seed: u64,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = floyd_warshall(n, edges);
        let nbhd: Vec<Vec<usize>> = (0..n).map(|v| (0..n).filter(|&w| d[v][w] <= r).collect()).collect();
        let trans = (0..n)
            .map(|v| {
                let rows: usize = nbhd[v].iter().map(|&w| sizes[w]).product();
                random_rows(&mut rng, rows, sizes[v], 0.05)
            })
            .collect();
        let obs = (0..n).map(|v| random_rows(&mut rng, sizes[v], obs_sizes[v], 0.05)).collect();
        Self {
            n,
            sizes,
            obs_sizes,
            nbhd,
            trans,
            obs,
        }
    }

    pub fn build(&self, graph: SpatialGraph, r: usize) -> LocalModel {
        LocalModel::from_tables(
            graph,
            r,
            self.sizes.clone(),
            self.obs_sizes.clone(),
            self.trans.clone(),
            self.obs.clone(),
        )
        .unwrap()
    }

    pub fn num_states(&self) -> usize {
        self.sizes.iter().product()
    }

    /// Joint index -> configuration, site 0 fastest.
    pub fn decode(&self, mut i: usize) -> Vec<usize> {
        self.sizes
            .iter()
            .map(|&s| {
                let x = i % s;
                i /= s;
                x
            })
            .collect()
    }

    pub fn trans_prob(&self, v: usize, old: &[usize], new_v: usize) -> f64 {
        let mut row = 0;
        let mut stride = 1;
        for &w in &self.nbhd[v] {
            row += old[w] * stride;
            stride *= self.sizes[w];
        }
        self.trans[v][row * self.sizes[v] + new_v]
    }

    pub fn likelihood(&self, x: &[usize], y: &[u16], sites: &[usize]) -> f64 {
        sites
            .iter()
            .map(|&v| self.obs[v][x[v] * self.obs_sizes[v] + y[v] as usize])
            .product()
    }

    /// Dense `P[x][x']`.
    pub fn transition_matrix(&self) -> Vec<Vec<f64>> {
        let m = self.num_states();
        (0..m)
            .map(|i| {
                let old = self.decode(i);
                (0..m)
                    .map(|j| {
                        let new = self.decode(j);
                        (0..self.n).map(|v| self.trans_prob(v, &old, new[v])).product()
                    })
                    .collect()
            })
            .collect()
    }

    pub fn predict(&self, matrix: &[Vec<f64>], pi: &[f64]) -> Vec<f64> {
        let m = pi.len();
        (0..m).map(|j| (0..m).map(|i| pi[i] * matrix[i][j]).sum()).collect()
    }

    /// Forward algorithm over the flattened chain.
    pub fn forward(&self, mu: &[f64], obs: &[ObsRecord]) -> Vec<Vec<f64>> {
        let matrix = self.transition_matrix();
        let all: Vec<usize> = (0..self.n).collect();
        let mut out = vec![mu.to_vec()];
        for y in obs {
            let pred = self.predict(&matrix, out.last().unwrap());
            let mut post: Vec<f64> = pred
                .iter()
                .enumerate()
                .map(|(i, p)| p * self.likelihood(&self.decode(i), &y.values, &all))
                .collect();
            let z: f64 = post.iter().sum();
            post.iter_mut().for_each(|p| *p /= z);
            out.push(post);
        }
        out
    }

    /// Marginal of a joint table on `set` (sorted), lowest vertex fastest.
    pub fn marginal(&self, joint: &[f64], set: &[usize]) -> Vec<f64> {
        let len: usize = set.iter().map(|&v| self.sizes[v]).product();
        let mut out = vec![0.0; len];
        for (i, p) in joint.iter().enumerate() {
            out[self.local_index(&self.decode(i), set)] += p;
        }
        out
    }

    pub fn local_index(&self, x: &[usize], set: &[usize]) -> usize {
        let mut idx = 0;
        let mut stride = 1;
        for &v in set {
            idx += x[v] * stride;
            stride *= self.sizes[v];
        }
        idx
    }

    /// The ideal enlarged blocked step written out term by term: for every
    /// block `K` with enlargement `K̄`,
    /// `F(μ)(x_K) ∝ Σ_{x_{K̄ \ K}} Π_{v ∈ K̄} g^v(x^v, y^v) (Pμ)(x_{K̄})`.
    pub fn ideal_step(
        &self,
        mu: &[f64],
        blocks: &[Vec<usize>],
        enlarged: &[Vec<usize>],
        y: &[u16],
    ) -> Vec<Vec<f64>> {
        let matrix = self.transition_matrix();
        let pred = self.predict(&matrix, mu);
        blocks
            .iter()
            .zip(enlarged)
            .map(|(k, kbar)| {
                let len: usize = k.iter().map(|&v| self.sizes[v]).product();
                let mut out = vec![0.0; len];
                for (i, p) in pred.iter().enumerate() {
                    let x = self.decode(i);
                    out[self.local_index(&x, k)] += p * self.likelihood(&x, y, kbar);
                }
                let z: f64 = out.iter().sum();
                out.iter_mut().for_each(|p| *p /= z);
                out
            })
            .collect()
    }
}

pub fn random_pmf(len: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw: Vec<f64> = (0..len).map(|_| 0.01 + rng.gen::<f64>()).collect();
    let s: f64 = raw.iter().sum();
    raw.iter().map(|x| x / s).collect()
}

pub fn random_obs(obs_sizes: &[usize], steps: usize, seed: u64) -> Vec<ObsRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (1..=steps)
        .map(|t| ObsRecord {
            time: t,
            values: obs_sizes.iter().map(|&s| rng.gen_range(0..s) as u16).collect(),
        })
        .collect()
}

pub fn max_abs(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Every set partition of `0..n`.
pub fn set_partitions(n: usize) -> Vec<Vec<Vec<usize>>> {
    fn go(i: usize, n: usize, cur: &mut Vec<Vec<usize>>, out: &mut Vec<Vec<Vec<usize>>>) {
        if i == n {
            out.push(cur.clone());
            return;
        }
        for b in 0..cur.len() {
            cur[b].push(i);
            go(i + 1, n, cur, out);
            cur[b].pop();
        }
        cur.push(vec![i]);
        go(i + 1, n, cur, out);
        cur.pop();
    }
    let mut out = Vec::new();
    go(0, n, &mut Vec::new(), &mut out);
    out
}

pub fn cycle_edges(n: usize) -> Vec<(usize, usize)> {
    (0..n).map(|i| (i, (i + 1) % n)).collect()
}

pub fn path_edges(n: usize) -> Vec<(usize, usize)> {
    (0..n.saturating_sub(1)).map(|i| (i, i + 1)).collect()
}
