//! Communication graphs, doubly stochastic mixing, average consensus and push-sum.
//!
//! Node values are stored as an `N x K` matrix whose row `i` is node `i`'s
//! vector. Rounds are synchronous: every round reads the previous state and
//! writes the next one.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};

const DOUBLY_STOCHASTIC_TOL: f64 = 1e-12;
const MAX_GRAPH_ATTEMPTS: usize = 1000;
/// Contraction factors at or above `1 - NO_PROGRESS_TOL` cannot reach consensus.
const NO_PROGRESS_TOL: f64 = 1e-12;

/// Simple graph without self loops. For undirected graphs every edge is
/// stored in both adjacency lists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    directed: bool,
    adj: Vec<Vec<usize>>,
}

impl Graph {
    pub fn new(n: usize, directed: bool, edges: &[(usize, usize)]) -> Result<Self> {
        let mut adj = vec![Vec::new(); n];
        for &(u, v) in edges {
            if u >= n || v >= n {
                return Err(Error::InvalidParameter(format!("edge ({u}, {v}) out of range for {n} nodes")));
            }
            if u == v {
                continue;
            }
            adj[u].push(v);
            if !directed {
                adj[v].push(u);
            }
        }
        for list in &mut adj {
            list.sort_unstable();
            list.dedup();
        }
        Ok(Self { n, directed, adj })
    }

    pub fn complete(n: usize) -> Self {
        let adj = (0..n).map(|i| (0..n).filter(|&j| j != i).collect()).collect();
        Self { n, directed: false, adj }
    }

    pub fn path(n: usize) -> Self {
        let edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        Self::new(n, false, &edges).expect("path edges are in range")
    }

    pub fn directed_cycle(n: usize) -> Self {
        let edges: Vec<_> = (0..n).map(|i| (i, (i + 1) % n)).collect();
        Self::new(n, true, &edges).expect("cycle edges are in range")
    }

    pub fn n_nodes(&self) -> usize {
        self.n
    }

    pub fn is_directed(&self) -> bool {
        self.directed
    }

    /// Out-neighbors (all neighbors for undirected graphs).
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.adj[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adj[i].len()
    }

    /// Each edge once: `u < v` for undirected graphs, every arc for directed ones.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (u, list) in self.adj.iter().enumerate() {
            for &v in list {
                if self.directed || u < v {
                    out.push((u, v));
                }
            }
        }
        out
    }

    fn reaches_all(&self, adj: &[Vec<usize>]) -> bool {
        if self.n == 0 {
            return true;
        }
        let mut seen = vec![false; self.n];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    count += 1;
                    queue.push_back(v);
                }
            }
        }
        count == self.n
    }

    /// Connected (undirected) or strongly connected (directed).
    pub fn is_connected(&self) -> bool {
        if !self.reaches_all(&self.adj) {
            return false;
        }
        if !self.directed {
            return true;
        }
        let mut rev = vec![Vec::new(); self.n];
        for (u, list) in self.adj.iter().enumerate() {
            for &v in list {
                rev[v].push(u);
            }
        }
        self.reaches_all(&rev)
    }
}

/// `G(N, p)` conditioned on connectivity by rejection sampling.
pub fn erdos_renyi_connected<R: Rng + ?Sized>(n: usize, p: f64, rng: &mut R) -> Result<Graph> {
    if n == 0 || !(p > 0.0 && p <= 1.0) {
        return Err(Error::InvalidParameter(format!("need N >= 1 and 0 < p <= 1, got N={n}, p={p}")));
    }
    for _ in 0..MAX_GRAPH_ATTEMPTS {
        let mut edges = Vec::new();
        for u in 0..n {
            for v in u + 1..n {
                if rng.random::<f64>() < p {
                    edges.push((u, v));
                }
            }
        }
        let g = Graph::new(n, false, &edges)?;
        if g.is_connected() {
            return Ok(g);
        }
    }
    Err(Error::GenerationFailed { attempts: MAX_GRAPH_ATTEMPTS })
}

/// Strongly connected digraph: a directed cycle through a random node
/// ordering plus each remaining arc independently with probability `p`.
pub fn random_strongly_connected<R: Rng + ?Sized>(n: usize, p: f64, rng: &mut R) -> Result<Graph> {
    if n == 0 || !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidParameter(format!("need N >= 1 and 0 <= p <= 1, got N={n}, p={p}")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
    let mut edges: Vec<_> = (0..n).map(|i| (order[i], order[(i + 1) % n])).collect();
    for u in 0..n {
        for v in 0..n {
            if u != v && rng.random::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    Graph::new(n, true, &edges)
}

/// Doubly stochastic mixing matrix with its contraction factor.
#[derive(Debug, Clone)]
pub struct WeightMatrix {
    dense: DMatrix<f64>,
    rows: Vec<Vec<(usize, f64)>>,
    lambda2: f64,
}

impl WeightMatrix {
    pub fn new(dense: DMatrix<f64>) -> Result<Self> {
        let n = dense.nrows();
        if n == 0 || dense.ncols() != n {
            return Err(Error::DimensionMismatch(format!("weight matrix must be square, got {}x{}", n, dense.ncols())));
        }
        let mut deviation: f64 = 0.0;
        for i in 0..n {
            deviation = deviation.max((dense.row(i).sum() - 1.0).abs());
            deviation = deviation.max((dense.column(i).sum() - 1.0).abs());
        }
        if deviation > DOUBLY_STOCHASTIC_TOL || dense.iter().any(|x| !(*x >= 0.0)) {
            return Err(Error::NotDoublyStochastic { deviation });
        }
        let rows = (0..n)
            .map(|i| (0..n).filter(|&j| dense[(i, j)] > 0.0).map(|j| (j, dense[(i, j)])).collect())
            .collect();
        // Spectral norm of W - 11^T/N: the worst-case per-round shrink of the disagreement.
        let centered = &dense - DMatrix::from_element(n, n, 1.0 / n as f64);
        let lambda2 = if n == 1 { 0.0 } else { centered.singular_values().max() };
        Ok(Self { dense, rows, lambda2 })
    }

    /// Like [`WeightMatrix::new`], but also rejects weight on non-edges.
    pub fn for_graph(g: &Graph, dense: DMatrix<f64>) -> Result<Self> {
        for i in 0..dense.nrows() {
            for j in 0..dense.ncols() {
                if i != j && dense[(i, j)] > 0.0 && g.neighbors(i).binary_search(&j).is_err() {
                    return Err(Error::WeightOffGraph { row: i, col: j });
                }
            }
        }
        Self::new(dense)
    }

    pub fn identity(n: usize) -> Self {
        Self::new(DMatrix::identity(n, n)).expect("identity is doubly stochastic")
    }

    /// `W = 11^T / N`.
    pub fn averaging(n: usize) -> Self {
        Self::new(DMatrix::from_element(n, n, 1.0 / n as f64)).expect("averaging matrix is doubly stochastic")
    }

    /// Metropolis weights `1 / (1 + max(deg_i, deg_j))` on edges; the diagonal takes the rest.
    pub fn metropolis(g: &Graph) -> Result<Self> {
        if g.is_directed() {
            return Err(Error::InvalidParameter("Metropolis weights need an undirected graph".into()));
        }
        let n = g.n_nodes();
        let mut w = DMatrix::zeros(n, n);
        for i in 0..n {
            for &j in g.neighbors(i) {
                w[(i, j)] = 1.0 / (1.0 + g.degree(i).max(g.degree(j)) as f64);
            }
        }
        for i in 0..n {
            let off: f64 = g.neighbors(i).iter().map(|&j| w[(i, j)]).sum();
            w[(i, i)] = 1.0 - off;
        }
        Self::for_graph(g, w)
    }

    pub fn n_nodes(&self) -> usize {
        self.dense.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.dense
    }

    /// Second-largest singular value (largest on the complement of `1`).
    pub fn lambda2(&self) -> f64 {
        self.lambda2
    }

    /// `x <- W x` for an `N x K` row-major buffer.
    pub fn mix_into(&self, src: &[f64], dst: &mut [f64], k: usize) {
        for (i, row) in self.rows.iter().enumerate() {
            let out = &mut dst[i * k..(i + 1) * k];
            out.fill(0.0);
            for &(j, w) in row {
                for (o, x) in out.iter_mut().zip(&src[j * k..(j + 1) * k]) {
                    *o += w * x;
                }
            }
        }
    }

    pub fn mix(&self, values: &DMatrix<f64>) -> DMatrix<f64> {
        let (n, k) = values.shape();
        let src: Vec<f64> = values.transpose().as_slice().to_vec();
        let mut dst = vec![0.0; n * k];
        self.mix_into(&src, &mut dst, k);
        DMatrix::from_row_slice(n, k, &dst)
    }
}

/// Node-average of an `N x K` value matrix.
pub fn node_mean(values: &DMatrix<f64>) -> DVector<f64> {
    let n = values.nrows() as f64;
    let mut mean = DVector::zeros(values.ncols());
    for row in values.row_iter() {
        mean += row.transpose();
    }
    mean / n
}

/// `max_i |x_i - mean|_2`.
pub fn max_deviation(values: &DMatrix<f64>, mean: &DVector<f64>) -> f64 {
    values
        .row_iter()
        .map(|r| (r.transpose() - mean).norm())
        .fold(0.0, f64::max)
}

/// Frobenius norm of `X - 1 mean^T`.
pub fn disagreement(values: &DMatrix<f64>) -> f64 {
    let mean = node_mean(values);
    values.row_iter().map(|r| (r.transpose() - &mean).norm_squared()).sum::<f64>().sqrt()
}

/// How `run_average_consensus` decides to stop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StopRule {
    /// Stop once every node is within `eps` of the true mean (test mode).
    OracleMean,
    /// Run the round count guaranteed by the spectral gap for inputs whose
    /// disagreement (Frobenius norm) is at most `value_scale` (deployed mode).
    Precomputed { value_scale: f64 },
}

/// Iterate `x <- W x` until every node is within `eps` of the mean.
pub fn run_average_consensus(
    w: &WeightMatrix,
    values: &DMatrix<f64>,
    eps: f64,
    stop: StopRule,
) -> Result<(DMatrix<f64>, usize)> {
    if !(eps > 0.0) {
        return Err(Error::InvalidParameter(format!("eps must be positive, got {eps}")));
    }
    let (n, k) = values.shape();
    if n != w.n_nodes() {
        return Err(Error::DimensionMismatch(format!("{} nodes but {n} value rows", w.n_nodes())));
    }
    let mut cur: Vec<f64> = values.transpose().as_slice().to_vec();
    let mut next = vec![0.0; n * k];
    let to_matrix = |buf: &[f64]| DMatrix::from_row_slice(n, k, buf);
    match stop {
        StopRule::Precomputed { value_scale } => {
            let rounds = rounds_for_accuracy(w, eps, value_scale)?;
            for _ in 0..rounds {
                w.mix_into(&cur, &mut next, k);
                std::mem::swap(&mut cur, &mut next);
            }
            Ok((to_matrix(&cur), rounds))
        }
        StopRule::OracleMean => {
            let mean = node_mean(values);
            if max_deviation(values, &mean) <= eps {
                return Ok((values.clone(), 0));
            }
            let cap = rounds_for_accuracy(w, eps, disagreement(values))? + 1000;
            for round in 1..=cap {
                w.mix_into(&cur, &mut next, k);
                std::mem::swap(&mut cur, &mut next);
                let dev = (0..n)
                    .map(|i| {
                        cur[i * k..(i + 1) * k]
                            .iter()
                            .zip(mean.iter())
                            .map(|(x, m)| (x - m) * (x - m))
                            .sum::<f64>()
                            .sqrt()
                    })
                    .fold(0.0, f64::max);
                if dev <= eps {
                    return Ok((to_matrix(&cur), round));
                }
            }
            Err(Error::NoProgress { contraction: w.lambda2() })
        }
    }
}

/// Rounds guaranteeing `max_i |x_i - mean| <= eps` when the initial
/// disagreement is at most `value_scale`.
pub fn rounds_for_accuracy(w: &WeightMatrix, eps: f64, value_scale: f64) -> Result<usize> {
    rounds_for_contraction(w.lambda2(), eps, value_scale)
}

/// `ceil(log(value_scale / eps) / log(1 / lambda2))`.
pub fn rounds_for_contraction(lambda2: f64, eps: f64, value_scale: f64) -> Result<usize> {
    if !(eps > 0.0) {
        return Err(Error::InvalidParameter(format!("eps must be positive, got {eps}")));
    }
    if lambda2 >= 1.0 - NO_PROGRESS_TOL || lambda2.is_nan() {
        return Err(Error::NoProgress { contraction: lambda2 });
    }
    if eps >= value_scale {
        return Ok(0);
    }
    if lambda2 <= f64::EPSILON {
        return Ok(1);
    }
    let exact = (value_scale / eps).ln() / (1.0 / lambda2).ln();
    // Absorb round-off in the logarithms (e.g. log2(2^10) = 10.000000000000002).
    Ok((exact - 1e-9).ceil().max(1.0) as usize)
}

/// Push-sum state: numerators `x` (`N x K`, row-major) and weights `w`.
#[derive(Debug, Clone, PartialEq)]
pub struct PushSumState {
    x: Vec<f64>,
    w: Vec<f64>,
    k: usize,
}

impl PushSumState {
    pub fn new(values: &DMatrix<f64>) -> Self {
        let (n, k) = values.shape();
        Self { x: values.transpose().as_slice().to_vec(), w: vec![1.0; n], k }
    }

    /// One synchronous round: node `i` keeps and sends `1/(outdeg_i + 1)` of
    /// its mass to itself and to each out-neighbor.
    pub fn step(&mut self, g: &Graph) {
        let n = self.w.len();
        let k = self.k;
        let mut x = vec![0.0; n * k];
        let mut w = vec![0.0; n];
        for i in 0..n {
            let share = 1.0 / (g.degree(i) + 1) as f64;
            let xi = &self.x[i * k..(i + 1) * k];
            for &j in std::iter::once(&i).chain(g.neighbors(i)) {
                for (o, v) in x[j * k..(j + 1) * k].iter_mut().zip(xi) {
                    *o += share * v;
                }
                w[j] += share * self.w[i];
            }
        }
        self.x = x;
        self.w = w;
    }

    /// Ratio estimates `x_i / w_i`.
    pub fn estimates(&self) -> DMatrix<f64> {
        let n = self.w.len();
        DMatrix::from_fn(n, self.k, |i, c| self.x[i * self.k + c] / self.w[i])
    }

    /// Column sums of `x` and the total weight.
    pub fn mass(&self) -> (DVector<f64>, f64) {
        let mut cols = DVector::zeros(self.k);
        for row in self.x.chunks(self.k) {
            for (c, v) in cols.iter_mut().zip(row) {
                *c += v;
            }
        }
        (cols, self.w.iter().sum())
    }
}

/// Run `rounds` rounds of push-sum on a strongly connected digraph.
pub fn run_push_sum(g: &Graph, values: &DMatrix<f64>, rounds: usize) -> Result<DMatrix<f64>> {
    if values.nrows() != g.n_nodes() {
        return Err(Error::DimensionMismatch(format!("{} nodes but {} value rows", g.n_nodes(), values.nrows())));
    }
    let mut state = PushSumState::new(values);
    for _ in 0..rounds {
        state.step(g);
    }
    Ok(state.estimates())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn er_small_cases() {
        let g = erdos_renyi_connected(2, 1.0, &mut rng::stream(1)).unwrap();
        assert_eq!(g.edges(), vec![(0, 1)]);
        let g = erdos_renyi_connected(1, 0.5, &mut rng::stream(1)).unwrap();
        assert!(g.is_connected() && g.edges().is_empty());
        let g = erdos_renyi_connected(100, 0.1, &mut rng::stream(2)).unwrap();
        assert!(g.is_connected());
        let err = erdos_renyi_connected(200, 0.001, &mut rng::stream(3)).unwrap_err();
        assert!(matches!(err, Error::GenerationFailed { attempts: 1000 }));
    }

    #[test]
    fn metropolis_examples() {
        let w = WeightMatrix::metropolis(&Graph::path(2)).unwrap();
        assert_eq!(w.matrix(), &DMatrix::from_element(2, 2, 0.5));
        let w = WeightMatrix::metropolis(&Graph::complete(3)).unwrap();
        for x in w.matrix().iter() {
            assert!((x - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn invalid_weights_are_rejected() {
        let bad = DMatrix::from_row_slice(2, 2, &[0.7, 0.3, 0.2, 0.8]);
        assert!(matches!(WeightMatrix::new(bad), Err(Error::NotDoublyStochastic { .. })));
        let g = Graph::new(3, false, &[(0, 1), (1, 2)]).unwrap();
        let off = DMatrix::from_row_slice(3, 3, &[0.5, 0.0, 0.5, 0.0, 1.0, 0.0, 0.5, 0.0, 0.5]);
        assert!(matches!(WeightMatrix::for_graph(&g, off), Err(Error::WeightOffGraph { row: 0, col: 2 })));
    }

    #[test]
    fn consensus_examples() {
        let w = WeightMatrix::metropolis(&Graph::path(2)).unwrap();
        let vals = DMatrix::from_row_slice(2, 1, &[0.0, 2.0]);
        let (out, rounds) = run_average_consensus(&w, &vals, 1e-12, StopRule::OracleMean).unwrap();
        assert_eq!(rounds, 1);
        assert_eq!(out, DMatrix::from_element(2, 1, 1.0));

        let same = DMatrix::from_element(4, 3, 2.5);
        let (_, rounds) = run_average_consensus(&WeightMatrix::metropolis(&Graph::path(4)).unwrap(), &same, 1e-9, StopRule::OracleMean).unwrap();
        assert_eq!(rounds, 0);

        let vals = DMatrix::from_fn(5, 2, |i, j| (i * 3 + j) as f64);
        let (out, rounds) = run_average_consensus(&WeightMatrix::averaging(5), &vals, 1e-12, StopRule::OracleMean).unwrap();
        assert_eq!(rounds, 1);
        let mean = node_mean(&vals);
        assert!(max_deviation(&out, &mean) < 1e-12);

        let err = run_average_consensus(&WeightMatrix::identity(3), &DMatrix::from_fn(3, 1, |i, _| i as f64), 1e-3, StopRule::OracleMean)
            .unwrap_err();
        assert!(matches!(err, Error::NoProgress { .. }));
    }

    #[test]
    fn precomputed_rounds_meet_the_target() {
        let g = erdos_renyi_connected(30, 0.2, &mut rng::stream(5)).unwrap();
        let w = WeightMatrix::metropolis(&g).unwrap();
        let vals = DMatrix::from_fn(30, 3, |i, j| ((i * 7 + j * 3) % 11) as f64);
        let scale = disagreement(&vals);
        let (out, rounds) = run_average_consensus(&w, &vals, 1e-6, StopRule::Precomputed { value_scale: scale }).unwrap();
        assert_eq!(rounds, rounds_for_accuracy(&w, 1e-6, scale).unwrap());
        assert!(max_deviation(&out, &node_mean(&vals)) <= 1e-6);
    }

    #[test]
    fn rounds_examples() {
        assert_eq!(rounds_for_contraction(0.5, 1.0, 1.0).unwrap(), 0);
        assert_eq!(rounds_for_contraction(0.5, 2.0, 1.0).unwrap(), 0);
        assert_eq!(rounds_for_contraction(0.5, 1.0 / 1024.0, 1.0).unwrap(), 10);
        assert_eq!(rounds_for_contraction(0.9, 1e-6, 1.0).unwrap(), 132);
        assert!(matches!(rounds_for_contraction(1.0, 1e-3, 1.0), Err(Error::NoProgress { .. })));
    }

    #[test]
    fn push_sum_examples() {
        let single = Graph::new(1, true, &[]).unwrap();
        let v = DMatrix::from_element(1, 2, 4.0);
        assert_eq!(run_push_sum(&single, &v, 0).unwrap(), v);

        let ring = Graph::new(2, true, &[(0, 1), (1, 0)]).unwrap();
        let vals = DMatrix::from_row_slice(2, 1, &[0.0, 2.0]);
        let mut state = PushSumState::new(&vals);
        let mut prev = 1.0;
        for _ in 0..5 {
            state.step(&ring);
            let err = (state.estimates().add_scalar(-1.0)).amax();
            assert!(err <= 0.5 * prev + 1e-15);
            prev = err;
        }
        assert!(prev < 1e-12);
    }

    #[test]
    fn strongly_connected_generator() {
        let mut r = rng::stream(8);
        for n in [1, 2, 10, 50] {
            let g = random_strongly_connected(n, 0.05, &mut r).unwrap();
            assert!(g.is_directed() && g.is_connected());
        }
        let g = Graph::new(3, true, &[(0, 1), (1, 2)]).unwrap();
        assert!(!g.is_connected());
    }

    proptest! {
        #[test]
        fn metropolis_is_doubly_stochastic_and_contracts(seed in any::<u64>(), n in 2usize..25) {
            let mut r = rng::stream(seed);
            let g = erdos_renyi_connected(n, 0.4, &mut r).unwrap();
            let w = WeightMatrix::metropolis(&g).unwrap();
            for i in 0..n {
                prop_assert!((w.matrix().row(i).sum() - 1.0).abs() <= 1e-12);
                prop_assert!((w.matrix().column(i).sum() - 1.0).abs() <= 1e-12);
            }
            prop_assert!(w.lambda2() < 1.0);
            let vals = DMatrix::from_fn(n, 2, |_, _| r.random_range(-5.0..5.0));
            let mixed = w.mix(&vals);
            prop_assert!((node_mean(&mixed) - node_mean(&vals)).amax() <= 1e-12);
            prop_assert!(disagreement(&mixed) <= w.lambda2() * disagreement(&vals) + 1e-12);
        }

        #[test]
        fn push_sum_conserves_mass(seed in any::<u64>(), n in 1usize..20, rounds in 0usize..40) {
            let mut r = rng::stream(seed);
            let g = random_strongly_connected(n, 0.2, &mut r).unwrap();
            let vals = DMatrix::from_fn(n, 3, |_, _| r.random_range(-5.0..5.0));
            let mut state = PushSumState::new(&vals);
            let (x0, w0) = state.mass();
            for _ in 0..rounds {
                state.step(&g);
                let (x, w) = state.mass();
                prop_assert!((x - &x0).amax() <= 1e-10);
                prop_assert!((w - w0).abs() <= 1e-10);
            }
        }
    }
}
