//! Shapley oracles that share no code with the library estimators.

use phono::rng::stream;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Exact Shapley values as the average marginal contribution over every
/// ordering of the players (Heap's algorithm); feasible up to ~9 players.
pub fn by_all_orderings(f: &dyn Fn(&[f64]) -> f64, x: &[f64], baseline: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut phi = vec![0.0; n];
    let mut count = 0u64;
    let mut visit = |order: &[usize]| {
        let mut z = baseline.to_vec();
        let mut prev = f(&z);
        for &p in order {
            z[p] = x[p];
            let cur = f(&z);
            phi[p] += cur - prev;
            prev = cur;
        }
        count += 1;
    };
    let mut c = vec![0usize; n];
    visit(&order);
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                order.swap(0, i);
            } else {
                order.swap(c[i], i);
            }
            visit(&order);
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    phi.iter().map(|p| p / count as f64).collect()
}

/// Random smooth model with pairwise interactions: a one-hidden-layer tanh
/// network with a sigmoid output, so values live in (0, 1).
pub struct RandomModel {
    w1: Vec<Vec<f64>>,
    b1: Vec<f64>,
    w2: Vec<f64>,
    b2: f64,
}

impl RandomModel {
    pub fn new(n_features: usize, hidden: usize, seed: u64) -> Self {
        let mut rng = stream(seed, &[0x5A]);
        let mut normal = |scale: f64| -> f64 {
            let z: f64 = StandardNormal.sample(&mut rng);
            scale * z
        };
        let w1 = (0..hidden)
            .map(|_| (0..n_features).map(|_| normal(0.8)).collect())
            .collect();
        let b1 = (0..hidden).map(|_| normal(0.3)).collect();
        let w2 = (0..hidden).map(|_| normal(1.0)).collect();
        let b2 = normal(0.3);
        Self { w1, b1, w2, b2 }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let z: f64 = self
            .w1
            .iter()
            .zip(&self.b1)
            .zip(&self.w2)
            .map(|((row, b), v)| v * (row.iter().zip(x).map(|(w, x)| w * x).sum::<f64>() + b).tanh())
            .sum::<f64>()
            + self.b2;
        1.0 / (1.0 + (-z).exp())
    }
}

/// Instance and baseline drawn uniformly from [-1, 1].
pub fn random_point_pair(n: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let mut rng = stream(seed, &[0x9A]);
    let x = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let b = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    (x, b)
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, Default)]
pub struct OracleReport {
    /// Sampled (m permutations) vs exact enumeration.
    pub sampled_vs_exact: f64,
    /// Library exact enumeration vs the all-orderings oracle.
    pub exact_vs_orderings: f64,
    /// |Σφ − (f(x) − f(b))| over exact and sampled results.
    pub efficiency: f64,
    /// Exact enumeration of random linear models vs β_i (x_i − b_i).
    pub linear: f64,
}

/// Runs the estimator comparisons over `models` random models with
/// `n_features` features.
pub fn compare_estimators(models: usize, n_features: usize, m: usize, seed: u64) -> OracleReport {
    let mut r = OracleReport::default();
    for k in 0..models as u64 {
        let model = RandomModel::new(n_features, 6, seed ^ k.wrapping_mul(0x9E37));
        let f = |x: &[f64]| model.eval(x);
        let (x, b) = random_point_pair(n_features, seed.wrapping_add(k));
        let exact = phono::interpret::shapley_exact(f, &x, &b).expect("exact");
        let sampled = phono::interpret::shapley_sampled(f, &x, &b, m, seed.wrapping_add(1000 + k)).expect("sampled");
        let orderings = by_all_orderings(&f, &x, &b);
        let gap = f(&x) - f(&b);
        r.sampled_vs_exact = r.sampled_vs_exact.max(max_abs_diff(&sampled.values, &exact.values));
        r.exact_vs_orderings = r.exact_vs_orderings.max(max_abs_diff(&exact.values, &orderings));
        r.efficiency = r
            .efficiency
            .max((exact.sum() - gap).abs())
            .max((sampled.sum() - gap).abs());

        let mut rng = stream(seed, &[0x11, k]);
        let beta: Vec<f64> = (0..n_features).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let c0: f64 = rng.gen_range(-1.0..1.0);
        let linear = |x: &[f64]| c0 + beta.iter().zip(x).map(|(b, x)| b * x).sum::<f64>();
        let closed: Vec<f64> = (0..n_features).map(|i| beta[i] * (x[i] - b[i])).collect();
        let lin = phono::interpret::shapley_exact(linear, &x, &b).expect("exact linear");
        r.linear = r.linear.max(max_abs_diff(&lin.values, &closed));
        r.efficiency = r.efficiency.max((lin.sum() - (linear(&x) - linear(&b))).abs());
    }
    r
}
