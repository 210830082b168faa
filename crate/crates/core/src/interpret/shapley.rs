use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::rng::stream;
use crate::{Error, Result};

pub const MAX_EXACT_PLAYERS: usize = 20;

/// Permutations handled per parallel block; block sums are reduced in block
/// order so results do not depend on the thread count.
const PERM_BLOCK: usize = 16;

/// A cooperative game over `n_players` features.
pub trait CoalitionGame: Sync {
    fn n_players(&self) -> usize;

    /// Model output with the players in `coalition` set to instance values
    /// and the rest to baseline values.
    fn value(&self, coalition: &[bool]) -> f64;

    /// `out[k]` = value of the coalition formed by the first `k` players of
    /// `order`, for `k = 0..=n`. Games with cheap incremental updates
    /// override this.
    fn path_values(&self, order: &[usize], out: &mut [f64]) {
        let mut coalition = vec![false; self.n_players()];
        out[0] = self.value(&coalition);
        for (k, &p) in order.iter().enumerate() {
            coalition[p] = true;
            out[k + 1] = self.value(&coalition);
        }
    }
}

/// Attribution values over an explained feature space.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributionMap {
    pub dims: Vec<usize>,
    pub values: Vec<f64>,
    /// Model output on the baseline, `v(∅)`.
    pub base_value: f64,
    /// Model output on the instance, `v(N)`.
    pub target_output: f64,
}

impl AttributionMap {
    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }
}

/// Game induced by a model function on mixtures of an instance and a baseline.
pub struct FnGame<'a, F> {
    pub model: F,
    pub instance: &'a [f64],
    pub baseline: &'a [f64],
}

impl<F: Fn(&[f64]) -> f64 + Sync> CoalitionGame for FnGame<'_, F> {
    fn n_players(&self) -> usize {
        self.instance.len()
    }

    fn value(&self, coalition: &[bool]) -> f64 {
        let x: Vec<f64> = coalition
            .iter()
            .zip(self.instance.iter().zip(self.baseline))
            .map(|(&on, (&a, &b))| if on { a } else { b })
            .collect();
        (self.model)(&x)
    }
}

fn check_pair(instance: &[f64], baseline: &[f64]) -> Result<()> {
    if instance.len() != baseline.len() {
        return Err(Error::shape("baseline", &[instance.len()], &[baseline.len()]));
    }
    Ok(())
}

/// Exact Shapley values by enumerating all `2ⁿ` coalitions.
pub fn exact_game<G: CoalitionGame + ?Sized>(game: &G) -> Result<Vec<f64>> {
    let n = game.n_players();
    if n > MAX_EXACT_PLAYERS {
        return Err(Error::invalid(format!(
            "{n} features is too many for exact enumeration; use sampling"
        )));
    }
    let values: Vec<f64> = (0u32..1 << n)
        .into_par_iter()
        .map(|mask| {
            let c: Vec<bool> = (0..n).map(|i| mask & (1 << i) != 0).collect();
            game.value(&c)
        })
        .collect();
    // weight(s) = s!(n−s−1)!/n! = 1 / (n·C(n−1, s))
    let mut binom = vec![1.0f64; n.max(1)];
    for s in 1..n {
        binom[s] = binom[s - 1] * (n - s) as f64 / s as f64;
    }
    let weight: Vec<f64> = binom.iter().map(|b| 1.0 / (n as f64 * b)).collect();
    let mut phi = vec![0.0; n];
    for (i, p) in phi.iter_mut().enumerate() {
        let bit = 1usize << i;
        *p = (0..values.len())
            .filter(|m| m & bit == 0)
            .map(|m| weight[(m as u32).count_ones() as usize] * (values[m | bit] - values[m]))
            .sum();
    }
    Ok(phi)
}

pub fn shapley_exact<F>(model: F, instance: &[f64], baseline: &[f64]) -> Result<AttributionMap>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    check_pair(instance, baseline)?;
    let game = FnGame {
        model,
        instance,
        baseline,
    };
    let values = exact_game(&game)?;
    Ok(AttributionMap {
        dims: vec![instance.len()],
        values,
        base_value: (game.model)(baseline),
        target_output: (game.model)(instance),
    })
}

/// Permutation-sampling estimate with `m` seeded permutations. Returns the
/// per-player values together with `v(∅)` and `v(N)`; the estimate sums to
/// `v(N) − v(∅)` up to rounding.
pub fn sampled_game<G: CoalitionGame + ?Sized>(game: &G, m: usize, seed: u64) -> Result<(Vec<f64>, f64, f64)> {
    if m == 0 {
        return Err(Error::invalid("number of permutations must be at least 1"));
    }
    let n = game.n_players();
    let v_empty = game.value(&vec![false; n]);
    let v_full = game.value(&vec![true; n]);
    let n_blocks = m.div_ceil(PERM_BLOCK);
    let partial: Vec<Vec<f64>> = (0..n_blocks)
        .into_par_iter()
        .map(|b| {
            let mut acc = vec![0.0; n];
            let mut order: Vec<usize> = (0..n).collect();
            let mut path = vec![0.0; n + 1];
            for p in b * PERM_BLOCK..((b + 1) * PERM_BLOCK).min(m) {
                order.sort_unstable();
                order.shuffle(&mut stream(seed, &[p as u64]));
                game.path_values(&order, &mut path);
                path[0] = v_empty;
                path[n] = v_full;
                for (k, &player) in order.iter().enumerate() {
                    acc[player] += path[k + 1] - path[k];
                }
            }
            acc
        })
        .collect();
    let mut phi = vec![0.0; n];
    for block in partial {
        for (p, v) in phi.iter_mut().zip(block) {
            *p += v;
        }
    }
    phi.iter_mut().for_each(|p| *p /= m as f64);
    Ok((phi, v_empty, v_full))
}

pub fn shapley_sampled<F>(model: F, instance: &[f64], baseline: &[f64], m: usize, seed: u64) -> Result<AttributionMap>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    check_pair(instance, baseline)?;
    let game = FnGame {
        model,
        instance,
        baseline,
    };
    let (values, base_value, target_output) = sampled_game(&game, m, seed)?;
    Ok(AttributionMap {
        dims: vec![instance.len()],
        values,
        base_value,
        target_output,
    })
}

/// Checks that `groups` partition `0..n_cells`.
pub fn validate_groups(groups: &[Vec<usize>], n_cells: usize) -> Result<()> {
    let mut seen = vec![false; n_cells];
    for (g, cells) in groups.iter().enumerate() {
        if cells.is_empty() {
            return Err(Error::invalid(format!("group {g} is empty")));
        }
        for &c in cells {
            if c >= n_cells {
                return Err(Error::invalid(format!("group {g} names cell {c} outside the map")));
            }
            if std::mem::replace(&mut seen[c], true) {
                return Err(Error::invalid(format!("cell {c} belongs to more than one group")));
            }
        }
    }
    if let Some(c) = seen.iter().position(|s| !s) {
        return Err(Error::invalid(format!("cell {c} is not covered by any group")));
    }
    Ok(())
}

/// One group per frame column of an `[h × w × c]` map, holding every mel
/// row and channel of that frame.
pub fn column_groups(h: usize, w: usize, c: usize) -> Vec<Vec<usize>> {
    (0..w)
        .map(|x| {
            (0..h)
                .flat_map(|y| (0..c).map(move |ch| (y * w + x) * c + ch))
                .collect()
        })
        .collect()
}

struct GroupGame<'a, F> {
    model: F,
    instance: &'a [f64],
    baseline: &'a [f64],
    groups: &'a [Vec<usize>],
}

impl<F: Fn(&[f64]) -> f64 + Sync> CoalitionGame for GroupGame<'_, F> {
    fn n_players(&self) -> usize {
        self.groups.len()
    }

    fn value(&self, coalition: &[bool]) -> f64 {
        let mut x = self.baseline.to_vec();
        for (g, _) in coalition.iter().enumerate().filter(|(_, &on)| on) {
            for &c in &self.groups[g] {
                x[c] = self.instance[c];
            }
        }
        (self.model)(&x)
    }
}

/// Expands per-group values onto cells.
pub fn spread_groups(group_values: &[f64], groups: &[Vec<usize>], n_cells: usize) -> Vec<f64> {
    let mut cells = vec![0.0; n_cells];
    for (v, g) in group_values.iter().zip(groups) {
        for &c in g {
            cells[c] = *v;
        }
    }
    cells
}

/// Sampled Shapley over groups of cells toggled together; every cell
/// receives its group's value.
pub fn shapley_grouped<F>(
    model: F,
    instance: &[f64],
    baseline: &[f64],
    dims: &[usize],
    groups: &[Vec<usize>],
    m: usize,
    seed: u64,
) -> Result<AttributionMap>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    check_pair(instance, baseline)?;
    if dims.iter().product::<usize>() != instance.len() {
        return Err(Error::shape("explained map", dims, &[instance.len()]));
    }
    validate_groups(groups, instance.len())?;
    let game = GroupGame {
        model,
        instance,
        baseline,
        groups,
    };
    let (phi, base_value, target_output) = sampled_game(&game, m, seed)?;
    Ok(AttributionMap {
        dims: dims.to_vec(),
        values: spread_groups(&phi, groups, instance.len()),
        base_value,
        target_output,
    })
}
