//! Permutation tests for correlation on tiny samples.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{average_ranks, centered, check_pair, Result, StatResult, StatsError, TestKind};

pub const DEFAULT_MAX_EXACT_N: usize = 8;
pub const DEFAULT_MC_DRAWS: usize = 100_000;
pub const DEFAULT_RNG_SEED: u64 = 42;
/// Permuted statistics within this of the observed one count as ties.
pub const PERMUTATION_TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrKind {
    Pearson,
    Spearman,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PermutationConfig {
    pub max_exact_n: usize,
    pub mc_draws: usize,
    pub rng_seed: u64,
}

impl Default for PermutationConfig {
    fn default() -> Self {
        Self {
            max_exact_n: DEFAULT_MAX_EXACT_N,
            mc_draws: DEFAULT_MC_DRAWS,
            rng_seed: DEFAULT_RNG_SEED,
        }
    }
}

/// Correlation of a fixed centered `x` against `y` reindexed by `perm`.
struct PermutedCorr {
    xc: Vec<f64>,
    yc: Vec<f64>,
    scale: f64,
}

impl PermutedCorr {
    fn new(x: &[f64], y: &[f64]) -> Result<Self> {
        let (xc, sx) = centered(x);
        let (yc, sy) = centered(y);
        if sx == 0.0 || sy == 0.0 {
            return Err(StatsError::ZeroVariance("correlation input is constant"));
        }
        Ok(Self {
            xc,
            yc,
            scale: (sx * sy).sqrt(),
        })
    }

    fn eval(&self, perm: &[usize]) -> f64 {
        let dot: f64 = self.xc.iter().zip(perm).map(|(a, &j)| a * self.yc[j]).sum();
        dot / self.scale
    }
}

/// Calls `f` on every permutation of `items` (Heap's algorithm).
fn for_each_permutation(items: &mut [usize], mut f: impl FnMut(&[usize])) {
    let n = items.len();
    let mut c = vec![0usize; n];
    f(items);
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                items.swap(0, i);
            } else {
                items.swap(c[i], i);
            }
            f(items);
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
}

fn count_exact(corr: &PermutedCorr, n: usize, cutoff: f64) -> (u64, u64) {
    // one block per choice of the first index; counts are summed, so the
    // result does not depend on scheduling
    (0..n)
        .into_par_iter()
        .map(|first| {
            let mut rest: Vec<usize> = (0..n).filter(|&j| j != first).collect();
            let mut perm = vec![0usize; n];
            perm[0] = first;
            let (mut hits, mut total) = (0u64, 0u64);
            for_each_permutation(&mut rest, |tail| {
                perm[1..].copy_from_slice(tail);
                total += 1;
                if corr.eval(&perm).abs() >= cutoff {
                    hits += 1;
                }
            });
            (hits, total)
        })
        .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1))
}

fn count_monte_carlo(corr: &PermutedCorr, n: usize, cutoff: f64, cfg: &PermutationConfig) -> u64 {
    // draw 0 is the identity; draw k uses its own ChaCha stream, so the
    // sequence is independent of the thread count
    let random_hits = (1..cfg.mc_draws as u64)
        .into_par_iter()
        .filter(|&k| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
            rng.set_stream(k);
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut rng);
            corr.eval(&perm).abs() >= cutoff
        })
        .count() as u64;
    1 + random_hits
}

/// Two-sided permutation test of Pearson or Spearman correlation.
///
/// For `n <= max_exact_n` every permutation of `y` is enumerated and
/// `p = #{|r_perm| >= |r_obs|} / n!`, identity included. Larger samples fall
/// back to `mc_draws` seeded random permutations with the identity forced in.
pub fn exact_permutation_corr(
    x: &[f64],
    y: &[f64],
    kind: CorrKind,
    cfg: &PermutationConfig,
) -> Result<StatResult> {
    check_pair(x, y)?;
    let (xs, ys, test) = match kind {
        CorrKind::Pearson => (x.to_vec(), y.to_vec(), TestKind::PermPearson),
        CorrKind::Spearman => (average_ranks(x), average_ranks(y), TestKind::PermSpearman),
    };
    let corr = PermutedCorr::new(&xs, &ys)?;
    let n = x.len();
    let identity: Vec<usize> = (0..n).collect();
    let observed = corr.eval(&identity).clamp(-1.0, 1.0);
    let cutoff = observed.abs() - PERMUTATION_TIE_TOLERANCE;

    let exact = n <= cfg.max_exact_n;
    let p = if exact {
        let (hits, total) = count_exact(&corr, n, cutoff);
        hits as f64 / total as f64
    } else {
        let draws = cfg.mc_draws.max(1);
        count_monte_carlo(&corr, n, cutoff, cfg) as f64 / draws as f64
    };
    Ok(StatResult {
        test,
        statistic: observed,
        p_value: Some(p),
        df: None,
        effect_size: None,
        n: vec![n],
        exact,
    })
}
