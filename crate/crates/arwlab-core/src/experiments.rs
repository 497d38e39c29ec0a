//! Monte Carlo estimation at scale: empirical separation profiles from
//! replicated filling times, family sweeps over growing sizes, and the
//! Bernoulli-sum tail-bound check.
//!
//! The empirical separation distance is the survival function of the
//! filling time (replicas are independent filling runs), so everything here
//! rides on the exact identity between the two; the oracle module provides
//! the small-system ground truth the estimators are tested against.

use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{Binomial, DiscreteCDF};

use crate::error::{Error, Result};
use crate::greens;
use crate::idla::OccupiedSet;
use crate::linalg::SubsetTransposeLu;
use crate::network::{generate, BaseGraph, GeneratorSpec, InsertionRule, Network};
use crate::sampler::{draw_birth, draw_step, SimStream, StreamFamily, DEFAULT_STEP_CAP};

/// Default precision grid for separation mixing-time estimates.
pub const DEFAULT_EPS: [f64; 5] = [0.05, 0.25, 0.5, 0.75, 0.95];

/// Replica counts by system size: heavy sampling is affordable on small
/// systems only.
pub fn default_replicas(n: usize) -> u64 {
    if n <= 1_000 {
        100_000
    } else if n < 10_000 {
        10_000
    } else {
        2_000
    }
}

/// Largest kernel bandwidth for which the settlement-law acceleration is
/// available.
const ACCEL_MAX_BANDWIDTH: usize = 64;
/// Honest walk-stepping budget per coverage stage before a replica switches
/// to exact settlement-law sampling.
const STAGE_STEP_BUDGET_FACTOR: u64 = 8;

/// Exact settlement distribution of a fresh walk given the occupied set:
/// `q_S(y) = nu(y) 1[y not in S] + sum_{x in S} (nu^T (I - K[S])^{-1})(x) K(x, y)`,
/// with the deficit being the probability of dying inside `S`.
struct SettlementLaw {
    sites: Vec<u32>,
    cum: Vec<f64>,
}

impl SettlementLaw {
    /// Law of the settlement site weighted by `start` over the occupied
    /// part (`start` is `nu` for a fresh walk, or a point mass for a walk
    /// interrupted mid-flight).
    fn build(
        net: &Network,
        occupied: &OccupiedSet,
        lu: &SubsetTransposeLu,
        start_inside: &[f64],
        start_outside_mass: impl Fn(usize) -> f64,
    ) -> Self {
        let weights = lu.solve(start_inside);
        let n = net.len();
        let mut q = vec![0.0f64; n];
        for (pos, &x) in lu.kept().iter().enumerate() {
            let w = weights[pos];
            if w != 0.0 {
                for (y, k) in net.row(x as usize) {
                    if !occupied.contains(y) {
                        q[y] += w * k;
                    }
                }
            }
        }
        let mut sites = Vec::new();
        let mut cum = Vec::new();
        let mut acc = 0.0;
        for y in 0..n {
            let mass = q[y] + start_outside_mass(y);
            if mass > 0.0 && !occupied.contains(y) {
                acc += mass;
                sites.push(y as u32);
                cum.push(acc);
            }
        }
        SettlementLaw { sites, cum }
    }

    fn draw(&self, rng: &mut SimStream) -> Option<usize> {
        let u = rng.next_f64();
        let i = self.cum.partition_point(|&c| c <= u);
        (i < self.cum.len()).then(|| self.sites[i] as usize)
    }
}

fn settlement_factor(net: &Network, occupied: &OccupiedSet) -> Result<SubsetTransposeLu> {
    let kept: Vec<u32> = occupied.indices().iter().map(|&x| x as u32).collect();
    SubsetTransposeLu::factor(net, kept)
}

fn nu_law(net: &Network, occupied: &OccupiedSet, lu: &SubsetTransposeLu) -> SettlementLaw {
    let start: Vec<f64> = lu.kept().iter().map(|&x| net.nu()[x as usize]).collect();
    SettlementLaw::build(net, occupied, lu, &start, |y| net.nu()[y])
}

/// One filling time, sharing the law (and the walk streams) of the literal
/// walk-scanning run. Honest per-step simulation is used while stages are
/// cheap; once a coverage stage exceeds its step budget on a narrow-band
/// kernel, the replica finishes by drawing each walk's settlement site from
/// the exact per-subset law (one categorical draw per walk, one banded
/// transpose solve per fill), which is the same absorbing algebra the
/// subset-chain oracle uses. Both modes are exact, so the sampled filling
/// law is unchanged; only the number of stream draws consumed differs.
fn filling_time_accelerated(net: &Network, streams: StreamFamily) -> Result<u64> {
    let n = net.len();
    let budget = STAGE_STEP_BUDGET_FACTOR * n as u64 + 10_000;
    filling_time_with_budget(net, streams, budget)
}

fn filling_time_with_budget(net: &Network, streams: StreamFamily, budget: u64) -> Result<u64> {
    let n = net.len();
    let can_accelerate = net.bandwidth() <= ACCEL_MAX_BANDWIDTH;
    let mut set = OccupiedSet::empty(n);
    let mut t = 0u64;
    let mut chain: Option<SettlementLaw> = None;
    let mut stage_steps = 0u64;
    while !set.is_full() {
        t += 1;
        let mut rng = streams.walk(t).stream();
        if let Some(law) = &chain {
            if let Some(site) = law.draw(&mut rng) {
                set.insert(site);
                if !set.is_full() {
                    let lu = settlement_factor(net, &set)?;
                    chain = Some(nu_law(net, &set, &lu));
                }
            }
            continue;
        }
        // Honest mode: scan the walk site by site.
        let mut at = draw_birth(net, &mut rng);
        if set.insert(at) {
            stage_steps = 0;
            continue;
        }
        let mut walk_steps = 0u64;
        loop {
            match draw_step(net, at, &mut rng) {
                None => break,
                Some(next) => {
                    at = next;
                    walk_steps += 1;
                    stage_steps += 1;
                    if walk_steps > DEFAULT_STEP_CAP {
                        return Err(Error::Runaway {
                            cap: DEFAULT_STEP_CAP,
                        });
                    }
                    if set.insert(at) {
                        stage_steps = 0;
                        break;
                    }
                    if stage_steps > budget && can_accelerate {
                        // Finish this walk from its current position by the
                        // conditional settlement law, then stay in chain
                        // mode for the rest of the replica.
                        let lu = settlement_factor(net, &set)?;
                        let pos = lu
                            .position_of(at)
                            .expect("interrupted walk sits inside the occupied set");
                        let mut point = vec![0.0; lu.kept().len()];
                        point[pos] = 1.0;
                        let law = SettlementLaw::build(net, &set, &lu, &point, |_| 0.0);
                        if let Some(site) = law.draw(&mut rng) {
                            set.insert(site);
                        }
                        if !set.is_full() {
                            let lu = settlement_factor(net, &set)?;
                            chain = Some(nu_law(net, &set, &lu));
                        }
                        break;
                    }
                }
            }
        }
    }
    Ok(t)
}

/// One separation mixing-time estimate with its two-sided 99% confidence
/// interval from binomial order statistics.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct TsepEstimate {
    pub eps: f64,
    pub t: u64,
    pub ci_low: u64,
    pub ci_high: u64,
}

/// Empirical filling-time law from independent replicas.
#[derive(Debug, Clone, Serialize)]
pub struct SurvivalEstimate {
    /// Sorted sample of filling times.
    pub samples_sorted: Vec<u64>,
    /// `survival[t]` = fraction of samples strictly greater than `t`.
    pub survival: Vec<f64>,
    pub t_sep: Vec<TsepEstimate>,
    pub mean: f64,
    /// Unbiased sample variance.
    pub variance: f64,
    pub seed: u64,
    pub replicas: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

impl SurvivalEstimate {
    pub fn t_sep_at(&self, eps: f64) -> Option<&TsepEstimate> {
        self.t_sep
            .iter()
            .find(|e| (e.eps - eps).abs() < 1e-12)
    }
}

/// Smallest `t` with empirical survival at most `eps`: the
/// `ceil((1 - eps) R)`-th order statistic.
fn empirical_t_sep(sorted: &[u64], eps: f64) -> u64 {
    let r = sorted.len() as f64;
    let k = ((1.0 - eps) * r).ceil().max(1.0) as usize;
    sorted[k.min(sorted.len()) - 1]
}

/// Two-sided 99% confidence ranks for the `q`-quantile of `r` samples, by
/// exact binomial tail inversion (1-indexed, clamped).
fn quantile_rank_ci(r: u64, q: f64) -> (u64, u64) {
    let bin = Binomial::new(q, r).expect("valid binomial");
    // Largest l with P(Bin < l) <= 0.005.
    let mut lo = 0u64;
    let mut hi = r;
    while lo < hi {
        let mid = (lo + hi + 1) / 2;
        if mid == 0 || bin.cdf(mid - 1) <= 0.005 {
            lo = mid;
        } else {
            hi = mid - 1;
        }
    }
    let l = lo.max(1);
    // Smallest u with P(Bin < u) >= 0.995.
    let mut lo2 = 1u64;
    let mut hi2 = r;
    while lo2 < hi2 {
        let mid = (lo2 + hi2) / 2;
        if bin.cdf(mid - 1) >= 0.995 {
            hi2 = mid;
        } else {
            lo2 = mid + 1;
        }
    }
    (l, lo2.max(l))
}

/// Estimate the survival curve of the filling time from `replicas`
/// independent runs started at the empty set. Replica `r` draws its walks
/// from index range `r * 2^32`, so results are a pure function of
/// `(net, seed, replicas)` no matter how many workers run.
pub fn estimate_survival(
    net: &crate::network::Network,
    seed: u64,
    replicas: u64,
    eps_list: &[f64],
) -> Result<SurvivalEstimate> {
    if replicas == 0 {
        return Err(Error::Parameter("at least one replica required".into()));
    }
    for &eps in eps_list {
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::Parameter(format!("eps {eps} outside (0, 1)")));
        }
    }
    let samples: Vec<u64> = (0..replicas)
        .into_par_iter()
        .map(|r| filling_time_accelerated(net, StreamFamily::replica(seed, r)))
        .collect::<Result<Vec<u64>>>()?;

    // Deterministic reduction order: replica index order.
    let mean = samples.iter().map(|&t| t as f64).sum::<f64>() / replicas as f64;
    let variance = if replicas > 1 {
        samples
            .iter()
            .map(|&t| {
                let d = t as f64 - mean;
                d * d
            })
            .sum::<f64>()
            / (replicas - 1) as f64
    } else {
        0.0
    };

    let mut sorted = samples;
    sorted.sort_unstable();
    let max_t = *sorted.last().unwrap();
    let mut survival = Vec::with_capacity(max_t as usize + 1);
    let mut idx = 0usize;
    for t in 0..=max_t {
        while idx < sorted.len() && sorted[idx] <= t {
            idx += 1;
        }
        survival.push((sorted.len() - idx) as f64 / replicas as f64);
    }

    let t_sep = eps_list
        .iter()
        .map(|&eps| {
            let (l, u) = quantile_rank_ci(replicas, 1.0 - eps);
            TsepEstimate {
                eps,
                t: empirical_t_sep(&sorted, eps),
                ci_low: sorted[(l - 1) as usize],
                ci_high: sorted[(u - 1) as usize],
            }
        })
        .collect();

    let warning =
        (replicas < 100).then(|| format!("only {replicas} replicas; estimates are coarse"));
    Ok(SurvivalEstimate {
        samples_sorted: sorted,
        survival,
        t_sep,
        mean,
        variance,
        seed,
        replicas,
        warning,
    })
}

// ---------------------------------------------------------------------------
// Family sweeps
// ---------------------------------------------------------------------------

/// Families a sweep can range over. The size parameter is the cycle length
/// (wheel), the retained-site count (transitive-minus-vertex), the squared
/// radius (euclidean-ball) or the depth (tree-ball).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepFamily {
    Wheel,
    TransitiveCycle,
    TransitiveComplete,
    EuclideanBall { d: usize },
    TreeBall { degree: usize },
}

impl SweepFamily {
    pub fn spec(&self, size: usize) -> GeneratorSpec {
        let insertion = InsertionRule::Uniform;
        match *self {
            SweepFamily::Wheel => GeneratorSpec::Wheel { n: size, insertion },
            SweepFamily::TransitiveCycle => GeneratorSpec::TransitiveMinusVertex {
                base: BaseGraph::Cycle,
                n: size,
                insertion,
            },
            SweepFamily::TransitiveComplete => GeneratorSpec::TransitiveMinusVertex {
                base: BaseGraph::Complete,
                n: size,
                insertion,
            },
            SweepFamily::EuclideanBall { d } => GeneratorSpec::EuclideanBall {
                d,
                r: size,
                insertion,
            },
            SweepFamily::TreeBall { degree } => GeneratorSpec::TreeBall {
                degree,
                depth: size,
                insertion,
            },
        }
    }

    pub fn name(&self) -> String {
        match *self {
            SweepFamily::Wheel => "wheel".into(),
            SweepFamily::TransitiveCycle => "trans-cycle".into(),
            SweepFamily::TransitiveComplete => "trans-complete".into(),
            SweepFamily::EuclideanBall { d } => format!("ball-d{d}"),
            SweepFamily::TreeBall { degree } => format!("tree-{degree}"),
        }
    }
}

/// Sweep request.
#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub family: SweepFamily,
    pub sizes: Vec<usize>,
    pub lambda: f64,
    pub seed: u64,
    /// Override the size-dependent default replica count.
    pub replicas: Option<u64>,
    pub eps: Vec<f64>,
}

/// One sweep measurement: exact statistics next to the empirical profile.
/// `lambda` is recorded for provenance; the separation profile itself does
/// not depend on it.
#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub family: String,
    pub size: usize,
    pub n: usize,
    pub lambda: f64,
    pub tsep50: u64,
    pub tsep50_lo: u64,
    pub tsep50_hi: u64,
    pub tsep05: u64,
    pub tsep25: u64,
    pub tsep75: u64,
    pub tsep95: u64,
    /// `tsep05 - tsep95`: the measured mixing window.
    pub window: u64,
    pub t_rel: f64,
    pub cal_l: f64,
    pub cal_r: f64,
    pub tsep_lower: f64,
    pub tsep_upper: f64,
    pub mean: f64,
    pub variance: f64,
    pub runtime_s: f64,
    pub seed: u64,
    pub replicas: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Run the sweep; a per-size failure is recorded in its row and the sweep
/// continues.
pub fn cutoff_sweep(config: &SweepConfig) -> Vec<SweepRow> {
    config
        .sizes
        .iter()
        .map(|&size| match sweep_one(config, size) {
            Ok(row) => row,
            Err(e) => SweepRow {
                family: config.family.name(),
                size,
                n: 0,
                lambda: config.lambda,
                tsep50: 0,
                tsep50_lo: 0,
                tsep50_hi: 0,
                tsep05: 0,
                tsep25: 0,
                tsep75: 0,
                tsep95: 0,
                window: 0,
                t_rel: f64::NAN,
                cal_l: f64::NAN,
                cal_r: f64::NAN,
                tsep_lower: f64::NAN,
                tsep_upper: f64::NAN,
                mean: f64::NAN,
                variance: f64::NAN,
                runtime_s: 0.0,
                seed: config.seed,
                replicas: 0,
                error: Some(e.to_string()),
            },
        })
        .collect()
}

fn sweep_one(config: &SweepConfig, size: usize) -> Result<SweepRow> {
    let start = std::time::Instant::now();
    let net = generate(&config.family.spec(size))?;
    let stats = greens::statistics(&net)?;
    let replicas = config
        .replicas
        .unwrap_or_else(|| default_replicas(net.len()));
    let eps: Vec<f64> = if config.eps.is_empty() {
        DEFAULT_EPS.to_vec()
    } else {
        config.eps.clone()
    };
    let estimate = estimate_survival(&net, config.seed, replicas, &eps)?;
    let grab = |eps: f64| -> Result<TsepEstimate> {
        estimate
            .t_sep_at(eps)
            .copied()
            .ok_or_else(|| Error::Parameter(format!("eps {eps} missing from the grid")))
    };
    let t50 = grab(0.5)?;
    let t05 = grab(0.05)?;
    let t25 = grab(0.25)?;
    let t75 = grab(0.75)?;
    let t95 = grab(0.95)?;
    Ok(SweepRow {
        family: config.family.name(),
        size,
        n: net.len(),
        lambda: config.lambda,
        tsep50: t50.t,
        tsep50_lo: t50.ci_low,
        tsep50_hi: t50.ci_high,
        tsep05: t05.t,
        tsep25: t25.t,
        tsep75: t75.t,
        tsep95: t95.t,
        window: t05.t.saturating_sub(t95.t),
        t_rel: stats.t_rel,
        cal_l: stats.cal_l,
        cal_r: stats.cal_r,
        tsep_lower: stats.tsep_lower,
        tsep_upper: stats.tsep_upper,
        mean: estimate.mean,
        variance: estimate.variance,
        runtime_s: start.elapsed().as_secs_f64(),
        seed: config.seed,
        replicas,
        error: None,
    })
}

// ---------------------------------------------------------------------------
// Bernoulli-sum tail bound
// ---------------------------------------------------------------------------

/// Outcome of the unexpected-win check.
#[derive(Debug, Clone, Serialize)]
pub struct WinReport {
    pub mean_u: f64,
    pub mean_v: f64,
    pub trials: u64,
    pub empirical: f64,
    /// `2 exp(-(sqrt(v) - sqrt(u))^2 / (1 + sqrt 2))`.
    pub bound: f64,
    pub sigma: f64,
    pub passed: bool,
}

/// Estimate `P(V <= U)` for independent Bernoulli(1/2) sums `U`, `V` with
/// the given means (so the array lengths are `2u` and `2v`), and compare
/// against the exponential bound. Passes when the empirical frequency stays
/// within four standard errors of the bound.
pub fn check_win_inequality(
    mean_u: f64,
    mean_v: f64,
    trials: u64,
    seed: u64,
) -> Result<WinReport> {
    if !(mean_u >= 0.0) || !(mean_v >= 0.0) || mean_u > mean_v {
        return Err(Error::Domain(format!(
            "means must satisfy 0 <= u <= v, got ({mean_u}, {mean_v})"
        )));
    }
    let len_u = (2.0 * mean_u).round();
    let len_v = (2.0 * mean_v).round();
    if (len_u - 2.0 * mean_u).abs() > 1e-9 || (len_v - 2.0 * mean_v).abs() > 1e-9 {
        return Err(Error::Parameter(
            "means must be half-integers for the Bernoulli(1/2) construction".into(),
        ));
    }
    let (len_u, len_v) = (len_u as u64, len_v as u64);
    if trials == 0 {
        return Err(Error::Parameter("at least one trial required".into()));
    }
    let wins: u64 = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = SimStream::new(seed, i);
            let u = bernoulli_half_sum(&mut rng, len_u);
            let v = bernoulli_half_sum(&mut rng, len_v);
            (v <= u) as u64
        })
        .sum();
    let empirical = wins as f64 / trials as f64;
    let u = len_u as f64 / 2.0;
    let v = len_v as f64 / 2.0;
    let bound = 2.0 * (-(v.sqrt() - u.sqrt()).powi(2) / (1.0 + std::f64::consts::SQRT_2)).exp();
    let b = bound.min(1.0);
    let sigma = (b * (1.0 - b) / trials as f64).sqrt();
    let passed = empirical <= bound + 4.0 * sigma;
    Ok(WinReport {
        mean_u: u,
        mean_v: v,
        trials,
        empirical,
        bound,
        sigma,
        passed,
    })
}

/// Sum of `len` fair coin flips via popcounts.
#[inline]
fn bernoulli_half_sum(rng: &mut SimStream, len: u64) -> u32 {
    let mut total = 0u32;
    let mut left = len;
    while left >= 64 {
        total += rng.next_u64().count_ones();
        left -= 64;
    }
    if left > 0 {
        let mask = (1u64 << left) - 1;
        total += (rng.next_u64() & mask).count_ones();
    }
    total
}
