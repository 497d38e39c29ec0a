//! Exact small-system ground truth.
//!
//! Three layers, all computed by direct linear algebra with no sampling:
//! the subset chain of IDLA (one settlement distribution per subset, hence
//! the exact law of every filling time), the full ARW transition operator
//! on stable configurations for tiny systems, and the spectral and
//! distance-profile quantities of that operator.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::arw::SelectionRule;
use crate::error::{Error, Result};
use crate::idla::OccupiedSet;
use crate::network::Network;

/// Default cap on sites for the subset chain (2^n states).
pub const DEFAULT_SUBSET_CAP: usize = 14;
/// Cap on sites for the exact transition operator (stabilization space).
pub const OPERATOR_SITE_CAP: usize = 4;
/// Eigenvalues within this distance of 1 are treated as the unit eigenvalue
/// when extracting the second-largest modulus.
pub const UNIT_EIGEN_TOL: f64 = 1e-9;

/// One-step law of the IDLA subset chain: for every subset `S`, the
/// distribution `q_S` of the settlement site of a fresh walk (deficit mass
/// is the self-loop: the walk died inside `S`).
#[derive(Debug, Clone)]
pub struct SubsetKernel {
    n: usize,
    /// `q[mask]` lists `(site, probability)` for sites outside the mask.
    q: Vec<Vec<(usize, f64)>>,
    self_loop: Vec<f64>,
}

impl SubsetKernel {
    pub fn site_count(&self) -> usize {
        self.n
    }

    pub fn settlement(&self, mask: u32) -> &[(usize, f64)] {
        &self.q[mask as usize]
    }

    pub fn self_loop(&self, mask: u32) -> f64 {
        self.self_loop[mask as usize]
    }
}

/// Build the subset kernel by one absorbing solve per subset:
/// `q_S(y) = nu(y) 1[y not in S] + sum_{x in S} nu(x) A_S(x, y)` where
/// `A_S` solves `(I - K[S]) A_S = K[S, S^c]`.
pub fn subset_kernel(net: &Network) -> Result<SubsetKernel> {
    subset_kernel_with_cap(net, DEFAULT_SUBSET_CAP)
}

pub fn subset_kernel_with_cap(net: &Network, cap: usize) -> Result<SubsetKernel> {
    let n = net.len();
    if n > cap || n > 32 {
        return Err(Error::Capacity {
            what: "subset chain",
            limit: cap.min(32),
            got: n,
        });
    }
    let size = 1usize << n;
    let mut q = vec![Vec::new(); size];
    let mut self_loop = vec![0.0; size];
    for mask in 0..size as u32 {
        let inside: Vec<usize> = (0..n).filter(|&x| mask & (1 << x) != 0).collect();
        let outside: Vec<usize> = (0..n).filter(|&x| mask & (1 << x) == 0).collect();
        let mut dist = vec![0.0; n];
        for &y in &outside {
            dist[y] += net.nu()[y];
        }
        if !inside.is_empty() && !outside.is_empty() {
            let m = inside.len();
            // (I - K[S]) h_y = K[S, {y}] for each exit y, solved jointly.
            let mut sys = DMatrix::<f64>::identity(m, m);
            let mut rhs = DMatrix::<f64>::zeros(m, outside.len());
            for (i, &x) in inside.iter().enumerate() {
                for (z, w) in net.row(x) {
                    if mask & (1 << z) != 0 {
                        let j = inside.binary_search(&z).expect("inside");
                        sys[(i, j)] -= w;
                    } else {
                        let j = outside.binary_search(&z).expect("outside");
                        rhs[(i, j)] += w;
                    }
                }
            }
            let exit = sys
                .lu()
                .solve(&rhs)
                .ok_or_else(|| Error::Degenerate("subset absorbing system singular".into()))?;
            for (i, &x) in inside.iter().enumerate() {
                let nux = net.nu()[x];
                for (j, &y) in outside.iter().enumerate() {
                    dist[y] += nux * exit[(i, j)];
                }
            }
        }
        let mut total = 0.0;
        let entries: Vec<(usize, f64)> = outside
            .iter()
            .map(|&y| {
                total += dist[y];
                (y, dist[y])
            })
            .collect();
        q[mask as usize] = entries;
        self_loop[mask as usize] = (1.0 - total).max(0.0);
    }
    Ok(SubsetKernel {
        n,
        q,
        self_loop,
    })
}

/// Exact law of a filling time `T^A`.
#[derive(Debug, Clone, Serialize)]
pub struct FillingLaw {
    /// `survival[t] = P(T^A > t)` for `t = 0..=t_max`.
    pub survival: Vec<f64>,
    /// `E[T^A]`.
    pub mean: f64,
    /// `Var(T^A)`.
    pub variance: f64,
}

impl FillingLaw {
    /// Exact `t_sep(eps) = inf{t : P(T > t) <= eps}` read off the curve.
    pub fn t_sep(&self, eps: f64) -> Option<u64> {
        self.survival.iter().position(|&s| s <= eps).map(|t| t as u64)
    }
}

/// Mean and variance of `T^A` for every subset `A` at once, by backward
/// recursion over the subset lattice (exact; self-loops handled in closed
/// form).
pub fn filling_moments(kernel: &SubsetKernel) -> (Vec<f64>, Vec<f64>) {
    let n = kernel.n;
    let size = 1usize << n;
    let full = size - 1;
    let mut mean = vec![0.0; size];
    let mut second = vec![0.0; size];
    // Visit masks in decreasing popcount order so successors are done first.
    let mut order: Vec<u32> = (0..size as u32).collect();
    order.sort_by_key(|m| std::cmp::Reverse(m.count_ones()));
    for &mask in &order {
        if mask as usize == full {
            continue;
        }
        let stay = kernel.self_loop(mask);
        let escape = 1.0 - stay;
        let mut h = 0.0;
        let mut m2 = 0.0;
        for &(y, p) in kernel.settlement(mask) {
            let next = mask | (1 << y);
            h += p * mean[next as usize];
            m2 += p * second[next as usize];
        }
        // T = 1 + T' where T' restarts from S on a self-loop, so
        //   h(S) (1 - stay) = 1 + sum_y q(y) h(S + y)
        //   E[T^2] (1 - stay) = 1 + 2 (stay h(S) + h) + m2.
        let h_s = (1.0 + h) / escape;
        mean[mask as usize] = h_s;
        second[mask as usize] = (1.0 + 2.0 * (stay * h_s + h) + m2) / escape;
    }
    let variance: Vec<f64> = (0..size)
        .map(|m| (second[m] - mean[m] * mean[m]).max(0.0))
        .collect();
    (mean, variance)
}

/// Exact survival curve, mean and variance of `T^A`.
pub fn filling_time_law(kernel: &SubsetKernel, a: &OccupiedSet, t_max: u64) -> Result<FillingLaw> {
    let n = kernel.n;
    assert_eq!(a.universe(), n);
    let size = 1usize << n;
    let full = (size - 1) as u32;
    let start = a.mask();
    let mut dist = vec![0.0; size];
    dist[start as usize] = 1.0;
    let mut survival = Vec::with_capacity(t_max as usize + 1);
    survival.push(1.0 - dist[full as usize]);
    for _ in 0..t_max {
        dist = subset_step(kernel, &dist);
        survival.push((1.0 - dist[full as usize]).max(0.0));
    }
    let (mean, variance) = filling_moments(kernel);
    Ok(FillingLaw {
        survival,
        mean: mean[start as usize],
        variance: variance[start as usize],
    })
}

fn subset_step(kernel: &SubsetKernel, dist: &[f64]) -> Vec<f64> {
    let size = dist.len();
    let mut next = vec![0.0; size];
    for mask in 0..size {
        let w = dist[mask];
        if w == 0.0 {
            continue;
        }
        next[mask] += w * kernel.self_loop[mask];
        for &(y, p) in &kernel.q[mask] {
            next[mask | (1 << y)] += w * p;
        }
    }
    next
}

/// Exact separation mixing time from the subset chain: smallest `t` with
/// `P(T^A > t) <= eps`.
pub fn exact_t_sep(kernel: &SubsetKernel, a: &OccupiedSet, eps: f64) -> Result<u64> {
    let n = kernel.n;
    let size = 1usize << n;
    let full = size - 1;
    let mut dist = vec![0.0; size];
    dist[a.mask() as usize] = 1.0;
    let cap = 100_000_000u64;
    let mut t = 0u64;
    loop {
        if 1.0 - dist[full] <= eps {
            return Ok(t);
        }
        if t >= cap {
            return Err(Error::NoConvergence(format!(
                "survival still above {eps} after {cap} subset-chain steps"
            )));
        }
        dist = subset_step(kernel, &dist);
        t += 1;
    }
}

// ---------------------------------------------------------------------------
// Exact ARW transition operator
// ---------------------------------------------------------------------------

/// Site states of the stabilization space, encoded as small integers:
/// 0 = empty, 1 = sleeping, k + 1 = k active particles.
type Config = Vec<u8>;

fn is_stable(c: &Config) -> bool {
    c.iter().all(|&s| s <= 1)
}

fn stable_index(c: &Config) -> usize {
    let mut idx = 0usize;
    for (x, &s) in c.iter().enumerate() {
        if s == 1 {
            idx |= 1 << x;
        }
    }
    idx
}

fn active_sites(c: &Config) -> impl Iterator<Item = usize> + '_ {
    c.iter().enumerate().filter(|(_, &s)| s >= 2).map(|(x, _)| x)
}

/// Exact transition matrix of the ARW chain over the `2^n` stable
/// configurations, by enumerating the stabilization space and solving the
/// absorbing linear system under a fixed deterministic selection rule.
pub fn exact_transition_operator(
    net: &Network,
    lambda: f64,
    rule: SelectionRule,
) -> Result<DMatrix<f64>> {
    let n = net.len();
    if n > OPERATOR_SITE_CAP {
        return Err(Error::Capacity {
            what: "exact transition operator",
            limit: OPERATOR_SITE_CAP,
            got: n,
        });
    }
    if !(lambda > 0.0) {
        return Err(Error::Parameter(format!("lambda must be positive, got {lambda}")));
    }
    let pick = |c: &Config| -> usize {
        match rule {
            SelectionRule::LowestIndex => active_sites(c).next().expect("unstable config"),
            SelectionRule::HighestIndex => active_sites(c).last().expect("unstable config"),
            SelectionRule::Random => {
                unreachable!("exact operator requires a deterministic rule")
            }
        }
    };
    if matches!(rule, SelectionRule::Random) {
        return Err(Error::Parameter(
            "exact operator needs a deterministic selection rule".into(),
        ));
    }

    let sleep_prob = lambda / (1.0 + lambda);
    let stable_count = 1usize << n;

    // Transitions out of one unstable configuration.
    let branches = |c: &Config| -> Vec<(Config, f64)> {
        let x = pick(c);
        let actives = c[x] - 1;
        let mut out = Vec::new();
        if actives == 1 {
            // Lone particle: sleep, or take a kernel step.
            let mut slept = c.clone();
            slept[x] = 1;
            out.push((slept, sleep_prob));
            let move_scale = 1.0 - sleep_prob;
            for (y, w) in net.row(x) {
                let mut cfg = c.clone();
                cfg[x] = 0;
                cfg[y] = match cfg[y] {
                    0 => 2,
                    1 => 3,
                    k => k + 1,
                };
                out.push((cfg, move_scale * w));
            }
            let death = net.death(x);
            if death > 0.0 {
                let mut cfg = c.clone();
                cfg[x] = 0;
                out.push((cfg, move_scale * death));
            }
        } else {
            // Multiply occupied: sleep is disabled; one particle steps.
            for (y, w) in net.row(x) {
                let mut cfg = c.clone();
                cfg[x] = actives; // one of `actives` particles left
                if y == x {
                    cfg[x] = actives + 1;
                } else {
                    cfg[y] = match cfg[y] {
                        0 => 2,
                        1 => 3,
                        k => k + 1,
                    };
                }
                out.push((cfg, w));
            }
            let death = net.death(x);
            if death > 0.0 {
                let mut cfg = c.clone();
                cfg[x] = actives;
                out.push((cfg, death));
            }
        }
        out
    };

    // Enumerate every reachable unstable configuration from every insertion.
    let mut unstable_index: HashMap<Config, usize> = HashMap::new();
    let mut unstable: Vec<Config> = Vec::new();
    let mut stack: Vec<Config> = Vec::new();
    let intern = |c: Config,
                      unstable_index: &mut HashMap<Config, usize>,
                      unstable: &mut Vec<Config>,
                      stack: &mut Vec<Config>|
     -> usize {
        if let Some(&i) = unstable_index.get(&c) {
            i
        } else {
            let i = unstable.len();
            unstable_index.insert(c.clone(), i);
            unstable.push(c.clone());
            stack.push(c);
            i
        }
    };
    let mut start_of = vec![usize::MAX; stable_count * n];
    for eta in 0..stable_count {
        for x in 0..n {
            let mut c: Config = (0..n)
                .map(|s| if eta & (1 << s) != 0 { 1 } else { 0 })
                .collect();
            c[x] = match c[x] {
                0 => 2,
                1 => 3,
                _ => unreachable!(),
            };
            let id = intern(c, &mut unstable_index, &mut unstable, &mut stack);
            start_of[eta * n + x] = id;
        }
    }
    while let Some(c) = stack.pop() {
        for (next, _) in branches(&c) {
            if !is_stable(&next) {
                intern(next, &mut unstable_index, &mut unstable, &mut stack);
            }
        }
    }

    let u = unstable.len();
    // Absorption system (I - Q) B = R over the unstable space.
    let mut q = DMatrix::<f64>::identity(u, u);
    let mut r = DMatrix::<f64>::zeros(u, stable_count);
    for (i, c) in unstable.iter().enumerate() {
        for (next, prob) in branches(c) {
            if is_stable(&next) {
                r[(i, stable_index(&next))] += prob;
            } else {
                let j = unstable_index[&next];
                q[(i, j)] -= prob;
            }
        }
    }
    let absorb = q
        .lu()
        .solve(&r)
        .ok_or_else(|| Error::Degenerate("stabilization system singular".into()))?;

    let mut p = DMatrix::<f64>::zeros(stable_count, stable_count);
    for eta in 0..stable_count {
        for x in 0..n {
            let nux = net.nu()[x];
            if nux == 0.0 {
                continue;
            }
            let row = start_of[eta * n + x];
            for xi in 0..stable_count {
                p[(eta, xi)] += nux * absorb[(row, xi)];
            }
        }
    }
    // Row-stochasticity check.
    for eta in 0..stable_count {
        let total: f64 = (0..stable_count).map(|xi| p[(eta, xi)]).sum();
        if (total - 1.0).abs() > 1e-10 {
            return Err(Error::NoConvergence(format!(
                "operator row {eta} sums to {total}"
            )));
        }
    }
    Ok(p)
}

/// Stationary law, distance profiles and spectral quantities of a transition
/// matrix over the stable configurations.
#[derive(Debug, Clone, Serialize)]
pub struct OperatorReport {
    /// Stationary distribution.
    pub pi: Vec<f64>,
    /// `d_sep(t)` for `t = 0..=t_max`, maximized over all ordered pairs.
    pub d_sep: Vec<f64>,
    /// `d_tv(t)` for `t = 0..=t_max`, maximized over initial states.
    pub d_tv: Vec<f64>,
    /// Second-largest eigenvalue modulus.
    pub rho: f64,
    /// `1 / (1 - rho)`.
    pub t_rel_spectral: f64,
}

/// Solve `pi = pi P` exactly and sweep the distance profiles up to `t_max`.
pub fn stationary_and_profiles(p: &DMatrix<f64>, t_max: u64) -> Result<OperatorReport> {
    let m = p.nrows();
    if p.ncols() != m || m == 0 {
        return Err(Error::Domain("transition matrix must be square".into()));
    }
    for i in 0..m {
        let total: f64 = (0..m).map(|j| p[(i, j)]).sum();
        if (total - 1.0).abs() > 1e-8 {
            return Err(Error::Domain(format!(
                "row {i} sums to {total}; not a stochastic matrix"
            )));
        }
    }
    // pi (P - I) = 0 with the normalization sum(pi) = 1 replacing one column.
    let mut sys = DMatrix::<f64>::zeros(m, m);
    for i in 0..m {
        for j in 0..m {
            sys[(j, i)] = p[(i, j)] - if i == j { 1.0 } else { 0.0 };
        }
    }
    for i in 0..m {
        sys[(m - 1, i)] = 1.0;
    }
    let mut rhs = DVector::<f64>::zeros(m);
    rhs[m - 1] = 1.0;
    let pi_vec = sys
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Degenerate("stationary system singular".into()))?;
    let pi: Vec<f64> = pi_vec.iter().cloned().collect();
    for (i, &w) in pi.iter().enumerate() {
        if w <= 0.0 {
            return Err(Error::Degenerate(format!(
                "stationary mass pi[{i}] = {w}; chain not irreducible?"
            )));
        }
    }

    let mut d_sep = Vec::with_capacity(t_max as usize + 1);
    let mut d_tv = Vec::with_capacity(t_max as usize + 1);
    let mut power = DMatrix::<f64>::identity(m, m);
    for _ in 0..=t_max {
        let mut worst_sep = 0.0f64;
        let mut worst_tv = 0.0f64;
        for i in 0..m {
            let mut tv = 0.0;
            for j in 0..m {
                worst_sep = worst_sep.max(1.0 - power[(i, j)] / pi[j]);
                tv += (power[(i, j)] - pi[j]).abs();
            }
            worst_tv = worst_tv.max(0.5 * tv);
        }
        d_sep.push(worst_sep.clamp(0.0, 1.0));
        d_tv.push(worst_tv.clamp(0.0, 1.0));
        power = &power * p;
    }

    let eigen = p.clone().complex_eigenvalues();
    let mut rho = 0.0f64;
    for z in eigen.iter() {
        let dist_to_one = ((z.re - 1.0).powi(2) + z.im.powi(2)).sqrt();
        if dist_to_one > UNIT_EIGEN_TOL {
            rho = rho.max(z.norm());
        }
    }
    Ok(OperatorReport {
        pi,
        d_sep,
        d_tv,
        rho,
        t_rel_spectral: 1.0 / (1.0 - rho),
    })
}

/// Combined exact report (CLI-facing).
#[derive(Debug, Clone, Serialize)]
pub struct ExactReport {
    pub n: usize,
    /// Initial subset the filling time is measured from.
    pub initial: Vec<usize>,
    pub survival: Vec<f64>,
    pub mean: f64,
    pub variance: f64,
    /// `(eps, t_sep(eps))` pairs.
    pub t_sep: Vec<(f64, u64)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub operator: Option<OperatorReport>,
}
