//! Exact linear-algebra layer: the Green's function `G = (I - K)^{-1}` of
//! expected visit counts, hitting probabilities, and the closed-form mixing
//! statistics built from them.
//!
//! Hitting probabilities are computed from one factorization through the
//! strong-Markov ratio `P_nu(hit x before death) = (nu^T G)(x) / G(x, x)`,
//! which holds for every sub-stochastic kernel (each visit to `x` begins an
//! excursion with expected self-visit count `G(x, x)`). The per-target
//! absorbing solve is kept as [`absorbing_hit_probability`] and serves as an
//! independent cross-check in the test suites.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::idla::OccupiedSet;
use crate::linalg::KernelSolver;
use crate::network::{validate, Network};

/// Largest system for which the dense Green matrix is materialized.
pub const GREEN_DENSE_CAP: usize = 4000;

/// Hitting probabilities whose difference from the minimum is within this
/// tolerance are reported as ties in the argmin set.
pub const TIE_TOL: f64 = 1e-12;

/// Dense matrix of expected visit counts `G(x, y) = E_x[# visits to y]`.
#[derive(Debug, Clone)]
pub struct GreenMatrix {
    matrix: DMatrix<f64>,
}

impl GreenMatrix {
    pub fn entry(&self, x: usize, y: usize) -> f64 {
        self.matrix[(x, y)]
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Expected life-time from each start: row sums `E_x[tau] = (G 1)(x)`,
    /// counting the birth visit and every later visit.
    pub fn expected_lifetimes(&self) -> Vec<f64> {
        let n = self.matrix.nrows();
        (0..n)
            .map(|x| (0..n).map(|y| self.matrix[(x, y)]).sum())
            .collect()
    }
}

/// Compute `G = (I - K)^{-1}` by direct factorization. The residual
/// `(I - K) G - I` is checked against 1e-10.
pub fn green_function(net: &Network) -> Result<GreenMatrix> {
    let n = net.len();
    if n > GREEN_DENSE_CAP {
        return Err(Error::Capacity {
            what: "dense Green matrix",
            limit: GREEN_DENSE_CAP,
            got: n,
        });
    }
    let matrix = crate::linalg::dense_inverse(net)?;
    Ok(GreenMatrix { matrix })
}

/// Hitting probabilities `p(x) = P_nu(tau_x < tau_death)` for every site,
/// computed exactly from one kernel factorization.
pub fn hitting_probabilities(net: &Network) -> Result<Vec<f64>> {
    let solver = KernelSolver::new(net)?;
    hitting_with(net, &solver, net.nu())
}

fn hitting_with(net: &Network, solver: &KernelSolver, start: &[f64]) -> Result<Vec<f64>> {
    let n = net.len();
    let weighted = solver.solve_t(start)?; // (start^T G)(x)
    let diag = solver.diag_inverse(n)?;
    let mut p = Vec::with_capacity(n);
    for x in 0..n {
        let v = weighted[x] / diag[x];
        p.push(v.min(1.0));
    }
    Ok(p)
}

/// Per-target absorbing solve: make `x` absorbing, solve
/// `h(y) = sum_z K(y, z) h(z)` for `y != x` with `h(x) = 1`, and return
/// `nu . h`. Exponentially clearer but quadratically more expensive than the
/// ratio route; retained as the independent second route.
pub fn absorbing_hit_probability(net: &Network, target: usize) -> Result<f64> {
    let n = net.len();
    if target >= n {
        return Err(Error::Domain(format!("target {target} out of range")));
    }
    if n > GREEN_DENSE_CAP {
        return Err(Error::Capacity {
            what: "absorbing solve",
            limit: GREEN_DENSE_CAP,
            got: n,
        });
    }
    let others: Vec<usize> = (0..n).filter(|&y| y != target).collect();
    let m = others.len();
    let mut a = DMatrix::<f64>::identity(m, m);
    let mut rhs = nalgebra::DVector::<f64>::zeros(m);
    for (i, &y) in others.iter().enumerate() {
        for (z, w) in net.row(y) {
            if z == target {
                rhs[i] += w;
            } else {
                let j = others.binary_search(&z).expect("index present");
                a[(i, j)] -= w;
            }
        }
    }
    let h = a
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Degenerate("absorbing system is singular".into()))?;
    let mut p = net.nu()[target];
    for (i, &y) in others.iter().enumerate() {
        p += net.nu()[y] * h[i];
    }
    Ok(p.min(1.0))
}

/// Exact `p(A) = P_nu(tau_A < tau_death)` with every site of `A` absorbing.
pub fn hitting_probability_set(net: &Network, a: &OccupiedSet) -> Result<f64> {
    let n = net.len();
    if a.is_empty() {
        return Err(Error::Domain("hitting probability of the empty set".into()));
    }
    assert_eq!(a.universe(), n);
    if a.is_full() {
        return Ok(1.0);
    }
    if n > GREEN_DENSE_CAP {
        return Err(Error::Capacity {
            what: "absorbing solve",
            limit: GREEN_DENSE_CAP,
            got: n,
        });
    }
    let outside: Vec<usize> = (0..n).filter(|&y| !a.contains(y)).collect();
    let m = outside.len();
    let mut sys = DMatrix::<f64>::identity(m, m);
    let mut rhs = nalgebra::DVector::<f64>::zeros(m);
    for (i, &y) in outside.iter().enumerate() {
        for (z, w) in net.row(y) {
            if a.contains(z) {
                rhs[i] += w;
            } else {
                let j = outside.binary_search(&z).expect("index present");
                sys[(i, j)] -= w;
            }
        }
    }
    let h = sys
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Degenerate("absorbing system is singular".into()))?;
    let mut p = 0.0;
    for x in a.indices() {
        p += net.nu()[x];
    }
    for (i, &y) in outside.iter().enumerate() {
        p += net.nu()[y] * h[i];
    }
    Ok(p.min(1.0))
}

/// Closed-form mixing statistics of a network.
#[derive(Debug, Clone, Serialize)]
pub struct NetworkStats {
    pub n: usize,
    /// Hitting probability of each site.
    pub p: Vec<f64>,
    /// Smallest hitting probability.
    pub p_star: f64,
    /// Every site attaining the minimum (ties within [`TIE_TOL`]).
    pub argmin: Vec<usize>,
    /// Relaxation time `1 / p_star`.
    pub t_rel: f64,
    /// Inverse mean hitting probability `n / sum_x p(x)`.
    pub cal_l: f64,
    /// `n * max_x P_U(tau_x < tau_death) / p(x)`.
    pub cal_r: f64,
    /// Expected walk life-time `E_nu[tau] = nu . (G 1)`.
    pub expected_lifetime: f64,
    /// `max(t_rel, n, L log n / 5)`.
    pub tsep_lower: f64,
    /// `(sqrt(R) + 3 sqrt(t_rel log n))^2`.
    pub tsep_upper: f64,
}

/// Compute every closed-form statistic exactly. Uses one factorization; the
/// uniform-start hitting probabilities are obtained by rerunning the ratio
/// with the uniform law, so `R = n` exactly when `nu` is uniform.
pub fn statistics(net: &Network) -> Result<NetworkStats> {
    let n = net.len();
    let solver = KernelSolver::new(net)?;
    let p = hitting_with(net, &solver, net.nu())?;
    for (x, &px) in p.iter().enumerate() {
        if !(px > 0.0) {
            return Err(Error::Degenerate(format!(
                "site {x} has hitting probability {px}; network fails validation"
            )));
        }
    }
    let p_star = p.iter().cloned().fold(f64::INFINITY, f64::min);
    let argmin: Vec<usize> = (0..n).filter(|&x| p[x] <= p_star + TIE_TOL).collect();
    let t_rel = 1.0 / p_star;
    let total: f64 = p.iter().sum();
    let cal_l = n as f64 / total;

    let uniform = vec![1.0 / n as f64; n];
    let p_uniform = if net.nu() == &uniform[..] {
        p.clone()
    } else {
        hitting_with(net, &solver, &uniform)?
    };
    let cal_r = n as f64
        * p_uniform
            .iter()
            .zip(&p)
            .map(|(&pu, &pv)| pu / pv)
            .fold(f64::NEG_INFINITY, f64::max);

    let lifetimes = solver.solve(&vec![1.0; n])?;
    let expected_lifetime: f64 = net
        .nu()
        .iter()
        .zip(&lifetimes)
        .map(|(&w, &s)| w * s)
        .sum();

    let log_n = (n as f64).ln();
    let tsep_lower = t_rel.max(n as f64).max(cal_l * log_n / 5.0);
    let tsep_upper = {
        let s = cal_r.sqrt() + 3.0 * (t_rel * log_n).sqrt();
        s * s
    };
    Ok(NetworkStats {
        n,
        p,
        p_star,
        argmin,
        t_rel,
        cal_l,
        cal_r,
        expected_lifetime,
        tsep_lower,
        tsep_upper,
    })
}

/// Max residual of the reversible identity
/// `p(x) = nu(x) E_x[tau] / G(x, x)`; `None` when detailed balance fails.
pub fn reversibility_identity_residual(net: &Network) -> Result<Option<f64>> {
    if !validate(net).reversible {
        return Ok(None);
    }
    let n = net.len();
    let solver = KernelSolver::new(net)?;
    let p = hitting_with(net, &solver, net.nu())?;
    let lifetimes = solver.solve(&vec![1.0; n])?;
    let diag = solver.diag_inverse(n)?;
    let mut worst = 0.0f64;
    for x in 0..n {
        let alt = net.nu()[x] * lifetimes[x] / diag[x];
        worst = worst.max((p[x] - alt).abs());
    }
    Ok(Some(worst))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{
        generate, random_network, two_site_symmetric, BaseGraph, GeneratorSpec, InsertionRule,
        Network,
    };
    use proptest::prelude::*;

    fn single_site() -> Network {
        Network::new(vec!["a".into()], &[], vec![1.0]).unwrap()
    }

    fn wheel(n: usize) -> Network {
        generate(&GeneratorSpec::Wheel {
            n,
            insertion: InsertionRule::Uniform,
        })
        .unwrap()
    }

    fn path3() -> Network {
        generate(&GeneratorSpec::TransitiveMinusVertex {
            base: BaseGraph::Cycle,
            n: 3,
            insertion: InsertionRule::Uniform,
        })
        .unwrap()
    }

    /// Step-truncated distribution evolution, independent of any linear
    /// solve: probability of hitting `x` before death, and expected visits
    /// to `x` from `x`, by direct summation.
    fn dp_hit_probability(net: &Network, target: usize) -> f64 {
        let n = net.len();
        let mut alive: Vec<f64> = net.nu().to_vec();
        let mut hit = alive[target];
        alive[target] = 0.0;
        for _ in 0..6000 {
            let mut next = vec![0.0; n];
            for y in 0..n {
                if alive[y] > 0.0 {
                    for (z, w) in net.row(y) {
                        next[z] += alive[y] * w;
                    }
                }
            }
            hit += next[target];
            next[target] = 0.0;
            alive = next;
            if alive.iter().sum::<f64>() < 1e-16 {
                break;
            }
        }
        hit
    }

    fn dp_green_diag(net: &Network, x: usize) -> f64 {
        let n = net.len();
        let mut dist = vec![0.0; n];
        dist[x] = 1.0;
        let mut visits = 1.0;
        for _ in 0..6000 {
            let mut next = vec![0.0; n];
            for y in 0..n {
                if dist[y] > 0.0 {
                    for (z, w) in net.row(y) {
                        next[z] += dist[y] * w;
                    }
                }
            }
            visits += next[x];
            dist = next;
            if dist.iter().sum::<f64>() < 1e-16 {
                break;
            }
        }
        visits
    }

    #[test]
    fn green_of_single_site_is_one() {
        let g = green_function(&single_site()).unwrap();
        assert_eq!(g.entry(0, 0), 1.0);
    }

    #[test]
    fn green_of_two_site_symmetric() {
        let g = green_function(&two_site_symmetric()).unwrap();
        assert!((g.entry(0, 0) - 4.0 / 3.0).abs() < 1e-12);
        assert!((g.entry(1, 1) - 4.0 / 3.0).abs() < 1e-12);
        assert!((g.entry(0, 1) - 2.0 / 3.0).abs() < 1e-12);
        assert!((g.entry(1, 0) - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn green_diag_of_wheel_three() {
        // Independent oracle: direct visit-count summation gives 3/2 for
        // each cycle site.
        let net = wheel(3);
        for x in 0..3 {
            assert!((dp_green_diag(&net, x) - 1.5).abs() < 1e-12);
        }
        let g = green_function(&net).unwrap();
        for x in 0..3 {
            assert!((g.entry(x, x) - 1.5).abs() < 1e-12);
        }
        // Row sums give expected life-times: mean 3 on the wheel.
        for lt in g.expected_lifetimes() {
            assert!((lt - 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn green_entries_nonnegative_and_diagonal_dominant() {
        for seed in 0..10 {
            let net = random_network(seed, 8);
            let g = green_function(&net).unwrap();
            for x in 0..8 {
                assert!(g.entry(x, x) >= 1.0 - 1e-12);
                for y in 0..8 {
                    assert!(g.entry(x, y) >= -1e-14);
                }
            }
        }
    }

    #[test]
    fn hitting_probability_examples() {
        let p = hitting_probabilities(&single_site()).unwrap();
        assert_eq!(p, vec![1.0]);

        let p = hitting_probabilities(&two_site_symmetric()).unwrap();
        for &v in &p {
            assert!((v - 0.75).abs() < 1e-12);
        }
        // Independent truncated-sum oracle.
        assert!((dp_hit_probability(&two_site_symmetric(), 0) - 0.75).abs() < 1e-12);

        // Cycle C_4 minus a vertex: min p = (n+1)/(2n) = 2/3 at n = 3.
        let p = hitting_probabilities(&path3()).unwrap();
        for &v in &p {
            assert!((v - 2.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn ratio_route_matches_absorbing_solves_and_dp() {
        for seed in 0..15 {
            let net = random_network(seed, 7);
            let p = hitting_probabilities(&net).unwrap();
            for x in 0..7 {
                let absorbing = absorbing_hit_probability(&net, x).unwrap();
                assert!(
                    (p[x] - absorbing).abs() < 1e-11,
                    "seed {seed} site {x}: {} vs {absorbing}",
                    p[x]
                );
                let dp = dp_hit_probability(&net, x);
                assert!((p[x] - dp).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn set_hitting_examples() {
        let net = two_site_symmetric();
        assert!((hitting_probability_set(&net, &OccupiedSet::full(2)).unwrap() - 1.0).abs() < 1e-12);
        let a = OccupiedSet::from_indices(2, &[0]);
        assert!((hitting_probability_set(&net, &a).unwrap() - 0.75).abs() < 1e-12);
        assert!(matches!(
            hitting_probability_set(&net, &OccupiedSet::empty(2)),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn set_hitting_is_consistent_with_single_sites() {
        for seed in 0..10 {
            let net = random_network(seed, 6);
            let p = hitting_probabilities(&net).unwrap();
            for x in 0..6 {
                let single = hitting_probability_set(&net, &OccupiedSet::from_indices(6, &[x]))
                    .unwrap();
                assert!((single - p[x]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn statistics_of_two_site_symmetric() {
        let s = statistics(&two_site_symmetric()).unwrap();
        assert!((s.p_star - 0.75).abs() < 1e-12);
        assert!((s.t_rel - 4.0 / 3.0).abs() < 1e-12);
        assert!((s.cal_l - 4.0 / 3.0).abs() < 1e-12);
        assert_eq!(s.cal_r, 2.0);
        assert!((s.expected_lifetime - 2.0).abs() < 1e-12);
        assert_eq!(s.argmin, vec![0, 1]);
    }

    #[test]
    fn uniform_insertion_gives_r_equal_n_exactly() {
        for seed in 0..10 {
            let n = 5 + (seed as usize % 4);
            let net = random_network(seed, n);
            let s = statistics(&net).unwrap();
            assert_eq!(s.cal_r, n as f64);
        }
    }

    #[test]
    fn transitive_minus_vertex_relaxation_time() {
        let s = statistics(&path3()).unwrap();
        assert!((s.t_rel - 1.5).abs() < 1e-12);
    }

    #[test]
    fn stats_inequalities_hold() {
        for seed in 0..20 {
            let n = 3 + (seed as usize % 7);
            let net = random_network(seed, n);
            let s = statistics(&net).unwrap();
            assert!(s.cal_l <= s.t_rel + 1e-12);
            assert!(s.t_rel <= s.cal_r + 1e-12);
            // Range inequality: sum p <= expected life-time.
            let total: f64 = s.p.iter().sum();
            assert!(total <= s.expected_lifetime + 1e-9);
            assert!(s.cal_l >= n as f64 / s.expected_lifetime - 1e-9);
            assert!(s.tsep_lower <= s.tsep_upper + 1e-9);
        }
    }

    #[test]
    fn reversibility_identity() {
        let r = reversibility_identity_residual(&two_site_symmetric()).unwrap();
        assert!(r.unwrap() < 1e-12);
        let r = reversibility_identity_residual(&single_site()).unwrap();
        assert_eq!(r.unwrap(), 0.0);
        // Deliberately non-reversible net.
        let net = Network::new(
            vec!["a".into(), "b".into()],
            &[(0, 1, 0.5), (1, 0, 0.25)],
            vec![0.5, 0.5],
        )
        .unwrap();
        assert_eq!(reversibility_identity_residual(&net).unwrap(), None);
    }

    #[test]
    fn reversible_identity_on_degree_biased_families() {
        let spec = GeneratorSpec::HostRestriction {
            adjacency: vec![vec![1], vec![0, 2], vec![1, 3], vec![2]],
            retained: vec![1, 2],
            insertion: InsertionRule::Degree,
        };
        let net = generate(&spec).unwrap();
        let r = reversibility_identity_residual(&net).unwrap().unwrap();
        assert!(r < 1e-9, "residual {r}");
    }

    #[test]
    fn banded_strategy_reproduces_the_transitive_formula_beyond_the_dense_limit() {
        let n = 2500usize;
        let path = generate(&GeneratorSpec::TransitiveMinusVertex {
            base: BaseGraph::Cycle,
            n,
            insertion: InsertionRule::Uniform,
        })
        .unwrap();
        let s = statistics(&path).unwrap();
        let expected = (n as f64 + 1.0) / (2.0 * n as f64);
        assert!((s.p_star - expected).abs() < 1e-10);
        assert_eq!(s.cal_r, n as f64);
    }

    #[test]
    fn jacobi_strategy_matches_the_truncated_sum_oracle_beyond_the_dense_limit() {
        let n = 2500usize;
        let net = wheel(n);
        let s = statistics(&net).unwrap();
        // Vertex-transitive: all hitting probabilities coincide.
        for &v in &s.p {
            assert!((v - s.p_star).abs() < 1e-11);
        }
        assert!((dp_hit_probability(&net, 0) - s.p[0]).abs() < 1e-10);
        assert_eq!(s.cal_r, n as f64);
        assert!((s.expected_lifetime - 3.0).abs() < 1e-10);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn set_hitting_monotone_and_subadditive(seed in 0u64..200, picks in proptest::collection::vec(0u8..3, 6)) {
            let net = random_network(seed, 6);
            let p = hitting_probabilities(&net).unwrap();
            let mut small = OccupiedSet::empty(6);
            let mut big = OccupiedSet::empty(6);
            for (x, &c) in picks.iter().enumerate() {
                if c >= 1 {
                    big.insert(x);
                }
                if c == 2 {
                    small.insert(x);
                }
            }
            if !big.is_empty() {
                let pb = hitting_probability_set(&net, &big).unwrap();
                // Sub-additivity.
                let sum: f64 = big.indices().iter().map(|&x| p[x]).sum();
                prop_assert!(pb <= sum + 1e-10);
                if !small.is_empty() {
                    let ps = hitting_probability_set(&net, &small).unwrap();
                    prop_assert!(ps <= pb + 1e-12);
                }
            }
        }
    }
}
