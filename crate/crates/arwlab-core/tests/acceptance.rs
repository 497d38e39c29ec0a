//! Acceptance suite: one check per numbered criterion, printed as a
//! pass/fail line with its runtime. Run with `--nocapture` to see the
//! report for passing runs.

use std::time::Instant;

use arwlab_core::arw::SelectionRule;
use arwlab_core::experiments::{check_win_inequality, estimate_survival};
use arwlab_core::idla::{coupled_pair_step, OccupiedSet};
use arwlab_core::network::{
    generate, random_network, two_site_symmetric, BaseGraph, GeneratorSpec, InsertionRule,
};
use arwlab_core::oracle::{
    exact_t_sep, exact_transition_operator, filling_moments, filling_time_law,
    stationary_and_profiles, subset_kernel,
};
use arwlab_core::sampler::{SimStream, StreamFamily};
use arwlab_core::{greens, Network};

type CriterionResult = Result<String, String>;

fn tiny_systems() -> Vec<(&'static str, Network)> {
    vec![
        ("two-site", two_site_symmetric()),
        (
            "wheel-3",
            generate(&GeneratorSpec::Wheel {
                n: 3,
                insertion: InsertionRule::Uniform,
            })
            .unwrap(),
        ),
    ]
}

/// Shared random battery for criteria 6-8: five uniform-insertion networks
/// with at most nine sites.
fn battery_n9() -> Vec<Network> {
    [(1001u64, 5usize), (1002, 6), (1003, 7), (1004, 8), (1005, 9)]
        .iter()
        .map(|&(seed, n)| random_network(seed, n))
        .collect()
}

const LAMBDAS: [f64; 3] = [0.5, 1.0, 2.0];

fn c01_reduction_identity() -> CriterionResult {
    let mut worst = 0.0f64;
    for (name, net) in tiny_systems() {
        let kernel = subset_kernel(&net).map_err(|e| e.to_string())?;
        let law = filling_time_law(&kernel, &OccupiedSet::empty(net.len()), 20)
            .map_err(|e| e.to_string())?;
        for lambda in LAMBDAS {
            let op = exact_transition_operator(&net, lambda, SelectionRule::LowestIndex)
                .map_err(|e| e.to_string())?;
            let report = stationary_and_profiles(&op, 20).map_err(|e| e.to_string())?;
            for t in 0..=20usize {
                let gap = (report.d_sep[t] - law.survival[t]).abs();
                worst = worst.max(gap);
                if gap > 1e-9 {
                    return Err(format!(
                        "{name} lambda {lambda} t {t}: |d_sep - P(T>t)| = {gap:.3e}"
                    ));
                }
            }
        }
    }
    Ok(format!("max |d_sep(t) - P(T>t)| = {worst:.3e}"))
}

fn c02_relaxation_time_spectral() -> CriterionResult {
    let mut worst = 0.0f64;
    let mut spread = 0.0f64;
    for (name, net) in tiny_systems() {
        let p = greens::hitting_probabilities(&net).map_err(|e| e.to_string())?;
        let p_star = p.into_iter().fold(f64::INFINITY, f64::min);
        let mut rhos = Vec::new();
        for lambda in LAMBDAS {
            let op = exact_transition_operator(&net, lambda, SelectionRule::LowestIndex)
                .map_err(|e| e.to_string())?;
            let report = stationary_and_profiles(&op, 1).map_err(|e| e.to_string())?;
            let gap = (report.rho - (1.0 - p_star)).abs();
            worst = worst.max(gap);
            if gap > 1e-8 {
                return Err(format!(
                    "{name} lambda {lambda}: |rho - (1 - p_star)| = {gap:.3e}"
                ));
            }
            rhos.push(report.rho);
        }
        for i in 0..rhos.len() {
            for j in (i + 1)..rhos.len() {
                let d = (rhos[i] - rhos[j]).abs();
                spread = spread.max(d);
                if d > 1e-8 {
                    return Err(format!("{name}: rho varies with lambda by {d:.3e}"));
                }
            }
        }
    }
    Ok(format!(
        "max |rho - (1 - p_star)| = {worst:.3e}, lambda spread = {spread:.3e}"
    ))
}

fn c03_transitive_head() -> CriterionResult {
    let mut worst = 0.0f64;
    for n in [3usize, 10, 50, 200] {
        let net = generate(&GeneratorSpec::TransitiveMinusVertex {
            base: BaseGraph::Cycle,
            n,
            insertion: InsertionRule::Uniform,
        })
        .map_err(|e| e.to_string())?;
        let stats = greens::statistics(&net).map_err(|e| e.to_string())?;
        let expected = (n as f64 + 1.0) / (2.0 * n as f64);
        let gap = (stats.p_star - expected).abs();
        worst = worst.max(gap);
        if gap > 1e-10 {
            return Err(format!("n = {n}: |p_star - (n+1)/(2n)| = {gap:.3e}"));
        }
        let trel_gap = (stats.t_rel - 2.0 * n as f64 / (n as f64 + 1.0)).abs();
        if trel_gap > 1e-9 {
            return Err(format!("n = {n}: t_rel off by {trel_gap:.3e}"));
        }
    }
    Ok(format!("max |p_star - (n+1)/(2n)| = {worst:.3e}"))
}

fn c04_geometric_law() -> CriterionResult {
    let mut worst = 0.0f64;
    for (i, n) in [4usize, 5, 6, 7, 8].iter().enumerate() {
        let net = random_network(2000 + i as u64, *n);
        let kernel = subset_kernel(&net).map_err(|e| e.to_string())?;
        let p = greens::hitting_probabilities(&net).map_err(|e| e.to_string())?;
        for x in 0..*n {
            let mask = !(1u32 << x) & ((1u32 << n) - 1);
            let law = filling_time_law(&kernel, &OccupiedSet::from_mask(*n, mask), 40)
                .map_err(|e| e.to_string())?;
            for t in 0..=40usize {
                let gap = (law.survival[t] - (1.0 - p[x]).powi(t as i32)).abs();
                worst = worst.max(gap);
                if gap > 1e-12 {
                    return Err(format!("net {i} site {x} t {t}: gap {gap:.3e}"));
                }
            }
        }
    }
    Ok(format!("max pointwise gap = {worst:.3e}"))
}

fn c05_monotone_coupling_trials() -> CriterionResult {
    let mut picker = SimStream::new(0xC5C5, 0);
    let mut case_counts = [0u64; 4];
    for trial in 0..10_000u64 {
        let n = 3 + (picker.next_u64() % 10) as usize; // up to 12 sites
        let net = random_network(3000 + trial, n);
        let mut a = OccupiedSet::empty(n);
        let mut b = OccupiedSet::empty(n);
        for x in 0..n {
            match picker.next_u64() % 3 {
                0 => {
                    a.insert(x);
                    b.insert(x);
                }
                1 => {
                    b.insert(x);
                }
                _ => {}
            }
        }
        let streams = StreamFamily::new(picker.next_u64());
        for t in 1..=(10 * n as u64) {
            match coupled_pair_step(&net, &mut a, &mut b, streams, t) {
                Ok(case) => case_counts[case as usize] += 1,
                Err(e) => return Err(format!("trial {trial} t {t}: {e}")),
            }
        }
    }
    Ok(format!(
        "zero violations; case counts {case_counts:?}"
    ))
}

fn c06_increments_and_variance() -> CriterionResult {
    let mut worst_inc = f64::NEG_INFINITY;
    for (i, net) in battery_n9().iter().enumerate() {
        let n = net.len();
        let kernel = subset_kernel(net).map_err(|e| e.to_string())?;
        let (mean, variance) = filling_moments(&kernel);
        let stats = greens::statistics(net).map_err(|e| e.to_string())?;
        let t_rel = stats.t_rel;
        let full = (1u32 << n) - 1;
        for mask in 0..=full {
            let h = mean[mask as usize];
            if variance[mask as usize] > t_rel * h + 1e-9 {
                return Err(format!(
                    "net {i} mask {mask:b}: Var {} > t_rel * h = {}",
                    variance[mask as usize],
                    t_rel * h
                ));
            }
            for x in 0..n {
                if mask & (1 << x) == 0 {
                    let diff = h - mean[(mask | (1 << x)) as usize];
                    worst_inc = worst_inc.max(diff - t_rel);
                    if !(diff >= -1e-10) {
                        return Err(format!("net {i} mask {mask:b} site {x}: negative increment"));
                    }
                    if diff > t_rel + 1e-9 {
                        return Err(format!(
                            "net {i} mask {mask:b} site {x}: increment {diff} > t_rel {t_rel}"
                        ));
                    }
                }
            }
        }
    }
    Ok(format!(
        "exhaustive over all subsets; max(increment - t_rel) = {worst_inc:.3e}"
    ))
}

fn c07_submultiplicativity_and_lower_envelope() -> CriterionResult {
    for (i, net) in battery_n9().iter().enumerate() {
        let n = net.len();
        let kernel = subset_kernel(net).map_err(|e| e.to_string())?;
        let law = filling_time_law(&kernel, &OccupiedSet::empty(n), 40)
            .map_err(|e| e.to_string())?;
        let p = greens::hitting_probabilities(net).map_err(|e| e.to_string())?;
        for s in 0..=40usize {
            for t in 0..=(40 - s) {
                if law.survival[s + t] > law.survival[s] * law.survival[t] + 1e-12 {
                    return Err(format!("net {i}: submultiplicativity fails at ({s}, {t})"));
                }
            }
        }
        for t in 0..=40usize {
            let envelope = p
                .iter()
                .map(|&px| (1.0 - px).powi(t as i32))
                .fold(0.0f64, f64::max);
            if law.survival[t] < envelope - 1e-12 {
                return Err(format!("net {i} t {t}: survival below (1 - p(x))^t"));
            }
        }
    }
    Ok("submultiplicativity and geometric envelope hold on all curves".into())
}

fn c08_first_moment_and_sandwich() -> CriterionResult {
    let mut details = Vec::new();
    for (i, net) in battery_n9().iter().enumerate() {
        let n = net.len();
        let kernel = subset_kernel(net).map_err(|e| e.to_string())?;
        let empty = OccupiedSet::empty(n);
        let law = filling_time_law(&kernel, &empty, 1).map_err(|e| e.to_string())?;
        let t_sep = exact_t_sep(&kernel, &empty, 0.5).map_err(|e| e.to_string())? as f64;
        if !(law.mean / 2.0 <= t_sep && t_sep <= 2.0 * law.mean) {
            return Err(format!(
                "net {i}: E[T] = {}, t_sep = {t_sep} breaks the 2-approximation",
                law.mean
            ));
        }
        let stats = greens::statistics(net).map_err(|e| e.to_string())?;
        if t_sep < stats.tsep_lower - 1e-9 {
            return Err(format!(
                "net {i}: t_sep {t_sep} < lower bound {}",
                stats.tsep_lower
            ));
        }
        if t_sep > stats.tsep_upper + 1e-9 {
            return Err(format!(
                "net {i}: t_sep {t_sep} > upper bound {}",
                stats.tsep_upper
            ));
        }
        details.push(format!("{t_sep:.0}"));
    }
    Ok(format!("t_sep values {}", details.join(", ")))
}

fn c09_monte_carlo_vs_oracle() -> CriterionResult {
    let replicas = 100_000u64;
    for (seed, n) in [(4001u64, 6usize), (4002, 8), (4003, 10)] {
        let net = random_network(seed, n);
        let kernel = subset_kernel(&net).map_err(|e| e.to_string())?;
        let exact = filling_time_law(&kernel, &OccupiedSet::empty(n), 4000)
            .map_err(|e| e.to_string())?;
        let est = estimate_survival(&net, seed, replicas, &[0.5]).map_err(|e| e.to_string())?;
        for t in 0..est.survival.len() {
            let s = exact.survival.get(t).copied().unwrap_or(0.0);
            if s < 0.01 {
                break;
            }
            let sigma = (s * (1.0 - s) / replicas as f64).sqrt();
            let gap = (est.survival[t] - s).abs();
            if gap > 4.0 * sigma {
                return Err(format!(
                    "net {n}: survival at t = {t} off by {gap:.2e} > 4 sigma = {:.2e}",
                    4.0 * sigma
                ));
            }
        }
    }
    // Bitwise reproducibility across worker counts.
    let net = random_network(4004, 8);
    let one = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap()
        .install(|| estimate_survival(&net, 77, 20_000, &[0.5]))
        .map_err(|e| e.to_string())?;
    let two = rayon::ThreadPoolBuilder::new()
        .num_threads(2)
        .build()
        .unwrap()
        .install(|| estimate_survival(&net, 77, 20_000, &[0.5]))
        .map_err(|e| e.to_string())?;
    if one.samples_sorted != two.samples_sorted
        || one.mean.to_bits() != two.mean.to_bits()
        || one.variance.to_bits() != two.variance.to_bits()
    {
        return Err("estimates differ across worker counts".into());
    }
    Ok("4-sigma agreement on 3 nets; bitwise-stable across worker counts".into())
}

fn c10_desk_scale_bands() -> CriterionResult {
    let eps = [0.05, 0.25, 0.5, 0.75, 0.95];
    let mut notes = Vec::new();

    // Transitive-minus-vertex band at n = 10^4.
    {
        let n = 10_000usize;
        let net = generate(&GeneratorSpec::TransitiveMinusVertex {
            base: BaseGraph::Cycle,
            n,
            insertion: InsertionRule::Uniform,
        })
        .map_err(|e| e.to_string())?;
        let est = estimate_survival(&net, 0xA10, 2000, &eps).map_err(|e| e.to_string())?;
        let ratio = est.t_sep_at(0.5).unwrap().t as f64 / n as f64;
        if !(1.0..=1.30).contains(&ratio) {
            return Err(format!("transitive band: t_sep(0.5)/n = {ratio:.4}"));
        }
        notes.push(format!("trans ratio {ratio:.4}"));
    }

    // Wheel bands at n = 10^3 and 10^4.
    for (n, replicas) in [(1_000usize, 100_000u64), (10_000, 2_000)] {
        let net = generate(&GeneratorSpec::Wheel {
            n,
            insertion: InsertionRule::Uniform,
        })
        .map_err(|e| e.to_string())?;
        let stats = greens::statistics(&net).map_err(|e| e.to_string())?;
        let est = estimate_survival(&net, 0xA11, replicas, &eps).map_err(|e| e.to_string())?;
        let t50 = est.t_sep_at(0.5).unwrap().t as f64;
        if !(stats.tsep_lower <= t50 && t50 <= stats.tsep_upper) {
            return Err(format!(
                "wheel {n}: t_sep(0.5) = {t50} outside [{}, {}]",
                stats.tsep_lower, stats.tsep_upper
            ));
        }
        let window =
            est.t_sep_at(0.05).unwrap().t as f64 - est.t_sep_at(0.95).unwrap().t as f64;
        let bound = (8.0 * stats.t_rel * t50 / 0.05).sqrt();
        if window > bound {
            return Err(format!("wheel {n}: window {window} > bound {bound:.1}"));
        }
        notes.push(format!(
            "wheel {n}: t50 {t50:.0} in [{:.0}, {:.0}], window {window:.0} <= {bound:.0}",
            stats.tsep_lower, stats.tsep_upper
        ));
    }
    Ok(notes.join("; "))
}

fn c11_win_inequality_grid() -> CriterionResult {
    let grid = [
        (0.0, 0.0),
        (0.5, 2.0),
        (1.0, 1.0),
        (0.0, 9.0),
        (2.0, 8.0),
        (4.0, 25.0),
        (6.0, 12.0),
        (9.0, 9.0),
        (12.5, 30.0),
        (20.0, 36.0),
    ];
    let mut margin = f64::INFINITY;
    for (i, &(u, v)) in grid.iter().enumerate() {
        let report =
            check_win_inequality(u, v, 1_000_000, 0xB11 + i as u64).map_err(|e| e.to_string())?;
        if !report.passed {
            return Err(format!(
                "({u}, {v}): empirical {} exceeds bound {} + 4 sigma",
                report.empirical, report.bound
            ));
        }
        margin = margin.min(report.bound + 4.0 * report.sigma - report.empirical);
    }
    Ok(format!("10 points, min margin {margin:.3e}"))
}

#[test]
fn acceptance() {
    let criteria: Vec<(&str, f64, fn() -> CriterionResult)> = vec![
        ("01 reduction identity d_sep = P(T>t)", 10.0, c01_reduction_identity),
        ("02 relaxation time rho = 1 - p_star", 10.0, c02_relaxation_time_spectral),
        ("03 transitive-minus-vertex exact head", 5.0, c03_transitive_head),
        ("04 geometric law of cofull filling", 30.0, c04_geometric_law),
        ("05 coupled monotonicity and concavity", 60.0, c05_monotone_coupling_trials),
        ("06 increment and variance bounds", 120.0, c06_increments_and_variance),
        ("07 submultiplicativity and envelope", 30.0, c07_submultiplicativity_and_lower_envelope),
        ("08 first-moment and t_sep sandwich", 30.0, c08_first_moment_and_sandwich),
        ("09 Monte Carlo vs oracle", 300.0, c09_monte_carlo_vs_oracle),
        ("10 desk-scale family bands", 900.0, c10_desk_scale_bands),
        ("11 unexpected-win tail bound", 120.0, c11_win_inequality_grid),
    ];
    let mut failures = Vec::new();
    for (name, budget, check) in criteria {
        let start = Instant::now();
        let outcome = check();
        let runtime = start.elapsed().as_secs_f64();
        let over_budget = runtime > budget;
        match (&outcome, over_budget) {
            (Ok(detail), false) => {
                println!("criterion {name}: PASS [{runtime:.1}s] {detail}");
            }
            (Ok(detail), true) => {
                println!(
                    "criterion {name}: FAIL [{runtime:.1}s > budget {budget:.0}s] {detail}"
                );
                failures.push(format!("{name}: over budget ({runtime:.1}s)"));
            }
            (Err(reason), _) => {
                println!("criterion {name}: FAIL [{runtime:.1}s] {reason}");
                failures.push(format!("{name}: {reason}"));
            }
        }
    }
    assert!(failures.is_empty(), "failed criteria: {failures:#?}");
}
