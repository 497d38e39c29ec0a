//! Cross-module statistical batteries: sampled frequencies against the
//! exact linear-algebra and oracle layers.

mod common;

use arwlab_core::arw::{
    arw_step, stabilize, two_stage_insert_trace, two_stage_trace, ArwParams, Configuration,
    SelectionRule, SiteState,
};
use arwlab_core::idla::{run_filling, FillingOptions, OccupiedSet};
use arwlab_core::network::{
    generate, random_network, two_site_symmetric, BaseGraph, GeneratorSpec, InsertionRule,
};
use arwlab_core::oracle::{
    exact_transition_operator, filling_time_law, stationary_and_profiles, subset_kernel,
};
use arwlab_core::sampler::{sample_walk, walk_stream, SimStream, StreamFamily};
use arwlab_core::{greens, Network};

use common::{chi_squared_gof, chi_squared_homogeneity};

fn test_battery() -> Vec<Network> {
    vec![
        two_site_symmetric(),
        generate(&GeneratorSpec::Wheel {
            n: 3,
            insertion: InsertionRule::Uniform,
        })
        .unwrap(),
        generate(&GeneratorSpec::TransitiveMinusVertex {
            base: BaseGraph::Cycle,
            n: 3,
            insertion: InsertionRule::Uniform,
        })
        .unwrap(),
        random_network(101, 5),
        random_network(202, 7),
    ]
}

#[test]
fn walk_hitting_frequencies_match_exact_probabilities() {
    let walks = 100_000usize;
    for (which, net) in test_battery().iter().enumerate() {
        let p = greens::hitting_probabilities(net).unwrap();
        let n = net.len();
        let mut hits = vec![0u64; n];
        for i in 0..walks {
            let sites = sample_walk(net, walk_stream(500 + which as u64, i as u64)).unwrap();
            let mut seen = vec![false; n];
            for x in sites {
                if !seen[x] {
                    seen[x] = true;
                    hits[x] += 1;
                }
            }
        }
        for x in 0..n {
            let freq = hits[x] as f64 / walks as f64;
            let sigma = (p[x] * (1.0 - p[x]) / walks as f64).sqrt();
            assert!(
                (freq - p[x]).abs() <= 4.0 * sigma.max(1e-9),
                "net {which} site {x}: freq {freq} vs p {}",
                p[x]
            );
        }
    }
}

#[test]
fn filling_time_from_cofull_sets_is_geometric() {
    // T starting from all-but-one site is Geometric(p(x)); chi-squared
    // goodness of fit over 10^5 coupled-free samples.
    let net = random_network(11, 5);
    let p = greens::hitting_probabilities(&net).unwrap();
    let samples = 100_000u64;
    for x in [0usize, 3] {
        let initial = OccupiedSet::from_mask(5, !(1u32 << x) & 0b11111);
        let mut counts = vec![0u64; 40];
        for r in 0..samples {
            let rec = run_filling(
                &net,
                StreamFamily::replica(777 + x as u64, r),
                &initial,
                &FillingOptions::default(),
            )
            .unwrap();
            let t = rec.filling_time as usize;
            let cell = (t - 1).min(counts.len() - 1);
            counts[cell] += 1;
        }
        let expected: Vec<f64> = (0..counts.len())
            .map(|k| {
                if k + 1 < counts.len() {
                    (1.0 - p[x]).powi(k as i32) * p[x]
                } else {
                    (1.0 - p[x]).powi(k as i32)
                }
            })
            .collect();
        let pv = chi_squared_gof(&counts, &expected);
        assert!(pv > 0.001, "site {x}: p-value {pv}");
    }
}

#[test]
fn two_site_filling_mean_matches_geometric_oracle() {
    // From {a}, the filling time is Geometric(3/4) with mean 4/3.
    let net = two_site_symmetric();
    let initial = OccupiedSet::from_indices(2, &[0]);
    let samples = 100_000u64;
    let mut total = 0u64;
    for r in 0..samples {
        total += run_filling(
            &net,
            StreamFamily::replica(5, r),
            &initial,
            &FillingOptions::default(),
        )
        .unwrap()
        .filling_time;
    }
    let mean = total as f64 / samples as f64;
    assert!((mean - 4.0 / 3.0).abs() <= 0.02, "mean {mean}");
}

#[test]
fn stable_outcome_law_is_selection_rule_invariant() {
    // Fixed unstable configuration, lambda = 1: the distribution over
    // stable outcomes must not depend on the selection rule.
    let net = random_network(303, 3);
    let params = ArwParams::new(1.0).unwrap();
    let start = Configuration::from_states(vec![
        SiteState::Active(2),
        SiteState::Sleeping,
        SiteState::Active(1),
    ]);
    let runs = 100_000u64;
    let mut tallies: Vec<Vec<u64>> = Vec::new();
    for rule in [
        SelectionRule::LowestIndex,
        SelectionRule::HighestIndex,
        SelectionRule::Random,
    ] {
        let params = params.with_rule(rule);
        let mut counts = vec![0u64; 8];
        for r in 0..runs {
            let out = stabilize(&net, &params, &start, StreamFamily::replica(41, r)).unwrap();
            let mut idx = 0usize;
            for (x, s) in out.states().iter().enumerate() {
                if matches!(s, SiteState::Sleeping) {
                    idx |= 1 << x;
                }
            }
            counts[idx] += 1;
        }
        tallies.push(counts);
    }
    for i in 0..tallies.len() {
        for j in (i + 1)..tallies.len() {
            let pv = chi_squared_homogeneity(&tallies[i], &tallies[j]);
            assert!(pv > 0.001, "rules {i} vs {j}: p-value {pv}");
        }
    }
}

#[test]
fn chain_step_frequencies_match_the_exact_operator() {
    // Empirical one-step law of the sampled chain against the exact
    // transition operator, from each stable state of a 3-site system.
    let net = generate(&GeneratorSpec::Wheel {
        n: 3,
        insertion: InsertionRule::Uniform,
    })
    .unwrap();
    let lambda = 1.0;
    let params = ArwParams::new(lambda).unwrap();
    let op = exact_transition_operator(&net, lambda, SelectionRule::LowestIndex).unwrap();
    let runs = 60_000u64;
    for eta in [0usize, 0b101] {
        let start = Configuration::from_states(
            (0..3)
                .map(|x| {
                    if eta & (1 << x) != 0 {
                        SiteState::Sleeping
                    } else {
                        SiteState::Empty
                    }
                })
                .collect(),
        );
        let mut counts = vec![0u64; 8];
        for r in 0..runs {
            let out = arw_step(&net, &params, &start, StreamFamily::replica(97, r), 1).unwrap();
            let mut idx = 0usize;
            for (x, s) in out.states().iter().enumerate() {
                if matches!(s, SiteState::Sleeping) {
                    idx |= 1 << x;
                }
            }
            counts[idx] += 1;
        }
        let expected: Vec<f64> = (0..8).map(|xi| op[(eta, xi)]).collect();
        let pv = chi_squared_gof(&counts, &expected);
        assert!(pv > 0.001, "state {eta}: p-value {pv}");
    }
}

#[test]
fn stage_one_all_ones_frequency_matches_exact_filling_law() {
    // P(zeta = all-ones after t insertions) = P(T <= t), exactly.
    let net = random_network(404, 4);
    let params = ArwParams::new(1.0).unwrap();
    let kernel = subset_kernel(&net).unwrap();
    let t = 5u64;
    let law = filling_time_law(&kernel, &OccupiedSet::empty(4), t).unwrap();
    let p_filled = 1.0 - law.survival[t as usize];
    let runs = 100_000u64;
    let mut filled = 0u64;
    for r in 0..runs {
        let (zeta, _) = two_stage_insert_trace(
            &net,
            &params,
            &Configuration::all_empty(4),
            t,
            StreamFamily::replica(55, r),
        )
        .unwrap();
        if zeta
            .states()
            .iter()
            .all(|s| matches!(s, SiteState::Active(1)))
        {
            filled += 1;
        }
    }
    let freq = filled as f64 / runs as f64;
    let sigma = (p_filled * (1.0 - p_filled) / runs as f64).sqrt();
    assert!(
        (freq - p_filled).abs() <= 4.0 * sigma,
        "freq {freq} vs exact {p_filled}"
    );
}

#[test]
fn conditioned_on_full_coverage_the_outcome_is_stationary() {
    // Given zeta = all-ones, the final stable state is distributed exactly
    // as the stationary law of the chain.
    let net = two_site_symmetric();
    let lambda = 1.0;
    let params = ArwParams::new(lambda).unwrap();
    let op = exact_transition_operator(&net, lambda, SelectionRule::LowestIndex).unwrap();
    let report = stationary_and_profiles(&op, 2).unwrap();
    let t = 8u64;
    let runs = 80_000u64;
    let mut counts = vec![0u64; 4];
    let mut kept = 0u64;
    for r in 0..runs {
        let (zeta, xi) = two_stage_insert_trace(
            &net,
            &params,
            &Configuration::all_empty(2),
            t,
            StreamFamily::replica(66, r),
        )
        .unwrap();
        if !zeta
            .states()
            .iter()
            .all(|s| matches!(s, SiteState::Active(1)))
        {
            continue;
        }
        kept += 1;
        let mut idx = 0usize;
        for (x, s) in xi.states().iter().enumerate() {
            if matches!(s, SiteState::Sleeping) {
                idx |= 1 << x;
            }
        }
        counts[idx] += 1;
    }
    assert!(kept > runs / 2, "conditioning event too rare: {kept}");
    let pv = chi_squared_gof(&counts, &report.pi);
    assert!(pv > 0.001, "p-value {pv}");
}

#[test]
fn stage_one_is_monotone_under_shared_streams() {
    // eta <= eta' coordinate-wise implies zeta <= zeta', with both runs
    // driven by the same per-particle streams.
    let mut picker = SimStream::new(9090, 1);
    let mut trials = 0u64;
    while trials < 10_000 {
        let n = 2 + (picker.next_u64() % 4) as usize;
        let net = random_network(picker.next_u64(), n);
        let params = ArwParams::new(0.8).unwrap();
        let mut small = Vec::with_capacity(n);
        let mut large = Vec::with_capacity(n);
        for _ in 0..n {
            let hi = match picker.next_u64() % 4 {
                0 => SiteState::Empty,
                1 => SiteState::Sleeping,
                2 => SiteState::Active(1),
                _ => SiteState::Active(2),
            };
            let lo = match (picker.next_u64() % 3, hi) {
                (_, SiteState::Empty) => SiteState::Empty,
                (0, _) => SiteState::Empty,
                (1, SiteState::Sleeping) => SiteState::Sleeping,
                (1, SiteState::Active(k)) => {
                    if picker.next_u64() % 2 == 0 {
                        SiteState::Sleeping
                    } else {
                        SiteState::Active(k)
                    }
                }
                (_, SiteState::Active(2)) => SiteState::Active(1),
                (_, s) => s,
            };
            small.push(lo);
            large.push(hi);
        }
        let eta = Configuration::from_states(small);
        let eta_big = Configuration::from_states(large);
        assert!(eta.dominated_by(&eta_big));
        let family = StreamFamily::new(picker.next_u64());
        let (zeta, _) = two_stage_trace(&net, &params, &eta, family).unwrap();
        let (zeta_big, _) = two_stage_trace(&net, &params, &eta_big, family).unwrap();
        assert!(
            zeta.dominated_by(&zeta_big),
            "trial {trials}: {zeta:?} vs {zeta_big:?}"
        );
        trials += 1;
    }
}
