//! Shared helpers for the integration suites.

use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Goodness-of-fit p-value of observed counts against expected
/// probabilities. Cells with tiny expectation are pooled into their
/// neighbor to keep the chi-squared approximation honest.
pub fn chi_squared_gof(observed: &[u64], expected: &[f64]) -> f64 {
    assert_eq!(observed.len(), expected.len());
    let total: u64 = observed.iter().sum();
    let mut cells: Vec<(f64, f64)> = observed
        .iter()
        .zip(expected)
        .map(|(&o, &p)| (o as f64, p * total as f64))
        .collect();
    // Pool low-expectation cells.
    cells.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
    let mut pooled: Vec<(f64, f64)> = Vec::new();
    let mut acc = (0.0, 0.0);
    for (o, e) in cells {
        acc.0 += o;
        acc.1 += e;
        if acc.1 >= 5.0 {
            pooled.push(acc);
            acc = (0.0, 0.0);
        }
    }
    if acc.1 > 0.0 {
        if let Some(last) = pooled.last_mut() {
            last.0 += acc.0;
            last.1 += acc.1;
        } else {
            pooled.push(acc);
        }
    }
    if pooled.len() < 2 {
        return 1.0;
    }
    let stat: f64 = pooled
        .iter()
        .map(|&(o, e)| (o - e) * (o - e) / e)
        .sum();
    let df = (pooled.len() - 1) as f64;
    let dist = ChiSquared::new(df).unwrap();
    1.0 - dist.cdf(stat)
}

/// Two-sample homogeneity p-value for categorical outcomes.
pub fn chi_squared_homogeneity(a: &[u64], b: &[u64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let na: u64 = a.iter().sum();
    let nb: u64 = b.iter().sum();
    let mut stat = 0.0;
    let mut df = 0usize;
    for (&oa, &ob) in a.iter().zip(b) {
        let pooled = (oa + ob) as f64 / (na + nb) as f64;
        let (ea, eb) = (pooled * na as f64, pooled * nb as f64);
        if ea + eb < 5.0 {
            continue;
        }
        if ea > 0.0 {
            stat += (oa as f64 - ea).powi(2) / ea;
        }
        if eb > 0.0 {
            stat += (ob as f64 - eb).powi(2) / eb;
        }
        df += 1;
    }
    if df < 2 {
        return 1.0;
    }
    let dist = ChiSquared::new((df - 1) as f64).unwrap();
    1.0 - dist.cdf(stat)
}
