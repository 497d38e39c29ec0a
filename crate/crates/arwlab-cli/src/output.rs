//! Artifact writers: deterministic CSV and JSON bodies with a comment
//! header carrying the seed, tool version, and network fingerprint;
//! files are written atomically (temp file, then rename).

use std::fmt::Write as _;
use std::path::PathBuf;

use serde::Serialize;
use statrs::distribution::{Beta, ContinuousCDF};

use arwlab_core::error::Error;
use arwlab_core::experiments::{SurvivalEstimate, SweepRow};
use arwlab_core::idla::{FillingRecord, OccupiedSet};
use arwlab_core::network::Network;
use arwlab_core::oracle::ExactReport;
use arwlab_core::NetworkStats;

pub enum OutputTarget {
    Stdout,
    File(PathBuf),
}

impl From<Option<PathBuf>> for OutputTarget {
    fn from(path: Option<PathBuf>) -> Self {
        match path {
            Some(p) => OutputTarget::File(p),
            None => OutputTarget::Stdout,
        }
    }
}

/// Write the full text to the target; file writes go through a temp file in
/// the same directory and a rename.
pub fn write_text(target: &OutputTarget, text: &str) -> Result<(), Error> {
    match target {
        OutputTarget::Stdout => {
            println!("{text}");
            Ok(())
        }
        OutputTarget::File(path) => {
            let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
            let mut tmp = match dir {
                Some(d) => tempfile::NamedTempFile::new_in(d)?,
                None => tempfile::NamedTempFile::new_in(".")?,
            };
            use std::io::Write;
            tmp.write_all(text.as_bytes())?;
            tmp.write_all(b"\n")?;
            tmp.persist(path).map_err(|e| Error::Io(e.error))?;
            Ok(())
        }
    }
}

fn header(net: &Network, seed: Option<u64>) -> String {
    let mut s = format!(
        "# arwlab {} fingerprint={}",
        env!("CARGO_PKG_VERSION"),
        net.fingerprint()
    );
    if let Some(seed) = seed {
        let _ = write!(s, " seed={seed}");
    }
    s
}

/// JSON envelope carrying provenance next to the payload.
pub fn json_envelope<T: Serialize>(
    net: &Network,
    seed: Option<u64>,
    payload: &T,
) -> Result<String, Error> {
    #[derive(Serialize)]
    struct Envelope<'a, T> {
        version: &'static str,
        fingerprint: String,
        #[serde(skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
        #[serde(flatten)]
        payload: &'a T,
    }
    Ok(serde_json::to_string_pretty(&Envelope {
        version: env!("CARGO_PKG_VERSION"),
        fingerprint: net.fingerprint(),
        seed,
        payload,
    })?)
}

/// Documented column order: n, p_star, t_rel, L, R, lifetime, tsep_lower,
/// tsep_upper.
pub fn stats_csv(net: &Network, stats: &NetworkStats) -> String {
    let mut s = header(net, None);
    s.push_str("\nn,p_star,t_rel,L,R,lifetime,tsep_lower,tsep_upper\n");
    let _ = write!(
        s,
        "{},{},{},{},{},{},{},{}",
        stats.n,
        stats.p_star,
        stats.t_rel,
        stats.cal_l,
        stats.cal_r,
        stats.expected_lifetime,
        stats.tsep_lower,
        stats.tsep_upper
    );
    s
}

/// Columns: replica, T, then one column per recorded coverage increment.
pub fn filling_csv(
    net: &Network,
    seed: u64,
    initial: &OccupiedSet,
    records: &[FillingRecord],
) -> String {
    let mut s = header(net, Some(seed));
    s.push_str("\nreplica,T");
    if records.first().and_then(|r| r.increments.as_ref()).is_some() {
        for k in initial.len()..=net.len() {
            let _ = write!(s, ",t_{k}");
        }
    }
    s.push('\n');
    for (r, rec) in records.iter().enumerate() {
        let _ = write!(s, "{r},{}", rec.filling_time);
        if let Some(inc) = &rec.increments {
            for t in inc {
                let _ = write!(s, ",{t}");
            }
        }
        s.push('\n');
    }
    s.pop();
    s
}

/// Columns: step, occupied, sleeping.
pub fn chain_csv(net: &Network, seed: u64, lambda: f64, rows: &[(u64, usize, usize)]) -> String {
    let mut s = header(net, Some(seed));
    let _ = write!(s, " lambda={lambda}");
    s.push_str("\nstep,occupied,sleeping\n");
    for &(step, occupied, sleeping) in rows {
        let _ = writeln!(s, "{step},{occupied},{sleeping}");
    }
    s.pop();
    s
}

/// Exact report: BASE.json (full report) and BASE.csv with columns
/// t, survival, dsep, dtv (the operator columns are empty in subset mode).
pub fn write_exact(
    net: &Network,
    out: Option<PathBuf>,
    report: &ExactReport,
) -> Result<(), Error> {
    let json = json_envelope(net, None, report)?;
    let mut csv = header(net, None);
    csv.push_str("\nt,survival,dsep,dtv\n");
    for (t, s) in report.survival.iter().enumerate() {
        let (dsep, dtv) = match &report.operator {
            Some(op) => (
                op.d_sep.get(t).map(|v| v.to_string()).unwrap_or_default(),
                op.d_tv.get(t).map(|v| v.to_string()).unwrap_or_default(),
            ),
            None => (String::new(), String::new()),
        };
        let _ = writeln!(csv, "{t},{s},{dsep},{dtv}");
    }
    csv.pop();
    write_pair(out, &json, &csv)
}

/// Survival estimate: BASE.json and BASE.csv with columns
/// t, survival, ci_low, ci_high (pointwise two-sided 99% Clopper-Pearson).
pub fn write_sep_curve(
    net: &Network,
    out: Option<PathBuf>,
    estimate: &SurvivalEstimate,
) -> Result<(), Error> {
    let json = json_envelope(net, Some(estimate.seed), estimate)?;
    let mut csv = header(net, Some(estimate.seed));
    csv.push_str("\nt,survival,ci_low,ci_high\n");
    let n = estimate.replicas;
    for (t, s) in estimate.survival.iter().enumerate() {
        let k = (s * n as f64).round() as u64;
        let (lo, hi) = clopper_pearson(k, n);
        let _ = writeln!(csv, "{t},{s},{lo},{hi}");
    }
    csv.pop();
    write_pair(out, &json, &csv)
}

fn write_pair(out: Option<PathBuf>, json: &str, csv: &str) -> Result<(), Error> {
    match out {
        Some(base) => {
            write_text(&OutputTarget::File(base.with_extension("json")), json)?;
            write_text(&OutputTarget::File(base.with_extension("csv")), csv)?;
            Ok(())
        }
        None => {
            println!("{json}");
            println!("{csv}");
            Ok(())
        }
    }
}

/// Two-sided 99% Clopper-Pearson interval for `k` successes in `n` trials.
fn clopper_pearson(k: u64, n: u64) -> (f64, f64) {
    let alpha = 0.01;
    let lo = if k == 0 {
        0.0
    } else {
        Beta::new(k as f64, (n - k + 1) as f64)
            .unwrap()
            .inverse_cdf(alpha / 2.0)
    };
    let hi = if k >= n {
        1.0
    } else {
        Beta::new((k + 1) as f64, (n - k) as f64)
            .unwrap()
            .inverse_cdf(1.0 - alpha / 2.0)
    };
    (lo, hi)
}

/// Sweep rows with a fixed column order; failed rows keep their family and
/// size, record the error, and leave the numeric fields empty.
pub fn sweep_csv(seed: u64, rows: &[SweepRow]) -> String {
    let mut s = format!("# arwlab {} seed={seed}", env!("CARGO_PKG_VERSION"));
    s.push_str(
        "\nfamily,size,n,lambda,tsep50,tsep50_lo,tsep50_hi,tsep05,tsep25,tsep75,tsep95,\
         window,t_rel,L,R,tsep_lower,tsep_upper,mean,variance,runtime_s,replicas,error\n",
    );
    for row in rows {
        if let Some(err) = &row.error {
            let _ = writeln!(
                s,
                "{},{},,,,,,,,,,,,,,,,,,,,{:?}",
                row.family, row.size, err
            );
        } else {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{:.3},{},",
                row.family,
                row.size,
                row.n,
                row.lambda,
                row.tsep50,
                row.tsep50_lo,
                row.tsep50_hi,
                row.tsep05,
                row.tsep25,
                row.tsep75,
                row.tsep95,
                row.window,
                row.t_rel,
                row.cal_l,
                row.cal_r,
                row.tsep_lower,
                row.tsep_upper,
                row.mean,
                row.variance,
                row.runtime_s,
                row.replicas
            );
        }
    }
    s.pop();
    s
}
