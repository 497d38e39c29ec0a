//! Finite networks `(V, K, nu)`: a site set, a sub-stochastic kernel and an
//! insertion distribution, together with the standing-assumption checks and
//! the example-family generators.
//!
//! A kernel row that sums to less than one leaves the deficit as a per-step
//! death probability. Validation checks that every site can reach a "leaky"
//! site (non-degeneracy: no principal sub-matrix of the kernel is stochastic)
//! and that every site is reachable from the support of the insertion law.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Tolerance for row sums and distribution mass.
pub const STOCH_TOL: f64 = 1e-12;
/// Tolerance for the detailed-balance (reversibility) check.
pub const DB_TOL: f64 = 1e-10;

/// One kernel row in compressed form. `cum` holds the running partial sums
/// of `weights`, so a uniform draw below `row_sum` selects a target by
/// binary search and a draw at or above it is a death.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Row {
    pub cols: Vec<u32>,
    pub weights: Vec<f64>,
    pub cum: Vec<f64>,
    pub row_sum: f64,
}

impl Row {
    fn new(mut entries: Vec<(u32, f64)>) -> Self {
        entries.sort_unstable_by_key(|e| e.0);
        let cols: Vec<u32> = entries.iter().map(|e| e.0).collect();
        let weights: Vec<f64> = entries.iter().map(|e| e.1).collect();
        let mut cum = Vec::with_capacity(weights.len());
        let mut acc = 0.0;
        for w in &weights {
            acc += w;
            cum.push(acc);
        }
        Row {
            cols,
            weights,
            cum,
            row_sum: acc,
        }
    }
}

/// Insertion distribution over sites.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InsertionRule {
    /// Uniform over all sites.
    Uniform,
    /// Proportional to host-graph degree (graph-derived families) or to the
    /// number of kernel out-edges (plain files).
    Degree,
    /// Explicit probability vector.
    Explicit,
}

/// A finite network: sites, sub-stochastic kernel and insertion law.
///
/// Immutable after construction; all simulation state lives elsewhere, so a
/// `Network` is safely shareable across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    labels: Vec<String>,
    rows: Vec<Row>,
    nu: Vec<f64>,
    nu_cum: Vec<f64>,
    metadata: Option<GeneratorSpec>,
}

impl Network {
    /// Build a network from a sparse edge list `(row, col, weight)` and an
    /// insertion vector. Rejects structurally malformed input; the softer
    /// standing assumptions are reported by [`validate`].
    pub fn new(labels: Vec<String>, edges: &[(usize, usize, f64)], nu: Vec<f64>) -> Result<Self> {
        let n = labels.len();
        if n == 0 {
            return Err(Error::Malformed("network has no sites".into()));
        }
        if nu.len() != n {
            return Err(Error::Malformed(format!(
                "insertion vector has length {} but there are {} sites",
                nu.len(),
                n
            )));
        }
        let mut per_row: Vec<Vec<(u32, f64)>> = vec![Vec::new(); n];
        let mut seen = BTreeSet::new();
        for &(i, j, w) in edges {
            if i >= n || j >= n {
                return Err(Error::Malformed(format!(
                    "edge ({i}, {j}, {w}) has an out-of-range site index (n = {n})"
                )));
            }
            if !(w > 0.0 && w <= 1.0) || !w.is_finite() {
                return Err(Error::Malformed(format!(
                    "edge ({i}, {j}) has weight {w}, outside (0, 1]"
                )));
            }
            if !seen.insert((i, j)) {
                return Err(Error::Malformed(format!("duplicate edge ({i}, {j})")));
            }
            per_row[i].push((j as u32, w));
        }
        let mut mass = 0.0;
        for (x, &p) in nu.iter().enumerate() {
            if !(p >= 0.0) || !p.is_finite() {
                return Err(Error::Malformed(format!(
                    "insertion weight nu[{x}] = {p} is not a nonnegative number"
                )));
            }
            mass += p;
        }
        if (mass - 1.0).abs() > STOCH_TOL {
            return Err(Error::Malformed(format!(
                "insertion vector sums to {mass}, not 1 (tolerance {STOCH_TOL})"
            )));
        }
        let rows: Vec<Row> = per_row.into_iter().map(Row::new).collect();
        let mut nu_cum = Vec::with_capacity(n);
        let mut acc = 0.0;
        for &p in &nu {
            acc += p;
            nu_cum.push(acc);
        }
        Ok(Network {
            labels,
            rows,
            nu,
            nu_cum,
            metadata: None,
        })
    }

    /// Number of sites.
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Insertion distribution.
    pub fn nu(&self) -> &[f64] {
        &self.nu
    }

    /// Kernel entry `K(x, y)` (zero when absent).
    pub fn kernel(&self, x: usize, y: usize) -> f64 {
        let row = &self.rows[x];
        match row.cols.binary_search(&(y as u32)) {
            Ok(k) => row.weights[k],
            Err(_) => 0.0,
        }
    }

    /// Iterate the nonzero entries of row `x` as `(col, weight)`.
    pub fn row(&self, x: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let row = &self.rows[x];
        row.cols
            .iter()
            .zip(row.weights.iter())
            .map(|(&c, &w)| (c as usize, w))
    }

    /// Row sum of the kernel at `x`; `1 - row_sum` is the death probability.
    pub fn row_sum(&self, x: usize) -> f64 {
        self.rows[x].row_sum
    }

    /// Per-step death probability at `x` (clamped at zero).
    pub fn death(&self, x: usize) -> f64 {
        (1.0 - self.rows[x].row_sum).max(0.0)
    }

    pub(crate) fn row_raw(&self, x: usize) -> &Row {
        &self.rows[x]
    }

    pub(crate) fn nu_cum(&self) -> &[f64] {
        &self.nu_cum
    }

    /// The generator spec this network was produced from, if any.
    pub fn metadata(&self) -> Option<&GeneratorSpec> {
        self.metadata.as_ref()
    }

    /// Total number of nonzero kernel entries.
    pub fn edge_count(&self) -> usize {
        self.rows.iter().map(|r| r.cols.len()).sum()
    }

    /// Half bandwidth of `I - K`: the largest `|x - y|` over kernel edges.
    pub fn bandwidth(&self) -> usize {
        let mut b = 0usize;
        for (x, row) in self.rows.iter().enumerate() {
            for &c in &row.cols {
                b = b.max((c as usize).abs_diff(x));
            }
        }
        b
    }

    /// Content hash of the canonical JSON form, embedded in CLI artifacts.
    pub fn fingerprint(&self) -> String {
        let file = NetworkFile::from_network(self);
        let bytes = serde_json::to_vec(&file).expect("network serializes");
        let digest = Sha256::digest(&bytes);
        let mut out = String::with_capacity(16);
        for b in &digest[..8] {
            let _ = write!(out, "{b:02x}");
        }
        out
    }
}

/// Outcome of one validation check.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum Check {
    Ok,
    /// The check failed; fields describe the witness.
    Failed { detail: String },
}

impl Check {
    pub fn passed(&self) -> bool {
        matches!(self, Check::Ok)
    }
}

/// Report produced by [`validate`]. Passing means the network satisfies every
/// standing assumption of the theory.
#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    /// Every kernel row sums to at most one.
    pub row_sums: Check,
    /// From every site, a site with positive death probability is reachable
    /// (no principal sub-matrix of the kernel is stochastic). On failure the
    /// detail lists a witness cycle of trapped sites.
    pub non_degeneracy: Check,
    /// Every site is reachable from the support of the insertion law, i.e.
    /// every site has a positive hitting probability. On failure the detail
    /// lists the unreachable sites.
    pub reachability: Check,
    /// Whether `nu(y) K(y,x) = nu(x) K(x,y)` holds for all pairs within
    /// [`DB_TOL`]. Not a requirement, but it unlocks the reversible
    /// shortcut identities.
    pub reversible: bool,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.row_sums.passed() && self.non_degeneracy.passed() && self.reachability.passed()
    }
}

/// Check the standing assumptions on a structurally well-formed network.
/// Never mutates its input; collects every violated invariant.
pub fn validate(net: &Network) -> ValidationReport {
    let n = net.len();

    let mut bad_rows = Vec::new();
    for x in 0..n {
        if net.row_sum(x) > 1.0 + STOCH_TOL {
            bad_rows.push(x);
        }
    }
    let row_sums = if bad_rows.is_empty() {
        Check::Ok
    } else {
        Check::Failed {
            detail: format!(
                "rows exceed total mass 1: {}",
                describe_sites(net, &bad_rows)
            ),
        }
    };

    // Non-degeneracy: reverse reachability from the set of leaky sites.
    let leaky: Vec<usize> = (0..n).filter(|&x| net.row_sum(x) < 1.0 - STOCH_TOL).collect();
    let mut reaches_leak = vec![false; n];
    {
        // Reverse adjacency walk from all leaky sites at once.
        let mut rev: Vec<Vec<u32>> = vec![Vec::new(); n];
        for x in 0..n {
            for (y, _) in net.row(x) {
                rev[y].push(x as u32);
            }
        }
        let mut stack: Vec<usize> = leaky.clone();
        for &x in &leaky {
            reaches_leak[x] = true;
        }
        while let Some(y) = stack.pop() {
            for &x in &rev[y] {
                if !reaches_leak[x as usize] {
                    reaches_leak[x as usize] = true;
                    stack.push(x as usize);
                }
            }
        }
    }
    let trapped: Vec<usize> = (0..n).filter(|&x| !reaches_leak[x]).collect();
    let non_degeneracy = if trapped.is_empty() {
        Check::Ok
    } else {
        // Every trapped site has full row mass and all its edges stay inside
        // the trapped set, so following edges must close a cycle.
        let cycle = witness_cycle(net, &trapped);
        Check::Failed {
            detail: format!(
                "stochastic sub-system: witness cycle {}",
                describe_sites(net, &cycle)
            ),
        }
    };

    // Reachability from supp(nu) along positive-weight edges.
    let mut reached = vec![false; n];
    let mut stack: Vec<usize> = (0..n).filter(|&x| net.nu()[x] > 0.0).collect();
    for &x in &stack {
        reached[x] = true;
    }
    while let Some(x) = stack.pop() {
        for (y, _) in net.row(x) {
            if !reached[y] {
                reached[y] = true;
                stack.push(y);
            }
        }
    }
    let unreachable: Vec<usize> = (0..n).filter(|&x| !reached[x]).collect();
    let reachability = if unreachable.is_empty() {
        Check::Ok
    } else {
        Check::Failed {
            detail: format!(
                "sites unreachable from the insertion support: {}",
                describe_sites(net, &unreachable)
            ),
        }
    };

    let mut reversible = true;
    'outer: for x in 0..n {
        for (y, w) in net.row(x) {
            let forward = net.nu()[x] * w;
            let backward = net.nu()[y] * net.kernel(y, x);
            if (forward - backward).abs() > DB_TOL {
                reversible = false;
                break 'outer;
            }
        }
    }

    ValidationReport {
        row_sums,
        non_degeneracy,
        reachability,
        reversible,
    }
}

fn describe_sites(net: &Network, sites: &[usize]) -> String {
    let mut names: Vec<&str> = sites.iter().map(|&x| net.labels()[x].as_str()).collect();
    if names.len() > 8 {
        names.truncate(8);
        format!("({}, ...)", names.join(", "))
    } else {
        format!("({})", names.join(", "))
    }
}

/// Find a directed cycle inside a trapped set (all of whose out-edges stay
/// inside the set).
fn witness_cycle(net: &Network, trapped: &[usize]) -> Vec<usize> {
    let start = trapped[0];
    let mut order: Vec<usize> = Vec::new();
    let mut pos: BTreeMap<usize, usize> = BTreeMap::new();
    let mut x = start;
    loop {
        if let Some(&k) = pos.get(&x) {
            return order[k..].to_vec();
        }
        pos.insert(x, order.len());
        order.push(x);
        x = net
            .row(x)
            .next()
            .map(|(y, _)| y)
            .expect("trapped site has full row mass, so it has an out-edge");
    }
}

// ---------------------------------------------------------------------------
// Generators
// ---------------------------------------------------------------------------

/// Base graph for the transitive-minus-vertex family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaseGraph {
    /// Cycle on `n + 1` vertices.
    Cycle,
    /// Complete graph on `n + 1` vertices.
    Complete,
}

/// Description of one example family instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum GeneratorSpec {
    /// Cycle of length `n` with every site tied to an absorbing hub: each
    /// cycle site has two neighbors at weight `1/3` and death probability
    /// `1/3`.
    Wheel { n: usize, insertion: InsertionRule },
    /// A vertex-transitive base graph on `n + 1` vertices with one vertex
    /// removed; walk killed on stepping into the removed vertex.
    TransitiveMinusVertex {
        base: BaseGraph,
        n: usize,
        insertion: InsertionRule,
    },
    /// Lattice ball `{x in Z^d : |x|^2 <= r}` with killing outside.
    EuclideanBall {
        d: usize,
        r: usize,
        insertion: InsertionRule,
    },
    /// Ball of given depth in the infinite `degree`-regular tree, killed on
    /// stepping below the leaves.
    TreeBall {
        degree: usize,
        depth: usize,
        insertion: InsertionRule,
    },
    /// Restriction of an explicit host graph to a retained subset: row `x`
    /// gives weight `1/deg_host(x)` to each retained neighbor and the mass
    /// pointing outside is the death probability.
    HostRestriction {
        adjacency: Vec<Vec<usize>>,
        retained: Vec<usize>,
        insertion: InsertionRule,
    },
}

impl GeneratorSpec {
    pub fn insertion(&self) -> InsertionRule {
        match self {
            GeneratorSpec::Wheel { insertion, .. }
            | GeneratorSpec::TransitiveMinusVertex { insertion, .. }
            | GeneratorSpec::EuclideanBall { insertion, .. }
            | GeneratorSpec::TreeBall { insertion, .. }
            | GeneratorSpec::HostRestriction { insertion, .. } => *insertion,
        }
    }
}

/// Build the network described by `spec`. The output always passes
/// [`validate`]; `metadata` records the generating family and parameters.
pub fn generate(spec: &GeneratorSpec) -> Result<Network> {
    let mut net = match spec {
        GeneratorSpec::Wheel { n, insertion } => {
            if *n < 1 {
                return Err(Error::Parameter("wheel needs n >= 1".into()));
            }
            // Host: cycle C_n plus a hub adjacent to every cycle site. Cycle
            // sites all have host degree 3 (n >= 3); smaller cycles keep the
            // same weight convention.
            let n = *n;
            let labels = (0..n).map(|i| i.to_string()).collect();
            let mut edges = Vec::new();
            if n > 1 {
                for i in 0..n {
                    let prev = (i + n - 1) % n;
                    let next = (i + 1) % n;
                    if prev == next {
                        // n == 2: a single neighbor reached by both cycle
                        // directions.
                        edges.push((i, next, 2.0 / 3.0));
                    } else {
                        edges.push((i, prev, 1.0 / 3.0));
                        edges.push((i, next, 1.0 / 3.0));
                    }
                }
            }
            // n == 1: lone site with a self-loop through the cycle? The
            // 1-cycle degenerates to death probability 1/3 and self-loop 2/3.
            if n == 1 {
                edges.push((0, 0, 2.0 / 3.0));
            }
            let degrees = vec![3usize; n];
            let nu = insertion_vector(*insertion, n, &degrees, None)?;
            Network::new(labels, &edges, nu)?
        }
        GeneratorSpec::TransitiveMinusVertex { base, n, insertion } => {
            if *n < 1 {
                return Err(Error::Parameter(
                    "transitive-minus-vertex needs n >= 1".into(),
                ));
            }
            let n = *n;
            let (edges, degrees) = match base {
                BaseGraph::Cycle => {
                    // C_{n+1} minus one vertex is the path 0..n-1; interior
                    // sites keep both neighbors, the two ends lose one edge
                    // each to the removed vertex.
                    let mut e = Vec::new();
                    for i in 0..n {
                        if i + 1 < n {
                            e.push((i, i + 1, 0.5));
                            e.push((i + 1, i, 0.5));
                        }
                    }
                    if n == 1 {
                        // Removing a vertex from C_2 leaves an isolated site
                        // whose both host edges lead outside.
                    }
                    (e, vec![2usize; n])
                }
                BaseGraph::Complete => {
                    let mut e = Vec::new();
                    let w = 1.0 / n as f64;
                    for i in 0..n {
                        for j in 0..n {
                            if i != j {
                                e.push((i, j, w));
                            }
                        }
                    }
                    (e, vec![n; n])
                }
            };
            let labels = (0..n).map(|i| i.to_string()).collect();
            let nu = insertion_vector(*insertion, n, &degrees, None)?;
            Network::new(labels, &edges, nu)?
        }
        GeneratorSpec::EuclideanBall { d, r, insertion } => {
            if *d < 1 {
                return Err(Error::Parameter("euclidean-ball needs d >= 1".into()));
            }
            let sites = lattice_ball(*d, *r);
            if sites.is_empty() {
                return Err(Error::Generation("euclidean ball is empty".into()));
            }
            let index: BTreeMap<Vec<i64>, usize> =
                sites.iter().cloned().zip(0..).collect();
            let w = 1.0 / (2 * d) as f64;
            let mut edges = Vec::new();
            for (i, x) in sites.iter().enumerate() {
                for axis in 0..*d {
                    for dir in [-1i64, 1] {
                        let mut y = x.clone();
                        y[axis] += dir;
                        if let Some(&j) = index.get(&y) {
                            edges.push((i, j, w));
                        }
                    }
                }
            }
            let labels = sites
                .iter()
                .map(|x| {
                    let parts: Vec<String> = x.iter().map(|c| c.to_string()).collect();
                    format!("({})", parts.join(","))
                })
                .collect();
            let degrees = vec![2 * d; sites.len()];
            let nu = insertion_vector(*insertion, sites.len(), &degrees, None)?;
            Network::new(labels, &edges, nu)?
        }
        GeneratorSpec::TreeBall {
            degree,
            depth,
            insertion,
        } => {
            if *degree < 3 {
                return Err(Error::Parameter("tree-ball needs degree >= 3".into()));
            }
            let (edges, n) = tree_ball_edges(*degree, *depth);
            let w = 1.0 / *degree as f64;
            let weighted: Vec<(usize, usize, f64)> =
                edges.iter().map(|&(i, j)| (i, j, w)).collect();
            let labels = (0..n).map(|i| i.to_string()).collect();
            let degrees = vec![*degree; n];
            let nu = insertion_vector(*insertion, n, &degrees, None)?;
            Network::new(labels, &weighted, nu)?
        }
        GeneratorSpec::HostRestriction {
            adjacency,
            retained,
            insertion,
        } => {
            let host_n = adjacency.len();
            if host_n == 0 || retained.is_empty() {
                return Err(Error::Parameter(
                    "host-restriction needs a nonempty host and retained set".into(),
                ));
            }
            let mut kept = vec![usize::MAX; host_n];
            for (new_idx, &v) in retained.iter().enumerate() {
                if v >= host_n {
                    return Err(Error::Parameter(format!(
                        "retained site {v} is outside the host (size {host_n})"
                    )));
                }
                if kept[v] != usize::MAX {
                    return Err(Error::Parameter(format!("retained site {v} repeated")));
                }
                kept[v] = new_idx;
            }
            let mut edges = Vec::new();
            let mut degrees = Vec::with_capacity(retained.len());
            for (new_idx, &v) in retained.iter().enumerate() {
                let deg = adjacency[v].len();
                if deg == 0 {
                    return Err(Error::Generation(format!(
                        "host vertex {v} is isolated; its kernel row is undefined"
                    )));
                }
                degrees.push(deg);
                let w = 1.0 / deg as f64;
                let mut targets = BTreeSet::new();
                for &u in &adjacency[v] {
                    if u >= host_n {
                        return Err(Error::Parameter(format!(
                            "host adjacency of {v} mentions vertex {u} outside the host"
                        )));
                    }
                    if !targets.insert(u) {
                        return Err(Error::Parameter(format!(
                            "host adjacency of {v} repeats neighbor {u}"
                        )));
                    }
                    if kept[u] != usize::MAX {
                        edges.push((new_idx, kept[u], w));
                    }
                }
            }
            let labels = retained.iter().map(|v| v.to_string()).collect();
            let nu = insertion_vector(*insertion, retained.len(), &degrees, None)?;
            Network::new(labels, &edges, nu)?
        }
    };
    net.metadata = Some(spec.clone());
    let report = validate(&net);
    if !report.passed() {
        return Err(Error::Generation(format!(
            "spec produced an invalid network: {report:?}"
        )));
    }
    Ok(net)
}

/// Build a network with an explicit insertion vector on top of a generated
/// kernel (used by files that override the generator insertion).
pub fn insertion_vector(
    rule: InsertionRule,
    n: usize,
    degrees: &[usize],
    explicit: Option<Vec<f64>>,
) -> Result<Vec<f64>> {
    match rule {
        InsertionRule::Uniform => Ok(vec![1.0 / n as f64; n]),
        InsertionRule::Degree => {
            let total: usize = degrees.iter().sum();
            if total == 0 {
                return Err(Error::Generation("degree-biased insertion on a degree-free network".into()));
            }
            Ok(degrees.iter().map(|&d| d as f64 / total as f64).collect())
        }
        InsertionRule::Explicit => explicit.ok_or_else(|| {
            Error::Parameter("explicit insertion rule requires a vector".into())
        }),
    }
}

fn lattice_ball(d: usize, r: usize) -> Vec<Vec<i64>> {
    let radius = (r as f64).sqrt().floor() as i64;
    let mut out = Vec::new();
    let mut point = vec![-radius; d];
    'outer: loop {
        let norm2: i64 = point.iter().map(|&c| c * c).sum();
        if norm2 <= r as i64 {
            out.push(point.clone());
        }
        // Odometer increment over the cube [-radius, radius]^d.
        for axis in 0..d {
            if point[axis] < radius {
                point[axis] += 1;
                continue 'outer;
            }
            point[axis] = -radius;
        }
        break;
    }
    out.sort();
    out
}

/// Edges of the depth-`depth` ball in the infinite `degree`-regular tree.
/// Vertex 0 is the root; each interior vertex keeps edges to its parent and
/// children, leaves keep only the parent edge.
fn tree_ball_edges(degree: usize, depth: usize) -> (Vec<(usize, usize)>, usize) {
    let mut edges = Vec::new();
    let mut next = 1usize;
    let mut frontier = vec![0usize];
    for level in 0..depth {
        let mut new_frontier = Vec::new();
        for &v in &frontier {
            let children = if level == 0 { degree } else { degree - 1 };
            for _ in 0..children {
                edges.push((v, next));
                edges.push((next, v));
                new_frontier.push(next);
                next += 1;
            }
        }
        frontier = new_frontier;
    }
    (edges, next)
}

// ---------------------------------------------------------------------------
// File format
// ---------------------------------------------------------------------------

/// On-disk insertion field: explicit vector or a named rule.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NuField {
    Named(String),
    Vector(Vec<f64>),
}

/// JSON file form: `{"sites": [...], "edges": [[i, j, w], ...], "nu": ...}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NetworkFile {
    pub sites: Vec<String>,
    pub edges: Vec<(usize, usize, f64)>,
    pub nu: NuField,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metadata: Option<GeneratorSpec>,
}

impl NetworkFile {
    pub fn from_network(net: &Network) -> Self {
        let mut edges = Vec::with_capacity(net.edge_count());
        for x in 0..net.len() {
            for (y, w) in net.row(x) {
                edges.push((x, y, w));
            }
        }
        NetworkFile {
            sites: net.labels().to_vec(),
            edges,
            nu: NuField::Vector(net.nu().to_vec()),
            metadata: net.metadata().cloned(),
        }
    }

    pub fn into_network(self) -> Result<Network> {
        let n = self.sites.len();
        let nu = match &self.nu {
            NuField::Vector(v) => v.clone(),
            NuField::Named(name) => match name.as_str() {
                "uniform" => vec![1.0 / n as f64; n],
                "degree" => {
                    let mut counts = vec![0usize; n];
                    for &(i, _, _) in &self.edges {
                        if i < n {
                            counts[i] += 1;
                        }
                    }
                    insertion_vector(InsertionRule::Degree, n, &counts, None)?
                }
                other => {
                    return Err(Error::Malformed(format!(
                        "unknown insertion rule {other:?} (expected \"uniform\" or \"degree\")"
                    )))
                }
            },
        };
        let mut net = Network::new(self.sites, &self.edges, nu)?;
        net.metadata = self.metadata;
        Ok(net)
    }
}

/// Parse a network from its JSON file form.
pub fn from_json(text: &str) -> Result<Network> {
    let file: NetworkFile = serde_json::from_str(text)?;
    file.into_network()
}

/// Serialize a network to its JSON file form.
pub fn to_json(net: &Network) -> String {
    serde_json::to_string_pretty(&NetworkFile::from_network(net)).expect("network serializes")
}

// ---------------------------------------------------------------------------
// Deterministic instances for tests and experiments
// ---------------------------------------------------------------------------

/// The smallest nontrivial reversible example: two sites bridged at weight
/// 1/2 with death probability 1/2 on each, uniform insertion.
pub fn two_site_symmetric() -> Network {
    let spec = GeneratorSpec::HostRestriction {
        adjacency: vec![vec![1, 2], vec![0, 3], vec![0], vec![1]],
        retained: vec![0, 1],
        insertion: InsertionRule::Uniform,
    };
    generate(&spec).expect("two-site instance is valid")
}

/// Random sub-stochastic network with uniform insertion, for randomized test
/// batteries. Every row leaks mass, so the result always validates; with
/// uniform insertion every hitting probability is at least `1/n`.
pub fn random_network(seed: u64, n: usize) -> Network {
    use crate::sampler::SimStream;
    let mut rng = SimStream::new(seed, 0x52414e44_4e455453);
    let labels = (0..n).map(|i| i.to_string()).collect();
    let mut edges = Vec::new();
    for x in 0..n {
        // Out-degree 1..=3 (0 with small probability), random distinct targets.
        let k = match rng.next_u64() % 8 {
            0 => 0usize,
            1 | 2 => 1,
            3 | 4 | 5 => 2,
            _ => 3,
        }
        .min(n);
        let mut targets = BTreeSet::new();
        while targets.len() < k {
            targets.insert((rng.next_u64() % n as u64) as usize);
        }
        if targets.is_empty() {
            continue;
        }
        let raw: Vec<f64> = targets.iter().map(|_| 0.2 + 0.8 * rng.next_f64()).collect();
        let total: f64 = raw.iter().sum();
        let row_mass = 0.5 + 0.45 * rng.next_f64();
        for (&y, w) in targets.iter().zip(raw.iter()) {
            edges.push((x, y, w / total * row_mass));
        }
    }
    let nu = vec![1.0 / n as f64; n];
    Network::new(labels, &edges, nu).expect("random network is well-formed")
}
