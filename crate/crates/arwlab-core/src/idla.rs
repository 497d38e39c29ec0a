//! Internal DLA on a network: each walker settles at the first unoccupied
//! site it visits, or dies. The filling time of the process started from the
//! empty set is the central observable; coupled copies share one walk
//! sequence, which makes set growth monotone and its increments concave.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::network::Network;
use crate::sampler::{StreamFamily, Trajectory, DEFAULT_STEP_CAP};

/// Subset of sites with O(1) membership and insertion.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OccupiedSet {
    bits: Vec<bool>,
    count: usize,
}

impl OccupiedSet {
    pub fn empty(n: usize) -> Self {
        OccupiedSet {
            bits: vec![false; n],
            count: 0,
        }
    }

    pub fn full(n: usize) -> Self {
        OccupiedSet {
            bits: vec![true; n],
            count: n,
        }
    }

    pub fn from_indices(n: usize, indices: &[usize]) -> Self {
        let mut s = Self::empty(n);
        for &i in indices {
            assert!(i < n, "site index {i} out of range (n = {n})");
            s.insert(i);
        }
        s
    }

    /// Complement within the site set.
    pub fn complement(&self) -> Self {
        let bits: Vec<bool> = self.bits.iter().map(|&b| !b).collect();
        OccupiedSet {
            count: self.universe() - self.count,
            bits,
        }
    }

    #[inline]
    pub fn contains(&self, x: usize) -> bool {
        self.bits[x]
    }

    /// Insert `x`; returns true when the site was new.
    #[inline]
    pub fn insert(&mut self, x: usize) -> bool {
        if self.bits[x] {
            false
        } else {
            self.bits[x] = true;
            self.count += 1;
            true
        }
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    /// Size of the ambient site set.
    pub fn universe(&self) -> usize {
        self.bits.len()
    }

    pub fn is_full(&self) -> bool {
        self.count == self.bits.len()
    }

    pub fn is_subset_of(&self, other: &OccupiedSet) -> bool {
        self.bits
            .iter()
            .zip(&other.bits)
            .all(|(&a, &b)| !a || b)
    }

    pub fn indices(&self) -> Vec<usize> {
        (0..self.bits.len()).filter(|&i| self.bits[i]).collect()
    }

    /// Bitmask form (for the subset-chain oracle; requires at most 32 sites).
    pub fn mask(&self) -> u32 {
        assert!(self.bits.len() <= 32);
        let mut m = 0u32;
        for (i, &b) in self.bits.iter().enumerate() {
            if b {
                m |= 1 << i;
            }
        }
        m
    }

    pub fn from_mask(n: usize, mask: u32) -> Self {
        let mut s = Self::empty(n);
        for i in 0..n {
            if mask & (1 << i) != 0 {
                s.insert(i);
            }
        }
        s
    }
}

/// Advance `set` by one walker: scan the walk and occupy the first site
/// outside the set. Returns the settled site, or `None` when the walker
/// died first. Consumes only the walk prefix up to settlement.
pub fn settle(set: &mut OccupiedSet, walk: &mut Trajectory<'_>) -> Result<Option<usize>> {
    while let Some(x) = walk.next_site()? {
        if !set.contains(x) {
            set.insert(x);
            return Ok(Some(x));
        }
    }
    Ok(None)
}

/// The one-walker update function as a pure map on sets.
pub fn idla_update(set: &OccupiedSet, walk: &mut Trajectory<'_>) -> Result<OccupiedSet> {
    let mut next = set.clone();
    settle(&mut next, walk)?;
    Ok(next)
}

/// Options for [`run_filling`].
#[derive(Debug, Clone)]
pub struct FillingOptions {
    /// Record the first time each cardinality is reached.
    pub record_increments: bool,
    /// Hard per-walk step cap.
    pub step_cap: u64,
}

impl Default for FillingOptions {
    fn default() -> Self {
        FillingOptions {
            record_increments: false,
            step_cap: DEFAULT_STEP_CAP,
        }
    }
}

/// Result of one filling run.
#[derive(Debug, Clone, Serialize)]
pub struct FillingRecord {
    /// Number of walkers consumed until every site was occupied.
    pub filling_time: u64,
    /// First times `T_k` at which each cardinality `k = |A|..n` was reached
    /// (starts with 0 for the initial cardinality).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub increments: Option<Vec<u64>>,
    pub seed: u64,
    /// Walk-index base used by this run (replica offset).
    pub walk_base: u64,
}

/// Run IDLA from `initial` with walk indices `1, 2, ...` of `streams` until
/// the set covers every site.
pub fn run_filling(
    net: &Network,
    streams: StreamFamily,
    initial: &OccupiedSet,
    options: &FillingOptions,
) -> Result<FillingRecord> {
    assert_eq!(initial.universe(), net.len());
    let mut set = initial.clone();
    let mut increments = options.record_increments.then(|| vec![0u64]);
    let mut t = 0u64;
    while !set.is_full() {
        t += 1;
        let mut walk = Trajectory::with_cap(net, streams.walk(t), options.step_cap);
        if settle(&mut set, &mut walk)?.is_some() {
            if let Some(inc) = increments.as_mut() {
                inc.push(t);
            }
        }
    }
    Ok(FillingRecord {
        filling_time: t,
        increments,
        seed: streams.seed,
        walk_base: streams.base,
    })
}

/// Trace of several IDLA copies evolved under one shared walk sequence.
#[derive(Debug, Clone)]
pub struct CoupledRun {
    /// `cardinalities[i][t] = |S_t^{A_i}|` for `t = 0..=t_max`.
    pub cardinalities: Vec<Vec<usize>>,
    /// The sets after the final step.
    pub finals: Vec<OccupiedSet>,
}

/// Evolve every initial set with the same walk indices; each copy
/// regenerates the walk prefix it needs from the shared stream family.
/// With `t_max = None` the horizon defaults to `4 * n * t_rel`.
pub fn coupled_run(
    net: &Network,
    streams: StreamFamily,
    initial_sets: &[OccupiedSet],
    t_max: Option<u64>,
) -> Result<CoupledRun> {
    let horizon = match t_max {
        Some(t) => t,
        None => {
            let stats = crate::greens::statistics(net)?;
            (4.0 * net.len() as f64 * stats.t_rel).ceil() as u64
        }
    };
    let mut sets: Vec<OccupiedSet> = initial_sets.to_vec();
    for s in &sets {
        assert_eq!(s.universe(), net.len());
    }
    let mut cardinalities: Vec<Vec<usize>> = sets
        .iter()
        .map(|s| {
            let mut v = Vec::with_capacity(horizon as usize + 1);
            v.push(s.len());
            v
        })
        .collect();
    for t in 1..=horizon {
        for (i, set) in sets.iter_mut().enumerate() {
            let mut walk = Trajectory::new(net, streams.walk(t));
            settle(set, &mut walk)?;
            cardinalities[i].push(set.len());
        }
    }
    Ok(CoupledRun {
        cardinalities,
        finals: sets,
    })
}

/// Which of the four coupled-update cases a shared walk produced for a
/// nested pair `A ⊆ B`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoupledCase {
    /// The walk settled in neither copy.
    NeitherGrew,
    /// Only the smaller copy grew, at a site already in `B`.
    OnlySmallerGrew,
    /// Both copies grew at the same site outside `B`.
    BothGrewSame,
    /// The smaller copy grew inside `B \ A`, the larger outside `B`.
    BothGrewSplit,
}

/// Apply one shared walk to a nested pair and classify the transition,
/// checking the two coupling invariants on the way.
pub fn coupled_pair_step(
    net: &Network,
    a: &mut OccupiedSet,
    b: &mut OccupiedSet,
    streams: StreamFamily,
    t: u64,
) -> Result<CoupledCase> {
    debug_assert!(a.is_subset_of(b));
    let gap_before = b.len() - a.len();
    let mut walk_a = Trajectory::new(net, streams.walk(t));
    let mut walk_b = Trajectory::new(net, streams.walk(t));
    let settled_a = settle(a, &mut walk_a)?;
    let settled_b = settle(b, &mut walk_b)?;
    let case = match (settled_a, settled_b) {
        (None, None) => CoupledCase::NeitherGrew,
        (Some(_), None) => CoupledCase::OnlySmallerGrew,
        (Some(x), Some(y)) if x == y => CoupledCase::BothGrewSame,
        (Some(_), Some(_)) => CoupledCase::BothGrewSplit,
        (None, Some(y)) => {
            return Err(Error::Domain(format!(
                "coupling violation: larger copy settled at {y} while smaller died"
            )))
        }
    };
    if !a.is_subset_of(b) {
        return Err(Error::Domain("coupling violation: containment broke".into()));
    }
    if b.len() - a.len() > gap_before {
        return Err(Error::Domain("coupling violation: gap grew".into()));
    }
    Ok(case)
}
