//! The activated-random-walk chain: sampled Abelian stabilization, chain
//! steps, and the two-stage stabilization that exposes the IDLA coupling.
//!
//! Instruction randomness is organized per particle: each particle carries
//! one lazy stream that yields its birth site, its kernel steps, and (when
//! it is alone) its sleep flips. An inserted particle with index `t` uses
//! exactly the walk stream of index `t`, so during Stage (i) — where only
//! particles sharing a site may move and nobody can fall asleep — the
//! process consumes precisely the walk prefixes that IDLA consumes. With
//! the fixed within-site priority (the youngest particle at a crowded site
//! moves first), the support after Stage (i) equals the IDLA set driven by
//! the same walk streams, run for run.

use std::collections::BTreeSet;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::idla::OccupiedSet;
use crate::network::Network;
use crate::sampler::{
    draw_birth, draw_step, SimStream, StreamFamily, DEFAULT_STEP_CAP, SELECTION_STREAM,
    WAKE_STREAM_BASE,
};

/// Per-site state of a configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SiteState {
    Empty,
    Sleeping,
    /// `Active(k)`: `k >= 1` active particles.
    Active(u32),
}

impl SiteState {
    /// Number of particles at the site.
    pub fn particles(&self) -> u64 {
        match self {
            SiteState::Empty => 0,
            SiteState::Sleeping => 1,
            SiteState::Active(k) => *k as u64,
        }
    }

    /// Position in the single-site order `0 < s < 1 < 2 < ...`.
    fn rank(&self) -> u64 {
        match self {
            SiteState::Empty => 0,
            SiteState::Sleeping => 1,
            SiteState::Active(k) => 1 + *k as u64,
        }
    }
}

impl Serialize for SiteState {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            SiteState::Empty => s.serialize_str("0"),
            SiteState::Sleeping => s.serialize_str("s"),
            SiteState::Active(k) => s.serialize_u32(*k),
        }
    }
}

impl<'de> Deserialize<'de> for SiteState {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Text(String),
            Count(u32),
        }
        match Raw::deserialize(d)? {
            Raw::Text(t) if t == "0" => Ok(SiteState::Empty),
            Raw::Text(t) if t == "s" => Ok(SiteState::Sleeping),
            Raw::Text(t) => Err(D::Error::custom(format!("unknown site state {t:?}"))),
            Raw::Count(0) => Ok(SiteState::Empty),
            Raw::Count(k) => Ok(SiteState::Active(k)),
        }
    }
}

/// A full configuration over the site set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Configuration {
    states: Vec<SiteState>,
}

impl Configuration {
    pub fn all_empty(n: usize) -> Self {
        Configuration {
            states: vec![SiteState::Empty; n],
        }
    }

    pub fn all_sleeping(n: usize) -> Self {
        Configuration {
            states: vec![SiteState::Sleeping; n],
        }
    }

    pub fn from_states(states: Vec<SiteState>) -> Self {
        Configuration { states }
    }

    pub fn states(&self) -> &[SiteState] {
        &self.states
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// No active particles anywhere.
    pub fn is_stable(&self) -> bool {
        !self.states.iter().any(|s| matches!(s, SiteState::Active(_)))
    }

    pub fn total_particles(&self) -> u64 {
        self.states.iter().map(SiteState::particles).sum()
    }

    pub fn sleeping_count(&self) -> usize {
        self.states
            .iter()
            .filter(|s| matches!(s, SiteState::Sleeping))
            .count()
    }

    pub fn occupied_count(&self) -> usize {
        self.states
            .iter()
            .filter(|s| !matches!(s, SiteState::Empty))
            .count()
    }

    /// Set of occupied sites.
    pub fn support(&self) -> OccupiedSet {
        let mut s = OccupiedSet::empty(self.states.len());
        for (x, state) in self.states.iter().enumerate() {
            if !matches!(state, SiteState::Empty) {
                s.insert(x);
            }
        }
        s
    }

    /// Coordinate-wise comparison in the order `0 < s < 1 < 2 < ...`.
    pub fn dominated_by(&self, other: &Configuration) -> bool {
        self.states
            .iter()
            .zip(&other.states)
            .all(|(a, b)| a.rank() <= b.rank())
    }
}

/// Deterministic site-selection policy for stabilization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectionRule {
    LowestIndex,
    HighestIndex,
    Random,
}

/// Chain parameters: the sleep rate and the selection policy.
#[derive(Debug, Clone, Copy)]
pub struct ArwParams {
    pub lambda: f64,
    pub rule: SelectionRule,
    /// Hard cap on stabilization instructions.
    pub step_cap: u64,
}

impl ArwParams {
    pub fn new(lambda: f64) -> Result<Self> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::Parameter(format!(
                "sleep rate must be positive and finite, got {lambda}"
            )));
        }
        Ok(ArwParams {
            lambda,
            rule: SelectionRule::LowestIndex,
            step_cap: DEFAULT_STEP_CAP,
        })
    }

    pub fn with_rule(mut self, rule: SelectionRule) -> Self {
        self.rule = rule;
        self
    }
}

/// Keys order particles inside the engine: inserted particles sort above
/// configuration particles and among themselves by insertion index.
const INSERT_KEY_BASE: u64 = 1 << 32;

struct Particle {
    key: u64,
    rng: SimStream,
}

enum Sleeper {
    /// Sleeper present in the initial configuration; gets a fresh stream
    /// when first woken.
    Seed,
    /// Particle that fell asleep during this stabilization.
    Stored(Particle),
}

struct Slot {
    sleeping: Option<Sleeper>,
    active: Vec<Particle>,
}

struct Stabilizer<'a> {
    net: &'a Network,
    params: ArwParams,
    family: StreamFamily,
    slots: Vec<Slot>,
    /// Sites with at least one active particle.
    active_sites: BTreeSet<usize>,
    /// Sites with at least two particles.
    crowded_sites: BTreeSet<usize>,
    selection: SimStream,
    sleep_prob: f64,
    instructions: u64,
    slot_stride: u64,
}

impl<'a> Stabilizer<'a> {
    fn from_configuration(
        net: &'a Network,
        params: ArwParams,
        family: StreamFamily,
        config: &Configuration,
    ) -> Result<Self> {
        let n = net.len();
        if config.len() != n {
            return Err(Error::Domain(format!(
                "configuration has {} sites, network has {n}",
                config.len()
            )));
        }
        let stride = n as u64 + 2;
        let mut slots: Vec<Slot> = Vec::with_capacity(n);
        let mut active_sites = BTreeSet::new();
        let mut crowded_sites = BTreeSet::new();
        for (x, state) in config.states().iter().enumerate() {
            let mut slot = Slot {
                sleeping: None,
                active: Vec::new(),
            };
            match state {
                SiteState::Empty => {}
                SiteState::Sleeping => slot.sleeping = Some(Sleeper::Seed),
                SiteState::Active(k) => {
                    for j in 0..*k {
                        let key = x as u64 * stride + j as u64 + 1;
                        slot.active.push(Particle {
                            key,
                            rng: family.stream(WAKE_STREAM_BASE + key),
                        });
                    }
                    active_sites.insert(x);
                    if *k >= 2 {
                        crowded_sites.insert(x);
                    }
                }
            }
            slots.push(slot);
        }
        Ok(Stabilizer {
            net,
            params,
            family,
            slots,
            active_sites,
            crowded_sites,
            selection: family.stream(SELECTION_STREAM),
            sleep_prob: params.lambda / (1.0 + params.lambda),
            instructions: 0,
            slot_stride: stride,
        })
    }

    /// Insert one particle whose stream is the walk stream of `index`; its
    /// birth site is the stream's first draw.
    fn insert(&mut self, index: u64) {
        let mut rng = self.family.stream(index);
        let birth = draw_birth(self.net, &mut rng);
        self.arrive(
            Particle {
                key: INSERT_KEY_BASE + index,
                rng,
            },
            birth,
        );
    }

    fn arrive(&mut self, p: Particle, site: usize) {
        let slot = &mut self.slots[site];
        if let Some(sleeper) = slot.sleeping.take() {
            let woken = match sleeper {
                Sleeper::Stored(particle) => particle,
                Sleeper::Seed => {
                    let key = site as u64 * self.slot_stride + 1;
                    Particle {
                        key,
                        rng: self.family.stream(WAKE_STREAM_BASE + key),
                    }
                }
            };
            slot.active.push(woken);
        }
        slot.active.push(p);
        self.active_sites.insert(site);
        if slot.active.len() >= 2 {
            self.crowded_sites.insert(site);
        }
    }

    fn pick(&mut self, crowded_only: bool) -> Option<usize> {
        let set = if crowded_only {
            &self.crowded_sites
        } else {
            &self.active_sites
        };
        if set.is_empty() {
            return None;
        }
        Some(match self.params.rule {
            SelectionRule::LowestIndex => *set.first().unwrap(),
            SelectionRule::HighestIndex => *set.last().unwrap(),
            SelectionRule::Random => {
                let k = self.selection.next_below(set.len() as u64) as usize;
                *set.iter().nth(k).unwrap()
            }
        })
    }

    fn charge(&mut self) -> Result<()> {
        self.instructions += 1;
        if self.instructions > self.params.step_cap {
            return Err(Error::Runaway {
                cap: self.params.step_cap,
            });
        }
        Ok(())
    }

    /// Move the youngest particle at `site` by one kernel step.
    fn topple(&mut self, site: usize) -> Result<()> {
        self.charge()?;
        let slot = &mut self.slots[site];
        let idx = slot
            .active
            .iter()
            .enumerate()
            .max_by_key(|(_, p)| p.key)
            .map(|(i, _)| i)
            .expect("topple on a site without actives");
        let mut p = slot.active.swap_remove(idx);
        if slot.active.len() < 2 {
            self.crowded_sites.remove(&site);
        }
        if slot.active.is_empty() {
            self.active_sites.remove(&site);
        }
        if let Some(next) = draw_step(self.net, site, &mut p.rng) {
            self.arrive(p, next);
        }
        Ok(())
    }

    /// Resolve a lone active particle: it sleeps with probability
    /// `lambda / (1 + lambda)`, otherwise takes a kernel step.
    fn resolve_lone(&mut self, site: usize) -> Result<()> {
        self.charge()?;
        let slot = &mut self.slots[site];
        debug_assert_eq!(slot.active.len(), 1);
        debug_assert!(slot.sleeping.is_none());
        let mut p = slot.active.pop().unwrap();
        self.active_sites.remove(&site);
        if p.rng.next_f64() < self.sleep_prob {
            self.slots[site].sleeping = Some(Sleeper::Stored(p));
            return Ok(());
        }
        if let Some(next) = draw_step(self.net, site, &mut p.rng) {
            self.arrive(p, next);
        }
        Ok(())
    }

    /// Stage (i): only particles sharing a site move, so no sleep flip is
    /// ever drawn, until every site holds at most one particle.
    fn run_stage_one(&mut self) -> Result<()> {
        while let Some(site) = self.pick(true) {
            self.topple(site)?;
        }
        Ok(())
    }

    /// Full stabilization to a stable configuration.
    fn run_to_stable(&mut self) -> Result<()> {
        while let Some(site) = self.pick(false) {
            if self.slots[site].active.len() >= 2 {
                self.topple(site)?;
            } else {
                self.resolve_lone(site)?;
            }
        }
        Ok(())
    }

    fn snapshot(&self) -> Configuration {
        let states = self
            .slots
            .iter()
            .map(|slot| {
                if !slot.active.is_empty() {
                    SiteState::Active(slot.active.len() as u32)
                } else if slot.sleeping.is_some() {
                    SiteState::Sleeping
                } else {
                    SiteState::Empty
                }
            })
            .collect();
        Configuration::from_states(states)
    }
}

/// Stabilize an arbitrary configuration to a stable one. Configuration
/// particles draw from streams keyed by their site, so the sample path is a
/// pure function of `(configuration, family)`.
pub fn stabilize(
    net: &Network,
    params: &ArwParams,
    config: &Configuration,
    family: StreamFamily,
) -> Result<Configuration> {
    let mut engine = Stabilizer::from_configuration(net, *params, family, config)?;
    let before = config.total_particles();
    engine.run_to_stable()?;
    let out = engine.snapshot();
    debug_assert!(out.total_particles() <= before);
    Ok(out)
}

/// One chain step: add an active particle at a `nu`-distributed site (the
/// walk stream of `step_index` supplies all of its randomness), then
/// stabilize.
pub fn arw_step(
    net: &Network,
    params: &ArwParams,
    config: &Configuration,
    family: StreamFamily,
    step_index: u64,
) -> Result<Configuration> {
    if !config.is_stable() {
        return Err(Error::Domain("chain step requires a stable configuration".into()));
    }
    let mut engine = Stabilizer::from_configuration(net, *params, family, config)?;
    engine.insert(step_index);
    engine.run_to_stable()?;
    Ok(engine.snapshot())
}

/// Two-stage stabilization of an arbitrary configuration: returns the
/// intermediate state `zeta` (every site holds at most one particle; no
/// sleep occurred yet) and the final stable state `xi`.
pub fn two_stage_trace(
    net: &Network,
    params: &ArwParams,
    config: &Configuration,
    family: StreamFamily,
) -> Result<(Configuration, Configuration)> {
    let mut engine = Stabilizer::from_configuration(net, *params, family, config)?;
    engine.run_stage_one()?;
    let zeta = engine.snapshot();
    debug_assert!(zeta
        .states()
        .iter()
        .all(|s| s.particles() <= 1));
    engine.run_to_stable()?;
    Ok((zeta, engine.snapshot()))
}

/// Insert `count` particles (walk streams `1..=count`) into a stable
/// configuration, then run the two-stage stabilization. Started from the
/// all-empty configuration, the support of `zeta` equals the IDLA set
/// `S_count` driven by the same family, run for run.
pub fn two_stage_insert_trace(
    net: &Network,
    params: &ArwParams,
    base: &Configuration,
    count: u64,
    family: StreamFamily,
) -> Result<(Configuration, Configuration)> {
    if !base.is_stable() {
        return Err(Error::Domain("insertion base must be stable".into()));
    }
    let mut engine = Stabilizer::from_configuration(net, *params, family, base)?;
    for t in 1..=count {
        engine.insert(t);
    }
    engine.run_stage_one()?;
    let zeta = engine.snapshot();
    engine.run_to_stable()?;
    Ok((zeta, engine.snapshot()))
}

/// Run the chain for `steps` steps from `start`, recording the occupied and
/// sleeping counts after every step.
pub fn run_chain(
    net: &Network,
    params: &ArwParams,
    start: &Configuration,
    steps: u64,
    family: StreamFamily,
) -> Result<(Vec<(u64, usize, usize)>, Configuration)> {
    let mut config = start.clone();
    let mut rows = Vec::with_capacity(steps as usize);
    for t in 1..=steps {
        config = arw_step(net, params, &config, family, t)?;
        rows.push((t, config.occupied_count(), config.sleeping_count()));
    }
    Ok((rows, config))
}
