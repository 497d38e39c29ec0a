//! Deterministic, replayable randomness.
//!
//! Every walk (and every auxiliary decision stream) is a pure function of
//! `(master seed, stream index)`, so the grand coupling can regenerate any
//! walk prefix on demand without storing trajectories, and experiments are
//! reproducible bit-for-bit regardless of scheduling.
//!
//! The generator is a keyed SplitMix64 sequence: the `(seed, index)` pair is
//! hashed into an initial state and a per-stream odd increment, and each
//! draw finalizes the counter with the Stafford mix13 permutation. Not
//! cryptographic; stable across platforms.

use crate::error::{Error, Result};
use crate::network::Network;

/// Default hard cap on walk steps; reaching it signals a degenerate kernel
/// that slipped past validation.
pub const DEFAULT_STEP_CAP: u64 = 1_000_000_000;

/// Stream-index stride between Monte Carlo replicas.
pub const REPLICA_STRIDE: u64 = 1 << 32;

/// Base of the stream-index range used for sleepers woken from an initial
/// configuration (disjoint from walk indices).
pub const WAKE_STREAM_BASE: u64 = 1 << 62;

/// Stream index used for random site-selection decisions.
pub const SELECTION_STREAM: u64 = (1 << 62) + (1 << 61);

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// One deterministic stream of pseudo-random draws.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimStream {
    state: u64,
    gamma: u64,
}

impl SimStream {
    /// Stream determined by `(seed, index)`; distinct indices get unrelated
    /// starting states and increments.
    pub fn new(seed: u64, index: u64) -> Self {
        let state = mix64(seed ^ mix64(index ^ 0x9E37_79B9_7F4A_7C15));
        let gamma = mix64(index.wrapping_add(mix64(seed ^ 0xDA94_2042_E4DD_58B5))) | 1;
        SimStream { state, gamma }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(self.gamma);
        mix64(self.state)
    }

    /// Uniform draw in `[0, 1)` with 53 random bits.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / 9_007_199_254_740_992.0)
    }

    /// Uniform draw in `0..n`.
    #[inline]
    pub fn next_below(&mut self, n: u64) -> u64 {
        debug_assert!(n > 0);
        self.next_u64() % n
    }
}

/// Identifier of one walk's randomness: the stream of a `(K, nu)`-walk is a
/// pure function of this pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WalkStream {
    pub seed: u64,
    pub index: u64,
}

/// Handle for walk index `index` under master seed `seed`.
pub fn walk_stream(seed: u64, index: u64) -> WalkStream {
    WalkStream { seed, index }
}

impl WalkStream {
    pub fn stream(&self) -> SimStream {
        SimStream::new(self.seed, self.index)
    }
}

/// A family of streams sharing one master seed, with a base offset so that
/// replicas can carve out disjoint index ranges.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamFamily {
    pub seed: u64,
    pub base: u64,
}

impl StreamFamily {
    pub fn new(seed: u64) -> Self {
        StreamFamily { seed, base: 0 }
    }

    pub fn with_base(seed: u64, base: u64) -> Self {
        StreamFamily { seed, base }
    }

    /// Stream family for Monte Carlo replica `r`.
    pub fn replica(seed: u64, r: u64) -> Self {
        StreamFamily {
            seed,
            base: r.wrapping_mul(REPLICA_STRIDE),
        }
    }

    pub fn walk(&self, index: u64) -> WalkStream {
        WalkStream {
            seed: self.seed,
            index: self.base.wrapping_add(index),
        }
    }

    pub fn stream(&self, index: u64) -> SimStream {
        SimStream::new(self.seed, self.base.wrapping_add(index))
    }
}

/// Draw the birth site of a walk (a `nu` sample).
#[inline]
pub(crate) fn draw_birth(net: &Network, rng: &mut SimStream) -> usize {
    let cum = net.nu_cum();
    let u = rng.next_f64();
    let mut i = cum.partition_point(|&c| c <= u);
    if i >= cum.len() {
        // Floating-point guard: total mass can fall slightly below the draw.
        i = net
            .nu()
            .iter()
            .rposition(|&p| p > 0.0)
            .expect("insertion law has positive mass");
    }
    i
}

/// Draw the next step of a walk sitting at `site`: `Some(next)` or `None`
/// for death. One uniform draw per step; the kernel row's deficit is the
/// death probability.
#[inline]
pub(crate) fn draw_step(net: &Network, site: usize, rng: &mut SimStream) -> Option<usize> {
    let row = net.row_raw(site);
    let u = rng.next_f64();
    if u >= row.row_sum {
        return None;
    }
    let k = row.cum.partition_point(|&c| c <= u);
    Some(row.cols[k] as usize)
}

/// A lazily generated `(K, nu)`-walk: yields the visited sites
/// `x_0, x_1, ..., x_r` and then reports death. Reconstructible at any time
/// from its [`WalkStream`].
#[derive(Debug, Clone)]
pub struct Trajectory<'a> {
    net: &'a Network,
    rng: SimStream,
    at: Option<usize>,
    born: bool,
    steps: u64,
    cap: u64,
}

impl<'a> Trajectory<'a> {
    pub fn new(net: &'a Network, stream: WalkStream) -> Self {
        Self::with_cap(net, stream, DEFAULT_STEP_CAP)
    }

    pub fn with_cap(net: &'a Network, stream: WalkStream, cap: u64) -> Self {
        Trajectory {
            net,
            rng: stream.stream(),
            at: None,
            born: false,
            steps: 0,
            cap,
        }
    }

    /// Advance to the next visited site; `Ok(None)` marks death. Errs with
    /// [`Error::Runaway`] once the step cap is exceeded.
    pub fn next_site(&mut self) -> Result<Option<usize>> {
        if !self.born {
            self.born = true;
            let x = draw_birth(self.net, &mut self.rng);
            self.at = Some(x);
            return Ok(Some(x));
        }
        let Some(site) = self.at else {
            return Ok(None);
        };
        if self.steps >= self.cap {
            return Err(Error::Runaway { cap: self.cap });
        }
        self.steps += 1;
        self.at = draw_step(self.net, site, &mut self.rng);
        Ok(self.at)
    }

    /// Materialize the full site sequence (death marker dropped).
    pub fn collect_sites(mut self) -> Result<Vec<usize>> {
        let mut out = Vec::new();
        while let Some(x) = self.next_site()? {
            out.push(x);
        }
        Ok(out)
    }

    /// Number of kernel steps consumed so far (excludes the birth).
    pub fn steps_taken(&self) -> u64 {
        self.steps
    }
}

/// Sample one full walk and return its visited sites.
pub fn sample_walk(net: &Network, stream: WalkStream) -> Result<Vec<usize>> {
    Trajectory::new(net, stream).collect_sites()
}
