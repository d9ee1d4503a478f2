//! Orbits with an exact base-κ digit stream for the expanding coordinate.
//!
//! Iterating `s ↦ κs mod 1` in floating point loses one base-κ digit per
//! step, so after about 53/log₂κ steps the orbit collapses onto a dyadic
//! point. Here `s` is a window of the next `L` digits of a random
//! expansion; each step drops the leading digit and appends a fresh one.
//! The contracting coordinate `t` is iterated in floating point, where
//! errors shrink.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::map::{Affine, BakerMap};

/// Initial distribution of orbit starting points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialMeasure {
    Lebesgue,
    /// Density `(1 + c·s) / (1 + c/2)` in s, uniform in t.
    Affine { c: f64 },
}

impl InitialMeasure {
    /// Inverse CDF in s.
    fn sample_s(&self, u: f64) -> Option<f64> {
        match self {
            InitialMeasure::Lebesgue => None,
            InitialMeasure::Affine { c } => {
                if c.abs() < 1e-12 {
                    return Some(u);
                }
                let y = u * (1.0 + c / 2.0);
                Some(((1.0 + 2.0 * c * y).sqrt() - 1.0) / c)
            }
        }
    }

    /// Density `dν/dm` at `(s, t)`.
    pub fn density(&self, s: f64, _t: f64) -> f64 {
        match self {
            InitialMeasure::Lebesgue => 1.0,
            InitialMeasure::Affine { c } => (1.0 + c * s) / (1.0 + c / 2.0),
        }
    }
}

#[derive(Clone, Debug)]
struct BranchData {
    tau: Affine,
    flip: bool,
}

/// Shared per-map constants.
#[derive(Clone, Debug)]
pub struct OrbitKernel {
    kappa: u64,
    /// κ^{L−1}
    top: u64,
    /// κ^L as f64
    full: f64,
    len: u32,
    /// digits per draw and κ^{batch}
    batch: u32,
    batch_range: u64,
    branches: Vec<BranchData>,
}

impl OrbitKernel {
    pub fn new(map: &BakerMap) -> Self {
        let kappa = map.kappa() as u64;
        let mut len = 0u32;
        let mut full: u64 = 1;
        while let Some(next) = full.checked_mul(kappa) {
            if next > 1u64 << 53 {
                break;
            }
            full = next;
            len += 1;
        }
        let mut batch = 0u32;
        let mut batch_range: u64 = 1;
        while batch_range * kappa <= 1u64 << 32 {
            batch_range *= kappa;
            batch += 1;
        }
        let branches = (0..map.kappa())
            .map(|b| BranchData { tau: map.t_branch(b), flip: map.layout()[b].flip_horizontal })
            .collect();
        OrbitKernel { kappa, top: full / kappa, full: full as f64, len, batch, batch_range, branches }
    }

    /// Digits carried in the window.
    pub fn window_len(&self) -> u32 {
        self.len
    }

    /// Orbit for sample `index` of the stream keyed by `seed`.
    pub fn start(&self, init: &InitialMeasure, seed: u64, index: u64) -> Orbit<'_> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index);
        let mut orbit = Orbit { k: self, rng, pool: 0, pool_left: 0, window: 0, flip: false, t: 0.0 };
        match init.sample_s(orbit.rng.random::<f64>()) {
            None => {
                for _ in 0..self.len {
                    let d = orbit.digit();
                    orbit.window = orbit.window * self.kappa + d;
                }
            }
            Some(s) => {
                orbit.window = ((s * self.full).floor() as u64).min(self.full as u64 - 1);
            }
        }
        orbit.t = orbit.rng.random::<f64>();
        orbit
    }
}

pub struct Orbit<'a> {
    k: &'a OrbitKernel,
    rng: ChaCha8Rng,
    pool: u64,
    pool_left: u32,
    window: u64,
    flip: bool,
    t: f64,
}

impl Orbit<'_> {
    fn digit(&mut self) -> u64 {
        if self.pool_left == 0 {
            self.pool = self.rng.random_range(0..self.k.batch_range);
            self.pool_left = self.k.batch;
        }
        let d = self.pool % self.k.kappa;
        self.pool /= self.k.kappa;
        self.pool_left -= 1;
        d
    }

    pub fn s(&self) -> f64 {
        let sigma = self.window as f64 / self.k.full;
        if self.flip {
            1.0 - sigma
        } else {
            sigma
        }
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn step(&mut self) {
        let k = self.k;
        let lead = self.window / k.top;
        let b = if self.flip { k.kappa - 1 - lead } else { lead } as usize;
        let d = self.digit();
        self.window = (self.window - lead * k.top) * k.kappa + d;
        let br = &k.branches[b];
        self.flip ^= br.flip;
        self.t = br.tau.apply(self.t);
    }
}
