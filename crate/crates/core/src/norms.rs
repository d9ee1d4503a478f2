//! Weak, strong-stable and strong-unstable norm estimates.
//!
//! Each norm is a supremum over stable leaves (or matched leaf pairs) of a
//! linear functional maximized over a ball of test functions. The leaf
//! supremum is taken over a finite sample and the ball is discretized on a
//! uniform leaf grid, so every estimate is a lower bound that grows with
//! the resolution.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::grid::{mollify, multiply, GridFunction, HolderParams};
use crate::suite::multiplier_cases;
use crate::lp::{BallSolver, TestBall};

/// Anything that integrates against test functions on stable leaves.
pub trait LeafFunctional {
    /// Weights `w_k = ∫_W f·φ_k` of the leaf at `s` against the hat basis of
    /// the uniform grid `k/n`, so that `∫_W f φ = Σ w_k φ(k/n)` for φ
    /// piecewise linear on that grid.
    fn leaf_weights(&self, s: f64, n: usize) -> Vec<f64>;
}

impl LeafFunctional for GridFunction {
    fn leaf_weights(&self, s: f64, n: usize) -> Vec<f64> {
        GridFunction::leaf_weights(self, s, n)
    }
}

impl<T: LeafFunctional + ?Sized> LeafFunctional for &T {
    fn leaf_weights(&self, s: f64, n: usize) -> Vec<f64> {
        (**self).leaf_weights(s, n)
    }
}

impl<T: LeafFunctional + ?Sized> LeafFunctional for Box<T> {
    fn leaf_weights(&self, s: f64, n: usize) -> Vec<f64> {
        (**self).leaf_weights(s, n)
    }
}

/// Finite linear combination of functionals.
pub struct Combination<'a> {
    pub terms: Vec<(f64, &'a dyn LeafFunctional)>,
}

impl<'a> Combination<'a> {
    pub fn difference(a: &'a dyn LeafFunctional, b: &'a dyn LeafFunctional) -> Self {
        Combination { terms: vec![(1.0, a), (-1.0, b)] }
    }
}

impl LeafFunctional for Combination<'_> {
    fn leaf_weights(&self, s: f64, n: usize) -> Vec<f64> {
        let mut w = vec![0.0; n + 1];
        for (c, f) in &self.terms {
            for (x, y) in w.iter_mut().zip(f.leaf_weights(s, n)) {
                *x += c * y;
            }
        }
        w
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormConfig {
    /// Leaf grid cells N.
    pub leaf_grid: usize,
    /// Uniform leaf samples M (leaves at `j/M`).
    pub leaf_samples: usize,
    /// κ-adic leaves `j/κ^ℓ` for `ℓ ≤ kadic_level` join the sample.
    pub kadic_level: u32,
    pub kappa: usize,
    /// Pair base points at `j/pair_bases`.
    pub pair_bases: usize,
    /// Pair distances `2^{-k}` for `k ≤ pair_scales`.
    pub pair_scales: u32,
    pub alpha: f64,
    pub beta: f64,
    pub holder_band: usize,
    pub long_range_pairs: usize,
}

impl Default for NormConfig {
    fn default() -> Self {
        NormConfig {
            leaf_grid: 128,
            leaf_samples: 32,
            kadic_level: 4,
            kappa: 2,
            pair_bases: 16,
            pair_scales: 10,
            alpha: 0.5,
            beta: 0.5,
            holder_band: 32,
            long_range_pairs: 512,
        }
    }
}

impl NormConfig {
    pub fn leaves(&self) -> Vec<f64> {
        let mut v: Vec<f64> = (0..=self.leaf_samples)
            .map(|j| j as f64 / self.leaf_samples as f64)
            .collect();
        let mut denom = 1usize;
        for _ in 0..self.kadic_level {
            denom *= self.kappa;
            v.extend((0..=denom).map(|j| j as f64 / denom as f64));
        }
        sort_dedup(v)
    }

    pub fn pairs(&self) -> Vec<(f64, f64)> {
        let mut dists: Vec<f64> = (0..=self.pair_scales).map(|k| 0.5f64.powi(k as i32)).collect();
        let mut kd = 1.0;
        for _ in 0..self.kadic_level {
            kd /= self.kappa as f64;
            dists.push(kd);
        }
        let dists = sort_dedup(dists);
        let mut pairs = Vec::new();
        for j in 0..=self.pair_bases {
            let s = j as f64 / self.pair_bases as f64;
            for &d in &dists {
                if s + d <= 1.0 + 1e-15 {
                    pairs.push((s, (s + d).min(1.0)));
                }
            }
        }
        pairs
    }

    pub fn lipschitz_ball(&self) -> TestBall {
        TestBall::lipschitz(self.leaf_grid)
    }

    pub fn holder_ball(&self) -> TestBall {
        let mut ball = TestBall::holder(self.alpha, self.leaf_grid);
        if self.leaf_grid > 64 {
            ball.band = self.holder_band;
            ball.long_range = self.long_range_pairs;
        }
        ball
    }
}

fn sort_dedup(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v.dedup_by(|a, b| (*a - *b).abs() < 1e-15);
    v
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub leaf: f64,
    /// Second leaf of the maximizing pair (unstable norm only).
    pub partner: Option<f64>,
    pub phi: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Resolution {
    pub leaf_grid: usize,
    pub leaf_samples: usize,
    pub leaf_count: usize,
    pub pair_count: usize,
    pub holder_band: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormReport {
    pub weak: f64,
    pub strong_stable: f64,
    pub strong_unstable: f64,
    pub strong_total: f64,
    pub weak_witness: Witness,
    pub stable_witness: Witness,
    pub unstable_witness: Witness,
    pub resolution: Resolution,
}

/// Norm estimator with warm-started ball solvers.
pub struct NormEstimator {
    pub config: NormConfig,
    leaves: Vec<f64>,
    pairs: Vec<(f64, f64)>,
    lipschitz: BallSolver,
    holder: BallSolver,
}

fn argmax_update(best: &mut (f64, Witness), value: f64, leaf: f64, partner: Option<f64>, phi: Vec<f64>) {
    if value > best.0 {
        *best = (value, Witness { leaf, partner, phi });
    }
}

fn empty_witness() -> (f64, Witness) {
    (0.0, Witness { leaf: 0.0, partner: None, phi: Vec::new() })
}

impl NormEstimator {
    pub fn new(config: NormConfig) -> Self {
        let lipschitz = BallSolver::new(&config.lipschitz_ball());
        let holder = BallSolver::new(&config.holder_ball());
        NormEstimator { leaves: config.leaves(), pairs: config.pairs(), config, lipschitz, holder }
    }

    pub fn leaves(&self) -> &[f64] {
        &self.leaves
    }

    pub fn resolution(&self) -> Resolution {
        Resolution {
            leaf_grid: self.config.leaf_grid,
            leaf_samples: self.config.leaf_samples,
            leaf_count: self.leaves.len(),
            pair_count: self.pairs.len(),
            holder_band: self.holder.ball().band,
        }
    }

    /// `(|f|_w, ‖f‖_s)` with witnesses; both share the leaf weights.
    pub fn leafwise(&mut self, f: &dyn LeafFunctional) -> Result<((f64, Witness), (f64, Witness))> {
        let n = self.config.leaf_grid;
        let mut weak = empty_witness();
        let mut stable = empty_witness();
        for &s in &self.leaves {
            let w = f.leaf_weights(s, n);
            let a = self.lipschitz.maximize(&w)?;
            argmax_update(&mut weak, a.value, s, None, a.phi);
            let b = self.holder.maximize(&w)?;
            argmax_update(&mut stable, b.value, s, None, b.phi);
        }
        Ok((weak, stable))
    }

    pub fn weak(&mut self, f: &dyn LeafFunctional) -> Result<f64> {
        let n = self.config.leaf_grid;
        let mut best: f64 = 0.0;
        for &s in &self.leaves {
            let w = f.leaf_weights(s, n);
            best = best.max(self.lipschitz.maximize(&w)?.value);
        }
        Ok(best)
    }

    pub fn strong_stable(&mut self, f: &dyn LeafFunctional) -> Result<f64> {
        Ok(self.leafwise(f)?.1 .0)
    }

    pub fn unstable_with_witness(&mut self, f: &dyn LeafFunctional) -> Result<(f64, Witness)> {
        let n = self.config.leaf_grid;
        let beta = self.config.beta;
        let mut cache: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
        let mut best = empty_witness();
        for &(s1, s2) in &self.pairs {
            for s in [s1, s2] {
                cache.entry(s.to_bits()).or_insert_with(|| f.leaf_weights(s, n));
            }
            let w1 = &cache[&s1.to_bits()];
            let w2 = &cache[&s2.to_bits()];
            let diff: Vec<f64> = w1.iter().zip(w2).map(|(a, b)| a - b).collect();
            let opt = self.lipschitz.maximize(&diff)?;
            let d = (s2 - s1).abs();
            argmax_update(&mut best, opt.value / d.powf(beta), s1, Some(s2), opt.phi);
        }
        Ok(best)
    }

    pub fn strong_unstable(&mut self, f: &dyn LeafFunctional) -> Result<f64> {
        Ok(self.unstable_with_witness(f)?.0)
    }

    pub fn report(&mut self, f: &dyn LeafFunctional) -> Result<NormReport> {
        let ((weak, ww), (stable, sw)) = self.leafwise(f)?;
        let (unstable, uw) = self.unstable_with_witness(f)?;
        Ok(NormReport {
            weak,
            strong_stable: stable,
            strong_unstable: unstable,
            strong_total: stable + unstable,
            weak_witness: ww,
            stable_witness: sw,
            unstable_witness: uw,
            resolution: self.resolution(),
        })
    }

    /// `‖f‖_B = ‖f‖_s + ‖f‖_u`.
    pub fn strong(&mut self, f: &dyn LeafFunctional) -> Result<f64> {
        Ok(self.strong_stable(f)? + self.strong_unstable(f)?)
    }
}

/// Lower estimate of `sup |Af|_w / ‖f‖_B` over a family of test densities.
pub fn triple_operator_norm<A>(family: &[GridFunction], est: &mut NormEstimator, apply: A) -> Result<f64>
where
    A: Fn(&GridFunction) -> Result<Box<dyn LeafFunctional>>,
{
    let mut best: f64 = 0.0;
    for f in family {
        let strong = est.strong(f)?;
        if strong <= 0.0 {
            continue;
        }
        let af = apply(f)?;
        best = best.max(est.weak(&*af)? / strong);
    }
    Ok(best)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundRow {
    pub case: String,
    pub lhs: f64,
    pub rhs: f64,
    pub pass: bool,
}

/// `‖gf‖_B ≤ 3|g|_{C¹}‖f‖_B` on the shipped multiplier cases.
pub fn multiplier_check(est: &mut NormEstimator, ns: usize, nt: usize, slack: f64) -> Result<Vec<BoundRow>> {
    let mut rows = Vec::new();
    for (name, g, f) in multiplier_cases() {
        let g = GridFunction::from_fn(ns, nt, g);
        let f = GridFunction::from_fn(ns, nt, f);
        let lhs = est.strong(&multiply(&g, &f))?;
        let rhs = 3.0 * g.c1_norm() * est.strong(&f)?;
        rows.push(BoundRow { case: name.into(), lhs, rhs, pass: lhs <= rhs * slack });
    }
    Ok(rows)
}

/// `‖g_ε − f‖_B ≤ 4ε^{β′−β}|f|_{C^{β′}(Wᵘ)}` for each `ε`.
pub fn mollification_check(
    est: &mut NormEstimator,
    cases: &[(String, GridFunction)],
    params: &HolderParams,
    eps: &[f64],
    slack: f64,
) -> Result<Vec<BoundRow>> {
    let mut rows = Vec::new();
    for (name, f) in cases {
        let hf = f.unstable_holder_norm(params.beta_prime);
        for &e in eps {
            let g = mollify(f, e, params)?;
            let lhs = est.strong(&g.add(&f.scale(-1.0))?)?;
            let rhs = 4.0 * e.powf(params.beta_prime - params.beta) * hf;
            rows.push(BoundRow { case: format!("{name}@{e}"), lhs, rhs, pass: lhs <= rhs * slack });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lp::maximize_over_ball;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small() -> NormConfig {
        NormConfig { leaf_grid: 64, leaf_samples: 16, pair_bases: 8, ..NormConfig::default() }
    }

    #[test]
    fn constant_one() {
        let mut est = NormEstimator::new(small());
        let one = GridFunction::constant(32, 32, 1.0);
        let r = est.report(&one).unwrap();
        assert!((r.weak - 1.0).abs() < 1e-12);
        assert!((r.strong_stable - 1.0).abs() < 1e-12);
        assert!(r.strong_unstable.abs() < 1e-12);
        assert_eq!(r.strong_total, r.strong_stable + r.strong_unstable);
    }

    #[test]
    fn horizontal_coordinate() {
        let mut est = NormEstimator::new(small());
        let f = GridFunction::from_fn(32, 32, |s, _| s);
        let r = est.report(&f).unwrap();
        // attained at s_W = 1, and for the pair (0, 1)
        assert!((r.weak - 1.0).abs() < 1e-12);
        assert!((r.strong_unstable - 1.0).abs() < 1e-12);
        assert_eq!(r.weak_witness.leaf, 1.0);
    }

    #[test]
    fn horizontal_invariant_has_no_unstable_part() {
        let mut est = NormEstimator::new(small());
        let f = GridFunction::from_fn(32, 32, |_, t| (5.0 * t).sin());
        assert!(est.strong_unstable(&f).unwrap() < 1e-14);
    }

    #[test]
    fn centered_vertical_coordinate_against_oracle() {
        let cfg = small();
        let mut est = NormEstimator::new(cfg.clone());
        let f = GridFunction::from_fn(32, 64, |_, t| t - 0.5);
        let weak = est.weak(&f).unwrap();
        let stable = est.strong_stable(&f).unwrap();
        // dense random-φ oracle on the same leaf grid: feasible points only
        let w = f.leaf_weights(0.5, cfg.leaf_grid);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut lower_w: f64 = 0.0;
        let mut lower_s: f64 = 0.0;
        for _ in 0..2000 {
            let b: f64 = rng.random();
            let k: f64 = rng.random_range(0.2..3.0);
            let c: f64 = rng.random_range(-1.0..1.0);
            // φ = a·clamp(k(t − 1/2) + c) rescaled into each ball
            let raw: Vec<f64> = (0..=64).map(|i| (k * (i as f64 / 64.0 - 0.5) + c).clamp(-1.0, 1.0)).collect();
            for (gamma, lower) in [(1.0, &mut lower_w), (0.5, &mut lower_s)] {
                let sup = raw.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
                let hol = crate::grid::holder_seminorm(&raw, gamma);
                let scale = ((1.0 - b) / sup).min(if hol > 0.0 { b / hol } else { f64::INFINITY });
                let val: f64 = w.iter().zip(&raw).map(|(x, y)| x * y * scale).sum();
                *lower = lower.max(val.abs());
            }
        }
        assert!(lower_w <= weak + 1e-6 && lower_s <= stable + 1e-6);
        assert!(weak > 0.9 * lower_w);
        // the LP value on a single leaf is what the estimator reports
        let direct = maximize_over_ball(&w, &cfg.lipschitz_ball()).unwrap().value;
        assert!((direct - weak).abs() < 1e-12);
    }

    #[test]
    fn domination_homogeneity_triangle() {
        let mut est = NormEstimator::new(small());
        let f = GridFunction::from_fn(32, 32, |s, t| (6.0 * s).sin() * (t - 0.3));
        let g = GridFunction::from_fn(32, 32, |s, t| s * s + (4.0 * t).cos());
        let rf = est.report(&f).unwrap();
        let rg = est.report(&g).unwrap();
        assert!(rf.weak <= rf.strong_stable + 1e-14);
        let r3 = est.report(&f.scale(-3.0)).unwrap();
        assert!((r3.strong_total - 3.0 * rf.strong_total).abs() < 1e-9);
        let sum = est.report(&f.add(&g).unwrap()).unwrap();
        assert!(sum.weak <= rf.weak + rg.weak + 1e-12);
        assert!(sum.strong_stable <= rf.strong_stable + rg.strong_stable + 1e-12);
        assert!(sum.strong_unstable <= rf.strong_unstable + rg.strong_unstable + 1e-12);
    }

    #[test]
    fn estimates_grow_with_resolution() {
        let f = GridFunction::from_fn(64, 64, |s, t| (9.0 * t).sin() * (1.0 + s));
        let mut last = (0.0, 0.0);
        for (n, m) in [(16, 4), (32, 8), (64, 16)] {
            let mut est = NormEstimator::new(NormConfig { leaf_grid: n, leaf_samples: m, ..small() });
            let (w, s) = (est.weak(&f).unwrap(), est.strong_stable(&f).unwrap());
            assert!(w >= last.0 - 1e-12 && s >= last.1 - 1e-12);
            last = (w, s);
        }
    }

    #[test]
    fn smoothed_front_unstable_norm_grows_as_front_sharpens() {
        let mut est = NormEstimator::new(small());
        let mut last = 0.0;
        for h in [1.0 / 8.0, 1.0 / 16.0, 1.0 / 32.0] {
            let f = GridFunction::from_fn(256, 8, move |s, _| ((s - 0.5) / h).clamp(-0.5, 0.5) + 0.5);
            let u = est.strong_unstable(&f).unwrap();
            assert!(u > last);
            last = u;
        }
    }

    #[test]
    fn operator_norm_examples() {
        let mut est = NormEstimator::new(small());
        let family = vec![
            GridFunction::from_fn(32, 32, |s, _| s),
            GridFunction::from_fn(32, 32, |s, t| (3.0 * s).cos() * t),
        ];
        let zero = triple_operator_norm(&family, &mut est, |_| {
            Ok(Box::new(GridFunction::constant(2, 2, 0.0)) as Box<dyn LeafFunctional>)
        })
        .unwrap();
        assert_eq!(zero, 0.0);
        let id = triple_operator_norm(&family, &mut est, |f| Ok(Box::new(f.clone()) as Box<dyn LeafFunctional>))
            .unwrap();
        assert!(id > 0.0 && id <= 1.0 + 1e-12);
    }

    #[test]
    fn multiplier_bound_holds() {
        let mut est = NormEstimator::new(small());
        for r in multiplier_check(&mut est, 64, 32, 1.05).unwrap() {
            assert!(r.pass, "{r:?}");
        }
    }

    #[test]
    fn mollification_bound_holds() {
        let mut est = NormEstimator::new(small());
        let p = HolderParams::new(0.5, 0.5, 0.75).unwrap();
        let f = GridFunction::from_fn(128, 16, |s, _| (s - 0.5).abs().powf(0.75));
        let rows = mollification_check(&mut est, &[("kink".into(), f)], &p, &[0.2, 0.1, 0.05], 1.05).unwrap();
        assert_eq!(rows.len(), 3);
        for r in rows {
            assert!(r.pass, "{r:?}");
        }
    }
}
