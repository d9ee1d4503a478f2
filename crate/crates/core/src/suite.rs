//! Shipped maps, densities and multipliers used by the checkers.

use std::f64::consts::PI;

use crate::grid::GridFunction;
use crate::map::BakerMap;

pub type Profile = fn(f64, f64) -> f64;

/// The three shipped `(κ, λ)` maps with the standard layout.
pub fn shipped_maps() -> Vec<BakerMap> {
    vec![
        BakerMap::with_lambda(2, 1, 2).unwrap(),
        BakerMap::with_lambda(2, 1, 4).unwrap(),
        BakerMap::with_lambda(3, 1, 8).unwrap(),
    ]
}

/// Twenty densities in `C¹(Wᵘ)`, smooth along horizontals.
pub fn density_profiles() -> Vec<(&'static str, Profile)> {
    vec![
        ("one", |_, _| 1.0),
        ("s", |s, _| s),
        ("t", |_, t| t),
        ("t_centered", |_, t| t - 0.5),
        ("sin_2pi_s", |s, _| (2.0 * PI * s).sin()),
        ("cos_2pi_s", |s, _| (2.0 * PI * s).cos()),
        ("sin_s_tilted", |s, t| (2.0 * PI * s).sin() * (1.0 + t) / 2.0),
        ("st", |s, t| s * t),
        ("affine_s", |s, _| 1.0 + s / 2.0),
        ("exp_cos", |s, t| (-s).exp() * (3.0 * t).cos()),
        ("parabola", |s, _| (s - 0.5) * (s - 0.5)),
        ("sin_mixed", |s, t| (4.0 * PI * s + t).sin()),
        ("cubic", |s, _| s * s * s - s),
        ("rational", |s, t| 1.0 / (1.0 + s + t)),
        ("cos_2pi_t", |_, t| (2.0 * PI * t).cos()),
        ("sin_cos", |s, t| (2.0 * PI * s).sin() * (2.0 * PI * t).cos()),
        ("soft_kink", |s, _| ((s - 0.5) * (s - 0.5) + 0.01).sqrt()),
        ("t2s", |s, t| t * t * s),
        ("high_freq", |s, _| 2.0 + (6.0 * PI * s).sin()),
        ("exp_minus_t", |s, t| s.exp() - t),
    ]
}

pub fn densities(ns: usize, nt: usize) -> Vec<(&'static str, GridFunction)> {
    density_profiles()
        .into_iter()
        .map(|(name, f)| (name, GridFunction::from_fn(ns, nt, f)))
        .collect()
}

/// Densities for the operator-difference estimate: constant, affine,
/// trigonometric and a smoothed kink.
pub fn perturbation_family(n: usize) -> Vec<GridFunction> {
    vec![
        GridFunction::from_fn(n, n, |_, _| 1.0),
        GridFunction::from_fn(n, n, |s, _| 1.0 + s / 2.0),
        GridFunction::from_fn(n, n, |s, t| (2.0 * PI * s).sin() * (1.0 + t) / 2.0),
        GridFunction::from_fn(n, n, |s, _| ((s - 0.5) * (s - 0.5) + 0.01).sqrt()),
    ]
}

/// Ten `(g, f)` cases for the multiplier bound, `g` Lipschitz on the square.
pub fn multiplier_cases() -> Vec<(&'static str, Profile, Profile)> {
    vec![
        ("s_times_one", |s, _| s, |_, _| 1.0),
        ("one_times_sin", |_, _| 1.0, |s, _| (2.0 * PI * s).sin()),
        ("t_times_s", |_, t| t, |s, _| s),
        ("cos_times_affine", |s, t| (s + t).cos(), |s, _| 1.0 + s / 2.0),
        ("half_sin_times_t", |s, _| 0.5 * (PI * s).sin(), |_, t| t - 0.5),
        ("exp_times_mixed", |s, t| (-(s + t)).exp(), |s, t| (4.0 * PI * s + t).sin()),
        ("poly_times_kink", |s, t| s * t - 0.3, |s, _| ((s - 0.5) * (s - 0.5) + 0.01).sqrt()),
        ("sin_t_times_cos_s", |_, t| (3.0 * t).sin(), |s, _| (2.0 * PI * s).cos()),
        ("ramp_times_st", |s, _| 1.0 - s, |s, t| s * t),
        ("bump_times_high", |s, t| 1.0 / (1.0 + s * s + t * t), |s, _| 2.0 + (6.0 * PI * s).sin()),
    ]
}
