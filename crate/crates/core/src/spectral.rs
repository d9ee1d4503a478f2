//! Spectral data of the Ulam matrix and the inequality checkers built on it.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::GridFunction;
use crate::map::BakerMap;
use crate::norms::{NormConfig, NormEstimator};
use crate::orbit::{InitialMeasure, OrbitKernel};
use crate::suite::Profile;
use crate::transfer::TransferOperator;
use crate::ulam::UlamModel;

/// `ρ = max{λ^α, κ^{−β}}`.
pub fn essential_radius(map: &BakerMap, alpha: f64, beta: f64) -> f64 {
    map.lambda_f64().powf(alpha).max((map.kappa() as f64).powf(-beta))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EigenConfig {
    pub tol: f64,
    pub max_iter: usize,
    /// Dimension of the deflated subspace iteration.
    pub block: usize,
    pub seed: u64,
    /// Relative size below which the deflated iterate counts as annihilated.
    pub collapse: f64,
}

impl Default for EigenConfig {
    fn default() -> Self {
        EigenConfig { tol: 1e-8, max_iter: 100_000, block: 4, seed: 0, collapse: 1e-13 }
    }
}

const STALL: f64 = 1e-10;

/// Fixed point of `μ ↦ μP` from Lebesgue, with the eigenvalue estimate
/// `|μP|₁ / |μ|₁`.
pub fn invariant_measure(model: &UlamModel, tol: f64, max_iter: usize) -> Result<(Vec<f64>, f64, usize)> {
    let mut mu = model.lebesgue();
    let total: f64 = mu.iter().sum();
    mu.iter_mut().for_each(|m| *m /= total);
    let mut best = (f64::INFINITY, 0);
    for it in 1..=max_iter {
        let next = model.push(&mu);
        let mass: f64 = next.iter().sum();
        let lead = mass / mu.iter().sum::<f64>();
        let next: Vec<f64> = next.iter().map(|m| m / mass).collect();
        let diff: f64 = next.iter().zip(&mu).map(|(a, b)| (a - b).abs()).sum();
        mu = next;
        if diff < tol {
            return Ok((mu, lead, it));
        }
        // rounding in the row sums leaves a residual jitter near 1e-13
        if diff < best.0 * 0.5 {
            best = (diff, it);
        } else if best.0 < STALL && it - best.1 > 50 {
            return Ok((mu, lead, it));
        }
    }
    Err(Error::NonConvergence(format!("invariant measure after {max_iter} iterations")))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SecondEigen {
    pub modulus: f64,
    /// Ritz values of the deflated operator, by decreasing modulus.
    pub ritz: Vec<[f64; 2]>,
    pub iterations: usize,
    /// The deflated iterates fell below the collapse threshold: the
    /// restricted operator is numerically nilpotent and `modulus` is the
    /// observed geometric decay rate.
    pub collapsed: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn deflate(v: &mut [f64], mu: &[f64]) {
    let m: f64 = v.iter().sum();
    v.iter_mut().zip(mu).for_each(|(x, p)| *x -= m * p);
}

/// Modified Gram–Schmidt in place. Returns the norms before normalization.
fn orthonormalize(vs: &mut [Vec<f64>]) -> Vec<f64> {
    let mut norms = Vec::with_capacity(vs.len());
    for i in 0..vs.len() {
        let (done, rest) = vs.split_at_mut(i);
        let v = &mut rest[0];
        for _ in 0..2 {
            for u in done.iter() {
                let c = dot(v, u);
                v.iter_mut().zip(u).for_each(|(x, y)| *x -= c * y);
            }
        }
        let n = dot(v, v).sqrt();
        if n > 0.0 {
            v.iter_mut().for_each(|x| *x /= n);
        }
        norms.push(n);
    }
    norms
}

/// Leading eigenvalues of `P` on the complement of the invariant direction
/// by block subspace iteration with Rayleigh–Ritz extraction.
pub fn second_eigen(model: &UlamModel, mu: &[f64], cfg: &EigenConfig) -> Result<SecondEigen> {
    let n = model.cell_count();
    let k = cfg.block.max(2).min(n.saturating_sub(1).max(1));
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut vs: Vec<Vec<f64>> = (0..k)
        .map(|_| {
            let mut v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            deflate(&mut v, mu);
            v
        })
        .collect();
    orthonormalize(&mut vs);
    let mut log_growth = 0.0;
    let mut prev_top = f64::NAN;
    for it in 1..=cfg.max_iter {
        let ws: Vec<Vec<f64>> = vs
            .par_iter()
            .map(|v| {
                let mut w = model.push(v);
                deflate(&mut w, mu);
                w
            })
            .collect();
        let h = DMatrix::from_fn(k, k, |i, j| dot(&ws[i], &vs[j]));
        let mut ritz: Vec<Complex64> = h.complex_eigenvalues().iter().copied().collect();
        ritz.sort_by(|a, b| b.norm().partial_cmp(&a.norm()).unwrap());
        let top = ritz[0].norm();
        if (top - prev_top).abs() <= cfg.tol {
            return Ok(SecondEigen {
                modulus: top,
                ritz: ritz.iter().map(|z| [z.re, z.im]).collect(),
                iterations: it,
                collapsed: false,
            });
        }
        prev_top = top;
        vs = ws;
        let norms = orthonormalize(&mut vs);
        log_growth += norms[0].max(f64::MIN_POSITIVE).ln();
        if log_growth < cfg.collapse.ln() || norms[0] == 0.0 {
            return Ok(SecondEigen {
                modulus: (log_growth / it as f64).exp(),
                ritz: Vec::new(),
                iterations: it,
                collapsed: true,
            });
        }
    }
    Err(Error::NonConvergence(format!("second eigenvalue after {} iterations", cfg.max_iter)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralReport {
    pub leading_eigenvalue: f64,
    /// Cell masses of the estimate of μ₀.
    #[serde(skip)]
    pub invariant_vector: Vec<f64>,
    pub second_modulus: f64,
    pub second_collapsed: bool,
    pub fitted_decay_rate: Option<f64>,
    pub peripheral_candidates: Vec<[f64; 2]>,
    pub rho: f64,
    pub power_iterations: usize,
    pub subspace_iterations: usize,
    pub cells: usize,
}

/// Leading eigendata with the decay rate fitted from the correlations of
/// `obs` with itself.
pub fn leading_eigs(
    map: &BakerMap,
    model: &UlamModel,
    cfg: &EigenConfig,
    alpha: f64,
    beta: f64,
    obs: Profile,
) -> Result<SpectralReport> {
    let (mu, lead, power_iterations) = invariant_measure(model, 1e-14, cfg.max_iter)?;
    let second = second_eigen(model, &mu, cfg)?;
    let rho = essential_radius(map, alpha, beta);
    let mut peripheral = vec![[lead, 0.0]];
    peripheral.extend(second.ritz.iter().filter(|z| z[0].hypot(z[1]) > rho).copied());
    let g = model.cell_averages(obs);
    let decay = correlation_decay(model, &mu, &g, &g, 40, 1e-12);
    Ok(SpectralReport {
        leading_eigenvalue: lead,
        invariant_vector: mu,
        second_modulus: second.modulus,
        second_collapsed: second.collapsed,
        fitted_decay_rate: decay.rate,
        peripheral_candidates: peripheral,
        rho,
        power_iterations,
        subspace_iterations: second.iterations,
        cells: model.cell_count(),
    })
}

/// Largest relative deviation of μ from uniformity in s, over the t-rows
/// carrying mass.
pub fn strip_uniformity(model: &UlamModel, mu: &[f64]) -> f64 {
    let (n_s, n_t) = (model.n_s(), model.n_t());
    let rows: Vec<f64> = (0..n_t).map(|j| (0..n_s).map(|a| mu[a * n_t + j]).sum()).collect();
    let heaviest = rows.iter().cloned().fold(0.0, f64::max);
    let mut worst: f64 = 0.0;
    for (j, &row) in rows.iter().enumerate() {
        if row <= 1e-12 * heaviest {
            continue;
        }
        let mean = row / n_s as f64;
        for a in 0..n_s {
            worst = worst.max((mu[a * n_t + j] / mean - 1.0).abs());
        }
    }
    worst
}

/// Least-squares line `y = a + b x`; returns `(b, a)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let b = sxy / sxx;
    (b, my - b * mx)
}

/// Rate `r` of the exponential fit `c_n ≈ C rⁿ` over the points at or above
/// `floor`. `None` when fewer than two points survive.
pub fn fit_rate(rows: &[(usize, f64)], floor: f64) -> Option<(f64, f64)> {
    let kept: Vec<&(usize, f64)> = rows.iter().filter(|(n, c)| *n >= 1 && *c >= floor).collect();
    if kept.len() < 2 {
        return None;
    }
    let x: Vec<f64> = kept.iter().map(|(n, _)| *n as f64).collect();
    let y: Vec<f64> = kept.iter().map(|(_, c)| c.ln()).collect();
    let (b, a) = linear_fit(&x, &y);
    Some((b.exp(), a.exp()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayTable {
    pub rows: Vec<(usize, f64)>,
    /// `None` means every correlation fell below the floor.
    pub rate: Option<f64>,
    pub prefactor: Option<f64>,
    pub floor: f64,
}

/// `Cₙ = |μ(g·Pⁿh) − μ(g)μ(h)|` from cell averages `g`, `h`.
pub fn correlation_decay(model: &UlamModel, mu: &[f64], g: &[f64], h: &[f64], n_max: usize, floor: f64) -> DecayTable {
    let mg = dot(mu, g);
    let mh = dot(mu, h);
    let weighted: Vec<f64> = mu.iter().zip(g).map(|(m, x)| m * x).collect();
    let mut ph = h.to_vec();
    let mut rows = Vec::with_capacity(n_max + 1);
    for n in 0..=n_max {
        if n > 0 {
            ph = model.pull(&ph);
        }
        rows.push((n, (dot(&weighted, &ph) - mg * mh).abs()));
    }
    let fit = fit_rate(&rows, floor);
    DecayTable { rows, rate: fit.map(|f| f.0), prefactor: fit.map(|f| f.1), floor }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LyNorm {
    Weak,
    StrongStable,
    StrongUnstable,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LyRow {
    pub function: String,
    pub n: usize,
    pub norm: LyNorm,
    pub lhs: f64,
    pub rhs: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LyParams {
    pub n_max: usize,
    pub slack: f64,
    /// Absolute allowance so that rows where both sides vanish pass.
    pub floor: f64,
    pub norms: NormConfig,
}

impl Default for LyParams {
    fn default() -> Self {
        LyParams { n_max: 6, slack: 1.05, floor: 1e-12, norms: NormConfig::default() }
    }
}

/// The three inequalities `‖Lⁿf‖_s ≤ λ^{αn}‖f‖_s + |f|_w`,
/// `‖Lⁿf‖_u ≤ κ^{−βn}‖f‖_u`, `|Lⁿf|_w ≤ |f|_w` for each f and `1 ≤ n ≤ n_max`.
pub fn ly_check(map: &BakerMap, suite: &[(String, GridFunction)], params: &LyParams) -> Result<Vec<LyRow>> {
    let mut cfg = params.norms.clone();
    cfg.kappa = map.kappa();
    let lam_a = map.lambda_f64().powf(cfg.alpha);
    let kap_b = (map.kappa() as f64).powf(-cfg.beta);
    let per_f: Vec<Result<Vec<LyRow>>> = suite
        .par_iter()
        .map(|(name, f)| {
            let mut est = NormEstimator::new(cfg.clone());
            let base = est.report(f)?;
            let mut rows = Vec::with_capacity(3 * params.n_max);
            let mut g = f.clone();
            for n in 1..=params.n_max {
                g = TransferOperator::step(map, &g);
                let r = est.report(&g)?;
                let mut push = |norm, lhs: f64, rhs: f64| {
                    rows.push(LyRow {
                        function: name.clone(),
                        n,
                        norm,
                        lhs,
                        rhs,
                        pass: lhs <= rhs * params.slack + params.floor,
                    })
                };
                push(LyNorm::StrongStable, r.strong_stable, lam_a.powi(n as i32) * base.strong_stable + base.weak);
                push(LyNorm::StrongUnstable, r.strong_unstable, kap_b.powi(n as i32) * base.strong_unstable);
                push(LyNorm::Weak, r.weak, base.weak);
            }
            Ok(rows)
        })
        .collect();
    let mut out = Vec::new();
    for rows in per_f {
        out.extend(rows?);
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BirkhoffRow {
    pub observable: String,
    pub mu0: f64,
    pub mean_average: f64,
    pub max_deviation: f64,
    pub samples: usize,
    pub n: usize,
}

/// Orbit averages `(1/n) Σ ψ(Tᵏx)` for Lebesgue-random `x` against `μ₀(ψ)`
/// taken from the Ulam measure.
pub fn birkhoff_physical(
    map: &BakerMap,
    model: &UlamModel,
    mu: &[f64],
    psi: &[(String, Profile)],
    count: usize,
    n: usize,
    seed: u64,
) -> Vec<BirkhoffRow> {
    let kernel = OrbitKernel::new(map);
    psi.iter()
        .map(|(name, f)| {
            let mu0 = dot(mu, &model.cell_averages(*f));
            let avgs: Vec<f64> = (0..count as u64)
                .into_par_iter()
                .map(|i| {
                    let mut o = kernel.start(&InitialMeasure::Lebesgue, seed, i);
                    let mut acc = 0.0;
                    for _ in 0..n {
                        acc += f(o.s(), o.t());
                        o.step();
                    }
                    acc / n as f64
                })
                .collect();
            BirkhoffRow {
                observable: name.clone(),
                mu0,
                mean_average: avgs.iter().sum::<f64>() / count as f64,
                max_deviation: avgs.iter().map(|a| (a - mu0).abs()).fold(0.0, f64::max),
                samples: count,
                n,
            }
        })
        .collect()
}

/// Cesàro average `(1/n) Σ_{k<n} Lᵏf` on an `ns × nt` grid; each iterate is
/// resampled so the carrier stays bounded.
pub fn cesaro_project(map: &BakerMap, f: &GridFunction, n: usize, ns: usize, nt: usize) -> Result<GridFunction> {
    if n == 0 {
        return Err(Error::InvalidParameter("Cesaro average needs n >= 1".into()));
    }
    let op = TransferOperator::new(map.clone(), 1)?;
    let mut cur = GridFunction::from_fn(ns, nt, |s, t| f.eval(s, t));
    let mut acc = cur.clone();
    for _ in 1..n {
        cur = op.apply_resampled(&cur, ns, nt)?;
        acc = acc.add(&cur)?;
    }
    Ok(acc.scale(1.0 / n as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::norms::Combination;
    use crate::ulam::UlamDensity;
    use std::f64::consts::PI;

    #[test]
    fn measure_preserving_map_has_uniform_invariant_vector() {
        let m = BakerMap::with_lambda(2, 1, 2).unwrap();
        let model = UlamModel::build(&m, 6, 6).unwrap();
        let (mu, lead, _) = invariant_measure(&model, 1e-14, 10_000).unwrap();
        assert!((lead - 1.0).abs() < 1e-10);
        let u = 1.0 / model.cell_count() as f64;
        assert!(mu.iter().all(|m| (m - u).abs() < 1e-10 * u.max(1e-300) / u * u + 1e-10));
    }

    #[test]
    fn leading_eigenvalue_is_one_for_shipped_maps() {
        for m in crate::suite::shipped_maps() {
            let (p, q) = if m.kappa() == 2 { (6, 6) } else { (4, 4) };
            let model = UlamModel::build(&m, p, q).unwrap();
            let (mu, lead, _) = invariant_measure(&model, 1e-14, 10_000).unwrap();
            assert!((lead - 1.0).abs() < 1e-10);
            assert!(mu.iter().all(|x| *x >= 0.0));
            assert!((mu.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(strip_uniformity(&model, &mu) < 1e-9);
        }
    }

    #[test]
    fn invariant_measure_lives_on_deep_strips() {
        let m = BakerMap::with_lambda(2, 1, 4).unwrap();
        let model = UlamModel::build(&m, 5, 4).unwrap();
        let (mu, _, _) = invariant_measure(&model, 1e-14, 10_000).unwrap();
        let strips = m.image_strips(4).unwrap();
        let mut on = 0.0;
        for (i, x) in mu.iter().enumerate() {
            let (_, _, t0, t1) = model.rect(i);
            let mid = 0.5 * (t0 + t1);
            if strips.iter().any(|a| {
                let (lo, hi) = a.image();
                lo <= mid && mid <= hi
            }) {
                on += x;
            }
        }
        assert!((on - 1.0).abs() < 1e-12);
    }

    /// Dense oracle: spectrum of a small Ulam matrix from nalgebra.
    #[test]
    fn second_modulus_matches_dense_oracle() {
        let m = crate::map::MapSpec {
            kappa: 2,
            lambda: "1/3".into(),
            layout: Some(vec![
                crate::map::BranchSpec { y_offset: "1/2".into(), flip_horizontal: true, flip_vertical: false },
                crate::map::BranchSpec { y_offset: "0".into(), flip_horizontal: false, flip_vertical: true },
            ]),
        }
        .build()
        .unwrap();
        // uniform t refinement on top of a shallow strip partition is not
        // Markov, so the chain has a genuine second eigenvalue
        let model = UlamModel::build_with(&m, 2, 0, 5, 1 << 20).unwrap();
        let (mu, _, _) = invariant_measure(&model, 1e-15, 100_000).unwrap();
        let d = model.to_dense();
        let n = d.len();
        let dense = DMatrix::from_fn(n, n, |i, j| d[i][j]);
        let mut eig: Vec<f64> = dense.complex_eigenvalues().iter().map(|z| z.norm()).collect();
        eig.sort_by(|a, b| b.partial_cmp(a).unwrap());
        assert!((eig[0] - 1.0).abs() < 1e-10);
        let cfg = EigenConfig { block: 4, ..Default::default() };
        let se = second_eigen(&model, &mu, &cfg).unwrap();
        assert!(!se.collapsed && eig[1] > 0.1);
        assert!((se.modulus - eig[1]).abs() < 1e-6, "{} vs {}", se.modulus, eig[1]);
    }

    #[test]
    fn complex_pair_is_resolved() {
        // refining t uniformly breaks the Markov property and gives the
        // chain a non-trivial spectrum
        let m = BakerMap::with_lambda(3, 1, 8).unwrap();
        let model = UlamModel::build_with(&m, 1, 0, 7, 1 << 20).unwrap();
        let (mu, _, _) = invariant_measure(&model, 1e-15, 100_000).unwrap();
        let d = model.to_dense();
        let n = d.len();
        let dense = DMatrix::from_fn(n, n, |i, j| d[i][j]);
        let mut eig: Vec<f64> = dense.complex_eigenvalues().iter().map(|z| z.norm()).collect();
        eig.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let se = second_eigen(&model, &mu, &EigenConfig::default()).unwrap();
        assert!(!se.collapsed);
        assert!((se.modulus - eig[1]).abs() < 1e-6, "{} vs {}", se.modulus, eig[1]);
    }

    #[test]
    fn second_modulus_below_gap_for_shipped_maps() {
        for m in crate::suite::shipped_maps() {
            let (p, q) = if m.kappa() == 2 { (6, 6) } else { (4, 4) };
            let model = UlamModel::build(&m, p, q).unwrap();
            let rep = leading_eigs(&m, &model, &EigenConfig::default(), 0.5, 0.5, |s, t| s + t).unwrap();
            assert!(rep.second_modulus < 0.95);
            assert_eq!(rep.peripheral_candidates.len(), 1);
            assert!(rep.fitted_decay_rate.unwrap() < 1.0);
        }
    }

    #[test]
    fn constant_observable_has_no_correlations() {
        let m = BakerMap::with_lambda(2, 1, 4).unwrap();
        let model = UlamModel::build(&m, 5, 5).unwrap();
        let (mu, _, _) = invariant_measure(&model, 1e-14, 10_000).unwrap();
        let g = model.cell_averages(|s, t| (3.0 * s).sin() + t);
        let one = model.cell_averages(|_, _| 2.0);
        let table = correlation_decay(&model, &mu, &g, &one, 10, 1e-12);
        assert!(table.rows.iter().all(|(_, c)| *c < 1e-14));
        assert!(table.rate.is_none());
    }

    /// Exact correlations of vertical observables: for g = h = t on the
    /// (2, 1/2) map, `Cov(t, t∘Tⁿ) = λⁿ/12`. The Ulam chain reproduces them
    /// except that after n steps the chain only remembers t to depth `q − n`,
    /// which scales the covariance by `1 − 4^{n−q}`.
    #[test]
    fn vertical_correlations_decay_at_lambda() {
        let m = BakerMap::with_lambda(2, 1, 2).unwrap();
        let model = UlamModel::build(&m, 9, 9).unwrap();
        let (mu, _, _) = invariant_measure(&model, 1e-14, 10_000).unwrap();
        let g = model.cell_averages(|_, t| t);
        let table = correlation_decay(&model, &mu, &g, &g, 6, 1e-12);
        for &(n, c) in &table.rows[1..] {
            let exact = 0.5f64.powi(n as i32) / 12.0 * (1.0 - 4f64.powi(n as i32 - 9));
            assert!((c - exact).abs() < 1e-9 * exact, "n={n}: {c} vs {exact}");
        }
        assert!(table.rate.unwrap() <= 0.5 + 0.05);
    }

    #[test]
    fn sine_correlations_vanish() {
        let m = BakerMap::with_lambda(2, 1, 2).unwrap();
        let model = UlamModel::build(&m, 9, 9).unwrap();
        let (mu, _, _) = invariant_measure(&model, 1e-14, 10_000).unwrap();
        let g = model.cell_averages(|s, _| (2.0 * PI * s).sin());
        let table = correlation_decay(&model, &mu, &g, &g, 20, 1e-12);
        assert!((table.rows[0].1 - 0.5).abs() < 1e-4);
        assert!(table.rows[1..].iter().all(|(_, c)| *c < 1e-12));
    }

    #[test]
    fn fit_rate_recovers_geometric_sequence() {
        let rows: Vec<(usize, f64)> = (0..20).map(|n| (n, 3.0 * 0.7f64.powi(n as i32))).collect();
        let (r, c) = fit_rate(&rows, 1e-12).unwrap();
        assert!((r - 0.7).abs() < 1e-12 && (c - 3.0).abs() < 1e-10);
        assert!(fit_rate(&[(1, 1e-13), (2, 1e-14)], 1e-12).is_none());
    }

    #[test]
    fn birkhoff_averages_approach_mu0() {
        let psi: Vec<(String, Profile)> =
            vec![("one".into(), |_, _| 1.0), ("s".into(), |s, _| s), ("t".into(), |_, t| t)];
        let m = BakerMap::with_lambda(2, 1, 2).unwrap();
        let model = UlamModel::build(&m, 6, 6).unwrap();
        let (mu, _, _) = invariant_measure(&model, 1e-14, 10_000).unwrap();
        let n = 4096;
        let rows = birkhoff_physical(&m, &model, &mu, &psi, 64, n, 3);
        assert!(rows[0].max_deviation < 1e-12);
        assert!((rows[1].mu0 - 0.5).abs() < 1e-12);
        assert!(rows[1].max_deviation < 3.0 / (n as f64).sqrt());
        let m = BakerMap::with_lambda(2, 1, 4).unwrap();
        let model = UlamModel::build(&m, 6, 8).unwrap();
        let (mu, _, _) = invariant_measure(&model, 1e-14, 10_000).unwrap();
        let rows = birkhoff_physical(&m, &model, &mu, &psi, 64, n, 4);
        assert!(rows[2].max_deviation < 5.0 / (n as f64).sqrt(), "{:?}", rows[2]);
    }

    #[test]
    fn cesaro_fixed_points_and_convergence() {
        let m = BakerMap::with_lambda(2, 1, 2).unwrap();
        let one = GridFunction::constant(32, 32, 1.0);
        let c = cesaro_project(&m, &one, 8, 32, 32).unwrap();
        assert!(c.bands()[0].values.iter().all(|v| (v - 1.0).abs() < 1e-13));
        // the weak distance to μ₀ of the Cesàro mean falls like 1/n
        let m = BakerMap::with_lambda(2, 1, 4).unwrap();
        let model = UlamModel::build(&m, 7, 7).unwrap();
        let (mu, _, _) = invariant_measure(&model, 1e-14, 10_000).unwrap();
        let mu0 = UlamDensity::new(&model, &mu);
        let f = GridFunction::from_fn(64, 64, |s, _| (2.0 * PI * s).sin() + 1.0);
        let cfg = NormConfig { leaf_grid: 64, leaf_samples: 16, kadic_level: 3, ..NormConfig::default() };
        let mut est = NormEstimator::new(cfg);
        let mut prev = f64::INFINITY;
        for n in [2, 4, 8] {
            let c = cesaro_project(&m, &f, n, 64, 256).unwrap();
            let d = est.weak(&Combination::difference(&c, &mu0)).unwrap();
            assert!(d < prev && d * n as f64 <= 1.05, "n={n}: {d}");
            prev = d;
        }
    }
}
