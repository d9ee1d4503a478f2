//! Birkhoff sums, CLT and large deviations.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::grid::GridFunction;
use crate::map::BakerMap;
use crate::orbit::{InitialMeasure, OrbitKernel};
use crate::spectral::{fit_rate, linear_fit};
use crate::ulam::UlamModel;

type Field = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// A real observable `g` on the square, optionally centered by `μ₀(g)`.
#[derive(Clone)]
pub struct Observable {
    pub name: String,
    f: Field,
    offset: f64,
}

impl std::fmt::Debug for Observable {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Observable").field("name", &self.name).field("offset", &self.offset).finish()
    }
}

impl Observable {
    pub fn new(name: impl Into<String>, f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        Observable { name: name.into(), f: Arc::new(f), offset: 0.0 }
    }

    pub fn from_grid(name: impl Into<String>, g: GridFunction) -> Self {
        Observable::new(name, move |s, t| g.eval(s, t))
    }

    #[inline]
    pub fn eval(&self, s: f64, t: f64) -> f64 {
        (self.f)(s, t) - self.offset
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    /// Subtract `μ₀(g)` computed from the Ulam measure `mu`.
    pub fn centered(mut self, model: &UlamModel, mu: &[f64]) -> Self {
        self.offset = 0.0;
        let mean: f64 = self.cell_averages(model).iter().zip(mu).map(|(a, b)| a * b).sum();
        self.offset = mean;
        self
    }

    pub fn cell_averages(&self, model: &UlamModel) -> Vec<f64> {
        model.cell_averages(|s, t| self.eval(s, t))
    }

    pub fn cell_averages_squared(&self, model: &UlamModel) -> Vec<f64> {
        model.cell_averages(|s, t| self.eval(s, t).powi(2))
    }
}

/// `S_n g` for `count` orbits, each recorded at every length in `lengths`
/// (ascending). Row `k` holds the sums at `lengths[k]`. Sample `i` uses
/// stream `i` of `seed`, so the result does not depend on scheduling.
pub fn birkhoff_sums(
    map: &BakerMap,
    g: &Observable,
    lengths: &[usize],
    count: usize,
    init: &InitialMeasure,
    seed: u64,
) -> Vec<Vec<f64>> {
    let kernel = OrbitKernel::new(map);
    let per_sample: Vec<Vec<f64>> = (0..count as u64)
        .into_par_iter()
        .map(|i| {
            let mut o = kernel.start(init, seed, i);
            let mut out = Vec::with_capacity(lengths.len());
            let mut acc = 0.0;
            let mut k = 0;
            for &n in lengths {
                while k < n {
                    acc += g.eval(o.s(), o.t());
                    o.step();
                    k += 1;
                }
                out.push(acc);
            }
            out
        })
        .collect();
    (0..lengths.len()).map(|k| per_sample.iter().map(|r| r[k]).collect()).collect()
}

pub fn birkhoff_sample(
    map: &BakerMap,
    g: &Observable,
    n: usize,
    count: usize,
    init: &InitialMeasure,
    seed: u64,
) -> Vec<f64> {
    birkhoff_sums(map, g, &[n], count, init, seed).pop().unwrap()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GreenKubo {
    pub variance: f64,
    pub mu_g2: f64,
    /// Signed lag correlations `μ₀(g·g∘Tᵏ) − μ₀(g)²`, `k = 1..=n_max`.
    pub lags: Vec<f64>,
    pub n_max: usize,
    pub fitted_rate: Option<f64>,
    pub tail_estimate: f64,
    pub warning: Option<String>,
}

/// `ς² = μ₀(g²) + 2 Σ_{k=1}^{n_max} μ₀(g·g∘Tᵏ)` for centered `g`, all
/// integrals against the Ulam measure.
pub fn green_kubo_variance(model: &UlamModel, mu: &[f64], g: &Observable, n_max: Option<usize>) -> GreenKubo {
    let avg = g.cell_averages(model);
    let sq = g.cell_averages_squared(model);
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let mean = dot(mu, &avg);
    let weighted: Vec<f64> = mu.iter().zip(&avg).map(|(m, x)| m * x).collect();
    const PROBE: usize = 40;
    let mut lags = Vec::new();
    let mut ph = avg.clone();
    let lag = |ph: &mut Vec<f64>| {
        *ph = model.pull(ph);
        dot(&weighted, ph) - mean * mean
    };
    for _ in 0..PROBE {
        lags.push(lag(&mut ph));
    }
    let table: Vec<(usize, f64)> = lags.iter().enumerate().map(|(k, c)| (k + 1, c.abs())).collect();
    let rate = fit_rate(&table, 1e-12).map(|f| f.0).filter(|r| *r < 1.0);
    let n_max = n_max.unwrap_or_else(|| match rate {
        Some(r) if r > 0.0 => ((1e-6f64).ln() / r.ln()).ceil().clamp(1.0, 400.0) as usize,
        _ => 32,
    });
    while lags.len() < n_max {
        lags.push(lag(&mut ph));
    }
    lags.truncate(n_max);
    let mu_g2 = dot(mu, &sq) - mean * mean;
    let variance = mu_g2 + 2.0 * lags.iter().sum::<f64>();
    let last = lags.last().map(|c| c.abs()).unwrap_or(0.0);
    let tail_estimate = match rate {
        Some(r) => 2.0 * last * r / (1.0 - r),
        None => 0.0,
    };
    let warning = (tail_estimate > 0.01 * variance.abs()).then(|| {
        format!("truncation tail {tail_estimate:.3e} exceeds 1% of the variance {variance:.3e}")
    });
    GreenKubo { variance, mu_g2, lags, n_max, fitted_rate: rate, tail_estimate, warning }
}

/// Kolmogorov–Smirnov distance between a sample and a continuous CDF.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut x = samples.to_vec();
    x.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = x.len() as f64;
    x.iter()
        .enumerate()
        .map(|(i, &v)| {
            let f = cdf(v);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

/// Two-sample Kolmogorov–Smirnov distance.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(|x, y| x.partial_cmp(y).unwrap());
    b.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let v = a[i].min(b[j]);
        while i < a.len() && a[i] <= v {
            i += 1;
        }
        while j < b.len() && b[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    d
}

pub fn mean_variance(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = x.iter().map(|a| (a - m) * (a - m)).sum::<f64>() / (n - 1.0).max(1.0);
    (m, v)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CltReport {
    pub n: usize,
    pub count: usize,
    pub variance_target: f64,
    pub empirical_mean: f64,
    pub empirical_variance: f64,
    /// `None` when the target variance is zero.
    pub ks: Option<f64>,
    pub degenerate: bool,
}

/// KS distance of the law of `S_n g/√n` under `init` to `N(0, ς²)`.
pub fn clt_check(
    map: &BakerMap,
    g: &Observable,
    init: &InitialMeasure,
    n: usize,
    count: usize,
    seed: u64,
    variance: f64,
) -> Result<CltReport> {
    let root = (n as f64).sqrt();
    let z: Vec<f64> = birkhoff_sample(map, g, n, count, init, seed).into_iter().map(|x| x / root).collect();
    let (m, v) = mean_variance(&z);
    if variance <= 0.0 {
        return Ok(CltReport {
            n,
            count,
            variance_target: variance,
            empirical_mean: m,
            empirical_variance: v,
            ks: None,
            degenerate: true,
        });
    }
    let normal = Normal::new(0.0, variance.sqrt()).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    Ok(CltReport {
        n,
        count,
        variance_target: variance,
        empirical_mean: m,
        empirical_variance: v,
        ks: Some(ks_statistic(&z, |x| normal.cdf(x))),
        degenerate: false,
    })
}

/// `P(z)`: log of the leading eigenvalue of `μ ↦ (μ·e^{zg}) P`.
pub fn pressure(model: &UlamModel, g_avg: &[f64], z: f64, start: Option<&[f64]>) -> Result<f64> {
    if z == 0.0 {
        // stochastic rows: the untwisted eigenvalue is 1
        return Ok(0.0);
    }
    let w: Vec<f64> = g_avg.iter().map(|g| (z * g).exp()).collect();
    let mut mu = match start {
        Some(m) => m.to_vec(),
        None => model.lebesgue(),
    };
    let total: f64 = mu.iter().sum();
    mu.iter_mut().for_each(|x| *x /= total);
    let mut prev = f64::NAN;
    for _ in 0..100_000 {
        let next = model.push_weighted(&mu, &w);
        let growth: f64 = next.iter().sum();
        if !growth.is_finite() || growth <= 0.0 {
            return Err(Error::Overflow(format!("twisted growth at z = {z}")));
        }
        mu = next.into_iter().map(|x| x / growth).collect();
        let p = growth.ln();
        // rounding leaves a period-two jitter near 1e-13; average it out
        if (p - prev).abs() <= 1e-12 * p.abs().max(1.0) {
            return Ok(0.5 * (p + prev));
        }
        prev = p;
    }
    Err(Error::NonConvergence(format!("pressure at z = {z}")))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LdpReport {
    pub z: Vec<f64>,
    pub pressure: Vec<f64>,
    pub t: Vec<f64>,
    pub rate: Vec<f64>,
    /// Maximizing `z` for each `t`.
    pub tilt: Vec<f64>,
    /// `P''` at the tilt, from the hull's second differences.
    pub tilted_variance: Vec<f64>,
    pub mean: f64,
}

/// Indices of the lower convex hull of the points `(x_i, y_i)`, `x` ascending.
pub fn lower_hull(x: &[f64], y: &[f64]) -> Vec<usize> {
    let mut h: Vec<usize> = Vec::new();
    for i in 0..x.len() {
        while h.len() >= 2 {
            let (a, b) = (h[h.len() - 2], h[h.len() - 1]);
            let cross = (x[b] - x[a]) * (y[i] - y[a]) - (y[b] - y[a]) * (x[i] - x[a]);
            if cross <= 0.0 {
                h.pop();
            } else {
                break;
            }
        }
        h.push(i);
    }
    h
}

/// Pressure on `z_grid` and the rate `I(t) = sup_z [zt − P(z)]` on `t_grid`
/// through the lower convex hull of the pressure points.
pub fn rate_function(model: &UlamModel, mu: &[f64], g: &Observable, z_grid: &[f64], t_grid: &[f64]) -> Result<LdpReport> {
    let mut z = z_grid.to_vec();
    z.sort_by(|a, b| a.partial_cmp(b).unwrap());
    z.dedup();
    if z.len() < 3 {
        return Err(Error::InvalidParameter("z-grid needs at least three points".into()));
    }
    let avg = g.cell_averages(model);
    let pressure = z
        .par_iter()
        .map(|&zz| pressure(model, &avg, zz, Some(mu)))
        .collect::<Result<Vec<f64>>>()?;
    let hull = lower_hull(&z, &pressure);
    let mean: f64 = avg.iter().zip(mu).map(|(a, b)| a * b).sum();
    let mut rate = Vec::with_capacity(t_grid.len());
    let mut tilt = Vec::with_capacity(t_grid.len());
    let mut tilted_variance = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        let (k, best) = hull
            .iter()
            .enumerate()
            .map(|(k, &i)| (k, z[i] * t - pressure[i]))
            .fold((0, f64::NEG_INFINITY), |acc, v| if v.1 > acc.1 { v } else { acc });
        rate.push(best.max(0.0));
        let i = hull[k];
        tilt.push(z[i]);
        let j = i.clamp(1, z.len() - 2);
        let (h0, h1) = (z[j] - z[j - 1], z[j + 1] - z[j]);
        let second = 2.0
            * (h0 * pressure[j + 1] - (h0 + h1) * pressure[j] + h1 * pressure[j - 1])
            / (h0 * h1 * (h0 + h1));
        tilted_variance.push(second);
    }
    Ok(LdpReport { z, pressure, t: t_grid.to_vec(), rate, tilt, tilted_variance, mean })
}

/// Central differences `(P'(0), P''(0))` with step `h`.
pub fn pressure_derivatives(model: &UlamModel, mu: &[f64], g: &Observable, h: f64) -> Result<(f64, f64)> {
    let avg = g.cell_averages(model);
    let plus = pressure(model, &avg, h, Some(mu))?;
    let minus = pressure(model, &avg, -h, Some(mu))?;
    Ok(((plus - minus) / (2.0 * h), (plus + minus) / (h * h)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LdpCell {
    pub t: f64,
    pub n: usize,
    pub hits: usize,
    /// `(1/n) log ν(S_n g/n ≥ t)` (`≤ t` below the mean); `None` if unusable.
    pub exponent: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LdpRow {
    pub t: f64,
    pub minus_rate: f64,
    /// Slope of the prefactor-corrected log tail in n; `None` with fewer
    /// than two usable lengths.
    pub extrapolated: Option<f64>,
    pub relative_error: Option<f64>,
    pub usable: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LdpTable {
    pub cells: Vec<LdpCell>,
    pub rows: Vec<LdpRow>,
    pub count: usize,
    pub min_hits: usize,
}

/// Empirical tail exponents of `S_n g/n` against `−I(t)`.
///
/// The raw exponent `(1/n) log p_n` carries an `O(log n / n)` prefactor. The
/// slope in `n` of `log p_n − log Φ̄(|z_t| σ_t √n)` equals `−I(t) + z_t²σ_t²/2`
/// up to `o(1)`, uniformly as `t` approaches the mean, so the extrapolated
/// exponent is that slope minus `z_t²σ_t²/2`.
#[allow(clippy::too_many_arguments)]
pub fn ldp_empirical(
    map: &BakerMap,
    g: &Observable,
    init: &InitialMeasure,
    rate: &LdpReport,
    lengths: &[usize],
    count: usize,
    seed: u64,
    min_hits: usize,
) -> Result<LdpTable> {
    let mut lengths = lengths.to_vec();
    lengths.sort_unstable();
    lengths.dedup();
    let sums = birkhoff_sums(map, g, &lengths, count, init, seed);
    let unit = Normal::new(0.0, 1.0).unwrap();
    let mut cells = Vec::new();
    let mut rows = Vec::new();
    for (k, &t) in rate.t.iter().enumerate() {
        let upper = t >= rate.mean;
        let zs = rate.tilt[k].abs() * rate.tilted_variance[k].max(0.0).sqrt();
        let (mut xs, mut ys) = (Vec::new(), Vec::new());
        for (row, &n) in sums.iter().zip(&lengths) {
            let level = t * n as f64;
            let hits = row.iter().filter(|&&s| if upper { s >= level } else { s <= level }).count();
            let usable = hits >= min_hits;
            let p = hits as f64 / count as f64;
            cells.push(LdpCell { t, n, hits, exponent: usable.then(|| p.ln() / n as f64) });
            if usable {
                xs.push(n as f64);
                ys.push(p.ln() - unit.sf(zs * (n as f64).sqrt()).ln());
            }
        }
        let extrapolated = (xs.len() >= 2).then(|| tail_slope(&xs, &ys) - 0.5 * zs * zs);
        let minus_rate = -rate.rate[k];
        rows.push(LdpRow {
            t,
            minus_rate,
            extrapolated,
            relative_error: extrapolated.map(|e| (e - minus_rate).abs() / minus_rate.abs().max(1e-300)),
            usable: xs.len(),
        });
    }
    Ok(LdpTable { cells, rows, count, min_hits })
}

/// Slope `b` of `y ≈ a + b n + c/n`. The `c/n` term absorbs the bounded
/// shift of `S_n` under a non-invariant start; with fewer than four points
/// it is dropped.
fn tail_slope(n: &[f64], y: &[f64]) -> f64 {
    if n.len() < 4 {
        return linear_fit(n, y).0;
    }
    let a = DMatrix::from_fn(n.len(), 3, |i, j| match j {
        0 => 1.0,
        1 => n[i],
        _ => 1.0 / n[i],
    });
    let b = DVector::from_column_slice(y);
    let sol = a.svd(true, true).solve(&b, 1e-14).expect("svd with both factors");
    sol[1]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::invariant_measure;
    use std::f64::consts::PI;

    fn doubling() -> (BakerMap, UlamModel, Vec<f64>) {
        let m = BakerMap::with_lambda(2, 1, 2).unwrap();
        let model = UlamModel::build(&m, 9, 2).unwrap();
        let (mu, _, _) = invariant_measure(&model, 1e-14, 10_000).unwrap();
        (m, model, mu)
    }

    fn sine() -> Observable {
        Observable::new("sin_2pi_s", |s, _| (2.0 * PI * s).sin())
    }

    #[test]
    fn constant_observable_sums_exactly() {
        let m = BakerMap::with_lambda(2, 1, 4).unwrap();
        let g = Observable::new("c", |_, _| 0.75);
        let x = birkhoff_sample(&m, &g, 64, 100, &InitialMeasure::Lebesgue, 1);
        assert!(x.iter().all(|v| *v == 48.0));
    }

    #[test]
    fn one_step_sums_have_the_law_of_g() {
        use rand::{Rng, SeedableRng};
        let m = BakerMap::with_lambda(2, 1, 4).unwrap();
        let g = Observable::new("mix", |s, t| (3.0 * s).sin() + t * t);
        let count = 20_000;
        let a = birkhoff_sample(&m, &g, 1, count, &InitialMeasure::Lebesgue, 5);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        let b: Vec<f64> = (0..count).map(|_| g.eval(rng.random(), rng.random())).collect();
        // 1% critical value of the two-sample test
        assert!(ks_two_sample(&a, &b) < 1.63 * (2.0 / count as f64).sqrt());
    }

    #[test]
    fn sums_are_reproducible() {
        let m = BakerMap::with_lambda(3, 1, 8).unwrap();
        let g = sine();
        let a = birkhoff_sample(&m, &g, 100, 50, &InitialMeasure::Affine { c: 0.5 }, 11);
        let b = birkhoff_sample(&m, &g, 100, 50, &InitialMeasure::Affine { c: 0.5 }, 11);
        assert_eq!(a, b);
        let multi = birkhoff_sums(&m, &g, &[10, 100], 50, &InitialMeasure::Affine { c: 0.5 }, 11);
        assert_eq!(multi[1], a);
    }

    #[test]
    fn sine_mean_vanishes() {
        let (m, _, _) = doubling();
        let (n, count) = (1000, 4000);
        let x = birkhoff_sample(&m, &sine(), n, count, &InitialMeasure::Lebesgue, 2);
        let mean = x.iter().sum::<f64>() / (n * count) as f64;
        let sigma = 0.5f64.sqrt();
        assert!(mean.abs() < 3.0 * sigma / ((n * count) as f64).sqrt());
    }

    #[test]
    fn green_kubo_for_orthogonal_lags() {
        let (_, model, mu) = doubling();
        let gk = green_kubo_variance(&model, &mu, &sine().centered(&model, &mu), None);
        assert!((gk.variance - 0.5).abs() < 1e-6, "{}", gk.variance);
        assert!(gk.lags.iter().all(|c| c.abs() < 1e-12));
        assert_eq!(gk.n_max, 32);
        let zero = Observable::new("zero", |_, _| 0.0);
        assert_eq!(green_kubo_variance(&model, &mu, &zero, None).variance, 0.0);
    }

    /// `g = s` on the doubling map: `Cov(s, s∘Tᵏ) = 2^{−k}/12`, so
    /// `ς² = 1/12 + 2·(1/12) = 1/4`.
    #[test]
    fn green_kubo_matches_geometric_series() {
        // the chain forgets lags beyond its level, so this one needs p = 14
        let m = BakerMap::with_lambda(2, 1, 2).unwrap();
        let model = UlamModel::build(&m, 14, 1).unwrap();
        let (mu, _, _) = invariant_measure(&model, 1e-14, 10_000).unwrap();
        let g = Observable::new("s", |s, _| s).centered(&model, &mu);
        let gk = green_kubo_variance(&model, &mu, &g, None);
        assert!((gk.fitted_rate.unwrap() - 0.5).abs() < 0.02);
        assert!((gk.variance - 0.25).abs() < 1e-4, "{}", gk.variance);
        assert!(gk.warning.is_none());
    }

    #[test]
    fn empirical_variance_matches_green_kubo() {
        let (m, model, mu) = doubling();
        let g = Observable::new("s", |s, _| s).centered(&model, &mu);
        let gk = green_kubo_variance(&model, &mu, &g, None);
        let rep = clt_check(&m, &g, &InitialMeasure::Lebesgue, 2000, 20_000, 4, gk.variance).unwrap();
        assert!((rep.empirical_variance / gk.variance - 1.0).abs() < 0.05);
        assert!(rep.ks.unwrap() < 0.02);
    }

    #[test]
    fn degenerate_clt_is_reported() {
        let (m, _, _) = doubling();
        let zero = Observable::new("zero", |_, _| 0.0);
        let rep = clt_check(&m, &zero, &InitialMeasure::Lebesgue, 10, 10, 0, 0.0).unwrap();
        assert!(rep.degenerate && rep.ks.is_none() && rep.empirical_variance == 0.0);
    }

    #[test]
    fn ks_against_exact_uniform() {
        let x: Vec<f64> = (0..1000).map(|i| (i as f64 + 0.5) / 1000.0).collect();
        assert!((ks_statistic(&x, |v| v.clamp(0.0, 1.0)) - 0.0005).abs() < 1e-12);
        assert_eq!(ks_two_sample(&x, &x), 0.0);
    }

    #[test]
    fn hull_skips_concave_points() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y = [0.0, 2.0, 1.0, 3.0];
        assert_eq!(lower_hull(&x, &y), vec![0, 2, 3]);
    }

    /// For `g = 1[s ≥ 1/2] − 1/2` the sum is a fair ±1/2 random walk, so
    /// `P(z) = log cosh(z/2)` exactly and the Ulam chain reproduces it.
    #[test]
    fn pressure_of_coin_flips() {
        let (_, model, mu) = doubling();
        let g = Observable::new("coin", |s, _| if s >= 0.5 { 0.5 } else { -0.5 });
        let avg = g.cell_averages(&model);
        for z in [-2.0, -0.3, 0.7, 1.5] {
            let p = pressure(&model, &avg, z, Some(&mu)).unwrap();
            assert!((p - (z / 2.0f64).cosh().ln()).abs() < 1e-12, "z={z}");
        }
        let z: Vec<f64> = (-40..=40).map(|k| k as f64 * 0.05).collect();
        let rep = rate_function(&model, &mu, &g, &z, &[0.0, 0.1, 0.2]).unwrap();
        assert_eq!(rep.pressure[40], 0.0);
        // I(t) = ((1+2t)ln(1+2t) + (1−2t)ln(1−2t))/2 for the ±1/2 walk
        for (k, &t) in rep.t.iter().enumerate() {
            let exact = if t == 0.0 {
                0.0
            } else {
                0.5 * ((1.0 + 2.0 * t) * (1.0 + 2.0 * t).ln() + (1.0 - 2.0 * t) * (1.0 - 2.0 * t).ln())
            };
            assert!((rep.rate[k] - exact).abs() < 1e-3, "t={t}: {} vs {exact}", rep.rate[k]);
        }
    }

    #[test]
    fn pressure_is_convex_and_centered() {
        let (_, model, mu) = doubling();
        let g = sine().centered(&model, &mu);
        let z: Vec<f64> = (-20..=20).map(|k| k as f64 * 0.1).collect();
        let rep = rate_function(&model, &mu, &g, &z, &[0.0, 0.1]).unwrap();
        assert_eq!(lower_hull(&rep.z, &rep.pressure).len(), z.len());
        assert_eq!(rep.rate[0], 0.0);
        let (d1, d2) = pressure_derivatives(&model, &mu, &g, 1e-3).unwrap();
        assert!(d1.abs() < 1e-3);
        assert!((d2 / 0.5 - 1.0).abs() < 0.05, "{d2}");
    }
}
