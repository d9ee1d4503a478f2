//! The λ → 0 limit: leaf averages, standard pairs and the operator L0.
//!
//! All maps of a [`SingularFamily`] share the branch rectangles
//! `Rᵢ = [i/κ, (i+1)/κ] × [0, 1]` and center strip i on the fixed unstable
//! leaf `Uᵢ = {t = cᵢ}`. As λ → 0 the strips collapse onto the leaves and
//! the transfer operator becomes `L0 f = Σᵢ κ⁻¹ (f̄∘T0⁻¹) δ_{Uᵢ}`.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{hat_weights_point, Band, GridFunction, Regularity};
use crate::map::{ratio_to_f64, BakerMap, Branch};
use crate::norms::{LeafFunctional, NormConfig, NormEstimator};
use crate::spectral::{fit_rate, invariant_measure};
use crate::transfer::TransferOperator;
use crate::ulam::{UlamDensity, UlamModel};

/// Density on one unstable leaf, piecewise linear on `s_nodes`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StandardPair {
    pub t_u: f64,
    pub s_nodes: Vec<f64>,
    pub density: Vec<f64>,
    pub coefficient: f64,
}

fn pl_eval(nodes: &[f64], vals: &[f64], s: f64) -> f64 {
    let n = nodes.len();
    if s < nodes[0] || s > nodes[n - 1] {
        return 0.0;
    }
    let k = nodes.partition_point(|x| *x <= s).clamp(1, n - 1) - 1;
    let h = nodes[k + 1] - nodes[k];
    if h <= 0.0 {
        return vals[k];
    }
    let th = (s - nodes[k]) / h;
    vals[k] + th * (vals[k + 1] - vals[k])
}

fn uniform_nodes(n: usize) -> Vec<f64> {
    (0..=n).map(|j| j as f64 / n as f64).collect()
}

impl StandardPair {
    pub fn new(t_u: f64, n: usize, h: impl Fn(f64) -> f64) -> Self {
        let s_nodes = uniform_nodes(n);
        let density = s_nodes.iter().map(|&s| h(s)).collect();
        StandardPair { t_u, s_nodes, density, coefficient: 1.0 }
    }

    pub fn eval(&self, s: f64) -> f64 {
        self.coefficient * pl_eval(&self.s_nodes, &self.density, s)
    }

    pub fn mass(&self) -> f64 {
        let mut acc = 0.0;
        for k in 0..self.s_nodes.len() - 1 {
            acc += 0.5 * (self.s_nodes[k + 1] - self.s_nodes[k]) * (self.density[k] + self.density[k + 1]);
        }
        self.coefficient * acc
    }

    pub fn sup(&self) -> f64 {
        self.coefficient.abs() * self.density.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// `Σ cₖ hₖ δ_{U_k}` over distinct leaves.
#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct StandardPairSum {
    pub terms: Vec<StandardPair>,
}

impl StandardPairSum {
    pub fn new(terms: Vec<StandardPair>) -> Result<Self> {
        for (i, a) in terms.iter().enumerate() {
            if a.s_nodes.len() < 2 || a.s_nodes.len() != a.density.len() {
                return Err(Error::InvalidParameter(format!("pair {i}: density does not match its grid")));
            }
            if a.density.iter().any(|v| !v.is_finite()) || !a.coefficient.is_finite() {
                return Err(Error::InvalidParameter(format!("pair {i}: non-finite density")));
            }
            if terms[..i].iter().any(|b| b.t_u == a.t_u) {
                return Err(Error::InvalidParameter(format!("two pairs on the leaf t = {}", a.t_u)));
            }
        }
        Ok(StandardPairSum { terms })
    }

    /// Leaf average `f̄(s) = Σ cₖ hₖ(s)`: a pair integrates to its density
    /// along every stable leaf it crosses.
    pub fn leaf_average(&self, s: f64) -> f64 {
        self.terms.iter().map(|p| p.eval(s)).sum()
    }

    pub fn mass(&self) -> f64 {
        self.terms.iter().map(StandardPair::mass).sum()
    }

    pub fn scale(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.terms.iter_mut().for_each(|p| p.coefficient *= c);
        out
    }
}

impl LeafFunctional for StandardPairSum {
    fn leaf_weights(&self, s: f64, n: usize) -> Vec<f64> {
        let mut w = vec![0.0; n + 1];
        for p in &self.terms {
            let v = p.eval(s);
            if v != 0.0 {
                hat_weights_point(p.t_u, v, n, &mut w);
            }
        }
        w
    }
}

/// `a − b` for owned functionals.
pub struct Difference<A, B>(pub A, pub B);

impl<A: LeafFunctional, B: LeafFunctional> LeafFunctional for Difference<A, B> {
    fn leaf_weights(&self, s: f64, n: usize) -> Vec<f64> {
        let mut w = self.0.leaf_weights(s, n);
        for (x, y) in w.iter_mut().zip(self.1.leaf_weights(s, n)) {
            *x -= y;
        }
        w
    }
}

/// Fixed leaves `Uᵢ` and a λ-schedule of maps whose strip i is centered
/// on `Uᵢ`.
#[derive(Clone, Debug)]
pub struct SingularFamily {
    kappa: usize,
    leaves: Vec<BigRational>,
    schedule: Vec<BigRational>,
}

impl SingularFamily {
    /// Leaves at `cᵢ = (2i+1)/(2κ)`, `i = 0..κ`.
    pub fn new(kappa: usize, schedule: Vec<BigRational>) -> Result<Self> {
        let leaves = (0..kappa)
            .map(|i| BigRational::new(BigInt::from(2 * i + 1), BigInt::from(2 * kappa)))
            .collect();
        Self::with_leaves(kappa, leaves, schedule)
    }

    pub fn with_leaves(kappa: usize, leaves: Vec<BigRational>, schedule: Vec<BigRational>) -> Result<Self> {
        if kappa < 2 || leaves.len() != kappa {
            return Err(Error::InvalidMap(format!("need kappa >= 2 leaves, got {} for kappa {kappa}", leaves.len())));
        }
        let fam = SingularFamily { kappa, leaves, schedule };
        for lam in &fam.schedule {
            if lam.is_zero() {
                continue;
            }
            fam.map_for(lam)?;
        }
        Ok(fam)
    }

    pub fn kappa(&self) -> usize {
        self.kappa
    }

    pub fn schedule(&self) -> &[BigRational] {
        &self.schedule
    }

    pub fn leaf_t(&self, i: usize) -> f64 {
        ratio_to_f64(&self.leaves[i])
    }

    pub fn leaves_f64(&self) -> Vec<f64> {
        (0..self.kappa).map(|i| self.leaf_t(i)).collect()
    }

    /// `T_λ`: branch i expands `Rᵢ` onto the strip `[cᵢ − λ/2, cᵢ + λ/2]`,
    /// which contains `Uᵢ`.
    pub fn map_for(&self, lambda: &BigRational) -> Result<BakerMap> {
        let half = lambda / BigRational::from_integer(BigInt::from(2));
        let layout = self
            .leaves
            .iter()
            .map(|c| Branch { y_offset: c - &half, flip_horizontal: false, flip_vertical: false })
            .collect();
        BakerMap::new(self.kappa, lambda.clone(), layout)
            .map_err(|e| Error::InvalidMap(format!("lambda = {lambda} does not keep the strips around the leaves: {e}")))
    }

    /// `μ₀ = κ⁻¹ Σ δ_{Uᵢ}` with densities on an `n`-cell grid.
    pub fn mu0(&self, n: usize) -> StandardPairSum {
        let c = 1.0 / self.kappa as f64;
        StandardPairSum {
            terms: (0..self.kappa).map(|i| StandardPair::new(self.leaf_t(i), n, |_| c)).collect(),
        }
    }

    /// `L0` applied to a function given by its leaf average, output on an
    /// `n`-cell grid per leaf: density on `Uᵢ` is `κ⁻¹ f̄((s + i)/κ)`.
    pub fn apply_l0_average(&self, fbar: impl Fn(f64) -> f64, n: usize) -> StandardPairSum {
        let k = self.kappa as f64;
        StandardPairSum {
            terms: (0..self.kappa)
                .map(|i| StandardPair::new(self.leaf_t(i), n, |s| fbar((s + i as f64) / k) / k))
                .collect(),
        }
    }

    pub fn apply_l0(&self, f: &GridFunction, n: usize) -> StandardPairSum {
        self.apply_l0_average(|s| f.leaf_integral(s), n)
    }

    /// On a κ-adic grid this is exact: the composed densities stay piecewise
    /// linear on the same nodes.
    pub fn apply_l0_pairs(&self, p: &StandardPairSum, n: usize) -> StandardPairSum {
        self.apply_l0_average(|s| p.leaf_average(s), n)
    }

    /// `L0ⁿ` in closed form: the density on `Uᵢ` at `s` is
    /// `κ⁻ⁿ Σ_m f̄(((s+i)/κ + m)/κⁿ⁻¹)` over the `κⁿ⁻¹` preimages.
    pub fn l0_iterate_closed(&self, fbar: impl Fn(f64) -> f64, steps: u32, n: usize) -> StandardPairSum {
        assert!(steps >= 1);
        let k = self.kappa as f64;
        let reps = self.kappa.pow(steps - 1);
        let scale = k.powi(steps as i32);
        StandardPairSum {
            terms: (0..self.kappa)
                .map(|i| {
                    StandardPair::new(self.leaf_t(i), n, |s| {
                        let x = (s + i as f64) / k;
                        (0..reps).map(|m| fbar((x + m as f64) / (reps as f64))).sum::<f64>() / scale
                    })
                })
                .collect(),
        }
    }
}

/// `f̄(s) = ∫₀¹ f(s,t) dt` at `n + 1` uniform nodes.
pub fn leaf_average(f: &GridFunction, n: usize) -> Vec<f64> {
    uniform_nodes(n).iter().map(|&s| f.leaf_integral(s)).collect()
}

/// `ε⁻¹ h(s)` on the strip `|t − t_U| ≤ ε/2`, zero elsewhere.
pub fn standard_pair_mollify(pair: &StandardPair, eps: f64, resolution: usize) -> Result<GridFunction> {
    if eps * (resolution as f64) < 2.0 {
        return Err(Error::Resolution(format!("eps = {eps} is below two cells of the {resolution}-cell grid")));
    }
    let (t0, t1) = (pair.t_u - eps / 2.0, pair.t_u + eps / 2.0);
    if t0 < 0.0 || t1 > 1.0 {
        return Err(Error::InvalidParameter(format!("the eps-strip around t = {} leaves the square", pair.t_u)));
    }
    let nt = ((eps * resolution as f64).ceil() as usize).max(1);
    let t_nodes: Vec<f64> = (0..=nt).map(|j| t0 + (t1 - t0) * j as f64 / nt as f64).collect();
    let values = pair
        .density
        .iter()
        .flat_map(|&h| std::iter::repeat_n(pair.coefficient * h / eps, nt + 1))
        .collect();
    let band = Band { s_nodes: pair.s_nodes.clone(), t_nodes, values };
    Ok(GridFunction::from_bands(vec![band], Regularity::Unknown))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AverageBounds {
    pub function: String,
    pub sup_average: f64,
    pub weak: f64,
    pub holder_average: f64,
    pub unstable: f64,
    pub pass: bool,
}

/// `|f̄|_{C⁰} ≤ |f|_w` and `H^β(f̄) ≤ ‖f‖_u`, each with `slack`. The
/// Hölder quotient of `f̄` is taken over the estimator's leaf pairs.
pub fn leaf_average_bounds(
    suite: &[(String, GridFunction)],
    norms: &NormConfig,
    slack: f64,
) -> Result<Vec<AverageBounds>> {
    suite
        .par_iter()
        .map(|(name, f)| {
            let mut est = NormEstimator::new(norms.clone());
            let n = f.uniform_shape().map(|(ns, _)| ns).unwrap_or(norms.leaf_grid);
            let avg = leaf_average(f, n);
            let sup_average = avg.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            // same leaf pairs as the unstable estimate, which is a sup over them
            let holder_average = norms
                .pairs()
                .iter()
                .map(|&(a, b)| (f.leaf_integral(a) - f.leaf_integral(b)).abs() / (b - a).powf(norms.beta))
                .fold(0.0, f64::max);
            let rep = est.report(f)?;
            Ok(AverageBounds {
                function: name.clone(),
                sup_average,
                weak: rep.weak,
                holder_average,
                unstable: rep.strong_unstable,
                pass: sup_average <= rep.weak * slack + 1e-12 && holder_average <= rep.strong_unstable * slack + 1e-12,
            })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum L0Bound {
    Weak,
    StableByWeak,
    Unstable,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct L0Row {
    pub function: String,
    pub n: usize,
    pub bound: L0Bound,
    pub lhs: f64,
    pub rhs: f64,
    pub pass: bool,
}

/// `|L0ⁿf|_w ≤ |f|_w`, `‖L0ⁿf‖_s ≤ |f|_w`, `‖L0ⁿf‖_u ≤ κ^{−βn}‖f‖_u`.
pub fn l0_ly_check(
    family: &SingularFamily,
    suite: &[(String, GridFunction)],
    n_max: usize,
    norms: &NormConfig,
    slack: f64,
) -> Result<Vec<L0Row>> {
    let mut cfg = norms.clone();
    cfg.kappa = family.kappa();
    let grid = family.kappa().pow(7.min(((cfg.leaf_grid as f64).log(family.kappa() as f64).ceil()) as u32));
    let decay = (family.kappa() as f64).powf(-cfg.beta);
    let per_f: Vec<Result<Vec<L0Row>>> = suite
        .par_iter()
        .map(|(name, f)| {
            let mut est = NormEstimator::new(cfg.clone());
            let base = est.report(f)?;
            let mut rows = Vec::new();
            let mut g = family.apply_l0(f, grid);
            for n in 1..=n_max {
                if n > 1 {
                    g = family.apply_l0_pairs(&g, grid);
                }
                let r = est.report(&g)?;
                let mut push = |bound, lhs: f64, rhs: f64| {
                    rows.push(L0Row { function: name.clone(), n, bound, lhs, rhs, pass: lhs <= rhs * slack + 1e-12 })
                };
                push(L0Bound::Weak, r.weak, base.weak);
                push(L0Bound::StableByWeak, r.strong_stable, base.weak);
                push(L0Bound::Unstable, r.strong_unstable, decay.powi(n as i32) * base.strong_unstable);
            }
            Ok(rows)
        })
        .collect();
    let mut out = Vec::new();
    for r in per_f {
        out.extend(r?);
    }
    Ok(out)
}

/// `|L0ⁿf − f(1)μ₀|_w` for `n = 0..=n_max` and the fitted ratio.
pub fn l0_convergence(
    family: &SingularFamily,
    f: &GridFunction,
    n_max: usize,
    norms: &NormConfig,
) -> Result<(Vec<f64>, Option<f64>)> {
    let mut cfg = norms.clone();
    cfg.kappa = family.kappa();
    let grid = family.kappa().pow(7);
    let mut est = NormEstimator::new(cfg);
    let target = family.mu0(grid).scale(f.integral());
    let mut dists = vec![est.weak(&Difference(f.clone(), target.clone()))?];
    let mut g = family.apply_l0(f, grid);
    for n in 1..=n_max {
        if n > 1 {
            g = family.apply_l0_pairs(&g, grid);
        }
        dists.push(est.weak(&Difference(g.clone(), target.clone()))?);
    }
    let rows: Vec<(usize, f64)> = dists.iter().copied().enumerate().skip(1).collect();
    Ok((dists, fit_rate(&rows, 1e-12).map(|r| r.0)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub lambda: String,
    pub lambda_f64: f64,
    pub estimate: f64,
    pub bound: f64,
    pub pass: bool,
    /// `|μ_λ − μ₀|_w` with `μ_λ` from the Ulam model of `T_λ`.
    pub mu_distance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanParams {
    pub alpha: f64,
    pub norms: NormConfig,
    pub ulam_level: u32,
    pub ulam_depth: u32,
}

impl Default for ScanParams {
    fn default() -> Self {
        ScanParams { alpha: 0.5, norms: NormConfig::default(), ulam_level: 6, ulam_depth: 3 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scan {
    pub rows: Vec<ScanRow>,
    /// `|μ_λ − μ₀|_w` strictly decreases along the schedule.
    pub monotone: bool,
    /// Fitted exponent γ in `|μ_λ − μ₀|_w ≈ C λ^γ`.
    pub continuity_exponent: Option<f64>,
}

/// `|||L0 − L_λ|||` over `family_f` against `λ^{1−α}` for each λ > 0 of the
/// schedule.
pub fn perturbation_scan(family: &SingularFamily, family_f: &[GridFunction], params: &ScanParams) -> Result<Scan> {
    let mut cfg = params.norms.clone();
    cfg.kappa = family.kappa();
    cfg.alpha = params.alpha;
    let grid = family.kappa().pow(7);
    let mu0 = family.mu0(grid);
    let lambdas: Vec<&BigRational> = family.schedule().iter().filter(|l| !l.is_zero()).collect();
    let rows: Vec<Result<ScanRow>> = lambdas
        .par_iter()
        .map(|lam| {
            let map = family.map_for(lam)?;
            let mut est = NormEstimator::new(cfg.clone());
            let mut estimate: f64 = 0.0;
            for f in family_f {
                let strong = est.strong(f)?;
                if strong <= 0.0 {
                    continue;
                }
                let diff = Difference(family.apply_l0(f, grid), TransferOperator::step(&map, f));
                estimate = estimate.max(est.weak(&diff)? / strong);
            }
            let model = UlamModel::build(&map, params.ulam_level, params.ulam_depth)?;
            let (mu, _, _) = invariant_measure(&model, 1e-14, 100_000)?;
            let mu_lambda = UlamDensity::new(&model, &mu);
            let mu_distance = est.weak(&Difference(mu_lambda, mu0.clone()))?;
            let lf = ratio_to_f64(lam);
            let bound = lf.powf(1.0 - params.alpha);
            Ok(ScanRow {
                lambda: lam.to_string(),
                lambda_f64: lf,
                estimate,
                bound,
                pass: estimate <= bound,
                mu_distance,
            })
        })
        .collect();
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    let monotone = rows.windows(2).all(|w| w[1].mu_distance < w[0].mu_distance);
    let continuity_exponent = (rows.len() >= 2 && rows.iter().all(|r| r.mu_distance > 0.0)).then(|| {
        let x: Vec<f64> = rows.iter().map(|r| r.lambda_f64.ln()).collect();
        let y: Vec<f64> = rows.iter().map(|r| r.mu_distance.ln()).collect();
        crate::spectral::linear_fit(&x, &y).0
    });
    Ok(Scan { rows, monotone, continuity_exponent })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpandingRestriction {
    pub kappa: usize,
    /// `(leaf, branch, target leaf)`: on `Uᵢ`, the piece `s ∈ [j/κ, (j+1)/κ]`
    /// maps onto `U_j` by `s ↦ κs − j`.
    pub branches: Vec<(usize, usize, usize)>,
    pub cells_per_leaf: usize,
    /// Invariant density on the leaves, `density[i][a]` for cell a of `Uᵢ`,
    /// normalized to total mass 1 with respect to `κ⁻¹` per leaf.
    pub density: Vec<Vec<f64>>,
    pub max_deviation: f64,
    pub iterations: usize,
}

/// `T̄₀` on `∪Uᵢ` and its invariant density by power iteration of the 1-D
/// Ulam matrix.
pub fn expanding_restriction(family: &SingularFamily, cells_per_leaf: usize) -> Result<ExpandingRestriction> {
    let k = family.kappa();
    let m = cells_per_leaf;
    if !m.is_multiple_of(k) {
        return Err(Error::InvalidParameter(format!("{m} cells per leaf is not a multiple of kappa = {k}")));
    }
    let branches = (0..k).flat_map(|i| (0..k).map(move |j| (i, j, j))).collect();
    // cell a of any leaf lies in branch j = a / (m/κ) and covers the κ cells
    // κa − jm .. κa − jm + κ of U_j, each with a 1/κ share
    let per = m / k;
    let step = |mass: &[Vec<f64>]| -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; m]; k];
        for leaf in mass {
            for (a, &x) in leaf.iter().enumerate() {
                let j = a / per;
                let base = k * a - j * m;
                for b in base..base + k {
                    out[j][b] += x / k as f64;
                }
            }
        }
        out
    };
    let total = (k * m) as f64;
    let mut mass: Vec<Vec<f64>> = (0..k)
        .map(|i| (0..m).map(|a| 1.0 + 0.5 * (a as f64 + 0.5) / m as f64 + 0.1 * i as f64).collect())
        .collect();
    let norm: f64 = mass.iter().flatten().sum();
    mass.iter_mut().flatten().for_each(|x| *x /= norm);
    let mut iterations = 0;
    for it in 1..=10_000 {
        let next = step(&mass);
        let diff: f64 = next.iter().flatten().zip(mass.iter().flatten()).map(|(a, b)| (a - b).abs()).sum();
        mass = next;
        iterations = it;
        if diff < 1e-15 {
            break;
        }
    }
    let density: Vec<Vec<f64>> = mass.iter().map(|l| l.iter().map(|x| x * total).collect()).collect();
    let max_deviation = density.iter().flatten().map(|d| (d - 1.0).abs()).fold(0.0, f64::max);
    Ok(ExpandingRestriction { kappa: k, branches, cells_per_leaf: m, density, max_deviation, iterations })
}

/// Default schedule `{1/5, 1/10, 1/20, 1/40}`.
pub fn default_schedule() -> Vec<BigRational> {
    [5, 10, 20, 40].iter().map(|d| BigRational::new(BigInt::one(), BigInt::from(*d))).collect()
}
