//! A contraction of `[0, 1]` acting on distributions by push-forward.
//!
//! `Lμ(φ) = μ(φ∘T)`. Measures are a trapezoid density on a uniform grid
//! plus weighted atoms; pushing forward turns every quadrature node into an
//! atom at its image, which keeps the pairing `Lⁿμ(φ) = μ(φ∘Tⁿ)` exact.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{hat_weights_point, holder_seminorm};
use crate::lp::{BallSolver, TestBall};
use crate::spectral::fit_rate;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContractionKind {
    /// `x/2`
    Half,
    /// `x/2 + 1/4`
    Affine,
    /// `(x² + 1)/4`
    Quad,
}

impl std::str::FromStr for ContractionKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "half" => Ok(ContractionKind::Half),
            "affine" => Ok(ContractionKind::Affine),
            "quad" => Ok(ContractionKind::Quad),
            _ => Err(Error::Parse(format!("unknown contraction '{s}' (half, affine, quad)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContractionMap {
    pub kind: ContractionKind,
    pub lambda_bound: f64,
}

impl ContractionMap {
    pub fn new(kind: ContractionKind) -> Result<Self> {
        let m = ContractionMap { kind, lambda_bound: 0.5 };
        m.validate(4096)?;
        Ok(m)
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self.kind {
            ContractionKind::Half => 0.5 * x,
            ContractionKind::Affine => 0.5 * x + 0.25,
            ContractionKind::Quad => 0.25 * (x * x + 1.0),
        }
    }

    pub fn iterate(&self, x: f64, n: usize) -> f64 {
        (0..n).fold(x, |y, _| self.eval(y))
    }

    /// Lipschitz bound and invariance of `[0, 1]` on a grid of `n` cells.
    pub fn validate(&self, n: usize) -> Result<()> {
        let xs: Vec<f64> = (0..=n).map(|k| k as f64 / n as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|&x| self.eval(x)).collect();
        if ys.iter().any(|y| !(0.0..=1.0).contains(y)) {
            return Err(Error::InvalidMap("T does not map [0,1] into itself".into()));
        }
        for k in 0..n {
            let q = (ys[k + 1] - ys[k]).abs() / (xs[k + 1] - xs[k]);
            if q > self.lambda_bound * (1.0 + 1e-12) {
                return Err(Error::InvalidMap(format!("Lipschitz quotient {q} exceeds {}", self.lambda_bound)));
            }
        }
        Ok(())
    }

    /// The attracting fixed point, iterated until it is a float fixed point.
    pub fn fixed_point(&self) -> f64 {
        // halving reaches 0 through the subnormals in about 1075 steps
        let mut x = 0.5;
        for _ in 0..4000 {
            let y = self.eval(x);
            if y == x {
                break;
            }
            x = y;
        }
        x
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualMeasure {
    /// Density at `k/n`, `k = 0..=n`, integrated by the trapezoid rule.
    pub density: Vec<f64>,
    pub atoms: Vec<(f64, f64)>,
}

impl DualMeasure {
    pub fn zero(n: usize) -> Self {
        DualMeasure { density: vec![0.0; n + 1], atoms: Vec::new() }
    }

    pub fn from_density(n: usize, f: impl Fn(f64) -> f64) -> Self {
        DualMeasure { density: (0..=n).map(|k| f(k as f64 / n as f64)).collect(), atoms: Vec::new() }
    }

    pub fn lebesgue(n: usize) -> Self {
        Self::from_density(n, |_| 1.0)
    }

    pub fn delta(n: usize, x: f64) -> Self {
        DualMeasure { density: vec![0.0; n + 1], atoms: vec![(x, 1.0)] }
    }

    pub fn grid(&self) -> usize {
        self.density.len() - 1
    }

    fn node_weight(&self, k: usize) -> f64 {
        let n = self.grid();
        let h = 1.0 / n as f64;
        if k == 0 || k == n {
            0.5 * h
        } else {
            h
        }
    }

    /// `μ(φ)`.
    pub fn pair(&self, phi: impl Fn(f64) -> f64) -> f64 {
        let n = self.grid();
        let dens: f64 = self
            .density
            .iter()
            .enumerate()
            .map(|(k, d)| self.node_weight(k) * d * phi(k as f64 / n as f64))
            .sum();
        dens + self.atoms.iter().map(|(x, w)| w * phi(*x)).sum::<f64>()
    }

    pub fn total(&self) -> f64 {
        self.pair(|_| 1.0)
    }

    /// Hat-basis weights on the grid `k/m`: `μ(φ) = Σ w_k φ(k/m)` for φ
    /// piecewise linear on that grid.
    pub fn weights(&self, m: usize) -> Vec<f64> {
        let n = self.grid();
        let mut w = vec![0.0; m + 1];
        for (k, d) in self.density.iter().enumerate() {
            if *d != 0.0 {
                hat_weights_point(k as f64 / n as f64, self.node_weight(k) * d, m, &mut w);
            }
        }
        for (x, c) in &self.atoms {
            hat_weights_point(*x, *c, m, &mut w);
        }
        w
    }

    /// Push-forward: density nodes become atoms at their images.
    pub fn push(&self, map: &ContractionMap) -> Self {
        let n = self.grid();
        let mut atoms: Vec<(f64, f64)> = self
            .density
            .iter()
            .enumerate()
            .filter(|(_, d)| **d != 0.0)
            .map(|(k, d)| (map.eval(k as f64 / n as f64), self.node_weight(k) * d))
            .collect();
        atoms.extend(self.atoms.iter().map(|(x, w)| (map.eval(*x), *w)));
        DualMeasure { density: vec![0.0; n + 1], atoms }
    }

    pub fn push_n(&self, map: &ContractionMap, steps: usize) -> Self {
        (0..steps).fold(self.clone(), |m, _| m.push(map))
    }

    pub fn sub(&self, other: &DualMeasure) -> Result<Self> {
        if self.grid() != other.grid() {
            return Err(Error::InvalidParameter("measures live on different grids".into()));
        }
        let density = self.density.iter().zip(&other.density).map(|(a, b)| a - b).collect();
        let mut atoms = self.atoms.clone();
        atoms.extend(other.atoms.iter().map(|(x, w)| (*x, -w)));
        Ok(DualMeasure { density, atoms })
    }
}

/// Dual norms against the discretized `C^α` and `C¹` balls.
pub struct DualNorms {
    pub grid: usize,
    holder: BallSolver,
    lipschitz: BallSolver,
}

impl DualNorms {
    pub fn new(alpha: f64, grid: usize) -> Self {
        DualNorms {
            grid,
            holder: BallSolver::new(&TestBall::holder(alpha, grid)),
            lipschitz: BallSolver::new(&TestBall::lipschitz(grid)),
        }
    }

    /// `‖μ‖_α = sup_{|φ|_{C^α} ≤ 1} μ(φ)`.
    pub fn alpha(&mut self, mu: &DualMeasure) -> Result<f64> {
        Ok(self.holder.maximize(&mu.weights(self.grid))?.value)
    }

    /// `‖μ‖₁` over the `C¹` ball.
    pub fn one(&mut self, mu: &DualMeasure) -> Result<f64> {
        Ok(self.lipschitz.maximize(&mu.weights(self.grid))?.value)
    }
}

pub fn dual_norm(mu: &DualMeasure, alpha: f64, grid: usize) -> Result<f64> {
    DualNorms::new(alpha, grid).alpha(mu)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeltaDecay {
    pub distances: Vec<f64>,
    pub rate: Option<f64>,
    /// Non-increasing within 1e-9 after the first `burn_in` steps.
    pub monotone_after: usize,
    pub monotone: bool,
}

/// `‖Lⁿμ − δ_a‖_α` for `n = 0..=n_max`.
pub fn decay_to_delta(map: &ContractionMap, mu: &DualMeasure, norms: &mut DualNorms, n_max: usize) -> Result<DeltaDecay> {
    if (mu.total() - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParameter(format!("mu(1) = {} is not 1", mu.total())));
    }
    let delta = DualMeasure::delta(mu.grid(), map.fixed_point());
    let mut cur = mu.clone();
    let mut distances = Vec::with_capacity(n_max + 1);
    for n in 0..=n_max {
        if n > 0 {
            cur = cur.push(map);
        }
        distances.push(norms.alpha(&cur.sub(&delta)?)?);
    }
    let rows: Vec<(usize, f64)> = distances.iter().copied().enumerate().collect();
    let burn_in = 1;
    let monotone = distances[burn_in..].windows(2).all(|w| w[1] <= w[0] + 1e-9);
    Ok(DeltaDecay { rate: fit_rate(&rows, 1e-12).map(|r| r.0), distances, monotone_after: burn_in, monotone })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualLyRow {
    pub measure: String,
    pub n: usize,
    pub lhs: f64,
    pub rhs: f64,
    /// `‖Lⁿμ‖₁ ≤ ‖μ‖₁`
    pub weak_lhs: f64,
    pub weak_rhs: f64,
    pub pass: bool,
}

/// `‖Lⁿμ‖_α ≤ λ^{αn}‖μ‖_α + ‖μ‖₁` and `‖Lⁿμ‖₁ ≤ ‖μ‖₁` for `n ≤ n_max`.
pub fn dual_ly_check(
    map: &ContractionMap,
    suite: &[(String, DualMeasure)],
    alpha: f64,
    norms: &mut DualNorms,
    n_max: usize,
    slack: f64,
) -> Result<Vec<DualLyRow>> {
    let mut rows = Vec::new();
    for (name, mu) in suite {
        let a0 = norms.alpha(mu)?;
        let w0 = norms.one(mu)?;
        let mut cur = mu.clone();
        for n in 1..=n_max {
            cur = cur.push(map);
            let lhs = norms.alpha(&cur)?;
            let weak_lhs = norms.one(&cur)?;
            let rhs = map.lambda_bound.powf(alpha * n as f64) * a0 + w0;
            rows.push(DualLyRow {
                measure: name.clone(),
                n,
                lhs,
                rhs,
                weak_lhs,
                weak_rhs: w0,
                pass: lhs <= rhs * slack + 1e-12 && weak_lhs <= w0 * slack + 1e-12,
            });
        }
    }
    Ok(rows)
}

/// Shipped measures for the inequality check; all live on an `n`-cell grid.
pub fn measure_suite(n: usize) -> Vec<(String, DualMeasure)> {
    vec![
        ("lebesgue".into(), DualMeasure::lebesgue(n)),
        ("delta_0.3".into(), DualMeasure::delta(n, 0.3)),
        ("ramp".into(), DualMeasure::from_density(n, |x| 2.0 * x)),
        ("dipole".into(), DualMeasure { density: vec![0.0; n + 1], atoms: vec![(0.2, 1.0), (0.7, -1.0)] }),
        ("signed_sine".into(), DualMeasure::from_density(n, |x| (2.0 * std::f64::consts::PI * x).sin())),
        (
            "mixed".into(),
            DualMeasure { density: DualMeasure::from_density(n, |x| 0.5 + x).density, atoms: vec![(0.9, -0.5)] },
        ),
    ]
}

/// `|φ|_{C^α} = |φ|_∞ + H^α(φ)` on the uniform nodes.
pub fn holder_norm(values: &[f64], alpha: f64) -> f64 {
    values.iter().fold(0.0f64, |m, v| m.max(v.abs())) + holder_seminorm(values, alpha)
}

/// `(|Kⁿφ|_{C^α}, λ^{αn}|φ|_{C^α} + |φ|_{C⁰})` with `Kφ = φ∘T`.
pub fn koopman_bound(map: &ContractionMap, phi: impl Fn(f64) -> f64, alpha: f64, n: usize, grid: usize) -> (f64, f64) {
    let xs: Vec<f64> = (0..=grid).map(|k| k as f64 / grid as f64).collect();
    let base: Vec<f64> = xs.iter().map(|&x| phi(x)).collect();
    let pushed: Vec<f64> = xs.iter().map(|&x| phi(map.iterate(x, n))).collect();
    let sup = base.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    (holder_norm(&pushed, alpha), map.lambda_bound.powf(alpha * n as f64) * holder_norm(&base, alpha) + sup)
}
