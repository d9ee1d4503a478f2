//! Maximization of a linear functional over a discretized Hölder ball.
//!
//! The ball on the uniform grid `t_i = i/N` is
//! `{φ : a + b ≤ 1, |φ_i| ≤ a, |φ_i − φ_j| ≤ b·|t_i − t_j|^γ}`
//! (γ = 1 for the C¹ ball, γ = α for the C^α ball). The solver is an
//! active-set primal simplex on `Ax ≤ r` with an explicit basis inverse. It
//! keeps its last vertex, so a sequence of objectives over the same ball
//! warm-starts.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum BallKind {
    /// Sup norm plus Lipschitz constant.
    Lipschitz,
    /// Sup norm plus Hölder constant of the given exponent.
    Holder(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestBall {
    pub kind: BallKind,
    /// Number of grid cells; the ball lives on `N + 1` nodes.
    pub n: usize,
    /// Hölder pairs kept for `|i − j| ≤ band`.
    pub band: usize,
    /// Extra random pairs with `|i − j| > band`.
    pub long_range: usize,
    pub seed: u64,
}

impl TestBall {
    pub fn lipschitz(n: usize) -> Self {
        TestBall { kind: BallKind::Lipschitz, n, band: 1, long_range: 0, seed: 0 }
    }

    /// All pairs when `n ≤ 64`, otherwise the pruned ball.
    pub fn holder(alpha: f64, n: usize) -> Self {
        if n <= 64 {
            TestBall { kind: BallKind::Holder(alpha), n, band: n, long_range: 0, seed: 0 }
        } else {
            TestBall { kind: BallKind::Holder(alpha), n, band: 32, long_range: 4 * n, seed: 0x5eed }
        }
    }

    pub fn exponent(&self) -> f64 {
        match self.kind {
            BallKind::Lipschitz => 1.0,
            BallKind::Holder(a) => a,
        }
    }

    /// Index pairs `(i, j)`, `i < j`, carrying an increment constraint.
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        let nodes = self.n + 1;
        if matches!(self.kind, BallKind::Lipschitz) {
            return (0..self.n).map(|i| (i, i + 1)).collect();
        }
        let band = self.band.max(1);
        let mut pairs = Vec::new();
        for i in 0..nodes {
            for j in i + 1..nodes.min(i + band + 1) {
                pairs.push((i, j));
            }
        }
        if band < self.n {
            let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
            let mut extra = std::collections::BTreeSet::new();
            // endpoints of the grid always participate
            for j in band + 1..nodes {
                extra.insert((0, j));
                extra.insert((self.n - j, self.n));
            }
            let mut tries = 0;
            while extra.len() < self.long_range + 2 * (self.n - band) && tries < 50 * self.long_range {
                tries += 1;
                let i = rng.random_range(0..nodes);
                let j = rng.random_range(0..nodes);
                let (i, j) = if i < j { (i, j) } else { (j, i) };
                if j - i > band {
                    extra.insert((i, j));
                }
            }
            pairs.extend(extra);
        }
        pairs
    }

    /// Pair constraints violated by more than `tol` (full, unpruned ball).
    pub fn max_violation(&self, phi: &[f64]) -> f64 {
        let g = self.exponent();
        let h = 1.0 / self.n as f64;
        let sup = phi.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut hol: f64 = 0.0;
        for i in 0..phi.len() {
            for j in i + 1..phi.len() {
                hol = hol.max((phi[i] - phi[j]).abs() / (((j - i) as f64) * h).powf(g));
            }
        }
        sup + hol - 1.0
    }
}

#[derive(Clone, Copy, Debug)]
struct Row {
    idx: [u32; 3],
    val: [f64; 3],
    len: u8,
    rhs: f64,
    /// Unperturbed right-hand side.
    exact: f64,
}

impl Row {
    fn new(entries: &[(usize, f64)], rhs: f64) -> Row {
        let mut r = Row { idx: [0; 3], val: [0.0; 3], len: entries.len() as u8, rhs, exact: rhs };
        for (k, &(i, v)) in entries.iter().enumerate() {
            r.idx[k] = i as u32;
            r.val[k] = v;
        }
        r
    }

    #[inline]
    fn dot(&self, x: &[f64]) -> f64 {
        let mut acc = 0.0;
        for k in 0..self.len as usize {
            acc += self.val[k] * x[self.idx[k] as usize];
        }
        acc
    }
}

const PIVOT_TOL: f64 = 1e-11;
/// Smallest admissible ratio-test pivot.
const RATIO_TOL: f64 = 1e-9;
const PERTURB: f64 = 1e-9;
const REFACTOR_EVERY: usize = 64;

/// Outcome of one maximization.
#[derive(Clone, Debug)]
pub struct BallOptimum {
    pub value: f64,
    pub phi: Vec<f64>,
    pub pivots: usize,
}

/// Reusable solver for one [`TestBall`].
#[derive(Clone, Debug)]
pub struct BallSolver {
    ball: TestBall,
    nodes: usize,
    nvar: usize,
    rows: Vec<Row>,
    active: Vec<usize>,
    in_basis: Vec<bool>,
    binv: Vec<f64>,
    x: Vec<f64>,
    since_refactor: usize,
}

impl BallSolver {
    pub fn new(ball: &TestBall) -> Self {
        let nodes = ball.n + 1;
        let a = nodes;
        let b = nodes + 1;
        let nvar = nodes + 2;
        let h = 1.0 / ball.n as f64;
        let g = ball.exponent();
        let mut rows = Vec::new();
        rows.push(Row::new(&[(a, -1.0)], 0.0));
        rows.push(Row::new(&[(b, -1.0)], 0.0));
        for i in 0..nodes {
            rows.push(Row::new(&[(i, 1.0), (a, -1.0)], 0.0));
        }
        rows.push(Row::new(&[(a, 1.0), (b, 1.0)], 1.0));
        for i in 0..nodes {
            rows.push(Row::new(&[(i, -1.0), (a, -1.0)], 0.0));
        }
        for (i, j) in ball.pairs() {
            let c = ((j - i) as f64 * h).powf(g);
            rows.push(Row::new(&[(i, 1.0), (j, -1.0), (b, -c)], 0.0));
            rows.push(Row::new(&[(i, -1.0), (j, 1.0), (b, -c)], 0.0));
        }
        // Rows outside the starting basis get rhs + δ_r with δ_r ∈ [1, 2)·1e-9.
        // The perturbed polytope has no degenerate vertices, so no pivot
        // can make a structurally dependent basis; `finish` maps the optimal
        // basis back to the exact right-hand side.
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        for row in rows.iter_mut().skip(nvar) {
            row.rhs += PERTURB * (1.0 + rng.random::<f64>());
        }
        let mut solver = BallSolver {
            ball: ball.clone(),
            nodes,
            nvar,
            rows,
            active: (0..nvar).collect(),
            in_basis: Vec::new(),
            binv: vec![0.0; nvar * nvar],
            x: vec![0.0; nvar],
            since_refactor: 0,
        };
        solver.reset();
        solver
    }

    pub fn ball(&self) -> &TestBall {
        &self.ball
    }

    pub fn constraint_count(&self) -> usize {
        self.rows.len()
    }

    /// Back to the vertex φ = 0, a = b = 0.
    pub fn reset(&mut self) {
        self.active = (0..self.nvar).collect();
        self.in_basis = vec![false; self.rows.len()];
        for &r in &self.active {
            self.in_basis[r] = true;
        }
        self.x = vec![0.0; self.nvar];
        self.refactor().expect("initial basis is regular");
    }

    fn refactor(&mut self) -> Result<()> {
        let n = self.nvar;
        let mut m = DMatrix::<f64>::zeros(n, n);
        for (p, &r) in self.active.iter().enumerate() {
            let row = &self.rows[r];
            for k in 0..row.len as usize {
                m[(p, row.idx[k] as usize)] = row.val[k];
            }
        }
        let inv = m
            .try_inverse()
            .ok_or_else(|| Error::Solver("singular basis".into()))?;
        for i in 0..n {
            for j in 0..n {
                self.binv[i * n + j] = inv[(i, j)];
            }
        }
        // x = B⁻¹ r_S
        for i in 0..n {
            let mut acc = 0.0;
            for (p, &r) in self.active.iter().enumerate() {
                acc += self.binv[i * n + p] * self.rows[r].rhs;
            }
            self.x[i] = acc;
        }
        self.since_refactor = 0;
        Ok(())
    }

    /// Maximizes `Σ w_i φ_i` over the ball.
    pub fn maximize(&mut self, weights: &[f64]) -> Result<BallOptimum> {
        if weights.len() != self.nodes {
            return Err(Error::InvalidParameter(format!(
                "expected {} weights, got {}",
                self.nodes,
                weights.len()
            )));
        }
        let scale = weights.iter().fold(0.0f64, |m, w| m.max(w.abs()));
        if scale == 0.0 {
            return Ok(BallOptimum { value: 0.0, phi: vec![0.0; self.nodes], pivots: 0 });
        }
        if !scale.is_finite() {
            return Err(Error::Solver("non-finite weights".into()));
        }
        let mut c = vec![0.0; self.nvar];
        for (ci, wi) in c.iter_mut().zip(weights) {
            *ci = wi / scale;
        }
        match self.run(&c, REFACTOR_EVERY) {
            Ok(p) => Ok(self.finish(&c, scale, p)),
            Err(_) => {
                // a drifted inverse let a dependent row enter: retry from the
                // origin, refactoring at every pivot
                self.reset();
                let p = self.run(&c, 1)?;
                Ok(self.finish(&c, scale, p))
            }
        }
    }

    /// The vertex of the current basis for the exact right-hand side. The
    /// basis is dual feasible, so its value is the exact optimum whenever
    /// that vertex is feasible, which holds up to O(δ).
    fn finish(&self, c: &[f64], scale: f64, pivots: usize) -> BallOptimum {
        let n = self.nvar;
        let mut phi = self.x[..self.nodes].to_vec();
        for (i, p) in phi.iter_mut().enumerate() {
            let row = &self.binv[i * n..(i + 1) * n];
            *p += self.active.iter().enumerate().map(|(q, &r)| row[q] * (self.rows[r].exact - self.rows[r].rhs)).sum::<f64>();
        }
        let value = c[..self.nodes].iter().zip(&phi).map(|(a, b)| a * b).sum::<f64>() * scale;
        BallOptimum { value, phi, pivots }
    }

    fn run(&mut self, c: &[f64], refactor_every: usize) -> Result<usize> {
        let n = self.nvar;
        let max_pivots = 200 * n + 10_000;
        let mut y = vec![0.0; n];
        let mut d = vec![0.0; n];
        let mut v = vec![0.0; n];
        let mut degenerate_run = 0usize;
        for pivots in 0..max_pivots {
            // duals y = B⁻ᵀ c
            for k in 0..n {
                y[k] = 0.0;
            }
            for i in 0..n {
                let ci = c[i];
                if ci != 0.0 {
                    let row = &self.binv[i * n..(i + 1) * n];
                    for k in 0..n {
                        y[k] += ci * row[k];
                    }
                }
            }
            let bland = degenerate_run > 2 * n;
            let mut leave = None;
            let mut best = -PIVOT_TOL;
            for p in 0..n {
                if y[p] < -PIVOT_TOL {
                    if bland {
                        if leave.is_none_or(|q: usize| self.active[p] < self.active[q]) {
                            leave = Some(p);
                        }
                    } else if y[p] < best {
                        best = y[p];
                        leave = Some(p);
                    }
                }
            }
            let Some(p) = leave else {
                return Ok(pivots);
            };
            // d = −B⁻¹ e_p
            for i in 0..n {
                d[i] = -self.binv[i * n + p];
            }
            // ratio test over inactive rows; the pivot threshold scales with
            // |d| so rows dependent on the remaining basis are never chosen
            let dmax = d.iter().fold(1.0f64, |m, x| m.max(x.abs()));
            let tol = RATIO_TOL * dmax;
            let mut enter = None;
            let mut step = f64::INFINITY;
            let mut enter_ad = 0.0;
            for (r, row) in self.rows.iter().enumerate() {
                if self.in_basis[r] {
                    continue;
                }
                let ad = row.dot(&d);
                if ad > tol {
                    let slack = (row.rhs - row.dot(&self.x)).max(0.0);
                    let ratio = slack / ad;
                    let better = if bland {
                        ratio < step - 1e-14 || (ratio <= step + 1e-14 && enter.is_none_or(|e| r < e))
                    } else {
                        ratio < step - 1e-14 || (ratio <= step + 1e-14 && ad > enter_ad)
                    };
                    if better {
                        step = ratio;
                        enter = Some(r);
                        enter_ad = ad;
                    }
                }
            }
            let Some(r) = enter else {
                return Err(Error::Solver("unbounded direction".into()));
            };
            if step > 1e-13 {
                degenerate_run = 0;
            } else {
                degenerate_run += 1;
            }
            for i in 0..n {
                self.x[i] += step * d[i];
            }
            // v = A_r B⁻¹
            for k in 0..n {
                v[k] = 0.0;
            }
            let row = self.rows[r];
            for k in 0..row.len as usize {
                let i = row.idx[k] as usize;
                let a = row.val[k];
                let src = &self.binv[i * n..(i + 1) * n];
                for j in 0..n {
                    v[j] += a * src[j];
                }
            }
            let vp = v[p];
            if vp.abs() < 1e-14 {
                return Err(Error::Solver("vanishing pivot".into()));
            }
            v[p] -= 1.0;
            // B⁻¹ ← B⁻¹ − u vᵀ / v_p with u = B⁻¹ e_p = −d
            for i in 0..n {
                let ui = -d[i] / vp;
                if ui != 0.0 {
                    let dst = &mut self.binv[i * n..(i + 1) * n];
                    for j in 0..n {
                        dst[j] -= ui * v[j];
                    }
                }
            }
            let leaving = self.active[p];
            self.in_basis[leaving] = false;
            self.in_basis[r] = true;
            self.active[p] = r;
            self.since_refactor += 1;
            if self.since_refactor >= refactor_every {
                self.refactor()?;
            }
        }
        Err(Error::Solver(format!("no convergence after {max_pivots} pivots")))
    }
}

/// One-shot convenience wrapper.
pub fn maximize_over_ball(weights: &[f64], ball: &TestBall) -> Result<BallOptimum> {
    BallSolver::new(ball).maximize(weights)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    /// Exact value of the C¹-ball problem by dynamic programming over concave
    /// piecewise-linear value functions, maximized over the split a + b = 1
    /// by golden-section search (the value is concave in b).
    fn chain_oracle(w: &[f64]) -> f64 {
        let n = w.len() - 1;
        let h = 1.0 / n as f64;
        let value = |b: f64| -> f64 {
            let a = 1.0 - b;
            let c = b * h;
            // breakpoints (x, V(x)) of a concave function on [−a, a]
            let mut pts: Vec<(f64, f64)> = vec![(-a, -a * w[0]), (a, a * w[0])];
            for &wk in &w[1..] {
                let (imax, _) = pts
                    .iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |acc, (i, p)| if p.1 > acc.1 { (i, p.1) } else { acc });
                let mut next: Vec<(f64, f64)> = Vec::new();
                for &(x, v) in &pts[..=imax] {
                    next.push((x - c, v));
                }
                for &(x, v) in &pts[imax..] {
                    next.push((x + c, v));
                }
                // clip to [−a, a]
                let eval = |pts: &[(f64, f64)], x: f64| -> f64 {
                    if x <= pts[0].0 {
                        return pts[0].1;
                    }
                    for s in pts.windows(2) {
                        if x <= s[1].0 {
                            let t = if s[1].0 > s[0].0 { (x - s[0].0) / (s[1].0 - s[0].0) } else { 1.0 };
                            return s[0].1 + t * (s[1].1 - s[0].1);
                        }
                    }
                    pts[pts.len() - 1].1
                };
                let mut clipped = vec![(-a, eval(&next, -a))];
                for &(x, v) in &next {
                    if x > -a && x < a {
                        clipped.push((x, v));
                    }
                }
                clipped.push((a, eval(&next, a)));
                pts = clipped.into_iter().map(|(x, v)| (x, v + wk * x)).collect();
            }
            pts.iter().fold(f64::NEG_INFINITY, |m, p| m.max(p.1))
        };
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        let g = (5f64.sqrt() - 1.0) / 2.0;
        for _ in 0..200 {
            let m1 = hi - g * (hi - lo);
            let m2 = lo + g * (hi - lo);
            if value(m1) < value(m2) {
                lo = m1;
            } else {
                hi = m2;
            }
        }
        value(0.5 * (lo + hi)).max(value(0.0)).max(value(1.0))
    }

    /// Random feasible points of the full ball, improved by coordinate
    /// moves; a lower bound for the optimum.
    fn random_feasible_oracle(w: &[f64], ball: &TestBall, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = w.len();
        let h = 1.0 / ball.n as f64;
        let g = ball.exponent();
        let mut best = 0.0f64;
        for _ in 0..200 {
            let b: f64 = rng.random();
            let a = 1.0 - b;
            // smooth random profile scaled into the ball
            let k = rng.random_range(1..6) as f64;
            let ph: f64 = rng.random();
            let mut phi: Vec<f64> = (0..n).map(|i| (k * i as f64 * h + ph).sin()).collect();
            let sup = phi.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
            let mut hol: f64 = 0.0;
            for i in 0..n {
                for j in i + 1..n {
                    hol = hol.max((phi[i] - phi[j]).abs() / ((j - i) as f64 * h).powf(g));
                }
            }
            let scale = (a / sup).min(if hol > 0.0 { b / hol } else { f64::INFINITY });
            for v in phi.iter_mut() {
                *v *= scale;
            }
            let val: f64 = w.iter().zip(&phi).map(|(x, y)| x * y).sum();
            best = best.max(val.abs());
        }
        best
    }

    fn sin_weights(n: usize) -> Vec<f64> {
        let h = 1.0 / n as f64;
        (0..=n)
            .map(|i| {
                let q = if i == 0 || i == n { 0.5 } else { 1.0 };
                q * h * (2.0 * std::f64::consts::PI * i as f64 * h).sin()
            })
            .collect()
    }

    #[test]
    fn constant_weights_give_constant_maximizer() {
        let w = vec![0.25; 9];
        let opt = maximize_over_ball(&w, &TestBall::lipschitz(8)).unwrap();
        assert!((opt.value - 9.0 * 0.25).abs() < 1e-12);
        assert!(opt.phi.iter().all(|p| (p - 1.0).abs() < 1e-12));
    }

    #[test]
    fn zero_weights() {
        let opt = maximize_over_ball(&[0.0; 17], &TestBall::holder(0.5, 16)).unwrap();
        assert_eq!(opt.value, 0.0);
    }

    #[test]
    fn chain_matches_dynamic_programming() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut solver = BallSolver::new(&TestBall::lipschitz(32));
        for _ in 0..20 {
            let w: Vec<f64> = (0..33).map(|_| rng.random::<f64>() - 0.5).collect();
            let lp = solver.maximize(&w).unwrap();
            let dp = chain_oracle(&w);
            assert!((lp.value - dp).abs() < 1e-9, "lp {} dp {}", lp.value, dp);
            assert!(TestBall::lipschitz(32).max_violation(&lp.phi) < 1e-9);
        }
    }

    #[test]
    fn holder_sine_dominates_random_feasible() {
        let ball = TestBall::holder(0.5, 64);
        let w = sin_weights(64);
        let opt = maximize_over_ball(&w, &ball).unwrap();
        let lower = random_feasible_oracle(&w, &ball, 11);
        assert!(lower <= opt.value + 1e-6, "oracle {lower} above lp {}", opt.value);
        // the maximizer is feasible for the full ball and attains the value
        assert!(ball.max_violation(&opt.phi) < 1e-9);
        let attained: f64 = w.iter().zip(&opt.phi).map(|(a, b)| a * b).sum();
        assert!((attained - opt.value).abs() < 1e-12);
    }

    #[test]
    fn warm_start_agrees_with_cold_start() {
        let ball = TestBall::holder(0.5, 128);
        let mut warm = BallSolver::new(&ball);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..5 {
            let w: Vec<f64> = (0..129).map(|_| rng.random::<f64>() - 0.3).collect();
            let a = warm.maximize(&w).unwrap().value;
            let b = maximize_over_ball(&w, &ball).unwrap().value;
            assert!((a - b).abs() < 1e-9 * a.abs().max(1.0));
        }
    }

    #[test]
    fn holder_ball_contains_lipschitz_ball() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..5 {
            let w: Vec<f64> = (0..65).map(|_| rng.random::<f64>() - 0.5).collect();
            let l = maximize_over_ball(&w, &TestBall::lipschitz(64)).unwrap().value;
            let h = maximize_over_ball(&w, &TestBall::holder(0.5, 64)).unwrap().value;
            assert!(h >= l - 1e-12);
        }
    }

    #[test]
    fn homogeneous_and_symmetric() {
        let w = sin_weights(32);
        let ball = TestBall::holder(0.5, 32);
        let v = maximize_over_ball(&w, &ball).unwrap().value;
        let w3: Vec<f64> = w.iter().map(|x| -3.0 * x).collect();
        let v3 = maximize_over_ball(&w3, &ball).unwrap().value;
        assert!((v3 - 3.0 * v).abs() < 1e-12);
    }
}
