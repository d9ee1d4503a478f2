//! Densities on the square and test functions on stable leaves.
//!
//! A [`GridFunction`] is a list of horizontal bands. Each band carries its
//! own tensor grid and is bilinear between nodes; the function is zero
//! between bands. A freshly sampled function is a single band covering the
//! square. Transfer-operator images split into one band per image strip,
//! which keeps jumps at strip edges sharp.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Regularity {
    /// Lipschitz along unstable (horizontal) leaves.
    UnstableC1,
    /// Lipschitz on the whole square.
    GlobalC1,
    /// Hölder along unstable leaves with the given exponent.
    UnstableHolder(f64),
    Unknown,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Band {
    pub s_nodes: Vec<f64>,
    pub t_nodes: Vec<f64>,
    /// Row-major, `values[i * t_nodes.len() + j]` at `(s_nodes[i], t_nodes[j])`.
    pub values: Vec<f64>,
}

/// Locates `x` in sorted `nodes`: returns `(i, θ)` with
/// `x ≈ nodes[i] + θ (nodes[i+1] − nodes[i])`.
fn locate(nodes: &[f64], x: f64) -> (usize, f64) {
    let n = nodes.len();
    if n == 1 {
        return (0, 0.0);
    }
    let i = match nodes.binary_search_by(|v| v.partial_cmp(&x).unwrap()) {
        Ok(i) => i.min(n - 2),
        Err(0) => 0,
        Err(i) => (i - 1).min(n - 2),
    };
    let w = nodes[i + 1] - nodes[i];
    let th = if w > 0.0 { ((x - nodes[i]) / w).clamp(0.0, 1.0) } else { 0.0 };
    (i, th)
}

impl Band {
    pub fn uniform(ns: usize, nt: usize, t0: f64, t1: f64, f: impl Fn(f64, f64) -> f64) -> Band {
        let s_nodes: Vec<f64> = (0..=ns).map(|i| i as f64 / ns as f64).collect();
        let t_nodes: Vec<f64> = (0..=nt).map(|j| t0 + (t1 - t0) * j as f64 / nt as f64).collect();
        let mut values = Vec::with_capacity(s_nodes.len() * t_nodes.len());
        for &s in &s_nodes {
            for &t in &t_nodes {
                values.push(f(s, t));
            }
        }
        Band { s_nodes, t_nodes, values }
    }

    pub fn t_range(&self) -> (f64, f64) {
        (self.t_nodes[0], self.t_nodes[self.t_nodes.len() - 1])
    }

    pub fn nt(&self) -> usize {
        self.t_nodes.len()
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.t_nodes.len() + j]
    }

    /// Values along the vertical line at `s`, on `t_nodes`.
    pub fn column_into(&self, s: f64, out: &mut Vec<f64>) {
        let (i, th) = locate(&self.s_nodes, s);
        let nt = self.nt();
        out.clear();
        if self.s_nodes.len() == 1 || th == 0.0 {
            out.extend_from_slice(&self.values[i * nt..(i + 1) * nt]);
            return;
        }
        let a = &self.values[i * nt..(i + 1) * nt];
        let b = &self.values[(i + 1) * nt..(i + 2) * nt];
        out.extend(a.iter().zip(b).map(|(x, y)| x + th * (y - x)));
    }

    pub fn eval(&self, s: f64, t: f64) -> f64 {
        let (i, a) = locate(&self.s_nodes, s);
        let (j, b) = locate(&self.t_nodes, t);
        let nt = self.nt();
        let v = |ii: usize, jj: usize| self.values[ii * nt + jj];
        let i1 = (i + 1).min(self.s_nodes.len() - 1);
        let j1 = (j + 1).min(nt - 1);
        let lo = v(i, j) + b * (v(i, j1) - v(i, j));
        let hi = v(i1, j) + b * (v(i1, j1) - v(i1, j));
        lo + a * (hi - lo)
    }

    pub fn integral(&self) -> f64 {
        let nt = self.nt();
        let mut acc = 0.0;
        for i in 0..self.s_nodes.len().saturating_sub(1) {
            let hs = self.s_nodes[i + 1] - self.s_nodes[i];
            let mut row = 0.0;
            for j in 0..nt - 1 {
                let ht = self.t_nodes[j + 1] - self.t_nodes[j];
                row += ht
                    * (self.values[i * nt + j]
                        + self.values[i * nt + j + 1]
                        + self.values[(i + 1) * nt + j]
                        + self.values[(i + 1) * nt + j + 1]);
            }
            acc += 0.25 * hs * row;
        }
        acc
    }
}

/// Integrals of a piecewise-linear column against the hat functions of the
/// uniform grid `k/n`, accumulated into `w` (length `n + 1`).
pub fn hat_weights_pl(t_nodes: &[f64], col: &[f64], n: usize, w: &mut [f64]) {
    let h = 1.0 / n as f64;
    for j in 0..t_nodes.len().saturating_sub(1) {
        let (ta, tb) = (t_nodes[j], t_nodes[j + 1]);
        if tb <= ta {
            continue;
        }
        let (va, vb) = (col[j], col[j + 1]);
        if va == 0.0 && vb == 0.0 {
            continue;
        }
        let slope = (vb - va) / (tb - ta);
        let mut u = ta.max(0.0);
        let end = tb.min(1.0);
        while u < end {
            let mut k = ((u * n as f64).floor() as usize).min(n - 1);
            if (k + 1) as f64 * h <= u && k + 1 < n {
                k += 1;
            }
            let v = end.min((k + 1) as f64 * h);
            if v <= u {
                break;
            }
            // Simpson is exact for the quadratic ρ·θ
            let tk = k as f64 * h;
            let rho = |x: f64| va + slope * (x - ta);
            let m = 0.5 * (u + v);
            let (ru, rm, rv) = (rho(u), rho(m), rho(v));
            let (qu, qm, qv) = ((u - tk) / h, (m - tk) / h, (v - tk) / h);
            let len = (v - u) / 6.0;
            let mass = len * (ru + 4.0 * rm + rv);
            let upper = len * (ru * qu + 4.0 * rm * qm + rv * qv);
            w[k] += mass - upper;
            w[k + 1] += upper;
            u = v;
        }
    }
}

/// A point mass of weight `c` at height `t` spread onto the hat basis.
pub fn hat_weights_point(t: f64, c: f64, n: usize, w: &mut [f64]) {
    let x = (t.clamp(0.0, 1.0)) * n as f64;
    let k = (x.floor() as usize).min(n - 1);
    let th = x - k as f64;
    w[k] += c * (1.0 - th);
    w[k + 1] += c * th;
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridFunction {
    bands: Vec<Band>,
    pub regularity: Regularity,
}

impl GridFunction {
    pub fn from_fn(ns: usize, nt: usize, f: impl Fn(f64, f64) -> f64) -> GridFunction {
        GridFunction { bands: vec![Band::uniform(ns, nt, 0.0, 1.0, f)], regularity: Regularity::UnstableC1 }
    }

    pub fn constant(ns: usize, nt: usize, c: f64) -> GridFunction {
        Self::from_fn(ns, nt, |_, _| c)
    }

    pub fn from_values(ns: usize, nt: usize, values: Vec<f64>) -> Result<GridFunction> {
        if values.len() != (ns + 1) * (nt + 1) {
            return Err(Error::InvalidParameter(format!(
                "expected {} values, got {}",
                (ns + 1) * (nt + 1),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite grid value".into()));
        }
        let mut band = Band::uniform(ns, nt, 0.0, 1.0, |_, _| 0.0);
        band.values = values;
        Ok(GridFunction { bands: vec![band], regularity: Regularity::Unknown })
    }

    pub fn from_bands(mut bands: Vec<Band>, regularity: Regularity) -> GridFunction {
        bands.sort_by(|a, b| a.t_nodes[0].partial_cmp(&b.t_nodes[0]).unwrap());
        GridFunction { bands, regularity }
    }

    pub fn with_regularity(mut self, r: Regularity) -> Self {
        self.regularity = r;
        self
    }

    pub fn bands(&self) -> &[Band] {
        &self.bands
    }

    /// Grid sizes `(N_s, N_t)` when the function is a single uniform band.
    pub fn uniform_shape(&self) -> Option<(usize, usize)> {
        match self.bands.as_slice() {
            [b] if b.t_range() == (0.0, 1.0) => Some((b.s_nodes.len() - 1, b.t_nodes.len() - 1)),
            _ => None,
        }
    }

    pub fn node_count(&self) -> usize {
        self.bands.iter().map(|b| b.values.len()).sum()
    }

    pub fn eval(&self, s: f64, t: f64) -> f64 {
        // bands are sorted and disjoint up to shared edges
        let idx = self.bands.partition_point(|b| b.t_range().1 < t);
        match self.bands.get(idx) {
            Some(b) if b.t_range().0 <= t => b.eval(s, t),
            _ => 0.0,
        }
    }

    pub fn integral(&self) -> f64 {
        self.bands.iter().map(Band::integral).sum()
    }

    /// `∫₀¹ f(s, t) dt`, exact for the piecewise-bilinear carrier.
    pub fn leaf_integral(&self, s: f64) -> f64 {
        let mut col = Vec::new();
        let mut acc = 0.0;
        for b in &self.bands {
            b.column_into(s, &mut col);
            for j in 0..col.len() - 1 {
                acc += 0.5 * (b.t_nodes[j + 1] - b.t_nodes[j]) * (col[j] + col[j + 1]);
            }
        }
        acc
    }

    /// Hat-basis weights `∫_W f φ_k` of the leaf at `s` on the grid `k/n`.
    pub fn leaf_weights(&self, s: f64, n: usize) -> Vec<f64> {
        let mut w = vec![0.0; n + 1];
        let mut col = Vec::new();
        for b in &self.bands {
            b.column_into(s, &mut col);
            hat_weights_pl(&b.t_nodes, &col, n, &mut w);
        }
        w
    }

    pub fn map_values(&self, mut f: impl FnMut(f64) -> f64) -> GridFunction {
        let mut out = self.clone();
        for b in &mut out.bands {
            for v in &mut b.values {
                *v = f(*v);
            }
        }
        out
    }

    /// Nodewise `f(s, t, value)`.
    pub fn map_nodes(&self, mut f: impl FnMut(f64, f64, f64) -> f64) -> GridFunction {
        let mut out = self.clone();
        for b in &mut out.bands {
            let nt = b.t_nodes.len();
            for (i, &s) in b.s_nodes.iter().enumerate() {
                for (j, &t) in b.t_nodes.iter().enumerate() {
                    let v = &mut b.values[i * nt + j];
                    *v = f(s, t, *v);
                }
            }
        }
        out
    }

    pub fn scale(&self, c: f64) -> GridFunction {
        self.map_values(|v| c * v)
    }

    /// Sum of two functions on identical grids.
    pub fn add(&self, other: &GridFunction) -> Result<GridFunction> {
        if self.bands.len() != other.bands.len()
            || self
                .bands
                .iter()
                .zip(&other.bands)
                .any(|(a, b)| a.s_nodes != b.s_nodes || a.t_nodes != b.t_nodes)
        {
            return Err(Error::InvalidParameter("grids differ".into()));
        }
        let mut out = self.clone();
        for (a, b) in out.bands.iter_mut().zip(&other.bands) {
            for (x, y) in a.values.iter_mut().zip(&b.values) {
                *x += y;
            }
        }
        out.regularity = Regularity::Unknown;
        Ok(out)
    }

    pub fn sup_norm(&self) -> f64 {
        self.bands
            .iter()
            .flat_map(|b| b.values.iter())
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn is_nonnegative(&self) -> bool {
        self.bands.iter().flat_map(|b| b.values.iter()).all(|v| *v >= 0.0)
    }

    /// Sup norm plus Lipschitz constant of the bilinear interpolant.
    pub fn c1_norm(&self) -> f64 {
        let mut lip: f64 = 0.0;
        for b in &self.bands {
            let nt = b.nt();
            for i in 0..b.s_nodes.len().saturating_sub(1) {
                let hs = b.s_nodes[i + 1] - b.s_nodes[i];
                for j in 0..nt - 1 {
                    let ht = b.t_nodes[j + 1] - b.t_nodes[j];
                    let v00 = b.at(i, j);
                    let v01 = b.at(i, j + 1);
                    let v10 = b.at(i + 1, j);
                    let v11 = b.at(i + 1, j + 1);
                    // the gradient of a bilinear cell is extremal at corners
                    for (ds, dt) in [
                        (v10 - v00, v01 - v00),
                        (v11 - v01, v01 - v00),
                        (v10 - v00, v11 - v10),
                        (v11 - v01, v11 - v10),
                    ] {
                        let gs = if hs > 0.0 { ds / hs } else { 0.0 };
                        let gt = if ht > 0.0 { dt / ht } else { 0.0 };
                        lip = lip.max(gs.hypot(gt));
                    }
                }
            }
        }
        self.sup_norm() + lip
    }

    /// `sup_U |f|_{C^γ(U)}` over the horizontal node lines.
    pub fn unstable_holder_norm(&self, gamma: f64) -> f64 {
        let mut best: f64 = 0.0;
        for b in &self.bands {
            let nt = b.nt();
            for j in 0..nt {
                let row: Vec<f64> = (0..b.s_nodes.len()).map(|i| b.values[i * nt + j]).collect();
                let sup = row.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                best = best.max(sup + holder_seminorm_nodes(&b.s_nodes, &row, gamma));
            }
        }
        best
    }

    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        let (ns, nt) = self
            .uniform_shape()
            .ok_or_else(|| Error::InvalidParameter("only single-band grids serialize".into()))?;
        writeln!(w, "{ns},{nt}")?;
        let b = &self.bands[0];
        for i in 0..=ns {
            let line: Vec<String> = (0..=nt).map(|j| format!("{}", b.at(i, j))).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        Ok(())
    }

    pub fn read_csv(r: impl BufRead) -> Result<GridFunction> {
        let mut lines = r.lines();
        let header = lines.next().ok_or_else(|| Error::Parse("empty grid file".into()))??;
        let dims: Vec<usize> = header
            .split(',')
            .map(|x| x.trim().parse::<usize>().map_err(|e| Error::Parse(format!("header: {e}"))))
            .collect::<Result<_>>()?;
        let [ns, nt] = dims[..] else {
            return Err(Error::Parse("header must be N_s,N_t".into()));
        };
        let mut values = Vec::with_capacity((ns + 1) * (nt + 1));
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            for x in line.split(',') {
                values.push(x.trim().parse::<f64>().map_err(|e| Error::Parse(format!("value: {e}")))?);
            }
        }
        GridFunction::from_values(ns, nt, values)
    }
}

fn merged(a: &[f64], b: &[f64], lo: f64, hi: f64) -> Vec<f64> {
    let mut v: Vec<f64> = a.iter().chain(b).copied().filter(|&x| x >= lo && x <= hi).collect();
    v.push(lo);
    v.push(hi);
    v.sort_by(|x, y| x.partial_cmp(y).unwrap());
    v.dedup_by(|x, y| (*x - *y).abs() <= 1e-15 * x.abs().max(1.0));
    v
}

/// `∫_M F·G dm`, exact for piecewise-bilinear carriers: both factors are
/// bilinear on each cell of the merged grid. `G` must be a single band.
pub fn exact_pairing(f: &GridFunction, g: &GridFunction) -> f64 {
    let gb = &g.bands()[0];
    let mut total = 0.0;
    for b in f.bands() {
        let (t0, t1) = b.t_range();
        let (g0, g1) = gb.t_range();
        let (lo, hi) = (t0.max(g0), t1.min(g1));
        if hi <= lo {
            continue;
        }
        let ss = merged(&b.s_nodes, &gb.s_nodes, 0.0, 1.0);
        let tt = merged(&b.t_nodes, &gb.t_nodes, lo, hi);
        let nt = tt.len();
        let mut fv = vec![0.0; ss.len() * nt];
        let mut gv = vec![0.0; ss.len() * nt];
        for (i, &s) in ss.iter().enumerate() {
            for (j, &t) in tt.iter().enumerate() {
                fv[i * nt + j] = b.eval(s, t);
                gv[i * nt + j] = gb.eval(s, t);
            }
        }
        // 1-D mass matrix [[1/3, 1/6], [1/6, 1/3]] in each direction
        let m = [[1.0 / 3.0, 1.0 / 6.0], [1.0 / 6.0, 1.0 / 3.0]];
        for i in 0..ss.len() - 1 {
            let hs = ss[i + 1] - ss[i];
            for j in 0..nt - 1 {
                let ht = tt[j + 1] - tt[j];
                let mut acc = 0.0;
                for a in 0..2 {
                    for c in 0..2 {
                        let fa = fv[(i + a) * nt + j + c];
                        for bb in 0..2 {
                            for d in 0..2 {
                                acc += m[a][bb] * m[c][d] * fa * gv[(i + bb) * nt + j + d];
                            }
                        }
                    }
                }
                total += hs * ht * acc;
            }
        }
    }
    total
}

/// Tensor trapezoid rule on the nodes of each band of `f`, weighted by `psi`.
pub fn trapezoid_pairing(f: &GridFunction, psi: impl Fn(f64, f64) -> f64) -> f64 {
    let weights = |nodes: &[f64]| -> Vec<f64> {
        let n = nodes.len();
        (0..n)
            .map(|i| {
                let left = if i > 0 { nodes[i] - nodes[i - 1] } else { 0.0 };
                let right = if i + 1 < n { nodes[i + 1] - nodes[i] } else { 0.0 };
                0.5 * (left + right)
            })
            .collect()
    };
    let mut total = 0.0;
    for b in f.bands() {
        let qs = weights(&b.s_nodes);
        let qt = weights(&b.t_nodes);
        let nt = b.nt();
        for (i, &s) in b.s_nodes.iter().enumerate() {
            for (j, &t) in b.t_nodes.iter().enumerate() {
                total += qs[i] * qt[j] * b.values[i * nt + j] * psi(s, t);
            }
        }
    }
    total
}

/// Pointwise product at the nodes of `f`.
pub fn multiply(g: &GridFunction, f: &GridFunction) -> GridFunction {
    let mut out = f.map_nodes(|s, t, v| v * g.eval(s, t));
    out.regularity = f.regularity;
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct LeafFunction {
    pub s: f64,
    pub values: Vec<f64>,
}

impl LeafFunction {
    pub fn new(s: f64, values: Vec<f64>) -> Self {
        LeafFunction { s, values }
    }

    pub fn n(&self) -> usize {
        self.values.len() - 1
    }

    pub fn sup(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn holder_seminorm(&self, alpha: f64) -> f64 {
        holder_seminorm(&self.values, alpha)
    }

    pub fn holder_norm(&self, alpha: f64) -> f64 {
        self.sup() + self.holder_seminorm(alpha)
    }
}

pub fn restrict_to_leaf(f: &GridFunction, s: f64, n: usize) -> LeafFunction {
    let values = (0..=n).map(|k| f.eval(s, k as f64 / n as f64)).collect();
    LeafFunction::new(s, values)
}

/// Largest `|v_i − v_j| / |t_i − t_j|^α` over all node pairs of a uniform grid.
pub fn holder_seminorm(values: &[f64], alpha: f64) -> f64 {
    let n = values.len().saturating_sub(1).max(1);
    let nodes: Vec<f64> = (0..values.len()).map(|i| i as f64 / n as f64).collect();
    holder_seminorm_nodes(&nodes, values, alpha)
}

pub fn holder_seminorm_nodes(nodes: &[f64], values: &[f64], alpha: f64) -> f64 {
    let mut best: f64 = 0.0;
    for i in 0..values.len() {
        for j in i + 1..values.len() {
            let d = nodes[j] - nodes[i];
            if d > 0.0 {
                best = best.max((values[i] - values[j]).abs() / d.powf(alpha));
            }
        }
    }
    best
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HolderParams {
    pub alpha: f64,
    pub beta: f64,
    pub beta_prime: f64,
}

impl Default for HolderParams {
    fn default() -> Self {
        HolderParams { alpha: 0.5, beta: 0.5, beta_prime: 0.75 }
    }
}

impl HolderParams {
    pub fn new(alpha: f64, beta: f64, beta_prime: f64) -> Result<Self> {
        let p = HolderParams { alpha, beta, beta_prime };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let open = |x: f64| x > 0.0 && x < 1.0;
        if !open(self.alpha) || !open(self.beta) {
            return Err(Error::InvalidParameter("alpha and beta must lie in (0, 1)".into()));
        }
        if self.beta > 1.0 - self.alpha + 1e-15 {
            return Err(Error::InvalidParameter(format!(
                "beta = {} exceeds 1 - alpha = {}",
                self.beta,
                1.0 - self.alpha
            )));
        }
        if !(self.beta_prime > self.beta && self.beta_prime <= 1.0) {
            return Err(Error::InvalidParameter("beta_prime must lie in (beta, 1]".into()));
        }
        Ok(())
    }
}

/// Smooth bump `exp(−1/(1−x²))` on `(−1, 1)`, unnormalized.
pub fn bump(x: f64) -> f64 {
    if x.abs() >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - x * x)).exp()
    }
}

/// Horizontal convolution with `ε⁻¹ρ(·/ε)`, reflecting across `s = 0` and
/// `s = 1`. Kernel weights are normalized on the grid so constants are
/// reproduced exactly.
pub fn mollify(f: &GridFunction, eps: f64, params: &HolderParams) -> Result<GridFunction> {
    params.validate()?;
    let (ns, nt) = f
        .uniform_shape()
        .ok_or_else(|| Error::InvalidParameter("mollify needs a single uniform band".into()))?;
    if !(eps > 0.0 && eps < 0.5) {
        return Err(Error::InvalidParameter(format!("eps = {eps} outside (0, 1/2)")));
    }
    let h = 1.0 / ns as f64;
    if eps < 2.0 * h {
        return Err(Error::Resolution(format!("eps = {eps} is below two grid cells ({h})")));
    }
    let r = (eps / h).ceil() as i64;
    let kernel: Vec<f64> = (-r..=r).map(|k| bump(k as f64 * h / eps)).collect();
    let total: f64 = kernel.iter().sum();
    let reflect = |k: i64| -> usize {
        let n = ns as i64;
        let mut k = k;
        while k < 0 || k > n {
            if k < 0 {
                k = -k;
            }
            if k > n {
                k = 2 * n - k;
            }
        }
        k as usize
    };
    let b = &f.bands()[0];
    let mut out = vec![0.0; (ns + 1) * (nt + 1)];
    for i in 0..=ns {
        for (m, kw) in kernel.iter().enumerate() {
            if *kw == 0.0 {
                continue;
            }
            let src = reflect(i as i64 + m as i64 - r);
            let wgt = kw / total;
            for j in 0..=nt {
                out[i * (nt + 1) + j] += wgt * b.at(src, j);
            }
        }
    }
    Ok(GridFunction::from_values(ns, nt, out)?.with_regularity(Regularity::UnstableC1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn holder_examples() {
        let one = LeafFunction::new(0.0, vec![1.0; 65]);
        assert_eq!(one.holder_seminorm(0.3), 0.0);
        assert_eq!(one.holder_norm(0.3), 1.0);
        let id = LeafFunction::new(0.0, (0..=64).map(|i| i as f64 / 64.0).collect());
        assert!((id.holder_seminorm(1.0) - 1.0).abs() < 1e-12);
        assert!((id.holder_norm(1.0) - 2.0).abs() < 1e-12);
        let sqrt: Vec<f64> = (0..=256).map(|i| (i as f64 / 256.0).sqrt()).collect();
        assert!((holder_seminorm(&sqrt, 0.5) - 1.0).abs() < 0.02);
    }

    #[test]
    fn holder_refines_monotonically() {
        // nested grids: the coarse node pairs are a subset of the fine ones
        let f = |x: f64| x.powf(0.75);
        let mut last = 0.0;
        for n in [16, 32, 64, 128, 256] {
            let v: Vec<f64> = (0..=n).map(|i| f(i as f64 / n as f64)).collect();
            let h = holder_seminorm(&v, 0.75);
            assert!(h >= last - 1e-15);
            last = h;
        }
        assert!((last - 1.0).abs() < 0.02);
    }

    #[test]
    fn grid_nodes_reproduce_values() {
        let f = GridFunction::from_fn(8, 4, |s, t| s * s + 3.0 * t);
        for i in 0..=8 {
            for j in 0..=4 {
                let (s, t) = (i as f64 / 8.0, j as f64 / 4.0);
                assert_eq!(f.eval(s, t), s * s + 3.0 * t);
            }
        }
    }

    #[test]
    fn restrict_examples() {
        let t = GridFunction::from_fn(16, 16, |_, t| t);
        let r = restrict_to_leaf(&t, 0.37, 32);
        for (k, v) in r.values.iter().enumerate() {
            assert!((v - k as f64 / 32.0).abs() < 1e-15);
        }
        let s = GridFunction::from_fn(10, 10, |s, _| s);
        assert!(restrict_to_leaf(&s, 0.3, 8).values.iter().all(|v| (v - 0.3).abs() < 1e-15));
        let f = GridFunction::from_fn(4, 4, |s, t| (7.0 * s).sin() + t * t);
        let mid = restrict_to_leaf(&f, 0.3, 4);
        let a = restrict_to_leaf(&f, 0.25, 4);
        let b = restrict_to_leaf(&f, 0.5, 4);
        for k in 0..=4 {
            let expect = 0.8 * a.values[k] + 0.2 * b.values[k];
            assert!((mid.values[k] - expect).abs() < 1e-14);
        }
    }

    #[test]
    fn mollify_constants_and_affine() {
        let p = HolderParams::default();
        let c = GridFunction::constant(64, 8, 2.5);
        for eps in [0.05, 0.2, 0.4] {
            let g = mollify(&c, eps, &p).unwrap();
            assert!(g.bands()[0].values.iter().all(|v| (v - 2.5).abs() < 1e-13));
        }
        let s = GridFunction::from_fn(128, 4, |s, _| s);
        let g = mollify(&s, 0.1, &p).unwrap();
        for i in 16..=112 {
            let x = i as f64 / 128.0;
            assert!((g.eval(x, 0.5) - x).abs() < 1e-13);
        }
        assert!(mollify(&s, 0.01, &p).is_err());
    }

    #[test]
    fn mollify_conserves_row_mass_away_from_edges() {
        let p = HolderParams::default();
        let f = GridFunction::from_fn(256, 4, |s, _| (-(s - 0.5) * (s - 0.5) / 0.01).exp());
        let g = mollify(&f, 0.05, &p).unwrap();
        let row = |h: &GridFunction| -> f64 {
            let b = &h.bands()[0];
            (0..256).map(|i| 0.5 * (b.at(i, 2) + b.at(i + 1, 2)) / 256.0).sum()
        };
        assert!((row(&f) - row(&g)).abs() < 1e-6);
    }

    #[test]
    fn mollify_does_not_raise_holder_norm() {
        let p = HolderParams::default();
        let f = GridFunction::from_fn(256, 2, |s, _| (s - 0.5).abs().powf(0.75));
        let g = mollify(&f, 0.05, &p).unwrap();
        assert!(g.unstable_holder_norm(0.75) <= f.unstable_holder_norm(0.75) + 1e-12);
    }

    #[test]
    fn leaf_weights_integrate_exactly() {
        let f = GridFunction::from_fn(8, 12, |s, t| 1.0 + s * t);
        let w = f.leaf_weights(0.4, 20);
        // φ ≡ 1 recovers the leaf integral, φ = t the first moment
        let total: f64 = w.iter().sum();
        assert!((total - (1.0 + 0.2)).abs() < 1e-14);
        let first: f64 = w.iter().enumerate().map(|(k, x)| x * k as f64 / 20.0).sum();
        assert!((first - (0.5 + 0.4 / 3.0)).abs() < 1e-14);
    }

    #[test]
    fn csv_round_trip() {
        let f = GridFunction::from_fn(5, 3, |s, t| (s - t).exp() / 3.0);
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        let back = GridFunction::read_csv(&buf[..]).unwrap();
        assert_eq!(back.bands()[0].values, f.bands()[0].values);
        assert!(GridFunction::read_csv("3\n1,2".as_bytes()).is_err());
    }

    #[test]
    fn params_validation() {
        assert!(HolderParams::new(0.5, 0.5, 0.75).is_ok());
        assert!(HolderParams::new(0.6, 0.5, 0.75).is_err());
        assert!(HolderParams::new(0.5, 0.4, 0.3).is_err());
    }

    #[test]
    fn multiply_identity_and_zero() {
        let f = GridFunction::from_fn(6, 6, |s, t| s - t * t);
        let one = GridFunction::constant(3, 3, 1.0);
        assert_eq!(multiply(&one, &f), f);
        assert_eq!(multiply(&GridFunction::constant(3, 3, 0.0), &f).sup_norm(), 0.0);
    }

    proptest! {
        #[test]
        fn multiply_commutes_with_restriction(k in 0usize..=16, a in -2.0f64..2.0) {
            let f = GridFunction::from_fn(16, 16, |s, t| (3.0 * s).cos() + a * t);
            let g = GridFunction::from_fn(16, 16, |s, t| 1.0 + s * t);
            let s = k as f64 / 16.0;
            let lhs = restrict_to_leaf(&multiply(&g, &f), s, 16);
            let rf = restrict_to_leaf(&f, s, 16);
            let rg = restrict_to_leaf(&g, s, 16);
            for j in 0..=16 {
                prop_assert!((lhs.values[j] - rf.values[j] * rg.values[j]).abs() < 1e-14);
            }
        }

        #[test]
        fn multiply_is_bilinear(c in -3.0f64..3.0) {
            let f = GridFunction::from_fn(8, 8, |s, t| s + t);
            let g = GridFunction::from_fn(8, 8, |s, t| s * t - 1.0);
            let lhs = multiply(&g.scale(c), &f);
            let rhs = multiply(&g, &f).scale(c);
            for (x, y) in lhs.bands()[0].values.iter().zip(&rhs.bands()[0].values) {
                prop_assert!((x - y).abs() < 1e-13);
            }
        }
    }
}
