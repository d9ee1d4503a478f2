//! Transfer operator `Lf = f∘T⁻¹ / (κλ)` on `T(M)`, zero elsewhere.
//!
//! Each band of the input is cut along the branch columns `[b/κ, (b+1)/κ]`
//! and transported node by node into the image strip of branch `b`, so the
//! piecewise-bilinear carrier is mapped exactly.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{Band, GridFunction, Regularity};
use crate::map::BakerMap;

#[derive(Clone, Debug)]
pub struct TransferOperator {
    pub map: BakerMap,
    pub order: usize,
}

/// Part of `band` over `s ∈ [lo, hi]`, with interpolated edge columns.
fn column_slab(band: &Band, lo: f64, hi: f64) -> (Vec<f64>, Vec<f64>) {
    let mut s_nodes = vec![lo];
    let mut values = Vec::new();
    let mut col = Vec::new();
    band.column_into(lo, &mut col);
    values.extend_from_slice(&col);
    let nt = band.nt();
    for (i, &s) in band.s_nodes.iter().enumerate() {
        if s > lo && s < hi {
            s_nodes.push(s);
            values.extend_from_slice(&band.values[i * nt..(i + 1) * nt]);
        }
    }
    band.column_into(hi, &mut col);
    s_nodes.push(hi);
    values.extend_from_slice(&col);
    (s_nodes, values)
}

impl TransferOperator {
    pub fn new(map: BakerMap, order: usize) -> Result<Self> {
        if order == 0 {
            return Err(Error::InvalidParameter("operator order must be >= 1".into()));
        }
        Ok(TransferOperator { map, order })
    }

    /// One application of `L`.
    pub fn step(map: &BakerMap, f: &GridFunction) -> GridFunction {
        let kappa = map.kappa();
        let jac = map.jacobian();
        let mut out = Vec::with_capacity(f.bands().len() * kappa);
        for band in f.bands() {
            let nt = band.nt();
            for b in 0..kappa {
                let lo = b as f64 / kappa as f64;
                let hi = (b + 1) as f64 / kappa as f64;
                let (s_src, vals) = column_slab(band, lo, hi);
                let mut s_nodes: Vec<f64> = s_src.iter().map(|&s| map.s_branch(b, s).clamp(0.0, 1.0)).collect();
                let last = s_nodes.len() - 1;
                let mut rows: Vec<&[f64]> = (0..s_nodes.len()).map(|i| &vals[i * nt..(i + 1) * nt]).collect();
                if map.layout()[b].flip_horizontal {
                    s_nodes.reverse();
                    rows.reverse();
                }
                s_nodes[0] = 0.0;
                s_nodes[last] = 1.0;
                let tau = map.t_branch(b);
                let mut t_nodes: Vec<f64> = band.t_nodes.iter().map(|&t| tau.apply(t)).collect();
                let flip_v = map.layout()[b].flip_vertical;
                if flip_v {
                    t_nodes.reverse();
                }
                let mut values = Vec::with_capacity(s_nodes.len() * nt);
                for row in rows {
                    if flip_v {
                        values.extend(row.iter().rev().map(|v| v / jac));
                    } else {
                        values.extend(row.iter().map(|v| v / jac));
                    }
                }
                out.push(Band { s_nodes, t_nodes, values });
            }
        }
        GridFunction::from_bands(out, f.regularity)
    }

    /// `Lⁿ f` with `n = self.order`.
    pub fn apply(&self, f: &GridFunction) -> GridFunction {
        let mut g = Self::step(&self.map, f);
        for _ in 1..self.order {
            g = Self::step(&self.map, &g);
        }
        g
    }

    /// `Lⁿ f` sampled back onto a uniform `ns × nt` grid (zero in gaps).
    /// Needs `nt ≥ 4/λ` so every image strip spans several cells.
    pub fn apply_resampled(&self, f: &GridFunction, ns: usize, nt: usize) -> Result<GridFunction> {
        let need = (4.0 / self.map.lambda_f64()).ceil() as usize;
        if nt < need {
            return Err(Error::Resolution(format!("N_t = {nt} cannot resolve strips of height lambda; need >= {need}")));
        }
        let g = self.apply(f);
        Ok(conservative_resample(&g, ns, nt).with_regularity(f.regularity))
    }
}

/// Integral over `[a, b]` of the piecewise linear column `(nodes, vals)`.
fn column_integral(nodes: &[f64], vals: &[f64], a: f64, b: f64) -> f64 {
    let mut acc = 0.0;
    for k in 0..nodes.len().saturating_sub(1) {
        let (x0, x1) = (nodes[k], nodes[k + 1]);
        let lo = a.max(x0);
        let hi = b.min(x1);
        if hi <= lo || x1 <= x0 {
            continue;
        }
        let at = |x: f64| vals[k] + (vals[k + 1] - vals[k]) * (x - x0) / (x1 - x0);
        acc += 0.5 * (at(lo) + at(hi)) * (hi - lo);
    }
    acc
}

/// Uniform `ns × nt` grid whose node values are averages of `g` over the
/// t-window of half-width `1/(2(nt−1))`. Unlike point sampling this keeps
/// the mass of thin strips that fall between nodes.
pub fn conservative_resample(g: &GridFunction, ns: usize, nt: usize) -> GridFunction {
    let h = 1.0 / (nt - 1) as f64;
    GridFunction::from_fn(ns, nt, |s, t| {
        let mut col = Vec::new();
        let a = (t - 0.5 * h).max(0.0);
        let b = (t + 0.5 * h).min(1.0);
        let mut acc = 0.0;
        for band in g.bands() {
            let (t0, t1) = band.t_range();
            if t1 < a || t0 > b {
                continue;
            }
            band.column_into(s, &mut col);
            acc += column_integral(&band.t_nodes, &col, a, b);
        }
        acc / (b - a)
    })
}

/// `φ∘Tⁿ` sampled at the nodes of `φ`.
pub fn koopman(map: &BakerMap, phi: &GridFunction, n: usize) -> GridFunction {
    phi.map_nodes(|s, t, _| {
        let mut p = crate::map::Point::new(s, t);
        for _ in 0..n {
            p = map.forward(p);
        }
        phi.eval(p.s, p.t)
    })
}

/// `φ∘Tⁿ` for an observable given as a function, evaluated at a point.
pub fn koopman_fn<F: Fn(f64, f64) -> f64>(map: &BakerMap, phi: F, n: usize) -> impl Fn(f64, f64) -> f64 {
    let map = map.clone();
    move |s, t| {
        let mut p = crate::map::Point::new(s, t);
        for _ in 0..n {
            p = map.forward(p);
        }
        phi(p.s, p.t)
    }
}

/// Complex density stored as two real grids on the same nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexGrid {
    pub re: GridFunction,
    pub im: GridFunction,
}

impl ComplexGrid {
    pub fn real(f: GridFunction) -> Self {
        let im = f.map_values(|_| 0.0);
        ComplexGrid { re: f, im }
    }

    /// Nodewise modulus.
    pub fn modulus(&self) -> GridFunction {
        let bands = self
            .re
            .bands()
            .iter()
            .zip(self.im.bands())
            .map(|(a, b)| Band {
                s_nodes: a.s_nodes.clone(),
                t_nodes: a.t_nodes.clone(),
                values: a.values.iter().zip(&b.values).map(|(x, y)| x.hypot(*y)).collect(),
            })
            .collect();
        GridFunction::from_bands(bands, Regularity::Unknown)
    }
}

#[derive(Clone, Debug)]
pub struct TwistedOperator {
    pub base: TransferOperator,
    pub g: GridFunction,
    pub z: Complex64,
}

impl TwistedOperator {
    pub fn new(base: TransferOperator, g: GridFunction, z: Complex64) -> Result<Self> {
        let guard = z.re.abs() * g.sup_norm();
        if guard > 40.0 {
            return Err(Error::Overflow(format!("|Re z|·sup|g| = {guard} exceeds 40")));
        }
        Ok(TwistedOperator { base, g, z })
    }

    /// `L_{zg}ⁿ f`, each step being `L(e^{zg} f)` with the weight taken
    /// at the nodes.
    pub fn apply(&self, f: &ComplexGrid) -> ComplexGrid {
        let mut cur = f.clone();
        for _ in 0..self.base.order {
            cur = self.step(&cur);
        }
        cur
    }

    fn step(&self, f: &ComplexGrid) -> ComplexGrid {
        let z = self.z;
        let g = &self.g;
        let weight = |s: f64, t: f64| (z * g.eval(s, t)).exp();
        if z.im == 0.0 {
            let re = f.re.map_nodes(|s, t, v| v * weight(s, t).re);
            let im = f.im.map_nodes(|s, t, v| v * weight(s, t).re);
            return ComplexGrid {
                re: TransferOperator::step(&self.base.map, &re),
                im: TransferOperator::step(&self.base.map, &im),
            };
        }
        // (a + ib)(c + id) with a, b from f and c + id = e^{zg}
        let a_flat: Vec<f64> = f.re.bands().iter().flat_map(|b| b.values.iter().copied()).collect();
        let b_flat: Vec<f64> = f.im.bands().iter().flat_map(|b| b.values.iter().copied()).collect();
        let mut k = 0usize;
        let re = f.re.map_nodes(|s, t, _| {
            let e = weight(s, t);
            let v = a_flat[k] * e.re - b_flat[k] * e.im;
            k += 1;
            v
        });
        let mut k = 0usize;
        let im = f.im.map_nodes(|s, t, _| {
            let e = weight(s, t);
            let v = a_flat[k] * e.im + b_flat[k] * e.re;
            k += 1;
            v
        });
        ComplexGrid {
            re: TransferOperator::step(&self.base.map, &re),
            im: TransferOperator::step(&self.base.map, &im),
        }
    }
}

pub fn twisted_apply(top: &TwistedOperator, f: &GridFunction) -> ComplexGrid {
    top.apply(&ComplexGrid::real(f.clone()))
}
