//! Ulam discretization of the transfer operator with exact cell areas.
//!
//! Cells are products of κ-adic intervals of level `p` in s and the
//! intervals cut by the endpoints of the image strips of `T^k(M)`, `k ≤ q`,
//! in t. Every cell is carried by `T` onto a rectangle, so each transition
//! weight is a product of two exact interval overlap fractions.

use num_rational::BigRational;
use num_traits::{One, Zero};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::hat_weights_pl;
use crate::map::{ratio_to_f64, BakerMap};
use crate::norms::LeafFunctional;

pub const DEFAULT_CELL_CAP: usize = 1 << 21;

/// Row-stochastic Ulam matrix in compressed rows.
#[derive(Clone, Debug)]
pub struct UlamModel {
    kappa: usize,
    pub level: u32,
    pub depth: u32,
    n_s: usize,
    t_breaks: Vec<f64>,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<f64>,
}

/// Breakpoints in t: `{0, 1}` closed under the vertical branches `q` times,
/// plus `k/refine` when `refine > 0`.
pub fn t_partition(map: &BakerMap, depth: u32, refine: usize) -> Vec<BigRational> {
    let mut pts = vec![BigRational::zero(), BigRational::one()];
    let mut frontier = pts.clone();
    for _ in 0..depth {
        let mut next = Vec::with_capacity(frontier.len() * map.kappa());
        for b in 0..map.kappa() {
            next.extend(frontier.iter().map(|t| map.t_branch_exact(b, t)));
        }
        pts.extend(next.iter().cloned());
        frontier = next;
    }
    if refine > 0 {
        pts.extend((0..=refine).map(|k| BigRational::new((k as i64).into(), (refine as i64).into())));
    }
    pts.sort();
    pts.dedup();
    pts
}

/// Exact overlap fractions of `[lo, hi]` with the partition intervals.
fn overlaps(breaks: &[BigRational], lo: &BigRational, hi: &BigRational) -> Vec<(u32, f64)> {
    let len = hi - lo;
    let start = breaks.partition_point(|b| b <= lo).saturating_sub(1);
    let mut out = Vec::new();
    for j in start..breaks.len() - 1 {
        if &breaks[j] >= hi {
            break;
        }
        let a = if &breaks[j] > lo { &breaks[j] } else { lo };
        let b = if &breaks[j + 1] < hi { &breaks[j + 1] } else { hi };
        if b > a {
            out.push((j as u32, ratio_to_f64(&((b - a) / &len))));
        }
    }
    out
}

impl UlamModel {
    pub fn build(map: &BakerMap, level: u32, depth: u32) -> Result<Self> {
        Self::build_with(map, level, depth, 0, DEFAULT_CELL_CAP)
    }

    pub fn build_with(map: &BakerMap, level: u32, depth: u32, refine: usize, cap: usize) -> Result<Self> {
        if level == 0 {
            return Err(Error::InvalidParameter("Ulam level p must be >= 1".into()));
        }
        let kappa = map.kappa();
        let n_s = kappa
            .checked_pow(level)
            .ok_or_else(|| Error::ResourceCap(format!("kappa^{level} overflows")))?;
        if depth as f64 * (kappa as f64).log2() > 30.0 {
            return Err(Error::ResourceCap(format!("strip depth {depth} too large")));
        }
        let breaks = t_partition(map, depth, refine);
        let n_t = breaks.len() - 1;
        if n_s.saturating_mul(n_t) > cap {
            return Err(Error::ResourceCap(format!("{n_s} x {n_t} cells exceed the cap {cap}")));
        }
        // t-image fractions per (branch, t-interval)
        let t_images: Vec<Vec<Vec<(u32, f64)>>> = (0..kappa)
            .map(|b| {
                (0..n_t)
                    .map(|j| {
                        let x = map.t_branch_exact(b, &breaks[j]);
                        let y = map.t_branch_exact(b, &breaks[j + 1]);
                        let (lo, hi) = if x <= y { (x, y) } else { (y, x) };
                        overlaps(&breaks, &lo, &hi)
                    })
                    .collect()
            })
            .collect();
        let sub = n_s / kappa;
        let inv_k = 1.0 / kappa as f64;
        let rows: Vec<Vec<(u32, f64)>> = (0..n_s)
            .into_par_iter()
            .flat_map_iter(|a| {
                let b = a / sub;
                let r = a % sub;
                let r = if map.layout()[b].flip_horizontal { sub - 1 - r } else { r };
                let targets: Vec<usize> = (0..kappa).map(|c| r * kappa + c).collect();
                let t_images = &t_images;
                (0..n_t).map(move |j| {
                    let mut row = Vec::with_capacity(kappa * t_images[b][j].len());
                    for &a2 in &targets {
                        for &(j2, fr) in &t_images[b][j] {
                            row.push(((a2 * n_t) as u32 + j2, fr * inv_k));
                        }
                    }
                    row.sort_by_key(|e| e.0);
                    row
                })
            })
            .collect();
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        row_ptr.push(0);
        let nnz: usize = rows.iter().map(Vec::len).sum();
        let mut cols = Vec::with_capacity(nnz);
        let mut vals = Vec::with_capacity(nnz);
        for row in rows {
            for (c, v) in row {
                cols.push(c);
                vals.push(v);
            }
            row_ptr.push(cols.len());
        }
        Ok(UlamModel {
            kappa,
            level,
            depth,
            n_s,
            t_breaks: breaks.iter().map(ratio_to_f64).collect(),
            row_ptr,
            cols,
            vals,
        })
    }

    pub fn kappa(&self) -> usize {
        self.kappa
    }

    pub fn cell_count(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn n_s(&self) -> usize {
        self.n_s
    }

    pub fn n_t(&self) -> usize {
        self.t_breaks.len() - 1
    }

    pub fn t_breaks(&self) -> &[f64] {
        &self.t_breaks
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// `(s-index, t-index)` of a cell.
    pub fn cell(&self, i: usize) -> (usize, usize) {
        (i / self.n_t(), i % self.n_t())
    }

    /// `(s0, s1, t0, t1)`.
    pub fn rect(&self, i: usize) -> (f64, f64, f64, f64) {
        let (a, j) = self.cell(i);
        let h = 1.0 / self.n_s as f64;
        (a as f64 * h, (a + 1) as f64 * h, self.t_breaks[j], self.t_breaks[j + 1])
    }

    pub fn area(&self, i: usize) -> f64 {
        let (s0, s1, t0, t1) = self.rect(i);
        (s1 - s0) * (t1 - t0)
    }

    pub fn row(&self, i: usize) -> (&[u32], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.cols[r.clone()], &self.vals[r])
    }

    pub fn max_row_sum_error(&self) -> f64 {
        (0..self.cell_count())
            .map(|i| (self.row(i).1.iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Measure push-forward `μ ↦ μP`.
    pub fn push(&self, mu: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; mu.len()];
        for (i, &m) in mu.iter().enumerate() {
            if m == 0.0 {
                continue;
            }
            let (c, v) = self.row(i);
            for (&j, &p) in c.iter().zip(v) {
                out[j as usize] += m * p;
            }
        }
        out
    }

    /// Twisted push-forward `μ ↦ (μ·w) P` with cell weights `w`.
    pub fn push_weighted(&self, mu: &[f64], w: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; mu.len()];
        for (i, (&m, &wi)) in mu.iter().zip(w).enumerate() {
            let m = m * wi;
            if m == 0.0 {
                continue;
            }
            let (c, v) = self.row(i);
            for (&j, &p) in c.iter().zip(v) {
                out[j as usize] += m * p;
            }
        }
        out
    }

    /// Observable pull-back `h ↦ Ph`, the Ulam analogue of `h∘T`.
    pub fn pull(&self, h: &[f64]) -> Vec<f64> {
        (0..self.cell_count())
            .into_par_iter()
            .map(|i| {
                let (c, v) = self.row(i);
                c.iter().zip(v).map(|(&j, &p)| p * h[j as usize]).sum()
            })
            .collect()
    }

    /// Cell averages of `f` by 3×3 Gauss–Legendre.
    pub fn cell_averages<F: Fn(f64, f64) -> f64 + Sync>(&self, f: F) -> Vec<f64> {
        const X: [f64; 3] = [-0.774_596_669_241_483_4, 0.0, 0.774_596_669_241_483_4];
        const W: [f64; 3] = [5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0];
        (0..self.cell_count())
            .into_par_iter()
            .map(|i| {
                let (s0, s1, t0, t1) = self.rect(i);
                let mut acc = 0.0;
                for (xs, ws) in X.iter().zip(W) {
                    let s = 0.5 * (s0 + s1) + 0.5 * (s1 - s0) * xs;
                    for (xt, wt) in X.iter().zip(W) {
                        let t = 0.5 * (t0 + t1) + 0.5 * (t1 - t0) * xt;
                        acc += ws * wt * f(s, t);
                    }
                }
                acc
            })
            .collect()
    }

    /// Lebesgue measure of the cells.
    pub fn lebesgue(&self) -> Vec<f64> {
        (0..self.cell_count()).map(|i| self.area(i)).collect()
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let n = self.cell_count();
        let mut m = vec![vec![0.0; n]; n];
        for (i, row) in m.iter_mut().enumerate() {
            let (c, v) = self.row(i);
            for (&j, &p) in c.iter().zip(v) {
                row[j as usize] += p;
            }
        }
        m
    }
}

/// A cell measure viewed as a piecewise-constant density.
#[derive(Clone, Debug)]
pub struct UlamDensity {
    n_s: usize,
    t_breaks: Vec<f64>,
    /// Row-major by s-cell, `density[a * n_t + j]`.
    density: Vec<f64>,
}

impl UlamDensity {
    pub fn new(model: &UlamModel, mu: &[f64]) -> Self {
        let density = mu.iter().enumerate().map(|(i, m)| m / model.area(i)).collect();
        UlamDensity { n_s: model.n_s(), t_breaks: model.t_breaks().to_vec(), density }
    }

    pub fn eval(&self, s: f64, t: f64) -> f64 {
        let a = ((s * self.n_s as f64).floor().max(0.0) as usize).min(self.n_s - 1);
        let n_t = self.t_breaks.len() - 1;
        let j = self.t_breaks.partition_point(|b| *b <= t).clamp(1, n_t) - 1;
        self.density[a * n_t + j]
    }
}

impl LeafFunctional for UlamDensity {
    fn leaf_weights(&self, s: f64, n: usize) -> Vec<f64> {
        let a = ((s * self.n_s as f64).floor().max(0.0) as usize).min(self.n_s - 1);
        let n_t = self.t_breaks.len() - 1;
        let mut w = vec![0.0; n + 1];
        for j in 0..n_t {
            let d = self.density[a * n_t + j];
            if d != 0.0 {
                hat_weights_pl(&self.t_breaks[j..j + 2], &[d, d], n, &mut w);
            }
        }
        w
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Transition weight from the definition: area of `cellᵢ ∩ T⁻¹cellⱼ`
    /// over area of `cellᵢ`, with `T⁻¹cellⱼ ∩ cellᵢ` found by mapping the
    /// corners of cell i exactly.
    fn oracle_matrix(map: &BakerMap, p: u32, q: u32) -> Vec<Vec<BigRational>> {
        let k = map.kappa() as i64;
        let n_s = k.pow(p);
        let breaks = t_partition(map, q, 0);
        let n_t = breaks.len() - 1;
        let n = n_s as usize * n_t;
        let mut out = vec![vec![BigRational::zero(); n]; n];
        let r = |a: i64, b: i64| BigRational::new(a.into(), b.into());
        for a in 0..n_s {
            for j in 0..n_t {
                let s0 = r(a, n_s);
                let s1 = r(a + 1, n_s);
                let mid = (&s0 + &s1) / r(2, 1);
                let b = map.branch_of_exact(&mid);
                let map_s = |s: &BigRational| {
                    let u = s * r(k, 1) - r(b as i64, 1);
                    if map.layout()[b].flip_horizontal {
                        r(1, 1) - u
                    } else {
                        u
                    }
                };
                let (x0, x1) = (map_s(&s0), map_s(&s1));
                let (x0, x1) = if x0 <= x1 { (x0, x1) } else { (x1, x0) };
                let y0 = map.t_branch_exact(b, &breaks[j]);
                let y1 = map.t_branch_exact(b, &breaks[j + 1]);
                let (y0, y1) = if y0 <= y1 { (y0, y1) } else { (y1, y0) };
                let img_area = (&x1 - &x0) * (&y1 - &y0);
                for a2 in 0..n_s {
                    for j2 in 0..n_t {
                        let u0 = r(a2, n_s).max(x0.clone());
                        let u1 = r(a2 + 1, n_s).min(x1.clone());
                        let v0 = breaks[j2].clone().max(y0.clone());
                        let v1 = breaks[j2 + 1].clone().min(y1.clone());
                        if u1 > u0 && v1 > v0 {
                            out[a as usize * n_t + j][a2 as usize * n_t + j2] = (u1 - u0) * (v1 - v0) / &img_area;
                        }
                    }
                }
            }
        }
        out
    }

    fn assert_matches_oracle(map: &BakerMap, p: u32, q: u32) {
        let model = UlamModel::build(map, p, q).unwrap();
        let dense = model.to_dense();
        let oracle = oracle_matrix(map, p, q);
        assert_eq!(dense.len(), oracle.len());
        for (r1, r2) in dense.iter().zip(&oracle) {
            for (x, y) in r1.iter().zip(r2) {
                assert!((x - ratio_to_f64(y)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn measure_preserving_four_cells() {
        let m = BakerMap::with_lambda(2, 1, 2).unwrap();
        let model = UlamModel::build(&m, 1, 1).unwrap();
        assert_eq!(model.cell_count(), 4);
        let d = model.to_dense();
        for row in &d {
            assert!(row.iter().all(|v| *v == 0.0 || *v == 0.5));
            assert_eq!(row.iter().sum::<f64>(), 1.0);
        }
        for j in 0..4 {
            assert_eq!(d.iter().map(|r| r[j]).sum::<f64>(), 1.0);
        }
        assert_matches_oracle(&m, 1, 1);
    }

    #[test]
    fn matches_rational_oracle() {
        assert_matches_oracle(&BakerMap::with_lambda(2, 1, 4).unwrap(), 2, 2);
        assert_matches_oracle(&BakerMap::with_lambda(3, 1, 8).unwrap(), 2, 1);
        let flipped = crate::map::MapSpec {
            kappa: 2,
            lambda: "1/3".into(),
            layout: Some(vec![
                crate::map::BranchSpec { y_offset: "1/2".into(), flip_horizontal: true, flip_vertical: false },
                crate::map::BranchSpec { y_offset: "0".into(), flip_horizontal: false, flip_vertical: true },
            ]),
        }
        .build()
        .unwrap();
        assert_matches_oracle(&flipped, 2, 2);
    }

    #[test]
    fn rows_are_stochastic() {
        for m in crate::suite::shipped_maps() {
            let model = UlamModel::build(&m, 4, 3).unwrap();
            assert!(model.max_row_sum_error() < 1e-12);
        }
    }

    #[test]
    fn image_cells_carry_area_scaling() {
        // Lebesgue pushed once lands on T(M) with density 1/(κλ) = 2
        let m = BakerMap::with_lambda(2, 1, 4).unwrap();
        let model = UlamModel::build(&m, 3, 2).unwrap();
        let pushed = model.push(&model.lebesgue());
        for (i, mass) in pushed.iter().enumerate() {
            let (_, _, t0, t1) = model.rect(i);
            let mid = 0.5 * (t0 + t1);
            let inside = m.strip_of(mid).is_some();
            let expect = if inside { 2.0 * model.area(i) } else { 0.0 };
            assert!((mass - expect).abs() < 1e-15, "cell {i}: {mass} vs {expect}");
        }
    }

    #[test]
    fn cap_is_enforced() {
        let m = BakerMap::with_lambda(2, 1, 4).unwrap();
        assert!(matches!(UlamModel::build_with(&m, 10, 10, 0, 1000), Err(Error::ResourceCap(_))));
        assert!(UlamModel::build(&m, 0, 1).is_err());
    }

    #[test]
    fn density_integrates_to_mass() {
        let m = BakerMap::with_lambda(2, 1, 4).unwrap();
        let model = UlamModel::build(&m, 3, 2).unwrap();
        let mu = model.push(&model.lebesgue());
        let dens = UlamDensity::new(&model, &mu);
        let total: f64 = (0..64)
            .map(|k| {
                let s = (k as f64 + 0.5) / 64.0;
                dens.leaf_weights(s, 64).iter().sum::<f64>()
            })
            .sum::<f64>()
            / 64.0;
        assert!((total - 1.0).abs() < 1e-12);
    }
}
