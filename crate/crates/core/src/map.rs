//! Generalized (κ, λ) baker maps of the unit square.
//!
//! Coordinates are `(s, t)`: `s` is horizontal (expanded by κ), `t` is
//! vertical (contracted by λ). Branch `i` covers `s ∈ [i/κ, (i+1)/κ)` and is
//! sent onto the horizontal strip `[0,1] × [y_i, y_i + λ]`.

use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest generation size `pullback_leaves` will enumerate.
pub const DEFAULT_LEAF_CAP: usize = 1 << 22;

pub fn parse_rational(text: &str) -> Result<BigRational> {
    let text = text.trim();
    BigRational::from_str(text).map_err(|_| Error::Parse(format!("not a rational: {text:?}")))
}

pub fn ratio_to_f64(q: &BigRational) -> f64 {
    q.to_f64().unwrap_or(f64::NAN)
}

/// Exact conversion of a finite double into a rational.
pub fn f64_to_ratio(x: f64) -> BigRational {
    BigRational::from_float(x).expect("finite value")
}

fn ratio(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Branch {
    pub y_offset: BigRational,
    pub flip_horizontal: bool,
    pub flip_vertical: bool,
}

/// Affine map `t ↦ scale·t + shift` on a stable leaf.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Affine {
    pub scale: f64,
    pub shift: f64,
}

impl Affine {
    pub const IDENTITY: Affine = Affine { scale: 1.0, shift: 0.0 };

    pub fn apply(&self, t: f64) -> f64 {
        self.scale * t + self.shift
    }

    /// `other ∘ self`.
    pub fn then(&self, other: &Affine) -> Affine {
        Affine {
            scale: other.scale * self.scale,
            shift: other.scale * self.shift + other.shift,
        }
    }

    /// Image of `[0, 1]` as an ordered interval.
    pub fn image(&self) -> (f64, f64) {
        let a = self.shift;
        let b = self.scale + self.shift;
        if a <= b {
            (a, b)
        } else {
            (b, a)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Point {
    pub s: f64,
    pub t: f64,
}

impl Point {
    pub fn new(s: f64, t: f64) -> Self {
        Point { s, t }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExactPoint {
    pub s: BigRational,
    pub t: BigRational,
}

impl ExactPoint {
    pub fn new(s: BigRational, t: BigRational) -> Self {
        ExactPoint { s, t }
    }

    pub fn to_f64(&self) -> Point {
        Point::new(ratio_to_f64(&self.s), ratio_to_f64(&self.t))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StableLeaf {
    pub s: BigRational,
}

impl StableLeaf {
    pub fn new(s: BigRational) -> Self {
        StableLeaf { s }
    }

    pub fn at(s: f64) -> Self {
        StableLeaf { s: f64_to_ratio(s) }
    }

    pub fn s_f64(&self) -> f64 {
        ratio_to_f64(&self.s)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct UnstableLeaf {
    pub t: BigRational,
}

impl UnstableLeaf {
    pub fn new(t: BigRational) -> Self {
        UnstableLeaf { t }
    }

    pub fn t_f64(&self) -> f64 {
        ratio_to_f64(&self.t)
    }
}

pub fn leaf_distance(w1: &StableLeaf, w2: &StableLeaf) -> BigRational {
    let d = &w1.s - &w2.s;
    if d < BigRational::zero() {
        -d
    } else {
        d
    }
}

/// One pulled-back stable leaf of a generation, with the affine map its
/// vertical coordinate follows under `Tⁿ`.
#[derive(Clone, Copy, Debug)]
pub struct LeafPreimage {
    pub s: f64,
    pub t_map: Affine,
}

#[derive(Clone, Debug)]
pub struct BakerMap {
    kappa: usize,
    lambda: BigRational,
    layout: Vec<Branch>,
    lambda_f: f64,
    offsets_f: Vec<f64>,
}

impl BakerMap {
    pub fn new(kappa: usize, lambda: BigRational, layout: Vec<Branch>) -> Result<Self> {
        if kappa < 2 {
            return Err(Error::InvalidMap(format!("kappa must be >= 2, got {kappa}")));
        }
        let one = BigRational::one();
        let inv_kappa = ratio(1, kappa as i64);
        if lambda <= BigRational::zero() || lambda > inv_kappa {
            return Err(Error::InvalidMap(format!("lambda must lie in (0, 1/kappa], got {lambda}")));
        }
        if layout.len() != kappa {
            return Err(Error::InvalidMap(format!(
                "layout has {} branches, expected {kappa}",
                layout.len()
            )));
        }
        for (i, b) in layout.iter().enumerate() {
            if b.y_offset < BigRational::zero() || b.y_offset > &one - &lambda {
                return Err(Error::InvalidMap(format!(
                    "branch {i}: y_offset {} outside [0, 1 - lambda]",
                    b.y_offset
                )));
            }
        }
        let mut ys: Vec<&BigRational> = layout.iter().map(|b| &b.y_offset).collect();
        ys.sort();
        for w in ys.windows(2) {
            if w[1] - w[0] < lambda {
                return Err(Error::InvalidMap(format!(
                    "image strips at y={} and y={} overlap",
                    w[0], w[1]
                )));
            }
        }
        let lambda_f = ratio_to_f64(&lambda);
        let offsets_f = layout.iter().map(|b| ratio_to_f64(&b.y_offset)).collect();
        Ok(BakerMap {
            kappa,
            lambda,
            layout,
            lambda_f,
            offsets_f,
        })
    }

    /// Strips stacked bottom-up with spacing 1/κ, no flips.
    pub fn standard(kappa: usize, lambda: BigRational) -> Result<Self> {
        let layout = (0..kappa)
            .map(|i| Branch {
                y_offset: ratio(i as i64, kappa as i64),
                flip_horizontal: false,
                flip_vertical: false,
            })
            .collect();
        Self::new(kappa, lambda, layout)
    }

    /// Shorthand for `standard(kappa, num/den)`.
    pub fn with_lambda(kappa: usize, num: i64, den: i64) -> Result<Self> {
        Self::standard(kappa, ratio(num, den))
    }

    pub fn kappa(&self) -> usize {
        self.kappa
    }

    pub fn lambda(&self) -> &BigRational {
        &self.lambda
    }

    pub fn lambda_f64(&self) -> f64 {
        self.lambda_f
    }

    pub fn layout(&self) -> &[Branch] {
        &self.layout
    }

    pub fn offset_f64(&self, b: usize) -> f64 {
        self.offsets_f[b]
    }

    /// |det DT| = κλ.
    pub fn jacobian(&self) -> f64 {
        self.kappa as f64 * self.lambda_f
    }

    pub fn jacobian_exact(&self) -> BigRational {
        &self.lambda * BigInt::from(self.kappa)
    }

    pub fn branch_of(&self, s: f64) -> usize {
        let b = (s * self.kappa as f64).floor();
        if b < 0.0 {
            0
        } else {
            (b as usize).min(self.kappa - 1)
        }
    }

    pub fn branch_of_exact(&self, s: &BigRational) -> usize {
        let k = (s * BigInt::from(self.kappa)).floor().to_integer();
        k.to_usize().unwrap_or(0).min(self.kappa - 1)
    }

    /// Vertical branch map `τ_b`.
    pub fn t_branch(&self, b: usize) -> Affine {
        let y = self.offsets_f[b];
        if self.layout[b].flip_vertical {
            Affine { scale: -self.lambda_f, shift: y + self.lambda_f }
        } else {
            Affine { scale: self.lambda_f, shift: y }
        }
    }

    pub fn t_branch_exact(&self, b: usize, t: &BigRational) -> BigRational {
        let br = &self.layout[b];
        if br.flip_vertical {
            &br.y_offset + &self.lambda * (BigRational::one() - t)
        } else {
            &br.y_offset + &self.lambda * t
        }
    }

    /// Horizontal branch map on branch `b`.
    pub fn s_branch(&self, b: usize, s: f64) -> f64 {
        let u = self.kappa as f64 * s - b as f64;
        if self.layout[b].flip_horizontal {
            1.0 - u
        } else {
            u
        }
    }

    /// Inverse of the horizontal branch map of branch `b`.
    pub fn s_branch_inverse(&self, b: usize, s: f64) -> f64 {
        let u = if self.layout[b].flip_horizontal { 1.0 - s } else { s };
        (u + b as f64) / self.kappa as f64
    }

    pub fn s_branch_inverse_exact(&self, b: usize, s: &BigRational) -> BigRational {
        let u = if self.layout[b].flip_horizontal {
            BigRational::one() - s
        } else {
            s.clone()
        };
        (u + BigInt::from(b)) / BigInt::from(self.kappa)
    }

    pub fn forward(&self, p: Point) -> Point {
        let b = self.branch_of(p.s);
        Point::new(self.s_branch(b, p.s).clamp(0.0, 1.0), self.t_branch(b).apply(p.t))
    }

    pub fn forward_exact(&self, p: &ExactPoint) -> ExactPoint {
        let b = self.branch_of_exact(&p.s);
        let u = &p.s * BigInt::from(self.kappa) - BigInt::from(b);
        let s = if self.layout[b].flip_horizontal {
            BigRational::one() - u
        } else {
            u
        };
        ExactPoint::new(s, self.t_branch_exact(b, &p.t))
    }

    /// Branch whose image strip contains height `t`, if any. Interior points
    /// of a strip win over a shared boundary with the strip below.
    pub fn strip_of(&self, t: f64) -> Option<usize> {
        let mut hit = None;
        for (b, &y) in self.offsets_f.iter().enumerate() {
            if t >= y && t < y + self.lambda_f {
                return Some(b);
            }
            if t == y + self.lambda_f {
                hit = Some(b);
            }
        }
        hit
    }

    pub fn inverse_on_image(&self, p: Point) -> Option<(Point, usize)> {
        let b = self.strip_of(p.t)?;
        let mut u = (p.t - self.offsets_f[b]) / self.lambda_f;
        if self.layout[b].flip_vertical {
            u = 1.0 - u;
        }
        Some((Point::new(self.s_branch_inverse(b, p.s), u.clamp(0.0, 1.0)), b))
    }

    pub fn inverse_on_image_exact(&self, p: &ExactPoint) -> Option<(ExactPoint, usize)> {
        let one = BigRational::one();
        let b = (0..self.kappa).find(|&b| {
            let y = &self.layout[b].y_offset;
            &p.t >= y && p.t <= y + &self.lambda
        })?;
        let mut u = (&p.t - &self.layout[b].y_offset) / &self.lambda;
        if self.layout[b].flip_vertical {
            u = &one - u;
        }
        Some((ExactPoint::new(self.s_branch_inverse_exact(b, &p.s), u), b))
    }

    fn check_generation(&self, n: usize, cap: usize) -> Result<usize> {
        let mut count: usize = 1;
        for _ in 0..n {
            count = count
                .checked_mul(self.kappa)
                .filter(|c| *c <= cap)
                .ok_or_else(|| Error::ResourceCap(format!("kappa^{n} leaves exceeds cap {cap}")))?;
        }
        Ok(count)
    }

    /// The n-th generation of `w`: the κⁿ stable leaves mapped into `w` by
    /// `Tⁿ`, ordered lexicographically by branch word (first branch most
    /// significant), so two generations pair up positionally.
    pub fn pullback_leaves(&self, w: &StableLeaf, n: usize) -> Result<Vec<StableLeaf>> {
        if n == 0 {
            return Err(Error::InvalidParameter("generation index must be >= 1".into()));
        }
        self.check_generation(n, DEFAULT_LEAF_CAP)?;
        // build back to front: the last branch applied is the innermost inverse
        let mut leaves = vec![w.s.clone()];
        for _ in 0..n {
            let mut next = Vec::with_capacity(leaves.len() * self.kappa);
            for b in 0..self.kappa {
                for s in &leaves {
                    next.push(self.s_branch_inverse_exact(b, s));
                }
            }
            leaves = next;
        }
        Ok(leaves.into_iter().map(StableLeaf::new).collect())
    }

    /// Floating-point generation with the vertical affine map of `Tⁿ` along
    /// each pulled-back leaf. Same ordering as [`BakerMap::pullback_leaves`].
    pub fn generation(&self, s: f64, n: usize) -> Result<Vec<LeafPreimage>> {
        self.check_generation(n, DEFAULT_LEAF_CAP)?;
        let mut leaves = vec![LeafPreimage { s, t_map: Affine::IDENTITY }];
        for _ in 0..n {
            let mut next = Vec::with_capacity(leaves.len() * self.kappa);
            for b in 0..self.kappa {
                let tau = self.t_branch(b);
                for lp in &leaves {
                    next.push(LeafPreimage {
                        s: self.s_branch_inverse(b, lp.s),
                        t_map: tau.then(&lp.t_map),
                    });
                }
            }
            leaves = next;
        }
        Ok(leaves)
    }

    /// The κⁿ strips of `Tⁿ(M)` as affine images of `[0,1]`, ordered by word.
    pub fn image_strips(&self, n: usize) -> Result<Vec<Affine>> {
        self.check_generation(n, DEFAULT_LEAF_CAP)?;
        let mut maps = vec![Affine::IDENTITY];
        for _ in 0..n {
            let mut next = Vec::with_capacity(maps.len() * self.kappa);
            for m in &maps {
                for b in 0..self.kappa {
                    next.push(m.then(&self.t_branch(b)));
                }
            }
            maps = next;
        }
        Ok(maps)
    }

    pub fn to_spec(&self) -> MapSpec {
        MapSpec {
            kappa: self.kappa,
            lambda: self.lambda.to_string(),
            layout: Some(
                self.layout
                    .iter()
                    .map(|b| BranchSpec {
                        y_offset: b.y_offset.to_string(),
                        flip_horizontal: b.flip_horizontal,
                        flip_vertical: b.flip_vertical,
                    })
                    .collect(),
            ),
        }
    }
}

/// Serialized map description: `{kappa, lambda = "p/q", layout}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapSpec {
    pub kappa: usize,
    pub lambda: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layout: Option<Vec<BranchSpec>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BranchSpec {
    pub y_offset: String,
    #[serde(default)]
    pub flip_horizontal: bool,
    #[serde(default)]
    pub flip_vertical: bool,
}

impl MapSpec {
    pub fn build(&self) -> Result<BakerMap> {
        let lambda = parse_rational(&self.lambda)?;
        match &self.layout {
            None => BakerMap::standard(self.kappa, lambda),
            Some(layout) => {
                let branches = layout
                    .iter()
                    .map(|b| {
                        Ok(Branch {
                            y_offset: parse_rational(&b.y_offset)?,
                            flip_horizontal: b.flip_horizontal,
                            flip_vertical: b.flip_vertical,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                BakerMap::new(self.kappa, lambda, branches)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn q(n: i64, d: i64) -> BigRational {
        ratio(n, d)
    }

    #[test]
    fn forward_examples() {
        let m = BakerMap::with_lambda(2, 1, 2).unwrap();
        assert_eq!(m.forward(Point::new(0.25, 0.5)), Point::new(0.5, 0.25));
        assert_eq!(m.forward(Point::new(0.0, 0.0)), Point::new(0.0, 0.0));
        let m4 = BakerMap::with_lambda(4, 1, 8).unwrap();
        let p = m4.forward_exact(&ExactPoint::new(q(3, 10), q(8, 10)));
        assert_eq!(p, ExactPoint::new(q(1, 5), q(7, 20)));
        let pf = m4.forward(Point::new(0.3, 0.8));
        assert!((pf.s - 0.2).abs() < 1e-15 && (pf.t - 0.35).abs() < 1e-15);
    }

    #[test]
    fn right_continuous_branch() {
        let m = BakerMap::with_lambda(2, 1, 4).unwrap();
        assert_eq!(m.branch_of(0.5), 1);
        assert_eq!(m.branch_of_exact(&q(1, 2)), 1);
        assert_eq!(m.branch_of(1.0), 1);
        assert_eq!(m.forward(Point::new(1.0, 1.0)), Point::new(1.0, 0.75));
    }

    #[test]
    fn inverse_examples() {
        let m = BakerMap::with_lambda(2, 1, 2).unwrap();
        let (p, b) = m.inverse_on_image(Point::new(0.5, 0.25)).unwrap();
        assert_eq!((p, b), (Point::new(0.25, 0.5), 0));
        let gap = BakerMap::with_lambda(2, 1, 4).unwrap();
        assert!(gap.inverse_on_image(Point::new(0.5, 0.4)).is_none());
        assert!(gap
            .inverse_on_image_exact(&ExactPoint::new(q(1, 2), q(2, 5)))
            .is_none());
    }

    #[test]
    fn rejects_bad_maps() {
        assert!(BakerMap::with_lambda(2, 3, 5).is_err());
        assert!(BakerMap::with_lambda(1, 1, 2).is_err());
        let overlapping = vec![
            Branch { y_offset: q(0, 1), flip_horizontal: false, flip_vertical: false },
            Branch { y_offset: q(1, 8), flip_horizontal: false, flip_vertical: false },
        ];
        assert!(BakerMap::new(2, q(1, 4), overlapping).is_err());
    }

    #[test]
    fn generation_sizes_and_positions() {
        let m = BakerMap::with_lambda(2, 1, 2).unwrap();
        let w = StableLeaf::new(q(1, 2));
        assert_eq!(m.pullback_leaves(&w, 3).unwrap().len(), 8);
        let g1: Vec<_> = m.pullback_leaves(&w, 1).unwrap();
        assert_eq!(g1, vec![StableLeaf::new(q(1, 4)), StableLeaf::new(q(3, 4))]);
    }

    #[test]
    fn paired_leaves_contract() {
        let m = BakerMap::with_lambda(3, 1, 8).unwrap();
        let w1 = StableLeaf::new(q(1, 7));
        let w2 = StableLeaf::new(q(5, 9));
        let d = leaf_distance(&w1, &w2);
        for n in 1..=4 {
            let a = m.pullback_leaves(&w1, n).unwrap();
            let b = m.pullback_leaves(&w2, n).unwrap();
            let scale = BigRational::from_integer(BigInt::from(3u32.pow(n as u32)));
            for (x, y) in a.iter().zip(&b) {
                assert_eq!(leaf_distance(x, y), &d / &scale);
            }
        }
    }

    #[test]
    fn generation_maps_into_leaf() {
        let m = BakerMap::with_lambda(3, 1, 8).unwrap();
        for lp in m.generation(0.37, 3).unwrap() {
            let mut p = Point::new(lp.s, 0.3);
            for _ in 0..3 {
                p = m.forward(p);
            }
            assert!((p.s - 0.37).abs() < 1e-12);
            assert!((p.t - lp.t_map.apply(0.3)).abs() < 1e-14);
        }
    }

    #[test]
    fn flipped_layout_round_trips() {
        let layout = vec![
            Branch { y_offset: q(1, 2), flip_horizontal: true, flip_vertical: false },
            Branch { y_offset: q(0, 1), flip_horizontal: false, flip_vertical: true },
        ];
        let m = BakerMap::new(2, q(1, 4), layout).unwrap();
        let p = ExactPoint::new(q(1, 3), q(2, 7));
        let (back, b) = m.inverse_on_image_exact(&m.forward_exact(&p)).unwrap();
        assert_eq!((back, b), (p, 0));
        let p2 = ExactPoint::new(q(5, 7), q(1, 9));
        let (back, b) = m.inverse_on_image_exact(&m.forward_exact(&p2)).unwrap();
        assert_eq!((back, b), (p2, 1));
    }

    #[test]
    fn spec_round_trip() {
        let m = BakerMap::with_lambda(3, 1, 8).unwrap();
        let spec = m.to_spec();
        let text = toml::to_string(&spec).unwrap();
        let back: MapSpec = toml::from_str(&text).unwrap();
        assert_eq!(back.build().unwrap().layout(), m.layout());
    }

    // exact preimage area of a rectangle vs area of its intersection with T(M)
    #[test]
    fn preimage_area_matches_jacobian() {
        let m = BakerMap::with_lambda(2, 1, 4).unwrap();
        let rect = (q(1, 5), q(7, 10), q(1, 10), q(5, 8)); // s0, s1, t0, t1
        let mut pre = BigRational::zero();
        let mut inter = BigRational::zero();
        for b in 0..2 {
            let y = &m.layout()[b].y_offset;
            let lo = std::cmp::max(rect.2.clone(), y.clone());
            let hi = std::cmp::min(rect.3.clone(), y + m.lambda());
            if hi > lo {
                let h = &hi - &lo;
                inter += (&rect.1 - &rect.0) * &h;
                // preimage: s-width / κ, t-height / λ
                pre += (&rect.1 - &rect.0) / BigInt::from(2) * (&h / m.lambda());
            }
        }
        assert_eq!(pre, inter / m.jacobian_exact());
    }

    proptest! {
        #[test]
        fn orbit_stays_in_strips(s in 0.0f64..1.0, t in 0.0f64..1.0, n in 1usize..20) {
            let m = BakerMap::with_lambda(3, 1, 8).unwrap();
            let mut p = Point::new(s, t);
            for _ in 0..n {
                p = m.forward(p);
                prop_assert!((0.0..=1.0).contains(&p.s) && (0.0..=1.0).contains(&p.t));
            }
            if n <= 8 {
                let strips = m.image_strips(n).unwrap();
                let inside = strips.iter().any(|a| {
                    let (lo, hi) = a.image();
                    p.t >= lo - 1e-12 && p.t <= hi + 1e-12
                });
                prop_assert!(inside);
            }
        }

        #[test]
        fn round_trip(sn in 0i64..997, tn in 0i64..997) {
            let m = BakerMap::with_lambda(2, 1, 4).unwrap();
            let p = ExactPoint::new(q(2 * sn + 1, 1996), q(2 * tn + 1, 1996));
            let (back, _) = m.inverse_on_image_exact(&m.forward_exact(&p)).unwrap();
            prop_assert_eq!(back, p);
        }

        #[test]
        fn generations_compose(num in 0i64..100, n in 1usize..4, k in 1usize..4) {
            let m = BakerMap::with_lambda(2, 1, 4).unwrap();
            let w = StableLeaf::new(q(num, 100));
            let mut two_step: Vec<BigRational> = m
                .pullback_leaves(&w, n)
                .unwrap()
                .iter()
                .flat_map(|v| m.pullback_leaves(v, k).unwrap())
                .map(|l| l.s)
                .collect();
            let mut direct: Vec<BigRational> =
                m.pullback_leaves(&w, n + k).unwrap().into_iter().map(|l| l.s).collect();
            two_step.sort();
            direct.sort();
            prop_assert_eq!(two_step, direct);
        }
    }
}
