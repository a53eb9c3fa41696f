//! l∞-ball arithmetic over the joint covariate-price space `[0,1]^{d+1}`.
//!
//! The policy discretises the joint space with closed l∞ balls. For a fixed
//! covariate `x`, a ball's price territory is an interval; once strictly
//! smaller balls claim parts of it, what remains is a union of intervals.
//! This module provides those slices, set subtraction on interval unions and
//! Lebesgue-uniform sampling from them.
//!
//! Conventions: balls are closed (`distance <= radius` is inside), subtraction
//! of a smaller ball's slice keeps the residue endpoints closed, and a union
//! whose total length is below [`DEGENERATE_TOL`] counts as empty. All three
//! choices differ from any open/closed alternative only on sets of measure
//! zero, and sampling is Lebesgue-uniform, so they never matter statistically.

use rand::Rng;
use thiserror::Error;

/// Unions shorter than this total length are treated as empty, both for
/// relevance decisions and for sampling.
pub const DEGENERATE_TOL: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("invalid ball radius {0}: must lie in (0, 1]")]
    InvalidRadius(f64),
    #[error("degenerate domain: total interval length {0:e} is below tolerance")]
    DegenerateDomain(f64),
}

/// A point in the joint covariate-price space: the first `d` coordinates are
/// the covariate, the last one is the price.
#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    coords: Vec<f64>,
}

impl Point {
    /// Joint point from raw coordinates (covariate followed by price).
    pub fn new(coords: Vec<f64>) -> Self {
        debug_assert!(coords.len() >= 2, "joint points need d >= 1");
        Self { coords }
    }

    /// Joint point assembled from a covariate and a price.
    pub fn joint(x: &[f64], price: f64) -> Self {
        let mut coords = Vec::with_capacity(x.len() + 1);
        coords.extend_from_slice(x);
        coords.push(price);
        Self::new(coords)
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    /// The covariate part (all but the last coordinate).
    pub fn covariate(&self) -> &[f64] {
        &self.coords[..self.coords.len() - 1]
    }

    /// The price coordinate.
    pub fn price(&self) -> f64 {
        self.coords[self.coords.len() - 1]
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }
}

/// `max_i |a_i - b_i|`.
pub fn linf_distance(a: &Point, b: &Point) -> Result<f64, GeometryError> {
    if a.dim() != b.dim() {
        return Err(GeometryError::DimensionMismatch {
            left: a.dim(),
            right: b.dim(),
        });
    }
    Ok(linf_slice(a.coords(), b.coords()))
}

/// Same as [`linf_distance`] on raw slices of equal length (unchecked).
pub(crate) fn linf_slice(a: &[f64], b: &[f64]) -> f64 {
    let mut m = 0.0f64;
    for (ai, bi) in a.iter().zip(b) {
        m = m.max((ai - bi).abs());
    }
    m
}

/// A closed l∞ ball in the joint space.
#[derive(Debug, Clone, PartialEq)]
pub struct Ball {
    center: Point,
    radius: f64,
}

impl Ball {
    pub fn new(center: Point, radius: f64) -> Result<Self, GeometryError> {
        if !(radius > 0.0 && radius <= 1.0) {
            return Err(GeometryError::InvalidRadius(radius));
        }
        Ok(Self { center, radius })
    }

    /// The whole joint space `[0,1]^{d+1}` as a ball: center (1/2, ..., 1/2),
    /// radius 1. Radius 1 makes the dyadic radius ladder {1, 1/2, 1/4, ...}
    /// start at the top; its slices are clipped to `[0,1]`.
    pub fn root(d: usize) -> Self {
        Self {
            center: Point::new(vec![0.5; d + 1]),
            radius: 1.0,
        }
    }

    /// A child ball at `center` with exactly half this ball's radius.
    pub fn child(&self, center: Point) -> Self {
        debug_assert_eq!(center.dim(), self.center.dim());
        Self {
            center,
            radius: self.radius / 2.0,
        }
    }

    pub fn center(&self) -> &Point {
        &self.center
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// Closed-ball membership: `linf_distance(center, z) <= radius`.
    pub fn contains(&self, z: &Point) -> Result<bool, GeometryError> {
        Ok(linf_distance(&self.center, z)? <= self.radius)
    }

    /// Membership for a (covariate, price) pair given as raw parts.
    pub(crate) fn contains_parts(&self, x: &[f64], price: f64) -> bool {
        let c = self.center.coords();
        debug_assert_eq!(x.len() + 1, c.len());
        let gap = linf_slice(x, &c[..x.len()]);
        gap.max((price - self.center.price()).abs()) <= self.radius
    }
}

/// A finite union of disjoint closed intervals inside `[0,1]`, sorted by left
/// endpoint. Zero-length pieces are dropped during normalisation; they carry
/// no mass.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalUnion {
    intervals: Vec<(f64, f64)>,
}

impl IntervalUnion {
    pub fn empty() -> Self {
        Self { intervals: Vec::new() }
    }

    /// Single interval `[lo, hi]`; empty if `hi <= lo`.
    pub fn single(lo: f64, hi: f64) -> Self {
        if hi > lo {
            Self { intervals: vec![(lo, hi)] }
        } else {
            Self::empty()
        }
    }

    /// Normalises raw intervals: sorts, drops zero-length pieces and merges
    /// overlapping or touching neighbours.
    pub fn from_intervals(mut raw: Vec<(f64, f64)>) -> Self {
        raw.retain(|(a, b)| b > a);
        raw.sort_by(|p, q| p.0.total_cmp(&q.0));
        let mut intervals: Vec<(f64, f64)> = Vec::with_capacity(raw.len());
        for (a, b) in raw {
            match intervals.last_mut() {
                Some((_, prev_hi)) if a <= *prev_hi => *prev_hi = prev_hi.max(b),
                _ => intervals.push((a, b)),
            }
        }
        Self { intervals }
    }

    pub fn intervals(&self) -> &[(f64, f64)] {
        &self.intervals
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    /// Total Lebesgue measure.
    pub fn total_length(&self) -> f64 {
        self.intervals.iter().map(|(a, b)| b - a).sum()
    }

    /// True when the union carries no usable mass (see [`DEGENERATE_TOL`]).
    pub fn is_degenerate(&self) -> bool {
        self.total_length() <= DEGENERATE_TOL
    }

    pub fn contains(&self, p: f64) -> bool {
        self.intervals.iter().any(|&(a, b)| a <= p && p <= b)
    }

    /// Removes the closed interval `[lo, hi]`, keeping residue endpoints
    /// closed. Residues of zero length are dropped.
    pub fn subtract(&self, lo: f64, hi: f64) -> Self {
        if hi <= lo {
            return self.clone();
        }
        let mut out = Vec::with_capacity(self.intervals.len() + 1);
        for &(a, b) in &self.intervals {
            if hi < a || lo > b {
                out.push((a, b));
                continue;
            }
            if lo > a {
                out.push((a, lo));
            }
            if hi < b {
                out.push((hi, b));
            }
        }
        Self { intervals: out }
    }
}

/// The set of prices `p` with `(x, p)` inside the ball: empty when the
/// covariate gap exceeds the radius, otherwise the price interval
/// `[c_p - r, c_p + r]` clipped to `[0,1]`.
pub fn price_slice(ball: &Ball, x: &[f64]) -> IntervalUnion {
    let c = ball.center().coords();
    debug_assert_eq!(x.len() + 1, c.len(), "covariate dimension mismatch");
    let gap = linf_slice(x, &c[..x.len()]);
    if gap > ball.radius() {
        return IntervalUnion::empty();
    }
    let p = ball.center().price();
    IntervalUnion::single((p - ball.radius()).max(0.0), (p + ball.radius()).min(1.0))
}

/// The ball's price slice at `x` minus the slices of every strictly smaller
/// ball in `active`: the price territory the ball still owns at this
/// covariate. The ball itself is expected to be a member of `active`.
pub fn domain_slice(ball: &Ball, active: &[Ball], x: &[f64]) -> IntervalUnion {
    let mut dom = price_slice(ball, x);
    for other in active {
        if dom.is_empty() {
            break;
        }
        if other.radius() < ball.radius() {
            for &(a, b) in price_slice(other, x).intervals() {
                dom = dom.subtract(a, b);
            }
        }
    }
    dom
}

/// A price drawn Lebesgue-uniformly from the union (inverse CDF over the
/// concatenated intervals). Errors on unions below tolerance.
pub fn sample_uniform<R: Rng + ?Sized>(
    u: &IntervalUnion,
    rng: &mut R,
) -> Result<f64, GeometryError> {
    let total = u.total_length();
    if total <= DEGENERATE_TOL {
        return Err(GeometryError::DegenerateDomain(total));
    }
    let mut target = rng.random::<f64>() * total;
    for &(a, b) in u.intervals() {
        let len = b - a;
        if target <= len {
            return Ok((a + target).min(b));
        }
        target -= len;
    }
    // Floating-point slack: fall into the last interval.
    let &(_, b) = u.intervals().last().expect("nonempty by total length");
    Ok(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Rng emitting one fixed word forever; `random::<f64>()` then returns
    /// `word >> 11` scaled by 2^-53.
    struct ConstRng(u64);

    impl rand::RngCore for ConstRng {
        fn next_u32(&mut self) -> u32 {
            self.0 as u32
        }

        fn next_u64(&mut self) -> u64 {
            self.0
        }

        fn fill_bytes(&mut self, dest: &mut [u8]) {
            for b in dest {
                *b = 0;
            }
        }
    }

    fn pt(coords: &[f64]) -> Point {
        Point::new(coords.to_vec())
    }

    fn ball(coords: &[f64], r: f64) -> Ball {
        Ball::new(pt(coords), r).unwrap()
    }

    #[test]
    fn linf_distance_examples() {
        assert_eq!(
            linf_distance(&pt(&[0.0, 0.0, 0.0]), &pt(&[0.0, 0.0, 0.0])).unwrap(),
            0.0
        );
        assert!(
            (linf_distance(&pt(&[0.1, 0.2, 0.3]), &pt(&[0.4, 0.2, 0.3])).unwrap() - 0.3).abs()
                < 1e-15
        );
        assert_eq!(linf_distance(&pt(&[0.0, 1.0]), &pt(&[1.0, 0.0])).unwrap(), 1.0);
    }

    #[test]
    fn linf_distance_dimension_mismatch() {
        let err = linf_distance(&pt(&[0.0, 0.0]), &pt(&[0.0, 0.0, 0.0])).unwrap_err();
        assert_eq!(err, GeometryError::DimensionMismatch { left: 2, right: 3 });
    }

    #[test]
    fn contains_examples() {
        let b = ball(&[0.5, 0.5], 0.5);
        assert!(b.contains(&pt(&[1.0, 0.0])).unwrap()); // boundary of the closed ball
        let b = ball(&[0.5, 0.5], 0.25);
        assert!(!b.contains(&pt(&[0.8, 0.5])).unwrap()); // 0.3 > 0.25
        let b = ball(&[0.3, 0.7], 0.1);
        assert!(b.contains(&pt(&[0.3, 0.7])).unwrap());
    }

    #[test]
    fn ball_radius_validation() {
        assert!(Ball::new(pt(&[0.5, 0.5]), 0.0).is_err());
        assert!(Ball::new(pt(&[0.5, 0.5]), 1.5).is_err());
        assert!(Ball::new(pt(&[0.5, 0.5]), 1.0).is_ok());
    }

    #[test]
    fn child_halves_radius() {
        let b = ball(&[0.5, 0.5], 0.5);
        let c = b.child(pt(&[0.25, 0.25]));
        assert_eq!(c.radius(), 0.25);
    }

    #[test]
    fn price_slice_examples() {
        // Root ball covers the full price range.
        let b = ball(&[0.5, 0.5], 0.5);
        let s = price_slice(&b, &[0.5]);
        assert_eq!(s.intervals(), &[(0.0, 1.0)]);

        // Covariate gap 0.2 > 0.1: empty.
        let b = ball(&[0.5, 0.5], 0.1);
        assert!(price_slice(&b, &[0.7]).is_empty());

        // Clipped to [0.7, 1.0].
        let b = ball(&[0.5, 0.9], 0.2);
        let s = price_slice(&b, &[0.5]);
        assert_eq!(s.intervals().len(), 1);
        let (lo, hi) = s.intervals()[0];
        assert!((lo - 0.7).abs() < 1e-15 && (hi - 1.0).abs() < 1e-15);
    }

    #[test]
    fn domain_slice_examples() {
        // No smaller balls: the slice itself.
        let root = Ball::root(1);
        let active = vec![root.clone()];
        let dom = domain_slice(&root, &active, &[0.4]);
        assert_eq!(dom.intervals(), &[(0.0, 1.0)]);

        // A concentric half-radius child removes everything.
        let child = ball(&[0.5, 0.5], 0.5);
        let active = vec![root.clone(), child];
        let dom = domain_slice(&root, &active, &[0.5]);
        assert!(dom.is_empty());

        // [0,1] minus [0.05, 0.55] -> [0, 0.05] and [0.55, 1].
        let child = ball(&[0.3, 0.3], 0.25);
        let active = vec![root.clone(), child];
        let dom = domain_slice(&root, &active, &[0.3]);
        assert_eq!(dom.intervals().len(), 2);
        let (a0, b0) = dom.intervals()[0];
        let (a1, b1) = dom.intervals()[1];
        assert!((a0 - 0.0).abs() < 1e-15 && (b0 - 0.05).abs() < 1e-15);
        assert!((a1 - 0.55).abs() < 1e-15 && (b1 - 1.0).abs() < 1e-15);
    }

    #[test]
    fn sample_uniform_identity_on_full_interval() {
        // On the full interval the draw passes through: u = 0.37 -> 0.37.
        let u = IntervalUnion::single(0.0, 1.0);
        let mut rng = ConstRng((0.37f64 * (1u64 << 53) as f64) as u64 * (1 << 11));
        let p = sample_uniform(&u, &mut rng).unwrap();
        assert!((p - 0.37).abs() < 1e-9, "got {p}");
    }

    #[test]
    fn sample_uniform_maps_mass_across_gaps() {
        // Union {[0, 0.2], [0.8, 1.0]}, draw 0.6 of total mass 0.4 = 0.24:
        // first interval holds 0.2, remainder 0.04 lands at 0.84.
        let u = IntervalUnion::from_intervals(vec![(0.0, 0.2), (0.8, 1.0)]);
        let mut rng = ConstRng((0.6f64 * (1u64 << 53) as f64) as u64 * (1 << 11));
        let p = sample_uniform(&u, &mut rng).unwrap();
        assert!((p - 0.84).abs() < 1e-9, "got {p}");
    }

    #[test]
    fn sample_uniform_rejects_empty_union() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let err = sample_uniform(&IntervalUnion::empty(), &mut rng).unwrap_err();
        assert!(matches!(err, GeometryError::DegenerateDomain(_)));
    }

    #[test]
    fn subtract_keeps_closed_residues() {
        let u = IntervalUnion::single(0.0, 1.0);
        let v = u.subtract(0.2, 0.5);
        assert_eq!(v.intervals(), &[(0.0, 0.2), (0.5, 1.0)]);
        // Touching at a single point changes nothing.
        let w = v.subtract(0.2, 0.2);
        assert_eq!(w.intervals(), v.intervals());
    }

    #[test]
    fn from_intervals_merges_and_sorts() {
        let u = IntervalUnion::from_intervals(vec![(0.5, 0.6), (0.0, 0.2), (0.2, 0.4), (0.55, 0.7)]);
        assert_eq!(u.intervals(), &[(0.0, 0.4), (0.5, 0.7)]);
        assert!((u.total_length() - 0.6).abs() < 1e-15);
    }

    fn arb_ball(d: usize) -> impl Strategy<Value = Ball> {
        (
            proptest::collection::vec(0.0f64..=1.0, d + 1),
            prop_oneof![Just(1.0f64), Just(0.5), Just(0.25), Just(0.125)],
        )
            .prop_map(|(c, r)| Ball::new(Point::new(c), r).unwrap())
    }

    proptest! {
        #[test]
        fn containment_matches_distance(
            c in proptest::collection::vec(0.0f64..=1.0, 3),
            z in proptest::collection::vec(0.0f64..=1.0, 3),
            r in 0.01f64..=1.0,
        ) {
            let b = Ball::new(Point::new(c.clone()), r).unwrap();
            let zp = Point::new(z);
            let inside = b.contains(&zp).unwrap();
            let dist = linf_distance(b.center(), &zp).unwrap();
            prop_assert_eq!(inside, dist <= r);
        }

        #[test]
        fn domain_slice_subset_of_price_slice(
            balls in proptest::collection::vec(arb_ball(1), 1..8),
            x in 0.0f64..=1.0,
            seed in any::<u64>(),
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for b in &balls {
                let dom = domain_slice(b, &balls, &[x]);
                if dom.is_degenerate() { continue; }
                let slice = price_slice(b, &[x]);
                for _ in 0..32 {
                    let p = sample_uniform(&dom, &mut rng).unwrap();
                    prop_assert!(dom.contains(p));
                    prop_assert!(slice.contains(p));
                }
            }
        }

        #[test]
        fn domain_slices_cover_price_slices(
            balls in proptest::collection::vec(arb_ball(1), 1..10),
            x in 0.0f64..=1.0,
            prices in proptest::collection::vec(0.0f64..=1.0, 64),
        ) {
            // Subtraction only moves territory to smaller balls: the union of
            // domain slices equals the union of price slices, checked by
            // membership at random prices (boundary points excepted, measure
            // zero; skip exact endpoint hits).
            for p in prices {
                let in_slice = balls.iter().any(|b| price_slice(b, &[x]).contains(p));
                let in_dom = balls.iter().any(|b| domain_slice(b, &balls, &[x]).contains(p));
                let on_boundary = balls.iter().any(|b| {
                    price_slice(b, &[x]).intervals().iter().any(|&(a, bb)| p == a || p == bb)
                });
                if !on_boundary {
                    prop_assert_eq!(in_slice, in_dom, "p = {}", p);
                }
            }
        }

        #[test]
        fn subtraction_preserves_measure_accounting(
            raw in proptest::collection::vec((0.0f64..=1.0, 0.0f64..=1.0), 1..6),
            cut in (0.0f64..=1.0, 0.0f64..=1.0),
        ) {
            let u = IntervalUnion::from_intervals(
                raw.into_iter().map(|(a, b)| (a.min(b), a.max(b))).collect(),
            );
            let (lo, hi) = (cut.0.min(cut.1), cut.0.max(cut.1));
            let after = u.subtract(lo, hi);
            // Independent overlap computation per interval.
            let overlap: f64 = u
                .intervals()
                .iter()
                .map(|&(a, b)| (b.min(hi) - a.max(lo)).max(0.0))
                .sum();
            prop_assert!((after.total_length() - (u.total_length() - overlap)).abs() < 1e-12);
        }

        #[test]
        fn sampled_price_lies_in_union(
            raw in proptest::collection::vec((0.0f64..=1.0, 0.0f64..=1.0), 1..6),
            seed in any::<u64>(),
        ) {
            let u = IntervalUnion::from_intervals(
                raw.into_iter().map(|(a, b)| (a.min(b), a.max(b))).collect(),
            );
            prop_assume!(!u.is_degenerate());
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for _ in 0..64 {
                let p = sample_uniform(&u, &mut rng).unwrap();
                prop_assert!(u.contains(p), "{} not in {:?}", p, u.intervals());
            }
        }
    }
}
