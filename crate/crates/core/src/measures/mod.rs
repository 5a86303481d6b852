//! Compactly supported probability measures on the real line, the positive
//! half-line and the unit circle, with their analytic transforms.

mod support;

use std::f64::consts::{PI, TAU};

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use support::{angle_gap, SupportSet};

/// Weights must sum to one within this tolerance on construction.
pub const WEIGHT_SUM_TOL: f64 = 1e-9;
/// Modulus tolerance for points given in complex form on the circle.
pub const UNIT_MODULUS_TOL: f64 = 1e-12;
/// Atoms closer than this are merged; also the TV grouping tolerance.
pub const LOCATION_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Carrier {
    Real,
    Positive,
    Circle,
}

/// A point mass. On the circle `location` is the argument in `[0, 2π)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub location: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum MeasureKind {
    Atomic(Vec<Atom>),
    /// Semicircle law on `[center - radius, center + radius]`.
    Semicircle { center: f64, radius: f64 },
    /// Uniform law on the stored samples (arguments on the circle), sorted.
    Empirical(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MeasureRepr", into = "MeasureRepr")]
pub struct Measure {
    kind: MeasureKind,
    carrier: Carrier,
}

/// A location as written in JSON: a plain number, or `[re, im]` on the circle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LocationRepr {
    Number(f64),
    Complex([f64; 2]),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomRepr {
    pub location: LocationRepr,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum MeasureRepr {
    Atomic {
        carrier: Carrier,
        atoms: Vec<AtomRepr>,
    },
    Semicircle {
        #[serde(default = "real_carrier")]
        carrier: Carrier,
        center: f64,
        radius: f64,
    },
    Empirical {
        carrier: Carrier,
        samples: Vec<LocationRepr>,
    },
}

fn real_carrier() -> Carrier {
    Carrier::Real
}

impl TryFrom<MeasureRepr> for Measure {
    type Error = Error;

    fn try_from(r: MeasureRepr) -> Result<Self> {
        match r {
            MeasureRepr::Atomic { carrier, atoms } => {
                let atoms = atoms
                    .into_iter()
                    .map(|a| Ok((parse_location(carrier, a.location)?, a.weight)))
                    .collect::<Result<Vec<_>>>()?;
                Measure::atomic(carrier, atoms)
            }
            MeasureRepr::Semicircle { carrier, center, radius } => {
                let m = Measure::semicircle(center, radius)?;
                match carrier {
                    Carrier::Real => Ok(m),
                    Carrier::Positive => m.on_positive_line(),
                    Carrier::Circle => Err(Error::precondition("semicircle cannot live on the circle")),
                }
            }
            MeasureRepr::Empirical { carrier, samples } => {
                let samples = samples
                    .into_iter()
                    .map(|s| parse_location(carrier, s))
                    .collect::<Result<Vec<_>>>()?;
                Measure::empirical(carrier, samples)
            }
        }
    }
}

impl From<Measure> for MeasureRepr {
    fn from(m: Measure) -> Self {
        match m.kind {
            MeasureKind::Atomic(atoms) => MeasureRepr::Atomic {
                carrier: m.carrier,
                atoms: atoms
                    .into_iter()
                    .map(|a| AtomRepr { location: LocationRepr::Number(a.location), weight: a.weight })
                    .collect(),
            },
            MeasureKind::Semicircle { center, radius } => {
                MeasureRepr::Semicircle { carrier: m.carrier, center, radius }
            }
            MeasureKind::Empirical(samples) => MeasureRepr::Empirical {
                carrier: m.carrier,
                samples: samples.into_iter().map(LocationRepr::Number).collect(),
            },
        }
    }
}

fn parse_location(carrier: Carrier, loc: LocationRepr) -> Result<f64> {
    match (carrier, loc) {
        (_, LocationRepr::Number(x)) => Ok(x),
        (Carrier::Circle, LocationRepr::Complex([re, im])) => {
            let z = C64::new(re, im);
            if (z.norm() - 1.0).abs() > UNIT_MODULUS_TOL {
                return Err(Error::precondition(format!("point {z} is not on the unit circle")));
            }
            Ok(z.arg())
        }
        (_, LocationRepr::Complex(_)) => {
            Err(Error::precondition("complex locations are only allowed on the circle"))
        }
    }
}

/// Unit complex number with the given argument.
pub fn unit(phi: f64) -> C64 {
    C64::from_polar(1.0, phi)
}

fn check_location(carrier: Carrier, x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::precondition(format!("non-finite location {x}")));
    }
    match carrier {
        Carrier::Real => Ok(x),
        Carrier::Positive if x >= 0.0 => Ok(x),
        Carrier::Positive => Err(Error::precondition(format!("location {x} is negative on the positive half-line"))),
        Carrier::Circle => {
            let a = x.rem_euclid(TAU);
            // rem_euclid can round up to exactly 2π.
            Ok(if a >= TAU { 0.0 } else { a })
        }
    }
}

impl Measure {
    /// Atomic measure from `(location, weight)` pairs. On the circle the
    /// locations are arguments. Weights are renormalized after the sum check,
    /// and atoms at the same location are merged.
    pub fn atomic(carrier: Carrier, atoms: impl IntoIterator<Item = (f64, f64)>) -> Result<Self> {
        let mut v = Vec::new();
        for (loc, w) in atoms {
            if !(w > 0.0 && w <= 1.0 + WEIGHT_SUM_TOL) {
                return Err(Error::precondition(format!("atom weight {w} outside (0, 1]")));
            }
            v.push(Atom { location: check_location(carrier, loc)?, weight: w });
        }
        if v.is_empty() {
            return Err(Error::precondition("atomic measure needs at least one atom"));
        }
        let total: f64 = v.iter().map(|a| a.weight).sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::precondition(format!("atom weights sum to {total}, not 1")));
        }
        v.iter_mut().for_each(|a| a.weight /= total);
        v.sort_by(|a, b| a.location.total_cmp(&b.location));
        let mut merged: Vec<Atom> = Vec::with_capacity(v.len());
        for a in v {
            match merged.last_mut() {
                Some(last) if a.location - last.location <= 1e-12 * last.location.abs().max(1.0) => {
                    last.weight += a.weight
                }
                _ => merged.push(a),
            }
        }
        Ok(Measure { kind: MeasureKind::Atomic(merged), carrier })
    }

    /// Uniform atoms at the given locations.
    pub fn uniform_atoms(carrier: Carrier, locations: &[f64]) -> Result<Self> {
        let w = 1.0 / locations.len().max(1) as f64;
        Measure::atomic(carrier, locations.iter().map(|&x| (x, w)))
    }

    pub fn dirac(carrier: Carrier, location: f64) -> Result<Self> {
        Measure::atomic(carrier, [(location, 1.0)])
    }

    /// Semicircle law with the given center and radius on the real line.
    /// Radius 2 and center 0 is the standard (variance one) law.
    pub fn semicircle(center: f64, radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite() && center.is_finite()) {
            return Err(Error::precondition(format!("bad semicircle center {center} radius {radius}")));
        }
        Ok(Measure { kind: MeasureKind::Semicircle { center, radius }, carrier: Carrier::Real })
    }

    pub fn empirical(carrier: Carrier, samples: impl IntoIterator<Item = f64>) -> Result<Self> {
        let mut v = samples
            .into_iter()
            .map(|x| check_location(carrier, x))
            .collect::<Result<Vec<_>>>()?;
        if v.is_empty() {
            return Err(Error::precondition("empirical measure needs at least one sample"));
        }
        v.sort_by(f64::total_cmp);
        Ok(Measure { kind: MeasureKind::Empirical(v), carrier })
    }

    /// Reinterprets a real-line measure as living on the positive half-line.
    pub fn on_positive_line(self) -> Result<Self> {
        let ok = match &self.kind {
            MeasureKind::Atomic(a) => a.iter().all(|a| a.location >= 0.0),
            MeasureKind::Semicircle { center, radius } => center - radius >= 0.0,
            MeasureKind::Empirical(s) => s.iter().all(|&x| x >= 0.0),
        };
        if self.carrier == Carrier::Circle || !ok {
            return Err(Error::precondition("measure is not supported in [0, ∞)"));
        }
        Ok(Measure { carrier: Carrier::Positive, ..self })
    }

    pub fn kind(&self) -> &MeasureKind {
        &self.kind
    }

    pub fn carrier(&self) -> Carrier {
        self.carrier
    }

    /// Point masses of the measure (empirical samples grouped); empty for
    /// the semicircle.
    pub fn point_masses(&self) -> Vec<Atom> {
        match &self.kind {
            MeasureKind::Atomic(a) => a.clone(),
            MeasureKind::Semicircle { .. } => Vec::new(),
            MeasureKind::Empirical(s) => {
                let w = 1.0 / s.len() as f64;
                let mut out: Vec<Atom> = Vec::new();
                for &x in s {
                    match out.last_mut() {
                        Some(last) if x - last.location <= LOCATION_TOL => last.weight += w,
                        _ => out.push(Atom { location: x, weight: w }),
                    }
                }
                out
            }
        }
    }

    /// Mass at a single location (within `LOCATION_TOL`).
    pub fn mass_at(&self, x: f64) -> f64 {
        self.point_masses()
            .iter()
            .filter(|a| self.location_gap(a.location, x) <= LOCATION_TOL)
            .map(|a| a.weight)
            .sum()
    }

    fn location_gap(&self, a: f64, b: f64) -> f64 {
        match self.carrier {
            Carrier::Circle => angle_gap(a, b),
            _ => (a - b).abs(),
        }
    }

    /// Location of the point `t` as a complex number.
    fn point(&self, x: f64) -> C64 {
        match self.carrier {
            Carrier::Circle => unit(x),
            _ => C64::new(x, 0.0),
        }
    }

    /// Sums `f(t) * weight` over the discrete parts; `None` for the semicircle.
    fn discrete_sum(&self, mut f: impl FnMut(C64) -> Result<C64>) -> Option<Result<C64>> {
        let mut acc = C64::new(0.0, 0.0);
        match &self.kind {
            MeasureKind::Atomic(atoms) => {
                for a in atoms {
                    match f(self.point(a.location)) {
                        Ok(v) => acc += v * a.weight,
                        Err(e) => return Some(Err(e)),
                    }
                }
            }
            MeasureKind::Empirical(s) => {
                for &x in s {
                    match f(self.point(x)) {
                        Ok(v) => acc += v,
                        Err(e) => return Some(Err(e)),
                    }
                }
                acc /= s.len() as f64;
            }
            MeasureKind::Semicircle { .. } => return None,
        }
        Some(Ok(acc))
    }

    /// Cauchy transform `G(z) = ∫ 1/(z - t) dμ(t)`.
    pub fn cauchy_transform(&self, z: C64) -> Result<C64> {
        if let MeasureKind::Semicircle { center, radius } = self.kind {
            return semicircle_cauchy(center, radius, z);
        }
        self.discrete_sum(|t| {
            let d = z - t;
            if d.norm() <= 1e-15 * t.norm().max(1.0) {
                Err(Error::domain(format!("z = {z} coincides with an atom")))
            } else {
                Ok(d.inv())
            }
        })
        .expect("discrete measure")
    }

    /// Reciprocal Cauchy transform `F = 1/G`.
    pub fn f_transform(&self, z: C64) -> Result<C64> {
        let g = self.cauchy_transform(z)?;
        if g.norm() == 0.0 || !g.is_finite() {
            return Err(Error::Pole(format!("G vanishes at z = {z}")));
        }
        Ok(g.inv())
    }

    /// `h(z) = F(z) - z`.
    pub fn h_transform(&self, z: C64) -> Result<C64> {
        Ok(self.f_transform(z)? - z)
    }

    /// The pair `(∫ 1/(1 - wt) dμ, ∫ t/(1 - wt) dμ)`.
    fn multiplicative_moments(&self, w: C64) -> Result<(C64, C64)> {
        if w.norm() == 0.0 {
            return Ok((C64::new(1.0, 0.0), self.first_moment()));
        }
        if let MeasureKind::Semicircle { center, radius } = self.kind {
            let u = w.inv();
            let ug = u * semicircle_cauchy(center, radius, u)?;
            return Ok((ug, u * (ug - 1.0)));
        }
        let (mut m0, mut m1) = (C64::new(0.0, 0.0), C64::new(0.0, 0.0));
        for a in self.point_masses() {
            let t = self.point(a.location);
            let d = C64::new(1.0, 0.0) - w * t;
            if d.norm() <= 1e-15 {
                return Err(Error::domain(format!("1/w = {} coincides with an atom", w.inv())));
            }
            let r = a.weight / d;
            m0 += r;
            m1 += t * r;
        }
        Ok((m0, m1))
    }

    /// `ψ(z) = ∫ zt/(1 - zt) dμ(t)`.
    pub fn psi(&self, z: C64) -> Result<C64> {
        let (m0, _) = self.multiplicative_moments(z)?;
        Ok(m0 - 1.0)
    }

    /// `η = ψ/(1 + ψ)`.
    pub fn eta(&self, z: C64) -> Result<C64> {
        Ok(z * self.eta_over_z(z)?)
    }

    /// `η(z)/z`, evaluated without dividing by `z`; at zero it is the first moment.
    pub fn eta_over_z(&self, z: C64) -> Result<C64> {
        let (m0, m1) = self.multiplicative_moments(z)?;
        if m0.norm() == 0.0 {
            return Err(Error::Pole(format!("1 + ψ vanishes at z = {z}")));
        }
        Ok(m1 / m0)
    }

    /// `∫ t dμ(t)`, with `t` on the unit circle for circle measures.
    pub fn first_moment(&self) -> C64 {
        match self.kind {
            MeasureKind::Semicircle { center, .. } => C64::new(center, 0.0),
            _ => self.discrete_sum(Ok).expect("discrete measure").expect("infallible"),
        }
    }

    /// Closed support. Empirical measures give their tight enclosing
    /// interval (on the circle, the shortest enclosing arc).
    pub fn support(&self) -> SupportSet {
        let set = match &self.kind {
            MeasureKind::Atomic(atoms) => SupportSet::points(atoms.iter().map(|a| a.location)),
            MeasureKind::Semicircle { center, radius } => {
                SupportSet::interval(center - radius, center + radius)
            }
            MeasureKind::Empirical(s) if self.carrier == Carrier::Circle => {
                Ok(shortest_enclosing_arc(s))
            }
            MeasureKind::Empirical(s) => SupportSet::interval(s[0], s[s.len() - 1]),
        };
        set.expect("support of a validated measure")
    }

    /// Smallest interval containing the support (arguments on the circle).
    pub fn enclosure(&self) -> (f64, f64) {
        let s = self.support();
        (s.lo().unwrap(), s.hi().unwrap())
    }

    /// Distance from a point (argument on the circle) to the support.
    pub fn dist(&self, x: f64) -> f64 {
        match self.carrier {
            Carrier::Circle => self.support().circular_distance(x),
            _ => self.support().distance(x),
        }
    }

    /// Density of the absolutely continuous part at `x`; zero for discrete measures.
    pub fn density(&self, x: f64) -> f64 {
        match self.kind {
            MeasureKind::Semicircle { center, radius } => {
                let d = radius * radius - (x - center).powi(2);
                if d > 0.0 {
                    2.0 * d.sqrt() / (PI * radius * radius)
                } else {
                    0.0
                }
            }
            _ => 0.0,
        }
    }

    /// Generalized inverse of the distribution function: the smallest `x`
    /// with `μ((-∞, x]) ≥ p`. On the circle, quantiles of the argument.
    pub fn quantile(&self, p: f64) -> f64 {
        let p = p.clamp(0.0, 1.0);
        match &self.kind {
            MeasureKind::Atomic(atoms) => {
                let mut cum = 0.0;
                for a in atoms {
                    cum += a.weight;
                    if cum >= p - 1e-12 {
                        return a.location;
                    }
                }
                atoms[atoms.len() - 1].location
            }
            MeasureKind::Semicircle { center, radius } => center + radius * semicircle_unit_quantile(p),
            MeasureKind::Empirical(s) => {
                let k = ((p * s.len() as f64 - 1e-9).ceil() as usize).clamp(1, s.len());
                s[k - 1]
            }
        }
    }

    /// Shift of a real-line measure by `c`.
    pub fn shifted(&self, c: f64) -> Result<Self> {
        if self.carrier != Carrier::Real {
            return Err(Error::precondition("only real-line measures can be shifted"));
        }
        let kind = match &self.kind {
            MeasureKind::Atomic(a) => MeasureKind::Atomic(
                a.iter().map(|a| Atom { location: a.location + c, weight: a.weight }).collect(),
            ),
            MeasureKind::Semicircle { center, radius } => {
                MeasureKind::Semicircle { center: center + c, radius: *radius }
            }
            MeasureKind::Empirical(s) => MeasureKind::Empirical(s.iter().map(|x| x + c).collect()),
        };
        Ok(Measure { kind, carrier: self.carrier })
    }

    /// Atom lists equal after sorting, locations within `tol`.
    pub fn approx_eq(&self, other: &Measure, tol: f64) -> bool {
        if self.carrier != other.carrier {
            return false;
        }
        match (&self.kind, &other.kind) {
            (
                MeasureKind::Semicircle { center: c1, radius: r1 },
                MeasureKind::Semicircle { center: c2, radius: r2 },
            ) => (c1 - c2).abs() <= tol && (r1 - r2).abs() <= tol,
            (MeasureKind::Semicircle { .. }, _) | (_, MeasureKind::Semicircle { .. }) => false,
            _ => {
                let (a, b) = (self.point_masses(), other.point_masses());
                a.len() == b.len()
                    && a.iter().zip(&b).all(|(x, y)| {
                        self.location_gap(x.location, y.location) <= tol
                            && (x.weight - y.weight).abs() <= 1e-12
                    })
            }
        }
    }
}

fn semicircle_cauchy(center: f64, radius: f64, z: C64) -> Result<C64> {
    let w = z - center;
    if w.im == 0.0 && w.re.abs() <= radius {
        return Err(Error::domain(format!("z = {z} lies on the semicircle support")));
    }
    // Product of principal roots: the branch with G ~ 1/z off the cut.
    let s = (w - radius).sqrt() * (w + radius).sqrt();
    Ok(2.0 / (w + s))
}

/// Quantile of the semicircle on `[-1, 1]`, by bisection on the closed-form CDF.
fn semicircle_unit_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return -1.0;
    }
    if p >= 1.0 {
        return 1.0;
    }
    let cdf = |u: f64| 0.5 + (u * (1.0 - u * u).max(0.0).sqrt() + u.asin()) / PI;
    let (mut lo, mut hi) = (-1.0_f64, 1.0_f64);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn shortest_enclosing_arc(sorted_args: &[f64]) -> SupportSet {
    let n = sorted_args.len();
    // The enclosing arc is the complement of the largest gap between
    // consecutive samples, including the wrap-around gap.
    let mut best = (sorted_args[0] + TAU - sorted_args[n - 1], n - 1);
    for i in 0..n - 1 {
        let gap = sorted_args[i + 1] - sorted_args[i];
        if gap > best.0 {
            best = (gap, i);
        }
    }
    let (start, end) = (sorted_args[(best.1 + 1) % n], sorted_args[best.1]);
    let set = if start <= end {
        SupportSet::interval(start, end)
    } else {
        SupportSet::from_intervals([(0.0, end), (start, TAU)])
    };
    set.expect("arc endpoints are finite")
}

/// `½ Σ |μ{x} - ν{x}|` over the union of atom locations.
pub fn total_variation_distance(a: &Measure, b: &Measure) -> Result<f64> {
    for m in [a, b] {
        if matches!(m.kind, MeasureKind::Semicircle { .. }) {
            return Err(Error::precondition("total variation needs atomic or empirical measures"));
        }
    }
    let mut signed: Vec<(f64, f64)> = a
        .point_masses()
        .into_iter()
        .map(|x| (x.location, x.weight))
        .chain(b.point_masses().into_iter().map(|x| (x.location, -x.weight)))
        .collect();
    signed.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut total = 0.0;
    let mut i = 0;
    while i < signed.len() {
        let start = signed[i].0;
        let mut diff = 0.0;
        while i < signed.len() && signed[i].0 - start <= LOCATION_TOL {
            diff += signed[i].1;
            i += 1;
        }
        total += diff.abs();
    }
    Ok((0.5 * total).min(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn two_point() -> Measure {
        Measure::atomic(Carrier::Real, [(-3.0, 0.5), (3.0, 0.5)]).unwrap()
    }

    #[test]
    fn cauchy_examples() {
        let g = two_point().cauchy_transform(c(5.0, 0.0)).unwrap();
        assert!((g - c(0.3125, 0.0)).norm() < 1e-15);
        let g = Measure::dirac(Carrier::Real, 0.0).unwrap().cauchy_transform(c(0.0, 1.0)).unwrap();
        assert!((g - c(0.0, -1.0)).norm() < 1e-15);
        let g = Measure::semicircle(0.0, 2.0).unwrap().cauchy_transform(c(3.0, 0.0)).unwrap();
        assert!((g.re - (3.0 - 5f64.sqrt()) / 2.0).abs() < 1e-15 && g.im == 0.0);
    }

    #[test]
    fn cauchy_domain_errors() {
        assert!(matches!(two_point().cauchy_transform(c(3.0, 0.0)), Err(Error::Domain(_))));
        let s = Measure::semicircle(0.0, 2.0).unwrap();
        assert!(matches!(s.cauchy_transform(c(1.0, 0.0)), Err(Error::Domain(_))));
        assert!(s.cauchy_transform(c(1.0, 1e-12)).is_ok());
    }

    #[test]
    fn f_transform_examples() {
        let f = Measure::dirac(Carrier::Real, 1.5).unwrap().f_transform(c(4.0, 2.0)).unwrap();
        assert!((f - c(2.5, 2.0)).norm() < 1e-14);
        assert!((two_point().f_transform(c(5.0, 0.0)).unwrap() - c(3.2, 0.0)).norm() < 1e-14);
        // G of the symmetric two-point law vanishes at 0.
        assert!(matches!(two_point().f_transform(c(0.0, 0.0)), Err(Error::Pole(_))));
    }

    #[test]
    fn semicircle_f_matches_quadrature() {
        let s = Measure::semicircle(0.0, 2.0).unwrap();
        // Midpoint rule on the density after x = 2 sin(t).
        let n = 200_000;
        let h = PI / n as f64;
        let g: f64 = (0..n)
            .map(|k| {
                let t = -FRAC_PI_2 + (k as f64 + 0.5) * h;
                let x = 2.0 * t.sin();
                s.density(x) * 2.0 * t.cos() / (3.0 - x) * h
            })
            .sum();
        let f = s.f_transform(c(3.0, 0.0)).unwrap().re;
        assert!((f - 1.0 / g).abs() < 1e-8);
        assert!((f - 2.0 / (3.0 - 5f64.sqrt())).abs() < 1e-14);
    }

    #[test]
    fn semicircle_branch_in_every_quadrant() {
        let s = Measure::semicircle(0.5, 2.0).unwrap();
        for z in [c(-3.0, 0.0), c(-1.0, -0.5), c(0.2, 3.0), c(10.0, -1e-8), c(-1e6, 1e6)] {
            let g = s.cauchy_transform(z).unwrap();
            // Direct quadrature as an independent check.
            let n = 20_000;
            let h = PI / n as f64;
            let q: C64 = (0..n)
                .map(|k| {
                    let t = -FRAC_PI_2 + (k as f64 + 0.5) * h;
                    let x = 0.5 + 2.0 * t.sin();
                    (z - x).inv() * (s.density(x) * 2.0 * t.cos() * h)
                })
                .sum();
            assert!((g - q).norm() < 1e-6 * (1.0 + q.norm()), "{z}: {g} vs {q}");
        }
    }

    #[test]
    fn stieltjes_inversion_recovers_semicircle_density() {
        let s = Measure::semicircle(0.0, 2.0).unwrap();
        for k in 1..40 {
            let x = -2.0 + 4.0 * k as f64 / 40.0;
            let g = s.cauchy_transform(c(x, 1e-6)).unwrap();
            let expect = (4.0 - x * x).sqrt() / (2.0 * PI);
            assert!((-g.im / PI - expect).abs() < 1e-4);
        }
    }

    #[test]
    fn support_examples() {
        assert_eq!(two_point().support().intervals(), &[(-3.0, -3.0), (3.0, 3.0)]);
        assert_eq!(Measure::semicircle(0.0, 2.0).unwrap().support().intervals(), &[(-2.0, 2.0)]);
        let e = Measure::empirical(Carrier::Real, [5.0, 1.0, 2.0]).unwrap();
        assert_eq!(e.support().intervals(), &[(1.0, 5.0)]);
    }

    #[test]
    fn circle_support_wraps() {
        let e = Measure::empirical(Carrier::Circle, [0.1, -0.1, 0.05]).unwrap();
        let s = e.support();
        assert!(s.contains_circular(0.0) && !s.contains_circular(PI));
    }

    #[test]
    fn tv_examples() {
        let d0 = Measure::dirac(Carrier::Real, 0.0).unwrap();
        let d1 = Measure::dirac(Carrier::Real, 1.0).unwrap();
        assert_eq!(total_variation_distance(&d0, &d0).unwrap(), 0.0);
        assert_eq!(total_variation_distance(&d0, &d1).unwrap(), 1.0);
        let pts: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let mut moved = pts.clone();
        moved[..10].iter_mut().enumerate().for_each(|(i, x)| *x = 1000.0 + i as f64);
        let a = Measure::uniform_atoms(Carrier::Real, &pts).unwrap();
        let b = Measure::uniform_atoms(Carrier::Real, &moved).unwrap();
        let tv = total_variation_distance(&a, &b).unwrap();
        assert!((0.10 - 1e-12..=0.19).contains(&tv));
    }

    #[test]
    fn weights_checked_and_renormalized() {
        assert!(Measure::atomic(Carrier::Real, [(0.0, 0.5), (1.0, 0.4)]).is_err());
        let m = Measure::atomic(Carrier::Real, [(0.0, 0.5), (1.0, 0.5 + 5e-10)]).unwrap();
        let MeasureKind::Atomic(a) = m.kind() else { unreachable!() };
        assert!((a[0].weight + a[1].weight - 1.0).abs() < 1e-15);
        assert!(Measure::atomic(Carrier::Positive, [(-1.0, 1.0)]).is_err());
    }

    #[test]
    fn json_round_trip_and_circle_points() {
        let json = r#"{"kind":"atomic","carrier":"circle","atoms":[
            {"location":[0.0,1.0],"weight":0.5},{"location":3.0,"weight":0.5}]}"#;
        let m: Measure = serde_json::from_str(json).unwrap();
        assert!((m.mass_at(FRAC_PI_2) - 0.5).abs() < 1e-15);
        let back: Measure = serde_json::from_str(&serde_json::to_string(&m).unwrap()).unwrap();
        assert_eq!(m, back);
        let bad = r#"{"kind":"atomic","carrier":"circle","atoms":[{"location":[0.0,1.1],"weight":1}]}"#;
        assert!(serde_json::from_str::<Measure>(bad).is_err());
        let s: Measure = serde_json::from_str(r#"{"kind":"semicircle","center":0,"radius":2}"#).unwrap();
        assert_eq!(s, Measure::semicircle(0.0, 2.0).unwrap());
    }

    #[test]
    fn quantiles_for_diagonals() {
        let m = two_point();
        let q: Vec<f64> = (1..=4).map(|i| m.quantile((i as f64 - 0.5) / 4.0)).collect();
        assert_eq!(q, vec![-3.0, -3.0, 3.0, 3.0]);
        let s = Measure::semicircle(0.0, 2.0).unwrap();
        assert!(s.quantile(0.5).abs() < 1e-12);
        assert!((s.quantile(1.0) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn eta_of_point_mass() {
        // η_{δ_a}(z) = az.
        let m = Measure::dirac(Carrier::Positive, 2.0).unwrap();
        let z = c(0.1, 0.3);
        assert!((m.eta(z).unwrap() - z * 2.0).norm() < 1e-14);
        let s = Measure::semicircle(3.0, 2.0).unwrap().on_positive_line().unwrap();
        // Semicircle path against an empirical stand-in with fine quantiles.
        let samples: Vec<f64> = (0..4000).map(|i| s.quantile((i as f64 + 0.5) / 4000.0)).collect();
        let e = Measure::empirical(Carrier::Positive, samples).unwrap();
        let z = c(-0.4, 0.2);
        assert!((s.eta(z).unwrap() - e.eta(z).unwrap()).norm() < 1e-3);
    }

    fn atomic_strategy() -> impl Strategy<Value = Measure> {
        prop::collection::vec((-5i32..5, 1u32..5), 1..5).prop_map(|v| {
            let total: u32 = v.iter().map(|x| x.1).sum();
            Measure::atomic(Carrier::Real, v.iter().map(|&(l, w)| (l as f64, w as f64 / total as f64))).unwrap()
        })
    }

    proptest! {
        #[test]
        fn cauchy_is_nevanlinna_and_decays(x in -50.0f64..50.0, y in 1e-3f64..50.0, m in atomic_strategy()) {
            let g = m.cauchy_transform(c(x, y)).unwrap();
            prop_assert!(g.im < 0.0);
            let direct: C64 = m.point_masses().iter().map(|a| a.weight / (c(x, y) - a.location)).sum();
            prop_assert!((g - direct).norm() <= 1e-15 * direct.norm().max(1.0));
            let big = c(x * 1e4 + 1e6, y);
            prop_assert!((big * m.cauchy_transform(big).unwrap() - 1.0).norm() < 1e-5);
        }

        #[test]
        fn tv_is_a_metric(a in atomic_strategy(), b in atomic_strategy(), c3 in atomic_strategy()) {
            let d = |x: &Measure, y: &Measure| total_variation_distance(x, y).unwrap();
            prop_assert!(d(&a, &a) == 0.0);
            prop_assert!((d(&a, &b) - d(&b, &a)).abs() < 1e-15);
            prop_assert!(d(&a, &c3) <= d(&a, &b) + d(&b, &c3) + 1e-15);
            prop_assert!((0.0..=1.0).contains(&d(&a, &b)));
        }
    }
}
