//! Subordination functions of free additive and multiplicative convolutions,
//! computed by fixed-point iteration, and recovery of the convolution support.

use std::f64::consts::{PI, TAU};
use std::sync::OnceLock;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::{angle_gap, unit, Carrier, Measure, SupportSet};

/// Offsets used to reach the real axis (or the circle) from inside the domain.
pub const LADDER: [f64; 4] = [1e-3, 1e-5, 1e-7, 1e-9];
const LADDER_STEP_TOL: f64 = 1e-8;
const LADDER_OFFSET_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvType {
    AdditiveReal,
    MultiplicativePositive,
    MultiplicativeUnitary,
}

/// Which factor a spike belongs to: `A` pairs with `ω₁` and the first
/// measure, `B` with `ω₂` and the second.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Side {
    A,
    B,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Relaxation used once the iteration starts to oscillate; `1.0` means
    /// fall back to a half step.
    pub damping: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { tolerance: 1e-12, max_iterations: 10_000, damping: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SupportOptions {
    pub grid_step: f64,
    pub im_offset: f64,
    pub threshold: f64,
}

impl Default for SupportOptions {
    fn default() -> Self {
        SupportOptions { grid_step: 1e-3, im_offset: 1e-4, threshold: 1e-3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Subordination {
    pub omega1: C64,
    pub omega2: C64,
    pub iterations: usize,
}

impl Subordination {
    pub fn omega(&self, side: Side) -> C64 {
        match side {
            Side::A => self.omega1,
            Side::B => self.omega2,
        }
    }

    fn conj(self) -> Self {
        Subordination { omega1: self.omega1.conj(), omega2: self.omega2.conj(), ..self }
    }
}

/// Subordination evaluators for `μ ⊞ ν` or `μ ⊠ν`, with `ω₁` attached to `μ`.
#[derive(Debug, Clone)]
pub struct SubordinationPair {
    conv_type: ConvType,
    mu: Measure,
    nu: Measure,
    options: SolverOptions,
    support: OnceLock<SupportSet>,
}

impl SubordinationPair {
    pub fn new(conv_type: ConvType, mu: Measure, nu: Measure) -> Result<Self> {
        Self::with_options(conv_type, mu, nu, SolverOptions::default())
    }

    pub fn with_options(conv_type: ConvType, mu: Measure, nu: Measure, options: SolverOptions) -> Result<Self> {
        if !(options.tolerance > 0.0) || options.max_iterations == 0 {
            return Err(Error::precondition("tolerance and max_iterations must be positive"));
        }
        if !(options.damping > 0.0 && options.damping <= 1.0) {
            return Err(Error::precondition(format!("damping {} outside (0, 1]", options.damping)));
        }
        for m in [&mu, &nu] {
            let ok = match conv_type {
                ConvType::AdditiveReal => m.carrier() != Carrier::Circle,
                ConvType::MultiplicativePositive => m.carrier() == Carrier::Positive,
                ConvType::MultiplicativeUnitary => m.carrier() == Carrier::Circle,
            };
            if !ok {
                return Err(Error::precondition(format!(
                    "{:?} measure cannot enter a {conv_type:?} convolution",
                    m.carrier()
                )));
            }
            if conv_type == ConvType::MultiplicativeUnitary && m.first_moment().norm() < 1e-12 {
                return Err(Error::precondition("unitary convolution needs nonzero first moments"));
            }
        }
        Ok(SubordinationPair { conv_type, mu, nu, options, support: OnceLock::new() })
    }

    pub fn conv_type(&self) -> ConvType {
        self.conv_type
    }

    pub fn mu(&self) -> &Measure {
        &self.mu
    }

    pub fn nu(&self) -> &Measure {
        &self.nu
    }

    pub fn measure(&self, side: Side) -> &Measure {
        match side {
            Side::A => &self.mu,
            Side::B => &self.nu,
        }
    }

    pub fn options(&self) -> SolverOptions {
        self.options
    }

    /// The same convolution with the arguments exchanged.
    pub fn swapped(&self) -> Self {
        SubordinationPair {
            conv_type: self.conv_type,
            mu: self.nu.clone(),
            nu: self.mu.clone(),
            options: self.options,
            support: self.support.clone(),
        }
    }

    /// One application of the composed map; returns `(next ω₁, ω₂)`.
    fn step(&self, z: C64, w: C64) -> Result<(C64, C64)> {
        match self.conv_type {
            ConvType::AdditiveReal => {
                let w2 = z + self.mu.h_transform(w)?;
                Ok((z + self.nu.h_transform(w2)?, w2))
            }
            _ => {
                let w2 = z * self.mu.eta_over_z(w)?;
                Ok((z * self.nu.eta_over_z(w2)?, w2))
            }
        }
    }

    /// Fixed point of the composed map from a given start, with `z` in the
    /// interior domain (upper half-plane, or the open unit disk).
    fn fixed_point(&self, z: C64, start: C64) -> Result<Subordination> {
        let SolverOptions { tolerance, max_iterations, damping } = self.options;
        let relax = if damping < 1.0 { damping } else { 0.5 };
        let mut lambda = 1.0;
        let mut w = start;
        let mut prev_step = f64::INFINITY;
        let mut step = f64::NAN;
        for it in 1..=max_iterations {
            let (next, _) = self.step(z, w)?;
            if !next.is_finite() {
                return Err(Error::Numerical(format!("subordination iterate overflowed at z = {z}")));
            }
            step = (next - w).norm();
            if step < tolerance * w.norm().max(1.0) {
                let omega2 = match self.conv_type {
                    ConvType::AdditiveReal => z + self.mu.h_transform(next)?,
                    _ => z * self.mu.eta_over_z(next)?,
                };
                return Ok(Subordination { omega1: next, omega2, iterations: it });
            }
            if step > prev_step {
                lambda = relax;
            }
            prev_step = step;
            w += (next - w) * lambda;
            // Slow contraction near the boundary: try Newton from the current iterate.
            if it >= 64 && (it.is_power_of_two() || it == max_iterations) {
                if let Some(s) = self.newton_polish(z, w)? {
                    return Ok(Subordination { iterations: it, ..s });
                }
            }
        }
        Err(Error::NonConvergence { iterations: max_iterations, residual: step, z: z.to_string() })
    }

    fn in_domain(&self, w: C64, reference: C64) -> bool {
        w.is_finite()
            && match self.conv_type {
                ConvType::MultiplicativeUnitary => w.norm() < 1.0,
                _ => w.im * reference.im > 0.0,
            }
    }

    /// Newton's method on `Φ(w) − w` with a difference-quotient derivative.
    /// Steps must stay inside the domain and reduce the residual; an interior
    /// fixed point of the composed self-map is unique, so a converged step
    /// is the subordination value.
    fn newton_polish(&self, z: C64, start: C64) -> Result<Option<Subordination>> {
        let tolerance = self.options.tolerance;
        let f = |w: C64| -> Option<C64> { self.step(z, w).ok().map(|(n, _)| n - w).filter(|v| v.is_finite()) };
        let mut w = start;
        let Some(mut fw) = f(w) else { return Ok(None) };
        for _ in 0..30 {
            let h = match self.conv_type {
                ConvType::MultiplicativeUnitary => C64::new(0.0, 1e-7) * w / w.norm().max(1e-300),
                _ => C64::new(1e-7 * w.norm().max(1.0), 0.0),
            };
            let (Some(fp), Some(fm)) = (f(w + h), f(w - h)) else { return Ok(None) };
            let d = (fp - fm) / (h * 2.0);
            if d.norm() == 0.0 || !d.is_finite() {
                return Ok(None);
            }
            let next = w - fw / d;
            if !self.in_domain(next, start) {
                return Ok(None);
            }
            let Some(fn_) = f(next) else { return Ok(None) };
            if fn_.norm() >= fw.norm() {
                return Ok(None);
            }
            w = next;
            fw = fn_;
            if fw.norm() < tolerance * w.norm().max(1.0) {
                let omega1 = w + fw;
                let omega2 = match self.conv_type {
                    ConvType::AdditiveReal => z + self.mu.h_transform(omega1)?,
                    _ => z * self.mu.eta_over_z(omega1)?,
                };
                return Ok(Some(Subordination { omega1, omega2, iterations: 0 }));
            }
        }
        Ok(None)
    }

    /// `ω₁(z)` and `ω₂(z)`. Real `z` (or `z` on the circle in the unitary
    /// case) is reached through the offset ladder after checking that the
    /// corresponding point lies off the convolution support.
    pub fn subordination(&self, z: C64) -> Result<Subordination> {
        match self.conv_type {
            ConvType::AdditiveReal | ConvType::MultiplicativePositive => {
                if z.im > 0.0 {
                    self.fixed_point(z, z)
                } else if z.im < 0.0 {
                    Ok(self.fixed_point(z.conj(), z.conj())?.conj())
                } else if self.conv_type == ConvType::MultiplicativePositive && z.re == 0.0 {
                    Ok(Subordination { omega1: z, omega2: z, iterations: 0 })
                } else {
                    let x = z.re;
                    let spectral = if self.conv_type == ConvType::AdditiveReal { x } else { 1.0 / x };
                    if self.support()?.distance(spectral) <= 0.0 {
                        return Err(Error::domain(format!("{spectral} lies in the convolution support")));
                    }
                    let (s1, s2) = self.ladder_real(x)?;
                    Ok(Subordination { omega1: s1, omega2: s2, iterations: 0 })
                }
            }
            ConvType::MultiplicativeUnitary => {
                let r = z.norm();
                if r < 1.0 {
                    self.fixed_point(z, z)
                } else if r == 1.0 {
                    let phi = (-z.arg()).rem_euclid(TAU);
                    if self.support()?.circular_distance(phi) <= 0.0 {
                        return Err(Error::domain(format!("arg {phi} lies in the convolution support")));
                    }
                    let (s1, s2) = self.ladder_circle(phi)?;
                    Ok(Subordination { omega1: s1, omega2: s2, iterations: 0 })
                } else {
                    Err(Error::domain(format!("|z| = {r} > 1 is outside the unit disk")))
                }
            }
        }
    }

    pub fn omega1(&self, z: C64) -> Result<C64> {
        Ok(self.subordination(z)?.omega1)
    }

    pub fn omega2(&self, z: C64) -> Result<C64> {
        Ok(self.subordination(z)?.omega2)
    }

    pub fn omega(&self, side: Side, z: C64) -> Result<C64> {
        Ok(self.subordination(z)?.omega(side))
    }

    /// Residuals of the two defining identities at `z`.
    pub fn residuals(&self, z: C64) -> Result<(f64, f64)> {
        let s = self.subordination(z)?;
        match self.conv_type {
            ConvType::AdditiveReal => {
                let g = self.mu.cauchy_transform(s.omega1)? - self.nu.cauchy_transform(s.omega2)?;
                let f = s.omega1 + s.omega2 - z - self.mu.f_transform(s.omega1)?;
                Ok((g.norm(), f.norm()))
            }
            _ => {
                let eta = self.mu.eta(s.omega1)?;
                let e = eta - self.nu.eta(s.omega2)?;
                let p = s.omega1 * s.omega2 - z * eta;
                Ok((e.norm(), p.norm()))
            }
        }
    }

    /// `G_{μ⊞ν}(z) = G_μ(ω₁(z))`.
    pub fn convolution_cauchy(&self, z: C64) -> Result<C64> {
        match self.conv_type {
            ConvType::AdditiveReal => self.mu.cauchy_transform(self.omega1(z)?),
            ConvType::MultiplicativePositive => {
                if z.norm() == 0.0 {
                    return Err(Error::domain("z = 0"));
                }
                Ok(1.0 / (z * (1.0 - self.convolution_eta(z.inv())?)))
            }
            ConvType::MultiplicativeUnitary => {
                Err(Error::precondition("use convolution_eta for circle measures"))
            }
        }
    }

    /// `η_{μ⊠ν}(z) = η_μ(ω₁(z))`.
    pub fn convolution_eta(&self, z: C64) -> Result<C64> {
        if self.conv_type == ConvType::AdditiveReal {
            return Err(Error::precondition("η is defined for multiplicative convolutions"));
        }
        self.mu.eta(self.omega1(z)?)
    }

    pub fn convolution_psi(&self, z: C64) -> Result<C64> {
        let eta = self.convolution_eta(z)?;
        Ok(eta / (1.0 - eta))
    }

    /// Runs the offset ladder at a real argument of `ω`.
    fn ladder_real(&self, x: f64) -> Result<(C64, C64)> {
        self.ladder(|d| C64::new(x, d), |w| (w.re, w.im.abs()), |a, b| (a - b).abs())
    }

    /// Runs the ladder towards `e^{-iφ}` from inside the disk.
    fn ladder_circle(&self, phi: f64) -> Result<(C64, C64)> {
        self.ladder(|d| unit(-phi) * (1.0 - d), |w| (w.arg(), (1.0 - w.norm()).abs()), angle_gap)
    }

    fn ladder(
        &self,
        point: impl Fn(f64) -> C64,
        split: impl Fn(C64) -> (f64, f64),
        gap: impl Fn(f64, f64) -> f64,
    ) -> Result<(C64, C64)> {
        let mut start = point(LADDER[0]);
        let mut prev: Option<Subordination> = None;
        let mut last = None;
        for d in LADDER {
            let z = point(d);
            let s = self.fixed_point(z, start).map_err(|e| Error::BoundaryExtension {
                x: z.re,
                detail: format!("offset {d:e}: {e}"),
            })?;
            start = s.omega1;
            last = Some((s, prev));
            prev = Some(s);
        }
        let (s, prev) = last.expect("ladder has rungs");
        let prev = prev.expect("ladder has at least two rungs");
        for (cur, old) in [(s.omega1, prev.omega1), (s.omega2, prev.omega2)] {
            let ((p1, off), (p0, _)) = (split(cur), split(old));
            let scale = cur.norm().max(1.0);
            // A pole of ω₂ (infinite boundary value) shows up as a huge iterate;
            // skip its check, ω₁ carries the information there.
            if !cur.is_finite() || cur.norm() > 1e12 {
                continue;
            }
            if gap(p1, p0) >= LADDER_STEP_TOL * scale || off >= LADDER_OFFSET_TOL * scale {
                return Err(Error::BoundaryExtension {
                    x: point(0.0).re,
                    detail: format!("ladder did not settle: last {cur}, previous {old}"),
                });
            }
        }
        Ok((s.omega1, s.omega2))
    }

    /// Boundary values `(ω₁, ω₂)` at a real spectral point without the
    /// support check: `x` itself (additive) or `1/x` (positive multiplicative).
    pub(crate) fn boundary_pair_real(&self, x: f64) -> Result<(C64, C64)> {
        match self.conv_type {
            ConvType::AdditiveReal => self.ladder_real(x),
            _ => self.ladder_real(1.0 / x),
        }
    }

    /// Boundary values `(v₁, v₂)` at `e^{iφ}` without the support check.
    pub(crate) fn boundary_pair_circle(&self, phi: f64) -> Result<(C64, C64)> {
        self.ladder_circle(phi.rem_euclid(TAU))
    }

    /// Real boundary value of `ω₁` or `ω₂` at `x ∉ K` (additive case).
    pub fn omega_real_boundary(&self, side: Side, x: f64, k: &SupportSet) -> Result<f64> {
        if self.conv_type != ConvType::AdditiveReal {
            return Err(Error::precondition("omega_real_boundary is for additive convolutions"));
        }
        if k.distance(x) <= 0.0 {
            return Err(Error::domain(format!("x = {x} lies in the convolution support")));
        }
        let (w1, w2) = self.ladder_real(x)?;
        Ok(match side {
            Side::A => w1.re,
            Side::B => w2.re,
        })
    }

    /// `v_k(ρ) = ω_k(1/ρ)` at real `ρ ∉ K`, positive multiplicative case.
    pub fn v_boundary_real(&self, side: Side, rho: f64, k: &SupportSet) -> Result<f64> {
        if self.conv_type != ConvType::MultiplicativePositive {
            return Err(Error::precondition("v_boundary_real is for positive multiplicative convolutions"));
        }
        if rho == 0.0 || k.distance(rho) <= 0.0 {
            return Err(Error::domain(format!("ρ = {rho} lies in the convolution support or at 0")));
        }
        let (w1, w2) = self.ladder_real(1.0 / rho)?;
        Ok(match side {
            Side::A => w1.re,
            Side::B => w2.re,
        })
    }

    /// `v_k(e^{iφ}) = ω_k(e^{-iφ})` for `e^{iφ}` off the support arcs, unitary case.
    pub fn v_boundary_circle(&self, side: Side, phi: f64, k: &SupportSet) -> Result<C64> {
        if self.conv_type != ConvType::MultiplicativeUnitary {
            return Err(Error::precondition("v_boundary_circle is for unitary convolutions"));
        }
        if k.circular_distance(phi) <= 0.0 {
            return Err(Error::domain(format!("arg {phi} lies in the convolution support")));
        }
        let (w1, w2) = self.ladder_circle(phi.rem_euclid(TAU))?;
        Ok(match side {
            Side::A => w1,
            Side::B => w2,
        })
    }

    /// Atoms of the convolution as `(location, mass)`; arguments on the circle.
    pub fn convolution_atoms(&self) -> Vec<(f64, f64)> {
        let (pa, pb) = (self.mu.point_masses(), self.nu.point_masses());
        let mut out = Vec::new();
        if self.conv_type == ConvType::MultiplicativePositive {
            let zero = self.mu.mass_at(0.0).max(self.nu.mass_at(0.0));
            if zero > 0.0 {
                out.push((0.0, zero));
            }
        }
        for a in &pa {
            for b in &pb {
                let m = a.weight + b.weight - 1.0;
                if m <= 1e-14 {
                    continue;
                }
                let loc = match self.conv_type {
                    ConvType::AdditiveReal => a.location + b.location,
                    ConvType::MultiplicativePositive if a.location == 0.0 || b.location == 0.0 => continue,
                    ConvType::MultiplicativePositive => a.location * b.location,
                    ConvType::MultiplicativeUnitary => (a.location + b.location).rem_euclid(TAU),
                };
                out.push((loc, m));
            }
        }
        out
    }

    /// Density of the continuous part of the convolution at a grid point,
    /// smoothed by `im_offset`, plus the subordination used for warm starts.
    fn smoothed_density(&self, x: f64, off: f64, atoms: &[(f64, f64)], start: Option<C64>) -> Result<(f64, C64)> {
        match self.conv_type {
            ConvType::AdditiveReal => {
                let z = C64::new(x, off);
                let s = self.fixed_point(z, start.unwrap_or(z))?;
                let mut g = self.mu.cauchy_transform(s.omega1)?;
                for &(c, m) in atoms {
                    g -= m / (z - c);
                }
                Ok((-g.im / PI, s.omega1))
            }
            ConvType::MultiplicativePositive => {
                let zeta = C64::new(x, off);
                // ω at 1/ζ̄ (upper half-plane), conjugated back.
                let z = zeta.conj().inv();
                let s = self.fixed_point(z, start.unwrap_or(z))?;
                let eta = self.mu.eta(s.omega1.conj())?;
                let mut g = 1.0 / (zeta * (1.0 - eta));
                for &(c, m) in atoms {
                    g -= m / (zeta - c);
                }
                Ok((-g.im / PI, s.omega1))
            }
            ConvType::MultiplicativeUnitary => {
                let r = 1.0 - off;
                let z = unit(-x) * r;
                let s = self.fixed_point(z, start.unwrap_or(z))?;
                let eta = self.mu.eta(s.omega1)?;
                let mut d = ((1.0 + eta) / (1.0 - eta)).re;
                for &(c, m) in atoms {
                    d -= m * (1.0 - r * r) / (1.0 - 2.0 * r * (c - x).cos() + r * r);
                }
                Ok((d / TAU, s.omega1))
            }
        }
    }

    /// Support of the convolution: grid points where the smoothed density
    /// of the continuous part exceeds the threshold, merged into intervals,
    /// together with the atoms.
    pub fn convolution_support(&self, opts: SupportOptions) -> Result<SupportSet> {
        let SupportOptions { grid_step, im_offset, threshold } = opts;
        if !(grid_step > 0.0 && im_offset > 0.0 && threshold > 0.0) {
            return Err(Error::precondition("grid_step, im_offset and threshold must be positive"));
        }
        let atoms = self.convolution_atoms();
        let (lo, hi) = match self.conv_type {
            ConvType::AdditiveReal => {
                let ((a0, a1), (b0, b1)) = (self.mu.enclosure(), self.nu.enclosure());
                (a0 + b0 - 4.0 * grid_step, a1 + b1 + 4.0 * grid_step)
            }
            ConvType::MultiplicativePositive => {
                let ((a0, a1), (b0, b1)) = (self.mu.enclosure(), self.nu.enclosure());
                ((a0 * b0 - 4.0 * grid_step).max(0.5 * grid_step), a1 * b1 + 4.0 * grid_step)
            }
            ConvType::MultiplicativeUnitary => (0.0, TAU),
        };
        let n = ((hi - lo) / grid_step).ceil().max(1.0) as usize;
        let step = (hi - lo) / n as f64;
        let circle = self.conv_type == ConvType::MultiplicativeUnitary;
        let mut intervals = Vec::new();
        let mut run: Option<(f64, f64)> = None;
        let mut start = None;
        for i in 0..=n {
            let x = if circle { (i as f64 + 0.5) * step } else { lo + i as f64 * step };
            if circle && i == n {
                break;
            }
            let (d, w) = match self.smoothed_density(x, im_offset, &atoms, start) {
                Ok(v) => v,
                // A stale warm start can only slow things down; retry cold.
                Err(_) => self.smoothed_density(x, im_offset, &atoms, None)?,
            };
            start = Some(w);
            if d > threshold {
                run = Some(match run {
                    Some((a, _)) => (a, x),
                    None => (x, x),
                });
            } else if let Some(r) = run.take() {
                intervals.push(r);
            }
        }
        if let Some(r) = run {
            intervals.push(if circle { (r.0, TAU) } else { r });
        }
        if circle {
            // Runs touching the first or last grid cell extend to the seam.
            for r in intervals.iter_mut() {
                if r.0 <= 0.5 * step + 1e-15 {
                    r.0 = 0.0;
                }
            }
        }
        intervals.extend(atoms.iter().map(|&(c, _)| (c, c)));
        let set = SupportSet::from_intervals(intervals)?;
        if set.is_empty() {
            return Err(Error::Numerical(format!(
                "no grid point exceeds the density threshold {threshold}"
            )));
        }
        Ok(set)
    }

    /// `convolution_support` with default options, computed once.
    pub fn support(&self) -> Result<&SupportSet> {
        if let Some(s) = self.support.get() {
            return Ok(s);
        }
        let s = self.convolution_support(SupportOptions::default())?;
        Ok(self.support.get_or_init(|| s))
    }
}

/// `η_m(z)`.
pub fn multiplicative_eta(m: &Measure, z: C64) -> Result<C64> {
    m.eta(z)
}
