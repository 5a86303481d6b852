//! Outlier locations of spiked models: solutions of `ω₁(ρ) = θ`,
//! `ω₂(ρ) = τ` (additive) or `v_k(ρ) = 1/θ` (multiplicative) off the
//! convolution support.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::freeconv::{ConvType, Side, SubordinationPair};
use crate::measures::{angle_gap, unit, Carrier, Measure, SupportSet};

/// Roots closer than this are one outlier.
pub const MERGE_TOL: f64 = 1e-8;
/// A bracketed root is accepted only if `|ω(ρ) - θ|` is below this.
pub const ROUND_TRIP_TOL: f64 = 1e-6;
pub const DEFAULT_EPS_CUT: f64 = 0.05;
const GRID_SAMPLES: usize = 320;

/// How many of the stored spikes are present at matrix size `n`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Growth {
    /// Every stored spike, capped at `n`.
    #[default]
    All,
    Fixed { count: usize },
    /// `⌊√n⌋`.
    Sqrt,
    /// `⌊scale · n^exponent⌋`.
    Power { scale: f64, exponent: f64 },
}

impl Growth {
    /// The uncapped count for size `n`.
    pub fn raw(&self, n: usize) -> usize {
        match *self {
            Growth::All => usize::MAX,
            Growth::Fixed { count } => count,
            Growth::Sqrt => (n as f64).sqrt().floor() as usize,
            Growth::Power { scale, exponent } => (scale * (n as f64).powf(exponent)).floor().max(0.0) as usize,
        }
    }
}

/// A finite prefix of a spike sequence, the rule for how many enter at
/// size `n`, and the law of the remaining diagonal entries. On the circle,
/// spikes are arguments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpikeSchedule {
    pub spikes: Vec<f64>,
    #[serde(default)]
    pub growth: Growth,
    pub base_measure: Measure,
}

impl SpikeSchedule {
    pub fn new(spikes: Vec<f64>, growth: Growth, base_measure: Measure) -> Result<Self> {
        let s = SpikeSchedule { spikes, growth, base_measure };
        s.validate()?;
        Ok(s)
    }

    pub fn without_spikes(base_measure: Measure) -> Self {
        SpikeSchedule { spikes: Vec::new(), growth: Growth::All, base_measure }
    }

    pub fn validate(&self) -> Result<()> {
        let carrier = self.base_measure.carrier();
        for (i, &t) in self.spikes.iter().enumerate() {
            if !t.is_finite() {
                return Err(Error::precondition(format!("spike {i} is not finite")));
            }
            if carrier == Carrier::Positive && t <= 0.0 {
                return Err(Error::precondition(format!("spike {i} = {t} must be positive")));
            }
            if self.base_measure.dist(t) <= 0.0 {
                return Err(Error::precondition(format!("spike {i} = {t} lies in the base support")));
            }
        }
        Ok(())
    }

    /// Number of spikes in the size-`n` matrix.
    pub fn count(&self, n: usize) -> usize {
        self.growth.raw(n).min(self.spikes.len()).min(n)
    }

    /// Spikes present at size `n`.
    pub fn present(&self, n: usize) -> &[f64] {
        &self.spikes[..self.count(n)]
    }

    /// Checks `φ(n)/n ≤ envelope` at each sampled size.
    pub fn check_growth(&self, envelope: f64, sizes: &[usize]) -> Result<()> {
        for &n in sizes {
            let ratio = self.count(n) as f64 / n.max(1) as f64;
            if ratio > envelope {
                return Err(Error::precondition(format!("φ({n})/{n} = {ratio} exceeds {envelope}")));
            }
        }
        Ok(())
    }

    /// Checks that distances to the support do not increase from index
    /// `from` on and that the last stored spike is within `tol` of it.
    pub fn check_accumulation(&self, from: usize, tol: f64) -> Result<()> {
        let d: Vec<f64> = self.spikes.iter().map(|&t| self.base_measure.dist(t)).collect();
        if d.iter().skip(from).zip(d.iter().skip(from + 1)).any(|(a, b)| b > a) {
            return Err(Error::precondition(format!("spike distances increase after index {from}")));
        }
        match d.last() {
            Some(&last) if last <= tol => Ok(()),
            Some(&last) => Err(Error::precondition(format!("last spike is {last} from the support, above {tol}"))),
            None => Err(Error::precondition("schedule has no spikes")),
        }
    }
}

/// Origin of an outlier: spikes of one factor, or of both when two
/// roots coincide.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PredictionSide {
    A,
    B,
    AB,
}

impl From<Side> for PredictionSide {
    fn from(s: Side) -> Self {
        match s {
            Side::A => PredictionSide::A,
            Side::B => PredictionSide::B,
        }
    }
}

/// A predicted outlier. On the circle `rho` is the argument of the
/// eigenvalue and `window` is an angular half-width.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutlierPrediction {
    pub rho: f64,
    pub side: PredictionSide,
    /// Zero-based indices into the spike list of `side` (the A list when
    /// both sides contribute).
    pub sources: Vec<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sources_b: Vec<usize>,
    pub multiplicity: usize,
    pub window: f64,
}

impl OutlierPrediction {
    /// The eigenvalue location as a complex number.
    pub fn location(&self, circle: bool) -> C64 {
        if circle {
            unit(self.rho)
        } else {
            C64::new(self.rho, 0.0)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictOptions {
    pub eps_cut: f64,
    /// Restrict to the spikes present at this matrix size.
    pub present_at: Option<usize>,
    /// Search interval for real models; default: the support enclosure
    /// widened by four times the largest spike modulus.
    pub bounding_box: Option<(f64, f64)>,
}

impl Default for PredictOptions {
    fn default() -> Self {
        PredictOptions { eps_cut: DEFAULT_EPS_CUT, present_at: None, bounding_box: None }
    }
}

impl PredictOptions {
    pub fn with_eps_cut(eps_cut: f64) -> Self {
        PredictOptions { eps_cut, ..Default::default() }
    }
}

struct Root {
    rho: f64,
    side: Side,
    source: usize,
}

/// Spikes of both sides that lie farther than `eps_cut` from their base support.
fn qualifying<'a>(
    a: &'a SpikeSchedule,
    b: &'a SpikeSchedule,
    sp: &'a SubordinationPair,
    opts: &PredictOptions,
) -> Vec<(Side, usize, f64)> {
    let mut out = Vec::new();
    for (side, sched) in [(Side::A, a), (Side::B, b)] {
        let spikes = match opts.present_at {
            Some(n) => sched.present(n),
            None => &sched.spikes[..],
        };
        let m = sp.measure(side);
        for (i, &t) in spikes.iter().enumerate() {
            if m.dist(t) > opts.eps_cut {
                out.push((side, i, t));
            }
        }
    }
    out
}

fn check_inputs(a: &SpikeSchedule, b: &SpikeSchedule, eps_cut: f64) -> Result<()> {
    if !(eps_cut > 0.0) {
        return Err(Error::precondition(format!("eps_cut must be positive, got {eps_cut}")));
    }
    a.validate()?;
    b.validate()
}

/// Outliers of the additive model `A_N + U_N B_N U_N*`.
pub fn predict_outliers(
    a: &SpikeSchedule,
    b: &SpikeSchedule,
    sp: &SubordinationPair,
    eps_cut: f64,
) -> Result<Vec<OutlierPrediction>> {
    predict_outliers_with(a, b, sp, &PredictOptions::with_eps_cut(eps_cut))
}

/// Dispatches on the convolution type.
pub fn predict_outliers_with(
    a: &SpikeSchedule,
    b: &SpikeSchedule,
    sp: &SubordinationPair,
    opts: &PredictOptions,
) -> Result<Vec<OutlierPrediction>> {
    check_inputs(a, b, opts.eps_cut)?;
    match sp.conv_type() {
        ConvType::AdditiveReal | ConvType::MultiplicativePositive => predict_real(a, b, sp, opts),
        ConvType::MultiplicativeUnitary => predict_circle(a, b, sp, opts),
    }
}

/// Outliers of `A^{1/2} U B U* A^{1/2}` (positive spikes) or `A U B U*`
/// (spikes on the circle, given by their arguments).
pub fn predict_outliers_multiplicative(
    a: &SpikeSchedule,
    b: &SpikeSchedule,
    sp: &SubordinationPair,
    eps_cut: f64,
) -> Result<Vec<OutlierPrediction>> {
    if sp.conv_type() == ConvType::AdditiveReal {
        return Err(Error::precondition("additive pair passed to the multiplicative predictor"));
    }
    predict_outliers_with(a, b, sp, &PredictOptions::with_eps_cut(eps_cut))
}

fn predict_real(
    a: &SpikeSchedule,
    b: &SpikeSchedule,
    sp: &SubordinationPair,
    opts: &PredictOptions,
) -> Result<Vec<OutlierPrediction>> {
    let spikes = qualifying(a, b, sp, opts);
    let k = sp.support()?.clone();
    if spikes.is_empty() {
        return Ok(Vec::new());
    }
    let positive = sp.conv_type() == ConvType::MultiplicativePositive;
    let (klo, khi) = (k.lo().expect("nonempty support"), k.hi().expect("nonempty support"));
    let big = spikes.iter().map(|s| s.2.abs()).fold(1.0, f64::max);
    let (lo, hi) = opts.bounding_box.unwrap_or_else(|| {
        if positive {
            let (_, a1) = sp.mu().enclosure();
            let (_, b1) = sp.nu().enclosure();
            let scale = a1.max(b1).max(1.0);
            (1e-6 * khi.max(1.0), (khi + 4.0 * big) * scale)
        } else {
            (klo - 4.0 * big, khi + 4.0 * big)
        }
    });
    let components = k.fattened(opts.eps_cut / 2.0).gaps_within(lo, hi);

    // ω at real ρ, as (ω₁, ω₂); the equations are ω_k(ρ) = θ (additive)
    // and ω_k(1/ρ) = 1/θ (positive).
    let eval = |x: f64| -> Option<(f64, f64)> {
        sp.boundary_pair_real(x).ok().map(|(w1, w2)| (w1.re, w2.re))
    };
    let target = |t: f64| if positive { 1.0 / t } else { t };

    let grids: Vec<Vec<(f64, Option<(f64, f64)>)>> = components
        .par_iter()
        .map(|&(c0, c1)| {
            (0..=GRID_SAMPLES)
                .map(|i| {
                    let x = c0 + (c1 - c0) * i as f64 / GRID_SAMPLES as f64;
                    (x, eval(x))
                })
                .collect()
        })
        .collect();

    let roots: Vec<Root> = spikes
        .par_iter()
        .flat_map_iter(|&(side, idx, theta)| {
            let goal = target(theta);
            let pick = move |v: (f64, f64)| match side {
                Side::A => v.0,
                Side::B => v.1,
            };
            let mut found = Vec::new();
            for grid in &grids {
                for w in grid.windows(2) {
                    let ((x0, Some(v0)), (x1, Some(v1))) = (w[0], w[1]) else { continue };
                    let (f0, f1) = (pick(v0) - goal, pick(v1) - goal);
                    if f0 == 0.0 {
                        found.push(x0);
                        continue;
                    }
                    if f0.signum() == f1.signum() {
                        continue;
                    }
                    if let Some(r) = bisect(|x| eval(x).map(|v| pick(v) - goal), x0, x1, f0) {
                        found.push(r);
                    }
                }
                if let Some(&(x, Some(v))) = grid.last() {
                    if pick(v) == goal {
                        found.push(x);
                    }
                }
            }
            found
                .into_iter()
                .filter(|&r| eval(r).is_some_and(|v| (pick(v) - goal).abs() < ROUND_TRIP_TOL * goal.abs().max(1.0)))
                .map(move |rho| Root { rho, side, source: idx })
                .collect::<Vec<_>>()
        })
        .collect();

    Ok(finish(roots, |x| k.distance(x), |a, b| (a - b).abs()))
}

fn predict_circle(
    a: &SpikeSchedule,
    b: &SpikeSchedule,
    sp: &SubordinationPair,
    opts: &PredictOptions,
) -> Result<Vec<OutlierPrediction>> {
    let spikes = qualifying(a, b, sp, opts);
    let k = sp.support()?.clone();
    if spikes.is_empty() {
        return Ok(Vec::new());
    }
    let arcs = k.fattened_circular(opts.eps_cut / 2.0).gaps_circular();
    let eval = |phi: f64| sp.boundary_pair_circle(phi).ok();

    let grids: Vec<Vec<(f64, Option<(C64, C64)>)>> = arcs
        .par_iter()
        .map(|&(c0, c1)| {
            (0..=GRID_SAMPLES)
                .map(|i| {
                    let x = c0 + (c1 - c0) * i as f64 / GRID_SAMPLES as f64;
                    (x, eval(x))
                })
                .collect()
        })
        .collect();

    let roots: Vec<Root> = spikes
        .par_iter()
        .flat_map_iter(|&(side, idx, alpha)| {
            // v(e^{iφ}) = 1/θ  ⇔  arg(v · θ) = 0.
            let theta = unit(alpha);
            let pick = move |v: (C64, C64)| match side {
                Side::A => v.0,
                Side::B => v.1,
            };
            let g = move |v: (C64, C64)| (pick(v) * theta).arg();
            let mut found = Vec::new();
            for grid in &grids {
                for w in grid.windows(2) {
                    let ((x0, Some(v0)), (x1, Some(v1))) = (w[0], w[1]) else { continue };
                    let (f0, f1) = (g(v0), g(v1));
                    // Ignore the ±π wrap of the argument.
                    if f0.signum() == f1.signum() || (f0 - f1).abs() > PI {
                        continue;
                    }
                    if f0 == 0.0 {
                        found.push(x0);
                        continue;
                    }
                    if let Some(r) = bisect(|x| eval(x).map(g), x0, x1, f0) {
                        found.push(r);
                    }
                }
            }
            found
                .into_iter()
                .filter(|&r| eval(r).is_some_and(|v| (pick(v) * theta - 1.0).norm() < ROUND_TRIP_TOL))
                .map(move |rho| Root { rho: rho.rem_euclid(TAU), side, source: idx })
                .collect::<Vec<_>>()
        })
        .collect();

    Ok(finish(roots, |x| k.circular_distance(x), angle_gap))
}

/// Bisection on `[x0, x1]` given `f(x0)`; `None` if an evaluation fails.
fn bisect(f: impl Fn(f64) -> Option<f64>, mut x0: f64, mut x1: f64, mut f0: f64) -> Option<f64> {
    for _ in 0..200 {
        let mid = 0.5 * (x0 + x1);
        if (x1 - x0).abs() <= 1e-13 * mid.abs().max(1.0) {
            break;
        }
        let fm = f(mid)?;
        if fm == 0.0 {
            return Some(mid);
        }
        if fm.signum() == f0.signum() {
            x0 = mid;
            f0 = fm;
        } else {
            x1 = mid;
        }
    }
    Some(0.5 * (x0 + x1))
}

/// Merges coincident roots and attaches windows.
fn finish(
    mut roots: Vec<Root>,
    dist_k: impl Fn(f64) -> f64,
    gap: impl Fn(f64, f64) -> f64,
) -> Vec<OutlierPrediction> {
    roots.sort_by(|a, b| a.rho.total_cmp(&b.rho).then(a.side.cmp(&b.side)).then(a.source.cmp(&b.source)));
    let mut preds: Vec<OutlierPrediction> = Vec::new();
    for r in roots {
        if let Some(p) = preds.last_mut() {
            if gap(p.rho, r.rho) <= MERGE_TOL {
                absorb(p, &r);
                continue;
            }
        }
        let mut p = OutlierPrediction {
            rho: r.rho,
            side: r.side.into(),
            sources: Vec::new(),
            sources_b: Vec::new(),
            multiplicity: 0,
            window: 0.0,
        };
        absorb(&mut p, &r);
        preds.push(p);
    }
    // On the circle the first and last roots can coincide across the seam.
    if preds.len() > 1 && gap(preds[0].rho, preds[preds.len() - 1].rho) <= MERGE_TOL {
        let last = preds.pop().expect("len > 1");
        let first = &mut preds[0];
        for &s in &last.sources {
            let side = if last.side == PredictionSide::B { Side::B } else { Side::A };
            absorb(first, &Root { rho: first.rho, side, source: s });
        }
        for &s in &last.sources_b {
            absorb(first, &Root { rho: first.rho, side: Side::B, source: s });
        }
    }
    let rhos: Vec<f64> = preds.iter().map(|p| p.rho).collect();
    for (i, p) in preds.iter_mut().enumerate() {
        let nearest = rhos
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(_, &r)| gap(r, p.rho))
            .fold(f64::INFINITY, f64::min);
        p.window = 0.5 * dist_k(p.rho).min(nearest);
    }
    preds
}

fn absorb(p: &mut OutlierPrediction, r: &Root) {
    let incoming = PredictionSide::from(r.side);
    match (p.side, incoming) {
        (PredictionSide::A, PredictionSide::B) if p.multiplicity > 0 => {
            p.side = PredictionSide::AB;
            p.sources_b.push(r.source);
        }
        (PredictionSide::B, PredictionSide::A) if p.multiplicity > 0 => {
            // Keep A indices in `sources` for merged predictions.
            p.side = PredictionSide::AB;
            p.sources_b = std::mem::take(&mut p.sources);
            p.sources.push(r.source);
        }
        (PredictionSide::AB, PredictionSide::B) => p.sources_b.push(r.source),
        _ => p.sources.push(r.source),
    }
    p.multiplicity += 1;
}

/// `K′ = K ∪ {ρ}` for the predicted outliers.
pub fn assemble_kprime(k: &SupportSet, preds: &[OutlierPrediction]) -> SupportSet {
    let points = SupportSet::points(preds.iter().map(|p| p.rho)).expect("finite outlier locations");
    k.union(&points)
}
