//! Checks of predicted outliers against sampled spectra, finite-size pencils
//! and their limits, and the perturbation bounds the predictions rest on.

use std::io::Write;

use faer::Mat;
use num_complex::Complex64 as C64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::freeconv::{ConvType, SubordinationPair};
use crate::measures::{angle_gap, total_variation_distance, unit, Measure, SupportSet};
use crate::outliers::{assemble_kprime, OutlierPrediction};
use crate::rmt::{hermitian_eigenvalues, projected_resolvent, sample_haar_unitary, sample_model, trial_rng, Model, ModelSpec, SimulationRun, Spectrum};

/// Fraction of trials in which a window must hold exactly its multiplicity.
pub const DEFAULT_LEVEL: f64 = 0.9;
/// Upper bound on the window half-width around a predicted outlier.
pub const DEFAULT_WINDOW: f64 = 0.3;
/// Fattening of `K′` when counting escapees.
pub const DEFAULT_ESCAPE_EPS: f64 = 0.2;
/// Grid points whose least singular value is this close to `eps` are not judged.
pub const SINGULAR_BAND: f64 = 1e-8;
/// Resolvent entries beyond this are treated as a hit on the spectrum.
const RESOLVENT_LIMIT: f64 = 1e12;

/// Eigenvalues strictly inside `(center - halfwidth, center + halfwidth)`.
/// `eigs` must be sorted ascending.
pub fn count_in_window(eigs: &[f64], center: f64, halfwidth: f64) -> usize {
    if !(halfwidth > 0.0) {
        return 0;
    }
    let lo = eigs.partition_point(|&x| x <= center - halfwidth);
    let hi = eigs.partition_point(|&x| x < center + halfwidth);
    hi.saturating_sub(lo)
}

/// Arguments strictly within angular distance `halfwidth` of `center`.
pub fn count_in_arc(args: &[f64], center: f64, halfwidth: f64) -> usize {
    if !(halfwidth > 0.0) {
        return 0;
    }
    args.iter().filter(|&&a| angle_gap(a, center) < halfwidth).count()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyOptions {
    /// Window half-width cap; each window is `min(window, prediction.window)`.
    pub window: f64,
    /// Eigenvalues outside `K′` fattened by this much count as escapees.
    pub escape_eps: f64,
    pub level: f64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions { window: DEFAULT_WINDOW, escape_eps: DEFAULT_ESCAPE_EPS, level: DEFAULT_LEVEL }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutlierCheck {
    pub prediction: OutlierPrediction,
    pub halfwidth: f64,
    /// Most frequent window count over the trials.
    pub observed_count: usize,
    pub counts: Vec<usize>,
    pub hit_fraction: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub per_outlier: Vec<OutlierCheck>,
    /// Total over all trials.
    pub bulk_escapees: usize,
    pub escapees_per_trial: Vec<usize>,
    /// Fraction of trials with no escapee.
    pub inclusion_fraction: f64,
    pub epsilon: f64,
    pub n: usize,
    pub trials: usize,
    pub level: f64,
    /// Fraction of trials in which every window count is exact.
    pub pass_fraction: f64,
}

impl VerificationReport {
    pub fn outliers_pass(&self) -> bool {
        self.per_outlier.iter().all(|c| c.pass)
    }

    pub fn inclusion_pass(&self) -> bool {
        self.inclusion_fraction >= self.level
    }

    pub fn all_pass(&self) -> bool {
        self.outliers_pass() && self.inclusion_pass()
    }
}

/// Single-run verification with window cap and escape margin both `eps`.
pub fn verify_run(
    run: &SimulationRun,
    preds: &[OutlierPrediction],
    k: &SupportSet,
    eps: f64,
) -> Result<VerificationReport> {
    let opts = VerifyOptions { window: eps, escape_eps: eps, level: 1.0 };
    verify_runs(std::slice::from_ref(run), preds, k, &opts)
}

pub fn verify_runs(
    runs: &[SimulationRun],
    preds: &[OutlierPrediction],
    k: &SupportSet,
    opts: &VerifyOptions,
) -> Result<VerificationReport> {
    let Some(first) = runs.first() else {
        return Err(Error::Config("no simulation runs to verify".into()));
    };
    let n = first.eigenvalues.len();
    let circle = matches!(first.eigenvalues, Spectrum::Unit(_));
    if runs.iter().any(|r| r.eigenvalues.len() != n || matches!(r.eigenvalues, Spectrum::Unit(_)) != circle) {
        return Err(Error::Config("runs differ in size or spectrum kind".into()));
    }
    if !(opts.window > 0.0 && opts.escape_eps > 0.0) || !(0.0..=1.0).contains(&opts.level) {
        return Err(Error::Config(format!("invalid verification options {opts:?}")));
    }
    let halfwidths: Vec<f64> = preds.iter().map(|p| opts.window.min(p.window)).collect();
    for (p, &h) in preds.iter().zip(&halfwidths) {
        if !(h > 0.0) {
            return Err(Error::Config(format!("prediction at {} has an empty window", p.rho)));
        }
        if opts.escape_eps >= p.window {
            return Err(Error::Config(format!(
                "escape margin {} is not below the window {} of the prediction at {}",
                opts.escape_eps, p.window, p.rho
            )));
        }
    }
    check_disjoint(preds, &halfwidths, circle)?;

    let kprime = assemble_kprime(k, preds);
    let fat = if circle { kprime.fattened_circular(opts.escape_eps) } else { kprime.fattened(opts.escape_eps) };
    let mut counts = vec![Vec::with_capacity(runs.len()); preds.len()];
    let mut escapees = Vec::with_capacity(runs.len());
    let mut exact_trials = 0;
    for run in runs {
        let xs = run.eigenvalues.coordinates();
        let mut exact = true;
        for (i, (p, &h)) in preds.iter().zip(&halfwidths).enumerate() {
            let c = if circle { count_in_arc(&xs, p.rho, h) } else { count_in_window(&xs, p.rho, h) };
            exact &= c == p.multiplicity;
            counts[i].push(c);
        }
        exact_trials += usize::from(exact);
        let outside = xs
            .iter()
            .filter(|&&x| if circle { !fat.contains_circular(x) } else { !fat.contains(x) })
            .count();
        escapees.push(outside);
    }
    let trials = runs.len();
    let per_outlier = preds
        .iter()
        .zip(halfwidths)
        .zip(counts)
        .map(|((p, h), counts)| {
            let hits = counts.iter().filter(|&&c| c == p.multiplicity).count();
            let hit_fraction = hits as f64 / trials as f64;
            OutlierCheck {
                prediction: p.clone(),
                halfwidth: h,
                observed_count: mode(&counts),
                counts,
                hit_fraction,
                pass: hit_fraction >= opts.level,
            }
        })
        .collect();
    let clean = escapees.iter().filter(|&&e| e == 0).count();
    Ok(VerificationReport {
        per_outlier,
        bulk_escapees: escapees.iter().sum(),
        escapees_per_trial: escapees,
        inclusion_fraction: clean as f64 / trials as f64,
        epsilon: opts.escape_eps,
        n,
        trials,
        level: opts.level,
        pass_fraction: exact_trials as f64 / trials as f64,
    })
}

fn check_disjoint(preds: &[OutlierPrediction], halfwidths: &[f64], circle: bool) -> Result<()> {
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&i, &j| preds[i].rho.total_cmp(&preds[j].rho));
    let mut pairs: Vec<(usize, usize)> = order.windows(2).map(|w| (w[0], w[1])).collect();
    if circle && order.len() > 2 {
        pairs.push((order[order.len() - 1], order[0]));
    }
    for (i, j) in pairs {
        let gap = if circle { angle_gap(preds[i].rho, preds[j].rho) } else { preds[j].rho - preds[i].rho };
        if gap < halfwidths[i] + halfwidths[j] {
            return Err(Error::Config(format!(
                "windows around {} and {} overlap",
                preds[i].rho, preds[j].rho
            )));
        }
    }
    Ok(())
}

fn mode(xs: &[usize]) -> usize {
    let mut sorted = xs.to_vec();
    sorted.sort_unstable();
    let mut best = (0, 0);
    for run in sorted.chunk_by(|a, b| a == b) {
        if run.len() > best.1 {
            best = (run[0], run.len());
        }
    }
    best.0
}

fn check_hermitian(a: &Mat<C64>) -> Result<()> {
    if a.nrows() != a.ncols() || a.nrows() == 0 {
        return Err(Error::precondition("matrix must be square and nonempty"));
    }
    let n = a.nrows();
    let mut scale: f64 = 1.0;
    let mut skew: f64 = 0.0;
    for j in 0..n {
        for i in 0..n {
            scale = scale.max(a[(i, j)].norm());
            skew = skew.max((a[(i, j)] - a[(j, i)].conj()).norm());
        }
    }
    if skew > 1e-10 * scale {
        return Err(Error::precondition(format!("matrix is not Hermitian (skew part {skew:e})")));
    }
    Ok(())
}

/// Largest singular value.
pub fn op_norm(m: &Mat<C64>) -> Result<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Ok(0.0);
    }
    let s = m.singular_values().map_err(|e| Error::Numerical(format!("SVD failed: {e:?}")))?;
    Ok(s.into_iter().fold(0.0, f64::max))
}

pub fn min_singular_value(m: &Mat<C64>) -> Result<f64> {
    let s = m.singular_values().map_err(|e| Error::Numerical(format!("SVD failed: {e:?}")))?;
    Ok(s.into_iter().fold(f64::INFINITY, f64::min))
}

/// The ε-pseudospectrum of a Hermitian matrix: its spectrum fattened by `eps`.
pub fn pseudospectrum_hermitian(a: &Mat<C64>, eps: f64) -> Result<SupportSet> {
    if !(eps > 0.0) {
        return Err(Error::precondition(format!("eps must be positive, got {eps}")));
    }
    check_hermitian(a)?;
    Ok(SupportSet::points(hermitian_eigenvalues(a)?)?.fattened(eps))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCheck {
    pub points: usize,
    /// Grid points within `SINGULAR_BAND` of the level set, not judged.
    pub ambiguous: usize,
    /// Points where the singular-value test and the returned set disagree.
    pub mismatches: Vec<f64>,
}

impl GridCheck {
    pub fn pass(&self) -> bool {
        self.mismatches.is_empty()
    }
}

/// Compares `pseudospectrum_hermitian` with `σ_min(A - λI) ≤ eps` on `grid`.
pub fn pseudospectrum_grid_check(a: &Mat<C64>, eps: f64, grid: &[f64]) -> Result<GridCheck> {
    let set = pseudospectrum_hermitian(a, eps)?;
    let n = a.nrows();
    let mut out = GridCheck { points: grid.len(), ambiguous: 0, mismatches: Vec::new() };
    for &lambda in grid {
        let shifted = Mat::from_fn(n, n, |i, j| if i == j { a[(i, j)] - lambda } else { a[(i, j)] });
        let s = min_singular_value(&shifted)?;
        if (s - eps).abs() < SINGULAR_BAND {
            out.ambiguous += 1;
        } else if (s <= eps) != set.contains(lambda) {
            out.mismatches.push(lambda);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub pass: bool,
}

fn spectral_projection(x: &Mat<C64>, alpha: f64, beta: f64, delta: f64) -> Result<Mat<C64>> {
    let eig = x
        .self_adjoint_eigen(faer::Side::Lower)
        .map_err(|e| Error::Numerical(format!("eigendecomposition failed: {e:?}")))?;
    let s = eig.S().column_vector();
    let u = eig.U();
    let n = x.nrows();
    let mut keep = Vec::new();
    for k in 0..n {
        let l = s[k].re;
        if (alpha - delta..=alpha).contains(&l) || (beta..=beta + delta).contains(&l) {
            return Err(Error::precondition(format!("eigenvalue {l} lies in a guard strip")));
        }
        if l > alpha && l < beta {
            keep.push(k);
        }
    }
    Ok(Mat::from_fn(n, n, |i, j| keep.iter().map(|&k| u[(i, k)] * u[(j, k)].conj()).sum()))
}

/// Compares `‖E_X((α,β)) − E_{X₀}((α,β))‖` with `4(β−α+2δ)/(πδ²)·‖X−X₀‖`.
/// Neither matrix may have eigenvalues in `[α−δ, α] ∪ [β, β+δ]`.
pub fn projection_perturbation_check(
    x: &Mat<C64>,
    x0: &Mat<C64>,
    alpha: f64,
    beta: f64,
    delta: f64,
) -> Result<BoundCheck> {
    if !(alpha < beta && delta > 0.0) {
        return Err(Error::precondition("need alpha < beta and delta > 0"));
    }
    if x.nrows() != x0.nrows() || x.ncols() != x0.ncols() {
        return Err(Error::precondition("matrices differ in shape"));
    }
    check_hermitian(x)?;
    check_hermitian(x0)?;
    let e = spectral_projection(x, alpha, beta, delta)?;
    let e0 = spectral_projection(x0, alpha, beta, delta)?;
    let lhs = op_norm(&(&e - &e0))?;
    let rhs = 4.0 * (beta - alpha + 2.0 * delta) / (std::f64::consts::PI * delta * delta) * op_norm(&(x - x0))?;
    Ok(BoundCheck { lhs, rhs, pass: lhs <= rhs })
}

/// `max_k |λ_k(A+E) − λ_k(A)|` against `‖E‖`, up to rounding in the eigensolver.
pub fn weyl_check(a: &Mat<C64>, e: &Mat<C64>) -> Result<BoundCheck> {
    check_hermitian(a)?;
    check_hermitian(e)?;
    let l0 = hermitian_eigenvalues(a)?;
    let l1 = hermitian_eigenvalues(&(a + e))?;
    let lhs = l0.iter().zip(&l1).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let rhs = op_norm(e)?;
    let slack = 1e-12 * (1.0 + op_norm(a)?);
    Ok(BoundCheck { lhs, rhs, pass: lhs <= rhs + slack })
}

/// The A-side spikes held apart in a pencil, and the value `α` that
/// replaces them in `X_N′`.
#[derive(Debug, Clone, PartialEq)]
pub struct PencilSetup {
    pub spec: ModelSpec,
    /// Diagonal slots of the designated spikes.
    pub slots: Vec<usize>,
    pub thetas: Vec<f64>,
    pub alpha: f64,
}

impl PencilSetup {
    /// Designates the present A-side spikes farther than `eps_cut` from
    /// the base support. `alpha` must lie in that support.
    pub fn new(spec: ModelSpec, alpha: f64, eps_cut: f64) -> Result<Self> {
        spec.validate()?;
        let mu = &spec.a_side.schedule.base_measure;
        if mu.dist(alpha) > 1e-9 {
            return Err(Error::precondition(format!("alpha = {alpha} is not in the support of the A-side measure")));
        }
        if spec.model == Model::MultiplicativePositive && !(alpha > 0.0) {
            return Err(Error::precondition("alpha must be positive in the positive model"));
        }
        let (slots, thetas): (Vec<usize>, Vec<f64>) = spec
            .a_side
            .schedule
            .present(spec.n)
            .iter()
            .enumerate()
            .filter(|(_, &t)| mu.dist(t) > eps_cut)
            .map(|(i, &t)| (i, t))
            .unzip();
        if slots.is_empty() {
            return Err(Error::precondition("no A-side spike lies beyond eps_cut"));
        }
        Ok(PencilSetup { spec, slots, thetas, alpha })
    }

    pub fn model(&self) -> Model {
        self.spec.model
    }

    pub fn overrides(&self) -> Vec<(usize, f64)> {
        self.slots.iter().map(|&i| (i, self.alpha)).collect()
    }

    fn value(&self, x: f64) -> C64 {
        if self.spec.model.is_unitary() {
            unit(x)
        } else {
            C64::new(x, 0.0)
        }
    }

    /// `F_N` from the projected resolvent block `P R P*` (additive) or
    /// `P zR P*` (multiplicative) of `X_N′`.
    pub fn from_block(&self, block: &Mat<C64>) -> Mat<C64> {
        let p = self.slots.len();
        let a = self.value(self.alpha);
        match self.spec.model {
            Model::Additive => Mat::from_fn(p, p, |i, j| {
                let d = if i == j { 1.0 } else { 0.0 };
                d - block[(i, j)] * (self.thetas[j] - self.alpha)
            }),
            _ => Mat::from_fn(p, p, |i, j| {
                let t = self.value(self.thetas[i]) / a;
                let d = if i == j { t } else { C64::new(0.0, 0.0) };
                (1.0 - t) * block[(i, j)] + d
            }),
        }
    }
}

fn checked_resolvent(x: &Mat<C64>, model: Model, z: C64, indices: &[usize]) -> Result<Mat<C64>> {
    let r = projected_resolvent(x, model, z, indices)?;
    if r.col_iter().any(|c| c.iter().any(|v| v.norm() > RESOLVENT_LIMIT)) {
        return Err(Error::Numerical(format!("resolvent is ill-conditioned at z = {z}")));
    }
    Ok(r)
}

/// One sample of the finite pencil `F_N(z)`.
pub fn finite_pencil(setup: &PencilSetup, trial: u64, z: C64) -> Result<Mat<C64>> {
    let s = sample_model(&setup.spec, trial, &setup.overrides())?;
    let block = checked_resolvent(&s.x, setup.model(), z, &setup.slots)?;
    Ok(setup.from_block(&block))
}

pub fn finite_pencil_additive(setup: &PencilSetup, trial: u64, z: C64) -> Result<Mat<C64>> {
    if setup.model() != Model::Additive {
        return Err(Error::precondition("additive pencil needs the additive model"));
    }
    finite_pencil(setup, trial, z)
}

pub fn finite_pencil_multiplicative(setup: &PencilSetup, trial: u64, z: C64) -> Result<Mat<C64>> {
    if setup.model() == Model::Additive {
        return Err(Error::precondition("multiplicative pencil needs a multiplicative model"));
    }
    finite_pencil(setup, trial, z)
}

/// Diagonal of the limit `F(z)`: `1 − (θ−α)/(ω₁(z)−α)` in the additive
/// case, `(1−θ/α)/(1−αω₁(1/z)) + θ/α` in the multiplicative ones. On the
/// circle `thetas` and `alpha` are arguments.
pub fn pencil_limit(sp: &SubordinationPair, thetas: &[f64], alpha: f64, z: C64) -> Result<Vec<C64>> {
    match sp.conv_type() {
        ConvType::AdditiveReal => {
            let w = sp.omega1(z)?;
            Ok(thetas.iter().map(|&t| 1.0 - (t - alpha) / (w - alpha)).collect())
        }
        ct => {
            let circle = ct == ConvType::MultiplicativeUnitary;
            let val = |x: f64| if circle { unit(x) } else { C64::new(x, 0.0) };
            let a = val(alpha);
            let w = sp.omega1(z.inv())?;
            Ok(thetas
                .iter()
                .map(|&t| {
                    let r = val(t) / a;
                    (1.0 - r) / (1.0 - a * w) + r
                })
                .collect())
        }
    }
}

pub fn pencil_limit_additive(sp: &SubordinationPair, thetas: &[f64], alpha: f64, z: C64) -> Result<Vec<C64>> {
    if sp.conv_type() != ConvType::AdditiveReal {
        return Err(Error::precondition("additive limit needs an additive pair"));
    }
    pencil_limit(sp, thetas, alpha, z)
}

pub fn pencil_limit_multiplicative(sp: &SubordinationPair, thetas: &[f64], alpha: f64, z: C64) -> Result<Vec<C64>> {
    if sp.conv_type() == ConvType::AdditiveReal {
        return Err(Error::precondition("multiplicative limit needs a multiplicative pair"));
    }
    pencil_limit(sp, thetas, alpha, z)
}

/// Deterministic limit of the projected resolvent with diagonal entries
/// `c`: `1/(ω₁(z) − c)` additively, `1/(1 − c·ω₁(1/z))` multiplicatively.
pub fn resolvent_limit(sp: &SubordinationPair, c: &[C64], z: C64) -> Result<Vec<C64>> {
    if sp.conv_type() == ConvType::AdditiveReal {
        let w = sp.omega1(z)?;
        Ok(c.iter().map(|&c| (w - c).inv()).collect())
    } else {
        let w = sp.omega1(z.inv())?;
        Ok(c.iter().map(|&c| (1.0 - c * w).inv()).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PencilStats {
    pub n: usize,
    pub trials: usize,
    /// `‖F_N(z) − F(z)‖` per trial.
    pub errors: Vec<f64>,
    pub mean_error: f64,
    /// Slots followed by the extra bulk indices.
    pub indices: Vec<usize>,
    /// Monte Carlo mean of the projected resolvent block, row-major.
    pub block_mean: Vec<C64>,
    pub block_limit: Vec<C64>,
    /// Largest entry of `block_mean − Diag(block_limit)`.
    pub block_error: f64,
}

/// Runs `trials` samples of `X_N′` and records both the pencil error and
/// the projected resolvent block over the slots plus `extra` indices.
pub fn pencil_trials(
    setup: &PencilSetup,
    sp: &SubordinationPair,
    z: C64,
    extra: &[usize],
    trials: u64,
) -> Result<PencilStats> {
    if sp.conv_type() != setup.model().conv_type() {
        return Err(Error::precondition("pair and model disagree"));
    }
    if trials == 0 {
        return Err(Error::precondition("need at least one trial"));
    }
    let n = setup.spec.n;
    if extra.iter().any(|i| *i >= n || setup.slots.contains(i)) {
        return Err(Error::precondition("extra indices must be in range and distinct from the slots"));
    }
    let indices: Vec<usize> = setup.slots.iter().chain(extra).copied().collect();
    let m = indices.len();
    let p = setup.slots.len();
    let limit = pencil_limit(sp, &setup.thetas, setup.alpha, z)?;
    let overrides = setup.overrides();
    let per: Vec<(f64, Mat<C64>, Vec<C64>)> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let s = sample_model(&setup.spec, t, &overrides)?;
            let block = checked_resolvent(&s.x, setup.model(), z, &indices)?;
            let sub = Mat::from_fn(p, p, |i, j| block[(i, j)]);
            let f = setup.from_block(&sub);
            let diff = Mat::from_fn(p, p, |i, j| if i == j { f[(i, j)] - limit[i] } else { f[(i, j)] });
            let c = indices.iter().map(|&i| s.a_diag[i]).collect();
            Ok((op_norm(&diff)?, block, c))
        })
        .collect::<Result<_>>()?;
    let mut mean = Mat::<C64>::zeros(m, m);
    for (_, b, _) in &per {
        mean += b;
    }
    let mean = mean * faer::Scale(C64::new(1.0 / trials as f64, 0.0));
    let block_limit = resolvent_limit(sp, &per[0].2, z)?;
    let mut block_error: f64 = 0.0;
    for i in 0..m {
        for j in 0..m {
            let want = if i == j { block_limit[i] } else { C64::new(0.0, 0.0) };
            block_error = block_error.max((mean[(i, j)] - want).norm());
        }
    }
    let errors: Vec<f64> = per.iter().map(|x| x.0).collect();
    Ok(PencilStats {
        n,
        trials: trials as usize,
        mean_error: errors.iter().sum::<f64>() / trials as f64,
        errors,
        indices,
        block_mean: (0..m).flat_map(|i| (0..m).map(move |j| (i, j))).map(|(i, j)| mean[(i, j)]).collect(),
        block_limit,
        block_error,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PencilZeros {
    /// Real zeros of `det F_N` inside the region.
    pub zeros: Vec<f64>,
    /// Eigenvalues of the spiked `X_N` inside the region.
    pub eigenvalues: Vec<f64>,
}

const ZERO_SCAN: usize = 400;

/// Zeros of `det F_N` on the real intervals `region` for one additive
/// trial, next to the eigenvalues of the spiked matrix sharing its `U`.
pub fn pencil_zeros_additive(setup: &PencilSetup, trial: u64, region: &[(f64, f64)]) -> Result<PencilZeros> {
    if setup.model() != Model::Additive {
        return Err(Error::precondition("det F_N zeros are implemented for the additive model"));
    }
    let inside = |x: f64| region.iter().any(|&(a, b)| x > a && x < b);
    let spiked = sample_model(&setup.spec, trial, &[])?;
    let eigenvalues: Vec<f64> = hermitian_eigenvalues(&spiked.x)?.into_iter().filter(|&x| inside(x)).collect();

    let s = sample_model(&setup.spec, trial, &setup.overrides())?;
    let eig = s
        .x
        .self_adjoint_eigen(faer::Side::Lower)
        .map_err(|e| Error::Numerical(format!("eigendecomposition failed: {e:?}")))?;
    let lambda: Vec<f64> = eig.S().column_vector().iter().map(|v| v.re).collect();
    let v = eig.U();
    let rows: Vec<Vec<C64>> = setup.slots.iter().map(|&s| (0..lambda.len()).map(|k| v[(s, k)]).collect()).collect();
    let p = setup.slots.len();
    let det = |x: f64| -> f64 {
        let mut f = Mat::<C64>::zeros(p, p);
        for i in 0..p {
            for j in 0..p {
                let m: C64 = (0..lambda.len()).map(|k| rows[i][k] * rows[j][k].conj() / (x - lambda[k])).sum();
                let d = if i == j { 1.0 } else { 0.0 };
                f[(i, j)] = d - m * (setup.thetas[j] - setup.alpha);
            }
        }
        f.determinant().re
    };

    let mut zeros = Vec::new();
    for &(a, b) in region {
        let mut cuts = vec![a];
        cuts.extend(lambda.iter().copied().filter(|&l| l > a && l < b));
        cuts.push(b);
        for w in cuts.windows(2) {
            let (lo, hi) = (w[0], w[1]);
            let xs: Vec<f64> = (0..ZERO_SCAN).map(|i| lo + (hi - lo) * (i as f64 + 0.5) / ZERO_SCAN as f64).collect();
            let vals: Vec<f64> = xs.iter().map(|&x| det(x)).collect();
            for i in 0..ZERO_SCAN - 1 {
                if vals[i] == 0.0 {
                    zeros.push(xs[i]);
                } else if vals[i].signum() != vals[i + 1].signum() && vals[i + 1] != 0.0 {
                    zeros.push(bisect(det, xs[i], xs[i + 1], vals[i]));
                }
            }
        }
    }
    zeros.sort_by(f64::total_cmp);
    Ok(PencilZeros { zeros, eigenvalues })
}

fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, flo: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= 1e-13 * mid.abs().max(1.0) {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return mid;
        }
        if fm.signum() == flo.signum() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InclusionReport {
    pub eps: f64,
    pub eta: f64,
    pub n: usize,
    pub trials: usize,
    pub contained: usize,
    pub fraction: f64,
    /// Largest distance of any eigenvalue from the support of `μ⊞ν`.
    pub max_distance: f64,
}

/// Diagonal whose entries lie within `eps` of `m`'s support: jittered
/// quantiles, with the first two pinned at distance exactly `eps` past
/// the support's ends.
fn perturbed_diagonal<R: Rng + ?Sized>(m: &Measure, n: usize, eps: f64, rng: &mut R) -> Vec<f64> {
    let supp = m.support();
    let mut d: Vec<f64> = (0..n)
        .map(|i| m.quantile((i as f64 + 0.5) / n as f64) + eps * (2.0 * rng.random::<f64>() - 1.0))
        .collect();
    if n >= 2 {
        d[0] = supp.lo().expect("nonempty support") - eps;
        d[1] = supp.hi().expect("nonempty support") + eps;
    }
    d
}

/// Builds `A_N`, `B_N` with spectra inside the `eps`-neighbourhoods of the
/// supports of `μ`, `ν` and checks `σ(A_N + U B_N U*) ⊂ Supp(μ⊞ν)_{2ε+η}`.
pub fn inclusion_experiment(
    sp: &SubordinationPair,
    eps: f64,
    eta: f64,
    n: usize,
    seed: u64,
    trials: u64,
) -> Result<InclusionReport> {
    if sp.conv_type() != ConvType::AdditiveReal {
        return Err(Error::precondition("the inclusion experiment is additive"));
    }
    if !(eps >= 0.0 && eta > 0.0) || n == 0 || trials == 0 {
        return Err(Error::precondition("need eps ≥ 0, eta > 0, n > 0 and trials > 0"));
    }
    let k = sp.support()?.clone();
    let dists: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = trial_rng(seed, t);
            let a = perturbed_diagonal(sp.mu(), n, eps, &mut rng);
            let b = perturbed_diagonal(sp.nu(), n, eps, &mut rng);
            let u = sample_haar_unitary(n, &mut rng);
            let ub = Mat::from_fn(n, n, |i, j| u[(i, j)] * b[j]);
            let mut x = &ub * u.adjoint();
            for i in 0..n {
                x[(i, i)] += a[i];
            }
            let ev = hermitian_eigenvalues(&x)?;
            Ok(ev.iter().map(|&e| k.distance(e)).fold(0.0, f64::max))
        })
        .collect::<Result<_>>()?;
    let contained = dists.iter().filter(|&&d| d <= 2.0 * eps + eta).count();
    Ok(InclusionReport {
        eps,
        eta,
        n,
        trials: trials as usize,
        contained,
        fraction: contained as f64 / trials as f64,
        max_distance: dists.iter().copied().fold(0.0, f64::max),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QseqCheck {
    pub n: usize,
    pub phi: usize,
    pub tv: f64,
    pub bound: f64,
    pub pass: bool,
}

/// Total variation between the quantile diagonal `D_N` of `base` and the
/// spiked `D̃_N` that puts `spikes[..phi]` in front and drops the last
/// `phi` quantiles, against `(φ−1)/N + φ/N`.
pub fn qseq_check(base: &Measure, spikes: &[f64], phi: usize, n: usize) -> Result<QseqCheck> {
    if phi > n || phi > spikes.len() || n == 0 {
        return Err(Error::precondition("need phi ≤ n and phi ≤ number of spikes"));
    }
    let alphas = quantile_diagonal(base, n);
    let d = Measure::empirical(base.carrier(), alphas.iter().copied())?;
    let dt = Measure::empirical(base.carrier(), spikes[..phi].iter().chain(&alphas[..n - phi]).copied())?;
    let tv = total_variation_distance(&d, &dt)?;
    let bound = if phi == 0 { 0.0 } else { (2 * phi - 1) as f64 / n as f64 };
    Ok(QseqCheck { n, phi, tv, bound, pass: tv <= bound })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// Asymptotic Kolmogorov tail `Q(λ) = 2 Σ (−1)^{k−1} e^{−2k²λ²}`.
fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let term = (-2.0 * (k * k) as f64 * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// One-sample Kolmogorov–Smirnov test against the uniform law on `[0, 1]`.
pub fn ks_uniform(samples: &[f64]) -> Result<KsResult> {
    if samples.is_empty() || samples.iter().any(|x| !(0.0..=1.0).contains(x)) {
        return Err(Error::precondition("KS test needs a nonempty sample in [0, 1]"));
    }
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let d = xs
        .iter()
        .enumerate()
        .map(|(i, &x)| ((i as f64 + 1.0) / n - x).max(x - i as f64 / n))
        .fold(0.0, f64::max);
    let sn = n.sqrt();
    Ok(KsResult { statistic: d, p_value: kolmogorov_q((sn + 0.12 + 0.11 / sn) * d) })
}

/// Chi-square test that two histograms over the same bins come from the
/// same law. Returns the p-value.
pub fn chi_square_homogeneity(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::precondition("need two histograms with the same bins (at least two)"));
    }
    let (na, nb) = (a.iter().sum::<usize>() as f64, b.iter().sum::<usize>() as f64);
    if na == 0.0 || nb == 0.0 {
        return Err(Error::precondition("empty histogram"));
    }
    let mut stat = 0.0;
    let mut bins = 0;
    for (&x, &y) in a.iter().zip(b) {
        let tot = (x + y) as f64;
        if tot == 0.0 {
            continue;
        }
        bins += 1;
        let ea = tot * na / (na + nb);
        let eb = tot * nb / (na + nb);
        stat += (x as f64 - ea).powi(2) / ea + (y as f64 - eb).powi(2) / eb;
    }
    if bins < 2 {
        return Err(Error::precondition("fewer than two occupied bins"));
    }
    let chi = ChiSquared::new((bins - 1) as f64).map_err(|e| Error::Numerical(e.to_string()))?;
    Ok(chi.sf(stat))
}

fn unitary_args(m: &Mat<C64>) -> Result<Vec<f64>> {
    let ev = m.eigenvalues().map_err(|e| Error::Numerical(format!("eigensolver failed: {e:?}")))?;
    Ok(ev.iter().map(|z| z.arg().rem_euclid(std::f64::consts::TAU) / std::f64::consts::TAU).collect())
}

/// KS test of the pooled eigenvalue arguments of `samples` Haar unitaries
/// of size `n` against the uniform law.
pub fn haar_argument_uniformity(n: usize, samples: u64, seed: u64) -> Result<KsResult> {
    let args: Vec<Vec<f64>> = (0..samples)
        .into_par_iter()
        .map(|t| unitary_args(&sample_haar_unitary(n, &mut trial_rng(seed, t))))
        .collect::<Result<_>>()?;
    ks_uniform(&args.concat())
}

/// Chi-square comparison of the pooled eigenvalue-argument histograms of
/// `U` and `V U′` with `V` a fixed unitary and `U`, `U′` independent.
pub fn haar_left_invariance(n: usize, samples: u64, seed: u64, bins: usize) -> Result<f64> {
    let v = sample_haar_unitary(n, &mut trial_rng(seed ^ 0x5eed, u64::MAX));
    let hist = |xs: &[f64]| {
        let mut h = vec![0usize; bins];
        for &x in xs {
            h[((x * bins as f64) as usize).min(bins - 1)] += 1;
        }
        h
    };
    let pooled = |shift: u64, left: Option<&Mat<C64>>| -> Result<Vec<f64>> {
        let parts: Vec<Vec<f64>> = (0..samples)
            .into_par_iter()
            .map(|t| {
                let u = sample_haar_unitary(n, &mut trial_rng(seed, shift + t));
                match left {
                    Some(v) => unitary_args(&(v * &u)),
                    None => unitary_args(&u),
                }
            })
            .collect::<Result<_>>()?;
        Ok(parts.concat())
    };
    let plain = pooled(0, None)?;
    let moved = pooled(samples, Some(&v))?;
    chi_square_homogeneity(&hist(&plain), &hist(&moved))
}

/// Fixed-width bins centred at `min + k·width`; every bin between the
/// smallest and largest value is listed, empty ones included.
pub fn histogram(xs: &[f64], width: f64) -> Result<Vec<(f64, usize)>> {
    if !(width > 0.0) {
        return Err(Error::precondition(format!("bin width must be positive, got {width}")));
    }
    if xs.is_empty() {
        return Ok(Vec::new());
    }
    if xs.iter().any(|x| !x.is_finite()) {
        return Err(Error::precondition("histogram input must be finite"));
    }
    let min = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let index = |x: f64| ((x - min) / width + 0.5).floor() as usize;
    let bins = index(max) + 1;
    if bins > 10_000_000 {
        return Err(Error::precondition("bin width too small for the data range"));
    }
    let mut counts = vec![0usize; bins];
    for &x in xs {
        counts[index(x)] += 1;
    }
    Ok(counts.into_iter().enumerate().map(|(k, c)| (min + k as f64 * width, c)).collect())
}

pub fn write_histogram_csv(bins: &[(f64, usize)], mut w: impl Write) -> Result<()> {
    writeln!(w, "bin_center,count")?;
    for (c, n) in bins {
        writeln!(w, "{c:e},{n}")?;
    }
    Ok(())
}

/// Quantile-bulk diagonal entries of `m` at size `n`, for building test inputs.
pub fn quantile_diagonal(m: &Measure, n: usize) -> Vec<f64> {
    (1..=n).map(|i| m.quantile((i as f64 - 0.5) / n as f64)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::Carrier;
    use crate::outliers::{predict_outliers, Growth, PredictionSide, SpikeSchedule};
    use crate::rmt::{run_trials, SideSpec};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn two_point() -> Measure {
        Measure::atomic(Carrier::Real, [(-3.0, 0.5), (3.0, 0.5)]).unwrap()
    }

    fn additive_spec(a_spikes: &[f64], n: usize) -> ModelSpec {
        let mu = two_point();
        let nu = Measure::semicircle(0.0, 2.0).unwrap();
        ModelSpec {
            model: Model::Additive,
            a_side: SideSpec::quantile(SpikeSchedule::new(a_spikes.to_vec(), Growth::All, mu).unwrap()),
            b_side: SideSpec::quantile(SpikeSchedule::without_spikes(nu)),
            n,
            seed: 11,
        }
    }

    fn random_hermitian(n: usize, rng: &mut ChaCha8Rng) -> Mat<C64> {
        let g = Mat::from_fn(n, n, |_, _| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
        Mat::from_fn(n, n, |i, j| g[(i, j)] + g[(j, i)].conj())
    }

    fn pred(rho: f64, window: f64, multiplicity: usize) -> OutlierPrediction {
        OutlierPrediction { rho, side: PredictionSide::A, sources: vec![0], sources_b: vec![], multiplicity, window }
    }

    #[test]
    fn window_counts() {
        assert_eq!(count_in_window(&[1.0, 2.0, 3.0], 2.0, 0.5), 1);
        assert_eq!(count_in_window(&[1.0, 2.0, 3.0], 10.0, 1.0), 0);
        // open window: endpoints excluded
        assert_eq!(count_in_window(&[1.0, 2.0, 3.0], 2.0, 1.0), 1);
        assert_eq!(count_in_window(&[1.0, 2.0, 3.0], 2.0, 0.0), 0);
        assert_eq!(count_in_arc(&[0.05, 6.25, 3.0], 0.0, 0.1), 2);
    }

    proptest! {
        #[test]
        fn window_monotone_and_additive(mut xs in prop::collection::vec(-10.0f64..10.0, 0..60), c in -10.0f64..10.0, h in 0.01f64..5.0, h2 in 0.01f64..5.0) {
            xs.sort_by(f64::total_cmp);
            let (lo, hi) = (h.min(h2), h.max(h2));
            prop_assert!(count_in_window(&xs, c, lo) <= count_in_window(&xs, c, hi));
            // (c-2h, c) and (c, c+2h) are disjoint pieces of (c-2h, c+2h) minus {c}
            let whole = count_in_window(&xs, c, 2.0 * h);
            let parts = count_in_window(&xs, c - h, h) + count_in_window(&xs, c + h, h);
            let at_c = xs.iter().filter(|&&x| x == c).count();
            prop_assert_eq!(whole, parts + at_c);
        }
    }

    #[test]
    fn histogram_examples() {
        assert_eq!(histogram(&[0.0, 0.0, 0.0], 1.0).unwrap(), vec![(0.0, 3)]);
        assert_eq!(histogram(&[0.0, 1.0, 2.0], 1.0).unwrap(), vec![(0.0, 1), (1.0, 1), (2.0, 1)]);
        let h = histogram(&[0.0, 0.4, 3.0], 1.0).unwrap();
        assert_eq!(h.iter().map(|b| b.1).sum::<usize>(), 3);
        assert_eq!(h.len(), 4);
        assert!(histogram(&[1.0], 0.0).is_err());
        let mut out = Vec::new();
        write_histogram_csv(&h, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.starts_with("bin_center,count\n"));
        assert_eq!(text.lines().count(), 5);
    }

    #[test]
    fn pseudospectrum_of_diagonal() {
        let a = Mat::from_fn(2, 2, |i, j| if i == j { C64::new(i as f64, 0.0) } else { C64::new(0.0, 0.0) });
        let s = pseudospectrum_hermitian(&a, 0.1).unwrap();
        assert_eq!(s.intervals().len(), 2);
        let (x, y) = s.intervals()[0];
        assert!((x + 0.1).abs() < 1e-15 && (y - 0.1).abs() < 1e-15);
        let (x, y) = s.intervals()[1];
        assert!((x - 0.9).abs() < 1e-15 && (y - 1.1).abs() < 1e-15);
        let tiny = pseudospectrum_hermitian(&a, 1e-14).unwrap();
        assert!(tiny.contains(0.0) && tiny.contains(1.0) && !tiny.contains(0.5));
        assert!(pseudospectrum_hermitian(&a, 0.0).is_err());
    }

    #[test]
    fn pseudospectrum_matches_singular_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let grid: Vec<f64> = (0..=400).map(|i| -4.0 + 0.02 * i as f64).collect();
        for _ in 0..5 {
            let a = random_hermitian(8, &mut rng);
            let check = pseudospectrum_grid_check(&a, 0.15, &grid).unwrap();
            assert!(check.pass(), "{:?}", check.mismatches);
        }
    }

    #[test]
    fn projection_bound() {
        let x0 = Mat::from_fn(2, 2, |i, j| if i == j { C64::new(i as f64, 0.0) } else { C64::new(0.0, 0.0) });
        let same = projection_perturbation_check(&x0, &x0, 0.5, 1.5, 0.3).unwrap();
        assert_eq!(same.lhs, 0.0);
        assert!(same.pass);
        let v = [C64::new(0.6, 0.0), C64::new(0.0, 0.8)];
        let x = Mat::from_fn(2, 2, |i, j| x0[(i, j)] + 0.01 * v[i] * v[j].conj());
        let c = projection_perturbation_check(&x, &x0, 0.5, 1.5, 0.3).unwrap();
        assert!(c.pass && c.lhs > 0.0, "{c:?}");
        // a guard-strip eigenvalue is rejected
        assert!(projection_perturbation_check(&x0, &x0, 1.0, 2.0, 0.3).is_err());
    }

    #[test]
    fn projection_bound_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut checked = 0;
        while checked < 20 {
            let x0 = random_hermitian(12, &mut rng);
            let e = random_hermitian(12, &mut rng);
            let x = &x0 + &(e * faer::Scale(C64::new(0.01, 0.0)));
            match projection_perturbation_check(&x, &x0, -0.5, 0.5, 0.1) {
                Ok(c) => {
                    assert!(c.pass, "{c:?}");
                    checked += 1;
                }
                Err(Error::Precondition(_)) => continue,
                Err(e) => panic!("{e}"),
            }
        }
    }

    #[test]
    fn weyl_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let a = random_hermitian(10, &mut rng);
            let e = random_hermitian(10, &mut rng) * faer::Scale(C64::new(0.1, 0.0));
            assert!(weyl_check(&a, &e).unwrap().pass);
        }
    }

    #[test]
    fn pencil_entry_is_one_when_theta_equals_alpha() {
        let sp = SubordinationPair::new(ConvType::AdditiveReal, two_point(), Measure::semicircle(0.0, 2.0).unwrap()).unwrap();
        let f = pencil_limit(&sp, &[3.0, 6.0], 3.0, C64::new(9.0, 0.1)).unwrap();
        assert!((f[0] - 1.0).norm() < 1e-15);
        let mp = SubordinationPair::new(
            ConvType::MultiplicativePositive,
            Measure::atomic(Carrier::Positive, [(1.0, 0.5), (2.0, 0.5)]).unwrap(),
            Measure::atomic(Carrier::Positive, [(0.5, 0.5), (1.5, 0.5)]).unwrap(),
        )
        .unwrap();
        let f = pencil_limit(&mp, &[2.0], 2.0, C64::new(9.0, 0.5)).unwrap();
        assert!((f[0] - 1.0).norm() < 1e-15);
    }

    #[test]
    fn pencil_limit_vanishes_at_outlier() {
        let sp = SubordinationPair::new(ConvType::AdditiveReal, two_point(), Measure::semicircle(0.0, 2.0).unwrap()).unwrap();
        let f = pencil_limit_additive(&sp, &[-5.0, 6.0], 3.0, C64::new(56.0 / 9.0, 0.0)).unwrap();
        assert!(f[1].norm() < 1e-9, "{f:?}");
        assert!(f[0].norm() > 0.1);
        let f = pencil_limit_additive(&sp, &[-5.0, 6.0], 3.0, C64::new(-85.0 / 16.0, 0.0)).unwrap();
        assert!(f[0].norm() < 1e-9, "{f:?}");
    }

    #[test]
    fn pencil_exact_without_free_part() {
        // With B = 0 (additive) or B = I (multiplicative) the finite pencil equals its limit.
        let mu = two_point();
        let spec = ModelSpec {
            model: Model::Additive,
            a_side: SideSpec::quantile(SpikeSchedule::new(vec![-5.0, 6.0], Growth::All, mu.clone()).unwrap()),
            b_side: SideSpec::quantile(SpikeSchedule::without_spikes(Measure::dirac(Carrier::Real, 0.0).unwrap())),
            n: 40,
            seed: 1,
        };
        let sp = SubordinationPair::new(ConvType::AdditiveReal, mu, Measure::dirac(Carrier::Real, 0.0).unwrap()).unwrap();
        let setup = PencilSetup::new(spec, 3.0, 0.05).unwrap();
        let z = C64::new(9.0, 0.1);
        let stats = pencil_trials(&setup, &sp, z, &[2, 39], 2).unwrap();
        assert!(stats.mean_error < 1e-12, "{stats:?}");
        assert!(stats.block_error < 1e-12, "{stats:?}");

        let a = Measure::atomic(Carrier::Positive, [(1.0, 0.5), (2.0, 0.5)]).unwrap();
        let one = Measure::dirac(Carrier::Positive, 1.0).unwrap();
        let spec = ModelSpec {
            model: Model::MultiplicativePositive,
            a_side: SideSpec::quantile(SpikeSchedule::new(vec![4.0], Growth::All, a.clone()).unwrap()),
            b_side: SideSpec::quantile(SpikeSchedule::without_spikes(one.clone())),
            n: 30,
            seed: 2,
        };
        let mp = SubordinationPair::new(ConvType::MultiplicativePositive, a, one).unwrap();
        let setup = PencilSetup::new(spec, 2.0, 0.05).unwrap();
        let stats = pencil_trials(&setup, &mp, C64::new(5.0, 0.5), &[1, 29], 2).unwrap();
        assert!(stats.mean_error < 1e-12, "{stats:?}");
        assert!(stats.block_error < 1e-12, "{stats:?}");
    }

    #[test]
    fn pencil_setup_checks() {
        assert!(PencilSetup::new(additive_spec(&[-5.0, 6.0], 50), 1.0, 0.05).is_err());
        assert!(PencilSetup::new(additive_spec(&[3.01], 50), 3.0, 0.05).is_err());
        let s = PencilSetup::new(additive_spec(&[-5.0, 3.01, 6.0], 50), 3.0, 0.05).unwrap();
        assert_eq!(s.slots, vec![0, 2]);
        assert_eq!(s.thetas, vec![-5.0, 6.0]);
    }

    #[test]
    fn pencil_zeros_are_outlier_eigenvalues() {
        let setup = PencilSetup::new(additive_spec(&[-5.0, 6.0], 300), 3.0, 0.05).unwrap();
        let sp = SubordinationPair::new(ConvType::AdditiveReal, two_point(), Measure::semicircle(0.0, 2.0).unwrap()).unwrap();
        let k = sp.support().unwrap().clone();
        let region = k.fattened(0.3).gaps_within(-20.0, 20.0);
        let z = pencil_zeros_additive(&setup, 0, &region).unwrap();
        assert_eq!(z.zeros.len(), z.eigenvalues.len(), "{z:?}");
        assert_eq!(z.zeros.len(), 2, "{z:?}");
        for (a, b) in z.zeros.iter().zip(&z.eigenvalues) {
            assert!((a - b).abs() < 1e-6, "{z:?}");
        }
        assert!((z.zeros[0] + 85.0 / 16.0).abs() < 0.3);
        assert!((z.zeros[1] - 56.0 / 9.0).abs() < 0.3);
    }

    #[test]
    fn inclusion_small() {
        let sp = SubordinationPair::new(ConvType::AdditiveReal, two_point(), Measure::semicircle(0.0, 2.0).unwrap()).unwrap();
        let r = inclusion_experiment(&sp, 0.1, 0.1, 200, 5, 3).unwrap();
        assert_eq!(r.contained, 3, "{r:?}");
        assert!(r.max_distance > 0.0);
    }

    #[test]
    fn qseq_bound_and_decay() {
        let base = Measure::semicircle(0.0, 2.0).unwrap();
        let spikes: Vec<f64> = (1..=100).map(|k| 2.0 + 10.0 / k as f64).collect();
        let mut last = f64::INFINITY;
        for n in [100, 400, 1600] {
            let phi = (n as f64).sqrt() as usize;
            let c = qseq_check(&base, &spikes, phi, n).unwrap();
            assert!(c.pass, "{c:?}");
            assert!(c.tv < last);
            last = c.tv;
        }
        assert_eq!(qseq_check(&base, &spikes, 0, 10).unwrap().tv, 0.0);
    }

    #[test]
    fn ks_and_chi_square() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let u: Vec<f64> = (0..2000).map(|_| rng.random::<f64>()).collect();
        assert!(ks_uniform(&u).unwrap().p_value > 0.01);
        let sq: Vec<f64> = u.iter().map(|x| x * x).collect();
        assert!(ks_uniform(&sq).unwrap().p_value < 1e-6);
        assert!((chi_square_homogeneity(&[10, 20, 30], &[10, 20, 30]).unwrap() - 1.0).abs() < 1e-12);
        assert!(chi_square_homogeneity(&[100, 0, 100], &[0, 100, 0]).unwrap() < 1e-10);
    }

    #[test]
    fn haar_statistics_small() {
        assert!(haar_argument_uniformity(16, 40, 1).unwrap().p_value > 0.01);
        assert!(haar_left_invariance(16, 40, 1, 16).unwrap() > 0.01);
    }

    #[test]
    fn verify_bookkeeping() {
        let spec = additive_spec(&[], 10);
        let run = SimulationRun {
            eigenvalues: Spectrum::Real(vec![-3.0, -2.9, 2.9, 3.0, 7.0, 7.01]),
            model_spec: spec,
            trial: 0,
            wall_time: 0.0,
        };
        let k = SupportSet::from_intervals([(-3.0, -2.9), (2.9, 3.0)]).unwrap();
        let r = verify_run(&run, &[pred(7.0, 0.5, 2)], &k, 0.3).unwrap();
        assert!(r.all_pass(), "{r:?}");
        assert_eq!(r.per_outlier[0].observed_count, 2);
        let r = verify_run(&run, &[pred(7.0, 0.5, 1)], &k, 0.3).unwrap();
        assert!(!r.per_outlier[0].pass);
        // nothing predicted: the pair at 7 escapes
        let r = verify_run(&run, &[], &k, 0.3).unwrap();
        assert_eq!(r.bulk_escapees, 2);
        assert!(matches!(verify_run(&run, &[pred(7.0, 0.5, 2), pred(7.5, 0.5, 0)], &k, 0.3), Err(Error::Config(_))));
        assert!(matches!(verify_run(&run, &[pred(7.0, 0.2, 2)], &k, 0.3), Err(Error::Config(_))));
    }

    #[test]
    fn no_spikes_no_escapees() {
        let nu = Measure::semicircle(0.0, 2.0).unwrap();
        let spec = ModelSpec {
            model: Model::Additive,
            a_side: SideSpec::quantile(SpikeSchedule::without_spikes(nu.clone())),
            b_side: SideSpec::quantile(SpikeSchedule::without_spikes(nu.clone())),
            n: 300,
            seed: 2,
        };
        let sp = SubordinationPair::new(ConvType::AdditiveReal, nu.clone(), nu.clone()).unwrap();
        let runs = run_trials(&spec, 4).unwrap();
        let preds = predict_outliers(&spec.a_side.schedule, &spec.b_side.schedule, &sp, 0.05).unwrap();
        assert!(preds.is_empty());
        let opts = VerifyOptions { escape_eps: 0.15, ..Default::default() };
        let r = verify_runs(&runs, &preds, sp.support().unwrap(), &opts).unwrap();
        assert_eq!(r.bulk_escapees, 0, "{r:?}");
    }
}
