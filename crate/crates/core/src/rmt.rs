//! Finite-size samples of the three unitarily invariant models:
//! `A + U B U*`, `A^{1/2} U B U* A^{1/2}` and `A U B U*`.

use std::io::Write;
use std::time::Instant;

use faer::linalg::solvers::Solve;
use faer::Mat;
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::freeconv::ConvType;
use crate::measures::{unit, Carrier, MeasureKind};
use crate::outliers::SpikeSchedule;

/// Modulus tolerance for eigenvalues of the unitary model.
pub const UNIT_SPECTRUM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Model {
    Additive,
    MultiplicativePositive,
    MultiplicativeUnitary,
}

impl Model {
    pub fn conv_type(self) -> ConvType {
        match self {
            Model::Additive => ConvType::AdditiveReal,
            Model::MultiplicativePositive => ConvType::MultiplicativePositive,
            Model::MultiplicativeUnitary => ConvType::MultiplicativeUnitary,
        }
    }

    pub fn is_unitary(self) -> bool {
        self == Model::MultiplicativeUnitary
    }
}

/// How the non-spike part of a side is filled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BulkMode {
    /// Deterministic `(i - ½)/m` quantiles of the base measure.
    #[default]
    Quantile,
    /// A GUE block with the base semicircle's center and radius.
    Gue,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SideSpec {
    #[serde(flatten)]
    pub schedule: SpikeSchedule,
    #[serde(default)]
    pub bulk: BulkMode,
}

impl SideSpec {
    pub fn quantile(schedule: SpikeSchedule) -> Self {
        SideSpec { schedule, bulk: BulkMode::Quantile }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub model: Model,
    pub a_side: SideSpec,
    pub b_side: SideSpec,
    pub n: usize,
    pub seed: u64,
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::precondition("matrix size must be positive"));
        }
        let want = match self.model {
            Model::Additive => None,
            Model::MultiplicativePositive => Some(Carrier::Positive),
            Model::MultiplicativeUnitary => Some(Carrier::Circle),
        };
        for (name, side) in [("A", &self.a_side), ("B", &self.b_side)] {
            side.schedule.validate()?;
            let carrier = side.schedule.base_measure.carrier();
            let ok = match want {
                Some(c) => carrier == c,
                None => carrier != Carrier::Circle,
            };
            if !ok {
                return Err(Error::precondition(format!("{name} side carrier {carrier:?} does not fit {:?}", self.model)));
            }
            if side.bulk == BulkMode::Gue {
                if self.model != Model::Additive {
                    return Err(Error::precondition("GUE bulk is only available in the additive model"));
                }
                if !matches!(side.schedule.base_measure.kind(), MeasureKind::Semicircle { .. }) {
                    return Err(Error::precondition("GUE bulk needs a semicircle base measure"));
                }
            }
            let raw = side.schedule.growth.raw(self.n).min(side.schedule.spikes.len());
            if raw > self.n {
                return Err(Error::precondition(format!("{raw} spikes do not fit in size {}", self.n)));
            }
        }
        Ok(())
    }
}

/// Sorted eigenvalues: ascending reals, or unit complex numbers by argument.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Spectrum {
    Real(Vec<f64>),
    Unit(Vec<C64>),
}

impl Spectrum {
    pub fn len(&self) -> usize {
        match self {
            Spectrum::Real(v) => v.len(),
            Spectrum::Unit(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Real eigenvalues, or arguments in `[0, 2π)` for unit spectra.
    pub fn coordinates(&self) -> Vec<f64> {
        match self {
            Spectrum::Real(v) => v.clone(),
            Spectrum::Unit(v) => v.iter().map(|z| z.arg().rem_euclid(std::f64::consts::TAU)).collect(),
        }
    }

    pub fn as_real(&self) -> Option<&[f64]> {
        match self {
            Spectrum::Real(v) => Some(v),
            Spectrum::Unit(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationRun {
    pub eigenvalues: Spectrum,
    pub model_spec: ModelSpec,
    pub trial: u64,
    pub wall_time: f64,
}

impl SimulationRun {
    /// CSV with header `eigenvalue`; unit spectra are written as arguments.
    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "eigenvalue")?;
        for x in self.eigenvalues.coordinates() {
            writeln!(w, "{x:e}")?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

/// Independent stream per `(seed, trial)`.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// Haar unitary from the QR factorization of a complex Ginibre matrix,
/// with each column of `Q` multiplied by the phase of `R`'s diagonal entry.
pub fn sample_haar_unitary<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Mat<C64> {
    assert!(n >= 1, "matrix size must be positive");
    let g = Mat::from_fn(n, n, |_, _| C64::new(normal(rng), normal(rng)));
    let qr = g.qr();
    let mut q = qr.compute_Q();
    let r = qr.R();
    for k in 0..n {
        let d = r[(k, k)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { C64::new(1.0, 0.0) };
        for i in 0..n {
            q[(i, k)] *= phase;
        }
    }
    q
}

/// Hermitian GUE matrix with entry variance `1/n` (semicircle on `[-2, 2]`).
pub fn sample_gue_bulk<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Mat<C64> {
    let sd = (1.0 / n as f64).sqrt();
    let off = (0.5 / n as f64).sqrt();
    let mut h = Mat::<C64>::zeros(n, n);
    for j in 0..n {
        h[(j, j)] = C64::new(sd * normal(rng), 0.0);
        for i in j + 1..n {
            let v = C64::new(off * normal(rng), off * normal(rng));
            h[(i, j)] = v;
            h[(j, i)] = v.conj();
        }
    }
    h
}

/// Diagonal entries: the first `φ(n)` are spikes, the rest deterministic
/// quantiles of the base measure (arguments on the circle).
pub fn build_spiked_diagonal(sched: &SpikeSchedule, n: usize) -> Result<Vec<f64>> {
    let raw = sched.growth.raw(n).min(sched.spikes.len());
    if raw > n {
        return Err(Error::precondition(format!("{raw} spikes do not fit in size {n}")));
    }
    let m = n - raw;
    let mut d = sched.spikes[..raw].to_vec();
    d.extend((1..=m).map(|i| sched.base_measure.quantile((i as f64 - 0.5) / m as f64)));
    Ok(d)
}

/// One side of the model as a matrix.
enum SideMatrix {
    Diagonal(Vec<C64>),
    Dense(Mat<C64>),
}

fn side_matrix<R: Rng + ?Sized>(side: &SideSpec, n: usize, circle: bool, rng: &mut R) -> Result<SideMatrix> {
    match side.bulk {
        BulkMode::Quantile => {
            let d = build_spiked_diagonal(&side.schedule, n)?;
            Ok(SideMatrix::Diagonal(
                d.into_iter().map(|x| if circle { unit(x) } else { C64::new(x, 0.0) }).collect(),
            ))
        }
        BulkMode::Gue => {
            let MeasureKind::Semicircle { center, radius } = *side.schedule.base_measure.kind() else {
                return Err(Error::precondition("GUE bulk needs a semicircle base measure"));
            };
            let p = side.schedule.count(n);
            let w = sample_gue_bulk(n - p, rng);
            let mut b = Mat::<C64>::zeros(n, n);
            for (i, &t) in side.schedule.spikes[..p].iter().enumerate() {
                b[(i, i)] = C64::new(t, 0.0);
            }
            for j in 0..n - p {
                for i in 0..n - p {
                    b[(p + i, p + j)] = w[(i, j)] * (radius / 2.0);
                }
                b[(p + j, p + j)] += center;
            }
            Ok(SideMatrix::Dense(b))
        }
    }
}

/// A sampled model matrix together with the A-side diagonal used.
pub struct ModelSample {
    pub a_diag: Vec<C64>,
    pub x: Mat<C64>,
}

/// Samples `X_N` for one trial. `a_overrides` replaces A-side diagonal
/// entries (index, value) before assembly; used to build `X_N′`.
pub fn sample_model(spec: &ModelSpec, trial: u64, a_overrides: &[(usize, f64)]) -> Result<ModelSample> {
    spec.validate()?;
    let n = spec.n;
    let circle = spec.model.is_unitary();
    let mut rng = trial_rng(spec.seed, trial);
    let a = side_matrix(&spec.a_side, n, circle, &mut rng)?;
    let b = side_matrix(&spec.b_side, n, circle, &mut rng)?;
    let u = sample_haar_unitary(n, &mut rng);
    let SideMatrix::Diagonal(mut a_diag) = a else {
        // GUE on the A side: the matrix stays dense.
        return sample_dense_a(spec, a, b, u, a_overrides);
    };
    for &(i, v) in a_overrides {
        a_diag[i] = if circle { unit(v) } else { C64::new(v, 0.0) };
    }
    let m = conjugate(&u, &b);
    let x = match spec.model {
        Model::Additive => {
            let mut x = m;
            for i in 0..n {
                x[(i, i)] += a_diag[i];
            }
            x
        }
        Model::MultiplicativePositive => {
            let s: Vec<f64> = a_diag.iter().map(|v| v.re.max(0.0).sqrt()).collect();
            Mat::from_fn(n, n, |i, j| m[(i, j)] * (s[i] * s[j]))
        }
        Model::MultiplicativeUnitary => Mat::from_fn(n, n, |i, j| a_diag[i] * m[(i, j)]),
    };
    Ok(ModelSample { a_diag, x })
}

fn sample_dense_a(
    spec: &ModelSpec,
    a: SideMatrix,
    b: SideMatrix,
    u: Mat<C64>,
    a_overrides: &[(usize, f64)],
) -> Result<ModelSample> {
    let SideMatrix::Dense(mut a) = a else { unreachable!("called for dense A") };
    for &(i, v) in a_overrides {
        a[(i, i)] = C64::new(v, 0.0);
    }
    let a_diag = (0..spec.n).map(|i| a[(i, i)]).collect();
    let x = &a + &conjugate(&u, &b);
    Ok(ModelSample { a_diag, x })
}

/// `U B U*`.
fn conjugate(u: &Mat<C64>, b: &SideMatrix) -> Mat<C64> {
    let n = u.nrows();
    match b {
        SideMatrix::Diagonal(d) => {
            let ub = Mat::from_fn(n, n, |i, j| u[(i, j)] * d[j]);
            &ub * u.adjoint()
        }
        SideMatrix::Dense(b) => &(u * b) * u.adjoint(),
    }
}

/// Eigenvalues of a Hermitian matrix, ascending.
pub fn hermitian_eigenvalues(x: &Mat<C64>) -> Result<Vec<f64>> {
    x.self_adjoint_eigenvalues(faer::Side::Lower)
        .map_err(|e| Error::Numerical(format!("Hermitian eigensolver failed: {e:?}")))
}

fn spectrum_of(model: Model, x: &Mat<C64>) -> Result<Spectrum> {
    if model.is_unitary() {
        let mut ev = x
            .eigenvalues()
            .map_err(|e| Error::Numerical(format!("eigensolver failed: {e:?}")))?;
        if let Some(bad) = ev.iter().find(|z| (z.norm() - 1.0).abs() > UNIT_SPECTRUM_TOL) {
            return Err(Error::Numerical(format!("eigenvalue {bad} is off the unit circle")));
        }
        let key = |z: &C64| z.arg().rem_euclid(std::f64::consts::TAU);
        ev.sort_by(|a, b| key(a).total_cmp(&key(b)));
        Ok(Spectrum::Unit(ev))
    } else {
        Ok(Spectrum::Real(hermitian_eigenvalues(x)?))
    }
}

/// One trial of the model, with the trial's own random stream.
pub fn run_trial(spec: &ModelSpec, trial: u64) -> Result<SimulationRun> {
    let t = Instant::now();
    let s = sample_model(spec, trial, &[])?;
    let eigenvalues = spectrum_of(spec.model, &s.x)?;
    Ok(SimulationRun { eigenvalues, model_spec: spec.clone(), trial, wall_time: t.elapsed().as_secs_f64() })
}

pub fn run_model(spec: &ModelSpec) -> Result<SimulationRun> {
    run_trial(spec, 0)
}

/// Trials `0..trials`, in parallel, returned in trial order.
pub fn run_trials(spec: &ModelSpec, trials: u64) -> Result<Vec<SimulationRun>> {
    (0..trials).into_par_iter().map(|t| run_trial(spec, t)).collect()
}

/// Rows and columns `indices` of `(zI - X)^{-1}`, times `z` for the
/// multiplicative models.
pub fn projected_resolvent(x: &Mat<C64>, model: Model, z: C64, indices: &[usize]) -> Result<Mat<C64>> {
    let n = x.nrows();
    let m = Mat::from_fn(n, n, |i, j| if i == j { z - x[(i, j)] } else { -x[(i, j)] });
    let rhs = Mat::from_fn(n, indices.len(), |i, k| if i == indices[k] { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) });
    let sol = m.partial_piv_lu().solve(&rhs);
    if !sol.col_iter().all(|c| c.iter().all(|v| v.is_finite())) {
        return Err(Error::Numerical(format!("resolvent is singular at z = {z}")));
    }
    let scale = if model == Model::Additive { C64::new(1.0, 0.0) } else { z };
    Ok(Mat::from_fn(indices.len(), indices.len(), |i, j| sol[(indices[i], j)] * scale))
}

/// Monte Carlo mean of the top-left `p × p` block of the resolvent
/// (`z` times the resolvent for multiplicative models).
pub fn expected_projected_resolvent(spec: &ModelSpec, z: C64, p: usize, trials: u64) -> Result<Mat<C64>> {
    if z.im == 0.0 && !spec.model.is_unitary() {
        return Err(Error::precondition("z must be off the real axis"));
    }
    if p > spec.n || trials == 0 {
        return Err(Error::precondition("need p ≤ n and at least one trial"));
    }
    let idx: Vec<usize> = (0..p).collect();
    let blocks: Vec<Mat<C64>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let s = sample_model(spec, t, &[])?;
            projected_resolvent(&s.x, spec.model, z, &idx)
        })
        .collect::<Result<_>>()?;
    let mut mean = Mat::<C64>::zeros(p, p);
    for b in &blocks {
        mean += b;
    }
    Ok(mean * faer::Scale(C64::new(1.0 / trials as f64, 0.0)))
}
