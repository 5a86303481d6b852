//! The `predict`, `simulate`, `verify` and `sweep` commands.
//!
//! Exit codes: 0 pass, 1 verification failure, 2 configuration error,
//! 3 solver failure, 4 numerical failure.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::analysis::{histogram, verify_runs, write_histogram_csv, VerificationReport};
use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::measures::SupportSet;
use crate::outliers::{predict_outliers_with, OutlierPrediction};
use crate::rmt::{run_trials, Model};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

pub fn exit_code(e: &Error) -> i32 {
    match e {
        e if e.is_solver_failure() => EXIT_SOLVER,
        Error::Numerical(_) => EXIT_NUMERICAL,
        _ => EXIT_CONFIG,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Predict,
    Simulate,
    Verify,
    Sweep,
}

/// Command-line overrides of the configuration.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub trials: Option<u64>,
    pub quiet: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PredictionSet {
    pub model: Model,
    pub n: Option<usize>,
    pub support: SupportSet,
    pub predictions: Vec<OutlierPrediction>,
}

#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub out_dir: PathBuf,
    pub quiet: bool,
}

impl Experiment {
    pub fn new(mut config: ExperimentConfig, opts: &RunOptions) -> Result<Self> {
        if let Some(s) = opts.seed {
            config.seed = s;
        }
        if let Some(t) = opts.trials {
            config.trials = t;
        }
        config.validate()?;
        let out_dir = opts.out.clone().unwrap_or_else(|| config.output_dir.clone());
        Ok(Experiment { config, out_dir, quiet: opts.quiet })
    }

    pub fn load(path: &Path, opts: &RunOptions) -> Result<Self> {
        Self::new(ExperimentConfig::load(path)?, opts)
    }

    fn log(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("{}", msg.as_ref());
        }
    }

    fn largest(&self) -> usize {
        *self.config.sizes.last().expect("validated nonempty")
    }

    /// Predictions from the spikes present at size `n` (all spikes if `None`).
    pub fn predictions(&self, n: Option<usize>) -> Result<PredictionSet> {
        let sp = self.config.pair()?;
        let predictions = predict_outliers_with(
            &self.config.a_schedule()?,
            &self.config.b_schedule()?,
            &sp,
            &self.config.predict_options(n),
        )?;
        Ok(PredictionSet { model: self.config.model, n, support: sp.support()?.clone(), predictions })
    }

    fn ensure_out_dir(&self) -> Result<()> {
        fs::create_dir_all(&self.out_dir)
            .map_err(|e| Error::Config(format!("cannot create {}: {e}", self.out_dir.display())))
    }

    /// Writes `eigs_n{N}_t{t}.csv` and `hist_n{N}_t{t}.csv` for every size
    /// and trial; returns the paths written.
    pub fn simulate(&self) -> Result<Vec<PathBuf>> {
        self.ensure_out_dir()?;
        let mut written = Vec::new();
        for &n in &self.config.sizes {
            self.log(format!("simulating n = {n}, {} trials", self.config.trials));
            let runs = run_trials(&self.config.model_spec(n)?, self.config.trials)?;
            for run in &runs {
                let eigs = self.out_dir.join(format!("eigs_n{n}_t{}.csv", run.trial));
                let mut w = BufWriter::new(File::create(&eigs)?);
                run.write_csv(&mut w)?;
                w.flush()?;
                let hist = self.out_dir.join(format!("hist_n{n}_t{}.csv", run.trial));
                let mut w = BufWriter::new(File::create(&hist)?);
                write_histogram_csv(&histogram(&run.eigenvalues.coordinates(), self.config.bin_width())?, &mut w)?;
                w.flush()?;
                written.push(eigs);
                written.push(hist);
            }
        }
        Ok(written)
    }

    /// Simulates size `n` and checks the predictions (plus any extra ones).
    pub fn verify_at(&self, n: usize) -> Result<VerificationReport> {
        let set = self.predictions(Some(n))?;
        let mut preds = set.predictions;
        preds.extend(self.config.extra_predictions.iter().cloned());
        self.log(format!("verifying n = {n}: {} predictions, {} trials", preds.len(), self.config.trials));
        let runs = run_trials(&self.config.model_spec(n)?, self.config.trials)?;
        verify_runs(&runs, &preds, &set.support, &self.config.verify_options())
    }

    pub fn verify(&self) -> Result<VerificationReport> {
        self.ensure_out_dir()?;
        let n = self.largest();
        let report = self.verify_at(n)?;
        write_json(&self.out_dir.join(format!("verify_n{n}.json")), &report)?;
        Ok(report)
    }

    /// Verification at every size, with a summary table `sweep.csv`.
    pub fn sweep(&self) -> Result<Vec<VerificationReport>> {
        self.ensure_out_dir()?;
        let reports = self.config.sizes.iter().map(|&n| self.verify_at(n)).collect::<Result<Vec<_>>>()?;
        let mut w = BufWriter::new(File::create(self.out_dir.join("sweep.csv"))?);
        writeln!(w, "n,trials,pass_fraction,inclusion_fraction,bulk_escapees,outliers_pass")?;
        for r in &reports {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                r.n,
                r.trials,
                r.pass_fraction,
                r.inclusion_fraction,
                r.bulk_escapees,
                r.outliers_pass()
            )?;
        }
        w.flush()?;
        write_json(&self.out_dir.join("sweep.json"), &reports)?;
        Ok(reports)
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

/// Runs one command, printing JSON to `stdout` and diagnostics to stderr.
/// Returns the process exit code.
pub fn run(cmd: Command, config: &Path, opts: &RunOptions, stdout: &mut dyn Write) -> i32 {
    match execute(cmd, config, opts, stdout) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn execute(cmd: Command, config: &Path, opts: &RunOptions, stdout: &mut dyn Write) -> Result<i32> {
    let exp = Experiment::load(config, opts)?;
    let code = match cmd {
        Command::Predict => {
            let set = exp.predictions(Some(exp.largest()))?;
            if let Some(dir) = &opts.out {
                fs::create_dir_all(dir)?;
                write_json(&dir.join("predictions.json"), &set)?;
            }
            serde_json::to_writer_pretty(&mut *stdout, &set)?;
            EXIT_PASS
        }
        Command::Simulate => {
            let files = exp.simulate()?;
            serde_json::to_writer_pretty(&mut *stdout, &files)?;
            EXIT_PASS
        }
        Command::Verify => {
            let report = exp.verify()?;
            serde_json::to_writer_pretty(&mut *stdout, &report)?;
            if report.all_pass() {
                EXIT_PASS
            } else {
                EXIT_FAIL
            }
        }
        Command::Sweep => {
            let reports = exp.sweep()?;
            serde_json::to_writer_pretty(&mut *stdout, &reports)?;
            if reports.last().is_some_and(|r| r.all_pass()) {
                EXIT_PASS
            } else {
                EXIT_FAIL
            }
        }
    };
    writeln!(stdout)?;
    Ok(code)
}
