use std::path::PathBuf;

use spikelab::cli::{Experiment, RunOptions};
use spikelab::freeconv::Side;
use spikelab::measures::unit;
use spikelab::outliers::PredictionSide;
use spikelab::rmt::{sample_model, Spectrum};

fn experiment(name: &str, trials: u64) -> Experiment {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name);
    Experiment::load(&path, &RunOptions { trials: Some(trials), quiet: true, ..Default::default() }).unwrap()
}

#[test]
fn positive_model_end_to_end() {
    let exp = experiment("positive.json", 6);
    let set = exp.predictions(None).unwrap();
    assert_eq!(set.predictions.len(), 3);
    let sp = exp.config.pair().unwrap();
    let k = sp.support().unwrap();
    // v_k(ρ) = ω_k(1/ρ) hits the spike that produced ρ
    for p in &set.predictions {
        let (side, spikes) = match p.side {
            PredictionSide::A => (Side::A, exp.config.a_schedule().unwrap().spikes),
            PredictionSide::B => (Side::B, exp.config.b_schedule().unwrap().spikes),
            PredictionSide::AB => unreachable!("no coincident spikes here"),
        };
        let v = sp.v_boundary_real(side, p.rho, k).unwrap();
        assert!((v - 1.0 / spikes[p.sources[0]]).abs() < 1e-6, "{p:?} {v}");
    }
    let r = exp.verify_at(1000).unwrap();
    assert!(r.all_pass(), "{r:?}");
    // eigenvalues of A^{1/2} U B U* A^{1/2} are nonnegative
    let s = sample_model(&exp.config.model_spec(200).unwrap(), 0, &[]).unwrap();
    let ev = spikelab::rmt::hermitian_eigenvalues(&s.x).unwrap();
    assert!(ev[0] > -1e-10);
}

#[test]
fn unitary_model_end_to_end() {
    let exp = experiment("unitary.json", 6);
    let set = exp.predictions(None).unwrap();
    assert_eq!(set.predictions.len(), 2);
    let r = exp.verify_at(400).unwrap();
    assert!(r.all_pass(), "{r:?}");
    let runs = spikelab::rmt::run_trials(&exp.config.model_spec(300).unwrap(), 2).unwrap();
    for run in &runs {
        let Spectrum::Unit(eigs) = &run.eigenvalues else { panic!("unit spectrum expected") };
        assert!(eigs.iter().all(|e| (e.norm() - 1.0).abs() < 1e-9));
        // every predicted outlier has an eigenvalue nearby on the circle
        for p in &set.predictions {
            let near = eigs.iter().any(|&e| (e - unit(p.rho)).norm() < 0.05);
            assert!(near, "no eigenvalue near {}", p.rho);
        }
    }
}

#[test]
fn additive_sweep_passes_at_the_largest_size() {
    let tmp = tempfile::tempdir().unwrap();
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/sweep.json");
    let opts = RunOptions { trials: Some(4), quiet: true, out: Some(tmp.path().to_path_buf()), ..Default::default() };
    let reports = Experiment::load(&path, &opts).unwrap().sweep().unwrap();
    assert!(tmp.path().join("sweep.csv").exists() && tmp.path().join("sweep.json").exists());
    assert_eq!(reports.iter().map(|r| r.n).collect::<Vec<_>>(), vec![200, 500, 1000]);
    assert!(reports.last().unwrap().all_pass());
}
