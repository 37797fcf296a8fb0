use proptest::prelude::*;
use spinsync::diagnostics::{Engine, PhaseLabel};
use spinsync::fss::{collapse_objective, fit_collapse, logistic, synthetic_dataset, FitOptions, ScalingDataset};
use spinsync::sweep::{arnold_tongue, SweepSpec};
use spinsync::ModelParams;

fn sso(n: usize) -> ModelParams {
    ModelParams::with_detuning(0.0, 0.0, 0.0, 1.0, 2.0, n).unwrap()
}

#[test]
fn fit_survives_a_csv_round_trip() {
    let eps: Vec<f64> = (0..21).map(|i| 1.6 + 0.04 * i as f64).collect();
    let data = synthetic_dataset((2.0, 1.6, 0.5), &[20, 40, 80], &eps, logistic, 0.02, 9).unwrap();
    let back = ScalingDataset::from_csv(&data.to_csv()).unwrap();
    let opts = FitOptions {
        bootstrap: 8,
        ..FitOptions::default()
    };
    assert_eq!(fit_collapse(&data, &opts).unwrap(), fit_collapse(&back, &opts).unwrap());
}

#[test]
fn sweep_spec_json_round_trip_and_strict_fields() {
    let spec = SweepSpec::square(sso(1), Engine::MeanField, (0.5, 3.0), (-1.0, 1.0), 3);
    let text = serde_json::to_string(&spec).unwrap();
    let back: SweepSpec = serde_json::from_str(&text).unwrap();
    assert_eq!(serde_json::to_value(&back).unwrap(), serde_json::to_value(&spec).unwrap());
    let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
    v["unexpected"] = 1.into();
    assert!(serde_json::from_value::<SweepSpec>(v).is_err());
}

#[test]
fn resonant_column_of_a_small_map_matches_the_threshold() {
    let mut spec = SweepSpec::square(sso(1), Engine::MeanField, (1.0, 3.0), (-1.0, 1.0), 3);
    spec.detuning_grid = vec![0.0];
    let map = arnold_tongue(&spec).unwrap();
    let labels: Vec<_> = map.records.iter().map(|r| r.label).collect();
    assert_eq!(labels.len(), 3);
    assert_eq!(labels[0], Some(PhaseLabel::QsI));
    assert_eq!(labels[2], Some(PhaseLabel::Btc));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn noise_free_objective_is_minimal_at_the_truth(
        eps_c in 1.5..2.5f64, nu in 1.0..2.5f64, beta in 0.2..0.8f64, shift in 0.05..0.3f64,
    ) {
        let eps: Vec<f64> = (0..61).map(|i| eps_c - 0.6 + 0.02 * i as f64).collect();
        let data = synthetic_dataset((eps_c, nu, beta), &[20, 40, 80, 160], &eps, logistic, 0.0, 0).unwrap();
        let at_truth = collapse_objective(&data, eps_c, nu, beta).unwrap();
        // Only the local-line interpolation error remains at the truth.
        prop_assert!(at_truth < 1e-3, "{at_truth:e}");
        prop_assert!(collapse_objective(&data, eps_c + shift, nu, beta).unwrap() > at_truth);
        prop_assert!(collapse_objective(&data, eps_c, nu, beta + shift).unwrap() > at_truth);
    }

    #[test]
    fn dataset_csv_round_trip_is_lossless(seed in 0u64..1000, noise in 0.0..0.1f64) {
        let eps: Vec<f64> = (0..6).map(|i| 1.8 + 0.1 * i as f64).collect();
        let data = synthetic_dataset((2.0, 1.7, 0.5), &[10, 20, 40], &eps, logistic, noise, seed).unwrap();
        prop_assert_eq!(ScalingDataset::from_csv(&data.to_csv()).unwrap(), data);
    }
}
