use afcsim_core::analytics::*;
use afcsim_core::cavity::CavitySpec;
use afcsim_core::medium::*;
use afcsim_core::montecarlo::*;
use afcsim_core::propagation::*;

fn matched_setup(finesse: f64, shape: ToothShape, d: f64) -> StorageSetup {
    StorageSetup {
        comb: CombSpec {
            finesse,
            shape,
            ..CombSpec::default()
        }
        .with_effective_depth(d),
        cavity: CavitySpec {
            r_in: 0.97 * (-2.0 * d).exp(),
            r_out: 0.97,
            round_trip_loss: 0.0,
            ..CavitySpec::default()
        },
        pulse: PulseSpec {
            fwhm: 0.6,
            ..PulseSpec::default()
        },
        ..StorageSetup::default()
    }
}

#[test]
fn dephasing_factor_matches_propagation() {
    let d = 0.3;
    for shape in [ToothShape::Square, ToothShape::Gaussian] {
        for finesse in [3.0, 5.8, 10.0, 20.0] {
            let setup = matched_setup(finesse, shape, d);
            let sim = run_storage(&setup).unwrap().efficiency;
            let model = eta_cavity(&EfficiencyModel {
                d_tilde: d,
                r_out: 0.97,
                loss: 0.0,
                finesse,
                shape,
                background_od: 0.0,
            });
            assert!(
                (sim - model).abs() < 0.01,
                "{shape:?} F={finesse}: sim {sim} model {model}"
            );
        }
    }
}

#[test]
fn forward_echo_matches_single_pass_formula() {
    let setup = StorageSetup {
        comb: CombSpec {
            finesse: 10.0,
            ..CombSpec::default()
        }
        .with_effective_depth(1.0),
        pulse: PulseSpec {
            fwhm: 0.6,
            ..PulseSpec::default()
        },
        ..StorageSetup::default()
    };
    let sim = run_single_pass(&setup).unwrap().efficiency;
    let model = eta_forward(1.0, eta_dephasing(10.0, ToothShape::Square), 0.0);
    assert!((sim - model).abs() < 0.01, "sim {sim} model {model}");
}

#[test]
fn default_storage_run_is_consistent() {
    let r = run_storage(&StorageSetup::default()).unwrap();
    assert!(r.efficiency > 0.68 && r.efficiency < 0.74, "{}", r.efficiency);
    assert!(r.reflected_fraction < 0.02);
    let total: f64 = r.window_energies.iter().sum();
    assert!(total <= 0.33 * (1.0 + 1e-9));
    assert!((r.echo_times[0] - r.input_time - 2.0).abs() < 0.02);
}

#[test]
fn counting_emulation_recovers_simulated_efficiency() {
    let run = emulate_storage(&StorageSetup::default(), &CountingConfig::default(), 0.1).unwrap();
    assert!((run.estimate.eta - run.truth).abs() < 3.0 * run.estimate.sigma, "{:?} vs {}", run.estimate, run.truth);
    assert!(run.estimate.sigma < 0.02);
    assert_eq!(run.reference.n_trials, 60_000);
}

#[test]
fn two_percent_echo_is_resolved_in_ten_minutes() {
    let cfg = CountingConfig {
        measurement_duration: 600.0,
        ..CountingConfig::default()
    };
    let edges = [0.0, 2.0, 70.0, 72.0];
    let reference =
        run_counting(&edges, &[0.33 * 0.40, 0.0, 0.0], &cfg, HistogramTag::Reference).unwrap();
    let memory = run_counting(&edges, &[0.0, 0.0, 0.33 * 0.02], &cfg, HistogramTag::Memory).unwrap();
    let est = estimate_efficiency(&reference, &memory, (0.0, 2.0), (70.0, 72.0), &cfg).unwrap();
    assert!(est.eta > 3.0 * est.sigma, "{est:?}");
    assert!((est.eta - 0.02).abs() < 3.0 * est.sigma);
}
