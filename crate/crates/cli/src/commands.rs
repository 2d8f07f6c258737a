//! Subcommand implementations. Each writes its files into the output
//! directory and returns the written paths.

use crate::config::{MonteCarloTarget, RunConfig};
use crate::output::{write_file, write_json, Csv};
use crate::CliError;
use afcsim_core::analytics::{eta_dephasing, fit_decay, optimize_depth};
use afcsim_core::cavity::{cavity_transmission, check_impedance, resonance_linewidth};
use afcsim_core::medium::{build_comb_profile, single_pass_transfer, CombSpec, FrequencyGrid};
use afcsim_core::montecarlo::{emulate_storage, fringe_counts, CountHistogram};
use afcsim_core::propagation::{
    gaussian_bandwidth, run_storage, scan_bandwidth, scan_storage_time, PulseSpec, StorageSetup,
};
use afcsim_core::timebin::{
    balance_analyzer, fidelity_report, fringe_scan, period_shifts, pole_fidelity, FringeScan,
};
use serde::Serialize;
use std::path::PathBuf;

#[derive(Serialize)]
struct StorageSummary {
    eta: f64,
    reflected_fraction: f64,
    echo_time_us: Option<f64>,
    input_time_us: f64,
}

pub fn storage(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let r = run_storage(&cfg.storage_setup())?;
    let mut csv = Csv::new(&["time_us", "intensity"]);
    for (t, i) in r.output_trace.times().zip(r.output_trace.intensity()) {
        csv.row(&[t, i]);
    }
    let dir = &cfg.output_dir;
    let summary = StorageSummary {
        eta: r.efficiency,
        reflected_fraction: r.reflected_fraction,
        echo_time_us: r.echo_times.first().copied(),
        input_time_us: r.input_time,
    };
    Ok(vec![
        write_file(dir, "storage_trace.csv", csv.as_str())?,
        write_json(dir, "storage_summary.json", &summary)?,
    ])
}

pub fn scan_storage_time_cmd(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let points = scan_storage_time(&cfg.storage_setup(), &cfg.scan.storage_times, cfg.scan.t2_eff)?;
    let data: Vec<(f64, f64)> = points.iter().map(|p| (p.tau, p.eta_cavity)).collect();
    // without decay there is nothing to fit; the column is left as nan
    let fit = fit_decay(&data).ok();
    let mut csv = Csv::new(&["tau_us", "eta_cavity", "eta_single_pass", "eta_fit"]);
    for p in &points {
        let eta_fit = fit.map(|f| f.eval(p.tau)).unwrap_or(f64::NAN);
        csv.row(&[p.tau, p.eta_cavity, p.eta_single_pass, eta_fit]);
    }
    Ok(vec![write_file(&cfg.output_dir, "storage_time.csv", csv.as_str())?])
}

pub fn scan_bandwidth_cmd(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    // the time-bandwidth relation is its own inverse
    let fwhms: Vec<f64> = cfg.scan.bandwidths.iter().map(|&b| gaussian_bandwidth(b)).collect();
    let points = scan_bandwidth(&cfg.storage_setup(), &fwhms, cfg.scan.reference_fwhm)?;
    let mut csv = Csv::new(&["bandwidth_MHz", "eta"]);
    for p in &points {
        csv.row(&[p.bandwidth, p.efficiency]);
    }
    Ok(vec![write_file(&cfg.output_dir, "bandwidth.csv", csv.as_str())?])
}

#[derive(Serialize)]
struct OptimizeSummary {
    d_tilde_star: f64,
    eta_star: f64,
    eta_deph: f64,
    matched_residual: f64,
    r_in_matched: f64,
    degenerate: bool,
}

pub fn optimize_comb(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let cav = &cfg.cavity;
    let comb = &cfg.comb;
    let best = optimize_depth(cav.r_out, cav.round_trip_loss, comb.finesse, comb.shape);
    let summary = OptimizeSummary {
        d_tilde_star: best.d_tilde,
        eta_star: best.eta,
        eta_deph: eta_dephasing(comb.finesse, comb.shape),
        matched_residual: check_impedance(cav.r_in, cav.r_out, cav.round_trip_loss, best.d_tilde),
        r_in_matched: (cav.r_out - cav.round_trip_loss) * (-2.0 * best.d_tilde).exp(),
        degenerate: best.degenerate,
    };
    Ok(vec![write_json(&cfg.output_dir, "optimize_comb.json", &summary)?])
}

#[derive(Serialize)]
struct StateSummary {
    delta_deg: f64,
    visibility: f64,
    visibility_stderr: f64,
    phase_offset_rad: f64,
}

#[derive(Serialize)]
struct FidelitySummary {
    states: Vec<StateSummary>,
    v_coh: f64,
    f_coh: f64,
    f_pole: f64,
    f_total: f64,
    f_threshold: f64,
    passes_quantum_bound: bool,
    memory_efficiency: f64,
    mean_photon_number: f64,
    analyzer_peak_od: f64,
}

/// Efficiency of the memory for a single bin-shaped pulse.
fn qubit_memory_efficiency(cfg: &RunConfig, memory: &StorageSetup) -> Result<f64, CliError> {
    if let Some(e) = cfg.qubit.efficiency {
        return Ok(e);
    }
    let q = cfg.qubit(0.0);
    let setup = StorageSetup {
        pulse: PulseSpec {
            fwhm: q.pulse_fwhm,
            center: q.early_time,
            mean_photon_number: q.mean_photon_number,
            carrier_detuning: 0.0,
        },
        window: q.bin_separation,
        ..*memory
    };
    Ok(run_storage(&setup)?.efficiency)
}

/// Noiseless fringes for every configured input phase, optionally replaced
/// by sampled counts.
fn fringes(cfg: &RunConfig, sampled: bool) -> Result<Vec<PathBuf>, CliError> {
    let setup = cfg.qubit_setup()?;
    let grid = setup.grid()?;
    let filter = balance_analyzer(&setup.filter, &setup.qubit)?;
    let memory = setup.memory_transfer(&grid)?;
    let shifts = period_shifts(filter.tooth_spacing, cfg.qubit.phase_points);
    let dir = &cfg.output_dir;
    let mut paths = Vec::new();
    let mut states = Vec::new();
    for &deg in &cfg.qubit.phases_deg {
        let q = cfg.qubit(deg.to_radians());
        let mut scan: FringeScan =
            fringe_scan(&q, &memory, setup.memory_delay(), &filter, &shifts, setup.window)?;
        if sampled {
            let mut counting = cfg.montecarlo.counting;
            counting.detection_window = setup.window;
            scan = fringe_counts(&scan, &counting, Some(cfg.montecarlo.trials_per_point))?;
        }
        let mut csv = Csv::new(&["phase_rad", "p_detect", "stderr"]);
        for k in 0..scan.phases.len() {
            csv.row(&[scan.phases[k], scan.p_detect[k], scan.stderr[k]]);
        }
        paths.push(write_file(dir, &format!("fringe_delta_{deg}.csv"), csv.as_str())?);
        states.push(StateSummary {
            delta_deg: deg,
            visibility: scan.visibility,
            visibility_stderr: scan.visibility_stderr,
            phase_offset_rad: scan.phase_offset,
        });
    }
    let v_coh = states.iter().map(|s| s.visibility).sum::<f64>() / states.len() as f64;
    let pole = pole_fidelity(
        &setup.qubit,
        &memory,
        setup.memory_delay(),
        cfg.qubit.noise_per_window,
    )?;
    let eta = qubit_memory_efficiency(cfg, &setup.memory)?;
    let mu = cfg.qubit.mean_photon_number;
    let report = fidelity_report(v_coh, pole.average, mu, eta)?;
    let summary = FidelitySummary {
        states,
        v_coh: report.v_coh,
        f_coh: report.f_coh,
        f_pole: report.f_pole,
        f_total: report.f_total,
        f_threshold: report.f_threshold,
        passes_quantum_bound: report.passes_quantum_bound,
        memory_efficiency: eta,
        mean_photon_number: mu,
        analyzer_peak_od: filter.peak_od,
    };
    let name = if sampled { "montecarlo_fidelity.json" } else { "fidelity.json" };
    paths.push(write_json(dir, name, &summary)?);
    Ok(paths)
}

pub fn qubit_fringe(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    fringes(cfg, false)
}

#[derive(Serialize)]
struct LinewidthSummary {
    #[serde(rename = "fwhm_MHz")]
    fwhm_mhz: f64,
    group_delay_us: f64,
    #[serde(rename = "effective_fsr_MHz")]
    effective_fsr_mhz: f64,
    finesse: f64,
    #[serde(rename = "resonance_frequency_MHz")]
    resonance_frequency_mhz: f64,
}

/// Transmission linewidth of the cavity containing the spectral pit, before
/// the comb is prepared. The grid covers at least one free spectral range.
pub fn linewidth(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let comb = CombSpec {
        peak_od: 0.0,
        ..cfg.comb
    };
    let span = cfg.span.max(cfg.cavity.free_spectral_range());
    let grid = FrequencyGrid::with_max_spacing(span, comb.max_grid_spacing())?;
    let h = single_pass_transfer(&build_comb_profile(&comb, &grid)?)?;
    let report = resonance_linewidth(&cavity_transmission(&h, &cfg.cavity)?)?;
    let summary = LinewidthSummary {
        fwhm_mhz: report.fwhm,
        group_delay_us: report.group_delay_at_center,
        effective_fsr_mhz: report.effective_fsr,
        finesse: report.finesse(),
        resonance_frequency_mhz: report.resonance_frequency,
    };
    Ok(vec![write_json(&cfg.output_dir, "linewidth.json", &summary)?])
}

#[derive(Serialize)]
struct EstimateSummary {
    eta: f64,
    sigma: f64,
    n_trials: u64,
    seed: u64,
    truth: f64,
}

fn histogram_csv(h: &CountHistogram) -> String {
    let mut csv = Csv::new(&["time_us", "counts"]);
    for (k, &c) in h.counts.iter().enumerate() {
        csv.row(&[h.bin_edges[k], c as f64]);
    }
    csv.as_str().to_string()
}

pub fn montecarlo(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    match cfg.montecarlo.target {
        MonteCarloTarget::QubitFringe => fringes(cfg, true),
        MonteCarloTarget::Storage => {
            let run = emulate_storage(
                &cfg.storage_setup(),
                &cfg.montecarlo.counting,
                cfg.montecarlo.bin_width,
            )?;
            let dir = &cfg.output_dir;
            let summary = EstimateSummary {
                eta: run.estimate.eta,
                sigma: run.estimate.sigma,
                n_trials: run.estimate.n_trials,
                seed: run.estimate.seed,
                truth: run.truth,
            };
            Ok(vec![
                write_file(dir, "reference_histogram.csv", &histogram_csv(&run.reference))?,
                write_file(dir, "memory_histogram.csv", &histogram_csv(&run.memory))?,
                write_json(dir, "montecarlo_estimate.json", &summary)?,
            ])
        }
    }
}
