//! Photon-counting emulation of the efficiency measurement: alternating
//! blocked-cavity reference cycles and memory cycles, Poissonian detection
//! with dark counts, and the normalized efficiency estimator.

use crate::cavity::cavity_reflection;
use crate::error::{Error, Result};
use crate::medium::{single_pass_transfer, AbsorptionProfile};
use crate::propagation::{propagate, PulseEnvelope, StorageSetup};
use crate::timebin::FringeScan;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Optical depth used to emulate the blocked cavity of the reference cycles.
pub const BLOCKING_OD: f64 = 60.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CountingConfig {
    pub pulses_per_cycle: u64,
    /// Cryostat cycles per second (Hz).
    pub cycle_rate: f64,
    /// Total run time (s); cycles alternate between reference and memory.
    pub measurement_duration: f64,
    /// Detector dark-count rate (Hz).
    pub dark_rate: f64,
    /// Width of the input and echo windows (µs).
    pub detection_window: f64,
    /// Fraction of the input reflected by the blocked cavity.
    pub reference_reflectivity: f64,
    pub detector_efficiency: f64,
    pub rng_seed: u64,
}

impl Default for CountingConfig {
    fn default() -> Self {
        Self {
            pulses_per_cycle: 1000,
            cycle_rate: 1.0,
            measurement_duration: 120.0,
            dark_rate: 25.0,
            detection_window: 2.0,
            reference_reflectivity: 0.40,
            detector_efficiency: 1.0,
            rng_seed: 0,
        }
    }
}

impl CountingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.cycle_rate.is_finite() && self.cycle_rate >= 0.0) {
            return Err(Error::invalid("cycle_rate", "must be finite and >= 0"));
        }
        if !(self.measurement_duration.is_finite() && self.measurement_duration >= 0.0) {
            return Err(Error::invalid("measurement_duration", "must be finite and >= 0"));
        }
        if !(self.dark_rate.is_finite() && self.dark_rate >= 0.0) {
            return Err(Error::invalid("dark_rate", "must be finite and >= 0"));
        }
        if !(self.detection_window.is_finite() && self.detection_window > 0.0) {
            return Err(Error::invalid("detection_window", "must be positive"));
        }
        if !(self.reference_reflectivity > 0.0 && self.reference_reflectivity <= 1.0) {
            return Err(Error::invalid("reference_reflectivity", "must lie in (0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.detector_efficiency) {
            return Err(Error::invalid("detector_efficiency", "must lie in [0, 1]"));
        }
        Ok(())
    }

    /// Cycles given to each of the two alternating cycle types.
    pub fn cycles_per_tag(&self) -> u64 {
        (self.cycle_rate * self.measurement_duration / 2.0).round() as u64
    }

    pub fn trials_per_tag(&self) -> u64 {
        self.cycles_per_tag() * self.pulses_per_cycle
    }

    /// Expected dark counts per trial in a window of `width` µs.
    pub fn dark_per_trial(&self, width: f64) -> f64 {
        self.dark_rate * width * 1e-6
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HistogramTag {
    Reference,
    Memory,
    FringePoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountHistogram {
    /// Bin edges (µs), one more than the number of bins.
    pub bin_edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub n_trials: u64,
    pub tag: HistogramTag,
}

impl CountHistogram {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Counts and covered width of the bins whose centers fall in `[start, end)`.
    pub fn counts_between(&self, start: f64, end: f64) -> (u64, f64) {
        let mut counts = 0;
        let mut width = 0.0;
        for (k, c) in self.counts.iter().enumerate() {
            let (a, b) = (self.bin_edges[k], self.bin_edges[k + 1]);
            let mid = 0.5 * (a + b);
            if mid >= start && mid < end {
                counts += c;
                width += b - a;
            }
        }
        (counts, width)
    }
}

/// `n` equal bins covering `[start, end)`.
pub fn uniform_edges(start: f64, end: f64, n: usize) -> Vec<f64> {
    (0..=n)
        .map(|k| start + (end - start) * k as f64 / n as f64)
        .collect()
}

/// Photon number per trial in each histogram bin of `trace`.
pub fn binned_photons(trace: &PulseEnvelope, edges: &[f64]) -> Vec<f64> {
    edges
        .windows(2)
        .map(|w| trace.energy_between(w[0], w[1]))
        .collect()
}

fn stream_id(tag: HistogramTag, point: u64, cycle: u64) -> u64 {
    let t = match tag {
        HistogramTag::Reference => 0,
        HistogramTag::Memory => 1,
        HistogramTag::FringePoint => 2,
    };
    (t << 62) | (point << 32) | cycle
}

fn poisson(rng: &mut ChaCha8Rng, mean: f64) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).map(|d| d.sample(rng) as u64).unwrap_or(0)
}

/// Draw counts for `cycles` cycles of `pulses_per_cycle` trials, one random
/// stream per `(seed, tag, point, cycle)` so results do not depend on the
/// number of worker threads.
fn draw(
    means_per_trial: &[f64],
    cycles: u64,
    cfg: &CountingConfig,
    tag: HistogramTag,
    point: u64,
) -> Vec<u64> {
    let per_cycle: Vec<f64> = means_per_trial
        .iter()
        .map(|m| m * cfg.pulses_per_cycle as f64)
        .collect();
    (0..cycles)
        .into_par_iter()
        .map(|cycle| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
            rng.set_stream(stream_id(tag, point, cycle));
            per_cycle.iter().map(|&m| poisson(&mut rng, m)).collect::<Vec<u64>>()
        })
        .reduce(
            || vec![0; per_cycle.len()],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += y;
                }
                a
            },
        )
}

fn check_bins(edges: &[f64], photons: &[f64]) -> Result<()> {
    if edges.len() != photons.len() + 1 {
        return Err(Error::invalid("bin_edges", "need one more edge than bins"));
    }
    if edges.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::invalid("bin_edges", "must be strictly increasing"));
    }
    if photons.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
        return Err(Error::invalid("photons", "must be finite and >= 0"));
    }
    Ok(())
}

/// Histogram of detections for one cycle type: per trial and bin, counts are
/// Poissonian with mean `photons × detector_efficiency + dark_rate × width`.
pub fn run_counting(
    edges: &[f64],
    photons: &[f64],
    cfg: &CountingConfig,
    tag: HistogramTag,
) -> Result<CountHistogram> {
    cfg.validate()?;
    check_bins(edges, photons)?;
    let means: Vec<f64> = photons
        .iter()
        .zip(edges.windows(2))
        .map(|(p, w)| p * cfg.detector_efficiency + cfg.dark_per_trial(w[1] - w[0]))
        .collect();
    Ok(CountHistogram {
        bin_edges: edges.to_vec(),
        counts: draw(&means, cfg.cycles_per_tag(), cfg, tag, 0),
        n_trials: cfg.trials_per_tag(),
        tag,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyEstimate {
    pub eta: f64,
    pub sigma: f64,
    pub n_trials: u64,
    pub seed: u64,
}

/// `η = (echo − dark) / ((reference − dark) / R_ref)` with Poisson error
/// propagation, the observed counts standing in for their variances.
///
/// `input_window` and `echo_window` are `[start, end)` ranges (µs) on the
/// reference and memory histograms respectively.
pub fn estimate_efficiency(
    reference: &CountHistogram,
    memory: &CountHistogram,
    input_window: (f64, f64),
    echo_window: (f64, f64),
    cfg: &CountingConfig,
) -> Result<EfficiencyEstimate> {
    cfg.validate()?;
    let (c_ref, w_ref) = reference.counts_between(input_window.0, input_window.1);
    let (c_mem, w_mem) = memory.counts_between(echo_window.0, echo_window.1);
    let dark_ref = cfg.dark_per_trial(w_ref) * reference.n_trials as f64;
    let dark_mem = cfg.dark_per_trial(w_mem) * memory.n_trials as f64;
    let s_ref = (c_ref as f64 - dark_ref) / reference.n_trials.max(1) as f64;
    let s_mem = (c_mem as f64 - dark_mem) / memory.n_trials.max(1) as f64;
    if reference.n_trials == 0 || !(s_ref > 0.0) {
        return Err(Error::ZeroReferenceCounts);
    }
    let r = cfg.reference_reflectivity;
    let eta = s_mem * r / s_ref;
    let var_mem = c_mem as f64 / (memory.n_trials.max(1) as f64).powi(2);
    let var_ref = c_ref as f64 / (reference.n_trials as f64).powi(2);
    let sigma = ((r / s_ref).powi(2) * var_mem + (eta / s_ref).powi(2) * var_ref).sqrt();
    Ok(EfficiencyEstimate {
        eta,
        sigma,
        n_trials: memory.n_trials,
        seed: cfg.rng_seed,
    })
}

/// Output of the blocked cavity: only the input-mirror reflection returns.
pub fn blocked_reference(setup: &StorageSetup) -> Result<(PulseEnvelope, PulseEnvelope)> {
    let grid = setup.grid()?;
    let input = setup.input_pulse(&grid)?;
    let blocked = single_pass_transfer(&AbsorptionProfile::flat(grid, BLOCKING_OD)?)?;
    let output = propagate(&input, &cavity_reflection(&blocked, &setup.cavity)?)?;
    Ok((input, output))
}

/// Reference and memory histograms plus the efficiency estimate for one
/// storage configuration. Bins of width `bin_width` (µs) span the trace from
/// the start to one window past the first echo.
pub struct CountingRun {
    pub reference: CountHistogram,
    pub memory: CountHistogram,
    pub estimate: EfficiencyEstimate,
    /// Noiseless efficiency of the simulated trace in the same windows.
    pub truth: f64,
}

pub fn emulate_storage(
    setup: &StorageSetup,
    cfg: &CountingConfig,
    bin_width: f64,
) -> Result<CountingRun> {
    if !(bin_width > 0.0) {
        return Err(Error::invalid("bin_width", "must be positive"));
    }
    let memory_run = crate::propagation::run_storage(setup)?;
    let (_, reference_trace) = blocked_reference(setup)?;
    let t0 = memory_run.input_time;
    let tau = setup.comb.storage_time();
    let half = 0.5 * cfg.detection_window;
    let end = t0 + tau + 2.0 * half;
    let n_bins = (end / bin_width).ceil() as usize;
    let edges = uniform_edges(0.0, n_bins as f64 * bin_width, n_bins);
    let reference = run_counting(
        &edges,
        &binned_photons(&reference_trace, &edges),
        cfg,
        HistogramTag::Reference,
    )?;
    let memory = run_counting(
        &edges,
        &binned_photons(&memory_run.output_trace, &edges),
        cfg,
        HistogramTag::Memory,
    )?;
    let input_window = (t0 - half, t0 + half);
    let echo_window = (t0 + tau - half, t0 + tau + half);
    let estimate = estimate_efficiency(&reference, &memory, input_window, echo_window, cfg)?;
    let reflected = reference_trace.window_energy(t0, cfg.detection_window);
    let truth = memory_run.output_trace.window_energy(t0 + tau, cfg.detection_window)
        * cfg.reference_reflectivity
        / reflected;
    Ok(CountingRun {
        reference,
        memory,
        estimate,
        truth,
    })
}

/// Detection probability per trial at each fringe point with standard errors.
///
/// With `trials_per_point = None` the analytic means are returned (zero
/// error) and the fit is unweighted; otherwise counts are Poisson-sampled on
/// independent per-point streams and the fit is weighted by `1/σ²`.
pub fn fringe_counts(
    scan: &FringeScan,
    cfg: &CountingConfig,
    trials_per_point: Option<u64>,
) -> Result<FringeScan> {
    cfg.validate()?;
    let dark = cfg.dark_per_trial(cfg.detection_window);
    let means: Vec<f64> = scan
        .p_detect
        .iter()
        .map(|p| p * cfg.detector_efficiency + dark)
        .collect();
    let Some(trials) = trials_per_point else {
        let fit = crate::timebin::fit_fringe(&scan.phases, &means, None)?;
        return Ok(FringeScan {
            phases: scan.phases.clone(),
            shifts: scan.shifts.clone(),
            stderr: vec![0.0; means.len()],
            p_detect: means,
            visibility: fit.visibility.min(1.0),
            phase_offset: fit.phase_offset,
            visibility_stderr: fit.visibility_stderr,
        });
    };
    if trials == 0 {
        return Err(Error::invalid("trials_per_point", "must be positive"));
    }
    let cycles = trials.div_ceil(cfg.pulses_per_cycle.max(1));
    let per_cycle_cfg = CountingConfig {
        pulses_per_cycle: trials / cycles,
        ..*cfg
    };
    let n = per_cycle_cfg.pulses_per_cycle * cycles;
    let (p, s): (Vec<f64>, Vec<f64>) = means
        .iter()
        .enumerate()
        .map(|(k, &m)| {
            let c = draw(&[m], cycles, &per_cycle_cfg, HistogramTag::FringePoint, k as u64)[0] as f64;
            // one pseudo-count keeps the weight finite at zero counts
            (c / n as f64, c.max(1.0).sqrt() / n as f64)
        })
        .unzip();
    scan.refit(p, s)
}
