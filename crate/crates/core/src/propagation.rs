//! Pulse envelopes, FFT transport through transfer functions and windowed
//! echo-efficiency evaluation.

use crate::analytics::{decay_factor, impedance_matched_depth};
use crate::cavity::{cavity_reflection, CavitySpec};
use crate::error::{Error, Result};
use crate::fourier::{spectrum_to_time, time_to_spectrum};
use crate::medium::{build_comb_profile, single_pass_transfer, CombSpec, FrequencyGrid, TransferFunction};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::{LN_2, PI};

/// Echo peaks weaker than this fraction of the input peak intensity are ignored.
pub const ECHO_THRESHOLD: f64 = 1e-3;

/// Pulses must stay this many intensity standard deviations away from both
/// ends of the time window.
pub const PULSE_MARGIN_SIGMAS: f64 = 5.0;

/// Spectral intensity FWHM (MHz) of a transform-limited Gaussian with temporal
/// intensity FWHM `fwhm` (µs).
pub fn gaussian_bandwidth(fwhm: f64) -> f64 {
    2.0 * LN_2 / (PI * fwhm)
}

/// Complex field envelope sampled at `t_j = j dt` on the time grid conjugate
/// to a [`FrequencyGrid`]. `|E|²` is a photon flux (photons/µs).
#[derive(Debug, Clone, PartialEq)]
pub struct PulseEnvelope {
    grid: FrequencyGrid,
    values: Vec<Complex64>,
}

impl PulseEnvelope {
    pub fn new(grid: FrequencyGrid, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} samples for a grid of {}",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: FrequencyGrid) -> Self {
        Self {
            values: vec![Complex64::new(0.0, 0.0); grid.len()],
            grid,
        }
    }

    pub fn grid(&self) -> &FrequencyGrid {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dt(&self) -> f64 {
        self.grid.dt()
    }

    pub fn time(&self, j: usize) -> f64 {
        j as f64 * self.dt()
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len()).map(move |j| self.time(j))
    }

    pub fn intensity(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.norm_sqr()).collect()
    }

    /// `Σ |E|² dt`, the mean photon number carried by the envelope.
    pub fn mean_photon_number(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum::<f64>() * self.dt()
    }

    /// Photon number in the half-open interval `[start, end)`.
    pub fn energy_between(&self, start: f64, end: f64) -> f64 {
        let dt = self.dt();
        let lo = (start / dt).ceil().max(0.0) as usize;
        let hi = ((end / dt).ceil().max(0.0) as usize).min(self.len());
        if lo >= hi {
            return 0.0;
        }
        self.values[lo..hi].iter().map(|v| v.norm_sqr()).sum::<f64>() * dt
    }

    /// Photon number in a window of full width `width` centered on `center`.
    pub fn window_energy(&self, center: f64, width: f64) -> f64 {
        self.energy_between(center - 0.5 * width, center + 0.5 * width)
    }

    pub fn scaled(&self, factor: Complex64) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|v| v * factor).collect(),
        }
    }

    pub fn add(&self, other: &PulseEnvelope) -> Result<Self> {
        if !self.grid.same_as(&other.grid) {
            return Err(Error::GridMismatch("pulses live on different grids".into()));
        }
        Ok(Self {
            grid: self.grid,
            values: self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect(),
        })
    }

    /// Grid-ordered spectrum `S(f) = Σ E(t) e^{i2πft} dt`.
    pub fn spectrum(&self) -> Vec<Complex64> {
        time_to_spectrum(&self.values, self.dt())
    }

    /// Time of maximum intensity inside `[start, end)`, refined by a parabola
    /// through the three samples around the discrete maximum. `None` when the
    /// maximum sits on the interval edge or the interval is empty.
    pub fn peak_in(&self, start: f64, end: f64) -> Option<(f64, f64)> {
        let dt = self.dt();
        let lo = (start / dt).ceil().max(0.0) as usize;
        let hi = ((end / dt).ceil().max(0.0) as usize).min(self.len());
        if hi < lo + 3 {
            return None;
        }
        let (j, peak) = (lo..hi)
            .map(|j| (j, self.values[j].norm_sqr()))
            .max_by(|a, b| a.1.total_cmp(&b.1))?;
        if j == lo || j + 1 == hi {
            return None;
        }
        let (a, b, c) = (
            self.values[j - 1].norm_sqr(),
            peak,
            self.values[j + 1].norm_sqr(),
        );
        let denom = a - 2.0 * b + c;
        let shift = if denom < 0.0 { 0.5 * (a - c) / denom } else { 0.0 };
        Some(((j as f64 + shift) * dt, peak))
    }

    /// Time of the global intensity maximum.
    pub fn peak_time(&self) -> f64 {
        let n = self.len();
        let (j, _) = self
            .values
            .iter()
            .enumerate()
            .map(|(j, v)| (j, v.norm_sqr()))
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap_or((0, 0.0));
        if j == 0 || j + 1 == n {
            return self.time(j);
        }
        self.peak_in(self.time(j - 1), self.time(j + 2))
            .map(|p| p.0)
            .unwrap_or(self.time(j))
    }
}

/// Gaussian pulse with intensity FWHM `fwhm` (µs) centered at `center` (µs),
/// normalized to `mean_photon_number` and detuned by `carrier_detuning` (MHz).
pub fn make_gaussian_pulse(
    fwhm: f64,
    center: f64,
    mean_photon_number: f64,
    carrier_detuning: f64,
    grid: &FrequencyGrid,
) -> Result<PulseEnvelope> {
    if !(fwhm.is_finite() && fwhm > 0.0) {
        return Err(Error::invalid("fwhm", "must be positive"));
    }
    if !(mean_photon_number.is_finite() && mean_photon_number >= 0.0) {
        return Err(Error::invalid("mean_photon_number", "must be finite and >= 0"));
    }
    if !carrier_detuning.is_finite() {
        return Err(Error::invalid("carrier_detuning", "must be finite"));
    }
    let dt = grid.dt();
    if fwhm < 4.0 * dt {
        return Err(Error::PulseClipped(format!(
            "FWHM {fwhm} µs is shorter than four time samples ({} µs)",
            4.0 * dt
        )));
    }
    let sigma = fwhm / (2.0 * (2.0 * LN_2).sqrt());
    let margin = PULSE_MARGIN_SIGMAS * sigma;
    let window = grid.time_window();
    if center - margin < 0.0 || center + margin > window {
        return Err(Error::PulseClipped(format!(
            "pulse at {center} µs needs [{}, {}] µs inside [0, {window}] µs",
            center - margin,
            center + margin
        )));
    }
    let mut values: Vec<Complex64> = (0..grid.len())
        .map(|j| {
            let t = j as f64 * dt;
            let x = (t - center) / sigma;
            Complex64::from_polar((-0.25 * x * x).exp(), -2.0 * PI * carrier_detuning * t)
        })
        .collect();
    let norm = values.iter().map(|v| v.norm_sqr()).sum::<f64>() * dt;
    let scale = (mean_photon_number / norm).sqrt();
    for v in &mut values {
        *v *= scale;
    }
    PulseEnvelope::new(*grid, values)
}

/// Linear transport: `IFFT(FFT(pulse) · H)`.
///
/// The transfer function must be expressed relative to the pulse carrier, i.e.
/// its grid must be centered on zero frequency.
pub fn propagate(pulse: &PulseEnvelope, tf: &TransferFunction) -> Result<PulseEnvelope> {
    if !pulse.grid().same_as(tf.grid()) {
        return Err(Error::GridMismatch(
            "pulse and transfer function are not FFT-conjugate".into(),
        ));
    }
    if tf.grid().center() != 0.0 {
        return Err(Error::GridMismatch(format!(
            "transfer function grid is centered at {} MHz, expected the carrier",
            tf.grid().center()
        )));
    }
    let mut spectrum = pulse.spectrum();
    for (s, h) in spectrum.iter_mut().zip(tf.values()) {
        *s *= h;
    }
    PulseEnvelope::new(*pulse.grid(), spectrum_to_time(&spectrum, pulse.grid().df()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct StorageResult {
    pub output_trace: PulseEnvelope,
    /// Echo-window energy over input energy.
    pub efficiency: f64,
    /// Energy in the input window over input energy.
    pub reflected_fraction: f64,
    /// Peak times (µs) of echoes found near multiples of the storage time.
    pub echo_times: Vec<f64>,
    /// Photon numbers in the windows at `t0 + kτ`, `k = 0, 1, ...`.
    pub window_energies: Vec<f64>,
    /// Peak time of the input pulse (µs).
    pub input_time: f64,
}

/// Windowed energies of `output` relative to `input`.
///
/// The reflection window is centered on the input peak `t0`, the k-th echo
/// window on `t0 + kτ`; windows are collected while they fit in the trace.
pub fn storage_efficiency(
    input: &PulseEnvelope,
    output: &PulseEnvelope,
    tau: f64,
    window: f64,
) -> Result<StorageResult> {
    if !(window.is_finite() && window > 0.0) {
        return Err(Error::invalid("window", "must be positive"));
    }
    if !(tau.is_finite() && tau >= window) {
        return Err(Error::OverlappingWindows { tau, window });
    }
    if !input.grid().same_as(output.grid()) {
        return Err(Error::GridMismatch("input and output traces differ in grid".into()));
    }
    let input_energy = input.mean_photon_number();
    if !(input_energy > 0.0) {
        return Err(Error::invalid("input", "pulse carries no energy"));
    }
    let t0 = input.peak_time();
    let input_peak = input.intensity().into_iter().fold(0.0, f64::max);
    let trace_end = output.grid().time_window();

    let mut window_energies = vec![output.window_energy(t0, window)];
    let mut echo_times = Vec::new();
    let mut k = 1;
    while t0 + k as f64 * tau + 0.5 * window <= trace_end {
        let c = t0 + k as f64 * tau;
        window_energies.push(output.window_energy(c, window));
        if let Some((t, peak)) = output.peak_in(c - 0.5 * window, c + 0.5 * window) {
            if peak > ECHO_THRESHOLD * input_peak {
                echo_times.push(t);
            }
        }
        k += 1;
    }
    let efficiency = window_energies.get(1).copied().unwrap_or(0.0) / input_energy;
    Ok(StorageResult {
        output_trace: output.clone(),
        efficiency,
        reflected_fraction: window_energies[0] / input_energy,
        echo_times,
        window_energies,
        input_time: t0,
    })
}

/// Input pulse parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseSpec {
    /// Intensity FWHM (µs).
    pub fwhm: f64,
    /// Peak time (µs).
    pub center: f64,
    pub mean_photon_number: f64,
    /// Carrier detuning from the grid center (MHz).
    pub carrier_detuning: f64,
}

impl Default for PulseSpec {
    fn default() -> Self {
        Self {
            fwhm: 1.0,
            center: 4.0,
            mean_photon_number: 0.33,
            carrier_detuning: 0.0,
        }
    }
}

impl PulseSpec {
    pub fn sigma(&self) -> f64 {
        self.fwhm / (2.0 * (2.0 * LN_2).sqrt())
    }
}

/// Everything needed for one storage run: comb, cavity, input pulse, detection
/// window and simulation span. The number of grid points is derived from the
/// comb resolution and the required time window unless given explicitly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StorageSetup {
    pub comb: CombSpec,
    pub cavity: CavitySpec,
    pub pulse: PulseSpec,
    /// Detection window width (µs).
    pub window: f64,
    /// Frequency span of the simulation grid (MHz).
    pub span: f64,
    pub n_points: Option<usize>,
}

impl Default for StorageSetup {
    fn default() -> Self {
        Self {
            comb: CombSpec::default(),
            cavity: CavitySpec::default(),
            pulse: PulseSpec::default(),
            window: 2.0,
            span: 64.0,
            n_points: None,
        }
    }
}

impl StorageSetup {
    /// Grid fine enough for the comb teeth and long enough to hold the input,
    /// the first two echoes and their windows several times over.
    pub fn grid(&self) -> Result<FrequencyGrid> {
        if let Some(n) = self.n_points {
            return FrequencyGrid::new(0.0, self.span, n);
        }
        self.comb.validate()?;
        let tau = self.comb.storage_time();
        let needed_window = 2.0
            * (self.pulse.center
                + 2.0 * tau
                + self.window.max(PULSE_MARGIN_SIGMAS * self.pulse.sigma()));
        let max_df = self.comb.max_grid_spacing().min(1.0 / needed_window);
        FrequencyGrid::with_max_spacing(self.span, max_df)
    }

    pub fn input_pulse(&self, grid: &FrequencyGrid) -> Result<PulseEnvelope> {
        make_gaussian_pulse(
            self.pulse.fwhm,
            self.pulse.center,
            self.pulse.mean_photon_number,
            self.pulse.carrier_detuning,
            grid,
        )
    }

    pub fn single_pass(&self, grid: &FrequencyGrid) -> Result<TransferFunction> {
        single_pass_transfer(&build_comb_profile(&self.comb, grid)?)
    }

    pub fn reflection(&self, grid: &FrequencyGrid) -> Result<TransferFunction> {
        self.cavity.validate()?;
        cavity_reflection(&self.single_pass(grid)?, &self.cavity)
    }
}

/// Storage in the impedance-matched cavity, detected in reflection.
pub fn run_storage(setup: &StorageSetup) -> Result<StorageResult> {
    let grid = setup.grid()?;
    let input = setup.input_pulse(&grid)?;
    let output = propagate(&input, &setup.reflection(&grid)?)?;
    storage_efficiency(&input, &output, setup.comb.storage_time(), setup.window)
}

/// Forward (single-pass) storage through the same comb without cavity.
pub fn run_single_pass(setup: &StorageSetup) -> Result<StorageResult> {
    let grid = setup.grid()?;
    let input = setup.input_pulse(&grid)?;
    let output = propagate(&input, &setup.single_pass(&grid)?)?;
    storage_efficiency(&input, &output, setup.comb.storage_time(), setup.window)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandwidthPoint {
    /// Pulse intensity FWHM (µs).
    pub fwhm: f64,
    /// Spectral intensity FWHM (MHz).
    pub bandwidth: f64,
    pub mean_photon_number: f64,
    pub efficiency: f64,
    pub reflected_fraction: f64,
}

/// Efficiency versus pulse duration at constant peak power: the photon number
/// scales with the FWHM and equals `setup.pulse.mean_photon_number` at
/// `reference_fwhm`.
pub fn scan_bandwidth(
    setup: &StorageSetup,
    fwhms: &[f64],
    reference_fwhm: f64,
) -> Result<Vec<BandwidthPoint>> {
    if !(reference_fwhm > 0.0) {
        return Err(Error::invalid("reference_fwhm", "must be positive"));
    }
    let longest = fwhms.iter().copied().fold(setup.pulse.fwhm, f64::max);
    let sizing = StorageSetup {
        pulse: PulseSpec {
            fwhm: longest,
            ..setup.pulse
        },
        ..*setup
    };
    let grid = sizing.grid()?;
    let reflection = setup.reflection(&grid)?;
    let tau = setup.comb.storage_time();
    fwhms
        .par_iter()
        .map(|&fwhm| {
            let mu = setup.pulse.mean_photon_number * fwhm / reference_fwhm;
            let input = make_gaussian_pulse(
                fwhm,
                setup.pulse.center,
                mu,
                setup.pulse.carrier_detuning,
                &grid,
            )?;
            let output = propagate(&input, &reflection)?;
            let r = storage_efficiency(&input, &output, tau, setup.window)?;
            Ok(BandwidthPoint {
                fwhm,
                bandwidth: gaussian_bandwidth(fwhm),
                mean_photon_number: mu,
                efficiency: r.efficiency,
                reflected_fraction: r.reflected_fraction,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StorageTimePoint {
    pub tau: f64,
    /// Averaged depth used for this point.
    pub d_tilde: f64,
    pub eta_cavity: f64,
    pub eta_single_pass: f64,
}

/// Cavity and single-pass efficiency for each storage time.
///
/// Each point uses tooth spacing `1/τ` and the averaged depth that
/// impedance-matches the cavity; the finesse and tooth shape are kept from
/// `setup.comb`. With `t2_eff` set, both efficiencies are multiplied by
/// `exp(-4τ/T2eff)`.
pub fn scan_storage_time(
    setup: &StorageSetup,
    taus: &[f64],
    t2_eff: Option<f64>,
) -> Result<Vec<StorageTimePoint>> {
    if let Some(t2) = t2_eff {
        if !(t2.is_finite() && t2 > 0.0) {
            return Err(Error::invalid("t2_eff", "must be positive"));
        }
    }
    let cav = &setup.cavity;
    let d_tilde = impedance_matched_depth(cav.r_in, cav.r_out, cav.round_trip_loss)?;
    taus.par_iter()
        .map(|&tau| {
            if !(tau.is_finite() && tau > 0.0) {
                return Err(Error::invalid("tau", "must be positive"));
            }
            let comb = CombSpec {
                tooth_spacing: 1.0 / tau,
                ..setup.comb
            }
            .with_effective_depth(d_tilde);
            let point = StorageSetup { comb, ..*setup };
            let decay = t2_eff.map_or(1.0, |t2| decay_factor(tau, t2));
            Ok(StorageTimePoint {
                tau,
                d_tilde,
                eta_cavity: run_storage(&point)?.efficiency * decay,
                eta_single_pass: run_single_pass(&point)?.efficiency * decay,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::medium::{AbsorptionProfile, ToothShape};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn grid() -> FrequencyGrid {
        FrequencyGrid::new(0.0, 64.0, 1 << 14).unwrap()
    }

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn gaussian_normalization() {
        let p = make_gaussian_pulse(1.0, 4.0, 0.32, 0.0, &grid()).unwrap();
        assert_relative_eq!(p.mean_photon_number(), 0.32, max_relative = 1e-12);
        assert!((p.peak_time() - 4.0).abs() < 1e-9);
        let zero = make_gaussian_pulse(1.0, 4.0, 0.0, 0.0, &grid()).unwrap();
        assert!(zero.values().iter().all(|v| *v == c(0.0, 0.0)));
    }

    #[test]
    fn intensity_fwhm_matches_request() {
        let p = make_gaussian_pulse(0.51, 3.0, 1.0, 0.0, &grid()).unwrap();
        let half = p.intensity().into_iter().fold(0.0, f64::max) / 2.0;
        let above = p.intensity().iter().filter(|&&v| v >= half).count() as f64;
        assert!((above * p.dt() - 0.51).abs() <= 2.0 * p.dt());
    }

    fn spectral_fwhm(p: &PulseEnvelope) -> f64 {
        let s: Vec<f64> = p.spectrum().iter().map(|v| v.norm_sqr()).collect();
        let g = p.grid();
        let (k0, &max) = s.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap();
        let half = max / 2.0;
        let crossing = |mut k: usize, step: isize| {
            while s[k] >= half {
                k = (k as isize + step) as usize;
            }
            let prev = (k as isize - step) as usize;
            let frac = (s[prev] - half) / (s[prev] - s[k]);
            g.frequency(prev) + step as f64 * frac * g.df()
        };
        crossing(k0, 1) - crossing(k0, -1)
    }

    #[test]
    fn short_pulse_bandwidth() {
        let g = FrequencyGrid::new(0.0, 64.0, 1 << 16).unwrap();
        let p = make_gaussian_pulse(0.12, 3.0, 1.0, 0.0, &g).unwrap();
        let bw = spectral_fwhm(&p);
        assert!((bw - 3.7).abs() < 0.05, "{bw}");
        assert_relative_eq!(bw, gaussian_bandwidth(0.12), max_relative = 1e-3);
    }

    #[test]
    fn detuning_moves_spectrum() {
        let p = make_gaussian_pulse(1.0, 4.0, 1.0, 2.5, &grid()).unwrap();
        let s: Vec<f64> = p.spectrum().iter().map(|v| v.norm_sqr()).collect();
        let k = (0..s.len()).max_by(|&a, &b| s[a].total_cmp(&s[b])).unwrap();
        assert!((grid().frequency(k) - 2.5).abs() <= grid().df());
    }

    #[test]
    fn clipping_is_rejected() {
        let g = grid();
        assert!(matches!(
            make_gaussian_pulse(1.0, 1.0, 1.0, 0.0, &g),
            Err(Error::PulseClipped(_))
        ));
        assert!(matches!(
            make_gaussian_pulse(1.0, g.time_window() - 1.0, 1.0, 0.0, &g),
            Err(Error::PulseClipped(_))
        ));
        assert!(matches!(
            make_gaussian_pulse(3.0 * g.dt(), 4.0, 1.0, 0.0, &g),
            Err(Error::PulseClipped(_))
        ));
    }

    #[test]
    fn parseval() {
        let p = make_gaussian_pulse(0.3, 4.0, 0.7, 1.3, &grid()).unwrap();
        let spectral: f64 = p.spectrum().iter().map(|v| v.norm_sqr()).sum::<f64>() * grid().df();
        assert_relative_eq!(spectral, p.mean_photon_number(), max_relative = 1e-12);
    }

    #[test]
    fn identity_and_constant_transfer() {
        let g = grid();
        let p = make_gaussian_pulse(0.5, 4.0, 0.4, 0.7, &g).unwrap();
        let out = propagate(&p, &TransferFunction::identity(g)).unwrap();
        for (a, b) in out.values().iter().zip(p.values()) {
            assert!((a - b).norm() < 1e-12);
        }
        let k = c(0.3, -0.4);
        let out = propagate(&p, &TransferFunction::constant(g, k)).unwrap();
        assert_relative_eq!(
            out.mean_photon_number(),
            k.norm_sqr() * p.mean_photon_number(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn grid_mismatch_is_rejected() {
        let p = make_gaussian_pulse(0.5, 4.0, 0.4, 0.0, &grid()).unwrap();
        let other = FrequencyGrid::new(0.0, 64.0, 1 << 13).unwrap();
        assert!(matches!(
            propagate(&p, &TransferFunction::identity(other)),
            Err(Error::GridMismatch(_))
        ));
        let shifted = FrequencyGrid::new(5.0, 64.0, 1 << 14).unwrap();
        let q = PulseEnvelope::new(shifted, p.values().to_vec()).unwrap();
        assert!(matches!(
            propagate(&q, &TransferFunction::identity(shifted)),
            Err(Error::GridMismatch(_))
        ));
    }

    fn comb_transfer(spacing: f64, g: &FrequencyGrid) -> TransferFunction {
        let comb = CombSpec {
            tooth_spacing: spacing,
            ..CombSpec::default()
        };
        single_pass_transfer(&build_comb_profile(&comb, g).unwrap()).unwrap()
    }

    #[test]
    fn causal_medium_response() {
        let p = make_gaussian_pulse(0.5, 8.0, 1.0, 0.0, &grid()).unwrap();
        let out = propagate(&p, &comb_transfer(0.5, &grid())).unwrap();
        let onset = 8.0 - PULSE_MARGIN_SIGMAS * 0.5 / (2.0 * (2.0 * LN_2).sqrt());
        let early = out.energy_between(0.0, onset);
        assert!(early < 1e-6 * out.mean_photon_number(), "{early}");
    }

    #[test]
    fn energy_never_increases_through_medium() {
        let p = make_gaussian_pulse(0.2, 4.0, 1.0, 0.0, &grid()).unwrap();
        let out = propagate(&p, &comb_transfer(0.5, &grid())).unwrap();
        assert!(out.mean_photon_number() <= p.mean_photon_number());
    }

    #[test]
    fn forward_echo_after_inverse_spacing() {
        let g = FrequencyGrid::new(0.0, 64.0, 1 << 15).unwrap();
        for spacing in [0.5, 0.25] {
            let p = make_gaussian_pulse(0.5, 4.0, 1.0, 0.0, &g).unwrap();
            let out = propagate(&p, &comb_transfer(spacing, &g)).unwrap();
            let r = storage_efficiency(&p, &out, 1.0 / spacing, 1.0).unwrap();
            let delay = r.echo_times[0] - r.input_time;
            assert!((delay - 1.0 / spacing).abs() <= p.dt(), "{delay}");
        }
    }

    #[test]
    fn no_medium_means_no_echo() {
        let p = make_gaussian_pulse(0.3, 4.0, 0.5, 0.0, &grid()).unwrap();
        let r = storage_efficiency(&p, &p, 2.0, 2.0).unwrap();
        assert!(r.efficiency < 1e-12);
        assert_relative_eq!(r.reflected_fraction, 1.0, max_relative = 1e-12);
        assert!(r.echo_times.is_empty());
    }

    #[test]
    fn overlapping_windows_rejected() {
        let p = make_gaussian_pulse(0.3, 4.0, 0.5, 0.0, &grid()).unwrap();
        assert_eq!(
            storage_efficiency(&p, &p, 1.5, 2.0).unwrap_err(),
            Error::OverlappingWindows {
                tau: 1.5,
                window: 2.0
            }
        );
        assert!(storage_efficiency(&p, &p, 2.0, 0.0).is_err());
    }

    #[test]
    fn two_line_beat_gives_repeated_echoes() {
        // two Lorentzian lines 0.5 MHz apart, no comb machinery involved
        let g = grid();
        let gamma = 0.02;
        let od: Vec<f64> = g
            .frequencies()
            .map(|f| {
                [-0.25, 0.25]
                    .iter()
                    .map(|c| 4.0 * gamma * gamma / ((f - c) * (f - c) + gamma * gamma))
                    .sum()
            })
            .collect();
        let h = single_pass_transfer(&AbsorptionProfile::new(g, od).unwrap()).unwrap();
        let p = make_gaussian_pulse(0.3, 4.0, 1.0, 0.0, &g).unwrap();
        let out = propagate(&p, &h).unwrap();
        let r = storage_efficiency(&p, &out, 2.0, 1.0).unwrap();
        assert!(r.echo_times.len() >= 2);
        // strong lines pull the echoes slightly early; their spacing stays 1/Δ
        assert!((r.echo_times[1] - r.echo_times[0] - 2.0).abs() <= 2.0 * g.dt());
        // brute-force trapezoid over each window agrees with the window sums
        let dt = g.dt();
        let intensity = out.intensity();
        for (k, &e) in r.window_energies.iter().enumerate().take(3) {
            let center = r.input_time + 2.0 * k as f64;
            let (lo, hi) = ((center - 0.5) / dt, (center + 0.5) / dt);
            let trap: f64 = (lo.ceil() as usize..hi.ceil() as usize)
                .map(|j| intensity[j] * dt)
                .sum();
            assert_relative_eq!(e, trap, max_relative = 1e-12);
        }
        assert!(r.window_energies[2] > 0.0 && r.window_energies[2] < r.window_energies[1]);
    }

    #[test]
    fn bandwidth_scan_matches_single_run() {
        let setup = StorageSetup::default();
        let single = run_storage(&setup).unwrap();
        let scan = scan_bandwidth(&setup, &[1.0], 1.0).unwrap();
        assert_relative_eq!(scan[0].efficiency, single.efficiency, max_relative = 1e-12);
        assert_relative_eq!(scan[0].bandwidth, 0.441, max_relative = 1e-3);
        let scan = scan_bandwidth(&setup, &[0.5, 1.0], 1.0).unwrap();
        assert_relative_eq!(scan[0].mean_photon_number, 0.5 * 0.33, max_relative = 1e-12);
    }

    #[test]
    fn storage_time_scan() {
        let setup = StorageSetup {
            comb: CombSpec {
                shape: ToothShape::Gaussian,
                ..CombSpec::default()
            },
            ..StorageSetup::default()
        };
        let rows = scan_storage_time(&setup, &[2.0, 5.0], None).unwrap();
        let decayed = scan_storage_time(&setup, &[2.0, 5.0], Some(89.0)).unwrap();
        for (a, b) in rows.iter().zip(&decayed) {
            assert!(a.eta_cavity > a.eta_single_pass);
            assert_relative_eq!(
                b.eta_cavity,
                a.eta_cavity * decay_factor(a.tau, 89.0),
                max_relative = 1e-12
            );
        }
        let d = impedance_matched_depth(0.4, 0.97, 0.03).unwrap();
        let matched = StorageSetup {
            comb: setup.comb.with_effective_depth(d),
            ..setup
        };
        assert_relative_eq!(
            rows[0].eta_cavity,
            run_storage(&matched).unwrap().efficiency,
            max_relative = 1e-12
        );
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn linearity(a_re in -2.0..2.0f64, a_im in -2.0..2.0f64, b_re in -2.0..2.0f64, det in -3.0..3.0f64) {
            let g = FrequencyGrid::new(0.0, 32.0, 1 << 12).unwrap();
            let comb = CombSpec { tooth_spacing: 1.0, bandwidth: 8.0, ..CombSpec::default() };
            let h = single_pass_transfer(&build_comb_profile(&comb, &g).unwrap()).unwrap();
            let p1 = make_gaussian_pulse(0.4, 3.0, 1.0, det, &g).unwrap();
            let p2 = make_gaussian_pulse(0.2, 6.0, 0.5, -det, &g).unwrap();
            let (a, b) = (c(a_re, a_im), c(b_re, 0.0));
            let lhs = propagate(&p1.scaled(a).add(&p2.scaled(b)).unwrap(), &h).unwrap();
            let rhs = propagate(&p1, &h).unwrap().scaled(a)
                .add(&propagate(&p2, &h).unwrap().scaled(b)).unwrap();
            let scale = lhs.values().iter().map(|v| v.norm()).fold(0.0, f64::max).max(1e-300);
            for (x, y) in lhs.values().iter().zip(rhs.values()) {
                prop_assert!((x - y).norm() <= 1e-12 * scale.max(1.0));
            }
        }
    }
}
