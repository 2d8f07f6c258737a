//! Time-bin qubits, the AFC interferometer used to analyze them, fringe
//! fitting and fidelity bookkeeping.

use crate::error::{Error, Result};
use crate::medium::{build_comb_profile, single_pass_transfer, CombSpec, FrequencyGrid, TransferFunction};
use crate::optimize::bisect;
use crate::propagation::{make_gaussian_pulse, propagate, PulseEnvelope, StorageSetup, PULSE_MARGIN_SIGMAS};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::{LN_2, PI};

/// Relative tolerance between the analyzer delay and the bin separation.
pub const DELAY_TOLERANCE: f64 = 0.01;

/// Upper end of the peak-OD bracket searched by [`balance_analyzer`].
pub const MAX_ANALYZER_OD: f64 = 10.0;

/// `a_e |e⟩ + a_l e^{iδ} |l⟩` encoded in two Gaussian pulses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeBinQubit {
    pub amp_early: f64,
    pub amp_late: f64,
    /// Phase δ of the late component (rad).
    pub relative_phase: f64,
    /// Delay between the two bins (µs).
    pub bin_separation: f64,
    /// Intensity FWHM of each bin (µs).
    pub pulse_fwhm: f64,
    /// Mean photon number of the whole qubit.
    pub mean_photon_number: f64,
    /// Peak time of the early bin (µs).
    pub early_time: f64,
}

impl Default for TimeBinQubit {
    fn default() -> Self {
        Self::equatorial(0.0)
    }
}

impl TimeBinQubit {
    /// `(|e⟩ + e^{iδ}|l⟩)/√2` with the experiment's timing and photon number.
    pub fn equatorial(delta: f64) -> Self {
        Self {
            amp_early: std::f64::consts::FRAC_1_SQRT_2,
            amp_late: std::f64::consts::FRAC_1_SQRT_2,
            relative_phase: delta,
            bin_separation: 1.0,
            pulse_fwhm: 0.51,
            mean_photon_number: 0.25,
            early_time: 3.0,
        }
    }

    pub fn early() -> Self {
        Self {
            amp_early: 1.0,
            amp_late: 0.0,
            ..Self::equatorial(0.0)
        }
    }

    pub fn late() -> Self {
        Self {
            amp_early: 0.0,
            amp_late: 1.0,
            ..Self::equatorial(0.0)
        }
    }

    pub fn late_time(&self) -> f64 {
        self.early_time + self.bin_separation
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.amp_early >= 0.0 && self.amp_late >= 0.0) {
            return Err(Error::invalid("amp_early", "amplitudes must be non-negative"));
        }
        let norm = self.amp_early.powi(2) + self.amp_late.powi(2);
        if (norm - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(
                "amp_early",
                format!("|a_e|² + |a_l|² = {norm}, expected 1"),
            ));
        }
        if !self.relative_phase.is_finite() {
            return Err(Error::invalid("relative_phase", "must be finite"));
        }
        if !(self.pulse_fwhm > 0.0) {
            return Err(Error::invalid("pulse_fwhm", "must be positive"));
        }
        if !(self.bin_separation > self.pulse_fwhm) {
            return Err(Error::invalid(
                "bin_separation",
                "must exceed the pulse FWHM so the bins are resolved",
            ));
        }
        if !(self.mean_photon_number.is_finite() && self.mean_photon_number >= 0.0) {
            return Err(Error::invalid("mean_photon_number", "must be finite and >= 0"));
        }
        Ok(())
    }
}

/// Field envelope of the qubit; the whole qubit carries `mean_photon_number`.
pub fn make_timebin_qubit(q: &TimeBinQubit, grid: &FrequencyGrid) -> Result<PulseEnvelope> {
    q.validate()?;
    let early = make_gaussian_pulse(q.pulse_fwhm, q.early_time, 1.0, 0.0, grid)?;
    let late = make_gaussian_pulse(q.pulse_fwhm, q.late_time(), 1.0, 0.0, grid)?;
    let field = early
        .scaled(Complex64::new(q.amp_early, 0.0))
        .add(&late.scaled(Complex64::from_polar(q.amp_late, q.relative_phase)))?;
    let norm = field.mean_photon_number();
    if norm == 0.0 {
        return Ok(field);
    }
    Ok(field.scaled(Complex64::new((q.mean_photon_number / norm).sqrt(), 0.0)))
}

/// Interferometer phase imprinted on the echo arm by a spectral shift.
pub fn analyzer_phase(spectral_shift: f64, tooth_spacing: f64) -> f64 {
    2.0 * PI * spectral_shift / tooth_spacing
}

fn check_delay(filter: &CombSpec, bin_separation: f64) -> Result<()> {
    let delay = filter.storage_time();
    if (delay - bin_separation).abs() > DELAY_TOLERANCE * bin_separation {
        return Err(Error::MismatchedDelay {
            delay,
            bin_separation,
        });
    }
    Ok(())
}

/// Single-pass response of the analyzer comb moved by `spectral_shift` (MHz)
/// relative to the qubit carrier.
///
/// The echo arm picks up `ΔΦ = 2π·shift/Δ` relative to the transmitted arm.
/// A comb moved by `s` radiates its echo at `e^{-i2πs/Δ}` in the `e^{-iωt}`
/// convention, so the comb is moved by `-shift` to make the echo arm lead.
pub fn analyzer_transfer(
    filter: &CombSpec,
    spectral_shift: f64,
    bin_separation: f64,
    grid: &FrequencyGrid,
) -> Result<TransferFunction> {
    check_delay(filter, bin_separation)?;
    let shifted = CombSpec {
        center_offset: filter.center_offset - spectral_shift,
        ..*filter
    };
    single_pass_transfer(&build_comb_profile(&shifted, grid)?)
}

/// Transmitted and first-echo energies of a reference pulse through `filter`.
fn arm_energies(
    filter: &CombSpec,
    pulse: &PulseEnvelope,
    center: f64,
    window: f64,
) -> Result<(f64, f64)> {
    let h = single_pass_transfer(&build_comb_profile(filter, pulse.grid())?)?;
    let out = propagate(pulse, &h)?;
    Ok((
        out.window_energy(center, window),
        out.window_energy(center + filter.storage_time(), window),
    ))
}

/// Reference pulse and grid used to balance an analyzer for `q`.
fn reference_pulse(filter: &CombSpec, q: &TimeBinQubit) -> Result<(PulseEnvelope, f64)> {
    let sigma = q.pulse_fwhm / (2.0 * (2.0 * LN_2).sqrt());
    let center = PULSE_MARGIN_SIGMAS * sigma + q.bin_separation;
    let window = 4.0 * (center + 2.0 * filter.storage_time() + q.bin_separation);
    let grid = FrequencyGrid::with_max_spacing(
        4.0 * filter.bandwidth,
        filter.max_grid_spacing().min(1.0 / window),
    )?;
    Ok((make_gaussian_pulse(q.pulse_fwhm, center, 1.0, 0.0, &grid)?, center))
}

/// Comb with its peak OD tuned so the transmitted pulse and the first echo
/// carry equal energy (within 0.5 %) for a single bin of `q`. Detection
/// windows have width `q.bin_separation`.
pub fn balance_analyzer(filter: &CombSpec, q: &TimeBinQubit) -> Result<CombSpec> {
    filter.validate()?;
    q.validate()?;
    let (pulse, center) = reference_pulse(filter, q)?;
    let window = q.bin_separation;
    let imbalance = |od: f64| -> Result<f64> {
        let comb = CombSpec {
            peak_od: od,
            ..*filter
        };
        let (t, e) = arm_energies(&comb, &pulse, center, window)?;
        Ok((t - e) / (t + e))
    };
    let top = imbalance(MAX_ANALYZER_OD)?;
    if top >= 0.0 {
        return Err(Error::NoBalanceFound {
            max_od: MAX_ANALYZER_OD,
        });
    }
    let mut failure = None;
    let od = bisect(
        |od| match imbalance(od) {
            Ok(v) => v,
            Err(e) => {
                failure = Some(e);
                0.0
            }
        },
        0.0,
        MAX_ANALYZER_OD,
        1e-9,
    );
    if let Some(e) = failure {
        return Err(e);
    }
    let od = od.ok_or(Error::NoBalanceFound {
        max_od: MAX_ANALYZER_OD,
    })?;
    Ok(CombSpec {
        peak_od: od,
        ..*filter
    })
}

/// Transmitted and echoed energies of the reference pulse, exposed for
/// checking a balanced analyzer.
pub fn analyzer_arm_energies(filter: &CombSpec, q: &TimeBinQubit) -> Result<(f64, f64)> {
    let (pulse, center) = reference_pulse(filter, q)?;
    arm_energies(filter, &pulse, center, q.bin_separation)
}

/// Least-squares fit of `p(ΔΦ) = A (1 + V cos(ΔΦ + φ0))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FringeFit {
    pub amplitude: f64,
    pub visibility: f64,
    /// φ0 wrapped to (-π, π].
    pub phase_offset: f64,
    pub visibility_stderr: f64,
    pub phase_stderr: f64,
    /// Root-sum-square of the (weighted) residuals.
    pub residual_norm: f64,
}

/// Fit `A + B cos ΔΦ + C sin ΔΦ` by (weighted) linear least squares.
///
/// With `stderr` given, points are weighted by `1/σ²` and the parameter
/// covariance is `(XᵀWX)⁻¹`; otherwise it is scaled by the residual variance.
pub fn fit_fringe(phases: &[f64], p: &[f64], stderr: Option<&[f64]>) -> Result<FringeFit> {
    if phases.len() != p.len() || stderr.is_some_and(|s| s.len() != p.len()) {
        return Err(Error::DegenerateFit("phase and probability lists differ in length".into()));
    }
    let mut distinct: Vec<f64> = phases.iter().map(|x| x.rem_euclid(2.0 * PI)).collect();
    distinct.sort_by(|a, b| a.total_cmp(b));
    distinct.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    if distinct.len() < 3 {
        return Err(Error::DegenerateFit("need at least three distinct phases".into()));
    }
    let n = p.len();
    let weights: Vec<f64> = match stderr {
        Some(s) => s
            .iter()
            .map(|&e| if e > 0.0 { 1.0 / (e * e) } else { 0.0 })
            .collect(),
        None => vec![1.0; n],
    };
    if weights.iter().filter(|&&w| w > 0.0).count() < 3 {
        return Err(Error::DegenerateFit("fewer than three points carry weight".into()));
    }
    let x = DMatrix::from_fn(n, 3, |i, j| {
        let w = weights[i].sqrt();
        w * match j {
            0 => 1.0,
            1 => phases[i].cos(),
            _ => phases[i].sin(),
        }
    });
    let y = DVector::from_fn(n, |i, _| weights[i].sqrt() * p[i]);
    let xtx = x.transpose() * &x;
    let cov = xtx
        .try_inverse()
        .ok_or_else(|| Error::DegenerateFit("singular normal equations".into()))?;
    let beta = &cov * x.transpose() * &y;
    let residual = &y - &x * &beta;
    let rss = residual.norm_squared();
    let cov = if stderr.is_some() {
        cov
    } else if n > 3 {
        cov * (rss / (n - 3) as f64)
    } else {
        cov * 0.0
    };
    let (a, b, c) = (beta[0], beta[1], beta[2]);
    if !(a > 0.0) {
        return Err(Error::DegenerateFit("non-positive mean detection probability".into()));
    }
    let m = (b * b + c * c).sqrt();
    let visibility = m / a;
    let phase_offset = (-c).atan2(b);
    // gradients of V = m/a and φ0 = atan2(-c, b) with respect to (a, b, c)
    let (gv, gp) = if m > 0.0 {
        (
            DVector::from_vec(vec![-m / (a * a), b / (a * m), c / (a * m)]),
            DVector::from_vec(vec![0.0, c / (m * m), -b / (m * m)]),
        )
    } else {
        (DVector::zeros(3), DVector::zeros(3))
    };
    let var_v = (gv.transpose() * &cov * &gv)[(0, 0)];
    let var_p = (gp.transpose() * &cov * &gp)[(0, 0)];
    Ok(FringeFit {
        amplitude: a,
        visibility,
        phase_offset,
        visibility_stderr: var_v.max(0.0).sqrt(),
        phase_stderr: var_p.max(0.0).sqrt(),
        residual_norm: rss.sqrt(),
    })
}

/// Sampled fringe. `visibility` is the fitted value capped at 1; residual
/// harmonics can push an unconstrained fit marginally above it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FringeScan {
    /// Analyzer phases ΔΦ (rad).
    pub phases: Vec<f64>,
    /// Spectral shifts that produced them (MHz).
    pub shifts: Vec<f64>,
    /// Detection probability per trial in the interfering window.
    pub p_detect: Vec<f64>,
    pub stderr: Vec<f64>,
    pub visibility: f64,
    pub phase_offset: f64,
    pub visibility_stderr: f64,
}

impl FringeScan {
    /// Replace the probabilities (e.g. with sampled ones) and refit.
    pub fn refit(&self, p_detect: Vec<f64>, stderr: Vec<f64>) -> Result<FringeScan> {
        let fit = fit_fringe(&self.phases, &p_detect, Some(&stderr))?;
        Ok(FringeScan {
            phases: self.phases.clone(),
            shifts: self.shifts.clone(),
            p_detect,
            stderr,
            visibility: fit.visibility.min(1.0),
            phase_offset: fit.phase_offset,
            visibility_stderr: fit.visibility_stderr,
        })
    }
}

/// Photon numbers in the interfering middle window for each analyzer shift.
///
/// The window (width `window`) is centered on
/// `early_time + memory_delay + bin_separation`, where the early bin's echo
/// meets the transmitted late bin.
pub fn fringe_energies(
    qubit: &TimeBinQubit,
    memory: &TransferFunction,
    memory_delay: f64,
    filter: &CombSpec,
    shifts: &[f64],
    window: f64,
) -> Result<Vec<f64>> {
    if !(window > 0.0) {
        return Err(Error::invalid("window", "must be positive"));
    }
    if memory_delay < qubit.bin_separation + window {
        return Err(Error::invalid(
            "memory_delay",
            "storage time must cover the bin separation plus the window",
        ));
    }
    check_delay(filter, qubit.bin_separation)?;
    let grid = *memory.grid();
    let stored = propagate(&make_timebin_qubit(qubit, &grid)?, memory)?;
    let center = qubit.early_time + memory_delay + qubit.bin_separation;
    shifts
        .par_iter()
        .map(|&s| {
            let h = analyzer_transfer(filter, s, qubit.bin_separation, &grid)?;
            Ok(propagate(&stored, &h)?.window_energy(center, window))
        })
        .collect()
}

/// Noiseless fringe: detection probability per trial versus analyzer phase,
/// fitted with [`fit_fringe`].
pub fn fringe_scan(
    qubit: &TimeBinQubit,
    memory: &TransferFunction,
    memory_delay: f64,
    filter: &CombSpec,
    shifts: &[f64],
    window: f64,
) -> Result<FringeScan> {
    let p_detect = fringe_energies(qubit, memory, memory_delay, filter, shifts, window)?;
    let phases: Vec<f64> = shifts
        .iter()
        .map(|&s| analyzer_phase(s, filter.tooth_spacing))
        .collect();
    let fit = fit_fringe(&phases, &p_detect, None)?;
    Ok(FringeScan {
        stderr: vec![0.0; phases.len()],
        phases,
        shifts: shifts.to_vec(),
        p_detect,
        visibility: fit.visibility.min(1.0),
        phase_offset: fit.phase_offset,
        visibility_stderr: fit.visibility_stderr,
    })
}

/// Evenly spaced shifts covering one analyzer period `[0, Δ)`.
pub fn period_shifts(tooth_spacing: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| tooth_spacing * k as f64 / n as f64).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoleFidelity {
    pub early: f64,
    pub late: f64,
    pub average: f64,
}

/// Correct-bin fraction for `|e⟩` and `|l⟩` after the memory with a
/// transparent analyzer. Windows of width `bin_separation` sit on the two
/// retrieved bins; `noise_per_window` photons are added to each window.
pub fn pole_fidelity(
    qubit: &TimeBinQubit,
    memory: &TransferFunction,
    memory_delay: f64,
    noise_per_window: f64,
) -> Result<PoleFidelity> {
    if !(noise_per_window >= 0.0) {
        return Err(Error::invalid("noise_per_window", "must be >= 0"));
    }
    let grid = *memory.grid();
    let window = qubit.bin_separation;
    let early_center = qubit.early_time + memory_delay;
    let late_center = early_center + qubit.bin_separation;
    let correct_fraction = |amp_early: f64, amp_late: f64, correct_early: bool| -> Result<f64> {
        let q = TimeBinQubit {
            amp_early,
            amp_late,
            ..*qubit
        };
        let out = propagate(&make_timebin_qubit(&q, &grid)?, memory)?;
        let e = out.window_energy(early_center, window) + noise_per_window;
        let l = out.window_energy(late_center, window) + noise_per_window;
        Ok(if correct_early { e / (e + l) } else { l / (e + l) })
    };
    let early = correct_fraction(1.0, 0.0, true)?;
    let late = correct_fraction(0.0, 1.0, false)?;
    Ok(PoleFidelity {
        early,
        late,
        average: 0.5 * (early + late),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FidelityReport {
    pub v_coh: f64,
    pub f_coh: f64,
    pub f_pole: f64,
    pub f_total: f64,
    pub f_threshold: f64,
    pub passes_quantum_bound: bool,
}

/// `F_coh = (1+V)/2`, `F_total = (2/3) F_coh + (1/3) F_pole`, compared with
/// the weak-coherent-state threshold for `(µ, η)`.
pub fn fidelity_report(v_coh: f64, f_pole: f64, mu: f64, eta: f64) -> Result<FidelityReport> {
    if !(0.0..=1.0).contains(&v_coh) {
        return Err(Error::invalid("v_coh", "must lie in [0, 1]"));
    }
    if !(0.0..=1.0).contains(&f_pole) {
        return Err(Error::invalid("f_pole", "must lie in [0, 1]"));
    }
    let f_coh = (1.0 + v_coh) / 2.0;
    let f_total = 2.0 / 3.0 * f_coh + 1.0 / 3.0 * f_pole;
    let f_threshold = wcs_threshold(mu, eta)?;
    Ok(FidelityReport {
        v_coh,
        f_coh,
        f_pole,
        f_total,
        f_threshold,
        passes_quantum_bound: f_total > f_threshold,
    })
}

/// Classical (measure-and-prepare) fidelity bound for Poissonian inputs of
/// mean `mu` stored with efficiency `eta`.
///
/// The adversary measures the photon number `N` (fidelity `(N+1)/(N+2)`) and
/// only re-emits for the largest `N` until its success probability equals the
/// memory's `η (1 - P0)`; the smallest accepted `N` is used partially.
pub fn wcs_threshold(mu: f64, eta: f64) -> Result<f64> {
    if !(mu.is_finite() && mu > 0.0) {
        return Err(Error::invalid("mu", "must be positive"));
    }
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::invalid("eta", "must lie in (0, 1]"));
    }
    // Poisson probabilities until the tail is negligible
    let mut p = vec![(-mu).exp()];
    while p.len() < 10 || *p.last().unwrap() > 1e-18 * p[0].max(1e-300) {
        let n = p.len() as f64;
        let next = p.last().unwrap() * mu / n;
        p.push(next);
        if p.len() > 10_000 {
            break;
        }
    }
    let target = eta * (1.0 - p[0]);
    // tail[n] = Σ_{N > n} P_N
    let mut tail = vec![0.0; p.len()];
    for n in (0..p.len() - 1).rev() {
        tail[n] = tail[n + 1] + p[n + 1];
    }
    let n_min = (0..p.len())
        .find(|&n| tail[n] <= target)
        .unwrap_or(p.len() - 1);
    let gamma = target - tail[n_min];
    let fid = |n: usize| (n as f64 + 1.0) / (n as f64 + 2.0);
    let accepted: f64 = (n_min + 1..p.len()).map(|n| fid(n) * p[n]).sum();
    Ok((fid(n_min) * gamma + accepted) / target)
}

/// Memory plus analyzer configuration for the qubit experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QubitSetup {
    /// Memory comb, cavity and grid sizing; its pulse settings are unused.
    pub memory: StorageSetup,
    /// Analyzer comb before balancing.
    pub filter: CombSpec,
    pub qubit: TimeBinQubit,
    /// Width of the interfering detection window (µs).
    pub window: f64,
}

impl Default for QubitSetup {
    fn default() -> Self {
        Self {
            memory: StorageSetup::default(),
            filter: CombSpec {
                tooth_spacing: 1.0,
                ..CombSpec::default()
            },
            qubit: TimeBinQubit::default(),
            window: 1.0,
        }
    }
}

impl QubitSetup {
    pub fn grid(&self) -> Result<FrequencyGrid> {
        let finest = if self.filter.tooth_width() < self.memory.comb.tooth_width() {
            self.filter
        } else {
            self.memory.comb
        };
        let sizing = StorageSetup {
            comb: CombSpec {
                tooth_spacing: finest.tooth_spacing,
                finesse: finest.finesse,
                ..self.memory.comb
            },
            pulse: crate::propagation::PulseSpec {
                fwhm: self.qubit.pulse_fwhm,
                center: self.qubit.late_time() + self.filter.storage_time(),
                ..self.memory.pulse
            },
            ..self.memory
        };
        sizing.grid()
    }

    pub fn memory_transfer(&self, grid: &FrequencyGrid) -> Result<TransferFunction> {
        self.memory.reflection(grid)
    }

    pub fn memory_delay(&self) -> f64 {
        self.memory.comb.storage_time()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytics::impedance_matched_depth;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn grid() -> FrequencyGrid {
        FrequencyGrid::new(0.0, 64.0, 1 << 14).unwrap()
    }

    fn narrow(delta: f64) -> TimeBinQubit {
        TimeBinQubit {
            pulse_fwhm: 0.2,
            ..TimeBinQubit::equatorial(delta)
        }
    }

    /// Impedance-matched memory, so no input light leaks into the echo windows.
    fn ideal_setup() -> QubitSetup {
        let mut s = QubitSetup::default();
        let d = impedance_matched_depth(0.4, 0.97, 0.03).unwrap();
        s.memory.comb = s.memory.comb.with_effective_depth(d);
        s.qubit = narrow(0.0);
        s
    }

    #[test]
    fn qubit_photon_bookkeeping() {
        let g = grid();
        let q = TimeBinQubit::equatorial(0.0);
        let field = make_timebin_qubit(&q, &g).unwrap();
        let split = q.early_time + 0.5 * q.bin_separation;
        assert_relative_eq!(field.mean_photon_number(), 0.25, max_relative = 1e-12);
        // the sample on the midpoint belongs to one half only
        let midpoint = field.energy_between(split, split + 0.5 * g.dt());
        assert!((field.energy_between(0.0, split) - 0.125).abs() <= midpoint);
        assert!((field.energy_between(split, 1e9) - 0.125).abs() <= midpoint);
        let sharp = make_timebin_qubit(&narrow(0.0), &g).unwrap();
        assert_relative_eq!(sharp.energy_between(0.0, split), 0.125, max_relative = 1e-8);

        let early = TimeBinQubit {
            pulse_fwhm: 0.2,
            ..TimeBinQubit::early()
        };
        let e = make_timebin_qubit(&early, &g).unwrap();
        assert!(e.energy_between(split, 1e9) < 1e-8);
        assert_relative_eq!(e.mean_photon_number(), 0.25, max_relative = 1e-12);
    }

    #[test]
    fn opposite_phases_are_orthogonal() {
        let g = grid();
        let plus = make_timebin_qubit(&TimeBinQubit::equatorial(0.0), &g).unwrap();
        let minus = make_timebin_qubit(&TimeBinQubit::equatorial(PI), &g).unwrap();
        let overlap: Complex64 = plus
            .values()
            .iter()
            .zip(minus.values())
            .map(|(a, b)| a.conj() * b)
            .sum::<Complex64>()
            * g.dt();
        assert!(overlap.norm() < 1e-12, "{overlap}");
    }

    #[test]
    fn invalid_qubits() {
        let mut q = TimeBinQubit::equatorial(0.0);
        q.amp_late = 0.5;
        assert!(q.validate().is_err());
        let q = TimeBinQubit {
            pulse_fwhm: 1.2,
            ..TimeBinQubit::equatorial(0.0)
        };
        assert!(matches!(
            q.validate(),
            Err(Error::InvalidParameter {
                name: "bin_separation",
                ..
            })
        ));
    }

    #[test]
    fn analyzer_delay_must_match_bins() {
        let filter = CombSpec {
            tooth_spacing: 0.97,
            ..CombSpec::default()
        };
        assert!(matches!(
            analyzer_transfer(&filter, 0.0, 1.0, &grid()),
            Err(Error::MismatchedDelay { .. })
        ));
        let close = CombSpec {
            tooth_spacing: 1.0 / 1.005,
            ..CombSpec::default()
        };
        assert!(analyzer_transfer(&close, 0.0, 1.0, &grid()).is_ok());
    }

    #[test]
    fn balance_equalizes_arms() {
        let filter = QubitSetup::default().filter;
        let q = TimeBinQubit::equatorial(0.0);
        let zero = CombSpec {
            peak_od: 0.0,
            ..filter
        };
        let (t0, e0) = analyzer_arm_energies(&zero, &q).unwrap();
        assert!(t0 > e0);
        let balanced = balance_analyzer(&filter, &q).unwrap();
        let (t, e) = analyzer_arm_energies(&balanced, &q).unwrap();
        assert!((t - e).abs() / t < 0.005, "{t} {e}");
        assert!(balanced.peak_od > 0.0 && balanced.peak_od <= MAX_ANALYZER_OD);
    }

    #[test]
    fn flat_absorber_cannot_balance() {
        let filter = CombSpec {
            tooth_spacing: 1.0,
            finesse: 1.0,
            ..CombSpec::default()
        };
        assert_eq!(
            balance_analyzer(&filter, &TimeBinQubit::default()).unwrap_err(),
            Error::NoBalanceFound {
                max_od: MAX_ANALYZER_OD
            }
        );
    }

    #[test]
    fn fit_recovers_synthetic_fringe() {
        let phases: Vec<f64> = (0..12).map(|k| 2.0 * PI * k as f64 / 12.0).collect();
        let p: Vec<f64> = phases.iter().map(|x| 0.1 * (1.0 + 0.8 * (x + 0.7).cos())).collect();
        let fit = fit_fringe(&phases, &p, None).unwrap();
        assert_relative_eq!(fit.amplitude, 0.1, max_relative = 1e-12);
        assert_relative_eq!(fit.visibility, 0.8, max_relative = 1e-12);
        assert_relative_eq!(fit.phase_offset, 0.7, epsilon = 1e-12);
        assert!(fit.residual_norm < 1e-14);
        assert!(matches!(
            fit_fringe(&[0.0, 1.0, 2.0 * PI], &[0.1, 0.2, 0.1], None),
            Err(Error::DegenerateFit(_))
        ));
    }

    #[test]
    fn ideal_fringes_and_phase_covariance() {
        let setup = ideal_setup();
        let g = setup.grid().unwrap();
        let memory = setup.memory_transfer(&g).unwrap();
        let filter = balance_analyzer(&setup.filter, &setup.qubit).unwrap();
        let shifts = period_shifts(filter.tooth_spacing, 8);
        let mut offsets = Vec::new();
        for delta in [0.0, PI / 4.0, PI / 2.0, 3.0 * PI / 4.0] {
            let scan = fringe_scan(&narrow(delta), &memory, setup.memory_delay(), &filter, &shifts, 1.0)
                .unwrap();
            assert!(scan.visibility >= 0.999, "δ {delta}: V {}", scan.visibility);
            offsets.push(scan.phase_offset);
        }
        for (k, phi) in offsets.iter().enumerate() {
            let moved = (phi - offsets[0] + k as f64 * PI / 4.0 + PI).rem_euclid(2.0 * PI) - PI;
            assert!(moved.abs() < 0.02, "offset {k}: {moved}");
        }
    }

    #[test]
    fn analyzer_is_periodic_in_the_tooth_spacing() {
        let setup = ideal_setup();
        let g = setup.grid().unwrap();
        let memory = setup.memory_transfer(&g).unwrap();
        let filter = balance_analyzer(&setup.filter, &setup.qubit).unwrap();
        let e = fringe_energies(&setup.qubit, &memory, 2.0, &filter, &[0.0, 0.25, 1.0, 1.25], 1.0)
            .unwrap();
        assert_relative_eq!(e[0], e[2], max_relative = 2e-3);
        assert_relative_eq!(e[1], e[3], max_relative = 2e-3);
        assert_relative_eq!(analyzer_phase(0.5, 1.0), PI);
    }

    #[test]
    fn pole_fidelity_ideal_and_leaky() {
        let g = grid();
        let q = narrow(0.0);
        let ideal = pole_fidelity(&q, &TransferFunction::identity(g), 0.0, 0.0).unwrap();
        assert_relative_eq!(ideal.average, 1.0, epsilon = 1e-8);
        // a 10 % amplitude copy delayed by one bin leaks 1 % of |e⟩ into the late bin
        let values = g
            .frequencies()
            .map(|f| 1.0 + Complex64::from_polar(0.1, 2.0 * PI * f * q.bin_separation))
            .collect();
        let leaky = TransferFunction::new(g, values).unwrap();
        let f = pole_fidelity(&q, &leaky, 0.0, 0.0).unwrap();
        assert_relative_eq!(f.early, 1.0 / 1.01, max_relative = 1e-8);
        assert!((f.early - 0.990).abs() < 5e-4);
        let noisy = pole_fidelity(&q, &TransferFunction::identity(g), 0.0, 0.01).unwrap();
        assert_relative_eq!(noisy.early, 0.26 / 0.27, max_relative = 1e-8);
    }

    #[test]
    fn fidelity_algebra() {
        let r = fidelity_report(0.899, 0.946, 0.25, 0.51).unwrap();
        assert_eq!(r.f_coh, (1.0 + 0.899) / 2.0);
        assert_eq!(r.f_total, 2.0 / 3.0 * r.f_coh + 1.0 / 3.0 * 0.946);
        assert!((r.f_coh - 0.9495).abs() < 1e-12);
        assert!((r.f_total - 0.9483).abs() < 5e-5);
        assert!(r.passes_quantum_bound);
        assert_eq!(fidelity_report(1.0, 1.0, 0.25, 0.51).unwrap().f_total, 1.0);
        assert_eq!(fidelity_report(0.0, 1.0, 0.25, 0.51).unwrap().f_coh, 0.5);
        assert!(fidelity_report(1.2, 1.0, 0.25, 0.51).is_err());
    }

    /// Direct evaluation: hand the highest photon numbers to the adversary
    /// until its success probability matches the memory's.
    fn threshold_oracle(mu: f64, eta: f64) -> f64 {
        let poisson = |n: u32| (-mu).exp() * mu.powi(n as i32) / (1..=n).map(f64::from).product::<f64>();
        let target = eta * (1.0 - poisson(0));
        let (mut budget, mut score) = (target, 0.0);
        for n in (1..60).rev() {
            let take = poisson(n).min(budget);
            score += take * (n as f64 + 1.0) / (n as f64 + 2.0);
            budget -= take;
        }
        score / target
    }

    #[test]
    fn weak_coherent_threshold() {
        assert_relative_eq!(wcs_threshold(1e-6, 1.0).unwrap(), 2.0 / 3.0, epsilon = 1e-6);
        for (mu, eta) in [(0.25, 0.51), (0.25, 1.0), (1.0, 0.3), (2.0, 0.05)] {
            assert_relative_eq!(
                wcs_threshold(mu, eta).unwrap(),
                threshold_oracle(mu, eta),
                epsilon = 1e-12
            );
        }
        assert!(wcs_threshold(0.25, 1.0).unwrap() < wcs_threshold(0.25, 0.51).unwrap());
        assert!(wcs_threshold(0.0, 0.5).is_err());
        assert!(wcs_threshold(0.25, 1.5).is_err());
    }

    proptest! {
        #[test]
        fn threshold_monotone(mu in 0.01..3.0f64, eta in 0.01..1.0f64, k in 0.1..0.99f64) {
            let hi = wcs_threshold(mu, eta).unwrap();
            prop_assert!(wcs_threshold(mu, eta * k).unwrap() >= hi - 1e-12);
            prop_assert!(wcs_threshold(mu * (1.0 + k), eta).unwrap() >= hi - 1e-12);
            prop_assert!((2.0 / 3.0 - 1e-12..=1.0).contains(&hi));
        }

        #[test]
        fn fidelity_identities(v in 0.0..1.0f64, f in 0.0..1.0f64) {
            let r = fidelity_report(v, f, 0.25, 0.51).unwrap();
            prop_assert_eq!(r.f_coh, (1.0 + v) / 2.0);
            prop_assert_eq!(r.f_total, 2.0 / 3.0 * r.f_coh + 1.0 / 3.0 * f);
        }
    }
}
