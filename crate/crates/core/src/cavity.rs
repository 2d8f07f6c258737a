//! Asymmetric two-mirror resonator around the AFC crystal.
//!
//! The crystal is crossed twice per round trip, so the round-trip amplitude is
//! `A(ω) = sqrt(1-ε) |H(ω)|²` and the round-trip phase is
//! `Θ(ω) = 2 arg H(ω) + 2π (f - f_res) T_rt`.

use crate::error::{Error, Result};
use crate::medium::TransferFunction;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CavitySpec {
    /// Intensity reflectivity of the coupling (input) mirror.
    pub r_in: f64,
    /// Intensity reflectivity of the back mirror.
    pub r_out: f64,
    /// Round-trip intensity loss excluding medium absorption.
    pub round_trip_loss: f64,
    /// Bare round-trip time (µs).
    pub round_trip_time: f64,
    /// Bare-cavity resonance relative to the carrier (MHz).
    pub resonance_offset: f64,
}

impl Default for CavitySpec {
    fn default() -> Self {
        Self {
            r_in: 0.4,
            r_out: 0.97,
            round_trip_loss: 0.03,
            round_trip_time: 0.002,
            resonance_offset: 0.0,
        }
    }
}

impl CavitySpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.r_in) {
            return Err(Error::invalid("r_in", format!("must lie in [0, 1], got {}", self.r_in)));
        }
        if !(0.0..=1.0).contains(&self.r_out) {
            return Err(Error::invalid("r_out", format!("must lie in [0, 1], got {}", self.r_out)));
        }
        if !(0.0..1.0).contains(&self.round_trip_loss) {
            return Err(Error::invalid(
                "round_trip_loss",
                format!("must lie in [0, 1), got {}", self.round_trip_loss),
            ));
        }
        if !(self.round_trip_time.is_finite() && self.round_trip_time > 0.0) {
            return Err(Error::invalid("round_trip_time", "must be positive"));
        }
        if !self.resonance_offset.is_finite() {
            return Err(Error::invalid("resonance_offset", "must be finite"));
        }
        Ok(())
    }

    /// Bare free spectral range `1/T_rt` (MHz).
    pub fn free_spectral_range(&self) -> f64 {
        1.0 / self.round_trip_time
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinewidthReport {
    /// Full width at half maximum of the resonance (MHz).
    pub fwhm: f64,
    pub resonance_frequency: f64,
    /// Round-trip group delay `dΘ/dω` at the resonance (µs).
    pub group_delay_at_center: f64,
    /// `1 / group_delay_at_center` (MHz).
    pub effective_fsr: f64,
}

impl LinewidthReport {
    pub fn finesse(&self) -> f64 {
        self.effective_fsr / self.fwhm
    }
}

/// Phase of `values`, unwrapped along the grid.
pub(crate) fn unwrapped_phase(values: &[Complex64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len());
    let mut offset = 0.0;
    let mut prev = 0.0;
    for (i, v) in values.iter().enumerate() {
        let p = v.arg();
        if i > 0 {
            let jump = p - prev;
            if jump > PI {
                offset -= 2.0 * PI;
            } else if jump < -PI {
                offset += 2.0 * PI;
            }
        }
        prev = p;
        out.push(p + offset);
    }
    out
}

struct RoundTrip {
    amplitude: Vec<f64>,
    phase: Vec<f64>,
}

fn round_trip(medium: &TransferFunction, cav: &CavitySpec) -> Result<RoundTrip> {
    cav.validate()?;
    let grid = medium.grid();
    let loss = (1.0 - cav.round_trip_loss).sqrt();
    let medium_phase = unwrapped_phase(medium.values());
    // keep the medium phase referenced to its value at the bare resonance
    let reference = medium_phase[grid.nearest_index(cav.resonance_offset)];
    let amplitude = medium.values().iter().map(|h| loss * h.norm_sqr()).collect();
    let phase = grid
        .frequencies()
        .zip(&medium_phase)
        .map(|(f, &p)| {
            2.0 * (p - reference) + 2.0 * PI * (f - cav.resonance_offset) * cav.round_trip_time
        })
        .collect();
    Ok(RoundTrip { amplitude, phase })
}

/// Field reflection of the cavity seen from the input mirror.
///
/// `r = (-sqrt(R_in) + sqrt(R_out) A e^{iΘ}) / (1 - sqrt(R_in R_out) A e^{iΘ})`
pub fn cavity_reflection(medium: &TransferFunction, cav: &CavitySpec) -> Result<TransferFunction> {
    let rt = round_trip(medium, cav)?;
    let a_in = cav.r_in.sqrt();
    let a_out = cav.r_out.sqrt();
    let values = rt
        .amplitude
        .iter()
        .zip(&rt.phase)
        .map(|(&a, &theta)| {
            let e = Complex64::from_polar(a, theta);
            (-a_in + a_out * e) / (1.0 - a_in * a_out * e)
        })
        .collect();
    Ok(TransferFunction::new(*medium.grid(), values)?.with_round_trip_phase(rt.phase))
}

/// Field transmission through the back mirror.
pub fn cavity_transmission(
    medium: &TransferFunction,
    cav: &CavitySpec,
) -> Result<TransferFunction> {
    let rt = round_trip(medium, cav)?;
    let coupling = ((1.0 - cav.r_in) * (1.0 - cav.r_out)).sqrt();
    let feedback = (cav.r_in * cav.r_out).sqrt();
    let values = rt
        .amplitude
        .iter()
        .zip(&rt.phase)
        .map(|(&a, &theta)| {
            let half = Complex64::from_polar(a.sqrt(), 0.5 * theta);
            coupling * half / (1.0 - feedback * half * half)
        })
        .collect();
    Ok(TransferFunction::new(*medium.grid(), values)?.with_round_trip_phase(rt.phase))
}

/// Signed impedance mismatch `R_in - (R_out - ε) e^{-2 d̃}`; zero when matched.
pub fn check_impedance(r_in: f64, r_out: f64, loss: f64, d_tilde: f64) -> f64 {
    r_in - (r_out - loss) * (-2.0 * d_tilde).exp()
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    v[v.len() / 2]
}

/// FWHM and delay of the resonance nearest the grid center.
///
/// Transmission-like responses (a peak in `|H|²`) are measured on `|H|²`;
/// reflection-like responses (a dip) on `1 - |H|²`. The half maximum is taken
/// from zero, and crossings are located by linear interpolation.
///
/// The group delay is `dΘ/dω` when the response carries its round-trip phase
/// (cavity responses), and the response's own phase slope otherwise.
pub fn resonance_linewidth(tf: &TransferFunction) -> Result<LinewidthReport> {
    let grid = tf.grid();
    let power = tf.power();
    let dip: Vec<f64> = power.iter().map(|p| 1.0 - p).collect();
    let prominence = |y: &[f64]| y.iter().copied().fold(f64::MIN, f64::max) - median(y);
    let y = if prominence(&dip) > prominence(&power) {
        dip
    } else {
        power
    };
    let peak_value = y.iter().copied().fold(f64::MIN, f64::max);
    if !(peak_value > 0.0) || prominence(&y) < 1e-6 * peak_value.max(1e-300) {
        return Err(Error::NoResonance);
    }

    // candidate resonances: contiguous runs above half the global maximum
    let n = y.len();
    let center = n / 2;
    let mut best: Option<(usize, usize)> = None;
    let mut k = 0;
    while k < n {
        if y[k] >= 0.5 * peak_value {
            let start = k;
            while k < n && y[k] >= 0.5 * peak_value {
                k += 1;
            }
            let run = (start, k - 1);
            let dist = |(a, b): (usize, usize)| {
                if center < a {
                    a - center
                } else {
                    center.saturating_sub(b)
                }
            };
            if best.is_none_or(|b| dist(run) < dist(b)) {
                best = Some(run);
            }
        } else {
            k += 1;
        }
    }
    let (start, end) = best.ok_or(Error::NoResonance)?;
    let peak = (start..=end)
        .max_by(|&a, &b| y[a].total_cmp(&y[b]))
        .ok_or(Error::NoResonance)?;
    let half = 0.5 * y[peak];
    let df = grid.df();

    let mut hi = peak;
    while hi + 1 < n && y[hi + 1] >= half {
        hi += 1;
    }
    let mut lo = peak;
    while lo > 0 && y[lo - 1] >= half {
        lo -= 1;
    }
    if hi + 1 >= n || lo == 0 {
        return Err(Error::NoResonance);
    }
    let upper = grid.frequency(hi) + (y[hi] - half) / (y[hi] - y[hi + 1]) * df;
    let lower = grid.frequency(lo) - (y[lo] - half) / (y[lo] - y[lo - 1]) * df;
    let fwhm = upper - lower;

    let resonance_frequency = if peak > 0 && peak + 1 < n {
        let (a, b, c) = (y[peak - 1], y[peak], y[peak + 1]);
        let denom = a - 2.0 * b + c;
        let shift = if denom.abs() > 0.0 {
            0.5 * (a - c) / denom
        } else {
            0.0
        };
        grid.frequency(peak) + shift.clamp(-0.5, 0.5) * df
    } else {
        grid.frequency(peak)
    };

    let slope_at = |phase: &[f64]| {
        let (a, b) = if peak == 0 {
            (0, 1)
        } else if peak + 1 == n {
            (n - 2, n - 1)
        } else {
            (peak - 1, peak + 1)
        };
        (phase[b] - phase[a]) / (2.0 * PI * (b - a) as f64 * df)
    };
    let group_delay = match tf.round_trip_phase() {
        Some(theta) => slope_at(theta),
        None => slope_at(&unwrapped_phase(tf.values())),
    };
    let effective_fsr = if group_delay > 0.0 {
        1.0 / group_delay
    } else {
        f64::INFINITY
    };

    Ok(LinewidthReport {
        fwhm,
        resonance_frequency,
        group_delay_at_center: group_delay,
        effective_fsr,
    })
}
