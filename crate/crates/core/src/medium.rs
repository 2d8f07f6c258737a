//! Atomic frequency comb absorption profiles and the complex single-pass
//! response of the doped crystal.
//!
//! The comb is rendered on a uniform [`FrequencyGrid`] as an optical-depth
//! profile `d(ω)`. Its dispersion is not modeled separately: the phase is
//! recovered from the absorption by a discrete Hilbert transform, which makes
//! the single-pass response causal (minimum phase) for any tooth shape.

use crate::error::{Error, Result};
use crate::fourier;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::{LN_2, PI};

/// Minimum number of grid samples across one tooth width.
pub const MIN_SAMPLES_PER_TOOTH: f64 = 16.0;

/// Fraction of the grid at each edge that is apodized before the Hilbert transform.
pub const APODIZATION_FRACTION: f64 = 0.05;

/// Uniform frequency grid, relative to the optical carrier (MHz).
///
/// Sample `k` sits at `center + (k - n/2) * df`, so the carrier lies exactly on
/// sample `n/2` when `center == 0`. The conjugate time grid has step
/// `dt = 1/span` and length `1/df`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencyGrid {
    center: f64,
    span: f64,
    n_points: usize,
}

impl FrequencyGrid {
    pub fn new(center: f64, span: f64, n_points: usize) -> Result<Self> {
        if !(span.is_finite() && span > 0.0) {
            return Err(Error::invalid("span", format!("must be positive, got {span}")));
        }
        if !center.is_finite() {
            return Err(Error::invalid("center_frequency", "must be finite"));
        }
        if n_points < 2 || !n_points.is_power_of_two() {
            return Err(Error::invalid(
                "n_points",
                format!("must be a power of two >= 2, got {n_points}"),
            ));
        }
        Ok(Self {
            center,
            span,
            n_points,
        })
    }

    /// Grid centered on the carrier with the smallest power-of-two size whose
    /// spacing does not exceed `max_df`.
    pub fn with_max_spacing(span: f64, max_df: f64) -> Result<Self> {
        if !(max_df > 0.0) {
            return Err(Error::invalid("max_df", "must be positive"));
        }
        let needed = (span / max_df).ceil().max(2.0) as usize;
        Self::new(0.0, span, needed.next_power_of_two())
    }

    pub fn center(&self) -> f64 {
        self.center
    }

    pub fn span(&self) -> f64 {
        self.span
    }

    pub fn len(&self) -> usize {
        self.n_points
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn df(&self) -> f64 {
        self.span / self.n_points as f64
    }

    /// Time step of the conjugate time grid (µs).
    pub fn dt(&self) -> f64 {
        1.0 / self.span
    }

    /// Length of the conjugate (periodic) time window (µs).
    pub fn time_window(&self) -> f64 {
        1.0 / self.df()
    }

    pub fn frequency(&self, k: usize) -> f64 {
        self.center + (k as f64 - (self.n_points / 2) as f64) * self.df()
    }

    pub fn frequencies(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_points).map(move |k| self.frequency(k))
    }

    pub fn min_frequency(&self) -> f64 {
        self.frequency(0)
    }

    pub fn max_frequency(&self) -> f64 {
        self.frequency(self.n_points - 1)
    }

    /// Nearest sample index to `f`, clamped to the grid.
    pub fn nearest_index(&self, f: f64) -> usize {
        let k = ((f - self.center) / self.df()).round() + (self.n_points / 2) as f64;
        k.clamp(0.0, (self.n_points - 1) as f64) as usize
    }

    pub(crate) fn same_as(&self, other: &FrequencyGrid) -> bool {
        self.n_points == other.n_points
            && (self.span - other.span).abs() <= 1e-12 * self.span
            && (self.center - other.center).abs() <= 1e-9 * self.df()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ToothShape {
    /// Flat-top tooth of full width `Δ/F`.
    Square,
    /// Gaussian tooth with FWHM `Δ/F`.
    Gaussian,
}

impl ToothShape {
    /// Tooth area divided by `peak * width`.
    pub fn area_factor(self) -> f64 {
        match self {
            ToothShape::Square => 1.0,
            ToothShape::Gaussian => (PI / (4.0 * LN_2)).sqrt(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ToothShape::Square => "square",
            ToothShape::Gaussian => "gaussian",
        }
    }
}

impl std::str::FromStr for ToothShape {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "square" => Ok(ToothShape::Square),
            "gaussian" => Ok(ToothShape::Gaussian),
            other => Err(format!("unknown tooth shape `{other}` (expected square or gaussian)")),
        }
    }
}

/// Transparent window burned into the inhomogeneous line before the comb is
/// prepared. Centered on the carrier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralPit {
    /// Full width of the window (MHz).
    pub width: f64,
    /// Optical depth of the untouched inhomogeneous line outside the window.
    pub line_od: f64,
}

impl Default for SpectralPit {
    fn default() -> Self {
        Self {
            width: 18.0,
            line_od: 0.0,
        }
    }
}

/// Parametric atomic frequency comb.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CombSpec {
    /// Tooth spacing Δ (MHz); the echo appears after `1/Δ`.
    pub tooth_spacing: f64,
    /// Comb finesse, tooth spacing over tooth width.
    pub finesse: f64,
    pub shape: ToothShape,
    /// Peak optical depth of a tooth.
    pub peak_od: f64,
    /// Optical depth under the teeth inside the comb bandwidth.
    pub background_od: f64,
    /// Full spectral extent of the comb (MHz).
    pub bandwidth: f64,
    /// Position of the central tooth relative to the carrier (MHz).
    pub center_offset: f64,
    pub pit: SpectralPit,
}

impl Default for CombSpec {
    fn default() -> Self {
        Self {
            tooth_spacing: 0.5,
            finesse: 5.8,
            shape: ToothShape::Square,
            peak_od: 2.32,
            background_od: 0.0,
            bandwidth: 16.0,
            center_offset: 0.0,
            pit: SpectralPit::default(),
        }
    }
}

impl CombSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.tooth_spacing.is_finite() && self.tooth_spacing > 0.0) {
            return Err(Error::invalid("tooth_spacing", "must be positive"));
        }
        if !(self.finesse.is_finite() && self.finesse >= 1.0) {
            return Err(Error::invalid("finesse", "must be >= 1"));
        }
        if !(self.peak_od.is_finite() && self.peak_od >= 0.0) {
            return Err(Error::invalid("peak_od", "must be finite and >= 0"));
        }
        if !(self.background_od.is_finite() && self.background_od >= 0.0) {
            return Err(Error::invalid("background_od", "must be finite and >= 0"));
        }
        if !(self.bandwidth.is_finite() && self.bandwidth > 0.0) {
            return Err(Error::invalid("bandwidth", "must be positive"));
        }
        if !self.center_offset.is_finite() {
            return Err(Error::invalid("center_offset", "must be finite"));
        }
        if !(self.pit.width.is_finite() && self.pit.width > 0.0) {
            return Err(Error::invalid("pit_width", "must be positive"));
        }
        if !(self.pit.line_od.is_finite() && self.pit.line_od >= 0.0) {
            return Err(Error::invalid("line_od", "must be finite and >= 0"));
        }
        Ok(())
    }

    pub fn tooth_width(&self) -> f64 {
        self.tooth_spacing / self.finesse
    }

    /// AFC storage time `1/Δ` (µs).
    pub fn storage_time(&self) -> f64 {
        1.0 / self.tooth_spacing
    }

    /// Comb-averaged optical depth implied by the parameters (excluding background).
    pub fn effective_depth(&self) -> f64 {
        self.peak_od * self.shape.area_factor() / self.finesse
    }

    /// Copy of the comb with the peak OD chosen so the averaged depth equals `d_tilde`.
    pub fn with_effective_depth(mut self, d_tilde: f64) -> Self {
        self.peak_od = d_tilde * self.finesse / self.shape.area_factor();
        self
    }

    /// Smallest grid spacing that satisfies the samples-per-tooth rule.
    pub fn max_grid_spacing(&self) -> f64 {
        self.tooth_width() / MIN_SAMPLES_PER_TOOTH
    }

    fn tooth_centers(&self) -> impl Iterator<Item = f64> + '_ {
        let half = 0.5 * self.bandwidth;
        let kmax = (half / self.tooth_spacing + 1e-9).floor() as i64;
        (-kmax..=kmax).map(move |k| self.center_offset + k as f64 * self.tooth_spacing)
    }
}

/// Optical depth `d(ω)` sampled on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct AbsorptionProfile {
    grid: FrequencyGrid,
    od: Vec<f64>,
}

impl AbsorptionProfile {
    pub fn new(grid: FrequencyGrid, od: Vec<f64>) -> Result<Self> {
        if od.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} OD values for a {}-point grid",
                od.len(),
                grid.len()
            )));
        }
        if od.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteProfile);
        }
        if let Some(v) = od.iter().find(|&&v| v < 0.0) {
            return Err(Error::invalid("od", format!("negative optical depth {v}")));
        }
        Ok(Self { grid, od })
    }

    /// Constant optical depth over the whole grid.
    pub fn flat(grid: FrequencyGrid, od: f64) -> Result<Self> {
        Self::new(grid, vec![od; grid.len()])
    }

    pub fn grid(&self) -> &FrequencyGrid {
        &self.grid
    }

    pub fn od(&self) -> &[f64] {
        &self.od
    }

    /// Pointwise sum of two profiles on the same grid.
    pub fn add(&self, other: &AbsorptionProfile) -> Result<AbsorptionProfile> {
        if !self.grid.same_as(&other.grid) {
            return Err(Error::GridMismatch("profiles on different grids".into()));
        }
        let od = self.od.iter().zip(&other.od).map(|(a, b)| a + b).collect();
        Ok(AbsorptionProfile {
            grid: self.grid,
            od,
        })
    }
}

/// Complex frequency response on a grid.
///
/// Cavity responses additionally carry the round-trip phase `Θ(ω)` they were
/// built from, which [`crate::cavity::resonance_linewidth`] uses for the
/// group round-trip delay.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferFunction {
    grid: FrequencyGrid,
    values: Vec<Complex64>,
    round_trip_phase: Option<Vec<f64>>,
}

impl TransferFunction {
    pub fn new(grid: FrequencyGrid, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} values for a {}-point grid",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self {
            grid,
            values,
            round_trip_phase: None,
        })
    }

    pub fn identity(grid: FrequencyGrid) -> Self {
        Self::constant(grid, Complex64::new(1.0, 0.0))
    }

    pub fn constant(grid: FrequencyGrid, value: Complex64) -> Self {
        Self {
            grid,
            values: vec![value; grid.len()],
            round_trip_phase: None,
        }
    }

    pub(crate) fn with_round_trip_phase(mut self, phase: Vec<f64>) -> Self {
        debug_assert_eq!(phase.len(), self.values.len());
        self.round_trip_phase = Some(phase);
        self
    }

    pub fn grid(&self) -> &FrequencyGrid {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn round_trip_phase(&self) -> Option<&[f64]> {
        self.round_trip_phase.as_deref()
    }

    pub fn power(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.norm_sqr()).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Value at the sample nearest to `f`.
    pub fn at(&self, f: f64) -> Complex64 {
        self.values[self.grid.nearest_index(f)]
    }

    /// Cascade two responses on the same grid.
    pub fn then(&self, other: &TransferFunction) -> Result<TransferFunction> {
        if !self.grid.same_as(&other.grid) {
            return Err(Error::GridMismatch("cascading responses on different grids".into()));
        }
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a * b).collect();
        TransferFunction::new(self.grid, values)
    }
}

/// Render a comb (inside its spectral pit) onto `grid`.
///
/// Square teeth are cell-averaged so the rendered area is exact at any grid
/// phase; Gaussian teeth are point-sampled.
pub fn build_comb_profile(spec: &CombSpec, grid: &FrequencyGrid) -> Result<AbsorptionProfile> {
    spec.validate()?;
    let df = grid.df();
    let samples_per_tooth = spec.tooth_width() / df;
    if samples_per_tooth < MIN_SAMPLES_PER_TOOTH {
        return Err(Error::GridTooCoarse {
            samples_per_tooth,
            required: MIN_SAMPLES_PER_TOOTH,
        });
    }
    if spec.bandwidth > 0.5 * grid.span() {
        return Err(Error::BandwidthExceedsGrid {
            bandwidth: spec.bandwidth,
            span: grid.span(),
        });
    }

    let n = grid.len();
    let mut od = vec![0.0; n];
    let half_band = 0.5 * spec.bandwidth;
    for (k, v) in od.iter_mut().enumerate() {
        if (grid.frequency(k) - spec.center_offset).abs() <= half_band {
            *v = spec.background_od;
        }
    }

    if spec.peak_od > 0.0 {
        let width = spec.tooth_width();
        for c in spec.tooth_centers() {
            match spec.shape {
                ToothShape::Square => {
                    let lo = grid.nearest_index(c - 0.5 * width - df);
                    let hi = grid.nearest_index(c + 0.5 * width + df);
                    for (k, v) in od.iter_mut().enumerate().take(hi + 1).skip(lo) {
                        let f = grid.frequency(k);
                        let overlap = (f + 0.5 * df).min(c + 0.5 * width)
                            - (f - 0.5 * df).max(c - 0.5 * width);
                        if overlap > 0.0 {
                            *v += spec.peak_od * overlap / df;
                        }
                    }
                }
                ToothShape::Gaussian => {
                    let sigma = width / (2.0 * (2.0 * LN_2).sqrt());
                    let reach = 9.0 * sigma;
                    let lo = grid.nearest_index(c - reach);
                    let hi = grid.nearest_index(c + reach);
                    for (k, v) in od.iter_mut().enumerate().take(hi + 1).skip(lo) {
                        let x = (grid.frequency(k) - c) / sigma;
                        *v += spec.peak_od * (-0.5 * x * x).exp();
                    }
                }
            }
        }
    }

    let half_pit = 0.5 * spec.pit.width;
    for (k, v) in od.iter_mut().enumerate() {
        if grid.frequency(k).abs() > half_pit {
            *v = spec.pit.line_od;
        }
    }
    AbsorptionProfile::new(*grid, od)
}

/// Optical depth averaged over one comb period centered on the grid center,
/// treating each sample as a constant cell of width `df`.
pub fn comb_effective_depth(profile: &AbsorptionProfile, tooth_spacing: f64) -> Result<f64> {
    let grid = profile.grid();
    if !(tooth_spacing > 0.0) {
        return Err(Error::invalid("tooth_spacing", "must be positive"));
    }
    let df = grid.df();
    let a = grid.center() - 0.5 * tooth_spacing;
    let b = grid.center() + 0.5 * tooth_spacing;
    if a < grid.min_frequency() - 0.5 * df || b > grid.max_frequency() + 0.5 * df {
        return Err(Error::PeriodNotContained {
            period: tooth_spacing,
        });
    }
    let lo = grid.nearest_index(a);
    let hi = grid.nearest_index(b);
    let integral: f64 = (lo..=hi)
        .map(|k| {
            let f = grid.frequency(k);
            let overlap = (f + 0.5 * df).min(b) - (f - 0.5 * df).max(a);
            profile.od()[k] * overlap.max(0.0)
        })
        .sum();
    Ok(integral / tooth_spacing)
}

/// Blend the outer edges of `od` towards the mean of its end values with a
/// raised-cosine taper, removing the wrap-around step seen by the DFT.
fn apodize(od: &[f64]) -> Vec<f64> {
    let n = od.len();
    let edge = 0.5 * (od[0] + od[n - 1]);
    let m = ((APODIZATION_FRACTION * n as f64).ceil() as usize).clamp(1, n / 2);
    let mut out = od.to_vec();
    for i in 0..m {
        let w = 0.5 * (1.0 - (PI * i as f64 / m as f64).cos());
        out[i] = edge + w * (od[i] - edge);
        out[n - 1 - i] = edge + w * (od[n - 1 - i] - edge);
    }
    out
}

/// Dispersive phase `φ(ω)` accompanying the absorption profile.
///
/// `φ` is the discrete Hilbert transform of the amplitude attenuation
/// `-d(ω)/2` (after edge apodization), so `exp(-d/2 + iφ)` is causal.
pub fn kramers_kronig_phase(profile: &AbsorptionProfile) -> Result<Vec<f64>> {
    if profile.od().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteProfile);
    }
    let attenuation: Vec<f64> = apodize(profile.od()).iter().map(|d| -0.5 * d).collect();
    Ok(fourier::causal_phase(&attenuation))
}

/// `H(ω) = exp(-d(ω)/2 + i φ(ω))`.
pub fn single_pass_transfer(profile: &AbsorptionProfile) -> Result<TransferFunction> {
    let phase = kramers_kronig_phase(profile)?;
    let values = profile
        .od()
        .iter()
        .zip(&phase)
        .map(|(&d, &p)| Complex64::from_polar((-0.5 * d).exp(), p))
        .collect();
    TransferFunction::new(*profile.grid(), values)
}
