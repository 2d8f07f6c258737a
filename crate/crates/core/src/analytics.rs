//! Closed-form efficiencies of forward and cavity-enhanced AFC storage,
//! impedance matching, depth optimization and coherence-decay fitting.

use crate::error::{Error, Result};
use crate::medium::ToothShape;
use crate::optimize::golden_section_max;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Upper end of the depth search interval; `e^{-10}` makes deeper combs irrelevant.
pub const MAX_SEARCH_DEPTH: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyModel {
    /// Comb-averaged optical depth d̃.
    pub d_tilde: f64,
    pub r_out: f64,
    /// Intra-cavity round-trip loss ε.
    pub loss: f64,
    pub finesse: f64,
    pub shape: ToothShape,
    /// Background optical depth under the comb.
    pub background_od: f64,
}

impl EfficiencyModel {
    /// Back-mirror reflectivity seen by the cavity field after loss and background absorption.
    pub fn effective_r_out(&self) -> f64 {
        (self.r_out - self.loss) * (-2.0 * self.background_od).exp()
    }
}

/// Dephasing factor of the comb: `sinc²(π/F)` for square teeth,
/// `exp(-7/F²)` for Gaussian teeth.
pub fn eta_dephasing(finesse: f64, shape: ToothShape) -> f64 {
    match shape {
        ToothShape::Square => {
            let x = PI / finesse;
            let s = if x == 0.0 { 1.0 } else { x.sin() / x };
            s * s
        }
        ToothShape::Gaussian => (-7.0 / (finesse * finesse)).exp(),
    }
}

/// Impedance-matched cavity efficiency
/// `4 d̃² e^{-2d̃} (1 - R e^{-2d̃})² R η_deph / (1 - R e^{-2d̃})⁴`
/// with `R = R_out - ε` (further attenuated by any background OD).
pub fn eta_cavity(model: &EfficiencyModel) -> f64 {
    let r = model.effective_r_out();
    if r <= 0.0 || model.d_tilde <= 0.0 {
        return 0.0;
    }
    let d = model.d_tilde;
    let x = r * (-2.0 * d).exp();
    let deph = eta_dephasing(model.finesse, model.shape);
    4.0 * d * d * (-2.0 * d).exp() * (1.0 - x).powi(2) * r * deph / (1.0 - x).powi(4)
}

/// Forward-recall single-pass efficiency `d̃² e^{-d̃} η_deph e^{-d0}`.
pub fn eta_forward(d_tilde: f64, eta_deph: f64, background_od: f64) -> f64 {
    d_tilde * d_tilde * (-d_tilde).exp() * eta_deph * (-background_od).exp()
}

/// Depth d̃ that satisfies `R_in = (R_out - ε) e^{-2d̃}`.
pub fn impedance_matched_depth(r_in: f64, r_out: f64, loss: f64) -> Result<f64> {
    let effective = r_out - loss;
    if !(r_in > 0.0) {
        return Err(Error::invalid("r_in", "must be positive"));
    }
    if r_in > effective {
        return Err(Error::UnmatchedConfiguration { r_in, effective });
    }
    Ok(0.5 * (effective / r_in).ln())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepthOptimum {
    pub d_tilde: f64,
    pub eta: f64,
    /// Set when no positive efficiency is possible (e.g. `R_out - ε <= 0`).
    pub degenerate: bool,
}

const DEPTH_TOLERANCE: f64 = 1e-7;

/// Maximize [`eta_cavity`] over `d̃ ∈ (0, 5]`.
pub fn optimize_depth(r_out: f64, loss: f64, finesse: f64, shape: ToothShape) -> DepthOptimum {
    let model = |d_tilde| EfficiencyModel {
        d_tilde,
        r_out,
        loss,
        finesse,
        shape,
        background_od: 0.0,
    };
    if model(1.0).effective_r_out() <= 0.0 {
        return DepthOptimum {
            d_tilde: 0.0,
            eta: 0.0,
            degenerate: true,
        };
    }
    let best = golden_section_max(
        |d| eta_cavity(&model(d)),
        0.0,
        MAX_SEARCH_DEPTH,
        DEPTH_TOLERANCE,
    );
    DepthOptimum {
        d_tilde: best.x,
        eta: best.value,
        degenerate: false,
    }
}

/// Maximize [`eta_forward`] over `d̃ ∈ (0, 5]`.
pub fn optimize_forward_depth(eta_deph: f64, background_od: f64) -> DepthOptimum {
    let best = golden_section_max(
        |d| eta_forward(d, eta_deph, background_od),
        0.0,
        MAX_SEARCH_DEPTH,
        DEPTH_TOLERANCE,
    );
    DepthOptimum {
        d_tilde: best.x,
        eta: best.value,
        degenerate: eta_deph <= 0.0,
    }
}

/// Multiplicative storage-time decay `exp(-4τ/T2eff)`.
pub fn decay_factor(tau: f64, t2_eff: f64) -> f64 {
    (-4.0 * tau / t2_eff).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub eta0: f64,
    /// Effective coherence time (µs).
    pub t2_eff: f64,
    /// Root-sum-square of the log-space residuals.
    pub residual_norm: f64,
}

impl DecayFit {
    pub fn eval(&self, tau: f64) -> f64 {
        self.eta0 * decay_factor(tau, self.t2_eff)
    }
}

/// Fit `η = η0 exp(-4τ/T2eff)` by linear regression of `ln η` on `τ`.
pub fn fit_decay(points: &[(f64, f64)]) -> Result<DecayFit> {
    if points.len() < 2 {
        return Err(Error::DegenerateFit("need at least two points".into()));
    }
    if let Some(&(tau, eta)) = points.iter().find(|(_, eta)| !(*eta > 0.0)) {
        return Err(Error::NonPositiveEfficiency { tau, eta });
    }
    let n = points.len() as f64;
    let mean_x = points.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = points.iter().map(|p| p.1.ln()).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mean_x).powi(2)).sum();
    if sxx <= f64::EPSILON * mean_x.abs().max(1.0).powi(2) {
        return Err(Error::DegenerateFit("all storage times are equal".into()));
    }
    let sxy: f64 = points
        .iter()
        .map(|p| (p.0 - mean_x) * (p.1.ln() - mean_y))
        .sum();
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    if slope >= 0.0 {
        return Err(Error::DegenerateFit("efficiency does not decay with storage time".into()));
    }
    let residual_norm = points
        .iter()
        .map(|p| (p.1.ln() - intercept - slope * p.0).powi(2))
        .sum::<f64>()
        .sqrt();
    Ok(DecayFit {
        eta0: intercept.exp(),
        t2_eff: -4.0 / slope,
        residual_norm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn model(d_tilde: f64, r_out: f64, loss: f64, finesse: f64, shape: ToothShape) -> EfficiencyModel {
        EfficiencyModel {
            d_tilde,
            r_out,
            loss,
            finesse,
            shape,
            background_od: 0.0,
        }
    }

    #[test]
    fn dephasing_limits() {
        assert_relative_eq!(eta_dephasing(1e9, ToothShape::Square), 1.0, epsilon = 1e-12);
        assert_relative_eq!(eta_dephasing(1e9, ToothShape::Gaussian), 1.0, epsilon = 1e-12);
        assert_relative_eq!(
            eta_dephasing(2.0, ToothShape::Square),
            (2.0 / PI).powi(2),
            epsilon = 1e-12
        );
        assert!((eta_dephasing(2.0, ToothShape::Square) - 0.405).abs() < 1e-3);
        assert!((eta_dephasing(5.8, ToothShape::Gaussian) - 0.812).abs() < 1e-3);
    }

    #[test]
    fn cavity_efficiency_values() {
        assert_eq!(eta_cavity(&model(0.0, 0.97, 0.0, 10.0, ToothShape::Square)), 0.0);
        // η_deph = 1 via infinite finesse
        let e = eta_cavity(&model(0.46, 0.97, 0.0, f64::INFINITY, ToothShape::Gaussian));
        assert!((e - 0.869).abs() < 5e-4, "{e}");
        let square = eta_cavity(&model(0.40, 0.97, 0.03, 5.8, ToothShape::Square));
        let gauss = eta_cavity(&model(0.40, 0.97, 0.03, 5.8, ToothShape::Gaussian));
        assert!((0.62..=0.72).contains(&gauss), "{gauss}");
        assert!(square > gauss);
    }

    #[test]
    fn forward_efficiency() {
        assert_relative_eq!(eta_forward(2.0, 1.0, 0.0), 4.0 * (-2.0f64).exp(), epsilon = 1e-15);
        assert!((eta_forward(2.0, 1.0, 0.0) - 0.5413).abs() < 1e-4);
        assert_eq!(eta_forward(0.0, 1.0, 0.0), 0.0);
        assert_relative_eq!(
            eta_forward(1.0, 0.9, 0.1),
            (-1.0f64).exp() * 0.9 * (-0.1f64).exp(),
            epsilon = 1e-15
        );
    }

    #[test]
    fn matched_depth() {
        let d = impedance_matched_depth(0.4, 0.97, 0.0).unwrap();
        assert!((d - 0.4428).abs() < 2e-4);
        assert_relative_eq!(d, 0.5 * (0.97f64 / 0.4).ln(), epsilon = 1e-15);
        assert_eq!(impedance_matched_depth(0.6, 0.6, 0.0).unwrap(), 0.0);
        assert!(matches!(
            impedance_matched_depth(0.5, 0.4, 0.0),
            Err(Error::UnmatchedConfiguration { .. })
        ));
    }

    #[test]
    fn forward_optimum_from_calculus() {
        let opt = optimize_forward_depth(1.0, 0.0);
        assert!((opt.d_tilde - 2.0).abs() < 1e-3);
        assert!((opt.eta - 0.5413).abs() < 5e-4);
    }

    #[test]
    fn projection_optimum() {
        let opt = optimize_depth(1.0, 0.01, 10.0, ToothShape::Square);
        assert!((opt.eta - 0.91).abs() < 0.02, "{opt:?}");
        assert!(!opt.degenerate);
    }

    #[test]
    fn degenerate_when_loss_exceeds_mirror() {
        let opt = optimize_depth(0.5, 0.6, 10.0, ToothShape::Square);
        assert!(opt.degenerate);
        assert_eq!(opt.eta, 0.0);
    }

    #[test]
    fn optimum_is_stationary() {
        for &(r, l, f) in &[(0.97, 0.03, 5.8), (1.0, 0.01, 10.0), (0.9, 0.0, 20.0)] {
            let opt = optimize_depth(r, l, f, ToothShape::Square);
            let h = 1e-6;
            let g = |d| eta_cavity(&model(d, r, l, f, ToothShape::Square));
            let slope = (g(opt.d_tilde + h) - g(opt.d_tilde - h)) / (2.0 * h);
            assert!(slope.abs() < 1e-6, "slope {slope} at {opt:?}");
        }
    }

    #[test]
    fn lossless_optimum_coincides_with_matching() {
        // R_out = 1, ε = 0: the efficiency (d/sinh d)² peaks as d̃ → 0, where
        // the matched input mirror R_in = e^{-2d̃} → 1. Check the optimum sits at
        // the bottom of the search interval with zero residual for R_in = e^{-2d̃*}.
        let opt = optimize_depth(1.0, 0.0, f64::INFINITY, ToothShape::Square);
        assert!(opt.d_tilde < 1e-4, "{opt:?}");
        let r_in = (-2.0 * opt.d_tilde).exp();
        assert!(crate::cavity::check_impedance(r_in, 1.0, 0.0, opt.d_tilde).abs() < 1e-12);
        assert!((opt.eta - 1.0).abs() < 1e-6);
    }

    #[test]
    fn decay_fit_exact_on_model_data() {
        let pts: Vec<(f64, f64)> = [2.0, 5.0, 10.0, 20.0, 30.0, 40.0, 50.0, 60.0, 70.0]
            .iter()
            .map(|&t| (t, 0.6 * decay_factor(t, 89.0)))
            .collect();
        let fit = fit_decay(&pts).unwrap();
        assert_relative_eq!(fit.eta0, 0.6, max_relative = 1e-9);
        assert_relative_eq!(fit.t2_eff, 89.0, max_relative = 1e-9);
        assert!(fit.residual_norm < 1e-12);
    }

    #[test]
    fn decay_fit_two_point_closed_form() {
        let (t1, e1, t2, e2) = (2.0, 0.55, 70.0, 0.02);
        let fit = fit_decay(&[(t1, e1), (t2, e2)]).unwrap();
        assert_relative_eq!(fit.t2_eff, 4.0 * (t2 - t1) / (e1 / e2).ln(), max_relative = 1e-12);
    }

    #[test]
    fn decay_fit_errors() {
        assert!(matches!(
            fit_decay(&[(1.0, 0.5), (2.0, 0.0)]),
            Err(Error::NonPositiveEfficiency { .. })
        ));
        assert!(matches!(
            fit_decay(&[(1.0, 0.5), (1.0, 0.4)]),
            Err(Error::DegenerateFit(_))
        ));
        assert!(fit_decay(&[(1.0, 0.5)]).is_err());
    }

    proptest! {
        #[test]
        fn cavity_efficiency_is_a_probability(
            d in 0.0f64..5.0,
            r_out in 0.0f64..=1.0,
            loss in 0.0f64..0.999,
            finesse in 1.0f64..100.0,
            gaussian in any::<bool>(),
            d0 in 0.0f64..2.0,
        ) {
            let shape = if gaussian { ToothShape::Gaussian } else { ToothShape::Square };
            let m = EfficiencyModel { d_tilde: d, r_out, loss, finesse, shape, background_od: d0 };
            let e = eta_cavity(&m);
            prop_assert!((0.0..=1.0).contains(&e), "eta = {}", e);
        }
    }
}
