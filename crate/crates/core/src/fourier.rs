//! Thin wrappers around `rustfft` with the sign conventions used by the
//! simulator.
//!
//! Fields evolve as `exp(-i ω t)`, so a delay `τ` multiplies a spectrum by
//! `exp(+i ω τ)` and a causal response is analytic in the upper half plane.
//! Frequency-domain arrays are stored in grid order (lowest frequency first,
//! zero frequency at index `n/2`); time-domain arrays start at `t = 0`.

use num_complex::Complex64;
use rustfft::FftPlanner;

/// Time samples to grid-ordered spectrum: `S(f_m) = Σ_j E(t_j) exp(+i 2π f_m t_j) dt`.
pub(crate) fn time_to_spectrum(field: &[Complex64], dt: f64) -> Vec<Complex64> {
    let mut buf = field.to_vec();
    FftPlanner::new().plan_fft_inverse(buf.len()).process(&mut buf);
    for v in &mut buf {
        *v *= dt;
    }
    fftshift(&buf)
}

/// Inverse of [`time_to_spectrum`]: `E(t_j) = Σ_m S(f_m) exp(-i 2π f_m t_j) df`.
pub(crate) fn spectrum_to_time(spectrum: &[Complex64], df: f64) -> Vec<Complex64> {
    let mut buf = ifftshift(spectrum);
    FftPlanner::new().plan_fft_forward(buf.len()).process(&mut buf);
    for v in &mut buf {
        *v *= df;
    }
    buf
}

/// Causal (minimum-phase) completion of a real, grid-ordered log-amplitude.
///
/// Returns `φ` such that `a + i φ` has no anti-causal Fourier components.
pub(crate) fn causal_phase(log_amplitude: &[f64]) -> Vec<f64> {
    let n = log_amplitude.len();
    let mut planner = FftPlanner::new();
    let mut buf: Vec<Complex64> = ifftshift(
        &log_amplitude
            .iter()
            .map(|&a| Complex64::new(a, 0.0))
            .collect::<Vec<_>>(),
    );
    planner.plan_fft_forward(n).process(&mut buf);
    let scale = 1.0 / n as f64;
    let half = n / 2;
    for (k, v) in buf.iter_mut().enumerate() {
        let w = if k == 0 || k == half {
            1.0
        } else if k < half {
            2.0
        } else {
            0.0
        };
        *v *= w * scale;
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    fftshift(&buf).into_iter().map(|v| v.im).collect()
}

fn fftshift<T: Copy>(x: &[T]) -> Vec<T> {
    let n = x.len();
    let h = n / 2;
    x[n - h..].iter().chain(x[..n - h].iter()).copied().collect()
}

fn ifftshift<T: Copy>(x: &[T]) -> Vec<T> {
    let n = x.len();
    let h = n - n / 2;
    x[n - h..].iter().chain(x[..n - h].iter()).copied().collect()
}
