//! Probing pulse, compressed pulse and the square-root pulse driving the
//! snapshot simulations.
//!
//! The probing pulse is the modulated Gaussian
//! `f(t) = (2 pi / sqrt 2) exp(-B^2 t^2 / 2) cos(omega_c t)`; pulse
//! compression turns it into `F = f(-t) * f(t)`, which is even with a
//! nonnegative spectrum. The square-root pulse has spectrum `sqrt(F^)`.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Central frequency, bandwidth parameter and the effective pulse
/// half-width `t_F = 2 sqrt(3) / B` beyond which `F` is negligible.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulseSpec {
    pub omega_c: f64,
    pub bandwidth: f64,
}

impl PulseSpec {
    pub fn new(omega_c: f64, bandwidth: f64) -> Result<Self> {
        if !(omega_c > 0.0) || !(bandwidth > 0.0) {
            return Err(Error::InvalidArgument(
                "pulse needs positive central frequency and bandwidth".into(),
            ));
        }
        Ok(Self { omega_c, bandwidth })
    }

    /// Standard choice `B = omega_c / 4`.
    pub fn quarter_bandwidth(omega_c: f64) -> Result<Self> {
        Self::new(omega_c, omega_c / 4.0)
    }

    pub fn t_f(&self) -> f64 {
        2.0 * 3.0f64.sqrt() / self.bandwidth
    }

    /// Central wavelength `lambda_c = 2 pi c_bar / omega_c`.
    pub fn lambda_c(&self, c_bar: f64) -> f64 {
        2.0 * PI * c_bar / self.omega_c
    }

    /// Snapshot interval matching the Nyquist rate for the highest
    /// frequency in the essential support of the compressed-pulse
    /// spectrum (6 dB power drop from the peak). A smaller interval
    /// over-discretizes in time and needs regularization; a larger one
    /// degrades the internal-wave estimate.
    pub fn nyquist_tau(&self) -> f64 {
        // F^ ~ exp(-(w - omega_c)^2 / B^2) near the carrier; the 6 dB
        // (factor 4) drop sits at omega_c + B sqrt(ln 4).
        let omega_max = self.omega_c + self.bandwidth * (4.0f64.ln()).sqrt();
        PI / omega_max
    }
}

/// Probing pulse of the acquisition.
pub fn pulse_f(spec: &PulseSpec, t: f64) -> f64 {
    let b2 = spec.bandwidth * spec.bandwidth;
    (2.0 * PI / 2.0f64.sqrt()) * (-0.5 * b2 * t * t).exp() * (spec.omega_c * t).cos()
}

/// Analytic time derivative of `pulse_f`.
pub fn pulse_f_derivative(spec: &PulseSpec, t: f64) -> f64 {
    let b2 = spec.bandwidth * spec.bandwidth;
    let envelope = (-0.5 * b2 * t * t).exp();
    (2.0 * PI / 2.0f64.sqrt())
        * envelope
        * (-b2 * t * (spec.omega_c * t).cos() - spec.omega_c * (spec.omega_c * t).sin())
}

/// Compressed pulse `F = f(-t) * f(t)`, kept in its exact closed form
/// including the small `exp(-omega_c^2/B^2)` term that keeps the spectrum
/// nonnegative.
pub fn pulse_big_f(spec: &PulseSpec, t: f64) -> f64 {
    let b = spec.bandwidth;
    let ratio = spec.omega_c / b;
    (PI.powf(2.5) / b)
        * (-0.25 * b * b * t * t).exp()
        * ((spec.omega_c * t).cos() + (-ratio * ratio).exp())
}

/// Real sequence sampled at a uniform step, starting at `t0`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledSignal {
    pub dt: f64,
    pub t0: f64,
    pub values: Vec<f64>,
}

impl SampledSignal {
    pub fn new(dt: f64, t0: f64, values: Vec<f64>) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::InvalidArgument("sample step must be > 0".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("signal contains non-finite samples".into()));
        }
        Ok(Self { dt, t0, values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn time_at(&self, idx: usize) -> f64 {
        self.t0 + idx as f64 * self.dt
    }

    /// Value at a lattice time `t`; zero outside the sampled range.
    /// `t` must land on the sample lattice to within 1e-6 of a step.
    pub fn sample_or_zero(&self, t: f64) -> f64 {
        let pos = (t - self.t0) / self.dt;
        let idx = pos.round();
        debug_assert!(
            (pos - idx).abs() < 1e-6,
            "time {t} is off the sample lattice (dt = {})",
            self.dt
        );
        if idx < 0.0 || idx >= self.values.len() as f64 {
            0.0
        } else {
            self.values[idx as usize]
        }
    }
}

/// Samples `f` on a symmetric lattice around zero.
pub fn sample_pulse_f(spec: &PulseSpec, dt: f64, half_width: f64) -> Result<SampledSignal> {
    let half = (half_width / dt).round() as usize;
    let values = (0..=2 * half)
        .map(|i| pulse_f(spec, (i as f64 - half as f64) * dt))
        .collect();
    SampledSignal::new(dt, -(half as f64) * dt, values)
}

/// Quadrature grid shared by the square-root pulse and its derivative.
struct FrakSpectrum {
    d_omega: f64,
    /// sqrt(F^) on the nonnegative frequency lattice.
    amps: Vec<f64>,
}

fn frak_spectrum(spec: &PulseSpec, half_width: f64) -> Result<FrakSpectrum> {
    let b = spec.bandwidth;
    // Window beyond which F is far below double-precision resolution.
    let window = 8.0 * 3.0f64.sqrt() / b;
    let omega_max = spec.omega_c + 10.0 * b;
    // Fine enough for the time quadrature to resolve the carrier and the
    // highest retained frequency.
    let dt_q = (2.0 * PI / omega_max) / 16.0;
    let nt = (window / dt_q).ceil() as i64;
    let f_samples: Vec<f64> = (-nt..=nt).map(|j| pulse_big_f(spec, j as f64 * dt_q)).collect();

    // Frequency lattice: the series periodizes the pulse with period
    // 2 pi / d_omega; keep the images well clear of the output range.
    let period = 2.0 * (window + half_width.max(window));
    let d_omega = 2.0 * PI / period;
    let n_omega = (omega_max / d_omega).ceil() as usize;

    // F^(w) = dt sum_j F(t_j) cos(w t_j), trapezoid on the window.
    let mut fhat = Vec::with_capacity(n_omega + 1);
    for k in 0..=n_omega {
        let w = k as f64 * d_omega;
        let mut acc = 0.0;
        for (j, &fv) in f_samples.iter().enumerate() {
            let t = (j as i64 - nt) as f64 * dt_q;
            acc += fv * (w * t).cos();
        }
        fhat.push(acc * dt_q);
    }

    let peak = fhat.iter().cloned().fold(0.0f64, f64::max);
    if peak <= 0.0 {
        return Err(Error::SpectralValidity("compressed-pulse spectrum has no positive part".into()));
    }
    let mut amps = Vec::with_capacity(fhat.len());
    for &v in &fhat {
        if v < -1e-6 * peak {
            return Err(Error::SpectralValidity(format!(
                "compressed-pulse spectrum is negative ({v:.3e} against peak {peak:.3e})"
            )));
        }
        // Negative values this small are quadrature noise.
        amps.push(v.max(0.0).sqrt());
    }
    Ok(FrakSpectrum { d_omega, amps })
}

/// Square-root pulse: numeric inverse cosine transform of `sqrt(F^)`,
/// sampled on a symmetric lattice of step `dt` spanning `[-hw, hw]`.
/// Even by construction.
pub fn pulse_frak(spec: &PulseSpec, dt: f64, half_width: f64) -> Result<SampledSignal> {
    let spectrum = frak_spectrum(spec, half_width)?;
    let half = (half_width / dt).round() as usize;
    let mut values = vec![0.0; 2 * half + 1];
    for q in 0..=half {
        let t = q as f64 * dt;
        // Trapezoid over nonnegative frequencies; the double-sided
        // integral folds onto [0, inf) with weight 2 except at DC.
        let mut acc = 0.5 * spectrum.amps[0];
        for (k, &a) in spectrum.amps.iter().enumerate().skip(1) {
            acc += a * (k as f64 * spectrum.d_omega * t).cos();
        }
        let v = acc * spectrum.d_omega / PI;
        values[half + q] = v;
        values[half - q] = v;
    }
    SampledSignal::new(dt, -(half as f64) * dt, values)
}

/// Time derivative of the square-root pulse, from the same spectrum
/// (sine series). Odd by construction.
pub fn pulse_frak_derivative(spec: &PulseSpec, dt: f64, half_width: f64) -> Result<SampledSignal> {
    let spectrum = frak_spectrum(spec, half_width)?;
    let half = (half_width / dt).round() as usize;
    let mut values = vec![0.0; 2 * half + 1];
    for q in 0..=half {
        let t = q as f64 * dt;
        let mut acc = 0.0;
        for (k, &a) in spectrum.amps.iter().enumerate().skip(1) {
            let w = k as f64 * spectrum.d_omega;
            acc += a * w * (w * t).sin();
        }
        let v = -acc * spectrum.d_omega / PI;
        values[half + q] = v;
        values[half - q] = -v;
    }
    SampledSignal::new(dt, -(half as f64) * dt, values)
}

/// Centered-difference derivative, one-sided at the ends.
pub fn derivative(sig: &SampledSignal) -> Result<SampledSignal> {
    let n = sig.len();
    if n < 3 {
        return Err(Error::InvalidArgument(format!(
            "derivative needs at least 3 samples, got {n}"
        )));
    }
    let v = &sig.values;
    let dt = sig.dt;
    let mut out = vec![0.0; n];
    out[0] = (v[1] - v[0]) / dt;
    out[n - 1] = (v[n - 1] - v[n - 2]) / dt;
    for i in 1..n - 1 {
        out[i] = (v[i + 1] - v[i - 1]) / (2.0 * dt);
    }
    SampledSignal::new(dt, sig.t0, out)
}
