#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::special::{digamma, gamma_p, gamma_quantile_unit, trigamma};
use crate::{Error, Result};

/// Value substituted for exact-zero scores before fitting (Gamma support is
/// the open half-line).
pub const ZERO_SHIFT: f64 = 1e-12;

const MIN_SAMPLES: usize = 30;
const NEWTON_TOL: f64 = 1e-10;
const NEWTON_MAX_ITER: usize = 100;

/// Maximum-likelihood Gamma parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaFit {
    pub shape: f64,
    pub scale: f64,
    pub iterations: usize,
}

/// Fits Gamma(shape, scale) to `samples` by maximum likelihood.
///
/// The shape solves `ln k − ψ(k) = ln(mean) − mean(ln x)` by Newton's method
/// from the Choi–Wette closed-form start; the scale is `mean / k`.
pub fn fit_gamma(samples: &[f64]) -> Result<GammaFit> {
    if samples.len() < MIN_SAMPLES {
        return Err(Error::InsufficientData(alloc::format!(
            "Gamma fit needs at least {MIN_SAMPLES} samples, got {}",
            samples.len()
        )));
    }
    let n = samples.len() as f64;
    let mut sum = 0.0;
    let mut sum_ln = 0.0;
    for &raw in samples {
        if !raw.is_finite() || raw < 0.0 {
            return Err(Error::Domain(alloc::format!(
                "sample {raw} is outside the Gamma support"
            )));
        }
        let x = if raw == 0.0 { ZERO_SHIFT } else { raw };
        sum += x;
        sum_ln += x.ln();
    }
    let first = samples[0];
    if samples.iter().all(|&x| x == first) {
        return Err(Error::Fit("zero-variance input cannot be fitted".into()));
    }
    let mean = sum / n;
    let s = mean.ln() - sum_ln / n;
    if !(s > 0.0) {
        return Err(Error::Fit(alloc::format!("degenerate log-mean gap {s}")));
    }

    let mut k = (3.0 - s + ((s - 3.0) * (s - 3.0) + 24.0 * s).sqrt()) / (12.0 * s);
    let mut iterations = 0;
    for _ in 0..NEWTON_MAX_ITER {
        iterations += 1;
        let f = k.ln() - digamma(k) - s;
        let df = 1.0 / k - trigamma(k);
        let mut next = k - f / df;
        if !(next > 0.0) {
            next = 0.5 * k;
        }
        let delta = (next - k).abs();
        k = next;
        if delta < NEWTON_TOL {
            break;
        }
    }
    if !k.is_finite() {
        return Err(Error::Fit("shape iteration did not converge".into()));
    }
    Ok(GammaFit {
        shape: k,
        scale: mean / k,
        iterations,
    })
}

/// The `confidence`-quantile of Gamma(shape, scale).
pub fn threshold_for(shape: f64, scale: f64, confidence: f64) -> Result<f64> {
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::Domain(alloc::format!(
            "confidence {confidence} outside (0,1)"
        )));
    }
    if !(shape > 0.0) || !(scale > 0.0) {
        return Err(Error::Domain(alloc::format!(
            "shape {shape} and scale {scale} must be positive"
        )));
    }
    Ok(scale * gamma_quantile_unit(shape, confidence)?)
}

/// Fitted Gamma model armed with one confidence level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaModel {
    pub shape: f64,
    pub scale: f64,
    pub confidence: f64,
    pub threshold: f64,
}

impl GammaModel {
    pub fn new(shape: f64, scale: f64, confidence: f64) -> Result<Self> {
        let threshold = threshold_for(shape, scale, confidence)?;
        Ok(Self {
            shape,
            scale,
            confidence,
            threshold,
        })
    }

    pub fn from_fit(fit: &GammaFit, confidence: f64) -> Result<Self> {
        Self::new(fit.shape, fit.scale, confidence)
    }

    pub fn cdf(&self, x: f64) -> f64 {
        gamma_p(self.shape, x / self.scale)
    }

    pub fn is_alarm(&self, windowed_score: f64) -> bool {
        windowed_score > self.threshold
    }
}
