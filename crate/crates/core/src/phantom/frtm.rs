use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Coefficients of the data-driven reference-tissue form of a full
/// reference tissue model: `b0` multiplies the reference TAC, `b[j]`
/// the reference convolved with `exp(-alpha[j] t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GunnCoefficients {
    pub b0: f64,
    /// Index 0 is the fast rate (negative residue), index 1 the slow one.
    pub b: [f64; 2],
    pub alpha: [f64; 2],
}

impl GunnCoefficients {
    pub fn binding_potential(&self) -> f64 {
        self.b0 + self.b[0] / self.alpha[0] + self.b[1] / self.alpha[1]
    }

    pub fn delivery_ratio(&self) -> f64 {
        1.0 + self.b0
    }
}

/// Full reference tissue model `(R1, k2, k3, k4)` to exponential form.
///
/// The transfer function target/reference is
/// `R1 (s + k2/R1)(s + k3 + k4) / ((s + a1)(s + a2))`, whose partial
/// fractions give the coefficients.
pub fn frtm_to_gunn(r1: f64, k2: f64, k3: f64, k4: f64) -> Result<GunnCoefficients> {
    if !(r1 > 0.0 && k2 > 0.0 && k3 >= 0.0 && k4 > 0.0)
        || ![r1, k2, k3, k4].iter().all(|v| v.is_finite())
    {
        return Err(Error::Domain(format!(
            "FRTM needs R1, k2, k4 > 0 and k3 >= 0, got ({r1}, {k2}, {k3}, {k4})"
        )));
    }
    let s = k2 + k3 + k4;
    let disc = s * s - 4.0 * k2 * k4;
    if disc <= 0.0 {
        return Err(Error::Domain(format!(
            "FRTM rates give a non-positive discriminant {disc}"
        )));
    }
    let root = disc.sqrt();
    let fast = 0.5 * (s + root);
    // product form avoids cancellation for the small root
    let slow = k2 * k4 / fast;
    let alpha = [fast, slow];
    let residue = |j: usize| {
        let (aj, other) = (alpha[j], alpha[1 - j]);
        r1 * (k2 / r1 - aj) * (k3 + k4 - aj) / (other - aj)
    };
    Ok(GunnCoefficients {
        b0: r1 - 1.0,
        b: [residue(0), residue(1)],
        alpha,
    })
}
