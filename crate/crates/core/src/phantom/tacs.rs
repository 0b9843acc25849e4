use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::model::AcquisitionTimeline;

/// Three-exponential arterial input
/// `(a1 t - a2 - a3) e^{-l1 t} + a2 e^{-l2 t} + a3 e^{-l3 t}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArterialInput {
    pub a: [f64; 3],
    pub lambda: [f64; 3],
}

impl Default for ArterialInput {
    /// Classic FDG-like plasma curve (kBq/mL, min).
    fn default() -> Self {
        Self {
            a: [851.1, 21.9, 20.8],
            lambda: [4.134, 0.1191, 0.01043],
        }
    }
}

impl ArterialInput {
    pub fn value(&self, t: f64) -> f64 {
        let [a1, a2, a3] = self.a;
        let [l1, l2, l3] = self.lambda;
        (a1 * t - a2 - a3) * (-l1 * t).exp() + a2 * (-l2 * t).exp() + a3 * (-l3 * t).exp()
    }

    /// One-tissue compartment response `K1 e^{-k2 t} * Cp(t)` in closed form.
    pub fn one_tissue_response(&self, k1: f64, k2: f64, t: f64) -> f64 {
        let [a1, a2, a3] = self.a;
        let [l1, l2, l3] = self.lambda;
        let ek = (-k2 * t).exp();
        let exp_term = |lam: f64| {
            let d = k2 - lam;
            if d.abs() < 1e-12 {
                t * (-lam * t).exp()
            } else {
                ((-lam * t).exp() - ek) / d
            }
        };
        let ramp_term = {
            let d = k2 - l1;
            if d.abs() < 1e-12 {
                0.5 * t * t * (-l1 * t).exp()
            } else {
                ((-l1 * t).exp() * (d * t - 1.0) + ek) / (d * d)
            }
        };
        k1 * (a1 * ramp_term - (a2 + a3) * exp_term(l1) + a2 * exp_term(l2) + a3 * exp_term(l3))
    }
}

/// One-tissue uptake parameters of a non-specific tissue.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UptakeParams {
    pub k1: f64,
    pub k2: f64,
}

/// `[gray, white, blood]` TACs sampled at the frame mid-times.
pub fn generate_factor_tacs(
    input: &ArterialInput,
    gray: UptakeParams,
    white: UptakeParams,
    timeline: &AcquisitionTimeline,
) -> Array2<f64> {
    let t = timeline.mid_times();
    Array2::from_shape_fn((t.len(), 3), |(l, k)| match k {
        0 => input.one_tissue_response(gray.k1, gray.k2, t[l]),
        1 => input.one_tissue_response(white.k1, white.k2, t[l]),
        _ => input.value(t[l]),
    })
    .mapv(|v: f64| v.max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_matches_quadrature() {
        let input = ArterialInput::default();
        for &(k1, k2, t) in &[(0.12, 0.05, 3.0), (0.08, 0.025, 45.0), (0.1, 4.134, 2.0)] {
            // composite Simpson on a fine grid
            let n = 200_000;
            let h = t / n as f64;
            let f = |tau: f64| input.value(tau) * (-k2 * (t - tau)).exp();
            let mut s = f(0.0) + f(t);
            for i in 1..n {
                s += f(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
            }
            let quad = k1 * s * h / 3.0;
            let closed = input.one_tissue_response(k1, k2, t);
            assert!(
                (closed - quad).abs() < 1e-8 * quad.abs().max(1.0),
                "{closed} vs {quad}"
            );
        }
    }

    #[test]
    fn response_starts_at_zero() {
        let input = ArterialInput::default();
        assert_eq!(input.one_tissue_response(0.1, 0.05, 0.0), 0.0);
    }
}
