use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

/// Default clamp for `logit(0)` and `logit(1)`.
pub const DEFAULT_LOGIT_EPS: f64 = 1e-8;

/// `log(x / (1 - x))` with `x` clamped into `[eps, 1 - eps]`.
pub fn logit_clamped(x: f64, eps: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(domain(format!("logit argument {x} outside [0, 1]")));
    }
    if !(eps > 0.0 && eps < 0.5) {
        return Err(domain(format!("logit clamp {eps} outside (0, 0.5)")));
    }
    let x = x.clamp(eps, 1.0 - eps);
    Ok((x / (1.0 - x)).ln())
}

pub fn sigmoid(psi: f64) -> f64 {
    if psi >= 0.0 {
        1.0 / (1.0 + (-psi).exp())
    } else {
        let e = psi.exp();
        e / (1.0 + e)
    }
}

/// Logits of `(p, q, pi)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NaturalParams {
    pub psi0: f64,
    pub psi1: f64,
    pub psi2: f64,
}

impl NaturalParams {
    pub fn from_rates(p: f64, q: f64, pi: f64) -> Result<Self> {
        Ok(Self {
            psi0: logit_clamped(p, DEFAULT_LOGIT_EPS)?,
            psi1: logit_clamped(q, DEFAULT_LOGIT_EPS)?,
            psi2: logit_clamped(pi, DEFAULT_LOGIT_EPS)?,
        })
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Self {
            psi0: a[0],
            psi1: a[1],
            psi2: a[2],
        }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.psi0, self.psi1, self.psi2]
    }

    /// `(p, q, pi)`, each strictly inside `(0, 1)` for finite inputs within the clamp.
    pub fn rates(&self) -> (f64, f64, f64) {
        (sigmoid(self.psi0), sigmoid(self.psi1), sigmoid(self.psi2))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn logit_values() {
        assert_eq!(logit_clamped(0.5, 1e-8).unwrap(), 0.0);
        let lo = logit_clamped(0.0, 1e-8).unwrap();
        assert!((lo - (1e-8f64 / (1.0 - 1e-8)).ln()).abs() < 1e-12);
        assert!((lo + 18.420680733952367).abs() < 1e-9);
        assert!((logit_clamped(1.0, 1e-8).unwrap() + lo).abs() < 1e-7);
        assert!(logit_clamped(1.2, 1e-8).is_err());
        assert!(logit_clamped(0.2, 0.7).is_err());
    }

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(-800.0), 0.0);
        assert_eq!(sigmoid(800.0), 1.0);
        assert!((sigmoid(0.0) - 0.5).abs() < 1e-16);
    }
}
