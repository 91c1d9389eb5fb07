//! Log-likelihood of the observed counts on the logit scale, with analytic
//! gradients.
//!
//! The infected count is an integer, so for optimisation and sampling the
//! main-study factor is relaxed: at `x = pi * n_main` it is the linear blend
//! of the exact convolution at `floor(x)` and `floor(x) + 1`.

use crate::baselines::logit::{sigmoid, DEFAULT_LOGIT_EPS};
use crate::model::{LogBinomial, PositiveCounts, StudyDesign};

/// Largest usable logit magnitude; beyond it the rates are clamped.
pub fn psi_limit() -> f64 {
    ((1.0 - DEFAULT_LOGIT_EPS) / DEFAULT_LOGIT_EPS).ln()
}

#[derive(Debug, Clone, Copy)]
pub struct Likelihood {
    pub design: StudyDesign,
    pub observed: PositiveCounts,
}

/// `(log m, d log m / d psi0, d log m / d psi1)` for the main factor.
type MainTerms = (f64, f64, f64);

impl Likelihood {
    pub fn new(design: StudyDesign, observed: PositiveCounts) -> Self {
        Self { design, observed }
    }

    fn main_terms(&self, p: f64, q: f64, k: u32) -> MainTerms {
        let n = self.design.n_main;
        let s = self.observed.s_main;
        let infected = LogBinomial::new(k, q);
        let healthy = LogBinomial::new(n - k, p);
        let lo = s.saturating_sub(n - k);
        let hi = s.min(k);
        if lo > hi {
            return (f64::NEG_INFINITY, 0.0, 0.0);
        }
        let terms: Vec<(f64, f64, f64)> = (lo..=hi)
            .map(|j| {
                let l = infected.ln_pmf(j) + healthy.ln_pmf(s - j);
                let gp = (s - j) as f64 - (n - k) as f64 * p;
                let gq = j as f64 - k as f64 * q;
                (l, gp, gq)
            })
            .collect();
        let max = terms.iter().map(|t| t.0).fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            return (max, 0.0, 0.0);
        }
        let (mut sum, mut dp, mut dq) = (0.0, 0.0, 0.0);
        for (l, gp, gq) in terms {
            let w = (l - max).exp();
            sum += w;
            dp += w * gp;
            dq += w * gq;
        }
        (max + sum.ln(), dp / sum, dq / sum)
    }

    fn calibration(&self, p: f64, q: f64) -> (f64, f64, f64) {
        let d = &self.design;
        let o = &self.observed;
        let neg = LogBinomial::new(d.n_cal_neg, p).ln_pmf(o.s_cal_neg);
        let pos = LogBinomial::new(d.n_cal_pos, q).ln_pmf(o.s_cal_pos);
        let dneg = o.s_cal_neg as f64 - d.n_cal_neg as f64 * p;
        let dpos = o.s_cal_pos as f64 - d.n_cal_pos as f64 * q;
        (neg + pos, dneg, dpos)
    }

    /// Exact log-likelihood at an integer infected count, with gradient with
    /// respect to `(logit p, logit q)`.
    pub fn at_count_with_grad(&self, psi0: f64, psi1: f64, k: u32) -> (f64, [f64; 2]) {
        let limit = psi_limit();
        let (p, q) = (sigmoid(psi0.clamp(-limit, limit)), sigmoid(psi1.clamp(-limit, limit)));
        let (cal, dneg, dpos) = self.calibration(p, q);
        let (lm, dp, dq) = self.main_terms(p, q, k);
        let mask = |psi: f64, g: f64| if psi.abs() > limit { 0.0 } else { g };
        (cal + lm, [mask(psi0, dneg + dp), mask(psi1, dpos + dq)])
    }

    pub fn at_count(&self, psi0: f64, psi1: f64, k: u32) -> f64 {
        self.at_count_with_grad(psi0, psi1, k).0
    }

    /// Relaxed log-likelihood and its gradient in `psi`.
    pub fn relaxed_with_grad(&self, psi: &[f64; 3]) -> (f64, [f64; 3]) {
        let limit = psi_limit();
        let clamped = psi.map(|v| v.clamp(-limit, limit));
        let p = sigmoid(clamped[0]);
        let q = sigmoid(clamped[1]);
        let pi = sigmoid(clamped[2]);
        let n = self.design.n_main;
        let (cal, dneg, dpos) = self.calibration(p, q);
        let x = pi * n as f64;
        let kf = (x.floor() as u32).min(n);
        let (lm, dp, dq, dpi) = if kf == n {
            let (l, a, b) = self.main_terms(p, q, n);
            (l, a, b, 0.0)
        } else {
            let w = x - kf as f64;
            let (lf, f0, f1) = self.main_terms(p, q, kf);
            let (lc, c0, c1) = self.main_terms(p, q, kf + 1);
            let top = lf.max(lc);
            if top == f64::NEG_INFINITY {
                (top, 0.0, 0.0, 0.0)
            } else {
                let ef = (lf - top).exp();
                let ec = (lc - top).exp();
                let a = (1.0 - w) * ef;
                let b = w * ec;
                let s = a + b;
                let dpi = n as f64 * pi * (1.0 - pi) * (ec - ef) / s;
                (top + s.ln(), (a * f0 + b * c0) / s, (a * f1 + b * c1) / s, dpi)
            }
        };
        let grad = [dneg + dp, dpos + dq, dpi];
        let mut g = [0.0; 3];
        for i in 0..3 {
            g[i] = if psi[i].abs() > limit || !grad[i].is_finite() {
                0.0
            } else {
                grad[i]
            };
        }
        (cal + lm, g)
    }

    pub fn relaxed(&self, psi: &[f64; 3]) -> f64 {
        self.relaxed_with_grad(psi).0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{log_joint_density, ParamPoint};

    fn sc() -> Likelihood {
        Likelihood::new(
            StudyDesign::new(401, 197, 3330).unwrap(),
            PositiveCounts::new(2, 178, 50),
        )
    }

    #[test]
    fn relaxed_matches_exact_at_integers() {
        let lik = sc();
        let (p, q) = (0.006f64, 0.88f64);
        let k = 30;
        let pi = k as f64 / 3330.0;
        let psi = [(p / (1.0 - p)).ln(), (q / (1.0 - q)).ln(), (pi / (1.0 - pi)).ln()];
        let theta = ParamPoint::new(sigmoid(psi[0]), sigmoid(psi[1]), k).unwrap();
        let exact = log_joint_density(&lik.observed, &theta, &lik.design, None).unwrap();
        assert!((lik.relaxed(&psi) - exact).abs() < 1e-8);
        assert!((lik.at_count(psi[0], psi[1], k) - exact).abs() < 1e-10);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let lik = sc();
        for psi in [[-5.1, 2.0, -4.43], [-4.0, 1.5, -4.0], [-6.0, 2.5, -5.05]] {
            let (_, g) = lik.relaxed_with_grad(&psi);
            for i in 0..3 {
                let h = 1e-6;
                let mut up = psi;
                let mut dn = psi;
                up[i] += h;
                dn[i] -= h;
                let fd = (lik.relaxed(&up) - lik.relaxed(&dn)) / (2.0 * h);
                assert!(
                    (fd - g[i]).abs() < 1e-5 * (1.0 + g[i].abs()),
                    "coord {i}: {fd} vs {}",
                    g[i]
                );
            }
        }
    }
}
