//! Cramér-Rao bound on the cross-preamble CFO estimate and a numeric Fisher
//! information oracle for it.
//!
//! The closed form is
//!
//! ```text
//! CRLB(omega) = (1/Gamma_0 + 1/Gamma_1) / (2 * tau_c^2 * |r_k(omega)|^2)
//! Gamma_0 = sum_p |alpha^(p)|^2 / sigma^2[p,0]
//! Gamma_1 = sum_p mu^2 |alpha^(p)|^2 / sigma^2[p,1]
//! ```

use alloc::vec::Vec;

use num_complex::Complex64;
#[allow(unused_imports)]
use num_traits::Float;

use crate::estimators::noise_variance;
use crate::sequences::{autocorrelation, dirichlet_magnitude};
use crate::synthesis::PreambleSpec;
use crate::{Error, Result};

/// Default central-difference step for [`fisher_numeric`], rad/sample.
pub const DEFAULT_FISHER_STEP: f64 = 1e-5;
/// Largest tolerated relative gap between forward and central differences.
const STEP_TOLERANCE: f64 = 1e-2;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CrlbReport {
    pub gamma0: f64,
    pub gamma1: f64,
    /// rad^2/sample^2.
    pub bound: f64,
    pub r_mag: f64,
    pub tau_c: usize,
}

/// Aggregate SINRs `(Gamma_0, Gamma_1)` of one station over its frames.
///
/// Both sums are correctly rounded, so permuting or duplicating frames
/// changes the result exactly as the algebra says.
pub fn aggregate_sinr(alphas_k: &[Complex64], mu_k: f64, noise_vars: &[[f64; 2]]) -> (f64, f64) {
    let terms = || alphas_k.iter().zip(noise_vars).map(|(a, v)| (a.norm_sqr(), v));
    (
        exact_sum(terms().map(|(e, v)| e / v[0])),
        exact_sum(terms().map(|(e, v)| mu_k * mu_k * e / v[1])),
    )
}

/// Correctly rounded sum of finite values (Shewchuk's nonoverlapping
/// partials with a final half-way correction).
fn exact_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut partials: Vec<f64> = Vec::new();
    for mut x in values {
        let mut kept = 0;
        for j in 0..partials.len() {
            let mut y = partials[j];
            if x.abs() < y.abs() {
                core::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != 0.0 {
                partials[kept] = lo;
                kept += 1;
            }
            x = hi;
        }
        partials.truncate(kept);
        partials.push(x);
    }
    let Some(mut hi) = partials.pop() else {
        return 0.0;
    };
    let mut lo = 0.0;
    while let Some(y) = partials.pop() {
        let x = hi;
        hi = x + y;
        lo = y - (hi - x);
        if lo != 0.0 {
            break;
        }
    }
    // Round half-way cases the way the exact sum would.
    if let Some(&next) = partials.last() {
        if (lo < 0.0 && next < 0.0) || (lo > 0.0 && next > 0.0) {
            let y = lo * 2.0;
            let x = hi + y;
            if y == x - hi {
                hi = x;
            }
        }
    }
    hi
}

/// Closed-form bound from the aggregate SINRs and `|r_k(omega)|`.
pub fn crlb_cfo(gamma0: f64, gamma1: f64, r_mag: f64, tau_c: usize) -> Result<CrlbReport> {
    if !(gamma0 > 0.0) || !(gamma1 > 0.0) {
        return Err(Error::param("gamma", "aggregate SINRs must be positive"));
    }
    if !(r_mag > 0.0) {
        return Err(Error::param("r_mag", "correlation magnitude must be positive"));
    }
    if tau_c == 0 {
        return Err(Error::param("tau_c", "phase baseline must be positive"));
    }
    let tc = tau_c as f64;
    Ok(CrlbReport {
        gamma0,
        gamma1,
        bound: (1.0 / gamma0 + 1.0 / gamma1) / (2.0 * tc * tc * r_mag * r_mag),
        r_mag,
        tau_c,
    })
}

/// Gaussian model of one station's correlation statistics: mean
/// `alpha_p * r_{k,i}(-omega) * (mu * exp(j*omega*tau_c))^i` and variance
/// `noise_vars[p][i]`. The gains are frame referenced, i.e. they already carry
/// any per-frame phase.
#[derive(Debug, Clone, PartialEq)]
pub struct StatisticModel {
    pub preamble: PreambleSpec,
    pub tau_c: usize,
    pub alphas: Vec<Complex64>,
    pub mu: f64,
    pub noise_vars: Vec<[f64; 2]>,
}

impl StatisticModel {
    /// Variances from the interference model: `interferers[q][p]` are the
    /// other stations' gains.
    pub fn from_interference(
        preamble: PreambleSpec,
        alphas: Vec<Complex64>,
        interferers: &[Vec<Complex64>],
        sigma_c2: f64,
        sigma_n2: f64,
    ) -> Self {
        let n = preamble.seq_len();
        let mu = preamble.mu();
        let tau_c = n + preamble.tau0();
        let mut others = Vec::with_capacity(interferers.len());
        let noise_vars = (0..alphas.len())
            .map(|p| {
                others.clear();
                others.extend(interferers.iter().map(|a| a[p]));
                [0, 1].map(|i| noise_variance(&others, mu, i, sigma_c2, sigma_n2, n))
            })
            .collect();
        StatisticModel {
            preamble,
            tau_c,
            alphas,
            mu,
            noise_vars,
        }
    }

    pub fn mean(&self, p: usize, i: usize, omega: f64) -> Complex64 {
        let r = autocorrelation(self.preamble.seq(i), -omega);
        let second = if i == 0 {
            Complex64::new(1.0, 0.0)
        } else {
            Complex64::from_polar(self.mu, omega * self.tau_c as f64)
        };
        self.alphas[p] * r * second
    }

    pub fn aggregate_sinr(&self) -> (f64, f64) {
        aggregate_sinr(&self.alphas, self.mu, &self.noise_vars)
    }

    /// Closed-form bound at `omega`.
    pub fn crlb(&self, omega: f64) -> Result<CrlbReport> {
        let (g0, g1) = self.aggregate_sinr();
        crlb_cfo(g0, g1, dirichlet_magnitude(self.preamble.seq_len(), omega), self.tau_c)
    }
}

/// `[I^-1]_{omega,omega}` of the Fisher information over `omega` and a common
/// unknown phase of the gains, with mean derivatives in `omega` taken by
/// central differences of step `step`.
///
/// Fails with [`Error::StepInstability`] when the Fisher entry built from
/// forward differences differs from the central one by more than 1%.
pub fn fisher_numeric(model: &StatisticModel, omega: f64, step: f64) -> Result<f64> {
    if !(step > 0.0) {
        return Err(Error::param("step", "must be positive"));
    }
    if model.noise_vars.iter().flatten().any(|&v| !(v > 0.0)) {
        return Err(Error::param("noise_vars", "variances must be positive"));
    }
    let mut central = [0.0; 3];
    let mut forward_ww = 0.0;
    for p in 0..model.alphas.len() {
        for i in 0..2 {
            let var = model.noise_vars[p][i];
            let m = model.mean(p, i, omega);
            let up = model.mean(p, i, omega + step);
            let d_c = (up - model.mean(p, i, omega - step)) / (2.0 * step);
            let d_f = (up - m) / step;
            // The derivative in the common phase is j * mean.
            let d_t = Complex64::i() * m;
            central[0] += 2.0 * d_c.norm_sqr() / var;
            central[1] += 2.0 * (d_c.conj() * d_t).re / var;
            central[2] += 2.0 * d_t.norm_sqr() / var;
            forward_ww += 2.0 * d_f.norm_sqr() / var;
        }
    }
    let relative = (forward_ww - central[0]).abs() / central[0].abs().max(f64::MIN_POSITIVE);
    if relative > STEP_TOLERANCE {
        return Err(Error::StepInstability { relative });
    }
    let det = central[0] * central[2] - central[1] * central[1];
    if !(det > 0.0) {
        return Err(Error::Degenerate {
            what: "Fisher information",
            magnitude: det.abs(),
        });
    }
    Ok(central[2] / det)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthesis::zc_preambles;

    fn model(frames: usize, scale: f64) -> StatisticModel {
        let pre = zc_preambles(1, 127, 127, 1.0).unwrap().remove(0);
        let alphas = (0..frames)
            .map(|p| Complex64::from_polar(0.5 + 0.1 * p as f64, p as f64))
            .collect();
        StatisticModel {
            preamble: pre,
            tau_c: 254,
            alphas,
            mu: 1.0,
            noise_vars: alloc::vec![[0.02 * scale, 0.03 * scale]; frames],
        }
    }

    #[test]
    fn aggregate_examples() {
        let a = alloc::vec![Complex64::from_polar(2.0, 0.4); 5];
        let (g0, g1) = aggregate_sinr(&a, 1.0, &alloc::vec![[0.5, 0.5]; 5]);
        assert!((g0 - 40.0).abs() < 1e-12 && (g1 - 40.0).abs() < 1e-12);
        assert_eq!(
            aggregate_sinr(&[Complex64::new(0.0, 0.0); 3], 1.0, &[[1.0, 1.0]; 3]),
            (0.0, 0.0)
        );
        let (g0, g1) = aggregate_sinr(&a, 2.0, &alloc::vec![[0.5, 2.0]; 5]);
        assert!((g0 - g1).abs() < 1e-12);
    }

    #[test]
    fn exact_sum_is_correctly_rounded() {
        assert_eq!(exact_sum([0.1; 10].into_iter()), 1.0);
        assert_eq!(exact_sum([1e100, 1.0, -1e100, 1e-100].into_iter()), 1.0);
        assert_eq!(exact_sum([1.0, 1e-16, 1e-16].into_iter()), 1.0000000000000002);
        assert_eq!(exact_sum(core::iter::empty()), 0.0);
    }

    #[test]
    fn closed_form_algebra() {
        let r = crlb_cfo(10.0, 10.0, 0.9, 254).unwrap();
        let expect = 1.0 / (10.0 * 254.0f64.powi(2) * 0.81);
        assert!((r.bound - expect).abs() / expect < 1e-14);
        let half = crlb_cfo(5.0, 5.0, 1.0, 254).unwrap().bound / crlb_cfo(5.0, 10.0, 1.0, 254).unwrap().bound;
        assert!(half > 1.0);
        let ratio = crlb_cfo(3.0, 4.0, 0.5, 254).unwrap().bound / crlb_cfo(3.0, 4.0, 1.0, 254).unwrap().bound;
        assert!((ratio - 4.0).abs() < 1e-12);
        assert!(crlb_cfo(0.0, 1.0, 1.0, 254).is_err());
        assert!(crlb_cfo(1.0, 1.0, 0.0, 254).is_err());
    }

    #[test]
    fn numeric_matches_closed_form_small_offset() {
        let m = model(4, 1.0);
        let closed = m.crlb(0.001).unwrap().bound;
        let numeric = fisher_numeric(&m, 0.001, DEFAULT_FISHER_STEP).unwrap();
        assert!((numeric - closed).abs() / closed < 1e-3, "{numeric} vs {closed}");
    }

    #[test]
    fn numeric_scales_with_noise_and_frames() {
        let a = fisher_numeric(&model(4, 1.0), 0.001, DEFAULT_FISHER_STEP).unwrap();
        let b = fisher_numeric(&model(4, 0.5), 0.001, DEFAULT_FISHER_STEP).unwrap();
        assert!((a / b - 2.0).abs() < 1e-6);
        let mut one = model(1, 1.0);
        one.alphas[0] = Complex64::new(1.0, 0.0);
        let mut two = model(2, 1.0);
        two.alphas = alloc::vec![Complex64::new(1.0, 0.0); 2];
        let ratio = fisher_numeric(&one, 0.001, DEFAULT_FISHER_STEP).unwrap()
            / fisher_numeric(&two, 0.001, DEFAULT_FISHER_STEP).unwrap();
        assert!((ratio - 2.0).abs() < 1e-3);
    }

    #[test]
    fn coarse_step_is_rejected() {
        assert!(matches!(
            fisher_numeric(&model(2, 1.0), 0.001, 0.05),
            Err(Error::StepInstability { .. })
        ));
    }
}
