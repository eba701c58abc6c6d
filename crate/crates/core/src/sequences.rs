//! Training sequences and the correlation primitives built on them.
//!
//! Correlations follow
//! `r(a, b; tau, omega) = (1/N) * sum_m a[m] * conj(b[m - tau]) * exp(-j*omega*m)`
//! with `b` treated as zero outside `0..N`.

use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;
#[allow(unused_imports)]
use num_traits::Float;

use crate::{Error, Result};

/// Tolerance on the unit-modulus check for custom sequences.
const ENVELOPE_TOL: f64 = 1e-12;

/// Where a [`TrainingSequence`] came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum SequenceFamily {
    ZadoffChu { root: u32 },
    Custom,
}

/// A unit-modulus complex training sequence of length `N >= 3`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSequence {
    samples: Vec<Complex64>,
    family: SequenceFamily,
}

impl TrainingSequence {
    /// Wraps caller-provided samples. Every sample must have unit magnitude.
    pub fn custom(samples: Vec<Complex64>) -> Result<Self> {
        if samples.len() < 3 {
            return Err(Error::param("length", "training sequences need at least 3 samples"));
        }
        if let Some(m) = samples.iter().position(|s| (s.norm() - 1.0).abs() > ENVELOPE_TOL) {
            return Err(Error::param(
                "samples",
                alloc::format!("sample {m} is not unit modulus"),
            ));
        }
        Ok(TrainingSequence {
            samples,
            family: SequenceFamily::Custom,
        })
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn family(&self) -> SequenceFamily {
        self.family
    }

    /// ZC root index, if this is a Zadoff-Chu sequence.
    pub fn root(&self) -> Option<u32> {
        match self.family {
            SequenceFamily::ZadoffChu { root } => Some(root),
            SequenceFamily::Custom => None,
        }
    }
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

/// Zadoff-Chu sequence `c[m] = exp(-j*pi*root*m*(m+1)/N)` for odd `N`.
///
/// The phase is reduced modulo `2N` in integer arithmetic, so long sequences
/// keep full precision.
pub fn generate_zc(root: u32, length: usize) -> Result<TrainingSequence> {
    if length < 3 || length % 2 == 0 {
        return Err(Error::param("length", "ZC length must be odd and at least 3"));
    }
    if root == 0 || gcd(u64::from(root), length as u64) != 1 {
        return Err(Error::param(
            "root",
            "root must be positive and coprime with the length",
        ));
    }
    let n = length as u64;
    let modulus = 2 * n;
    let u = u64::from(root) % modulus;
    let samples = (0..n)
        .map(|m| {
            // m(m+1) is reduced first to keep the product inside u64.
            let q = (u * ((m * (m + 1)) % modulus)) % modulus;
            Complex64::cis(-PI * q as f64 / n as f64)
        })
        .collect();
    Ok(TrainingSequence {
        samples,
        family: SequenceFamily::ZadoffChu { root },
    })
}

/// Normalized cross-correlation of `a` against `b` delayed by `tau` samples,
/// evaluated at frequency offset `omega` (rad/sample).
pub fn cross_correlate(a: &TrainingSequence, b: &TrainingSequence, tau: i64, omega: f64) -> Complex64 {
    correlate_slices(a.samples(), b.samples(), tau, omega)
}

pub(crate) fn correlate_slices(a: &[Complex64], b: &[Complex64], tau: i64, omega: f64) -> Complex64 {
    let n = a.len();
    let acc: Complex64 = a
        .iter()
        .enumerate()
        .filter_map(|(m, &am)| {
            let idx = m as i64 - tau;
            if idx < 0 || idx as usize >= b.len() {
                return None;
            }
            Some(am * b[idx as usize].conj() * Complex64::cis(-omega * m as f64))
        })
        .sum();
    acc / n as f64
}

/// Autocorrelation `r(omega)` at zero delay.
pub fn autocorrelation(seq: &TrainingSequence, omega: f64) -> Complex64 {
    cross_correlate(seq, seq, 0, omega)
}

/// Magnitude of the Dirichlet kernel `|sin(N*omega/2) / (N*sin(omega/2))|`.
pub fn dirichlet_magnitude(n: usize, omega: f64) -> f64 {
    let half = 0.5 * omega;
    let den = n as f64 * half.sin();
    if den.abs() < 1e-300 {
        return 1.0;
    }
    ((n as f64 * half).sin() / den).abs()
}

/// Empirical sidelobe variance `sigma_c^2` of a sequence family.
///
/// Collects `cross_correlate(a, b, tau, 0)` over every ordered pair of
/// distinct family members and every `tau` in `{0} ∪ delays`, skipping pairs
/// whose samples coincide at `tau = 0` (the matched case). Returns `N` times
/// the sample variance, so a family with `|r| ≈ 1/sqrt(N)` sidelobes gives
/// `sigma_c^2 ≈ 1`.
pub fn estimate_sigma_c(family: &[TrainingSequence], delays: &[i64]) -> Result<f64> {
    if family.len() < 2 {
        return Err(Error::param("family", "need at least two sequences"));
    }
    let n = family[0].len();
    if family.iter().any(|s| s.len() != n) {
        return Err(Error::param("family", "sequences must share one length"));
    }
    let mut taus: Vec<i64> = Vec::with_capacity(delays.len() + 1);
    taus.push(0);
    taus.extend(delays.iter().copied().filter(|&d| d != 0));
    taus.sort_unstable();
    taus.dedup();

    let mut values = Vec::new();
    for (ia, a) in family.iter().enumerate() {
        for (ib, b) in family.iter().enumerate() {
            if ia == ib {
                continue;
            }
            let identical = a.samples() == b.samples();
            for &tau in &taus {
                if identical && tau == 0 {
                    continue;
                }
                values.push(cross_correlate(a, b, tau, 0.0));
            }
        }
    }
    if values.len() < 2 {
        return Err(Error::param("family", "not enough mismatched correlations"));
    }
    let count = values.len() as f64;
    let mean = values.iter().sum::<Complex64>() / count;
    let var = values.iter().map(|v| (v - mean).norm_sqr()).sum::<f64>() / (count - 1.0);
    Ok(n as f64 * var)
}
