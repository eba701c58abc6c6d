//! Comparison CFO estimators: CP correlation, split-sequence
//! autocorrelation, per-frame separate estimates combined by channel power,
//! and the separate estimator itself.

use alloc::vec::Vec;

use num_complex::Complex64;
#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;

pub use crate::estimators::separate_cfo;
use crate::estimators::{separate_cfo_frame, CorrelationGrid, ReceiverModel, DEGENERATE_MAGNITUDE};
use crate::sequences::TrainingSequence;
use crate::synthesis::{add_noise, superpose, GroundTruth, PreambleSpec, ReceivedBurst, ScenarioConfig};
use crate::{Error, Result};

/// Cyclic-prefix wrapping of each training sequence: the sequence is
/// repeated cyclically to `n_fft` samples and its last `n_cp` samples are
/// copied in front.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CpWrapConfig {
    pub n_fft: usize,
    pub n_cp: usize,
}

impl Default for CpWrapConfig {
    fn default() -> Self {
        CpWrapConfig { n_fft: 256, n_cp: 32 }
    }
}

impl CpWrapConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_cp == 0 || self.n_cp >= self.n_fft {
            return Err(Error::param("n_cp", "need 0 < n_cp < n_fft"));
        }
        Ok(())
    }

    /// Samples per wrapped sequence.
    pub fn block_len(&self) -> usize {
        self.n_fft + self.n_cp
    }

    /// `[cp; body]` for one sequence.
    pub fn wrap(&self, seq: &TrainingSequence) -> Vec<Complex64> {
        let c = seq.samples();
        let body = (0..self.n_fft).map(|m| c[m % c.len()]);
        let prefix = (self.n_fft - self.n_cp..self.n_fft).map(|m| c[m % c.len()]);
        prefix.chain(body).collect()
    }

    /// `[wrap(c_0); 0_{tau0}; mu * wrap(c_1)]`.
    pub fn wrap_preamble(&self, spec: &PreambleSpec, mu: f64) -> Vec<Complex64> {
        let mut out = self.wrap(spec.seq0());
        out.resize(out.len() + spec.tau0(), Complex64::new(0.0, 0.0));
        out.extend(self.wrap(spec.seq1()).into_iter().map(|s| s * mu));
        out
    }

    /// Sample index where each CP of a station at `delay` starts, frame by
    /// frame.
    pub fn block_starts(&self, frame_len: usize, num_frames: usize, tau0: usize, delay: usize) -> Vec<usize> {
        (0..num_frames)
            .flat_map(|p| {
                let base = p * frame_len + delay;
                [base, base + self.block_len() + tau0]
            })
            .collect()
    }
}

/// Synthesizes a burst in which every station sends CP-wrapped preambles.
pub fn synthesize_cp_burst<R: Rng + ?Sized>(
    config: &ScenarioConfig,
    truth: &GroundTruth,
    cfg: &CpWrapConfig,
    rng: &mut R,
) -> Result<ReceivedBurst> {
    cfg.validate()?;
    let waves: Vec<_> = config
        .preambles
        .iter()
        .zip(&truth.mus)
        .map(|(spec, &mu)| cfg.wrap_preamble(spec, mu))
        .collect();
    let longest = waves.iter().map(Vec::len).max().unwrap_or(0);
    if truth.delays.iter().any(|&d| d + longest > config.frame_len) {
        return Err(Error::param("cp", "wrapped preamble does not fit in the frame"));
    }
    let mut samples = superpose(&waves, truth, config.frame_len, config.num_frames, config.obs_len());
    add_noise(&mut samples, config.noise_var, rng);
    Ok(ReceivedBurst {
        samples,
        config: config.clone(),
        truth: Some(truth.clone()),
    })
}

/// CP correlator: `angle(sum conj(y[m]) * y[m + n_fft]) / n_fft` over the
/// prefixes starting at `block_starts`.
pub fn cp_blind_cfo(samples: &[Complex64], cfg: &CpWrapConfig, block_starts: &[usize]) -> Result<f64> {
    cfg.validate()?;
    let mut acc = Complex64::new(0.0, 0.0);
    for &s in block_starts {
        let end = s + cfg.block_len();
        if end > samples.len() {
            return Err(Error::WindowOutOfRange {
                start: s,
                end,
                len: samples.len(),
            });
        }
        acc += samples[s..s + cfg.n_cp]
            .iter()
            .zip(&samples[s + cfg.n_fft..end])
            .map(|(a, b)| a.conj() * b)
            .sum::<Complex64>();
    }
    let magnitude = acc.norm();
    if !(magnitude >= DEGENERATE_MAGNITUDE) {
        return Err(Error::Degenerate {
            what: "CP correlation",
            magnitude,
        });
    }
    Ok(acc.arg() / cfg.n_fft as f64)
}

/// Split point and lag of the half-sequence correlator for length `n`:
/// halves of `n / 2` samples, the late one starting at `n - n / 2` (odd
/// lengths drop the middle sample).
pub fn split_lag(n: usize) -> (usize, usize) {
    let half = n / 2;
    (half, n - half)
}

/// Early and late half-sequence correlations of a window starting at `start`.
pub fn split_correlations(
    signal: &[Complex64],
    seq: &TrainingSequence,
    start: usize,
) -> Result<(Complex64, Complex64)> {
    let c = seq.samples();
    let (half, lag) = split_lag(c.len());
    let end = start + c.len();
    if end > signal.len() {
        return Err(Error::WindowOutOfRange {
            start,
            end,
            len: signal.len(),
        });
    }
    let corr = |off: usize| -> Complex64 {
        signal[start + off..start + off + half]
            .iter()
            .zip(&c[off..off + half])
            .map(|(y, s)| y * s.conj())
            .sum::<Complex64>()
            / half as f64
    };
    Ok((corr(0), corr(lag)))
}

/// Split-autocorrelation estimate from one training sequence window.
pub fn autocorr_split_cfo(signal: &[Complex64], seq: &TrainingSequence, start: usize) -> Result<f64> {
    let (early, late) = split_correlations(signal, seq, start)?;
    split_angle(late * early.conj(), seq.len())
}

fn split_angle(z: Complex64, n: usize) -> Result<f64> {
    let magnitude = z.norm();
    if !(magnitude >= DEGENERATE_MAGNITUDE) {
        return Err(Error::Degenerate {
            what: "split correlation",
            magnitude,
        });
    }
    Ok(z.arg() / split_lag(n).1 as f64)
}

/// Split-autocorrelation estimate of station `k` pooling every frame and both
/// sequences: the lag products `z_late * conj(z_early)` are summed before the
/// angle is taken, so frames add coherently whatever their gains.
pub fn autocorr_split_station(signal: &[Complex64], model: &ReceiverModel, k: usize) -> Result<f64> {
    let mut acc = Complex64::new(0.0, 0.0);
    for p in 0..model.num_frames() {
        for i in 0..2 {
            let start = model.layout.window_start(p, i, model.delays[k]);
            let (early, late) = split_correlations(signal, model.preambles[k].seq(i), start)?;
            acc += late * early.conj();
        }
    }
    split_angle(acc, model.layout.seq_len)
}

/// `sum_p w_p * omega_p / sum_p w_p`.
pub fn weighted_average_cfo(estimates: &[f64], weights: &[f64]) -> Result<f64> {
    if estimates.len() != weights.len() {
        return Err(Error::param("weights", "need one weight per estimate"));
    }
    if weights.iter().any(|&w| !(w >= 0.0 && w.is_finite())) {
        return Err(Error::param("weights", "weights must be finite and nonnegative"));
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(Error::param("weights", "all weights are zero"));
    }
    Ok(estimates.iter().zip(weights).map(|(e, w)| e * w).sum::<f64>() / total)
}

/// Per-frame separate estimates of station `k` averaged with weights
/// `|alpha_hat_k^(p)|^2`. Frames whose statistics vanish get zero weight.
pub fn weighted_average_station(grid: &CorrelationGrid, k: usize, alphas_k: &[Complex64], mu_k: f64) -> Result<f64> {
    let mut estimates = Vec::with_capacity(grid.num_frames());
    let mut weights = Vec::with_capacity(grid.num_frames());
    for p in 0..grid.num_frames() {
        match separate_cfo_frame(grid, k, p, mu_k) {
            Ok(w) => {
                estimates.push(w);
                weights.push(alphas_k[p].norm_sqr());
            }
            Err(Error::Degenerate { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    weighted_average_cfo(&estimates, &weights)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sequences::generate_zc;
    use crate::synthesis::{model_signal, DelayPlan};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn truth(omega: f64, frames: usize) -> GroundTruth {
        GroundTruth {
            omegas: alloc::vec![omega],
            alphas: alloc::vec![(0..frames).map(|p| Complex64::from_polar(1.0, p as f64)).collect()],
            mus: alloc::vec![1.0],
            delays: alloc::vec![3],
        }
    }

    fn config(frames: usize) -> ScenarioConfig {
        let mut c = ScenarioConfig::with_dimensions(1, frames).unwrap();
        c.noise_var = 0.0;
        c.delays = DelayPlan::Fixed(alloc::vec![3]);
        c
    }

    #[test]
    fn wrap_layout() {
        let cfg = CpWrapConfig::default();
        let seq = generate_zc(1, 127).unwrap();
        let w = cfg.wrap(&seq);
        assert_eq!(w.len(), 288);
        assert_eq!(&w[..32], &w[256..]);
        assert_eq!(w[32], seq.samples()[0]);
        assert_eq!(w[32 + 127], seq.samples()[0]);
        assert!(CpWrapConfig { n_fft: 32, n_cp: 32 }.validate().is_err());
    }

    #[test]
    fn cp_noiseless_recovery() {
        let cfg = CpWrapConfig::default();
        for omega in [0.001, 0.0, -0.0095] {
            let c = config(2);
            let t = truth(omega, 2);
            let b = synthesize_cp_burst(&c, &t, &cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
            let starts = cfg.block_starts(1024, 2, 127, 3);
            let w = cp_blind_cfo(&b.samples, &cfg, &starts).unwrap();
            assert!((w - omega).abs() < 1e-9, "{w}");
        }
    }

    #[test]
    fn cp_degenerate_on_silence() {
        let cfg = CpWrapConfig::default();
        let y = alloc::vec![Complex64::new(0.0, 0.0); 2048];
        assert!(matches!(cp_blind_cfo(&y, &cfg, &[0]), Err(Error::Degenerate { .. })));
    }

    #[test]
    fn split_noiseless_recovery() {
        for omega in [0.004, -0.02, 0.0] {
            let c = config(2);
            let t = truth(omega, 2);
            let y = model_signal(&c, &t).unwrap();
            let w = autocorr_split_cfo(&y, c.preambles[0].seq0(), 1024 + 3).unwrap();
            assert!((w - omega).abs() < 1e-9);
            let model = ReceiverModel::from_config(&c, &t.delays).unwrap();
            let pooled = autocorr_split_station(&y, &model, 0).unwrap();
            assert!((pooled - omega).abs() < 1e-9);
        }
    }

    #[test]
    fn split_range_is_wider_than_separate() {
        let (_, lag) = split_lag(127);
        assert_eq!(lag, 64);
        assert!(core::f64::consts::PI / lag as f64 > core::f64::consts::PI / 254.0);
        assert_eq!(split_lag(128), (64, 64));
    }

    #[test]
    fn weighted_average_examples() {
        assert_eq!(weighted_average_cfo(&[0.3, 0.3, 0.3], &[1.0, 2.0, 5.0]).unwrap(), 0.3);
        assert_eq!(weighted_average_cfo(&[0.1, 0.7, 0.2], &[0.0, 4.0, 0.0]).unwrap(), 0.7);
        assert!(weighted_average_cfo(&[0.1, 0.2], &[0.0, 0.0]).is_err());
        assert!(weighted_average_cfo(&[0.1], &[-1.0]).is_err());
    }

    #[test]
    fn weighted_average_station_noiseless() {
        let c = config(3);
        let t = truth(0.002, 3);
        let y = model_signal(&c, &t).unwrap();
        let mut model = ReceiverModel::from_config(&c, &t.delays).unwrap();
        model.noise_var = 1.0;
        let grid = CorrelationGrid::compute(&y, &model, &t.alphas, &t.mus).unwrap();
        let w = weighted_average_station(&grid, 0, &t.alphas[0], 1.0).unwrap();
        assert!((w - 0.002).abs() < 1e-12);
    }
}
