//! Preamble assembly, ground-truth draws and burst synthesis.
//!
//! A burst holds `P` frames of `frame_len` samples. Station `k` places its
//! preamble `[c_{k,0}; 0_{tau0}; mu_k * c_{k,1}]` at offset `tau_k` inside
//! every frame, scaled by the per-frame gain `alpha_k^(p)` and rotated by
//! `exp(j * omega_k * m)` in absolute sample time `m`.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;
#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::sequences::{estimate_sigma_c, generate_zc, TrainingSequence};
use crate::{Error, Result};

/// Amplitude floor of the dominant-beam profile outside the main lobe.
const BEAM_SIDELOBE: f64 = 0.1;

/// Timing geometry shared by every station of a scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameLayout {
    /// Training sequence length `N`.
    pub seq_len: usize,
    /// Zero gap between the two sequences of a preamble.
    pub tau0: usize,
    /// Frame length `N_f`.
    pub frame_len: usize,
    /// Preambles per burst `P`.
    pub num_frames: usize,
}

impl FrameLayout {
    /// Phase baseline `tau_c = N + tau0` between the two sequences.
    pub fn tau_c(&self) -> usize {
        self.seq_len + self.tau0
    }

    pub fn preamble_len(&self) -> usize {
        2 * self.seq_len + self.tau0
    }

    /// First sample of sequence `i` of frame `p` for a station at `delay`.
    pub fn window_start(&self, p: usize, i: usize, delay: usize) -> usize {
        p * self.frame_len + delay + i * self.tau_c()
    }
}

/// One station's preamble: two training sequences, a gap and a scaling.
#[derive(Debug, Clone, PartialEq)]
pub struct PreambleSpec {
    seq0: TrainingSequence,
    seq1: TrainingSequence,
    mu: f64,
    tau0: usize,
}

impl PreambleSpec {
    pub fn new(seq0: TrainingSequence, seq1: TrainingSequence, mu: f64, tau0: usize) -> Result<Self> {
        if seq0.len() != seq1.len() {
            return Err(Error::param("seq1", "both sequences must have the same length"));
        }
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(Error::param("mu", "scaling factor must be positive and finite"));
        }
        Ok(PreambleSpec { seq0, seq1, mu, tau0 })
    }

    pub fn seq0(&self) -> &TrainingSequence {
        &self.seq0
    }

    pub fn seq1(&self) -> &TrainingSequence {
        &self.seq1
    }

    /// Sequence `i` (0 or 1).
    pub fn seq(&self, i: usize) -> &TrainingSequence {
        if i == 0 {
            &self.seq0
        } else {
            &self.seq1
        }
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn tau0(&self) -> usize {
        self.tau0
    }

    pub fn seq_len(&self) -> usize {
        self.seq0.len()
    }

    pub fn len(&self) -> usize {
        2 * self.seq_len() + self.tau0
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// `[seq0; zeros(tau0); mu * seq1]`.
    pub fn assemble(&self) -> Vec<Complex64> {
        self.assemble_with_mu(self.mu)
    }

    /// Same as [`assemble`](Self::assemble) with an overriding scaling factor.
    pub fn assemble_with_mu(&self, mu: f64) -> Vec<Complex64> {
        let mut out = Vec::with_capacity(self.len());
        out.extend_from_slice(self.seq0.samples());
        out.extend(core::iter::repeat_n(Complex64::new(0.0, 0.0), self.tau0));
        out.extend(self.seq1.samples().iter().map(|&c| c * mu));
        out
    }
}

/// Free-standing form of [`PreambleSpec::assemble`].
pub fn assemble_preamble(spec: &PreambleSpec) -> Vec<Complex64> {
    spec.assemble()
}

/// Distribution of the per-frame gains `alpha_k^(p)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BeamProfile {
    /// I.i.d. unit-power circular Gaussian gains.
    FlatRayleigh,
    /// Raised-cosine sweep around a random peak frame. `rolloff` in `(0, 1]`
    /// is the half-width of the main lobe as a fraction of `P`.
    DominantBeam { rolloff: f64 },
}

/// How station delays `tau_k` are chosen.
#[derive(Debug, Clone, PartialEq)]
pub enum DelayPlan {
    Fixed(Vec<usize>),
    /// Uniform on `0..=max` per station and burst.
    Uniform {
        max: usize,
    },
}

impl DelayPlan {
    fn max_delay(&self) -> usize {
        match self {
            DelayPlan::Fixed(d) => d.iter().copied().max().unwrap_or(0),
            DelayPlan::Uniform { max } => *max,
        }
    }

    /// Nonzero relative delays two stations can have.
    fn relative_delays(&self) -> Vec<i64> {
        let mut out = Vec::new();
        match self {
            DelayPlan::Fixed(d) => {
                for &a in d {
                    for &b in d {
                        let r = a as i64 - b as i64;
                        if r != 0 {
                            out.push(r);
                        }
                    }
                }
            }
            DelayPlan::Uniform { max } => {
                let m = *max as i64;
                out.extend((-m..=m).filter(|&r| r != 0));
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }
}

/// Full generative description of a scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    /// One preamble per station; `K = preambles.len()`.
    pub preambles: Vec<PreambleSpec>,
    pub num_frames: usize,
    pub frame_len: usize,
    /// Inclusive CFO interval, rad/sample.
    pub cfo_range: (f64, f64),
    pub delays: DelayPlan,
    /// Per-sample noise variance `sigma_n^2`.
    pub noise_var: f64,
    /// SINR of the target station 0, dB.
    pub target_sinr_db: f64,
    pub beam_profile: BeamProfile,
    pub seed: u64,
    /// Extra noise-only samples after the last frame.
    pub tail_len: usize,
    /// Sidelobe variance; estimated from the sequences in use when `None`.
    pub sigma_c2: Option<f64>,
}

impl ScenarioConfig {
    /// Default geometry: `K = 12` stations, `P = 12` frames, ZC length 127,
    /// `tau0 = 127`, `N_f = 1024`, unit scaling and CFOs within
    /// `±0.8 * pi / tau_c`. Station `k` uses roots `(2k+1, 2k+2)`.
    pub fn reference() -> Self {
        Self::with_dimensions(12, 12).expect("reference dimensions are valid")
    }

    /// Reference scenario with `num_bs` stations and `num_frames` frames.
    pub fn with_dimensions(num_bs: usize, num_frames: usize) -> Result<Self> {
        let seq_len = 127;
        let tau0 = 127;
        let preambles = zc_preambles(num_bs, seq_len, tau0, 1.0)?;
        let tau_c = (seq_len + tau0) as f64;
        let cfo = 0.8 * PI / tau_c;
        Ok(ScenarioConfig {
            preambles,
            num_frames,
            frame_len: 1024,
            cfo_range: (-cfo, cfo),
            delays: DelayPlan::Uniform { max: 8 },
            noise_var: 0.01,
            target_sinr_db: -10.0,
            beam_profile: BeamProfile::FlatRayleigh,
            seed: 0,
            tail_len: 0,
            sigma_c2: None,
        })
    }

    pub fn num_bs(&self) -> usize {
        self.preambles.len()
    }

    pub fn seq_len(&self) -> usize {
        self.preambles.first().map_or(0, PreambleSpec::seq_len)
    }

    pub fn tau0(&self) -> usize {
        self.preambles.first().map_or(0, PreambleSpec::tau0)
    }

    pub fn layout(&self) -> FrameLayout {
        FrameLayout {
            seq_len: self.seq_len(),
            tau0: self.tau0(),
            frame_len: self.frame_len,
            num_frames: self.num_frames,
        }
    }

    /// Total observation length `N_o`.
    pub fn obs_len(&self) -> usize {
        self.num_frames * self.frame_len + self.tail_len
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.num_bs();
        if k == 0 {
            return Err(Error::param("preambles", "need at least one station"));
        }
        if self.num_frames == 0 {
            return Err(Error::param("num_frames", "need at least one frame"));
        }
        let (n, tau0) = (self.seq_len(), self.tau0());
        if self.preambles.iter().any(|p| p.seq_len() != n || p.tau0() != tau0) {
            return Err(Error::param("preambles", "all stations must share N and tau0"));
        }
        for (a, pa) in self.preambles.iter().enumerate() {
            for pb in &self.preambles[a + 1..] {
                if pa.seq0() == pb.seq0() && pa.seq1() == pb.seq1() {
                    return Err(Error::param("preambles", "sequence pairs must be unique per station"));
                }
            }
        }
        if let DelayPlan::Fixed(d) = &self.delays {
            if d.len() != k {
                return Err(Error::param("delays", "need one delay per station"));
            }
        }
        let needed = self.layout().preamble_len() + self.delays.max_delay();
        if self.frame_len < needed {
            return Err(Error::param(
                "frame_len",
                alloc::format!("frame of {} samples cannot hold {needed}", self.frame_len),
            ));
        }
        let (lo, hi) = self.cfo_range;
        let limit = PI / self.layout().tau_c() as f64;
        if !(lo <= hi) || lo <= -limit || hi >= limit {
            return Err(Error::param(
                "cfo_range",
                alloc::format!("must be an interval inside (-{limit:.6}, {limit:.6})"),
            ));
        }
        if !(self.noise_var >= 0.0 && self.noise_var.is_finite()) {
            return Err(Error::param("noise_var", "must be finite and nonnegative"));
        }
        if self.target_sinr_db.is_nan() {
            return Err(Error::param("target_sinr_db", "must not be NaN"));
        }
        if let BeamProfile::DominantBeam { rolloff } = self.beam_profile {
            if !(rolloff > 0.0 && rolloff <= 1.0) {
                return Err(Error::param("rolloff", "must lie in (0, 1]"));
            }
        }
        if let Some(s) = self.sigma_c2 {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::param("sigma_c2", "must be positive"));
            }
        }
        Ok(())
    }

    /// Sidelobe variance used by the interference model, estimated from all
    /// sequences in use over every relative delay the plan allows.
    pub fn sigma_c2(&self) -> Result<f64> {
        if let Some(s) = self.sigma_c2 {
            return Ok(s);
        }
        let family: Vec<TrainingSequence> = self
            .preambles
            .iter()
            .flat_map(|p| [p.seq0().clone(), p.seq1().clone()])
            .collect();
        estimate_sigma_c(&family, &self.delays.relative_delays())
    }

    /// Fills in [`sigma_c2`](Self::sigma_c2) so later calls are free.
    pub fn resolve_sigma_c2(&mut self) -> Result<f64> {
        let s = self.sigma_c2()?;
        self.sigma_c2 = Some(s);
        Ok(s)
    }
}

/// `num_bs` ZC preambles using roots `(2k+1, 2k+2)`, skipping roots that
/// share a factor with `seq_len`.
pub fn zc_preambles(num_bs: usize, seq_len: usize, tau0: usize, mu: f64) -> Result<Vec<PreambleSpec>> {
    let mut roots = (1u32..).filter(|&r| {
        let (mut a, mut b) = (u64::from(r), seq_len as u64);
        while b != 0 {
            let t = a % b;
            a = b;
            b = t;
        }
        a == 1
    });
    (0..num_bs)
        .map(|_| {
            let r0 = roots.next().expect("infinite iterator");
            let r1 = roots.next().expect("infinite iterator");
            PreambleSpec::new(generate_zc(r0, seq_len)?, generate_zc(r1, seq_len)?, mu, tau0)
        })
        .collect()
}

/// Per-burst parameters drawn for a scenario. Station 0 is the weak target.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GroundTruth {
    pub omegas: Vec<f64>,
    /// `alphas[k][p]`.
    pub alphas: Vec<Vec<Complex64>>,
    pub mus: Vec<f64>,
    pub delays: Vec<usize>,
}

impl GroundTruth {
    pub fn num_bs(&self) -> usize {
        self.omegas.len()
    }

    /// Only station `k`, with everything else removed.
    pub fn station(&self, k: usize) -> GroundTruth {
        GroundTruth {
            omegas: vec![self.omegas[k]],
            alphas: vec![self.alphas[k].clone()],
            mus: vec![self.mus[k]],
            delays: vec![self.delays[k]],
        }
    }
}

fn complex_normal<R: Rng + ?Sized>(rng: &mut R, var: f64) -> Complex64 {
    let s = (0.5 * var).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re * s, im * s)
}

fn beam_gains<R: Rng + ?Sized>(profile: BeamProfile, num_frames: usize, rng: &mut R) -> Vec<Complex64> {
    match profile {
        BeamProfile::FlatRayleigh => (0..num_frames).map(|_| complex_normal(rng, 1.0)).collect(),
        BeamProfile::DominantBeam { rolloff } => {
            let peak = rng.random_range(0..num_frames);
            let width = (rolloff * num_frames as f64 * 0.5).max(1.0);
            let amps: Vec<f64> = (0..num_frames)
                .map(|p| {
                    let d = p.abs_diff(peak);
                    let d = d.min(num_frames - d) as f64;
                    if d < width {
                        BEAM_SIDELOBE + (1.0 - BEAM_SIDELOBE) * 0.5 * (1.0 + (PI * d / width).cos())
                    } else {
                        BEAM_SIDELOBE
                    }
                })
                .collect();
            let norm = (amps.iter().map(|a| a * a).sum::<f64>() / num_frames as f64).sqrt();
            amps.into_iter()
                .map(|a| Complex64::from_polar(a / norm, rng.random_range(-PI..PI)))
                .collect()
        }
    }
}

/// Draws CFOs, delays and gains, then scales station 0 so the burst meets
/// `config.target_sinr_db` under [`calibrate_sinr`].
pub fn draw_ground_truth<R: Rng + ?Sized>(config: &ScenarioConfig, rng: &mut R) -> Result<GroundTruth> {
    config.validate()?;
    let k = config.num_bs();
    let (lo, hi) = config.cfo_range;
    let mut truth = GroundTruth {
        omegas: Vec::with_capacity(k),
        alphas: Vec::with_capacity(k),
        mus: config.preambles.iter().map(PreambleSpec::mu).collect(),
        delays: Vec::with_capacity(k),
    };
    for station in 0..k {
        let u: f64 = rng.random();
        truth.omegas.push(lo + (hi - lo) * u);
        truth.delays.push(match &config.delays {
            DelayPlan::Fixed(d) => d[station],
            DelayPlan::Uniform { max } => rng.random_range(0..=*max),
        });
        truth
            .alphas
            .push(beam_gains(config.beam_profile, config.num_frames, rng));
    }
    set_target_sinr(&mut truth, config, config.target_sinr_db)?;
    Ok(truth)
}

/// Target-station SINR in dB: mean per-frame preamble energy of station 0 over
/// the other stations' preamble energy plus one frame of noise. Returns
/// `+inf` when there is neither interference nor noise.
pub fn calibrate_sinr(truth: &GroundTruth, config: &ScenarioConfig) -> f64 {
    let n = config.seq_len() as f64;
    let frame_energy = |k: usize| {
        let p = truth.alphas[k].len().max(1) as f64;
        let mean_gain = truth.alphas[k].iter().map(|a| a.norm_sqr()).sum::<f64>() / p;
        mean_gain * n * (1.0 + truth.mus[k] * truth.mus[k])
    };
    let signal = frame_energy(0);
    let interference: f64 = (1..truth.num_bs()).map(frame_energy).sum();
    let den = interference + config.frame_len as f64 * config.noise_var;
    if den <= 0.0 {
        return f64::INFINITY;
    }
    10.0 * (signal / den).log10()
}

/// Rescales the target station's gains so [`calibrate_sinr`] returns
/// `sinr_db`. A no-op when the SINR is saturated at `+inf`.
pub fn set_target_sinr(truth: &mut GroundTruth, config: &ScenarioConfig, sinr_db: f64) -> Result<()> {
    let current = calibrate_sinr(truth, config);
    if current == f64::INFINITY || sinr_db == f64::INFINITY {
        return Ok(());
    }
    if !current.is_finite() {
        return Err(Error::param("alphas", "target station has no energy to rescale"));
    }
    let scale = 10f64.powf((sinr_db - current) / 20.0);
    for a in &mut truth.alphas[0] {
        *a *= scale;
    }
    Ok(())
}

/// A received sample vector with the scenario that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct ReceivedBurst {
    pub samples: Vec<Complex64>,
    pub config: ScenarioConfig,
    /// Absent for externally captured bursts.
    pub truth: Option<GroundTruth>,
}

/// Adds `alpha * wave[r] * exp(j*omega*(start + r))` into `out`.
pub(crate) fn add_rotated(out: &mut [Complex64], wave: &[Complex64], alpha: Complex64, start: usize, omega: f64) {
    let step = Complex64::cis(omega);
    let mut rot = Complex64::cis(omega * start as f64) * alpha;
    for (dst, &c) in out[start..start + wave.len()].iter_mut().zip(wave) {
        *dst += rot * c;
        rot *= step;
    }
}

/// Noiseless received signal for arbitrary per-station waveforms placed at
/// `p * frame_len + delay_k` in each frame.
pub fn superpose(
    waveforms: &[Vec<Complex64>],
    truth: &GroundTruth,
    frame_len: usize,
    num_frames: usize,
    obs_len: usize,
) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); obs_len];
    for (k, wave) in waveforms.iter().enumerate() {
        for p in 0..num_frames {
            let start = p * frame_len + truth.delays[k];
            add_rotated(&mut out, wave, truth.alphas[k][p], start, truth.omegas[k]);
        }
    }
    out
}

fn check_truth(config: &ScenarioConfig, truth: &GroundTruth) -> Result<()> {
    let k = config.num_bs();
    if truth.omegas.len() != k || truth.alphas.len() != k || truth.mus.len() != k || truth.delays.len() != k {
        return Err(Error::param(
            "truth",
            "parameter vectors must have one entry per station",
        ));
    }
    if truth.alphas.iter().any(|a| a.len() != config.num_frames) {
        return Err(Error::param("truth", "need one gain per frame"));
    }
    let layout = config.layout();
    if truth
        .delays
        .iter()
        .any(|&d| d + layout.preamble_len() > layout.frame_len)
    {
        return Err(Error::param("truth", "delay pushes the preamble out of its frame"));
    }
    Ok(())
}

/// Noiseless part of the received signal.
pub fn model_signal(config: &ScenarioConfig, truth: &GroundTruth) -> Result<Vec<Complex64>> {
    check_truth(config, truth)?;
    let waves: Vec<_> = config
        .preambles
        .iter()
        .zip(&truth.mus)
        .map(|(spec, &mu)| spec.assemble_with_mu(mu))
        .collect();
    Ok(superpose(
        &waves,
        truth,
        config.frame_len,
        config.num_frames,
        config.obs_len(),
    ))
}

/// Adds i.i.d. `CN(0, noise_var)` samples in place.
pub fn add_noise<R: Rng + ?Sized>(samples: &mut [Complex64], noise_var: f64, rng: &mut R) {
    if noise_var == 0.0 {
        return;
    }
    for s in samples {
        *s += complex_normal(rng, noise_var);
    }
}

/// Synthesizes one received burst: every station's preamble in every frame
/// plus white Gaussian noise.
pub fn synthesize_burst<R: Rng + ?Sized>(
    config: &ScenarioConfig,
    truth: &GroundTruth,
    rng: &mut R,
) -> Result<ReceivedBurst> {
    let mut samples = model_signal(config, truth)?;
    add_noise(&mut samples, config.noise_var, rng);
    Ok(ReceivedBurst {
        samples,
        config: config.clone(),
        truth: Some(truth.clone()),
    })
}
