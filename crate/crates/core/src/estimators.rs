//! Correlation statistics, least-squares channel and scaling estimation, and
//! the separate and cross-preamble CFO estimators.
//!
//! The correlation statistic of station `k`, frame `p`, sequence `i` is
//!
//! ```text
//! r[k,p,i] = (1/N) * sum_{m<N} y[p*N_f + tau_k + i*tau_c + m] * conj(c_{k,i}[m])
//! ```
//!
//! Without interference it equals
//! `alpha_k^(p) * r_{k,i}(-omega_k) * exp(j*omega_k*(p*N_f + tau_k)) * (mu_k * exp(j*omega_k*tau_c))^i`,
//! see [`expected_statistic`]. Interference from other stations and noise
//! add a zero-mean term with variance [`noise_variance`].

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
#[allow(unused_imports)]
use num_traits::Float;

use crate::linalg::lstsq;
use crate::sequences::{autocorrelation, TrainingSequence};
use crate::synthesis::{FrameLayout, PreambleSpec, ReceivedBurst, ScenarioConfig};
use crate::{Error, Result};

/// Magnitude below which a correlation sum is treated as vanished.
pub const DEGENERATE_MAGNITUDE: f64 = 1e-15;
/// Scaling estimates below this are clamped and flagged.
pub const MU_FLOOR: f64 = 1e-6;
/// Lower bound applied to model variances so weights stay finite.
pub const VARIANCE_FLOOR: f64 = 1e-30;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// What the receiver knows before estimation: the preambles, the station
/// delays and the noise and sidelobe statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct ReceiverModel {
    pub layout: FrameLayout,
    pub preambles: Vec<PreambleSpec>,
    pub delays: Vec<usize>,
    pub noise_var: f64,
    pub sigma_c2: f64,
}

impl ReceiverModel {
    /// Receiver view of a scenario with known station delays.
    pub fn from_config(config: &ScenarioConfig, delays: &[usize]) -> Result<Self> {
        config.validate()?;
        if delays.len() != config.num_bs() {
            return Err(Error::param("delays", "need one delay per station"));
        }
        let layout = config.layout();
        if delays.iter().any(|&d| d + layout.preamble_len() > layout.frame_len) {
            return Err(Error::param("delays", "delay pushes the preamble out of its frame"));
        }
        Ok(ReceiverModel {
            layout,
            preambles: config.preambles.clone(),
            delays: delays.to_vec(),
            noise_var: config.noise_var,
            sigma_c2: config.sigma_c2()?,
        })
    }

    pub fn num_bs(&self) -> usize {
        self.preambles.len()
    }

    pub fn num_frames(&self) -> usize {
        self.layout.num_frames
    }
}

/// `K x P x 2` correlation statistics with their model variances.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationGrid {
    num_bs: usize,
    num_frames: usize,
    tau_c: usize,
    values: Vec<Complex64>,
    noise_vars: Vec<f64>,
}

impl CorrelationGrid {
    /// Builds a grid from flat `(k, p, i)`-ordered storage.
    pub fn new(
        num_bs: usize,
        num_frames: usize,
        tau_c: usize,
        values: Vec<Complex64>,
        noise_vars: Vec<f64>,
    ) -> Result<Self> {
        let len = num_bs * num_frames * 2;
        if values.len() != len || noise_vars.len() != len {
            return Err(Error::param("grid", "storage does not match K x P x 2"));
        }
        if noise_vars.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(Error::param("noise_vars", "variances must be positive and finite"));
        }
        if tau_c == 0 {
            return Err(Error::param("tau_c", "phase baseline must be positive"));
        }
        Ok(CorrelationGrid {
            num_bs,
            num_frames,
            tau_c,
            values,
            noise_vars,
        })
    }

    /// All-zero statistics with unit variances, to be filled per station.
    pub fn zeros(num_bs: usize, num_frames: usize, tau_c: usize) -> Self {
        let len = num_bs * num_frames * 2;
        CorrelationGrid {
            num_bs,
            num_frames,
            tau_c,
            values: vec![ZERO; len],
            noise_vars: vec![1.0; len],
        }
    }

    /// Statistics of every station on `signal`, with variances from the
    /// interference model evaluated at `alphas` and `mus`.
    pub fn compute(
        signal: &[Complex64],
        model: &ReceiverModel,
        alphas: &[Vec<Complex64>],
        mus: &[f64],
    ) -> Result<Self> {
        let mut grid = Self::zeros(model.num_bs(), model.num_frames(), model.layout.tau_c());
        for k in 0..model.num_bs() {
            grid.fill_station(signal, model, k, alphas, mus)?;
        }
        Ok(grid)
    }

    /// Recomputes the row of station `k` from `signal`.
    pub fn fill_station(
        &mut self,
        signal: &[Complex64],
        model: &ReceiverModel,
        k: usize,
        alphas: &[Vec<Complex64>],
        mus: &[f64],
    ) -> Result<()> {
        let layout = &model.layout;
        let n = layout.seq_len;
        let mut others = Vec::with_capacity(model.num_bs());
        for p in 0..self.num_frames {
            others.clear();
            others.extend((0..model.num_bs()).filter(|&q| q != k).map(|q| alphas[q][p]));
            for i in 0..2 {
                let start = layout.window_start(p, i, model.delays[k]);
                let idx = self.index(k, p, i);
                self.values[idx] = correlate_window(signal, model.preambles[k].seq(i), start)?;
                let var = noise_variance(&others, mus[k], i, model.sigma_c2, model.noise_var, n);
                self.noise_vars[idx] = var.max(VARIANCE_FLOOR);
            }
        }
        Ok(())
    }

    fn index(&self, k: usize, p: usize, i: usize) -> usize {
        (k * self.num_frames + p) * 2 + i
    }

    pub fn value(&self, k: usize, p: usize, i: usize) -> Complex64 {
        self.values[self.index(k, p, i)]
    }

    pub fn noise_var(&self, k: usize, p: usize, i: usize) -> f64 {
        self.noise_vars[self.index(k, p, i)]
    }

    pub fn set(&mut self, k: usize, p: usize, i: usize, value: Complex64, noise_var: f64) {
        let idx = self.index(k, p, i);
        self.values[idx] = value;
        self.noise_vars[idx] = noise_var.max(VARIANCE_FLOOR);
    }

    /// Multiplies every variance by `factor`.
    pub fn scale_noise_vars(&mut self, factor: f64) {
        for v in &mut self.noise_vars {
            *v *= factor;
        }
    }

    pub fn num_bs(&self) -> usize {
        self.num_bs
    }

    pub fn num_frames(&self) -> usize {
        self.num_frames
    }

    pub fn tau_c(&self) -> usize {
        self.tau_c
    }
}

/// `(1/N) * sum_m signal[start + m] * conj(seq[m])`.
pub fn correlate_window(signal: &[Complex64], seq: &TrainingSequence, start: usize) -> Result<Complex64> {
    let n = seq.len();
    let end = start + n;
    if end > signal.len() {
        return Err(Error::WindowOutOfRange {
            start,
            end,
            len: signal.len(),
        });
    }
    let acc: Complex64 = signal[start..end]
        .iter()
        .zip(seq.samples())
        .map(|(y, c)| y * c.conj())
        .sum();
    Ok(acc / n as f64)
}

/// Correlation statistic `r[k,p,i]` of a burst at delay `tau_k`.
pub fn correlation_statistic(burst: &ReceivedBurst, k: usize, p: usize, i: usize, tau_k: usize) -> Result<Complex64> {
    let config = &burst.config;
    if k >= config.num_bs() || p >= config.num_frames || i > 1 {
        return Err(Error::param("index", "station, frame or sequence index out of range"));
    }
    let start = config.layout().window_start(p, i, tau_k);
    correlate_window(&burst.samples, config.preambles[k].seq(i), start)
}

/// Interference-plus-noise variance of `r[k,p,i]`:
/// `(sum_q |mu_k^i * alpha_q^(p)|^2 * sigma_c^2 + sigma_n^2) / N`.
pub fn noise_variance(alphas_others: &[Complex64], mu_k: f64, i: usize, sigma_c2: f64, sigma_n2: f64, n: usize) -> f64 {
    let mu_pow = if i == 0 { 1.0 } else { mu_k * mu_k };
    let interference: f64 = alphas_others.iter().map(|a| a.norm_sqr()).sum::<f64>() * mu_pow * sigma_c2;
    (interference + sigma_n2) / n as f64
}

/// Mean of `r[k,p,i]` for a single station without interference or noise.
pub fn expected_statistic(
    preamble: &PreambleSpec,
    layout: &FrameLayout,
    delay: usize,
    alpha: Complex64,
    mu: f64,
    omega: f64,
    p: usize,
    i: usize,
) -> Complex64 {
    let matched = autocorrelation(preamble.seq(i), -omega);
    let frame_phase = Complex64::cis(omega * (p * layout.frame_len + delay) as f64);
    let second = if i == 0 {
        Complex64::new(1.0, 0.0)
    } else {
        Complex64::from_polar(mu, omega * layout.tau_c() as f64)
    };
    alpha * matched * frame_phase * second
}

/// Gains as they appear in a grid taken on the raw burst:
/// `alpha_p * exp(j*omega*(p*N_f + delay))`.
pub fn grid_gains(alphas_k: &[Complex64], omega: f64, layout: &FrameLayout, delay: usize) -> Vec<Complex64> {
    alphas_k
        .iter()
        .enumerate()
        .map(|(p, &a)| a * Complex64::cis(omega * (p * layout.frame_len + delay) as f64))
        .collect()
}

/// Block-diagonal design `blkdiag(A^(0), ..., A^(P-1))`.
///
/// Only the rows of each frame that some preamble touches are stored; every
/// other row of `A^(p)` is zero.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    layout: FrameLayout,
    support_start: usize,
    blocks: Vec<DMatrix<Complex64>>,
}

impl DesignMatrix {
    pub fn num_bs(&self) -> usize {
        self.blocks.first().map_or(0, |b| b.ncols())
    }

    pub fn num_frames(&self) -> usize {
        self.blocks.len()
    }

    pub fn layout(&self) -> &FrameLayout {
        &self.layout
    }

    /// Row range inside a frame that carries preamble energy.
    pub fn support(&self) -> core::ops::Range<usize> {
        let rows = self.blocks.first().map_or(0, |b| b.nrows());
        self.support_start..self.support_start + rows
    }

    /// Compact block `p`, restricted to [`support`](Self::support).
    pub fn block(&self, p: usize) -> &DMatrix<Complex64> {
        &self.blocks[p]
    }

    /// Column `(p, k)` as a full `N_f`-sample vector.
    pub fn column(&self, p: usize, k: usize) -> Vec<Complex64> {
        let mut out = vec![ZERO; self.layout.frame_len];
        let block = &self.blocks[p];
        for (r, v) in block.column(k).iter().enumerate() {
            out[self.support_start + r] = *v;
        }
        out
    }

    /// Adds `A_k alpha_k` for one station into a `P * N_f` signal.
    pub fn add_station(&self, k: usize, alphas_k: &[Complex64], out: &mut [Complex64]) {
        for (p, block) in self.blocks.iter().enumerate() {
            let base = p * self.layout.frame_len + self.support_start;
            let a = alphas_k[p];
            if a == ZERO {
                continue;
            }
            for (dst, v) in out[base..base + block.nrows()].iter_mut().zip(block.column(k).iter()) {
                *dst += v * a;
            }
        }
    }

    /// `A * vec(alpha)` as a `P * N_f` signal.
    pub fn apply(&self, alphas: &[Vec<Complex64>]) -> Vec<Complex64> {
        let mut out = vec![ZERO; self.layout.num_frames * self.layout.frame_len];
        for (k, a) in alphas.iter().enumerate() {
            self.add_station(k, a, &mut out);
        }
        out
    }
}

fn design_from_waveforms(
    layout: &FrameLayout,
    waveforms: &[Vec<Complex64>],
    delays: &[usize],
    omegas: &[f64],
) -> Result<DesignMatrix> {
    let k = waveforms.len();
    if delays.len() != k || omegas.len() != k || k == 0 {
        return Err(Error::param(
            "design",
            "parameter vectors must have one entry per station",
        ));
    }
    let start = *delays.iter().min().expect("nonempty");
    let end = waveforms
        .iter()
        .zip(delays)
        .map(|(w, d)| d + w.len())
        .max()
        .expect("nonempty");
    if end > layout.frame_len {
        return Err(Error::param("delays", "preamble exceeds the frame"));
    }
    let rows = end - start;
    let blocks = (0..layout.num_frames)
        .map(|p| {
            let mut block = DMatrix::from_element(rows, k, ZERO);
            for (col, (wave, (&d, &w))) in waveforms.iter().zip(delays.iter().zip(omegas)).enumerate() {
                let abs0 = p * layout.frame_len + d;
                let step = Complex64::cis(w);
                let mut rot = Complex64::cis(w * abs0 as f64);
                let mut column = block.column_mut(col);
                let dst = &mut column.as_mut_slice()[d - start..d - start + wave.len()];
                for (out, &c) in dst.iter_mut().zip(wave) {
                    *out = c * rot;
                    rot *= step;
                }
            }
            block
        })
        .collect();
    Ok(DesignMatrix {
        layout: *layout,
        support_start: start,
        blocks,
    })
}

/// Design whose column `(p, k)` is station `k`'s preamble (assembled with
/// `mus[k]`) delayed by `tau_k` and rotated by `exp(j*omega_k*m)` in absolute
/// time `m = p*N_f + local index`.
pub fn build_design_matrix(
    layout: &FrameLayout,
    preambles: &[PreambleSpec],
    delays: &[usize],
    omegas: &[f64],
    mus: &[f64],
) -> Result<DesignMatrix> {
    if mus.len() != preambles.len() {
        return Err(Error::param("mus", "need one scaling per station"));
    }
    let waves: Vec<_> = preambles
        .iter()
        .zip(mus)
        .map(|(p, &mu)| p.assemble_with_mu(mu))
        .collect();
    design_from_waveforms(layout, &waves, delays, omegas)
}

/// The pair `(A_0, A_1)` with `A = A_0 + mu * A_1`: `A_0` holds only the first
/// sequences, `A_1` only the unscaled second sequences.
pub fn build_split_design(
    layout: &FrameLayout,
    preambles: &[PreambleSpec],
    delays: &[usize],
    omegas: &[f64],
) -> Result<(DesignMatrix, DesignMatrix)> {
    let n = layout.seq_len;
    let mut first = Vec::with_capacity(preambles.len());
    let mut second = Vec::with_capacity(preambles.len());
    for spec in preambles {
        let full = spec.assemble_with_mu(1.0);
        let mut a0 = full.clone();
        a0[n..].fill(ZERO);
        let mut a1 = full;
        a1[..n + spec.tau0()].fill(ZERO);
        first.push(a0);
        second.push(a1);
    }
    Ok((
        design_from_waveforms(layout, &first, delays, omegas)?,
        design_from_waveforms(layout, &second, delays, omegas)?,
    ))
}

/// Per-frame least-squares channel estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelEstimate {
    /// `alphas[k][p]`.
    pub alphas: Vec<Vec<Complex64>>,
    /// Frames whose block exceeded the condition limit and were regularized.
    pub regularized_frames: Vec<usize>,
}

fn frame_slice<'a>(signal: &'a [Complex64], design: &DesignMatrix, p: usize) -> Result<&'a [Complex64]> {
    let support = design.support();
    let base = p * design.layout.frame_len;
    let (start, end) = (base + support.start, base + support.end);
    if end > signal.len() {
        return Err(Error::WindowOutOfRange {
            start,
            end,
            len: signal.len(),
        });
    }
    Ok(&signal[start..end])
}

/// `alpha_hat = A^+ y`, solved independently for each frame block.
pub fn estimate_channel(signal: &[Complex64], design: &DesignMatrix) -> Result<ChannelEstimate> {
    let k = design.num_bs();
    let mut alphas = vec![Vec::with_capacity(design.num_frames()); k];
    let mut regularized_frames = Vec::new();
    for p in 0..design.num_frames() {
        let y = DVector::from_column_slice(frame_slice(signal, design, p)?);
        let sol = lstsq(design.blocks[p].clone(), &y).ok_or(Error::RankDeficient { frame: p })?;
        if sol.regularized {
            regularized_frames.push(p);
        }
        for (station, a) in alphas.iter_mut().enumerate() {
            a.push(sol.x[station]);
        }
    }
    Ok(ChannelEstimate {
        alphas,
        regularized_frames,
    })
}

/// Least-squares scaling factors.
#[derive(Debug, Clone, PartialEq)]
pub struct MuEstimate {
    pub mus: Vec<f64>,
    /// Stations whose estimate fell below [`MU_FLOOR`] and was clamped.
    pub clamped: Vec<usize>,
}

/// `mu_hat = B^+ (y - A_0 alpha_hat)` over real `mu`, where column `k` of `B`
/// stacks `A_1^(p)[:, k] * alpha_k^(p)` over frames.
///
/// Stations with `active[k] == false` keep `prior_mus[k]`; their second
/// sequences are removed from the residual with that prior.
pub fn estimate_mu(
    signal: &[Complex64],
    a0: &DesignMatrix,
    a1: &DesignMatrix,
    alphas: &[Vec<Complex64>],
    prior_mus: &[f64],
    active: &[bool],
) -> Result<MuEstimate> {
    let k = a0.num_bs();
    let cols: Vec<usize> = (0..k).filter(|&q| active[q]).collect();
    let rows = a0.support().len();
    let frames = a0.num_frames();
    let total = frames * rows;
    let mut b = DMatrix::<f64>::zeros(2 * total, cols.len());
    let mut rhs = DVector::<f64>::zeros(2 * total);
    for p in 0..frames {
        let y = frame_slice(signal, a0, p)?;
        let blk0 = a0.block(p);
        let blk1 = a1.block(p);
        for r in 0..rows {
            let mut res = y[r];
            for q in 0..k {
                res -= blk0[(r, q)] * alphas[q][p];
                if !active[q] {
                    res -= blk1[(r, q)] * alphas[q][p] * prior_mus[q];
                }
            }
            let row = p * rows + r;
            rhs[row] = res.re;
            rhs[total + row] = res.im;
            for (j, &q) in cols.iter().enumerate() {
                let v = blk1[(r, q)] * alphas[q][p];
                b[(row, j)] = v.re;
                b[(total + row, j)] = v.im;
            }
        }
    }
    let mut mus = prior_mus.to_vec();
    let mut clamped = Vec::new();
    if !cols.is_empty() {
        let sol = lstsq(b, &rhs).ok_or(Error::ScalingRankDeficient)?;
        for (j, &q) in cols.iter().enumerate() {
            let v = sol.x[j];
            if v < MU_FLOOR || !v.is_finite() {
                mus[q] = MU_FLOOR;
                clamped.push(q);
            } else {
                mus[q] = v;
            }
        }
    }
    Ok(MuEstimate { mus, clamped })
}

fn check_magnitude(what: &'static str, z: Complex64) -> Result<()> {
    let magnitude = z.norm();
    if !(magnitude >= DEGENERATE_MAGNITUDE) {
        return Err(Error::Degenerate { what, magnitude });
    }
    Ok(())
}

/// Separate estimator: phase of the same-frame lag products
/// `r[k,p,1] * conj(r[k,p,0]) / mu_k` summed over frames, over the `tau_c`
/// baseline. Each frame contributes its own phase difference, so frames with
/// independent beam phases still add coherently.
pub fn separate_cfo(grid: &CorrelationGrid, k: usize, mu_k: f64) -> Result<f64> {
    let acc: Complex64 = (0..grid.num_frames())
        .map(|p| grid.value(k, p, 1) * grid.value(k, p, 0).conj())
        .sum::<Complex64>()
        / mu_k;
    check_magnitude("lag product sum", acc)?;
    Ok(acc.arg() / grid.tau_c() as f64)
}

/// Separate estimator restricted to frame `p`.
pub fn separate_cfo_frame(grid: &CorrelationGrid, k: usize, p: usize, mu_k: f64) -> Result<f64> {
    let r0 = grid.value(k, p, 0);
    let r1 = grid.value(k, p, 1);
    check_magnitude("first-sequence statistic", r0)?;
    check_magnitude("second-sequence statistic", r1)?;
    Ok(((r1 / mu_k) * r0.conj()).arg() / grid.tau_c() as f64)
}

/// Log-likelihood of station `k`'s statistics at offset `omega`:
/// `-sum_{p,i} |r[k,p,i] - alpha_p * r_k * (mu_k * exp(j*omega*tau_c))^i|^2 / sigma^2[k,p,i]`.
///
/// `alphas_k` are the per-frame gains as they appear in the grid (use
/// [`grid_gains`] for a grid taken on a raw burst) and `r_k_omega` is the
/// complex matched-correlation gain.
pub fn log_likelihood(
    grid: &CorrelationGrid,
    k: usize,
    omega: f64,
    alphas_k: &[Complex64],
    mu_k: f64,
    r_k_omega: Complex64,
) -> f64 {
    let second = Complex64::from_polar(mu_k, omega * grid.tau_c() as f64);
    let mut ll = 0.0;
    for (p, &a) in alphas_k.iter().enumerate().take(grid.num_frames()) {
        let m0 = a * r_k_omega;
        ll -= (grid.value(k, p, 0) - m0).norm_sqr() / grid.noise_var(k, p, 0);
        ll -= (grid.value(k, p, 1) - m0 * second).norm_sqr() / grid.noise_var(k, p, 1);
    }
    ll
}

/// Channel-weighted correlation sums `(psi_0, psi_1)`.
pub fn psi_sums(grid: &CorrelationGrid, k: usize, alphas_k: &[Complex64], mu_k: f64) -> (Complex64, Complex64) {
    let mut psi0 = ZERO;
    let mut psi1 = ZERO;
    for (p, a) in alphas_k.iter().enumerate().take(grid.num_frames()) {
        let w = a.conj();
        psi0 += w * grid.value(k, p, 0) / grid.noise_var(k, p, 0);
        psi1 += w * mu_k * grid.value(k, p, 1) / grid.noise_var(k, p, 1);
    }
    (psi0, psi1)
}

/// Cross-preamble ML estimator `angle(psi_1 * conj(psi_0)) / tau_c`, pooling
/// every frame under the shared-CFO constraint.
///
/// The per-frame weights `alphas_k` must carry the same frame phase as the
/// statistics: either gains estimated on the same signal, or [`grid_gains`].
pub fn cross_preamble_cfo(grid: &CorrelationGrid, k: usize, alphas_k: &[Complex64], mu_k: f64) -> Result<f64> {
    if alphas_k.len() < grid.num_frames() {
        return Err(Error::param("alphas_k", "need one gain per frame"));
    }
    if alphas_k.iter().all(|a| *a == ZERO) {
        return Err(Error::Degenerate {
            what: "channel weights",
            magnitude: 0.0,
        });
    }
    let (psi0, psi1) = psi_sums(grid, k, alphas_k, mu_k);
    check_magnitude("psi_0", psi0)?;
    check_magnitude("psi_1", psi1)?;
    Ok((psi1 * psi0.conj()).arg() / grid.tau_c() as f64)
}
