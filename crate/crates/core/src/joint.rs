//! Iterative joint CFO, channel and scaling estimation with successive
//! interference cancellation.
//!
//! Each iteration refits the channel gains `alpha` and scalings `mu` by least
//! squares at the current CFO estimates, then, for every station, cancels the
//! reconstructed signals of all other stations, removes the station's own
//! current CFO estimate and re-estimates the residual offset with the
//! cross-preamble estimator. The sweep is Jacobi style: every station works
//! from the snapshot taken at the start of the iteration, so the result does
//! not depend on station order.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;
#[allow(unused_imports)]
use num_traits::Float;

use crate::estimators::{
    build_design_matrix, build_split_design, cross_preamble_cfo, estimate_channel, estimate_mu, CorrelationGrid,
    DesignMatrix, ReceiverModel,
};
use crate::{Error, Result};

/// Stations whose estimated energy `sum_p |alpha_hat|^2` falls below this are
/// left out of the scaling and residual-CFO updates.
pub const ACTIVE_ENERGY_FLOOR: f64 = 1e-12;

/// Stopping rule of [`joint_estimate`].
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct JointOptions {
    /// Stop once `sum_k |delta_k|` drops below this, rad/sample.
    pub epsilon: f64,
    pub max_iter: usize,
}

impl Default for JointOptions {
    fn default() -> Self {
        JointOptions {
            epsilon: 1e-6,
            max_iter: 20,
        }
    }
}

/// Output of [`joint_estimate`].
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EstimationResult {
    pub omegas_hat: Vec<f64>,
    /// `alphas_hat[k][p]`.
    pub alphas_hat: Vec<Vec<Complex64>>,
    pub mus_hat: Vec<f64>,
    /// `sum_k |delta_k|` of every iteration.
    pub iteration_trace: Vec<f64>,
    /// CFO estimates after every iteration.
    pub omega_history: Vec<Vec<f64>>,
    pub converged: bool,
    pub iterations: usize,
    /// Frames whose final channel solve needed regularization.
    pub regularized_frames: Vec<usize>,
    /// Stations whose final scaling estimate was clamped.
    pub clamped_mus: Vec<usize>,
}

impl EstimationResult {
    /// Cold-start state: zero CFOs and gains, unit scalings.
    pub fn initial(num_bs: usize, num_frames: usize) -> Self {
        EstimationResult {
            omegas_hat: vec![0.0; num_bs],
            alphas_hat: vec![vec![Complex64::new(0.0, 0.0); num_frames]; num_bs],
            mus_hat: vec![1.0; num_bs],
            iteration_trace: Vec::new(),
            omega_history: Vec::new(),
            converged: false,
            iterations: 0,
            regularized_frames: Vec::new(),
            clamped_mus: Vec::new(),
        }
    }
}

fn check_dims(model: &ReceiverModel, est: &EstimationResult) -> Result<()> {
    let k = model.num_bs();
    if est.omegas_hat.len() != k || est.alphas_hat.len() != k || est.mus_hat.len() != k {
        return Err(Error::param("estimates", "need one entry per station"));
    }
    if est.alphas_hat.iter().any(|a| a.len() != model.num_frames()) {
        return Err(Error::param("estimates", "need one gain per frame"));
    }
    Ok(())
}

/// `y - sum_{q != k} A_q alpha_q`, de-rotated by `exp(-j * omega_hat_k * m)`.
fn residual_from_model(
    signal: &[Complex64],
    total: &[Complex64],
    design: &DesignMatrix,
    alphas: &[Vec<Complex64>],
    k: usize,
    omega_k: f64,
) -> Vec<Complex64> {
    let mut own = vec![Complex64::new(0.0, 0.0); total.len()];
    design.add_station(k, &alphas[k], &mut own);
    signal
        .iter()
        .enumerate()
        .map(|(m, &y)| {
            let cancelled = match total.get(m) {
                Some(t) => y - t + own[m],
                None => y,
            };
            cancelled * Complex64::cis(-omega_k * m as f64)
        })
        .collect()
}

/// [`residual_from_model`] evaluated only inside station `k`'s correlation
/// windows; every other sample is left at zero.
fn windowed_residual(
    signal: &[Complex64],
    total: &[Complex64],
    design: &DesignMatrix,
    model: &ReceiverModel,
    alphas: &[Vec<Complex64>],
    k: usize,
    omega_k: f64,
) -> Vec<Complex64> {
    let layout = &model.layout;
    let support = design.support();
    let mut out = vec![Complex64::new(0.0, 0.0); signal.len()];
    for p in 0..layout.num_frames {
        let frame = p * layout.frame_len;
        let block = design.block(p);
        let a = alphas[k][p];
        for i in 0..2 {
            let start = layout.window_start(p, i, model.delays[k]);
            let end = (start + layout.seq_len).min(signal.len());
            for m in start..end {
                let own = block[(m - frame - support.start, k)] * a;
                out[m] = (signal[m] - total[m] + own) * Complex64::cis(-omega_k * m as f64);
            }
        }
    }
    out
}

/// Interference-cancelled, CFO-compensated signal of station `k`.
pub fn sic_residual(
    signal: &[Complex64],
    model: &ReceiverModel,
    estimates: &EstimationResult,
    k: usize,
) -> Result<Vec<Complex64>> {
    check_dims(model, estimates)?;
    if k >= model.num_bs() {
        return Err(Error::param("k", "station index out of range"));
    }
    let design = build_design_matrix(
        &model.layout,
        &model.preambles,
        &model.delays,
        &estimates.omegas_hat,
        &estimates.mus_hat,
    )?;
    let total = design.apply(&estimates.alphas_hat);
    Ok(residual_from_model(
        signal,
        &total,
        &design,
        &estimates.alphas_hat,
        k,
        estimates.omegas_hat[k],
    ))
}

fn in_iteration(iteration: usize, station: Option<usize>) -> impl FnOnce(Error) -> Error {
    move |e| Error::Iteration {
        iteration,
        station,
        source: Box::new(e),
    }
}

fn energy(alphas: &[Complex64]) -> f64 {
    alphas.iter().map(|a| a.norm_sqr()).sum()
}

/// Channel then scaling refit at the current CFO estimates.
fn refit(signal: &[Complex64], model: &ReceiverModel, est: &mut EstimationResult, iteration: usize) -> Result<()> {
    let wrap = || in_iteration(iteration, None);
    let design = build_design_matrix(
        &model.layout,
        &model.preambles,
        &model.delays,
        &est.omegas_hat,
        &est.mus_hat,
    )
    .map_err(wrap())?;
    let channel = estimate_channel(signal, &design).map_err(wrap())?;
    est.alphas_hat = channel.alphas;
    est.regularized_frames = channel.regularized_frames;

    let (a0, a1) =
        build_split_design(&model.layout, &model.preambles, &model.delays, &est.omegas_hat).map_err(wrap())?;
    let active: Vec<bool> = est
        .alphas_hat
        .iter()
        .map(|a| energy(a) >= ACTIVE_ENERGY_FLOOR)
        .collect();
    let mu = estimate_mu(signal, &a0, &a1, &est.alphas_hat, &est.mus_hat, &active).map_err(wrap())?;
    est.mus_hat = mu.mus;
    est.clamped_mus = mu.clamped;
    Ok(())
}

/// Folds `omega` into `[-pi/tau_c, pi/tau_c]`. The phase-baseline statistic
/// cannot tell `omega` from `omega + 2*pi/tau_c`; without the fold an early
/// wrapped update at low SINR can walk the estimate onto that alias.
fn principal_cfo(omega: f64, tau_c: usize) -> f64 {
    let period = 2.0 * core::f64::consts::PI / tau_c as f64;
    omega - period * (omega / period).round()
}

/// Runs the joint estimator from the cold start `omega = 0, alpha = 0, mu = 1`.
///
/// After the last CFO update the gains and scalings are refit once more so
/// the returned channel matches the returned CFOs. Reaching `max_iter`
/// without meeting `epsilon` is reported through `converged`, not as an error.
pub fn joint_estimate(signal: &[Complex64], model: &ReceiverModel, options: &JointOptions) -> Result<EstimationResult> {
    if options.max_iter == 0 {
        return Err(Error::param("max_iter", "must be at least 1"));
    }
    if !(options.epsilon >= 0.0) {
        return Err(Error::param("epsilon", "must be nonnegative"));
    }
    let num_bs = model.num_bs();
    let mut est = EstimationResult::initial(num_bs, model.num_frames());

    for iteration in 1..=options.max_iter {
        refit(signal, model, &mut est, iteration)?;

        let design = build_design_matrix(
            &model.layout,
            &model.preambles,
            &model.delays,
            &est.omegas_hat,
            &est.mus_hat,
        )
        .map_err(in_iteration(iteration, None))?;
        let total = design.apply(&est.alphas_hat);
        let mut grid = CorrelationGrid::zeros(num_bs, model.num_frames(), model.layout.tau_c());
        let mut deltas = vec![0.0; num_bs];
        for (k, delta) in deltas.iter_mut().enumerate() {
            if energy(&est.alphas_hat[k]) < ACTIVE_ENERGY_FLOOR {
                continue;
            }
            let wrap = || in_iteration(iteration, Some(k));
            let residual = windowed_residual(signal, &total, &design, model, &est.alphas_hat, k, est.omegas_hat[k]);
            grid.fill_station(&residual, model, k, &est.alphas_hat, &est.mus_hat)
                .map_err(wrap())?;
            *delta = cross_preamble_cfo(&grid, k, &est.alphas_hat[k], est.mus_hat[k]).map_err(wrap())?;
        }
        let tau_c = model.layout.tau_c();
        for (w, d) in est.omegas_hat.iter_mut().zip(&deltas) {
            *w = principal_cfo(*w + d, tau_c);
        }
        let step: f64 = deltas.iter().map(|d| d.abs()).sum();
        est.iteration_trace.push(step);
        est.omega_history.push(est.omegas_hat.clone());
        est.iterations = iteration;
        if step < options.epsilon {
            est.converged = true;
            break;
        }
    }

    let last = est.iterations + 1;
    refit(signal, model, &mut est, last)?;
    let design = build_design_matrix(
        &model.layout,
        &model.preambles,
        &model.delays,
        &est.omegas_hat,
        &est.mus_hat,
    )
    .map_err(in_iteration(last, None))?;
    let channel = estimate_channel(signal, &design).map_err(in_iteration(last, None))?;
    est.alphas_hat = channel.alphas;
    est.regularized_frames = channel.regularized_frames;
    Ok(est)
}
