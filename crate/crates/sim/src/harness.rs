//! Monte-Carlo sweeps over SINR: per-trial estimation with every requested
//! method, aggregation into MAE/MSE/NMSE rows, and CSV export.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use beamsync_core::baselines::{
    autocorr_split_station, cp_blind_cfo, separate_cfo, synthesize_cp_burst, weighted_average_station, CpWrapConfig,
};
use beamsync_core::bounds::{crlb_cfo, CrlbReport, StatisticModel};
use beamsync_core::estimators::{
    build_design_matrix, cross_preamble_cfo, estimate_channel, CorrelationGrid, ReceiverModel,
};
use beamsync_core::joint::{joint_estimate, JointOptions};
use beamsync_core::sequences::dirichlet_magnitude;
use beamsync_core::synthesis::{draw_ground_truth, synthesize_burst, GroundTruth, ScenarioConfig};
use beamsync_core::{Complex64, Error as CoreError};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Keeps the CP-wrapped burst's noise independent of the main burst's.
const CP_SEED_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

/// A row is marked suspect when more than this fraction of trials failed.
const SUSPECT_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    CrossPreamble,
    Separate,
    AutocorrSplit,
    CpBlind,
    WeightedAvg,
    JointAlgorithm,
    /// Reference: zero CFO for every station followed by one LLS solve.
    ZeroCfoLls,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::CrossPreamble,
        Method::Separate,
        Method::AutocorrSplit,
        Method::CpBlind,
        Method::WeightedAvg,
        Method::JointAlgorithm,
        Method::ZeroCfoLls,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::CrossPreamble => "cross_preamble",
            Method::Separate => "separate",
            Method::AutocorrSplit => "autocorr_split",
            Method::CpBlind => "cp_blind",
            Method::WeightedAvg => "weighted_avg",
            Method::JointAlgorithm => "joint_algorithm",
            Method::ZeroCfoLls => "zero_cfo_lls",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown method `{s}`")))
    }
}

/// Estimator settings shared by every trial.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MethodParams {
    pub joint: JointOptions,
    pub cp: CpWrapConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub sinr_points_db: Vec<f64>,
    pub trials: usize,
    pub methods: Vec<Method>,
    pub base_config: ScenarioConfig,
    pub seed: u64,
    pub params: MethodParams,
    /// Adds a Hz column to the CSV when set.
    pub sample_rate_hz: Option<f64>,
    /// Worker threads; `None` uses rayon's default.
    pub workers: Option<usize>,
}

impl SweepSpec {
    /// Default sweep: reference scenario, -30..0 dB in 5 dB steps, 200 trials,
    /// every method.
    pub fn reference() -> Self {
        SweepSpec {
            sinr_points_db: (0..7).map(|i| -30.0 + 5.0 * i as f64).collect(),
            trials: 200,
            methods: Method::ALL.to_vec(),
            base_config: ScenarioConfig::reference(),
            seed: 0,
            params: MethodParams::default(),
            sample_rate_hz: None,
            workers: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if self.sinr_points_db.is_empty() {
            return Err(Error::Config("need at least one SINR point".into()));
        }
        if self.sinr_points_db.iter().any(|s| s.is_nan()) {
            return Err(Error::Config("SINR points must not be NaN".into()));
        }
        if self.workers == Some(0) {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        if let Some(fs) = self.sample_rate_hz {
            if !(fs > 0.0 && fs.is_finite()) {
                return Err(Error::Config("sample_rate_hz must be positive".into()));
            }
        }
        self.params.cp.validate()?;
        self.base_config.validate()?;
        Ok(())
    }
}

/// What one method produced on one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodOutcome {
    pub method: Method,
    /// `omega_hat_0 - omega_0`, or the failure that prevented an estimate.
    pub cfo_error: std::result::Result<f64, CoreError>,
    /// `||alpha_hat_0 - alpha_0||^2 / ||alpha_0||^2`.
    pub chan_nmse: Option<f64>,
    pub wall_time_s: f64,
}

/// Per-trial results plus the target's bound ingredients.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    pub trial_index: u64,
    pub outcomes: Vec<MethodOutcome>,
    /// Aggregate SINRs with interference modelled as noise.
    pub gamma: (f64, f64),
    /// Aggregate SINRs with noise only (interference cancelled).
    pub gamma_noise_only: (f64, f64),
    pub r_mag: f64,
}

/// RNG stream of trial `trial_index`: seeded by `seed`, stream selected by
/// the trial index.
pub fn trial_rng(seed: u64, trial_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial_index);
    rng
}

fn nmse(est: &[Complex64], truth: &[Complex64]) -> f64 {
    let num: f64 = est.iter().zip(truth).map(|(a, b)| (a - b).norm_sqr()).sum();
    let den: f64 = truth.iter().map(|b| b.norm_sqr()).sum();
    num / den
}

/// CFO estimates of all stations; stations other than the target fall back
/// to zero when their estimate fails so the channel refit can still run.
fn per_station(num_bs: usize, mut f: impl FnMut(usize) -> beamsync_core::Result<f64>) -> (Vec<f64>, Option<CoreError>) {
    let mut target_err = None;
    let omegas = (0..num_bs)
        .map(|k| match f(k) {
            Ok(w) => w,
            Err(e) => {
                if k == 0 {
                    target_err = Some(e);
                }
                0.0
            }
        })
        .collect();
    (omegas, target_err)
}

/// Runs every method on trial `trial_index` of `config` (with its target
/// SINR already set). The trial's randomness depends only on
/// `(config.seed, trial_index)`, so every SINR point sees the same geometry
/// and noise with rescaled target gains. An unset `sigma_c2` is estimated
/// on every call; sweeps resolve it once up front.
pub fn run_trial(
    config: &ScenarioConfig,
    trial_index: u64,
    methods: &[Method],
    params: &MethodParams,
) -> Result<TrialOutcome> {
    let resolved;
    let config = if config.sigma_c2.is_none() {
        let mut c = config.clone();
        c.resolve_sigma_c2()?;
        resolved = c;
        &resolved
    } else {
        config
    };
    let mut rng = trial_rng(config.seed, trial_index);
    let truth = draw_ground_truth(config, &mut rng)?;
    let burst = synthesize_burst(config, &truth, &mut rng)?;
    let y = &burst.samples;
    let model = ReceiverModel::from_config(config, &truth.delays)?;
    let num_bs = model.num_bs();
    let ones = vec![1.0; num_bs];

    let (gamma, gamma_noise_only, r_mag) = bound_terms(config, &truth, model.sigma_c2);

    // One-shot LLS at zero CFO: weights for the grid-based estimators.
    let zero_design = build_design_matrix(
        &model.layout,
        &model.preambles,
        &model.delays,
        &vec![0.0; num_bs],
        &ones,
    )?;
    let one_shot = estimate_channel(y, &zero_design);
    let grid = one_shot
        .as_ref()
        .map_err(Clone::clone)
        .and_then(|ch| CorrelationGrid::compute(y, &model, &ch.alphas, &ones));

    let refit = |omegas: &[f64]| -> Option<f64> {
        let design = build_design_matrix(&model.layout, &model.preambles, &model.delays, omegas, &ones).ok()?;
        let ch = estimate_channel(y, &design).ok()?;
        Some(nmse(&ch.alphas[0], &truth.alphas[0]))
    };

    let mut outcomes = Vec::with_capacity(methods.len());
    for &method in methods {
        let start = Instant::now();
        let (cfo, chan) = match method {
            Method::JointAlgorithm => match joint_estimate(y, &model, &params.joint) {
                Ok(est) => (Ok(est.omegas_hat[0]), Some(nmse(&est.alphas_hat[0], &truth.alphas[0]))),
                Err(e) => (Err(e), None),
            },
            Method::ZeroCfoLls => (
                Ok(0.0),
                one_shot.as_ref().ok().map(|ch| nmse(&ch.alphas[0], &truth.alphas[0])),
            ),
            Method::CpBlind => {
                let cp = &params.cp;
                let mut cp_rng = trial_rng(config.seed ^ CP_SEED_SALT, trial_index);
                match synthesize_cp_burst(config, &truth, cp, &mut cp_rng) {
                    Ok(cp_burst) => {
                        let (omegas, err) = per_station(num_bs, |k| {
                            let starts =
                                cp.block_starts(config.frame_len, config.num_frames, config.tau0(), truth.delays[k]);
                            cp_blind_cfo(&cp_burst.samples, cp, &starts)
                        });
                        finish(omegas, err, &refit)
                    }
                    Err(e) => (Err(e), None),
                }
            }
            Method::AutocorrSplit => {
                let (omegas, err) = per_station(num_bs, |k| autocorr_split_station(y, &model, k));
                finish(omegas, err, &refit)
            }
            Method::CrossPreamble | Method::Separate | Method::WeightedAvg => match (&grid, &one_shot) {
                (Ok(grid), Ok(ch)) => {
                    let (omegas, err) = per_station(num_bs, |k| match method {
                        Method::CrossPreamble => cross_preamble_cfo(grid, k, &ch.alphas[k], 1.0),
                        Method::Separate => separate_cfo(grid, k, 1.0),
                        _ => weighted_average_station(grid, k, &ch.alphas[k], 1.0),
                    });
                    finish(omegas, err, &refit)
                }
                (Err(e), _) | (_, Err(e)) => (Err(e.clone()), None),
            },
        };
        outcomes.push(MethodOutcome {
            method,
            cfo_error: cfo.map(|w| w - truth.omegas[0]),
            chan_nmse: chan,
            wall_time_s: start.elapsed().as_secs_f64(),
        });
    }
    Ok(TrialOutcome {
        trial_index,
        outcomes,
        gamma,
        gamma_noise_only,
        r_mag,
    })
}

fn finish(
    omegas: Vec<f64>,
    err: Option<CoreError>,
    refit: &impl Fn(&[f64]) -> Option<f64>,
) -> (beamsync_core::Result<f64>, Option<f64>) {
    match err {
        Some(e) => (Err(e), None),
        None => (Ok(omegas[0]), refit(&omegas)),
    }
}

fn bound_terms(config: &ScenarioConfig, truth: &GroundTruth, sigma_c2: f64) -> ((f64, f64), (f64, f64), f64) {
    let pre = config.preambles[0].clone();
    let interferers = &truth.alphas[1..];
    let full = StatisticModel::from_interference(
        pre.clone(),
        truth.alphas[0].clone(),
        interferers,
        sigma_c2,
        config.noise_var,
    );
    let clean = StatisticModel::from_interference(pre, truth.alphas[0].clone(), &[], sigma_c2, config.noise_var);
    (
        full.aggregate_sinr(),
        clean.aggregate_sinr(),
        dirichlet_magnitude(config.seq_len(), truth.omegas[0]),
    )
}

/// One aggregated line of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub sinr_db: f64,
    pub method: Method,
    /// rad/sample.
    pub cfo_mae: f64,
    pub cfo_mse: f64,
    pub chan_nmse_db: f64,
    pub crlb: f64,
    pub trials_ok: usize,
    pub wall_time_s: f64,
    pub trials: usize,
    pub suspect: bool,
    pub cfo_mae_hz: Option<f64>,
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

/// Bound at the mean aggregate SINRs and mean `|r|^2` of a point.
fn point_crlb(trials: &[TrialOutcome], noise_only: bool, tau_c: usize) -> f64 {
    let pick = |t: &TrialOutcome| if noise_only { t.gamma_noise_only } else { t.gamma };
    let g0 = mean(trials.iter().map(|t| pick(t).0));
    let g1 = mean(trials.iter().map(|t| pick(t).1));
    let r2 = mean(trials.iter().map(|t| t.r_mag * t.r_mag));
    crlb_cfo(g0, g1, r2.sqrt(), tau_c).map_or(f64::NAN, |r| r.bound)
}

/// Folds the trials of one SINR point into one row per method, in trial
/// index order.
pub fn aggregate(
    sinr_db: f64,
    methods: &[Method],
    trials: &[TrialOutcome],
    tau_c: usize,
    sample_rate_hz: Option<f64>,
) -> Vec<MetricsRow> {
    methods
        .iter()
        .enumerate()
        .map(|(j, &method)| {
            let outs: Vec<&MethodOutcome> = trials.iter().map(|t| &t.outcomes[j]).collect();
            let errors: Vec<f64> = outs.iter().filter_map(|o| o.cfo_error.as_ref().ok().copied()).collect();
            let nmses: Vec<f64> = outs
                .iter()
                .filter(|o| o.cfo_error.is_ok())
                .filter_map(|o| o.chan_nmse)
                .collect();
            let trials_ok = errors.len();
            let cfo_mae = mean(errors.iter().map(|e| e.abs()));
            let failures = trials.len() - trials_ok;
            MetricsRow {
                sinr_db,
                method,
                cfo_mae,
                cfo_mse: mean(errors.iter().map(|e| e * e)),
                chan_nmse_db: 10.0 * mean(nmses.iter().copied()).log10(),
                crlb: point_crlb(trials, method == Method::JointAlgorithm, tau_c),
                trials_ok,
                wall_time_s: outs.iter().map(|o| o.wall_time_s).sum(),
                trials: trials.len(),
                suspect: failures as f64 > SUSPECT_FRACTION * trials.len() as f64,
                cfo_mae_hz: sample_rate_hz.map(|fs| cfo_mae * fs / std::f64::consts::TAU),
            }
        })
        .collect()
}

/// Runs all trials of one SINR point on the current rayon pool, in index
/// order.
pub fn run_point(spec: &SweepSpec, config: &ScenarioConfig) -> Result<Vec<TrialOutcome>> {
    (0..spec.trials as u64)
        .into_par_iter()
        .map(|t| run_trial(config, t, &spec.methods, &spec.params))
        .collect()
}

/// Runs the sweep, calling `on_point` with the rows of every finished SINR
/// point (useful to flush partial results).
pub fn run_sweep_with(
    spec: &SweepSpec,
    mut on_point: impl FnMut(&[MetricsRow]) -> Result<()>,
) -> Result<Vec<MetricsRow>> {
    spec.validate()?;
    let mut base = spec.base_config.clone();
    base.seed = spec.seed;
    base.resolve_sigma_c2()?;
    let tau_c = base.layout().tau_c();

    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = spec.workers {
        builder = builder.num_threads(w);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;

    let mut rows = Vec::new();
    for &sinr in &spec.sinr_points_db {
        let mut config = base.clone();
        config.target_sinr_db = sinr;
        let trials = pool.install(|| run_point(spec, &config))?;
        let point = aggregate(sinr, &spec.methods, &trials, tau_c, spec.sample_rate_hz);
        rows.extend(point);
        sort_rows(&mut rows);
        on_point(&rows)?;
    }
    Ok(rows)
}

pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<MetricsRow>> {
    run_sweep_with(spec, |_| Ok(()))
}

/// SINR ascending, then method name ascending.
pub fn sort_rows(rows: &mut [MetricsRow]) {
    rows.sort_by(|a, b| {
        a.sinr_db
            .total_cmp(&b.sinr_db)
            .then_with(|| a.method.name().cmp(b.method.name()))
    });
}

/// CSV layout options.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CsvOptions {
    /// Include the nondeterministic `wall_time_s` column.
    pub timing: bool,
    /// Include the `cfo_mae_hz` column.
    pub hz: bool,
}

pub fn csv_header(opts: CsvOptions) -> Vec<&'static str> {
    let mut h = vec![
        "sinr_db",
        "method",
        "cfo_mae",
        "cfo_mse",
        "chan_nmse_db",
        "crlb",
        "trials_ok",
    ];
    if opts.timing {
        h.push("wall_time_s");
    }
    h.extend(["trials", "suspect"]);
    if opts.hz {
        h.push("cfo_mae_hz");
    }
    h
}

/// Renders rows as CSV text. Floats use Rust's shortest round-trip form.
pub fn render_csv(rows: &[MetricsRow], opts: CsvOptions) -> Result<String> {
    let mut sorted = rows.to_vec();
    sort_rows(&mut sorted);
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(csv_header(opts))?;
    for r in &sorted {
        let mut rec = vec![
            r.sinr_db.to_string(),
            r.method.name().to_string(),
            r.cfo_mae.to_string(),
            r.cfo_mse.to_string(),
            r.chan_nmse_db.to_string(),
            r.crlb.to_string(),
            r.trials_ok.to_string(),
        ];
        if opts.timing {
            rec.push(r.wall_time_s.to_string());
        }
        rec.push(r.trials.to_string());
        rec.push(r.suspect.to_string());
        if opts.hz {
            rec.push(r.cfo_mae_hz.map_or_else(String::new, |v| v.to_string()));
        }
        w.write_record(&rec)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Config(format!("csv buffer: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

pub fn emit_csv(rows: &[MetricsRow], path: &Path, opts: CsvOptions) -> Result<()> {
    let text = render_csv(rows, opts)?;
    fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Parses a CSV written by [`emit_csv`]. Columns absent from the file keep
/// their defaults (`wall_time_s = 0`, no Hz value).
pub fn read_csv(text: &str) -> Result<Vec<MetricsRow>> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let header = rdr.headers()?.clone();
    let col = |name: &str| header.iter().position(|h| h == name);
    let need = |name: &str| col(name).ok_or_else(|| Error::Config(format!("csv lacks column `{name}`")));
    let idx = [
        need("sinr_db")?,
        need("method")?,
        need("cfo_mae")?,
        need("cfo_mse")?,
        need("chan_nmse_db")?,
        need("crlb")?,
        need("trials_ok")?,
        need("trials")?,
        need("suspect")?,
    ];
    let (timing, hz) = (col("wall_time_s"), col("cfo_mae_hz"));
    let bad = |what: &str| Error::Config(format!("csv: bad {what}"));
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let f = |i: usize| rec[i].parse::<f64>().map_err(|_| bad(&header[i]));
        let u = |i: usize| rec[i].parse::<usize>().map_err(|_| bad(&header[i]));
        rows.push(MetricsRow {
            sinr_db: f(idx[0])?,
            method: rec[idx[1]].parse()?,
            cfo_mae: f(idx[2])?,
            cfo_mse: f(idx[3])?,
            chan_nmse_db: f(idx[4])?,
            crlb: f(idx[5])?,
            trials_ok: u(idx[6])?,
            wall_time_s: timing.map(f).transpose()?.unwrap_or(0.0),
            trials: u(idx[7])?,
            suspect: rec[idx[8]].parse().map_err(|_| bad("suspect"))?,
            cfo_mae_hz: match hz {
                Some(i) if !rec[i].is_empty() => Some(f(i)?),
                _ => None,
            },
        });
    }
    Ok(rows)
}

/// Bound of one station for the `crlb` table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StationBound {
    pub bs: usize,
    pub report: CrlbReport,
}

/// Per-station bounds for trial `trial_index` of `config`: every station is
/// treated in turn as the target with the others as Gaussian interference,
/// at its true CFO.
pub fn crlb_table(config: &ScenarioConfig, trial_index: u64) -> Result<Vec<StationBound>> {
    let mut config = config.clone();
    let sigma_c2 = config.resolve_sigma_c2()?;
    let mut rng = trial_rng(config.seed, trial_index);
    let truth = draw_ground_truth(&config, &mut rng)?;
    (0..config.num_bs())
        .map(|k| {
            let others: Vec<Vec<Complex64>> = (0..config.num_bs())
                .filter(|&q| q != k)
                .map(|q| truth.alphas[q].clone())
                .collect();
            let model = StatisticModel::from_interference(
                config.preambles[k].clone(),
                truth.alphas[k].clone(),
                &others,
                sigma_c2,
                config.noise_var,
            );
            Ok(StationBound {
                bs: k,
                report: model.crlb(truth.omegas[k])?,
            })
        })
        .collect()
}

/// Columns `bs, gamma0, gamma1, r_mag, bound`.
pub fn render_crlb_csv(bounds: &[StationBound]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["bs", "gamma0", "gamma1", "r_mag", "bound"])?;
    for b in bounds {
        let r = &b.report;
        w.write_record([
            b.bs.to_string(),
            r.gamma0.to_string(),
            r.gamma1.to_string(),
            r.r_mag.to_string(),
            r.bound.to_string(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Config(format!("csv buffer: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}
