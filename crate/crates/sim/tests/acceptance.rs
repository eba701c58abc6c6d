//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails. Criteria 4 to 6 and the harness invariants read the
//! rows of the default sweep that criterion 9 runs anyway.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use beamsync_core::bounds::{aggregate_sinr, crlb_cfo, fisher_numeric, StatisticModel, DEFAULT_FISHER_STEP};
use beamsync_core::estimators::{correlate_window, expected_statistic, noise_variance, ReceiverModel};
use beamsync_core::joint::{joint_estimate, JointOptions};
use beamsync_core::sequences::{estimate_sigma_c, generate_zc, TrainingSequence};
use beamsync_core::synthesis::{
    draw_ground_truth, model_signal, synthesize_burst, zc_preambles, DelayPlan, GroundTruth, PreambleSpec,
    ScenarioConfig,
};
use beamsync_core::Complex64;
use beamsync_sim::harness::{render_csv, run_sweep, CsvOptions, Method, MetricsRow, SweepSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn within(elapsed: Duration, limit_s: f64) -> bool {
    elapsed.as_secs_f64() < limit_s
}

fn polar(rng: &mut impl Rng, lo: f64, hi: f64) -> Complex64 {
    Complex64::from_polar(rng.random_range(lo..hi), rng.random_range(-PI..PI))
}

fn exact_recovery() -> Outcome {
    let start = Instant::now();
    let mut worst = (0.0f64, 0.0f64);
    let mut unconverged = 0;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for frac in [-0.8, -0.5, 0.5, 0.8] {
        for _ in 0..4 {
            let frames = rng.random_range(1..=8);
            let mut c = ScenarioConfig::with_dimensions(1, frames).unwrap();
            c.noise_var = 0.0;
            let mut t = draw_ground_truth(&c, &mut rng).unwrap();
            t.omegas[0] = frac * PI / c.layout().tau_c() as f64;
            let y = model_signal(&c, &t).unwrap();
            let model = ReceiverModel::from_config(&c, &t.delays).unwrap();
            let est = joint_estimate(&y, &model, &JointOptions::default()).unwrap();
            let num: f64 = est.alphas_hat[0]
                .iter()
                .zip(&t.alphas[0])
                .map(|(a, b)| (a - b).norm_sqr())
                .sum();
            let den: f64 = t.alphas[0].iter().map(|b| b.norm_sqr()).sum();
            worst.0 = worst.0.max((est.omegas_hat[0] - t.omegas[0]).abs());
            worst.1 = worst.1.max((num / den).sqrt());
            unconverged += usize::from(!est.converged);
        }
    }
    let elapsed = start.elapsed();
    outcome(
        worst.0 <= 1e-10 && worst.1 <= 1e-8 && within(elapsed, 1.0),
        format!(
            "16 bursts, max |w err| {:.2e}, max channel rel err {:.2e}, {unconverged} unconverged, {:.2?}",
            worst.0, worst.1, elapsed
        ),
    )
}

fn crlb_oracle() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..20 {
        let k = rng.random_range(1..=3);
        let frames = rng.random_range(1..=6);
        let mu = rng.random_range(0.5..2.0);
        let pre = zc_preambles(1, 127, 127, mu).unwrap().remove(0);
        let target: Vec<_> = (0..frames).map(|_| polar(&mut rng, 0.2, 1.5)).collect();
        let others: Vec<Vec<_>> = (1..k)
            .map(|_| (0..frames).map(|_| polar(&mut rng, 0.2, 3.0)).collect())
            .collect();
        let model = StatisticModel::from_interference(pre, target, &others, 1.0, rng.random_range(0.01..1.0));
        let omega = rng.random_range(-0.1..0.1) / model.tau_c as f64;
        let closed = model.crlb(omega).unwrap().bound;
        let numeric = fisher_numeric(&model, omega, DEFAULT_FISHER_STEP).unwrap();
        worst = worst.max((closed - numeric).abs() / closed);
    }
    let elapsed = start.elapsed();
    outcome(
        worst <= 0.01 && within(elapsed, 10.0),
        format!("20 instances, max relative gap {worst:.2e}, {elapsed:.2?}"),
    )
}

fn row(rows: &[MetricsRow], sinr: f64, method: Method) -> &MetricsRow {
    rows.iter()
        .find(|r| r.sinr_db == sinr && r.method == method)
        .unwrap_or_else(|| panic!("no row for {} at {sinr} dB", method.name()))
}

fn efficiency() -> Outcome {
    let start = Instant::now();
    let spec = SweepSpec {
        sinr_points_db: vec![0.0, 10.0],
        trials: 500,
        methods: vec![Method::CrossPreamble],
        seed: 3,
        ..SweepSpec::reference()
    };
    let rows = run_sweep(&spec).unwrap();
    let elapsed = start.elapsed();
    let mut passed = within(elapsed, 300.0);
    let mut parts = Vec::new();
    for s in [0.0, 10.0] {
        let r = row(&rows, s, Method::CrossPreamble);
        let gap_db = 10.0 * (r.cfo_mse / r.crlb).log10();
        passed &= gap_db.abs() <= 3.0 && r.trials_ok == r.trials;
        parts.push(format!("{s:+} dB: MSE/CRLB {gap_db:+.2} dB"));
    }
    outcome(passed, format!("{}, {elapsed:.2?}", parts.join(", ")))
}

fn ordering(rows: &[MetricsRow], sweep_time: Duration) -> Outcome {
    let order = [
        Method::JointAlgorithm,
        Method::Separate,
        Method::AutocorrSplit,
        Method::CpBlind,
    ];
    let mut passed = within(sweep_time, 600.0);
    let mut parts = Vec::new();
    for s in [-20.0, -10.0, 0.0] {
        let mae: Vec<f64> = order.iter().map(|&m| row(rows, s, m).cfo_mae).collect();
        passed &= mae.windows(2).all(|w| w[0] < w[1]);
        let one_shot = row(rows, s, Method::CrossPreamble).cfo_mae;
        parts.push(format!(
            "{s} dB: {:.2e} < {:.2e} < {:.2e} < {:.2e} (one-shot cross {one_shot:.2e})",
            mae[0], mae[1], mae[2], mae[3]
        ));
    }
    outcome(passed, format!("{}; full sweep {sweep_time:.2?}", parts.join("; ")))
}

fn robustness(rows: &[MetricsRow]) -> Outcome {
    let joint = row(rows, -30.0, Method::JointAlgorithm).cfo_mae;
    let weighted = row(rows, -5.0, Method::WeightedAvg).cfo_mae;
    let one_shot = row(rows, -30.0, Method::CrossPreamble).cfo_mae;
    outcome(
        joint <= weighted,
        format!("joint @ -30 dB {joint:.3e} vs weighted_avg @ -5 dB {weighted:.3e} (one-shot cross @ -30 dB {one_shot:.3e})"),
    )
}

fn channel_gain(rows: &[MetricsRow]) -> Outcome {
    let joint = row(rows, -10.0, Method::JointAlgorithm).chan_nmse_db;
    let zero = row(rows, -10.0, Method::ZeroCfoLls).chan_nmse_db;
    outcome(
        joint <= zero - 3.0,
        format!(
            "NMSE @ -10 dB: joint {joint:.2} dB, zero-CFO LLS {zero:.2} dB, gain {:.2} dB",
            zero - joint
        ),
    )
}

fn aggregation_law() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut failures = 0;
    let cases = 1000;
    for _ in 0..cases {
        let frames = rng.random_range(1..=24);
        let mu = rng.random_range(0.25..4.0);
        let a: Vec<_> = (0..frames).map(|_| polar(&mut rng, 1e-3, 1e3)).collect();
        let v: Vec<[f64; 2]> = (0..frames)
            .map(|_| [rng.random_range(1e-3..1e3), rng.random_range(1e-3..1e3)])
            .collect();
        let r = rng.random_range(0.5..1.0);
        let (g0, g1) = aggregate_sinr(&a, mu, &v);
        let doubled_a: Vec<_> = a.iter().chain(&a).copied().collect();
        let doubled_v: Vec<_> = v.iter().chain(&v).copied().collect();
        let (h0, h1) = aggregate_sinr(&doubled_a, mu, &doubled_v);
        let ratio = crlb_cfo(g0, g1, r, 254).unwrap().bound / crlb_cfo(h0, h1, r, 254).unwrap().bound;
        failures += usize::from(ratio != 2.0);
    }
    outcome(
        failures == 0,
        format!("{cases} random frame sets, {failures} with ratio != 2 exactly"),
    )
}

/// One random interference geometry for the distribution check.
struct StatisticCase {
    target: PreambleSpec,
    target_alphas: Vec<Complex64>,
    /// `[interferer][frame]` magnitudes; phases are redrawn every draw.
    interferer_mags: Vec<Vec<f64>>,
    mu: f64,
    omega: f64,
    delay: usize,
    noise_var: f64,
}

fn statistic_case(rng: &mut ChaCha8Rng) -> StatisticCase {
    let n = 127;
    let mu = rng.random_range(0.6..1.6);
    let k = rng.random_range(2..=5);
    let frames = rng.random_range(1..=4);
    StatisticCase {
        target: PreambleSpec::new(generate_zc(1, n).unwrap(), generate_zc(2, n).unwrap(), mu, 127).unwrap(),
        target_alphas: (0..frames).map(|_| polar(rng, 0.3, 1.2)).collect(),
        interferer_mags: (1..k)
            .map(|_| (0..frames).map(|_| rng.random_range(0.3..2.0)).collect())
            .collect(),
        mu,
        omega: rng.random_range(-0.8..0.8) * PI / 254.0,
        delay: rng.random_range(0..=8),
        noise_var: rng.random_range(0.05..1.0),
    }
}

/// Worst `(|mean - model| / se, |var / model - 1|)` over the case's cells.
fn statistic_check(case: &StatisticCase, sigma_c2: f64, pool: &[u32], rng: &mut ChaCha8Rng) -> (f64, f64) {
    let n = 127;
    let frames = case.target_alphas.len();
    let k = 1 + case.interferer_mags.len();
    let mut base = ScenarioConfig::with_dimensions(k, frames).unwrap();
    base.noise_var = case.noise_var;
    base.sigma_c2 = Some(sigma_c2);
    let layout = base.layout();
    let lim = 0.8 * PI / layout.tau_c() as f64;
    let draws = 10_000;
    let mut sum = vec![[Complex64::new(0.0, 0.0); 2]; frames];
    let mut sum_sq = vec![[0.0; 2]; frames];
    for _ in 0..draws {
        let mut roots = pool.to_vec();
        let mut c = base.clone();
        c.preambles = vec![case.target.clone()];
        let mut truth = GroundTruth {
            omegas: vec![case.omega],
            alphas: vec![case.target_alphas.clone()],
            mus: vec![case.mu; k],
            delays: vec![case.delay],
        };
        for mags in &case.interferer_mags {
            let a = roots.swap_remove(rng.random_range(0..roots.len()));
            let b = roots.swap_remove(rng.random_range(0..roots.len()));
            c.preambles
                .push(PreambleSpec::new(generate_zc(a, n).unwrap(), generate_zc(b, n).unwrap(), case.mu, 127).unwrap());
            truth.omegas.push(rng.random_range(-lim..lim));
            truth.alphas.push(
                mags.iter()
                    .map(|&m| Complex64::from_polar(m, rng.random_range(-PI..PI)))
                    .collect(),
            );
            truth.delays.push(rng.random_range(0..=8));
        }
        c.delays = DelayPlan::Fixed(truth.delays.clone());
        let y = synthesize_burst(&c, &truth, rng).unwrap().samples;
        for p in 0..frames {
            for i in 0..2 {
                let r = correlate_window(&y, case.target.seq(i), layout.window_start(p, i, case.delay)).unwrap();
                sum[p][i] += r;
                sum_sq[p][i] += r.norm_sqr();
            }
        }
    }
    let mut worst = (0.0f64, 0.0f64);
    for p in 0..frames {
        let others: Vec<Complex64> = case.interferer_mags.iter().map(|m| Complex64::new(m[p], 0.0)).collect();
        for i in 0..2 {
            let mean = sum[p][i] / draws as f64;
            let var = (sum_sq[p][i] - draws as f64 * mean.norm_sqr()) / (draws - 1) as f64;
            let expect = expected_statistic(
                &case.target,
                &layout,
                case.delay,
                case.target_alphas[p],
                case.mu,
                case.omega,
                p,
                i,
            );
            let model = noise_variance(&others, case.mu, i, sigma_c2, case.noise_var, n);
            worst.0 = worst.0.max((mean - expect).norm() / (var / draws as f64).sqrt());
            worst.1 = worst.1.max((var / model - 1.0).abs());
        }
    }
    worst
}

fn statistic_distribution() -> Outcome {
    let start = Instant::now();
    let pool: Vec<u32> = (3..40).collect();
    let family: Vec<TrainingSequence> = [1, 2]
        .into_iter()
        .chain(pool.iter().copied())
        .map(|r| generate_zc(r, 127).unwrap())
        .collect();
    let offsets: Vec<i64> = (-8..=8).filter(|&d| d != 0).collect();
    let sigma_c2 = estimate_sigma_c(&family, &offsets).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut passed = true;
    let mut parts = Vec::new();
    for _ in 0..5 {
        let case = statistic_case(&mut rng);
        let (mean_se, var_rel) = statistic_check(&case, sigma_c2, &pool, &mut rng);
        passed &= mean_se <= 3.0 && var_rel <= 0.1;
        parts.push(format!(
            "K={} P={}: {mean_se:.2} SE, {:.1}%",
            1 + case.interferer_mags.len(),
            case.target_alphas.len(),
            100.0 * var_rel
        ));
    }
    let elapsed = start.elapsed();
    passed &= within(elapsed, 60.0);
    outcome(passed, format!("{}; {elapsed:.2?}", parts.join(", ")))
}

fn bound_sanity(rows: &[MetricsRow]) -> Outcome {
    let checked: Vec<_> = rows.iter().filter(|r| r.trials_ok >= 100).collect();
    let low: Vec<_> = checked.iter().filter(|r| r.cfo_mse < 0.8 * r.crlb).collect();
    let tightest = checked
        .iter()
        .map(|r| (r.cfo_mse / r.crlb, r))
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(q, r)| format!("{} @ {} dB at {:+.2} dB", r.method.name(), r.sinr_db, 10.0 * q.log10()))
        .unwrap_or_default();
    outcome(
        low.is_empty() && !checked.is_empty(),
        format!(
            "{} rows checked, {} below 0.8 CRLB, tightest {tightest}",
            checked.len(),
            low.len()
        ),
    )
}

fn monotone_trend(rows: &[MetricsRow]) -> Outcome {
    let mut cross: Vec<_> = rows.iter().filter(|r| r.method == Method::CrossPreamble).collect();
    cross.sort_by(|a, b| a.sinr_db.total_cmp(&b.sinr_db));
    let mut violations = 0;
    for (j, hi) in cross.iter().enumerate() {
        for lo in &cross[..j] {
            if hi.sinr_db >= lo.sinr_db + 5.0 && hi.cfo_mae > lo.cfo_mae {
                violations += 1;
            }
        }
    }
    let curve: Vec<String> = cross.iter().map(|r| format!("{:.1e}", r.cfo_mae)).collect();
    outcome(
        violations == 0,
        format!("cross_preamble MAE -30..0 dB [{}]", curve.join(", ")),
    )
}

fn main() -> ExitCode {
    let mut lines: Vec<(String, Outcome)> = Vec::new();
    let mut report = |name: &str, o: Outcome| {
        println!("{} {name}: {}", if o.passed { "PASS" } else { "FAIL" }, o.detail);
        lines.push((name.to_string(), o));
    };

    report("criterion 1 exact recovery", exact_recovery());
    report("criterion 2 CRLB oracle", crlb_oracle());
    report("criterion 3 efficiency", efficiency());

    let spec = SweepSpec::reference();
    let start = Instant::now();
    let serial = run_sweep(&SweepSpec {
        workers: Some(1),
        ..spec.clone()
    })
    .unwrap();
    let sweep_time = start.elapsed();
    let parallel = run_sweep(&SweepSpec {
        workers: Some(8),
        ..spec
    })
    .unwrap();

    report("criterion 4 ordering", ordering(&serial, sweep_time));
    report("criterion 5 robustness", robustness(&serial));
    report("criterion 6 channel gain", channel_gain(&serial));
    report("criterion 7 aggregation law", aggregation_law());
    report(
        "criterion 8 correlation statistic distribution",
        statistic_distribution(),
    );

    let a = render_csv(&serial, CsvOptions::default()).unwrap();
    let b = render_csv(&parallel, CsvOptions::default()).unwrap();
    report(
        "criterion 9 determinism",
        outcome(
            a == b,
            format!(
                "{} rows, {} bytes, 1 vs 8 workers identical: {}",
                serial.len(),
                a.len(),
                a == b
            ),
        ),
    );
    report("invariant bound sanity", bound_sanity(&serial));
    report("invariant monotone trend", monotone_trend(&serial));

    let failed = lines.iter().filter(|(_, o)| !o.passed).count();
    println!("acceptance: {} passed, {failed} failed", lines.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
