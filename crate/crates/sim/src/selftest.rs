//! Quick invariant suite behind `beamsync selftest`.

use std::f64::consts::PI;
use std::fmt;

use beamsync_core::bounds::{crlb_cfo, fisher_numeric, StatisticModel, DEFAULT_FISHER_STEP};
use beamsync_core::estimators::ReceiverModel;
use beamsync_core::joint::{joint_estimate, JointOptions};
use beamsync_core::synthesis::{model_signal, synthesize_burst, zc_preambles, DelayPlan, GroundTruth, ScenarioConfig};
use beamsync_core::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::harness::{read_csv, render_csv, run_sweep, CsvOptions, Method, SweepSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{tag} {}: {}", self.name, self.detail)
    }
}

fn check(name: &'static str, result: Result<String, String>) -> Check {
    match result {
        Ok(detail) => Check {
            name,
            passed: true,
            detail,
        },
        Err(detail) => Check {
            name,
            passed: false,
            detail,
        },
    }
}

fn rel_err(a: &[Complex64], b: &[Complex64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum();
    let den: f64 = b.iter().map(|y| y.norm_sqr()).sum();
    (num / den).sqrt()
}

fn exact_recovery() -> Result<String, String> {
    let mut c = ScenarioConfig::with_dimensions(1, 4).map_err(|e| e.to_string())?;
    c.noise_var = 0.0;
    c.delays = DelayPlan::Fixed(vec![5]);
    let tau_c = c.layout().tau_c() as f64;
    let mut worst: (f64, f64) = (0.0, 0.0);
    for f in [-0.8, -0.5, 0.5, 0.8] {
        let omega = f * PI / tau_c;
        let truth = GroundTruth {
            omegas: vec![omega],
            alphas: vec![(0..4)
                .map(|p| Complex64::from_polar(1.0 + 0.2 * p as f64, 0.7 * p as f64))
                .collect()],
            mus: vec![1.0],
            delays: vec![5],
        };
        let y = model_signal(&c, &truth).map_err(|e| e.to_string())?;
        let model = ReceiverModel::from_config(&c, &truth.delays).map_err(|e| e.to_string())?;
        let est = joint_estimate(&y, &model, &JointOptions::default()).map_err(|e| e.to_string())?;
        worst.0 = worst.0.max((est.omegas_hat[0] - omega).abs());
        worst.1 = worst.1.max(rel_err(&est.alphas_hat[0], &truth.alphas[0]));
    }
    let detail = format!("max |omega error| {:.2e}, max channel error {:.2e}", worst.0, worst.1);
    if worst.0 <= 1e-10 && worst.1 <= 1e-8 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn crlb_oracle() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for _ in 0..5 {
        let frames = rng.random_range(1..=6);
        let pre = zc_preambles(1, 127, 127, 1.0).map_err(|e| e.to_string())?.remove(0);
        let alphas: Vec<_> = (0..frames)
            .map(|_| Complex64::from_polar(rng.random_range(0.2..1.5), rng.random_range(-PI..PI)))
            .collect();
        let interferers: Vec<Vec<_>> = (0..2)
            .map(|_| {
                (0..frames)
                    .map(|_| Complex64::from_polar(rng.random_range(0.5..3.0), 0.0))
                    .collect()
            })
            .collect();
        let model = StatisticModel::from_interference(pre, alphas, &interferers, 1.0, 0.05);
        let omega = rng.random_range(-0.1..0.1) / 254.0;
        let closed = model.crlb(omega).map_err(|e| e.to_string())?.bound;
        let numeric = fisher_numeric(&model, omega, DEFAULT_FISHER_STEP).map_err(|e| e.to_string())?;
        worst = worst.max((numeric - closed).abs() / closed);
    }
    let detail = format!("max relative gap {worst:.2e}");
    if worst <= 0.01 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn aggregation_law() -> Result<String, String> {
    let one = crlb_cfo(8.0, 6.0, 0.9, 254).map_err(|e| e.to_string())?.bound;
    let two = crlb_cfo(16.0, 12.0, 0.9, 254).map_err(|e| e.to_string())?.bound;
    let ratio = one / two;
    let detail = format!("bound ratio {ratio}");
    if (ratio - 2.0).abs() <= 4.0 * f64::EPSILON {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn reproducible_bursts() -> Result<String, String> {
    let c = ScenarioConfig::with_dimensions(3, 2).map_err(|e| e.to_string())?;
    let draw = || -> Result<Vec<Complex64>, String> {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let truth = beamsync_core::synthesis::draw_ground_truth(&c, &mut rng).map_err(|e| e.to_string())?;
        Ok(synthesize_burst(&c, &truth, &mut rng)
            .map_err(|e| e.to_string())?
            .samples)
    };
    let (a, b) = (draw()?, draw()?);
    let same = a
        .iter()
        .zip(&b)
        .all(|(x, y)| x.re.to_bits() == y.re.to_bits() && x.im.to_bits() == y.im.to_bits());
    if same && a.len() == b.len() {
        Ok(format!("{} samples bit-identical", a.len()))
    } else {
        Err("bursts differ".into())
    }
}

fn sweep_determinism() -> Result<String, String> {
    let mut spec = SweepSpec::reference();
    spec.base_config = ScenarioConfig::with_dimensions(3, 3).map_err(|e| e.to_string())?;
    spec.sinr_points_db = vec![-10.0, 0.0];
    spec.trials = 4;
    spec.methods = vec![Method::JointAlgorithm, Method::Separate, Method::CpBlind];
    let render = |workers| -> Result<String, String> {
        let mut s = spec.clone();
        s.workers = Some(workers);
        let rows = run_sweep(&s).map_err(|e| e.to_string())?;
        render_csv(&rows, CsvOptions::default()).map_err(|e| e.to_string())
    };
    let (a, b) = (render(1)?, render(3)?);
    if a != b {
        return Err("CSV differs between worker counts".into());
    }
    let back = read_csv(&a).map_err(|e| e.to_string())?;
    let again = render_csv(&back, CsvOptions::default()).map_err(|e| e.to_string())?;
    if again != a {
        return Err("CSV does not round-trip".into());
    }
    Ok(format!("{} rows identical across workers and re-parse", back.len()))
}

/// Runs every check; failures are reported, not raised.
pub fn run_selftest() -> Vec<Check> {
    vec![
        check("exact_recovery", exact_recovery()),
        check("crlb_oracle", crlb_oracle()),
        check("aggregation_law", aggregation_law()),
        check("reproducible_bursts", reproducible_bursts()),
        check("sweep_determinism", sweep_determinism()),
    ]
}
