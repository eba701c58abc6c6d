//! TOML configuration: `[scenario]`, `[sweep]` and `[baselines]` sections.
//! Every key is optional and falls back to the reference scenario; unknown
//! keys are rejected.
//!
//! ```toml
//! [scenario]
//! num_bs = 4
//! num_frames = 6
//! noise_var = 0.01
//! max_delay = 8
//!
//! [sweep]
//! sinr_points_db = [-20.0, -10.0, 0.0]
//! trials = 50
//! methods = ["joint_algorithm", "separate"]
//!
//! [baselines]
//! n_fft = 256
//! n_cp = 32
//! ```

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use beamsync_core::baselines::CpWrapConfig;
use beamsync_core::joint::JointOptions;
use beamsync_core::sequences::{generate_zc, TrainingSequence};
use beamsync_core::synthesis::{zc_preambles, BeamProfile, DelayPlan, PreambleSpec, ScenarioConfig};
use beamsync_core::Complex64;
use serde::{Deserialize, Serialize};

use crate::harness::{Method, MethodParams, SweepSpec};
use crate::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default)]
    pub scenario: ScenarioSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub baselines: BaselinesSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BeamProfileName {
    FlatRayleigh,
    DominantBeam,
}

/// One station's preamble: either a pair of ZC roots or explicit samples
/// given as `[re, im]` pairs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreambleEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub roots: Option<[u32; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seq0: Option<Vec<[f64; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seq1: Option<Vec<[f64; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_bs: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_frames: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seq_len: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau0: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame_len: Option<usize>,
    /// Scaling shared by every generated preamble.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    /// ZC root pairs, one per station.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub roots: Option<Vec<[u32; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preambles: Option<Vec<PreambleEntry>>,
    /// rad/sample; defaults to `±0.8 * pi / tau_c`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cfo_range: Option<[f64; 2]>,
    /// Fixed per-station delays.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delays: Option<Vec<usize>>,
    /// Uniform random delays on `0..=max_delay`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_delay: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_var: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_sinr_db: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beam_profile: Option<BeamProfileName>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rolloff: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tail_len: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_c2: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sinr_points_db: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub methods: Option<Vec<Method>>,
    /// Defaults to the scenario seed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_rate_hz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub joint_epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub joint_max_iter: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselinesSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_fft: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_cp: Option<usize>,
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

fn to_samples(name: &str, pairs: &[[f64; 2]]) -> Result<TrainingSequence> {
    let samples = pairs.iter().map(|&[re, im]| Complex64::new(re, im)).collect();
    TrainingSequence::custom(samples).map_err(|e| config_err(format!("{name}: {e}")))
}

fn from_samples(seq: &TrainingSequence) -> Vec<[f64; 2]> {
    seq.samples().iter().map(|c| [c.re, c.im]).collect()
}

impl PreambleEntry {
    fn build(&self, index: usize, seq_len: usize, tau0: usize, default_mu: f64) -> Result<PreambleSpec> {
        let mu = self.mu.unwrap_or(default_mu);
        let (seq0, seq1) = match (self.roots, &self.seq0, &self.seq1) {
            (Some([r0, r1]), None, None) => (generate_zc(r0, seq_len)?, generate_zc(r1, seq_len)?),
            (None, Some(s0), Some(s1)) => (
                to_samples(&format!("preambles[{index}].seq0"), s0)?,
                to_samples(&format!("preambles[{index}].seq1"), s1)?,
            ),
            _ => {
                return Err(config_err(format!(
                    "preambles[{index}]: give either `roots` or both `seq0` and `seq1`"
                )))
            }
        };
        if seq0.len() != seq_len {
            return Err(config_err(format!(
                "preambles[{index}]: sequence length {} differs from seq_len {seq_len}",
                seq0.len()
            )));
        }
        Ok(PreambleSpec::new(seq0, seq1, mu, tau0)?)
    }

    fn describe(spec: &PreambleSpec) -> Self {
        let mu = Some(spec.mu());
        match (spec.seq0().root(), spec.seq1().root()) {
            (Some(r0), Some(r1)) => PreambleEntry {
                roots: Some([r0, r1]),
                mu,
                ..Default::default()
            },
            _ => PreambleEntry {
                seq0: Some(from_samples(spec.seq0())),
                seq1: Some(from_samples(spec.seq1())),
                mu,
                ..Default::default()
            },
        }
    }
}

impl ScenarioSection {
    /// Builds and validates the scenario.
    pub fn to_config(&self) -> Result<ScenarioConfig> {
        let defaults = ScenarioConfig::reference();
        let seq_len = self.seq_len.unwrap_or(defaults.seq_len());
        let tau0 = self.tau0.unwrap_or(defaults.tau0());
        let mu = self.mu.unwrap_or(1.0);

        let sources = [self.roots.is_some(), self.preambles.is_some()];
        if sources.iter().all(|&s| s) {
            return Err(config_err("give at most one of `roots` and `preambles`"));
        }
        let preambles = if let Some(roots) = &self.roots {
            roots
                .iter()
                .enumerate()
                .map(|(i, &r)| {
                    PreambleEntry {
                        roots: Some(r),
                        ..Default::default()
                    }
                    .build(i, seq_len, tau0, mu)
                })
                .collect::<Result<Vec<_>>>()?
        } else if let Some(entries) = &self.preambles {
            entries
                .iter()
                .enumerate()
                .map(|(i, e)| e.build(i, seq_len, tau0, mu))
                .collect::<Result<Vec<_>>>()?
        } else {
            zc_preambles(self.num_bs.unwrap_or(defaults.num_bs()), seq_len, tau0, mu)?
        };
        if let Some(k) = self.num_bs {
            if k != preambles.len() {
                return Err(config_err(format!(
                    "num_bs = {k} but {} preambles are defined",
                    preambles.len()
                )));
            }
        }

        let delays = match (&self.delays, self.max_delay) {
            (Some(_), Some(_)) => return Err(config_err("give at most one of `delays` and `max_delay`")),
            (Some(d), None) => DelayPlan::Fixed(d.clone()),
            (None, Some(max)) => DelayPlan::Uniform { max },
            (None, None) => defaults.delays.clone(),
        };
        let beam_profile = match (self.beam_profile, self.rolloff) {
            (None | Some(BeamProfileName::FlatRayleigh), None) => BeamProfile::FlatRayleigh,
            (Some(BeamProfileName::DominantBeam), r) => BeamProfile::DominantBeam {
                rolloff: r.unwrap_or(0.5),
            },
            (_, Some(_)) => return Err(config_err("`rolloff` applies only to beam_profile = \"dominant_beam\"")),
        };
        let cfo_range = match self.cfo_range {
            Some([lo, hi]) => (lo, hi),
            None => {
                let limit = 0.8 * PI / (seq_len + tau0) as f64;
                (-limit, limit)
            }
        };
        let config = ScenarioConfig {
            preambles,
            num_frames: self.num_frames.unwrap_or(defaults.num_frames),
            frame_len: self.frame_len.unwrap_or(defaults.frame_len),
            cfo_range,
            delays,
            noise_var: self.noise_var.unwrap_or(defaults.noise_var),
            target_sinr_db: self.target_sinr_db.unwrap_or(defaults.target_sinr_db),
            beam_profile,
            seed: self.seed.unwrap_or(defaults.seed),
            tail_len: self.tail_len.unwrap_or(defaults.tail_len),
            sigma_c2: self.sigma_c2,
        };
        config.validate()?;
        Ok(config)
    }

    /// Section that rebuilds `config` exactly.
    pub fn describe(config: &ScenarioConfig) -> Self {
        let (delays, max_delay) = match &config.delays {
            DelayPlan::Fixed(d) => (Some(d.clone()), None),
            DelayPlan::Uniform { max } => (None, Some(*max)),
        };
        let (beam_profile, rolloff) = match config.beam_profile {
            BeamProfile::FlatRayleigh => (BeamProfileName::FlatRayleigh, None),
            BeamProfile::DominantBeam { rolloff } => (BeamProfileName::DominantBeam, Some(rolloff)),
        };
        ScenarioSection {
            num_bs: Some(config.num_bs()),
            num_frames: Some(config.num_frames),
            seq_len: Some(config.seq_len()),
            tau0: Some(config.tau0()),
            frame_len: Some(config.frame_len),
            mu: None,
            roots: None,
            preambles: Some(config.preambles.iter().map(PreambleEntry::describe).collect()),
            cfo_range: Some([config.cfo_range.0, config.cfo_range.1]),
            delays,
            max_delay,
            noise_var: Some(config.noise_var),
            target_sinr_db: Some(config.target_sinr_db),
            beam_profile: Some(beam_profile),
            rolloff,
            seed: Some(config.seed),
            tail_len: Some(config.tail_len),
            sigma_c2: config.sigma_c2,
        }
    }
}

impl BaselinesSection {
    pub fn cp(&self) -> Result<CpWrapConfig> {
        let d = CpWrapConfig::default();
        let cp = CpWrapConfig {
            n_fft: self.n_fft.unwrap_or(d.n_fft),
            n_cp: self.n_cp.unwrap_or(d.n_cp),
        };
        cp.validate()?;
        Ok(cp)
    }
}

impl SweepSection {
    pub fn joint_options(&self) -> Result<JointOptions> {
        let d = JointOptions::default();
        let opts = JointOptions {
            epsilon: self.joint_epsilon.unwrap_or(d.epsilon),
            max_iter: self.joint_max_iter.unwrap_or(d.max_iter),
        };
        if !(opts.epsilon >= 0.0) || opts.max_iter == 0 {
            return Err(config_err("joint_epsilon must be >= 0 and joint_max_iter >= 1"));
        }
        Ok(opts)
    }
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| config_err(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn scenario_config(&self) -> Result<ScenarioConfig> {
        self.scenario.to_config()
    }

    pub fn sweep_spec(&self) -> Result<SweepSpec> {
        let reference = SweepSpec::reference();
        let base_config = self.scenario_config()?;
        let spec = SweepSpec {
            sinr_points_db: self.sweep.sinr_points_db.clone().unwrap_or(reference.sinr_points_db),
            trials: self.sweep.trials.unwrap_or(reference.trials),
            methods: self.sweep.methods.clone().unwrap_or(reference.methods),
            seed: self.sweep.seed.unwrap_or(base_config.seed),
            base_config,
            params: MethodParams {
                joint: self.sweep.joint_options()?,
                cp: self.baselines.cp()?,
            },
            sample_rate_hz: self.sweep.sample_rate_hz,
            workers: self.sweep.workers,
        };
        spec.validate()?;
        Ok(spec)
    }
}
