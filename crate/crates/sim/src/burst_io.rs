//! Burst files: raw samples as little-endian interleaved `f64` `(re, im)`
//! pairs, plus a TOML sidecar at `<path>.toml` holding the scenario and,
//! for simulated bursts, the ground truth.
//!
//! Externally captured IQ can be ingested by writing the sidecar by hand; a
//! burst without truth needs fixed `delays` in its scenario.

use std::fs;
use std::path::{Path, PathBuf};

use beamsync_core::synthesis::{DelayPlan, GroundTruth, ReceivedBurst};
use beamsync_core::Complex64;
use serde::{Deserialize, Serialize};

use crate::config::ScenarioSection;
use crate::{Error, Result};

const FORMAT: &str = "beamsync-iq";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Sidecar {
    format: String,
    version: u32,
    num_samples: usize,
    scenario: ScenarioSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    truth: Option<GroundTruth>,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".toml");
    PathBuf::from(s)
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn encode_samples(samples: &[Complex64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(samples.len() * 16);
    for s in samples {
        out.extend_from_slice(&s.re.to_le_bytes());
        out.extend_from_slice(&s.im.to_le_bytes());
    }
    out
}

pub fn decode_samples(bytes: &[u8]) -> Result<Vec<Complex64>> {
    if bytes.len() % 16 != 0 {
        return Err(Error::Config(format!(
            "IQ data of {} bytes is not a whole number of (re, im) f64 pairs",
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(16)
        .map(|c| {
            let re = f64::from_le_bytes(c[..8].try_into().expect("8 bytes"));
            let im = f64::from_le_bytes(c[8..].try_into().expect("8 bytes"));
            Complex64::new(re, im)
        })
        .collect())
}

/// Writes `path` and its sidecar.
pub fn write_burst(burst: &ReceivedBurst, path: &Path) -> Result<()> {
    let sidecar = Sidecar {
        format: FORMAT.into(),
        version: VERSION,
        num_samples: burst.samples.len(),
        scenario: ScenarioSection::describe(&burst.config),
        truth: burst.truth.clone(),
    };
    let text = toml::to_string(&sidecar).map_err(|e| Error::Config(format!("sidecar: {e}")))?;
    fs::write(path, encode_samples(&burst.samples)).map_err(io_err(path))?;
    let side = sidecar_path(path);
    fs::write(&side, text).map_err(io_err(&side))
}

/// Reads `path` and its sidecar.
pub fn read_burst(path: &Path) -> Result<ReceivedBurst> {
    let side = sidecar_path(path);
    let text = fs::read_to_string(&side).map_err(io_err(&side))?;
    let sidecar: Sidecar = toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", side.display())))?;
    if sidecar.format != FORMAT || sidecar.version != VERSION {
        return Err(Error::Config(format!(
            "{}: expected format {FORMAT} version {VERSION}",
            side.display()
        )));
    }
    let config = sidecar.scenario.to_config()?;
    let samples = decode_samples(&fs::read(path).map_err(io_err(path))?)?;
    if samples.len() != sidecar.num_samples {
        return Err(Error::Config(format!(
            "{}: sidecar announces {} samples, file holds {}",
            path.display(),
            sidecar.num_samples,
            samples.len()
        )));
    }
    if let Some(t) = &sidecar.truth {
        let k = config.num_bs();
        let p = config.num_frames;
        if t.omegas.len() != k
            || t.mus.len() != k
            || t.delays.len() != k
            || t.alphas.len() != k
            || t.alphas.iter().any(|a| a.len() != p)
        {
            return Err(Error::Config(format!(
                "{}: truth does not match the scenario dimensions",
                side.display()
            )));
        }
    }
    Ok(ReceivedBurst {
        samples,
        config,
        truth: sidecar.truth,
    })
}

/// Station delays the receiver assumes: the truth's when present, otherwise
/// the scenario's fixed plan.
pub fn receiver_delays(burst: &ReceivedBurst) -> Result<Vec<usize>> {
    if let Some(t) = &burst.truth {
        return Ok(t.delays.clone());
    }
    match &burst.config.delays {
        DelayPlan::Fixed(d) => Ok(d.clone()),
        DelayPlan::Uniform { .. } => Err(Error::Config(
            "burst has no ground truth; its scenario needs fixed `delays`".into(),
        )),
    }
}
