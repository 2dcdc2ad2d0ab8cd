//! Run configuration files: UTF-8 `key=value` lines. Unknown keys are
//! rejected by name.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::losses::LossConfig;
use crate::training::{Phase, TrainConfig};

/// Every key a run config may contain.
pub const ALLOWED_KEYS: [&str; 20] = [
    "phase",
    "lr",
    "batch",
    "iters",
    "seed",
    "hidden",
    "layers",
    "n",
    "gamma",
    "alpha",
    "n_b",
    "exponent",
    "continuity_mean",
    "dataset_dir",
    "checkpoint",
    "eval_interval",
    "stride",
    "enc_len",
    "dec_len",
    "embed_dim",
];

/// Parsed run configuration: the training knobs plus model dimensions and
/// paths. Missing keys fall back to phase-appropriate defaults.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub hidden: usize,
    pub layers: usize,
    pub n: usize,
    pub enc_len: usize,
    pub dec_len: usize,
    pub embed_dim: usize,
    pub dataset_dir: PathBuf,
    pub checkpoint: PathBuf,
}

pub fn parse_file(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_str(&text)
}

pub fn parse_str(text: &str) -> Result<RunConfig> {
    let mut kv = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::InvalidConfig(format!(
                "line {}: expected key=value, got {line:?}",
                lineno + 1
            )));
        };
        let key = key.trim();
        if !ALLOWED_KEYS.contains(&key) {
            return Err(Error::InvalidConfig(format!("unknown config key {key:?}")));
        }
        if kv.insert(key.to_string(), value.trim().to_string()).is_some() {
            return Err(Error::InvalidConfig(format!("duplicate config key {key:?}")));
        }
    }

    let phase = match kv.get("phase") {
        Some(p) => Phase::parse(p)?,
        None => return Err(Error::InvalidConfig("missing required key \"phase\"".into())),
    };
    let dataset_dir = kv
        .get("dataset_dir")
        .map(PathBuf::from)
        .ok_or_else(|| Error::InvalidConfig("missing required key \"dataset_dir\"".into()))?;
    let checkpoint = kv
        .get("checkpoint")
        .map(PathBuf::from)
        .ok_or_else(|| Error::InvalidConfig("missing required key \"checkpoint\"".into()))?;

    let f64_key = |key: &str, default: f64| -> Result<f64> {
        match kv.get(key) {
            Some(v) => v
                .parse()
                .map_err(|_| Error::InvalidConfig(format!("bad value for {key}: {v:?}"))),
            None => Ok(default),
        }
    };
    let usize_key = |key: &str, default: usize| -> Result<usize> {
        match kv.get(key) {
            Some(v) => v
                .parse()
                .map_err(|_| Error::InvalidConfig(format!("bad value for {key}: {v:?}"))),
            None => Ok(default),
        }
    };
    let bool_key = |key: &str, default: bool| -> Result<bool> {
        match kv.get(key).map(|s| s.as_str()) {
            Some("true") | Some("frames") | Some("1") => Ok(true),
            Some("false") | Some("0") => Ok(false),
            Some(v) => Err(Error::InvalidConfig(format!("bad value for {key}: {v:?}"))),
            None => Ok(default),
        }
    };

    let default_lr = match phase {
        Phase::Synth => 0.0002,
        _ => 0.0001,
    };
    let default_iters = match phase {
        Phase::Listening => 80_000,
        Phase::Speaking => 40_000,
        Phase::Synth => 5_000,
    };
    let loss = LossConfig {
        gamma: f64_key("gamma", 8.1)?,
        alpha: f64_key("alpha", 0.1)?,
        n_b: usize_key("n_b", 3)?,
        exponent: usize_key("exponent", 2)? as u32,
        continuity_mean_frames: bool_key("continuity_mean", false)?,
    };
    let train = TrainConfig {
        phase,
        lr: f64_key("lr", default_lr)?,
        batch: usize_key("batch", 16)?,
        iters: usize_key("iters", default_iters)?,
        seed: usize_key("seed", 0)? as u64,
        eval_interval: usize_key("eval_interval", 100)?,
        window_stride: usize_key("stride", 1)?,
        loss,
    };
    train.validate()?;

    Ok(RunConfig {
        train,
        hidden: usize_key("hidden", 1000)?,
        layers: usize_key("layers", match phase {
            Phase::Listening => 4,
            _ => 2,
        })?,
        n: usize_key("n", 10)?,
        enc_len: usize_key("enc_len", 25)?,
        dec_len: usize_key("dec_len", 370)?,
        embed_dim: usize_key("embed_dim", 200)?,
        dataset_dir,
        checkpoint,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_with_defaults() {
        let cfg = parse_str(
            "phase=listening\ndataset_dir=/tmp/data\ncheckpoint=/tmp/ck.nvsq\n",
        )
        .unwrap();
        assert_eq!(cfg.train.phase, Phase::Listening);
        assert_eq!(cfg.train.lr, 0.0001);
        assert_eq!(cfg.train.batch, 16);
        assert_eq!(cfg.train.iters, 80_000);
        assert_eq!(cfg.train.loss.gamma, 8.1);
        assert_eq!(cfg.train.loss.alpha, 0.1);
        assert_eq!(cfg.layers, 4);
        assert_eq!(cfg.n, 10);
    }

    #[test]
    fn synth_defaults_differ() {
        let cfg =
            parse_str("phase=synth\ndataset_dir=d\ncheckpoint=c\n").unwrap();
        assert_eq!(cfg.train.lr, 0.0002);
    }

    #[test]
    fn unknown_key_is_rejected_by_name() {
        let err = parse_str("phase=listening\ndataset_dir=d\ncheckpoint=c\nbogus=1\n")
            .unwrap_err();
        assert!(err.to_string().contains("bogus"), "{err}");
    }

    #[test]
    fn missing_required_keys_are_errors() {
        assert!(parse_str("phase=listening\ncheckpoint=c\n").is_err());
        assert!(parse_str("phase=listening\ndataset_dir=d\n").is_err());
        assert!(parse_str("dataset_dir=d\ncheckpoint=c\n").is_err());
    }

    #[test]
    fn comments_and_blanks_are_ignored() {
        let cfg = parse_str(
            "# run\n\nphase=speaking\ndataset_dir=d\ncheckpoint=c\nseed=7\n",
        )
        .unwrap();
        assert_eq!(cfg.train.seed, 7);
        assert_eq!(cfg.train.iters, 40_000);
        assert_eq!(cfg.layers, 2);
    }
}
