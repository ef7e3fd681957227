//! Experiment configuration as flat `key = value` text.

use std::fmt;
use std::path::Path;

use crate::data::{SplitSpec, SplitStrategy};
use crate::diffusion::DiffusionConfig;
use crate::classifier::TrainConfig;
use crate::enhance::DEFAULT_XI;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub seeds: Vec<u64>,
    pub split: SplitSpec,
    pub xi: f64,
    pub encoder_hidden: usize,
    pub encoder_epochs: usize,
    pub encoder_lr: f64,
    pub diffusion: DiffusionConfig,
    pub train: TrainConfig,
    pub no_se: bool,
    pub no_rd: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seeds: vec![0, 1, 2, 3, 4],
            split: SplitSpec::default(),
            xi: DEFAULT_XI,
            encoder_hidden: 64,
            encoder_epochs: 200,
            encoder_lr: 0.2,
            diffusion: DiffusionConfig::default(),
            train: TrainConfig::default(),
            no_se: false,
            no_rd: false,
        }
    }
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str, line: usize) -> Result<T> {
    value.parse().map_err(|_| Error::Parse {
        path: "config".into(),
        line,
        msg: format!("bad value {value:?} for {key}"),
    })
}

/// Comma-separated seed list, e.g. `0,1,2`.
pub fn parse_seeds(value: &str) -> Result<Vec<u64>> {
    let seeds = value
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<u64>()
                .map_err(|_| Error::InvalidParameter(format!("bad seed {s:?}")))
        })
        .collect::<Result<Vec<_>>>()?;
    if seeds.is_empty() {
        return Err(Error::InvalidParameter("at least one seed is required".into()));
    }
    Ok(seeds)
}

impl ExperimentConfig {
    /// Overrides one key. Line numbers are only used in error messages.
    pub fn set(&mut self, key: &str, value: &str, line: usize) -> Result<()> {
        match key {
            "seeds" => self.seeds = parse_seeds(value)?,
            "per_class_train" => self.split.per_class_train = parse_value(key, value, line)?,
            "per_class_val" => self.split.per_class_val = parse_value(key, value, line)?,
            "per_class_test" => self.split.per_class_test = parse_value(key, value, line)?,
            "rho" => self.split.rho = parse_value(key, value, line)?,
            "split" => self.split.strategy = value.parse::<SplitStrategy>()?,
            "xi" => self.xi = parse_value(key, value, line)?,
            "encoder_hidden" => self.encoder_hidden = parse_value(key, value, line)?,
            "encoder_epochs" => self.encoder_epochs = parse_value(key, value, line)?,
            "encoder_lr" => self.encoder_lr = parse_value(key, value, line)?,
            "k" => self.diffusion.k = parse_value(key, value, line)?,
            "alpha" => self.diffusion.alpha = parse_value(key, value, line)?,
            "p_drop" => self.diffusion.p_drop = parse_value(key, value, line)?,
            "p_feat" => self.diffusion.p_feat = parse_value(key, value, line)?,
            "d_out" => self.diffusion.d_out = parse_value(key, value, line)?,
            "epochs" => self.train.epochs = parse_value(key, value, line)?,
            "lr" => self.train.lr = parse_value(key, value, line)?,
            "weight_decay" => self.train.weight_decay = parse_value(key, value, line)?,
            "no_se" => self.no_se = parse_value(key, value, line)?,
            "no_rd" => self.no_rd = parse_value(key, value, line)?,
            _ => {
                return Err(Error::Parse {
                    path: "config".into(),
                    line,
                    msg: format!("unknown key {key:?}"),
                })
            }
        }
        Ok(())
    }

    /// Defaults overridden by every `key = value` line of `text`.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (k, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                path: "config".into(),
                line: k + 1,
                msg: "expected `key = value`".into(),
            })?;
            cfg.set(key.trim(), value.trim(), k + 1)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text).map_err(|e| match e {
            Error::Parse { line, msg, .. } => Error::Parse {
                path: path.display().to_string(),
                line,
                msg,
            },
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::InvalidParameter("at least one seed is required".into()));
        }
        self.split.validate()?;
        if !(0.0..0.5).contains(&self.xi) {
            return Err(Error::InvalidParameter(format!("xi must lie in [0, 0.5), got {}", self.xi)));
        }
        if self.encoder_hidden == 0 || self.encoder_epochs == 0 || self.train.epochs == 0 {
            return Err(Error::InvalidParameter(
                "encoder_hidden, encoder_epochs and epochs must be >= 1".into(),
            ));
        }
        if !(self.encoder_lr >= 0.0) || !(self.train.lr >= 0.0) || !(self.train.weight_decay >= 0.0) {
            return Err(Error::InvalidParameter(
                "learning rates and weight decay must be >= 0".into(),
            ));
        }
        self.diffusion.validate()
    }
}

impl fmt::Display for ExperimentConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let seeds: Vec<String> = self.seeds.iter().map(u64::to_string).collect();
        writeln!(f, "seeds = {}", seeds.join(","))?;
        writeln!(f, "split = {}", self.split.strategy)?;
        writeln!(f, "per_class_train = {}", self.split.per_class_train)?;
        writeln!(f, "per_class_val = {}", self.split.per_class_val)?;
        writeln!(f, "per_class_test = {}", self.split.per_class_test)?;
        writeln!(f, "rho = {}", self.split.rho)?;
        writeln!(f, "xi = {}", self.xi)?;
        writeln!(f, "encoder_hidden = {}", self.encoder_hidden)?;
        writeln!(f, "encoder_epochs = {}", self.encoder_epochs)?;
        writeln!(f, "encoder_lr = {}", self.encoder_lr)?;
        writeln!(f, "k = {}", self.diffusion.k)?;
        writeln!(f, "alpha = {}", self.diffusion.alpha)?;
        writeln!(f, "p_drop = {}", self.diffusion.p_drop)?;
        writeln!(f, "p_feat = {}", self.diffusion.p_feat)?;
        writeln!(f, "d_out = {}", self.diffusion.d_out)?;
        writeln!(f, "epochs = {}", self.train.epochs)?;
        writeln!(f, "lr = {}", self.train.lr)?;
        writeln!(f, "weight_decay = {}", self.train.weight_decay)?;
        writeln!(f, "no_se = {}", self.no_se)?;
        writeln!(f, "no_rd = {}", self.no_rd)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = ExperimentConfig::default();
        assert_eq!(c.diffusion.k, 10);
        assert_eq!(c.diffusion.alpha, 0.15);
        assert_eq!(c.diffusion.p_drop, 0.1);
        assert_eq!(c.xi, 0.25);
        assert_eq!(c.seeds.len(), 5);
        c.validate().unwrap();
    }

    #[test]
    fn text_round_trip() {
        let mut c = ExperimentConfig::default();
        c.seeds = vec![7, 9];
        c.diffusion.k = 3;
        c.no_se = true;
        c.split.strategy = SplitStrategy::Fraction;
        assert_eq!(ExperimentConfig::parse(&c.to_string()).unwrap(), c);
    }

    #[test]
    fn errors_name_the_line() {
        let err = ExperimentConfig::parse("k = 3\n# note\nbogus = 1\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
        let err = ExperimentConfig::parse("alpha = lots\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
        assert!(ExperimentConfig::parse("alpha = 1.5\n").is_err());
        assert!(ExperimentConfig::parse("novalue\n").is_err());
    }
}
