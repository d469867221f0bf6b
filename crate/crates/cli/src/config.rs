//! Flat `key = value` run configuration. Blank lines and `#` comments are
//! ignored; later assignments win.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use kern_core::baselines::Method;
use kern_core::corpus::SynthConfig;
use kern_core::eval::Setting;
use kern_core::gradkernel::OptimizerKind;
use kern_core::kern::{TrainConfig, WeightInit};

use crate::errors::{suggest, Failure};

pub const KEYS: &[&str] = &[
    "corpus",
    "taxonomy",
    "checkpoint",
    "counts",
    "out",
    "seed",
    "setting",
    "methods",
    "group",
    "element",
    "top",
    "train.embed_dim",
    "train.hidden",
    "train.lambda",
    "train.batch_size",
    "train.iterations",
    "train.stride",
    "train.optimizer",
    "train.learning_rate",
    "train.internal",
    "train.external",
    "train.weight_init",
    "synth.cities",
    "synth.age_bands",
    "synth.genders",
    "synth.max_groups",
    "synth.categories",
    "synth.attributes_per_category",
    "synth.values_per_attribute",
    "synth.length",
    "synth.grid_period",
    "synth.noise",
    "synth.slope_scale",
    "synth.similar_pairs",
    "synth.opposite_pairs",
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub corpus: Option<PathBuf>,
    pub taxonomy: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub counts: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: u64,
    pub setting: Setting,
    pub methods: Vec<Method>,
    pub group: Option<String>,
    pub element: Option<String>,
    pub top: usize,
    pub train: TrainConfig,
    pub synth: SynthConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            corpus: None,
            taxonomy: None,
            checkpoint: None,
            counts: None,
            out: None,
            seed: 0,
            setting: Setting::HalfYear,
            methods: Method::ALL.to_vec(),
            group: None,
            element: None,
            top: 5,
            train: TrainConfig::default(),
            synth: SynthConfig::default(),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| Failure::config(format!("invalid value `{value}` for `{key}`: {e}")).into())
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(Failure::config(format!("invalid value `{value}` for `{key}`: expected true or false")).into()),
    }
}

pub fn parse_methods(value: &str) -> Result<Vec<Method>> {
    let names: Vec<&str> = value.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
    if names.is_empty() {
        return Err(Failure::usage("empty method list").into());
    }
    let all: Vec<&str> = Method::ALL.iter().map(|m| m.name()).collect();
    let mut out = Vec::new();
    for n in names {
        let m: Method = n
            .parse()
            .map_err(|e: String| Failure::usage(format!("{e}{}", suggest(n, &all))))?;
        if !out.contains(&m) {
            out.push(m);
        }
    }
    Ok(out)
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::io(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::default();
        cfg.apply_text(&text)
            .with_context(|| format!("in config {}", path.display()))?;
        Ok(cfg)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Failure::config(format!("line {}: expected key = value", n + 1)))?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    /// Applies one assignment; unknown keys get a nearest-name hint.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let path = || Some(PathBuf::from(value));
        match key {
            "corpus" => self.corpus = path(),
            "taxonomy" => self.taxonomy = path(),
            "checkpoint" => self.checkpoint = path(),
            "counts" => self.counts = path(),
            "out" => self.out = path(),
            "seed" => self.seed = parse(key, value)?,
            "setting" => self.setting = parse(key, value)?,
            "methods" => self.methods = parse_methods(value)?,
            "group" => self.group = Some(value.to_string()),
            "element" => self.element = Some(value.to_string()),
            "top" => self.top = parse(key, value)?,
            "train.embed_dim" => self.train.embed_dim = parse(key, value)?,
            "train.hidden" => self.train.hidden = parse(key, value)?,
            "train.lambda" => self.train.lambda = parse(key, value)?,
            "train.batch_size" => self.train.batch_size = parse(key, value)?,
            "train.iterations" => self.train.iterations = parse(key, value)?,
            "train.stride" => self.train.stride = parse(key, value)?,
            "train.optimizer" => self.train.optimizer.kind = parse::<OptimizerKind>(key, value)?,
            "train.learning_rate" => self.train.optimizer.learning_rate = parse(key, value)?,
            "train.internal" => self.train.use_internal_knowledge = parse_bool(key, value)?,
            "train.external" => self.train.use_external_knowledge = parse_bool(key, value)?,
            "train.weight_init" => self.train.weight_init = parse::<WeightInit>(key, value)?,
            "synth.cities" => self.synth.cities = parse(key, value)?,
            "synth.age_bands" => self.synth.age_bands = parse(key, value)?,
            "synth.genders" => self.synth.genders = parse(key, value)?,
            "synth.max_groups" => {
                self.synth.max_groups = match value {
                    "all" | "none" => None,
                    v => Some(parse(key, v)?),
                }
            }
            "synth.categories" => self.synth.categories = parse(key, value)?,
            "synth.attributes_per_category" => self.synth.attributes_per_category = parse(key, value)?,
            "synth.values_per_attribute" => self.synth.values_per_attribute = parse(key, value)?,
            "synth.length" => self.synth.length = parse(key, value)?,
            "synth.grid_period" => self.synth.grid_period = parse(key, value)?,
            "synth.noise" => self.synth.noise = parse(key, value)?,
            "synth.slope_scale" => self.synth.slope_scale = parse(key, value)?,
            "synth.similar_pairs" => self.synth.similar_pairs = parse(key, value)?,
            "synth.opposite_pairs" => self.synth.opposite_pairs = parse(key, value)?,
            _ => bail!(Failure::config(format!("unknown config key `{key}`{}", suggest(key, KEYS)))),
        }
        Ok(())
    }

    /// Training configuration with the setting's geometry and the run seed.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            ..self.setting.apply(&self.train)
        }
    }

    pub fn require<'a>(&self, value: &'a Option<PathBuf>, key: &str) -> Result<&'a Path> {
        value
            .as_deref()
            .ok_or_else(|| Failure::usage(format!("missing `{key}` (set it in the config or with a flag)")).into())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_flat_file() {
        let mut c = RunConfig::default();
        c.apply_text("# run\ncorpus = data/c.csv\n\ntrain.iterations=5\nsetting = one-year\nmethods = mean, LAST\n")
            .unwrap();
        assert_eq!(c.corpus.as_deref(), Some(Path::new("data/c.csv")));
        assert_eq!(c.train.iterations, 5);
        assert_eq!(c.setting, Setting::OneYear);
        assert_eq!(c.methods, vec![Method::Mean, Method::Last]);
        let t = c.train_config();
        assert_eq!((t.input_len, t.horizon), (48, 24));
    }

    #[test]
    fn unknown_key_suggests() {
        let err = RunConfig::default().set("train.iteration", "3").unwrap_err();
        assert!(err.to_string().contains("train.iterations"), "{err}");
        let err = parse_methods("mean,arma").unwrap_err();
        assert!(err.to_string().contains("AR"), "{err}");
        assert!(parse_methods(" , ").is_err());
    }
}
