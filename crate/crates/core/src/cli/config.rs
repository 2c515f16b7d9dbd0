//! Pipeline configuration file and artifact provenance.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::classifier::TrainConfig;
use crate::corpus::{SplitSpec, SynthSpec};
use crate::emoji::{LabelMap, Precedence};
use crate::error::{Error, Result};
use crate::normalize::CleaningConfig;

/// Top-level TOML document. Every section is optional.
///
/// ```toml
/// seed = 7
///
/// [paths]
/// input = "tweets.csv"
/// workdir = "work"
///
/// [split]
/// train_size = 4000
///
/// [train]
/// initial_lr = 1.0
/// epochs = 10
/// ```
///
/// The top-level `seed` is the only seed: it replaces the split, training
/// and synthesis seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub paths: PathsConfig,
    pub cleaning: CleaningConfig,
    pub split: SplitConfig,
    pub train: TrainConfig,
    pub report: ReportConfig,
    pub synth: SynthConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 42,
            paths: PathsConfig::default(),
            cleaning: CleaningConfig::default(),
            split: SplitConfig::default(),
            train: TrainConfig::default(),
            report: ReportConfig::default(),
            synth: SynthConfig::default(),
        }
    }
}

/// Relative paths are resolved against the directory of the config file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub input: Option<PathBuf>,
    pub workdir: Option<PathBuf>,
    /// Label-map data file; the built-in table when absent.
    pub label_map: Option<PathBuf>,
    pub precedence: Precedence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    /// Number of training records; defaults to 80% of the input.
    pub train_size: Option<usize>,
    pub train_fraction: f64,
    pub stratified: bool,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            train_size: None,
            train_fraction: 0.8,
            stratified: false,
        }
    }
}

impl SplitConfig {
    pub fn spec(&self, available: usize, seed: u64) -> SplitSpec {
        let train_size = self
            .train_size
            .unwrap_or_else(|| (available as f64 * self.train_fraction).round() as usize);
        SplitSpec {
            train_size,
            seed,
            stratified: self.stratified,
        }
    }
}

/// Output file names, relative to the work directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportConfig {
    pub text: PathBuf,
    pub json: PathBuf,
    pub predictions: PathBuf,
    pub external_text: PathBuf,
    pub external_json: PathBuf,
}

impl Default for ReportConfig {
    fn default() -> Self {
        ReportConfig {
            text: "report.txt".into(),
            json: "report.json".into(),
            predictions: "predictions.txt".into(),
            external_text: "external_report.txt".into(),
            external_json: "external_report.json".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    #[default]
    Separable,
    Noisy,
    Uninformative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub preset: Preset,
    pub per_class: usize,
    /// Used by the `noisy` preset.
    pub noise_rate: f64,
    /// A TOML `SynthSpec` file; overrides the preset.
    pub spec: Option<PathBuf>,
    pub output: PathBuf,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            preset: Preset::Separable,
            per_class: 100,
            noise_rate: 0.5,
            spec: None,
            output: "synth.csv".into(),
        }
    }
}

impl SynthConfig {
    pub fn build(&self) -> Result<SynthSpec> {
        let spec = match &self.spec {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                toml::from_str(&text).map_err(|e| Error::SynthSpec(e.to_string()))?
            }
            None => match self.preset {
                Preset::Separable => SynthSpec::separable(self.per_class),
                Preset::Noisy => SynthSpec::noisy(self.per_class, self.noise_rate),
                Preset::Uninformative => SynthSpec::uninformative(self.per_class),
            },
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl PipelineConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Read a config file and make its relative paths absolute.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        let rebase = |p: &mut Option<PathBuf>| {
            if let Some(p) = p.as_mut() {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        };
        rebase(&mut cfg.paths.input);
        rebase(&mut cfg.paths.workdir);
        rebase(&mut cfg.paths.label_map);
        rebase(&mut cfg.synth.spec);
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.cleaning.validate()?;
        self.train.validate()?;
        if !(0.0..=1.0).contains(&self.split.train_fraction) {
            return Err(Error::Config(
                "split.train_fraction must lie in [0, 1]".into(),
            ));
        }
        for p in [&self.paths.label_map, &self.synth.spec]
            .into_iter()
            .flatten()
        {
            if !p.is_file() {
                return Err(Error::Config(format!("{} does not exist", p.display())));
            }
        }
        Ok(())
    }
}

/// Loaded configuration plus everything derived from it.
#[derive(Debug, Clone)]
pub struct Context {
    pub config: PipelineConfig,
    pub workdir: PathBuf,
    pub label_map: LabelMap,
    provenance: String,
}

impl Context {
    /// Resolve the work directory, load the label map and compute the
    /// provenance line. The work directory is created if missing.
    pub fn new(mut config: PipelineConfig, workdir: Option<PathBuf>) -> Result<Self> {
        config.train.seed = config.seed;
        config.validate()?;
        let workdir = workdir
            .or_else(|| config.paths.workdir.clone())
            .unwrap_or_else(|| PathBuf::from("work"));
        std::fs::create_dir_all(&workdir).map_err(|e| Error::io(&workdir, e))?;
        let map_source = match &config.paths.label_map {
            Some(p) => std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?,
            None => LabelMap::builtin_source().to_string(),
        };
        let label_map = LabelMap::parse(&map_source, config.paths.precedence)?;
        let provenance = format!(
            "{} {} seed={} config={}",
            env!("CARGO_PKG_NAME"),
            env!("CARGO_PKG_VERSION"),
            config.seed,
            config_hash(&config, &map_source)?
        );
        Ok(Context {
            config,
            workdir,
            label_map,
            provenance,
        })
    }

    /// Tool version, seed and config hash, written at the top of every artifact.
    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn path(&self, name: impl AsRef<Path>) -> PathBuf {
        self.workdir.join(name)
    }
}

/// First 16 hex digits of the SHA-256 of the settings that influence results.
///
/// File locations are left out so identical runs in different directories
/// stamp identical headers; the label map enters by content.
pub fn config_hash(config: &PipelineConfig, label_map_source: &str) -> Result<String> {
    #[derive(Serialize)]
    struct Hashed<'a> {
        seed: u64,
        precedence: Precedence,
        cleaning: &'a CleaningConfig,
        split: &'a SplitConfig,
        train: &'a TrainConfig,
        synth: (Preset, usize, f64),
        label_map: &'a str,
    }
    let hashed = Hashed {
        seed: config.seed,
        precedence: config.paths.precedence,
        cleaning: &config.cleaning,
        split: &config.split,
        train: &config.train,
        synth: (
            config.synth.preset,
            config.synth.per_class,
            config.synth.noise_rate,
        ),
        label_map: label_map_source,
    };
    let digest = Sha256::digest(serde_json::to_vec(&hashed)?);
    Ok(hex::encode(digest)[..16].to_string())
}
