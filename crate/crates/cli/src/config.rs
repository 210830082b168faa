//! Run configuration: a line-oriented `key=value` file, overridden by
//! `--set key=value` pairs and then by dedicated flags.

use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use phono::dsp::FeatureVariant;
use phono::models::ModelVariant;
use phono::nn::TrainConfig;

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SegmenterMode {
    Heuristic,
    /// Pre-computed features: tensor file plus `<path>.ids`.
    File(PathBuf),
    None,
}

impl FromStr for SegmenterMode {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        match s {
            "heuristic" => Ok(SegmenterMode::Heuristic),
            "none" => Ok(SegmenterMode::None),
            _ => match s.strip_prefix("file:") {
                Some(p) if !p.is_empty() => Ok(SegmenterMode::File(PathBuf::from(p))),
                _ => Err(CliError::Usage(format!(
                    "segmenter must be heuristic, none or file:<path>, got {s:?}"
                ))),
            },
        }
    }
}

impl fmt::Display for SegmenterMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SegmenterMode::Heuristic => f.write_str("heuristic"),
            SegmenterMode::None => f.write_str("none"),
            SegmenterMode::File(p) => write!(f, "file:{}", p.display()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExplainMethod {
    /// Column-grouped sampled Shapley values on the input map.
    Shap,
    /// Sampled Shapley values over the concatenated head input of model1.
    ShapIntermediate,
    Occlusion,
}

impl ExplainMethod {
    pub fn name(self) -> &'static str {
        match self {
            ExplainMethod::Shap => "shap",
            ExplainMethod::ShapIntermediate => "shap-intermediate",
            ExplainMethod::Occlusion => "occlusion",
        }
    }
}

impl FromStr for ExplainMethod {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        [
            ExplainMethod::Shap,
            ExplainMethod::ShapIntermediate,
            ExplainMethod::Occlusion,
        ]
        .into_iter()
        .find(|m| m.name() == s)
        .ok_or_else(|| CliError::Usage(format!("unknown explain method {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineMode {
    /// Mean input map over a background sample of the fold's training windows.
    Mean,
    Zero,
}

impl BaselineMode {
    pub fn name(self) -> &'static str {
        match self {
            BaselineMode::Mean => "mean",
            BaselineMode::Zero => "zero",
        }
    }
}

impl FromStr for BaselineMode {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        match s {
            "mean" => Ok(BaselineMode::Mean),
            "zero" => Ok(BaselineMode::Zero),
            _ => Err(CliError::Usage(format!("baseline must be mean or zero, got {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub data_dir: PathBuf,
    /// Defaults to `<data_dir>/REFERENCE.csv`.
    pub labels_path: Option<PathBuf>,
    pub variant: ModelVariant,
    /// Must agree with the variant when given.
    pub features: Option<FeatureVariant>,
    pub segmenter: SegmenterMode,
    pub seed: u64,
    /// Run directory.
    pub out: PathBuf,
    pub folds: usize,
    pub threshold: f64,
    /// Fraction of each class's training recordings held out for early stopping.
    pub holdout: f64,
    pub train: TrainConfig,
    pub threads: Option<usize>,
    pub synth_per_class: usize,
    pub method: ExplainMethod,
    /// Comma-separated window ids (`rec:index`) or recording ids.
    pub instance: Option<String>,
    pub explain_fold: usize,
    pub permutations: usize,
    pub baseline: BaselineMode,
    pub background: usize,
    pub occlusion_kernel: (usize, usize),
    pub occlusion_fill: f32,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data_dir: PathBuf::from("data"),
            labels_path: None,
            variant: ModelVariant::Final,
            features: None,
            segmenter: SegmenterMode::Heuristic,
            seed: 0,
            out: PathBuf::from("runs/default"),
            folds: 10,
            threshold: 0.5,
            holdout: 0.1,
            train: TrainConfig::default(),
            threads: None,
            synth_per_class: 20,
            method: ExplainMethod::Shap,
            instance: None,
            explain_fold: 0,
            permutations: 2000,
            baseline: BaselineMode::Mean,
            background: 100,
            occlusion_kernel: (3, 3),
            occlusion_fill: 0.0,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, CliError> {
    value
        .parse()
        .map_err(|_| CliError::Usage(format!("invalid value {value:?} for {key}")))
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = RunConfig::default();
        cfg.apply_text(&text)?;
        Ok(cfg)
    }

    /// Applies every `key=value` line; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<(), CliError> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("config line {}: expected key=value", n + 1)))?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        match key {
            "data_dir" => self.data_dir = value.into(),
            "labels_path" => self.labels_path = Some(value.into()),
            "variant" => {
                self.variant = value
                    .parse()
                    .map_err(|e: phono::Error| CliError::Usage(e.to_string()))?
            }
            "features" => {
                self.features = Some(
                    value
                        .parse()
                        .map_err(|e: phono::Error| CliError::Usage(e.to_string()))?,
                )
            }
            "segmenter" => self.segmenter = value.parse()?,
            "seed" => self.seed = parse(key, value)?,
            "out" => self.out = value.into(),
            "folds" => self.folds = parse(key, value)?,
            "threshold" => self.threshold = parse(key, value)?,
            "holdout" => self.holdout = parse(key, value)?,
            "lr" => self.train.adam.lr = parse(key, value)?,
            "beta1" => self.train.adam.beta1 = parse(key, value)?,
            "beta2" => self.train.adam.beta2 = parse(key, value)?,
            "eps" => self.train.adam.eps = parse(key, value)?,
            "batch_size" => self.train.batch_size = parse(key, value)?,
            "max_epochs" => self.train.max_epochs = parse(key, value)?,
            "patience" => self.train.patience = parse(key, value)?,
            "threads" => self.threads = Some(parse(key, value)?),
            "synth_per_class" => self.synth_per_class = parse(key, value)?,
            "method" => self.method = value.parse()?,
            "instance" => self.instance = Some(value.to_string()),
            "explain_fold" => self.explain_fold = parse(key, value)?,
            "permutations" => self.permutations = parse(key, value)?,
            "baseline" => self.baseline = value.parse()?,
            "background" => self.background = parse(key, value)?,
            "occlusion_kernel" => {
                let (h, w) = value
                    .split_once('x')
                    .ok_or_else(|| CliError::Usage(format!("occlusion_kernel must look like 3x3, got {value:?}")))?;
                self.occlusion_kernel = (parse(key, h)?, parse(key, w)?);
            }
            "occlusion_fill" => self.occlusion_fill = parse(key, value)?,
            _ => return Err(CliError::Usage(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    pub fn labels_path(&self) -> PathBuf {
        self.labels_path
            .clone()
            .unwrap_or_else(|| self.data_dir.join("REFERENCE.csv"))
    }

    /// Checks cross-field constraints shared by every command.
    pub fn validate(&self) -> Result<(), CliError> {
        if let Some(f) = self.features {
            if f != self.variant.feature_variant() {
                return Err(CliError::Usage(format!(
                    "variant {} expects {} features, config asks for {}",
                    self.variant,
                    self.variant.feature_variant().name(),
                    f.name()
                )));
            }
        }
        if self.variant.uses_segmenter() && self.segmenter == SegmenterMode::None {
            return Err(CliError::Usage(format!(
                "variant {} needs a segmenter; set segmenter=heuristic or file:<path>",
                self.variant
            )));
        }
        if self.folds < 2 {
            return Err(CliError::Usage("folds must be at least 2".into()));
        }
        if !(0.0..1.0).contains(&self.holdout) {
            return Err(CliError::Usage("holdout must lie in [0, 1)".into()));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(CliError::Usage("threshold must lie in [0, 1]".into()));
        }
        if self.threads == Some(0) {
            return Err(CliError::Usage("threads must be at least 1".into()));
        }
        self.train.validate().map_err(|e| CliError::Usage(e.to_string()))
    }

    /// Canonical `key=value` dump, readable back by [`RunConfig::apply_text`].
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: &dyn fmt::Display| {
            let _ = writeln!(s, "{k}={v}");
        };
        kv("data_dir", &self.data_dir.display());
        kv("labels_path", &self.labels_path().display());
        kv("variant", &self.variant);
        kv("features", &self.variant.feature_variant().name());
        kv("segmenter", &self.segmenter);
        kv("seed", &self.seed);
        kv("out", &self.out.display());
        kv("folds", &self.folds);
        kv("threshold", &self.threshold);
        kv("holdout", &self.holdout);
        kv("lr", &self.train.adam.lr);
        kv("beta1", &self.train.adam.beta1);
        kv("beta2", &self.train.adam.beta2);
        kv("eps", &self.train.adam.eps);
        kv("batch_size", &self.train.batch_size);
        kv("max_epochs", &self.train.max_epochs);
        kv("patience", &self.train.patience);
        kv("synth_per_class", &self.synth_per_class);
        kv("method", &self.method.name());
        if let Some(i) = &self.instance {
            kv("instance", i);
        }
        kv("explain_fold", &self.explain_fold);
        kv("permutations", &self.permutations);
        kv("baseline", &self.baseline.name());
        kv("background", &self.background);
        let (kh, kw) = self.occlusion_kernel;
        kv("occlusion_kernel", &format!("{kh}x{kw}"));
        kv("occlusion_fill", &self.occlusion_fill);
        s
    }
}
