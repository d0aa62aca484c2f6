//! Run configuration: INI file, then `--section.key value` overrides.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use ini::Ini;
use serde::Serialize;

use crate::bayes::{NigParams, DEFAULT_ENSEMBLE_SIZE};
use crate::error::{Error, Result};
use crate::gmm::EmConfig;
use crate::metrics::DEFAULT_TOP_FRACTION;
use crate::rangeview::ProjectionConfig;
use crate::synth::SynthConfig;

/// What a raw semantic label means for training and evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelRole {
    Train(u32),
    Outlier,
    Ignore,
}

/// Raw label → role. Raw labels missing from the table are ignored.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassMap {
    pub outlier: u16,
    pub ignore: Vec<u16>,
    pub train: BTreeMap<u16, u32>,
}

impl ClassMap {
    /// SemanticKITTI: 19 train classes, raw 1 as the outlier class, moving
    /// objects merged into their static counterparts.
    pub fn semantic_kitti() -> Self {
        let train = [
            (10, 0),
            (11, 1),
            (13, 4),
            (15, 2),
            (16, 4),
            (18, 3),
            (20, 4),
            (30, 5),
            (31, 6),
            (32, 7),
            (40, 8),
            (44, 9),
            (48, 10),
            (49, 11),
            (50, 12),
            (51, 13),
            (60, 8),
            (70, 14),
            (71, 15),
            (72, 16),
            (80, 17),
            (81, 18),
            (252, 0),
            (253, 6),
            (254, 5),
            (255, 7),
            (256, 4),
            (257, 4),
            (258, 3),
            (259, 4),
        ]
        .into_iter()
        .collect();
        Self {
            outlier: 1,
            ignore: vec![0, 52, 99],
            train,
        }
    }

    fn empty() -> Self {
        Self {
            outlier: 1,
            ignore: Vec::new(),
            train: BTreeMap::new(),
        }
    }

    pub fn role(&self, raw: u16) -> LabelRole {
        if raw == self.outlier {
            LabelRole::Outlier
        } else if let Some(&t) = self.train.get(&raw) {
            LabelRole::Train(t)
        } else {
            LabelRole::Ignore
        }
    }

    /// Every raw label has one meaning and train ids cover `0..classes`.
    pub fn validate(&self, classes: usize) -> Result<()> {
        if self.train.contains_key(&self.outlier) || self.ignore.contains(&self.outlier) {
            return Err(Error::Config(format!(
                "outlier label {} also listed as train or ignore",
                self.outlier
            )));
        }
        if let Some(raw) = self.ignore.iter().find(|r| self.train.contains_key(r)) {
            return Err(Error::Config(format!("raw label {raw} is both ignored and trained")));
        }
        let mut seen = vec![false; classes];
        for (&raw, &t) in &self.train {
            let slot = seen.get_mut(t as usize).ok_or_else(|| {
                Error::Config(format!("raw label {raw} maps to train id {t}, model has {classes} classes"))
            })?;
            *slot = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::Config(format!("no raw label maps to train id {missing}")));
        }
        Ok(())
    }

    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "outlier" => self.outlier = parse(key, value)?,
            "ignore" => {
                self.ignore = split_list(value).map(|v| parse(key, v)).collect::<Result<_>>()?;
            }
            raw => {
                let raw: u16 = raw
                    .parse()
                    .map_err(|_| Error::Config(format!("class_map key {raw:?} is not a raw label id")))?;
                match value.trim() {
                    "ignore" => {
                        self.train.remove(&raw);
                        if !self.ignore.contains(&raw) {
                            self.ignore.push(raw);
                        }
                    }
                    "outlier" => self.outlier = raw,
                    v => {
                        self.ignore.retain(|&r| r != raw);
                        self.train.insert(raw, parse(key, v)?);
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Paths {
    pub scan_dir: Option<PathBuf>,
    pub label_dir: Option<PathBuf>,
    pub feature_dir: Option<PathBuf>,
    /// Label grids; defaults to `<output_dir>/range`.
    pub grid_dir: Option<PathBuf>,
    /// Score maps; defaults to `<output_dir>/scores`.
    pub score_dir: Option<PathBuf>,
    pub output_dir: PathBuf,
    /// Defaults to `<output_dir>/model.gmmc`.
    pub model: Option<PathBuf>,
    /// Defaults to `<output_dir>/bank.nigb`.
    pub bank: Option<PathBuf>,
}

impl Paths {
    pub fn grid_dir(&self) -> PathBuf {
        self.grid_dir.clone().unwrap_or_else(|| self.output_dir.join("range"))
    }

    pub fn score_dir(&self) -> PathBuf {
        self.score_dir.clone().unwrap_or_else(|| self.output_dir.join("scores"))
    }

    pub fn model(&self) -> PathBuf {
        self.model.clone().unwrap_or_else(|| self.output_dir.join("model.gmmc"))
    }

    pub fn bank(&self) -> PathBuf {
        self.bank.clone().unwrap_or_else(|| self.output_dir.join("bank.nigb"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModelShape {
    pub classes: usize,
    pub components: usize,
    pub feature_dim: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnsembleConfig {
    pub n_samples: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThresholdConfig {
    pub top_fraction: f64,
    /// Threshold each scan separately instead of the whole run.
    pub per_scan: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub paths: Paths,
    pub projection: ProjectionConfig,
    pub model: ModelShape,
    pub prior: NigParams,
    pub ensemble: EnsembleConfig,
    pub em: EmConfig,
    pub threshold: ThresholdConfig,
    pub class_map: ClassMap,
    pub synth: SynthConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            paths: Paths {
                scan_dir: None,
                label_dir: None,
                feature_dir: None,
                grid_dir: None,
                score_dir: None,
                output_dir: PathBuf::from("out"),
                model: None,
                bank: None,
            },
            projection: ProjectionConfig::default(),
            model: ModelShape {
                classes: 19,
                components: 2,
                feature_dim: 32,
            },
            prior: NigParams::default(),
            ensemble: EnsembleConfig {
                n_samples: DEFAULT_ENSEMBLE_SIZE,
                seed: 0,
            },
            em: EmConfig::default(),
            threshold: ThresholdConfig {
                top_fraction: DEFAULT_TOP_FRACTION,
                per_scan: false,
            },
            class_map: ClassMap::semantic_kitti(),
            synth: SynthConfig::default(),
        }
    }
}

/// A `--section.key value` pair taken from the command line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Override {
    pub section: String,
    pub key: String,
    pub value: String,
}

/// Separates `--section.key value` and `--section.key=value` arguments from
/// the rest of `args`.
pub fn split_overrides(args: &[String]) -> Result<(Vec<String>, Vec<Override>)> {
    let mut rest = Vec::new();
    let mut overrides = Vec::new();
    let mut iter = args.iter();
    while let Some(arg) = iter.next() {
        let Some(body) = arg.strip_prefix("--") else {
            rest.push(arg.clone());
            continue;
        };
        let (name, inline) = match body.split_once('=') {
            Some((n, v)) => (n, Some(v.to_string())),
            None => (body, None),
        };
        let Some((section, key)) = name.split_once('.') else {
            rest.push(arg.clone());
            continue;
        };
        let value = match inline {
            Some(v) => v,
            None => iter
                .next()
                .cloned()
                .ok_or_else(|| Error::Config(format!("--{name} needs a value")))?,
        };
        overrides.push(Override {
            section: section.to_string(),
            key: key.to_string(),
            value,
        });
    }
    Ok((rest, overrides))
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim().to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected a boolean, got {value:?}"))),
    }
}

fn split_list(value: &str) -> impl Iterator<Item = &str> {
    value.split(',').map(str::trim).filter(|s| !s.is_empty())
}

/// `"0-1, 2-3"` → `[(0, 1), (2, 3)]`.
fn parse_pairs(value: &str) -> Result<Vec<(u32, u32)>> {
    split_list(value)
        .map(|p| {
            let (a, b) = p
                .split_once('-')
                .ok_or_else(|| Error::Config(format!("overlap pair {p:?} is not of the form a-b")))?;
            Ok((parse("overlap_pairs", a)?, parse("overlap_pairs", b)?))
        })
        .collect()
}

impl RunConfig {
    /// Defaults, then the file (if any), then `overrides` in order.
    pub fn load(path: Option<&Path>, overrides: &[Override]) -> Result<Self> {
        let mut cfg = RunConfig::default();
        if let Some(path) = path {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            cfg.apply_ini(&text)?;
        }
        for o in overrides {
            cfg.set(&o.section, &o.key, &o.value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_ini_str(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        cfg.apply_ini(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn apply_ini(&mut self, text: &str) -> Result<()> {
        let ini = Ini::load_from_str_noescape(text).map_err(|e| Error::Config(e.to_string()))?;
        if ini.section(Some("class_map")).is_some() {
            self.class_map = ClassMap::empty();
        }
        for (section, props) in ini.iter() {
            let Some(section) = section else {
                if let Some((key, _)) = props.iter().next() {
                    return Err(Error::Config(format!("key {key:?} outside any section")));
                }
                continue;
            };
            let mut seen = std::collections::HashSet::new();
            for (key, value) in props.iter() {
                if !seen.insert(key) {
                    return Err(Error::Config(format!("[{section}] {key} given twice")));
                }
                self.set(section, key, value)?;
            }
        }
        Ok(())
    }

    /// Sets one key; unknown sections and keys are errors.
    pub fn set(&mut self, section: &str, key: &str, value: &str) -> Result<()> {
        let path = |v: &str| Some(PathBuf::from(v.trim()));
        match (section, key) {
            ("paths", "scan_dir") => self.paths.scan_dir = path(value),
            ("paths", "label_dir") => self.paths.label_dir = path(value),
            ("paths", "feature_dir") => self.paths.feature_dir = path(value),
            ("paths", "grid_dir") => self.paths.grid_dir = path(value),
            ("paths", "score_dir") => self.paths.score_dir = path(value),
            ("paths", "output_dir") => self.paths.output_dir = PathBuf::from(value.trim()),
            ("paths", "model") => self.paths.model = path(value),
            ("paths", "bank") => self.paths.bank = path(value),

            ("projection", "height") => self.projection.height = parse(key, value)?,
            ("projection", "width") => self.projection.width = parse(key, value)?,
            ("projection", "fov_up") => self.projection.fov_up = parse(key, value)?,
            ("projection", "fov_down") => self.projection.fov_down = parse(key, value)?,

            ("model", "classes") => self.model.classes = parse(key, value)?,
            ("model", "components") => self.model.components = parse(key, value)?,
            ("model", "feature_dim") => self.model.feature_dim = parse(key, value)?,

            ("prior", "mu") => self.prior.mu = parse(key, value)?,
            ("prior", "kappa") => self.prior.kappa = parse(key, value)?,
            ("prior", "alpha") => self.prior.alpha = parse(key, value)?,
            ("prior", "beta") => self.prior.beta = parse(key, value)?,

            ("ensemble", "n_samples") => self.ensemble.n_samples = parse(key, value)?,
            ("ensemble", "seed") => self.ensemble.seed = parse(key, value)?,

            ("em", "max_iters") => self.em.max_iters = parse(key, value)?,
            ("em", "tol") => self.em.tol = parse(key, value)?,

            ("threshold", "top_fraction") => self.threshold.top_fraction = parse(key, value)?,
            ("threshold", "per_scan") => self.threshold.per_scan = parse_bool(key, value)?,

            ("class_map", _) => self.class_map.set(key, value)?,

            ("synth", "feature_dim") => self.synth.feature_dim = parse(key, value)?,
            ("synth", "n_classes") => self.synth.n_classes = parse(key, value)?,
            ("synth", "samples_per_class") => self.synth.samples_per_class = parse(key, value)?,
            ("synth", "class_separation") => self.synth.class_separation = parse(key, value)?,
            ("synth", "overlap_pairs") => self.synth.overlap_pairs = parse_pairs(value)?,
            ("synth", "ood_count") => self.synth.ood_count = parse(key, value)?,
            ("synth", "ood_offset") => self.synth.ood_offset = parse(key, value)?,
            ("synth", "within_class_std") => self.synth.within_class_std = parse(key, value)?,
            ("synth", "seed") => self.synth.seed = parse(key, value)?,

            _ => return Err(Error::Config(format!("unknown key [{section}] {key}"))),
        }
        Ok(())
    }

    /// Checks that hold for every command; path existence is checked by the
    /// command that needs the path.
    pub fn validate(&self) -> Result<()> {
        let cfg = |e: Error| Error::Config(e.to_string());
        self.projection.validate().map_err(cfg)?;
        self.prior.validate().map_err(cfg)?;
        if self.model.classes == 0 || self.model.components == 0 || self.model.feature_dim == 0 {
            return Err(Error::Config("model classes, components and feature_dim must be at least 1".into()));
        }
        if self.ensemble.n_samples == 0 {
            return Err(Error::Config("ensemble n_samples must be at least 1".into()));
        }
        if self.em.tol.is_nan() || self.em.tol < 0.0 {
            return Err(Error::Config("em tol must be nonnegative".into()));
        }
        let f = self.threshold.top_fraction;
        if !(f > 0.0 && f < 1.0) {
            return Err(Error::Config(format!("threshold top_fraction {f} not in (0, 1)")));
        }
        self.synth.validate().map_err(cfg)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_the_experimental_setup() {
        let cfg = RunConfig::default();
        assert_eq!(cfg.ensemble.n_samples, 20);
        assert_eq!(cfg.model.components, 2);
        assert_eq!(cfg.model.classes, 19);
        assert_eq!(cfg.threshold.top_fraction, 0.05);
        cfg.class_map.validate(19).unwrap();
        assert_eq!(cfg.class_map.role(1), LabelRole::Outlier);
        assert_eq!(cfg.class_map.role(252), LabelRole::Train(0));
        assert_eq!(cfg.class_map.role(0), LabelRole::Ignore);
        assert_eq!(cfg.class_map.role(999), LabelRole::Ignore);
    }

    #[test]
    fn file_then_overrides() {
        let text = "\
; comment
[paths]
feature_dir = feats
output_dir = run1

[ensemble]
n_samples = 5
seed = 9

[synth]
overlap_pairs = 0-1, 2-3

[class_map]
outlier = 7
ignore = 0
3 = 0
4 = 1
";
        let mut cfg = RunConfig::from_ini_str(text).unwrap();
        assert_eq!(cfg.paths.feature_dir, Some(PathBuf::from("feats")));
        assert_eq!(cfg.paths.model(), PathBuf::from("run1/model.gmmc"));
        assert_eq!(cfg.ensemble.n_samples, 5);
        assert_eq!(cfg.synth.overlap_pairs, vec![(0, 1), (2, 3)]);
        assert_eq!(cfg.class_map.role(7), LabelRole::Outlier);
        assert_eq!(cfg.class_map.role(4), LabelRole::Train(1));
        assert_eq!(cfg.class_map.role(10), LabelRole::Ignore);
        cfg.class_map.validate(2).unwrap();

        cfg.set("ensemble", "n_samples", "30").unwrap();
        assert_eq!(cfg.ensemble.n_samples, 30);
        cfg.set("class_map", "4", "ignore").unwrap();
        assert!(cfg.class_map.validate(2).is_err());
    }

    #[test]
    fn rejects_bad_input() {
        for text in [
            "[nope]\nx = 1\n",
            "[ensemble]\nbogus = 1\n",
            "[ensemble]\nn_samples = many\n",
            "[ensemble]\nn_samples = 0\n",
            "[ensemble]\nseed = 1\nseed = 2\n",
            "[threshold]\ntop_fraction = 1.5\n",
            "[prior]\nkappa = -1\n",
            "[synth]\noverlap_pairs = 0:1\n",
            "stray = 1\n",
        ] {
            assert!(matches!(RunConfig::from_ini_str(text), Err(Error::Config(_))), "{text}");
        }
    }

    #[test]
    fn class_map_consistency() {
        let mut m = ClassMap::empty();
        m.train.insert(5, 0);
        m.train.insert(6, 2);
        assert!(m.validate(3).is_err(), "train id 1 uncovered");
        m.train.insert(8, 1);
        m.validate(3).unwrap();
        assert!(m.validate(2).is_err(), "train id 2 out of range");
        m.train.insert(1, 0);
        assert!(m.validate(3).is_err(), "outlier trained");
    }

    #[test]
    fn override_splitting() {
        let args: Vec<String> = ["--config", "a.ini", "--ensemble.seed", "4", "--jobs", "2", "--model.classes=3"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let (rest, ov) = split_overrides(&args).unwrap();
        assert_eq!(rest, vec!["--config", "a.ini", "--jobs", "2"]);
        assert_eq!(ov.len(), 2);
        assert_eq!((ov[0].section.as_str(), ov[0].key.as_str(), ov[0].value.as_str()), ("ensemble", "seed", "4"));
        assert_eq!(ov[1].value, "3");
        assert!(split_overrides(&["--ensemble.seed".to_string()]).is_err());
    }
}
