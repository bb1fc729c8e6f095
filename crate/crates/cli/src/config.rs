//! Flat `key = value` experiment files.
//!
//! ```text
//! name = entropic-uniform
//! distribution = uniform(-1,1)
//! rho1 = entropic(beta=2)
//! rho2 = entropic(beta=3)
//! profile = desk
//! activation = linear
//! seed = 1
//! oracle.segments = 8
//! oracle.levels = 4
//! ```
//!
//! Training keys not given fall back to the profile (`desk` unless stated).
//! Blank lines and `#` comments are ignored.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use infconv_core::{ActivationKind, DistributionSpec, RiskMeasureSpec, TrainConfig};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    Desk,
    Paper,
}

impl Profile {
    pub fn name(self) -> &'static str {
        match self {
            Profile::Desk => "desk",
            Profile::Paper => "paper",
        }
    }

    /// Training defaults; the paper profile shortens distortion runs to 200 epochs.
    pub fn train_config(self, rho1: &RiskMeasureSpec, rho2: &RiskMeasureSpec) -> TrainConfig {
        match self {
            Profile::Desk => TrainConfig::desk(),
            Profile::Paper => {
                let distortion = |s: &RiskMeasureSpec| matches!(s, RiskMeasureSpec::Distortion { .. });
                let epochs = if distortion(rho1) && distortion(rho2) { 200 } else { 300 };
                TrainConfig { epochs, ..TrainConfig::paper() }
            }
        }
    }
}

impl FromStr for Profile {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "desk" => Ok(Profile::Desk),
            "paper" => Ok(Profile::Paper),
            other => Err(format!("unknown profile '{other}', expected desk or paper")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleSettings {
    pub segments: usize,
    pub levels: usize,
    pub sample_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub name: String,
    pub distribution: DistributionSpec,
    pub rho1: RiskMeasureSpec,
    pub rho2: RiskMeasureSpec,
    pub profile: Profile,
    pub train: TrainConfig,
    pub oracle: Option<OracleSettings>,
    pub out: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub field: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(line) => write!(f, "config error at line {line}, field '{}': {}", self.field, self.message),
            None => write!(f, "config error, field '{}': {}", self.field, self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

const DEFAULT_ORACLE_SAMPLE: usize = 200;

const KEYS: &[&str] = &[
    "name",
    "distribution",
    "rho1",
    "rho2",
    "profile",
    "n_samples",
    "batch_size",
    "epochs",
    "lr",
    "patience",
    "threshold",
    "factor",
    "min_lr",
    "ensemble_size",
    "widths",
    "activation",
    "seed",
    "oracle.segments",
    "oracle.levels",
    "oracle.sample_size",
    "out",
];

struct Entries {
    // key -> (line, value)
    map: BTreeMap<String, (usize, String)>,
}

impl Entries {
    fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut map = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| ConfigError {
                line: Some(line),
                field: content.to_string(),
                message: "expected 'key = value'".into(),
            })?;
            let key = key.trim().to_ascii_lowercase();
            if !KEYS.contains(&key.as_str()) {
                return Err(ConfigError { line: Some(line), field: key, message: "unknown key".into() });
            }
            if map.insert(key.clone(), (line, value.trim().to_string())).is_some() {
                return Err(ConfigError { line: Some(line), field: key, message: "duplicate key".into() });
            }
        }
        Ok(Self { map })
    }

    fn get<T>(&self, key: &str, parse: impl Fn(&str) -> Result<T, String>) -> Result<Option<T>, ConfigError> {
        match self.map.get(key) {
            None => Ok(None),
            Some((line, value)) => parse(value)
                .map(Some)
                .map_err(|message| ConfigError { line: Some(*line), field: key.into(), message }),
        }
    }

    fn require<T>(&self, key: &str, parse: impl Fn(&str) -> Result<T, String>) -> Result<T, ConfigError> {
        self.get(key, parse)?
            .ok_or_else(|| ConfigError { line: None, field: key.into(), message: "missing required key".into() })
    }

    fn line(&self, key: &str) -> Option<usize> {
        self.map.get(key).map(|e| e.0)
    }
}

fn parse_via<T: FromStr>(s: &str) -> Result<T, String>
where
    T::Err: fmt::Display,
{
    s.parse::<T>().map_err(|e| e.to_string())
}

fn parse_widths(s: &str) -> Result<Vec<usize>, String> {
    s.split(',').map(|w| w.trim().parse::<usize>().map_err(|e| format!("bad width '{w}': {e}"))).collect()
}

impl ExperimentSpec {
    /// Parses a config; `profile` overrides the file's `profile` key.
    pub fn parse(text: &str, profile: Option<Profile>) -> Result<Self, ConfigError> {
        let e = Entries::parse(text)?;
        let name = e.require("name", |s| Ok(s.to_string()))?;
        let distribution = e.require("distribution", parse_via::<DistributionSpec>)?;
        let rho1 = e.require("rho1", parse_via::<RiskMeasureSpec>)?;
        let rho2 = e.require("rho2", parse_via::<RiskMeasureSpec>)?;
        let profile = match profile {
            Some(p) => p,
            None => e.get("profile", parse_via::<Profile>)?.unwrap_or(Profile::Desk),
        };
        let mut t = profile.train_config(&rho1, &rho2);
        macro_rules! set {
            ($field:ident, $ty:ty) => {
                if let Some(v) = e.get(stringify!($field), parse_via::<$ty>)? {
                    t.$field = v;
                }
            };
        }
        set!(n_samples, usize);
        set!(batch_size, usize);
        set!(epochs, usize);
        set!(lr, f64);
        set!(patience, usize);
        set!(threshold, f64);
        set!(factor, f64);
        set!(min_lr, f64);
        set!(ensemble_size, usize);
        set!(activation, ActivationKind);
        set!(seed, u64);
        if let Some(w) = e.get("widths", parse_widths)? {
            t.widths = w;
        }
        t.validate().map_err(|err| ConfigError { line: None, field: "training".into(), message: err.to_string() })?;

        let segments = e.get("oracle.segments", parse_via::<usize>)?;
        let levels = e.get("oracle.levels", parse_via::<usize>)?;
        let sample_size = e.get("oracle.sample_size", parse_via::<usize>)?;
        let oracle = match (segments, levels) {
            (Some(segments), Some(levels)) => {
                Some(OracleSettings { segments, levels, sample_size: sample_size.unwrap_or(DEFAULT_ORACLE_SAMPLE) })
            }
            (None, None) if sample_size.is_none() => None,
            _ => {
                let line = e.line("oracle.segments").or(e.line("oracle.levels")).or(e.line("oracle.sample_size"));
                return Err(ConfigError {
                    line,
                    field: "oracle".into(),
                    message: "oracle.segments and oracle.levels must be given together".into(),
                });
            }
        };
        if let Some(o) = &oracle {
            if o.segments == 0 || o.levels == 0 || o.sample_size == 0 {
                return Err(ConfigError {
                    line: e.line("oracle.segments"),
                    field: "oracle".into(),
                    message: "oracle settings must be positive".into(),
                });
            }
        }
        let out = e.get("out", |s| Ok(s.to_string()))?;
        Ok(Self { name, distribution, rho1, rho2, profile, train: t, oracle, out })
    }

    /// Renders every field explicitly; `parse(render())` reproduces `self`.
    pub fn render(&self) -> String {
        let t = &self.train;
        let widths: Vec<String> = t.widths.iter().map(|w| w.to_string()).collect();
        let mut s = String::new();
        let mut kv = |k: &str, v: String| s.push_str(&format!("{k} = {v}\n"));
        kv("name", self.name.clone());
        kv("distribution", self.distribution.to_string());
        kv("rho1", self.rho1.to_string());
        kv("rho2", self.rho2.to_string());
        kv("profile", self.profile.name().into());
        kv("n_samples", t.n_samples.to_string());
        kv("batch_size", t.batch_size.to_string());
        kv("epochs", t.epochs.to_string());
        kv("lr", format!("{:?}", t.lr));
        kv("patience", t.patience.to_string());
        kv("threshold", format!("{:?}", t.threshold));
        kv("factor", format!("{:?}", t.factor));
        kv("min_lr", format!("{:?}", t.min_lr));
        kv("ensemble_size", t.ensemble_size.to_string());
        kv("widths", widths.join(","));
        kv("activation", t.activation.to_string());
        kv("seed", t.seed.to_string());
        if let Some(o) = &self.oracle {
            kv("oracle.segments", o.segments.to_string());
            kv("oracle.levels", o.levels.to_string());
            kv("oracle.sample_size", o.sample_size.to_string());
        }
        if let Some(out) = &self.out {
            kv("out", out.clone());
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "name = t\ndistribution = uniform(-1,1)\nrho1 = entropic(beta=2)\nrho2 = entropic(beta=3)\n";

    #[test]
    fn defaults_come_from_profile() {
        let spec = ExperimentSpec::parse(MINIMAL, None).unwrap();
        assert_eq!(spec.train, TrainConfig::desk());
        let paper = ExperimentSpec::parse(MINIMAL, Some(Profile::Paper)).unwrap();
        assert_eq!(paper.train, TrainConfig::paper());
    }

    #[test]
    fn paper_profile_shortens_distortion() {
        let text = "name = d\ndistribution = uniform(-1,1)\nrho1 = distortion(0.5*es(0.8)+0.5*es(0.7))\n\
                    rho2 = distortion(0.7*es(0.9)+0.3*es(0.5))\nprofile = paper\n";
        assert_eq!(ExperimentSpec::parse(text, None).unwrap().train.epochs, 200);
    }

    #[test]
    fn explicit_keys_override_profile() {
        let text = format!("{MINIMAL}epochs = 7\nlr = 0.01\nwidths = 1, 4, 1\nactivation = ReLU\n# comment\n\nseed = 9");
        let spec = ExperimentSpec::parse(&text, None).unwrap();
        assert_eq!(spec.train.epochs, 7);
        assert_eq!(spec.train.lr, 0.01);
        assert_eq!(spec.train.widths, vec![1, 4, 1]);
        assert_eq!(spec.train.activation, ActivationKind::ReLU);
        assert_eq!(spec.train.seed, 9);
    }

    #[test]
    fn round_trip() {
        let text = format!("{MINIMAL}oracle.segments = 6\noracle.levels = 4\nout = results/x\nlr = 0.000123\n");
        let spec = ExperimentSpec::parse(&text, Some(Profile::Paper)).unwrap();
        let again = ExperimentSpec::parse(&spec.render(), None).unwrap();
        assert_eq!(spec, again);
        assert_eq!(again.render(), spec.render());
    }

    #[test]
    fn errors_carry_line_and_field() {
        let err = ExperimentSpec::parse(&format!("{MINIMAL}epochs = many\n"), None).unwrap_err();
        assert_eq!((err.line, err.field.as_str()), (Some(5), "epochs"));
        let err = ExperimentSpec::parse("name = x\nrho1 = es(alpha=2)\n", None).unwrap_err();
        assert_eq!(err.field, "distribution");
        let err = ExperimentSpec::parse("name = x\nbogus = 1\n", None).unwrap_err();
        assert_eq!((err.line, err.field.as_str()), (Some(2), "bogus"));
        let err = ExperimentSpec::parse(&format!("{MINIMAL}oracle.levels = 3\n"), None).unwrap_err();
        assert_eq!(err.field, "oracle");
        let err = ExperimentSpec::parse(&format!("{MINIMAL}name = again\n"), None).unwrap_err();
        assert_eq!(err.message, "duplicate key");
        assert!(err.to_string().contains("line 5"));
    }
}
