//! Run configuration: one TOML file with nested sections, every value
//! overridable from the command line as `--section.key=value`.

use std::path::{Path, PathBuf};

use dualrank::model::TrainConfig;
use dualrank::policy::AlignConfig;
use dualrank::synth::SynthConfig;
use dualrank::{Error, Result};
use serde::{Deserialize, Serialize};

pub const OUTPUT_ROOT_ENV: &str = "DUALRANK_OUTPUT_ROOT";
const DEFAULT_OUTPUT_DIR: &str = "runs";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub ks: Vec<usize>,
    pub bootstrap_resamples: usize,
    pub seed: u64,
    pub agreement_ks: Vec<usize>,
    pub sweep_epsilons: Vec<f64>,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            ks: vec![1, 3, 5],
            bootstrap_resamples: 1000,
            seed: 17,
            agreement_ks: (1..=20).collect(),
            sweep_epsilons: vec![0.01, 0.05, 0.2],
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    /// Falls back to `$DUALRANK_OUTPUT_ROOT`, then `runs`.
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepMode {
    /// Re-run alignment for every epsilon.
    #[default]
    Realign,
    /// Keep the policy fixed and only re-solve the multiplier.
    Rescore,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModeSection {
    /// Accept unknown fields in dataset records.
    pub lenient: bool,
    pub sweep: SweepMode,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// When set, becomes the seed of every section that does not name one.
    pub seed: Option<u64>,
    pub synth: SynthConfig,
    pub train: TrainConfig,
    pub align: AlignConfig,
    pub eval: EvalSection,
    pub output: OutputSection,
    pub mode: ModeSection,
}

const SEEDED_SECTIONS: [&str; 4] = ["synth", "train", "align", "eval"];

impl RunConfig {
    /// Reads `path` (or starts from defaults), applies overrides, validates.
    pub fn load(path: Option<&Path>, overrides: &[(String, String)]) -> Result<Self> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                text.parse::<toml::Table>()
                    .map_err(|e| Error::Config(format!("{}: {}", p.display(), e.message())))?
            }
            None => toml::Table::new(),
        };
        for (key, raw) in overrides {
            set_dotted(&mut table, key, parse_value(raw))?;
        }
        if let Some(seed) = table.get("seed").cloned() {
            for section in SEEDED_SECTIONS {
                let entry = table
                    .entry(section)
                    .or_insert_with(|| toml::Value::Table(toml::Table::new()));
                if let toml::Value::Table(t) = entry {
                    t.entry("seed").or_insert(seed.clone());
                }
            }
        }
        let cfg: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.synth.validate()?;
        self.train.validate()?;
        self.align.validate()?;
        if let Some(p) = &self.synth.override_file {
            if !p.is_file() {
                return Err(Error::Config(format!("synth.override_file {} does not exist", p.display())));
            }
        }
        let e = &self.eval;
        if e.ks.is_empty() || e.ks.contains(&0) || e.agreement_ks.is_empty() || e.agreement_ks.contains(&0) {
            return Err(Error::Config("eval.ks and eval.agreement_ks must be non-empty lists of K >= 1".into()));
        }
        if e.bootstrap_resamples == 0 {
            return Err(Error::Config("eval.bootstrap_resamples must be >= 1".into()));
        }
        if e.sweep_epsilons.iter().any(|x| !(0.0..=1.0).contains(x)) {
            return Err(Error::Config("eval.sweep_epsilons must lie in [0, 1]".into()));
        }
        Ok(())
    }

    pub fn output_dir(&self) -> PathBuf {
        match &self.output.dir {
            Some(d) => d.clone(),
            None => std::env::var_os(OUTPUT_ROOT_ENV)
                .map(PathBuf::from)
                .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR)),
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("cannot serialize config: {e}")))
    }
}

/// TOML literal if it parses as one, otherwise a bare string.
fn parse_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn set_dotted(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("malformed override key `{key}`")));
    }
    let (last, path) = parts.split_last().expect("split yields at least one part");
    let mut cur = table;
    for part in path {
        let entry = cur
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = match entry {
            toml::Value::Table(t) => t,
            _ => return Err(Error::Config(format!("override `{key}`: `{part}` is not a section"))),
        };
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

pub type Overrides = Vec<(String, String)>;

/// Splits `--a.b=value` / `--a.b value` overrides out of the raw arguments.
pub fn extract_overrides(args: Vec<String>) -> Result<(Vec<String>, Overrides)> {
    let mut rest = Vec::with_capacity(args.len());
    let mut overrides = Vec::new();
    let mut it = args.into_iter();
    while let Some(arg) = it.next() {
        let Some(body) = arg.strip_prefix("--") else {
            rest.push(arg);
            continue;
        };
        let (name, inline) = match body.split_once('=') {
            Some((n, v)) => (n.to_string(), Some(v.to_string())),
            None => (body.to_string(), None),
        };
        if !name.contains('.') {
            rest.push(arg);
            continue;
        }
        let value = match inline {
            Some(v) => v,
            None => it
                .next()
                .ok_or_else(|| Error::Config(format!("override --{name} needs a value")))?,
        };
        overrides.push((name, value));
    }
    Ok((rest, overrides))
}

#[cfg(test)]
mod tests {
    use super::*;
    use dualrank::policy::LambdaSelection;

    fn ov(pairs: &[(&str, &str)]) -> Vec<(String, String)> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn defaults_roundtrip_through_toml() {
        let cfg = RunConfig::load(None, &[]).unwrap();
        assert_eq!(cfg, RunConfig::default());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, cfg.to_toml().unwrap()).unwrap();
        assert_eq!(RunConfig::load(Some(&path), &[]).unwrap(), cfg);
    }

    #[test]
    fn overrides_reach_nested_fields() {
        let cfg = RunConfig::load(
            None,
            &ov(&[
                ("train.epochs", "3"),
                ("align.epsilon", "0.2"),
                ("align.selection", "trajectory"),
                ("synth.distributions.gpa_mean", "3.1"),
                ("output.dir", "somewhere/else"),
                ("eval.ks", "[1, 10]"),
            ]),
        )
        .unwrap();
        assert_eq!(cfg.train.epochs, 3);
        assert_eq!(cfg.align.epsilon, 0.2);
        assert_eq!(cfg.align.selection, LambdaSelection::Trajectory);
        assert_eq!(cfg.synth.distributions.gpa_mean, 3.1);
        assert_eq!(cfg.output_dir(), PathBuf::from("somewhere/else"));
        assert_eq!(cfg.eval.ks, vec![1, 10]);
    }

    #[test]
    fn integer_literal_accepted_for_float_field() {
        let cfg = RunConfig::load(None, &ov(&[("align.alpha", "1")])).unwrap();
        assert_eq!(cfg.align.alpha, 1.0);
    }

    #[test]
    fn global_seed_fills_unset_sections_only() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "seed = 99\n[train]\nseed = 5\n").unwrap();
        let cfg = RunConfig::load(Some(&path), &[]).unwrap();
        assert_eq!((cfg.synth.seed, cfg.train.seed, cfg.align.seed, cfg.eval.seed), (99, 5, 99, 99));
    }

    #[test]
    fn unknown_keys_and_bad_values_are_config_errors() {
        for bad in [("train.epochz", "3"), ("align.epsilon", "1.5"), ("eval.ks", "[]"), ("train.epochs.x", "1")] {
            let err = RunConfig::load(None, &ov(&[bad])).unwrap_err();
            assert!(matches!(err, Error::Config(_)), "{bad:?}: {err}");
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "[train\n").unwrap();
        assert!(matches!(RunConfig::load(Some(&path), &[]), Err(Error::Config(_))));
        assert!(matches!(RunConfig::load(Some(&dir.path().join("missing.toml")), &[]), Err(Error::Io { .. })));
    }

    #[test]
    fn override_extraction() {
        let args: Vec<String> = ["train", "--pref-only", "--train.epochs=2", "--align.epsilon", "0.1", "--checkpoint", "a.json"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let (rest, o) = extract_overrides(args).unwrap();
        assert_eq!(rest, ["train", "--pref-only", "--checkpoint", "a.json"]);
        assert_eq!(o, ov(&[("train.epochs", "2"), ("align.epsilon", "0.1")]));
        assert!(extract_overrides(vec!["--train.epochs".into()]).is_err());
    }

    #[test]
    fn bare_words_become_strings() {
        assert_eq!(parse_value("runs/a"), toml::Value::String("runs/a".into()));
        assert_eq!(parse_value("true"), toml::Value::Boolean(true));
        assert_eq!(parse_value("1e-3"), toml::Value::Float(1e-3));
    }
}
