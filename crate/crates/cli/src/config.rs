//! Flat `key = value` configuration with dotted sections, plus parsing
//! of complex row-major matrix lists for custom models.

use qsf_core::algebra::{CompositeSpace, GradedOperator, GradedSpace};
use qsf_core::linalg::{C64, CMatrix};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};

#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

pub type ConfResult<T> = Result<T, ConfigError>;

fn err<T>(msg: impl Into<String>) -> ConfResult<T> {
    Err(ConfigError(msg.into()))
}

/// Raw parsed configuration; tracks key consumption so typos surface as
/// "unknown key" errors instead of being silently ignored.
pub struct Config {
    values: BTreeMap<String, String>,
    consumed: std::cell::RefCell<BTreeSet<String>>,
}

impl Config {
    pub fn parse(text: &str) -> ConfResult<Self> {
        let mut values = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(i) => &raw[..i],
                None => raw,
            };
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return err(format!("line {}: expected `key = value`", lineno + 1));
            };
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if key.is_empty() {
                return err(format!("line {}: empty key", lineno + 1));
            }
            if values.insert(key.clone(), value).is_some() {
                return err(format!("line {}: duplicate key {key:?}", lineno + 1));
            }
        }
        Ok(Self {
            values,
            consumed: std::cell::RefCell::new(BTreeSet::new()),
        })
    }

    pub fn load(path: &Path) -> ConfResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.consumed.borrow_mut().insert(key.to_string());
        self.values.get(key).map(String::as_str)
    }

    pub fn require(&self, key: &str) -> ConfResult<&str> {
        match self.get(key) {
            Some(v) => Ok(v),
            None => err(format!("missing required key {key:?}")),
        }
    }

    pub fn get_f64(&self, key: &str) -> ConfResult<Option<f64>> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse::<f64>()
                .map(Some)
                .map_err(|e| ConfigError(format!("key {key:?}: bad number {v:?} ({e})"))),
        }
    }

    pub fn require_f64(&self, key: &str) -> ConfResult<f64> {
        match self.get_f64(key)? {
            Some(v) => Ok(v),
            None => err(format!("missing required key {key:?}")),
        }
    }

    pub fn get_u64(&self, key: &str) -> ConfResult<Option<u64>> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse::<u64>()
                .map(Some)
                .map_err(|e| ConfigError(format!("key {key:?}: bad integer {v:?} ({e})"))),
        }
    }

    pub fn get_usize(&self, key: &str) -> ConfResult<Option<usize>> {
        Ok(self.get_u64(key)?.map(|v| v as usize))
    }

    pub fn get_bool(&self, key: &str) -> ConfResult<Option<bool>> {
        match self.get(key) {
            None => Ok(None),
            Some("true") => Ok(Some(true)),
            Some("false") => Ok(Some(false)),
            Some(v) => err(format!("key {key:?}: expected true/false, got {v:?}")),
        }
    }

    /// Keys with the given dotted prefix (e.g. `observable.`).
    pub fn keys_with_prefix(&self, prefix: &str) -> Vec<String> {
        self.values
            .keys()
            .filter(|k| k.starts_with(prefix))
            .cloned()
            .collect()
    }

    /// Errors on any key never read by the run; catches typos.
    pub fn finish(&self) -> ConfResult<()> {
        let consumed = self.consumed.borrow();
        let unknown: Vec<&String> = self
            .values
            .keys()
            .filter(|k| !consumed.contains(*k))
            .collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            err(format!(
                "unknown key(s): {}",
                unknown
                    .iter()
                    .map(|s| format!("{s:?}"))
                    .collect::<Vec<_>>()
                    .join(", ")
            ))
        }
    }

    /// Every (key, value) pair, for the meta file.
    pub fn entries(&self) -> impl Iterator<Item = (&String, &String)> {
        self.values.iter()
    }
}

/// One complex scalar: `a`, `a+bi`, `a-bi`, `bi`, `i`, `-i`.
pub fn parse_complex(s: &str) -> ConfResult<C64> {
    let t: String = s.chars().filter(|c| !c.is_whitespace()).collect();
    if t.is_empty() {
        return err("empty complex entry");
    }
    if let Ok(re) = t.parse::<f64>() {
        return Ok(C64::new(re, 0.0));
    }
    let Some(body) = t.strip_suffix(['i', 'j']) else {
        return err(format!("bad complex entry {s:?}"));
    };
    // Position of the sign splitting real and imaginary parts (skip a
    // leading sign and any exponent signs).
    let bytes = body.as_bytes();
    let mut split = None;
    for i in (1..bytes.len()).rev() {
        let c = bytes[i] as char;
        if (c == '+' || c == '-') && !matches!(bytes[i - 1] as char, 'e' | 'E') {
            split = Some(i);
            break;
        }
    }
    let (re_str, im_str) = match split {
        Some(i) => (&body[..i], &body[i..]),
        None => ("0", body),
    };
    let re = if re_str.is_empty() {
        0.0
    } else {
        match re_str.parse::<f64>() {
            Ok(v) => v,
            Err(_) => return err(format!("bad complex entry {s:?}")),
        }
    };
    let im = match im_str {
        "" | "+" => 1.0,
        "-" => -1.0,
        other => match other.parse::<f64>() {
            Ok(v) => v,
            Err(_) => return err(format!("bad complex entry {s:?}")),
        },
    };
    Ok(C64::new(re, im))
}

/// Row-major complex list (comma separators; optional `;` row breaks)
/// for a d×d matrix on the given space.
pub fn parse_matrix(value: &str, space: &CompositeSpace) -> ConfResult<GradedOperator> {
    let dim = space.dim();
    let entries: Vec<C64> = value
        .split([',', ';'])
        .filter(|s| !s.trim().is_empty())
        .map(parse_complex)
        .collect::<ConfResult<_>>()?;
    if entries.len() != dim * dim {
        return err(format!(
            "matrix needs {} entries for dimension {dim}, got {}",
            dim * dim,
            entries.len()
        ));
    }
    let matrix = CMatrix::from_rows(dim, dim, &entries);
    GradedOperator::new(matrix, space.clone()).map_err(|e| ConfigError(e.to_string()))
}

/// Factor list such as `trivial:2, fermionic:+-, fermionic:++-`.
pub fn parse_factors(value: &str) -> ConfResult<CompositeSpace> {
    let mut factors = Vec::new();
    for part in value.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let Some((kind, arg)) = part.split_once(':') else {
            return err(format!("bad factor {part:?}; use kind:arg"));
        };
        match kind.trim() {
            "trivial" | "bosonic" => {
                let dim: usize = arg
                    .trim()
                    .parse()
                    .map_err(|_| ConfigError(format!("bad factor dimension {arg:?}")))?;
                if dim == 0 {
                    return err("factor dimension must be positive");
                }
                factors.push(GradedSpace::trivial(dim));
            }
            "fermionic" => {
                let signs: Vec<i8> = arg
                    .trim()
                    .chars()
                    .map(|c| match c {
                        '+' => Ok(1),
                        '-' => Ok(-1),
                        other => Err(ConfigError(format!(
                            "bad parity sign {other:?} in {part:?}"
                        ))),
                    })
                    .collect::<ConfResult<_>>()?;
                factors.push(
                    GradedSpace::fermionic(signs).map_err(|e| ConfigError(e.to_string()))?,
                );
            }
            other => return err(format!("unknown factor kind {other:?}")),
        }
    }
    if factors.is_empty() {
        return err("model.factors lists no factors");
    }
    let dim: usize = factors.iter().map(|f| f.dim()).product();
    if dim > qsf_core::algebra::MAX_COMPOSITE_DIM {
        return err(format!(
            "total model dimension {dim} exceeds the cap {}",
            qsf_core::algebra::MAX_COMPOSITE_DIM
        ));
    }
    Ok(CompositeSpace::new(factors))
}

/// The command requested by a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Master,
    Simulate,
    Filter,
    Ensemble,
    Kalman,
    KsGrid,
}

impl Command {
    pub fn parse(s: &str) -> ConfResult<Self> {
        match s {
            "master" => Ok(Self::Master),
            "simulate" => Ok(Self::Simulate),
            "filter" => Ok(Self::Filter),
            "ensemble" => Ok(Self::Ensemble),
            "kalman" => Ok(Self::Kalman),
            "ksgrid" => Ok(Self::KsGrid),
            other => err(format!(
                "unknown command {other:?} (expected master|simulate|filter|ensemble|kalman|ksgrid)"
            )),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Master => "master",
            Self::Simulate => "simulate",
            Self::Filter => "filter",
            Self::Ensemble => "ensemble",
            Self::Kalman => "kalman",
            Self::KsGrid => "ksgrid",
        }
    }
}

/// Command-line flags: `[command] --config <path> [--seed <u64>] [--out <dir>]`.
#[derive(Debug, Default)]
pub struct CliArgs {
    pub command: Option<String>,
    pub config_path: Option<PathBuf>,
    pub seed_override: Option<u64>,
    pub out_override: Option<PathBuf>,
}

impl CliArgs {
    pub fn parse(args: &[String]) -> ConfResult<Self> {
        let mut out = Self::default();
        let mut it = args.iter().peekable();
        while let Some(arg) = it.next() {
            match arg.as_str() {
                "--config" => {
                    let v = it.next().ok_or(ConfigError("--config needs a path".into()))?;
                    out.config_path = Some(PathBuf::from(v));
                }
                "--seed" => {
                    let v = it.next().ok_or(ConfigError("--seed needs a value".into()))?;
                    out.seed_override = Some(
                        v.parse()
                            .map_err(|e| ConfigError(format!("bad --seed {v:?}: {e}")))?,
                    );
                }
                "--out" => {
                    let v = it.next().ok_or(ConfigError("--out needs a path".into()))?;
                    out.out_override = Some(PathBuf::from(v));
                }
                flag if flag.starts_with('-') => {
                    return err(format!("unknown flag {flag:?}"));
                }
                word => {
                    if out.command.is_some() {
                        return err(format!("unexpected argument {word:?}"));
                    }
                    out.command = Some(word.to_string());
                }
            }
        }
        if out.config_path.is_none() {
            return err("missing --config <path>");
        }
        Ok(out)
    }
}
