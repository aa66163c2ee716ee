//! Pipeline configuration in a plain `key = value` text format.
//!
//! ```text
//! # comments run to end of line
//! t_l = 5
//! t_d = -0.07
//! drop_edge = literal
//! ```
//!
//! Unknown keys are rejected. Every key can be overridden one at a time with
//! [`PipelineConfig::set`], which is how command-line flags are applied.

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::filtering::{DropEdge, FilterParams};
use crate::fingerprint::FingerprintParams;

/// Environment variable naming the default config file.
pub const CONFIG_ENV: &str = "CLIPGRAPH_CONFIG";

pub const KEYS: &[&str] = &[
    "analysis_rate",
    "window_size",
    "hop_size",
    "peak_frame_radius",
    "peak_bin_radius",
    "peak_max_per_frame",
    "peak_floor",
    "fan_out",
    "dt_max",
    "df_max",
    "t_l",
    "t_d",
    "drop_edge",
    "input_dir",
    "db_path",
    "out_dir",
];

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("bad value for `{key}`: {message}")]
    Value { key: String, message: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PipelineConfig {
    pub fingerprint: FingerprintParams,
    pub filter: FilterParams,
    pub input_dir: Option<PathBuf>,
    pub db_path: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e: T::Err| ConfigError::Value {
        key: key.to_string(),
        message: e.to_string(),
    })
}

impl PipelineConfig {
    /// Parse config text on top of the defaults, then validate.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: n + 1,
                message: format!("expected `key = value`, got `{line}`"),
            })?;
            cfg.set(key.trim(), value.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    /// The file named by `CLIPGRAPH_CONFIG`, or the defaults when unset.
    pub fn from_env() -> Result<Self, ConfigError> {
        match std::env::var_os(CONFIG_ENV) {
            Some(p) if !p.is_empty() => Self::load(Path::new(&p)),
            _ => Ok(Self::default()),
        }
    }

    /// Set one key. Does not validate; call [`validate`](Self::validate)
    /// after the last override.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let fp = &mut self.fingerprint;
        match key {
            "analysis_rate" => fp.analysis_rate = parse(key, value)?,
            "window_size" => fp.stft.window_size = parse(key, value)?,
            "hop_size" => fp.stft.hop_size = parse(key, value)?,
            "peak_frame_radius" => fp.peaks.frame_radius = parse(key, value)?,
            "peak_bin_radius" => fp.peaks.bin_radius = parse(key, value)?,
            "peak_max_per_frame" => fp.peaks.max_per_frame = parse(key, value)?,
            "peak_floor" => fp.peaks.floor = parse(key, value)?,
            "fan_out" => fp.pairing.fan_out = parse(key, value)?,
            "dt_max" => fp.pairing.dt_max = parse(key, value)?,
            "df_max" => fp.pairing.df_max = parse(key, value)?,
            "t_l" => self.filter.t_l = parse(key, value)?,
            "t_d" => self.filter.t_d = parse(key, value)?,
            "drop_edge" => {
                self.filter.drop_edge = match value {
                    "literal" => DropEdge::Literal,
                    "strict" => DropEdge::Strict,
                    other => {
                        return Err(ConfigError::Value {
                            key: key.into(),
                            message: format!("expected `literal` or `strict`, got `{other}`"),
                        })
                    }
                }
            }
            "input_dir" => self.input_dir = Some(value.into()),
            "db_path" => self.db_path = Some(value.into()),
            "out_dir" => self.out_dir = Some(value.into()),
            other => return Err(ConfigError::UnknownKey(other.to_string())),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.fingerprint
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.filter.validate().map_err(ConfigError::Invalid)
    }

    /// Render as config text that [`parse`](Self::parse) reads back.
    pub fn to_text(&self) -> String {
        let fp = &self.fingerprint;
        let mut s = format!(
            "analysis_rate = {}\nwindow_size = {}\nhop_size = {}\n\
             peak_frame_radius = {}\npeak_bin_radius = {}\npeak_max_per_frame = {}\npeak_floor = {:e}\n\
             fan_out = {}\ndt_max = {}\ndf_max = {}\n\
             t_l = {}\nt_d = {}\ndrop_edge = {}\n",
            fp.analysis_rate,
            fp.stft.window_size,
            fp.stft.hop_size,
            fp.peaks.frame_radius,
            fp.peaks.bin_radius,
            fp.peaks.max_per_frame,
            fp.peaks.floor,
            fp.pairing.fan_out,
            fp.pairing.dt_max,
            fp.pairing.df_max,
            self.filter.t_l,
            self.filter.t_d,
            match self.filter.drop_edge {
                DropEdge::Literal => "literal",
                DropEdge::Strict => "strict",
            },
        );
        for (key, path) in [
            ("input_dir", &self.input_dir),
            ("db_path", &self.db_path),
            ("out_dir", &self.out_dir),
        ] {
            if let Some(p) = path {
                s.push_str(&format!("{key} = {}\n", p.display()));
            }
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_gives_defaults() {
        assert_eq!(PipelineConfig::parse("").unwrap(), PipelineConfig::default());
        assert_eq!(
            PipelineConfig::parse("# only a comment\n\n").unwrap(),
            PipelineConfig::default()
        );
    }

    #[test]
    fn keys_and_comments() {
        let cfg =
            PipelineConfig::parse("t_l = 7  # stricter\nt_d=-0.1\ndrop_edge = strict\nout_dir = reports\n").unwrap();
        assert_eq!(cfg.filter.t_l, 7);
        assert_eq!(cfg.filter.t_d, -0.1);
        assert_eq!(cfg.filter.drop_edge, DropEdge::Strict);
        assert_eq!(cfg.out_dir, Some(PathBuf::from("reports")));
    }

    #[test]
    fn unknown_key_rejected() {
        let err = PipelineConfig::parse("t_x = 3").unwrap_err();
        assert!(matches!(err, ConfigError::UnknownKey(k) if k == "t_x"));
    }

    #[test]
    fn missing_equals_names_line() {
        let err = PipelineConfig::parse("t_l = 5\nfan_out 3\n").unwrap_err();
        assert!(matches!(err, ConfigError::Syntax { line: 2, .. }));
    }

    #[test]
    fn invalid_values_rejected() {
        assert!(matches!(
            PipelineConfig::parse("t_l = five"),
            Err(ConfigError::Value { .. })
        ));
        assert!(matches!(
            PipelineConfig::parse("t_d = 0.07"),
            Err(ConfigError::Invalid(_))
        ));
        assert!(matches!(PipelineConfig::parse("t_l = 0"), Err(ConfigError::Invalid(_))));
        assert!(matches!(
            PipelineConfig::parse("hop_size = 1024"),
            Err(ConfigError::Invalid(_))
        ));
        assert!(matches!(
            PipelineConfig::parse("drop_edge = loose"),
            Err(ConfigError::Value { .. })
        ));
    }

    #[test]
    fn every_key_is_settable() {
        let mut cfg = PipelineConfig::default();
        for key in KEYS {
            let value = match *key {
                "drop_edge" => "literal",
                "t_d" => "-0.05",
                "peak_floor" => "0.001",
                k if k.ends_with("_dir") || k.ends_with("_path") => "x",
                _ => "3",
            };
            cfg.set(key, value).unwrap_or_else(|e| panic!("{key}: {e}"));
        }
    }

    #[test]
    fn text_round_trip() {
        let mut cfg = PipelineConfig::default();
        cfg.set("t_d", "-0.125").unwrap();
        cfg.set("drop_edge", "strict").unwrap();
        cfg.set("db_path", "a/b.cldb").unwrap();
        assert_eq!(PipelineConfig::parse(&cfg.to_text()).unwrap(), cfg);
        assert_eq!(
            PipelineConfig::parse(&PipelineConfig::default().to_text()).unwrap(),
            PipelineConfig::default()
        );
    }
}
