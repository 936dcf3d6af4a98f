//! Flat `key = value` experiment configuration.
//!
//! A config is resolved in three layers: built-in defaults for the selected
//! experiment, then the file, then command-line overrides. Keys that do not
//! belong to the experiment are rejected, and every value is parsed and range
//! checked before anything runs. The resolved table is echoed verbatim into
//! the run manifest.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geom::{random_site_set, Mode, Point, Rect, SiteSet};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Experiment {
    Voronoi,
    Colonize,
    Heat,
    Eikonal,
    Transport,
    Harmonic,
}

impl Experiment {
    pub const ALL: [Experiment; 6] = [
        Experiment::Voronoi,
        Experiment::Colonize,
        Experiment::Heat,
        Experiment::Eikonal,
        Experiment::Transport,
        Experiment::Harmonic,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Voronoi => "voronoi",
            Experiment::Colonize => "colonize",
            Experiment::Heat => "heat",
            Experiment::Eikonal => "eikonal",
            Experiment::Transport => "transport",
            Experiment::Harmonic => "harmonic",
        }
    }

    /// Keys and defaults specific to this experiment.
    fn defaults(self) -> &'static [(&'static str, &'static str)] {
        match self {
            Experiment::Voronoi => &[("mode", "voronoi")],
            Experiment::Colonize => &[
                ("particles", "100"),
                ("iterations", "500"),
                ("step", "0.1"),
                ("epsilon", "0.01"),
                ("warmup", "5"),
                ("min_fraction", "0.8"),
            ],
            Experiment::Heat => &[
                ("t", "0.001"),
                ("masses", ""),
                ("delta", "0.02"),
                ("epsilon", "0.05"),
                ("rays", "64"),
                ("ds", "0.005"),
                ("topology", "plane"),
                ("period", "1"),
            ],
            Experiment::Eikonal => &[
                ("tau", "1"),
                ("snapshots", "4"),
                ("init", "exact"),
                ("init_radius", "2"),
            ],
            Experiment::Transport => &[("lambda", "0.5"), ("samples", "100000"), ("atoms", "400")],
            Experiment::Harmonic => &[
                ("radius", "auto"),
                ("box_factor", "4"),
                ("tol", "1e-8"),
                ("omega", "optimal"),
                ("max_sweeps", "50000"),
            ],
        }
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown experiment `{s}`")))
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Keys shared by every experiment.
const COMMON: &[(&str, &str)] = &[
    ("seed", "0"),
    ("sources", "4"),
    ("sites", ""),
    ("weights", ""),
    ("domain", "0,2,0,2"),
    ("margin", "0.2"),
    ("min_separation", "0.5"),
    ("grid", "256"),
];

/// Environment variable naming the default output root.
pub const OUT_ENV: &str = "PDE_VORONOI_OUT";

/// Parse `key = value` lines; `#` starts a comment.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", lineno + 1)))?;
        let k = k.trim();
        if k.is_empty() {
            return Err(Error::Config(format!("line {}: empty key", lineno + 1)));
        }
        out.push((k.to_string(), v.trim().to_string()));
    }
    Ok(out)
}

/// Parse a `key=value` command-line override.
pub fn parse_override(s: &str) -> Result<(String, String)> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{s}` is not `key=value`")))?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}

/// A validated experiment configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    /// Output directory; not part of the echoed table.
    pub out: Option<PathBuf>,
    values: BTreeMap<String, String>,
}

impl ExperimentConfig {
    /// Resolve defaults, then `pairs` in order (later pairs win).
    ///
    /// `experiment` and `out` may appear among the pairs; an `experiment` that
    /// disagrees with the selected one is an error.
    pub fn resolve(experiment: Experiment, pairs: &[(String, String)]) -> Result<Self> {
        let mut values: BTreeMap<String, String> = COMMON
            .iter()
            .chain(experiment.defaults())
            .map(|&(k, v)| (k.to_string(), v.to_string()))
            .collect();
        let mut out = None;
        for (k, v) in pairs {
            match k.as_str() {
                "experiment" => {
                    if v.parse::<Experiment>()? != experiment {
                        return Err(Error::Config(format!("config is for `{v}`, not `{experiment}`")));
                    }
                }
                "out" => out = (!v.is_empty()).then(|| PathBuf::from(v)),
                _ if values.contains_key(k) => {
                    values.insert(k.clone(), v.clone());
                }
                _ if known_elsewhere(k) => {
                    return Err(Error::Config(format!("key `{k}` does not apply to `{experiment}`")));
                }
                _ => return Err(Error::Config(format!("unknown key `{k}`"))),
            }
        }
        let cfg = Self {
            experiment,
            out,
            values,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Defaults plus the file at `path`, then `overrides`.
    pub fn load(experiment: Experiment, text: Option<&str>, overrides: &[(String, String)]) -> Result<Self> {
        let mut pairs = match text {
            Some(t) => parse_pairs(t)?,
            None => Vec::new(),
        };
        pairs.extend(overrides.iter().cloned());
        Self::resolve(experiment, &pairs)
    }

    /// The resolved table, every key with its effective value.
    pub fn echo(&self) -> &BTreeMap<String, String> {
        &self.values
    }

    pub fn raw(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or("")
    }

    /// Parse a key, naming it in the error.
    pub fn get<T: FromStr>(&self, key: &str) -> Result<T> {
        let raw = self.raw(key);
        raw.parse()
            .map_err(|_| Error::Config(format!("key `{key}`: cannot parse `{raw}`")))
    }

    pub fn list(&self, key: &str) -> Result<Vec<f64>> {
        let raw = self.raw(key);
        if raw.is_empty() {
            return Ok(Vec::new());
        }
        raw.split(',')
            .map(|v| {
                v.trim()
                    .parse()
                    .map_err(|_| Error::Config(format!("key `{key}`: `{v}` is not a number")))
            })
            .collect()
    }

    pub fn seed(&self) -> u64 {
        self.get("seed").expect("validated")
    }

    pub fn grid(&self) -> usize {
        self.get("grid").expect("validated")
    }

    pub fn domain(&self) -> Result<Rect> {
        let v = self.list("domain")?;
        if v.len() != 4 {
            return Err(Error::Config("key `domain`: expected x0,x1,y0,y1".into()));
        }
        Rect::new(v[0], v[1], v[2], v[3]).map_err(|e| Error::Config(format!("key `domain`: {e}")))
    }

    pub fn mode(&self) -> Result<Mode> {
        match self.raw("mode") {
            "voronoi" => Ok(Mode::Voronoi),
            "power" => Ok(Mode::Power),
            other => Err(Error::Config(format!("key `mode`: `{other}` is not voronoi or power"))),
        }
    }

    /// Explicit `sites = x,y; x,y; ...`, or `sources` random sites from `seed`.
    pub fn site_set(&self) -> Result<SiteSet> {
        let domain = self.domain()?;
        let explicit = self.raw("sites");
        let sites = if explicit.is_empty() {
            random_site_set(
                self.get("sources")?,
                domain,
                self.get("margin")?,
                self.get("min_separation")?,
                self.seed(),
            )
            .map_err(|e| Error::Config(format!("key `sources`: {e}")))?
        } else {
            let pts = explicit
                .split(';')
                .filter(|p| !p.trim().is_empty())
                .map(|p| {
                    let xy: Vec<f64> = p
                        .split(',')
                        .map(|v| v.trim().parse::<f64>())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|_| Error::Config(format!("key `sites`: cannot parse `{p}`")))?;
                    match xy[..] {
                        [x, y] => Ok(Point::new(x, y)),
                        _ => Err(Error::Config(format!("key `sites`: `{p}` is not x,y"))),
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            SiteSet::new(pts, domain).map_err(|e| Error::Config(format!("key `sites`: {e}")))?
        };
        let w = self.list("weights")?;
        if w.is_empty() {
            return Ok(sites);
        }
        sites
            .with_weights(w)
            .map_err(|e| Error::Config(format!("key `weights`: {e}")))
    }

    fn check<T: FromStr + PartialOrd + fmt::Display>(
        &self,
        key: &str,
        ok: impl Fn(&T) -> bool,
        what: &str,
    ) -> Result<()> {
        let v: T = self.get(key)?;
        if ok(&v) {
            Ok(())
        } else {
            Err(Error::Config(format!("key `{key}`: {v} is out of range ({what})")))
        }
    }

    fn validate(&self) -> Result<()> {
        self.check::<u64>("seed", |_| true, "")?;
        self.check::<usize>("sources", |&n| n >= 1, "at least 1")?;
        self.check::<usize>("grid", |&n| (8..=8192).contains(&n), "8..=8192")?;
        self.check::<f64>("margin", |&v| v >= 0.0, "non-negative")?;
        self.check::<f64>("min_separation", |&v| v >= 0.0, "non-negative")?;
        self.domain()?;
        self.list("weights")?;
        match self.experiment {
            Experiment::Voronoi => {
                self.mode()?;
            }
            Experiment::Colonize => {
                self.check::<usize>("particles", |&n| n >= 1, "at least 1")?;
                self.check::<usize>("iterations", |_| true, "")?;
                self.check::<f64>("step", |&v| v > 0.0, "positive")?;
                self.check::<f64>("epsilon", |&v| v > 0.0, "positive")?;
                self.check::<usize>("warmup", |_| true, "")?;
                self.check::<f64>("min_fraction", |&v| (0.0..=1.0).contains(&v), "[0, 1]")?;
            }
            Experiment::Heat => {
                self.check::<f64>("t", |&v| v > 0.0, "positive")?;
                self.check::<f64>("delta", |&v| v >= 0.0, "non-negative")?;
                self.check::<f64>("epsilon", |&v| v >= 0.0, "non-negative")?;
                self.check::<usize>("rays", |&n| n >= 1, "at least 1")?;
                self.check::<f64>("ds", |&v| v > 0.0, "positive")?;
                if self.list("masses")?.iter().any(|&w| w <= 0.0) {
                    return Err(Error::Config("key `masses`: masses must be positive".into()));
                }
                if !matches!(self.raw("topology"), "plane" | "torus") {
                    return Err(Error::Config("key `topology`: expected plane or torus".into()));
                }
            }
            Experiment::Eikonal => {
                self.check::<f64>("tau", |&v| v > 0.0, "positive, in grid spacings")?;
                self.check::<usize>("snapshots", |_| true, "")?;
                if !matches!(self.raw("init"), "exact" | "snap") {
                    return Err(Error::Config("key `init`: expected exact or snap".into()));
                }
                self.check::<f64>("init_radius", |&v| v >= 0.0, "non-negative")?;
            }
            Experiment::Transport => {
                self.check::<f64>("lambda", |&v| v > 0.0 && v < 1.0, "0 < lambda < 1")?;
                self.check::<usize>("samples", |&n| n >= 1, "at least 1")?;
                self.check::<usize>("atoms", |&n| n <= 400, "at most 400")?;
            }
            Experiment::Harmonic => {
                if self.raw("radius") != "auto" {
                    self.check::<f64>("radius", |&v| v > 0.0, "positive")?;
                }
                self.check::<f64>("box_factor", |&v| v >= 0.0, "non-negative")?;
                self.check::<f64>("tol", |&v| v > 0.0, "positive")?;
                if self.raw("omega") != "optimal" {
                    self.check::<f64>("omega", |&v| v > 1.0 && v < 2.0, "1 < omega < 2")?;
                }
                self.check::<usize>("max_sweeps", |&n| n >= 1, "at least 1")?;
            }
        }
        Ok(())
    }
}

fn known_elsewhere(key: &str) -> bool {
    Experiment::ALL
        .iter()
        .any(|e| e.defaults().iter().any(|&(k, _)| k == key))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pairs(text: &str) -> Vec<(String, String)> {
        parse_pairs(text).unwrap()
    }

    #[test]
    fn minimal_colonize_takes_table_defaults() {
        let cfg = ExperimentConfig::resolve(Experiment::Colonize, &pairs("sources = 4")).unwrap();
        assert_eq!(cfg.get::<usize>("particles").unwrap(), 100);
        assert_eq!(cfg.get::<f64>("step").unwrap(), 0.1);
        assert_eq!(cfg.get::<f64>("epsilon").unwrap(), 0.01);
        assert_eq!(cfg.get::<usize>("iterations").unwrap(), 500);
    }

    #[test]
    fn comments_and_blank_lines() {
        let p = pairs("# header\n\nseed = 7   # trailing\n  grid=64\n");
        assert_eq!(p, vec![("seed".into(), "7".into()), ("grid".into(), "64".into())]);
        assert!(parse_pairs("no equals sign").is_err());
        assert!(parse_pairs(" = 3").is_err());
    }

    #[test]
    fn out_of_range_lambda_names_the_key() {
        let err = ExperimentConfig::resolve(Experiment::Transport, &pairs("lambda = 1.3")).unwrap_err();
        assert!(err.to_string().contains("lambda"), "{err}");
    }

    #[test]
    fn unknown_and_foreign_keys_are_rejected() {
        let err = ExperimentConfig::resolve(Experiment::Heat, &pairs("colour = red")).unwrap_err();
        assert!(err.to_string().contains("unknown key `colour`"));
        let err = ExperimentConfig::resolve(Experiment::Heat, &pairs("lambda = 0.5")).unwrap_err();
        assert!(err.to_string().contains("does not apply"));
        assert!(ExperimentConfig::resolve(Experiment::Heat, &pairs("experiment = eikonal")).is_err());
        assert!("swirl".parse::<Experiment>().is_err());
    }

    #[test]
    fn later_pairs_win() {
        let file = "grid = 128\nseed = 3";
        let cfg =
            ExperimentConfig::load(Experiment::Eikonal, Some(file), &[parse_override("grid=64").unwrap()]).unwrap();
        assert_eq!(cfg.grid(), 64);
        assert_eq!(cfg.seed(), 3);
        assert_eq!(cfg.echo()["grid"], "64");
    }

    #[test]
    fn explicit_sites_and_weights() {
        let cfg = ExperimentConfig::resolve(
            Experiment::Voronoi,
            &pairs("sites = 0.5,0.5; 1.5,1.2\nweights = 0, 0.25\nmode = power"),
        )
        .unwrap();
        let s = cfg.site_set().unwrap();
        assert_eq!(s.sites(), &[Point::new(0.5, 0.5), Point::new(1.5, 1.2)]);
        assert_eq!(s.weights(), &[0.0, 0.25]);
        assert_eq!(cfg.mode().unwrap(), Mode::Power);
        let bad = ExperimentConfig::resolve(Experiment::Voronoi, &pairs("sites = 0.5")).unwrap();
        assert!(bad.site_set().is_err());
    }

    #[test]
    fn generated_sites_follow_the_seed() {
        let a = ExperimentConfig::resolve(Experiment::Eikonal, &pairs("seed = 11")).unwrap();
        let b = ExperimentConfig::resolve(Experiment::Eikonal, &pairs("seed = 11")).unwrap();
        assert_eq!(a.site_set().unwrap(), b.site_set().unwrap());
        assert_eq!(a.site_set().unwrap().len(), 4);
    }

    #[test]
    fn out_is_not_echoed() {
        let cfg = ExperimentConfig::resolve(Experiment::Voronoi, &pairs("out = /tmp/x")).unwrap();
        assert_eq!(cfg.out, Some(PathBuf::from("/tmp/x")));
        assert!(!cfg.echo().contains_key("out"));
    }
}
