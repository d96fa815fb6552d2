//! Flat `key = value` run configuration with exhaustive key validation.

use std::collections::{BTreeMap, BTreeSet};

use aggrex_core::chain::BoundingBox;
use aggrex_core::palm::{SolverConfig, StepPolicy};
use aggrex_core::rank::{RankAdaptConfig, StoppingRule};

use crate::error::CliError;

/// Every accepted key with its default, in echo order.
const DEFAULTS: &[(&str, &str)] = &[
    ("lambda", "1e-6"),
    ("eps0", "1e-14"),
    ("eps", "5e-5"),
    ("step_policy", "bb"),
    ("bb_delta", "0.5"),
    ("bb_eta", "1e-4"),
    ("gamma1", "1.1"),
    ("gamma2", "1.1"),
    ("local_window", "30"),
    ("local_tol", "1e-3"),
    ("max_inner_iters", "5000"),
    ("stopping_rule", "exact"),
    ("eps_exa", "0.1"),
    ("early_samples", "1000"),
    ("restarts_omega", "20"),
    ("kappa_min", "1e-8"),
    ("append_decrease", "1e-5"),
    ("max_outer_iters", "200"),
    ("s0", "10"),
    ("grid_hi", "1e-4"),
    ("grid_lo", "1e-8"),
    ("grid_per_decade", "8"),
    ("path_diagnostics", "true"),
    ("diagnostics_restarts", "20"),
    ("kmeans_replicates", "50"),
    ("cell", "0.001"),
    ("bbox_lon_min", "-74.03"),
    ("bbox_lon_max", "-73.90"),
    ("bbox_lat_min", "40.69"),
    ("bbox_lat_max", "40.89"),
    ("min_freq", "1e-4"),
    ("trips_header", "false"),
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<&'static str, String>,
    explicit: BTreeSet<&'static str>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            values: DEFAULTS.iter().map(|&(k, v)| (k, v.to_string())).collect(),
            explicit: BTreeSet::new(),
        }
    }
}

impl RunConfig {
    /// Lines are `key = value`; `#` starts a comment; blank lines are ignored.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut cfg = Self::default();
        for (k, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("line {}: expected `key = value`", k + 1)))?;
            let key = key.trim();
            let known = DEFAULTS
                .iter()
                .find(|(name, _)| *name == key)
                .map(|(name, _)| *name)
                .ok_or_else(|| CliError::Config(format!("line {}: unknown key `{key}`", k + 1)))?;
            if !cfg.explicit.insert(known) {
                return Err(CliError::Config(format!("line {}: duplicate key `{key}`", k + 1)));
            }
            cfg.values.insert(known, value.trim().to_string());
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parses every value once so type errors surface before any work starts.
    fn validate(&self) -> Result<(), CliError> {
        for &(key, _) in DEFAULTS {
            match key {
                "step_policy" | "stopping_rule" => {
                    self.choice(key)?;
                }
                "path_diagnostics" | "trips_header" => {
                    self.flag(key)?;
                }
                "local_window" | "max_inner_iters" | "early_samples" | "restarts_omega"
                | "max_outer_iters" | "s0" | "grid_per_decade" | "diagnostics_restarts"
                | "kmeans_replicates" => {
                    self.count(key)?;
                }
                _ => {
                    self.real(key)?;
                }
            }
        }
        for key in ["lambda", "cell", "grid_hi", "grid_lo"] {
            if self.real(key)? <= 0.0 {
                return Err(CliError::Config(format!("`{key}` must be positive, got `{}`", self.raw(key))));
            }
        }
        if self.real("min_freq")? < 0.0 {
            return Err(CliError::Config(format!("`min_freq` must be nonnegative, got `{}`", self.raw("min_freq"))));
        }
        if self.real("grid_hi")? <= self.real("grid_lo")? {
            return Err(CliError::Config("`grid_hi` must exceed `grid_lo`".into()));
        }
        for axis in ["lon", "lat"] {
            if self.real(&format!("bbox_{axis}_min"))? >= self.real(&format!("bbox_{axis}_max"))? {
                return Err(CliError::Config(format!("`bbox_{axis}_min` must be below `bbox_{axis}_max`")));
            }
        }
        if self.count("kmeans_replicates")? == 0 {
            return Err(CliError::Config("`kmeans_replicates` must be at least 1".into()));
        }
        self.solver()?.validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.rank()?.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(())
    }

    pub fn is_explicit(&self, key: &str) -> bool {
        self.explicit.contains(key)
    }

    /// Overrides a value as if it had been set in the file.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let known = DEFAULTS
            .iter()
            .find(|(name, _)| *name == key)
            .map(|(name, _)| *name)
            .ok_or_else(|| CliError::Config(format!("unknown key `{key}`")))?;
        self.values.insert(known, value.to_string());
        self.explicit.insert(known);
        self.validate()
    }

    /// Resolved values, defaults included.
    pub fn echo(&self) -> BTreeMap<String, String> {
        self.values.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
    }

    fn raw(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).expect("known key")
    }

    pub fn real(&self, key: &str) -> Result<f64, CliError> {
        self.raw(key)
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| CliError::Config(format!("`{key}` must be a finite number, got `{}`", self.raw(key))))
    }

    pub fn count(&self, key: &str) -> Result<usize, CliError> {
        self.raw(key)
            .parse::<usize>()
            .map_err(|_| CliError::Config(format!("`{key}` must be a nonnegative integer, got `{}`", self.raw(key))))
    }

    pub fn flag(&self, key: &str) -> Result<bool, CliError> {
        match self.raw(key) {
            "true" => Ok(true),
            "false" => Ok(false),
            other => Err(CliError::Config(format!("`{key}` must be true or false, got `{other}`"))),
        }
    }

    fn choice(&self, key: &str) -> Result<&str, CliError> {
        let allowed: &[&str] = match key {
            "step_policy" => &["bb", "lipschitz"],
            "stopping_rule" => &["exact", "early"],
            _ => unreachable!("not a choice key"),
        };
        let v = self.raw(key);
        if allowed.contains(&v) {
            Ok(v)
        } else {
            Err(CliError::Config(format!("`{key}` must be one of {allowed:?}, got `{v}`")))
        }
    }

    pub fn solver(&self) -> Result<SolverConfig, CliError> {
        let step_policy = match self.choice("step_policy")? {
            "bb" => StepPolicy::Bb {
                delta: self.real("bb_delta")?,
                eta: self.real("bb_eta")?,
            },
            _ => StepPolicy::Lipschitz {
                gamma1: self.real("gamma1")?,
                gamma2: self.real("gamma2")?,
            },
        };
        Ok(SolverConfig {
            eps0: self.real("eps0")?,
            eps: self.real("eps")?,
            step_policy,
            local_window: self.count("local_window")?,
            local_tol: self.real("local_tol")?,
            max_inner_iters: self.count("max_inner_iters")?,
            ..SolverConfig::default()
        })
    }

    pub fn rank(&self) -> Result<RankAdaptConfig, CliError> {
        let stopping_rule = match self.choice("stopping_rule")? {
            "exact" => StoppingRule::Exact {
                eps_exa: self.real("eps_exa")?,
            },
            _ => StoppingRule::Early {
                samples: self.count("early_samples")?,
            },
        };
        Ok(RankAdaptConfig {
            stopping_rule,
            restarts_omega: self.count("restarts_omega")?,
            kappa_min: self.real("kappa_min")?,
            append_decrease: self.real("append_decrease")?,
            max_outer_iters: self.count("max_outer_iters")?,
        })
    }

    pub fn bbox(&self) -> Result<BoundingBox, CliError> {
        Ok(BoundingBox {
            lon_min: self.real("bbox_lon_min")?,
            lon_max: self.real("bbox_lon_max")?,
            lat_min: self.real("bbox_lat_min")?,
            lat_max: self.real("bbox_lat_max")?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = RunConfig::parse("").unwrap();
        assert_eq!(cfg.solver().unwrap(), SolverConfig::default());
        assert_eq!(cfg.rank().unwrap(), RankAdaptConfig::default());
        assert_eq!(cfg.echo().len(), DEFAULTS.len());
    }

    #[test]
    fn values_and_comments() {
        let cfg = RunConfig::parse("# tuned\nlambda = 2e-7  # small\n\nstep_policy=lipschitz\n").unwrap();
        assert_eq!(cfg.real("lambda").unwrap(), 2e-7);
        assert!(cfg.is_explicit("lambda") && !cfg.is_explicit("eps"));
        assert!(matches!(cfg.solver().unwrap().step_policy, StepPolicy::Lipschitz { .. }));
    }

    #[test]
    fn schema_errors_name_the_key() {
        let e = RunConfig::parse("lamda = 1\n").unwrap_err();
        assert!(e.to_string().contains("`lamda`"), "{e}");
        let e = RunConfig::parse("s0 = -1\n").unwrap_err();
        assert!(e.to_string().contains("`s0`"), "{e}");
        let e = RunConfig::parse("stopping_rule = maybe\n").unwrap_err();
        assert!(e.to_string().contains("`stopping_rule`"), "{e}");
        assert!(RunConfig::parse("lambda\n").is_err());
        assert!(RunConfig::parse("lambda = 1\nlambda = 2\n").is_err());
        assert!(RunConfig::parse("bb_delta = 2\n").is_err());
    }
}
