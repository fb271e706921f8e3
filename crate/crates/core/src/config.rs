//! Solver options and the plain-text `key=value` config format.

use std::path::Path;

use crate::error::{Error, Result};

/// Options of the primal-dual solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Iteration cap; hitting it yields `converged = false`, not an error.
    pub max_iter: usize,
    /// Relative tolerance for the energy-stagnation and dual-residual tests.
    pub tol_rel: f64,
    /// Stagnation window in iterations.
    pub window: usize,
    /// Multiplier applied to the power-method operator-norm estimate.
    pub safety: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            max_iter: 20_000,
            tol_rel: 1e-6,
            window: 50,
            safety: 1.05,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if self.max_iter == 0 {
            return Err(Error::invalid("max_iter must be positive"));
        }
        if !(self.tol_rel > 0.0) {
            return Err(Error::invalid("tol_rel must be positive"));
        }
        if self.window == 0 {
            return Err(Error::invalid("window must be positive"));
        }
        if !(self.safety >= 1.0) {
            return Err(Error::invalid("safety must be >= 1"));
        }
        Ok(())
    }
}

/// Partial options parsed from a config file; unset keys fall back to the
/// defaults, and CLI flags override both.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SolverOptionsPatch {
    pub max_iter: Option<usize>,
    pub tol_rel: Option<f64>,
    pub window: Option<usize>,
    pub safety: Option<f64>,
}

impl SolverOptionsPatch {
    pub fn apply_to(&self, base: SolverOptions) -> SolverOptions {
        SolverOptions {
            max_iter: self.max_iter.unwrap_or(base.max_iter),
            tol_rel: self.tol_rel.unwrap_or(base.tol_rel),
            window: self.window.unwrap_or(base.window),
            safety: self.safety.unwrap_or(base.safety),
        }
    }

    /// Later patches win.
    pub fn merge(self, over: SolverOptionsPatch) -> SolverOptionsPatch {
        SolverOptionsPatch {
            max_iter: over.max_iter.or(self.max_iter),
            tol_rel: over.tol_rel.or(self.tol_rel),
            window: over.window.or(self.window),
            safety: over.safety.or(self.safety),
        }
    }
}

/// Parses `key=value` lines; `#` starts a comment, blank lines are ignored.
/// Known keys: `max_iter`, `tol_rel`, `window`, `safety`.
pub fn parse_solver_config(text: &str) -> Result<SolverOptionsPatch> {
    let mut patch = SolverOptionsPatch::default();
    for (idx, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::invalid(format!("config line {}: expected key=value", idx + 1))
        })?;
        let key = key.trim();
        let value = value.trim();
        let bad = |what: &str| {
            Error::invalid(format!(
                "config line {}: {what} value {value:?}",
                idx + 1
            ))
        };
        match key {
            "max_iter" => patch.max_iter = Some(value.parse().map_err(|_| bad("max_iter"))?),
            "tol_rel" => patch.tol_rel = Some(value.parse().map_err(|_| bad("tol_rel"))?),
            "window" => patch.window = Some(value.parse().map_err(|_| bad("window"))?),
            "safety" => patch.safety = Some(value.parse().map_err(|_| bad("safety"))?),
            other => {
                return Err(Error::invalid(format!(
                    "config line {}: unknown key {other:?}",
                    idx + 1
                )))
            }
        }
    }
    Ok(patch)
}

/// Reads and parses a config file.
pub fn load_solver_config(path: impl AsRef<Path>) -> Result<SolverOptionsPatch> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_solver_config(&text)
}
