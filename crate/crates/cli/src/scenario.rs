use anyhow::bail;
use serde::Deserialize;
use serde_json::Value;

use grazing_core::conditions::SamplePlan;
use grazing_core::continuation::{NewtonOptions, ScanOptions};
use grazing_core::linearize::LinOptions;
use grazing_core::{Error, SimOptions};

/// Explicit cycle, when the builtin's known cycle is not wanted.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CycleInput {
    pub zeta: Vec<f64>,
    pub period: f64,
    /// 1-based pinned coordinate for continuation.
    #[serde(default)]
    pub fixed_coordinate: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub system: String,
    #[serde(default)]
    pub mu: f64,
    #[serde(default)]
    pub initial_state: Option<Vec<f64>>,
    #[serde(default)]
    pub t0: f64,
    #[serde(default)]
    pub t_end: Option<f64>,
    #[serde(default)]
    pub backward: bool,
    #[serde(default)]
    pub tolerances: SimOptions,
    #[serde(default)]
    pub newton: Option<NewtonOptions>,
    #[serde(default)]
    pub linearization: Option<LinOptions>,
    #[serde(default)]
    pub cycle: Option<CycleInput>,
    #[serde(default)]
    pub mu_grid: Option<Vec<f64>>,
    #[serde(default)]
    pub unit_tol: Option<f64>,
    #[serde(default)]
    pub samples: Option<usize>,
}

const TABULATED_KEYS: [&str; 5] = ["field", "vector_field", "table", "samples_of_f", "tabulated"];

impl Scenario {
    pub fn parse(text: &str) -> anyhow::Result<Scenario> {
        let raw: Value = serde_json::from_str(text).map_err(|e| Error::Invalid(format!("scenario is not valid JSON: {e}")))?;
        if let Some(obj) = raw.as_object() {
            if !obj.get("system").is_some_and(Value::is_string) || TABULATED_KEYS.iter().any(|k| obj.contains_key(*k)) {
                return Err(Error::Invalid(
                    "tabulated or sampled systems are rejected; name a builtin or a registered plugin in \"system\"".into(),
                )
                .into());
            }
        }
        let sc: Scenario = serde_json::from_value(raw).map_err(|e| Error::Invalid(format!("scenario: {e}")))?;
        sc.check()?;
        Ok(sc)
    }

    fn check(&self) -> anyhow::Result<()> {
        self.tolerances.validate()?;
        if !self.mu.is_finite() || !self.t0.is_finite() {
            bail!(Error::Invalid("mu and t0 must be finite".into()));
        }
        if let Some(t) = self.t_end {
            if !t.is_finite() || t == self.t0 {
                bail!(Error::Invalid(format!("time window [{}, {t}] is empty", self.t0)));
            }
        }
        if let Some(c) = &self.cycle {
            if !(c.period > 0.0 && c.period.is_finite()) {
                bail!(Error::Invalid(format!("cycle period {} must be positive", c.period)));
            }
            if let Some(j) = c.fixed_coordinate {
                if j == 0 || j > c.zeta.len() {
                    bail!(Error::Invalid(format!("fixed_coordinate {j} out of range 1..={}", c.zeta.len())));
                }
            }
        }
        if let Some(u) = self.unit_tol {
            if !(u > 0.0) {
                bail!(Error::Invalid("unit_tol must be positive".into()));
            }
        }
        Ok(())
    }

    pub fn sim(&self, scale: f64) -> SimOptions {
        self.tolerances.scaled(scale)
    }

    pub fn lin(&self, scale: f64) -> LinOptions {
        LinOptions { sim: self.sim(scale), ..self.linearization.unwrap_or_default() }
    }

    pub fn newton(&self, scale: f64) -> NewtonOptions {
        let base = self.newton.unwrap_or_default();
        NewtonOptions { sim: self.sim(scale), tol: base.tol * scale, step_tol: base.step_tol * scale, ..base }
    }

    pub fn scan(&self, scale: f64) -> ScanOptions {
        let d = ScanOptions::default();
        ScanOptions {
            newton: self.newton(scale),
            lin: self.lin(scale),
            unit_tol: self.unit_tol.unwrap_or(d.unit_tol),
            dedup: d.dedup,
        }
    }

    pub fn samples(&self, seed: u64) -> SamplePlan {
        SamplePlan { count: self.samples.unwrap_or(SamplePlan::default().count), seed }
    }
}

pub fn load(path: &std::path::Path) -> anyhow::Result<(Scenario, Vec<u8>)> {
    let bytes = std::fs::read(path).map_err(|e| Error::Invalid(format!("cannot read scenario {}: {e}", path.display())))?;
    let text = std::str::from_utf8(&bytes).map_err(|_| Error::Invalid("scenario is not UTF-8".into()))?;
    Ok((Scenario::parse(text)?, bytes))
}
