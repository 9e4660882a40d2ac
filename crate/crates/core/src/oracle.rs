//! Brute-force nested Monte Carlo reference values, persisted with enough
//! metadata to be regenerated.

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{nested_estimate, NestedEstimate};
use crate::exec::Execution;
use crate::model::ModelSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleRecord {
    pub estimate: f64,
    pub std_error: f64,
    pub n: u64,
    pub m: usize,
    pub seed: u64,
    pub d: usize,
    pub threshold: f64,
    pub initial_value: f64,
    pub model: ModelSpec,
    pub generator: String,
    pub elapsed_seconds: f64,
}

impl OracleRecord {
    pub fn compute(spec: &ModelSpec, n: u64, m: usize, seed: u64, exec: Execution) -> Result<Self> {
        let start = Instant::now();
        let NestedEstimate { estimate, std_error, .. } = nested_estimate(spec, n, m, seed, exec)?;
        Ok(OracleRecord {
            estimate,
            std_error,
            n,
            m,
            seed,
            d: spec.dim(),
            threshold: spec.threshold(),
            initial_value: spec.initial_value(),
            model: spec.clone(),
            generator: format!("nested_estimate (nestmlmc {})", env!("CARGO_PKG_VERSION")),
            elapsed_seconds: start.elapsed().as_secs_f64(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
    }

    /// True when the record was produced for this model (same threshold and
    /// parameters).
    pub fn matches(&self, spec: &ModelSpec) -> bool {
        &self.model == spec
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Threshold;

    #[test]
    fn saved_record_still_matches_its_model() {
        let spec = ModelSpec::paper(4, Threshold::FractionOfV0(0.3)).unwrap();
        let rec = OracleRecord::compute(&spec, 200, 64, 5, Execution::Sequential).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("o.json");
        std::fs::write(&path, serde_json::to_string_pretty(&rec).unwrap()).unwrap();
        let back = OracleRecord::load(&path).unwrap();
        assert_eq!(back, rec);
        assert!(back.matches(&spec));
        assert!(!back.matches(&spec.with_threshold(12.0)));
    }

    #[test]
    fn cached_reference_matches_the_default_model() {
        let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/oracle_d4.json");
        let rec = OracleRecord::load(&path).unwrap();
        assert!(rec.matches(&ModelSpec::paper(4, Threshold::FractionOfV0(0.3)).unwrap()));
        assert_eq!((rec.n, rec.m, rec.seed), (2_000_000, 1 << 14, 7919));
    }
}
