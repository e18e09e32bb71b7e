use std::path::Path;

use bab_verify::bab::{Status, Timing, TracePoint, Verdict, VerifierConfig, Witness};
use serde::{Deserialize, Serialize};

/// JSON summary of one `verify` run. Everything except `timing` is a pure
/// function of the inputs and flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub tool: String,
    pub version: String,
    pub seed: u64,
    pub network: String,
    pub property: String,
    /// `VERIFIED`, `FALSIFIED`, `TIMEOUT` or `INCOMPLETE_MODE_EXHAUSTED`.
    pub verdict: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub witness: Option<Witness>,
    pub lower: f64,
    pub certified_lower: f64,
    pub upper: f64,
    pub branches: usize,
    pub domains: usize,
    pub iterations: usize,
    pub lp_calls: usize,
    pub lp_infeasible: usize,
    pub lp_proved: usize,
    pub pruned: usize,
    pub max_depth: usize,
    /// Global bounds after every iteration.
    pub trajectory: Vec<TracePoint>,
    pub config: VerifierConfig,
    pub timing: Timing,
}

impl RunReport {
    pub fn new(v: &Verdict, cfg: &VerifierConfig, seed: u64, net: &Path, prop: &Path) -> Self {
        let witness = match &v.status {
            Status::Falsified { witness, value } => Some(Witness {
                input: witness.clone(),
                value: *value,
            }),
            _ => None,
        };
        let s = &v.stats;
        Self {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            network: net.display().to_string(),
            property: prop.display().to_string(),
            verdict: v.status.name().to_string(),
            witness,
            lower: v.lower,
            certified_lower: v.certified_lower,
            upper: v.upper,
            branches: s.branches,
            domains: s.domains,
            iterations: s.iterations,
            lp_calls: s.lp_calls,
            lp_infeasible: s.lp_infeasible,
            lp_proved: s.lp_proved,
            pruned: s.pruned,
            max_depth: s.max_depth,
            trajectory: v.trace.clone(),
            config: *cfg,
            timing: s.timing,
        }
    }

    /// Copy with the timing block zeroed, for reproducibility checks.
    pub fn masked(&self) -> Self {
        Self {
            timing: Timing::default(),
            ..self.clone()
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable report")
    }

    pub fn summary(&self) -> String {
        let mut s = format!(
            "{} lower={} upper={} branches={} lp_calls={} time={:.3}s",
            self.verdict, self.lower, self.upper, self.branches, self.lp_calls, self.timing.total_s
        );
        if let Some(w) = &self.witness {
            s.push_str(&format!("\nwitness={:?} value={}", w.input, w.value));
        }
        s
    }
}
