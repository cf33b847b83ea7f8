use serde::{Deserialize, Serialize};

use crate::harness::{FaultSpec, OutcomeRecord};
use crate::trace::InjectionSite;

/// Index over one golden run and the faulty runs compared against it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CampaignManifest {
    pub campaign_id: String,
    pub golden_run_id: String,
    /// Shared by every run; see [`crate::trace::symbol_digest`].
    pub symbol_digest: String,
    /// Faulty runs in campaign order.
    pub runs: Vec<FaultyRunEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inputs: Option<Vec<u64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub golden_output: Option<Vec<u64>>,
}

/// Traces coming from external tools only carry the injection site; runs
/// produced by the harness also record the full fault and its outcome.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaultyRunEntry {
    pub run_id: String,
    pub injection: InjectionSite,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fault: Option<FaultSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome: Option<OutcomeRecord>,
}

impl CampaignManifest {
    pub fn run_ids(&self) -> impl Iterator<Item = &str> {
        std::iter::once(self.golden_run_id.as_str())
            .chain(self.runs.iter().map(|r| r.run_id.as_str()))
    }

    pub fn faulty_run(&self, run_id: &str) -> Option<&FaultyRunEntry> {
        self.runs.iter().find(|r| r.run_id == run_id)
    }
}
