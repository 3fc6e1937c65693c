//! Invariant checks over full runs; the CLI exits nonzero if any fails.

use anyhow::Result;
use ldpkm_core::cells::CellId;
use ldpkm_core::low_error::CandidateSource;
use ldpkm_core::PrivacyBudget;
use serde::{Deserialize, Serialize};

use crate::artifacts::{leaked_canaries, RunArtifacts};
use crate::config::{Algorithm, ExperimentConfig};
use crate::experiment::{run_once, PrivateRun};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub seed: u64,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    fn push(&mut self, name: &str, seed: u64, passed: bool, detail: String) {
        self.checks.push(Check {
            name: name.to_string(),
            seed,
            passed,
            detail,
        });
    }
}

fn heavy_parents_hold(labels: &ldpkm_core::cells::CellLabels) -> bool {
    (1..=labels.levels).all(|l| labels.heavy(l).iter().all(|c: &CellId| labels.is_heavy(&c.parent())))
}

pub fn verify(config: &ExperimentConfig) -> Result<VerifyReport> {
    config.validate()?;
    let mut report = VerifyReport::default();
    let target = PrivacyBudget::new(config.epsilon, config.delta)?;
    for (i, seed) in config.seeds.iter().enumerate() {
        let out = run_once(config, *seed, i)?;
        let Some(run) = &out.private else {
            report.push("baseline centers", *seed, out.baseline.len() == config.k, format!("{} centers", out.baseline.len()));
            continue;
        };
        let want_rounds = if config.algorithm == Algorithm::OneRound { 1 } else { 4 };
        let (ledger, transcripts) = match run {
            PrivateRun::OneRound(o) => (o.session.ledger(), o.session.transcripts()),
            PrivateRun::LowError(o) => (o.session.ledger(), o.session.transcripts()),
        };
        if !config.noiseless {
            let bad = (0..ledger.agents()).find(|a| !ledger.spent(*a).matches(&target));
            report.push("ledger composes to the budget", *seed, bad.is_none(), format!("first mismatch: {bad:?}"));
        }
        let bad = transcripts.iter().find(|t| t.len() != want_rounds).map(|t| (t.agent, t.len()));
        report.push("transcript length", *seed, bad.is_none(), format!("want {want_rounds}, first mismatch: {bad:?}"));
        report.push("k centers", *seed, run.centers().len() == config.k, format!("{} centers", run.centers().len()));
        if let PrivateRun::LowError(o) = run {
            report.push("candidate audit", *seed, o.audit.holds(), format!("|S| = {}, cap = {}", o.audit.total, o.audit.cap));
            let parents = o.contexts.iter().all(|c| heavy_parents_hold(&c.labels));
            report.push("heavy cells have heavy parents", *seed, parents, String::new());
            let inside = o.candidates.candidates.iter().all(|c| match &c.source {
                CandidateSource::Bucket { cell, .. } => cell.contains(&c.point),
                CandidateSource::HeavyCell { .. } => true,
            });
            report.push("projected candidates inside their block", *seed, inside, String::new());
            let over: usize = o.audit.heavy_over_cap.iter().map(Vec::len).sum();
            if over > 0 {
                log::warn!("seed {seed}: {over} level(s) exceed the heavy-cell cap");
            }
        }
        if !config.noiseless {
            let json = RunArtifacts::from_run(run, *seed).to_json();
            let canaries: Vec<f64> = out.data.iter().take(20).flatten().copied().filter(|x| x.abs() > 1e-3).collect();
            let leaked = leaked_canaries(&json, &canaries);
            report.push("no raw coordinate in artifacts", *seed, leaked.is_empty(), format!("{} leaked", leaked.len()));
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_runs_verify() {
        for algorithm in [Algorithm::OneRound, Algorithm::LowError] {
            let cfg = ExperimentConfig {
                algorithm,
                n: 300,
                d_prime: 3,
                k: 2,
                seeds: vec![1],
                ..Default::default()
            };
            let r = verify(&cfg).unwrap();
            assert!(r.passed(), "{r:?}");
        }
    }
}
