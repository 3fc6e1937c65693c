//! JSON round artifacts: everything the analyzer saw or derived, and nothing
//! an agent holds privately.

use std::path::Path;

use anyhow::{Context, Result};
use ldpkm_core::dimred::DomainMapSpec;
use ldpkm_core::freq::SuccinctHistogram;
use ldpkm_core::low_error::{BucketReport, Candidate};
use ldpkm_core::protocol::Transcript;
use ldpkm_core::CenterSet;
use serde::{Deserialize, Serialize};

use crate::experiment::PrivateRun;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistogramArtifact {
    pub label: String,
    pub level: u32,
    pub histogram: SuccinctHistogram,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PickArtifact {
    pub level: u32,
    pub grid_point: String,
    pub count: f64,
    pub sum: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GuessArtifact {
    pub f: usize,
    pub opt_guess: f64,
    /// Heavy cell keys per level.
    pub heavy: Vec<Vec<String>>,
    /// Bucket thresholds per level; `None` where no level runs buckets.
    pub thresholds: Vec<Option<f64>>,
    pub buckets: Vec<BucketReport>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "algorithm", rename_all = "kebab-case")]
pub enum Rounds {
    OneRound {
        histograms: Vec<HistogramArtifact>,
        picks: Vec<PickArtifact>,
        proxy: CenterSet,
    },
    LowError {
        cell_histograms: Vec<HistogramArtifact>,
        guesses: Vec<GuessArtifact>,
        candidates: Vec<Candidate>,
        candidate_cap: u64,
        proxy: CenterSet,
        reduced: CenterSet,
        cluster_counts: Vec<f64>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunArtifacts {
    pub seed: u64,
    pub map: DomainMapSpec,
    pub rounds: Rounds,
    pub centers: CenterSet,
    /// Transcript shape of agent 0 (every agent's is identical).
    pub transcript: Transcript,
}

impl RunArtifacts {
    pub fn from_run(run: &PrivateRun, seed: u64) -> Self {
        match run {
            PrivateRun::OneRound(o) => Self {
                seed,
                map: o.map.spec().clone(),
                rounds: Rounds::OneRound {
                    histograms: o
                        .histograms
                        .iter()
                        .enumerate()
                        .map(|(i, h)| HistogramArtifact {
                            label: ldpkm_core::privacy::labels::HISTOGRAM.to_string(),
                            level: i as u32 + 1,
                            histogram: h.clone(),
                        })
                        .collect(),
                    picks: o
                        .states
                        .iter()
                        .flat_map(|s| {
                            s.picks.iter().map(move |p| PickArtifact {
                                level: s.level,
                                grid_point: ldpkm_core::grids::grid_key(&p.point),
                                count: p.count,
                                sum: p.sum.clone(),
                            })
                        })
                        .collect(),
                    proxy: o.proxy.clone(),
                },
                centers: o.centers.clone(),
                transcript: o.session.transcript(0),
            },
            PrivateRun::LowError(o) => Self {
                seed,
                map: o.map.spec().clone(),
                rounds: Rounds::LowError {
                    cell_histograms: o
                        .cell_histograms
                        .iter()
                        .enumerate()
                        .filter_map(|(l, h)| {
                            h.as_ref().map(|h| HistogramArtifact {
                                label: ldpkm_core::privacy::labels::CELLS.to_string(),
                                level: l as u32,
                                histogram: h.clone(),
                            })
                        })
                        .collect(),
                    guesses: o
                        .contexts
                        .iter()
                        .zip(&o.buckets)
                        .map(|(ctx, b)| GuessArtifact {
                            f: ctx.f,
                            opt_guess: ctx.opt_guess,
                            heavy: (0..=ctx.labels.levels).map(|l| ctx.labels.heavy(l).iter().map(|c| c.key()).collect()).collect(),
                            thresholds: ctx.thresholds.iter().map(|t| t.is_finite().then_some(*t)).collect(),
                            buckets: b.clone(),
                        })
                        .collect(),
                    candidates: o.candidates.candidates.clone(),
                    candidate_cap: o.audit.cap,
                    proxy: o.proxy.clone(),
                    reduced: o.reduced.clone(),
                    cluster_counts: o.cluster_counts.clone(),
                },
                centers: o.centers.clone(),
                transcript: o.session.transcript(0),
            },
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("artifacts serialize")
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(path, self.to_json()).with_context(|| format!("writing {}", path.display()))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}

/// Canary coordinates whose JSON rendering occurs in `json`.
pub fn leaked_canaries(json: &str, canaries: &[f64]) -> Vec<f64> {
    canaries
        .iter()
        .copied()
        .filter(|x| {
            let s = serde_json::to_string(x).expect("finite");
            json.contains(&s)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canary_scan_matches_json_rendering() {
        let json = serde_json::to_string(&vec![0.5, 0.123456789012345, -3.0]).unwrap();
        assert_eq!(leaked_canaries(&json, &[0.123456789012345, 0.987654321]), [0.123456789012345]);
    }
}
