//! Simulated agents, rounds and transcripts.
//!
//! Agents live in-process. A [`Session`] owns the privacy ledger and hands
//! out [`Round`]s; every randomizer takes a `&mut Round`, so no report can be
//! produced without a charge landing on the ledger.

use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::geometry::Dataset;
use crate::prf::derive;
use crate::privacy::{Charge, Ledger, PrivacyBudget};

/// `Private` runs the real randomizers. `Noiseless` replaces every randomizer
/// with its exact functional (true counts, true sums) for testing the
/// combinatorial logic; results from such runs carry no privacy guarantee.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseMode {
    #[default]
    Private,
    Noiseless,
}

impl NoiseMode {
    pub fn is_noiseless(self) -> bool {
        self == NoiseMode::Noiseless
    }
}

/// The agents' private points. Only local computations see them.
#[derive(Clone, Debug)]
pub struct Population {
    points: Dataset,
}

/// A view of one agent handed to local computations.
#[derive(Clone, Copy, Debug)]
pub struct Agent<'a> {
    pub id: usize,
    pub point: &'a [f64],
}

impl Population {
    pub fn new(points: Dataset) -> Self {
        Self { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points.dim()
    }

    /// Evaluate `f` on every agent's device.
    pub fn local<T, F: FnMut(Agent<'_>) -> T>(&self, mut f: F) -> Vec<T> {
        self.points.iter().enumerate().map(|(id, point)| f(Agent { id, point })).collect()
    }
}

/// Owner of the ledger and the public-randomness stream for one run.
#[derive(Debug)]
pub struct Session {
    ledger: Ledger,
    mode: NoiseMode,
    seed: u64,
    rounds: u32,
    calls: u64,
}

impl Session {
    pub fn new(agents: usize, cap: PrivacyBudget, mode: NoiseMode, seed: u64) -> Self {
        Self {
            ledger: Ledger::new(agents, cap),
            mode,
            seed,
            rounds: 0,
            calls: 0,
        }
    }

    pub fn mode(&self) -> NoiseMode {
        self.mode
    }

    /// Open the next interaction round.
    pub fn begin_round(&mut self) -> Round<'_> {
        self.rounds += 1;
        Round {
            id: self.rounds,
            session: self,
        }
    }

    pub fn rounds(&self) -> u32 {
        self.rounds
    }

    pub fn ledger(&self) -> &Ledger {
        &self.ledger
    }

    pub fn into_ledger(self) -> Ledger {
        self.ledger
    }

    pub fn transcript(&self, agent: usize) -> Transcript {
        Transcript::from_charges(agent, self.ledger.charges(agent))
    }

    pub fn transcripts(&self) -> Vec<Transcript> {
        (0..self.ledger.agents()).map(|a| self.transcript(a)).collect()
    }
}

/// One interaction round. Randomizers draw their public seeds from here and
/// charge the ledger through it.
#[derive(Debug)]
pub struct Round<'a> {
    id: u32,
    session: &'a mut Session,
}

impl Round<'_> {
    pub fn id(&self) -> u32 {
        self.id
    }

    pub fn mode(&self) -> NoiseMode {
        self.session.mode
    }

    pub fn agents(&self) -> usize {
        self.session.ledger.agents()
    }

    pub fn charge_all(&mut self, label: &str, budget: PrivacyBudget, count: u64) -> Result<()> {
        self.session.ledger.charge_all(self.id, label, budget, count)
    }

    /// Seed for the next randomizer call; deterministic in call order.
    pub fn fresh_seed(&mut self) -> u64 {
        self.session.calls += 1;
        derive(self.session.seed, self.session.calls)
    }
}

/// What one agent released, grouped by round.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub agent: usize,
    pub rounds: Vec<RoundEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundEntry {
    pub round: u32,
    pub charges: Vec<Charge>,
}

impl Transcript {
    pub fn from_charges(agent: usize, charges: &[Charge]) -> Self {
        let mut rounds: Vec<RoundEntry> = Vec::new();
        for c in charges {
            match rounds.last_mut() {
                Some(r) if r.round == c.round => r.charges.push(c.clone()),
                _ => rounds.push(RoundEntry {
                    round: c.round,
                    charges: alloc::vec![c.clone()],
                }),
            }
        }
        Self { agent, rounds }
    }

    pub fn len(&self) -> usize {
        self.rounds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rounds.is_empty()
    }
}

/// A round body: consumes the round handle and produces aggregator input.
pub type RoundFn<'a, T> = &'a mut dyn FnMut(&mut Round<'_>) -> Result<T>;

/// Run rounds strictly in sequence; returns each round's aggregate and the
/// per-agent transcripts.
pub fn simulate_protocol<T>(session: &mut Session, rounds: &mut [RoundFn<'_, T>]) -> Result<(Vec<T>, Vec<Transcript>)> {
    let mut out = Vec::with_capacity(rounds.len());
    for body in rounds.iter_mut() {
        let mut round = session.begin_round();
        out.push(body(&mut round)?);
    }
    Ok((out, session.transcripts()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_rounds_give_empty_transcripts() {
        let mut s = Session::new(3, PrivacyBudget::pure(1.0), NoiseMode::Private, 0);
        let (out, t) = simulate_protocol::<()>(&mut s, &mut []).unwrap();
        assert!(out.is_empty());
        assert!(t.iter().all(|t| t.is_empty()));
    }

    #[test]
    fn transcript_groups_by_round() {
        let mut s = Session::new(2, PrivacyBudget::pure(1.0), NoiseMode::Private, 0);
        let mut a = |r: &mut Round<'_>| r.charge_all("a", PrivacyBudget::pure(0.25), 2);
        let mut b = |r: &mut Round<'_>| r.charge_all("b", PrivacyBudget::pure(0.5), 1);
        let (_, t) = simulate_protocol(&mut s, &mut [&mut a, &mut b]).unwrap();
        assert_eq!(t[1].len(), 2);
        assert_eq!(t[1].rounds[0].charges[0].count, 2);
        assert!(s.ledger().verify_exact().is_ok());
    }

    #[test]
    fn seeds_are_distinct_and_reproducible() {
        let mut s = Session::new(1, PrivacyBudget::pure(1.0), NoiseMode::Private, 9);
        let mut r = s.begin_round();
        let (a, b) = (r.fresh_seed(), r.fresh_seed());
        assert_ne!(a, b);
        let mut s2 = Session::new(1, PrivacyBudget::pure(1.0), NoiseMode::Private, 9);
        assert_eq!(s2.begin_round().fresh_seed(), a);
    }
}
