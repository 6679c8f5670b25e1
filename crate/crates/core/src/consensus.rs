//! Proof-of-Fair-Chance round simulation.
//!
//! A miner may produce the next block only if all five constraints hold:
//!
//! ```text
//! (P >= T) && (B >= B_min) && (C <= C_max) && (N <= N_max) && (S <= S_max)
//! ```
//!
//! The winner is drawn uniformly from the eligible miners with a generator
//! keyed by the round seed. The winner's consecutive-block count `C` goes up
//! by one; everyone else's resets to zero.

use std::collections::BTreeMap;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum ConsensusError {
    #[error("NoEligibleMiner: no miner satisfies the fair-chance constraints")]
    NoEligibleMiner,
    #[error("no miners supplied")]
    NoMiners,
    #[error("invalid consensus input: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinerProfile {
    pub miner_id: String,
    /// P
    pub compute_power: f64,
    /// B
    pub balance: f64,
    /// C
    #[serde(default)]
    pub consecutive_blocks: u64,
    /// N
    pub bandwidth: f64,
    /// S
    pub storage: f64,
}

impl MinerProfile {
    pub fn new(miner_id: impl Into<String>, compute_power: f64, balance: f64, bandwidth: f64, storage: f64) -> Self {
        Self {
            miner_id: miner_id.into(),
            compute_power,
            balance,
            consecutive_blocks: 0,
            bandwidth,
            storage,
        }
    }

    pub fn validate(&self) -> Result<(), ConsensusError> {
        let quantities = [self.compute_power, self.balance, self.bandwidth, self.storage];
        if quantities.iter().any(|q| !q.is_finite() || *q < 0.0) {
            return Err(ConsensusError::Invalid(format!(
                "miner {} has a negative or non-finite quantity",
                self.miner_id
            )));
        }
        Ok(())
    }
}

/// Bounds for the five constraints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsensusParams {
    /// T
    pub min_compute: f64,
    /// B_min
    pub min_balance: f64,
    /// C_max
    pub max_consecutive: u64,
    /// N_max
    pub max_bandwidth: f64,
    /// S_max
    pub max_storage: f64,
}

impl Default for ConsensusParams {
    fn default() -> Self {
        Self {
            min_compute: 1.0,
            min_balance: 1.0,
            max_consecutive: 3,
            max_bandwidth: 100.0,
            max_storage: 1000.0,
        }
    }
}

impl ConsensusParams {
    pub fn validate(&self) -> Result<(), ConsensusError> {
        let bounds = [self.min_compute, self.min_balance, self.max_bandwidth, self.max_storage];
        if bounds.iter().any(|q| !q.is_finite() || *q < 0.0) {
            return Err(ConsensusError::Invalid("consensus bounds must be finite and non-negative".into()));
        }
        Ok(())
    }
}

/// The fair-chance eligibility predicate, bounds inclusive.
pub fn eligible(m: &MinerProfile, p: &ConsensusParams) -> bool {
    m.compute_power >= p.min_compute
        && m.balance >= p.min_balance
        && m.consecutive_blocks <= p.max_consecutive
        && m.bandwidth <= p.max_bandwidth
        && m.storage <= p.max_storage
}

/// Per-round seed: SHA-256 of the scenario seed and the round index.
pub fn round_seed(seed: u64, round_index: u64) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update(b"pofc-round");
    hasher.update(seed.to_be_bytes());
    hasher.update(round_index.to_be_bytes());
    hasher.finalize().into()
}

/// Index (into `miners`) of the winner drawn uniformly among eligible miners.
pub fn select_index(
    miners: &[MinerProfile],
    p: &ConsensusParams,
    round_seed: &[u8; 32],
) -> Result<usize, ConsensusError> {
    if miners.is_empty() {
        return Err(ConsensusError::NoMiners);
    }
    let pool: Vec<usize> = miners
        .iter()
        .enumerate()
        .filter(|(_, m)| eligible(m, p))
        .map(|(i, _)| i)
        .collect();
    match pool.len() {
        0 => Err(ConsensusError::NoEligibleMiner),
        1 => Ok(pool[0]),
        n => {
            let mut rng = ChaCha20Rng::from_seed(*round_seed);
            Ok(pool[rng.gen_range(0..n)])
        }
    }
}

pub fn select_miner<'a>(
    miners: &'a [MinerProfile],
    p: &ConsensusParams,
    round_seed: &[u8; 32],
) -> Result<&'a str, ConsensusError> {
    select_index(miners, p, round_seed).map(|i| miners[i].miner_id.as_str())
}

/// Applies the consecutive-block bookkeeping after `winner` produced a block.
pub fn record_win(miners: &mut [MinerProfile], winner: usize) {
    for (i, m) in miners.iter_mut().enumerate() {
        if i == winner {
            m.consecutive_blocks += 1;
        } else {
            m.consecutive_blocks = 0;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundStats {
    pub rounds: u64,
    pub wins: BTreeMap<String, u64>,
    pub skipped_rounds: u64,
    /// Winner index per round, `None` for skipped rounds.
    pub history: Vec<Option<usize>>,
}

impl RoundStats {
    /// Longest run of consecutive wins by any single miner.
    pub fn longest_streak(&self) -> u64 {
        let mut best = 0;
        let mut current = 0;
        let mut last = None;
        for w in &self.history {
            match (w, last) {
                (Some(a), Some(b)) if *a == b => current += 1,
                (Some(_), _) => current = 1,
                (None, _) => current = 0,
            }
            last = *w;
            best = best.max(current);
        }
        best
    }

    /// CSV with header `miner_id,wins,win_fraction`, rows sorted by miner id.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "miner_id,wins,win_fraction")?;
        for (id, wins) in &self.wins {
            writeln!(out, "{id},{wins},{:.6}", *wins as f64 / self.rounds as f64)?;
        }
        Ok(())
    }
}

/// Simulates `n_rounds` rounds. Miner profiles are cloned; only their
/// consecutive-block counters evolve.
pub fn run_rounds(
    miners: &[MinerProfile],
    p: &ConsensusParams,
    n_rounds: u64,
    seed: u64,
) -> Result<RoundStats, ConsensusError> {
    if n_rounds == 0 {
        return Err(ConsensusError::Invalid("n_rounds must be at least 1".into()));
    }
    if miners.is_empty() {
        return Err(ConsensusError::NoMiners);
    }
    p.validate()?;
    for m in miners {
        m.validate()?;
    }
    let mut state = miners.to_vec();
    let mut wins: BTreeMap<String, u64> = miners.iter().map(|m| (m.miner_id.clone(), 0)).collect();
    let mut history = Vec::with_capacity(n_rounds as usize);
    let mut skipped = 0;
    for round in 0..n_rounds {
        match select_index(&state, p, &round_seed(seed, round)) {
            Ok(winner) => {
                *wins.get_mut(&state[winner].miner_id).expect("winner is a known miner") += 1;
                record_win(&mut state, winner);
                history.push(Some(winner));
            }
            Err(ConsensusError::NoEligibleMiner) => {
                skipped += 1;
                history.push(None);
            }
            Err(e) => return Err(e),
        }
    }
    Ok(RoundStats { rounds: n_rounds, wins, skipped_rounds: skipped, history })
}

/// JSON scenario consumed by the `consensus-sim` command.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Scenario {
    pub miners: Vec<MinerProfile>,
    pub params: ConsensusParams,
    pub rounds: u64,
    pub seed: u64,
}

impl Scenario {
    pub fn run(&self) -> Result<RoundStats, ConsensusError> {
        run_rounds(&self.miners, &self.params, self.rounds, self.seed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> ConsensusParams {
        ConsensusParams {
            min_compute: 3.0,
            min_balance: 1.0,
            max_consecutive: 3,
            max_bandwidth: 10.0,
            max_storage: 10.0,
        }
    }

    #[test]
    fn hand_evaluated_example() {
        let m = MinerProfile::new("a", 5.0, 10.0, 1.0, 1.0);
        assert!(eligible(&m, &params()));
    }

    #[test]
    fn compute_bound_is_inclusive() {
        let m = MinerProfile::new("a", 3.0, 10.0, 1.0, 1.0);
        assert!(eligible(&m, &params()));
    }

    #[test]
    fn zero_balance_is_ineligible() {
        let m = MinerProfile::new("a", 100.0, 0.0, 0.0, 0.0);
        assert!(!eligible(&m, &params()));
    }

    #[test]
    fn single_eligible_miner_always_wins() {
        let miners = vec![
            MinerProfile::new("poor", 5.0, 0.0, 1.0, 1.0),
            MinerProfile::new("ok", 5.0, 5.0, 1.0, 1.0),
            MinerProfile::new("weak", 1.0, 5.0, 1.0, 1.0),
        ];
        for r in 0..50 {
            assert_eq!(select_miner(&miners, &params(), &round_seed(7, r)).unwrap(), "ok");
        }
    }

    #[test]
    fn selection_is_deterministic() {
        let miners: Vec<_> = (0..5).map(|i| MinerProfile::new(format!("m{i}"), 5.0, 5.0, 1.0, 1.0)).collect();
        let seed = round_seed(99, 3);
        assert_eq!(
            select_miner(&miners, &params(), &seed).unwrap(),
            select_miner(&miners, &params(), &seed).unwrap()
        );
    }

    #[test]
    fn zero_cap_single_miner_stalls_after_first_round() {
        let miners = vec![MinerProfile::new("solo", 5.0, 5.0, 1.0, 1.0)];
        let p = ConsensusParams { max_consecutive: 0, ..params() };
        let stats = run_rounds(&miners, &p, 10, 1).unwrap();
        assert_eq!(stats.history[0], Some(0));
        assert!(stats.history[1..].iter().all(Option::is_none));
        assert_eq!(stats.wins["solo"], 1);
        assert_eq!(stats.skipped_rounds, 9);
    }

    #[test]
    fn all_ineligible_skips_everything() {
        let miners = vec![MinerProfile::new("a", 0.0, 5.0, 1.0, 1.0)];
        let stats = run_rounds(&miners, &params(), 25, 1).unwrap();
        assert_eq!(stats.skipped_rounds, 25);
    }

    #[test]
    fn cap_of_one_limits_streaks() {
        let miners = vec![
            MinerProfile::new("a", 5.0, 5.0, 1.0, 1.0),
            MinerProfile::new("b", 5.0, 5.0, 1.0, 1.0),
        ];
        let p = ConsensusParams { max_consecutive: 1, ..params() };
        let stats = run_rounds(&miners, &p, 1000, 3).unwrap();
        assert!(stats.longest_streak() <= 2);
        assert_eq!(stats.wins.values().sum::<u64>() + stats.skipped_rounds, 1000);
    }

    #[test]
    fn csv_layout() {
        let miners = vec![MinerProfile::new("a", 5.0, 5.0, 1.0, 1.0)];
        let stats = run_rounds(&miners, &ConsensusParams { max_consecutive: 100, ..params() }, 4, 0).unwrap();
        let mut out = Vec::new();
        stats.write_csv(&mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "miner_id,wins,win_fraction\na,4,1.000000\n");
    }

    #[test]
    fn rejects_negative_quantities() {
        let miners = vec![MinerProfile::new("a", -1.0, 5.0, 1.0, 1.0)];
        assert!(matches!(run_rounds(&miners, &params(), 1, 0), Err(ConsensusError::Invalid(_))));
    }
}
