//! Finite-horizon Gittins indices for Bernoulli bandits with a uniform prior.
//!
//! The index of a posterior state (s successes, f failures, r rounds left) is
//! the smallest retirement rate lambda at which retiring immediately is
//! weakly optimal in the calibration game
//!
//!   V(s, f, r) = max(lambda * r,
//!                    p * (1 + V(s+1, f, r-1)) + (1-p) * V(s, f+1, r-1)),
//!
//! with p = (1+s)/(2+s+f) the posterior mean and V(., ., 0) = 0. The
//! retire-minus-continue gap is strictly increasing in lambda, so the index
//! is found by bisection; each evaluation runs a dense DP over the subtree.

use std::io::Read as _;
use std::path::Path;

use rayon::prelude::*;

use crate::env::{binarize_reward, ProblemInstance};
use crate::error::{Error, Result};
use crate::evaluator::Agent;
use crate::rng::{argmax_tiebreak, ArmIndex, RandomStream};

/// Bumped when the table layout or the index computation changes.
const TABLE_FORMAT_VERSION: u32 = 1;
const TABLE_MAGIC: &[u8; 4] = b"GTBL";

/// Precomputed index table over all states with s + f + r <= horizon, r >= 1.
#[derive(Clone, Debug, PartialEq)]
pub struct GittinsTable {
    horizon: u32,
    tol: f64,
    /// Block offset of each r in 1..=horizon.
    offsets: Vec<usize>,
    values: Vec<f64>,
}

impl GittinsTable {
    pub fn horizon(&self) -> u32 {
        self.horizon
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    /// Index lookup; states outside the triangle are an error.
    pub fn index(&self, s: u32, f: u32, r: u32) -> Result<f64> {
        if r < 1 || s + f + r > self.horizon {
            return Err(Error::TableHorizonExceeded { s, f, r, horizon: self.horizon });
        }
        let m = (self.horizon - r) as usize; // max pulls recorded at this r
        let (s, f) = (s as usize, f as usize);
        // Row-major over s: row s holds f = 0..=(m - s), so rows 0..s
        // contribute s*(m+1) - s*(s-1)/2 = s*(2m + 3 - s)/2 entries.
        let within = s * (2 * m + 3 - s) / 2 + f;
        Ok(self.values[self.offsets[r as usize] + within])
    }

    /// Serializes the table; the key (version, horizon, tol) is stored first.
    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        let mut buf =
            Vec::with_capacity(4 + 4 + 4 + 8 + 8 + self.values.len() * 8);
        buf.extend_from_slice(TABLE_MAGIC);
        buf.extend_from_slice(&TABLE_FORMAT_VERSION.to_le_bytes());
        buf.extend_from_slice(&self.horizon.to_le_bytes());
        buf.extend_from_slice(&self.tol.to_le_bytes());
        buf.extend_from_slice(&(self.values.len() as u64).to_le_bytes());
        for v in &self.values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        std::fs::write(path, buf)
    }

    /// Loads a table if `path` holds one built with the same key.
    pub fn load(path: &Path, horizon: u32, tol: f64) -> std::io::Result<Option<GittinsTable>> {
        let mut file = match std::fs::File::open(path) {
            Ok(f) => f,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(e),
        };
        let mut buf = Vec::new();
        file.read_to_end(&mut buf)?;
        let mut cur = std::io::Cursor::new(buf);
        let mut word4 = [0u8; 4];
        let mut word8 = [0u8; 8];
        cur.read_exact(&mut word4)?;
        if &word4 != TABLE_MAGIC {
            return Ok(None);
        }
        cur.read_exact(&mut word4)?;
        if u32::from_le_bytes(word4) != TABLE_FORMAT_VERSION {
            return Ok(None);
        }
        cur.read_exact(&mut word4)?;
        let file_horizon = u32::from_le_bytes(word4);
        cur.read_exact(&mut word8)?;
        let file_tol = f64::from_le_bytes(word8);
        if file_horizon != horizon || file_tol != tol {
            return Ok(None);
        }
        cur.read_exact(&mut word8)?;
        let len = u64::from_le_bytes(word8) as usize;
        if len != table_len(horizon) {
            return Ok(None);
        }
        let mut values = Vec::with_capacity(len);
        for _ in 0..len {
            cur.read_exact(&mut word8)?;
            values.push(f64::from_le_bytes(word8));
        }
        Ok(Some(GittinsTable { horizon, tol, offsets: block_offsets(horizon), values }))
    }
}

fn block_offsets(horizon: u32) -> Vec<usize> {
    let mut offsets = vec![0usize; horizon as usize + 1];
    let mut acc = 0usize;
    for r in 1..=horizon as usize {
        offsets[r] = acc;
        let m = horizon as usize - r;
        acc += (m + 1) * (m + 2) / 2;
    }
    offsets
}

fn table_len(horizon: u32) -> usize {
    let n = horizon as usize;
    (1..=n).map(|r| (n - r + 1) * (n - r + 2) / 2).sum()
}

/// Retirement value V(s, f, r) at rate `lambda`, by dense DP over the
/// subtree. Layers share the pull count, so the posterior denominator is
/// constant per layer. `prev`/`cur` are scratch of length >= r + 1.
fn retirement_value(
    s: u32,
    f: u32,
    r: u32,
    lambda: f64,
    prev: &mut Vec<f64>,
    cur: &mut Vec<f64>,
) -> f64 {
    let (s0, f0, r0) = (f64::from(s), f64::from(f), r as usize);
    prev.clear();
    prev.resize(r0 + 1, 0.0); // V at 0 rounds remaining
    for rho in 1..=r0 {
        let pulls_taken = (r0 - rho) as f64;
        let recip = 1.0 / (2.0 + s0 + f0 + pulls_taken);
        let retire = lambda * rho as f64;
        cur.clear();
        for u in 0..=(r0 - rho) {
            let p = (1.0 + s0 + u as f64) * recip;
            let cont = p * (1.0 + prev[u + 1]) + (1.0 - p) * prev[u];
            cur.push(retire.max(cont));
        }
        std::mem::swap(prev, cur);
    }
    prev[0]
}

/// Smallest lambda (within `tol`) at which retiring is weakly optimal.
fn bisect_index(s: u32, f: u32, r: u32, tol: f64, prev: &mut Vec<f64>, cur: &mut Vec<f64>) -> f64 {
    // One round left: V = max(lambda, p), so the index is the posterior mean.
    if r == 1 {
        return (1.0 + f64::from(s)) / (2.0 + f64::from(s) + f64::from(f));
    }
    let rf = f64::from(r);
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        // Retiring optimal iff lambda * r matches the DP value at the root.
        let retire_optimal = mid * rf >= retirement_value(s, f, r, mid, prev, cur);
        if retire_optimal {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Builds the full index table for `horizon` rounds.
///
/// States are independent given the recursion, so they are computed in
/// parallel; the result does not depend on the thread count.
pub fn gittins_table(horizon: u32, tol: f64) -> Result<GittinsTable> {
    if horizon < 1 {
        return Err(Error::InvalidParameter("table horizon must be at least 1".into()));
    }
    if !(tol > 0.0 && tol < 1.0) {
        return Err(Error::InvalidParameter(format!("tol must lie in (0, 1), got {tol}")));
    }
    let n = horizon as usize;
    let mut states = Vec::with_capacity(table_len(horizon));
    for r in 1..=n as u32 {
        let m = horizon - r;
        for s in 0..=m {
            for f in 0..=(m - s) {
                states.push((s, f, r));
            }
        }
    }
    let values: Vec<f64> = states
        .into_par_iter()
        .map_init(
            || (Vec::new(), Vec::new()),
            |(prev, cur), (s, f, r)| bisect_index(s, f, r, tol, prev, cur),
        )
        .collect();
    Ok(GittinsTable { horizon, tol, offsets: block_offsets(horizon), values })
}

/// Loads the table from `path` when the key matches, else builds and saves.
///
/// Cache writes are best effort: a failed write still returns the table.
pub fn gittins_table_cached(horizon: u32, tol: f64, path: &Path) -> Result<GittinsTable> {
    if let Ok(Some(table)) = GittinsTable::load(path, horizon, tol) {
        return Ok(table);
    }
    let table = gittins_table(horizon, tol)?;
    let _ = table.save(path);
    Ok(table)
}

/// Picks the arm with the highest index; ties break uniformly.
pub fn gittins_select(
    table: &GittinsTable,
    successes: &[u32],
    failures: &[u32],
    remaining: u32,
    rng: &mut RandomStream,
    scores: &mut Vec<f64>,
) -> Result<ArmIndex> {
    scores.clear();
    for (&s, &f) in successes.iter().zip(failures) {
        scores.push(table.index(s, f, remaining)?);
    }
    argmax_tiebreak(scores, rng)
}

/// The Gittins-index policy as an episode agent.
///
/// Rewards outside {0, 1} are binarized to pseudo-rewards first, matching the
/// reduction used for Thompson sampling on bounded non-binary rewards.
pub struct GittinsAgent<'a> {
    table: &'a GittinsTable,
    n: usize,
    successes: Vec<u32>,
    failures: Vec<u32>,
    rounds: usize,
    scores: Vec<f64>,
}

impl<'a> GittinsAgent<'a> {
    pub fn new(table: &'a GittinsTable, n: usize, k: usize) -> Result<Self> {
        if n as u32 > table.horizon {
            return Err(Error::InvalidParameter(format!(
                "episode horizon {n} exceeds table horizon {}",
                table.horizon
            )));
        }
        Ok(GittinsAgent {
            table,
            n,
            successes: vec![0; k],
            failures: vec![0; k],
            rounds: 0,
            scores: Vec::with_capacity(k),
        })
    }
}

impl Agent for GittinsAgent<'_> {
    fn select(&mut self, _inst: &ProblemInstance, rng: &mut RandomStream) -> Result<ArmIndex> {
        let remaining = (self.n - self.rounds) as u32;
        gittins_select(self.table, &self.successes, &self.failures, remaining, rng, &mut self.scores)
    }

    fn update(
        &mut self,
        _inst: &ProblemInstance,
        arm: ArmIndex,
        reward: f64,
        rng: &mut RandomStream,
    ) -> Result<()> {
        let reward = if reward != 0.0 && reward != 1.0 {
            binarize_reward(reward, rng)?
        } else {
            reward
        };
        if reward == 1.0 {
            self.successes[arm] += 1;
        } else {
            self.failures[arm] += 1;
        }
        self.rounds += 1;
        Ok(())
    }
}
