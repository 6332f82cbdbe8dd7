//! Feasibility of Byzantine agreement in the hybrid fault model: `n`
//! parties, `b` of which may fail fully-Byzantine while the rest fail only
//! by crashing or misusing (not forging) their trusted component, with at
//! most `f` failures total.
//!
//! The closed form — feasible iff n ≥ 3f+1 or n−b ≥ 2f+1 — is verified by
//! brute force over threshold quorum systems: a configuration is infeasible
//! exactly when two quora can intersect only in fully-Byzantine parties
//! that all fail, letting the two quora answer divergently.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Exhaustive search is exponential in n; refuse beyond this.
pub const BRUTE_FORCE_BOUND: u32 = 12;

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
#[error("n={n} exceeds the brute-force bound {bound}")]
pub struct BoundExceeded {
    pub n: u32,
    pub bound: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HybridSystem {
    pub n: u32,
    /// Parties that, when faulty, may behave fully-Byzantine.
    pub b: u32,
    /// Total fault budget.
    pub f: u32,
}

impl HybridSystem {
    pub fn new(n: u32, b: u32, f: u32) -> HybridSystem {
        assert!(b <= n, "b must not exceed n");
        HybridSystem { n, b, f }
    }
}

/// Closed form: agreement is achievable iff plain Byzantine quorums suffice
/// (n ≥ 3f+1) or enough parties are barred from full-Byzantine behavior
/// (n−b ≥ 2f+1). With no faults at all there is nothing to tolerate.
pub fn is_feasible(sys: HybridSystem) -> bool {
    sys.f == 0 || sys.n >= 3 * sys.f + 1 || sys.n - sys.b >= 2 * sys.f + 1
}

/// Two quora plus a failure assignment under which they can diverge.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Witness {
    pub q1: Vec<u32>,
    pub q2: Vec<u32>,
    /// Failed parties: the (fully-Byzantine) intersection of the quora.
    pub failed: Vec<u32>,
    /// The Byzantine placement under which the witness works.
    pub byzantine: Vec<u32>,
}

impl std::fmt::Display for Witness {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "Q1={:?} Q2={:?} failed={:?} byzantine={:?}",
            self.q1, self.q2, self.failed, self.byzantine
        )
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Feasibility {
    pub feasible: bool,
    pub witness: Option<Witness>,
}

/// A concrete universe with fully-Byzantine flags and an explicit quorum
/// family.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QuorumSystem {
    pub n: u32,
    pub byzantine: Vec<u32>,
    pub quora: Vec<Vec<u32>>,
}

impl QuorumSystem {
    /// Threshold quora: every subset of size n−f.
    pub fn threshold(n: u32, f: u32, byzantine: Vec<u32>) -> QuorumSystem {
        let size = n.saturating_sub(f) as usize;
        QuorumSystem { n, byzantine, quora: subsets_of_size(n, size) }
    }

    /// A divergence witness: two quora whose intersection consists solely of
    /// fully-Byzantine parties, small enough to fail within budget `f`,
    /// while correct quorum members remain to produce the divergent answers.
    pub fn find_witness(&self, f: u32) -> Option<Witness> {
        for (i, q1) in self.quora.iter().enumerate() {
            for q2 in &self.quora[i..] {
                let inter: Vec<u32> =
                    q1.iter().copied().filter(|x| q2.contains(x)).collect();
                if inter.len() as u32 > f {
                    continue;
                }
                if !inter.iter().all(|x| self.byzantine.contains(x)) {
                    continue;
                }
                // Both quora must still hold correct parties to diverge.
                if q1.len() <= inter.len() || q2.len() <= inter.len() {
                    continue;
                }
                return Some(Witness {
                    q1: q1.clone(),
                    q2: q2.clone(),
                    failed: inter.clone(),
                    byzantine: self.byzantine.clone(),
                });
            }
        }
        None
    }
}

fn subsets_of_size(n: u32, size: usize) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    let mut current = Vec::with_capacity(size);
    fn rec(n: u32, size: usize, start: u32, current: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if current.len() == size {
            out.push(current.clone());
            return;
        }
        for x in start..n {
            if ((n - x) as usize) < size - current.len() {
                break;
            }
            current.push(x);
            rec(n, size, x + 1, current, out);
            current.pop();
        }
    }
    rec(n, size, 0, &mut current, &mut out);
    out
}

/// Exhaustive feasibility check over threshold quorum systems, worst-case
/// over all Byzantine placements unless one is given.
pub fn brute_force_feasibility(
    sys: HybridSystem,
    placement: Option<&[u32]>,
) -> Result<Feasibility, BoundExceeded> {
    if sys.n > BRUTE_FORCE_BOUND {
        return Err(BoundExceeded { n: sys.n, bound: BRUTE_FORCE_BOUND });
    }
    if sys.n == 0 {
        return Ok(Feasibility { feasible: true, witness: None });
    }
    if sys.f >= sys.n {
        // Everyone may fail at once: no quorum of correct parties can ever
        // answer, so the system cannot be live, let alone safe.
        return Ok(Feasibility { feasible: false, witness: None });
    }
    let placements: Vec<Vec<u32>> = match placement {
        Some(p) => vec![p.to_vec()],
        None => subsets_of_size(sys.n, sys.b as usize),
    };
    for byzantine in placements {
        let qs = QuorumSystem::threshold(sys.n, sys.f, byzantine);
        if let Some(w) = qs.find_witness(sys.f) {
            return Ok(Feasibility { feasible: false, witness: Some(w) });
        }
    }
    Ok(Feasibility { feasible: true, witness: None })
}

/// Fast witness construction using contiguous blocks: Q1 the first n−f
/// parties, Q2 the last n−f, Byzantine flags on the overlap.
pub fn contiguous_witness(sys: HybridSystem) -> Option<Witness> {
    let HybridSystem { n, b, f } = sys;
    if f == 0 || f >= n {
        return None;
    }
    let q_size = n - f;
    if 2 * f >= n {
        // Disjoint quora exist; empty intersection is vacuously Byzantine.
        let q1: Vec<u32> = (0..q_size).collect();
        let q2: Vec<u32> = (q_size..2 * q_size).collect();
        return Some(Witness { q1, q2, failed: vec![], byzantine: vec![] });
    }
    let overlap = n - 2 * f; // parties f..n-f-1 shared by both blocks
    if overlap <= f && overlap <= b {
        let q1: Vec<u32> = (0..q_size).collect();
        let q2: Vec<u32> = (f..n).collect();
        let mid: Vec<u32> = (f..n - f).collect();
        return Some(Witness { q1, q2, failed: mid.clone(), byzantine: mid });
    }
    None
}

/// Largest feasible f per (n, b), as CSV.
pub fn region_table(max_n: u32) -> Result<String, BoundExceeded> {
    if max_n > BRUTE_FORCE_BOUND {
        return Err(BoundExceeded { n: max_n, bound: BRUTE_FORCE_BOUND });
    }
    let mut out = String::from("n,b,max_feasible_f\n");
    for n in 0..=max_n {
        for b in 0..=n {
            let max_f = (0..=n)
                .filter(|&f| is_feasible(HybridSystem::new(n, b, f)))
                .max()
                .unwrap_or(0);
            out.push_str(&format!("{n},{b},{max_f}\n"));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn closed_form_spot_checks() {
        assert!(is_feasible(HybridSystem::new(4, 4, 1)));
        assert!(!is_feasible(HybridSystem::new(3, 1, 1)));
        assert!(is_feasible(HybridSystem::new(3, 0, 1)));
        assert!(is_feasible(HybridSystem::new(0, 0, 0)));
    }

    #[test]
    fn brute_force_spot_checks() {
        let r = brute_force_feasibility(HybridSystem::new(4, 4, 1), None).unwrap();
        assert!(r.feasible && r.witness.is_none());

        let r = brute_force_feasibility(HybridSystem::new(3, 3, 1), None).unwrap();
        assert!(!r.feasible);
        let w = r.witness.unwrap();
        assert_eq!(w.failed.len(), 1);
        assert!(w.q1 != w.q2);

        let r = brute_force_feasibility(HybridSystem::new(3, 0, 1), None).unwrap();
        assert!(r.feasible);
    }

    #[test]
    fn given_placement_is_respected() {
        // With the single Byzantine flag on party 0, quora {0,1} and {0,2}
        // diverge; flags elsewhere work symmetrically, so any placement of
        // one flag breaks n=3, f=1.
        let r = brute_force_feasibility(HybridSystem::new(3, 1, 1), Some(&[0])).unwrap();
        assert!(!r.feasible);
        // No flags at all: the intersection always holds a correct party.
        let r = brute_force_feasibility(HybridSystem::new(3, 1, 1), Some(&[])).unwrap();
        assert!(r.feasible);
    }

    #[test]
    fn bound_is_enforced() {
        let err = brute_force_feasibility(HybridSystem::new(13, 0, 1), None).unwrap_err();
        assert_eq!(err, BoundExceeded { n: 13, bound: BRUTE_FORCE_BOUND });
    }

    /// The module's central oracle: closed form == exhaustive search over
    /// every (n, b, f) with n ≤ 9.
    #[test]
    fn closed_form_matches_brute_force_up_to_nine() {
        for n in 0..=9 {
            for b in 0..=n {
                for f in 0..=n {
                    let sys = HybridSystem::new(n, b, f);
                    let brute = brute_force_feasibility(sys, None).unwrap();
                    assert_eq!(
                        is_feasible(sys),
                        brute.feasible,
                        "mismatch at n={n} b={b} f={f}: {:?}",
                        brute.witness
                    );
                }
            }
        }
    }

    /// The contiguous construction finds a witness exactly when exhaustive
    /// search does.
    #[test]
    fn contiguous_witness_matches_exhaustive_search() {
        for n in 1..=9 {
            for b in 0..=n {
                for f in 0..=n {
                    let sys = HybridSystem::new(n, b, f);
                    let brute = brute_force_feasibility(sys, None).unwrap();
                    let fast = contiguous_witness(sys);
                    if f >= n {
                        // Infeasible for liveness reasons; no divergence pair.
                        assert!(fast.is_none());
                        continue;
                    }
                    assert_eq!(fast.is_some(), !brute.feasible, "n={n} b={b} f={f}");
                    if let Some(w) = fast {
                        assert!(w.failed.len() as u32 <= f);
                        assert!(w.failed.iter().all(|x| w.byzantine.contains(x)));
                        assert!(w.byzantine.len() as u32 <= b);
                    }
                }
            }
        }
    }

    #[test]
    fn region_table_rows() {
        let table = region_table(4).unwrap();
        assert!(table.starts_with("n,b,max_feasible_f\n"));
        assert!(table.contains("\n4,0,1\n"));
        assert!(table.contains("\n3,0,1\n"));
        assert!(table.contains("\n2,2,0\n"));
    }

    proptest! {
        /// Feasibility is monotone: more parties, fewer Byzantine-capable
        /// parties, or fewer faults never break a feasible system.
        #[test]
        fn feasibility_is_monotone(n in 0u32..30, b in 0u32..30, f in 0u32..30) {
            let b = b.min(n);
            let sys = HybridSystem::new(n, b, f);
            if is_feasible(sys) {
                prop_assert!(is_feasible(HybridSystem::new(n + 1, b, f)));
                if b > 0 {
                    prop_assert!(is_feasible(HybridSystem::new(n, b - 1, f)));
                }
                if f > 0 {
                    prop_assert!(is_feasible(HybridSystem::new(n, b, f - 1)));
                }
            }
        }
    }
}
