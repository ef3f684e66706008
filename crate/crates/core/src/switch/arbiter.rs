//! Input arbitration rule.

use super::config::ArbiterPolicy;

/// Picks the next input port given per-port queue occupancy and the port
/// served last. Candidates are scanned in round-robin order starting just
/// after `last`; longest-queue mode keeps the first candidate with the
/// greatest occupancy.
pub fn select(occupancy: &[usize], last: usize, policy: ArbiterPolicy) -> Option<usize> {
    let n = occupancy.len();
    let mut best: Option<usize> = None;
    for k in 1..=n {
        let p = (last + k) % n;
        if occupancy[p] == 0 {
            continue;
        }
        match policy {
            ArbiterPolicy::RoundRobin => return Some(p),
            ArbiterPolicy::LongestQueue => {
                if best.is_none_or(|b| occupancy[p] > occupancy[b]) {
                    best = Some(p);
                }
            }
        }
    }
    best
}
