//! Greedy maximum-coverage selection over a fixed candidate list.
//!
//! Elements (ground-truth boxes, proposal centers) are described by the list
//! of candidate chips that cover them. Each round picks the candidate that
//! covers the most still-uncovered elements, first in candidate order on
//! ties, and stops once the best gain drops below `min_gain`.

/// One greedy round.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GreedyStep {
    pub candidate: usize,
    /// Number of previously uncovered elements this pick covered.
    pub gain: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GreedyOutcome {
    pub steps: Vec<GreedyStep>,
    /// Elements that no candidate covers.
    pub uncoverable: Vec<usize>,
    /// Elements left uncovered because the best gain fell below `min_gain`.
    pub left_over: Vec<usize>,
}

impl GreedyOutcome {
    pub fn selected(&self) -> impl Iterator<Item = usize> + '_ {
        self.steps.iter().map(|s| s.candidate)
    }
}

/// `covered_by[e]` lists the candidates (indices `< n_candidates`) covering
/// element `e`. `min_gain` must be at least 1.
pub fn select(covered_by: &[Vec<usize>], n_candidates: usize, min_gain: usize) -> GreedyOutcome {
    let min_gain = min_gain.max(1);
    let mut counts = vec![0usize; n_candidates];
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); n_candidates];
    let mut uncoverable = Vec::new();
    for (e, cands) in covered_by.iter().enumerate() {
        if cands.is_empty() {
            uncoverable.push(e);
        }
        for &c in cands {
            counts[c] += 1;
            members[c].push(e);
        }
    }

    let mut covered = vec![false; covered_by.len()];
    let mut steps = Vec::new();
    loop {
        // first index wins ties
        let mut best = None;
        let mut best_gain = 0;
        for (c, &n) in counts.iter().enumerate() {
            if n > best_gain {
                best_gain = n;
                best = Some(c);
            }
        }
        let Some(pick) = best else { break };
        if best_gain < min_gain {
            break;
        }
        for &e in &members[pick] {
            if !covered[e] {
                covered[e] = true;
                for &c in &covered_by[e] {
                    counts[c] -= 1;
                }
            }
        }
        debug_assert_eq!(counts[pick], 0);
        steps.push(GreedyStep {
            candidate: pick,
            gain: best_gain,
        });
    }

    let left_over = covered
        .iter()
        .enumerate()
        .filter(|&(e, &c)| !c && !covered_by[e].is_empty())
        .map(|(e, _)| e)
        .collect();
    GreedyOutcome {
        steps,
        uncoverable,
        left_over,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn picks_largest_then_breaks_ties_by_order() {
        // candidate 1 covers {0,1,2}; 0 and 2 each cover {3}
        let covered_by = vec![vec![1], vec![1], vec![1, 0], vec![0, 2]];
        let out = select(&covered_by, 3, 1);
        assert_eq!(
            out.steps,
            vec![
                GreedyStep { candidate: 1, gain: 3 },
                GreedyStep { candidate: 0, gain: 1 },
            ]
        );
        assert!(out.uncoverable.is_empty() && out.left_over.is_empty());
    }

    #[test]
    fn threshold_stops_selection() {
        let covered_by = vec![vec![0], vec![0], vec![1]];
        let out = select(&covered_by, 2, 2);
        assert_eq!(out.selected().collect::<Vec<_>>(), vec![0]);
        assert_eq!(out.left_over, vec![2]);
    }

    #[test]
    fn reports_uncoverable() {
        let out = select(&[vec![], vec![0]], 1, 1);
        assert_eq!(out.uncoverable, vec![0]);
        assert_eq!(out.steps.len(), 1);
    }

    #[test]
    fn empty_input() {
        assert_eq!(select(&[], 5, 1), GreedyOutcome::default());
        assert_eq!(select(&[], 0, 1), GreedyOutcome::default());
    }
}
