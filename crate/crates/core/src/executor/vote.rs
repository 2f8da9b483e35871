//! Self-consistency vote over answerable candidates.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::AnswerSet;

/// Where a candidate came from; smaller is better. Compared lexicographically
/// by draft rank, entity permutation index, then schema slot ranks.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Provenance {
    pub draft_rank: usize,
    pub permutation: usize,
    pub slot_ranks: Vec<usize>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VoteMode {
    /// Every answerable candidate votes.
    #[default]
    All,
    /// Only the best answerable candidate of each draft votes.
    PerDraft,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TallyRow<T> {
    pub answer: AnswerSet,
    pub votes: usize,
    pub best: Provenance,
    pub payload: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VoteOutcome<T> {
    /// Rows ordered winner first: votes descending, then best provenance.
    pub tally: Vec<TallyRow<T>>,
}

impl<T> VoteOutcome<T> {
    pub fn winner(&self) -> Option<&TallyRow<T>> {
        self.tally.first()
    }
}

/// Streaming tally. The result does not depend on the order of `cast` calls.
#[derive(Debug, Clone)]
pub struct Voter<T> {
    mode: VoteMode,
    all: BTreeMap<AnswerSet, TallyRow<T>>,
    per_draft: BTreeMap<usize, (Provenance, AnswerSet, T)>,
}

impl<T: Clone> Voter<T> {
    pub fn new(mode: VoteMode) -> Self {
        Voter {
            mode,
            all: BTreeMap::new(),
            per_draft: BTreeMap::new(),
        }
    }

    /// Records one executed candidate. Unanswerable answers are ignored.
    pub fn cast(&mut self, provenance: &Provenance, answer: &AnswerSet, payload: &T) {
        if !answer.is_answerable() {
            return;
        }
        match self.mode {
            VoteMode::All => add(&mut self.all, provenance, answer, payload),
            VoteMode::PerDraft => {
                let slot = self.per_draft.entry(provenance.draft_rank);
                match slot {
                    std::collections::btree_map::Entry::Occupied(mut e) => {
                        if *provenance < e.get().0 {
                            e.insert((provenance.clone(), answer.clone(), payload.clone()));
                        }
                    }
                    std::collections::btree_map::Entry::Vacant(e) => {
                        e.insert((provenance.clone(), answer.clone(), payload.clone()));
                    }
                }
            }
        }
    }

    pub fn finish(mut self) -> VoteOutcome<T> {
        for (provenance, answer, payload) in std::mem::take(&mut self.per_draft).into_values() {
            add(&mut self.all, &provenance, &answer, &payload);
        }
        let mut tally: Vec<TallyRow<T>> = self.all.into_values().collect();
        tally.sort_by(|a, b| b.votes.cmp(&a.votes).then_with(|| a.best.cmp(&b.best)));
        VoteOutcome { tally }
    }
}

fn add<T: Clone>(
    all: &mut BTreeMap<AnswerSet, TallyRow<T>>,
    provenance: &Provenance,
    answer: &AnswerSet,
    payload: &T,
) {
    match all.get_mut(answer) {
        Some(row) => {
            row.votes += 1;
            if *provenance < row.best {
                row.best = provenance.clone();
                row.payload = payload.clone();
            }
        }
        None => {
            all.insert(
                answer.clone(),
                TallyRow {
                    answer: answer.clone(),
                    votes: 1,
                    best: provenance.clone(),
                    payload: payload.clone(),
                },
            );
        }
    }
}

/// One-shot vote over `(provenance, answer, payload)` triples; `None`
/// answers are non-executable candidates.
pub fn vote<T: Clone>(
    ballots: &[(Provenance, Option<AnswerSet>, T)],
    mode: VoteMode,
) -> VoteOutcome<T> {
    let mut voter = Voter::new(mode);
    for (p, a, payload) in ballots {
        if let Some(a) = a {
            voter.cast(p, a, payload);
        }
    }
    voter.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn ans(x: &str) -> Option<AnswerSet> {
        Some(AnswerSet::Entities(BTreeSet::from([x.to_string()])))
    }

    fn prov(draft: usize, perm: usize) -> Provenance {
        Provenance {
            draft_rank: draft,
            permutation: perm,
            slot_ranks: vec![0],
        }
    }

    #[test]
    fn majority_wins() {
        let ballots = vec![
            (prov(0, 0), ans("A"), 0),
            (prov(0, 1), ans("B"), 1),
            (prov(1, 0), ans("A"), 2),
            (prov(2, 0), ans("B"), 3),
            (prov(3, 0), ans("A"), 4),
        ];
        let out = vote(&ballots, VoteMode::All);
        let w = out.winner().unwrap();
        assert_eq!(
            (w.answer.clone(), w.votes, w.payload),
            (ans("A").unwrap(), 3, 0)
        );
    }

    #[test]
    fn tie_goes_to_best_provenance() {
        let ballots = vec![
            (prov(2, 0), ans("B"), "b"),
            (prov(0, 3), ans("A"), "a"),
            (prov(2, 1), ans("B"), "b2"),
            (prov(1, 0), ans("A"), "a2"),
        ];
        let out = vote(&ballots, VoteMode::All);
        assert_eq!(out.winner().unwrap().payload, "a");
    }

    #[test]
    fn unanswerable_never_votes() {
        let empty = Some(AnswerSet::Entities(BTreeSet::new()));
        let ballots = vec![(prov(0, 0), empty, ()), (prov(0, 1), None, ())];
        assert!(vote(&ballots, VoteMode::All).winner().is_none());
        let count0 = vec![(prov(0, 0), Some(AnswerSet::Count(0)), ())];
        assert_eq!(
            vote(&count0, VoteMode::All).winner().unwrap().answer,
            AnswerSet::Count(0)
        );
    }

    #[test]
    fn per_draft_counts_each_draft_once() {
        let ballots = vec![
            (prov(0, 0), ans("A"), ()),
            (prov(0, 1), ans("B"), ()),
            (prov(0, 2), ans("B"), ()),
            (prov(1, 0), ans("A"), ()),
            (prov(2, 1), ans("B"), ()),
        ];
        let all = vote(&ballots, VoteMode::All);
        assert_eq!(all.winner().unwrap().answer, ans("B").unwrap());
        let per = vote(&ballots, VoteMode::PerDraft);
        assert_eq!(per.winner().unwrap().answer, ans("A").unwrap());
        assert_eq!(per.winner().unwrap().votes, 2);
    }
}
