//! Probabilistic bisimilarity by signature refinement.
//!
//! The signature of a state is the set of `(label, block masses)` pairs of
//! its transitions with respect to the current partition. Blocks are split
//! by signature until nothing changes; the result is the coarsest
//! bisimulation.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use num_traits::Zero;

use crate::automaton::ProbAutomaton;
use crate::dist::Distribution;
use crate::label::ActionLabel;
use crate::rational::Rational;

/// A partition of `0..n`. Blocks are numbered by their smallest member.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Partition {
    block_of: Vec<usize>,
    blocks: Vec<Vec<usize>>,
}

impl Partition {
    /// Builds a partition from any block labelling, renumbering blocks in
    /// order of their smallest state.
    pub fn from_labels<K: Eq + std::hash::Hash>(labels: &[K]) -> Self {
        let mut ids: HashMap<&K, usize> = HashMap::new();
        let mut block_of = Vec::with_capacity(labels.len());
        let mut blocks: Vec<Vec<usize>> = Vec::new();
        for (s, k) in labels.iter().enumerate() {
            let next = ids.len();
            let b = *ids.entry(k).or_insert(next);
            if b == blocks.len() {
                blocks.push(Vec::new());
            }
            blocks[b].push(s);
            block_of.push(b);
        }
        Self { block_of, blocks }
    }

    pub fn discrete(n: usize) -> Self {
        Self::from_labels(&(0..n).collect::<Vec<_>>())
    }

    pub fn single(n: usize) -> Self {
        Self::from_labels(&vec![0u8; n])
    }

    pub fn from_blocks(n: usize, blocks: &[Vec<usize>]) -> Option<Self> {
        let mut labels = vec![usize::MAX; n];
        for (b, members) in blocks.iter().enumerate() {
            for &s in members {
                if s >= n || labels[s] != usize::MAX {
                    return None;
                }
                labels[s] = b;
            }
        }
        if labels.contains(&usize::MAX) || blocks.iter().any(Vec::is_empty) {
            return None;
        }
        Some(Self::from_labels(&labels))
    }

    pub fn block_of(&self, state: usize) -> usize {
        self.block_of[state]
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn num_states(&self) -> usize {
        self.block_of.len()
    }

    pub fn same_block(&self, s: usize, t: usize) -> bool {
        self.block_of[s] == self.block_of[t]
    }

    /// Every block of `self` lies within a block of `coarser`.
    pub fn refines(&self, coarser: &Partition) -> bool {
        self.blocks.iter().all(|b| b.iter().all(|&s| coarser.same_block(s, b[0])))
    }

    /// Per-block masses of a distribution, as a sorted sparse vector.
    pub fn block_masses(&self, dist: &Distribution<usize>) -> Vec<(usize, Rational)> {
        let mut masses: BTreeMap<usize, Rational> = BTreeMap::new();
        for (s, m) in dist.iter() {
            *masses.entry(self.block_of[*s]).or_insert_with(Rational::zero) += m;
        }
        masses.into_iter().collect()
    }
}

/// `μ ≡_R ν`: equal mass on every block.
pub fn lift_equiv(partition: &Partition, mu: &Distribution<usize>, nu: &Distribution<usize>) -> bool {
    partition.block_masses(mu) == partition.block_masses(nu)
}

type Signature = BTreeSet<(usize, Vec<(usize, Rational)>)>;

fn signature(a: &ProbAutomaton, labels: &BTreeMap<&ActionLabel, usize>, p: &Partition, s: usize) -> Signature {
    a.transitions(s).iter().map(|t| (labels[&t.label], p.block_masses(&t.target))).collect()
}

/// The sequence of partitions produced by signature refinement, starting
/// from the single-block partition and ending at the fixpoint.
pub fn refinement_sequence(a: &ProbAutomaton) -> Vec<Partition> {
    let labels: BTreeMap<&ActionLabel, usize> =
        a.all_transitions().iter().flatten().map(|t| &t.label).collect::<BTreeSet<_>>().into_iter().zip(0..).collect();
    let n = a.num_states();
    let mut current = Partition::single(n);
    let mut seq = vec![current.clone()];
    loop {
        let keys: Vec<(usize, Signature)> =
            (0..n).map(|s| (current.block_of(s), signature(a, &labels, &current, s))).collect();
        let next = Partition::from_labels(&keys);
        if next.num_blocks() == current.num_blocks() {
            return seq;
        }
        current = next;
        seq.push(current.clone());
    }
}

/// Coarsest probabilistic bisimulation on the states of `a`.
pub fn bisimilarity(a: &ProbAutomaton) -> Partition {
    refinement_sequence(a).pop().expect("sequence is never empty")
}

/// Bisimilarity on the disjoint union of two automata. States of `b` are
/// shifted by `a.num_states()` in the returned partition.
pub fn bisimilarity_between(a: &ProbAutomaton, b: &ProbAutomaton) -> Partition {
    bisimilarity(&a.disjoint_union(b))
}

/// Checks the transfer condition directly on every pair within every block.
pub fn is_bisimulation(a: &ProbAutomaton, p: &Partition) -> bool {
    if p.num_states() != a.num_states() {
        return false;
    }
    p.blocks().iter().all(|block| {
        block.iter().all(|&s| {
            block.iter().all(|&t| {
                a.transitions(s).iter().all(|ts| {
                    a.transitions(t).iter().any(|tt| tt.label == ts.label && lift_equiv(p, &ts.target, &tt.target))
                })
            })
        })
    })
}
