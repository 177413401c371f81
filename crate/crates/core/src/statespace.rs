//! Counting Markov-chain states of the asynchronous system for `M = 2^m`.
//!
//! A state is a binary tree over the bin hierarchy: a node is free, held by
//! one request, or split into two halves. Splitting a node into two free
//! halves is not a distinct state (it is the free node itself). Fine states
//! are trees; super states are trees up to swapping the two children of any
//! node, which preserves every blocking probability.

use std::collections::{BTreeSet, HashSet, VecDeque};
use std::fmt;
use std::rc::Rc;

use num_bigint::BigUint;

use crate::allocator::{AdmissionOutcome, BinState, FillPolicy};
use crate::error::{Error, Result};
use crate::mapping::{AlignedRange, RadixScheme};

/// Enumeration depth limit (`f(4) = 458,330` trees).
pub const ENUMERATION_LIMIT: u32 = 4;

/// BFS depth limit for [`reachable_states`].
pub const REACHABILITY_LIMIT: u32 = 3;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StateTree {
    Free,
    Occupied,
    Split(Rc<StateTree>, Rc<StateTree>),
}

impl StateTree {
    /// Prefix encoding: `F`, `O`, or `(` left right `)`.
    pub fn encode(&self) -> String {
        let mut out = String::new();
        self.encode_into(&mut out);
        out
    }

    fn encode_into(&self, out: &mut String) {
        match self {
            StateTree::Free => out.push('F'),
            StateTree::Occupied => out.push('O'),
            StateTree::Split(l, r) => {
                out.push('(');
                l.encode_into(out);
                r.encode_into(out);
                out.push(')');
            }
        }
    }

    /// Representative of the swap class: children ordered by encoding.
    pub fn canonical(&self) -> StateTree {
        match self {
            StateTree::Split(l, r) => {
                let (cl, cr) = (l.canonical(), r.canonical());
                if cl.encode() <= cr.encode() {
                    StateTree::Split(Rc::new(cl), Rc::new(cr))
                } else {
                    StateTree::Split(Rc::new(cr), Rc::new(cl))
                }
            }
            leaf => leaf.clone(),
        }
    }

    pub fn depth(&self) -> u32 {
        match self {
            StateTree::Split(l, r) => 1 + l.depth().max(r.depth()),
            _ => 0,
        }
    }

    /// No split node has two free children.
    pub fn is_valid(&self) -> bool {
        match self {
            StateTree::Split(l, r) => {
                !(**l == StateTree::Free && **r == StateTree::Free) && l.is_valid() && r.is_valid()
            }
            _ => true,
        }
    }

    /// Occupied nodes as bin ranges, for a tree whose root covers `bins` bins.
    pub fn occupied_ranges(&self, bins: usize) -> Vec<AlignedRange> {
        let mut out = Vec::new();
        self.collect(0, bins, &mut out);
        out
    }

    fn collect(&self, start: usize, size: usize, out: &mut Vec<AlignedRange>) {
        match self {
            StateTree::Free => {}
            StateTree::Occupied => out.push(AlignedRange { start, size }),
            StateTree::Split(l, r) => {
                l.collect(start, size / 2, out);
                r.collect(start + size / 2, size / 2, out);
            }
        }
    }

    /// Tree of a power-of-two state. Each granted range and each blocked bin
    /// is one occupied node.
    pub fn from_state(state: &BinState) -> Result<StateTree> {
        if state.scheme().bit_width().is_none() {
            return Err(Error::InvalidScheme(
                "state trees need a power-of-two scheme".into(),
            ));
        }
        let mut held: HashSet<AlignedRange> = state.groups().values().flatten().copied().collect();
        held.extend(state.blocked().iter().map(|&b| AlignedRange { start: b, size: 1 }));
        Ok(Self::from_ranges(&held, 0, state.bins(), state.occupancy()))
    }

    fn from_ranges(
        held: &HashSet<AlignedRange>,
        start: usize,
        size: usize,
        occupancy: &[bool],
    ) -> StateTree {
        if occupancy[start..start + size].iter().all(|&o| !o) {
            StateTree::Free
        } else if held.contains(&AlignedRange { start, size }) {
            StateTree::Occupied
        } else {
            let half = size / 2;
            StateTree::Split(
                Rc::new(Self::from_ranges(held, start, half, occupancy)),
                Rc::new(Self::from_ranges(held, start + half, half, occupancy)),
            )
        }
    }
}

impl fmt::Display for StateTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.encode())
    }
}

/// `f(0) = 2`, `f(m) = f(m-1)^2 + 1`.
pub fn f_rec(m: u32) -> BigUint {
    let mut f = BigUint::from(2u32);
    for _ in 0..m {
        f = &f * &f + 1u32;
    }
    f
}

/// `g(0) = 2`, `g(m) = (g(m-1)^2 + g(m-1)) / 2 + 1`, giving `g(1) = 4`.
pub fn g_rec(m: u32) -> BigUint {
    let mut g = BigUint::from(2u32);
    for _ in 0..m {
        g = (&g * &g + &g) / 2u32 + 1u32;
    }
    g
}

fn check_limit(m: u32, limit: u32) -> Result<()> {
    if m > limit {
        return Err(Error::EnumerationTooLarge { m, limit });
    }
    Ok(())
}

/// Every valid tree of depth at most `m`.
pub fn enumerate_fine(m: u32) -> Result<Vec<Rc<StateTree>>> {
    check_limit(m, ENUMERATION_LIMIT)?;
    let free = Rc::new(StateTree::Free);
    let mut level = vec![free.clone(), Rc::new(StateTree::Occupied)];
    for _ in 0..m {
        let mut next = Vec::with_capacity(level.len() * level.len() + 1);
        next.push(free.clone());
        next.push(Rc::new(StateTree::Occupied));
        for l in &level {
            for r in &level {
                if **l == StateTree::Free && **r == StateTree::Free {
                    continue;
                }
                next.push(Rc::new(StateTree::Split(l.clone(), r.clone())));
            }
        }
        level = next;
    }
    Ok(level)
}

/// Number of fine states.
pub fn count_fine(m: u32) -> Result<u64> {
    Ok(enumerate_fine(m)?.len() as u64)
}

/// Number of super states: distinct canonical forms of the fine states.
pub fn enumerate_super(m: u32) -> Result<u64> {
    let fine = enumerate_fine(m)?;
    let classes: HashSet<String> = fine.iter().map(|t| t.canonical().encode()).collect();
    Ok(classes.len() as u64)
}

/// Outcome of exploring the chain from the empty state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reachability {
    /// States reachable through arrivals and departures.
    pub total: usize,
    /// States reachable through arrivals alone.
    pub via_arrivals: usize,
    /// `total - via_arrivals`: states entered only after some departure.
    pub departure_only: usize,
    /// Directed transitions between distinct reachable states.
    pub edges: usize,
    /// Transitions whose reverse transition does not exist.
    pub one_way_edges: usize,
}

type Blocks = Vec<AlignedRange>;

fn state_of(scheme: &RadixScheme, blocks: &Blocks) -> BinState {
    let mut s = BinState::new(scheme.clone());
    for (id, r) in blocks.iter().enumerate() {
        s.assign(id as u64, &[*r]).expect("blocks are disjoint");
    }
    s
}

fn arrivals(scheme: &RadixScheme, blocks: &Blocks, policy: FillPolicy) -> Vec<Blocks> {
    let state = state_of(scheme, blocks);
    let new_id = blocks.len() as u64;
    let mut out = Vec::new();
    for size in scheme.level_sizes() {
        let placed: Vec<AlignedRange> = match policy {
            FillPolicy::MinSmallChange => {
                let mut s = state.clone();
                match s.admit_min_small_change(&crate::allocator::Request::new(new_id, size)) {
                    Ok(AdmissionOutcome::Granted(a)) => a.ranges,
                    _ => Vec::new(),
                }
            }
            FillPolicy::Random => (0..scheme.bins() / size)
                .map(|i| AlignedRange { start: i * size, size })
                .filter(|r| state.is_free(r))
                .collect(),
        };
        for r in placed {
            let mut next = blocks.clone();
            next.push(r);
            next.sort();
            out.push(next);
        }
    }
    out
}

fn departures(blocks: &Blocks) -> Vec<Blocks> {
    (0..blocks.len())
        .map(|i| {
            let mut next = blocks.clone();
            next.remove(i);
            next
        })
        .collect()
}

fn explore(
    scheme: &RadixScheme,
    policy: FillPolicy,
    with_departures: bool,
) -> (BTreeSet<Blocks>, BTreeSet<(Blocks, Blocks)>) {
    let mut seen = BTreeSet::new();
    let mut edges = BTreeSet::new();
    let mut queue = VecDeque::new();
    seen.insert(Vec::new());
    queue.push_back(Vec::new());
    while let Some(cur) = queue.pop_front() {
        let mut next = arrivals(scheme, &cur, policy);
        if with_departures {
            next.extend(departures(&cur));
        }
        for n in next {
            edges.insert((cur.clone(), n.clone()));
            if seen.insert(n.clone()) {
                queue.push_back(n);
            }
        }
    }
    (seen, edges)
}

/// Breadth-first search over admit/release transitions from the empty state.
pub fn reachable_states(m: u32, policy: FillPolicy) -> Result<Reachability> {
    check_limit(m, REACHABILITY_LIMIT)?;
    if m == 0 {
        // One bin: empty and full, linked both ways.
        return Ok(Reachability {
            total: 2,
            via_arrivals: 2,
            departure_only: 0,
            edges: 2,
            one_way_edges: 0,
        });
    }
    let scheme = RadixScheme::power_of_two(m)?;
    let (all, edges) = explore(&scheme, policy, true);
    let (forward, _) = explore(&scheme, policy, false);
    let one_way = edges
        .iter()
        .filter(|(a, b)| !edges.contains(&(b.clone(), a.clone())))
        .count();
    Ok(Reachability {
        total: all.len(),
        via_arrivals: forward.len(),
        departure_only: all.len() - forward.len(),
        edges: edges.len(),
        one_way_edges: one_way,
    })
}
