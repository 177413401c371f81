//! Bin occupancy and the bin-filling policies.
//!
//! Bins form an implicit tree: a node at level `l` covers `S_l = p_0 ... p_{l-1}`
//! contiguous bins starting at a multiple of `S_l`, and has `p_l` children.
//! Every free bin lies in exactly one *maximal* free node (a free node whose
//! parent is not free). [`BinState`] keeps one bitset of maximal free nodes per
//! level, which is all that admission and release need: granting a node
//! removes its maximal ancestor and exposes the siblings along the path down,
//! and releasing a node merges it upward while all of its siblings are
//! maximal free.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mapping::{inverse_digit_reverse, range_to_subcarriers, AlignedRange, RadixScheme};

/// States at or below this many bins are fully re-validated after every
/// mutation in debug builds.
const DEBUG_CHECK_MAX_BINS: usize = 256;

/// Arrival descriptor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Request {
    pub id: u64,
    pub size: usize,
    pub arrival_time: f64,
    pub holding_time: f64,
}

impl Request {
    /// A synchronous request: arrives at 0 and never leaves on its own.
    pub fn new(id: u64, size: usize) -> Self {
        Request {
            id,
            size,
            arrival_time: 0.0,
            holding_time: f64::INFINITY,
        }
    }
}

/// Bins granted to one request.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Allocation {
    pub request_id: u64,
    pub ranges: Vec<AlignedRange>,
}

impl Allocation {
    pub fn size(&self) -> usize {
        self.ranges.iter().map(|r| r.size).sum()
    }

    /// Subcarrier images of all ranges, in bin order.
    pub fn subcarriers(&self, scheme: &RadixScheme) -> Vec<usize> {
        self.ranges
            .iter()
            .flat_map(|r| range_to_subcarriers(r, scheme).expect("allocated ranges are valid"))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AdmissionOutcome {
    Granted(Allocation),
    /// Fewer free bins than requested.
    BlockedOverload,
    /// Enough free bins, but no free node of the requested size.
    BlockedFragmentation,
}

impl AdmissionOutcome {
    pub fn is_granted(&self) -> bool {
        matches!(self, AdmissionOutcome::Granted(_))
    }

    pub fn allocation(&self) -> Option<&Allocation> {
        match self {
            AdmissionOutcome::Granted(a) => Some(a),
            _ => None,
        }
    }
}

/// Placement rule for single-stream admission.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FillPolicy {
    /// Smallest adequate maximal free node, lowest start on ties, split
    /// keeping the lowest-indexed child.
    MinSmallChange,
    /// Uniform over every free node of exactly the requested size.
    Random,
}

/// How a synchronous batch is packed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BatchPolicy {
    /// Sort by size descending (ties by id) and pack bins left to right.
    SortFirst,
    /// Admit in the given order under [`FillPolicy::MinSmallChange`].
    MinSmallChange,
}

/// Bitset over the node indices of one tree level.
#[derive(Debug, Clone, PartialEq, Eq)]
struct LevelSet {
    words: Vec<u64>,
    count: usize,
}

impl LevelSet {
    fn new(nodes: usize) -> Self {
        LevelSet {
            words: vec![0; nodes.div_ceil(64)],
            count: 0,
        }
    }

    fn contains(&self, i: usize) -> bool {
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    fn insert(&mut self, i: usize) {
        let w = &mut self.words[i / 64];
        let bit = 1u64 << (i % 64);
        debug_assert!(*w & bit == 0, "node {i} already marked");
        *w |= bit;
        self.count += 1;
    }

    fn remove(&mut self, i: usize) {
        let w = &mut self.words[i / 64];
        let bit = 1u64 << (i % 64);
        debug_assert!(*w & bit != 0, "node {i} not marked");
        *w &= !bit;
        self.count -= 1;
    }

    fn first(&self) -> Option<usize> {
        self.words
            .iter()
            .enumerate()
            .find(|(_, &w)| w != 0)
            .map(|(wi, &w)| wi * 64 + w.trailing_zeros() as usize)
    }

    /// The `k`-th member in ascending order.
    fn nth(&self, mut k: usize) -> Option<usize> {
        for (wi, &w) in self.words.iter().enumerate() {
            let ones = w.count_ones() as usize;
            if k < ones {
                let mut w = w;
                for _ in 0..k {
                    w &= w - 1;
                }
                return Some(wi * 64 + w.trailing_zeros() as usize);
            }
            k -= ones;
        }
        None
    }

    fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &w)| {
            let mut w = w;
            std::iter::from_fn(move || {
                if w == 0 {
                    return None;
                }
                let b = w.trailing_zeros() as usize;
                w &= w - 1;
                Some(wi * 64 + b)
            })
        })
    }
}

/// Ids that may not be reused, stored as disjoint half-open intervals.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
struct IdSet {
    spans: BTreeMap<u64, u64>,
}

impl IdSet {
    fn contains(&self, id: u64) -> bool {
        self.spans
            .range(..=id)
            .next_back()
            .is_some_and(|(_, &end)| id < end)
    }

    fn insert(&mut self, id: u64) {
        if self.contains(id) {
            return;
        }
        let mut start = id;
        let mut end = id + 1;
        if let Some((&s, &e)) = self.spans.range(..id).next_back() {
            if e == id {
                start = s;
                self.spans.remove(&s);
            }
        }
        if let Some(e) = self.spans.remove(&end) {
            end = e;
        }
        self.spans.insert(start, end);
    }
}

/// Occupancy of the `M` bins plus the ranges held by each request.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinState {
    scheme: RadixScheme,
    sizes: Vec<usize>,
    radices: Vec<usize>,
    occupancy: Vec<bool>,
    occupied: usize,
    maximal: Vec<LevelSet>,
    groups: BTreeMap<u64, Vec<AlignedRange>>,
    blocked: BTreeSet<usize>,
    retired: IdSet,
}

impl BinState {
    pub fn new(scheme: RadixScheme) -> Self {
        let sizes = scheme.level_sizes();
        let radices: Vec<usize> = scheme.radices_lsf().iter().map(|&p| p as usize).collect();
        let total = scheme.bins();
        let mut maximal: Vec<LevelSet> = sizes.iter().map(|&s| LevelSet::new(total / s)).collect();
        maximal.last_mut().unwrap().insert(0);
        BinState {
            scheme,
            sizes,
            radices,
            occupancy: vec![false; total],
            occupied: 0,
            maximal,
            groups: BTreeMap::new(),
            blocked: BTreeSet::new(),
            retired: IdSet::default(),
        }
    }

    pub fn scheme(&self) -> &RadixScheme {
        &self.scheme
    }

    pub fn bins(&self) -> usize {
        self.occupancy.len()
    }

    pub fn occupied_bins(&self) -> usize {
        self.occupied
    }

    pub fn free_bins(&self) -> usize {
        self.bins() - self.occupied
    }

    pub fn is_occupied(&self, bin: usize) -> bool {
        self.occupancy[bin]
    }

    pub fn occupancy(&self) -> &[bool] {
        &self.occupancy
    }

    pub fn blocked(&self) -> &BTreeSet<usize> {
        &self.blocked
    }

    pub fn groups(&self) -> &BTreeMap<u64, Vec<AlignedRange>> {
        &self.groups
    }

    pub fn ranges_of(&self, id: u64) -> Option<&[AlignedRange]> {
        self.groups.get(&id).map(|v| v.as_slice())
    }

    /// Active requests as `(id, granted size)`.
    pub fn active_requests(&self) -> Vec<(u64, usize)> {
        self.groups
            .iter()
            .map(|(&id, rs)| (id, rs.iter().map(|r| r.size).sum()))
            .collect()
    }

    /// Occupancy written `h_{M-1} ... h_1 h_0`, so bin 0 is the last character.
    pub fn h_string(&self) -> String {
        self.occupancy
            .iter()
            .rev()
            .map(|&b| if b { '1' } else { '0' })
            .collect()
    }

    fn top(&self) -> usize {
        self.sizes.len() - 1
    }

    /// Whether the aligned node is entirely free.
    fn node_is_free(&self, level: usize, index: usize) -> bool {
        let start = index * self.sizes[level];
        (level..=self.top()).any(|l| self.maximal[l].contains(start / self.sizes[l]))
    }

    pub fn is_free(&self, range: &AlignedRange) -> bool {
        match self.scheme.level_of(range.size) {
            Some(level) if range.validate(&self.scheme).is_ok() => {
                self.node_is_free(level, range.start / range.size)
            }
            _ => false,
        }
    }

    fn occupy_node(&mut self, level: usize, index: usize) -> Result<AlignedRange> {
        let start = index * self.sizes[level];
        let size = self.sizes[level];
        let top = self.top();
        let mut lv = level;
        while !self.maximal[lv].contains(start / self.sizes[lv]) {
            if lv == top {
                return Err(Error::RangeOccupied {
                    start,
                    end: start + size,
                });
            }
            lv += 1;
        }
        self.maximal[lv].remove(start / self.sizes[lv]);
        for c in (level..lv).rev() {
            let parent = start / self.sizes[c + 1];
            let on_path = start / self.sizes[c];
            let r = self.radices[c];
            for child in parent * r..(parent + 1) * r {
                if child != on_path {
                    self.maximal[c].insert(child);
                }
            }
        }
        self.occupancy[start..start + size].fill(true);
        self.occupied += size;
        Ok(AlignedRange { start, size })
    }

    fn release_node(&mut self, range: &AlignedRange) {
        let mut level = self.scheme.level_of(range.size).expect("valid range");
        let mut index = range.start / range.size;
        self.occupancy[range.bins()].fill(false);
        self.occupied -= range.size;
        let top = self.top();
        loop {
            if level == top {
                self.maximal[top].insert(0);
                return;
            }
            let r = self.radices[level];
            let parent = index / r;
            let siblings = (parent * r..(parent + 1) * r).filter(|&c| c != index);
            if siblings.clone().all(|c| self.maximal[level].contains(c)) {
                for c in siblings {
                    self.maximal[level].remove(c);
                }
                index = parent;
                level += 1;
            } else {
                self.maximal[level].insert(index);
                return;
            }
        }
    }

    fn debug_check(&self) {
        if cfg!(debug_assertions) && self.bins() <= DEBUG_CHECK_MAX_BINS {
            if let Err(msg) = self.check_invariants() {
                panic!("bin state invariant violated: {msg}");
            }
        }
    }

    /// Recomputes everything from the groups and blocked set and compares.
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        let total = self.bins();
        let mut cover = vec![0u32; total];
        for &b in &self.blocked {
            cover[b] += 1;
        }
        for (id, ranges) in &self.groups {
            if ranges.is_empty() {
                return Err(format!("request {id} holds no ranges"));
            }
            for r in ranges {
                r.validate(&self.scheme)
                    .map_err(|e| format!("request {id}: {e}"))?;
                for b in r.bins() {
                    cover[b] += 1;
                }
            }
        }
        if let Some(b) = cover.iter().position(|&c| c > 1) {
            return Err(format!("bin {b} is covered more than once"));
        }
        for (b, (&c, &occ)) in cover.iter().zip(&self.occupancy).enumerate() {
            if (c == 1) != occ {
                return Err(format!("bin {b}: bitmap says {occ}, groups say {}", c == 1));
            }
        }
        if self.occupancy.iter().filter(|&&o| o).count() != self.occupied {
            return Err("occupied counter out of sync".into());
        }
        let top = self.top();
        for l in 0..=top {
            let size = self.sizes[l];
            for i in 0..total / size {
                let free = !self.occupancy[i * size..(i + 1) * size].iter().any(|&o| o);
                let parent_free = l < top && {
                    let ps = self.sizes[l + 1];
                    let p = i * size / ps;
                    !self.occupancy[p * ps..(p + 1) * ps].iter().any(|&o| o)
                };
                let expected = free && !parent_free;
                if expected != self.maximal[l].contains(i) {
                    return Err(format!(
                        "level {l} node {i}: maximal flag {} but expected {expected}",
                        self.maximal[l].contains(i)
                    ));
                }
            }
        }
        Ok(())
    }

    /// Marks a bin as permanently unavailable.
    pub fn block_bin(&mut self, bin: usize) -> Result<()> {
        if bin >= self.bins() {
            return Err(Error::IndexOutOfRange {
                index: bin,
                bins: self.bins(),
            });
        }
        self.occupy_node(0, bin)?;
        self.blocked.insert(bin);
        self.debug_check();
        Ok(())
    }

    /// Maximal free nodes, sorted by start.
    pub fn free_subsets(&self) -> Vec<AlignedRange> {
        let mut out: Vec<AlignedRange> = self
            .maximal
            .iter()
            .zip(&self.sizes)
            .flat_map(|(set, &size)| {
                set.iter().map(move |i| AlignedRange {
                    start: i * size,
                    size,
                })
            })
            .collect();
        out.sort();
        out
    }

    /// Number of free nodes of exactly `size` bins, counting those inside
    /// larger free nodes.
    pub fn free_nodes_of_size(&self, size: usize) -> usize {
        let Some(level) = self.scheme.level_of(size) else {
            return 0;
        };
        (level..=self.top())
            .map(|l| self.maximal[l].count * (self.sizes[l] / size))
            .sum()
    }

    fn check_new_id(&self, id: u64) -> Result<()> {
        if self.groups.contains_key(&id) || self.retired.contains(id) {
            return Err(Error::DuplicateId(id));
        }
        Ok(())
    }

    fn pick_min_small_change(&self, level: usize) -> Option<usize> {
        (level..=self.top()).find_map(|l| {
            self.maximal[l]
                .first()
                .map(|i| i * self.sizes[l] / self.sizes[level])
        })
    }

    fn pick_random<R: Rng + ?Sized>(&self, level: usize, rng: &mut R) -> Option<usize> {
        let size = self.sizes[level];
        let total = self.free_nodes_of_size(size);
        if total == 0 {
            return None;
        }
        let mut r = rng.random_range(0..total);
        for l in level..=self.top() {
            let per = self.sizes[l] / size;
            let weight = self.maximal[l].count * per;
            if r < weight {
                let node = self.maximal[l].nth(r / per)?;
                return Some(node * per + r % per);
            }
            r -= weight;
        }
        None
    }

    /// Single-stream admission.
    ///
    /// Fails only if the request size is not a node size of the scheme or the
    /// id is taken; blocking is reported through the outcome.
    pub fn admit<R: Rng + ?Sized>(
        &mut self,
        request: &Request,
        policy: FillPolicy,
        rng: &mut R,
    ) -> Result<AdmissionOutcome> {
        match policy {
            FillPolicy::MinSmallChange => {
                self.admit_with(request, |s, level| s.pick_min_small_change(level))
            }
            FillPolicy::Random => self.admit_with(request, |s, level| s.pick_random(level, rng)),
        }
    }

    /// Single-stream admission under min-small-change; needs no randomness.
    pub fn admit_min_small_change(&mut self, request: &Request) -> Result<AdmissionOutcome> {
        self.admit_with(request, |s, level| s.pick_min_small_change(level))
    }

    fn admit_with(
        &mut self,
        request: &Request,
        pick: impl FnOnce(&Self, usize) -> Option<usize>,
    ) -> Result<AdmissionOutcome> {
        let level = self
            .scheme
            .level_of(request.size)
            .ok_or_else(|| Error::SizeNotAllowed {
                size: request.size,
                scheme: self.scheme.to_string(),
            })?;
        self.check_new_id(request.id)?;
        if self.free_bins() < request.size {
            return Ok(AdmissionOutcome::BlockedOverload);
        }
        let Some(index) = pick(self, level) else {
            return Ok(AdmissionOutcome::BlockedFragmentation);
        };
        let range = self.occupy_node(level, index)?;
        self.groups.insert(request.id, vec![range]);
        self.debug_check();
        Ok(AdmissionOutcome::Granted(Allocation {
            request_id: request.id,
            ranges: vec![range],
        }))
    }

    /// Multi-stream admission for any size `1..=M`.
    ///
    /// Repeatedly takes the largest maximal free node that fits the remaining
    /// need; when every free node is larger, carves the largest node size
    /// that fits out of the smallest free node. Never blocks on fragmentation.
    pub fn admit_multistream(&mut self, request: &Request) -> Result<AdmissionOutcome> {
        if request.size == 0 || request.size > self.bins() {
            return Err(Error::InvalidRequestSize(request.size));
        }
        self.check_new_id(request.id)?;
        if self.free_bins() < request.size {
            return Ok(AdmissionOutcome::BlockedOverload);
        }
        let mut remaining = request.size;
        let mut ranges = Vec::new();
        while remaining > 0 {
            // sizes[0] == 1, so a fitting level always exists.
            let fit = self.sizes.iter().rposition(|&s| s <= remaining).unwrap();
            let whole = (0..=fit)
                .rev()
                .find_map(|l| self.maximal[l].first().map(|i| (l, i)));
            let (level, index) = match whole {
                Some(node) => node,
                None => {
                    let index = self
                        .pick_min_small_change(fit)
                        .expect("free bins cover the remaining need");
                    (fit, index)
                }
            };
            let range = self.occupy_node(level, index)?;
            remaining -= range.size;
            ranges.push(range);
        }
        self.groups.insert(request.id, ranges.clone());
        self.debug_check();
        Ok(AdmissionOutcome::Granted(Allocation {
            request_id: request.id,
            ranges,
        }))
    }

    /// Grants specific ranges to a request, all or nothing.
    pub fn assign(&mut self, id: u64, ranges: &[AlignedRange]) -> Result<Allocation> {
        self.check_new_id(id)?;
        if ranges.is_empty() {
            return Err(Error::InvalidRequestSize(0));
        }
        for (i, r) in ranges.iter().enumerate() {
            r.validate(&self.scheme)?;
            if !self.is_free(r) || ranges[..i].iter().any(|o| o.overlaps(r)) {
                return Err(Error::RangeOccupied {
                    start: r.start,
                    end: r.end(),
                });
            }
        }
        for r in ranges {
            let level = self.scheme.level_of(r.size).unwrap();
            self.occupy_node(level, r.start / r.size)?;
        }
        self.groups.insert(id, ranges.to_vec());
        self.debug_check();
        Ok(Allocation {
            request_id: id,
            ranges: ranges.to_vec(),
        })
    }

    /// Frees every range held by `id`. The id may not be used again.
    pub fn release(&mut self, id: u64) -> Result<()> {
        let ranges = self.groups.remove(&id).ok_or(Error::UnknownId(id))?;
        for r in &ranges {
            self.release_node(r);
        }
        self.retired.insert(id);
        self.debug_check();
        Ok(())
    }

    /// Grants a synchronous batch, all or nothing.
    ///
    /// Allocations come back in processing order (sorted order for
    /// [`BatchPolicy::SortFirst`], input order otherwise).
    pub fn allocate_batch_sync(
        &mut self,
        requests: &[Request],
        policy: BatchPolicy,
    ) -> Result<Vec<Allocation>> {
        for r in requests {
            if !self.scheme.is_allowed(r.size) {
                return Err(Error::SizeNotAllowed {
                    size: r.size,
                    scheme: self.scheme.to_string(),
                });
            }
        }
        let mut ids = BTreeSet::new();
        for r in requests {
            if !ids.insert(r.id) {
                return Err(Error::DuplicateId(r.id));
            }
        }
        let requested: usize = requests.iter().map(|r| r.size).sum();
        if requested > self.free_bins() {
            return Err(Error::Overload {
                requested,
                available: self.free_bins(),
            });
        }
        let mut work = self.clone();
        let mut out = Vec::with_capacity(requests.len());
        match policy {
            BatchPolicy::SortFirst => {
                let mut order: Vec<&Request> = requests.iter().collect();
                order.sort_by(|a, b| b.size.cmp(&a.size).then(a.id.cmp(&b.id)));
                let mut cursor = 0;
                for r in order {
                    let range = AlignedRange {
                        start: cursor,
                        size: r.size,
                    };
                    if range.validate(&work.scheme).is_err() || !work.is_free(&range) {
                        return Err(Error::BatchBlocked {
                            id: r.id,
                            size: r.size,
                        });
                    }
                    out.push(work.assign(r.id, &[range])?);
                    cursor += r.size;
                }
            }
            BatchPolicy::MinSmallChange => {
                for r in requests {
                    match work.admit_min_small_change(r)? {
                        AdmissionOutcome::Granted(a) => out.push(a),
                        _ => {
                            return Err(Error::BatchBlocked {
                                id: r.id,
                                size: r.size,
                            })
                        }
                    }
                }
            }
        }
        *self = work;
        Ok(out)
    }

    /// Re-packs every active request plus `new` from scratch, keeping the
    /// blocked bins. This is the rearrangement that makes the asynchronous
    /// system rearrangeably nonblocking.
    pub fn rearranged(
        &self,
        new: &Request,
        policy: BatchPolicy,
    ) -> Result<(BinState, Vec<Allocation>)> {
        let mut fresh = BinState::new(self.scheme.clone());
        for &b in &self.blocked {
            fresh.block_bin(b)?;
        }
        fresh.retired = self.retired.clone();
        let mut batch: Vec<Request> = self
            .active_requests()
            .into_iter()
            .map(|(id, size)| Request::new(id, size))
            .collect();
        batch.push(*new);
        let allocations = fresh.allocate_batch_sync(&batch, policy)?;
        Ok((fresh, allocations))
    }
}

impl fmt::Display for BinState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.h_string())
    }
}

/// Packs a batch into a fresh state.
pub fn allocate_batch_sync(
    scheme: &RadixScheme,
    requests: &[Request],
    policy: BatchPolicy,
) -> Result<Vec<Allocation>> {
    BinState::new(scheme.clone()).allocate_batch_sync(requests, policy)
}

/// Fewest allowed stream sizes summing to `n`, largest first.
///
/// Greedy is optimal because each allowed size divides the next.
pub fn partition_multistream(n: usize, scheme: &RadixScheme) -> Result<Vec<usize>> {
    if n == 0 || n > scheme.bins() {
        return Err(Error::InvalidRequestSize(n));
    }
    let sizes = scheme.level_sizes();
    let mut remaining = n;
    let mut parts = Vec::new();
    for &s in sizes.iter().rev() {
        while remaining >= s {
            parts.push(s);
            remaining -= s;
        }
    }
    Ok(parts)
}

/// Fresh state with the bin behind the DC subcarrier pre-blocked.
pub fn dcr_state(scheme: &RadixScheme, dc_subcarrier: usize) -> Result<BinState> {
    let bin = inverse_digit_reverse(dc_subcarrier, scheme)?;
    let mut state = BinState::new(scheme.clone());
    state.block_bin(bin)?;
    Ok(state)
}
