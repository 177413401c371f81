//! Closed-form capacity and nonblocking predicates for `M = 2^m`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mapping::{AlignedRange, RadixScheme};

/// Request counts by size class: `counts[n]` requests of `2^n` subcarriers.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadVector {
    pub m: u32,
    pub counts: BTreeMap<u32, u64>,
}

impl LoadVector {
    pub fn new(m: u32) -> Self {
        LoadVector {
            m,
            counts: BTreeMap::new(),
        }
    }

    pub fn from_counts(m: u32, counts: impl IntoIterator<Item = (u32, u64)>) -> Result<Self> {
        let mut lv = LoadVector::new(m);
        for (n, a) in counts {
            lv.add(n, a)?;
        }
        Ok(lv)
    }

    /// Tallies request sizes, each of which must be a power of two `<= 2^m`.
    pub fn from_sizes(m: u32, sizes: &[usize]) -> Result<Self> {
        let mut lv = LoadVector::new(m);
        for &s in sizes {
            if !s.is_power_of_two() {
                return Err(Error::InvalidRequestSize(s));
            }
            lv.add(s.trailing_zeros(), 1)?;
        }
        Ok(lv)
    }

    pub fn add(&mut self, n: u32, count: u64) -> Result<()> {
        if n > self.m {
            return Err(Error::InvalidRequestSize(1usize << n.min(63)));
        }
        *self.counts.entry(n).or_insert(0) += count;
        Ok(())
    }

    /// `sum a_n 2^n`.
    pub fn total(&self) -> u128 {
        self.counts.iter().map(|(&n, &a)| (a as u128) << n).sum()
    }
}

/// Full loading: `sum a_n 2^n <= 2^m`.
pub fn full_load_ok(lv: &LoadVector) -> bool {
    lv.total() <= 1u128 << lv.m
}

/// Full loading with the DC subcarrier given up: `sum a_n 2^n <= 2^m - 1`.
pub fn dcr_load_ok(lv: &LoadVector) -> bool {
    lv.total() < 1u128 << lv.m
}

/// Load below which single-stream asynchronous admission can never block.
///
/// `2^(m/2+1)` for even `m`, `3 * 2^((m-1)/2)` for odd `m`; both equal
/// `min_n (2^(m-n) + 2^n)`.
pub fn strict_threshold(m: u32) -> u128 {
    if m.is_multiple_of(2) {
        1u128 << (m / 2 + 1)
    } else {
        3u128 << ((m - 1) / 2)
    }
}

/// Strict inequality: a load equal to the threshold admits a blocking state.
pub fn strict_ok(lv: &LoadVector) -> bool {
    lv.total() < strict_threshold(lv.m)
}

/// The request exponent `n` minimizing `2^(m-n) + 2^n` (the smaller on ties).
pub fn minimizing_exponent(m: u32) -> u32 {
    (0..=m)
        .min_by_key(|&n| (1u128 << (m - n)) + (1u128 << n))
        .unwrap()
}

/// A smallest occupancy that blocks a request of `2^n` bins.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorstCase {
    pub m: u32,
    /// Bins held by single-bin requests, one per candidate node.
    pub placements: Vec<usize>,
    pub request_size: usize,
}

impl WorstCase {
    /// Occupied bins plus the new request.
    pub fn total_load(&self) -> usize {
        self.placements.len() + self.request_size
    }

    /// Applies the placements to a fresh state; ids are `0..placements.len()`.
    pub fn build_state(&self) -> Result<crate::allocator::BinState> {
        let scheme = RadixScheme::power_of_two(self.m)?;
        let mut state = crate::allocator::BinState::new(scheme);
        for (id, &bin) in self.placements.iter().enumerate() {
            state.assign(id as u64, &[AlignedRange { start: bin, size: 1 }])?;
        }
        Ok(state)
    }
}

/// One single-bin request at the start of every candidate `2^n` node, plus
/// a new request of `2^n`.
pub fn worst_case_scenario(m: u32, n: u32) -> Result<WorstCase> {
    if n > m {
        return Err(Error::InvalidRequestSize(1usize << n.min(63)));
    }
    RadixScheme::power_of_two(m)?;
    let size = 1usize << n;
    let nodes = 1usize << (m - n);
    Ok(WorstCase {
        m,
        placements: (0..nodes).map(|i| i * size).collect(),
        request_size: size,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::allocator::{AdmissionOutcome, Request};

    #[test]
    fn full_load_examples() {
        let lv = LoadVector::from_counts(3, [(0, 1), (1, 1), (2, 1)]).unwrap();
        assert!(full_load_ok(&lv));
        assert!(full_load_ok(&LoadVector::new(3)));
        let over = LoadVector::from_counts(3, [(3, 1), (0, 1)]).unwrap();
        assert!(!full_load_ok(&over));
    }

    #[test]
    fn dcr_load_examples() {
        let seven = LoadVector::from_sizes(3, &[4, 2, 1]).unwrap();
        assert!(dcr_load_ok(&seven));
        let eight = LoadVector::from_sizes(3, &[8]).unwrap();
        assert!(!dcr_load_ok(&eight));
        assert!(full_load_ok(&eight));
    }

    #[test]
    fn threshold_values() {
        assert_eq!(strict_threshold(10), 64);
        assert_eq!(strict_threshold(1), 3);
        assert_eq!(strict_threshold(5), 12);
    }

    #[test]
    fn threshold_is_direct_minimum() {
        for m in 1..=30u32 {
            let direct = (0..=m)
                .map(|n| (1u128 << (m - n)) + (1u128 << n))
                .min()
                .unwrap();
            assert_eq!(strict_threshold(m), direct, "m={m}");
            let n = minimizing_exponent(m);
            assert_eq!((1u128 << (m - n)) + (1u128 << n), direct);
        }
    }

    #[test]
    fn strictness_at_threshold() {
        // m=2: threshold 4. Two singles plus a pair is exactly 4.
        let at = LoadVector::from_sizes(2, &[1, 1, 2]).unwrap();
        assert!(!strict_ok(&at));
        let below = LoadVector::from_sizes(2, &[1, 2]).unwrap();
        assert!(strict_ok(&below));
    }

    #[test]
    fn worst_case_examples() {
        let wc = worst_case_scenario(2, 1).unwrap();
        assert_eq!(wc.placements, vec![0, 2]);
        assert_eq!(wc.request_size, 2);

        let wc = worst_case_scenario(4, 2).unwrap();
        assert_eq!(wc.placements, vec![0, 4, 8, 12]);
        let mut state = wc.build_state().unwrap();
        let out = state
            .admit_min_small_change(&Request::new(99, wc.request_size))
            .unwrap();
        assert_eq!(out, AdmissionOutcome::BlockedFragmentation);
        assert_eq!(state.occupied_bins(), 4);

        let wc0 = worst_case_scenario(3, 0).unwrap();
        assert_eq!(wc0.placements.len(), 8);
        let mut full = wc0.build_state().unwrap();
        assert_eq!(
            full.admit_min_small_change(&Request::new(99, 1)).unwrap(),
            AdmissionOutcome::BlockedOverload
        );
        assert!(worst_case_scenario(3, 4).is_err());
    }

    #[test]
    fn load_vector_rejects_bad_sizes() {
        assert!(LoadVector::from_sizes(3, &[3]).is_err());
        assert!(LoadVector::from_sizes(3, &[16]).is_err());
    }
}
