//! Index arithmetic between bins and subcarriers.
//!
//! A bin index is the digit reversal of a subcarrier index. Under that
//! mapping an aligned, contiguous run of bins lands on an evenly spaced set
//! of subcarriers, so allocating interleaved subcarriers reduces to filling
//! contiguous bins.
//!
//! Digits of a bin index are extracted least-significant first against the
//! radices `p_0, p_1, ..., p_{T-1}`. The reversed digit string is then read
//! back most-significant first, so the digit that had radix `p_0` carries the
//! largest weight `M / p_0` in the subcarrier index.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest supported bit width. Index arithmetic stays well inside `u64`.
pub const MAX_BITS: u32 = 20;

/// Largest supported number of bins.
pub const MAX_BINS: usize = 1 << MAX_BITS;

/// Radix structure of the band.
///
/// `Composite` keeps the radices in the written order `p_{T-1}, ..., p_1, p_0`,
/// so `Composite(vec![2, 2, 3])` is `12 = 2 x 2 x 3` with `p_0 = 3`. Two
/// schemes with the same radices in a different order are different schemes.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RadixScheme {
    PowerOfTwo { m: u32 },
    Composite { radices: Vec<u32> },
}

impl RadixScheme {
    pub fn power_of_two(m: u32) -> Result<Self> {
        if m == 0 || m > MAX_BITS {
            return Err(Error::InvalidScheme(format!(
                "bit width must be in 1..={MAX_BITS}, got {m}"
            )));
        }
        Ok(RadixScheme::PowerOfTwo { m })
    }

    /// Builds a composite scheme from radices written `p_{T-1}, ..., p_0`.
    pub fn composite(radices: Vec<u32>) -> Result<Self> {
        if radices.is_empty() {
            return Err(Error::InvalidScheme("no radices given".into()));
        }
        let mut total: u64 = 1;
        for &p in &radices {
            if p < 2 {
                return Err(Error::InvalidScheme(format!("radix {p} is below 2")));
            }
            total = total.saturating_mul(p as u64);
            if total > MAX_BINS as u64 {
                return Err(Error::InvalidScheme(format!(
                    "product of radices exceeds {MAX_BINS}"
                )));
            }
        }
        Ok(RadixScheme::Composite { radices })
    }

    /// Parses `"m"`-style or `"2,2,3"`-style text. A single integer is never
    /// taken as a radix list; use [`RadixScheme::composite`] for `M = p`.
    pub fn parse_radices(text: &str) -> Result<Self> {
        let radices = text
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<u32>()
                    .map_err(|_| Error::InvalidScheme(format!("bad radix {s:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::composite(radices)
    }

    /// Total number of bins (and subcarriers).
    pub fn bins(&self) -> usize {
        match self {
            RadixScheme::PowerOfTwo { m } => 1usize << m,
            RadixScheme::Composite { radices } => radices.iter().map(|&p| p as usize).product(),
        }
    }

    /// Radices least-significant first: `p_0, p_1, ..., p_{T-1}`.
    pub fn radices_lsf(&self) -> Vec<u32> {
        match self {
            RadixScheme::PowerOfTwo { m } => vec![2; *m as usize],
            RadixScheme::Composite { radices } => radices.iter().rev().copied().collect(),
        }
    }

    /// Number of digits `T`.
    pub fn digits(&self) -> usize {
        match self {
            RadixScheme::PowerOfTwo { m } => *m as usize,
            RadixScheme::Composite { radices } => radices.len(),
        }
    }

    /// The exponent `m` when every radix is 2.
    pub fn bit_width(&self) -> Option<u32> {
        match self {
            RadixScheme::PowerOfTwo { m } => Some(*m),
            RadixScheme::Composite { radices } => {
                radices.iter().all(|&p| p == 2).then_some(radices.len() as u32)
            }
        }
    }

    /// Node sizes of the allocation tree, smallest first: `1, p_0, p_0 p_1, ..., M`.
    pub fn level_sizes(&self) -> Vec<usize> {
        let mut sizes = Vec::with_capacity(self.digits() + 1);
        let mut acc = 1usize;
        sizes.push(acc);
        for p in self.radices_lsf() {
            acc *= p as usize;
            sizes.push(acc);
        }
        sizes
    }

    /// Tree level whose node size is exactly `size`.
    pub fn level_of(&self, size: usize) -> Option<usize> {
        self.level_sizes().iter().position(|&s| s == size)
    }

    pub fn is_allowed(&self, size: usize) -> bool {
        self.level_of(size).is_some()
    }

    /// Inverse of [`digit_reverse`], i.e. the scheme whose reversal maps
    /// subcarriers back to bins.
    pub fn reversed(&self) -> RadixScheme {
        match self {
            RadixScheme::PowerOfTwo { m } => RadixScheme::PowerOfTwo { m: *m },
            RadixScheme::Composite { radices } => RadixScheme::Composite {
                radices: radices.iter().rev().copied().collect(),
            },
        }
    }
}

impl fmt::Display for RadixScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RadixScheme::PowerOfTwo { m } => write!(f, "M=2^{m}"),
            RadixScheme::Composite { radices } => {
                let parts: Vec<String> = radices.iter().map(|p| p.to_string()).collect();
                write!(f, "M={}={}", self.bins(), parts.join("x"))
            }
        }
    }
}

/// A size-`N` run of bins starting at a multiple of `N`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AlignedRange {
    pub start: usize,
    pub size: usize,
}

impl AlignedRange {
    /// Checks alignment and that `size` is a node size of `scheme`.
    pub fn new(start: usize, size: usize, scheme: &RadixScheme) -> Result<Self> {
        let range = AlignedRange { start, size };
        range.validate(scheme)?;
        Ok(range)
    }

    pub fn validate(&self, scheme: &RadixScheme) -> Result<()> {
        let total = scheme.bins();
        if self.size == 0 || !scheme.is_allowed(self.size) {
            return Err(Error::SizeNotAllowed {
                size: self.size,
                scheme: scheme.to_string(),
            });
        }
        if !self.start.is_multiple_of(self.size) || self.start + self.size > total {
            return Err(Error::Misaligned {
                start: self.start,
                size: self.size,
            });
        }
        Ok(())
    }

    pub fn end(&self) -> usize {
        self.start + self.size
    }

    pub fn bins(&self) -> std::ops::Range<usize> {
        self.start..self.end()
    }

    pub fn contains(&self, bin: usize) -> bool {
        self.bins().contains(&bin)
    }

    pub fn overlaps(&self, other: &AlignedRange) -> bool {
        self.start < other.end() && other.start < self.end()
    }
}

impl fmt::Display for AlignedRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.size == 1 {
            write!(f, "[{}]", self.start)
        } else {
            write!(f, "[{}..{}]", self.start, self.end() - 1)
        }
    }
}

/// Reverses the low `m` bits of `k`.
pub fn bit_reverse(k: usize, m: u32) -> Result<usize> {
    if m > MAX_BITS {
        return Err(Error::InvalidScheme(format!("bit width {m} exceeds {MAX_BITS}")));
    }
    if (k as u64) >= (1u64 << m) {
        return Err(Error::IndexOutOfRange { index: k, bins: 1usize << m });
    }
    if m == 0 {
        return Ok(0);
    }
    Ok(((k as u64).reverse_bits() >> (64 - m)) as usize)
}

/// Mixed-radix digit reversal of a bin index.
pub fn digit_reverse(k: usize, scheme: &RadixScheme) -> Result<usize> {
    let total = scheme.bins();
    if k >= total {
        return Err(Error::IndexOutOfRange { index: k, bins: total });
    }
    if let RadixScheme::PowerOfTwo { m } = scheme {
        return bit_reverse(k, *m);
    }
    Ok(reverse_unchecked(k, &scheme.radices_lsf()))
}

/// Maps a subcarrier back to its bin.
pub fn inverse_digit_reverse(s: usize, scheme: &RadixScheme) -> Result<usize> {
    digit_reverse(s, &scheme.reversed())
}

// Peel digits off with p_0, p_1, ... and accumulate them Horner-style, so the
// first digit peeled ends up most significant.
fn reverse_unchecked(mut k: usize, radices_lsf: &[u32]) -> usize {
    let mut out = 0usize;
    for &p in radices_lsf {
        let p = p as usize;
        out = out * p + k % p;
        k /= p;
    }
    out
}

/// The full bin-to-subcarrier permutation.
pub fn permutation(scheme: &RadixScheme) -> Vec<usize> {
    let radices = scheme.radices_lsf();
    (0..scheme.bins()).map(|k| reverse_unchecked(k, &radices)).collect()
}

/// Digits of `k`, most significant first (`d_{T-1} ... d_0`).
pub fn digits_msf(k: usize, scheme: &RadixScheme) -> Vec<u32> {
    let mut k = k;
    let mut digits: Vec<u32> = scheme
        .radices_lsf()
        .iter()
        .map(|&p| {
            let d = (k % p as usize) as u32;
            k /= p as usize;
            d
        })
        .collect();
    digits.reverse();
    digits
}

/// Allowed single-stream sizes `{1, p_0, p_0 p_1, ..., M}`, ascending.
pub fn allowed_sizes(scheme: &RadixScheme) -> Vec<usize> {
    scheme.level_sizes()
}

/// Subcarriers occupied by a range, in bin order.
///
/// The result always has the form `{d + i M/N : i in [N]}` with `d < M/N`.
pub fn range_to_subcarriers(range: &AlignedRange, scheme: &RadixScheme) -> Result<Vec<usize>> {
    range.validate(scheme)?;
    let radices = scheme.radices_lsf();
    Ok(range.bins().map(|k| reverse_unchecked(k, &radices)).collect())
}

/// Frequency shift `d` of the evenly spaced set a range maps onto.
pub fn range_shift(range: &AlignedRange, scheme: &RadixScheme) -> Result<usize> {
    range.validate(scheme)?;
    digit_reverse(range.start, scheme)
}
