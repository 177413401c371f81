//! Time-domain construction of interleaved streams.
//!
//! A block of `N` symbols placed on subcarriers `{d + i M/N}` is, in the time
//! domain, the block repeated `M/N` times, scaled by `N/M` and rotated by
//! `e^{j 2 pi l d / M}`. [`stream_freq_oracle`] builds the same signal the long
//! way (DFT, subcarrier mapping, inverse DFT) and exists to check
//! [`stream_time`].

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rustfft::FftPlanner;

use crate::allocator::Allocation;
use crate::error::{Error, Result};
use crate::mapping::{range_shift, RadixScheme};

/// One block of symbols mapped onto an evenly spaced subcarrier set.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamSpec {
    block: Vec<Complex64>,
    bins: usize,
    shift: usize,
}

impl StreamSpec {
    /// `block.len()` must divide `bins` and `shift < bins / block.len()`.
    pub fn new(block: Vec<Complex64>, bins: usize, shift: usize) -> Result<Self> {
        let n = block.len();
        if n == 0 || !bins.is_multiple_of(n) {
            return Err(Error::InvalidBlock { block: n, bins });
        }
        if shift >= bins / n {
            return Err(Error::InvalidShift {
                shift,
                limit: bins / n,
            });
        }
        Ok(StreamSpec { block, bins, shift })
    }

    pub fn block(&self) -> &[Complex64] {
        &self.block
    }

    pub fn len(&self) -> usize {
        self.block.len()
    }

    pub fn is_empty(&self) -> bool {
        self.block.is_empty()
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn shift(&self) -> usize {
        self.shift
    }

    /// Subcarriers `{d + i M/N}`, ascending.
    pub fn subcarriers(&self) -> Vec<usize> {
        let spacing = self.bins / self.block.len();
        (0..self.block.len()).map(|i| self.shift + i * spacing).collect()
    }
}

/// `x'[l] = (N/M) e^{j 2 pi l d / M} x[l mod N]`.
pub fn stream_time(spec: &StreamSpec) -> Vec<Complex64> {
    let n = spec.block.len();
    let m = spec.bins;
    let scale = n as f64 / m as f64;
    (0..m)
        .map(|l| {
            // Reduce the phase index first to keep the angle small.
            let phase = 2.0 * PI * ((l * spec.shift) % m) as f64 / m as f64;
            Complex64::from_polar(scale, phase) * spec.block[l % n]
        })
        .collect()
}

/// N-point DFT, map coefficient `i` to subcarrier `d + i M/N`, M-point
/// inverse DFT scaled by `1/M`.
pub fn stream_freq_oracle(spec: &StreamSpec) -> Vec<Complex64> {
    let n = spec.block.len();
    let m = spec.bins;
    let mut planner = FftPlanner::<f64>::new();
    let mut coeffs = spec.block.clone();
    planner.plan_fft_forward(n).process(&mut coeffs);
    let mut band = vec![Complex64::new(0.0, 0.0); m];
    for (sc, c) in spec.subcarriers().into_iter().zip(coeffs) {
        band[sc] = c;
    }
    planner.plan_fft_inverse(m).process(&mut band);
    let inv = 1.0 / m as f64;
    band.iter().map(|&v| v * inv).collect()
}

/// Sum of several streams on pairwise disjoint subcarriers.
pub fn multistream_time(specs: &[StreamSpec]) -> Result<Vec<Complex64>> {
    let Some(first) = specs.first() else {
        return Err(Error::InvalidConfig("no streams given".into()));
    };
    let m = first.bins;
    let mut used = vec![false; m];
    for spec in specs {
        if spec.bins != m {
            return Err(Error::InvalidConfig(format!(
                "streams span {} and {} subcarriers",
                m, spec.bins
            )));
        }
        for sc in spec.subcarriers() {
            if std::mem::replace(&mut used[sc], true) {
                return Err(Error::OverlappingStreams(sc));
            }
        }
    }
    let mut total = vec![Complex64::new(0.0, 0.0); m];
    for spec in specs {
        for (acc, v) in total.iter_mut().zip(stream_time(spec)) {
            *acc += v;
        }
    }
    Ok(total)
}

/// One stream spec per granted range, each carrying the matching block.
pub fn specs_for_allocation(
    allocation: &Allocation,
    scheme: &RadixScheme,
    blocks: Vec<Vec<Complex64>>,
) -> Result<Vec<StreamSpec>> {
    if blocks.len() != allocation.ranges.len() {
        return Err(Error::InvalidConfig(format!(
            "{} blocks for {} ranges",
            blocks.len(),
            allocation.ranges.len()
        )));
    }
    allocation
        .ranges
        .iter()
        .zip(blocks)
        .map(|(range, block)| {
            if block.len() != range.size {
                return Err(Error::InvalidBlock {
                    block: block.len(),
                    bins: range.size,
                });
            }
            StreamSpec::new(block, scheme.bins(), range_shift(range, scheme)?)
        })
        .collect()
}

/// Forward M-point DFT of a time signal, unnormalized.
pub fn spectrum(signal: &[Complex64]) -> Vec<Complex64> {
    let mut buf = signal.to_vec();
    FftPlanner::<f64>::new()
        .plan_fft_forward(buf.len())
        .process(&mut buf);
    buf
}

/// Unit-modulus PSK symbols of the given order.
pub fn psk_block<R: Rng + ?Sized>(n: usize, order: u32, rng: &mut R) -> Vec<Complex64> {
    (0..n)
        .map(|_| {
            let k = rng.random_range(0..order.max(1));
            Complex64::from_polar(1.0, 2.0 * PI * k as f64 / order.max(1) as f64)
        })
        .collect()
}

/// Complex Gaussian-ish symbols with independent uniform parts in `[-1, 1)`.
pub fn random_block<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<Complex64> {
    (0..n)
        .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect()
}

pub fn max_abs_diff(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

/// `(max |x| - min |x|) / max |x|`; 0 for a constant envelope.
pub fn envelope_spread(signal: &[Complex64]) -> f64 {
    let (lo, hi) = signal
        .iter()
        .map(|v| v.norm())
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), a| (lo.min(a), hi.max(a)));
    if hi == 0.0 {
        0.0
    } else {
        (hi - lo) / hi
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mapping::AlignedRange;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    // Direct O(N M) evaluation of the DFT route; does not use rustfft.
    fn naive_freq_route(block: &[Complex64], m: usize, d: usize) -> Vec<Complex64> {
        let n = block.len();
        let coeffs: Vec<Complex64> = (0..n)
            .map(|i| {
                (0..n)
                    .map(|t| block[t] * Complex64::from_polar(1.0, -2.0 * PI * (i * t) as f64 / n as f64))
                    .sum()
            })
            .collect();
        (0..m)
            .map(|l| {
                coeffs
                    .iter()
                    .enumerate()
                    .map(|(i, &x)| {
                        let k = d + i * m / n;
                        x * Complex64::from_polar(1.0, 2.0 * PI * (k * l) as f64 / m as f64)
                    })
                    .sum::<Complex64>()
                    / m as f64
            })
            .collect()
    }

    #[test]
    fn zero_shift_is_scaled_repetition() {
        let block = vec![c(1.0, 0.0), c(0.0, 1.0), c(-2.0, 0.5), c(0.25, -1.0)];
        let spec = StreamSpec::new(block.clone(), 16, 0).unwrap();
        let x = stream_time(&spec);
        for (l, v) in x.iter().enumerate() {
            assert!((v - block[l % 4] * 0.25).norm() < 1e-15);
        }
    }

    #[test]
    fn full_band_is_identity() {
        let block = vec![c(1.0, 2.0), c(3.0, -1.0), c(0.0, 0.0), c(-1.0, 1.0)];
        let spec = StreamSpec::new(block.clone(), 4, 0).unwrap();
        assert_eq!(stream_time(&spec), block);
    }

    #[test]
    fn psk_has_constant_modulus() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let spec = StreamSpec::new(psk_block(4, 8, &mut rng), 32, 5).unwrap();
        for v in stream_time(&spec) {
            assert!((v.norm() - 0.125).abs() < 1e-12);
        }
    }

    #[test]
    fn time_route_matches_frequency_route() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let block = random_block(4, &mut rng);
        let spec = StreamSpec::new(block.clone(), 16, 3).unwrap();
        let t = stream_time(&spec);
        assert!(max_abs_diff(&t, &stream_freq_oracle(&spec)) < 1e-9);
        assert!(max_abs_diff(&t, &naive_freq_route(&block, 16, 3)) < 1e-9);
    }

    #[test]
    fn dc_block_gives_constant_signal() {
        let spec = StreamSpec::new(vec![c(1.0, 0.0); 4], 16, 0).unwrap();
        let x = stream_freq_oracle(&spec);
        for v in &x {
            assert!((v - c(0.25, 0.0)).norm() < 1e-12);
        }
        let s = spectrum(&x);
        for (k, v) in s.iter().enumerate() {
            if k == 0 {
                assert!((v - c(4.0, 0.0)).norm() < 1e-9);
            } else {
                assert!(v.norm() < 1e-9);
            }
        }
    }

    #[test]
    fn single_subcarrier_is_pure_tone() {
        let spec = StreamSpec::new(vec![c(1.0, 0.0)], 8, 3).unwrap();
        let x = stream_time(&spec);
        for (l, v) in x.iter().enumerate() {
            let expected = Complex64::from_polar(0.125, 2.0 * PI * 3.0 * l as f64 / 8.0);
            assert!((v - expected).norm() < 1e-12);
        }
        let s = spectrum(&x);
        assert!(s.iter().enumerate().all(|(k, v)| (k == 3) == (v.norm() > 1e-9)));
    }

    #[test]
    fn spec_validation() {
        assert!(matches!(
            StreamSpec::new(vec![c(1.0, 0.0); 3], 16, 0),
            Err(Error::InvalidBlock { .. })
        ));
        assert!(matches!(
            StreamSpec::new(vec![c(1.0, 0.0); 4], 16, 4),
            Err(Error::InvalidShift { shift: 4, limit: 4 })
        ));
        assert!(StreamSpec::new(vec![], 16, 0).is_err());
    }

    #[test]
    fn six_subcarriers_as_four_plus_two() {
        let scheme = RadixScheme::power_of_two(4).unwrap();
        let alloc = Allocation {
            request_id: 1,
            ranges: vec![
                AlignedRange { start: 0, size: 4 },
                AlignedRange { start: 4, size: 2 },
            ],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let blocks = vec![random_block(4, &mut rng), random_block(2, &mut rng)];
        let specs = specs_for_allocation(&alloc, &scheme, blocks).unwrap();
        let sum = multistream_time(&specs).unwrap();
        let mut allocated = alloc.subcarriers(&scheme);
        allocated.sort();
        let s = spectrum(&sum);
        let support: Vec<usize> = (0..16).filter(|&k| s[k].norm() > 1e-9).collect();
        assert_eq!(support, allocated);
        assert_eq!(support.len(), 6);

        let a = stream_time(&specs[0]);
        let b = stream_time(&specs[1]);
        let inner: Complex64 = a.iter().zip(&b).map(|(x, y)| x * y.conj()).sum();
        assert!(inner.norm() < 1e-9);

        let direct: Vec<Complex64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
        assert_eq!(sum, direct);
    }

    #[test]
    fn one_stream_multistream_equals_single() {
        let spec = StreamSpec::new(vec![c(1.0, -1.0); 2], 8, 1).unwrap();
        assert_eq!(multistream_time(std::slice::from_ref(&spec)).unwrap(), stream_time(&spec));
    }

    #[test]
    fn overlapping_streams_rejected() {
        let a = StreamSpec::new(vec![c(1.0, 0.0); 2], 8, 1).unwrap();
        let b = StreamSpec::new(vec![c(1.0, 0.0); 4], 8, 1).unwrap();
        assert!(matches!(
            multistream_time(&[a, b]),
            Err(Error::OverlappingStreams(1))
        ));
    }
}
