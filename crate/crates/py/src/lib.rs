//! Python bindings: `import ifdma`.

use num_complex::Complex64;
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use ifdma_core::allocator::{self, AdmissionOutcome, BatchPolicy, FillPolicy, Request};
use ifdma_core::mapping::{self, AlignedRange};
use ifdma_core::{nonblocking, sim, statespace, waveform, Error};

create_exception!(ifdma, InfeasibleError, PyException);

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Overload { .. } | Error::BatchBlocked { .. } => InfeasibleError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

type Ranges = Vec<(usize, usize)>;

fn ranges(rs: &[AlignedRange]) -> Ranges {
    rs.iter().map(|r| (r.start, r.size)).collect()
}

/// A bin tree: `M = 2^m` or `M = p_{T-1} ... p_0`.
#[pyclass(name = "RadixScheme", eq, frozen, skip_from_py_object)]
#[derive(Clone, PartialEq)]
struct PyScheme(mapping::RadixScheme);

#[pymethods]
impl PyScheme {
    /// `M = 2^m`, `1 <= m <= 20`.
    #[staticmethod]
    fn power_of_two(m: u32) -> PyResult<Self> {
        mapping::RadixScheme::power_of_two(m).map(PyScheme).map_err(py_err)
    }

    /// Radices in written order; `[2, 2, 3]` is `M = 12` with `p_0 = 3`.
    #[staticmethod]
    fn composite(radices: Vec<u32>) -> PyResult<Self> {
        mapping::RadixScheme::composite(radices).map(PyScheme).map_err(py_err)
    }

    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        mapping::RadixScheme::parse_radices(text).map(PyScheme).map_err(py_err)
    }

    #[getter]
    fn bins(&self) -> usize {
        self.0.bins()
    }

    /// Allowed single-stream request sizes, ascending.
    #[getter]
    fn allowed_sizes(&self) -> Vec<usize> {
        mapping::allowed_sizes(&self.0)
    }

    fn __repr__(&self) -> String {
        format!("RadixScheme({})", self.0)
    }
}

#[pyfunction]
fn bit_reverse(k: usize, m: u32) -> PyResult<usize> {
    mapping::bit_reverse(k, m).map_err(py_err)
}

#[pyfunction]
fn digit_reverse(k: usize, scheme: &PyScheme) -> PyResult<usize> {
    mapping::digit_reverse(k, &scheme.0).map_err(py_err)
}

#[pyfunction]
fn inverse_digit_reverse(s: usize, scheme: &PyScheme) -> PyResult<usize> {
    mapping::inverse_digit_reverse(s, &scheme.0).map_err(py_err)
}

/// Subcarrier of every bin, in bin order.
#[pyfunction]
fn permutation(scheme: &PyScheme) -> Vec<usize> {
    mapping::permutation(&scheme.0)
}

#[pyfunction]
fn range_to_subcarriers(start: usize, size: usize, scheme: &PyScheme) -> PyResult<Vec<usize>> {
    let r = AlignedRange::new(start, size, &scheme.0).map_err(py_err)?;
    mapping::range_to_subcarriers(&r, &scheme.0).map_err(py_err)
}

fn fill_policy(name: &str) -> PyResult<FillPolicy> {
    match name {
        "min" | "min-small-change" => Ok(FillPolicy::MinSmallChange),
        "random" => Ok(FillPolicy::Random),
        _ => Err(PyValueError::new_err(format!("unknown fill policy {name:?}"))),
    }
}

fn batch_policy(name: &str) -> PyResult<BatchPolicy> {
    match name {
        "sort-first" => Ok(BatchPolicy::SortFirst),
        "min" | "min-small-change" => Ok(BatchPolicy::MinSmallChange),
        _ => Err(PyValueError::new_err(format!("unknown batch policy {name:?}"))),
    }
}

/// Bin occupancy with asynchronous admit/release.
///
/// `admit` returns `("granted", [(start, size), ...])`, `("overload", [])`
/// or `("fragmentation", [])`.
#[pyclass(name = "BinState")]
struct PyBinState {
    state: allocator::BinState,
    rng: ChaCha8Rng,
}

fn outcome(o: AdmissionOutcome) -> (&'static str, Ranges) {
    match o {
        AdmissionOutcome::Granted(a) => ("granted", ranges(&a.ranges)),
        AdmissionOutcome::BlockedOverload => ("overload", Vec::new()),
        AdmissionOutcome::BlockedFragmentation => ("fragmentation", Vec::new()),
    }
}

#[pymethods]
impl PyBinState {
    /// `dc` is the subcarrier lost to a direct-conversion receiver, if any.
    #[new]
    #[pyo3(signature = (scheme, dc=None, seed=1))]
    fn new(scheme: &PyScheme, dc: Option<usize>, seed: u64) -> PyResult<Self> {
        let state = match dc {
            Some(sc) => allocator::dcr_state(&scheme.0, sc).map_err(py_err)?,
            None => allocator::BinState::new(scheme.0.clone()),
        };
        Ok(PyBinState {
            state,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    #[pyo3(signature = (id, size, policy="min"))]
    fn admit(&mut self, id: u64, size: usize, policy: &str) -> PyResult<(&'static str, Ranges)> {
        let p = fill_policy(policy)?;
        self.state
            .admit(&Request::new(id, size), p, &mut self.rng)
            .map(outcome)
            .map_err(py_err)
    }

    fn admit_multistream(&mut self, id: u64, size: usize) -> PyResult<(&'static str, Ranges)> {
        self.state
            .admit_multistream(&Request::new(id, size))
            .map(outcome)
            .map_err(py_err)
    }

    fn release(&mut self, id: u64) -> PyResult<()> {
        self.state.release(id).map_err(py_err)
    }

    #[getter]
    fn occupied_bins(&self) -> usize {
        self.state.occupied_bins()
    }

    #[getter]
    fn free_bins(&self) -> usize {
        self.state.free_bins()
    }

    /// Maximal free aligned ranges as `(start, size)`.
    fn free_subsets(&self) -> Ranges {
        ranges(&self.state.free_subsets())
    }

    fn subcarriers_of(&self, id: u64) -> PyResult<Vec<usize>> {
        let rs = self
            .state
            .ranges_of(id)
            .ok_or_else(|| py_err(Error::UnknownId(id)))?;
        let mut out = Vec::new();
        for r in rs {
            out.extend(mapping::range_to_subcarriers(r, self.state.scheme()).map_err(py_err)?);
        }
        out.sort_unstable();
        Ok(out)
    }

    fn check_invariants(&self) -> PyResult<()> {
        self.state.check_invariants().map_err(PyValueError::new_err)
    }

    fn __repr__(&self) -> String {
        format!("BinState({})", self.state.h_string())
    }
}

/// Packs a batch of sizes into an empty band; request ids are list
/// positions. Returns `(id, ranges, subcarriers)` in processing order and
/// raises `InfeasibleError` when the batch cannot be granted.
#[pyfunction]
#[pyo3(signature = (scheme, sizes, policy="sort-first"))]
fn allocate_batch(
    scheme: &PyScheme,
    sizes: Vec<usize>,
    policy: &str,
) -> PyResult<Vec<(u64, Ranges, Vec<usize>)>> {
    let reqs: Vec<Request> = sizes
        .iter()
        .enumerate()
        .map(|(i, &s)| Request::new(i as u64, s))
        .collect();
    let allocs = allocator::allocate_batch_sync(&scheme.0, &reqs, batch_policy(policy)?).map_err(py_err)?;
    Ok(allocs
        .into_iter()
        .map(|a| {
            let mut subs = a.subcarriers(&scheme.0);
            subs.sort_unstable();
            (a.request_id, ranges(&a.ranges), subs)
        })
        .collect())
}

#[pyfunction]
fn partition_multistream(n: usize, scheme: &PyScheme) -> PyResult<Vec<usize>> {
    allocator::partition_multistream(n, &scheme.0).map_err(py_err)
}

#[pyfunction]
fn strict_threshold(m: u32) -> u128 {
    nonblocking::strict_threshold(m)
}

fn load(m: u32, sizes: &[usize]) -> PyResult<nonblocking::LoadVector> {
    nonblocking::LoadVector::from_sizes(m, sizes).map_err(py_err)
}

#[pyfunction]
fn full_load_ok(m: u32, sizes: Vec<usize>) -> PyResult<bool> {
    Ok(nonblocking::full_load_ok(&load(m, &sizes)?))
}

#[pyfunction]
fn dcr_load_ok(m: u32, sizes: Vec<usize>) -> PyResult<bool> {
    Ok(nonblocking::dcr_load_ok(&load(m, &sizes)?))
}

#[pyfunction]
fn strict_ok(m: u32, sizes: Vec<usize>) -> PyResult<bool> {
    Ok(nonblocking::strict_ok(&load(m, &sizes)?))
}

#[pyfunction]
fn f_rec(m: u32) -> num_bigint::BigUint {
    statespace::f_rec(m)
}

#[pyfunction]
fn g_rec(m: u32) -> num_bigint::BigUint {
    statespace::g_rec(m)
}

#[pyfunction]
fn count_fine(m: u32) -> PyResult<u64> {
    statespace::count_fine(m).map_err(py_err)
}

#[pyfunction]
fn count_super(m: u32) -> PyResult<u64> {
    statespace::enumerate_super(m).map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (block, bins, shift=0))]
fn stream_time(block: Vec<Complex64>, bins: usize, shift: usize) -> PyResult<Vec<Complex64>> {
    let spec = waveform::StreamSpec::new(block, bins, shift).map_err(py_err)?;
    Ok(waveform::stream_time(&spec))
}

#[pyfunction]
#[pyo3(signature = (block, bins, shift=0))]
fn stream_freq_oracle(block: Vec<Complex64>, bins: usize, shift: usize) -> PyResult<Vec<Complex64>> {
    let spec = waveform::StreamSpec::new(block, bins, shift).map_err(py_err)?;
    Ok(waveform::stream_freq_oracle(&spec))
}

/// Replication means and 95% half-widths.
#[pyclass(name = "SimResult", get_all, frozen)]
struct PySimResult {
    offered_load: f64,
    p_b: f64,
    p_b_ci: f64,
    p_f: f64,
    p_f_ci: f64,
    throughput: f64,
    replications: usize,
}

#[pymethods]
impl PySimResult {
    fn __repr__(&self) -> String {
        format!(
            "SimResult(G={}, P_B={:.4}, P_f={:.4}, S={:.4})",
            self.offered_load, self.p_b, self.p_f, self.throughput
        )
    }
}

#[pyfunction]
#[pyo3(signature = (m, load, policy="min", mix="full", seed=1, sim_time=20000.0, warmup_time=1000.0, replications=10))]
#[allow(clippy::too_many_arguments)]
fn simulate(
    py: Python<'_>,
    m: u32,
    load: f64,
    policy: &str,
    mix: &str,
    seed: u64,
    sim_time: f64,
    warmup_time: f64,
    replications: usize,
) -> PyResult<PySimResult> {
    let policy = match policy {
        "min" => sim::SimPolicy::Min,
        "random" => sim::SimPolicy::Random,
        "ofdma" => sim::SimPolicy::Ofdma,
        "multistream" => sim::SimPolicy::Multistream,
        _ => return Err(PyValueError::new_err(format!("unknown policy {policy:?}"))),
    };
    let mix = match mix {
        "full" => sim::TrafficMix::Full,
        "limited" => sim::TrafficMix::Limited,
        _ => return Err(PyValueError::new_err(format!("unknown mix {mix:?}"))),
    };
    let config = sim::SimConfig {
        traffic: sim::TrafficModel::for_offered_load(m, mix, load).map_err(py_err)?,
        policy,
        seed,
        sim_time,
        warmup_time,
        replications,
    };
    let metrics = py.detach(|| sim::run(&config)).map_err(py_err)?;
    Ok(PySimResult {
        offered_load: metrics.offered_load,
        p_b: metrics.p_b.mean,
        p_b_ci: metrics.p_b.half_width,
        p_f: metrics.p_f.mean,
        p_f_ci: metrics.p_f.half_width,
        throughput: metrics.throughput.mean,
        replications,
    })
}

#[pymodule]
fn ifdma(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("InfeasibleError", m.py().get_type::<InfeasibleError>())?;
    m.add_class::<PyScheme>()?;
    m.add_class::<PyBinState>()?;
    m.add_class::<PySimResult>()?;
    m.add_function(wrap_pyfunction!(bit_reverse, m)?)?;
    m.add_function(wrap_pyfunction!(digit_reverse, m)?)?;
    m.add_function(wrap_pyfunction!(inverse_digit_reverse, m)?)?;
    m.add_function(wrap_pyfunction!(permutation, m)?)?;
    m.add_function(wrap_pyfunction!(range_to_subcarriers, m)?)?;
    m.add_function(wrap_pyfunction!(allocate_batch, m)?)?;
    m.add_function(wrap_pyfunction!(partition_multistream, m)?)?;
    m.add_function(wrap_pyfunction!(strict_threshold, m)?)?;
    m.add_function(wrap_pyfunction!(full_load_ok, m)?)?;
    m.add_function(wrap_pyfunction!(dcr_load_ok, m)?)?;
    m.add_function(wrap_pyfunction!(strict_ok, m)?)?;
    m.add_function(wrap_pyfunction!(f_rec, m)?)?;
    m.add_function(wrap_pyfunction!(g_rec, m)?)?;
    m.add_function(wrap_pyfunction!(count_fine, m)?)?;
    m.add_function(wrap_pyfunction!(count_super, m)?)?;
    m.add_function(wrap_pyfunction!(stream_time, m)?)?;
    m.add_function(wrap_pyfunction!(stream_freq_oracle, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    Ok(())
}
