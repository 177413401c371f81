//! Discrete-event simulation of asynchronous request traffic.
//!
//! Requests of `2^n` subcarriers arrive as independent Poisson processes with
//! rate `lambda / 2^n`, hold their bins for an exponential time and leave.
//! Blocked requests are lost. A blocked request counts as blocked by
//! fragmentation when at least `2^n` bins were free at the time, i.e. the
//! occupied count was at most `2^m - 2^n`.
//!
//! Every replication is an independent event loop with its own random
//! substreams (one per size class, one for holding times, one for the random
//! policy), so two policies run with the same seed see the same arrivals.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::allocator::{AdmissionOutcome, BinState, FillPolicy, Request};
use crate::error::{Error, Result};
use crate::mapping::RadixScheme;

/// Largest system exponent the simulator accepts.
pub const MAX_SIM_BITS: u32 = 16;

const HOLDING_LANE: u64 = 0xff00;
const POLICY_LANE: u64 = 0xff01;

/// Two-sided 95% normal quantile.
const Z95: f64 = 1.959_963_984_540_054;

/// Set of request size classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrafficMix {
    /// `n = 0, 1, ..., m`.
    Full,
    /// `n = 0, 1, ..., floor(m/2)`.
    Limited,
}

impl TrafficMix {
    pub fn classes(self, m: u32) -> Vec<u32> {
        match self {
            TrafficMix::Full => (0..=m).collect(),
            TrafficMix::Limited => (0..=m / 2).collect(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TrafficMix::Full => "full",
            TrafficMix::Limited => "limited",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrafficModel {
    pub m: u32,
    /// Base rate; class `n` arrives at `lambda / 2^n`.
    pub lambda: f64,
    pub classes: Vec<u32>,
    pub mean_holding: f64,
}

impl TrafficModel {
    pub fn new(m: u32, lambda: f64, classes: Vec<u32>, mean_holding: f64) -> Result<Self> {
        let t = TrafficModel {
            m,
            lambda,
            classes,
            mean_holding,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn with_mix(m: u32, mix: TrafficMix, lambda: f64) -> Result<Self> {
        Self::new(m, lambda, mix.classes(m), 1.0)
    }

    /// Chooses `lambda` so that [`offered_load`] equals `g`.
    pub fn for_offered_load(m: u32, mix: TrafficMix, g: f64) -> Result<Self> {
        let classes = mix.classes(m);
        let lambda = g * (1u64 << m) as f64 / classes.len() as f64;
        Self::new(m, lambda, classes, 1.0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.m > MAX_SIM_BITS {
            return Err(Error::InvalidConfig(format!(
                "m must be in 1..={MAX_SIM_BITS}, got {}",
                self.m
            )));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidConfig(format!("bad arrival rate {}", self.lambda)));
        }
        if !(self.mean_holding > 0.0 && self.mean_holding.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "bad mean holding time {}",
                self.mean_holding
            )));
        }
        if self.classes.is_empty() || self.classes.iter().any(|&n| n > self.m) {
            return Err(Error::InvalidConfig(format!(
                "size classes {:?} must be a non-empty subset of 0..={}",
                self.classes, self.m
            )));
        }
        let mut sorted = self.classes.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != self.classes.len() {
            return Err(Error::InvalidConfig("duplicate size classes".into()));
        }
        Ok(())
    }

    pub fn class_rate(&self, n: u32) -> f64 {
        self.lambda / (1u64 << n) as f64
    }
}

/// Normalized offered load `sum_n 2^n lambda_n E[T] / 2^m`.
pub fn offered_load(traffic: &TrafficModel) -> f64 {
    let bins = (1u64 << traffic.m) as f64;
    traffic
        .classes
        .iter()
        .map(|&n| (1u64 << n) as f64 * traffic.class_rate(n) * traffic.mean_holding)
        .sum::<f64>()
        / bins
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SimPolicy {
    /// Single-stream IFDMA, min-small-change filling.
    Min,
    /// Single-stream IFDMA, uniform random filling.
    Random,
    /// Any free subcarriers; blocks only on overload.
    Ofdma,
    /// Multi-stream IFDMA.
    Multistream,
}

impl SimPolicy {
    pub fn name(self) -> &'static str {
        match self {
            SimPolicy::Min => "min",
            SimPolicy::Random => "random",
            SimPolicy::Ofdma => "ofdma",
            SimPolicy::Multistream => "multistream",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub traffic: TrafficModel,
    pub policy: SimPolicy,
    pub seed: u64,
    /// Length of the measurement window.
    pub sim_time: f64,
    pub warmup_time: f64,
    pub replications: usize,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        self.traffic.validate()?;
        if !(self.warmup_time >= 0.0 && self.warmup_time.is_finite()) {
            return Err(Error::InvalidConfig(format!("bad warmup {}", self.warmup_time)));
        }
        if !(self.sim_time > 0.0 && self.sim_time.is_finite()) {
            return Err(Error::InvalidConfig(format!("bad sim_time {}", self.sim_time)));
        }
        if self.replications == 0 {
            return Err(Error::InvalidConfig("need at least one replication".into()));
        }
        Ok(())
    }
}

/// Counters from one replication, indexed by position in `traffic.classes`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReplicationStats {
    pub arrivals: Vec<u64>,
    pub blocked: Vec<u64>,
    pub fragmented: Vec<u64>,
    /// Time integral of the occupied bin count over the measurement window.
    pub occupancy_integral: f64,
    /// Bins granted to requests arriving in the window.
    pub carried_bins: u64,
    pub measured_time: f64,
}

impl ReplicationStats {
    fn weighted(&self, counts: &[u64], classes: &[u32]) -> f64 {
        counts
            .iter()
            .zip(classes)
            .map(|(&c, &n)| c as f64 * (1u64 << n) as f64)
            .sum()
    }

    /// Bin-weighted blocking probability.
    pub fn blocking(&self, classes: &[u32]) -> f64 {
        let offered = self.weighted(&self.arrivals, classes);
        if offered == 0.0 {
            0.0
        } else {
            self.weighted(&self.blocked, classes) / offered
        }
    }

    /// Bin-weighted probability of blocking by fragmentation.
    pub fn fragmentation(&self, classes: &[u32]) -> f64 {
        let offered = self.weighted(&self.arrivals, classes);
        if offered == 0.0 {
            0.0
        } else {
            self.weighted(&self.fragmented, classes) / offered
        }
    }

    /// Arrived bins times mean holding, normalized by bins and window.
    pub fn empirical_load(&self, classes: &[u32], m: u32, mean_holding: f64) -> f64 {
        self.weighted(&self.arrivals, classes) * mean_holding
            / ((1u64 << m) as f64 * self.measured_time)
    }

    pub fn mean_occupied(&self) -> f64 {
        self.occupancy_integral / self.measured_time
    }
}

/// Mean and 95% half-width across replications.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    /// NaN for a single replication.
    pub half_width: f64,
}

impl Estimate {
    pub fn from_samples(samples: &[f64]) -> Self {
        let r = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / r;
        let half_width = if samples.len() < 2 {
            f64::NAN
        } else {
            let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (r - 1.0);
            Z95 * (var / r).sqrt()
        };
        Estimate { mean, half_width }
    }

    /// Standard error implied by the half-width.
    pub fn std_error(&self) -> f64 {
        self.half_width / Z95
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimMetrics {
    pub policy: SimPolicy,
    pub classes: Vec<u32>,
    /// Offered load from the traffic model.
    pub offered_load: f64,
    /// Counters pooled over replications.
    pub r: Vec<u64>,
    pub r_blocked: Vec<u64>,
    pub r_fragmented: Vec<u64>,
    pub p_b: Estimate,
    pub p_f: Estimate,
    pub throughput: Estimate,
    pub empirical_load: Estimate,
    pub mean_occupied: Estimate,
    /// Carried bin rate times mean holding: Little's-law prediction of
    /// `mean_occupied`.
    pub carried_load: Estimate,
    pub seed: u64,
    pub replications: Vec<ReplicationStats>,
}

impl SimMetrics {
    /// Pooled blocking probability of one size class.
    pub fn class_blocking(&self, n: u32) -> Option<f64> {
        let i = self.classes.iter().position(|&c| c == n)?;
        (self.r[i] > 0).then(|| self.r_blocked[i] as f64 / self.r[i] as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum EventKind {
    Arrival { class: usize },
    Departure { id: u64, size: usize },
}

#[derive(Debug, Clone, Copy)]
struct Event {
    time: f64,
    seq: u64,
    kind: EventKind,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

// Reversed so the max-heap pops the earliest event; ties go to the lower seq.
impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then(other.seq.cmp(&self.seq))
    }
}

enum Band {
    Bins(BinState),
    Counter { bins: usize, occupied: usize },
}

impl Band {
    fn occupied(&self) -> usize {
        match self {
            Band::Bins(s) => s.occupied_bins(),
            Band::Counter { occupied, .. } => *occupied,
        }
    }

    fn bins(&self) -> usize {
        match self {
            Band::Bins(s) => s.bins(),
            Band::Counter { bins, .. } => *bins,
        }
    }
}

fn substream(seed: u64, replication: usize, lane: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((replication as u64) << 16) | lane);
    rng
}

/// One replication of the event loop.
pub fn run_replication(config: &SimConfig, replication: usize) -> Result<ReplicationStats> {
    config.validate()?;
    let traffic = &config.traffic;
    let classes = &traffic.classes;
    let scheme = RadixScheme::power_of_two(traffic.m)?;
    let mut band = match config.policy {
        SimPolicy::Ofdma => Band::Counter {
            bins: scheme.bins(),
            occupied: 0,
        },
        _ => Band::Bins(BinState::new(scheme)),
    };
    let mut stats = ReplicationStats {
        arrivals: vec![0; classes.len()],
        blocked: vec![0; classes.len()],
        fragmented: vec![0; classes.len()],
        measured_time: config.sim_time,
        ..Default::default()
    };
    if traffic.lambda == 0.0 {
        return Ok(stats);
    }

    let warmup = config.warmup_time;
    let end = warmup + config.sim_time;
    let mut arrival_rngs: Vec<ChaCha8Rng> = classes
        .iter()
        .map(|&n| substream(config.seed, replication, n as u64))
        .collect();
    let gaps: Vec<Exp<f64>> = classes
        .iter()
        .map(|&n| Exp::new(traffic.class_rate(n)).expect("positive rate"))
        .collect();
    let mut holding_rng = substream(config.seed, replication, HOLDING_LANE);
    let holding = Exp::new(1.0 / traffic.mean_holding).expect("positive holding");
    let mut policy_rng = substream(config.seed, replication, POLICY_LANE);

    let mut queue = BinaryHeap::new();
    let mut seq = 0u64;
    for (class, gap) in gaps.iter().enumerate() {
        let time = gap.sample(&mut arrival_rngs[class]);
        queue.push(Event {
            time,
            seq,
            kind: EventKind::Arrival { class },
        });
        seq += 1;
    }

    let mut next_id = 0u64;
    let mut clock = 0.0f64;
    while let Some(event) = queue.pop() {
        if event.time > end {
            break;
        }
        let occupied = band.occupied() as f64;
        let measured_from = clock.max(warmup);
        if event.time > measured_from {
            stats.occupancy_integral += occupied * (event.time - measured_from);
        }
        clock = event.time;

        match event.kind {
            EventKind::Departure { id, size } => match &mut band {
                Band::Bins(state) => state.release(id)?,
                Band::Counter { occupied, .. } => *occupied -= size,
            },
            EventKind::Arrival { class } => {
                let size = 1usize << classes[class];
                let hold = holding.sample(&mut holding_rng);
                let request = Request {
                    id: next_id,
                    size,
                    arrival_time: clock,
                    holding_time: hold,
                };
                let free = band.bins() - band.occupied();
                let outcome = match &mut band {
                    Band::Bins(state) => match config.policy {
                        SimPolicy::Min => state.admit_min_small_change(&request)?,
                        SimPolicy::Random => {
                            state.admit(&request, FillPolicy::Random, &mut policy_rng)?
                        }
                        SimPolicy::Multistream => state.admit_multistream(&request)?,
                        SimPolicy::Ofdma => unreachable!("ofdma uses the counter band"),
                    },
                    Band::Counter { occupied, .. } => {
                        if free >= size {
                            *occupied += size;
                            AdmissionOutcome::Granted(crate::allocator::Allocation {
                                request_id: next_id,
                                ranges: Vec::new(),
                            })
                        } else {
                            AdmissionOutcome::BlockedOverload
                        }
                    }
                };
                let counted = clock >= warmup;
                if counted {
                    stats.arrivals[class] += 1;
                }
                if outcome.is_granted() {
                    queue.push(Event {
                        time: clock + hold,
                        seq,
                        kind: EventKind::Departure { id: next_id, size },
                    });
                    seq += 1;
                    next_id += 1;
                    if counted {
                        stats.carried_bins += size as u64;
                    }
                } else if counted {
                    stats.blocked[class] += 1;
                    if free >= size {
                        debug_assert_eq!(outcome, AdmissionOutcome::BlockedFragmentation);
                        stats.fragmented[class] += 1;
                    }
                }
                let time = clock + gaps[class].sample(&mut arrival_rngs[class]);
                queue.push(Event {
                    time,
                    seq,
                    kind: EventKind::Arrival { class },
                });
                seq += 1;
            }
        }
    }
    let measured_from = clock.max(warmup);
    if end > measured_from {
        stats.occupancy_integral += band.occupied() as f64 * (end - measured_from);
    }
    Ok(stats)
}

/// Runs all replications and aggregates them.
pub fn run(config: &SimConfig) -> Result<SimMetrics> {
    config.validate()?;
    let reps: Vec<ReplicationStats> = (0..config.replications)
        .into_par_iter()
        .map(|r| run_replication(config, r))
        .collect::<Result<_>>()?;
    let classes = &config.traffic.classes;
    let k = classes.len();
    let pool = |f: fn(&ReplicationStats) -> &Vec<u64>| -> Vec<u64> {
        (0..k).map(|i| reps.iter().map(|s| f(s)[i]).sum()).collect()
    };
    let estimate = |f: &dyn Fn(&ReplicationStats) -> f64| {
        Estimate::from_samples(&reps.iter().map(f).collect::<Vec<_>>())
    };
    let m = config.traffic.m;
    let holding = config.traffic.mean_holding;
    Ok(SimMetrics {
        policy: config.policy,
        classes: classes.clone(),
        offered_load: offered_load(&config.traffic),
        r: pool(|s| &s.arrivals),
        r_blocked: pool(|s| &s.blocked),
        r_fragmented: pool(|s| &s.fragmented),
        p_b: estimate(&|s| s.blocking(classes)),
        p_f: estimate(&|s| s.fragmentation(classes)),
        throughput: estimate(&|s| 1.0 - s.blocking(classes)),
        empirical_load: estimate(&|s| s.empirical_load(classes, m, holding)),
        mean_occupied: estimate(&|s| s.mean_occupied()),
        carried_load: estimate(&|s| s.carried_bins as f64 * holding / s.measured_time),
        seed: config.seed,
        replications: reps,
    })
}

/// A grid of runs over mixes, policies and offered loads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub m: u32,
    pub mixes: Vec<TrafficMix>,
    pub policies: Vec<SimPolicy>,
    /// Offered loads `G`, strictly increasing.
    pub loads: Vec<f64>,
    pub seed: u64,
    pub sim_time: f64,
    pub warmup_time: f64,
    pub replications: usize,
    pub mean_holding: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            m: 10,
            mixes: vec![TrafficMix::Full],
            policies: vec![SimPolicy::Ofdma, SimPolicy::Random, SimPolicy::Min],
            loads: (1..=9).map(|i| i as f64 / 10.0).collect(),
            seed: 1,
            sim_time: 20_000.0,
            warmup_time: 1_000.0,
            replications: 10,
            mean_holding: 1.0,
        }
    }
}

impl SweepConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: SweepConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.mixes.is_empty() || self.policies.is_empty() || self.loads.is_empty() {
            return Err(Error::InvalidConfig(
                "mixes, policies and loads must be non-empty".into(),
            ));
        }
        if self.loads.iter().any(|g| !(g.is_finite() && *g >= 0.0)) {
            return Err(Error::InvalidConfig("loads must be finite and >= 0".into()));
        }
        if self.loads.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidConfig("loads must be strictly increasing".into()));
        }
        for &mix in &self.mixes {
            self.cell(mix, self.policies[0], self.loads[0])?.validate()?;
        }
        Ok(())
    }

    pub fn cell(&self, mix: TrafficMix, policy: SimPolicy, g: f64) -> Result<SimConfig> {
        let classes = mix.classes(self.m);
        let lambda = g * (1u64 << self.m.min(MAX_SIM_BITS)) as f64
            / (classes.len() as f64 * self.mean_holding);
        Ok(SimConfig {
            traffic: TrafficModel {
                m: self.m,
                lambda,
                classes,
                mean_holding: self.mean_holding,
            },
            policy,
            seed: self.seed,
            sim_time: self.sim_time,
            warmup_time: self.warmup_time,
            replications: self.replications,
        })
    }
}

/// One CSV row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub policy: SimPolicy,
    pub mix: TrafficMix,
    pub load: f64,
    pub metrics: SimMetrics,
}

/// Runs every `(mix, policy, G)` cell; rows come out mix-major, then policy,
/// then increasing `G`.
pub fn sweep(config: &SweepConfig) -> Result<Vec<SweepRow>> {
    config.validate()?;
    let mut rows = Vec::new();
    for &mix in &config.mixes {
        for &policy in &config.policies {
            for &g in &config.loads {
                let metrics = run(&config.cell(mix, policy, g)?)?;
                rows.push(SweepRow {
                    policy,
                    mix,
                    load: g,
                    metrics,
                });
            }
        }
    }
    Ok(rows)
}

pub const CSV_HEADER: [&str; 10] = [
    "policy",
    "mix",
    "G",
    "P_B",
    "P_B_ci",
    "P_f",
    "P_f_ci",
    "S",
    "seed",
    "replications",
];

fn fmt_prob(x: f64) -> String {
    format!("{x:.6}")
}

pub fn write_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for row in rows {
        let m = &row.metrics;
        w.write_record([
            row.policy.name().to_string(),
            row.mix.name().to_string(),
            format!("{}", row.load),
            fmt_prob(m.p_b.mean),
            fmt_prob(m.p_b.half_width),
            fmt_prob(m.p_f.mean),
            fmt_prob(m.p_f.half_width),
            fmt_prob(m.throughput.mean),
            m.seed.to_string(),
            m.replications.len().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(m: u32, mix: TrafficMix, g: f64, policy: SimPolicy) -> SimConfig {
        SimConfig {
            traffic: TrafficModel::for_offered_load(m, mix, g).unwrap(),
            policy,
            seed: 42,
            sim_time: 500.0,
            warmup_time: 50.0,
            replications: 4,
        }
    }

    #[test]
    fn offered_load_examples() {
        let t = TrafficModel::for_offered_load(10, TrafficMix::Full, 0.5).unwrap();
        assert!((t.lambda - 0.5 * 1024.0 / 11.0).abs() < 1e-12);
        assert!((t.lambda - 46.545).abs() < 1e-3);
        assert!((offered_load(&t) - 0.5).abs() < 1e-12);
        let zero = TrafficModel::with_mix(4, TrafficMix::Full, 0.0).unwrap();
        assert_eq!(offered_load(&zero), 0.0);
        let t2 = TrafficModel::with_mix(2, TrafficMix::Full, 4.0 / 3.0).unwrap();
        assert!((offered_load(&t2) - 1.0).abs() < 1e-12);
        let lim = TrafficModel::with_mix(10, TrafficMix::Limited, 10.0).unwrap();
        assert_eq!(lim.classes, vec![0, 1, 2, 3, 4, 5]);
        assert!((offered_load(&lim) - 6.0 * 10.0 / 1024.0).abs() < 1e-12);
    }

    #[test]
    fn config_validation() {
        assert!(TrafficModel::new(0, 1.0, vec![0], 1.0).is_err());
        assert!(TrafficModel::new(3, -1.0, vec![0], 1.0).is_err());
        assert!(TrafficModel::new(3, 1.0, vec![4], 1.0).is_err());
        assert!(TrafficModel::new(3, 1.0, vec![1, 1], 1.0).is_err());
        assert!(TrafficModel::new(3, 1.0, vec![], 1.0).is_err());
        let mut c = config(4, TrafficMix::Full, 0.5, SimPolicy::Min);
        c.replications = 0;
        assert!(run(&c).is_err());
        c.replications = 1;
        c.sim_time = 0.0;
        assert!(run(&c).is_err());
    }

    #[test]
    fn ofdma_never_fragments() {
        let m = run(&config(6, TrafficMix::Full, 0.8, SimPolicy::Ofdma)).unwrap();
        assert!(m.r_blocked.iter().sum::<u64>() > 0);
        assert_eq!(m.r_fragmented.iter().sum::<u64>(), 0);
        assert_eq!(m.p_f.mean, 0.0);
    }

    #[test]
    fn multistream_never_fragments() {
        let m = run(&config(6, TrafficMix::Full, 0.8, SimPolicy::Multistream)).unwrap();
        assert_eq!(m.r_fragmented.iter().sum::<u64>(), 0);
    }

    #[test]
    fn zero_rate_has_no_events() {
        let mut c = config(5, TrafficMix::Full, 0.0, SimPolicy::Min);
        c.traffic.lambda = 0.0;
        let m = run(&c).unwrap();
        assert_eq!(m.p_b.mean, 0.0);
        assert_eq!(m.r.iter().sum::<u64>(), 0);
    }

    #[test]
    fn same_seed_same_metrics() {
        let c = config(6, TrafficMix::Full, 0.6, SimPolicy::Random);
        assert_eq!(run(&c).unwrap(), run(&c).unwrap());
        let mut other = c.clone();
        other.seed = 43;
        assert_ne!(run(&c).unwrap().r, run(&other).unwrap().r);
    }

    #[test]
    fn policies_share_arrivals() {
        let a = run(&config(5, TrafficMix::Full, 0.5, SimPolicy::Min)).unwrap();
        let b = run(&config(5, TrafficMix::Full, 0.5, SimPolicy::Ofdma)).unwrap();
        assert_eq!(a.r, b.r);
    }

    #[test]
    fn counters_are_ordered() {
        for policy in [SimPolicy::Min, SimPolicy::Random, SimPolicy::Ofdma] {
            let m = run(&config(6, TrafficMix::Full, 0.7, policy)).unwrap();
            for i in 0..m.classes.len() {
                assert!(m.r_fragmented[i] <= m.r_blocked[i]);
                assert!(m.r_blocked[i] <= m.r[i]);
            }
            assert!(0.0 <= m.p_f.mean && m.p_f.mean <= m.p_b.mean && m.p_b.mean <= 1.0);
            assert!((m.throughput.mean - (1.0 - m.p_b.mean)).abs() < 1e-12);
        }
    }

    #[test]
    fn single_replication_has_no_interval() {
        let mut c = config(4, TrafficMix::Full, 0.5, SimPolicy::Min);
        c.replications = 1;
        assert!(run(&c).unwrap().p_b.half_width.is_nan());
    }

    #[test]
    fn estimate_matches_hand_computation() {
        let e = Estimate::from_samples(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(e.mean, 2.5);
        let sd = (5.0f64 / 3.0).sqrt();
        assert!((e.half_width - Z95 * sd / 2.0).abs() < 1e-12);
    }

    #[test]
    fn event_order_is_time_then_seq() {
        let mut heap = BinaryHeap::new();
        for (time, seq) in [(2.0, 0), (1.0, 5), (1.0, 3), (0.5, 9)] {
            heap.push(Event {
                time,
                seq,
                kind: EventKind::Arrival { class: 0 },
            });
        }
        let order: Vec<(f64, u64)> = std::iter::from_fn(|| heap.pop().map(|e| (e.time, e.seq))).collect();
        assert_eq!(order, vec![(0.5, 9), (1.0, 3), (1.0, 5), (2.0, 0)]);
    }

    #[test]
    fn sweep_config_defaults_and_validation() {
        let cfg = SweepConfig::from_json("{}").unwrap();
        assert_eq!(cfg, SweepConfig::default());
        assert!(SweepConfig::from_json(r#"{"loads":[0.5,0.2]}"#).is_err());
        assert!(SweepConfig::from_json(r#"{"bogus":1}"#).is_err());
        assert!(SweepConfig::from_json(r#"{"replications":0}"#).is_err());
    }

    #[test]
    fn csv_layout() {
        let cfg = SweepConfig {
            m: 4,
            policies: vec![SimPolicy::Min],
            loads: vec![0.5],
            sim_time: 100.0,
            warmup_time: 10.0,
            replications: 2,
            ..Default::default()
        };
        let rows = sweep(&cfg).unwrap();
        let mut buf = Vec::new();
        write_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "policy,mix,G,P_B,P_B_ci,P_f,P_f_ci,S,seed,replications"
        );
        let row: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(row[0], "min");
        assert_eq!(row[1], "full");
        assert_eq!(row[2], "0.5");
        assert_eq!(row[8], "1");
        assert_eq!(row[9], "2");
        assert!(lines.next().is_none());
    }
}
