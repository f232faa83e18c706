//! Synthetic time-tag streams: a pairs-plus-singles Poisson source seen
//! through lossy detectors and a beam-splitter on the anti-Stokes arm.
//!
//! Each generation window is simulated independently. Pairs arrive as a
//! Poisson process; the anti-Stokes partner follows its Stokes photon by a
//! delay drawn from the correlated wavepacket, and a pair whose partner
//! would land outside the window is discarded. Unpaired photons and detector
//! noise are uniform over the window. The per-cycle random stream depends
//! only on (seed, cycle), so output does not depend on thread count.

mod format;

pub use format::{read_csv, read_stream, write_csv, write_stream, FormatError, FORMAT_VERSION, MAGIC, RECORD_BYTES};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::detection::{BinGrid, Gate, Trigger};
use crate::observables::{CorrelationResult, Rates};
use crate::params::{DetectionParams, DutySchedule, Scenario};
use crate::scalar::Real;

pub const RNG_ALGORITHM: &str = "ChaCha20 (rand_chacha); seed_from_u64(seed), set_stream(cycle)";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("duration must be positive and finite, got {0} s")]
    Duration(f64),
    #[error("invalid source: {0}")]
    Source(String),
    #[error("window layout ends at {end_ps} ps, beyond the 32-bit picosecond clock")]
    ClockOverflow { end_ps: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum Channel {
    Stokes = 0,
    AntiStokes1 = 1,
    AntiStokes2 = 2,
}

impl Channel {
    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(Self::Stokes),
            1 => Some(Self::AntiStokes1),
            2 => Some(Self::AntiStokes2),
            _ => None,
        }
    }

    pub fn is_anti_stokes(self) -> bool {
        self != Self::Stokes
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EventRecord {
    pub cycle: u64,
    /// Arrival time within the cycle (ps).
    pub time_ps: u32,
    pub channel: Channel,
}

impl EventRecord {
    pub fn t_ns(&self) -> f64 {
        self.time_ps as f64 * 1e-3
    }
}

/// Source rates and pairing ratios handed to the generator (s⁻¹).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourceRates {
    pub r_s: f64,
    pub r_as: f64,
    pub rp_s: f64,
    pub rp_as: f64,
}

impl SourceRates {
    pub fn from_rates<T: Real>(r: &Rates<T>) -> Self {
        Self {
            r_s: r.r_s.to_f64_lossy(),
            r_as: r.r_as.to_f64_lossy(),
            rp_s: r.rp_s.to_f64_lossy(),
            rp_as: r.rp_as.to_f64_lossy(),
        }
    }

    /// Pair-event rate R_s·r_p,s.
    pub fn pair_rate(&self) -> f64 {
        self.r_s * self.rp_s
    }

    fn validate(&self) -> Result<(), SimError> {
        for (k, v) in [("r_s", self.r_s), ("r_as", self.r_as)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(SimError::Source(format!("{k} = {v} must be >= 0")));
            }
        }
        for (k, v) in [("rp_s", self.rp_s), ("rp_as", self.rp_as)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(SimError::Source(format!("{k} = {v} must lie in [0, 1]")));
            }
        }
        let (a, b) = (self.r_s * self.rp_s, self.r_as * self.rp_as);
        if (a - b).abs() > 1e-3 * a.max(b).max(1e-300) {
            return Err(SimError::Source(format!(
                "paired rates differ: R_s·rp_s = {a}, R_as·rp_as = {b}"
            )));
        }
        Ok(())
    }
}

/// Rates that hold inside the gated windows after edge losses. These are what
/// an unbiased estimator recovers from the stream.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub source: SourceRates,
    /// Mean fraction of pairs lost at window edges, E[min(1, |δ|/L)].
    pub edge_loss: f64,
    pub r_s: f64,
    pub r_as: f64,
    pub rp_s: f64,
    pub rp_as: f64,
    /// Pair rate surviving the gate (s⁻¹).
    pub pair_rate: f64,
    pub eta_s: f64,
    pub eta_as: f64,
    pub r_noise_s: f64,
    pub r_noise_as: f64,
}

impl GroundTruth {
    pub fn new(src: &SourceRates, edge_loss: f64, det: &DetectionParams) -> Self {
        let lost = src.pair_rate() * edge_loss;
        let kept = src.pair_rate() - lost;
        let r_s = src.r_s - lost;
        let r_as = src.r_as - lost;
        let ratio = |p: f64, r: f64| if r > 0.0 { p / r } else { 0.0 };
        Self {
            source: *src,
            edge_loss,
            r_s,
            r_as,
            rp_s: ratio(kept, r_s),
            rp_as: ratio(kept, r_as),
            pair_rate: kept,
            eta_s: det.eta_s,
            eta_as: det.eta_as,
            r_noise_s: det.r_noise_s,
            r_noise_as: det.r_noise_as,
        }
    }

    /// Detected in-window Stokes rate, photons plus noise (s⁻¹).
    pub fn detected_s(&self) -> f64 {
        self.eta_s * self.r_s + self.r_noise_s
    }

    pub fn detected_as(&self) -> f64 {
        self.eta_as * self.r_as + self.r_noise_as
    }
}

/// Tabulated delay distribution of the anti-Stokes partner (ns).
#[derive(Debug, Clone, PartialEq)]
pub struct Wavepacket {
    kind: WavepacketKind,
    /// Grid points where the tabulated density was negative and set to zero.
    pub clipped: u64,
}

#[derive(Debug, Clone, PartialEq)]
enum WavepacketKind {
    Delta(f64),
    Table { x0: f64, dx: f64, y: Vec<f64>, cdf: Vec<f64> },
}

impl Wavepacket {
    /// Every partner at exactly `delay_ns`.
    pub fn delta(delay_ns: f64) -> Self {
        Self {
            kind: WavepacketKind::Delta(delay_ns),
            clipped: 0,
        }
    }

    /// Piecewise-linear density ∝ max(y, 0) on a uniform grid.
    pub fn from_density(x0: f64, dx: f64, y: &[f64]) -> Result<Self, SimError> {
        let clipped = y.iter().filter(|&&v| v < 0.0 || !v.is_finite()).count() as u64;
        let y: Vec<f64> = y.iter().map(|&v| if v.is_finite() { v.max(0.0) } else { 0.0 }).collect();
        if y.len() < 2 {
            return Err(SimError::Source("wavepacket needs at least two samples".into()));
        }
        let mut cdf = vec![0.0; y.len()];
        for i in 1..y.len() {
            cdf[i] = cdf[i - 1] + 0.5 * (y[i - 1] + y[i]) * dx;
        }
        let total = cdf[y.len() - 1];
        if !(total > 0.0) {
            return Err(SimError::Source("wavepacket has no positive area".into()));
        }
        let y = y.iter().map(|v| v / total).collect();
        cdf.iter_mut().for_each(|c| *c /= total);
        Ok(Self {
            kind: WavepacketKind::Table { x0, dx, y, cdf },
            clipped,
        })
    }

    /// Density ∝ max(g2_cross − 1, 0), restricted to |τ| ≤ `max_abs_ns`.
    pub fn from_correlation<T: Real>(corr: &CorrelationResult<T>, max_abs_ns: f64) -> Result<Self, SimError> {
        let dx = corr.tau_step_ns.to_f64_lossy();
        let z = corr.zero_index();
        let k = ((max_abs_ns / dx).floor() as usize).min(z).min(corr.len() - 1 - z);
        let lo = z - k;
        let y: Vec<f64> = corr.g2_cross[lo..=z + k]
            .iter()
            .map(|g| g.to_f64_lossy() - 1.0)
            .collect();
        Self::from_density(corr.tau_grid[lo].to_f64_lossy(), dx, &y)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match &self.kind {
            WavepacketKind::Delta(d) => *d,
            WavepacketKind::Table { x0, dx, y, cdf } => {
                let u: f64 = rng.random();
                let i = cdf.partition_point(|&c| c <= u).clamp(1, cdf.len() - 1) - 1;
                let (y0, y1) = (y[i], y[i + 1]);
                let mass = cdf[i + 1] - cdf[i];
                let v = if mass > 0.0 { ((u - cdf[i]) / mass).clamp(0.0, 1.0) } else { 0.5 };
                // invert the linear density inside the cell
                let f = if (y1 - y0).abs() <= 1e-12 * (y0 + y1) {
                    v
                } else {
                    let a = y0 * y0 + v * (y1 * y1 - y0 * y0);
                    (a.max(0.0).sqrt() - y0) / (y1 - y0)
                };
                x0 + (i as f64 + f.clamp(0.0, 1.0)) * dx
            }
        }
    }

    /// E[min(1, |δ|/L)] for window length L (ns).
    pub fn edge_loss(&self, window_ns: f64) -> f64 {
        self.expect(|t| (t.abs() / window_ns).min(1.0))
    }

    /// Probability mass in [a, b] weighted by g(τ).
    pub fn weighted_mass(&self, a: f64, b: f64, g: impl Fn(f64) -> f64) -> f64 {
        match &self.kind {
            WavepacketKind::Delta(d) => {
                if *d >= a && *d < b {
                    g(*d)
                } else {
                    0.0
                }
            }
            WavepacketKind::Table { x0, dx, y, .. } => {
                let n = y.len();
                let xe = x0 + dx * (n - 1) as f64;
                let (lo, hi) = (a.max(*x0), b.min(xe));
                if !(hi > lo) {
                    return 0.0;
                }
                let dens = |t: f64| {
                    let u = ((t - x0) / dx).clamp(0.0, (n - 1) as f64);
                    let i = (u.floor() as usize).min(n - 2);
                    let f = u - i as f64;
                    y[i] * (1.0 - f) + y[i + 1] * f
                };
                // Simpson on pieces no wider than a grid cell
                let pieces = (((hi - lo) / dx).ceil() as usize).max(1) * 2;
                let h = (hi - lo) / pieces as f64;
                (0..pieces)
                    .map(|j| {
                        let (s, e) = (lo + j as f64 * h, lo + (j + 1) as f64 * h);
                        let m = 0.5 * (s + e);
                        h / 6.0 * (dens(s) * g(s) + 4.0 * dens(m) * g(m) + dens(e) * g(e))
                    })
                    .sum()
            }
        }
    }

    fn expect(&self, g: impl Fn(f64) -> f64) -> f64 {
        match &self.kind {
            WavepacketKind::Delta(d) => g(*d),
            WavepacketKind::Table { x0, dx, y, .. } => {
                let xe = x0 + dx * (y.len() - 1) as f64;
                // split at zero so |τ| stays smooth inside each piece
                self.weighted_mass(*x0, 0.0f64.max(*x0), &g) + self.weighted_mass(0.0f64.max(*x0), xe, &g)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamHeader {
    pub format: String,
    pub scenario_hash: String,
    pub seed: u64,
    pub rng: String,
    pub duty: DutySchedule,
    pub duration_s: f64,
    pub cycles: u64,
    pub record_count: u64,
    pub clipped_density_samples: u64,
    pub truth: GroundTruth,
}

impl StreamHeader {
    pub fn window_ps(&self) -> u64 {
        (self.duty.window * 1e12).round() as u64
    }

    pub fn spacing_ps(&self) -> u64 {
        (self.duty.window_spacing * 1e12).round() as u64
    }

    /// Summed generation time of the stream (s).
    pub fn live_time_s(&self) -> f64 {
        self.cycles as f64 * self.duty.windows_per_cycle as f64 * self.duty.window
    }

    /// Generation window holding `time_ps`, if any.
    pub fn window_of(&self, time_ps: u32) -> Option<u32> {
        let (w, sp) = (self.window_ps(), self.spacing_ps());
        let t = time_ps as u64;
        let k = t / sp;
        (k < self.duty.windows_per_cycle as u64 && t - k * sp < w).then_some(k as u32)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventStream {
    pub header: StreamHeader,
    pub records: Vec<EventRecord>,
}

impl EventStream {
    /// Checks ordering, window membership and cycle range.
    pub fn validate(&self) -> Result<(), FormatError> {
        format::validate_records(&self.header, &self.records, 0)
    }

    pub fn count(&self, channel: Channel) -> usize {
        self.records.iter().filter(|r| r.channel == channel).count()
    }
}

/// SHA-256 of the canonical scenario JSON.
pub fn scenario_hash(s: &Scenario) -> String {
    hex::encode(Sha256::digest(s.to_json_string().as_bytes()))
}

fn window_layout(duty: &DutySchedule) -> Result<(u64, u64), SimError> {
    let w = (duty.window * 1e12).round() as u64;
    let sp = (duty.window_spacing * 1e12).round() as u64;
    let end = sp * (duty.windows_per_cycle as u64 - 1) + w;
    if end > u32::MAX as u64 {
        return Err(SimError::ClockOverflow { end_ps: end });
    }
    Ok((w, sp))
}

/// Number of whole cycles in `duration_s`.
pub fn cycles_in(duration_s: f64, duty: &DutySchedule) -> u64 {
    (duration_s / duty.cycle_period * (1.0 + 1e-12)).floor() as u64
}

struct Processes {
    pairs: Option<Poisson<f64>>,
    single_s: Option<Poisson<f64>>,
    single_as: Option<Poisson<f64>>,
    noise_s: Option<Poisson<f64>>,
    noise_as: Option<Poisson<f64>>,
}

fn poisson(mean: f64) -> Option<Poisson<f64>> {
    (mean > 0.0).then(|| Poisson::new(mean).expect("finite positive mean"))
}

fn draw<R: Rng>(d: &Option<Poisson<f64>>, rng: &mut R) -> u64 {
    d.as_ref().map_or(0, |d| d.sample(rng) as u64)
}

struct CycleModel<'a> {
    seed: u64,
    procs: Processes,
    wp: &'a Wavepacket,
    det: &'a DetectionParams,
    window_ps: u64,
    spacing_ps: u64,
}

fn simulate_cycle(m: &CycleModel<'_>, cycle: u64, out: &mut Vec<EventRecord>) {
    let CycleModel {
        seed,
        ref procs,
        wp,
        det,
        window_ps,
        spacing_ps,
    } = *m;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(cycle);
    let start = out.len();
    let w_ns = window_ps as f64 * 1e-3;
    let route = |rng: &mut ChaCha20Rng| {
        if rng.random_bool(0.5) {
            Channel::AntiStokes1
        } else {
            Channel::AntiStokes2
        }
    };
    for k in 0..det.duty.windows_per_cycle as u64 {
        let base = k * spacing_ps;
        let push = |t_ns: f64, ch: Channel, out: &mut Vec<EventRecord>| {
            let ps = ((t_ns * 1e3).floor() as u64).min(window_ps - 1);
            out.push(EventRecord {
                cycle,
                time_ps: (base + ps) as u32,
                channel: ch,
            });
        };
        for _ in 0..draw(&procs.pairs, &mut rng) {
            let ts = rng.random::<f64>() * w_ns;
            let ta = ts + wp.sample(&mut rng);
            if !(0.0..w_ns).contains(&ta) {
                continue;
            }
            if rng.random_bool(det.eta_s) {
                push(ts, Channel::Stokes, out);
            }
            if rng.random_bool(det.eta_as) {
                let ch = route(&mut rng);
                push(ta, ch, out);
            }
        }
        for _ in 0..draw(&procs.single_s, &mut rng) {
            let t = rng.random::<f64>() * w_ns;
            if rng.random_bool(det.eta_s) {
                push(t, Channel::Stokes, out);
            }
        }
        for _ in 0..draw(&procs.single_as, &mut rng) {
            let t = rng.random::<f64>() * w_ns;
            if rng.random_bool(det.eta_as) {
                let ch = route(&mut rng);
                push(t, ch, out);
            }
        }
        for _ in 0..draw(&procs.noise_s, &mut rng) {
            let t = rng.random::<f64>() * w_ns;
            push(t, Channel::Stokes, out);
        }
        for _ in 0..draw(&procs.noise_as, &mut rng) {
            let t = rng.random::<f64>() * w_ns;
            let ch = route(&mut rng);
            push(t, ch, out);
        }
    }
    out[start..].sort_unstable_by_key(|r| (r.time_ps, r.channel));
}

/// Generates `duration_s` of wall-clock acquisition.
pub fn generate(
    source: &SourceRates,
    wavepacket: &Wavepacket,
    det: &DetectionParams,
    seed: u64,
    duration_s: f64,
    scenario_hash: &str,
) -> Result<EventStream, SimError> {
    if !(duration_s.is_finite() && duration_s > 0.0) {
        return Err(SimError::Duration(duration_s));
    }
    source.validate()?;
    let (window_ps, spacing_ps) = window_layout(&det.duty)?;
    let l = det.duty.window;
    let procs = Processes {
        pairs: poisson(source.pair_rate() * l),
        single_s: poisson(source.r_s * (1.0 - source.rp_s) * l),
        single_as: poisson(source.r_as * (1.0 - source.rp_as) * l),
        noise_s: poisson(det.r_noise_s * l),
        noise_as: poisson(det.r_noise_as * l),
    };
    let model = CycleModel {
        seed,
        procs,
        wp: wavepacket,
        det,
        window_ps,
        spacing_ps,
    };
    let cycles = cycles_in(duration_s, &det.duty);
    const CHUNK: u64 = 2048;
    let chunks: Vec<Vec<EventRecord>> = (0..cycles.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut out = Vec::new();
            for cycle in c * CHUNK..((c + 1) * CHUNK).min(cycles) {
                simulate_cycle(&model, cycle, &mut out);
            }
            out
        })
        .collect();
    let records: Vec<EventRecord> = chunks.concat();
    let edge_loss = wavepacket.edge_loss(l * 1e9);
    Ok(EventStream {
        header: StreamHeader {
            format: "sfwm-events".into(),
            scenario_hash: scenario_hash.into(),
            seed,
            rng: RNG_ALGORITHM.into(),
            duty: det.duty,
            duration_s,
            cycles,
            record_count: records.len() as u64,
            clipped_density_samples: wavepacket.clipped,
            truth: GroundTruth::new(source, edge_loss, det),
        },
        records,
    })
}

/// Generates from theory outputs: rates, pairing ratios and the g2_cross
/// wavepacket.
pub fn generate_from_theory<T: Real>(
    rates: &Rates<T>,
    corr: &CorrelationResult<T>,
    det: &DetectionParams,
    seed: u64,
    duration_s: f64,
    scenario_hash: &str,
) -> Result<EventStream, SimError> {
    let wp = Wavepacket::from_correlation(corr, det.duty.window * 1e9)?;
    // the model keeps R_s·rp_s = R_as·rp_as only to quadrature accuracy
    let mut src = SourceRates::from_rates(rates);
    src.rp_as = src.pair_rate() / src.r_as;
    generate(&src, &wp, det, seed, duration_s, scenario_hash)
}

/// Expected coincidence counts per bin implied by the generator's model:
/// uniform accidentals between detected rates plus the gated pair term.
pub fn expected_histogram(
    truth: &GroundTruth,
    wavepacket: &Wavepacket,
    duty: &DutySchedule,
    cycles: u64,
    grid: &BinGrid,
    trigger: Trigger,
) -> Vec<f64> {
    let l_ns = duty.window * 1e9;
    let live = cycles as f64 * duty.windows_per_cycle as f64 * duty.window;
    let gate = Gate::Window { length_ns: l_ns };
    let w = grid.bin_width_ns;
    let acc = truth.detected_s() * truth.detected_as() * live * w * 1e-9;
    let pairs = truth.source.pair_rate() * live * truth.eta_s * truth.eta_as;
    let o = trigger.orientation();
    (0..grid.len())
        .map(|i| {
            let a = grid.left_edge_ns(i);
            let (lo, hi) = if o > 0.0 { (a, a + w) } else { (-(a + w), -a) };
            acc * gate.average(a, a + w) + pairs * wavepacket.weighted_mass(lo, hi, |t| gate.at(t))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn det() -> DetectionParams {
        DetectionParams::default()
    }

    fn src() -> SourceRates {
        SourceRates {
            r_s: 4.8e5,
            r_as: 4.5e5,
            rp_s: 0.7,
            rp_as: 0.7 * 4.8 / 4.5,
        }
    }

    fn box_packet() -> Wavepacket {
        // uniform on [20, 120] ns
        let y: Vec<f64> = (0..=200).map(|i| if (20..=120).contains(&i) { 1.0 } else { 0.0 }).collect();
        Wavepacket::from_density(0.0, 1.0, &y).unwrap()
    }

    #[test]
    fn zero_rates_give_an_empty_stream() {
        let mut d = det();
        d.r_noise_s = 0.0;
        d.r_noise_as = 0.0;
        let zero = SourceRates { r_s: 0.0, r_as: 0.0, rp_s: 0.0, rp_as: 0.0 };
        let s = generate(&zero, &Wavepacket::delta(50.0), &d, 1, 10.0, "x").unwrap();
        assert!(s.records.is_empty());
        assert_eq!(s.header.cycles, 2000);
        assert_eq!(s.header.record_count, 0);
    }

    #[test]
    fn same_seed_same_stream() {
        let a = generate(&src(), &box_packet(), &det(), 7, 20.0, "h").unwrap();
        let b = generate(&src(), &box_packet(), &det(), 7, 20.0, "h").unwrap();
        let c = generate(&src(), &box_packet(), &det(), 8, 20.0, "h").unwrap();
        assert_eq!(a, b);
        assert_ne!(a.records, c.records);
        a.validate().unwrap();
    }

    #[test]
    fn thread_count_does_not_matter() {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let one = pool.install(|| generate(&src(), &box_packet(), &det(), 3, 30.0, "h").unwrap());
        let many = generate(&src(), &box_packet(), &det(), 3, 30.0, "h").unwrap();
        assert_eq!(one, many);
    }

    #[test]
    fn sampler_follows_the_box() {
        let wp = box_packet();
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let n = 200_000;
        let xs: Vec<f64> = (0..n).map(|_| wp.sample(&mut rng)).collect();
        assert!(xs.iter().all(|&x| (19.0..=121.0).contains(&x)));
        let mean = xs.iter().sum::<f64>() / n as f64;
        assert!((mean - 70.0).abs() < 0.2, "{mean}");
        assert!((wp.edge_loss(1000.0) - 0.07).abs() < 1e-3);
    }

    #[test]
    fn delta_packet_lands_in_one_bin() {
        let d = DetectionParams {
            eta_s: 1.0,
            eta_as: 1.0,
            r_noise_s: 0.0,
            r_noise_as: 0.0,
            ..det()
        };
        let s = SourceRates { r_s: 1e5, r_as: 1e5, rp_s: 1.0, rp_as: 1.0 };
        let st = generate(&s, &Wavepacket::delta(41.5), &d, 11, 5.0, "h").unwrap();
        let mut by_cycle_window = std::collections::HashMap::<(u64, u32), Vec<&EventRecord>>::new();
        for r in &st.records {
            by_cycle_window
                .entry((r.cycle, st.header.window_of(r.time_ps).unwrap()))
                .or_default()
                .push(r);
        }
        // every Stokes tag has a partner exactly 41.5 ns later
        let mut pairs = 0;
        for recs in by_cycle_window.values() {
            for r in recs.iter().filter(|r| r.channel == Channel::Stokes) {
                assert!(recs
                    .iter()
                    .any(|p| p.channel.is_anti_stokes() && p.time_ps as i64 - r.time_ps as i64 == 41_500));
                pairs += 1;
            }
        }
        assert!(pairs > 0);
        assert_eq!(pairs * 2, st.records.len());
    }

    #[test]
    fn noise_only_counts_match_poisson() {
        let d = det();
        let zero = SourceRates { r_s: 0.0, r_as: 0.0, rp_s: 0.0, rp_as: 0.0 };
        let s = generate(&zero, &Wavepacket::delta(0.0), &d, 2, 3600.0, "h").unwrap();
        let mean = 600.0 * d.active_time();
        let n = s.count(Channel::Stokes) as f64;
        assert!((n - mean).abs() < 3.0 * mean.sqrt(), "{n} vs {mean}");
        let a1 = s.count(Channel::AntiStokes1) as f64;
        let a2 = s.count(Channel::AntiStokes2) as f64;
        let tot = a1 + a2;
        assert!((tot - 570.0 * d.active_time()).abs() < 3.0 * (570.0 * d.active_time()).sqrt());
        assert!((a1 - tot / 2.0).abs() < 3.0 * (tot / 4.0).sqrt());
    }

    #[test]
    fn halving_efficiency_halves_counts() {
        let mut d = det();
        d.r_noise_s = 0.0;
        d.r_noise_as = 0.0;
        let full = generate(&src(), &box_packet(), &d, 4, 60.0, "h").unwrap();
        d.eta_s /= 2.0;
        d.eta_as /= 2.0;
        let half = generate(&src(), &box_packet(), &d, 4, 60.0, "h").unwrap();
        for ch in [Channel::Stokes, Channel::AntiStokes1] {
            let f = full.count(ch) as f64;
            let h = half.count(ch) as f64;
            // difference of two Poisson counts with means f/2 and h
            let sigma = (f / 4.0 + h).sqrt();
            assert!((h - f / 2.0).abs() < 3.0 * sigma, "{ch:?}: {h} vs {}", f / 2.0);
        }
    }

    #[test]
    fn truth_accounts_for_edge_losses() {
        let t = GroundTruth::new(&src(), 0.01, &det());
        let p = src().pair_rate();
        assert!((t.pair_rate - 0.99 * p).abs() < 1e-9);
        assert!((t.r_s - (4.8e5 - 0.01 * p)).abs() < 1e-9);
        assert!((t.rp_s * t.r_s - t.rp_as * t.r_as).abs() < 1e-6);
    }

    #[test]
    fn bad_inputs() {
        assert!(matches!(generate(&src(), &box_packet(), &det(), 1, 0.0, "h"), Err(SimError::Duration(_))));
        let mut s = src();
        s.rp_s = 1.5;
        assert!(matches!(generate(&s, &box_packet(), &det(), 1, 1.0, "h"), Err(SimError::Source(_))));
        let mut d = det();
        d.duty.window_spacing = 1e-3;
        d.duty.cycle_period = 1.0;
        assert!(matches!(generate(&src(), &box_packet(), &d, 1, 1.0, "h"), Err(SimError::ClockOverflow { .. })));
    }

    #[test]
    fn clipped_samples_are_counted() {
        let wp = Wavepacket::from_density(0.0, 1.0, &[0.0, 1.0, -0.1, 1.0, 0.0]).unwrap();
        assert_eq!(wp.clipped, 1);
    }
}
