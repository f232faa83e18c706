//! Estimators on time-tag streams: coincidence histograms, recovered rates,
//! pairing ratios, signal-to-background and delay, with Poisson errors.
//!
//! Errors are statistical only.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::detection::{invert_coincidences, BinGrid, CountCurve, DetectionError, Gate, Inversion, Trigger};
use crate::event_sim::{Channel, EventRecord, EventStream, FormatError};
use crate::params::DetectionParams;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error("detection model: {0}")]
    Detection(#[from] DetectionError),
    #[error("bin width {0} ns must be a positive whole number of picoseconds")]
    BinWidth(f64),
    #[error("cannot rebin {half_bins} bins per side by {factor}")]
    Rebin { half_bins: usize, factor: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoincidenceHistogram {
    pub trigger: Trigger,
    pub grid: BinGrid,
    pub bins: Vec<u64>,
    pub n_trigger: u64,
    pub n_partner: u64,
    /// Summed generation-window time (s).
    pub live_time_s: f64,
    /// Generation-window length (ns), for the delay acceptance.
    pub window_length_ns: f64,
}

impl CoincidenceHistogram {
    pub fn bin_width_ns(&self) -> f64 {
        self.grid.bin_width_ns
    }

    pub fn total(&self) -> u64 {
        self.bins.iter().sum()
    }

    /// Merges groups of `factor` adjacent bins.
    pub fn rebin(&self, factor: usize) -> Result<Self, AnalysisError> {
        let k = self.grid.half_bins;
        if factor == 0 || k % factor != 0 {
            return Err(AnalysisError::Rebin { half_bins: k, factor });
        }
        let grid = BinGrid {
            bin_width_ns: self.grid.bin_width_ns * factor as f64,
            half_bins: k / factor,
        };
        let bins = self.bins.chunks(factor).map(|c| c.iter().sum()).collect();
        Ok(Self {
            grid,
            bins,
            ..self.clone()
        })
    }

    pub fn to_count_curve(&self) -> CountCurve {
        CountCurve {
            grid: self.grid,
            counts: self.bins.iter().map(|&c| c as f64).collect(),
            n_trigger: self.n_trigger as f64,
            live_time_s: self.live_time_s,
            trigger: self.trigger,
            gate: Gate::Window {
                length_ns: self.window_length_ns,
            },
        }
    }
}

fn roles(trigger: Trigger, ch: Channel) -> (bool, bool) {
    let is_s = ch == Channel::Stokes;
    match trigger {
        Trigger::Stokes => (is_s, !is_s),
        Trigger::AntiStokes => (!is_s, is_s),
    }
}

/// Signed bin of delay τ (ps); zero delay is split by channel order so that
/// swapping the trigger mirrors the histogram exactly.
#[inline]
fn bin_label(tau: i64, width: i64, trigger_ch: Channel, partner_ch: Channel) -> i64 {
    if tau > 0 {
        tau / width
    } else if tau < 0 {
        -((-tau) / width) - 1
    } else if trigger_ch < partner_ch {
        0
    } else {
        -1
    }
}

fn histogram_cycle(
    recs: &[EventRecord],
    trigger: Trigger,
    grid: &BinGrid,
    width_ps: i64,
    bins: &mut [u64],
) -> (u64, u64) {
    let mut trig: Vec<(i64, Channel)> = Vec::new();
    let mut part: Vec<(i64, Channel)> = Vec::new();
    for r in recs {
        let (t, p) = roles(trigger, r.channel);
        if t {
            trig.push((r.time_ps as i64, r.channel));
        }
        if p {
            part.push((r.time_ps as i64, r.channel));
        }
    }
    let reach = width_ps * grid.half_bins as i64;
    let mut lo = 0;
    for &(t, tc) in &trig {
        while lo < part.len() && part[lo].0 < t - reach {
            lo += 1;
        }
        for &(p, pc) in &part[lo..] {
            if p > t + reach {
                break;
            }
            if let Some(i) = grid.index(bin_label(p - t, width_ps, tc, pc)) {
                bins[i] += 1;
            }
        }
    }
    (trig.len() as u64, part.len() as u64)
}

/// Signed-delay coincidence histogram. Stokes triggers pair with both
/// anti-Stokes detectors; anti-Stokes triggers (either detector) pair with
/// the Stokes detector. Every partner within the window counts.
pub fn histogram(
    stream: &EventStream,
    trigger: Trigger,
    bin_width_ns: f64,
    window_ns: f64,
) -> Result<CoincidenceHistogram, AnalysisError> {
    let width_ps = (bin_width_ns * 1e3).round();
    if !(width_ps >= 1.0) || ((width_ps - bin_width_ns * 1e3).abs() > 1e-6) {
        return Err(AnalysisError::BinWidth(bin_width_ns));
    }
    let width_ps = width_ps as i64;
    let grid = BinGrid::new(bin_width_ns, window_ns)?;
    let recs = &stream.records;
    // ordering is what the linear merge relies on
    if let Some(i) = recs
        .windows(2)
        .position(|w| (w[0].cycle, w[0].time_ps, w[0].channel) > (w[1].cycle, w[1].time_ps, w[1].channel))
    {
        return Err(FormatError::Unsorted { index: i as u64 + 1 }.into());
    }

    // chunk boundaries on cycle changes
    let mut starts = vec![0usize];
    for i in 1..recs.len() {
        if recs[i].cycle != recs[i - 1].cycle {
            starts.push(i);
        }
    }
    starts.push(recs.len());
    let cycles: Vec<(usize, usize)> = starts.windows(2).map(|w| (w[0], w[1])).filter(|(a, b)| b > a).collect();

    let n = grid.len();
    let (bins, n_t, n_p) = cycles
        .par_chunks(1024)
        .map(|chunk| {
            let mut bins = vec![0u64; n];
            let (mut nt, mut np) = (0, 0);
            for &(a, b) in chunk {
                let (t, p) = histogram_cycle(&recs[a..b], trigger, &grid, width_ps, &mut bins);
                nt += t;
                np += p;
            }
            (bins, nt, np)
        })
        .reduce(
            || (vec![0u64; n], 0, 0),
            |(mut a, at, ap), (b, bt, bp)| {
                a.iter_mut().zip(&b).for_each(|(x, y)| *x += y);
                (a, at + bt, ap + bp)
            },
        );
    Ok(CoincidenceHistogram {
        trigger,
        grid,
        bins,
        n_trigger: n_t,
        n_partner: n_p,
        live_time_s: stream.header.live_time_s(),
        window_length_ns: stream.header.duty.window * 1e9,
    })
}

/// A value and its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Measured {
    pub value: f64,
    pub err: f64,
}

impl Measured {
    fn new(value: f64, var: f64) -> Self {
        Self {
            value,
            err: var.max(0.0).sqrt(),
        }
    }

    /// |value − truth| / err
    pub fn pull(&self, truth: f64) -> f64 {
        (self.value - truth).abs() / self.err
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Estimates {
    pub trigger: Trigger,
    /// Trigger-channel generation rate from its singles (s⁻¹).
    pub trigger_rate: Measured,
    /// Partner-channel generation rate from the accidental level (s⁻¹).
    pub partner_rate: Measured,
    /// Trigger-channel pairing ratio.
    pub pairing_ratio: Measured,
    pub r_sb: Measured,
    pub tau_delay_ns: Measured,
    pub purity: f64,
    /// Background of the rate curve, R_partner + R_env (s⁻¹).
    pub background: f64,
    pub r_env: f64,
    pub tail_start_ns: f64,
    /// Largest signal-bin excess in units of its Poisson background σ.
    pub significance: f64,
    pub low_significance: bool,
    /// R^exp_C per bin and its error (s⁻¹); empty without trigger photons.
    pub rate: Vec<f64>,
    pub rate_err: Vec<f64>,
    /// Counts over gated background per bin.
    pub g2: Vec<f64>,
    pub g2_err: Vec<f64>,
}

/// Recovers rates and wavepacket metrics from a histogram.
pub fn estimate(hist: &CoincidenceHistogram, det: &DetectionParams) -> Result<Estimates, AnalysisError> {
    let curve = hist.to_count_curve();
    let inv: Inversion = invert_coincidences(&curve, det)?;
    let grid = &hist.grid;
    let n = grid.len();
    let w = grid.bin_width_ns;
    let dt = w * 1e-9;
    let c = &curve.counts;
    let gates: Vec<f64> = (0..n)
        .map(|i| curve.gate.average(grid.left_edge_ns(i), grid.left_edge_ns(i) + w))
        .collect();
    let ts = inv.tail_start_ns;
    let is_tail = |i: usize| {
        let a = grid.left_edge_ns(i);
        a >= ts || a + w <= -ts
    };
    let is_signal = |i: usize| {
        let a = grid.left_edge_ns(i);
        a >= -ts && a + w <= ts
    };
    let bg = inv.background_counts;
    let tail: Vec<usize> = (0..n).filter(|&i| is_tail(i) && gates[i] > 0.0).collect();
    let m = tail.len() as f64;
    // Poisson variance from the fitted mean bg·g in each tail bin
    let var_bg = tail.iter().map(|&i| bg / gates[i]).sum::<f64>() / (m * m);

    let ((eta_t, _), (eta_p, _)) = match hist.trigger {
        Trigger::Stokes => ((det.eta_s, det.r_noise_s), (det.eta_as, det.r_noise_as)),
        Trigger::AntiStokes => ((det.eta_as, det.r_noise_as), (det.eta_s, det.r_noise_s)),
    };
    let n_t = curve.n_trigger;
    let live = curve.live_time_s;
    let trigger_rate = Measured::new(inv.trigger_rate, n_t / (live * live * eta_t * eta_t));

    let k = n_t * eta_p * dt;
    // accidentals scale with N, so only the tail's Poisson noise remains
    let partner_rate = if k > 0.0 {
        Measured::new(inv.partner_rate, var_bg / (k * k))
    } else {
        Measured::new(inv.partner_rate, f64::NAN)
    };

    let norm = inv.normalisation;
    let sig: Vec<usize> = (0..n).filter(|&i| is_signal(i)).collect();
    let pairing_ratio = if norm > 0.0 {
        let var_c: f64 = sig.iter().map(|&i| c[i]).sum();
        let gsum: f64 = sig.iter().map(|&i| gates[i]).sum();
        // pair coincidences track the trigger count; conditioning on N leaves
        // the Poisson noise of the signal bins and of the background level
        let v = (var_c + gsum * gsum * var_bg) * (dt / norm).powi(2);
        Measured::new(inv.pairing_ratio, v)
    } else {
        Measured::new(0.0, 0.0)
    };

    let mut g2 = vec![f64::NAN; n];
    let mut g2_err = vec![f64::NAN; n];
    let mut peak = None::<usize>;
    let mut significance = 0.0f64;
    if bg > 0.0 {
        for i in 0..n {
            if gates[i] <= 0.0 {
                continue;
            }
            let b = bg * gates[i];
            g2[i] = c[i] / b;
            g2_err[i] = ((c[i] / (b * b)) + (c[i] / (b * bg)).powi(2) * var_bg).sqrt();
            if peak.is_none_or(|p| g2[i] > g2[p]) {
                peak = Some(i);
            }
            if is_signal(i) {
                significance = significance.max((c[i] - b) / b.sqrt());
            }
        }
    }
    let r_sb = match peak {
        Some(p) => Measured::new(g2[p] - 1.0, g2_err[p].powi(2)),
        None => Measured::new(f64::NAN, f64::NAN),
    };

    let tau_delay_ns = Measured::new(inv.tau_delay_ns, delay_variance(hist, &gates, bg, &sig, inv.tau_delay_ns));

    let (rate, rate_err) = if norm > 0.0 {
        (c.iter().map(|x| x / norm).collect(), c.iter().map(|x| x.sqrt() / norm).collect())
    } else {
        (Vec::new(), Vec::new())
    };

    Ok(Estimates {
        trigger: hist.trigger,
        trigger_rate,
        partner_rate,
        pairing_ratio,
        r_sb,
        tau_delay_ns,
        purity: inv.purity,
        background: inv.background,
        r_env: inv.r_env,
        tail_start_ns: inv.tail_start_ns,
        significance,
        low_significance: !(significance >= 5.0),
        rate,
        rate_err,
        g2,
        g2_err,
    })
}

/// Delta-method variance of the (1 − 1/e) area quantile.
fn delay_variance(hist: &CoincidenceHistogram, gates: &[f64], bg: f64, sig: &[usize], tau: f64) -> f64 {
    if !tau.is_finite() {
        return f64::NAN;
    }
    let q = 1.0 - (-1.0f64).exp();
    let o = hist.trigger.orientation();
    let w = hist.grid.bin_width_ns;
    let (mut before, mut after) = (0.0, 0.0);
    for &i in sig {
        let mid = o * hist.grid.center_ns(i);
        if mid < tau {
            before += hist.bins[i] as f64;
        } else {
            after += hist.bins[i] as f64;
        }
    }
    // local excess density around the quantile, counts per ns
    let near: Vec<f64> = sig
        .iter()
        .filter(|&&i| (o * hist.grid.center_ns(i) - tau).abs() <= 2.5 * w)
        .map(|&i| hist.bins[i] as f64 - bg * gates[i])
        .collect();
    let dens = near.iter().sum::<f64>() / (near.len().max(1) as f64 * w);
    if !(dens > 0.0) {
        return f64::NAN;
    }
    ((1.0 - q).powi(2) * before + q * q * after) / (dens * dens)
}

/// Heralded autocorrelation from the cross-correlation, with delta-method
/// errors. Values below one are clipped to one first.
pub fn g2_conditional_from_cross(g2: &[f64], err: Option<&[f64]>) -> (Vec<f64>, Vec<f64>) {
    g2.iter()
        .enumerate()
        .map(|(i, &g)| {
            let g = if g.is_nan() { g } else { g.max(1.0) };
            let v = (4.0 * g - 2.0) / (g * g);
            let d = 4.0 * (1.0 - g) / (g * g * g);
            let e = err.map_or(0.0, |e| (d * e[i]).abs());
            (v, e)
        })
        .unzip()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event_sim::{StreamHeader, GroundTruth, SourceRates};
    use crate::params::DutySchedule;

    fn stream(records: Vec<EventRecord>) -> EventStream {
        let det = DetectionParams::default();
        let src = SourceRates { r_s: 0.0, r_as: 0.0, rp_s: 0.0, rp_as: 0.0 };
        EventStream {
            header: StreamHeader {
                format: "sfwm-events".into(),
                scenario_hash: String::new(),
                seed: 0,
                rng: String::new(),
                duty: DutySchedule::default(),
                duration_s: 5e-3,
                cycles: 1,
                record_count: records.len() as u64,
                clipped_density_samples: 0,
                truth: GroundTruth::new(&src, 0.0, &det),
            },
            records,
        }
    }

    fn rec(t_ns: u32, ch: Channel) -> EventRecord {
        EventRecord { cycle: 0, time_ps: t_ns * 1000, channel: ch }
    }

    #[test]
    fn two_tags_fill_the_expected_bins() {
        let s = stream(vec![rec(100, Channel::Stokes), rec(140, Channel::AntiStokes2)]);
        let h = histogram(&s, Trigger::Stokes, 4.0, 1000.0).unwrap();
        assert_eq!(h.total(), 1);
        let i = h.bins.iter().position(|&b| b == 1).unwrap();
        assert_eq!(h.grid.left_edge_ns(i), 40.0);
        let m = histogram(&s, Trigger::AntiStokes, 4.0, 1000.0).unwrap();
        let j = m.bins.iter().position(|&b| b == 1).unwrap();
        assert_eq!(m.grid.label(j), -11);
        assert_eq!(m.grid.left_edge_ns(j), -44.0);
    }

    #[test]
    fn mirror_holds_on_ties_and_bin_edges() {
        let s = stream(vec![
            rec(100, Channel::Stokes),
            rec(100, Channel::AntiStokes1),
            rec(104, Channel::AntiStokes1),
            rec(108, Channel::Stokes),
            rec(900, Channel::AntiStokes2),
        ]);
        let a = histogram(&s, Trigger::Stokes, 4.0, 1000.0).unwrap();
        let mut b = histogram(&s, Trigger::AntiStokes, 4.0, 1000.0).unwrap().bins;
        b.reverse();
        assert_eq!(a.bins, b);
        assert_eq!(a.total(), 6);
    }

    #[test]
    fn unsorted_stream_is_rejected() {
        let s = stream(vec![rec(140, Channel::AntiStokes1), rec(100, Channel::Stokes)]);
        assert!(matches!(
            histogram(&s, Trigger::Stokes, 4.0, 1000.0),
            Err(AnalysisError::Format(FormatError::Unsorted { index: 1 }))
        ));
    }

    #[test]
    fn rebin_conserves_counts() {
        let s = stream(vec![
            rec(100, Channel::Stokes),
            rec(140, Channel::AntiStokes1),
            rec(300, Channel::AntiStokes2),
            rec(301, Channel::Stokes),
        ]);
        let h = histogram(&s, Trigger::Stokes, 4.0, 1000.0).unwrap();
        let r = h.rebin(5).unwrap();
        assert_eq!(r.total(), h.total());
        assert_eq!(r.grid.len(), 100);
        assert!(h.rebin(3).is_err());
    }

    #[test]
    fn bin_width_must_be_whole_picoseconds() {
        let s = stream(vec![]);
        assert!(matches!(histogram(&s, Trigger::Stokes, 0.0004, 1.0), Err(AnalysisError::BinWidth(_))));
    }

    #[test]
    fn conditional_conversion_and_errors() {
        let (v, e) = g2_conditional_from_cross(&[23.0, 1.0, 242.0, 0.9], Some(&[1.0, 0.1, 0.0, 0.1]));
        assert!((v[0] - 0.170).abs() < 5e-4);
        assert_eq!(v[1], 2.0);
        assert!((v[2] - 0.0165).abs() < 1e-4);
        assert_eq!(v[3], 2.0);
        assert!((e[0] - 4.0 * 22.0 / 23.0f64.powi(3)).abs() < 1e-12);
        assert_eq!(e[1], 0.0);
    }
}
