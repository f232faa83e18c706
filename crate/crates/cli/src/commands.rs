//! Subcommand bodies. Each writes its artifacts into the run directory and
//! returns what goes to stdout.

use std::fs::File;
use std::io::{BufReader, Write};
use std::path::Path;

use anyhow::{Context as _, Result};
use clap::ValueEnum;
use serde::Serialize;
use serde_json::{json, Value};
use sfwm::analysis::{estimate, g2_conditional_from_cross, histogram, CoincidenceHistogram, Estimates, Measured};
use sfwm::detection::{expected_coincidences, invert_coincidences, Gate, Trigger};
use sfwm::event_sim::{read_csv, read_stream, write_csv as write_events_csv, write_stream};
use sfwm::event_sim::{
    cycles_in, generate_from_theory, scenario_hash, Channel, EventStream, GroundTruth, SourceRates, StreamHeader,
    RNG_ALGORITHM,
};
use sfwm::linear_response::local_coefficients;
use sfwm::params::Scenario;
use sfwm::propagation::{diffusion, spectral_point};
use sfwm::quadrature::GaussLegendre;
use sfwm::steady_state::steady_state as solve_steady_state;
use sfwm::observables::Metrics;
use sfwm::{Rates64, TheoryRun64};

use crate::output::{write_csv, RunDir};
use crate::UsageError;

pub struct Context<'a> {
    pub scenario: &'a Scenario,
    pub seed: u64,
}

pub enum Summary {
    Json(Value),
    Text(String),
}

fn describe(s: &Scenario) -> String {
    let p = &s.system;
    format!(
        "od={} omega_d={} omega_c={} delta_d={} delta_c={} gamma_21={} delta_k_l={:.6}",
        p.od, p.omega_d, p.omega_c, p.delta_d, p.delta_c, p.gamma_21, p.delta_k_l
    )
}

fn theory(s: &Scenario) -> Result<TheoryRun64> {
    TheoryRun64::compute(s).with_context(|| format!("theory run failed ({})", describe(s)))
}

fn theory_metrics(s: &Scenario, run: &TheoryRun64) -> Result<Metrics> {
    run.metrics(&s.detection)
        .with_context(|| format!("observables: metrics failed ({})", describe(s)))
}

pub fn steady_state(ctx: &Context, dir: &mut RunDir) -> Result<Summary> {
    let s = solve_steady_state(&ctx.scenario.system)
        .with_context(|| format!("steady_state failed ({})", describe(ctx.scenario)))?;
    let v = json!({
        "pop11": s.pop11,
        "pop22": s.pop22,
        "pop33": s.pop33,
        "pop44": s.pop44,
        "coh13": [s.coh13.re, s.coh13.im],
        "coh24": [s.coh24.re, s.coh24.im],
        "m_denominator": s.m_denominator,
    });
    dir.json("steady_state.json", &v)?;
    Ok(Summary::Json(v))
}

pub fn coefficients(ctx: &Context, dir: &mut RunDir, omega: f64) -> Result<Summary> {
    let p = &ctx.scenario.system;
    let s = solve_steady_state(p).with_context(|| format!("steady_state failed ({})", describe(ctx.scenario)))?;
    let k = local_coefficients(p, &s, omega)
        .with_context(|| format!("linear_response failed at omega={omega} ({})", describe(ctx.scenario)))?;
    let v = json!({ "omega": omega, "coefficients": k });
    dir.json("coefficients.json", &v)?;
    Ok(Summary::Json(v))
}

pub fn transfer(ctx: &Context, dir: &mut RunDir, omega: f64) -> Result<Summary> {
    let sc = ctx.scenario;
    let p = &sc.system;
    let s = solve_steady_state(p).with_context(|| format!("steady_state failed ({})", describe(sc)))?;
    let k = local_coefficients(p, &s, omega)
        .with_context(|| format!("linear_response failed at omega={omega} ({})", describe(sc)))?;
    let quad = GaussLegendre::new(sc.numerics.z_quadrature_nodes);
    let pt = spectral_point(p, &k, &diffusion(p, &s), &quad, omega, sc.numerics.expm_degenerate_tol)
        .with_context(|| format!("propagation failed at omega={omega} ({})", describe(sc)))?;
    let v = json!({ "omega": omega, "transfer": pt.transfer, "noise": pt.noise });
    dir.json("transfer.json", &v)?;
    Ok(Summary::Json(v))
}

fn rates_json(r: &Rates64) -> Value {
    json!({
        "r_s": r.r_s,
        "r_as": r.r_as,
        "rp_s": r.rp_s,
        "rp_as": r.rp_as,
        "paired_rate": r.paired_rate,
        "unpaired_s": r.unpaired_s(),
        "unpaired_as": r.unpaired_as(),
        "asymmetry": r.asymmetry(),
    })
}

pub fn spectrum(ctx: &Context, dir: &mut RunDir) -> Result<Summary> {
    let run = theory(ctx.scenario)?;
    let sp = &run.spectra;
    write_csv(
        dir.file("spectrum.csv")?,
        &[
            "omega_over_Gamma",
            "r_tilde_s",
            "r_tilde_as",
            "pair_density_s",
            "pair_density_as",
            "cross_density_re",
            "cross_density_im",
        ],
        (0..sp.len()).map(|i| {
            vec![
                sp.omega_grid[i],
                sp.r_tilde_s[i],
                sp.r_tilde_as[i],
                sp.pair_density_s[i],
                sp.pair_density_as[i],
                sp.cross_density[i].re,
                sp.cross_density[i].im,
            ]
        }),
    )?;
    let v = json!({ "rates": rates_json(&run.rates) });
    dir.json("summary.json", &v)?;
    Ok(Summary::Json(v))
}

pub fn correlate(ctx: &Context, dir: &mut RunDir, tau_max_ns: f64) -> Result<Summary> {
    if !(tau_max_ns > 0.0) {
        return Err(UsageError(format!("--tau-max-ns must be positive, got {tau_max_ns}")).into());
    }
    let run = theory(ctx.scenario)?;
    let c = &run.correlations;
    write_csv(
        dir.file("correlations.csv")?,
        &["tau_ns", "g2_cross", "g2_auto_s", "g2_auto_as", "g2_cond", "rc_s", "rc_as"],
        (0..c.len()).filter(|&i| c.tau_grid[i].abs() <= tau_max_ns).map(|i| {
            vec![
                c.tau_grid[i],
                c.g2_cross[i],
                c.g2_auto_s[i],
                c.g2_auto_as[i],
                c.g2_cond[i],
                c.rc_s[i],
                c.rc_as[i],
            ]
        }),
    )?;
    let m = theory_metrics(ctx.scenario, &run)?;
    let v = json!({ "rates": rates_json(&run.rates), "metrics": m, "tau_step_ns": c.tau_step_ns });
    dir.json("summary.json", &v)?;
    Ok(Summary::Json(v))
}

pub fn metrics(ctx: &Context, dir: &mut RunDir) -> Result<Summary> {
    let run = theory(ctx.scenario)?;
    let m = theory_metrics(ctx.scenario, &run)?;
    let v = json!({ "rates": rates_json(&run.rates), "metrics": m });
    dir.json("metrics.json", &v)?;
    Ok(Summary::Json(v))
}

pub fn coincidence(ctx: &Context, dir: &mut RunDir) -> Result<Summary> {
    let sc = ctx.scenario;
    let det = &sc.detection;
    let run = theory(sc)?;
    let gate = Gate::Window {
        length_ns: det.duty.window * 1e9,
    };
    let ex = expected_coincidences(&run.rates, &run.correlations, det, gate)
        .with_context(|| format!("detection: expected counts failed ({})", describe(sc)))?;
    let rate_s = ex.rate_form_s(det);
    let rate_as = ex.rate_form_as(det);
    write_csv(
        dir.file("coincidences.csv")?,
        &["tau_ns", "n_c_s", "n_c_as", "rate_c_s", "rate_c_as"],
        (0..ex.grid.len()).map(|i| vec![ex.grid.center_ns(i), ex.n_c_s[i], ex.n_c_as[i], rate_s[i], rate_as[i]]),
    )?;
    let inv_s = invert_coincidences(&ex.stokes_curve(), det).context("detection: inversion of N_C,s failed")?;
    let inv_as =
        invert_coincidences(&ex.anti_stokes_curve(), det).context("detection: inversion of N_C,as failed")?;
    let strip = |i: &sfwm::detection::Inversion| {
        let mut v = serde_json::to_value(i).unwrap_or(Value::Null);
        if let Some(o) = v.as_object_mut() {
            o.remove("rate_curve");
        }
        v
    };
    let v = json!({
        "hours": det.acquisition_time / 3600.0,
        "model": ex.model,
        "theory": rates_json(&run.rates),
        "recovered": {
            "r_s": inv_as.partner_rate,
            "r_as": inv_s.partner_rate,
            "rp_s": inv_s.pairing_ratio,
            "rp_as": inv_as.pairing_ratio,
            "asymmetry": 1.0 - inv_s.partner_rate / inv_as.partner_rate,
            "r_sb": inv_s.r_sb,
            "tau_delay_ns": inv_s.tau_delay_ns,
        },
        "stokes_trigger": strip(&inv_s),
        "anti_stokes_trigger": strip(&inv_as),
    });
    dir.json("coincidence.json", &v)?;
    Ok(Summary::Json(v))
}

pub fn simulate_events(ctx: &Context, dir: &mut RunDir, csv: bool) -> Result<Summary> {
    let sc = ctx.scenario;
    let det = &sc.detection;
    let run = theory(sc)?;
    let stream = generate_from_theory(
        &run.rates,
        &run.correlations,
        det,
        ctx.seed,
        det.acquisition_time,
        &scenario_hash(sc),
    )
    .with_context(|| format!("event_sim failed (seed={}, {})", ctx.seed, describe(sc)))?;
    write_stream(&stream, dir.file("events.sfwm")?)?;
    if csv {
        write_events_csv(&stream.records, dir.file("events.csv")?)?;
    }
    let v = json!({
        "header": stream.header,
        "counts": counts(&stream),
    });
    dir.json("stream.json", &v)?;
    Ok(Summary::Json(v))
}

fn counts(s: &EventStream) -> Value {
    json!({
        "stokes": s.count(Channel::Stokes),
        "anti_stokes_1": s.count(Channel::AntiStokes1),
        "anti_stokes_2": s.count(Channel::AntiStokes2),
    })
}

fn load_events(path: &Path, sc: &Scenario, hours: Option<f64>) -> Result<(EventStream, bool)> {
    let f = File::open(path).map_err(|e| UsageError(format!("cannot open {}: {e}", path.display())))?;
    let is_csv = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    if !is_csv {
        let s = read_stream(BufReader::new(f)).with_context(|| format!("event_sim: reading {}", path.display()))?;
        return Ok((s, true));
    }
    let records = read_csv(BufReader::new(f)).with_context(|| format!("event_sim: reading {}", path.display()))?;
    let det = &sc.detection;
    // CSV carries no header: the schedule comes from the scenario and the
    // duration from --hours, else from the last cycle seen
    let cycles = match hours {
        Some(h) => cycles_in(h * 3600.0, &det.duty),
        None => records.last().map_or(0, |r| r.cycle + 1),
    };
    let none = SourceRates {
        r_s: 0.0,
        r_as: 0.0,
        rp_s: 0.0,
        rp_as: 0.0,
    };
    let header = StreamHeader {
        format: "sfwm-events".into(),
        scenario_hash: scenario_hash(sc),
        seed: 0,
        rng: RNG_ALGORITHM.into(),
        duty: det.duty,
        duration_s: cycles as f64 * det.duty.cycle_period,
        cycles,
        record_count: records.len() as u64,
        clipped_density_samples: 0,
        truth: GroundTruth::new(&none, 0.0, det),
    };
    let stream = EventStream { header, records };
    stream.validate().with_context(|| format!("event_sim: {}", path.display()))?;
    Ok((stream, false))
}

fn write_histogram(dir: &mut RunDir, name: &str, h: &CoincidenceHistogram, e: &Estimates) -> Result<()> {
    let (cond, cond_err) = g2_conditional_from_cross(&e.g2, Some(&e.g2_err));
    let n = h.grid.len();
    let pick = |v: &[f64], i: usize| v.get(i).copied().unwrap_or(f64::NAN);
    write_csv(
        dir.file(name)?,
        &["tau_ns", "counts", "rate", "rate_err", "g2", "g2_err", "g2_cond", "g2_cond_err"],
        (0..n).map(|i| {
            vec![
                h.grid.center_ns(i),
                h.bins[i] as f64,
                pick(&e.rate, i),
                pick(&e.rate_err, i),
                e.g2[i],
                e.g2_err[i],
                cond[i],
                cond_err[i],
            ]
        }),
    )
}

#[derive(Serialize)]
struct EstimateSummary {
    trigger: Trigger,
    n_trigger: u64,
    n_partner: u64,
    total_coincidences: u64,
    trigger_rate: Measured,
    partner_rate: Measured,
    pairing_ratio: Measured,
    r_sb: Measured,
    tau_delay_ns: Measured,
    purity: f64,
    background: f64,
    r_env: f64,
    tail_start_ns: f64,
    significance: f64,
    low_significance: bool,
}

fn summarise(h: &CoincidenceHistogram, e: &Estimates) -> EstimateSummary {
    EstimateSummary {
        trigger: e.trigger,
        n_trigger: h.n_trigger,
        n_partner: h.n_partner,
        total_coincidences: h.total(),
        trigger_rate: e.trigger_rate,
        partner_rate: e.partner_rate,
        pairing_ratio: e.pairing_ratio,
        r_sb: e.r_sb,
        tau_delay_ns: e.tau_delay_ns,
        purity: e.purity,
        background: e.background,
        r_env: e.r_env,
        tail_start_ns: e.tail_start_ns,
        significance: e.significance,
        low_significance: e.low_significance,
    }
}

pub fn analyze(
    ctx: &Context,
    dir: &mut RunDir,
    input: &Path,
    window_ns: Option<f64>,
    hours: Option<f64>,
) -> Result<Summary> {
    let sc = ctx.scenario;
    let det = &sc.detection;
    let (stream, has_truth) = load_events(input, sc, hours)?;
    let bin_ns = det.bin_width * 1e9;
    let window = window_ns.unwrap_or(det.coincidence_window * 1e9);
    let hs = histogram(&stream, Trigger::Stokes, bin_ns, window).context("analysis: Stokes-triggered histogram")?;
    let ha = histogram(&stream, Trigger::AntiStokes, bin_ns, window)
        .context("analysis: anti-Stokes-triggered histogram")?;
    let es = estimate(&hs, det).context("analysis: Stokes-triggered estimates")?;
    let ea = estimate(&ha, det).context("analysis: anti-Stokes-triggered estimates")?;
    write_histogram(dir, "histogram_stokes.csv", &hs, &es)?;
    write_histogram(dir, "histogram_anti_stokes.csv", &ha, &ea)?;

    let r_s = ea.partner_rate;
    let r_as = es.partner_rate;
    let q = r_as.value / r_s.value;
    let asym = Measured {
        value: 1.0 - q,
        err: q * ((r_as.err / r_as.value).powi(2) + (r_s.err / r_s.value).powi(2)).sqrt(),
    };
    let peak = es.g2.iter().enumerate().filter(|(_, g)| g.is_finite()).max_by(|a, b| a.1.total_cmp(b.1));
    let g2_peak = peak.map(|(i, &g)| {
        let (c, ce) = g2_conditional_from_cross(&[g], Some(&[es.g2_err[i]]));
        json!({
            "tau_ns": hs.grid.center_ns(i),
            "g2_cross": Measured { value: g, err: es.g2_err[i] },
            "g2_cond": Measured { value: c[0], err: ce[0] },
        })
    });
    let mut warnings = Vec::new();
    for e in [&es, &ea] {
        if e.low_significance {
            let who = match e.trigger {
                Trigger::Stokes => "Stokes",
                Trigger::AntiStokes => "anti-Stokes",
            };
            warnings.push(format!(
                "{who}-triggered peak is only {:.1} sigma above background",
                e.significance
            ));
        }
    }
    let truth = has_truth.then_some(stream.header.truth);
    if let Some(t) = &truth {
        let same = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(b.abs());
        if !(same(t.eta_s, det.eta_s)
            && same(t.eta_as, det.eta_as)
            && same(t.r_noise_s, det.r_noise_s)
            && same(t.r_noise_as, det.r_noise_as))
        {
            warnings.push("detection parameters differ from those the stream was generated with".into());
        }
    }
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    let v = json!({
        "input": input,
        "bin_width_ns": bin_ns,
        "window_ns": window,
        "live_time_s": stream.header.live_time_s(),
        "counts": counts(&stream),
        "errors": "statistical (Poisson) only",
        "recovered": {
            "r_s": r_s,
            "r_as": r_as,
            "rp_s": es.pairing_ratio,
            "rp_as": ea.pairing_ratio,
            "asymmetry": asym,
            "r_sb": es.r_sb,
            "tau_delay_ns": es.tau_delay_ns,
            "g2_peak": g2_peak,
        },
        "stokes_trigger": summarise(&hs, &es),
        "anti_stokes_trigger": summarise(&ha, &ea),
        "ground_truth": truth,
        "warnings": warnings,
    });
    dir.json("estimates.json", &v)?;
    Ok(Summary::Json(v))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    Od,
    OmegaD,
    OmegaC,
    DeltaD,
    DeltaC,
    #[value(name = "gamma_21", alias = "gamma21")]
    Gamma21,
    #[value(name = "delta_k_l_over_pi", alias = "dkl-over-pi")]
    DeltaKLOverPi,
}

impl SweepParam {
    fn label(self) -> &'static str {
        match self {
            SweepParam::Od => "od",
            SweepParam::OmegaD => "omega_d",
            SweepParam::OmegaC => "omega_c",
            SweepParam::DeltaD => "delta_d",
            SweepParam::DeltaC => "delta_c",
            SweepParam::Gamma21 => "gamma_21",
            SweepParam::DeltaKLOverPi => "delta_k_l_over_pi",
        }
    }

    fn apply(self, s: &mut Scenario, v: f64) {
        let p = &mut s.system;
        match self {
            SweepParam::Od => p.od = v,
            SweepParam::OmegaD => p.omega_d = v,
            SweepParam::OmegaC => p.omega_c = v,
            SweepParam::DeltaD => p.delta_d = v,
            SweepParam::DeltaC => p.delta_c = v,
            SweepParam::Gamma21 => p.gamma_21 = v,
            SweepParam::DeltaKLOverPi => p.delta_k_l = v * std::f64::consts::PI,
        }
    }
}

pub fn sweep_values(from: f64, to: f64, points: usize, log: bool) -> Result<Vec<f64>> {
    if points == 0 || !from.is_finite() || !to.is_finite() {
        return Err(UsageError("sweep needs finite bounds and at least one point".into()).into());
    }
    if log && !(from > 0.0 && to > 0.0) {
        return Err(UsageError("--log needs positive bounds".into()).into());
    }
    if points == 1 {
        return Ok(vec![from]);
    }
    let n = (points - 1) as f64;
    Ok((0..points)
        .map(|i| {
            let f = i as f64 / n;
            if log {
                (from.ln() + f * (to.ln() - from.ln())).exp()
            } else {
                from + f * (to - from)
            }
        })
        .collect())
}

pub fn sweep(
    ctx: &Context,
    dir: &mut RunDir,
    param: SweepParam,
    from: f64,
    to: f64,
    points: usize,
    log: bool,
) -> Result<Summary> {
    let values = sweep_values(from, to, points, log)?;
    let mut w = dir.file("sweep.csv")?;
    writeln!(w, "param,param_value,quantity,value")?;
    let mut metric_failures = Vec::new();
    for &x in &values {
        let mut s = *ctx.scenario;
        param.apply(&mut s, x);
        s.validate()
            .map_err(|e| UsageError(format!("params: {} = {x}: {e}", param.label())))?;
        let run = theory(&s)?;
        let r = &run.rates;
        let mut rows = vec![
            ("r_s", r.r_s),
            ("r_as", r.r_as),
            ("rp_s", r.rp_s),
            ("rp_as", r.rp_as),
            ("paired_rate", r.paired_rate),
        ];
        // metrics need the correlations to settle inside the grid; a failure
        // there should not discard the rates
        match run.metrics(&s.detection) {
            Ok(m) => rows.extend([
                ("r_sb", m.r_sb),
                ("g2_cross_peak", m.g2_cross_peak),
                ("g2_cond_min", m.g2_cond_min),
                ("tau_delay_ns", m.tau_delay_ns),
                ("tau_c_ns", m.tau_c_ns),
            ]),
            Err(e) => {
                eprintln!("warning: {} = {x}: {e}", param.label());
                metric_failures.push(json!({ "value": x, "error": e.to_string() }));
            }
        }
        for (q, v) in rows {
            writeln!(w, "{},{x:e},{q},{v:e}", param.label())?;
        }
    }
    w.flush()?;
    let v = json!({
        "param": param.label(),
        "values": values,
        "metric_failures": metric_failures,
    });
    dir.json("summary.json", &v)?;
    Ok(Summary::Json(v))
}

/// Published values: rates (s⁻¹), pairing ratios, τ_delay and τ_c (ns), r_SB.
pub struct PublishedRow {
    pub od: f64,
    pub gamma_21: f64,
    pub r_s: f64,
    pub r_as: f64,
    pub rp_s: f64,
    pub rp_as: f64,
    pub tau_delay_ns: f64,
    pub tau_c_ns: f64,
    pub r_sb: f64,
}

pub const PUBLISHED: [PublishedRow; 4] = [
    PublishedRow { od: 20.0, gamma_21: 0.001, r_s: 4.8e5, r_as: 4.5e5, rp_s: 0.70, rp_as: 0.74, tau_delay_ns: 81.0, tau_c_ns: 115.0, r_sb: 22.0 },
    PublishedRow { od: 20.0, gamma_21: 0.1, r_s: 4.8e5, r_as: 3.8e5, rp_s: 0.56, rp_as: 0.71, tau_delay_ns: 70.0, tau_c_ns: 96.0, r_sb: 25.0 },
    PublishedRow { od: 35.0, gamma_21: 0.001, r_s: 8.8e5, r_as: 8.4e5, rp_s: 0.77, rp_as: 0.81, tau_delay_ns: 134.0, tau_c_ns: 195.0, r_sb: 9.7 },
    PublishedRow { od: 35.0, gamma_21: 0.1, r_s: 8.7e5, r_as: 6.0e5, rp_s: 0.54, rp_as: 0.78, tau_delay_ns: 107.0, tau_c_ns: 154.0, r_sb: 11.7 },
];

pub fn table1(ctx: &Context, dir: &mut RunDir) -> Result<Summary> {
    let mut rows = Vec::new();
    for row in &PUBLISHED {
        let mut s = *ctx.scenario;
        s.system.od = row.od;
        s.system.gamma_21 = row.gamma_21;
        s.validate().map_err(|e| UsageError(format!("params: {e}")))?;
        let clock = std::time::Instant::now();
        let run = theory(&s)?;
        let m = theory_metrics(&s, &run)?;
        let secs = clock.elapsed().as_secs_f64();
        let r = &run.rates;
        rows.push((row, vec![
            ("R_s", r.r_s, row.r_s),
            ("R_as", r.r_as, row.r_as),
            ("rp_s", r.rp_s, row.rp_s),
            ("rp_as", r.rp_as, row.rp_as),
            ("tau_delay_ns", m.tau_delay_ns, row.tau_delay_ns),
            ("tau_c_ns", m.tau_c_ns, row.tau_c_ns),
            ("r_sb", m.r_sb, row.r_sb),
        ], secs));
    }
    let mut w = dir.file("table1.csv")?;
    writeln!(w, "od,gamma_21,quantity,computed,published,rel_dev")?;
    let mut text = String::new();
    text.push_str(&format!(
        "{:>4} {:>7} | {:>15} {:>15} {:>13} {:>13} {:>13} {:>13} {:>11} | {:>5}\n",
        "OD", "γ21/Γ", "R_s (1e5/s)", "R_as (1e5/s)", "rp_s", "rp_as", "τ_delay ns", "τ_c ns", "r_SB", "s"
    ));
    let mut json_rows = Vec::new();
    for (row, qs, secs) in &rows {
        let mut line = format!("{:>4} {:>7} |", row.od, row.gamma_21);
        let mut obj = serde_json::Map::new();
        obj.insert("od".into(), json!(row.od));
        obj.insert("gamma_21".into(), json!(row.gamma_21));
        for (i, (name, c, p)) in qs.iter().enumerate() {
            let dev = (c - p) / p;
            writeln!(w, "{},{},{name},{c:e},{p:e},{dev:e}", row.od, row.gamma_21)?;
            obj.insert(name.to_string(), json!({ "computed": c, "published": p, "rel_dev": dev }));
            line.push_str(&match i {
                0 | 1 => format!(" {:>6.2}/{:<4.1}{:>+4.0}%", c / 1e5, p / 1e5, dev * 100.0),
                2 | 3 => format!(" {:>5.3}/{:<4.2}{:>+3.0}%", c, p, dev * 100.0),
                _ => format!(" {:>5.1}/{:<4}{:>+3.0}%", c, p, dev * 100.0),
            });
        }
        obj.insert("seconds".into(), json!(secs));
        line.push_str(&format!(" | {secs:>5.2}\n"));
        text.push_str(&line);
        json_rows.push(Value::Object(obj));
    }
    w.flush()?;
    text.push_str("entries: computed/published and relative deviation\n");
    dir.json("table1.json", &json!({ "rows": json_rows }))?;
    Ok(Summary::Text(text))
}
