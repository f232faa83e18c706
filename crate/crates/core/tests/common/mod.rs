#![allow(dead_code)]

use sfwm::event_sim::{EventRecord, EventStream, GroundTruth, SourceRates, StreamHeader, RNG_ALGORITHM};
use sfwm::params::{DetectionParams, NumericsConfig};

/// Coarse grid for property tests; resolves ~5 ns.
pub fn coarse_numerics() -> NumericsConfig {
    NumericsConfig {
        freq_halfwidth: 16.0,
        freq_points: 4096,
        z_quadrature_nodes: 16,
        ..NumericsConfig::default()
    }
}

/// Stream wrapper with no generator behind it.
pub fn bare_stream(cycles: u64, records: Vec<EventRecord>) -> EventStream {
    let det = DetectionParams::default();
    let none = SourceRates {
        r_s: 0.0,
        r_as: 0.0,
        rp_s: 0.0,
        rp_as: 0.0,
    };
    EventStream {
        header: StreamHeader {
            format: "sfwm-events".into(),
            scenario_hash: String::new(),
            seed: 0,
            rng: RNG_ALGORITHM.into(),
            duty: det.duty,
            duration_s: cycles as f64 * det.duty.cycle_period,
            cycles,
            record_count: records.len() as u64,
            clipped_density_samples: 0,
            truth: GroundTruth::new(&none, 0.0, &det),
        },
        records,
    }
}
