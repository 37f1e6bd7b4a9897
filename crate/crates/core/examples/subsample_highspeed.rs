//! Frame-rate reduction on dance-like motion: HOTA at full, half and third
//! rate for product and IoU-only fusion.

use tcb::sim::{generate_scenario, run_and_score, subsample, MotionKind, ScenarioConfig, SubsampleRatio};
use tcb::tracker::{FusionMode, TrackerConfig};

fn main() -> tcb::Result<()> {
    let ratios = [SubsampleRatio::Full, SubsampleRatio::Half, SubsampleRatio::Third];
    println!("{:<8} {:>8} {:>8} {:>8}", "fusion", "1.0", "0.5", "0.33");
    for fusion in [FusionMode::Product, FusionMode::IouOnly] {
        let cfg = TrackerConfig { fusion, ..TrackerConfig::default() };
        let mut hota = [0.0; 3];
        for seed in 0..5 {
            let sc = ScenarioConfig {
                motion: MotionKind::SinusoidalDance,
                frames: 150,
                jitter_sigma: 2.0,
                seed,
                ..ScenarioConfig::default()
            };
            let full = generate_scenario(&sc)?;
            for (h, &r) in hota.iter_mut().zip(&ratios) {
                *h += run_and_score(&subsample(&full, r), &cfg)?.hota / 5.0;
            }
        }
        println!("{:<8} {:>8.3} {:>8.3} {:>8.3}", fusion.name(), hota[0], hota[1], hota[2]);
    }
    Ok(())
}
