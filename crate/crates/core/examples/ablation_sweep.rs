//! Fusion-mode ablation over seeded scenarios, including the linear-fusion
//! weight grid.

use tcb::commands::{ablation_table, parse_modes, run_ablation, AblationPlan, KalmanChoice};
use tcb::sim::{MotionKind, ScenarioConfig, SubsampleRatio};
use tcb::tracker::TrackerConfig;

fn main() -> tcb::Result<()> {
    let plan = AblationPlan {
        scenario: ScenarioConfig {
            motion: MotionKind::Crossing,
            num_agents: 8,
            frames: 100,
            appearance_gap: 0.3,
            jitter_sigma: 4.0,
            ..ScenarioConfig::default()
        },
        tracker: TrackerConfig::default(),
        modes: parse_modes("product,linear,iou")?,
        kalman: KalmanChoice::On,
        ratios: vec![SubsampleRatio::Full],
        seeds: 5,
        iou_threshold: 0.5,
    };
    print!("{}", ablation_table(&run_ablation(&plan)?));
    Ok(())
}
