//! Constant-velocity Kalman filter following a moving box, then coasting
//! through a three-frame occlusion.

use tcb::geometry::BBox;
use tcb::kalman::{kf_init, kf_predict, kf_update, KalmanParams};

fn main() -> tcb::Result<()> {
    let params = KalmanParams::default();
    let truth = |t: f64| BBox::new(50.0 + 4.0 * t, 200.0 + 1.5 * t, 40.0, 80.0);
    let mut state = kf_init(&truth(0.0)?, &params);
    println!("frame  predicted_cx  true_cx  error_px  observed");
    for t in 1..=25 {
        let prior = kf_predict(&state, &params);
        let gt = truth(t as f64)?;
        let (p, g) = (prior.to_bbox().center(), gt.center());
        let err = ((p.0 - g.0).powi(2) + (p.1 - g.1).powi(2)).sqrt();
        let occluded = (15..18).contains(&t);
        println!("{t:>5}  {:>12.2}  {:>7.2}  {err:>8.3}  {}", p.0, g.0, !occluded);
        state = if occluded { prior } else { kf_update(&prior, &gt, &params)? };
    }
    Ok(())
}
