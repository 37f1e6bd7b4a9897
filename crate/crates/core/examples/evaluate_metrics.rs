//! CLEAR, identity and HOTA metrics on a tiny hand-built sequence with one
//! miss, one false positive and one identity switch.

use tcb::geometry::BBox;
use tcb::metrics::{evaluate, TrackRecord};

fn rec(frame: u32, id: u64, x: f64) -> TrackRecord {
    TrackRecord { frame, id, bbox: BBox::new(x, 0.0, 10.0, 10.0).unwrap(), conf: 1.0 }
}

fn main() -> tcb::Result<()> {
    let gt: Vec<_> = (1..=3).flat_map(|f| [rec(f, 1, 0.0), rec(f, 2, 50.0)]).collect();
    let pred = vec![
        rec(1, 1, 0.0),
        rec(1, 2, 51.0),
        rec(2, 1, 2.0),
        rec(2, 3, 200.0),
        rec(3, 1, 0.0),
        rec(3, 4, 53.0),
    ];
    let report = evaluate(&gt, &pred, 0.5)?;
    println!("{}", report.table());
    println!("{}", report.summary());
    println!("alpha   DetA   AssA   HOTA");
    for a in report.per_alpha.iter().step_by(3) {
        println!("{:.2}   {:.3}  {:.3}  {:.3}", a.alpha, a.deta(), a.assa(), a.hota());
    }
    Ok(())
}
