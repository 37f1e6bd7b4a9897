//! Fused detection scores and greedy non-maximum suppression.

use tcb::geometry::{fuse_score, iou, nms, BBox, ScoredBox, DEFAULT_NMS_IOU};

fn main() -> tcb::Result<()> {
    let raw = [
        (BBox::new(100.0, 100.0, 40.0, 80.0)?, 0.95, vec![0.9, 0.1]),
        (BBox::new(104.0, 102.0, 40.0, 80.0)?, 0.90, vec![0.8, 0.2]),
        (BBox::new(300.0, 120.0, 42.0, 84.0)?, 0.70, vec![0.6, 0.4]),
        (BBox::new(118.0, 100.0, 40.0, 80.0)?, 0.60, vec![0.7, 0.3]),
    ];
    let mut boxes = Vec::new();
    for (bbox, conf, probs) in raw {
        println!("conf {conf:.2} x class {:?} -> fused {:.3}", probs, fuse_score(conf, &probs)?);
        boxes.push(ScoredBox::new(bbox, conf, probs)?);
    }
    println!(
        "IoU(0, 1) = {:.3}, IoU(0, 3) = {:.3}",
        iou(&boxes[0].bbox, &boxes[1].bbox),
        iou(&boxes[0].bbox, &boxes[3].bbox)
    );
    for thr in [0.3, 0.5, DEFAULT_NMS_IOU] {
        println!("nms @ {thr}: kept {:?}", nms(&boxes, thr));
    }
    Ok(())
}
