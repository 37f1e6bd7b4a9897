//! Training targets and loss: object selection across two frames, size-adaptive
//! gaussian targets, the logistic-MSE loss and its gradient check.

use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tcb::appearance::{Embedding, Heatmap};
use tcb::commands::{gradient_check, random_loss_instance};
use tcb::geometry::BBox;
use tcb::training::{
    gaussian_heatmap, logistic_mse_loss, pair_by_id, select_objects, size_adaptive_sigma, squash,
    GaussianSpec, DEFAULT_SELECTION_ALPHA,
};

fn main() -> tcb::Result<()> {
    let stride = 8.0;
    let gt_prev = [BBox::new(10.0, 10.0, 40.0, 80.0)?, BBox::new(100.0, 20.0, 30.0, 60.0)?];
    let gt_cur = [BBox::new(14.0, 12.0, 40.0, 80.0)?, BBox::new(200.0, 20.0, 30.0, 60.0)?];
    let emb = |v: f32| Embedding(vec![v, 1.0 - v]);
    let cands_prev =
        vec![(BBox::new(11.0, 10.0, 40.0, 80.0)?, emb(0.9)), (BBox::new(101.0, 21.0, 30.0, 60.0)?, emb(0.2))];
    let cands_cur = vec![(BBox::new(14.0, 13.0, 40.0, 80.0)?, emb(0.88))];

    let prev = select_objects(&cands_prev, &gt_prev, &[1, 2], DEFAULT_SELECTION_ALPHA)?;
    let cur = select_objects(&cands_cur, &gt_cur, &[1, 2], DEFAULT_SELECTION_ALPHA)?;
    println!("selected previous ids {:?}, current ids {:?}", prev.selected_ids, cur.selected_ids);

    let (gh, gw) = (16, 16);
    let mut centers = HashMap::new();
    for (id, b) in [(1u64, gt_cur[0]), (2, gt_cur[1])] {
        let (cx, cy) = b.center();
        let sigma = size_adaptive_sigma(&b, stride)?;
        centers.insert(
            id,
            GaussianSpec {
                cx: (cx / stride).round().min(gw as f64 - 1.0),
                cy: (cy / stride).round().min(gh as f64 - 1.0),
                sigma,
            },
        );
    }
    let pair = pair_by_id(&prev, &cur, &centers)?;
    println!("training pair ids {:?}, sigma {:.3}", pair.shared_ids, pair.gt_centers[0].sigma);

    let target = gaussian_heatmap(&pair.gt_centers[0], gh, gw)?;
    let flat = Heatmap::filled(gh, gw, squash(0.0));
    let good =
        Heatmap::new(gh, gw, target.values.iter().map(|t| (0.02 + 0.96 * t).clamp(0.01, 0.99)).collect())?;
    for (name, pred) in [("flat prediction", &flat), ("target-shaped prediction", &good)] {
        let r = logistic_mse_loss(std::slice::from_ref(pred), std::slice::from_ref(&target))?;
        println!("{name}: loss {:.4}", r.loss);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (pred, gt) = random_loss_instance(16, 16, 3, &mut rng)?;
    println!("finite-difference check: max relative error {:.2e}", gradient_check(&pred, &gt, 1e-4)?);
    Ok(())
}
