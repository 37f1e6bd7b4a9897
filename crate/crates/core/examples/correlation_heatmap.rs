//! Cosine correlation of track templates against a feature map, with an
//! ASCII rendering of one response heatmap.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tcb::appearance::{correlate, Embedding, FeatureMap, TemplateSet};

fn main() -> tcb::Result<()> {
    let (h, w, d) = (12, 24, 16);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut data: Vec<f32> = (0..h * w * d).map(|_| rng.random_range(-1.0..1.0)).collect();
    let templates: Vec<Vec<f32>> =
        (0..2).map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    // Plant a slightly perturbed copy of each template.
    for (t, (x, y)) in templates.iter().zip([(5usize, 3usize), (18, 9)]) {
        let c = (y * w + x) * d;
        for (k, v) in t.iter().enumerate() {
            data[c + k] = v + rng.random_range(-0.05..0.05);
        }
    }
    let set = TemplateSet::new(templates.into_iter().map(Embedding).collect(), vec![7, 8])?;
    let corr = correlate(&set, &FeatureMap::new(h, w, d, data)?)?;
    for (id, heat) in set.track_ids.iter().zip(&corr.heatmaps) {
        let (x, y) = heat.argmax().expect("non-empty map");
        println!("track {id}: peak {:.3} at ({x}, {y})", heat.get(x, y));
    }
    let shades = [' ', '.', ':', '-', '=', '+', '*', '#', '%', '@'];
    for y in 0..h {
        let row: String = (0..w)
            .map(|x| shades[(((corr.heatmaps[0].get(x, y) + 1.0) / 2.0 * 9.0).round() as usize).min(9)])
            .collect();
        println!("|{row}|");
    }
    Ok(())
}
