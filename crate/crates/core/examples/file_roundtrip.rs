//! Writes a simulated sequence directory, reads it back, tracks it from disk
//! and scores the written results file.

use tcb::commands::{eval, track};
use tcb::config::RunConfig;
use tcb::io::{SequenceData, DETECTIONS_FILE, EMBEDDINGS_FILE, GT_FILE};

fn main() -> tcb::Result<()> {
    let dir = std::env::temp_dir().join(format!("tcb-file-roundtrip-{}", std::process::id()));
    let mut cfg = RunConfig::default();
    cfg.set("frames", "40")?;
    cfg.set("num_agents", "5")?;
    cfg.set("embedding_dim", "64")?;
    println!("{}", tcb::commands::simulate(&cfg, &dir)?);

    let seq = SequenceData::read(&dir)?;
    println!(
        "read back {} frames of '{}' at {} fps, dim {}",
        seq.frames.len(),
        seq.meta.name,
        seq.meta.fps,
        seq.meta.embedding_dim
    );
    for name in std::fs::read_dir(&dir).map_err(|e| tcb::Error::io(&dir, e))?.flatten() {
        let len = name.metadata().map(|m| m.len()).unwrap_or(0);
        println!("  {:<12} {len:>8} bytes", name.file_name().to_string_lossy());
    }

    let results = dir.join("results.txt");
    println!("{}", track(&dir.join(DETECTIONS_FILE), &dir.join(EMBEDDINGS_FILE), &cfg.tracker, &results)?);
    println!("{}", eval(&dir.join(GT_FILE), &results, cfg.iou_threshold)?);
    std::fs::remove_dir_all(&dir).map_err(|e| tcb::Error::io(&dir, e))?;
    Ok(())
}
