//! The five-row ablation table on a few seeds, with per-label medians.
//!
//!     cargo run --release --example ablation_table -- [seeds]

use std::path::Path;

use modrl_ta::harness::{ablation_matrix, artifacts, median_combined, ExperimentConfig};

fn main() -> modrl_ta::Result<()> {
    let seeds: u64 = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(2);
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/ablation.toml");
    let base = ExperimentConfig::load(&path)?;
    let mut rows = Vec::new();
    for seed in 0..seeds {
        let cfg = ExperimentConfig {
            seed,
            ..base.clone()
        };
        rows.extend(ablation_matrix(&cfg)?.into_iter().map(|r| r.metrics));
    }
    print!("{}", artifacts::summary(&rows));
    println!();
    for (label, m) in median_combined(&rows) {
        println!("median combined {label:<32} {m:.4}");
    }
    Ok(())
}
