//! Static vs dynamic estimation of the excitatory and inhibitory gains of
//! the Jansen-Rit model, driven by the shipped configs.
//!
//! Run with `cargo run --release --example jansen_rit`.

use std::path::Path;

use supobs::harness::{run_experiment, ExperimentConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for name in ["jansen_rit_static.toml", "jansen_rit_dynamic.toml"] {
        let cfg = ExperimentConfig::load(&dir.join(name))?;
        let trace = run_experiment(&cfg, &dir)?;
        let last = trace.last();
        println!(
            "{name}: p_hat = {:?}, |p_err| = {:.4}, state error ratio = {:.3e}, zooms = {}, {:.1} s",
            last.p_hat,
            trace.final_param_error_euclid(&cfg.plant.p_true),
            trace.normalized_state_error(),
            trace.zoom_events.len(),
            trace.wall_seconds
        );
    }
    Ok(())
}
