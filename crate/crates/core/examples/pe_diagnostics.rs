//! Windowed output-error energy of each observer in a static bank, against
//! its parameter error.
//!
//! Run with `cargo run --example pe_diagnostics`.

use std::path::Path;

use supobs::harness::{run_experiment, ExperimentConfig};
use supobs::pe::pe_report;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let cfg = ExperimentConfig::load(&dir.join("scalar_linear_static.toml"))?;
    let trace = run_experiment(&cfg, &dir)?;
    let oe = trace.output_errors.as_ref().expect("config records output errors");
    let times: Vec<f64> = trace.records.iter().map(|r| r.t).collect();
    let y_errs: Vec<Vec<Vec<f64>>> = (0..trace.final_params.len())
        .map(|i| oe.iter().map(|rec| rec[i].clone()).collect())
        .collect();
    let p_errs: Vec<f64> = trace.final_params.iter().map(|p| (p[0] - cfg.plant.p_true[0]).abs()).collect();
    let report = pe_report(&times, &y_errs, &p_errs, 20.0)?;
    println!("{:>8} {:>10} {:>14}", "p_i", "|p_err|", "min energy");
    for (p, (e, m)) in trace.final_params.iter().zip(p_errs.iter().zip(&report.min_energy)) {
        println!("{:>8.4} {:>10.4} {:>14.6e}", p[0], e, m);
    }
    println!("Spearman rank correlation: {:?}", report.scatter.spearman);
    Ok(())
}
