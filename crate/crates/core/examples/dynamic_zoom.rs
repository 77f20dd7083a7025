//! Dynamic sampling on the scalar testbed: the parameter box shrinks by
//! `alpha` around the current estimate every `td` seconds.
//!
//! Run with `cargo run --example dynamic_zoom`.

use num_complex::Complex64;
use supobs::input::Sine;
use supobs::odesim::SimConfig;
use supobs::supervisor::LuenbergerDesigner;
use supobs::{run_dynamic, LinearPlant, ParamBox, RunSetup};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let plant = LinearPlant::scalar_testbed();
    let mut designer = LuenbergerDesigner {
        plant: plant.clone(),
        targets: vec![Complex64::new(-2.0, 0.0)],
        nu: 2.0,
    };
    let input = Sine { amplitude: 1.0, omega: 1.0, offset: 0.0 };
    let setup = RunSetup {
        plant: &plant,
        p_true: vec![1.37],
        x0: vec![1.0],
        xhat0: vec![0.0],
        lambda: 0.1,
        sim: SimConfig::new(1e-3, 50.0, Some(5.0), 100)?,
        input: &input,
        p_star_log: Some(vec![1.37]),
        record_output_errors: false,
        guard_threshold: 1e6,
    };
    let theta = ParamBox::from_bounds(&[0.5], &[2.5])?;
    let trace = run_dynamic(&setup, &mut designer, theta, 5, 0.5)?;
    for ev in &trace.zoom_events {
        println!(
            "zoom {} at t = {:4.1}: p_hat = {:.5}, |p_err| before = {:.5}, new box [{:.5}, {:.5}]",
            ev.k,
            ev.t,
            ev.p_hat[0],
            ev.err_p_inf_before,
            ev.bx.lower()[0],
            ev.bx.upper()[0]
        );
    }
    println!("final |p_err| = {:.2e}", trace.last().err_p_inf);
    Ok(())
}
