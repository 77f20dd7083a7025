//! Static multi-observer on the scalar testbed `x' = -p x + u`.
//!
//! Run with `cargo run --example static_scalar`.

use num_complex::Complex64;
use supobs::input::Sine;
use supobs::odesim::SimConfig;
use supobs::supervisor::{static_bank, LuenbergerDesigner};
use supobs::{run_static, LinearPlant, ParamBox, RunSetup};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let plant = LinearPlant::scalar_testbed();
    let mut designer = LuenbergerDesigner {
        plant: plant.clone(),
        targets: vec![Complex64::new(-2.0, 0.0)],
        nu: 2.0,
    };
    let theta = ParamBox::from_bounds(&[0.5], &[2.5])?;
    let (grid, bank) = static_bank(&mut designer, &theta, 9)?;
    let input = Sine { amplitude: 1.0, omega: 1.0, offset: 0.0 };
    let setup = RunSetup {
        plant: &plant,
        p_true: vec![1.37],
        x0: vec![1.0],
        xhat0: vec![0.0],
        lambda: 0.1,
        sim: SimConfig::new(1e-3, 50.0, None, 100)?,
        input: &input,
        p_star_log: Some(vec![1.37]),
        record_output_errors: false,
        guard_threshold: 1e6,
    };
    let trace = run_static(&setup, bank)?;
    println!("grid: {:?}", grid.points);
    for r in trace.records.iter().step_by(50) {
        println!("t = {:5.1}  sigma = {}  p_hat = {:.4}  |x_err| = {:.2e}", r.t, r.sigma + 1, r.p_hat[0], r.err_x_inf);
    }
    let last = trace.last();
    println!("final p_hat = {:.4}, |p_err| = {:.4} (grid bound {:.4})", last.p_hat[0], last.err_p_inf, grid.distance_bound());
    Ok(())
}
