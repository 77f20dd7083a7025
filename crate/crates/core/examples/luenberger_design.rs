//! Eigenvalue assignment and the quadratic Lyapunov certificate of a
//! Luenberger observer for a double integrator.
//!
//! Run with `cargo run --example luenberger_design`.

use num_complex::Complex64;
use supobs::gain_design::design_luenberger;
use supobs::linalg::spectrum;
use supobs::Mat;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let a = Mat::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
    let c = Mat::from_row_slice(1, 2, &[1.0, 0.0]);
    let targets = [Complex64::new(-1.0, 0.0), Complex64::new(-1.0, 0.0)];
    let (l, cert) = design_luenberger(&a, &c, &targets, 1.0)?;
    println!("L = {}", l.transpose());
    println!("eig(A + LC) = {:?}", spectrum(&(&a + &l * &c))?);
    println!("P = {}", cert.p_matrix);
    println!("a1 = {:.4}, a2 = {:.4}, lambda0 = {:.4}", cert.a1, cert.a2, cert.lambda0);
    Ok(())
}
