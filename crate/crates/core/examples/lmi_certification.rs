//! Checking circle-criterion observer gains against the LMI, on a scalar
//! Lure system and on the Jansen-Rit gains file.
//!
//! Run with `cargo run --example lmi_certification`.

use std::path::Path;

use supobs::gain_design::{verify_cc_gains, CCLmiData, GainTable};
use supobs::models::{jansen_rit_plant, JansenRitParams, LureMatrices};
use supobs::Mat;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mats = LureMatrices {
        a: Mat::from_element(1, 1, -3.0),
        g: Mat::from_element(1, 1, 1.0),
        b: Mat::zeros(1, 0),
        c: Mat::from_element(1, 1, 1.0),
        h: Mat::from_element(1, 1, 1.0),
    };
    for nu in [1.0, 100.0] {
        let data = CCLmiData {
            p: Mat::from_element(1, 1, 1.0),
            m_diag: vec![1.0],
            k: Mat::zeros(1, 1),
            l: Mat::zeros(1, 1),
            lmi_nu: nu,
            lmi_mu: 10.0,
            sector_upper: vec![1.0],
        };
        match verify_cc_gains(&data, &mats, None) {
            Ok(c) => println!("nu = {nu}: certified, max eig {:.6}, decay rate {:.4}", c.max_eig, c.assumption2()?.lambda0),
            Err(e) => println!("nu = {nu}: rejected ({e})"),
        }
    }

    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/jansen_rit_gains.toml");
    let table = GainTable::load(&path)?;
    let plant = jansen_rit_plant(JansenRitParams::default())?;
    let entry = table.lookup("circle_criterion", &[6.5, 25.5])?;
    let data = entry.cc_data()?;
    for p in [[4.0, 22.0], [8.0, 22.0], [4.0, 28.0], [8.0, 28.0], [6.5, 25.5]] {
        let cert = verify_cc_gains(&data, &plant.matrices(&p), None)?;
        println!("Jansen-Rit at {p:?}: max eig {:.3e}", cert.max_eig);
    }
    Ok(())
}
