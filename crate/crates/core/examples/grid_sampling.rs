//! Grid sampling of a parameter box and a few zoom steps.
//!
//! Run with `cargo run --example grid_sampling`.

use supobs::sampling::{distance_to_set, zoom_update, ZoomState};
use supobs::{grid_sample, ParamBox};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let theta = ParamBox::from_bounds(&[4.0, 22.0], &[8.0, 28.0])?;
    for m in [2, 4, 5] {
        let grid = grid_sample(&theta, m)?;
        let (d, i) = distance_to_set(&[6.5, 25.5], &grid)?;
        println!(
            "m = {m}: {} points, bound {:.3}, nearest to (6.5, 25.5) is {:?} at {d:.3}",
            grid.len(),
            grid.distance_bound(),
            grid.points[i]
        );
    }
    let mut zoom = ZoomState::new(theta, 0.8)?;
    for k in 1..=4 {
        let grid = zoom_update(&mut zoom, &[7.9, 25.5], 10.0 * k as f64, 5)?;
        let bx = &zoom.current_box;
        println!(
            "stage {k}: box {:?} .. {:?}, volume {:.3}, bound {:.3}",
            bx.lower(),
            bx.upper(),
            bx.volume(),
            grid.distance_bound()
        );
    }
    Ok(())
}
