//! L² error of sparse-grid interpolation of a smooth bump as the level grows.
use sdrn::evalsuite::{interpolation_error, BUMP_2D_D2_NORM};
use sdrn::sparse_grid::approximation_bound;

fn main() -> sdrn::Result<()> {
    let mut prev: Option<f64> = None;
    println!(
        "{:>2} {:>12} {:>12} {:>8}",
        "m", "L2 error", "bound", "ratio"
    );
    for m in 1..=6 {
        let err = interpolation_error(m, 100_000, 1)?;
        let bound = approximation_bound(2, m, BUMP_2D_D2_NORM, 1.0)?;
        let ratio = prev.map_or("-".to_string(), |p| format!("{:.2}", p / err));
        println!("{m:>2} {err:>12.4e} {bound:>12.4e} {ratio:>8}");
        prev = Some(err);
    }
    Ok(())
}
