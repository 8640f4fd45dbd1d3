//! Sparse-grid basis sizes with their closed-form bounds.
use sdrn::sparse_grid::{basis_count, cardinality_bounds, full_grid_count};

fn main() -> sdrn::Result<()> {
    println!(
        "{:>2} {:>2} {:>10} {:>12} {:>12} {:>14}",
        "d", "m", "sparse", "lower", "upper", "full grid"
    );
    for d in 2..=8 {
        for m in 0..=4 {
            let (lo, hi) = cardinality_bounds(d, m)?;
            println!(
                "{d:>2} {m:>2} {:>10} {lo:>12.0} {hi:>12.0} {:>14}",
                basis_count(d, m),
                full_grid_count(d, m)
            );
        }
    }
    Ok(())
}
