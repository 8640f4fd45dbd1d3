//! Runs every bound sweep and prints the failing rows, if any.
use sdrn::evalsuite::{verify_bounds, BoundsConfig};

fn main() -> sdrn::Result<()> {
    let report = verify_bounds(&BoundsConfig::default())?;
    for c in report.checks.iter().filter(|c| !c.pass && !c.informational) {
        println!(
            "FAIL {} {} measured={:e} bound={:e}",
            c.sweep, c.params, c.measured, c.bound
        );
    }
    println!(
        "{} checks, {} violations",
        report.checks.len(),
        report.violations()
    );
    Ok(())
}
