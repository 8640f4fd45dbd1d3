//! A small replication study on the first simulation model.
use sdrn::evalsuite::{run_replications, NoiseKind, SimModel, SimModelSpec, TuningGrid};
use sdrn::FitConfig;

fn main() -> sdrn::Result<()> {
    let spec = SimModelSpec {
        model: SimModel::One,
        n: 500,
        noise: NoiseKind::Normal,
        seed: 7,
    };
    let grid = TuningGrid {
        kappas: vec![0.5, 1.0, 2.0],
        cs: vec![-1, 0, 1],
    };
    let report = run_replications(&spec, &FitConfig::default(), &grid, 4)?;
    print!("{}", report.to_csv());
    let best = report.best_cell();
    println!("best cell: kappa={} c={}", best.kappa, best.c);
    Ok(())
}
