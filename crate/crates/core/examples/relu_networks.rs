//! Explicit ReLU networks for squares, products and tensor hat functions.
use sdrn::relu::{
    build_basis_network, build_pair_network, build_square_network, pair_error_bound, square_approx,
};
use sdrn::BasisId;

fn main() -> sdrn::Result<()> {
    println!("square networks");
    for r in 1..=6 {
        let net = build_square_network(r)?;
        let c = net.complexity();
        let x = 2f64.powi(-(r as i32) - 1);
        println!(
            "  R={r} depth={} units={} weights={}  |f_R(x) - x²| at x={x} is {:.3e}",
            c.depth,
            c.units,
            c.weights,
            (square_approx(r, x) - x * x).abs()
        );
    }
    println!("pair networks");
    for r in [1, 3, 5] {
        let c = build_pair_network(r)?.complexity();
        println!(
            "  R={r} depth={} units={} bound={:.3e}",
            c.depth,
            c.units,
            pair_error_bound(r)
        );
    }
    let id = BasisId::new(vec![1, 2, 0, 3], vec![1, 3, 1, 5])?;
    let net = build_basis_network(4, &id)?;
    let x = [0.4, 0.7, 0.2, 0.6];
    println!(
        "basis network for levels {:?}: {:?}, value {:.6} (exact {:.6})",
        id.levels(),
        net.complexity(),
        net.eval_scalar(&x)?,
        sdrn::relu::exact_basis_eval(&id, &x)
    );
    Ok(())
}
