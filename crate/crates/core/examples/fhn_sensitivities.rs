//! FitzHugh-Nagumo trajectory with forward sensitivities, and the design
//! Jacobian with its control derivatives.

use oed_precond::fhn::{design_jacobian, integrate_with_sensitivities, FhnModel, Tolerances};

fn main() -> oed_precond::Result<()> {
    let tol = Tolerances::default();
    let q = [0.2, -1.0, 0.5];
    let model = FhnModel::new(8, q);
    let traj = integrate_with_sensitivities(&model, &tol)?;
    traj.write_csv(std::io::stdout().lock(), true)?;

    let (j, dj) = design_jacobian(&model, &q, &tol)?;
    println!("\nJ is {} x {}", j.rows(), j.cols());
    for (name, d) in ["I", "x01", "x02"].iter().zip(&dj) {
        println!("max |dJ/d{name}| = {:.6e}", d.max_abs());
    }
    Ok(())
}
