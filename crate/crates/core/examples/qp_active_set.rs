//! A small box- and budget-constrained QP solved by the primal active-set method.

use oed_precond::dense::DenseMatrix;
use oed_precond::qp::{project_feasible, solve_qp, LinearEquality, QpProblem};

fn main() -> oed_precond::Result<()> {
    // minimize ½xᵀHx + gᵀx  s.t.  Σx = 2.5, 0 ≤ x ≤ 1
    let h = DenseMatrix::from_rows(&[
        vec![4.0, 1.0, 0.0, 0.0],
        vec![1.0, 3.0, 0.5, 0.0],
        vec![0.0, 0.5, 2.0, 0.2],
        vec![0.0, 0.0, 0.2, 1.0],
    ])?;
    let g = vec![-1.0, -4.0, 0.5, -3.0];
    let eq = LinearEquality {
        coeffs: vec![1.0; 4],
        rhs: 2.5,
    };
    let (lower, upper) = (vec![0.0; 4], vec![1.0; 4]);
    let x0 = project_feasible(Some(&eq), &lower, &upper, &[0.0; 4])?;
    let qp = QpProblem::new(h, g, Some(eq), lower, upper);
    let sol = solve_qp(&qp, &x0)?;

    println!(
        "status      {:?} after {} iterations",
        sol.status, sol.iterations
    );
    println!("x           {:?}", sol.x);
    println!("objective   {:.12}", qp.objective(&sol.x));
    println!("lambda      {:.12}", sol.eq_multiplier);
    for ab in &sol.active_set {
        println!(
            "active      x[{}] at {:?} bound, z = {:.6}",
            ab.index, ab.side, sol.bound_multipliers[ab.index]
        );
    }
    println!("kkt residual {:.3e}", sol.kkt_residual(&qp));
    Ok(())
}
