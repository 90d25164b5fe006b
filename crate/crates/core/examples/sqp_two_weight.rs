//! SQP on the two-weight problem `min Tr([α⁻¹I + diag(w)]⁻¹)`, `w₁ + w₂ = 1`,
//! from a lopsided start. The unpreconditioned run slows down as `α` shrinks.

use oed_precond::criterion::DesignNlp;
use oed_precond::model_problem::ModelProblem;
use oed_precond::sqp::{solve, SqpOptions};

fn main() -> oed_precond::Result<()> {
    let options = SqpOptions::default();
    println!(
        "{:>8} {:>4} {:>6} {:>12} {:>12}",
        "alpha", "var", "iters", "w1", "status"
    );
    for alpha in [1.0, 1e-1, 1e-2, 1e-3, 1e-4] {
        for pre in [false, true] {
            let mp = ModelProblem::new(alpha, pre)?;
            let mut nlp = DesignNlp::new(mp.design_problem());
            let report = solve(&mut nlp, &[0.9, 0.1], &options)?;
            println!(
                "{:>8.0e} {:>4} {:>6} {:>12.9} {:>12}",
                alpha,
                if pre { "p" } else { "u" },
                report.iterations,
                report.x[0],
                report.status.as_str()
            );
        }
    }
    Ok(())
}
