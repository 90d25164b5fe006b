//! Optimal measurement times and controls for the FitzHugh-Nagumo model,
//! one filtered start solved with both formulations.
//!
//! Run with `cargo run --release --example fhn_design [num_times]`.

use oed_precond::criterion::{DesignNlp, DesignProblem};
use oed_precond::dense::RngStream;
use oed_precond::fhn::{
    initial_guess_filter, FhnJacobian, FhnModel, Tolerances, CONTROL_BOUNDS,
    DEFAULT_FILTER_THRESHOLD, NUM_PARAMS,
};
use oed_precond::sqp::{solve, SqpOptions};

const BUDGET: usize = 30;

fn main() -> oed_precond::Result<()> {
    let times: usize = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(40);
    let tol = Tolerances::default();
    let model = FhnModel::new(times, [0.0; 3]);
    let m = model.num_candidates();
    let q0 = initial_guess_filter(
        &model,
        &mut RngStream::new(7),
        DEFAULT_FILTER_THRESHOLD,
        &tol,
    )?;
    println!("start controls {q0:?}");

    for pre in [false, true] {
        let problem = DesignProblem::controlled(
            Box::new(FhnJacobian::new(model.clone(), tol)),
            m,
            NUM_PARAMS,
            BUDGET,
            None,
            CONTROL_BOUNDS.to_vec(),
            pre,
        )?;
        let mut x0 = vec![BUDGET as f64 / m as f64; m];
        x0.extend(q0);
        let mut nlp = DesignNlp::new(problem);
        let report = solve(&mut nlp, &x0, &SqpOptions::default())?;
        let (w, q) = nlp.split(&report.x);
        let selected: Vec<String> = w
            .iter()
            .enumerate()
            .filter(|(_, &wi)| wi > 1e-6)
            .map(|(i, wi)| format!("x{}@{}:{:.2}", i % 2 + 1, model.times()[i / 2], wi))
            .collect();
        println!(
            "\n{}: {} iterations, {}, q = {:?}",
            if pre {
                "preconditioned"
            } else {
                "unpreconditioned"
            },
            report.iterations,
            report.status.as_str(),
            q
        );
        println!("selected: {}", selected.join(" "));
    }
    Ok(())
}
