//! Prior-information sweep on a handful of random `50 × 7` matrices.
//!
//! Run with `cargo run --release --example prior_sweep [trials]`.

use oed_precond::experiments::{run_exp1, ExperimentConfig, ExperimentId};

fn main() -> oed_precond::Result<()> {
    let mut cfg = ExperimentConfig::new(ExperimentId::Exp1);
    cfg.trials = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(5);
    let outcome = run_exp1(&cfg)?;
    print!("{}", outcome.table());
    Ok(())
}
