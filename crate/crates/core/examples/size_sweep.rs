//! Iteration counts against problem size for `50n × 7` matrices without prior.
//!
//! Run with `cargo run --release --example size_sweep [trials]`.

use oed_precond::experiments::{run_exp2, ExperimentConfig, ExperimentId};

fn main() -> oed_precond::Result<()> {
    let mut cfg = ExperimentConfig::new(ExperimentId::Exp2);
    cfg.trials = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(5);
    cfg.sizes = vec![1, 2, 3];
    let outcome = run_exp2(&cfg)?;
    print!("{}", outcome.table());
    Ok(())
}
