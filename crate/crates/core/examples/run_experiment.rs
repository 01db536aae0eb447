//! Runs the full pipeline (ML pretraining, RL, evaluation) with the desk
//! preset and prints the comparison table.
//!
//! ```sh
//! cargo run --example run_experiment -- /tmp/summ-desk
//! ```

use summ::pipeline::{Experiment, RunConfig, Stage};

fn main() -> summ::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let out = std::env::args().nth(1).unwrap_or_else(|| "summ-desk".into());
    let mut cfg = RunConfig::desk();
    cfg.apply_env()?;
    let exp = Experiment::new(cfg, &out)?;
    exp.run(Stage::All)?;
    print!("{}", std::fs::read_to_string(exp.layout.comparison())?);
    Ok(())
}
