//! Behavior-weight and context ablations on the synthetic auxiliary-signal log.

use casm::app::{alpha_grid, context_grid, run_ablation_on, Command, RunConfig};
use casm::data::synthetic::{auxiliary_signal_log, AuxSignalConfig};

fn main() -> casm::Result<()> {
    let log = auxiliary_signal_log(&AuxSignalConfig::default(), 3);
    let mut cfg = RunConfig::defaults(Command::Ablate);
    cfg.hp.dim = 32;
    cfg.hp.max_len = 30;
    cfg.hp.learning_rate = 0.005;
    cfg.hp.batch_size = 32;
    cfg.hp.epochs = 20;
    cfg.eval_seeds = 1;

    let mut grid = alpha_grid(log.num_behaviors())?;
    grid.extend(context_grid(Some(vec![0.7, 0.1, 0.1, 0.1])));
    let table = run_ablation_on(&cfg, &log, &grid)?;
    print!("{}", table.render());
    Ok(())
}
