//! Compares analytic gradients of the full model against central differences.
//!
//! Entries whose gradient is only just above the absolute-error floor can
//! show relative errors near 1e-4 from round-off in the difference quotient;
//! the absolute gap printed for the worst entry tells the two apart.

use casm::data::synthetic::random_log;
use casm::data::SequenceBuilder;
use casm::model::{ModelConfig, ModelParams};
use casm::training::check_model_gradients;

fn main() -> casm::Result<()> {
    let log = random_log(2, 20, 3, 4, 9, 1);
    let batch = SequenceBuilder::new(&log, 6, 2, 1)?.epoch_batches(1)?.remove(0);
    for (plain_block, use_context) in [(false, true), (true, true), (false, false)] {
        let config = ModelConfig {
            num_items: log.num_items(),
            num_behaviors: log.num_behaviors(),
            dim: 8,
            heads: 2,
            blocks: 1,
            max_len: 6,
            use_context,
            plain_block,
        };
        let params = ModelParams::<f64>::init(&config, 1)?;
        let report = check_model_gradients(&params, &batch, &[0.7, 0.2, 0.1], 1.1, 300, 1)?;
        println!(
            "plain_block={plain_block:<5} use_context={use_context:<5} checked {} max relative error {:.2e}",
            report.checked, report.max_relative_error
        );
        if let Some((name, idx, analytic, numeric)) = report.worst {
            println!(
                "  worst: {name}[{idx}] analytic {analytic:.6e} numeric {numeric:.6e} gap {:.1e}",
                (analytic - numeric).abs()
            );
        }
    }
    Ok(())
}
