//! Loads an interaction file (user, item, behavior, timestamp; tab-separated)
//! and prints its statistics. Without an argument a small file is written
//! to a temporary directory first.

use casm::app::{summarize, Command, RunConfig};
use casm::data::{InteractionLog, LoadOptions};

fn main() -> casm::Result<()> {
    let path = match std::env::args().nth(1) {
        Some(p) => std::path::PathBuf::from(p),
        None => {
            let p = std::env::temp_dir().join("casm_inspect_example.tsv");
            let mut text = String::from("#items=8 behaviors=2\n");
            for (u, i, b, t) in [(1, 3, 1, 10), (1, 4, 0, 11), (1, 5, 0, 12), (2, 3, 1, 5), (2, 6, 0, 9), (3, 2, 0, 1)] {
                text.push_str(&format!("{u}\t{i}\t{b}\t{t}\n"));
            }
            std::fs::write(&p, text)?;
            p
        }
    };
    let log = InteractionLog::load(&path, &LoadOptions::default())?;
    let cfg = RunConfig::defaults(Command::InspectData);
    print!("{}", summarize(&cfg, &log)?.render());
    Ok(())
}
