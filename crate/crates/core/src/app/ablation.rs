use std::fmt::Write as _;
use std::fs;
use std::io::Write;

use super::config::{AblationKind, RunConfig};
use super::pipeline::{load_dataset, run_experiment, split_log, write_run_header};
use crate::data::InteractionLog;
use crate::error::{CasmError, Result};
use crate::eval::MetricSummary;

/// Cutoff reported in ablation tables.
pub const ABLATION_N: usize = 10;

/// The nine α rows used for four-behavior datasets, primary behavior first.
pub const ALPHA_GRID_4: [[f64; 4]; 9] = [
    [1.0, 0.0, 0.0, 0.0],
    [0.9, 0.1, 0.0, 0.0],
    [0.8, 0.1, 0.1, 0.0],
    [0.7, 0.1, 0.1, 0.1],
    [0.6, 0.2, 0.1, 0.1],
    [0.5, 0.2, 0.2, 0.1],
    [0.4, 0.3, 0.2, 0.1],
    [0.3, 0.3, 0.3, 0.1],
    [0.3, 0.3, 0.2, 0.2],
];

/// The nine α rows used for three-behavior datasets.
pub const ALPHA_GRID_3: [[f64; 3]; 9] = [
    [1.0, 0.0, 0.0],
    [0.9, 0.1, 0.0],
    [0.8, 0.1, 0.1],
    [0.7, 0.1, 0.1],
    [0.6, 0.2, 0.1],
    [0.5, 0.2, 0.2],
    [0.4, 0.3, 0.2],
    [0.3, 0.3, 0.3],
    [0.3, 0.3, 0.2],
];

#[derive(Debug, Clone, PartialEq)]
pub struct AblationCell {
    pub alpha: Option<Vec<f64>>,
    pub use_context: bool,
}

impl AblationCell {
    pub fn label(&self) -> String {
        let alpha = match &self.alpha {
            Some(a) => format!("({})", a.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(", ")),
            None => "(1, …, 1)".into(),
        };
        if self.use_context {
            alpha
        } else {
            format!("{alpha} no context")
        }
    }
}

pub fn alpha_grid(num_behaviors: usize) -> Result<Vec<AblationCell>> {
    let rows: Vec<Vec<f64>> = match num_behaviors {
        4 => ALPHA_GRID_4.iter().map(|r| r.to_vec()).collect(),
        3 => ALPHA_GRID_3.iter().map(|r| r.to_vec()).collect(),
        k => return Err(CasmError::Config(format!("ablation: no built-in α grid for {k} behaviors"))),
    };
    Ok(rows.into_iter().map(|a| AblationCell { alpha: Some(a), use_context: true }).collect())
}

/// Context features on and off, at the configured α.
pub fn context_grid(alpha: Option<Vec<f64>>) -> Vec<AblationCell> {
    vec![AblationCell { alpha: alpha.clone(), use_context: true }, AblationCell { alpha, use_context: false }]
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub cell: AblationCell,
    pub hr: MetricSummary,
    pub ndcg: MetricSummary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationTable {
    pub behavior_names: Vec<String>,
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    /// Index of the row with the highest mean HR@10; the first one wins ties.
    pub fn best_row(&self) -> Option<usize> {
        let mut best: Option<usize> = None;
        for (i, r) in self.rows.iter().enumerate() {
            if best.is_none_or(|b| r.hr.mean > self.rows[b].hr.mean) {
                best = Some(i);
            }
        }
        best
    }

    /// CSV with columns `row,alpha,use_context,hr10_mean,hr10_std,ndcg10_mean,ndcg10_std,best`.
    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "row,alpha,use_context,hr10_mean,hr10_std,ndcg10_mean,ndcg10_std,best")?;
        let best = self.best_row();
        for (i, r) in self.rows.iter().enumerate() {
            let alpha = r
                .cell
                .alpha
                .as_ref()
                .map(|a| a.iter().map(f64::to_string).collect::<Vec<_>>().join(";"))
                .unwrap_or_default();
            writeln!(
                w,
                "{},{alpha},{},{:.6},{:.6},{:.6},{:.6},{}",
                i + 1,
                r.cell.use_context,
                r.hr.mean,
                r.hr.std,
                r.ndcg.mean,
                r.ndcg.std,
                best == Some(i)
            )?;
        }
        Ok(())
    }

    /// Plain-text table: one row per cell, best row marked with `*`.
    pub fn render(&self) -> String {
        let header = format!("α ({})", self.behavior_names.join(", "));
        let labels: Vec<String> = self.rows.iter().map(|r| r.cell.label()).collect();
        let width = labels.iter().map(|l| l.chars().count()).chain([header.chars().count()]).max().unwrap_or(0);
        let mut s = String::new();
        let _ = writeln!(s, "{header:<width$}  {:<17}  {:<17}", "HR@10", "NDCG@10");
        let best = self.best_row();
        for (i, (r, label)) in self.rows.iter().zip(&labels).enumerate() {
            let mark = if best == Some(i) { " *" } else { "" };
            let _ = writeln!(
                s,
                "{label:<width$}  {:.4} ± {:.4}    {:.4} ± {:.4}{mark}",
                r.hr.mean, r.hr.std, r.ndcg.mean, r.ndcg.std
            );
        }
        s
    }
}

/// Trains and evaluates every cell (each over `cfg.eval_seeds` seeds).
pub fn run_ablation_on(cfg: &RunConfig, log: &InteractionLog, grid: &[AblationCell]) -> Result<AblationTable> {
    let split = split_log(cfg, log)?;
    let mut rows = Vec::with_capacity(grid.len());
    for cell in grid {
        let mut run = cfg.clone();
        run.hp.alpha = cell.alpha.clone();
        run.hp.use_context = cell.use_context;
        run.hp.validate(log.num_behaviors())?;
        let result = run_experiment(&run, log, &split)?;
        rows.push(AblationRow { cell: cell.clone(), hr: result.hr(ABLATION_N), ndcg: result.ndcg(ABLATION_N) });
    }
    Ok(AblationTable { behavior_names: log.behavior_names().to_vec(), rows })
}

/// `ablate`: writes `ablation.csv` and `ablation.txt`.
pub fn run_ablation(cfg: &RunConfig) -> Result<AblationTable> {
    let data = load_dataset(cfg)?;
    write_run_header(cfg, Some(&data.sha256))?;
    let k = data.log.num_behaviors();
    let grid = match cfg.ablation {
        AblationKind::Alpha => alpha_grid(k)?,
        AblationKind::Context => context_grid(cfg.hp.alpha.clone()),
        AblationKind::All => {
            let mut g = alpha_grid(k)?;
            g.extend(context_grid(cfg.hp.alpha.clone()));
            g
        }
    };
    let table = run_ablation_on(cfg, &data.log, &grid)?;
    table.write_csv(fs::File::create(cfg.out.join("ablation.csv"))?)?;
    fs::write(cfg.out.join("ablation.txt"), table.render())?;
    Ok(table)
}
