//! Report documents: the structured report, a markdown table, and the
//! anonymized ballot log.

use std::fmt::Write as _;

use metasynth_core::{anonymize_evaluator, ClassMetrics, ModelReport, RelevanceLabel, TaskPool};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportedBallot {
    pub task_id: String,
    /// Salted hash of the evaluator id.
    pub evaluator: String,
    pub label: RelevanceLabel,
    pub submitted_at: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument {
    pub report: ModelReport,
    /// Final label per task, in task order.
    pub finals: Vec<(String, RelevanceLabel)>,
    /// Absent when no export salt was configured.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ballots: Option<Vec<ExportedBallot>>,
}

/// Assembles the export for `report`. Raw evaluator ids never leave the
/// store: without a salt the ballots are left out entirely.
pub fn report_document(pool: &TaskPool, report: ModelReport, salt: Option<&str>) -> ReportDocument {
    let tag = report.model_tag.clone();
    let finals = pool
        .finals(&tag)
        .map(|f| f.into_iter().map(|(t, l)| (t.id.clone(), l)).collect())
        .unwrap_or_default();
    let ballots = salt.map(|salt| {
        pool.ballots()
            .filter(|b| pool.task(&b.task_id).is_some_and(|t| t.model_tag == tag))
            .map(|b| ExportedBallot {
                task_id: b.task_id.clone(),
                evaluator: anonymize_evaluator(salt, &b.evaluator_id),
                label: b.label,
                submitted_at: b.submitted_at,
            })
            .collect()
    });
    ReportDocument { report, finals, ballots }
}

fn class_cells(out: &mut String, c: &Option<ClassMetrics>) {
    match c {
        Some(c) => {
            for v in [c.bleu, c.rouge1, c.rouge2, c.rouge_l] {
                let _ = write!(out, " {:.2} |", 100.0 * v);
            }
        }
        None => out.push_str(" - | - | - | - |"),
    }
}

/// One-row markdown table: human-evaluation percentages, BLEU/ROUGE for the
/// relevant and irrelevant classes (0-100), and SWGT.
pub fn markdown_table(reports: &[ModelReport]) -> String {
    let mut out = String::from(
        "| Model | REL (%) | SWR (%) | IRL (%) \
         | BLEU (Rel) | ROUGE-1 (Rel) | ROUGE-2 (Rel) | ROUGE-L (Rel) \
         | BLEU (Irr) | ROUGE-1 (Irr) | ROUGE-2 (Irr) | ROUGE-L (Irr) | SWGT (%) |\n",
    );
    out.push_str(&"|---".repeat(13));
    out.push_str("|\n");
    for r in reports {
        let _ = write!(out, "| {} | {:.1} | {:.1} | {:.1} |", r.model_tag, r.rel_pct, r.swr_pct, r.irl_pct);
        class_cells(&mut out, &r.relevant);
        class_cells(&mut out, &r.irrelevant);
        let _ = writeln!(out, " {:.2} |", r.swgt_pct);
    }
    out
}
