use std::path::Path;

use crate::error::Result;
use crate::eval::{render_ndjson, EvalRecord, Table};
use crate::pipeline::runner::{ExtractorSource, ModelInit, RunReport, SwapReport};
use crate::util::write_atomic;

const STAGE_ROWS: [&str; 3] = [
    "Stage 1 (source language)",
    "Stage 2 (target broadcast)",
    "Stage 3 (target domain)",
];

fn pct(wer: f64) -> String {
    format!("{:.2}", 100.0 * wer)
}

/// Setups as columns: stage marks first, then WER (%) per test set.
pub fn ablation_table(reports: &[RunReport]) -> String {
    let mut t =
        Table::new(std::iter::once(String::new()).chain(reports.iter().map(|r| r.setup.clone())));
    for (i, row) in STAGE_ROWS.iter().enumerate() {
        t.push(
            std::iter::once(row.to_string()).chain(
                reports
                    .iter()
                    .map(|r| if r.included[i] { "x" } else { "" }.to_string()),
            ),
        );
    }
    let sets: Vec<String> = reports
        .first()
        .map(|r| r.results.iter().map(|e| e.test_set.clone()).collect())
        .unwrap_or_default();
    for set in sets {
        t.push(
            std::iter::once(format!("WER {set}")).chain(reports.iter().map(|r| {
                r.results
                    .iter()
                    .find(|e| e.test_set == set)
                    .map_or_else(|| "-".to_string(), |e| pct(e.report.wer))
            })),
        );
    }
    t.render()
}

/// Four columns (initialization x extractor), one WER row per test set.
pub fn swap_table(report: &SwapReport) -> String {
    let init = |i: ModelInit| match i {
        ModelInit::Random => "Rand.",
        ModelInit::Transferred => "Transf.",
    };
    let ext = |e: ExtractorSource| match e {
        ExtractorSource::Source => "Source",
        ExtractorSource::Target => "Target",
    };
    let mut t = Table::new(
        std::iter::once("Ac. model init.".to_string())
            .chain(report.cells.iter().map(|c| init(c.init).to_string())),
    );
    t.push(
        std::iter::once("Extractor".to_string())
            .chain(report.cells.iter().map(|c| ext(c.extractor).to_string())),
    );
    let sets: Vec<String> = report
        .cells
        .first()
        .map(|c| c.results.iter().map(|e| e.test_set.clone()).collect())
        .unwrap_or_default();
    for set in sets {
        t.push(
            std::iter::once(set.clone()).chain(report.cells.iter().map(|c| {
                c.results
                    .iter()
                    .find(|e| e.test_set == set)
                    .map_or_else(|| "-".to_string(), |e| pct(e.report.wer))
            })),
        );
    }
    let mut probe = Table::new([
        "Transf. model, source extractor at training",
        "Matched",
        "Mismatched",
    ]);
    for (a, b) in report.probe.matched.iter().zip(&report.probe.mismatched) {
        probe.push([
            format!("{} frame acc.", a.test_set),
            format!("{:.4}", a.frame_accuracy),
            format!("{:.4}", b.frame_accuracy),
        ]);
        probe.push([
            format!("{} WER", a.test_set),
            pct(a.report.wer),
            pct(b.report.wer),
        ]);
    }
    format!("{}\n{}", t.render(), probe.render())
}

pub fn records(reports: &[RunReport]) -> Vec<EvalRecord> {
    reports
        .iter()
        .flat_map(|r| r.results.iter().map(move |e| EvalRecord::new(&r.setup, e)))
        .collect()
}

/// Writes `{stem}.txt` (table) and `{stem}.ndjson` (one record per line) into `dir`.
pub fn write_reports(dir: &Path, stem: &str, table: &str, records: &[EvalRecord]) -> Result<()> {
    write_atomic(&dir.join(format!("{stem}.txt")), table.as_bytes())?;
    write_atomic(
        &dir.join(format!("{stem}.ndjson")),
        render_ndjson(records).as_bytes(),
    )
}
