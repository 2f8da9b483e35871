use serde::{Deserialize, Serialize};

use super::{DatasetRecord, Pipeline, evaluate_predictions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub shots: usize,
    pub drafts: usize,
    pub coverage: Option<f64>,
    pub em: Option<f64>,
    pub f1: Option<f64>,
    pub hits1: Option<f64>,
    pub error: Option<String>,
}

/// Runs the pipeline at every (shots, drafts) grid point, shots-major. A
/// failing point yields a row with only `error` set.
pub fn sweep(
    base: &Pipeline<'_>,
    records: &[DatasetRecord],
    shots: &[usize],
    drafts: &[usize],
) -> Vec<SweepRow> {
    let mut rows = Vec::new();
    for &n in shots {
        for &k in drafts {
            let config = crate::draft_gen::PipelineConfig {
                shots: n,
                drafts: k,
                ..base.config.clone()
            };
            let pipeline = Pipeline { config, ..*base };
            let row = match pipeline.run(records) {
                Ok(preds) => {
                    let r = evaluate_predictions(records, &preds);
                    SweepRow {
                        shots: n,
                        drafts: k,
                        coverage: Some(r.coverage),
                        em: Some(r.em),
                        f1: Some(r.f1),
                        hits1: Some(r.hits1),
                        error: None,
                    }
                }
                Err(e) => SweepRow {
                    shots: n,
                    drafts: k,
                    coverage: None,
                    em: None,
                    f1: None,
                    hits1: None,
                    error: Some(e.to_string()),
                },
            };
            rows.push(row);
        }
    }
    rows
}

pub fn write_sweep_csv(w: impl std::io::Write, rows: &[SweepRow]) -> Result<(), csv::Error> {
    let mut out = csv::Writer::from_writer(w);
    for row in rows {
        out.serialize(row)?;
    }
    out.flush()?;
    Ok(())
}
