use serde::Serialize;
use svrf_core::eval::{MetricsReport, AGGREGATE_LABEL, AGGREGATE_NOTE};
use svrf_core::image::{read_depth, read_png};

use super::render::{RenderSidecar, RENDERS_FILE};
use super::{load_dataset, write_json};
use crate::error::{CliError, CliResult};
use crate::manifest::RunManifest;
use crate::EvalArgs;

pub const METRICS_FILE: &str = "metrics.json";

#[derive(Debug, Serialize)]
struct ViewMetrics {
    id: String,
    #[serde(flatten)]
    report: MetricsReport,
}

#[derive(Debug, Serialize)]
struct EvalReport {
    aggregate_label: &'static str,
    aggregate_note: &'static str,
    views: Vec<ViewMetrics>,
    mean: MetricsReport,
}

pub fn eval(a: EvalArgs) -> CliResult<()> {
    RunManifest::new(
        "eval",
        serde_json::Value::Null,
        None,
        &[a.data.as_path(), a.renders.as_path()],
        &[METRICS_FILE],
    )?
    .write(&a.out)?;
    let dataset = load_dataset(&a.data)?;
    let sidecar_path = a.renders.join(RENDERS_FILE);
    let sidecar: RenderSidecar = serde_json::from_slice(
        &std::fs::read(&sidecar_path).map_err(|e| CliError::from(e).context(sidecar_path.display()))?,
    )
    .map_err(|e| CliError::from(e).context(sidecar_path.display()))?;
    if sidecar.views.is_empty() {
        return Err(CliError::io(format!("{}: no rendered views", sidecar_path.display())));
    }
    let mut views = Vec::with_capacity(sidecar.views.len());
    for v in &sidecar.views {
        let frame = dataset
            .frames
            .iter()
            .find(|f| f.id == v.id)
            .ok_or_else(|| CliError::io(format!("rendered view `{}` is not in the dataset", v.id)))?;
        let pred = read_png(&a.renders.join(&v.image))?;
        let depth = match &frame.depth {
            Some(oracle) => Some((read_depth(&a.renders.join(&v.depth))?, oracle)),
            None => None,
        };
        let report = MetricsReport::compare(&pred, &frame.image, depth.as_ref().map(|(d, o)| (d, *o)))
            .map_err(|e| CliError::from(e).context(format!("view {}", v.id)))?;
        views.push(ViewMetrics {
            id: v.id.clone(),
            report,
        });
    }
    let reports: Vec<MetricsReport> = views.iter().map(|v| v.report.clone()).collect();
    let mean = MetricsReport::mean(&reports).expect("at least one view");
    println!(
        "{} views: PSNR {:.3} dB, SSIM {:.4}, {AGGREGATE_LABEL} {:.5}{}",
        views.len(),
        mean.psnr,
        mean.ssim,
        mean.aggregate,
        mean.depth_mae
            .map(|m| format!(", depth MAE {m:.4}"))
            .unwrap_or_default()
    );
    write_json(
        &a.out.join(METRICS_FILE),
        &EvalReport {
            aggregate_label: AGGREGATE_LABEL,
            aggregate_note: AGGREGATE_NOTE,
            views,
            mean,
        },
    )
}
