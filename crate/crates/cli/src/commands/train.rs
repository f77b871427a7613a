use serde_json::json;
use svrf_core::eval::psnr;
use svrf_core::render::render_image;
use svrf_core::training::{train_scene, LogRecord};
use svrf_core::{FieldParams, FlowParams, TrainConfig};

use super::{load_checkpoint, load_dataset, read_toml, write_checkpoint, write_json, JsonLines};
use crate::error::{CliError, CliResult, EXIT_NUMERIC};
use crate::manifest::RunManifest;
use crate::TrainArgs;

/// Applies config file and flags, flags last.
pub(crate) fn resolve_config(a: &TrainArgs) -> CliResult<TrainConfig> {
    let mut cfg: TrainConfig = match &a.config {
        Some(p) => read_toml(p)?,
        None => TrainConfig::default(),
    };
    if a.no_ds {
        cfg.lambda_ds = 0.0;
    }
    if a.no_nll {
        cfg.lambda_nll = 0.0;
    }
    if a.no_anneal {
        cfg.anneal = false;
    }
    if let Some(w) = a.opacity_reg {
        cfg.lambda_opacity = w;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(n) = a.iterations {
        cfg.max_iterations = Some(n);
    }
    if let Some(n) = a.log_every {
        cfg.log_every = n;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn train(a: TrainArgs) -> CliResult<()> {
    let cfg = resolve_config(&a)?;
    let needs_flow = cfg.lambda_nll > 0.0 && cfg.uses_patches();
    if needs_flow && a.flow.is_none() {
        return Err(CliError::usage("--flow is required unless --no-nll is given"));
    }
    let flow_path = a.flow.as_ref().filter(|_| needs_flow);
    let mut inputs = vec![a.data.as_path()];
    inputs.extend(flow_path.map(|p| p.as_path()));
    RunManifest::new("train", &cfg, Some(cfg.seed), &inputs, &["field.ckpt", "metrics.jsonl"])?.write(&a.out)?;

    let dataset = load_dataset(&a.data)?;
    let flow = match flow_path {
        Some(p) => {
            Some(FlowParams::from_checkpoint(load_checkpoint(p)?).map_err(|e| CliError::from(e).context(p.display()))?)
        }
        None => None,
    };
    let probe = (!a.no_test_psnr)
        .then(|| dataset.test.first().map(|&i| &dataset.frames[i]))
        .flatten();
    let mut log = JsonLines::create(&a.out.join("metrics.jsonl"))?;
    let mut log_error = None;
    let mut observer = |record: &mut LogRecord, field: &FieldParams| -> svrf_core::Result<()> {
        if let Some(frame) = probe {
            let (img, _) = render_image(
                field,
                &frame.pose,
                &frame.intrinsics,
                dataset.near,
                dataset.far,
                cfg.n_samples,
                dataset.background,
                1024,
            )?;
            record.test_psnr = Some(psnr(&img, &frame.image)?);
        }
        if let Err(e) = log.push(record) {
            log_error = Some(e);
            return Err(svrf_core::Error::invalid("metrics log", "write failed"));
        }
        Ok(())
    };
    let outcome = match train_scene(&dataset, flow.as_ref(), &cfg, &mut observer) {
        Ok(o) => o,
        Err(_) if log_error.is_some() => return Err(log_error.take().expect("checked")),
        Err(svrf_core::Error::NonFiniteLoss { iteration, breakdown }) => {
            let dump = json!({ "iteration": iteration, "breakdown": breakdown });
            write_json(&a.out.join("failure.json"), &dump)?;
            return Err(CliError {
                code: EXIT_NUMERIC,
                message: format!("non-finite loss at iteration {iteration}: {dump}"),
            });
        }
        Err(e) => return Err(e.into()),
    };
    write_checkpoint(&a.out.join("field.ckpt"), &outcome.field.to_checkpoint())?;
    if let Some(last) = outcome.log.last() {
        println!(
            "trained {} iterations; final loss {:.6} (mse {:.6}){}",
            outcome.iterations,
            last.loss.total,
            last.loss.mse,
            last.test_psnr
                .map(|p| format!(", test PSNR {p:.2} dB"))
                .unwrap_or_default()
        );
    }
    Ok(())
}
