use serde::{Deserialize, Serialize};
use serde_json::json;
use svrf_core::corpus::PatchCorpus;
use svrf_core::flow::{train_flow as fit, FlowTrainConfig};
use svrf_core::FlowConfig;

use super::{read_toml, write_checkpoint, write_json, JsonLines};
use crate::error::{CliError, CliResult};
use crate::manifest::RunManifest;
use crate::TrainFlowArgs;

/// Textures and their size in the bundled corpus.
const BUNDLED_IMAGES: usize = 64;
const BUNDLED_SIZE: usize = 64;

#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FlowFile {
    flow: FlowConfig,
    training: FlowTrainConfig,
}

pub fn train_flow(a: TrainFlowArgs) -> CliResult<()> {
    let mut cfg: FlowFile = match &a.config {
        Some(p) => read_toml(p)?,
        None => FlowFile::default(),
    };
    if let Some(s) = a.steps {
        cfg.training.steps = s;
    }
    if let Some(s) = a.seed {
        cfg.training.seed = s;
    }
    cfg.flow.validate()?;
    if a.stride == 0 {
        return Err(CliError::usage("--stride must be at least 1"));
    }
    let seed = cfg.training.seed;
    let corpus_desc = match &a.corpus {
        Some(dir) => json!({ "dir": dir, "stride": a.stride }),
        None => json!({ "bundled": { "images": BUNDLED_IMAGES, "size": BUNDLED_SIZE }, "stride": a.stride }),
    };
    let inputs: Vec<&std::path::Path> = a.corpus.iter().map(|p| p.as_path()).collect();
    let outputs = ["flow.ckpt", "nll_curve.jsonl", "flow_report.json"];
    RunManifest::new(
        "train-flow",
        json!({ "flow": cfg.flow, "training": cfg.training, "corpus": corpus_desc }),
        Some(seed),
        &inputs,
        &outputs,
    )?
    .write(&a.out)?;

    let s = cfg.flow.patch_size;
    let corpus = match &a.corpus {
        Some(dir) => PatchCorpus::from_dir(dir, s, a.stride, seed)
            .map_err(|e| CliError::from(e).context(format!("corpus {}", dir.display())))?,
        None => PatchCorpus::bundled(BUNDLED_IMAGES, BUNDLED_SIZE, s, a.stride, seed)?,
    };
    if corpus.patches.is_empty() {
        return Err(CliError::io("corpus yields no patches"));
    }
    let report = fit(&corpus, cfg.flow, &cfg.training)?;

    write_checkpoint(&a.out.join("flow.ckpt"), &report.params.to_checkpoint())?;
    let mut curve = JsonLines::create(&a.out.join("nll_curve.jsonl"))?;
    for (step, nll) in &report.curve {
        curve.push(&json!({ "step": step, "nll": nll }))?;
    }
    let (train, held) = corpus.split(cfg.training.held_out_fraction);
    write_json(
        &a.out.join("flow_report.json"),
        &json!({
            "patches": { "train": train.len(), "held_out": held.len() },
            "initial_train_nll": report.initial_train_nll,
            "final_train_nll": report.final_train_nll,
            "held_out_nll": report.held_out_nll,
        }),
    )?;
    println!(
        "flow: {} steps, train NLL {:.3} -> {:.3}, held-out {:.3}",
        cfg.training.steps, report.initial_train_nll, report.final_train_nll, report.held_out_nll
    );
    Ok(())
}
