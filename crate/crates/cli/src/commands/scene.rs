use serde_json::json;
use svrf_core::eval::{make_dataset, scene_by_name, DatasetOptions, MANIFEST_FILE};

use crate::error::{CliError, CliResult};
use crate::manifest::RunManifest;
use crate::MakeSceneArgs;

pub fn make_scene(a: MakeSceneArgs) -> CliResult<()> {
    let scene = scene_by_name(&a.scene)?;
    if a.inputs == 0 || a.tests == 0 {
        return Err(CliError::usage("--inputs and --tests must be at least 1"));
    }
    let options = DatasetOptions {
        resolution: a.resolution,
        focal: a.focal,
        n_dense: a.n_dense,
        ..DatasetOptions::default()
    };
    let config = json!({
        "scene": scene,
        "inputs": a.inputs,
        "tests": a.tests,
        "options": options,
    });
    RunManifest::new(
        "make-scene",
        config,
        Some(a.seed),
        &[],
        &[MANIFEST_FILE, "images", "depth"],
    )?
    .write(&a.out)?;
    let dataset = make_dataset(&scene, a.inputs, a.tests, a.seed, &options)?;
    let path = dataset.write(&a.out)?;
    println!("{}", path.display());
    Ok(())
}
