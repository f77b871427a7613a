use std::path::Path;

use serde::Serialize;
use svrf_core::image::{write_depth, write_depth_preview, write_png};
use svrf_core::render::render_image;
use svrf_core::FieldParams;

use super::{load_checkpoint, load_dataset, write_json};
use crate::error::{CliError, CliResult};
use crate::manifest::{RunManifest, RUN_MANIFEST};
use crate::RenderArgs;

pub const RENDERS_FILE: &str = "renders.json";
const DEFAULT_SAMPLES: usize = 64;

#[derive(Clone, Copy, Debug, Serialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Input,
    Test,
    All,
}

#[derive(Debug, Serialize, serde::Deserialize)]
pub struct RenderedView {
    pub id: String,
    pub image: String,
    pub depth: String,
    pub preview: String,
    /// Depth mapped to the preview's brightest and darkest values.
    pub depth_range: [f64; 2],
}

#[derive(Debug, Serialize, serde::Deserialize)]
pub struct RenderSidecar {
    pub samples: usize,
    pub views: Vec<RenderedView>,
}

/// `n_samples` from the training manifest next to the checkpoint.
fn trained_samples(checkpoint: &Path) -> Option<usize> {
    let path = checkpoint.parent()?.join(RUN_MANIFEST);
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(path).ok()?).ok()?;
    v.get("config")?.get("n_samples")?.as_u64().map(|n| n as usize)
}

pub fn render(a: RenderArgs) -> CliResult<()> {
    let samples = a
        .samples
        .or_else(|| trained_samples(&a.checkpoint))
        .unwrap_or(DEFAULT_SAMPLES);
    if samples < 2 {
        return Err(CliError::usage("--samples must be at least 2"));
    }
    let config = serde_json::json!({ "split": a.split, "samples": samples });
    RunManifest::new(
        "render",
        config,
        None,
        &[a.checkpoint.as_path(), a.data.as_path()],
        &[RENDERS_FILE, "rgb", "depth"],
    )?
    .write(&a.out)?;
    let field = FieldParams::from_checkpoint(load_checkpoint(&a.checkpoint)?)
        .map_err(|e| CliError::from(e).context(a.checkpoint.display()))?;
    let dataset = load_dataset(&a.data)?;
    let indices: Vec<usize> = match a.split {
        Split::Input => dataset.input.clone(),
        Split::Test => dataset.test.clone(),
        Split::All => (0..dataset.frames.len()).collect(),
    };
    std::fs::create_dir_all(a.out.join("rgb"))?;
    std::fs::create_dir_all(a.out.join("depth"))?;
    let mut views = Vec::with_capacity(indices.len());
    for i in indices {
        let frame = &dataset.frames[i];
        let (img, depth) = render_image(
            &field,
            &frame.pose,
            &frame.intrinsics,
            dataset.near,
            dataset.far,
            samples,
            dataset.background,
            1024,
        )?;
        let view = RenderedView {
            id: frame.id.clone(),
            image: format!("rgb/{}.png", frame.id),
            depth: format!("depth/{}.svdp", frame.id),
            preview: format!("depth/{}.png", frame.id),
            depth_range: [0.0; 2],
        };
        write_png(&a.out.join(&view.image), &img)?;
        write_depth(&a.out.join(&view.depth), &depth)?;
        let (lo, hi) = write_depth_preview(&a.out.join(&view.preview), &depth)?;
        views.push(RenderedView {
            depth_range: [lo, hi],
            ..view
        });
    }
    let count = views.len();
    write_json(&a.out.join(RENDERS_FILE), &RenderSidecar { samples, views })?;
    println!("rendered {count} views to {}", a.out.display());
    Ok(())
}
