//! Synthetic suites, prompt perturbation, dataset evaluation and ablations.

mod backends;
mod noise;
mod run;
mod scenes;

pub use backends::{Backends, PainterSpec, ProjectorSpec};
pub use noise::{perturb_prompt, NoiseSpec, Perturbed};
pub use run::{
    ablate, evaluate, load_suite, AblationEntry, AblationReport, Axis, DatasetItem, EvalItem,
    EvalOptions, Report, ReportRow,
};
pub use scenes::{
    centroid_point, coarse_mask, gen_scenes, scribble, write_suite, Manifest, ManifestEntry,
    ScenePrompts, ShapeFamily, SuiteOptions, SuiteScene, MANIFEST, MARGIN,
};
