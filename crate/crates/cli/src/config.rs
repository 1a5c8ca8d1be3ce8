use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{Context, Result};
use clap::Args;
use contrastseg::amcp::{AmcpConfig, StepKind};
use contrastseg::eval::{Backends, PainterSpec, ProjectorSpec};
use contrastseg::morphology::StructuringElement;
use serde::{Deserialize, Serialize};

/// Contents of `--config`: every field optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub amcp: AmcpConfig,
    pub painter: Option<PainterSpec>,
    pub projector: Option<ProjectorSpec>,
    /// Seconds.
    pub timeout: Option<f64>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct EngineArgs {
    /// JSON config file; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// oracle | meanfill | remote:URL
    #[arg(long)]
    pub painter: Option<PainterSpec>,
    /// identity | patchstats[:W] | remote:URL
    #[arg(long)]
    pub projector: Option<ProjectorSpec>,
    /// Remote request timeout in seconds.
    #[arg(long)]
    pub timeout: Option<f64>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long, value_parser = parse_step)]
    pub first_step: Option<StepKind>,
    #[arg(long = "n-samples")]
    pub n_samples: Option<usize>,
    /// Comma-separated cluster counts, one per step.
    #[arg(long, value_delimiter = ',')]
    pub k_schedule: Option<Vec<usize>>,
    #[arg(long)]
    pub ring_width: Option<usize>,
    #[arg(long)]
    pub clean_kernel: Option<usize>,
    #[arg(long)]
    pub box_rate: Option<f64>,
    #[arg(long)]
    pub sigma_fraction: Option<f64>,
    #[arg(long)]
    pub avg_threshold: Option<f32>,
    #[arg(long)]
    pub diffusion_steps: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub lambda_paint: Option<f32>,
    #[arg(long)]
    pub lambda_color: Option<f32>,
    #[arg(long)]
    pub lambda_prompt_istep: Option<f32>,
    #[arg(long)]
    pub lambda_prompt_ostep: Option<f32>,
    /// Skip the per-step objective diagnostic.
    #[arg(long)]
    pub no_objective: bool,
}

fn parse_step(s: &str) -> std::result::Result<StepKind, String> {
    match s {
        "I" | "i" => Ok(StepKind::I),
        "O" | "o" => Ok(StepKind::O),
        _ => Err(format!("step kind must be I or O, got {s:?}")),
    }
}

impl EngineArgs {
    /// defaults < file < flags.
    pub fn resolve(&self) -> Result<(AmcpConfig, Backends)> {
        let file = match &self.config {
            Some(p) => FileConfig::load(p)?,
            None => FileConfig::default(),
        };
        let mut cfg = file.amcp;
        macro_rules! set {
            ($($flag:ident => $($field:ident).+),* $(,)?) => {
                $(if let Some(v) = self.$flag.clone() { cfg.$($field).+ = v; })*
            };
        }
        set!(
            steps => steps,
            first_step => first_step,
            n_samples => n_samples,
            ring_width => ring_width,
            box_rate => box_rate,
            sigma_fraction => sigma_fraction,
            avg_threshold => avg_threshold,
            diffusion_steps => diffusion_steps,
            seed => seed,
            lambda_paint => weights.lambda_paint,
            lambda_color => weights.lambda_color,
            lambda_prompt_istep => weights.lambda_prompt_istep,
            lambda_prompt_ostep => weights.lambda_prompt_ostep,
        );
        if let Some(ks) = &self.k_schedule {
            cfg.k_schedule = Some(ks.clone());
        }
        if let Some(k) = self.clean_kernel {
            cfg.clean_kernel = StructuringElement::new(k)?;
        }
        if self.no_objective {
            cfg.objective = false;
        }
        cfg.validate()?;

        let mut backends = Backends::default();
        if let Some(p) = self.painter.clone().or(file.painter) {
            backends.painter = p;
        }
        if let Some(p) = self.projector.clone().or(file.projector) {
            backends.projector = p;
        }
        if let Some(t) = self.timeout.or(file.timeout) {
            backends.timeout =
                Duration::try_from_secs_f64(t).context("timeout must be a non-negative number")?;
        }
        Ok((cfg, backends))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file_override_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(
            &path,
            r#"{"amcp": {"steps": 3, "n_samples": 2}, "painter": "meanfill", "timeout": 5}"#,
        )
        .unwrap();
        let args = EngineArgs {
            config: Some(path),
            n_samples: Some(7),
            ..Default::default()
        };
        let (cfg, b) = args.resolve().unwrap();
        assert_eq!(cfg.steps, 3);
        assert_eq!(cfg.n_samples, 7);
        assert_eq!(cfg.ring_width, AmcpConfig::default().ring_width);
        assert_eq!(b.painter, PainterSpec::MeanFill);
        assert_eq!(b.projector, ProjectorSpec::Identity);
        assert_eq!(b.timeout, Duration::from_secs(5));
    }

    #[test]
    fn unknown_file_fields_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, r#"{"amcp": {"stepz": 3}}"#).unwrap();
        assert!(EngineArgs {
            config: Some(path),
            ..Default::default()
        }
        .resolve()
        .is_err());
    }

    #[test]
    fn invalid_values_fail_validation() {
        assert!(EngineArgs {
            clean_kernel: Some(4),
            ..Default::default()
        }
        .resolve()
        .is_err());
        assert!(EngineArgs {
            k_schedule: Some(vec![2, 4, 2, 2, 2]),
            ..Default::default()
        }
        .resolve()
        .is_err());
        assert!(EngineArgs {
            avg_threshold: Some(1.0),
            ..Default::default()
        }
        .resolve()
        .is_err());
    }
}
