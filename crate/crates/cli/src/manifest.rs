//! Run manifests: the fully resolved configuration of a run, written next to
//! its outputs so that `rerun` can reproduce them exactly.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use crate::config::{ProblemConfig, SrbmRunConfig, WalkConfig};
use crate::output::SCHEMA_VERSION;

pub const MANIFEST_FILE: &str = "manifest.toml";
pub const TOOL: &str = "gaussdeconv";

/// A subcommand together with its resolved configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", content = "config", rename_all = "kebab-case")]
pub enum RunSpec {
    CheckAssumptions(ProblemConfig),
    WalkC(WalkConfig),
    Solve(ProblemConfig),
    Oracle(ProblemConfig),
    ValidateAsymptotics(ProblemConfig),
    Srbm(SrbmRunConfig),
}

impl RunSpec {
    pub fn name(&self) -> &'static str {
        match self {
            RunSpec::CheckAssumptions(_) => "check-assumptions",
            RunSpec::WalkC(_) => "walk-c",
            RunSpec::Solve(_) => "solve",
            RunSpec::Oracle(_) => "oracle",
            RunSpec::ValidateAsymptotics(_) => "validate-asymptotics",
            RunSpec::Srbm(_) => "srbm",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub schema: u32,
    /// Worker threads requested for the run (outputs do not depend on it).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    pub outputs: Vec<String>,
    pub run: RunSpec,
}

impl Manifest {
    pub fn new(run: RunSpec, threads: Option<usize>, outputs: Vec<String>) -> Self {
        Self {
            tool: TOOL.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            schema: SCHEMA_VERSION,
            threads,
            outputs,
            run,
        }
    }

    pub fn read(path: &Path) -> Result<Self> {
        let manifest: Manifest = crate::config::load(path)?;
        if manifest.tool != TOOL {
            bail!("`{}` was written by `{}`, not {TOOL}", path.display(), manifest.tool);
        }
        if manifest.schema != SCHEMA_VERSION {
            bail!(
                "`{}` uses output schema {}, this build writes schema {SCHEMA_VERSION}",
                path.display(),
                manifest.schema
            );
        }
        Ok(manifest)
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join(MANIFEST_FILE);
        let text = toml::to_string(self).context("cannot serialize the manifest")?;
        fs::write(&path, text).with_context(|| format!("cannot write `{}`", path.display()))
    }
}
