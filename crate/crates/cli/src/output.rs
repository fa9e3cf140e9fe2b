//! Output files and their run manifests.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::Value;

use cutofflab_core::analysis::PhaseRow;

use crate::Ctx;

/// A usage error (exit code 2).
#[derive(Debug)]
pub struct Usage(pub String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub params: Value,
    pub version: String,
    pub cache_dir: Option<String>,
    pub cache_hits: u64,
    pub cache_misses: u64,
    pub wall_time_s: f64,
    pub outputs: Vec<String>,
    #[serde(skip_serializing_if = "Value::is_null")]
    pub summary: Value,
}

pub struct Outputs {
    start: Instant,
}

impl Outputs {
    pub fn start() -> Self {
        Outputs {
            start: Instant::now(),
        }
    }

    /// Writes `body` to `out` (stdout when absent), each side file next to
    /// it with the given extension, and `<stem>.manifest.json`.
    #[allow(clippy::too_many_arguments)]
    pub fn emit(
        &self,
        ctx: &Ctx,
        command: &str,
        params: Value,
        out: Option<&Path>,
        body: &str,
        side: &[(&str, String)],
        summary: Value,
    ) -> Result<()> {
        let Some(out) = out else {
            print!("{body}");
            for (_, s) in side {
                eprint!("{s}");
            }
            return Ok(());
        };
        if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent)
                .with_context(|| format!("creating {}", parent.display()))?;
        }
        let mut written: Vec<PathBuf> = vec![out.to_path_buf()];
        write(out, body)?;
        for (ext, s) in side {
            let p = out.with_extension(ext);
            write(&p, s)?;
            written.push(p);
        }
        let manifest = RunManifest {
            command: command.into(),
            params,
            version: env!("CARGO_PKG_VERSION").into(),
            cache_dir: ctx.cache.as_ref().map(|c| c.dir().display().to_string()),
            cache_hits: ctx.cache.as_ref().map_or(0, |c| c.hits()),
            cache_misses: ctx.cache.as_ref().map_or(0, |c| c.misses()),
            wall_time_s: self.start.elapsed().as_secs_f64(),
            outputs: written.iter().map(|p| p.display().to_string()).collect(),
            summary,
        };
        write(
            &out.with_extension("manifest.json"),
            &json_string(&manifest)?,
        )
    }
}

fn write(p: &Path, s: &str) -> Result<()> {
    std::fs::write(p, s).with_context(|| format!("writing {}", p.display()))
}

pub fn json_string<T: Serialize>(v: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(v)? + "\n")
}

pub fn phase_csv(rows: &[PhaseRow]) -> String {
    let mut out = String::from(
        "a,m,regime,verdict,fitted_exponent,fit_se,max_residual,verdict_grade,predicted_exponent,log_corrected,measured_coefficient,predicted_coefficient,ratio_final\n",
    );
    for r in rows {
        out.push_str(&format!(
            "{:?},{:?},{},{},{:?},{:?},{:?},{},{:?},{},{:?},{},{:?}\n",
            r.a,
            r.m,
            r.regime,
            r.verdict,
            r.fitted_exponent,
            r.fit_se,
            r.max_residual,
            r.verdict_grade,
            r.predicted_exponent,
            r.log_corrected,
            r.measured_coefficient,
            r.predicted_coefficient
                .map(|c| format!("{c:?}"))
                .unwrap_or_default(),
            r.ratio_final
        ));
    }
    out
}
