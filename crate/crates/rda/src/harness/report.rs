//! Human-readable summary of a finished run: one table per check with the
//! claim, the finite surrogate, the key numbers and the outcome.

use crate::error::{Error, Result};
use crate::harness::verdict::{VerdictFile, VerdictStatus};
use std::fmt::Write as _;
use std::path::Path;

pub fn load_verdicts(dir: &Path) -> Result<VerdictFile> {
    let path = dir.join("verdicts.json");
    if !path.exists() {
        return Err(Error::MissingArtifact(format!(
            "{} (run the sweep first)",
            path.display()
        )));
    }
    let text = std::fs::read_to_string(&path)?;
    serde_json::from_str(&text)
        .map_err(|e| Error::MissingArtifact(format!("corrupt verdicts.json: {e}")))
}

fn status_str(s: VerdictStatus) -> &'static str {
    match s {
        VerdictStatus::Pass => "PASS",
        VerdictStatus::Fail => "FAIL",
        VerdictStatus::Vacuous => "VACUOUS",
        VerdictStatus::Recorded => "RECORDED",
    }
}

/// Render the report. Errors if the directory has no verdicts.
pub fn report(dir: &Path) -> Result<String> {
    let file = load_verdicts(dir)?;
    if file.verdicts.is_empty() {
        return Err(Error::MissingArtifact("verdict file contains no checks".into()));
    }
    let mut out = String::new();
    writeln!(out, "run report: {}", dir.display()).unwrap();
    writeln!(out, "{}", "=".repeat(72)).unwrap();
    for v in &file.verdicts {
        writeln!(out, "\n[{}] {}", status_str(v.status), v.name).unwrap();
        writeln!(out, "  claim:     {}", v.claim).unwrap();
        writeln!(out, "  surrogate: {}", v.surrogate).unwrap();
        if !v.scalars.is_empty() {
            writeln!(out, "  scalars:").unwrap();
            for (k, val) in &v.scalars {
                writeln!(out, "    {k} = {val:.6e}").unwrap();
            }
        }
        if !v.table.is_empty() {
            // stable column order: union of keys, sorted, alpha first
            let mut cols: Vec<String> = v
                .table
                .iter()
                .flat_map(|row| row.keys().cloned())
                .collect();
            cols.sort();
            cols.dedup();
            if let Some(pos) = cols.iter().position(|c| c == "alpha") {
                cols.swap(0, pos);
            }
            writeln!(out, "  {}", cols.join(" | ")).unwrap();
            for row in &v.table {
                let cells: Vec<String> = cols
                    .iter()
                    .map(|c| row.get(c).map(|v| format!("{v:.6e}")).unwrap_or_default())
                    .collect();
                writeln!(out, "  {}", cells.join(" | ")).unwrap();
            }
        }
    }
    let failures = file.failures();
    writeln!(out, "\n{}", "=".repeat(72)).unwrap();
    if failures.is_empty() {
        writeln!(out, "all checks passed ({} total)", file.verdicts.len()).unwrap();
    } else {
        writeln!(out, "{} FAILED check(s):", failures.len()).unwrap();
        for f in failures {
            writeln!(out, "  - {}", f.name).unwrap();
        }
    }
    Ok(out)
}
