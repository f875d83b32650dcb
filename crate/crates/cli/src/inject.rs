//! Request files for `--inject-requests`.

use std::path::Path;

use anyhow::{Context, Result};

/// Parse one round per line, one comma-separated amount per user. Blank
/// lines and lines starting with `#` are skipped.
pub fn parse_requests(text: &str) -> Result<Vec<Vec<f64>>> {
    text.lines()
        .enumerate()
        .map(|(i, line)| (i + 1, line.trim()))
        .filter(|(_, line)| !line.is_empty() && !line.starts_with('#'))
        .map(|(lineno, line)| {
            line.split(',')
                .map(|v| {
                    v.trim()
                        .parse::<f64>()
                        .with_context(|| format!("line {lineno}: bad amount `{}`", v.trim()))
                })
                .collect()
        })
        .collect()
}

pub fn read_requests(path: &Path) -> Result<Vec<Vec<f64>>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read {}", path.display()))?;
    parse_requests(&text)
}
