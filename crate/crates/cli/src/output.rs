//! Deterministic output writers. Every file carries the resolved config hash
//! and seed: CSVs in a leading `#` comment line, JSONs in a `meta` object.

use std::path::Path;

use serde::Serialize;

#[derive(Debug, Clone, Serialize)]
pub struct Meta {
    pub config_hash: String,
    pub seed: u64,
}

impl Meta {
    pub fn comment_line(&self) -> String {
        format!("# config_hash={} seed={}", self.config_hash, self.seed)
    }
}

pub fn write_csv(
    path: &Path,
    meta: &Meta,
    header: &[&str],
    rows: &[Vec<String>],
) -> anyhow::Result<()> {
    let mut text = String::new();
    text.push_str(&meta.comment_line());
    text.push('\n');
    text.push_str(&header.join(","));
    text.push('\n');
    for row in rows {
        text.push_str(&row.join(","));
        text.push('\n');
    }
    std::fs::write(path, text)?;
    Ok(())
}

/// JSON object `{"meta": ..., "<key>": payload}`. Values go through
/// `serde_json::Value`, whose maps are ordered, so output bytes are stable.
pub fn write_json<T: Serialize>(
    path: &Path,
    meta: &Meta,
    key: &str,
    payload: &T,
) -> anyhow::Result<()> {
    let value = serde_json::json!({ "meta": meta, key: payload });
    std::fs::write(path, serde_json::to_string_pretty(&value)?)?;
    Ok(())
}

/// Prepend the meta comment to an existing text file (CSV written by the
/// core serializers).
pub fn prepend_meta(path: &Path, meta: &Meta) -> anyhow::Result<()> {
    let body = std::fs::read_to_string(path)?;
    std::fs::write(path, format!("{}\n{body}", meta.comment_line()))?;
    Ok(())
}

pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

/// File-system-safe team label.
pub fn safe_label(label: &str) -> String {
    label
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '+' {
                c
            } else {
                '_'
            }
        })
        .collect()
}
