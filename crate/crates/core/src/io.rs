//! Serialization helpers: atomic file writes, JSON with key paths in errors,
//! CSV tables and SVG snapshots of ball families.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::ball::Ball;
use crate::error::{Error, Result};
use crate::model::{DislocationMeasure, Domain};

fn temp_path(path: &Path) -> PathBuf {
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!(".{name}.tmp-{}", std::process::id()))
}

/// Writes `bytes` to a temporary file next to `path` and renames it into
/// place, so readers never observe a partial file.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let tmp = temp_path(path);
    let res = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if res.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    Ok(res?)
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    atomic_write(path, to_json(value)?.as_bytes())
}

/// Parses JSON, reporting the path of the offending key on failure.
pub fn from_json<T: DeserializeOwned>(text: &str) -> Result<T> {
    let mut de = serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let key = e.path().to_string();
        Error::Schema { key: if key.is_empty() { ".".into() } else { key }, msg: e.into_inner().to_string() }
    })
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    from_json(&text)
}

/// CSV text with a header row taken from the field names of `T`.
pub fn to_csv<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Error::Internal(format!("csv: {e}")))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Internal(format!("csv: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::Internal(format!("csv: {e}")))
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    atomic_write(path, to_csv(rows)?.as_bytes())
}

/// SVG drawing of the domain, a ball family and the atoms, with `y` up.
pub fn svg_snapshot(domain: &Domain, balls: &[Ball], mu: &DislocationMeasure, title: &str) -> String {
    let (lo, hi) = domain.bbox();
    let ext = hi - lo;
    let size = 600.0;
    let scale = size / ext.x.max(ext.y);
    let map = |x: f64, y: f64| ((x - lo.x) * scale, (hi.y - y) * scale);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{:.0}" height="{:.0}" viewBox="0 0 {:.3} {:.3}">"#,
        ext.x * scale,
        ext.y * scale + 24.0,
        ext.x * scale,
        ext.y * scale + 24.0
    );
    let _ = writeln!(s, r#"<title>{}</title>"#, escape(title));
    let pts: Vec<String> = domain
        .vertices()
        .iter()
        .map(|v| {
            let (x, y) = map(v.x, v.y);
            format!("{x:.3},{y:.3}")
        })
        .collect();
    let _ = writeln!(s, r##"<polygon points="{}" fill="#f7f7f7" stroke="#333" stroke-width="1"/>"##, pts.join(" "));
    for b in balls {
        let (x, y) = map(b.center.x, b.center.y);
        let _ = writeln!(
            s,
            r##"<circle cx="{x:.3}" cy="{y:.3}" r="{:.4}" fill="none" stroke="#1f77b4" stroke-width="0.8"/>"##,
            (b.radius * scale).max(0.5)
        );
    }
    for a in &mu.atoms {
        let (x, y) = map(a.x.x, a.x.y);
        let color = if a.xi.x + a.xi.y >= 0.0 { "#2ca02c" } else { "#ff7f0e" };
        let _ = writeln!(s, r#"<circle cx="{x:.3}" cy="{y:.3}" r="2" fill="{color}"/>"#);
    }
    let _ = writeln!(
        s,
        r#"<text x="4" y="{:.1}" font-family="monospace" font-size="12">{}</text>"#,
        ext.y * scale + 16.0,
        escape(title)
    );
    s.push_str("</svg>\n");
    s
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::Deserialize;

    #[derive(Debug, Deserialize)]
    #[allow(dead_code)]
    struct Outer {
        inner: Inner,
    }
    #[derive(Debug, Deserialize)]
    #[allow(dead_code)]
    struct Inner {
        eps: f64,
    }

    #[test]
    fn schema_errors_name_the_key() {
        let err = from_json::<Outer>(r#"{"inner": {"eps": "small"}}"#).unwrap_err();
        match err {
            Error::Schema { key, .. } => assert_eq!(key, "inner.eps"),
            e => panic!("unexpected {e}"),
        }
    }
}
