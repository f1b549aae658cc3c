use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context};
use ellipsoid_fit::PointSet;
use serde::Serialize;

/// Provenance attached to every output.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    pub seed: u64,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub wall_time_s: f64,
    pub version: String,
}

impl RunManifest {
    pub fn new(config: &impl Serialize, seed: u64) -> Self {
        Self {
            command: std::env::args().collect::<Vec<_>>().join(" "),
            config: serde_json::to_value(config).unwrap_or(serde_json::Value::Null),
            seed,
            inputs: Vec::new(),
            outputs: Vec::new(),
            wall_time_s: 0.0,
            version: concat!("ellipfit ", env!("CARGO_PKG_VERSION")).to_string(),
        }
    }

    pub fn finish(&mut self, started: Instant) {
        self.wall_time_s = started.elapsed().as_secs_f64();
    }
}

/// Sidecar path holding the manifest of a CSV output.
pub fn manifest_path(csv: &Path) -> PathBuf {
    let mut name = csv.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

pub fn read_points(path: &Path) -> anyhow::Result<PointSet> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .with_context(|| format!("cannot open {}", path.display()))?;
    let headers: Vec<String> = reader.headers()?.iter().map(|h| h.to_ascii_lowercase()).collect();
    if headers != ["x", "y", "z"] {
        bail!("{}: expected header x,y,z, found {}", path.display(), headers.join(","));
    }
    let mut rows = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.with_context(|| format!("{}: bad row {}", path.display(), line + 2))?;
        let mut row = [0.0; 3];
        for (i, field) in record.iter().enumerate().take(3) {
            row[i] = field
                .parse()
                .with_context(|| format!("{}: row {}: '{field}' is not a number", path.display(), line + 2))?;
        }
        if record.len() != 3 {
            bail!("{}: row {} has {} fields", path.display(), line + 2, record.len());
        }
        rows.push(row);
    }
    PointSet::from_rows(&rows).with_context(|| format!("{}: invalid points", path.display()))
}

pub fn write_points(path: &Path, points: &PointSet) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("cannot create {}", path.display()))?;
    w.write_record(["x", "y", "z"])?;
    for p in points.iter() {
        w.write_record([p.x, p.y, p.z].map(|v| format!("{v:.16e}")))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json(path: Option<&Path>, value: &impl Serialize) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match path {
        Some(p) => {
            let mut f = File::create(p).with_context(|| format!("cannot create {}", p.display()))?;
            writeln!(f, "{text}")?;
        }
        None => {
            let mut out = std::io::stdout().lock();
            writeln!(out, "{text}").context("cannot write to stdout")?;
        }
    }
    Ok(())
}
