use std::fmt::Write as _;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

/// Everything needed to reproduce a run, plus its results.
#[derive(Debug, Default)]
pub struct RunReport {
    pub command: String,
    inputs: Vec<(String, String, String)>,
    params: Vec<(String, String)>,
    metrics: Vec<Metric>,
    warnings: Vec<String>,
}

#[derive(Debug)]
struct Metric {
    name: String,
    length: Option<f64>,
    value: f64,
    unit: &'static str,
}

impl RunReport {
    pub fn new(command: &str) -> Self {
        RunReport {
            command: command.to_string(),
            ..Default::default()
        }
    }

    /// Records an input file or directory with its content digest.
    pub fn input(&mut self, label: &str, path: &Path) -> io::Result<()> {
        let digest = digest_path(path)?;
        self.inputs.push((label.to_string(), path.display().to_string(), digest));
        Ok(())
    }

    pub fn param(&mut self, name: &str, value: impl ToString) {
        self.params.push((name.to_string(), value.to_string()));
    }

    pub fn metric(&mut self, name: &str, value: f64, unit: &'static str) {
        self.metrics.push(Metric {
            name: name.to_string(),
            length: None,
            value,
            unit,
        });
    }

    pub fn length_metric(&mut self, name: &str, length: f64, value: f64, unit: &'static str) {
        self.metrics.push(Metric {
            name: name.to_string(),
            length: Some(length),
            value,
            unit,
        });
    }

    pub fn warn(&mut self, msg: impl Into<String>) {
        self.warnings.push(msg.into());
    }

    pub fn warnings(&mut self, msgs: impl IntoIterator<Item = String>) {
        self.warnings.extend(msgs);
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "command = {}", self.command);
        for (label, path, digest) in &self.inputs {
            let _ = writeln!(s, "input.{label} = {path} sha256:{digest}");
        }
        for (k, v) in &self.params {
            let _ = writeln!(s, "param.{k} = {v}");
        }
        for m in &self.metrics {
            let name = match m.length {
                Some(l) => format!("{}@{l}m", m.name),
                None => m.name.clone(),
            };
            let _ = write!(s, "metric.{name} = {:.9}", m.value + 0.0);
            if !m.unit.is_empty() {
                let _ = write!(s, " {}", m.unit);
            }
            s.push('\n');
        }
        for w in &self.warnings {
            let _ = writeln!(s, "warning = {}", w.replace('\n', " "));
        }
        s
    }

    pub fn metric_rows(&self) -> Vec<(String, Option<f64>, f64)> {
        self.metrics.iter().map(|m| (m.name.clone(), m.length, m.value)).collect()
    }
}

fn digest_path(path: &Path) -> io::Result<String> {
    let mut h = Sha256::new();
    if path.is_dir() {
        let mut entries: Vec<_> = fs::read_dir(path)?
            .map(|e| e.map(|e| e.path()))
            .collect::<io::Result<_>>()?;
        entries.sort();
        for p in entries.iter().filter(|p| p.is_file()) {
            h.update(p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default().as_bytes());
            h.update([0u8]);
            h.update(fs::read(p)?);
        }
    } else {
        h.update(fs::read(path)?);
    }
    Ok(hex::encode(h.finalize()))
}

/// Writes `path` through a temporary file in the same directory and
/// renames it into place.
pub fn write_atomic<F>(path: &Path, f: F) -> phonemap::Result<()>
where
    F: FnOnce(&mut dyn Write) -> phonemap::Result<()>,
{
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    {
        let mut w = BufWriter::new(tmp.as_file_mut());
        f(&mut w)?;
        w.flush()?;
    }
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}
