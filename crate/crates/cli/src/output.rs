//! CSV and JSON writers. Both embed the resolved config and the SHA-256 of
//! the Hamiltonian's canonical text.

use std::io::Write;

use serde_json::{json, Map, Value};

use crate::config::{Experiment, Format};
use crate::error::CliError;
use crate::tasks::{Artifact, Cell};

pub const GENERATOR: &str = concat!("skspin ", env!("CARGO_PKG_VERSION"));

pub fn spec_hash_hex(exp: &Experiment) -> String {
    skspin::sampler::spec_hash(&exp.spec)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Plain decimal in the usual range, exponent form outside it; both are the
/// shortest round-trip representation.
fn number(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || (1e-4..1e15).contains(&a) || !v.is_finite() {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

fn cell_text(c: &Cell) -> String {
    match c {
        Cell::Str(s) => s.clone(),
        Cell::Int(i) => i.to_string(),
        Cell::Num(v) => number(*v),
        Cell::Bool(b) => b.to_string(),
    }
}

fn cell_json(c: &Cell) -> Value {
    match c {
        Cell::Str(s) => json!(s),
        Cell::Int(i) => json!(i),
        Cell::Num(v) => json!(v),
        Cell::Bool(b) => json!(b),
    }
}

pub fn resolved_toml(exp: &Experiment) -> Result<String, CliError> {
    toml::to_string(&exp.config).map_err(|e| CliError::io(format!("serializing config: {e}")))
}

pub fn write_csv<W: Write>(mut w: W, exp: &Experiment, art: &Artifact) -> Result<(), CliError> {
    writeln!(w, "# {GENERATOR}")?;
    writeln!(w, "# spec_sha256 = {}", spec_hash_hex(exp))?;
    writeln!(w, "# resolved config:")?;
    for line in resolved_toml(exp)?.lines() {
        if line.is_empty() {
            writeln!(w, "#")?;
        } else {
            writeln!(w, "#   {line}")?;
        }
    }
    let mut csv = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w);
    let err = |e: csv::Error| CliError::io(e.to_string());
    csv.write_record(&art.columns).map_err(err)?;
    for row in &art.rows {
        csv.write_record(row.iter().map(cell_text)).map_err(err)?;
    }
    csv.flush()?;
    Ok(())
}

pub fn write_json<W: Write>(mut w: W, exp: &Experiment, art: &Artifact) -> Result<(), CliError> {
    let config = serde_json::to_value(&exp.config).map_err(|e| CliError::io(e.to_string()))?;
    let results: Vec<Value> = art
        .rows
        .iter()
        .map(|row| {
            let obj: Map<String, Value> = art
                .columns
                .iter()
                .cloned()
                .zip(row.iter().map(cell_json))
                .collect();
            Value::Object(obj)
        })
        .collect();
    let doc = json!({
        "generator": GENERATOR,
        "spec_sha256": spec_hash_hex(exp),
        "config": config,
        "columns": art.columns,
        "results": results,
        "diagnostics": art.diagnostics,
    });
    serde_json::to_writer_pretty(&mut w, &doc).map_err(|e| CliError::io(e.to_string()))?;
    writeln!(w)?;
    Ok(())
}

pub fn write<W: Write>(
    w: W,
    format: Format,
    exp: &Experiment,
    art: &Artifact,
) -> Result<(), CliError> {
    match format {
        Format::Csv => write_csv(w, exp, art),
        Format::Json => write_json(w, exp, art),
    }
}
