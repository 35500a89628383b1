//! Datasets as JSON lines: a manifest line, then one record per line.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fingerprint::sha256_hex;
use crate::signal::SignalModel;
use crate::simulator::SampleRecord;

pub const DATASET_FORMAT: &str = "mrs-workbench-dataset";
pub const DATASET_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    /// Identifies the basis, axis and baseline order the records came from.
    pub fingerprint: String,
    pub n_records: usize,
    /// SHA-256 over the record lines.
    pub records_sha256: String,
    #[serde(default)]
    pub description: serde_json::Value,
}

/// Fingerprint of everything that shapes a simulated spectrum.
pub fn model_fingerprint(model: &SignalModel) -> String {
    let axis = serde_json::to_string(model.axis().config()).expect("axis serializes");
    sha256_hex(format!("{}|{}|{}", model.basis().fingerprint(), axis, model.layout().baseline_order).as_bytes())
}

fn corrupt(path: &Path, reason: impl Into<String>) -> Error {
    Error::Corrupt {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

pub fn write_dataset(
    path: impl AsRef<Path>,
    fingerprint: &str,
    records: &[SampleRecord],
    description: serde_json::Value,
) -> Result<Manifest> {
    let lines = records
        .iter()
        .map(serde_json::to_string)
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let body = lines.join("\n");
    let manifest = Manifest {
        format: DATASET_FORMAT.into(),
        version: DATASET_VERSION,
        fingerprint: fingerprint.into(),
        n_records: records.len(),
        records_sha256: sha256_hex(body.as_bytes()),
        description,
    };
    if let Some(parent) = path.as_ref().parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    serde_json::to_writer(&mut w, &manifest)?;
    w.write_all(b"\n")?;
    for line in &lines {
        w.write_all(line.as_bytes())?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(manifest)
}

/// Reads a dataset; with `expected` the manifest fingerprint must match.
pub fn read_dataset(path: impl AsRef<Path>, expected: Option<&str>) -> Result<(Manifest, Vec<SampleRecord>)> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::Config(format!("dataset {} does not exist", path.display())),
        _ => Error::Io(e),
    })?;
    let mut lines = BufReader::new(file).lines();
    let head = lines.next().ok_or_else(|| corrupt(path, "empty file"))??;
    let manifest: Manifest =
        serde_json::from_str(&head).map_err(|e| corrupt(path, format!("bad manifest: {e}")))?;
    if manifest.format != DATASET_FORMAT || manifest.version != DATASET_VERSION {
        return Err(corrupt(path, format!("unsupported format {} v{}", manifest.format, manifest.version)));
    }
    if let Some(fp) = expected {
        if fp != manifest.fingerprint {
            return Err(Error::Fingerprint {
                expected: fp.into(),
                found: manifest.fingerprint.clone(),
            });
        }
    }
    let body: Vec<String> = lines.collect::<std::io::Result<_>>()?;
    let body: Vec<String> = body.into_iter().filter(|l| !l.is_empty()).collect();
    if body.len() != manifest.n_records {
        return Err(corrupt(
            path,
            format!("manifest lists {} records, file holds {}", manifest.n_records, body.len()),
        ));
    }
    if sha256_hex(body.join("\n").as_bytes()) != manifest.records_sha256 {
        return Err(corrupt(path, "record checksum mismatch"));
    }
    let records = body
        .iter()
        .enumerate()
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| corrupt(path, format!("record {i}: {e}"))))
        .collect::<Result<Vec<SampleRecord>>>()?;
    Ok((manifest, records))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::axis::SpectralAxis;
    use crate::basis::{synthesize_basis, BasisSpec};
    use crate::par::Exec;
    use crate::simulator::{PriorTable, Scenario, Simulator};
    use std::sync::Arc;

    fn sim() -> Simulator {
        let axis = SpectralAxis::default();
        let basis = synthesize_basis(&BasisSpec::default_brain(), &axis).unwrap();
        Simulator::new(Arc::new(SignalModel::new(axis, basis, 2).unwrap()), PriorTable::brain_default()).unwrap()
    }

    #[test]
    fn empty_and_full_roundtrips() {
        let sim = sim();
        let fp = model_fingerprint(sim.model());
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("empty.jsonl");
        write_dataset(&p, &fp, &[], serde_json::Value::Null).unwrap();
        let (m, r) = read_dataset(&p, Some(&fp)).unwrap();
        assert_eq!(m.n_records, 0);
        assert!(r.is_empty());

        let mut recs = sim.generate_dataset(100, &Scenario::full_range(), 9, Exec::Parallel).unwrap();
        recs[3].snr_db = f64::INFINITY;
        let p = dir.path().join("full.jsonl");
        write_dataset(&p, &fp, &recs, serde_json::json!({"scenario": "full_range"})).unwrap();
        let (_, back) = read_dataset(&p, Some(&fp)).unwrap();
        assert_eq!(back, recs);
    }

    #[test]
    fn tampering_is_detected() {
        let sim = sim();
        let fp = model_fingerprint(sim.model());
        let recs = sim.generate_dataset(3, &Scenario::mid_range(), 1, Exec::Sequential).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.jsonl");
        write_dataset(&p, &fp, &recs, serde_json::Value::Null).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();

        let q = dir.path().join("t.jsonl");
        std::fs::write(&q, text.replacen(&fp, &"0".repeat(64), 1)).unwrap();
        assert!(matches!(read_dataset(&q, Some(&fp)), Err(Error::Fingerprint { .. })));

        let mut lines: Vec<&str> = text.lines().collect();
        lines.pop();
        std::fs::write(&q, lines.join("\n")).unwrap();
        assert!(matches!(read_dataset(&q, Some(&fp)), Err(Error::Corrupt { .. })));

        std::fs::write(&q, text.replacen("\"seed\":", "\"seed\": ", 1)).unwrap();
        assert!(matches!(read_dataset(&q, Some(&fp)), Err(Error::Corrupt { .. })));

        let other = SignalModel::new(SpectralAxis::default(), sim.model().basis().clone(), 1).unwrap();
        assert_ne!(model_fingerprint(&other), fp);
    }
}
