//! On-disk layout of a data set directory:
//!
//! ```text
//! manifest.json   provenance, layout, scaler, payload shapes and CRC32s
//! inputs.f64      drive samples, row-major little-endian float64
//! outputs.f64     magnetization samples, same layout
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DatasetManifest, IoDataset, Layout, PulseSeries, ResponseSeries, ScalerState};
use crate::payload;
use crate::{Error, Result};

pub const FORMAT_TAG: &str = "optics-tcn/dataset";
pub const FORMAT_VERSION: u32 = 1;

const MANIFEST: &str = "manifest.json";
const INPUTS: &str = "inputs.f64";
const OUTPUTS: &str = "outputs.f64";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PayloadFile {
    pub file: String,
    pub shape: Vec<usize>,
    pub crc32: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestDocument {
    pub format: String,
    pub format_version: u32,
    pub layout: Layout,
    #[serde(flatten)]
    pub provenance: DatasetManifest,
    pub scaler: Option<ScalerState>,
    pub inputs: PayloadFile,
    pub outputs: PayloadFile,
}

impl ManifestDocument {
    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST);
        let doc: ManifestDocument = payload::read_json(&path)?;
        if doc.format != FORMAT_TAG {
            return Err(Error::format(
                &path,
                format!("format tag {:?}, expected {FORMAT_TAG:?}", doc.format),
            ));
        }
        if doc.format_version != FORMAT_VERSION {
            return Err(Error::VersionMismatch {
                path,
                found: doc.format_version,
                expected: FORMAT_VERSION,
            });
        }
        Ok(doc)
    }
}

pub fn save_dataset(ds: &IoDataset, dir: &Path) -> Result<()> {
    payload::ensure_dir(dir)?;
    let t = ds.t_steps();
    if ds.pairs.len() != ds.layout.len()
        || ds
            .pairs
            .iter()
            .any(|(x, y)| x.values.len() != t || y.values.len() != t)
    {
        return Err(Error::Shape(format!(
            "pairs do not match layout {:?}",
            ds.layout
        )));
    }
    let inputs: Vec<f64> = ds.pairs.iter().flat_map(|(x, _)| x.values.iter().copied()).collect();
    let outputs: Vec<f64> = ds.pairs.iter().flat_map(|(_, y)| y.values.iter().copied()).collect();
    let shape = ds.layout.shape();
    let doc = ManifestDocument {
        format: FORMAT_TAG.to_string(),
        format_version: FORMAT_VERSION,
        layout: ds.layout,
        provenance: ds.manifest.clone(),
        scaler: ds.scaler,
        inputs: PayloadFile {
            file: INPUTS.into(),
            shape: shape.clone(),
            crc32: payload::write_f64(&dir.join(INPUTS), &inputs)?,
        },
        outputs: PayloadFile {
            file: OUTPUTS.into(),
            shape,
            crc32: payload::write_f64(&dir.join(OUTPUTS), &outputs)?,
        },
    };
    payload::write_json(&dir.join(MANIFEST), &doc)
}

pub fn load_dataset(dir: &Path) -> Result<IoDataset> {
    let doc = ManifestDocument::read(dir)?;
    let layout = doc.layout;
    let total = layout.len() * layout.t_steps();
    for p in [&doc.inputs, &doc.outputs] {
        if p.shape != layout.shape() {
            return Err(Error::format(
                dir.join(MANIFEST),
                format!("payload shape {:?} disagrees with layout {:?}", p.shape, layout),
            ));
        }
    }
    let inputs = payload::read_f64(&dir.join(&doc.inputs.file), total, doc.inputs.crc32)?;
    let outputs = payload::read_f64(&dir.join(&doc.outputs.file), total, doc.outputs.crc32)?;

    let prov = &doc.provenance;
    let n_omega = prov.omegas.len();
    let expected_pairs = match layout {
        Layout::Flat { n, .. } => n == n_omega && !prov.amplitudes.is_empty(),
        Layout::AmplitudeGrid { m, n, .. } => n == n_omega && m == prov.amplitudes.len(),
    };
    if !expected_pairs {
        return Err(Error::format(
            dir.join(MANIFEST),
            "frequency/amplitude lists disagree with the layout",
        ));
    }
    let t = layout.t_steps();
    let pairs = (0..layout.len())
        .map(|idx| {
            let amplitude = match layout {
                Layout::Flat { .. } => prov.amplitudes[0],
                Layout::AmplitudeGrid { n, .. } => prov.amplitudes[idx / n],
            };
            let pulse = PulseSeries {
                values: inputs[idx * t..(idx + 1) * t].to_vec(),
                amplitude,
                omega: prov.omegas[idx % n_omega],
            };
            let response = ResponseSeries {
                values: outputs[idx * t..(idx + 1) * t].to_vec(),
            };
            (pulse, response)
        })
        .collect();
    Ok(IoDataset {
        pairs,
        layout,
        scaler: doc.scaler,
        manifest: doc.provenance,
    })
}

/// Writes `inputs.csv` and `outputs.csv`, one series per row, no header.
pub fn export_csv(ds: &IoDataset, dir: &Path) -> Result<()> {
    payload::ensure_dir(dir)?;
    for (name, pick) in [
        ("inputs.csv", 0usize),
        ("outputs.csv", 1usize),
    ] {
        let path = dir.join(name);
        let mut w = csv::WriterBuilder::new()
            .has_headers(false)
            .from_path(&path)
            .map_err(|e| Error::csv(&path, e))?;
        for (x, y) in &ds.pairs {
            let series = if pick == 0 { &x.values } else { &y.values };
            w.serialize(series).map_err(|e| Error::csv(&path, e))?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::generate_flat;
    use crate::spin::{SpinChainConfig, TimeGrid};

    fn small() -> IoDataset {
        let cfg = SpinChainConfig::transverse(vec![0.8, 0.9, 0.85]).unwrap();
        let grid = TimeGrid::new(16, 0.1).unwrap();
        let mut ds = generate_flat(&cfg, &grid, 1.0, &[0.7, 1.9]).unwrap();
        ds.scaler = Some(ScalerState {
            input_min: -1.0,
            input_max: 1.0,
            output_min: -0.3,
            output_max: 0.4,
        });
        ds
    }

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let ds = small();
        save_dataset(&ds, dir.path()).unwrap();
        let back = load_dataset(dir.path()).unwrap();
        assert_eq!(back, ds);
        assert_eq!(back.manifest.chain.couplings[2], 0.85);
    }

    #[test]
    fn corrupted_tag_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        save_dataset(&small(), dir.path()).unwrap();
        let path = dir.path().join(MANIFEST);
        let text = std::fs::read_to_string(&path).unwrap();
        std::fs::write(&path, text.replace(FORMAT_TAG, "garbage/format")).unwrap();
        assert!(matches!(load_dataset(dir.path()), Err(Error::Format { .. })));
    }

    #[test]
    fn version_mismatch_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        save_dataset(&small(), dir.path()).unwrap();
        let path = dir.path().join(MANIFEST);
        let text = std::fs::read_to_string(&path).unwrap();
        std::fs::write(&path, text.replace("\"format_version\": 1", "\"format_version\": 9")).unwrap();
        assert!(matches!(load_dataset(dir.path()), Err(Error::VersionMismatch { found: 9, .. })));
    }

    #[test]
    fn flipped_payload_byte_fails_checksum() {
        let dir = tempfile::tempdir().unwrap();
        save_dataset(&small(), dir.path()).unwrap();
        let path = dir.path().join(OUTPUTS);
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[13] ^= 0x40;
        std::fs::write(&path, bytes).unwrap();
        assert!(matches!(load_dataset(dir.path()), Err(Error::Checksum { .. })));
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        save_dataset(&small(), dir.path()).unwrap();
        let path = dir.path().join(INPUTS);
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 8]).unwrap();
        let err = load_dataset(dir.path()).unwrap_err();
        assert!(err.to_string().contains("truncated"));
    }

    #[test]
    fn csv_export_has_one_row_per_series() {
        let dir = tempfile::tempdir().unwrap();
        let ds = small();
        export_csv(&ds, dir.path()).unwrap();
        let text = std::fs::read_to_string(dir.path().join("outputs.csv")).unwrap();
        let rows: Vec<&str> = text.lines().collect();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].split(',').count(), 16);
        let first: f64 = rows[1].split(',').next().unwrap().parse().unwrap();
        assert_eq!(first, ds.pairs[1].1.values[0]);
    }
}
