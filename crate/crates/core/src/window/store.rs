//! Dataset directories: `data.bin`, `index.csv`, `meta.json`.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::dataset::WindowConfig;
use super::WindowLabel;
use crate::data::{Dataset, Provenance, Rect, Sample};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub config: WindowConfig,
    pub num_samples: usize,
    pub class_names: Vec<String>,
    /// Free-form origin notes, e.g. the manifests the windows came from.
    #[serde(default)]
    pub sources: Vec<String>,
}

impl DatasetMeta {
    pub fn new(config: &WindowConfig, ds: &Dataset, sources: Vec<String>) -> Self {
        Self {
            config: config.clone(),
            num_samples: ds.len(),
            class_names: WindowLabel::NAMES.iter().map(|s| s.to_string()).collect(),
            sources,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct IndexRow {
    sample_id: usize,
    image_id: String,
    x: usize,
    y: usize,
    w: usize,
    h: usize,
    flipped: bool,
    label: String,
}

pub fn save_dataset(dir: &Path, ds: &Dataset, meta: &DatasetMeta) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut blob = BufWriter::new(fs::File::create(dir.join("data.bin"))?);
    for s in ds.samples() {
        for v in &s.pixels {
            blob.write_all(&v.to_le_bytes())?;
        }
    }
    blob.flush()?;
    let mut index = csv::Writer::from_path(dir.join("index.csv"))?;
    for s in ds.samples() {
        let src = s.source.clone().unwrap_or(Provenance {
            image_id: String::new(),
            rect: Rect::new(0, 0, 0, 0),
            flipped: false,
        });
        let label = WindowLabel::from_index(s.label)
            .ok_or_else(|| Error::InvalidArgument(format!("label {} is not a window label", s.label)))?;
        index.serialize(IndexRow {
            sample_id: s.id,
            image_id: src.image_id,
            x: src.rect.x,
            y: src.rect.y,
            w: src.rect.w,
            h: src.rect.h,
            flipped: src.flipped,
            label: label.name().to_string(),
        })?;
    }
    index.flush()?;
    fs::write(dir.join("meta.json"), serde_json::to_vec_pretty(meta)?)?;
    Ok(())
}

pub fn load_dataset(dir: &Path) -> Result<(Dataset, DatasetMeta)> {
    let meta: DatasetMeta = serde_json::from_slice(&fs::read(dir.join("meta.json"))?)?;
    let shape = meta.config.input_shape();
    let per: usize = shape.iter().product();
    let blob = fs::read(dir.join("data.bin"))?;
    if blob.len() != meta.num_samples * per * 8 {
        return Err(Error::Format(format!(
            "data.bin holds {} bytes, meta.json implies {}",
            blob.len(),
            meta.num_samples * per * 8
        )));
    }
    let mut ds = Dataset::new(shape, WindowLabel::ALL.len())?;
    let mut reader = csv::Reader::from_path(dir.join("index.csv"))?;
    for (i, row) in reader.deserialize::<IndexRow>().enumerate() {
        let row = row?;
        let chunk = blob
            .get(i * per * 8..(i + 1) * per * 8)
            .ok_or_else(|| Error::Format(format!("index.csv lists more than {} samples", meta.num_samples)))?;
        let pixels = chunk
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
            .collect();
        let label: WindowLabel = row.label.parse()?;
        ds.push(Sample {
            id: row.sample_id,
            pixels,
            label: label.index(),
            source: Some(Provenance {
                image_id: row.image_id,
                rect: Rect::new(row.x, row.y, row.w, row.h),
                flipped: row.flipped,
            }),
        })?;
    }
    if ds.len() != meta.num_samples {
        return Err(Error::Format(format!(
            "index.csv lists {} samples, meta.json says {}",
            ds.len(),
            meta.num_samples
        )));
    }
    Ok((ds, meta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gpr::{preset_scene, render_bscan, ElementKind};
    use crate::window::{build_dataset, LabeledImage, WindowSize};

    #[test]
    fn directory_round_trip() {
        let scene = preset_scene(ElementKind::Column, 1);
        let img = LabeledImage::from_bscan("c1", &render_bscan(&scene).unwrap(), &scene);
        let cfg = WindowConfig { augment: true, ..WindowConfig::new(WindowSize::DEFAULT, (28, 28)) };
        let ds = build_dataset(&[img], &cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let meta = DatasetMeta::new(&cfg, &ds, vec!["c1.json".into()]);
        save_dataset(dir.path(), &ds, &meta).unwrap();
        let (back, meta_back) = load_dataset(dir.path()).unwrap();
        assert_eq!(back, ds);
        assert_eq!(meta_back, meta);
        let bin = dir.path().join("data.bin");
        let bytes = fs::read(&bin).unwrap();
        fs::write(&bin, &bytes[..bytes.len() - 8]).unwrap();
        assert!(matches!(load_dataset(dir.path()), Err(Error::Format(_))));
    }
}
