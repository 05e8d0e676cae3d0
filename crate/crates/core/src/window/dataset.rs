use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::label::{auto_label, Hyperbola, LabelGeometry};
use super::{mirror, split_image, window_pixels, WindowLabel, WindowSize};
use crate::data::{Dataset, Provenance, Rect, Sample};
use crate::error::{arg_err, Error, Result};
use crate::gpr::{read_manifest, read_pgm, BScan, SceneSpec};
use crate::ops::per_sample;
use crate::rng;

/// A grayscale B-scan image with the reflector curves needed for labelling.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledImage {
    pub id: String,
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
    pub curves: Vec<Hyperbola>,
}

impl LabeledImage {
    pub fn from_bscan(id: impl Into<String>, scan: &BScan, scene: &SceneSpec) -> Self {
        Self {
            id: id.into(),
            width: scan.n_traces,
            height: scan.n_samples,
            pixels: scan.pixels.clone(),
            curves: Hyperbola::from_scene(scene),
        }
    }
}

/// Reads each manifest and the PGM it names (relative to the manifest).
pub fn load_images(manifests: &[impl AsRef<Path>]) -> Result<Vec<LabeledImage>> {
    manifests
        .iter()
        .map(|m| {
            let m = m.as_ref();
            let man = read_manifest(m)?;
            let img_path = m.parent().unwrap_or(Path::new(".")).join(&man.image_file);
            if !img_path.is_file() {
                return Err(Error::MissingImage { path: img_path });
            }
            let (w, h, pixels) = read_pgm(&img_path)?;
            if (w, h) != (man.width, man.height) {
                return Err(Error::Format(format!(
                    "{} is {w}x{h} but its manifest says {}x{}",
                    img_path.display(),
                    man.width,
                    man.height
                )));
            }
            Ok(LabeledImage {
                id: man.image_id,
                width: w,
                height: h,
                pixels,
                curves: Hyperbola::from_scene(&man.scene),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowConfig {
    pub window: WindowSize,
    pub stride: (usize, usize),
    /// Network input `(H, W)`.
    pub input: (usize, usize),
    pub channels: usize,
    pub augment: bool,
    pub geometry: LabelGeometry,
    /// Box-filter windows before shrinking them to `input`.
    #[serde(default = "antialias_default")]
    pub antialias: bool,
}

fn antialias_default() -> bool {
    true
}

impl WindowConfig {
    /// Half-window stride, one channel, no augmentation, default thresholds.
    pub fn new(window: WindowSize, input: (usize, usize)) -> Self {
        Self {
            window,
            stride: window.default_stride(),
            input,
            channels: 1,
            augment: false,
            geometry: LabelGeometry::default(),
            antialias: true,
        }
    }

    pub fn input_shape(&self) -> [usize; 3] {
        [self.channels, self.input.0, self.input.1]
    }
}

/// Every window of every image, cropped, resized and labelled. Samples are
/// ordered by image, then rect row-major. Fails if any class is absent.
pub fn build_dataset(images: &[LabeledImage], cfg: &WindowConfig) -> Result<Dataset> {
    let mut ds = Dataset::new(cfg.input_shape(), WindowLabel::ALL.len())?;
    let mut next_id = 0;
    for img in images {
        let rects = split_image(img.width, img.height, cfg.window, cfg.stride)?;
        let built = per_sample(rects.len(), |i| -> Result<(Rect, WindowLabel, Vec<f64>)> {
            let r = rects[i];
            let label = auto_label(&r, &img.curves, &cfg.geometry);
            let px = window_pixels(&img.pixels, img.width, &r, cfg.input, cfg.channels, cfg.antialias)?;
            Ok((r, label, px))
        });
        for item in built {
            let (rect, label, pixels) = item?;
            ds.push(Sample {
                id: next_id,
                pixels,
                label: label.index(),
                source: Some(Provenance { image_id: img.id.clone(), rect, flipped: false }),
            })?;
            next_id += 1;
        }
    }
    let counts = ds.class_counts();
    if counts.contains(&0) {
        let hist: Vec<String> = WindowLabel::NAMES.iter().zip(&counts).map(|(n, c)| format!("{n}={c}")).collect();
        return Err(Error::ClassStarvation(format!(
            "window {} over {} image(s) leaves a class empty ({})",
            cfg.window,
            images.len(),
            hist.join(", ")
        )));
    }
    if cfg.augment {
        ds = flip_augment(&ds)?;
    }
    Ok(ds)
}

/// Each sample followed by its horizontal mirror (Left and Right swapped).
/// Ids are renumbered in the new order.
pub fn flip_augment(ds: &Dataset) -> Result<Dataset> {
    let shape = ds.input_shape();
    let mut out = Dataset::new(shape, ds.num_classes())?;
    for s in ds.samples() {
        let label = WindowLabel::from_index(s.label)
            .ok_or_else(|| Error::InvalidArgument(format!("label {} is not a window label", s.label)))?;
        let flipped_source = s.source.clone().map(|p| Provenance { flipped: !p.flipped, ..p });
        let id = out.len();
        out.push(Sample { id, ..s.clone() })?;
        out.push(Sample {
            id: id + 1,
            pixels: mirror(&s.pixels, shape),
            label: label.mirrored().index(),
            source: flipped_source,
        })?;
    }
    Ok(out)
}

/// Seeded per-class subsample down to the rarest class count, optionally
/// capped at `max_per_class`. Survivors keep their original order and ids.
pub fn balance_classes(ds: &Dataset, max_per_class: Option<usize>, seed: u64) -> Result<Dataset> {
    let counts = ds.class_counts();
    let mut keep = counts.iter().copied().min().unwrap_or(0);
    if let Some(cap) = max_per_class {
        keep = keep.min(cap);
    }
    if keep == 0 {
        return arg_err("cannot balance a dataset with an empty class");
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); counts.len()];
    for (i, s) in ds.samples().iter().enumerate() {
        by_class[s.label].push(i);
    }
    let mut chosen = Vec::with_capacity(keep * counts.len());
    for (c, mut idx) in by_class.into_iter().enumerate() {
        idx.shuffle(&mut rng::stream_at(seed, "balance", c as u64));
        chosen.extend_from_slice(&idx[..keep]);
    }
    chosen.sort_unstable();
    Ok(ds.subset(&chosen))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gpr::{preset_scene, render_bscan, ElementKind};

    fn image(kind: ElementKind, seed: u64) -> LabeledImage {
        let scene = preset_scene(kind, seed);
        LabeledImage::from_bscan(format!("{kind}-{seed}"), &render_bscan(&scene).unwrap(), &scene)
    }

    #[test]
    fn augment_doubles_and_swaps_counts() {
        let imgs: Vec<_> = (0..2).map(|s| image(ElementKind::Column, s)).collect();
        let cfg = WindowConfig::new(WindowSize::DEFAULT, (28, 28));
        let plain = build_dataset(&imgs, &cfg).unwrap();
        let aug = build_dataset(&imgs, &WindowConfig { augment: true, ..cfg }).unwrap();
        assert_eq!(aug.len(), 2 * plain.len());
        let (c, a) = (plain.class_counts(), aug.class_counts());
        assert_eq!(a[0], c[0] + c[2]);
        assert_eq!(a[2], c[0] + c[2]);
        assert_eq!(a[1], 2 * c[1]);
        let twice = flip_augment(&flip_augment(&plain).unwrap()).unwrap();
        for (i, s) in plain.samples().iter().enumerate() {
            // sample i becomes 4i (original of original) and 4i+3 (flip of flip)
            assert_eq!(twice.samples()[4 * i].pixels, s.pixels);
            assert_eq!(twice.samples()[4 * i + 3].pixels, s.pixels);
        }
    }

    #[test]
    fn pixels_normalized_and_peaks_hold_apexes() {
        let img = image(ElementKind::Column, 3);
        let ds = build_dataset(std::slice::from_ref(&img), &WindowConfig::new(WindowSize::DEFAULT, (28, 28))).unwrap();
        for s in ds.samples() {
            assert!(s.pixels.iter().all(|&p| (0.0..=1.0).contains(&p)));
            if s.label == WindowLabel::Peak.index() {
                let r = s.source.as_ref().unwrap().rect;
                assert!(img.curves.iter().any(|c| (r.x..r.right()).contains(&c.apex.trace)
                    && (r.y..r.bottom()).contains(&c.apex.sample)));
            }
        }
    }

    #[test]
    fn balance_equalizes() {
        let imgs: Vec<_> = (0..3).map(|s| image(ElementKind::Wall, s)).collect();
        let ds = build_dataset(&imgs, &WindowConfig::new(WindowSize::DEFAULT, (28, 28))).unwrap();
        let b = balance_classes(&ds, None, 1).unwrap();
        let counts = b.class_counts();
        assert!(counts.iter().all(|&c| c == counts[0]));
        assert_eq!(counts[0], *ds.class_counts().iter().min().unwrap());
        let capped = balance_classes(&ds, Some(3), 1).unwrap();
        assert_eq!(capped.class_counts(), vec![3; 4]);
        assert_eq!(b, balance_classes(&ds, None, 1).unwrap());
    }

    #[test]
    fn starvation_reported() {
        let mut scene = preset_scene(ElementKind::Column, 0);
        scene.rebars.clear();
        let img = LabeledImage::from_bscan("blank", &render_bscan(&scene).unwrap(), &scene);
        let err = build_dataset(&[img], &WindowConfig::new(WindowSize::DEFAULT, (28, 28))).unwrap_err();
        assert!(matches!(err, Error::ClassStarvation(_)));
    }
}
