//! Sliding-window splitting, geometric labelling and dataset assembly.

pub mod dataset;
pub mod label;
pub mod store;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::Rect;
use crate::error::{arg_err, shape_err, Error, Result};
use crate::ops::{resize_antialiased, resize_bilinear};
use crate::tensor::Tensor;

pub use dataset::{balance_classes, build_dataset, flip_augment, load_images, LabeledImage, WindowConfig};
pub use label::{auto_label, Hyperbola, LabelGeometry};
pub use store::{load_dataset, save_dataset, DatasetMeta};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowLabel {
    Left = 0,
    Peak = 1,
    Right = 2,
    Other = 3,
}

impl WindowLabel {
    pub const ALL: [WindowLabel; 4] = [WindowLabel::Left, WindowLabel::Peak, WindowLabel::Right, WindowLabel::Other];
    pub const NAMES: [&'static str; 4] = ["left", "peak", "right", "other"];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        Self::NAMES[self.index()]
    }

    /// Label of the horizontally mirrored window.
    pub fn mirrored(self) -> Self {
        match self {
            WindowLabel::Left => WindowLabel::Right,
            WindowLabel::Right => WindowLabel::Left,
            other => other,
        }
    }
}

impl FromStr for WindowLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|l| l.name() == s)
            .ok_or_else(|| Error::Format(format!("unknown window label `{s}`")))
    }
}

/// Splitting rectangle, width × height in pixels. Serializes as `"WxH"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct WindowSize {
    pub w: usize,
    pub h: usize,
}

impl WindowSize {
    pub const PRESETS: [WindowSize; 4] = [
        WindowSize { w: 120, h: 30 },
        WindowSize { w: 150, h: 50 },
        WindowSize { w: 200, h: 80 },
        WindowSize { w: 250, h: 100 },
    ];
    pub const DEFAULT: WindowSize = WindowSize { w: 200, h: 80 };

    pub fn new(w: usize, h: usize) -> Self {
        Self { w, h }
    }

    pub fn is_preset(self) -> bool {
        Self::PRESETS.contains(&self)
    }

    /// Half the window in each axis, at least one pixel.
    pub fn default_stride(self) -> (usize, usize) {
        ((self.w / 2).max(1), (self.h / 2).max(1))
    }
}

impl fmt::Display for WindowSize {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.w, self.h)
    }
}

impl FromStr for WindowSize {
    type Err = Error;

    /// Parses `WxH` (also accepts `×`).
    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().replace('×', "x");
        let (w, h) = norm
            .split_once(['x', 'X'])
            .ok_or_else(|| Error::InvalidArgument(format!("window `{s}` is not of the form WxH")))?;
        let parse = |v: &str| {
            v.trim()
                .parse::<usize>()
                .ok()
                .filter(|&n| n > 0)
                .ok_or_else(|| Error::InvalidArgument(format!("window `{s}` has an invalid extent `{v}`")))
        };
        Ok(Self::new(parse(w)?, parse(h)?))
    }
}

impl TryFrom<String> for WindowSize {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<WindowSize> for String {
    fn from(w: WindowSize) -> String {
        w.to_string()
    }
}

/// Regular grid of rects, top-left origin, row-major order; windows that would
/// run past the right or bottom edge are dropped.
pub fn split_image(width: usize, height: usize, window: WindowSize, stride: (usize, usize)) -> Result<Vec<Rect>> {
    let (sx, sy) = stride;
    if sx == 0 || sy == 0 {
        return arg_err("window stride must be at least 1 in each axis");
    }
    if window.w == 0 || window.h == 0 {
        return arg_err("window must be non-empty");
    }
    if window.w > width || window.h > height {
        return shape_err(format!("window {window} does not fit in a {width}x{height} image"));
    }
    let cols = (width - window.w) / sx + 1;
    let rows = (height - window.h) / sy + 1;
    Ok((0..rows)
        .flat_map(|r| (0..cols).map(move |c| Rect::new(c * sx, r * sy, window.w, window.h)))
        .collect())
}

/// Crops `rect` from an 8-bit image, scales to `[0, 1]` and resizes to
/// `input` = `(H, W)`, box-filtering first when `antialias` is set and the
/// crop shrinks. With `channels == 3` the gray plane is replicated.
pub fn window_pixels(
    image: &[u8],
    width: usize,
    rect: &crate::data::Rect,
    input: (usize, usize),
    channels: usize,
    antialias: bool,
) -> Result<Vec<f64>> {
    if channels != 1 && channels != 3 {
        return arg_err(format!("input channels must be 1 or 3, got {channels}"));
    }
    if rect.right() > width || rect.bottom() * width > image.len() {
        return shape_err(format!("rect {rect:?} lies outside the {width}-wide image"));
    }
    let mut crop = Vec::with_capacity(rect.w * rect.h);
    for y in rect.y..rect.bottom() {
        let row = &image[y * width + rect.x..y * width + rect.right()];
        crop.extend(row.iter().map(|&p| p as f64 / 255.0));
    }
    let crop = Tensor::new(&[1, rect.h, rect.w], crop)?;
    let resized = if antialias { resize_antialiased(&crop, input)? } else { resize_bilinear(&crop, input)? };
    let resized = resized.into_data();
    Ok(if channels == 3 { resized.repeat(3) } else { resized })
}

/// Mirrors a `[C, H, W]` pixel buffer left-to-right.
pub fn mirror(pixels: &[f64], chw: [usize; 3]) -> Vec<f64> {
    let w = chw[2];
    pixels
        .chunks(w)
        .flat_map(|row| row.iter().rev().copied())
        .collect()
}
