use serde::{Deserialize, Serialize};

use super::WindowLabel;
use crate::data::Rect;
use crate::gpr::{apexes, travel_time, Apex, SceneSpec};

/// Labelling thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelGeometry {
    /// Fraction of the rect width, centred, in which an apex makes a Peak.
    pub peak_band: f64,
    /// How far beyond the rect edge, in rect widths, a limb's apex may lie.
    pub limb_reach: f64,
}

impl Default for LabelGeometry {
    fn default() -> Self {
        Self {
            peak_band: 0.5,
            limb_reach: 1.0,
        }
    }
}

/// One reflector's travel-time curve in pixel units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperbola {
    pub apex: Apex,
    /// Reflector position in (fractional) trace units.
    pub x0_px: f64,
    pub depth: f64,
    pub velocity: f64,
    pub dx: f64,
    pub dt: f64,
}

impl Hyperbola {
    pub fn from_scene(scene: &SceneSpec) -> Vec<Self> {
        scene
            .rebars
            .iter()
            .zip(apexes(scene))
            .map(|(r, apex)| Hyperbola {
                apex,
                x0_px: r.x0 / scene.trace_spacing,
                depth: r.depth,
                velocity: scene.velocity,
                dx: scene.trace_spacing,
                dt: scene.time_step,
            })
            .collect()
    }

    /// Fractional row of the echo at column `col`.
    pub fn row_at(&self, col: f64) -> f64 {
        travel_time(col * self.dx, self.x0_px * self.dx, self.depth, self.velocity) / self.dt
    }

    /// Whether the curve passes through the rows of `rect` anywhere over its
    /// columns.
    fn crosses(&self, rect: &Rect) -> bool {
        let (first, last) = (rect.x as f64, (rect.right() - 1) as f64);
        let lo = self.row_at(self.x0_px.clamp(first, last));
        let hi = self.row_at(first).max(self.row_at(last));
        hi >= rect.y as f64 && lo < rect.bottom() as f64
    }

    /// Signed offset of the apex column from the rect centre, pixels.
    fn offset_from(&self, rect: &Rect) -> f64 {
        self.apex.trace as f64 + 0.5 - rect.center_x()
    }
}

fn apex_inside(a: &Apex, r: &Rect) -> bool {
    (r.x..r.right()).contains(&a.trace) && (r.y..r.bottom()).contains(&a.sample)
}

/// Geometric label of one rect.
///
/// Peak: exactly one apex inside, in the central `peak_band` of the width.
/// Otherwise, among curves crossing the rect with apex columns at most
/// `limb_reach` widths beyond its edges, the one whose apex column is
/// nearest the centre decides: apex right of the central band gives Left
/// (the rect sees its left limb), left of it gives Right. An apex inside the
/// rect, an apex column inside the band, equidistant curves on both sides or
/// no crossing curve give Other.
pub fn auto_label(rect: &Rect, curves: &[Hyperbola], geometry: &LabelGeometry) -> WindowLabel {
    let w = rect.w as f64;
    let half_band = geometry.peak_band * w / 2.0;
    let inside: Vec<&Hyperbola> = curves.iter().filter(|c| apex_inside(&c.apex, rect)).collect();
    match inside.as_slice() {
        [] => {}
        [c] if (-half_band..half_band).contains(&c.offset_from(rect)) => {
            return WindowLabel::Peak
        }
        _ => return WindowLabel::Other,
    }
    let limit = w / 2.0 + geometry.limb_reach * w;
    let offsets: Vec<f64> = curves
        .iter()
        .filter(|c| c.offset_from(rect).abs() <= limit && c.crosses(rect))
        .map(|c| c.offset_from(rect))
        .collect();
    let Some(nearest) = offsets.iter().map(|d| d.abs()).min_by(f64::total_cmp) else {
        return WindowLabel::Other;
    };
    if nearest < half_band {
        return WindowLabel::Other;
    }
    let right = offsets.contains(&nearest);
    let left = offsets.contains(&-nearest);
    match (left, right) {
        (false, true) => WindowLabel::Left,
        (true, false) => WindowLabel::Right,
        _ => WindowLabel::Other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gpr::{ElementKind, Rebar};

    fn scene_with(x0: f64, depth: f64) -> SceneSpec {
        let mut s = SceneSpec::empty(ElementKind::Column, 0);
        s.rebars.push(Rebar { x0, depth });
        s
    }

    #[test]
    fn centred_apex_is_peak() {
        let s = scene_with(0.15, 0.05);
        let h = Hyperbola::from_scene(&s);
        let a = h[0].apex;
        let r = Rect::new(a.trace - 100, a.sample - 40, 200, 80);
        assert_eq!(auto_label(&r, &h, &LabelGeometry::default()), WindowLabel::Peak);
    }

    #[test]
    fn no_apexes_is_other() {
        assert_eq!(auto_label(&Rect::new(0, 0, 10, 10), &[], &LabelGeometry::default()), WindowLabel::Other);
    }

    #[test]
    fn apex_half_a_width_right_is_left() {
        let s = scene_with(0.2, 0.05);
        let h = Hyperbola::from_scene(&s);
        let apex = h[0].apex;
        let (w, hgt) = (200usize, 80usize);
        let right = apex.trace - w / 2;
        let x = right - w;
        // independent limb rows from the travel-time formula
        let t_near = travel_time((right - 1) as f64 * s.trace_spacing, 0.2, 0.05, s.velocity) / s.time_step;
        let t_far = travel_time(x as f64 * s.trace_spacing, 0.2, 0.05, s.velocity) / s.time_step;
        let y = ((t_near + t_far) / 2.0) as usize - hgt / 2;
        let r = Rect::new(x, y, w, hgt);
        assert_eq!(auto_label(&r, &h, &LabelGeometry::default()), WindowLabel::Left);
        // same columns, rows far above the limb
        let above = Rect::new(x, 0, w, 20);
        assert_eq!(auto_label(&above, &h, &LabelGeometry::default()), WindowLabel::Other);
        // mirrored geometry
        let mirrored = Rect::new(apex.trace + w / 2 + 1, y, w, hgt);
        assert_eq!(auto_label(&mirrored, &h, &LabelGeometry::default()), WindowLabel::Right);
    }

    #[test]
    fn off_centre_apex_is_other() {
        let s = scene_with(0.15, 0.05);
        let h = Hyperbola::from_scene(&s);
        let a = h[0].apex;
        let r = Rect::new(a.trace - 10, a.sample - 40, 200, 80);
        assert_eq!(auto_label(&r, &h, &LabelGeometry::default()), WindowLabel::Other);
    }
}
