use crate::error::{arg_err, shape_err, Result};
use crate::tensor::Tensor;

/// Source coordinate for output index `i` on a corner-aligned grid.
/// A single output sample reads the source centre.
fn source_coord(i: usize, src: usize, dst: usize) -> f64 {
    if dst == 1 {
        (src as f64 - 1.0) / 2.0
    } else {
        i as f64 * (src as f64 - 1.0) / (dst as f64 - 1.0)
    }
}

/// Bilinear resize of a `[C, H, W]` image with corner-aligned sampling:
/// output corners coincide with input corners.
pub fn resize_bilinear(image: &Tensor, target: (usize, usize)) -> Result<Tensor> {
    let (th, tw) = target;
    if th == 0 || tw == 0 {
        return arg_err(format!("resize target {th}×{tw} is empty"));
    }
    let (c, h, w) = match image.shape() {
        &[c, h, w] => (c, h, w),
        s => return shape_err(format!("resize expects a [C,H,W] image, got {s:?}")),
    };
    if (h, w) == (th, tw) {
        return Ok(image.clone());
    }
    let cols: Vec<(usize, usize, f64)> = (0..tw)
        .map(|x| {
            let sx = source_coord(x, w, tw);
            let x0 = (sx.floor() as usize).min(w - 1);
            (x0, (x0 + 1).min(w - 1), sx - x0 as f64)
        })
        .collect();
    let src = image.data();
    let mut out = Vec::with_capacity(c * th * tw);
    for ch in 0..c {
        let plane = &src[ch * h * w..(ch + 1) * h * w];
        for y in 0..th {
            let sy = source_coord(y, h, th);
            let y0 = (sy.floor() as usize).min(h - 1);
            let y1 = (y0 + 1).min(h - 1);
            let fy = sy - y0 as f64;
            let (r0, r1) = (&plane[y0 * w..(y0 + 1) * w], &plane[y1 * w..(y1 + 1) * w]);
            for &(x0, x1, fx) in &cols {
                let top = r0[x0] + (r0[x1] - r0[x0]) * fx;
                let bot = r1[x0] + (r1[x1] - r1[x0]) * fx;
                out.push(top + (bot - top) * fy);
            }
        }
    }
    Tensor::new(&[c, th, tw], out)
}

/// Centred moving average along one axis with a `k`-tap window, edges clamped.
fn box_axis(plane: &[f64], h: usize, w: usize, k: usize, along_rows: bool) -> Vec<f64> {
    let (n, len) = if along_rows { (h, w) } else { (w, h) };
    let at = |line: usize, i: usize| if along_rows { line * w + i } else { i * w + line };
    let (before, after) = ((k - 1) / 2, k / 2);
    let mut out = vec![0.0; plane.len()];
    for line in 0..n {
        for i in 0..len {
            let sum: f64 = (i as isize - before as isize..=(i + after) as isize)
                .map(|j| plane[at(line, j.clamp(0, len as isize - 1) as usize)])
                .sum();
            out[at(line, i)] = sum / k as f64;
        }
    }
    out
}

/// Bilinear resize preceded, when shrinking, by a box filter whose width is
/// the integer reduction factor on each axis.
pub fn resize_antialiased(image: &Tensor, target: (usize, usize)) -> Result<Tensor> {
    let (c, h, w) = match image.shape() {
        &[c, h, w] => (c, h, w),
        s => return shape_err(format!("resize expects a [C,H,W] image, got {s:?}")),
    };
    let (ky, kx) = (h / target.0.max(1), w / target.1.max(1));
    if ky <= 1 && kx <= 1 {
        return resize_bilinear(image, target);
    }
    let mut data = Vec::with_capacity(image.len());
    for plane in image.data().chunks(h * w) {
        let mut p = plane.to_vec();
        if kx > 1 {
            p = box_axis(&p, h, w, kx, true);
        }
        if ky > 1 {
            p = box_axis(&p, h, w, ky, false);
        }
        data.extend(p);
    }
    resize_bilinear(&Tensor::new(&[c, h, w], data)?, target)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn antialias_averages_alternating_columns() {
        let row: Vec<f64> = (0..8).map(|i| (i % 2) as f64).collect();
        let img = Tensor::new(&[1, 1, 8], row).unwrap();
        let smooth = resize_antialiased(&img, (1, 4)).unwrap();
        // the last sample's box runs past the edge and repeats it
        assert!(smooth.data()[..3].iter().all(|&v| (v - 0.5).abs() < 1e-12), "{:?}", smooth.data());
        assert_eq!(smooth.data()[3], 1.0);
    }

    #[test]
    fn antialias_is_plain_when_enlarging() {
        let img = Tensor::new(&[1, 2, 3], vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        assert_eq!(resize_antialiased(&img, (4, 6)).unwrap(), resize_bilinear(&img, (4, 6)).unwrap());
    }

    #[test]
    fn identity_and_constant() {
        let img = Tensor::from_fn(&[2, 3, 5], |i| i as f64);
        assert_eq!(resize_bilinear(&img, (3, 5)).unwrap(), img);
        let flat = Tensor::filled(&[1, 7, 4], 0.625);
        let r = resize_bilinear(&flat, (28, 28)).unwrap();
        assert!(r.data().iter().all(|&v| (v - 0.625).abs() < 1e-15));
    }

    #[test]
    fn two_by_two_to_three_by_three() {
        let img = Tensor::new(&[1, 2, 2], vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        let r = resize_bilinear(&img, (3, 3)).unwrap();
        assert_eq!(r.get(&[0, 1, 1]), Some(1.5));
        assert_eq!(r.get(&[0, 0, 0]), Some(0.0));
        assert_eq!(r.get(&[0, 2, 2]), Some(3.0));
    }

    #[test]
    fn empty_target_rejected() {
        assert!(resize_bilinear(&Tensor::zeros(&[1, 2, 2]), (0, 3)).is_err());
    }
}
