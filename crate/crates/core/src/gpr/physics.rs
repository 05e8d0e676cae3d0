use std::f64::consts::PI;

/// Two-way travel time from a surface position `x` to a point reflector at
/// `(x0, depth)`: `(2/v)·√(depth² + (x − x0)²)`.
pub fn travel_time(x: f64, x0: f64, depth: f64, velocity: f64) -> f64 {
    2.0 / velocity * depth.hypot(x - x0)
}

/// Ricker wavelet `(1 − 2π²f²t²)·exp(−π²f²t²)`, unit peak at `t = 0`.
pub fn ricker(t: f64, center_freq: f64) -> f64 {
    let a = (PI * center_freq * t).powi(2);
    (1.0 - 2.0 * a) * (-a).exp()
}

/// Half-width beyond which the wavelet is below 1e-15 of its peak.
pub fn ricker_support(center_freq: f64) -> f64 {
    2.0 / center_freq
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn apex_and_oblique_times() {
        assert!((travel_time(0.3, 0.3, 0.05, 1e8) - 1.0e-9).abs() < 1e-24);
        // 0.05 / 0.12 / 0.13 triangle
        assert!((travel_time(0.42, 0.3, 0.05, 1e8) - 2.6e-9).abs() < 1e-22);
    }

    #[test]
    fn ricker_peak_and_root() {
        let f = 2.7e9;
        assert_eq!(ricker(0.0, f), 1.0);
        let root = 1.0 / (PI * f * 2f64.sqrt());
        assert!(ricker(root, f).abs() < 1e-12);
        assert!(ricker(ricker_support(f), f).abs() < 1e-15);
    }
}
