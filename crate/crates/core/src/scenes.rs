//! Synthetic test images: smooth bumps and soft-edged geometric shapes.

use crate::grid::ImageGrid;

/// `cos²` bump of the given radius, 1 at the centre and 0 outside.
pub fn bump(width: usize, height: usize, center: [f64; 2], radius: f64) -> ImageGrid {
    ImageGrid::from_fn(width, height, |x, y| {
        let r = ((x - center[0]).powi(2) + (y - center[1]).powi(2)).sqrt();
        if r >= radius {
            0.0
        } else {
            (std::f64::consts::FRAC_PI_2 * r / radius).cos().powi(2)
        }
    })
    .expect("valid grid dimensions")
}

/// Rasterizes a signed distance function (negative inside) with a linear
/// edge ramp two nodes wide.
pub fn from_sdf(width: usize, height: usize, sdf: impl Fn(f64, f64) -> f64) -> ImageGrid {
    let ramp = 2.0 / (width.max(height) - 1) as f64;
    ImageGrid::from_fn(width, height, |x, y| (0.5 - sdf(x, y) / ramp).clamp(0.0, 1.0)).expect("valid grid dimensions")
}

pub fn disk(width: usize, height: usize, center: [f64; 2], radius: f64) -> ImageGrid {
    from_sdf(width, height, |x, y| {
        ((x - center[0]).powi(2) + (y - center[1]).powi(2)).sqrt() - radius
    })
}

/// Annulus of the given mean radius and thickness.
pub fn ring(width: usize, height: usize, center: [f64; 2], radius: f64, thickness: f64) -> ImageGrid {
    from_sdf(width, height, |x, y| {
        let r = ((x - center[0]).powi(2) + (y - center[1]).powi(2)).sqrt();
        (r - radius).abs() - 0.5 * thickness
    })
}

/// Axis-aligned square with half side length `half`.
pub fn square(width: usize, height: usize, center: [f64; 2], half: f64) -> ImageGrid {
    from_sdf(width, height, |x, y| {
        let dx = (x - center[0]).abs() - half;
        let dy = (y - center[1]).abs() - half;
        let outside = (dx.max(0.0).powi(2) + dy.max(0.0).powi(2)).sqrt();
        outside + dx.max(dy).min(0.0)
    })
}

/// Filled triangle with counter-clockwise or clockwise vertices.
pub fn triangle(width: usize, height: usize, vertices: [[f64; 2]; 3]) -> ImageGrid {
    from_sdf(width, height, |x, y| triangle_sdf([x, y], vertices))
}

fn triangle_sdf(p: [f64; 2], v: [[f64; 2]; 3]) -> f64 {
    let orientation = {
        let e0 = [v[1][0] - v[0][0], v[1][1] - v[0][1]];
        let e1 = [v[2][0] - v[0][0], v[2][1] - v[0][1]];
        (e0[0] * e1[1] - e0[1] * e1[0]).signum()
    };
    let mut dist = f64::INFINITY;
    let mut inside = true;
    for k in 0..3 {
        let a = v[k];
        let b = v[(k + 1) % 3];
        let e = [b[0] - a[0], b[1] - a[1]];
        let w = [p[0] - a[0], p[1] - a[1]];
        let t = ((w[0] * e[0] + w[1] * e[1]) / (e[0] * e[0] + e[1] * e[1])).clamp(0.0, 1.0);
        let d = [w[0] - t * e[0], w[1] - t * e[1]];
        dist = dist.min((d[0] * d[0] + d[1] * d[1]).sqrt());
        if orientation * (e[0] * w[1] - e[1] * w[0]) < 0.0 {
            inside = false;
        }
    }
    if inside {
        -dist
    } else {
        dist
    }
}

/// Four `n × n` controls: a large circle, a square, a triangle and a
/// small disk, all filled and centred.
pub fn shape_sequence(n: usize) -> [ImageGrid; 4] {
    let c = [0.5, 0.5];
    [
        disk(n, n, c, 0.26),
        square(n, n, c, 0.22),
        triangle(n, n, [[0.24, 0.3], [0.76, 0.3], [0.5, 0.8]]),
        disk(n, n, c, 0.16),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shapes_are_in_unit_range_with_expected_interiors() {
        let [circle, square, tri, disk] = shape_sequence(33);
        for img in [&circle, &square, &tri, &disk] {
            assert!(img.values().iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
        assert_eq!(square.get(16, 16), 1.0);
        assert_eq!(disk.get(16, 16), 1.0);
        assert_eq!(circle.get(16, 16), 1.0);
        assert_eq!(circle.get(16, 27), 0.0);
        let r = ring(33, 33, [0.5, 0.5], 0.25, 0.1);
        assert_eq!(r.get(16, 16), 0.0);
        assert_eq!(r.get(16, 24), 1.0);
        assert_eq!(tri.get(16, 16), 1.0);
        assert_eq!(tri.get(2, 30), 0.0);
        let b = bump(17, 17, [0.5, 0.5], 0.25);
        assert_eq!(b.get(8, 8), 1.0);
        assert_eq!(b.get(0, 0), 0.0);
    }
}
