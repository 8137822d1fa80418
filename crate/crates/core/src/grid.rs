//! Nodal grayscale grids on the unit square.
//!
//! Node `(i, j)` sits at `(i / (width - 1), j / (height - 1))`, values are
//! stored row-major. Integrals use trapezoidal node weights, and off-node
//! evaluation is bilinear with positions clamped into the domain.

use crate::error::{Error, Result};

/// Row-major nodal intensity field on `[0, 1]^2`.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageGrid {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl ImageGrid {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        check_dims(width, height)?;
        if values.len() != width * height {
            return Err(Error::LengthMismatch {
                expected: width * height,
                actual: values.len(),
            });
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue { index });
        }
        Ok(Self { width, height, values })
    }

    pub fn constant(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    /// Evaluates `f(x, y)` at every node position in row-major order.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(f64, f64) -> f64) -> Result<Self> {
        check_dims(width, height)?;
        let (hx, hy) = spacing(width, height);
        let values = (0..height)
            .flat_map(|j| (0..width).map(move |i| (i, j)))
            .map(|(i, j)| f(i as f64 * hx, j as f64 * hy))
            .collect();
        Self::new(width, height, values)
    }

    /// Internal constructor for values produced by arithmetic on finite data.
    pub(crate) fn from_parts(width: usize, height: usize, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), width * height);
        debug_assert!(values.iter().all(|v| v.is_finite()));
        Self { width, height, values }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.width + i]
    }

    /// Node spacing `(h_x, h_y)`.
    pub fn spacing(&self) -> (f64, f64) {
        spacing(self.width, self.height)
    }

    pub fn node_position(&self, i: usize, j: usize) -> [f64; 2] {
        let (hx, hy) = self.spacing();
        [i as f64 * hx, j as f64 * hy]
    }

    pub fn max_abs_diff(&self, other: &ImageGrid) -> Result<f64> {
        same_dims(self, other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| f64::max(m, (a - b).abs())))
    }

    /// Bilinear evaluation at fractional node coordinates, clamped to the grid.
    pub(crate) fn sample_index(&self, sx: f64, sy: f64) -> f64 {
        sample_index(&self.values, self.width, self.height, sx, sy)
    }
}

pub(crate) fn check_dims(width: usize, height: usize) -> Result<()> {
    if width < 2 || height < 2 {
        return Err(Error::GridTooSmall { width, height, min: 2 });
    }
    Ok(())
}

pub(crate) fn same_dims(a: &ImageGrid, b: &ImageGrid) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(Error::DimensionMismatch {
            left: a.dims(),
            right: b.dims(),
        });
    }
    Ok(())
}

pub(crate) fn spacing(width: usize, height: usize) -> (f64, f64) {
    (1.0 / (width - 1) as f64, 1.0 / (height - 1) as f64)
}

/// Cell index and fractional offset along one axis with `n` nodes.
/// Returns `(i0, f, inside)` where `inside` is false when `s` was clamped.
#[inline]
pub(crate) fn locate(s: f64, n: usize) -> (usize, f64, bool) {
    let last = (n - 1) as f64;
    let inside = (0.0..=last).contains(&s);
    let c = s.clamp(0.0, last);
    // `c >= 0`, so truncation is the floor.
    let i0 = (c as usize).min(n - 2);
    (i0, c - i0 as f64, inside)
}

pub(crate) fn sample_index(values: &[f64], width: usize, height: usize, sx: f64, sy: f64) -> f64 {
    let (i0, fx, _) = locate(sx, width);
    let (j0, fy, _) = locate(sy, height);
    let at = |i: usize, j: usize| values[j * width + i];
    (1.0 - fx) * (1.0 - fy) * at(i0, j0)
        + fx * (1.0 - fy) * at(i0 + 1, j0)
        + (1.0 - fx) * fy * at(i0, j0 + 1)
        + fx * fy * at(i0 + 1, j0 + 1)
}

/// Bilinear interpolation of nodal values at `p`, with `p` clamped into the
/// unit square first.
pub fn sample_bilinear(img: &ImageGrid, p: [f64; 2]) -> f64 {
    let sx = p[0] * (img.width - 1) as f64;
    let sy = p[1] * (img.height - 1) as f64;
    img.sample_index(sx, sy)
}

#[inline]
fn edge_factor(i: usize, n: usize) -> f64 {
    if i == 0 || i == n - 1 {
        0.5
    } else {
        1.0
    }
}

/// Trapezoidal quadrature weights; they sum to one.
pub fn trapezoid_weights(width: usize, height: usize) -> Vec<f64> {
    let (hx, hy) = spacing(width, height);
    (0..height)
        .flat_map(|j| (0..width).map(move |i| (i, j)))
        .map(|(i, j)| hx * hy * edge_factor(i, width) * edge_factor(j, height))
        .collect()
}

/// Discrete `L^2(D)` distance with trapezoidal weights.
pub fn l2_distance(a: &ImageGrid, b: &ImageGrid) -> Result<f64> {
    same_dims(a, b)?;
    let w = trapezoid_weights(a.width, a.height);
    let sum: f64 = a
        .values
        .iter()
        .zip(&b.values)
        .zip(&w)
        .map(|((x, y), w)| w * (x - y) * (x - y))
        .sum();
    Ok(sum.sqrt())
}

/// Nodewise `(1 - t) a + t b`.
pub fn linear_blend(a: &ImageGrid, b: &ImageGrid, t: f64) -> Result<ImageGrid> {
    same_dims(a, b)?;
    if !t.is_finite() {
        return Err(Error::InvalidParameter { name: "t", value: t });
    }
    let values = a
        .values
        .iter()
        .zip(&b.values)
        .map(|(x, y)| (1.0 - t) * x + t * y)
        .collect();
    Ok(ImageGrid::from_parts(a.width, a.height, values))
}

/// Node count of the next coarser level.
pub fn coarse_len(n: usize) -> usize {
    n.div_ceil(2)
}

/// Fine-axis interpolation weights at coarse node `ic`.
fn axis_injection(n_fine: usize, n_coarse: usize, ic: usize) -> Vec<(usize, f64)> {
    let num = ic * (n_fine - 1);
    let den = n_coarse - 1;
    if num.is_multiple_of(den) {
        return vec![(num / den, 1.0)];
    }
    let (i0, f, _) = locate(num as f64 / den as f64, n_fine);
    vec![(i0, 1.0 - f), (i0 + 1, f)]
}

/// Fine-axis `[1/4, 1/2, 1/4]` weights centred on coarse node `ic`.
fn axis_full_weighting(n_fine: usize, n_coarse: usize, ic: usize) -> Vec<(usize, f64)> {
    let num = ic * (n_fine - 1);
    let den = n_coarse - 1;
    if num.is_multiple_of(den) {
        let m = num / den;
        return vec![(m - 1, 0.25), (m, 0.5), (m + 1, 0.25)];
    }
    let s = num as f64 / den as f64;
    let mut out = Vec::with_capacity(6);
    for (offset, w) in [(-1.0, 0.25), (0.0, 0.5), (1.0, 0.25)] {
        let (i0, f, _) = locate(s + offset, n_fine);
        out.push((i0, w * (1.0 - f)));
        out.push((i0 + 1, w * f));
    }
    out
}

pub(crate) fn restrict_values(values: &[f64], width: usize, height: usize) -> Result<(Vec<f64>, usize, usize)> {
    if width < 3 || height < 3 {
        return Err(Error::GridTooSmall { width, height, min: 3 });
    }
    let (cw, ch) = (coarse_len(width), coarse_len(height));
    let mut out = Vec::with_capacity(cw * ch);
    for jc in 0..ch {
        for ic in 0..cw {
            let boundary = ic == 0 || jc == 0 || ic == cw - 1 || jc == ch - 1;
            let (wx, wy) = if boundary {
                (axis_injection(width, cw, ic), axis_injection(height, ch, jc))
            } else {
                (axis_full_weighting(width, cw, ic), axis_full_weighting(height, ch, jc))
            };
            let mut acc = 0.0;
            for &(j, by) in &wy {
                for &(i, bx) in &wx {
                    acc += bx * by * values[j * width + i];
                }
            }
            out.push(acc);
        }
    }
    Ok((out, cw, ch))
}

pub(crate) fn prolongate_values(values: &[f64], (width, height): (usize, usize), (tw, th): (usize, usize)) -> Vec<f64> {
    let sx = (width - 1) as f64 / (tw - 1) as f64;
    let sy = (height - 1) as f64 / (th - 1) as f64;
    let mut out = Vec::with_capacity(tw * th);
    for j in 0..th {
        for i in 0..tw {
            out.push(sample_index(values, width, height, i as f64 * sx, j as f64 * sy));
        }
    }
    out
}

/// Halves the node count per side: full weighting at interior coarse nodes,
/// injection (interpolation at the coarse node position) on the boundary.
pub fn restrict(img: &ImageGrid) -> Result<ImageGrid> {
    let (values, cw, ch) = restrict_values(&img.values, img.width, img.height)?;
    Ok(ImageGrid::from_parts(cw, ch, values))
}

/// Bilinear resampling onto a `target_dims` node grid.
pub fn prolongate(img: &ImageGrid, target_dims: (usize, usize)) -> Result<ImageGrid> {
    check_dims(target_dims.0, target_dims.1)?;
    let values = prolongate_values(&img.values, img.dims(), target_dims);
    Ok(ImageGrid::from_parts(target_dims.0, target_dims.1, values))
}

/// Coarse-to-fine stack of restrictions of one image.
#[derive(Clone, Debug)]
pub struct GridPyramid {
    levels: Vec<ImageGrid>,
}

impl GridPyramid {
    /// Builds `depth` levels; the finest one is a copy of `img`.
    pub fn build(img: &ImageGrid, depth: usize) -> Result<Self> {
        if depth == 0 {
            return Err(Error::InvalidArgument("pyramid depth must be at least 1".into()));
        }
        let mut levels = vec![img.clone()];
        for _ in 1..depth {
            let next = restrict(levels.last().unwrap())?;
            levels.push(next);
        }
        levels.reverse();
        Ok(Self { levels })
    }

    /// Levels ordered coarsest first.
    pub fn levels(&self) -> &[ImageGrid] {
        &self.levels
    }

    pub fn finest(&self) -> &ImageGrid {
        self.levels.last().unwrap()
    }

    pub fn coarsest(&self) -> &ImageGrid {
        &self.levels[0]
    }

    pub fn depth(&self) -> usize {
        self.levels.len()
    }
}

/// Largest pyramid depth whose coarsest level keeps at least one interior node.
pub fn max_pyramid_depth(width: usize, height: usize) -> usize {
    let (mut w, mut h, mut depth) = (width, height, 1);
    while w >= 3 && h >= 3 && coarse_len(w) >= 3 && coarse_len(h) >= 3 {
        w = coarse_len(w);
        h = coarse_len(h);
        depth += 1;
    }
    depth
}
