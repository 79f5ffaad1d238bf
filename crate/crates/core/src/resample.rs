//! B-spline kernels, cubic-spline interpolation and inverse-mapped warping.
//!
//! Cubic interpolation is interpolating, not smoothing: the image is first
//! converted to B-spline coefficients by a causal/anticausal recursive filter
//! (pole `√3 − 2`) with mirror boundaries, after which
//! `f(x, y) = Σ c[k, l] β³(x − k) β³(y − l)` passes through every sample.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::TransformMatrix;
use crate::raster::Raster;

/// Smallest dimension accepted by [`prefilter`].
pub const MIN_SPLINE_SIZE: usize = 4;

/// Coordinates within this distance outside the grid are clamped onto it
/// instead of being reported out of bounds, so exact rotations that land on
/// the last row or column up to rounding still sample.
pub const EDGE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InterpolationKind {
    NearestNeighbor,
    Linear,
    #[default]
    CubicSpline,
}

/// Zero-order B-spline (box) on the half-open support `[-0.5, 0.5)`.
#[inline]
pub fn beta0(x: f64) -> f64 {
    if (-0.5..0.5).contains(&x) {
        1.0
    } else {
        0.0
    }
}

/// Centered cubic B-spline.
#[inline]
pub fn beta3(x: f64) -> f64 {
    let a = x.abs();
    if a < 1.0 {
        2.0 / 3.0 - a * a + a * a * a / 2.0
    } else if a < 2.0 {
        let b = 2.0 - a;
        b * b * b / 6.0
    } else {
        0.0
    }
}

/// Weights `β³(t + 1), β³(t), β³(t − 1), β³(t − 2)` for `t ∈ [0, 1)`.
#[inline]
pub(crate) fn beta3_taps(t: f64) -> [f64; 4] {
    let s = 1.0 - t;
    let t2 = t * t;
    let t3 = t2 * t;
    [
        s * s * s / 6.0,
        2.0 / 3.0 - t2 + t3 / 2.0,
        2.0 / 3.0 - s * s + s * s * s / 2.0,
        t3 / 6.0,
    ]
}

/// Cubic B-spline coefficients of an image, kept together with the samples
/// they were computed from.
#[derive(Debug, Clone)]
pub struct SplineCoefficients {
    coeffs: Vec<f64>,
    source: Raster,
}

impl SplineCoefficients {
    pub fn width(&self) -> usize {
        self.source.width()
    }

    pub fn height(&self) -> usize {
        self.source.height()
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn source(&self) -> &Raster {
        &self.source
    }

    /// Samples the image at `(x, y)`; `None` when the point lies outside
    /// `[0, width − 1] × [0, height − 1]`.
    #[inline]
    pub fn interpolate(&self, x: f64, y: f64, kind: InterpolationKind) -> Option<f64> {
        match kind {
            InterpolationKind::CubicSpline => self.cubic(x, y),
            InterpolationKind::Linear => sample_linear(&self.source, x, y),
            InterpolationKind::NearestNeighbor => sample_nearest(&self.source, x, y),
        }
    }

    #[inline]
    fn cubic(&self, x: f64, y: f64) -> Option<f64> {
        let (w, h) = (self.width(), self.height());
        let x = clamp_to_grid(x, w)?;
        let y = clamp_to_grid(y, h)?;
        let (ix, iy) = (x.floor(), y.floor());
        let wx = beta3_taps(x - ix);
        let wy = beta3_taps(y - iy);
        let (ix, iy) = (ix as isize, iy as isize);
        let mut cols = [0usize; 4];
        for (i, c) in cols.iter_mut().enumerate() {
            *c = mirror(ix - 1 + i as isize, w);
        }
        let mut acc = 0.0;
        for (j, wyj) in wy.iter().enumerate() {
            let row = mirror(iy - 1 + j as isize, h) * w;
            let c = &self.coeffs[row..row + w];
            acc += wyj
                * (wx[0] * c[cols[0]] + wx[1] * c[cols[1]] + wx[2] * c[cols[2]] + wx[3] * c[cols[3]]);
        }
        Some(acc)
    }
}

/// Free-function form of [`SplineCoefficients::interpolate`].
pub fn interpolate(
    coeffs: &SplineCoefficients,
    x: f64,
    y: f64,
    kind: InterpolationKind,
) -> Option<f64> {
    coeffs.interpolate(x, y, kind)
}

/// Computes interpolating cubic B-spline coefficients.
///
/// Fails with [`Error::TooSmall`] when either dimension is below
/// [`MIN_SPLINE_SIZE`].
pub fn prefilter(raster: &Raster) -> Result<SplineCoefficients> {
    if raster.width() < MIN_SPLINE_SIZE || raster.height() < MIN_SPLINE_SIZE {
        return Err(Error::TooSmall {
            width: raster.width(),
            height: raster.height(),
            min: MIN_SPLINE_SIZE,
        });
    }
    Ok(prefilter_any(raster))
}

/// Prefilter without the size guard; the mirror recursion is well defined
/// for any length ≥ 1.
pub(crate) fn prefilter_any(raster: &Raster) -> SplineCoefficients {
    let (w, h) = (raster.width(), raster.height());
    let mut coeffs = raster.data().to_vec();
    coeffs.par_chunks_mut(w).for_each(filter_line);
    let mut column = vec![0.0; h];
    for x in 0..w {
        for (y, c) in column.iter_mut().enumerate() {
            *c = coeffs[y * w + x];
        }
        filter_line(&mut column);
        for (y, c) in column.iter().enumerate() {
            coeffs[y * w + x] = *c;
        }
    }
    SplineCoefficients {
        coeffs,
        source: raster.clone(),
    }
}

/// In-place cubic B-spline prefilter of one line with mirror boundaries.
fn filter_line(line: &mut [f64]) {
    let n = line.len();
    if n < 2 {
        return;
    }
    let z = 3f64.sqrt() - 2.0;
    let gain = (1.0 - z) * (1.0 - 1.0 / z);
    for v in line.iter_mut() {
        *v *= gain;
    }

    // exact causal initialization over one mirror period of length 2n − 2
    let period = 2 * n - 2;
    let mut sum = line[0] + z.powi(n as i32 - 1) * line[n - 1];
    let mut zk = z;
    for (k, &c) in line.iter().enumerate().take(n - 1).skip(1) {
        sum += (zk + z.powi((period - k) as i32)) * c;
        zk *= z;
    }
    line[0] = sum / (1.0 - z.powi(period as i32));
    for k in 1..n {
        line[k] += z * line[k - 1];
    }

    line[n - 1] = (z / (z * z - 1.0)) * (line[n - 1] + z * line[n - 2]);
    for k in (0..n - 1).rev() {
        line[k] = z * (line[k + 1] - line[k]);
    }
}

/// Whole-sample mirror reflection of an index into `[0, n)`.
#[inline]
fn mirror(k: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * n as isize - 2;
    let k = k.rem_euclid(period);
    if k >= n as isize {
        (period - k) as usize
    } else {
        k as usize
    }
}

#[inline]
fn clamp_to_grid(v: f64, n: usize) -> Option<f64> {
    let hi = (n - 1) as f64;
    if v >= 0.0 && v <= hi {
        Some(v)
    } else if v >= -EDGE_TOLERANCE && v <= hi + EDGE_TOLERANCE {
        Some(v.clamp(0.0, hi))
    } else {
        None
    }
}

pub fn sample_nearest(r: &Raster, x: f64, y: f64) -> Option<f64> {
    let x = clamp_to_grid(x, r.width())?;
    let y = clamp_to_grid(y, r.height())?;
    let ix = ((x + 0.5).floor() as usize).min(r.width() - 1);
    let iy = ((y + 0.5).floor() as usize).min(r.height() - 1);
    Some(r.get(ix, iy))
}

pub fn sample_linear(r: &Raster, x: f64, y: f64) -> Option<f64> {
    let x = clamp_to_grid(x, r.width())?;
    let y = clamp_to_grid(y, r.height())?;
    let (x0, y0) = (x.floor() as usize, y.floor() as usize);
    let x1 = (x0 + 1).min(r.width() - 1);
    let y1 = (y0 + 1).min(r.height() - 1);
    let (fx, fy) = (x - x0 as f64, y - y0 as f64);
    let top = r.get(x0, y0) * (1.0 - fx) + r.get(x1, y0) * fx;
    let bottom = r.get(x0, y1) * (1.0 - fx) + r.get(x1, y1) * fx;
    Some(top * (1.0 - fy) + bottom * fy)
}

/// Result of [`warp`]: the resampled image and which pixels were sampled
/// inside the source.
#[derive(Debug, Clone)]
pub struct Warped {
    pub image: Raster,
    pub mask: Vec<bool>,
}

impl Warped {
    pub fn valid_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

/// Resamples `source` onto an `out_w × out_h` grid: output pixel `p` takes
/// the source value at `m.apply(p)`. Pixels mapped outside the source are 0
/// and marked invalid.
pub fn warp(
    source: &Raster,
    m: &TransformMatrix,
    out_w: usize,
    out_h: usize,
    kind: InterpolationKind,
) -> Warped {
    let spline = match kind {
        InterpolationKind::CubicSpline => Some(prefilter_any(source)),
        _ => None,
    };
    let sample = |x: f64, y: f64| match &spline {
        Some(s) => s.cubic(x, y),
        None if kind == InterpolationKind::Linear => sample_linear(source, x, y),
        None => sample_nearest(source, x, y),
    };
    let mut data = vec![0.0; out_w * out_h];
    let mut mask = vec![false; out_w * out_h];
    data.par_chunks_mut(out_w)
        .zip(mask.par_chunks_mut(out_w))
        .enumerate()
        .for_each(|(y, (row, mrow))| {
            for x in 0..out_w {
                let (u, v) = m.apply(x as f64, y as f64);
                if let Some(val) = sample(u, v) {
                    row[x] = val;
                    mrow[x] = true;
                }
            }
        });
    Warped {
        image: Raster::new(out_w, out_h, data).expect("warp output is finite"),
        mask,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::TransformParams;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::FRAC_PI_2;

    fn random_image(w: usize, h: usize, seed: u64) -> Raster {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Raster::from_fn(w, h, |_, _| rng.random_range(0.0..255.0))
    }

    #[test]
    fn beta0_boundaries() {
        assert_eq!(beta0(0.0), 1.0);
        assert_eq!(beta0(0.5), 0.0);
        assert_eq!(beta0(-0.5), 1.0);
        assert_eq!(beta0(0.49999), 1.0);
        assert_eq!(beta0(-0.50001), 0.0);
    }

    #[test]
    fn beta3_values() {
        assert!((beta3(0.0) - 2.0 / 3.0).abs() < 1e-15);
        assert!((beta3(1.0) - 1.0 / 6.0).abs() < 1e-15);
        assert!((beta3(-1.0) - 1.0 / 6.0).abs() < 1e-15);
        assert_eq!(beta3(2.0), 0.0);
        assert_eq!(beta3(-2.5), 0.0);
    }

    #[test]
    fn taps_match_kernel() {
        for t in [0.0, 0.1, 0.5, 0.93, 0.999_999] {
            let taps = beta3_taps(t);
            let direct = [beta3(t + 1.0), beta3(t), beta3(t - 1.0), beta3(t - 2.0)];
            for (a, b) in taps.iter().zip(direct) {
                assert!((a - b).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn partition_of_unity_and_symmetry() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let x: f64 = rng.random_range(-50.0..50.0);
            let sum: f64 = (-60..=60).map(|k| beta3(x - k as f64)).sum();
            assert!((sum - 1.0).abs() < 1e-12);
            assert_eq!(beta3(x), beta3(-x));
            assert!(beta3(x) >= 0.0);
        }
    }

    #[test]
    fn beta3_integrates_to_one() {
        // composite Simpson on [-2, 2]
        let n = 4000;
        let h = 4.0 / n as f64;
        let mut s = beta3(-2.0) + beta3(2.0);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * beta3(-2.0 + i as f64 * h);
        }
        assert!((s * h / 3.0 - 1.0).abs() < 1e-6);
    }

    #[test]
    fn prefilter_rejects_small_images() {
        let r = Raster::constant(3, 10, 1.0);
        assert!(matches!(prefilter(&r), Err(Error::TooSmall { .. })));
    }

    #[test]
    fn constants_are_reproduced() {
        let c = prefilter(&Raster::constant(7, 5, 42.5)).unwrap();
        assert!(c.coeffs().iter().all(|v| (v - 42.5).abs() < 1e-12));
    }

    #[test]
    fn interpolation_condition() {
        let r = random_image(8, 8, 11);
        let c = prefilter(&r).unwrap();
        for y in 0..8 {
            for x in 0..8 {
                let v = c.interpolate(x as f64, y as f64, InterpolationKind::CubicSpline).unwrap();
                assert!((v - r.get(x, y)).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn ramp_is_reproduced_between_samples() {
        let r = Raster::from_fn(64, 16, |x, _| x as f64);
        let c = prefilter(&r).unwrap();
        for x in 16..47 {
            for y in [3.0, 7.25, 12.0] {
                let v = c.interpolate(x as f64 + 0.5, y, InterpolationKind::CubicSpline).unwrap();
                assert!((v - (x as f64 + 0.5)).abs() < 1e-9, "x={x}: {v}");
            }
        }
    }

    #[test]
    fn out_of_bounds_is_reported() {
        let c = prefilter(&random_image(6, 6, 1)).unwrap();
        for kind in [InterpolationKind::CubicSpline, InterpolationKind::Linear, InterpolationKind::NearestNeighbor] {
            assert_eq!(c.interpolate(-0.1, 0.0, kind), None);
            assert_eq!(c.interpolate(0.0, 5.2, kind), None);
            assert!(c.interpolate(5.0, 5.0, kind).is_some());
        }
    }

    #[test]
    fn linear_midpoint_is_average() {
        let r = Raster::new(4, 4, (0..16).map(|v| (v * v) as f64).collect()).unwrap();
        let c = prefilter(&r).unwrap();
        let v = c.interpolate(1.5, 2.0, InterpolationKind::Linear).unwrap();
        assert_eq!(v, (r.get(1, 2) + r.get(2, 2)) / 2.0);
        assert_eq!(c.interpolate(1.4, 2.6, InterpolationKind::NearestNeighbor), Some(r.get(1, 3)));
    }

    #[test]
    fn identity_warp_is_identity() {
        let r = random_image(9, 7, 5);
        for kind in [InterpolationKind::CubicSpline, InterpolationKind::Linear, InterpolationKind::NearestNeighbor] {
            let out = warp(&r, &TransformMatrix::IDENTITY, 9, 7, kind);
            assert!(out.mask.iter().all(|&m| m));
            for (a, b) in out.image.data().iter().zip(r.data()) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn translation_shifts_a_ramp() {
        let (w, h) = (48, 8);
        let r = Raster::from_fn(w, h, |x, _| x as f64);
        let m = TransformMatrix::translation(1.0, 0.0);
        for kind in [InterpolationKind::CubicSpline, InterpolationKind::Linear] {
            let out = warp(&r, &m, w, h, kind);
            for y in 0..h {
                assert!(!out.mask[y * w + w - 1]);
                assert_eq!(out.image.get(w - 1, y), 0.0);
                for x in 0..w - 1 {
                    assert!(out.mask[y * w + x]);
                }
                // the shift lands on grid points, so the sample is exact everywhere
                for x in 0..w - 1 {
                    assert!((out.image.get(x, y) - (x as f64 + 1.0)).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn quarter_turn_permutes_pixels() {
        let src = Raster::new(3, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 19.0]).unwrap();
        let m = TransformParams::similarity(FRAC_PI_2, 1.0, 0.0, 0.0)
            .with_center(1.0, 1.0)
            .to_matrix()
            .unwrap();
        // brute force: rotating (x, y) about (1, 1) by a quarter turn in the
        // row-vector convention lands on (2 − y, x)
        for kind in [InterpolationKind::CubicSpline, InterpolationKind::Linear, InterpolationKind::NearestNeighbor] {
            let out = warp(&src, &m, 3, 3, kind);
            assert!(out.mask.iter().all(|&v| v));
            for y in 0..3 {
                for x in 0..3 {
                    let expect = src.get(2 - y, x);
                    assert!((out.image.get(x, y) - expect).abs() < 1e-9, "{kind:?} ({x},{y})");
                }
            }
        }
    }

    #[test]
    fn warp_is_independent_of_thread_count() {
        let r = random_image(40, 30, 9);
        let m = TransformParams::similarity(0.1, 1.05, 2.3, -1.7).with_center(20.0, 15.0).to_matrix().unwrap();
        let a = warp(&r, &m, 40, 30, InterpolationKind::CubicSpline);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| warp(&r, &m, 40, 30, InterpolationKind::CubicSpline));
        assert_eq!(a.image, b.image);
        assert_eq!(a.mask, b.mask);
    }
}
