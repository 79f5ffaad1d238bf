//! Verification artifacts: overlays, FAST corners with cross-modal patch
//! pairs, and synthetic ground-truth pairs.

use std::path::Path;

use image::RgbImage;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::geometry::{TransformMatrix, TransformParams};
use crate::pipeline::image_center;
use crate::raster::{encode_png, quantize, write_file, Raster};
use crate::resample::{prefilter_any, warp, InterpolationKind};

/// Side length of the square patches cut around corners.
pub const PATCH_SIZE: usize = 32;
/// Smallest source accepted by [`synth_pair`].
pub const MIN_SYNTH_SIZE: usize = 64;

/// Bresenham circle of radius 3, clockwise from 12 o'clock.
const CIRCLE: [(isize, isize); 16] = [
    (0, -3),
    (1, -3),
    (2, -2),
    (3, -1),
    (3, 0),
    (3, 1),
    (2, 2),
    (1, 3),
    (0, 3),
    (-1, 3),
    (-2, 2),
    (-3, 1),
    (-3, 0),
    (-3, -1),
    (-2, -2),
    (-1, -3),
];

fn same_size(a: &Raster, b: &Raster) -> Result<()> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(Error::SizeMismatch(a.width(), a.height(), b.width(), b.height()));
    }
    Ok(())
}

/// Linearly maps the image's own range onto `[0, 255]`; constant images map
/// to 0.
pub fn rescale_to_display(r: &Raster) -> Raster {
    let (lo, hi) = r.min_max();
    if hi > lo {
        let k = 255.0 / (hi - lo);
        r.map(|v| (v - lo) * k)
    } else {
        r.map(|_| 0.0)
    }
}

/// Red channel from the visual frame, green and blue from the aligned
/// thermal frame. Agreement shows as gray.
pub fn overlay_redcyan(fixed: &Raster, aligned: &Raster) -> Result<RgbImage> {
    same_size(fixed, aligned)?;
    let (f, m) = (rescale_to_display(fixed), rescale_to_display(aligned));
    let mut img = RgbImage::new(fixed.width() as u32, fixed.height() as u32);
    for (px, (&a, &b)) in img.pixels_mut().zip(f.data().iter().zip(m.data())) {
        let (r, c) = (quantize(a), quantize(b));
        *px = image::Rgb([r, c, c]);
    }
    Ok(img)
}

/// Writes an RGB overlay as PNG.
pub fn save_rgb(img: &RgbImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_png(img.as_raw(), img.width() as usize, img.height() as usize, image::ExtendedColorType::Rgb8)
        .map_err(|e| Error::io(path, std::io::Error::other(e)))?;
    write_file(path, &bytes)
}

/// Absolute difference of the two range-normalized frames.
pub fn overlay_difference(fixed: &Raster, aligned: &Raster) -> Result<Raster> {
    same_size(fixed, aligned)?;
    let (f, m) = (rescale_to_display(fixed), rescale_to_display(aligned));
    let data = f.data().iter().zip(m.data()).map(|(a, b)| (a - b).abs()).collect();
    Raster::new(fixed.width(), fixed.height(), data)
}

/// Alternating `tile × tile` squares, the top-left one taken from `fixed`.
pub fn overlay_checkerboard(fixed: &Raster, aligned: &Raster, tile: usize) -> Result<Raster> {
    same_size(fixed, aligned)?;
    if tile < 4 {
        return Err(Error::InvalidConfig(format!("tile size {tile} is below 4")));
    }
    Ok(Raster::from_fn(fixed.width(), fixed.height(), |x, y| {
        if (x / tile + y / tile).is_multiple_of(2) {
            fixed.get(x, y)
        } else {
            aligned.get(x, y)
        }
    }))
}

/// A FAST detection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Corner {
    pub x: usize,
    pub y: usize,
    /// Supremum of the thresholds at which the segment test passes.
    pub score: f64,
}

fn circle_diffs(r: &Raster, x: usize, y: usize) -> [f64; 16] {
    let c = r.get(x, y);
    let mut diff = [0.0; 16];
    for (d, (dx, dy)) in diff.iter_mut().zip(CIRCLE) {
        *d = r.get((x as isize + dx) as usize, (y as isize + dy) as usize) - c;
    }
    diff
}

/// Largest threshold the segment test would accept: the best, over all arcs
/// of `n` contiguous circle pixels, of the smallest signed difference along
/// the arc.
fn segment_score(diff: &[f64; 16], n: usize) -> f64 {
    let mut best = f64::NEG_INFINITY;
    for start in 0..16 {
        let (mut bright, mut dark) = (f64::INFINITY, f64::INFINITY);
        for j in 0..n {
            let d = diff[(start + j) % 16];
            bright = bright.min(d);
            dark = dark.min(-d);
        }
        best = best.max(bright).max(dark);
    }
    best
}

/// FAST-`n` segment test on the radius-3 circle followed by 3×3 non-maximum
/// suppression.
///
/// Equal scores, common on hard edges where the score saturates, are
/// resolved by the summed absolute circle difference above the threshold,
/// then by raster order.
pub fn fast_detect(r: &Raster, threshold: f64, n: usize) -> Vec<Corner> {
    assert!((1..=16).contains(&n), "arc length must be in 1..=16");
    let (w, h) = (r.width(), r.height());
    if w < 7 || h < 7 {
        return Vec::new();
    }
    let mut scores = vec![None; w * h];
    for y in 3..h - 3 {
        for x in 3..w - 3 {
            let diff = circle_diffs(r, x, y);
            let s = segment_score(&diff, n);
            if s > threshold {
                let strength: f64 = diff.iter().map(|d| d.abs()).filter(|&d| d > threshold).sum();
                scores[y * w + x] = Some((s, strength));
            }
        }
    }
    let mut corners = Vec::new();
    for y in 3..h - 3 {
        for x in 3..w - 3 {
            let idx = y * w + x;
            let Some(key) = scores[idx] else { continue };
            let dominated = (y - 1..=y + 1).any(|ny| {
                (x - 1..=x + 1).any(|nx| {
                    let nidx = ny * w + nx;
                    nidx != idx
                        && scores[nidx].is_some_and(|nk| nk > key || (nk == key && nidx < idx))
                })
            });
            if !dominated {
                corners.push(Corner { x, y, score: key.0 });
            }
        }
    }
    corners
}

/// Co-located 32×32 patches from the two modalities.
#[derive(Debug, Clone)]
pub struct PatchPair {
    pub visual_patch: Raster,
    pub thermal_patch: Raster,
    pub visual_center: (usize, usize),
    /// `m.apply(visual_center)`, generally off-grid.
    pub thermal_center: (f64, f64),
}

/// Cuts patch pairs around `k` randomly chosen corners.
///
/// Corners whose window would leave either image are skipped and replaced
/// by the next candidate. The thermal patch is spline-resampled at the exact
/// mapped center.
pub fn extract_patch_pairs(
    visual: &Raster,
    thermal: &Raster,
    m: &TransformMatrix,
    corners: &[Corner],
    k: usize,
    seed: u64,
) -> Result<Vec<PatchPair>> {
    if k == 0 {
        return Err(Error::InvalidConfig("patch count must be at least 1".into()));
    }
    let half = (PATCH_SIZE / 2) as f64;
    let fits = |cx: f64, cy: f64, w: usize, h: usize| {
        cx - half >= 0.0
            && cy - half >= 0.0
            && cx + half - 1.0 <= (w - 1) as f64
            && cy + half - 1.0 <= (h - 1) as f64
    };
    let spline = prefilter_any(thermal);

    let mut order: Vec<usize> = (0..corners.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let mut pairs = Vec::with_capacity(k);
    for i in order {
        if pairs.len() == k {
            break;
        }
        let c = corners[i];
        let (vx, vy) = (c.x as f64, c.y as f64);
        let (tx, ty) = m.apply(vx, vy);
        if !fits(vx, vy, visual.width(), visual.height())
            || !fits(tx, ty, thermal.width(), thermal.height())
        {
            continue;
        }
        let (x0, y0) = (c.x - PATCH_SIZE / 2, c.y - PATCH_SIZE / 2);
        let visual_patch = Raster::from_fn(PATCH_SIZE, PATCH_SIZE, |i, j| visual.get(x0 + i, y0 + j));
        let thermal_patch = Raster::from_fn(PATCH_SIZE, PATCH_SIZE, |i, j| {
            let (sx, sy) = (tx - half + i as f64, ty - half + j as f64);
            spline
                .interpolate(sx, sy, InterpolationKind::CubicSpline)
                .expect("window checked in bounds")
        });
        pairs.push(PatchPair {
            visual_patch,
            thermal_patch,
            visual_center: (c.x, c.y),
            thermal_center: (tx, ty),
        });
    }
    if pairs.len() < k {
        return Err(Error::NotEnoughCorners {
            found: pairs.len(),
            wanted: k,
        });
    }
    Ok(pairs)
}

/// Degradations applied to build a pseudo-thermal frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthOptions {
    /// Exponent of the monotone remap `v ↦ 255 (v / 255)^gamma`.
    pub gamma: f64,
    pub noise_sigma: f64,
    pub blur_sigma: f64,
    pub seed: u64,
}

impl Default for SynthOptions {
    fn default() -> Self {
        Self {
            gamma: 1.0,
            noise_sigma: 0.0,
            blur_sigma: 0.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthPair {
    pub visual: Raster,
    pub thermal: Raster,
    /// The transform registration should recover, centered on the visual
    /// frame: `thermal(truth(x)) ≈ remap(visual(x))`.
    pub truth: TransformParams,
    /// Thermal pixels that came from inside the source.
    pub mask: Vec<bool>,
}

/// Builds a visual/pseudo-thermal pair with known alignment.
///
/// The thermal frame is the source resampled so that `true_params` (about
/// the image center) maps visual pixels onto it, then gamma-remapped,
/// blurred and given additive Gaussian noise, in that order.
pub fn synth_pair(source: &Raster, true_params: &TransformParams, opts: &SynthOptions) -> Result<SynthPair> {
    if source.width() < MIN_SYNTH_SIZE || source.height() < MIN_SYNTH_SIZE {
        return Err(Error::TooSmall {
            width: source.width(),
            height: source.height(),
            min: MIN_SYNTH_SIZE,
        });
    }
    if !(opts.gamma > 0.0 && opts.gamma.is_finite()) {
        return Err(Error::InvalidConfig(format!("gamma {} must be positive", opts.gamma)));
    }
    if !(opts.noise_sigma >= 0.0 && opts.blur_sigma >= 0.0) {
        return Err(Error::InvalidConfig("noise and blur must be nonnegative".into()));
    }
    let [cx, cy] = image_center(source);
    let truth = true_params.clone().with_center(cx, cy);
    let inverse = truth.to_matrix()?.invert()?;
    let warped = warp(source, &inverse, source.width(), source.height(), InterpolationKind::CubicSpline);

    let gamma = opts.gamma;
    let mut thermal = if gamma == 1.0 {
        warped.image
    } else {
        warped.image.map(|v| 255.0 * (v.max(0.0) / 255.0).powf(gamma))
    };
    if opts.blur_sigma > 0.0 {
        thermal = gaussian_blur(&thermal, opts.blur_sigma);
    }
    if opts.noise_sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let data = thermal
            .data()
            .iter()
            .map(|v| {
                let z: f64 = StandardNormal.sample(&mut rng);
                v + opts.noise_sigma * z
            })
            .collect();
        thermal = Raster::new(thermal.width(), thermal.height(), data)?;
    }
    Ok(SynthPair {
        visual: source.clone(),
        thermal,
        truth,
        mask: warped.mask,
    })
}

/// Separable Gaussian blur with mirrored borders and a `⌈3σ⌉` radius.
pub fn gaussian_blur(r: &Raster, sigma: f64) -> Raster {
    if sigma <= 0.0 {
        return r.clone();
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let kernel: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let norm: f64 = kernel.iter().sum();
    let kernel: Vec<f64> = kernel.into_iter().map(|k| k / norm).collect();
    let reflect = |i: isize, n: usize| -> usize {
        let n = n as isize;
        if n == 1 {
            return 0;
        }
        let period = 2 * n - 2;
        let i = i.rem_euclid(period);
        (if i >= n { period - i } else { i }) as usize
    };
    let (w, h) = (r.width(), r.height());
    let horiz = Raster::from_fn(w, h, |x, y| {
        kernel
            .iter()
            .enumerate()
            .map(|(k, wt)| wt * r.get(reflect(x as isize + k as isize - radius, w), y))
            .sum()
    });
    Raster::from_fn(w, h, |x, y| {
        kernel
            .iter()
            .enumerate()
            .map(|(k, wt)| wt * horiz.get(x, reflect(y as isize + k as isize - radius, h)))
            .sum()
    })
}

/// A seeded, structured test scene in `[0, 255]`: a smooth background with
/// soft-edged ellipses, rectangles and a low-frequency texture.
pub fn synthetic_scene(width: usize, height: usize, seed: u64) -> Raster {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (width as f64, height as f64);
    let size = w.min(h);

    let gx: f64 = rng.random_range(-1.0..1.0);
    let gy: f64 = rng.random_range(-1.0..1.0);
    let base: f64 = rng.random_range(70.0..130.0);

    struct Shape {
        cx: f64,
        cy: f64,
        rx: f64,
        ry: f64,
        cos: f64,
        sin: f64,
        delta: f64,
        rect: bool,
    }
    let count = 10 + (size / 24.0) as usize;
    let shapes: Vec<Shape> = (0..count)
        .map(|_| {
            let angle: f64 = rng.random_range(0.0..std::f64::consts::PI);
            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            Shape {
                cx: rng.random_range(0.0..w),
                cy: rng.random_range(0.0..h),
                rx: rng.random_range(size * 0.04..size * 0.22),
                ry: rng.random_range(size * 0.04..size * 0.22),
                cos: angle.cos(),
                sin: angle.sin(),
                delta: sign * rng.random_range(30.0..90.0),
                rect: rng.random_bool(0.4),
            }
        })
        .collect();
    let fx: f64 = rng.random_range(1.5..4.0) / size;
    let fy: f64 = rng.random_range(1.5..4.0) / size;
    let phase: f64 = rng.random_range(0.0..std::f64::consts::TAU);

    // 1.5 px transition band
    let soft = |d: f64| 0.5 - 0.5 * (d / 1.5).clamp(-1.0, 1.0);
    Raster::from_fn(width, height, |x, y| {
        let (px, py) = (x as f64, y as f64);
        let mut v = base + 40.0 * (gx * (px / w - 0.5) + gy * (py / h - 0.5));
        v += 12.0 * (std::f64::consts::TAU * (fx * px + fy * py) + phase).sin();
        for s in &shapes {
            let (dx, dy) = (px - s.cx, py - s.cy);
            let u = dx * s.cos + dy * s.sin;
            let t = -dx * s.sin + dy * s.cos;
            // signed distance in pixels, approximate for ellipses
            let d = if s.rect {
                (u.abs() - s.rx).max(t.abs() - s.ry)
            } else {
                let k = ((u / s.rx).powi(2) + (t / s.ry).powi(2)).sqrt();
                (k - 1.0) * s.rx.min(s.ry)
            };
            v += s.delta * soft(d);
        }
        v.clamp(0.0, 255.0)
    })
}
