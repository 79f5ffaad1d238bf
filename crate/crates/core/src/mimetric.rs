//! Mattes mutual information between a fixed (visual) and a moving (thermal)
//! image.
//!
//! For every selected fixed pixel `x` with an in-bounds mapped position the
//! joint histogram receives the product weight
//!
//! ```text
//! β⁰(κ − u) · β³(ι − v),   u = (f_V(x) − min_V) / Δb_V,   v = (f_T(g(x)) − min_T) / Δb_T
//! ```
//!
//! so the visual axis is hard-binned and the thermal axis is smoothed by the
//! cubic B-spline Parzen window. `u` is clamped to `[0, B − 1]` and `v` to
//! `[1, B − 2]`, which keeps every nonzero cubic tap inside the `B` bins. The
//! table is normalized by the total deposited weight, both marginals are
//! taken from it, and the cost is the negative mutual information in nats.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{TransformMatrix, TransformParams};
use crate::raster::{IntensityStats, Raster};
use crate::resample::{beta3_taps, prefilter, SplineCoefficients};

/// Samples handled per parallel work unit. Fixed so the reduction order does
/// not depend on the thread count.
const CHUNK: usize = 4096;

#[derive(Debug, Clone, PartialEq)]
pub struct MetricConfig {
    pub bin_count: usize,
    /// Fraction of fixed-image pixels used, in `(0, 1]`.
    pub sampling_fraction: f64,
    pub sample_seed: u64,
    /// Minimum share of selected samples that must map inside the moving
    /// image, in `(0, 1]`.
    pub min_valid_fraction: f64,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self {
            bin_count: 50,
            sampling_fraction: 1.0,
            sample_seed: 0,
            min_valid_fraction: 0.25,
        }
    }
}

impl MetricConfig {
    pub fn validate(&self) -> Result<()> {
        if self.bin_count < 8 {
            return Err(Error::InvalidConfig(format!(
                "metric needs at least 8 bins, got {}",
                self.bin_count
            )));
        }
        let in_unit = |v: f64| v > 0.0 && v <= 1.0;
        if !in_unit(self.sampling_fraction) {
            return Err(Error::InvalidConfig(format!(
                "sampling fraction {} outside (0, 1]",
                self.sampling_fraction
            )));
        }
        if !in_unit(self.min_valid_fraction) {
            return Err(Error::InvalidConfig(format!(
                "minimum valid fraction {} outside (0, 1]",
                self.min_valid_fraction
            )));
        }
        Ok(())
    }
}

/// Parzen-smoothed joint distribution `p(ι, κ)` with its marginals.
#[derive(Debug, Clone, PartialEq)]
pub struct JointHistogram {
    bin_count: usize,
    /// Row-major, `joint[ι * bin_count + κ]`; rows are thermal bins.
    joint: Vec<f64>,
    marginal_t: Vec<f64>,
    marginal_v: Vec<f64>,
    pub contributing_samples: usize,
    pub selected_samples: usize,
}

impl JointHistogram {
    /// Normalizes raw (nonnegative) weights into a joint distribution.
    ///
    /// Returns `None` if the weights are all zero or any is negative.
    pub fn from_weights(bin_count: usize, weights: Vec<f64>) -> Option<Self> {
        assert_eq!(weights.len(), bin_count * bin_count);
        if weights.iter().any(|&w| w < 0.0 || !w.is_finite()) {
            return None;
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return None;
        }
        let joint: Vec<f64> = weights.into_iter().map(|w| w / total).collect();
        Some(Self::from_normalized(bin_count, joint, 0, 0))
    }

    fn from_normalized(
        bin_count: usize,
        joint: Vec<f64>,
        contributing_samples: usize,
        selected_samples: usize,
    ) -> Self {
        let marginal_t = joint.chunks_exact(bin_count).map(|r| r.iter().sum()).collect();
        let mut marginal_v = vec![0.0; bin_count];
        for row in joint.chunks_exact(bin_count) {
            for (m, p) in marginal_v.iter_mut().zip(row) {
                *m += p;
            }
        }
        Self {
            bin_count,
            joint,
            marginal_t,
            marginal_v,
            contributing_samples,
            selected_samples,
        }
    }

    pub fn bin_count(&self) -> usize {
        self.bin_count
    }

    /// `p(ι, κ)` with `ι` the thermal and `κ` the visual bin.
    #[inline]
    pub fn p(&self, thermal_bin: usize, visual_bin: usize) -> f64 {
        self.joint[thermal_bin * self.bin_count + visual_bin]
    }

    pub fn joint(&self) -> &[f64] {
        &self.joint
    }

    /// Thermal marginal, the row sums of the joint.
    pub fn marginal_t(&self) -> &[f64] {
        &self.marginal_t
    }

    /// Visual marginal, the column sums of the joint.
    pub fn marginal_v(&self) -> &[f64] {
        &self.marginal_v
    }

    pub fn mutual_information(&self) -> f64 {
        -mi_cost(self)
    }
}

/// Thermal marginal of `j`.
pub fn marginal_t(j: &JointHistogram) -> Vec<f64> {
    j.marginal_t.clone()
}

/// Visual marginal of `j`.
pub fn marginal_v(j: &JointHistogram) -> Vec<f64> {
    j.marginal_v.clone()
}

/// Negative mutual information `−Σ p ln(p / (p_T p_V))`. Lower is better.
pub fn mi_cost(j: &JointHistogram) -> f64 {
    let b = j.bin_count;
    let mut mi = 0.0;
    for (i, row) in j.joint.chunks_exact(b).enumerate() {
        let pt = j.marginal_t[i];
        for (k, &p) in row.iter().enumerate() {
            let denom = pt * j.marginal_v[k];
            if p > 0.0 && denom > 0.0 {
                mi += p * (p / denom).ln();
            }
        }
    }
    -mi
}

/// Shannon entropy in nats, with `0 ln 0 = 0`.
pub fn entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|&&v| v > 0.0).map(|&v| v * v.ln()).sum::<f64>()
}

/// Pixel indices selected from the fixed image. `None` means every pixel.
fn select_samples(pixel_count: usize, cfg: &MetricConfig) -> Option<Vec<u32>> {
    if cfg.sampling_fraction >= 1.0 {
        return None;
    }
    let n = ((pixel_count as f64 * cfg.sampling_fraction).round() as usize).clamp(1, pixel_count);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.sample_seed);
    let mut idx: Vec<u32> = rand::seq::index::sample(&mut rng, pixel_count, n)
        .into_iter()
        .map(|i| i as u32)
        .collect();
    idx.sort_unstable();
    Some(idx)
}

/// Builds the normalized joint histogram for transform `m`.
///
/// `stats_v` and `stats_t` must come from the full fixed and moving images
/// with `cfg.bin_count` bins.
pub fn build_joint(
    fixed: &Raster,
    moving: &SplineCoefficients,
    m: &TransformMatrix,
    cfg: &MetricConfig,
    stats_v: &IntensityStats,
    stats_t: &IntensityStats,
) -> Result<JointHistogram> {
    cfg.validate()?;
    let samples = select_samples(fixed.len(), cfg);
    accumulate(fixed, moving, m, cfg, stats_v, stats_t, samples.as_deref())
}

fn accumulate(
    fixed: &Raster,
    moving: &SplineCoefficients,
    m: &TransformMatrix,
    cfg: &MetricConfig,
    stats_v: &IntensityStats,
    stats_t: &IntensityStats,
    samples: Option<&[u32]>,
) -> Result<JointHistogram> {
    let bins = cfg.bin_count;
    let selected = samples.map_or(fixed.len(), <[u32]>::len);
    let w = fixed.width();
    let v_hi = (bins - 1) as f64;
    let t_lo = 1.0;
    let t_hi = (bins - 2) as f64;

    let deposit = |range: std::ops::Range<usize>| {
        let mut table = vec![0.0; bins * bins];
        let mut contributing = 0usize;
        for s in range {
            let idx = samples.map_or(s, |v| v[s] as usize);
            let (x, y) = ((idx % w) as f64, (idx / w) as f64);
            let (mx, my) = m.apply(x, y);
            let Some(ft) = moving.interpolate(mx, my, crate::resample::InterpolationKind::CubicSpline)
            else {
                continue;
            };
            contributing += 1;
            let u = stats_v.bin_coordinate(fixed.data()[idx]).clamp(0.0, v_hi);
            let kappa = (u + 0.5).floor() as usize;
            let v = stats_t.bin_coordinate(ft).clamp(t_lo, t_hi);
            let iv = v.floor();
            let taps = beta3_taps(v - iv);
            let first = iv as usize - 1;
            for (k, wt) in taps.iter().enumerate() {
                let iota = first + k;
                if iota < bins {
                    table[iota * bins + kappa] += wt;
                }
            }
        }
        (table, contributing)
    };

    let chunks: Vec<std::ops::Range<usize>> = (0..selected)
        .step_by(CHUNK)
        .map(|s| s..(s + CHUNK).min(selected))
        .collect();
    let partials: Vec<(Vec<f64>, usize)> = chunks.into_par_iter().map(deposit).collect();

    let mut table = vec![0.0; bins * bins];
    let mut contributing = 0;
    for (part, c) in partials {
        contributing += c;
        for (t, p) in table.iter_mut().zip(part) {
            *t += p;
        }
    }

    if contributing == 0 || (contributing as f64) < cfg.min_valid_fraction * selected as f64 {
        return Err(Error::InsufficientOverlap {
            contributing,
            selected,
        });
    }
    let total: f64 = table.iter().sum();
    for t in &mut table {
        *t /= total;
    }
    Ok(JointHistogram::from_normalized(
        bins,
        table,
        contributing,
        selected,
    ))
}

/// Cost of `params`: [`mi_cost`] of the joint histogram under the realized
/// transform.
pub fn evaluate(
    fixed: &Raster,
    moving: &SplineCoefficients,
    params: &TransformParams,
    cfg: &MetricConfig,
    stats_v: &IntensityStats,
    stats_t: &IntensityStats,
) -> Result<f64> {
    let m = params.to_matrix()?;
    build_joint(fixed, moving, &m, cfg, stats_v, stats_t).map(|j| mi_cost(&j))
}

/// A fixed/moving pair with everything that does not depend on the transform
/// precomputed: intensity statistics, spline coefficients and the sample set.
#[derive(Debug, Clone)]
pub struct MattesMetric {
    fixed: Raster,
    moving: SplineCoefficients,
    cfg: MetricConfig,
    stats_v: IntensityStats,
    stats_t: IntensityStats,
    samples: Option<Vec<u32>>,
}

impl MattesMetric {
    pub fn new(fixed: &Raster, moving: &Raster, cfg: MetricConfig) -> Result<Self> {
        cfg.validate()?;
        let moving_coeffs = prefilter(moving)?;
        Ok(Self {
            stats_v: fixed.intensity_stats(cfg.bin_count),
            stats_t: moving.intensity_stats(cfg.bin_count),
            samples: select_samples(fixed.len(), &cfg),
            fixed: fixed.clone(),
            moving: moving_coeffs,
            cfg,
        })
    }

    pub fn fixed(&self) -> &Raster {
        &self.fixed
    }

    pub fn moving(&self) -> &SplineCoefficients {
        &self.moving
    }

    pub fn config(&self) -> &MetricConfig {
        &self.cfg
    }

    pub fn joint(&self, m: &TransformMatrix) -> Result<JointHistogram> {
        accumulate(
            &self.fixed,
            &self.moving,
            m,
            &self.cfg,
            &self.stats_v,
            &self.stats_t,
            self.samples.as_deref(),
        )
    }

    pub fn evaluate_matrix(&self, m: &TransformMatrix) -> Result<f64> {
        self.joint(m).map(|j| mi_cost(&j))
    }

    pub fn evaluate(&self, params: &TransformParams) -> Result<f64> {
        self.evaluate_matrix(&params.to_matrix()?)
    }
}
