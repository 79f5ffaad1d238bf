//! End-to-end registration of a visual (fixed) frame and a thermal (moving)
//! frame, and a batch runner over dataset directories.
//!
//! Rotation, scale and shear act about the center of the fixed image. With
//! pyramid levels enabled, each coarser level halves both images with a 2×2
//! box filter; translations are halved on the way down and doubled on the
//! way back up, while the other parameters pass through unchanged.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evo::{self, EvoConfig, StopReason, TraceEntry};
use crate::geometry::{TransformKind, TransformMatrix, TransformParams};
use crate::mimetric::{MattesMetric, MetricConfig};
use crate::raster::{self, load_image, Raster};
use crate::resample::{warp, InterpolationKind};

/// Smallest image `register` accepts, per side.
pub const MIN_REGISTER_SIZE: usize = 32;
/// Smallest image `pyramid_downsample` accepts, per side.
pub const MIN_DOWNSAMPLE_SIZE: usize = 8;
pub const MAX_PYRAMID_LEVELS: usize = 4;

/// File extensions the batch runner treats as frames.
pub const IMAGE_EXTENSIONS: [&str; 2] = ["png", "pgm"];

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RegistrationConfig {
    pub kind: TransformKind,
    pub metric: MetricConfig,
    pub evo: EvoConfig,
    /// Number of reduced-resolution levels optimized before full resolution.
    pub pyramid_levels: usize,
    /// Starting parameters; identity when `None`. The rotation center is
    /// always reset to the fixed image's center.
    pub initial_params: Option<TransformParams>,
}

impl RegistrationConfig {
    pub fn validate(&self) -> Result<()> {
        self.metric.validate()?;
        self.evo.validate(self.kind.param_count())?;
        if self.pyramid_levels > MAX_PYRAMID_LEVELS {
            return Err(Error::InvalidConfig(format!(
                "at most {MAX_PYRAMID_LEVELS} pyramid levels, got {}",
                self.pyramid_levels
            )));
        }
        if let Some(p) = &self.initial_params {
            if p.kind != self.kind {
                return Err(Error::InvalidConfig(format!(
                    "initial parameters are {} but the transform kind is {}",
                    p.kind, self.kind
                )));
            }
            p.validate()?;
        }
        Ok(())
    }
}

/// Outcome of optimizing one pyramid level.
#[derive(Debug, Clone)]
pub struct LevelReport {
    /// 0 is full resolution.
    pub level: usize,
    pub width: usize,
    pub height: usize,
    pub iterations: usize,
    pub initial_cost: f64,
    pub final_cost: f64,
    pub stop_reason: StopReason,
    pub trace: Vec<TraceEntry>,
}

#[derive(Debug, Clone)]
pub struct RegistrationResult {
    pub params: TransformParams,
    /// Always `params.to_matrix()`.
    pub matrix: TransformMatrix,
    pub final_cost: f64,
    /// `None` when the input was degenerate and no optimization ran.
    pub stop_reason: Option<StopReason>,
    /// Total iterations over all levels.
    pub iterations: usize,
    /// Coarsest level first.
    pub levels: Vec<LevelReport>,
    /// Set when either image is constant; the result is then the starting
    /// transform with cost 0.
    pub degenerate: bool,
}

impl RegistrationResult {
    pub fn stop_label(&self) -> &'static str {
        self.stop_reason.map_or("degenerate_input", StopReason::as_str)
    }
}

/// Halves an image with a 2×2 box filter; odd trailing rows/columns drop.
pub fn pyramid_downsample(r: &Raster) -> Result<Raster> {
    if r.width() < MIN_DOWNSAMPLE_SIZE || r.height() < MIN_DOWNSAMPLE_SIZE {
        return Err(Error::TooSmall {
            width: r.width(),
            height: r.height(),
            min: MIN_DOWNSAMPLE_SIZE,
        });
    }
    Ok(downsample(r))
}

fn downsample(r: &Raster) -> Raster {
    Raster::from_fn(r.width() / 2, r.height() / 2, |x, y| {
        let (x2, y2) = (2 * x, 2 * y);
        (r.get(x2, y2) + r.get(x2 + 1, y2) + r.get(x2, y2 + 1) + r.get(x2 + 1, y2 + 1)) / 4.0
    })
}

/// Center of an image in pixel coordinates.
pub fn image_center(r: &Raster) -> [f64; 2] {
    [
        (r.width() as f64 - 1.0) / 2.0,
        (r.height() as f64 - 1.0) / 2.0,
    ]
}

/// Step multipliers that make one radius unit move every parameter by a
/// comparable amount in image space.
pub fn default_scales(kind: TransformKind, width: usize, height: usize) -> Vec<f64> {
    let t = width.max(height) as f64;
    match kind {
        TransformKind::Similarity => vec![1.0, 1.0, t, t],
        TransformKind::Affine => vec![1.0, 1.0, 1.0, 1.0, 1.0, t, t],
    }
}

/// Estimates the transform mapping visual pixels onto the thermal image.
pub fn register(
    fixed: &Raster,
    moving: &Raster,
    cfg: &RegistrationConfig,
) -> Result<RegistrationResult> {
    for r in [fixed, moving] {
        if r.width() < MIN_REGISTER_SIZE || r.height() < MIN_REGISTER_SIZE {
            return Err(Error::TooSmall {
                width: r.width(),
                height: r.height(),
                min: MIN_REGISTER_SIZE,
            });
        }
    }
    cfg.validate()?;

    let center = image_center(fixed);
    let mut params = cfg
        .initial_params
        .clone()
        .unwrap_or_else(|| TransformParams::identity(cfg.kind));
    params.center = center;

    if fixed.is_constant() || moving.is_constant() {
        let matrix = params.to_matrix()?;
        return Ok(RegistrationResult {
            params,
            matrix,
            final_cost: 0.0,
            stop_reason: None,
            iterations: 0,
            levels: Vec::new(),
            degenerate: true,
        });
    }

    let mut fixed_levels = vec![fixed.clone()];
    let mut moving_levels = vec![moving.clone()];
    let mut centers = vec![center];
    for _ in 0..cfg.pyramid_levels {
        fixed_levels.push(pyramid_downsample(fixed_levels.last().unwrap())?);
        moving_levels.push(pyramid_downsample(moving_levels.last().unwrap())?);
        let [cx, cy] = *centers.last().unwrap();
        centers.push([(cx - 0.5) / 2.0, (cy - 0.5) / 2.0]);
    }

    let mut levels = Vec::with_capacity(cfg.pyramid_levels + 1);
    for level in (0..=cfg.pyramid_levels).rev() {
        let (f, m) = (&fixed_levels[level], &moving_levels[level]);
        let factor = (1u64 << level) as f64;
        let mut start = params.clone();
        start.center = centers[level];
        {
            let (tx, ty) = start.translation_mut();
            *tx /= factor;
            *ty /= factor;
        }

        let metric = MattesMetric::new(f, m, cfg.metric.clone())?;
        if let Err(e) = metric.evaluate(&start) {
            return Err(match e {
                Error::InsufficientOverlap { .. } => Error::InvalidStart(format!(
                    "{e} at level {level}; adjust the initial parameters so the images overlap"
                )),
                other => other,
            });
        }

        let mut evo_cfg = cfg.evo.clone();
        if evo_cfg.scales.is_empty() {
            evo_cfg.scales = default_scales(cfg.kind, f.width(), f.height());
        }
        evo_cfg.seed = cfg.evo.seed.wrapping_add(level as u64);

        let kind = cfg.kind;
        let level_center = centers[level];
        let outcome = evo::run(
            &start.values,
            |v| {
                let p = TransformParams {
                    kind,
                    values: v.to_vec(),
                    center: level_center,
                };
                metric.evaluate(&p).unwrap_or(f64::INFINITY)
            },
            &evo_cfg,
        )?;

        params.values = outcome.best.clone();
        {
            let (tx, ty) = params.translation_mut();
            *tx *= factor;
            *ty *= factor;
        }
        params.center = center;
        levels.push(LevelReport {
            level,
            width: f.width(),
            height: f.height(),
            iterations: outcome.iterations,
            initial_cost: outcome.initial_cost,
            final_cost: outcome.best_cost,
            stop_reason: outcome.reason,
            trace: outcome.trace,
        });
    }

    let finest = levels.last().expect("at least one level");
    Ok(RegistrationResult {
        matrix: params.to_matrix()?,
        params,
        final_cost: finest.final_cost,
        stop_reason: Some(finest.stop_reason),
        iterations: levels.iter().map(|l| l.iterations).sum(),
        degenerate: false,
        levels,
    })
}

/// Resamples the thermal frame onto the visual grid through `result`.
pub fn align_moving(fixed: &Raster, moving: &Raster, matrix: &TransformMatrix) -> Raster {
    warp(
        moving,
        matrix,
        fixed.width(),
        fixed.height(),
        InterpolationKind::CubicSpline,
    )
    .image
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestTransform {
    pub kind: TransformKind,
    pub params: Vec<f64>,
    pub center: [f64; 2],
    /// Row-major 3×3.
    pub matrix: TransformMatrix,
}

/// Per-pair JSON record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairManifest {
    pub visual: String,
    pub thermal: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transform: Option<ManifestTransform>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cost: Option<f64>,
    #[serde(default)]
    pub iterations: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub level_iterations: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop: Option<String>,
    #[serde(default)]
    pub degenerate: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<String>,
}

impl PairManifest {
    pub fn success(
        visual: impl AsRef<Path>,
        thermal: impl AsRef<Path>,
        result: &RegistrationResult,
        timestamp: Option<String>,
    ) -> Self {
        Self {
            visual: visual.as_ref().display().to_string(),
            thermal: thermal.as_ref().display().to_string(),
            transform: Some(ManifestTransform {
                kind: result.params.kind,
                params: result.params.values.clone(),
                center: result.params.center,
                matrix: result.matrix,
            }),
            cost: Some(result.final_cost),
            iterations: result.iterations,
            level_iterations: result.levels.iter().map(|l| l.iterations).collect(),
            stop: Some(result.stop_label().to_string()),
            degenerate: result.degenerate,
            error: None,
            version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp,
        }
    }

    pub fn failure(
        visual: impl AsRef<Path>,
        thermal: impl AsRef<Path>,
        error: &Error,
        timestamp: Option<String>,
    ) -> Self {
        Self {
            visual: visual.as_ref().display().to_string(),
            thermal: thermal.as_ref().display().to_string(),
            transform: None,
            cost: None,
            iterations: 0,
            level_iterations: Vec::new(),
            stop: None,
            degenerate: false,
            error: Some(error.to_string()),
            version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path.as_ref(), self.to_json().as_bytes())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Manifest {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })
    }

    /// The stored matrix, or an error if the pair failed to register.
    pub fn matrix(&self) -> Option<TransformMatrix> {
        self.transform.as_ref().map(|t| t.matrix)
    }
}

/// Writes via a temporary sibling and a rename so readers never observe a
/// partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    raster::write_file(&tmp, bytes)?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Current UTC time as `YYYY-MM-DDTHH:MM:SSZ`.
pub fn utc_timestamp() -> String {
    chrono::Utc::now().format("%Y-%m-%dT%H:%M:%SZ").to_string()
}

#[derive(Debug, Clone)]
pub struct BatchConfig {
    pub registration: RegistrationConfig,
    pub visual_dir: String,
    pub thermal_dir: String,
    pub out_dir: PathBuf,
    /// Worker threads; 0 uses every available core.
    pub jobs: usize,
    pub timestamps: bool,
}

impl BatchConfig {
    pub fn new(out_dir: impl Into<PathBuf>) -> Self {
        Self {
            registration: RegistrationConfig::default(),
            visual_dir: "visual".into(),
            thermal_dir: "thermal".into(),
            out_dir: out_dir.into(),
            jobs: 0,
            timestamps: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub pairs: Vec<String>,
    pub failed: Vec<String>,
    /// Frames without a partner, relative to the batch root.
    pub unpaired: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct BatchOutput {
    pub manifests: Vec<PairManifest>,
    pub summary: BatchSummary,
}

/// Stem → path for every frame in `dir`.
fn frames_by_stem(dir: &Path) -> Result<BTreeMap<String, PathBuf>> {
    let mut out = BTreeMap::new();
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let is_frame = path.is_file()
            && path
                .extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| IMAGE_EXTENSIONS.iter().any(|x| e.eq_ignore_ascii_case(x)));
        if let (true, Some(stem)) = (is_frame, path.file_stem().and_then(|s| s.to_str())) {
            out.insert(stem.to_string(), path);
        }
    }
    Ok(out)
}

/// Registers every visual/thermal pair sharing a file stem under `root`.
///
/// Writes `<stem>.json` and `<stem>_thermal_aligned.png` per pair plus
/// `batch_summary.json` into `cfg.out_dir`. A pair that fails is recorded in
/// its manifest and does not stop the batch.
pub fn batch(root: impl AsRef<Path>, cfg: &BatchConfig) -> Result<BatchOutput> {
    let root = root.as_ref();
    cfg.registration.validate()?;
    let visual = frames_by_stem(&root.join(&cfg.visual_dir))?;
    let thermal = frames_by_stem(&root.join(&cfg.thermal_dir))?;

    let stems: Vec<String> = visual
        .keys()
        .filter(|s| thermal.contains_key(*s))
        .cloned()
        .collect();
    if stems.is_empty() {
        return Err(Error::NoPairsFound(root.to_path_buf()));
    }
    let relative = |dir: &str, p: &Path| {
        format!(
            "{dir}/{}",
            p.file_name().map(|n| n.to_string_lossy()).unwrap_or_default()
        )
    };
    let mut unpaired: Vec<String> = visual
        .iter()
        .filter(|(s, _)| !thermal.contains_key(*s))
        .map(|(_, p)| relative(&cfg.visual_dir, p))
        .chain(
            thermal
                .iter()
                .filter(|(s, _)| !visual.contains_key(*s))
                .map(|(_, p)| relative(&cfg.thermal_dir, p)),
        )
        .collect();
    unpaired.sort();

    fs::create_dir_all(&cfg.out_dir).map_err(|e| Error::io(&cfg.out_dir, e))?;

    let process = |stem: &String| -> Result<PairManifest> {
        let (vp, tp) = (&visual[stem], &thermal[stem]);
        let timestamp = cfg.timestamps.then(utc_timestamp);
        let outcome = load_image(vp).and_then(|v| {
            let t = load_image(tp)?;
            let result = register(&v, &t, &cfg.registration)?;
            Ok((v, t, result))
        });
        let manifest = match outcome {
            Ok((v, t, result)) => {
                let aligned = align_moving(&v, &t, &result.matrix);
                let png = raster::encode_png_gray(
                    &aligned.data().iter().map(|&x| raster::quantize(x)).collect::<Vec<_>>(),
                    aligned.width(),
                    aligned.height(),
                )
                .map_err(|e| Error::io(&cfg.out_dir, std::io::Error::other(e)))?;
                write_atomic(
                    &cfg.out_dir.join(format!("{stem}_thermal_aligned.png")),
                    &png,
                )?;
                PairManifest::success(vp, tp, &result, timestamp)
            }
            Err(e) => PairManifest::failure(vp, tp, &e, timestamp),
        };
        manifest.write(cfg.out_dir.join(format!("{stem}.json")))?;
        Ok(manifest)
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let manifests: Vec<PairManifest> =
        pool.install(|| stems.par_iter().map(process).collect::<Result<_>>())?;

    let failed = stems
        .iter()
        .zip(&manifests)
        .filter(|(_, m)| m.error.is_some())
        .map(|(s, _)| s.clone())
        .collect();
    let summary = BatchSummary {
        pairs: stems,
        failed,
        unpaired,
    };
    let mut json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    json.push('\n');
    write_atomic(&cfg.out_dir.join("batch_summary.json"), json.as_bytes())?;
    Ok(BatchOutput { manifests, summary })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inspect::synthetic_scene;

    #[test]
    fn downsample_examples() {
        let c = pyramid_downsample(&Raster::constant(8, 8, 3.5)).unwrap();
        assert_eq!((c.width(), c.height()), (4, 4));
        assert!(c.data().iter().all(|&v| v == 3.5));

        // every 2×2 block is [0 0; 0 4]
        let r = Raster::from_fn(8, 8, |x, y| if x % 2 == 1 && y % 2 == 1 { 4.0 } else { 0.0 });
        assert!(pyramid_downsample(&r).unwrap().data().iter().all(|&v| v == 1.0));

        let board = Raster::from_fn(9, 11, |x, y| if (x + y) % 2 == 0 { 0.0 } else { 255.0 });
        let d = pyramid_downsample(&board).unwrap();
        assert_eq!((d.width(), d.height()), (4, 5));
        assert!(d.data().iter().all(|&v| v == 127.5));

        assert!(matches!(
            pyramid_downsample(&Raster::constant(4, 4, 1.0)),
            Err(Error::TooSmall { .. })
        ));
    }

    #[test]
    fn small_images_rejected() {
        let a = Raster::constant(31, 40, 1.0);
        let b = Raster::constant(40, 40, 1.0);
        assert!(matches!(register(&a, &b, &RegistrationConfig::default()), Err(Error::TooSmall { .. })));
    }

    #[test]
    fn blank_fixed_image_is_flagged() {
        let blank = Raster::constant(40, 40, 0.0);
        let scene = synthetic_scene(40, 40, 1);
        let r = register(&blank, &scene, &RegistrationConfig::default()).unwrap();
        assert!(r.degenerate);
        assert_eq!(r.final_cost, 0.0);
        assert_eq!(r.iterations, 0);
        assert_eq!(r.stop_label(), "degenerate_input");
        assert_eq!(r.matrix, r.params.to_matrix().unwrap());
    }

    #[test]
    fn disjoint_start_is_invalid() {
        let scene = synthetic_scene(48, 48, 2);
        let cfg = RegistrationConfig {
            initial_params: Some(TransformParams::similarity(0.0, 1.0, 200.0, 0.0)),
            ..RegistrationConfig::default()
        };
        assert!(matches!(register(&scene, &scene, &cfg), Err(Error::InvalidStart(_))));
    }

    #[test]
    fn config_validation() {
        let cfg = RegistrationConfig { pyramid_levels: 5, ..RegistrationConfig::default() };
        assert!(cfg.validate().is_err());
        let cfg = RegistrationConfig {
            initial_params: Some(TransformParams::identity(TransformKind::Affine)),
            ..RegistrationConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn result_matrix_matches_params_and_cost_does_not_increase() {
        let scene = synthetic_scene(64, 64, 3);
        let shifted = warp(&scene, &TransformMatrix::translation(1.5, -1.0), 64, 64, InterpolationKind::CubicSpline).image;
        let cfg = RegistrationConfig {
            evo: EvoConfig { max_iterations: 60, ..EvoConfig::default() },
            pyramid_levels: 1,
            ..RegistrationConfig::default()
        };
        let r = register(&scene, &shifted, &cfg).unwrap();
        assert_eq!(r.matrix, r.params.to_matrix().unwrap());
        assert_eq!(r.levels.len(), 2);
        assert_eq!(r.levels[0].level, 1);
        assert_eq!(r.iterations, 120);
        let metric = MattesMetric::new(&scene, &shifted, cfg.metric.clone()).unwrap();
        let start = TransformParams::identity(TransformKind::Similarity).with_center(31.5, 31.5);
        assert!(r.final_cost <= metric.evaluate(&start).unwrap());
        assert_eq!(r.final_cost, metric.evaluate(&r.params).unwrap());
    }

    #[test]
    fn manifest_round_trip() {
        let scene = synthetic_scene(40, 40, 4);
        let r = register(&scene, &Raster::constant(40, 40, 1.0), &RegistrationConfig::default()).unwrap();
        let m = PairManifest::success("v.png", "t.png", &r, None);
        let json = m.to_json();
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        for key in ["visual", "thermal", "transform", "cost", "iterations", "stop", "version"] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        assert!(v.get("timestamp").is_none());
        assert_eq!(v["transform"]["matrix"].as_array().unwrap().len(), 9);
        assert_eq!(v["transform"]["kind"], "similarity");
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.json");
        m.write(&p).unwrap();
        assert_eq!(PairManifest::read(&p).unwrap(), m);
    }
}
