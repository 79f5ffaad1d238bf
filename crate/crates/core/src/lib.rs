//! Calibration-free registration of visual and thermal frames.
//!
//! The thermal frame is aligned to the visual frame by maximizing Mattes
//! mutual information over a similarity or affine transform, using a
//! (1+1) evolutionary search and cubic B-spline resampling.
//!
//! ```
//! use vtalign::inspect::{synth_pair, synthetic_scene, SynthOptions};
//! use vtalign::{register, RegistrationConfig, TransformParams};
//!
//! let visual = synthetic_scene(96, 96, 1);
//! let truth = TransformParams::similarity(0.0, 1.0, 2.0, -1.0);
//! let pair = synth_pair(&visual, &truth, &SynthOptions::default()).unwrap();
//! let result = register(&pair.visual, &pair.thermal, &RegistrationConfig::default()).unwrap();
//! assert!(result.final_cost < 0.0);
//! ```

pub mod error;
pub mod evo;
pub mod geometry;
pub mod inspect;
pub mod mimetric;
pub mod pipeline;
pub mod raster;
pub mod resample;

pub use error::{Error, Result};
pub use evo::{EvoConfig, StopReason};
pub use geometry::{TransformKind, TransformMatrix, TransformParams};
pub use mimetric::{MattesMetric, MetricConfig};
pub use pipeline::{batch, register, BatchConfig, PairManifest, RegistrationConfig, RegistrationResult};
pub use raster::{load_image, save_image, Raster};
pub use resample::{warp, InterpolationKind};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/rasters.md")]
    mod rasters {}
    #[doc = include_str!("../../../book/src/transforms.md")]
    mod transforms {}
    #[doc = include_str!("../../../book/src/splines.md")]
    mod splines {}
    #[doc = include_str!("../../../book/src/mutual_information.md")]
    mod mutual_information {}
    #[doc = include_str!("../../../book/src/optimizer.md")]
    mod optimizer {}
    #[doc = include_str!("../../../book/src/registration.md")]
    mod registration {}
    #[doc = include_str!("../../../book/src/inspection.md")]
    mod inspection {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
