//! Similarity and affine transforms in homogeneous row-vector form.
//!
//! Points are row vectors and map as `p' = p · M`, so the translation lives in
//! the bottom row of the 3×3 matrix. A parameter vector is realized as
//!
//! ```text
//! M = T(-c) · Scale · Shear · Rotation · Translation · T(c)
//! ```
//!
//! where `c` is the rotation center carried by [`TransformParams`]. With the
//! default center at the origin this is exactly `Scale · Shear · Rotation ·
//! Translation`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransformKind {
    /// Rotation, uniform scale and translation.
    #[default]
    Similarity,
    /// Rotation, per-axis scale, shear and translation.
    Affine,
}

impl TransformKind {
    pub fn param_count(self) -> usize {
        match self {
            TransformKind::Similarity => 4,
            TransformKind::Affine => 7,
        }
    }

    /// Index of `t_x` in the parameter vector; `t_y` follows it.
    pub fn translation_index(self) -> usize {
        self.param_count() - 2
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TransformKind::Similarity => "similarity",
            TransformKind::Affine => "affine",
        }
    }
}

impl fmt::Display for TransformKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TransformKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "similarity" => Ok(TransformKind::Similarity),
            "affine" => Ok(TransformKind::Affine),
            other => Err(Error::InvalidParams(format!(
                "unknown transform kind {other:?}"
            ))),
        }
    }
}

/// Parameter vector of a transform.
///
/// Layout of `values`:
/// - similarity: `[q, s, t_x, t_y]`
/// - affine: `[q, s_x, s_y, sh_x, sh_y, t_x, t_y]`
///
/// `q` is in radians, translations in pixels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformParams {
    pub kind: TransformKind,
    #[serde(rename = "params")]
    pub values: Vec<f64>,
    /// Pixel about which rotation, scale and shear act.
    #[serde(default)]
    pub center: [f64; 2],
}

impl TransformParams {
    pub fn identity(kind: TransformKind) -> Self {
        let values = match kind {
            TransformKind::Similarity => vec![0.0, 1.0, 0.0, 0.0],
            TransformKind::Affine => vec![0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0],
        };
        Self {
            kind,
            values,
            center: [0.0, 0.0],
        }
    }

    pub fn similarity(q: f64, s: f64, tx: f64, ty: f64) -> Self {
        Self {
            kind: TransformKind::Similarity,
            values: vec![q, s, tx, ty],
            center: [0.0, 0.0],
        }
    }

    #[allow(clippy::too_many_arguments)]
    pub fn affine(q: f64, sx: f64, sy: f64, shx: f64, shy: f64, tx: f64, ty: f64) -> Self {
        Self {
            kind: TransformKind::Affine,
            values: vec![q, sx, sy, shx, shy, tx, ty],
            center: [0.0, 0.0],
        }
    }

    pub fn from_vec(kind: TransformKind, values: Vec<f64>) -> Result<Self> {
        let p = Self {
            kind,
            values,
            center: [0.0, 0.0],
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_center(mut self, cx: f64, cy: f64) -> Self {
        self.center = [cx, cy];
        self
    }

    pub fn rotation(&self) -> f64 {
        self.values[0]
    }

    /// `(s_x, s_y)`; both equal `s` for a similarity.
    pub fn scales(&self) -> (f64, f64) {
        match self.kind {
            TransformKind::Similarity => (self.values[1], self.values[1]),
            TransformKind::Affine => (self.values[1], self.values[2]),
        }
    }

    pub fn shears(&self) -> (f64, f64) {
        match self.kind {
            TransformKind::Similarity => (0.0, 0.0),
            TransformKind::Affine => (self.values[3], self.values[4]),
        }
    }

    pub fn translation(&self) -> (f64, f64) {
        let i = self.kind.translation_index();
        (self.values[i], self.values[i + 1])
    }

    pub fn translation_mut(&mut self) -> (&mut f64, &mut f64) {
        let i = self.kind.translation_index();
        let (a, b) = self.values.split_at_mut(i + 1);
        (&mut a[i], &mut b[0])
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.len() != self.kind.param_count() {
            return Err(Error::InvalidParams(format!(
                "{} transform takes {} parameters, got {}",
                self.kind,
                self.kind.param_count(),
                self.values.len()
            )));
        }
        if self.values.iter().chain(&self.center).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParams("non-finite parameter".into()));
        }
        let (sx, sy) = self.scales();
        if sx <= 0.0 || sy <= 0.0 {
            return Err(Error::InvalidParams(format!(
                "scale factors must be positive, got ({sx}, {sy})"
            )));
        }
        Ok(())
    }

    /// Realizes the parameters as a homogeneous matrix.
    pub fn to_matrix(&self) -> Result<TransformMatrix> {
        self.validate()?;
        let (sx, sy) = self.scales();
        let (shx, shy) = self.shears();
        let (sin, cos) = self.rotation().sin_cos();
        let scale = [[sx, 0.0], [0.0, sy]];
        let shear = [[1.0, shy], [shx, 1.0]];
        let rotation = [[cos, sin], [-sin, cos]];
        let a = mul2(mul2(scale, shear), rotation);
        let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
        if det <= 0.0 {
            return Err(Error::InvalidParams(format!(
                "transform must be orientation preserving (det = {det})"
            )));
        }
        let (tx, ty) = self.translation();
        let [cx, cy] = self.center;
        // p' = (p - c)·A + t + c
        let ox = tx + cx - (cx * a[0][0] + cy * a[1][0]);
        let oy = ty + cy - (cx * a[0][1] + cy * a[1][1]);
        Ok(TransformMatrix {
            m: [
                [a[0][0], a[0][1], 0.0],
                [a[1][0], a[1][1], 0.0],
                [ox, oy, 1.0],
            ],
        })
    }
}

fn mul2(a: [[f64; 2]; 2], b: [[f64; 2]; 2]) -> [[f64; 2]; 2] {
    [
        [
            a[0][0] * b[0][0] + a[0][1] * b[1][0],
            a[0][0] * b[0][1] + a[0][1] * b[1][1],
        ],
        [
            a[1][0] * b[0][0] + a[1][1] * b[1][0],
            a[1][0] * b[0][1] + a[1][1] * b[1][1],
        ],
    ]
}

/// 3×3 homogeneous matrix acting on row vectors; third column is `[0, 0, 1]ᵀ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransformMatrix {
    m: [[f64; 3]; 3],
}

impl TransformMatrix {
    pub const IDENTITY: TransformMatrix = TransformMatrix {
        m: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
    };

    /// Validates an arbitrary row-major matrix.
    pub fn from_rows(m: [[f64; 3]; 3]) -> Result<Self> {
        if m.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParams("non-finite matrix entry".into()));
        }
        if m[0][2] != 0.0 || m[1][2] != 0.0 || m[2][2] != 1.0 {
            return Err(Error::InvalidParams(
                "third column must be [0, 0, 1]".into(),
            ));
        }
        let t = Self { m };
        if t.det() <= 0.0 {
            return Err(Error::InvalidParams(format!(
                "linear part must have positive determinant, got {}",
                t.det()
            )));
        }
        Ok(t)
    }

    pub fn from_row_major(v: &[f64]) -> Result<Self> {
        if v.len() != 9 {
            return Err(Error::InvalidParams(format!(
                "matrix needs 9 entries, got {}",
                v.len()
            )));
        }
        Self::from_rows([[v[0], v[1], v[2]], [v[3], v[4], v[5]], [v[6], v[7], v[8]]])
    }

    pub fn translation(tx: f64, ty: f64) -> Self {
        Self {
            m: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [tx, ty, 1.0]],
        }
    }

    pub fn rows(&self) -> &[[f64; 3]; 3] {
        &self.m
    }

    pub fn to_row_major(&self) -> [f64; 9] {
        let m = &self.m;
        [
            m[0][0], m[0][1], m[0][2], m[1][0], m[1][1], m[1][2], m[2][0], m[2][1], m[2][2],
        ]
    }

    /// Determinant of the upper-left 2×2 block.
    pub fn det(&self) -> f64 {
        self.m[0][0] * self.m[1][1] - self.m[0][1] * self.m[1][0]
    }

    #[inline]
    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        let m = &self.m;
        (
            x * m[0][0] + y * m[1][0] + m[2][0],
            x * m[0][1] + y * m[1][1] + m[2][1],
        )
    }

    /// The transform that applies `self` first and `then` second.
    pub fn compose(&self, then: &TransformMatrix) -> TransformMatrix {
        let (a, b) = (&self.m, &then.m);
        let mut m = [[0.0; 3]; 3];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (0..3).map(|k| a[i][k] * b[k][j]).sum();
            }
        }
        // keep the affine column exact
        m[0][2] = 0.0;
        m[1][2] = 0.0;
        m[2][2] = 1.0;
        TransformMatrix { m }
    }

    pub fn invert(&self) -> Result<TransformMatrix> {
        let det = self.det();
        if det.abs() < 1e-15 {
            return Err(Error::Singular { det });
        }
        let m = &self.m;
        let i00 = m[1][1] / det;
        let i01 = -m[0][1] / det;
        let i10 = -m[1][0] / det;
        let i11 = m[0][0] / det;
        let (tx, ty) = (m[2][0], m[2][1]);
        Ok(TransformMatrix {
            m: [
                [i00, i01, 0.0],
                [i10, i11, 0.0],
                [-(tx * i00 + ty * i10), -(tx * i01 + ty * i11), 1.0],
            ],
        })
    }
}

impl Default for TransformMatrix {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl Serialize for TransformMatrix {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.to_row_major().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for TransformMatrix {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let v = Vec::<f64>::deserialize(deserializer)?;
        TransformMatrix::from_row_major(&v).map_err(serde::de::Error::custom)
    }
}
