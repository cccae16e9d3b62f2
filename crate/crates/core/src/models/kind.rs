use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    TransH,
    DistH,
    RotH,
    RefH,
    TransE,
    DistE,
    RotE,
    RefE,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Geometry {
    Hyperbolic,
    Euclidean,
}

/// How the relation acts on the head point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transform {
    /// Möbius (or vector) addition of a relation point.
    Translate,
    /// Elementwise product with the relation vector.
    Scale,
    /// Block-diagonal 2x2 rotations.
    Rotate,
    /// Block-diagonal 2x2 reflections.
    Reflect,
}

impl Transform {
    pub fn uses_vectors(self) -> bool {
        matches!(self, Transform::Translate | Transform::Scale)
    }

    pub fn uses_angles(self) -> bool {
        matches!(self, Transform::Rotate | Transform::Reflect)
    }
}

impl ModelKind {
    pub const ALL: [ModelKind; 8] = [
        ModelKind::TransH,
        ModelKind::DistH,
        ModelKind::RotH,
        ModelKind::RefH,
        ModelKind::TransE,
        ModelKind::DistE,
        ModelKind::RotE,
        ModelKind::RefE,
    ];

    /// The default teacher set.
    pub const HYPERBOLIC: [ModelKind; 4] = [ModelKind::TransH, ModelKind::DistH, ModelKind::RotH, ModelKind::RefH];

    pub fn geometry(self) -> Geometry {
        match self {
            ModelKind::TransH | ModelKind::DistH | ModelKind::RotH | ModelKind::RefH => Geometry::Hyperbolic,
            _ => Geometry::Euclidean,
        }
    }

    pub fn transform(self) -> Transform {
        match self {
            ModelKind::TransH | ModelKind::TransE => Transform::Translate,
            ModelKind::DistH | ModelKind::DistE => Transform::Scale,
            ModelKind::RotH | ModelKind::RotE => Transform::Rotate,
            ModelKind::RefH | ModelKind::RefE => Transform::Reflect,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::TransH => "TransH",
            ModelKind::DistH => "DistH",
            ModelKind::RotH => "RotH",
            ModelKind::RefH => "RefH",
            ModelKind::TransE => "TransE",
            ModelKind::DistE => "DistE",
            ModelKind::RotE => "RotE",
            ModelKind::RefE => "RefE",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let trimmed = s.trim().trim_end_matches('_');
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(trimmed))
            .ok_or_else(|| Error::Config(format!("unknown model kind '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CurvatureMode {
    PerRelation,
    Global,
}

/// Whether entity parameters are tangent vectors mapped through `expmap0` at
/// lookup, or ball points stored directly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EntityStorage {
    Tangent,
    Ball,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelOptions {
    pub bias: bool,
    pub curvature: CurvatureMode,
    pub entity_storage: EntityStorage,
}

impl Default for ModelOptions {
    fn default() -> Self {
        Self {
            bias: true,
            curvature: CurvatureMode::PerRelation,
            entity_storage: EntityStorage::Tangent,
        }
    }
}
