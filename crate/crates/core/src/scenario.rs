//! Scenario files: model, Lagrangians, marked points and run settings.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::init::Initializer;
use crate::kahler::{AmbientPoint, KahlerModel, LagrangianChart, ModelKind};
use crate::linalg::{CMat, CVec, C64};
use crate::loops::{CornerConvention, LoopStyle};
use crate::solver::{OptimizerSettings, Problem};

/// Complex entries are `[re, im]` pairs.
pub type Pair = [f64; 2];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub m: usize,
    #[serde(default)]
    pub normalization: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ChartSpec {
    /// Either `phases` or a unitary `basis` (rows of pairs).
    LinearPlane {
        #[serde(default)]
        phases: Option<Vec<f64>>,
        #[serde(default)]
        basis: Option<Vec<Vec<Pair>>>,
        #[serde(default)]
        offset: Option<Vec<Pair>>,
    },
    /// `U·ℝPᵐ`; the identity when `unitary` is absent.
    RealProjective {
        #[serde(default)]
        unitary: Option<Vec<Vec<Pair>>>,
    },
    RealProjectiveRotation { generator: Vec<Vec<f64>>, angle: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Intersections {
    pub x: Vec<Vec<Pair>>,
    pub y: Vec<Pair>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshSpec {
    pub n: usize,
    pub h: f64,
    #[serde(default = "default_grading")]
    pub grading: f64,
    /// Refinement levels for sweeps; level `ℓ` uses `h / 2^ℓ`.
    #[serde(default)]
    pub levels: Option<Vec<u32>>,
}

fn default_grading() -> f64 {
    2.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IndexSpec {
    /// Truncation order; four times the empirical bandwidth when absent.
    #[serde(rename = "N")]
    pub order: Option<usize>,
    pub samples_per_arc: usize,
    pub style: LoopStyle,
    pub corners: CornerConvention,
}

impl Default for IndexSpec {
    fn default() -> Self {
        IndexSpec {
            order: None,
            samples_per_arc: 64,
            style: LoopStyle::Corrected,
            corners: CornerConvention::OutputReversed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub model: ModelSpec,
    pub lagrangians: Vec<ChartSpec>,
    pub intersections: Intersections,
    pub initializer: Initializer,
    pub mesh: MeshSpec,
    #[serde(default)]
    pub optimizer: OptimizerSettings,
    #[serde(default)]
    pub indices: IndexSpec,
}

fn complex_vec(pairs: &[Pair]) -> CVec {
    CVec::from_iterator(pairs.len(), pairs.iter().map(|p| C64::new(p[0], p[1])))
}

fn complex_mat(rows: &[Vec<Pair>], what: &str) -> Result<CMat> {
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(Error::Validation(format!("{what} must be a square matrix")));
    }
    Ok(CMat::from_fn(n, n, |i, j| C64::new(rows[i][j][0], rows[i][j][1])))
}

impl ChartSpec {
    pub fn build(&self, model: &KahlerModel, label: usize) -> Result<LagrangianChart> {
        let wrap = |e: Error| Error::Validation(format!("L_{label}: {e}"));
        let chart = match self {
            ChartSpec::LinearPlane { phases, basis, offset } => {
                let offset = offset.as_deref().map(complex_vec);
                match (phases, basis) {
                    (Some(p), None) => LagrangianChart::linear_plane_with_phases(p, offset, label),
                    (None, Some(b)) => {
                        let b = complex_mat(b, "basis").map_err(wrap)?;
                        let m = b.nrows();
                        LagrangianChart::linear_plane(b, offset.unwrap_or_else(|| CVec::zeros(m)), label)
                    }
                    _ => Err(Error::Domain("give exactly one of `phases` and `basis`".into())),
                }
            }
            ChartSpec::RealProjective { unitary: None } => Ok(LagrangianChart::standard_real_projective(model.m, label)),
            ChartSpec::RealProjective { unitary: Some(u) } => {
                LagrangianChart::real_projective(complex_mat(u, "unitary").map_err(wrap)?, label)
            }
            ChartSpec::RealProjectiveRotation { generator, angle } => {
                let n = generator.len();
                if generator.iter().any(|r| r.len() != n) {
                    return Err(wrap(Error::Domain("generator must be a square matrix".into())));
                }
                let h = DMatrix::from_fn(n, n, |i, j| generator[i][j]);
                LagrangianChart::real_projective_rotation(&h, *angle, label)
            }
        }
        .map_err(wrap)?;
        let dim = match &chart.kind {
            crate::kahler::ChartKind::LinearPlane { basis, .. } => basis.nrows(),
            crate::kahler::ChartKind::RealProjective { unitary } => unitary.nrows(),
        };
        let (expect, kind) = match model.kind {
            ModelKind::FlatCm => (model.m, matches!(self, ChartSpec::LinearPlane { .. })),
            ModelKind::ProjectiveFs => (model.m + 1, !matches!(self, ChartSpec::LinearPlane { .. })),
        };
        if !kind || dim != expect {
            return Err(Error::Validation(format!("L_{label} does not belong to the {:?} model with m = {}", model.kind, model.m)));
        }
        Ok(chart)
    }
}

impl Scenario {
    /// Parses JSON text; a missing `initializer.params` is read as `{}`.
    pub fn parse(text: &str) -> Result<Self> {
        let mut value: serde_json::Value = serde_json::from_str(text)?;
        if let Some(init) = value.get_mut("initializer").and_then(|v| v.as_object_mut()) {
            init.entry("params").or_insert_with(|| serde_json::json!({}));
        }
        let scenario: Scenario = serde_json::from_value(value)?;
        Ok(scenario)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let value = serde_json::to_value(self).expect("scenario serializes");
        let canonical = serde_json::to_string(&value).expect("value serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }

    pub fn model(&self) -> Result<KahlerModel> {
        let m = self.model.m;
        if m == 0 {
            return Err(Error::Validation("model dimension m must be positive".into()));
        }
        let model = match self.model.kind {
            ModelKind::FlatCm => KahlerModel::flat(m),
            ModelKind::ProjectiveFs => KahlerModel::projective(m),
        };
        match self.model.normalization {
            Some(c) if !(c > 0.0 && c.is_finite()) => {
                Err(Error::Validation(format!("normalization must be positive, got {c}")))
            }
            Some(c) => Ok(model.with_normalization(c)),
            None => Ok(model),
        }
    }

    fn point(&self, model: &KahlerModel, pairs: &[Pair], name: &str) -> Result<AmbientPoint> {
        if pairs.len() != model.ambient_dim() {
            return Err(Error::Validation(format!(
                "{name} has {} coordinates, expected {}",
                pairs.len(),
                model.ambient_dim()
            )));
        }
        let v = complex_vec(pairs);
        if model.is_projective() && v.norm() < 1e-12 {
            return Err(Error::Validation(format!("{name} is the zero vector")));
        }
        Ok(model.point(v))
    }

    /// Geometric problem with every marked point checked against its two
    /// Lagrangians.
    pub fn problem(&self) -> Result<Problem> {
        let model = self.model()?;
        let n = self.lagrangians.len();
        if self.mesh.n != n {
            return Err(Error::Validation(format!("mesh.n = {} but {n} Lagrangians are given", self.mesh.n)));
        }
        let lagrangians = self
            .lagrangians
            .iter()
            .enumerate()
            .map(|(i, c)| c.build(&model, i + 1))
            .collect::<Result<Vec<_>>>()?;
        let x = self
            .intersections
            .x
            .iter()
            .enumerate()
            .map(|(i, p)| self.point(&model, p, &format!("x_{}", i + 1)))
            .collect::<Result<Vec<_>>>()?;
        let y = self.point(&model, &self.intersections.y, "y")?;
        let problem = Problem { model, lagrangians, x, y };
        problem.validate()?;
        Ok(problem)
    }

    pub fn level_h(&self, level: u32) -> f64 {
        self.mesh.h / 2f64.powi(level as i32)
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) const LUNE: &str = r#"{
        "model": {"kind": "projective_fs", "m": 1},
        "lagrangians": [
            {"kind": "real_projective"},
            {"kind": "real_projective_rotation", "generator": [[0, 1], [1, 0]], "angle": 1.5707963267948966}
        ],
        "intersections": {
            "x": [[[0.7071067811865476, 0], [-0.7071067811865476, 0]]],
            "y": [[0.7071067811865476, 0], [0.7071067811865476, 0]]
        },
        "initializer": {"kind": "geodesic_lune"},
        "mesh": {"n": 2, "h": 0.2, "grading": 2}
    }"#;

    #[test]
    fn lune_parses_and_validates() {
        let s = Scenario::parse(LUNE).unwrap();
        assert_eq!(s.indices, IndexSpec::default());
        assert_eq!(s.optimizer, OptimizerSettings::default());
        let p = s.problem().unwrap();
        assert_eq!(p.n(), 2);
        assert_eq!(s.hash(), Scenario::parse(LUNE).unwrap().hash());
        assert_eq!(s.hash().len(), 64);
    }

    #[test]
    fn misplaced_point_names_its_index() {
        let text = LUNE.replace("[-0.7071067811865476, 0]]]", "[0, 0.7071067811865476]]]");
        let err = Scenario::parse(&text).unwrap().problem().unwrap_err().to_string();
        assert!(err.contains("x_1") && err.contains("L_1") && err.contains("L_2"), "{err}");
    }

    #[test]
    fn mismatched_mesh_n_is_rejected() {
        let text = LUNE.replace("\"n\": 2", "\"n\": 3");
        assert!(matches!(Scenario::parse(&text).unwrap().problem(), Err(Error::Validation(_))));
    }

    #[test]
    fn chart_must_match_model() {
        let text = LUNE.replace("{\"kind\": \"real_projective\"}", "{\"kind\": \"linear_plane\", \"phases\": [0]}");
        let err = Scenario::parse(&text).unwrap().problem().unwrap_err().to_string();
        assert!(err.contains("L_1"), "{err}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = LUNE.replace("\"grading\": 2", "\"grading\": 2, \"spacing\": 1");
        assert!(Scenario::parse(&text).is_err());
    }

    #[test]
    fn levels_halve_h() {
        let s = Scenario::parse(LUNE).unwrap();
        assert_eq!(s.level_h(0), 0.2);
        assert_eq!(s.level_h(2), 0.05);
    }
}
