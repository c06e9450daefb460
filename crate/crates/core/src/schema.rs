//! JSON document form of a [`ProblemSpec`].
//!
//! ```json
//! {"sense": "eq", "b": [..], "p1": 1,
//!  "blocks": [{"A": [[..], ..], "beta": 0.001,
//!              "q_mode": {"kind": "identity_minus_gram", "tau": 2.5},
//!              "objective": {"kind": "l1", "params": {}}}]}
//! ```

use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::problem::{BlockSpec, ConstraintSense, ProblemSpec, QMode};
use crate::prox::{FeasibleSet, Objective};

/// Provenance of a generated instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceMeta {
    pub kind: String,
    pub m: usize,
    pub n: usize,
    pub seed: u64,
    pub generator_version: String,
    #[serde(default, skip_serializing_if = "Map::is_empty")]
    pub extra: Map<String, Value>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum QModeDoc {
    IdentityMinusGram { tau: f64 },
    BetaScaledIdentityMinusGram { tau: f64 },
    GeneralSpd {
        #[serde(rename = "Q")]
        q: Vec<Vec<f64>>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ObjectiveDoc {
    kind: String,
    #[serde(default)]
    params: Map<String, Value>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct BlockDoc {
    #[serde(rename = "A")]
    a: Vec<Vec<f64>>,
    beta: f64,
    q_mode: QModeDoc,
    objective: ObjectiveDoc,
    #[serde(default, skip_serializing_if = "FeasibleSet::is_whole")]
    feasible_set: FeasibleSet,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ProblemDoc {
    sense: ConstraintSense,
    b: Vec<f64>,
    blocks: Vec<BlockDoc>,
    #[serde(default)]
    p1: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    meta: Option<InstanceMeta>,
}

fn rows_to_matrix(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Document(format!("{what}: rows have unequal lengths")));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn param_f64(params: &Map<String, Value>, keys: &[&str], default: Option<f64>) -> Result<f64> {
    for k in keys {
        if let Some(v) = params.get(*k) {
            return v
                .as_f64()
                .ok_or_else(|| Error::Document(format!("objective parameter '{k}' is not a number")));
        }
    }
    default.ok_or_else(|| Error::Document(format!("objective needs parameter '{}'", keys[0])))
}

fn objective_from_doc(doc: &ObjectiveDoc) -> Result<Objective> {
    Ok(match doc.kind.as_str() {
        "zero" => Objective::Zero,
        "l1" => Objective::L1 {
            scale: param_f64(&doc.params, &["scale"], Some(1.0))?,
        },
        "scaled_l1" => Objective::L1 {
            scale: param_f64(&doc.params, &["scale", "sigma"], None)?,
        },
        "half_sq_dist" => {
            let center = doc
                .params
                .get("center")
                .or_else(|| doc.params.get("b"))
                .ok_or_else(|| Error::Document("half_sq_dist needs parameter 'center'".into()))?;
            let center: Vec<f64> = serde_json::from_value(center.clone())?;
            Objective::HalfSqDist {
                center: DVector::from_vec(center),
            }
        }
        other => return Err(Error::Document(format!("unknown objective kind '{other}'"))),
    })
}

fn objective_to_doc(obj: &Objective) -> ObjectiveDoc {
    let mut params = Map::new();
    let kind = match obj {
        Objective::Zero => "zero",
        Objective::L1 { scale } if *scale == 1.0 => "l1",
        Objective::L1 { scale } => {
            params.insert("scale".into(), Value::from(*scale));
            "scaled_l1"
        }
        Objective::HalfSqDist { center } => {
            params.insert("center".into(), Value::from(center.as_slice().to_vec()));
            "half_sq_dist"
        }
    };
    ObjectiveDoc {
        kind: kind.into(),
        params,
    }
}

impl ProblemSpec {
    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(Self::from_json_with_meta(s)?.0)
    }

    /// Parses a document, returning the optional `meta` block alongside the spec.
    pub fn from_json_with_meta(s: &str) -> Result<(Self, Option<InstanceMeta>)> {
        let doc: ProblemDoc = serde_json::from_str(s)?;
        let mut blocks = Vec::with_capacity(doc.blocks.len());
        for (i, b) in doc.blocks.iter().enumerate() {
            let matrix = rows_to_matrix(&b.a, &format!("block {i} A"))?;
            let q_mode = match &b.q_mode {
                QModeDoc::IdentityMinusGram { tau } => QMode::IdentityMinusGram { tau: *tau },
                QModeDoc::BetaScaledIdentityMinusGram { tau } => QMode::BetaScaledIdentityMinusGram { tau: *tau },
                QModeDoc::GeneralSpd { q } => QMode::GeneralSpd(rows_to_matrix(q, &format!("block {i} Q"))?),
            };
            blocks.push(BlockSpec {
                objective: Arc::new(objective_from_doc(&b.objective)?),
                matrix,
                feasible_set: b.feasible_set,
                beta: b.beta,
                q_mode,
            });
        }
        let p = blocks.len();
        let spec = ProblemSpec {
            blocks,
            rhs: DVector::from_vec(doc.b),
            sense: doc.sense,
            proximal_count: doc.p1.unwrap_or(p),
        };
        Ok((spec, doc.meta))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<(Self, Option<InstanceMeta>)> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Document(format!("{}: {e}", path.display())))?;
        Self::from_json_with_meta(&text)
    }

    /// Serializes the spec; fails for objectives that are not built-in kinds.
    pub fn to_json_string(&self, meta: Option<&InstanceMeta>) -> Result<String> {
        let mut blocks = Vec::with_capacity(self.blocks.len());
        for (i, b) in self.blocks.iter().enumerate() {
            let obj = b
                .objective
                .descriptor()
                .ok_or_else(|| Error::Document(format!("block {i}: objective has no JSON form")))?;
            blocks.push(BlockDoc {
                a: matrix_to_rows(&b.matrix),
                beta: b.beta,
                q_mode: match &b.q_mode {
                    QMode::IdentityMinusGram { tau } => QModeDoc::IdentityMinusGram { tau: *tau },
                    QMode::BetaScaledIdentityMinusGram { tau } => QModeDoc::BetaScaledIdentityMinusGram { tau: *tau },
                    QMode::GeneralSpd(q) => QModeDoc::GeneralSpd { q: matrix_to_rows(q) },
                },
                objective: objective_to_doc(&obj),
                feasible_set: b.feasible_set,
            });
        }
        let doc = ProblemDoc {
            sense: self.sense,
            b: self.rhs.as_slice().to_vec(),
            blocks,
            p1: Some(self.proximal_count),
            meta: meta.cloned(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn save(&self, path: impl AsRef<Path>, meta: Option<&InstanceMeta>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json_string(meta)?)
            .map_err(|e| Error::Document(format!("{}: {e}", path.display())))
    }
}
