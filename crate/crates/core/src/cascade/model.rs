use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ensemble::{GridShape, NodeEnsemble, WeakClassifier};
use super::refine::PoseRefiner;
use crate::detect::ScanConfig;
use crate::error::{Error, Result};
use crate::features::{FeatureConfig, PartRegion, FEATURE_LAYOUT};
use crate::geometry::PinholeCamera;
use crate::pose_tree::PoseTree;
use crate::synth::LABEL_DIM;

pub const MODEL_VERSION: u32 = 1;

/// A trained hierarchy of node ensembles plus everything detection needs.
#[derive(Debug, Clone, PartialEq)]
pub struct CascadeModel {
    pub tree: PoseTree,
    /// Indexed by node id.
    pub ensembles: Vec<NodeEnsemble>,
    pub feature: FeatureConfig,
    /// Canonical keypoint label of every class, indexed by class id.
    pub templates: Vec<Vec<f64>>,
    pub camera: PinholeCamera,
    pub scan: ScanConfig,
    /// Optional window-to-hand regression applied to reported candidates.
    pub refiner: Option<PoseRefiner>,
    /// Effective training configuration, echoed for provenance.
    pub training: serde_json::Value,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MemberFile {
    region: PartRegion,
    weights: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeFile {
    node: usize,
    degenerate: bool,
    members: Vec<MemberFile>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    version: u32,
    feature_layout: String,
    feature: FeatureConfig,
    camera: PinholeCamera,
    scan: ScanConfig,
    parents: Vec<Option<usize>>,
    leaf_classes: Vec<Option<usize>>,
    ensembles: Vec<NodeFile>,
    templates: Vec<Vec<f64>>,
    refiner: Option<PoseRefiner>,
    training: serde_json::Value,
}

impl CascadeModel {
    pub fn shape(&self) -> GridShape {
        GridShape {
            cells_x: self.feature.cells(),
            cells_y: self.feature.cells(),
            bins: self.feature.bins,
        }
    }

    pub fn classes(&self) -> usize {
        self.templates.len()
    }

    /// Members at the node with the most members.
    pub fn max_members(&self) -> usize {
        self.ensembles.iter().map(|e| e.members.len()).max().unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        self.feature.validate()?;
        self.camera.validate()?;
        self.scan.validate()?;
        self.tree.validate()?;
        if self.ensembles.len() != self.tree.len() {
            return Err(Error::invalid(format!(
                "{} ensembles for {} tree nodes",
                self.ensembles.len(),
                self.tree.len()
            )));
        }
        let shape = self.shape();
        for (i, e) in self.ensembles.iter().enumerate() {
            if e.node != i {
                return Err(Error::invalid(format!("ensemble at {i} claims node {}", e.node)));
            }
            if e.members.is_empty() {
                return Err(Error::invalid(format!("node {i} has no members")));
            }
            for m in &e.members {
                m.validate(shape)?;
            }
        }
        let k = self.templates.len();
        let mut seen = vec![false; k];
        for c in self.tree.leaf_classes().into_iter().flatten() {
            if c >= k || seen[c] {
                return Err(Error::invalid(format!("leaf class {c} not in 0..{k} or repeated")));
            }
            seen[c] = true;
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::invalid("some class has no leaf"));
        }
        if self
            .templates
            .iter()
            .any(|t| t.len() != LABEL_DIM || t.iter().any(|v| !v.is_finite()))
        {
            return Err(Error::invalid(format!("templates must hold {LABEL_DIM} finite values")));
        }
        if let Some(r) = &self.refiner {
            r.validate(k, shape.dim())?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<Vec<u8>> {
        let file = ModelFile {
            version: MODEL_VERSION,
            feature_layout: FEATURE_LAYOUT.to_string(),
            feature: self.feature,
            camera: self.camera,
            scan: self.scan,
            parents: self.tree.parents(),
            leaf_classes: self.tree.leaf_classes(),
            ensembles: self
                .ensembles
                .iter()
                .map(|e| NodeFile {
                    node: e.node,
                    degenerate: e.degenerate,
                    members: e
                        .members
                        .iter()
                        .map(|m| MemberFile {
                            region: m.region,
                            weights: m.weights.clone(),
                        })
                        .collect(),
                })
                .collect(),
            templates: self.templates.clone(),
            refiner: self.refiner.clone(),
            training: self.training.clone(),
        };
        serde_json::to_vec(&file).map_err(|e| Error::invalid(format!("serialising model: {e}")))
    }

    pub fn from_json(bytes: &[u8], origin: &Path) -> Result<Self> {
        #[derive(Deserialize)]
        struct Header {
            version: u32,
        }
        let header: Header = serde_json::from_slice(bytes).map_err(|e| Error::json(origin, e))?;
        if header.version != MODEL_VERSION {
            return Err(Error::Version {
                what: "model",
                found: header.version,
                expected: MODEL_VERSION,
            });
        }
        let file: ModelFile = serde_json::from_slice(bytes).map_err(|e| Error::json(origin, e))?;
        if file.feature_layout != FEATURE_LAYOUT {
            return Err(Error::invalid(format!(
                "unknown feature layout {:?}",
                file.feature_layout
            )));
        }
        let tree = PoseTree::from_parents(&file.parents, &file.leaf_classes)?;
        let ensembles = file
            .ensembles
            .into_iter()
            .map(|n| NodeEnsemble {
                node: n.node,
                degenerate: n.degenerate,
                members: n
                    .members
                    .into_iter()
                    .enumerate()
                    .map(|(j, m)| WeakClassifier {
                        region: m.region,
                        weights: m.weights,
                        node: n.node,
                        member: j,
                    })
                    .collect(),
            })
            .collect();
        let model = Self {
            tree,
            ensembles,
            feature: file.feature,
            templates: file.templates,
            camera: file.camera,
            scan: file.scan,
            refiner: file.refiner,
            training: file.training,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&bytes, path)
    }
}
