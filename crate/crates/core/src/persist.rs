//! Versioned JSON model files and atomic file output.
//!
//! Numeric parameters are stored as named row-major arrays with explicit
//! shapes. Floats are written in shortest round-trip form, so loading a file
//! reproduces every parameter bit for bit and re-saving yields the same bytes.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::deep::{Encoder, MinMax, SoftmaxHead, StackedModel};
use crate::error::{FcpError, Result};
use crate::ingest::Standardization;
use crate::model::{ModelBody, TrainedModel};
use crate::shallow::{
    AdtModel, AdtSplitter, BinaryModel, Kernel, OvrModel, RfModel, SvmModel, Tree, TreeNode,
};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedArray {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Preprocessing {
    pub standardization: Option<Standardization>,
    pub minmax: Option<MinMax>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub schema_version: u32,
    pub model_type: String,
    /// Binary learner kind inside a one-vs-rest ensemble.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_model_type: Option<String>,
    pub task: String,
    pub hyperparameters: serde_json::Value,
    pub preprocessing: Preprocessing,
    pub feature_names: Vec<String>,
    pub label_vocabulary: Vec<i64>,
    pub seed: u64,
    pub parameters: BTreeMap<String, NamedArray>,
}

type Params = BTreeMap<String, NamedArray>;

fn put(p: &mut Params, name: String, shape: Vec<usize>, data: Vec<f64>) {
    p.insert(name, NamedArray { shape, data });
}

fn put2(p: &mut Params, name: String, m: &Array2<f64>) {
    put(p, name, vec![m.nrows(), m.ncols()], m.iter().copied().collect());
}

fn put1(p: &mut Params, name: String, v: &[f64]) {
    put(p, name, vec![v.len()], v.to_vec());
}

fn get<'a>(p: &'a Params, name: &str, rank: usize) -> Result<&'a NamedArray> {
    let a = p
        .get(name)
        .ok_or_else(|| FcpError::parse("<model>", 0, format!("missing parameter {name}")))?;
    let n: usize = a.shape.iter().product();
    if a.shape.len() != rank || n != a.data.len() {
        return Err(FcpError::parse(
            "<model>",
            0,
            format!("parameter {name} has shape {:?} and {} values", a.shape, a.data.len()),
        ));
    }
    if a.data.iter().any(|v| !v.is_finite()) {
        return Err(FcpError::parse("<model>", 0, format!("parameter {name} is not finite")));
    }
    Ok(a)
}

fn get2(p: &Params, name: &str) -> Result<Array2<f64>> {
    let a = get(p, name, 2)?;
    Array2::from_shape_vec((a.shape[0], a.shape[1]), a.data.clone())
        .map_err(|e| FcpError::parse("<model>", 0, e.to_string()))
}

fn get1(p: &Params, name: &str) -> Result<Vec<f64>> {
    Ok(get(p, name, 1)?.data.clone())
}

fn scalar(p: &Params, name: &str) -> Result<f64> {
    let v = get1(p, name)?;
    if v.len() != 1 {
        return Err(FcpError::parse("<model>", 0, format!("{name} must hold one value")));
    }
    Ok(v[0])
}

fn index(v: f64, what: &str) -> Result<usize> {
    if v >= 0.0 && v.fract() == 0.0 && v < 9.0e15 {
        Ok(v as usize)
    } else {
        Err(FcpError::parse("<model>", 0, format!("{what} must be a non-negative integer, got {v}")))
    }
}

// 64-bit seeds do not fit a double, so they travel as two 32-bit halves.
fn split_u64(v: u64) -> [f64; 2] {
    [(v >> 32) as f64, (v & 0xffff_ffff) as f64]
}

fn join_u64(hi: f64, lo: f64) -> Result<u64> {
    Ok(((index(hi, "seed")? as u64) << 32) | index(lo, "seed")? as u64)
}

fn binary_kind(m: &BinaryModel) -> &'static str {
    match m {
        BinaryModel::Svm(_) => "svm",
        BinaryModel::Adt(_) => "adt",
        BinaryModel::Rf(_) => "rf",
    }
}

fn write_binary(m: &BinaryModel, pre: &str, p: &mut Params) {
    match m {
        BinaryModel::Svm(s) => {
            put2(p, format!("{pre}support_vectors"), &s.support_vectors);
            put1(p, format!("{pre}dual_coefs"), &s.dual_coefs);
            put1(p, format!("{pre}bias"), &[s.bias]);
            put1(p, format!("{pre}c"), &[s.c]);
            if let Kernel::Rbf { gamma } = s.kernel {
                put1(p, format!("{pre}gamma"), &[gamma]);
            }
        }
        BinaryModel::Adt(a) => {
            put1(p, format!("{pre}root_value"), &[a.root_value]);
            put1(p, format!("{pre}n_features"), &[a.n_features as f64]);
            // parent, branch, feature, threshold, value_true, value_false
            let rows: Vec<f64> = a
                .splitters
                .iter()
                .flat_map(|s| {
                    let (parent, branch) = match s.parent {
                        None => (-1.0, 0.0),
                        Some((i, b)) => (i as f64, f64::from(u8::from(b))),
                    };
                    [parent, branch, s.feature as f64, s.threshold, s.value_true, s.value_false]
                })
                .collect();
            put(p, format!("{pre}splitters"), vec![a.splitters.len(), 6], rows);
        }
        BinaryModel::Rf(r) => write_forest(r, pre, p),
    }
}

fn write_forest(r: &RfModel, pre: &str, p: &mut Params) {
    put1(p, format!("{pre}classes"), &r.classes.iter().map(|&c| c as f64).collect::<Vec<_>>());
    put1(p, format!("{pre}oob_error"), &[r.oob_error]);
    put1(p, format!("{pre}feature_importances"), &r.feature_importances);
    let seeds: Vec<f64> = r.per_tree_seed.iter().flat_map(|&s| split_u64(s)).collect();
    put(p, format!("{pre}per_tree_seed"), vec![r.per_tree_seed.len(), 2], seeds);
    for (t, tree) in r.trees.iter().enumerate() {
        // kind (0 leaf, 1 split), feature or class, threshold, left, right
        let rows: Vec<f64> = tree
            .nodes
            .iter()
            .flat_map(|n| match *n {
                TreeNode::Leaf { class } => [0.0, class as f64, 0.0, 0.0, 0.0],
                TreeNode::Split { feature, threshold, left, right } => {
                    [1.0, feature as f64, threshold, left as f64, right as f64]
                }
            })
            .collect();
        put(p, format!("{pre}tree{t:04}"), vec![tree.nodes.len(), 5], rows);
    }
}

fn read_forest(pre: &str, p: &Params, n_features: usize) -> Result<RfModel> {
    let classes: Vec<i64> = get1(p, &format!("{pre}classes"))?.iter().map(|&c| c as i64).collect();
    let seeds = get2(p, &format!("{pre}per_tree_seed"))?;
    let per_tree_seed = seeds
        .outer_iter()
        .map(|r| join_u64(r[0], r[1]))
        .collect::<Result<Vec<_>>>()?;
    let mut trees = Vec::with_capacity(per_tree_seed.len());
    for t in 0..per_tree_seed.len() {
        let m = get2(p, &format!("{pre}tree{t:04}"))?;
        let n = m.nrows();
        let mut nodes = Vec::with_capacity(n);
        for r in m.outer_iter() {
            let node = if r[0] == 0.0 {
                let class = index(r[1], "class")?;
                if class >= classes.len() {
                    return Err(FcpError::parse("<model>", 0, "leaf class out of range"));
                }
                TreeNode::Leaf { class }
            } else {
                let (feature, left, right) =
                    (index(r[1], "feature")?, index(r[3], "child")?, index(r[4], "child")?);
                if feature >= n_features || left >= n || right >= n {
                    return Err(FcpError::parse("<model>", 0, "tree node index out of range"));
                }
                TreeNode::Split { feature, threshold: r[2], left, right }
            };
            nodes.push(node);
        }
        trees.push(Tree { nodes });
    }
    Ok(RfModel {
        classes,
        trees,
        per_tree_seed,
        oob_error: scalar(p, &format!("{pre}oob_error"))?,
        feature_importances: get1(p, &format!("{pre}feature_importances"))?,
        n_features,
    })
}

fn read_binary(kind: &str, pre: &str, p: &Params, n_features: usize) -> Result<BinaryModel> {
    Ok(match kind {
        "svm" => {
            let sv = get2(p, &format!("{pre}support_vectors"))?;
            let kernel = match p.get(&format!("{pre}gamma")) {
                Some(_) => Kernel::Rbf { gamma: scalar(p, &format!("{pre}gamma"))? },
                None => Kernel::Linear,
            };
            let dual_coefs = get1(p, &format!("{pre}dual_coefs"))?;
            if dual_coefs.len() != sv.nrows() || sv.ncols() != n_features {
                return Err(FcpError::parse("<model>", 0, "support vector shapes disagree"));
            }
            BinaryModel::Svm(SvmModel {
                support_vectors: sv,
                dual_coefs,
                bias: scalar(p, &format!("{pre}bias"))?,
                kernel,
                c: scalar(p, &format!("{pre}c"))?,
            })
        }
        "adt" => {
            let m = get2(p, &format!("{pre}splitters"))?;
            let mut splitters = Vec::with_capacity(m.nrows());
            for (i, r) in m.outer_iter().enumerate() {
                let parent = if r[0] < 0.0 {
                    None
                } else {
                    let pi = index(r[0], "parent")?;
                    if pi >= i {
                        return Err(FcpError::parse("<model>", 0, "splitter parent must precede it"));
                    }
                    Some((pi, r[1] != 0.0))
                };
                let feature = index(r[2], "feature")?;
                if feature >= n_features {
                    return Err(FcpError::parse("<model>", 0, "splitter feature out of range"));
                }
                splitters.push(AdtSplitter {
                    parent,
                    feature,
                    threshold: r[3],
                    value_true: r[4],
                    value_false: r[5],
                });
            }
            BinaryModel::Adt(AdtModel {
                root_value: scalar(p, &format!("{pre}root_value"))?,
                rounds: splitters.len(),
                splitters,
                n_features: index(scalar(p, &format!("{pre}n_features"))?, "n_features")?,
            })
        }
        "rf" => BinaryModel::Rf(read_forest(pre, p, n_features)?),
        other => {
            return Err(FcpError::parse("<model>", 0, format!("unknown binary model type {other}")))
        }
    })
}

impl ModelFile {
    pub fn from_model(m: &TrainedModel) -> ModelFile {
        let mut parameters = Params::new();
        let mut base_model_type = None;
        let mut minmax = None;
        match &m.body {
            ModelBody::Binary(b) => write_binary(b, "", &mut parameters),
            ModelBody::Ovr(o) => {
                base_model_type = Some(binary_kind(&o.models[0]).to_string());
                put1(
                    &mut parameters,
                    "classes".into(),
                    &o.classes.iter().map(|&c| c as f64).collect::<Vec<_>>(),
                );
                for (k, b) in o.models.iter().enumerate() {
                    write_binary(b, &format!("model{k:02}."), &mut parameters);
                }
            }
            ModelBody::StackedAe(s) => {
                minmax = Some(s.scaling.clone());
                for (i, e) in s.encoders.iter().enumerate() {
                    put2(&mut parameters, format!("encoder{i}.w"), &e.w);
                    put1(&mut parameters, format!("encoder{i}.b"), e.b.as_slice().expect("contiguous"));
                }
                put2(&mut parameters, "softmax.w".into(), &s.softmax.w);
                put1(&mut parameters, "softmax.b".into(), s.softmax.b.as_slice().expect("contiguous"));
                put1(&mut parameters, "fine_tuned".into(), &[f64::from(u8::from(s.fine_tuned))]);
            }
        }
        ModelFile {
            schema_version: SCHEMA_VERSION,
            model_type: m.model_type().to_string(),
            base_model_type,
            task: m.task.clone(),
            hyperparameters: m.hyperparameters.clone(),
            preprocessing: Preprocessing {
                standardization: m.standardization.clone(),
                minmax,
            },
            feature_names: m.feature_names.clone(),
            label_vocabulary: m.label_vocabulary.clone(),
            seed: m.seed,
            parameters,
        }
    }

    pub fn into_model(self) -> Result<TrainedModel> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(FcpError::Version {
                found: self.schema_version,
                expected: SCHEMA_VERSION,
            });
        }
        let d = self.feature_names.len();
        if let Some(s) = &self.preprocessing.standardization {
            if s.dim() != d || s.stddev.len() != d {
                return Err(FcpError::parse("<model>", 0, "standardization width disagrees with features"));
            }
        }
        let p = &self.parameters;
        let body = match self.model_type.as_str() {
            "svm" | "adt" | "rf" => {
                if self.label_vocabulary.len() != 2 {
                    return Err(FcpError::parse("<model>", 0, "binary model needs two labels"));
                }
                ModelBody::Binary(read_binary(&self.model_type, "", p, d)?)
            }
            "ovr_ensemble" => {
                let kind = self.base_model_type.as_deref().ok_or_else(|| {
                    FcpError::parse("<model>", 0, "ovr_ensemble without base_model_type")
                })?;
                let classes: Vec<i64> = get1(p, "classes")?.iter().map(|&c| c as i64).collect();
                if classes != self.label_vocabulary {
                    return Err(FcpError::parse("<model>", 0, "ensemble classes disagree with vocabulary"));
                }
                let models = (0..classes.len())
                    .map(|k| read_binary(kind, &format!("model{k:02}."), p, d))
                    .collect::<Result<Vec<_>>>()?;
                ModelBody::Ovr(OvrModel { classes, models })
            }
            "stacked_ae" => {
                let scaling = self
                    .preprocessing
                    .minmax
                    .clone()
                    .ok_or_else(|| FcpError::parse("<model>", 0, "stacked_ae without min-max stats"))?;
                let mut encoders: Vec<Encoder> = Vec::new();
                let mut width = d;
                while p.contains_key(&format!("encoder{}.w", encoders.len())) {
                    let i = encoders.len();
                    let w = get2(p, &format!("encoder{i}.w"))?;
                    let b = Array1::from(get1(p, &format!("encoder{i}.b"))?);
                    if w.ncols() != width || b.len() != w.nrows() {
                        return Err(FcpError::parse("<model>", 0, format!("encoder {i} shape mismatch")));
                    }
                    width = w.nrows();
                    encoders.push(Encoder { w, b });
                }
                let softmax = SoftmaxHead {
                    w: get2(p, "softmax.w")?,
                    b: Array1::from(get1(p, "softmax.b")?),
                };
                if softmax.w.ncols() != width
                    || softmax.w.nrows() != self.label_vocabulary.len()
                    || softmax.b.len() != softmax.w.nrows()
                    || scaling.dim() != d
                {
                    return Err(FcpError::parse("<model>", 0, "softmax shape mismatch"));
                }
                ModelBody::StackedAe(StackedModel {
                    scaling,
                    encoders,
                    softmax,
                    classes: self.label_vocabulary.clone(),
                    fine_tuned: scalar(p, "fine_tuned")? != 0.0,
                })
            }
            other => {
                return Err(FcpError::parse("<model>", 0, format!("unknown model type {other}")))
            }
        };
        Ok(TrainedModel {
            task: self.task,
            body,
            hyperparameters: self.hyperparameters,
            standardization: self.preprocessing.standardization,
            feature_names: self.feature_names,
            label_vocabulary: self.label_vocabulary,
            seed: self.seed,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s =
            serde_json::to_string_pretty(self).map_err(|e| FcpError::Config(e.to_string()))?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str, name: &str) -> Result<ModelFile> {
        // check the version before the full schema so newer files fail clearly
        let raw: serde_json::Value = serde_json::from_str(text)
            .map_err(|e| FcpError::parse(name, e.line() as u64, e.to_string()))?;
        if let Some(v) = raw.get("schema_version").and_then(serde_json::Value::as_u64) {
            if v != u64::from(SCHEMA_VERSION) {
                return Err(FcpError::Version {
                    found: u32::try_from(v).unwrap_or(u32::MAX),
                    expected: SCHEMA_VERSION,
                });
            }
        }
        serde_json::from_str(text).map_err(|e| FcpError::parse(name, e.line() as u64, e.to_string()))
    }
}

pub fn save_model(m: &TrainedModel, path: &Path) -> Result<()> {
    write_atomic(path, ModelFile::from_model(m).to_json()?.as_bytes())
}

pub fn load_model(path: &Path) -> Result<TrainedModel> {
    if !path.exists() {
        return Err(FcpError::FileMissing(path.to_path_buf()));
    }
    let text = fs::read_to_string(path).map_err(|e| FcpError::io(path, e))?;
    ModelFile::from_json(&text, &path.display().to_string())?
        .into_model()
        .map_err(|e| match e {
            FcpError::Parse { line, msg, .. } => FcpError::parse(path.display().to_string(), line, msg),
            other => other,
        })
}

/// Writes to a sibling temporary file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| FcpError::Config(format!("not a file path: {}", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(FcpError::io(path, e));
    }
    Ok(())
}
