//! Weight bundles: named f32 tensors for one architecture, and their binary
//! file format.
//!
//! Layout, all integers little-endian u32:
//!
//! ```text
//! "QGNN" version architecture d tensor_count
//! per tensor: name_len name_bytes rank dim_0 .. dim_{rank-1} f32 payload (row-major)
//! crc32 of every preceding byte
//! ```
//!
//! Tensors are written in name order.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayD, ArrayView1, ArrayView2, Ix1, Ix2, IxDyn};
use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::GnnError;

pub const MAGIC: &[u8; 4] = b"QGNN";
pub const FORMAT_VERSION: u32 = 1;
pub const DEFAULT_DIM: usize = 64;

pub const HEAD_VOTE: &str = "head.vote";
pub const HEAD_ASN: &str = "head.asn";
pub const HEAD_FORALL_SCORING: &str = "head.forall_scoring";
pub const HEAD_FORALL_WV: &str = "head.forall_wv";
pub const HEAD_EXISTS_SCORING: &str = "head.exists_scoring";
pub const HEAD_EXISTS_WV: &str = "head.exists_wv";

const MLP_LAYERS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Head {
    Vote,
    Witness,
    ScoreForall,
    ScoreExists,
}

impl std::fmt::Display for Head {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Head::Vote => "vote",
            Head::Witness => "witness",
            Head::ScoreForall => "forall scoring",
            Head::ScoreExists => "exists scoring",
        })
    }
}

/// A piece of the network the tensor layout is derived from.
#[derive(Debug, Clone, Copy)]
enum Module {
    Mlp { input: usize, output: usize },
    Lstm { input: usize },
    Vector(usize),
}

/// Message-passing modules of an architecture, by name.
fn core_modules(arch: u32, d: usize) -> Result<Vec<(&'static str, Module)>, GnnError> {
    let mlp = |input, output| Module::Mlp { input, output };
    let lstm = |input| Module::Lstm { input };
    let mut m = vec![
        ("init.forall.h", Module::Vector(d)),
        ("init.forall.c", Module::Vector(d)),
        ("init.exists.h", Module::Vector(d)),
        ("init.exists.c", Module::Vector(d)),
        ("init.clause.h", Module::Vector(d)),
        ("init.clause.c", Module::Vector(d)),
        ("mlp.forall", mlp(d, d)),
        ("mlp.exists", mlp(d, d)),
        ("lstm.forall", lstm(2 * d)),
        ("lstm.exists", lstm(2 * d)),
    ];
    match arch {
        1 => m.extend([("lstm.clause", lstm(d)), ("mlp.clause", mlp(d, d))]),
        2 | 3 => m.extend([
            ("lstm.clause_from_forall", lstm(d)),
            ("lstm.clause_from_exists", lstm(d)),
            ("mlp.clause", mlp(d, d)),
        ]),
        4 => m.extend([("lstm.clause", lstm(2 * d)), ("mlp.clause", mlp(d, d))]),
        5 => m.extend([
            ("lstm.clause", lstm(2 * d)),
            ("mlp.clause_to_forall", mlp(d, d)),
            ("mlp.clause_to_exists", mlp(d, d)),
        ]),
        6 => m.extend([
            ("lstm.clause_to_forall", lstm(2 * d)),
            ("lstm.clause_to_exists", lstm(2 * d)),
            ("mlp.clause_to_forall", mlp(d, d)),
            ("mlp.clause_to_exists", mlp(d, d)),
        ]),
        7 => m.extend([
            ("lstm.clause_to_exists", lstm(d)),
            ("lstm.clause_to_forall", lstm(d)),
            ("mlp.clause_to_exists", mlp(d, d)),
            ("mlp.clause_to_forall", mlp(d, d)),
        ]),
        _ => return Err(GnnError::UnknownArchitecture(arch)),
    }
    Ok(m)
}

fn head_modules(head: Head, d: usize, k: usize) -> Vec<(&'static str, Module)> {
    match head {
        Head::Vote => vec![(HEAD_VOTE, Module::Mlp { input: 2 * d, output: 1 })],
        Head::Witness => vec![(HEAD_ASN, Module::Mlp { input: 2 * d, output: 2 })],
        Head::ScoreForall => vec![
            (HEAD_FORALL_SCORING, Module::Mlp { input: 2 * d, output: k }),
            (HEAD_FORALL_WV, Module::Vector(k)),
        ],
        Head::ScoreExists => vec![
            (HEAD_EXISTS_SCORING, Module::Mlp { input: 2 * d, output: k }),
            (HEAD_EXISTS_WV, Module::Vector(k)),
        ],
    }
}

const ALL_HEADS: [Head; 4] = [Head::Vote, Head::Witness, Head::ScoreForall, Head::ScoreExists];

fn head_prefix(head: Head) -> &'static str {
    match head {
        Head::Vote => HEAD_VOTE,
        Head::Witness => HEAD_ASN,
        Head::ScoreForall => HEAD_FORALL_SCORING,
        Head::ScoreExists => HEAD_EXISTS_SCORING,
    }
}

/// `(tensor name, shape, fan-in)` for every tensor of a module.
fn tensor_shapes(name: &str, module: Module, d: usize) -> Vec<(String, Vec<usize>, usize)> {
    match module {
        Module::Vector(n) => vec![(name.to_string(), vec![n], n)],
        Module::Mlp { input, output } => {
            let mut out = Vec::new();
            for layer in 0..MLP_LAYERS {
                let fan_in = if layer == 0 { input } else { d };
                let fan_out = if layer + 1 == MLP_LAYERS { output } else { d };
                out.push((format!("{name}.{layer}.weight"), vec![fan_out, fan_in], fan_in));
                out.push((format!("{name}.{layer}.bias"), vec![fan_out], fan_in));
            }
            out
        }
        Module::Lstm { input } => vec![
            (format!("{name}.w_ih"), vec![4 * d, input], d),
            (format!("{name}.w_hh"), vec![4 * d, d], d),
            (format!("{name}.bias"), vec![4 * d], d),
        ],
    }
}

/// Named tensors for one architecture, shape-checked on construction.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightBundle {
    architecture: u32,
    dim: usize,
    tensors: BTreeMap<String, ArrayD<f32>>,
}

impl WeightBundle {
    /// Validates `tensors` against the layout of `architecture` at width
    /// `dim`. Heads are optional but must be complete and consistent.
    pub fn new(
        architecture: u32,
        dim: usize,
        tensors: BTreeMap<String, ArrayD<f32>>,
    ) -> Result<WeightBundle, GnnError> {
        if dim == 0 {
            return Err(GnnError::Shape("embedding width must be positive".into()));
        }
        let mut expected: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (name, module) in core_modules(architecture, dim)? {
            for (t, shape, _) in tensor_shapes(name, module, dim) {
                expected.insert(t, shape);
            }
        }
        for head in ALL_HEADS {
            let present = tensors
                .keys()
                .any(|n| n.starts_with(&format!("{}.", head_prefix(head))) || n == head_prefix(head));
            if !present {
                continue;
            }
            let k = match head {
                Head::ScoreForall | Head::ScoreExists => {
                    let wv = match head {
                        Head::ScoreForall => HEAD_FORALL_WV,
                        _ => HEAD_EXISTS_WV,
                    };
                    tensors
                        .get(wv)
                        .filter(|t| t.ndim() == 1)
                        .map(|t| t.len())
                        .ok_or_else(|| GnnError::Shape(format!("{head} head lacks `{wv}`")))?
                }
                _ => 0,
            };
            for (name, module) in head_modules(head, dim, k) {
                for (t, shape, _) in tensor_shapes(name, module, dim) {
                    expected.insert(t, shape);
                }
            }
        }
        for (name, shape) in &expected {
            match tensors.get(name) {
                None => return Err(GnnError::Shape(format!("missing tensor `{name}`"))),
                Some(t) if t.shape() != shape.as_slice() => {
                    return Err(GnnError::Shape(format!(
                        "tensor `{name}` has shape {:?}, expected {:?}",
                        t.shape(),
                        shape
                    )))
                }
                Some(_) => {}
            }
        }
        if let Some(extra) = tensors.keys().find(|n| !expected.contains_key(*n)) {
            return Err(GnnError::Shape(format!(
                "unexpected tensor `{extra}` for architecture {architecture}"
            )));
        }
        Ok(WeightBundle {
            architecture,
            dim,
            tensors,
        })
    }

    /// Uniform `±1/sqrt(fan_in)` initialization with every head present.
    /// `k` is the inner width of the scoring heads.
    pub fn random(architecture: u32, dim: usize, k: usize, seed: u64) -> Result<WeightBundle, GnnError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut modules = core_modules(architecture, dim)?;
        for head in ALL_HEADS {
            modules.extend(head_modules(head, dim, k));
        }
        let mut tensors = BTreeMap::new();
        for (name, module) in modules {
            for (t, shape, fan_in) in tensor_shapes(name, module, dim) {
                let bound = 1.0 / (fan_in.max(1) as f32).sqrt();
                let dist = Uniform::new_inclusive(-bound, bound);
                let n: usize = shape.iter().product();
                let data: Vec<f32> = (0..n).map(|_| dist.sample(&mut rng)).collect();
                let array = ArrayD::from_shape_vec(IxDyn(&shape), data).expect("shape matches length");
                tensors.insert(t, array);
            }
        }
        WeightBundle::new(architecture, dim, tensors)
    }

    pub fn architecture(&self) -> u32 {
        self.architecture
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn tensors(&self) -> &BTreeMap<String, ArrayD<f32>> {
        &self.tensors
    }

    /// Replaces one tensor, keeping its shape.
    pub fn set_tensor(&mut self, name: &str, value: ArrayD<f32>) -> Result<(), GnnError> {
        let slot = self
            .tensors
            .get_mut(name)
            .ok_or_else(|| GnnError::Shape(format!("no tensor `{name}`")))?;
        if slot.shape() != value.shape() {
            return Err(GnnError::Shape(format!(
                "tensor `{name}` has shape {:?}, got {:?}",
                slot.shape(),
                value.shape()
            )));
        }
        *slot = value;
        Ok(())
    }

    pub fn has_head(&self, head: Head) -> bool {
        let probe = match head {
            Head::ScoreForall => HEAD_FORALL_WV.to_string(),
            Head::ScoreExists => HEAD_EXISTS_WV.to_string(),
            _ => format!("{}.0.weight", head_prefix(head)),
        };
        self.tensors.contains_key(&probe)
    }

    pub fn require_head(&self, head: Head) -> Result<(), GnnError> {
        if self.has_head(head) {
            Ok(())
        } else {
            Err(GnnError::MissingHead(head))
        }
    }

    pub fn require_score_head(&self, forall: bool) -> Result<(), GnnError> {
        self.require_head(if forall { Head::ScoreForall } else { Head::ScoreExists })
    }

    /// Inner width of a scoring head.
    pub fn scoring_width(&self, forall: bool) -> Option<usize> {
        let wv = if forall { HEAD_FORALL_WV } else { HEAD_EXISTS_WV };
        self.tensors.get(wv).map(|t| t.len())
    }

    pub(crate) fn matrix(&self, name: &str) -> ArrayView2<'_, f32> {
        self.tensors[name]
            .view()
            .into_dimensionality::<Ix2>()
            .expect("validated rank 2")
    }

    pub(crate) fn vector(&self, name: &str) -> ArrayView1<'_, f32> {
        self.tensors[name]
            .view()
            .into_dimensionality::<Ix1>()
            .expect("validated rank 1")
    }

    /// Applies the 3-layer MLP `name` row-wise: ReLU after the first two
    /// layers, linear output.
    pub(crate) fn mlp(&self, name: &str, x: ArrayView2<'_, f32>) -> Array2<f32> {
        let mut h = x.to_owned();
        for layer in 0..MLP_LAYERS {
            let w = self.matrix(&format!("{name}.{layer}.weight"));
            let b = self.vector(&format!("{name}.{layer}.bias"));
            h = h.dot(&w.t()) + b;
            if layer + 1 < MLP_LAYERS {
                h.mapv_inplace(|v| v.max(0.0));
            }
        }
        h
    }

    /// Initial `(h, c)` vectors of a node class.
    pub(crate) fn init(&self, class: &str) -> (Array1<f32>, Array1<f32>) {
        (
            self.vector(&format!("init.{class}.h")).to_owned(),
            self.vector(&format!("init.{class}.c")).to_owned(),
        )
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        for v in [
            FORMAT_VERSION,
            self.architecture,
            self.dim as u32,
            self.tensors.len() as u32,
        ] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for (name, t) in &self.tensors {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(t.ndim() as u32).to_le_bytes());
            for &dim in t.shape() {
                out.extend_from_slice(&(dim as u32).to_le_bytes());
            }
            for &v in t.iter() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<WeightBundle, GnnError> {
        if bytes.len() < 4 {
            return Err(GnnError::Checksum);
        }
        let (body, tail) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
        if crc32fast::hash(body) != stored {
            return Err(GnnError::Checksum);
        }
        let mut r = ByteReader { buf: body, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(GnnError::Format("bad magic".into()));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(GnnError::Format(format!("unsupported format version {version}")));
        }
        let architecture = r.u32()?;
        let dim = r.u32()? as usize;
        let count = r.u32()? as usize;
        let mut tensors = BTreeMap::new();
        for _ in 0..count {
            let name_len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|_| GnnError::Format("tensor name is not UTF-8".into()))?
                .to_string();
            let rank = r.u32()? as usize;
            let shape = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
            let n: usize = shape.iter().product();
            let payload = r.take(n.checked_mul(4).ok_or_else(|| GnnError::Format("tensor too large".into()))?)?;
            let data: Vec<f32> = payload
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                .collect();
            let array = ArrayD::from_shape_vec(IxDyn(&shape), data)
                .map_err(|e| GnnError::Format(e.to_string()))?;
            if tensors.insert(name.clone(), array).is_some() {
                return Err(GnnError::Format(format!("duplicate tensor `{name}`")));
            }
        }
        if r.pos != body.len() {
            return Err(GnnError::Format("trailing bytes after tensors".into()));
        }
        WeightBundle::new(architecture, dim, tensors)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), GnnError> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<WeightBundle, GnnError> {
        WeightBundle::from_bytes(&fs::read(path)?)
    }
}

struct ByteReader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], GnnError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| GnnError::Format("unexpected end of file".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, GnnError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}
