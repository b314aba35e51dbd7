//! JSON weight files for both network forms.
//!
//! Floats are written as decimal strings with 17 significant digits, which
//! round-trip every finite `f64` bit for bit.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::construction::FinalAffine;
use crate::error::{Error, Result};
use crate::layers::{ProjectionLayer, ReluLayerParams};
use crate::network::{ModifiedNetwork, NetworkMeta, ReluNetwork, StageInfo};

pub const FORMAT_VERSION: u32 = 1;

/// Exact decimal form of `v`.
pub fn f2s(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn s2f(s: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| Error::Malformed(format!("`{s}` is not a number")))
}

fn vec_out(v: &[f64]) -> Vec<String> {
    v.iter().map(|&x| f2s(x)).collect()
}

fn vec_in(v: &[String], len: usize, what: &str) -> Result<Vec<f64>> {
    if v.len() != len {
        return Err(Error::Malformed(format!(
            "{what} has {} entries, expected {len}",
            v.len()
        )));
    }
    v.iter().map(|s| s2f(s)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Form {
    Modified,
    Relu,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MetaFile {
    #[serde(rename = "R")]
    radius: String,
    delta: String,
    #[serde(rename = "D")]
    d_bound: String,
    seed: u64,
    stage_radii: Vec<String>,
    stage_deltas: Vec<String>,
    sup_abs: String,
    sup_grad: String,
    #[serde(default)]
    cond_diag: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rho: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    margin: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProjectionLayerFile {
    stage: usize,
    beta: Vec<String>,
    offset: String,
    g: String,
    tangent: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ReluLayerFile {
    /// Row-major.
    #[serde(rename = "W")]
    w: Vec<Vec<String>>,
    bias: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModifiedFinal {
    w: Vec<String>,
    w0: String,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ReluFinal {
    w: Vec<String>,
    b: String,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WeightFile<L, F> {
    version: u32,
    form: Form,
    d: usize,
    width: usize,
    layers: Vec<L>,
    #[serde(rename = "final")]
    head: F,
    meta: MetaFile,
}

/// Only the header, to dispatch on `form` before a full parse.
#[derive(Debug, Deserialize)]
struct Header {
    version: u32,
    form: Form,
}

/// Reads the `form` field after checking the version.
pub fn peek_form(json: &str) -> Result<Form> {
    let h: Header = serde_json::from_str(json)?;
    check_version(h.version)?;
    Ok(h.form)
}

fn check_version(v: u32) -> Result<()> {
    if v != FORMAT_VERSION {
        return Err(Error::Version {
            found: v,
            expected: FORMAT_VERSION,
        });
    }
    Ok(())
}

fn check_shape(version: u32, form: Form, want: Form, d: usize, width: usize) -> Result<()> {
    check_version(version)?;
    if form != want {
        return Err(Error::Malformed(format!(
            "expected form {want:?}, found {form:?}"
        )));
    }
    if d < 1 {
        return Err(Error::Malformed("d must be at least 1".into()));
    }
    if width != d + 1 {
        return Err(Error::Malformed(format!(
            "width {width} does not equal d + 1 = {}",
            d + 1
        )));
    }
    Ok(())
}

fn meta_out(
    meta: &NetworkMeta,
    radii: &[f64],
    deltas: &[f64],
    cond: &[f64],
    rho: Option<(f64, f64)>,
) -> MetaFile {
    MetaFile {
        radius: f2s(meta.radius),
        delta: f2s(meta.delta),
        d_bound: f2s(meta.d_bound),
        seed: meta.seed,
        stage_radii: vec_out(radii),
        stage_deltas: vec_out(deltas),
        sup_abs: f2s(meta.sup_abs),
        sup_grad: f2s(meta.sup_grad),
        cond_diag: vec_out(cond),
        rho: rho.map(|r| f2s(r.0)),
        margin: rho.map(|r| f2s(r.1)),
    }
}

fn meta_in(m: &MetaFile) -> Result<(NetworkMeta, Vec<f64>, Vec<f64>)> {
    let meta = NetworkMeta {
        radius: s2f(&m.radius)?,
        delta: s2f(&m.delta)?,
        d_bound: s2f(&m.d_bound)?,
        seed: m.seed,
        sup_abs: s2f(&m.sup_abs)?,
        sup_grad: s2f(&m.sup_grad)?,
    };
    let radii = vec_in(&m.stage_radii, m.stage_radii.len(), "stage_radii")?;
    let deltas = vec_in(&m.stage_deltas, radii.len(), "stage_deltas")?;
    Ok((meta, radii, deltas))
}

pub fn modified_to_json(net: &ModifiedNetwork) -> String {
    let stage_of = |i: usize| {
        net.stages()
            .iter()
            .position(|s| s.layers.contains(&i))
            .unwrap_or(0)
    };
    let layers = net
        .layers()
        .iter()
        .enumerate()
        .map(|(i, l)| ProjectionLayerFile {
            stage: stage_of(i),
            beta: vec_out(l.beta()),
            offset: f2s(l.offset()),
            g: f2s(l.g()),
            tangent: vec_out(l.tangent()),
        })
        .collect();
    let radii: Vec<f64> = net.stages().iter().map(|s| s.r).collect();
    let deltas: Vec<f64> = net.stages().iter().map(|s| s.delta).collect();
    let file = WeightFile {
        version: FORMAT_VERSION,
        form: Form::Modified,
        d: net.dim(),
        width: net.dim() + 1,
        layers,
        head: ModifiedFinal {
            w: vec_out(&net.head().w),
            w0: f2s(net.head().w0),
        },
        meta: meta_out(net.meta(), &radii, &deltas, &[], None),
    };
    serde_json::to_string_pretty(&file).expect("weight file serializes")
}

pub fn modified_from_json(json: &str) -> Result<ModifiedNetwork> {
    let h: Header = serde_json::from_str(json)?;
    check_version(h.version)?;
    if h.form != Form::Modified {
        return Err(Error::Malformed(format!(
            "expected form modified, found {:?}",
            h.form
        )));
    }
    let file: WeightFile<ProjectionLayerFile, ModifiedFinal> = serde_json::from_str(json)?;
    check_shape(file.version, file.form, Form::Modified, file.d, file.width)?;
    let d = file.d;
    let (meta, radii, deltas) = meta_in(&file.meta)?;
    let mut layers = Vec::with_capacity(file.layers.len());
    let mut counts = vec![0usize; radii.len()];
    let mut last_stage = 0;
    for (i, l) in file.layers.iter().enumerate() {
        if l.stage >= radii.len() || l.stage < last_stage {
            return Err(Error::Malformed(format!(
                "layer {i} has stage {} out of order or beyond {} stages",
                l.stage,
                radii.len()
            )));
        }
        last_stage = l.stage;
        counts[l.stage] += 1;
        layers.push(ProjectionLayer::new(
            vec_in(&l.beta, d, "beta")?,
            s2f(&l.offset)?,
            s2f(&l.g)?,
            vec_in(&l.tangent, d, "tangent")?,
        )?);
    }
    let mut start = 0;
    let stages = radii
        .iter()
        .zip(&deltas)
        .zip(&counts)
        .enumerate()
        .map(|(k, ((&r, &delta), &m))| {
            let s = StageInfo {
                k,
                r,
                delta,
                eps: (delta * r / 2.0).sqrt(),
                layers: start..start + m,
            };
            start += m;
            s
        })
        .collect();
    let head = FinalAffine {
        w: vec_in(&file.head.w, d, "final.w")?,
        w0: s2f(&file.head.w0)?,
    };
    ModifiedNetwork::new(d, layers, stages, head, meta)
}

pub fn relu_to_json(net: &ReluNetwork) -> String {
    let layers = net
        .layers
        .iter()
        .map(|l| ReluLayerFile {
            w: l.w.row_iter()
                .map(|row| row.iter().map(|&v| f2s(v)).collect())
                .collect(),
            bias: vec_out(&l.bias),
        })
        .collect();
    let file = WeightFile {
        version: FORMAT_VERSION,
        form: Form::Relu,
        d: net.d,
        width: net.width(),
        layers,
        head: ReluFinal {
            w: vec_out(&net.final_w),
            b: f2s(net.final_b),
        },
        meta: meta_out(
            &net.meta,
            &net.stage_radii,
            &net.stage_deltas,
            &net.cond_diag(),
            Some((net.rho, net.margin)),
        ),
    };
    serde_json::to_string_pretty(&file).expect("weight file serializes")
}

pub fn relu_from_json(json: &str) -> Result<ReluNetwork> {
    let h: Header = serde_json::from_str(json)?;
    check_version(h.version)?;
    if h.form != Form::Relu {
        return Err(Error::Malformed(format!(
            "expected form relu, found {:?}",
            h.form
        )));
    }
    let file: WeightFile<ReluLayerFile, ReluFinal> = serde_json::from_str(json)?;
    check_shape(file.version, file.form, Form::Relu, file.d, file.width)?;
    let n = file.width;
    let (meta, radii, deltas) = meta_in(&file.meta)?;
    let cond = vec_in(&file.meta.cond_diag, file.layers.len(), "cond_diag")?;
    let mut layers = Vec::with_capacity(file.layers.len());
    for (i, l) in file.layers.iter().enumerate() {
        if l.w.len() != n {
            return Err(Error::Malformed(format!(
                "layer {i}: W has {} rows, expected {n}",
                l.w.len()
            )));
        }
        let mut flat = Vec::with_capacity(n * n);
        for row in &l.w {
            flat.extend(vec_in(row, n, "W row")?);
        }
        layers.push(ReluLayerParams {
            w: DMatrix::from_row_slice(n, n, &flat),
            bias: vec_in(&l.bias, n, "bias")?,
            cond: cond[i],
        });
    }
    let rho_of = |v: &Option<String>, name: &str| -> Result<f64> {
        v.as_deref()
            .ok_or_else(|| Error::Malformed(format!("meta.{name} missing")))
            .and_then(s2f)
    };
    Ok(ReluNetwork {
        d: file.d,
        layers,
        final_w: vec_in(&file.head.w, n, "final.w")?,
        final_b: s2f(&file.head.b)?,
        meta,
        stage_radii: radii,
        stage_deltas: deltas,
        rho: rho_of(&file.meta.rho, "rho")?,
        margin: rho_of(&file.meta.margin, "margin")?,
    })
}
