//! Input schemas. Distributions are `{"p": [...]}`, measures
//! `{"w": [...], "normalized": bool}` (a distribution is accepted too),
//! channels `{"rows": [[...]]}` or a deterministic map
//! `{"map": [...], "n_out": k}`, matrices nested row-major arrays, and
//! `null` exponents mean infinity.

use blduality_core::forward::ForwardProblem;
use blduality_core::gaussian::{GaussianBlProblem, GaussianChannel, GaussianProblem, GaussianReference};
use blduality_core::reverse::ReverseProblem;
use blduality_core::{Channel, Dist, Measure};
use nalgebra::{DMatrix, DVector};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::Value;

use crate::error::CliError;
use crate::report::SCHEMA;

/// Strips an optional `"schema"` tag (which must match) and decodes the rest.
pub fn decode<T: DeserializeOwned>(input: &Value) -> Result<T, CliError> {
    let mut v = input.clone();
    if let Value::Object(map) = &mut v {
        if let Some(tag) = map.remove("schema") {
            if tag != Value::String(SCHEMA.into()) {
                return Err(CliError::Schema(format!("unsupported schema tag {tag}")));
            }
        }
    }
    Ok(serde_json::from_value(v)?)
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistJson {
    pub p: Vec<f64>,
}

impl DistJson {
    pub fn build(&self) -> Result<Dist, CliError> {
        Ok(Dist::new(self.p.clone())?)
    }
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightsJson {
    pub w: Vec<f64>,
    #[serde(default = "yes")]
    pub normalized: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum MeasureJson {
    Weights(WeightsJson),
    Dist(DistJson),
}

impl MeasureJson {
    pub fn build(&self) -> Result<Measure, CliError> {
        Ok(match self {
            MeasureJson::Weights(w) => Measure::new(w.w.clone(), w.normalized)?,
            MeasureJson::Dist(d) => Measure::from(d.build()?),
        })
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RowsJson {
    pub rows: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapJson {
    pub map: Vec<usize>,
    pub n_out: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum ChannelJson {
    Rows(RowsJson),
    Map(MapJson),
}

impl ChannelJson {
    pub fn build(&self) -> Result<Channel, CliError> {
        Ok(match self {
            ChannelJson::Rows(r) => Channel::new(r.rows.clone())?,
            ChannelJson::Map(m) => Channel::from_map(&m.map, m.n_out)?,
        })
    }
}

fn dists(ds: &[DistJson]) -> Result<Vec<Dist>, CliError> {
    ds.iter().map(DistJson::build).collect()
}

pub fn matrix(rows: &[Vec<f64>]) -> Result<DMatrix<f64>, CliError> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if n == 0 || m == 0 || rows.iter().any(|r| r.len() != m) {
        return Err(CliError::Schema("matrices must be non-empty and rectangular".into()));
    }
    Ok(DMatrix::from_fn(n, m, |i, j| rows[i][j]))
}

fn exponent(p: Option<f64>) -> f64 {
    p.unwrap_or(f64::INFINITY)
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForwardJson {
    pub q_x: DistJson,
    pub channels: Vec<ChannelJson>,
    pub refs: Vec<MeasureJson>,
    pub c: Vec<f64>,
}

impl ForwardJson {
    pub fn build(&self) -> Result<ForwardProblem, CliError> {
        let channels = self.channels.iter().map(ChannelJson::build).collect::<Result<_, _>>()?;
        let refs = self.refs.iter().map(MeasureJson::build).collect::<Result<_, _>>()?;
        Ok(ForwardProblem::new(self.q_x.build()?, channels, refs, self.c.clone())?)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SdpiJson {
    pub q_x: DistJson,
    pub channel: ChannelJson,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HcJson {
    pub joint: DistJson,
    pub shape: [usize; 2],
    pub p1: Option<f64>,
    pub p2: Option<f64>,
}

impl HcJson {
    pub fn exponents(&self) -> (f64, f64) {
        (exponent(self.p1), exponent(self.p2))
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RenyiJson {
    pub q: DistJson,
    pub r: DistJson,
    pub alpha: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShearerJson {
    pub joint: DistJson,
    pub m: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoomisWhitneyJson {
    pub functions: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReverseJson {
    pub mac: ChannelJson,
    pub marginals: Vec<DistJson>,
    pub r_y: MeasureJson,
    pub c: Vec<f64>,
}

impl ReverseJson {
    pub fn build(&self) -> Result<ReverseProblem, CliError> {
        Ok(ReverseProblem::new(self.mac.build()?, dists(&self.marginals)?, self.r_y.build()?, self.c.clone())?)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingJson {
    pub mac: ChannelJson,
    pub marginals: Vec<DistJson>,
    pub r_y: MeasureJson,
}

impl CouplingJson {
    pub fn build(&self) -> Result<(Vec<Dist>, Channel, Measure), CliError> {
        Ok((dists(&self.marginals)?, self.mac.build()?, self.r_y.build()?))
    }
}

/// A reverse problem plus a candidate pair `(F, f_1..f_m)` and optionally
/// the constant `d` to test.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReverseVerifyJson {
    pub mac: ChannelJson,
    pub marginals: Vec<DistJson>,
    pub r_y: MeasureJson,
    pub c: Vec<f64>,
    #[serde(rename = "F")]
    pub big_f: Vec<f64>,
    #[serde(rename = "f")]
    pub fs: Vec<Vec<f64>>,
    pub d: Option<f64>,
}

impl ReverseVerifyJson {
    pub fn build(&self) -> Result<ReverseProblem, CliError> {
        Ok(ReverseProblem::new(self.mac.build()?, dists(&self.marginals)?, self.r_y.build()?, self.c.clone())?)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianChannelJson {
    pub a: Vec<Vec<f64>>,
    pub b: Option<Vec<f64>>,
    pub noise: Vec<Vec<f64>>,
}

impl GaussianChannelJson {
    pub fn build(&self) -> Result<GaussianChannel, CliError> {
        let a = matrix(&self.a)?;
        let noise = matrix(&self.noise)?;
        Ok(match &self.b {
            Some(b) => GaussianChannel::new(a, DVector::from_column_slice(b), noise)?,
            None => GaussianChannel::linear(a, noise)?,
        })
    }
}

fn channels(chs: &[GaussianChannelJson]) -> Result<Vec<GaussianChannel>, CliError> {
    chs.iter().map(GaussianChannelJson::build).collect()
}

fn optional_matrix(m: &Option<Vec<Vec<f64>>>) -> Result<Option<DMatrix<f64>>, CliError> {
    m.as_deref().map(matrix).transpose()
}

/// `sigma_cap` bounds the input covariance: `K <= sigma_cap`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianF0Json {
    pub channels: Vec<GaussianChannelJson>,
    pub c: Vec<f64>,
    #[serde(default)]
    pub c0: f64,
    pub m: Option<Vec<Vec<f64>>>,
    pub sigma_cap: Option<Vec<Vec<f64>>>,
}

impl GaussianF0Json {
    pub fn build(&self) -> Result<GaussianProblem, CliError> {
        let chs = channels(&self.channels)?;
        let n = chs
            .first()
            .map(GaussianChannel::input_dim)
            .or_else(|| self.m.as_ref().map(Vec::len))
            .ok_or_else(|| CliError::Schema("need at least one channel or an explicit m".into()))?;
        let m = optional_matrix(&self.m)?.unwrap_or_else(|| DMatrix::zeros(n, n));
        Ok(GaussianProblem::new(chs, self.c.clone(), self.c0, m, optional_matrix(&self.sigma_cap)?)?)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianRefJson {
    pub mean: Vec<f64>,
    pub cov: Vec<Vec<f64>>,
}

impl GaussianRefJson {
    pub fn build(&self) -> Result<GaussianReference, CliError> {
        Ok(GaussianReference::new(DVector::from_column_slice(&self.mean), matrix(&self.cov)?)?)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianBlJson {
    pub input: GaussianRefJson,
    pub channels: Vec<GaussianChannelJson>,
    pub c: Vec<f64>,
    pub refs: Vec<GaussianRefJson>,
    pub sigma_cap: Option<Vec<Vec<f64>>>,
}

impl GaussianBlJson {
    pub fn build(&self) -> Result<GaussianBlProblem, CliError> {
        let refs = self.refs.iter().map(GaussianRefJson::build).collect::<Result<_, _>>()?;
        Ok(GaussianBlProblem::new(
            self.input.build()?,
            channels(&self.channels)?,
            self.c.clone(),
            refs,
            optional_matrix(&self.sigma_cap)?,
        )?)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NelsonJson {
    pub sigma: Vec<Vec<f64>>,
    pub p: Vec<Option<f64>>,
}

impl NelsonJson {
    pub fn exponents(&self) -> Vec<f64> {
        self.p.iter().map(|&p| exponent(p)).collect()
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WynerJson {
    pub sigma: Vec<Vec<f64>>,
}
