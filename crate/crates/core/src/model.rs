//! Network and property representation.
//!
//! A [`Network`] is a chain of dense affine layers with an implicit ReLU
//! between consecutive layers and none after the last one. A
//! [`PropertySpec`] asks whether `c·f(x) + d ≥ 0` for every `x` in an input
//! box; [`merge_property`] folds `c` and `d` into the last layer so the rest
//! of the verifier only ever sees scalar-output networks.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One dense layer `h = W·x + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineLayer {
    /// Rows are output neurons, columns are input neurons.
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl AffineLayer {
    pub fn new(weight: Array2<f64>, bias: Array1<f64>) -> Result<Self> {
        if bias.len() != weight.nrows() {
            return Err(Error::Dimension {
                what: "bias",
                expected: weight.nrows(),
                actual: bias.len(),
            });
        }
        if weight.iter().chain(bias.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidNetwork("non-finite weight or bias".into()));
        }
        Ok(Self { weight, bias })
    }

    /// Layer without bias.
    pub fn linear(weight: Array2<f64>) -> Result<Self> {
        let bias = Array1::zeros(weight.nrows());
        Self::new(weight, bias)
    }

    pub fn in_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.nrows()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.weight
            .outer_iter()
            .zip(self.bias.iter())
            .map(|(row, b)| row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b)
            .collect()
    }
}

/// Feedforward ReLU network. Immutable once constructed.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    layers: Vec<AffineLayer>,
}

impl Network {
    pub fn new(layers: Vec<AffineLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidNetwork("network has no layers".into()));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[1].in_dim() != pair[0].out_dim() {
                return Err(Error::LayerDimension {
                    layer: i + 1,
                    expected: pair[0].out_dim(),
                    actual: pair[1].in_dim(),
                });
            }
        }
        if layers.iter().any(|l| l.in_dim() == 0 || l.out_dim() == 0) {
            return Err(Error::InvalidNetwork("zero-width layer".into()));
        }
        Ok(Self { layers })
    }

    /// Builds a network from nested row vectors, mostly for tests and fixtures.
    pub fn from_rows(layers: &[(Vec<Vec<f64>>, Option<Vec<f64>>)]) -> Result<Self> {
        let built = layers
            .iter()
            .enumerate()
            .map(|(i, (w, b))| {
                let weight = rows_to_array(w).ok_or_else(|| {
                    Error::InvalidNetwork(format!("layer {i}: ragged weight matrix"))
                })?;
                let bias = match b {
                    Some(b) => Array1::from(b.clone()),
                    None => Array1::zeros(weight.nrows()),
                };
                AffineLayer::new(weight, bias)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(built)
    }

    pub fn layers(&self) -> &[AffineLayer] {
        &self.layers
    }

    pub fn layer(&self, i: usize) -> &AffineLayer {
        &self.layers[i]
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    /// Number of ReLU layers.
    pub fn num_hidden(&self) -> usize {
        self.layers.len() - 1
    }

    /// Width of hidden layer `i` (the output of affine layer `i`).
    pub fn hidden_dim(&self, i: usize) -> usize {
        self.layers[i].out_dim()
    }

    pub fn total_hidden(&self) -> usize {
        (0..self.num_hidden()).map(|i| self.hidden_dim(i)).sum()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    /// Exact forward pass.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::LayerDimension {
                layer: 0,
                expected: self.input_dim(),
                actual: x.len(),
            });
        }
        let mut act = x.to_vec();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            act = layer.apply(&act);
            if i < last {
                act.iter_mut().for_each(|v| *v = v.max(0.0));
            }
        }
        Ok(act)
    }

    /// Forward pass that also returns every pre-activation vector.
    pub fn pre_activations(&self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        if x.len() != self.input_dim() {
            return Err(Error::LayerDimension {
                layer: 0,
                expected: self.input_dim(),
                actual: x.len(),
            });
        }
        let mut out = Vec::with_capacity(self.layers.len());
        let mut act = x.to_vec();
        for layer in &self.layers {
            let h = layer.apply(&act);
            act = h.iter().map(|v| v.max(0.0)).collect();
            out.push(h);
        }
        Ok(out)
    }

    /// Scalar output of a merged network.
    pub fn eval_scalar(&self, x: &[f64]) -> Result<f64> {
        Ok(self.forward(x)?[0])
    }

    pub fn to_json(&self) -> NetworkFile {
        NetworkFile {
            input_dim: self.input_dim(),
            layers: self
                .layers
                .iter()
                .map(|l| LayerFile {
                    weight: l
                        .weight
                        .outer_iter()
                        .map(|r| r.iter().map(|&v| Num::Value(v)).collect())
                        .collect(),
                    bias: Some(l.bias.iter().map(|&v| Num::Value(v)).collect()),
                })
                .collect(),
        }
    }
}

fn rows_to_array(rows: &[Vec<f64>]) -> Option<Array2<f64>> {
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return None;
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Array2::from_shape_vec((rows.len(), ncols), flat).ok()
}

pub fn forward(net: &Network, x: &[f64]) -> Result<Vec<f64>> {
    net.forward(x)
}

/// Axis-aligned input region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl InputBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::Dimension {
                what: "box upper",
                expected: lower.len(),
                actual: upper.len(),
            });
        }
        for (d, (l, u)) in lower.iter().zip(&upper).enumerate() {
            if !l.is_finite() || !u.is_finite() {
                return Err(Error::InvalidProperty(format!("non-finite box bound at {d}")));
            }
            if l > u {
                return Err(Error::InvalidProperty(format!(
                    "box lower {l} exceeds upper {u} at dimension {d}"
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    /// ℓ∞ ball of radius `epsilon` around `center`.
    pub fn linf_ball(center: &[f64], epsilon: f64) -> Result<Self> {
        if !(epsilon >= 0.0 && epsilon.is_finite()) {
            return Err(Error::InvalidProperty(format!("bad epsilon {epsilon}")));
        }
        Self::new(
            center.iter().map(|c| c - epsilon).collect(),
            center.iter().map(|c| c + epsilon).collect(),
        )
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (l, u))| *v >= *l && *v <= *u)
    }
}

/// `∀x ∈ input: spec_vector·f(x) + spec_offset ≥ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct PropertySpec {
    pub input: InputBox,
    pub spec_vector: Vec<f64>,
    pub spec_offset: f64,
}

impl PropertySpec {
    pub fn new(input: InputBox, spec_vector: Vec<f64>, spec_offset: f64) -> Result<Self> {
        if spec_vector.iter().all(|v| *v == 0.0) {
            return Err(Error::InvalidProperty("spec_vector is all zero".into()));
        }
        if spec_vector.iter().any(|v| !v.is_finite()) || !spec_offset.is_finite() {
            return Err(Error::InvalidProperty("non-finite spec".into()));
        }
        Ok(Self {
            input,
            spec_vector,
            spec_offset,
        })
    }

    /// Robustness margin `f_target(x) - f_other(x) ≥ 0`.
    pub fn margin(input: InputBox, outputs: usize, target: usize, other: usize) -> Result<Self> {
        let mut c = vec![0.0; outputs];
        c[target] += 1.0;
        c[other] -= 1.0;
        Self::new(input, c, 0.0)
    }

    pub fn check_against(&self, net: &Network) -> Result<()> {
        if self.input.dim() != net.input_dim() {
            return Err(Error::Dimension {
                what: "property input",
                expected: net.input_dim(),
                actual: self.input.dim(),
            });
        }
        if self.spec_vector.len() != net.output_dim() {
            return Err(Error::Dimension {
                what: "spec_vector",
                expected: net.output_dim(),
                actual: self.spec_vector.len(),
            });
        }
        Ok(())
    }

    pub fn to_json(&self) -> PropertyFile {
        PropertyFile {
            center: None,
            epsilon: None,
            lower: Some(self.input.lower.iter().map(|&v| Num::Value(v)).collect()),
            upper: Some(self.input.upper.iter().map(|&v| Num::Value(v)).collect()),
            spec_vector: self.spec_vector.iter().map(|&v| Num::Value(v)).collect(),
            spec_offset: Some(Num::Value(self.spec_offset)),
        }
    }
}

/// Returns `g` with `g(x) = c·f(x) + d` and a single output.
pub fn merge_property(net: &Network, prop: &PropertySpec) -> Result<Network> {
    prop.check_against(net)?;
    let last = net.layers.last().expect("non-empty network");
    let c = Array1::from(prop.spec_vector.clone());
    let row = c.dot(&last.weight);
    let bias = c.dot(&last.bias) + prop.spec_offset;
    let merged = AffineLayer::new(
        row.insert_axis(ndarray::Axis(0)),
        Array1::from(vec![bias]),
    )?;
    let mut layers = net.layers[..net.layers.len() - 1].to_vec();
    layers.push(merged);
    Network::new(layers)
}

// ---------------------------------------------------------------------------
// File formats

/// A JSON number, or one of the non-finite spellings some writers emit
/// (`NaN`, `Infinity`). Non-finite values are rejected during validation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Num {
    Value(f64),
    #[serde(skip_serializing)]
    Text(NonFinite),
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
pub enum NonFinite {
    NaN,
    Infinity,
    #[serde(rename = "-Infinity")]
    NegInfinity,
}

impl Num {
    fn value(self) -> f64 {
        match self {
            Num::Value(v) => v,
            Num::Text(NonFinite::NaN) => f64::NAN,
            Num::Text(NonFinite::Infinity) => f64::INFINITY,
            Num::Text(NonFinite::NegInfinity) => f64::NEG_INFINITY,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerFile {
    pub weight: Vec<Vec<Num>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bias: Option<Vec<Num>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkFile {
    pub input_dim: usize,
    pub layers: Vec<LayerFile>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PropertyFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center: Option<Vec<Num>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<Num>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lower: Option<Vec<Num>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upper: Option<Vec<Num>>,
    pub spec_vector: Vec<Num>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spec_offset: Option<Num>,
}

/// Quotes bare `NaN` / `Infinity` / `-Infinity` tokens outside of strings so
/// that they reach validation instead of failing as a syntax error.
fn quote_non_finite(text: &str) -> String {
    let mut out = String::with_capacity(text.len() + 16);
    let mut in_string = false;
    let mut escaped = false;
    let mut rest = text;
    while let Some(ch) = rest.chars().next() {
        if in_string {
            out.push(ch);
            if escaped {
                escaped = false;
            } else if ch == '\\' {
                escaped = true;
            } else if ch == '"' {
                in_string = false;
            }
            rest = &rest[ch.len_utf8()..];
            continue;
        }
        if ch == '"' {
            in_string = true;
            out.push(ch);
            rest = &rest[1..];
            continue;
        }
        let token = ["-Infinity", "Infinity", "NaN"]
            .into_iter()
            .find(|t| rest.starts_with(t));
        if let Some(t) = token {
            out.push('"');
            out.push_str(t);
            out.push('"');
            rest = &rest[t.len()..];
        } else {
            out.push(ch);
            rest = &rest[ch.len_utf8()..];
        }
    }
    out
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&quote_non_finite(&text)).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

fn finite_vec(path: &Path, location: &str, values: &[Num]) -> Result<Vec<f64>> {
    values
        .iter()
        .enumerate()
        .map(|(i, n)| {
            let v = n.value();
            if v.is_finite() {
                Ok(v)
            } else {
                Err(schema(path, format!("{location}[{i}]"), format!("non-finite value {v}")))
            }
        })
        .collect()
}

fn schema(path: &Path, location: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Schema {
        path: path.to_path_buf(),
        location: location.into(),
        message: message.into(),
    }
}

impl NetworkFile {
    pub fn into_network(self, path: &Path) -> Result<Network> {
        if self.layers.is_empty() {
            return Err(schema(path, "layers", "at least one layer is required"));
        }
        let mut expected_in = self.input_dim;
        if expected_in == 0 {
            return Err(schema(path, "input_dim", "must be positive"));
        }
        let mut layers = Vec::with_capacity(self.layers.len());
        for (i, lf) in self.layers.into_iter().enumerate() {
            let rows = lf
                .weight
                .iter()
                .enumerate()
                .map(|(r, row)| finite_vec(path, &format!("layers[{i}].weight[{r}]"), row))
                .collect::<Result<Vec<_>>>()?;
            if rows.is_empty() {
                return Err(schema(path, format!("layers[{i}].weight"), "no rows"));
            }
            let weight = rows_to_array(&rows)
                .ok_or_else(|| schema(path, format!("layers[{i}].weight"), "ragged rows"))?;
            if weight.ncols() != expected_in {
                return Err(schema(
                    path,
                    format!("layers[{i}].weight"),
                    format!("expected {expected_in} columns, found {}", weight.ncols()),
                ));
            }
            let bias = match lf.bias {
                Some(b) => {
                    let b = finite_vec(path, &format!("layers[{i}].bias"), &b)?;
                    if b.len() != weight.nrows() {
                        return Err(schema(
                            path,
                            format!("layers[{i}].bias"),
                            format!("expected {} entries, found {}", weight.nrows(), b.len()),
                        ));
                    }
                    Array1::from(b)
                }
                None => Array1::zeros(weight.nrows()),
            };
            expected_in = weight.nrows();
            layers.push(AffineLayer { weight, bias });
        }
        Network::new(layers)
    }
}

impl PropertyFile {
    pub fn into_property(self, path: &Path) -> Result<PropertySpec> {
        let input = match (self.center, self.epsilon, self.lower, self.upper) {
            (Some(c), Some(e), None, None) => {
                let center = finite_vec(path, "center", &c)?;
                let eps = e.value();
                if !eps.is_finite() || eps < 0.0 {
                    return Err(schema(path, "epsilon", "must be finite and nonnegative"));
                }
                InputBox::linf_ball(&center, eps)
            }
            (None, None, Some(l), Some(u)) => {
                let lower = finite_vec(path, "lower", &l)?;
                let upper = finite_vec(path, "upper", &u)?;
                InputBox::new(lower, upper)
            }
            _ => {
                return Err(schema(
                    path,
                    "$",
                    "expected either center+epsilon or lower+upper",
                ))
            }
        }
        .map_err(|e| schema(path, "input region", e.to_string()))?;
        let spec_vector = finite_vec(path, "spec_vector", &self.spec_vector)?;
        let spec_offset = match self.spec_offset {
            Some(n) => finite_vec(path, "spec_offset", &[n])?[0],
            None => 0.0,
        };
        PropertySpec::new(input, spec_vector, spec_offset)
            .map_err(|e| schema(path, "spec_vector", e.to_string()))
    }
}

pub fn load_network(path: impl AsRef<Path>) -> Result<Network> {
    let path = path.as_ref();
    read_json::<NetworkFile>(path)?.into_network(path)
}

pub fn load_property(path: impl AsRef<Path>) -> Result<PropertySpec> {
    let path = path.as_ref();
    read_json::<PropertyFile>(path)?.into_property(path)
}

/// Loads a property and checks it against `net`.
pub fn load_property_for(path: impl AsRef<Path>, net: &Network) -> Result<PropertySpec> {
    let path = path.as_ref();
    let prop = load_property(path)?;
    prop.check_against(net).map_err(|e| Error::Schema {
        path: PathBuf::from(path),
        location: "$".into(),
        message: e.to_string(),
    })?;
    Ok(prop)
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(value).expect("serializable value");
    fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}
