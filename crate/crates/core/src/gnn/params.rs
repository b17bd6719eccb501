//! Model configuration, parameter layout, and weight initialization.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::PortableRng;

/// Node input width: kind one-hot (3), radius, boundary pressure, previous pressure.
pub const NODE_INPUTS: usize = 6;
/// Edge input width: length, mean diameter, axis (3), previous flow.
pub const EDGE_INPUTS: usize = 6;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub hidden: usize,
    /// Message-passing layers per pass.
    pub layers: usize,
    /// Refinement passes; each pass after the first sees the previous prediction.
    pub passes: usize,
    /// Hidden layers inside every MLP.
    pub mlp_hidden_layers: usize,
    pub layer_norm: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden: 64,
            layers: 10,
            passes: 2,
            mlp_hidden_layers: 2,
            layer_norm: true,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.passes == 0 {
            return Err(Error::InvalidParameter(
                "hidden width and passes must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Tensor slots of one MLP: linear layers as (weight, bias), then optional norm (gain, bias).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MlpSlots {
    pub linear: Vec<(usize, usize)>,
    pub norm: Option<(usize, usize)>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Layout {
    pub node_encoder: MlpSlots,
    pub edge_encoder: MlpSlots,
    /// (edge update, node update) per processor layer.
    pub processor: Vec<(MlpSlots, MlpSlots)>,
    pub node_decoder: MlpSlots,
    pub edge_decoder: MlpSlots,
}

struct Builder {
    names: Vec<String>,
    shapes: Vec<(usize, usize)>,
}

impl Builder {
    fn slot(&mut self, name: String, shape: (usize, usize)) -> usize {
        self.names.push(name);
        self.shapes.push(shape);
        self.names.len() - 1
    }

    fn mlp(
        &mut self,
        name: &str,
        cfg: &ModelConfig,
        input: usize,
        output: usize,
        norm: bool,
    ) -> MlpSlots {
        let mut widths = vec![input];
        widths.extend(std::iter::repeat_n(cfg.hidden, cfg.mlp_hidden_layers));
        widths.push(output);
        let linear = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                (
                    self.slot(format!("{name}.linear{i}.weight"), (w[0], w[1])),
                    self.slot(format!("{name}.linear{i}.bias"), (1, w[1])),
                )
            })
            .collect();
        let norm = norm.then(|| {
            (
                self.slot(format!("{name}.norm.gain"), (1, output)),
                self.slot(format!("{name}.norm.bias"), (1, output)),
            )
        });
        MlpSlots { linear, norm }
    }
}

fn build_layout(cfg: &ModelConfig) -> (Layout, Vec<String>, Vec<(usize, usize)>) {
    let mut b = Builder {
        names: Vec::new(),
        shapes: Vec::new(),
    };
    let h = cfg.hidden;
    let ln = cfg.layer_norm;
    let node_encoder = b.mlp("node_encoder", cfg, NODE_INPUTS, h, ln);
    let edge_encoder = b.mlp("edge_encoder", cfg, EDGE_INPUTS, h, ln);
    let processor = (0..cfg.layers)
        .map(|l| {
            (
                b.mlp(&format!("processor{l}.edge"), cfg, 3 * h, h, ln),
                b.mlp(&format!("processor{l}.node"), cfg, 3 * h, h, ln),
            )
        })
        .collect();
    let node_decoder = b.mlp("node_decoder", cfg, h, 1, false);
    let edge_decoder = b.mlp("edge_decoder", cfg, h, 1, false);
    let layout = Layout {
        node_encoder,
        edge_encoder,
        processor,
        node_decoder,
        edge_decoder,
    };
    (layout, b.names, b.shapes)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub layout: Layout,
    pub names: Vec<String>,
    pub tensors: Vec<Array2<f64>>,
}

impl ModelParams {
    /// Weights uniform with variance `1 / fan_in`; biases zero; norm gains one.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let (layout, names, shapes) = build_layout(config);
        let mut rng = PortableRng::new(seed);
        let tensors = names
            .iter()
            .zip(&shapes)
            .map(|(name, &(r, c))| {
                if name.ends_with(".weight") {
                    let bound = (3.0 / r as f64).sqrt();
                    Array2::from_shape_fn((r, c), |_| rng.uniform(-bound, bound))
                } else if name.ends_with(".gain") {
                    Array2::ones((r, c))
                } else {
                    Array2::zeros((r, c))
                }
            })
            .collect();
        Ok(Self {
            config: config.clone(),
            layout,
            names,
            tensors,
        })
    }

    pub fn count(&self) -> usize {
        self.tensors.iter().map(|t| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    pub fn zeros_like(&self) -> Vec<Array2<f64>> {
        self.tensors
            .iter()
            .map(|t| Array2::zeros(t.dim()))
            .collect()
    }
}

#[derive(Serialize, Deserialize)]
struct TensorRecord {
    name: String,
    shape: [usize; 2],
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ParamsRecord {
    config: ModelConfig,
    tensors: Vec<TensorRecord>,
}

impl Serialize for ModelParams {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        ParamsRecord {
            config: self.config.clone(),
            tensors: self
                .names
                .iter()
                .zip(&self.tensors)
                .map(|(name, t)| TensorRecord {
                    name: name.clone(),
                    shape: [t.nrows(), t.ncols()],
                    data: t.iter().copied().collect(),
                })
                .collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for ModelParams {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let rec = ParamsRecord::deserialize(d)?;
        let (layout, names, shapes) = build_layout(&rec.config);
        if rec.tensors.len() != names.len() {
            return Err(D::Error::custom(format!(
                "expected {} tensors, found {}",
                names.len(),
                rec.tensors.len()
            )));
        }
        let mut tensors = Vec::with_capacity(names.len());
        for ((t, name), &(r, c)) in rec.tensors.into_iter().zip(&names).zip(&shapes) {
            if &t.name != name || t.shape != [r, c] {
                return Err(D::Error::custom(format!(
                    "tensor {} does not match layout slot {name}",
                    t.name
                )));
            }
            tensors.push(Array2::from_shape_vec((r, c), t.data).map_err(D::Error::custom)?);
        }
        Ok(Self {
            config: rec.config,
            layout,
            names,
            tensors,
        })
    }
}
