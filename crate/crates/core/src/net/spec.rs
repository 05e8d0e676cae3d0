//! Declarative layer lists, shape inference, and the two reference
//! architectures.

use serde::{Deserialize, Serialize};

use crate::error::{arg_err, shape_err, Error, Result};
use crate::ops::{BatchNormParams, ConvParams, LrnParams, PoolParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv(ConvParams),
    MaxPool(PoolParams),
    AvgPool(PoolParams),
    Relu,
    Sigmoid,
    Lrn(LrnParams),
    BatchNorm(BatchNormParams),
    Dropout { rate: f64 },
    Flatten,
    Dense { units: usize },
    SoftmaxOutput,
}

/// Layer kinds, used for reporting and structural assertions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LayerKind {
    Conv,
    MaxPool,
    AvgPool,
    Relu,
    Sigmoid,
    Lrn,
    BatchNorm,
    Dropout,
    Flatten,
    Dense,
    SoftmaxOutput,
}

impl LayerKind {
    pub const ALL: [LayerKind; 11] = [
        LayerKind::Conv,
        LayerKind::MaxPool,
        LayerKind::AvgPool,
        LayerKind::Relu,
        LayerKind::Sigmoid,
        LayerKind::Lrn,
        LayerKind::BatchNorm,
        LayerKind::Dropout,
        LayerKind::Flatten,
        LayerKind::Dense,
        LayerKind::SoftmaxOutput,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LayerKind::Conv => "conv",
            LayerKind::MaxPool => "max_pool",
            LayerKind::AvgPool => "avg_pool",
            LayerKind::Relu => "relu",
            LayerKind::Sigmoid => "sigmoid",
            LayerKind::Lrn => "lrn",
            LayerKind::BatchNorm => "batch_norm",
            LayerKind::Dropout => "dropout",
            LayerKind::Flatten => "flatten",
            LayerKind::Dense => "dense",
            LayerKind::SoftmaxOutput => "softmax_output",
        }
    }
}

impl LayerSpec {
    pub fn kind(&self) -> LayerKind {
        match self {
            LayerSpec::Conv(_) => LayerKind::Conv,
            LayerSpec::MaxPool(_) => LayerKind::MaxPool,
            LayerSpec::AvgPool(_) => LayerKind::AvgPool,
            LayerSpec::Relu => LayerKind::Relu,
            LayerSpec::Sigmoid => LayerKind::Sigmoid,
            LayerSpec::Lrn(_) => LayerKind::Lrn,
            LayerSpec::BatchNorm(_) => LayerKind::BatchNorm,
            LayerSpec::Dropout { .. } => LayerKind::Dropout,
            LayerSpec::Flatten => LayerKind::Flatten,
            LayerSpec::Dense { .. } => LayerKind::Dense,
            LayerSpec::SoftmaxOutput => LayerKind::SoftmaxOutput,
        }
    }

    /// Output shape (without the batch axis) for an input of shape `input`.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let map = |what: &str| -> Result<[usize; 3]> {
            match *input {
                [c, h, w] => Ok([c, h, w]),
                _ => shape_err(format!("{what} needs a [C,H,W] feature map, got {input:?}")),
            }
        };
        match self {
            LayerSpec::Conv(p) => {
                let [_, h, w] = map("conv")?;
                let (ho, wo) = p.output_hw(h, w)?;
                Ok(vec![p.out_channels, ho, wo])
            }
            LayerSpec::MaxPool(p) | LayerSpec::AvgPool(p) => {
                let [c, h, w] = map("pooling")?;
                let (ho, wo) = p.output_hw(h, w)?;
                Ok(vec![c, ho, wo])
            }
            LayerSpec::Lrn(p) => {
                p.validate()?;
                map("LRN")?;
                Ok(input.to_vec())
            }
            LayerSpec::BatchNorm(p) => {
                if !(p.eps > 0.0) || !(0.0..=1.0).contains(&p.momentum) {
                    return arg_err("batch norm needs eps > 0 and momentum in [0, 1]");
                }
                if input.len() != 3 && input.len() != 1 {
                    return shape_err(format!("batch norm input {input:?} is neither a map nor a vector"));
                }
                Ok(input.to_vec())
            }
            LayerSpec::Dropout { rate } => {
                if !(0.0..1.0).contains(rate) {
                    return arg_err(format!("dropout rate must lie in [0, 1), got {rate}"));
                }
                Ok(input.to_vec())
            }
            LayerSpec::Relu | LayerSpec::Sigmoid => Ok(input.to_vec()),
            LayerSpec::Flatten => Ok(vec![input.iter().product()]),
            LayerSpec::Dense { units } => {
                if input.len() != 1 {
                    return shape_err(format!("dense layer needs a flat input, got {input:?}; add a Flatten"));
                }
                if *units == 0 {
                    return arg_err("dense layer needs at least one unit");
                }
                Ok(vec![*units])
            }
            LayerSpec::SoftmaxOutput => {
                if input.len() != 1 {
                    return shape_err(format!("softmax output needs a flat input, got {input:?}"));
                }
                Ok(input.to_vec())
            }
        }
    }

    /// Shapes of this layer's trainable tensors given its input shape.
    pub fn param_shapes(&self, input: &[usize]) -> Vec<Vec<usize>> {
        match self {
            LayerSpec::Conv(p) => vec![
                vec![p.out_channels, input[0], p.kernel_h, p.kernel_w],
                vec![p.out_channels],
            ],
            LayerSpec::Dense { units } => vec![vec![input[0], *units], vec![*units]],
            LayerSpec::BatchNorm(_) => vec![vec![input[0]], vec![input[0]]],
            _ => Vec::new(),
        }
    }

    pub fn param_names(&self) -> &'static [&'static str] {
        match self {
            LayerSpec::Conv(_) | LayerSpec::Dense { .. } => &["weight", "bias"],
            LayerSpec::BatchNorm(_) => &["gamma", "beta"],
            _ => &[],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub name: String,
    /// `(C, H, W)` of one input sample.
    pub input_shape: [usize; 3],
    pub layers: Vec<LayerSpec>,
    pub num_classes: usize,
}

impl NetworkSpec {
    /// Per-layer output shapes (batch axis omitted). Fails if the chain does
    /// not compose or the head is not a `num_classes`-wide softmax.
    pub fn shapes(&self) -> Result<Vec<Vec<usize>>> {
        if self.input_shape.contains(&0) {
            return shape_err(format!("input shape {:?} has an empty axis", self.input_shape));
        }
        let mut cur = self.input_shape.to_vec();
        let mut out = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            cur = layer.output_shape(&cur).map_err(|e| match e {
                Error::Shape(m) => Error::Shape(format!("layer {i} ({}): {m}", layer.kind().name())),
                Error::InvalidArgument(m) => {
                    Error::InvalidArgument(format!("layer {i} ({}): {m}", layer.kind().name()))
                }
                other => other,
            })?;
            out.push(cur.clone());
        }
        match self.layers.last() {
            Some(LayerSpec::SoftmaxOutput) => {}
            _ => return shape_err(format!("network `{}` must end with a softmax output", self.name)),
        }
        if self.layers[..self.layers.len() - 1].contains(&LayerSpec::SoftmaxOutput) {
            return shape_err("softmax output may only appear as the final layer");
        }
        if cur != [self.num_classes] {
            return shape_err(format!(
                "softmax output is {cur:?} wide but the network declares {} classes",
                self.num_classes
            ));
        }
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        self.shapes().map(|_| ())
    }

    /// Input shape of every layer (the previous layer's output).
    pub fn input_shapes(&self) -> Result<Vec<Vec<usize>>> {
        let outs = self.shapes()?;
        let mut ins = Vec::with_capacity(outs.len());
        ins.push(self.input_shape.to_vec());
        ins.extend(outs.into_iter().take(self.layers.len() - 1));
        Ok(ins)
    }

    pub fn param_shapes(&self) -> Result<Vec<Vec<Vec<usize>>>> {
        Ok(self
            .layers
            .iter()
            .zip(self.input_shapes()?)
            .map(|(l, s)| l.param_shapes(&s))
            .collect())
    }

    pub fn param_count(&self) -> Result<usize> {
        Ok(self
            .param_shapes()?
            .iter()
            .flatten()
            .map(|s| s.iter().product::<usize>())
            .sum())
    }

    pub fn count(&self, kind: LayerKind) -> usize {
        self.layers.iter().filter(|l| l.kind() == kind).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoolKind {
    #[default]
    Max,
    Avg,
}

pub const TRANET_MIN_INPUT: usize = 18;

/// The 6-layer comparison network: three 3×3 convolutions (8, 16, 32
/// filters, stride 1, no padding) each followed by ReLU and batch norm,
/// 2×2/2 pooling between them, and a dense softmax head.
pub fn build_tranet(input_shape: [usize; 3], num_classes: usize) -> Result<NetworkSpec> {
    build_tranet_with(input_shape, num_classes, PoolKind::Max)
}

pub fn build_tranet_with(
    input_shape: [usize; 3],
    num_classes: usize,
    pooling: PoolKind,
) -> Result<NetworkSpec> {
    let [_, h, w] = input_shape;
    if h < TRANET_MIN_INPUT || w < TRANET_MIN_INPUT {
        return shape_err(format!(
            "TraNet needs inputs of at least {TRANET_MIN_INPUT}×{TRANET_MIN_INPUT}, got {h}×{w}"
        ));
    }
    if num_classes == 0 {
        return arg_err("num_classes must be at least 1");
    }
    let pool = || match pooling {
        PoolKind::Max => LayerSpec::MaxPool(PoolParams::square(2, 2)),
        PoolKind::Avg => LayerSpec::AvgPool(PoolParams::square(2, 2)),
    };
    let conv_block = |c| {
        [
            LayerSpec::Conv(ConvParams::square(c, 3, 1, 0)),
            LayerSpec::Relu,
            LayerSpec::BatchNorm(BatchNormParams::default()),
        ]
    };
    let mut layers = Vec::new();
    layers.extend(conv_block(8));
    layers.push(pool());
    layers.extend(conv_block(16));
    layers.push(pool());
    layers.extend(conv_block(32));
    layers.extend([
        LayerSpec::Flatten,
        LayerSpec::Dense { units: num_classes },
        LayerSpec::SoftmaxOutput,
    ]);
    let spec = NetworkSpec {
        name: "tranet".into(),
        input_shape,
        layers,
        num_classes,
    };
    spec.validate()?;
    Ok(spec)
}

pub const ALEXNET_MIN_INPUT: usize = 67;

/// Five convolutions and three dense layers with ReLU, LRN after the first
/// two convolutions, 3×3/2 max-pooling after convolutions 1, 2 and 5, and
/// dropout 0.5 on the two hidden dense layers. Channel and dense widths are
/// multiplied by `width_scale` and rounded up.
pub fn build_alexnet(
    num_classes: usize,
    input_shape: [usize; 3],
    width_scale: f64,
) -> Result<NetworkSpec> {
    if !(width_scale > 0.0 && width_scale <= 1.0) {
        return arg_err(format!("width_scale must lie in (0, 1], got {width_scale}"));
    }
    if num_classes == 0 {
        return arg_err("num_classes must be at least 1");
    }
    let s = |c: usize| ((c as f64 * width_scale).ceil() as usize).max(1);
    let lrn = || LayerSpec::Lrn(LrnParams::default());
    let pool = || LayerSpec::MaxPool(PoolParams::square(3, 2));
    let layers = vec![
        LayerSpec::Conv(ConvParams::square(s(96), 11, 4, 0)),
        LayerSpec::Relu,
        lrn(),
        pool(),
        LayerSpec::Conv(ConvParams::square(s(256), 5, 1, 2)),
        LayerSpec::Relu,
        lrn(),
        pool(),
        LayerSpec::Conv(ConvParams::square(s(384), 3, 1, 1)),
        LayerSpec::Relu,
        LayerSpec::Conv(ConvParams::square(s(384), 3, 1, 1)),
        LayerSpec::Relu,
        LayerSpec::Conv(ConvParams::square(s(256), 3, 1, 1)),
        LayerSpec::Relu,
        pool(),
        LayerSpec::Flatten,
        LayerSpec::Dense { units: s(4096) },
        LayerSpec::Relu,
        LayerSpec::Dropout { rate: 0.5 },
        LayerSpec::Dense { units: s(4096) },
        LayerSpec::Relu,
        LayerSpec::Dropout { rate: 0.5 },
        LayerSpec::Dense { units: num_classes },
        LayerSpec::SoftmaxOutput,
    ];
    let name = if width_scale == 1.0 {
        "alexnet".to_string()
    } else {
        format!("alexnet-x{width_scale}")
    };
    let spec = NetworkSpec {
        name,
        input_shape,
        layers,
        num_classes,
    };
    spec.validate().map_err(|e| match e {
        Error::Shape(m) => Error::Shape(format!(
            "input {}×{} is incompatible with the 11×11 stride-4 stem \
             (at least {ALEXNET_MIN_INPUT}×{ALEXNET_MIN_INPUT} required): {m}",
            input_shape[1], input_shape[2]
        )),
        other => other,
    })?;
    Ok(spec)
}
