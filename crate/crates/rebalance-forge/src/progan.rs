//! Executable shape model of the customized progressive GAN.
//!
//! Networks are described as ordered layer lists over `channels x height x
//! width` shapes. Two builtin descriptions ship for both the generator and
//! the critic: a `verbatim` transcription of the published layer tables,
//! kept inconsistencies and all for auditing, and a minimally `repaired`
//! chain that propagates cleanly and is the one to build against.
//! The Wasserstein-GP loss is provided as a pure function; no tensors,
//! gradients, or training live here.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hard cap on any computed dimension; keeps shape propagation total on
/// hostile inputs.
const MAX_DIM: u64 = 1 << 20;

/// A `channels x height x width` feature-map shape. All dimensions >= 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "(u32, u32, u32)", try_from = "(u32, u32, u32)")]
pub struct TensorShape {
    pub channels: u32,
    pub height: u32,
    pub width: u32,
}

impl TensorShape {
    pub fn new(channels: u32, height: u32, width: u32) -> Result<TensorShape> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(Error::config(format!(
                "tensor shape {channels}x{height}x{width} has a zero dimension"
            )));
        }
        Ok(TensorShape {
            channels,
            height,
            width,
        })
    }
}

impl std::fmt::Display for TensorShape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{}", self.channels, self.height, self.width)
    }
}

impl From<TensorShape> for (u32, u32, u32) {
    fn from(s: TensorShape) -> Self {
        (s.channels, s.height, s.width)
    }
}

impl TryFrom<(u32, u32, u32)> for TensorShape {
    type Error = Error;
    fn try_from(t: (u32, u32, u32)) -> Result<TensorShape> {
        TensorShape::new(t.0, t.1, t.2)
    }
}

fn shape(c: u32, h: u32, w: u32) -> TensorShape {
    TensorShape {
        channels: c,
        height: h,
        width: w,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LayerKind {
    Conv2D,
    TConv2D,
    UpSample,
    DownSample,
    MinibatchStdDev,
    ToRGB,
    ConvThenDownSample,
}

impl LayerKind {
    /// Kinds that carry kernel/padding/stride parameters.
    pub fn is_conv(&self) -> bool {
        matches!(
            self,
            LayerKind::Conv2D | LayerKind::TConv2D | LayerKind::ConvThenDownSample
        )
    }
}

impl std::fmt::Display for LayerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            LayerKind::Conv2D => "Conv2D",
            LayerKind::TConv2D => "TConv2D",
            LayerKind::UpSample => "UpSample",
            LayerKind::DownSample => "DownSample",
            LayerKind::MinibatchStdDev => "MinibatchStdDev",
            LayerKind::ToRGB => "ToRGB",
            LayerKind::ConvThenDownSample => "ConvThenDownSample",
        };
        f.write_str(name)
    }
}

/// Activation attached to a layer. LeakyReLU uses the fixed 0.2 slope.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Activation {
    LeakyReLU,
    Linear,
    #[default]
    None,
}

/// One layer row: kind, conv parameters where applicable, and optionally
/// the shapes the source table declared for auditing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kind: LayerKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_channels: Option<u32>,
    #[serde(default)]
    pub activation: Activation,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub declared_input: Option<TensorShape>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub declared_output: Option<TensorShape>,
}

impl LayerSpec {
    pub fn conv(k: u32, p: u32, s: u32, out_channels: u32, activation: Activation) -> LayerSpec {
        LayerSpec {
            kind: LayerKind::Conv2D,
            k: Some(k),
            p: Some(p),
            s: Some(s),
            out_channels: Some(out_channels),
            activation,
            declared_input: None,
            declared_output: None,
        }
    }

    pub fn tconv(k: u32, p: u32, s: u32, out_channels: u32, activation: Activation) -> LayerSpec {
        LayerSpec {
            kind: LayerKind::TConv2D,
            ..LayerSpec::conv(k, p, s, out_channels, activation)
        }
    }

    pub fn conv_then_down(
        k: u32,
        p: u32,
        s: u32,
        out_channels: u32,
        activation: Activation,
    ) -> LayerSpec {
        LayerSpec {
            kind: LayerKind::ConvThenDownSample,
            ..LayerSpec::conv(k, p, s, out_channels, activation)
        }
    }

    pub fn bare(kind: LayerKind) -> LayerSpec {
        LayerSpec {
            kind,
            k: None,
            p: None,
            s: None,
            out_channels: None,
            activation: Activation::None,
            declared_input: None,
            declared_output: None,
        }
    }

    pub fn to_rgb() -> LayerSpec {
        LayerSpec {
            kind: LayerKind::ToRGB,
            k: Some(1),
            p: Some(0),
            s: Some(1),
            out_channels: Some(3),
            activation: Activation::Linear,
            declared_input: None,
            declared_output: None,
        }
    }

    fn declared(mut self, input: TensorShape, output: TensorShape) -> LayerSpec {
        self.declared_input = Some(input);
        self.declared_output = Some(output);
        self
    }

    fn conv_params(&self, layer_index: usize) -> Result<(u64, u64, u64, u32)> {
        let missing = |what: &str| Error::Shape {
            layer_index,
            layer: self.kind.to_string(),
            message: format!("missing {what}"),
        };
        let k = self.k.ok_or_else(|| missing("kernel size"))? as u64;
        let p = self.p.ok_or_else(|| missing("padding"))? as u64;
        let s = self.s.ok_or_else(|| missing("stride"))? as u64;
        let out = self.out_channels.ok_or_else(|| missing("out_channels"))?;
        if k == 0 || s == 0 || out == 0 {
            return Err(Error::Shape {
                layer_index,
                layer: self.kind.to_string(),
                message: "kernel, stride, and out_channels must be >= 1".into(),
            });
        }
        Ok((k, p, s, out))
    }
}

/// A named layer chain with its input shape.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub name: String,
    pub stage: u32,
    pub input_shape: TensorShape,
    pub layers: Vec<LayerSpec>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub verbatim: bool,
}

impl NetworkSpec {
    pub fn from_json(text: &str) -> Result<NetworkSpec> {
        let spec: NetworkSpec =
            serde_json::from_str(text).map_err(|e| Error::InvalidDocument {
                what: "network spec",
                message: e.to_string(),
            })?;
        spec.validate_fields()?;
        Ok(spec)
    }

    pub fn validate_fields(&self) -> Result<()> {
        if !(1..=6).contains(&self.stage) {
            return Err(Error::config(format!(
                "stage must be within 1..6 (got {})",
                self.stage
            )));
        }
        if self.layers.is_empty() {
            return Err(Error::config("network spec has no layers"));
        }
        for (i, layer) in self.layers.iter().enumerate() {
            // Kernel/padding/stride belong to convolution-like kinds only.
            let carries_params = layer.k.is_some()
                || layer.p.is_some()
                || layer.s.is_some()
                || layer.out_channels.is_some();
            if carries_params && !layer.kind.is_conv() && layer.kind != LayerKind::ToRGB {
                return Err(Error::config(format!(
                    "layer {i} ({}) must not carry k/p/s/out_channels",
                    layer.kind
                )));
            }
        }
        Ok(())
    }
}

/// One shape-audit observation: where the chain and the declaration
/// disagree, or where propagation itself failed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Finding {
    pub layer_index: usize,
    pub expected_shape: Option<TensorShape>,
    pub declared_shape: Option<TensorShape>,
    pub note: String,
}

/// Outcome of replaying shape propagation over a network spec.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub ok: bool,
    pub findings: Vec<Finding>,
    /// Computed shape after each layer (as far as propagation reached,
    /// resuming from declared shapes after findings).
    pub trace: Vec<TensorShape>,
}

/// Computes the output shape of a single layer.
pub fn propagate_shape(layer: &LayerSpec, input: TensorShape) -> Result<TensorShape> {
    propagate_shape_at(layer, input, 0)
}

fn propagate_shape_at(
    layer: &LayerSpec,
    input: TensorShape,
    layer_index: usize,
) -> Result<TensorShape> {
    let fail = |message: String| Error::Shape {
        layer_index,
        layer: layer.kind.to_string(),
        message,
    };
    let checked = |c: u64, h: u64, w: u64| -> Result<TensorShape> {
        if c == 0 || h == 0 || w == 0 {
            return Err(fail(format!("computed non-positive dimension {c}x{h}x{w}")));
        }
        if c > MAX_DIM || h > MAX_DIM || w > MAX_DIM {
            return Err(fail(format!("computed dimension {c}x{h}x{w} exceeds limit")));
        }
        Ok(shape(c as u32, h as u32, w as u32))
    };
    let conv_hw = |k: u64, p: u64, s: u64, dim: u64| -> Option<u64> {
        let padded = dim + 2 * p;
        if padded < k {
            return None;
        }
        Some((padded - k) / s + 1)
    };

    match layer.kind {
        LayerKind::Conv2D => {
            let (k, p, s, out) = layer.conv_params(layer_index)?;
            let h = conv_hw(k, p, s, input.height as u64)
                .ok_or_else(|| fail(format!("kernel {k} exceeds padded input {}", input.height)))?;
            let w = conv_hw(k, p, s, input.width as u64)
                .ok_or_else(|| fail(format!("kernel {k} exceeds padded input {}", input.width)))?;
            checked(out as u64, h, w)
        }
        LayerKind::TConv2D => {
            let (k, p, s, out) = layer.conv_params(layer_index)?;
            let grow = |dim: u64| -> Option<u64> {
                ((dim - 1) * s + k).checked_sub(2 * p).filter(|&v| v > 0)
            };
            let h = grow(input.height as u64)
                .ok_or_else(|| fail("transposed conv collapses spatial dim".into()))?;
            let w = grow(input.width as u64)
                .ok_or_else(|| fail("transposed conv collapses spatial dim".into()))?;
            checked(out as u64, h, w)
        }
        LayerKind::UpSample => checked(
            input.channels as u64,
            input.height as u64 * 2,
            input.width as u64 * 2,
        ),
        LayerKind::DownSample => {
            if !input.height.is_multiple_of(2) || !input.width.is_multiple_of(2) {
                return Err(fail(format!(
                    "downsample requires even spatial dims, got {}x{}",
                    input.height, input.width
                )));
            }
            checked(
                input.channels as u64,
                input.height as u64 / 2,
                input.width as u64 / 2,
            )
        }
        LayerKind::MinibatchStdDev => checked(
            input.channels as u64 + 1,
            input.height as u64,
            input.width as u64,
        ),
        LayerKind::ToRGB => checked(3, input.height as u64, input.width as u64),
        LayerKind::ConvThenDownSample => {
            let (k, p, s, out) = layer.conv_params(layer_index)?;
            let h = conv_hw(k, p, s, input.height as u64)
                .ok_or_else(|| fail(format!("kernel {k} exceeds padded input {}", input.height)))?;
            let w = conv_hw(k, p, s, input.width as u64)
                .ok_or_else(|| fail(format!("kernel {k} exceeds padded input {}", input.width)))?;
            if !h.is_multiple_of(2) || !w.is_multiple_of(2) {
                return Err(fail(format!(
                    "downsample requires even spatial dims, got {h}x{w} after conv"
                )));
            }
            checked(out as u64, h / 2, w / 2)
        }
    }
}

/// Replays shape propagation over the whole chain. Declared/computed
/// mismatches and propagation failures become findings, never hard
/// errors; after a finding the chain resumes from the declared shape so
/// one inconsistency does not cascade.
pub fn validate_network(spec: &NetworkSpec) -> Result<ValidationReport> {
    spec.validate_fields()?;
    let mut findings = Vec::new();
    let mut trace = Vec::with_capacity(spec.layers.len());
    let mut current = spec.input_shape;
    for (idx, layer) in spec.layers.iter().enumerate() {
        if let Some(declared_in) = layer.declared_input {
            if declared_in != current {
                findings.push(Finding {
                    layer_index: idx,
                    expected_shape: Some(current),
                    declared_shape: Some(declared_in),
                    note: format!(
                        "input chain break: previous layer produced {current}, row declares {declared_in}"
                    ),
                });
                current = declared_in;
            }
        }
        match propagate_shape_at(layer, current, idx) {
            Ok(out) => {
                let mut out = out;
                if let Some(declared_out) = layer.declared_output {
                    if declared_out != out {
                        findings.push(Finding {
                            layer_index: idx,
                            expected_shape: Some(out),
                            declared_shape: Some(declared_out),
                            note: format!(
                                "declared output {declared_out} does not match computed {out}"
                            ),
                        });
                        out = declared_out;
                    }
                }
                current = out;
            }
            Err(e) => {
                let note = match e {
                    Error::Shape { layer, message, .. } => format!("{layer}: {message}"),
                    other => other.to_string(),
                };
                findings.push(Finding {
                    layer_index: idx,
                    expected_shape: None,
                    declared_shape: layer.declared_output,
                    note,
                });
                if let Some(declared_out) = layer.declared_output {
                    current = declared_out;
                }
            }
        }
        trace.push(current);
    }
    Ok(ValidationReport {
        ok: findings.is_empty(),
        findings,
        trace,
    })
}

/// Resolution at a progression stage: 7 * 2^(stage - 1).
pub fn stage_resolution(stage: u32) -> u32 {
    7 * (1 << (stage - 1))
}

fn check_stage(stage: u32) -> Result<()> {
    if !(1..=6).contains(&stage) {
        return Err(Error::config(format!(
            "stage must be within 1..6 (got {stage})"
        )));
    }
    Ok(())
}

const LEAKY: Activation = Activation::LeakyReLU;

/// Builtin generator description. `verbatim` transcribes the published
/// stage-6 table literally, declared shapes included; otherwise the
/// minimally repaired chain is returned (the first 28x28 convolution
/// reduces 224 channels to 56, which the table leaves implied). Stages
/// below 6 keep the innermost block and the output head constant and
/// drop the outer upsampling blocks.
pub fn builtin_generator_spec(stage: u32, verbatim: bool) -> Result<NetworkSpec> {
    check_stage(stage)?;
    let blocks: [(u32, u32); 5] = [(14, 224), (28, 56), (56, 28), (112, 14), (224, 7)];
    let mut layers = vec![
        LayerSpec::tconv(7, 0, 1, 224, LEAKY),
        LayerSpec::conv(3, 1, 1, 224, LEAKY),
    ];
    for &(_res, ch) in blocks.iter().take(stage as usize - 1) {
        layers.push(LayerSpec::bare(LayerKind::UpSample));
        layers.push(LayerSpec::conv(3, 1, 1, ch, LEAKY));
        layers.push(LayerSpec::conv(3, 1, 1, ch, LEAKY));
    }
    layers.push(LayerSpec::to_rgb());

    if verbatim && stage == 6 {
        let base = layers;
        let d = |i: usize, input: TensorShape, output: TensorShape| -> LayerSpec {
            base[i].clone().declared(input, output)
        };
        layers = vec![
            d(0, shape(112, 1, 1), shape(224, 7, 7)),
            d(1, shape(224, 7, 7), shape(224, 7, 7)),
            d(2, shape(224, 7, 7), shape(224, 14, 14)),
            d(3, shape(224, 14, 14), shape(224, 14, 14)),
            d(4, shape(224, 14, 14), shape(224, 14, 14)),
            d(5, shape(224, 14, 14), shape(224, 28, 28)),
            // The table declares 56-channel inputs right after a
            // 224-channel upsample; kept as published.
            d(6, shape(56, 28, 28), shape(56, 28, 28)),
            d(7, shape(56, 28, 28), shape(56, 28, 28)),
            d(8, shape(56, 28, 28), shape(56, 56, 56)),
            d(9, shape(56, 56, 56), shape(28, 56, 56)),
            d(10, shape(28, 56, 56), shape(28, 56, 56)),
            d(11, shape(28, 56, 56), shape(28, 112, 112)),
            d(12, shape(28, 112, 112), shape(14, 112, 112)),
            d(13, shape(14, 112, 112), shape(14, 112, 112)),
            d(14, shape(14, 112, 112), shape(14, 224, 224)),
            d(15, shape(14, 224, 224), shape(7, 224, 224)),
            d(16, shape(7, 224, 224), shape(7, 224, 224)),
            d(17, shape(7, 224, 224), shape(3, 224, 224)),
        ];
    }

    Ok(NetworkSpec {
        name: format!("generator-stage{stage}"),
        stage,
        input_shape: shape(112, 1, 1),
        layers,
        verbatim,
    })
}

/// Builtin critic description, symmetric to the generator. The repaired
/// chain fixes the two impossible rows: the opening 7x7 convolution gets
/// padding 3 so it preserves the declared spatial size, and the final
/// 7x7 -> 1x1 reduction becomes a plain K7 P0 S1 convolution. Stages
/// below 6 keep the input block and the scoring head and drop the outer
/// downsampling blocks.
pub fn builtin_critic_spec(stage: u32, verbatim: bool) -> Result<NetworkSpec> {
    check_stage(stage)?;
    let first_conv = if verbatim {
        LayerSpec::conv(7, 0, 1, 14, LEAKY)
    } else {
        LayerSpec::conv(7, 3, 1, 14, LEAKY)
    };
    let final_reduce = if verbatim {
        LayerSpec::conv_then_down(3, 1, 1, 224, LEAKY)
    } else {
        LayerSpec::conv(7, 0, 1, 224, LEAKY)
    };

    let mut layers = vec![first_conv, LayerSpec::conv(3, 1, 1, 14, LEAKY)];
    // Downsampling blocks from high resolution to low; stage s keeps the
    // last s-1 of them.
    let mut middle: Vec<Vec<LayerSpec>> = vec![
        vec![LayerSpec::conv_then_down(3, 1, 1, 28, LEAKY)],
        vec![
            LayerSpec::conv(3, 1, 1, 56, LEAKY),
            LayerSpec::conv(3, 1, 1, 56, LEAKY),
            LayerSpec::bare(LayerKind::DownSample),
        ],
        vec![
            LayerSpec::conv(3, 1, 1, 112, LEAKY),
            LayerSpec::conv(3, 1, 1, 112, LEAKY),
            LayerSpec::bare(LayerKind::DownSample),
        ],
        vec![
            LayerSpec::conv(3, 1, 1, 224, LEAKY),
            LayerSpec::conv(3, 1, 1, 224, LEAKY),
            LayerSpec::bare(LayerKind::DownSample),
        ],
        vec![
            LayerSpec::conv(3, 1, 1, 224, LEAKY),
            LayerSpec::conv(3, 1, 1, 224, LEAKY),
            LayerSpec::bare(LayerKind::DownSample),
        ],
    ];
    let keep_from = middle.len() - (stage as usize - 1);
    for block in middle.drain(keep_from..) {
        layers.extend(block);
    }
    let mut mb = LayerSpec::bare(LayerKind::MinibatchStdDev);
    mb.activation = LEAKY;
    layers.push(mb);
    layers.push(LayerSpec::conv(3, 1, 1, 224, LEAKY));
    layers.push(final_reduce);
    layers.push(LayerSpec::conv(1, 0, 1, 1, Activation::Linear));

    if verbatim && stage == 6 {
        let base = layers;
        let d = |i: usize, input: TensorShape, output: TensorShape| -> LayerSpec {
            base[i].clone().declared(input, output)
        };
        layers = vec![
            // Declared spatial-preserving despite K7 P0; kept as published.
            d(0, shape(3, 224, 224), shape(14, 224, 224)),
            d(1, shape(14, 224, 224), shape(14, 224, 224)),
            d(2, shape(14, 224, 224), shape(28, 112, 112)),
            d(3, shape(28, 112, 112), shape(56, 112, 112)),
            d(4, shape(56, 112, 112), shape(56, 112, 112)),
            d(5, shape(56, 112, 112), shape(56, 56, 56)),
            d(6, shape(56, 56, 56), shape(112, 56, 56)),
            d(7, shape(112, 56, 56), shape(112, 56, 56)),
            d(8, shape(112, 56, 56), shape(112, 28, 28)),
            d(9, shape(112, 28, 28), shape(224, 28, 28)),
            d(10, shape(224, 28, 28), shape(224, 28, 28)),
            d(11, shape(224, 28, 28), shape(224, 14, 14)),
            d(12, shape(224, 14, 14), shape(224, 14, 14)),
            d(13, shape(224, 14, 14), shape(224, 14, 14)),
            d(14, shape(224, 14, 14), shape(224, 7, 7)),
            d(15, shape(224, 7, 7), shape(225, 7, 7)),
            d(16, shape(225, 7, 7), shape(224, 7, 7)),
            // Declared 7x7 -> 1x1 under K3 P1 S1; kept as published.
            d(17, shape(224, 7, 7), shape(224, 1, 1)),
            d(18, shape(224, 1, 1), shape(1, 1, 1)),
        ];
    }

    let res = stage_resolution(stage);
    Ok(NetworkSpec {
        name: format!("critic-stage{stage}"),
        stage,
        input_shape: shape(3, res, res),
        layers,
        verbatim,
    })
}

/// Per-stage training constants of the progression schedule.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageEntry {
    pub resolution: u32,
    pub batch_size: u32,
    pub epochs: u32,
}

/// The full progression schedule: six stages of doubling resolution plus
/// the shared training constants.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageSchedule {
    pub stages: Vec<StageEntry>,
    pub latent_size: u32,
    pub n_critic: u32,
    pub learning_rate: f64,
    pub loss_model: &'static str,
}

impl StageSchedule {
    pub fn resolutions(&self) -> Vec<u32> {
        self.stages.iter().map(|s| s.resolution).collect()
    }

    pub fn batch_sizes(&self) -> Vec<u32> {
        self.stages.iter().map(|s| s.batch_size).collect()
    }

    pub fn epochs(&self) -> Vec<u32> {
        self.stages.iter().map(|s| s.epochs).collect()
    }
}

/// Returns the fixed six-stage schedule.
pub fn stage_schedule() -> StageSchedule {
    let batch = [256u32, 128, 32, 16, 16, 8];
    let epochs = [250u32, 300, 350, 400, 450, 500];
    let stages = (1..=6u32)
        .map(|s| StageEntry {
            resolution: stage_resolution(s),
            batch_size: batch[s as usize - 1],
            epochs: epochs[s as usize - 1],
        })
        .collect();
    StageSchedule {
        stages,
        latent_size: 112,
        n_critic: 5,
        learning_rate: 1e-3,
        loss_model: "WGAN-GP",
    }
}

/// Critic and generator losses for one batch of scores.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WganGpLoss {
    pub critic_loss: f64,
    pub generator_loss: f64,
}

/// Wasserstein loss with gradient penalty:
/// critic = mean(fake) - mean(real) + lambda * mean((|grad| - 1)^2),
/// generator = -mean(fake).
pub fn wgan_gp_loss(
    real_scores: &[f64],
    fake_scores: &[f64],
    grad_norms: &[f64],
    lambda: f64,
) -> Result<WganGpLoss> {
    if real_scores.is_empty() || fake_scores.is_empty() || grad_norms.is_empty() {
        return Err(Error::config("score and gradient-norm lists must be non-empty"));
    }
    if lambda.is_nan() || lambda < 0.0 {
        return Err(Error::config(format!(
            "gradient-penalty coefficient must be >= 0 (got {lambda})"
        )));
    }
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    let penalty = grad_norms.iter().map(|&g| (g - 1.0) * (g - 1.0)).sum::<f64>()
        / grad_norms.len() as f64;
    Ok(WganGpLoss {
        critic_loss: mean(fake_scores) - mean(real_scores) + lambda * penalty,
        generator_loss: -mean(fake_scores),
    })
}

/// Default gradient-penalty coefficient.
pub const DEFAULT_GP_LAMBDA: f64 = 10.0;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tconv_maps_latent_to_first_block() {
        let layer = LayerSpec::tconv(7, 0, 1, 224, LEAKY);
        let out = propagate_shape(&layer, shape(112, 1, 1)).unwrap();
        assert_eq!(out, shape(224, 7, 7));
    }

    #[test]
    fn upsample_doubles_space() {
        let out = propagate_shape(&LayerSpec::bare(LayerKind::UpSample), shape(224, 14, 14)).unwrap();
        assert_eq!(out, shape(224, 28, 28));
    }

    #[test]
    fn minibatch_stddev_adds_one_channel() {
        let out =
            propagate_shape(&LayerSpec::bare(LayerKind::MinibatchStdDev), shape(224, 7, 7)).unwrap();
        assert_eq!(out, shape(225, 7, 7));
    }

    #[test]
    fn unpadded_k7_conv_shrinks_224() {
        let layer = LayerSpec::conv(7, 0, 1, 14, LEAKY);
        let out = propagate_shape(&layer, shape(3, 224, 224)).unwrap();
        assert_eq!(out, shape(14, 218, 218));
    }

    #[test]
    fn one_by_one_conv_preserves_space() {
        let layer = LayerSpec::conv(1, 0, 1, 42, LEAKY);
        let out = propagate_shape(&layer, shape(5, 13, 29)).unwrap();
        assert_eq!(out, shape(42, 13, 29));
    }

    #[test]
    fn downsample_rejects_odd_dims() {
        let err = propagate_shape(&LayerSpec::bare(LayerKind::DownSample), shape(8, 7, 8));
        assert!(matches!(err, Err(Error::Shape { .. })));
    }

    #[test]
    fn conv_rejects_kernel_larger_than_padded_input() {
        let layer = LayerSpec::conv(9, 0, 1, 4, LEAKY);
        assert!(propagate_shape(&layer, shape(3, 4, 4)).is_err());
    }

    #[test]
    fn repaired_generator_hits_stage_resolutions() {
        for stage in 1..=6u32 {
            let spec = builtin_generator_spec(stage, false).unwrap();
            let report = validate_network(&spec).unwrap();
            assert!(report.ok, "stage {stage}: {:?}", report.findings);
            let res = stage_resolution(stage);
            assert_eq!(*report.trace.last().unwrap(), shape(3, res, res));
        }
    }

    #[test]
    fn repaired_critic_scores_every_stage() {
        for stage in 1..=6u32 {
            let spec = builtin_critic_spec(stage, false).unwrap();
            let res = stage_resolution(stage);
            assert_eq!(spec.input_shape, shape(3, res, res));
            let report = validate_network(&spec).unwrap();
            assert!(report.ok, "stage {stage}: {:?}", report.findings);
            assert_eq!(*report.trace.last().unwrap(), shape(1, 1, 1));
        }
    }

    #[test]
    fn generator_and_critic_shapes_are_dual() {
        for stage in 1..=6u32 {
            let gen = builtin_generator_spec(stage, false).unwrap();
            let gen_out = *validate_network(&gen).unwrap().trace.last().unwrap();
            let critic = builtin_critic_spec(stage, false).unwrap();
            assert_eq!(gen_out, critic.input_shape, "stage {stage}");
        }
    }

    #[test]
    fn verbatim_generator_has_exactly_one_chain_break() {
        let spec = builtin_generator_spec(6, true).unwrap();
        let report = validate_network(&spec).unwrap();
        assert!(!report.ok);
        assert_eq!(report.findings.len(), 1, "{:?}", report.findings);
        let f = &report.findings[0];
        assert_eq!(f.layer_index, 6);
        assert_eq!(f.expected_shape, Some(shape(224, 28, 28)));
        assert_eq!(f.declared_shape, Some(shape(56, 28, 28)));
        assert!(f.note.contains("input chain break"));
    }

    #[test]
    fn verbatim_critic_has_exactly_the_two_documented_findings() {
        let spec = builtin_critic_spec(6, true).unwrap();
        let report = validate_network(&spec).unwrap();
        assert!(!report.ok);
        assert_eq!(report.findings.len(), 2, "{:?}", report.findings);
        let first = &report.findings[0];
        assert_eq!(first.layer_index, 0);
        assert_eq!(first.expected_shape, Some(shape(14, 218, 218)));
        assert_eq!(first.declared_shape, Some(shape(14, 224, 224)));
        let second = &report.findings[1];
        assert_eq!(second.layer_index, 17);
        assert!(second.note.contains("even spatial dims"), "{}", second.note);
    }

    #[test]
    fn single_identity_conv_validates() {
        let spec = NetworkSpec {
            name: "identity".into(),
            stage: 1,
            input_shape: shape(4, 8, 8),
            layers: vec![LayerSpec::conv(1, 0, 1, 4, Activation::None)],
            verbatim: false,
        };
        let report = validate_network(&spec).unwrap();
        assert!(report.ok);
    }

    #[test]
    fn schedule_matches_published_constants() {
        let schedule = stage_schedule();
        assert_eq!(schedule.resolutions(), [7, 14, 28, 56, 112, 224]);
        assert_eq!(schedule.batch_sizes(), [256, 128, 32, 16, 16, 8]);
        assert_eq!(schedule.epochs(), [250, 300, 350, 400, 450, 500]);
        assert_eq!(schedule.latent_size, 112);
        assert_eq!(schedule.n_critic, 5);
        assert_eq!(schedule.learning_rate, 1e-3);
        assert_eq!(schedule.loss_model, "WGAN-GP");
    }

    #[test]
    fn wgan_gp_zero_case() {
        let loss = wgan_gp_loss(&[0.0], &[0.0], &[1.0], 10.0).unwrap();
        assert_eq!(loss.critic_loss, 0.0);
        assert_eq!(loss.generator_loss, 0.0);
    }

    #[test]
    fn wgan_gp_arithmetic_case() {
        let loss = wgan_gp_loss(&[2.0, 4.0], &[1.0, 1.0], &[1.0, 1.0], 10.0).unwrap();
        assert_eq!(loss.critic_loss, -2.0);
        assert_eq!(loss.generator_loss, -1.0);
    }

    #[test]
    fn zero_lambda_is_plain_wasserstein() {
        let real = [0.5, 1.5, -2.0];
        let fake = [0.25, 0.75];
        let with_norms = wgan_gp_loss(&real, &fake, &[3.0, 0.5], 0.0).unwrap();
        let mean_real = real.iter().sum::<f64>() / 3.0;
        let mean_fake = fake.iter().sum::<f64>() / 2.0;
        assert_eq!(with_norms.critic_loss, mean_fake - mean_real);
        assert_eq!(with_norms.generator_loss, -mean_fake);
    }

    #[test]
    fn wgan_gp_rejects_empty_and_negative_lambda() {
        assert!(wgan_gp_loss(&[], &[0.0], &[1.0], 1.0).is_err());
        assert!(wgan_gp_loss(&[0.0], &[0.0], &[1.0], -1.0).is_err());
    }

    #[test]
    fn network_spec_json_round_trip() {
        let spec = builtin_generator_spec(3, false).unwrap();
        let json = serde_json::to_string(&spec).unwrap();
        let back = NetworkSpec::from_json(&json).unwrap();
        assert_eq!(spec, back);
    }

    #[test]
    fn conv_params_on_sampling_layers_are_rejected() {
        let json = r#"{
            "name": "bad", "stage": 1, "input_shape": [3, 8, 8],
            "layers": [{"kind": "UpSample", "k": 3}]
        }"#;
        assert!(NetworkSpec::from_json(json).is_err());
    }

    #[test]
    fn stage_out_of_range_is_rejected() {
        assert!(builtin_generator_spec(0, false).is_err());
        assert!(builtin_generator_spec(7, false).is_err());
        assert!(builtin_critic_spec(9, true).is_err());
    }
}
