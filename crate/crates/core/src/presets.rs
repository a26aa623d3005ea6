//! The reference architectures and the experiment-level config keys.

use std::fmt;
use std::str::FromStr;

use crate::data::XOR_NOISE_STD;
use crate::error::{Error, Result};
use crate::math::{KernelSpec, Shape3};
use crate::network::{Architecture, LayerSpec};
use crate::surgery::config::{num, parse_pairs};
use crate::surgery::SurgeryConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arch {
    /// 2 inputs, 5 sigmoid hidden units, 1 sigmoid output: 21 parameters.
    Xor251,
    /// 784-300-100-10 with ReLU hidden units.
    LeNet300100,
    /// Two 5x5 convolutions with 2x2 max pooling, then 500-10 fully connected.
    LeNet5,
}

impl Arch {
    pub fn architecture(self) -> Architecture {
        let layers = match self {
            Arch::Xor251 => vec![
                LayerSpec::fully_connected("fc1", 5),
                LayerSpec::sigmoid("sig1"),
                LayerSpec::fully_connected("fc2", 1),
                LayerSpec::sigmoid_xent("loss"),
            ],
            Arch::LeNet300100 => vec![
                LayerSpec::fully_connected("fc1", 300),
                LayerSpec::relu("relu1"),
                LayerSpec::fully_connected("fc2", 100),
                LayerSpec::relu("relu2"),
                LayerSpec::fully_connected("fc3", 10),
                LayerSpec::softmax_xent("loss"),
            ],
            Arch::LeNet5 => vec![
                LayerSpec::convolution("conv1", conv5x5(1, 20)),
                LayerSpec::max_pool("pool1", 2, 2),
                LayerSpec::convolution("conv2", conv5x5(20, 50)),
                LayerSpec::max_pool("pool2", 2, 2),
                LayerSpec::fully_connected("fc1", 500),
                LayerSpec::relu("relu1"),
                LayerSpec::fully_connected("fc2", 10),
                LayerSpec::softmax_xent("loss"),
            ],
        };
        Architecture::new(self.input(), layers).expect("preset architectures are valid")
    }

    pub fn input(self) -> Shape3 {
        match self {
            Arch::Xor251 => Shape3::flat(2),
            Arch::LeNet300100 => Shape3::flat(784),
            Arch::LeNet5 => Shape3::new(1, 28, 28),
        }
    }
}

fn conv5x5(in_channels: usize, out_channels: usize) -> KernelSpec {
    KernelSpec {
        in_channels,
        out_channels,
        kernel_h: 5,
        kernel_w: 5,
        stride: 1,
        pad: 0,
    }
}

impl FromStr for Arch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "xor-2-5-1" => Ok(Arch::Xor251),
            "lenet-300-100" => Ok(Arch::LeNet300100),
            "lenet-5" => Ok(Arch::LeNet5),
            other => Err(Error::config(format!(
                "unknown arch {other:?} (expected xor-2-5-1, lenet-300-100 or lenet-5)"
            ))),
        }
    }
}

impl fmt::Display for Arch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Arch::Xor251 => "xor-2-5-1",
            Arch::LeNet300100 => "lenet-300-100",
            Arch::LeNet5 => "lenet-5",
        })
    }
}

/// A config file: surgery keys plus `arch`, `xor_samples`, `xor_noise`,
/// `reference_iter` and `reference_lr`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub arch: Option<Arch>,
    pub xor_samples: usize,
    pub xor_noise: f64,
    /// Iterations of dense training before surgery.
    pub reference_iter: usize,
    /// Base rate for dense training; falls back to `base_lr`.
    pub reference_lr: Option<f64>,
    pub surgery: SurgeryConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            arch: None,
            xor_samples: 20_000,
            xor_noise: XOR_NOISE_STD,
            reference_iter: 10_000,
            reference_lr: None,
            surgery: SurgeryConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        for (key, value) in parse_pairs(text)? {
            match key.as_str() {
                "arch" => cfg.arch = Some(value.parse()?),
                "xor_samples" => cfg.xor_samples = num(&key, &value)?,
                "xor_noise" => cfg.xor_noise = num(&key, &value)?,
                "reference_iter" => cfg.reference_iter = num(&key, &value)?,
                "reference_lr" => cfg.reference_lr = Some(num(&key, &value)?),
                _ => {
                    if !cfg.surgery.apply(&key, &value)? {
                        return Err(Error::config(format!("unknown configuration key {key:?}")));
                    }
                }
            }
        }
        cfg.surgery.validate()?;
        cfg.reference_config().validate()?;
        Ok(cfg)
    }

    /// The plain training run that produces the reference model: surgery
    /// settings with `reference_iter`, `reference_lr` and no phases.
    pub fn reference_config(&self) -> SurgeryConfig {
        SurgeryConfig {
            base_lr: self.reference_lr.unwrap_or(self.surgery.base_lr),
            max_iter: self.reference_iter,
            phases: Vec::new(),
            ..self.surgery.clone()
        }
    }
}
