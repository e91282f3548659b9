use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{Activation, Mlp, Tape};
use crate::error::{config_err, Result};
use crate::model::{CoefficientLayout, CoefficientVector};
use crate::rng::{self, streams};

/// Layer widths of the three networks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    /// Side of the square downsampled input grid.
    pub input_side: usize,
    /// Proxy image + landmark map.
    pub channels: usize,
    pub regressor_hidden: Vec<usize>,
    pub encoder_hidden: Vec<usize>,
    pub latent: usize,
    pub critic_hidden: Vec<usize>,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            input_side: 32,
            channels: 2,
            regressor_hidden: alloc::vec![256, 128],
            encoder_hidden: alloc::vec![128],
            latent: 64,
            critic_hidden: alloc::vec![512, 1024, 1024],
        }
    }
}

impl NetworkConfig {
    pub fn input_len(&self) -> usize {
        self.input_side * self.input_side * self.channels
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_side == 0 || self.channels == 0 || self.latent == 0 {
            return Err(config_err!("network.input_side, network.channels and network.latent must be positive"));
        }
        for (name, v) in [
            ("regressor_hidden", &self.regressor_hidden),
            ("encoder_hidden", &self.encoder_hidden),
            ("critic_hidden", &self.critic_hidden),
        ] {
            if let Some(i) = v.iter().position(|&w| w == 0) {
                return Err(config_err!("network.{name}[{i}] must be positive"));
            }
        }
        Ok(())
    }

    fn hidden_then(hidden: &[usize], out: usize, out_act: Activation) -> Vec<(usize, Activation)> {
        let mut l: Vec<(usize, Activation)> = hidden.iter().map(|&w| (w, Activation::Relu)).collect();
        l.push((out, out_act));
        l
    }

    pub fn regressor_layers(&self, layout: CoefficientLayout) -> Vec<(usize, Activation)> {
        Self::hidden_then(&self.regressor_hidden, layout.len(), Activation::Identity)
    }

    pub fn encoder_layers(&self) -> Vec<(usize, Activation)> {
        Self::hidden_then(&self.encoder_hidden, self.latent, Activation::Identity)
    }

    pub fn critic_layers(&self) -> Vec<(usize, Activation)> {
        Self::hidden_then(&self.critic_hidden, 1, Activation::Sigmoid)
    }
}

/// Regressor, encoder and critic, plus the fixed affine map between the
/// regressor's normalized outputs and model coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkStack {
    pub config: NetworkConfig,
    pub layout: CoefficientLayout,
    pub regressor: Mlp,
    pub encoder: Mlp,
    pub critic: Mlp,
    /// `coeff = mean + std * output`
    pub coeff_mean: Vec<f64>,
    pub coeff_std: Vec<f64>,
    pub seed: u64,
}

impl NetworkStack {
    pub fn new(config: NetworkConfig, layout: CoefficientLayout, seed: u64) -> Result<Self> {
        config.validate()?;
        let input = config.input_len();
        let mut regressor = Mlp::new(input, &config.regressor_layers(layout))?;
        let mut encoder = Mlp::new(input, &config.encoder_layers())?;
        let mut critic = Mlp::new(config.latent + layout.len(), &config.critic_layers())?;
        regressor.init_uniform(&mut rng::stream(seed, streams::NETWORK_INIT));
        encoder.init_uniform(&mut rng::stream(seed, streams::NETWORK_INIT + 1));
        critic.init_uniform(&mut rng::stream(seed, streams::NETWORK_INIT + 2));
        Ok(Self {
            config,
            layout,
            regressor,
            encoder,
            critic,
            coeff_mean: alloc::vec![0.0; layout.len()],
            coeff_std: alloc::vec![1.0; layout.len()],
            seed,
        })
    }

    pub fn input_len(&self) -> usize {
        self.config.input_len()
    }

    /// Sets the output de-normalization from per-coefficient statistics.
    /// Near-constant coefficients get unit scale.
    pub fn set_coefficient_stats(&mut self, mean: Vec<f64>, std: Vec<f64>) -> Result<()> {
        let n = self.layout.len();
        if mean.len() != n || std.len() != n {
            return Err(config_err!("coefficient statistics must have {n} entries"));
        }
        if mean.iter().chain(&std).any(|v| !v.is_finite()) {
            return Err(crate::Error::Numeric("non-finite coefficient statistics".into()));
        }
        self.coeff_mean = mean;
        self.coeff_std = std.into_iter().map(|s| if s > 1e-8 { s } else { 1.0 }).collect();
        Ok(())
    }

    pub fn decode(&self, output: &[f64]) -> Result<CoefficientVector> {
        let raw = output
            .iter()
            .zip(&self.coeff_mean)
            .zip(&self.coeff_std)
            .map(|((o, m), s)| m + s * o)
            .collect();
        CoefficientVector::from_raw(self.layout, raw)
    }

    /// Inverse of [`decode`](Self::decode); the critic sees coefficients in
    /// this normalized form.
    pub fn normalize(&self, coeff: &CoefficientVector) -> Vec<f64> {
        coeff
            .as_slice()
            .iter()
            .zip(&self.coeff_mean)
            .zip(&self.coeff_std)
            .map(|((c, m), s)| (c - m) / s)
            .collect()
    }

    /// `d loss / d output` from `d loss / d coeff`.
    pub fn output_grad(&self, coeff_grad: &[f64]) -> Vec<f64> {
        coeff_grad.iter().zip(&self.coeff_std).map(|(g, s)| g * s).collect()
    }

    pub fn forward_regressor(&self, input: &[f64], batch: usize) -> Result<(Vec<CoefficientVector>, Tape)> {
        let tape = self.regressor.forward(input, batch)?;
        let n = self.layout.len();
        let coeffs = tape
            .output()
            .chunks_exact(n)
            .map(|o| self.decode(o))
            .collect::<Result<Vec<_>>>()?;
        Ok((coeffs, tape))
    }

    /// Concatenates latents and normalized coefficients row by row.
    pub fn critic_input(&self, latents: &[f64], normalized: &[f64], batch: usize) -> Result<Vec<f64>> {
        let (zl, cl) = (self.config.latent, self.layout.len());
        if latents.len() != batch * zl || normalized.len() != batch * cl {
            return Err(config_err!("critic input sizes do not match batch {batch}"));
        }
        let mut out = Vec::with_capacity(batch * (zl + cl));
        for b in 0..batch {
            out.extend_from_slice(&latents[b * zl..(b + 1) * zl]);
            out.extend_from_slice(&normalized[b * cl..(b + 1) * cl]);
        }
        Ok(out)
    }
}
