//! Feed-forward network mean with Gaussian errors:
//! `y_t | z_t ~ N(g(z_t; omega), sigma_y^2)`, parameters `(omega, c = log sigma_y)`.
//!
//! Inputs are `y_{t-1}` followed by selected covariates at time `t`, each
//! standardized with the mean and standard deviation of the initial window.
//! The prior is flat in every coordinate.

use super::{check_dim, check_range, PredictiveModel};
use crate::error::{GvpError, Result};
use crate::predictive::ConditionalPredictive;
use crate::rng::rng_from_seed;
use crate::scoring::ResolvedRule;
use crate::series::Sample;
use crate::special::mean_var;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::ops::Range;

pub const DEFAULT_LAYERS: usize = 2;
pub const DEFAULT_WIDTH: usize = 3;
const INIT_WEIGHT_SCALE: f64 = 0.1;
const INIT_SEED: u64 = 0x5eed_b44e;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Tanh,
    Sigmoid,
}

impl Activation {
    /// Value and derivative at `a`.
    #[inline]
    fn eval(self, a: f64) -> (f64, f64) {
        match self {
            Activation::Tanh => {
                let h = a.tanh();
                (h, 1.0 - h * h)
            }
            Activation::Sigmoid => {
                let h = 1.0 / (1.0 + (-a).exp());
                (h, h * (1.0 - h))
            }
        }
    }
}

/// Number of network weights for `inputs` inputs, `layers` hidden layers of `width` nodes.
pub fn weight_count(inputs: usize, layers: usize, width: usize) -> usize {
    width * width * (layers - 1) + width * (inputs + layers + 1) + 1
}

#[derive(Debug, Clone, PartialEq)]
pub struct BnnModel {
    pub layers: usize,
    pub width: usize,
    pub activation: Activation,
    /// Covariate columns used next to the lagged response.
    pub columns: Vec<usize>,
    /// Standardization constants, one per input (lagged response first).
    pub input_mean: Vec<f64>,
    pub input_sd: Vec<f64>,
    init_mean: f64,
    init_log_sd: f64,
}

impl BnnModel {
    /// Network with explicit standardization constants.
    pub fn new(
        columns: Vec<usize>,
        input_mean: Vec<f64>,
        input_sd: Vec<f64>,
        activation: Activation,
    ) -> Result<Self> {
        let p = columns.len() + 1;
        if input_mean.len() != p || input_sd.len() != p {
            return Err(GvpError::Input(format!(
                "expected {p} standardization constants"
            )));
        }
        if input_sd.iter().any(|s| !(*s > 0.0)) {
            return Err(GvpError::degenerate(None, "network input has zero variance"));
        }
        Ok(Self {
            layers: DEFAULT_LAYERS,
            width: DEFAULT_WIDTH,
            activation,
            columns,
            input_mean,
            input_sd,
            init_mean: 0.0,
            init_log_sd: 0.0,
        })
    }

    /// Freezes input standardization from observations `1..=n0`.
    pub fn from_window(
        sample: &Sample,
        n0: usize,
        columns: Vec<usize>,
        activation: Activation,
    ) -> Result<Self> {
        if n0 < 2 || n0 > sample.n() {
            return Err(GvpError::Input(format!("bad initial window {n0}")));
        }
        let mut means = Vec::with_capacity(columns.len() + 1);
        let mut sds = Vec::with_capacity(columns.len() + 1);
        let (ym, yv) = mean_var(&sample.y[1..=n0]);
        means.push(ym);
        sds.push(yv.sqrt());
        for &j in &columns {
            let col = sample.covariates.get(j).ok_or_else(|| {
                GvpError::Input(format!("covariate column {j} does not exist"))
            })?;
            if col.len() <= n0 {
                return Err(GvpError::Input(format!(
                    "covariate column {j} shorter than the initial window"
                )));
            }
            let (m, v) = mean_var(&col[1..=n0]);
            means.push(m);
            sds.push(v.sqrt());
        }
        let mut model = Self::new(columns, means, sds, activation)?;
        model.init_mean = ym;
        model.init_log_sd = yv.sqrt().ln();
        Ok(model)
    }

    pub fn with_architecture(mut self, layers: usize, width: usize) -> Result<Self> {
        if layers < 1 || width < 1 {
            return Err(GvpError::Input("network needs at least one layer and node".into()));
        }
        self.layers = layers;
        self.width = width;
        Ok(self)
    }

    pub fn inputs(&self) -> usize {
        self.columns.len() + 1
    }

    pub fn weights(&self) -> usize {
        weight_count(self.inputs(), self.layers, self.width)
    }

    /// Standardized input vector for predicting `y_{t+1}`.
    fn input(&self, sample: &Sample, t: usize, z: &mut [f64]) -> Result<()> {
        z[0] = (sample.y[t] - self.input_mean[0]) / self.input_sd[0];
        for (i, &j) in self.columns.iter().enumerate() {
            let x = sample
                .covariates
                .get(j)
                .and_then(|c| c.get(t + 1))
                .ok_or_else(|| {
                    GvpError::Input(format!(
                        "covariate column {j} has no value at index {}",
                        t + 1
                    ))
                })?;
            z[i + 1] = (x - self.input_mean[i + 1]) / self.input_sd[i + 1];
        }
        Ok(())
    }

    /// Network output and its gradient with respect to the weights, by
    /// reverse accumulation.
    pub fn forward(&self, omega: &[f64], z: &[f64]) -> Result<(f64, Vec<f64>)> {
        if omega.len() != self.weights() || z.len() != self.inputs() {
            return Err(GvpError::Input(format!(
                "network expects {} weights and {} inputs, got {} and {}",
                self.weights(),
                self.inputs(),
                omega.len(),
                z.len()
            )));
        }
        let mut grad = vec![0.0; omega.len()];
        let mut scratch = Scratch::new(self);
        let g = self.eval(omega, z, Some(&mut grad), &mut scratch);
        Ok((g, grad))
    }

    fn eval(&self, omega: &[f64], z: &[f64], grad: Option<&mut [f64]>, s: &mut Scratch) -> f64 {
        let r = self.width;
        let mut off = 0;
        let mut fan_in = z.len();
        for layer in 0..self.layers {
            let (w, rest) = omega[off..].split_at(r * fan_in);
            let b = &rest[..r];
            let (prev, cur) = s.h.split_at_mut(layer);
            let input: &[f64] = if layer == 0 { z } else { &prev[layer - 1] };
            for i in 0..r {
                let a = b[i]
                    + w[i * fan_in..(i + 1) * fan_in]
                        .iter()
                        .zip(input)
                        .map(|(wi, xi)| wi * xi)
                        .sum::<f64>();
                let (h, dh) = self.activation.eval(a);
                cur[0][i] = h;
                s.dh[layer][i] = dh;
            }
            s.offsets[layer] = off;
            off += r * fan_in + r;
            fan_in = r;
        }
        let w_out = &omega[off..off + r];
        let last = &s.h[self.layers - 1];
        let g = omega[off + r] + w_out.iter().zip(last).map(|(w, h)| w * h).sum::<f64>();

        if let Some(grad) = grad {
            grad[off..off + r].copy_from_slice(last);
            grad[off + r] = 1.0;
            // delta for the last hidden layer
            let mut delta: Vec<f64> = (0..r).map(|i| w_out[i] * s.dh[self.layers - 1][i]).collect();
            for layer in (0..self.layers).rev() {
                let lo = s.offsets[layer];
                let fan_in = if layer == 0 { z.len() } else { r };
                let input: &[f64] = if layer == 0 { z } else { &s.h[layer - 1] };
                for i in 0..r {
                    for j in 0..fan_in {
                        grad[lo + i * fan_in + j] = delta[i] * input[j];
                    }
                    grad[lo + r * fan_in + i] = delta[i];
                }
                if layer > 0 {
                    let w = &omega[lo..lo + r * fan_in];
                    delta = (0..r)
                        .map(|j| {
                            let back: f64 = (0..r).map(|i| w[i * fan_in + j] * delta[i]).sum();
                            back * s.dh[layer - 1][j]
                        })
                        .collect();
                }
            }
        }
        g
    }
}

struct Scratch {
    h: Vec<Vec<f64>>,
    dh: Vec<Vec<f64>>,
    offsets: Vec<usize>,
    z: Vec<f64>,
}

impl Scratch {
    fn new(m: &BnnModel) -> Self {
        Scratch {
            h: vec![vec![0.0; m.width]; m.layers],
            dh: vec![vec![0.0; m.width]; m.layers],
            offsets: vec![0; m.layers],
            z: vec![0.0; m.inputs()],
        }
    }
}

impl PredictiveModel for BnnModel {
    fn name(&self) -> String {
        format!("bnn(p={})", self.inputs())
    }

    fn dim(&self) -> usize {
        self.weights() + 1
    }

    fn param_names(&self) -> Vec<String> {
        let mut names: Vec<String> = (1..=self.weights()).map(|i| format!("omega_{i}")).collect();
        names.push("c".into());
        names
    }

    fn log_prior(&self, _theta: &[f64]) -> f64 {
        0.0
    }

    fn grad_log_prior(&self, theta: &[f64]) -> Vec<f64> {
        vec![0.0; theta.len()]
    }

    fn initial_theta(&self, _sample: &Sample) -> Vec<f64> {
        let mut rng = rng_from_seed(INIT_SEED);
        let d = self.weights();
        let mut theta: Vec<f64> = (0..d)
            .map(|_| {
                let e: f64 = StandardNormal.sample(&mut rng);
                INIT_WEIGHT_SCALE * e
            })
            .collect();
        // Output bias starts at the window mean so the first predictive is centred.
        theta[d - 1] = self.init_mean;
        theta.push(self.init_log_sd);
        theta
    }

    fn predictives(
        &self,
        theta: &[f64],
        sample: &Sample,
        range: Range<usize>,
    ) -> Result<Vec<ConditionalPredictive>> {
        check_dim(theta, self.dim(), "bnn")?;
        check_range(sample, &range)?;
        let d = self.weights();
        let var = (2.0 * theta[d]).exp();
        if !(var > 0.0 && var.is_finite()) {
            return Err(GvpError::Domain(format!("exp(2c) = {var} for c = {}", theta[d])));
        }
        let mut s = Scratch::new(self);
        range
            .map(|t| {
                let mut z = std::mem::take(&mut s.z);
                self.input(sample, t, &mut z)?;
                let mean = self.eval(&theta[..d], &z, None, &mut s);
                s.z = z;
                ConditionalPredictive::gaussian(mean, var)
            })
            .collect()
    }

    fn criterion_gradient(
        &self,
        rule: &ResolvedRule,
        theta: &[f64],
        sample: &Sample,
    ) -> Result<(f64, Vec<f64>)> {
        check_dim(theta, self.dim(), "bnn")?;
        sample.validate()?;
        let d = self.weights();
        let var = (2.0 * theta[d]).exp();
        if !(var > 0.0 && var.is_finite()) {
            return Err(GvpError::Domain(format!("exp(2c) = {var} for c = {}", theta[d])));
        }
        let mut s = Scratch::new(self);
        let mut gw = vec![0.0; d];
        let mut grad = vec![0.0; d + 1];
        let mut total = 0.0;
        for t in 0..sample.n() {
            let mut z = std::mem::take(&mut s.z);
            self.input(sample, t, &mut z)?;
            let mean = self.eval(&theta[..d], &z, Some(&mut gw), &mut s);
            s.z = z;
            let sc = rule
                .gaussian(mean, var, sample.y[t + 1])
                .map_err(|e| e.at_term(t))?;
            total += sc.value;
            for (g, w) in grad[..d].iter_mut().zip(&gw) {
                *g += sc.d_mean * w;
            }
            grad[d] += sc.d_var * 2.0 * var;
        }
        Ok((total, grad))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(p: usize) -> BnnModel {
        BnnModel::new(
            (0..p - 1).collect(),
            vec![0.0; p],
            vec![1.0; p],
            Activation::Tanh,
        )
        .unwrap()
    }

    #[test]
    fn dimension_formula() {
        assert_eq!(model(1).dim(), 23);
        assert_eq!(model(2).dim(), 26);
        assert_eq!(model(3).dim(), 29);
    }

    #[test]
    fn zero_network_has_zero_output_and_unit_bias_gradient() {
        let m = model(1);
        let omega = vec![0.0; m.weights()];
        let (g, grad) = m.forward(&omega, &[0.7]).unwrap();
        assert_eq!(g, 0.0);
        assert_eq!(grad[m.weights() - 1], 1.0);
    }

    #[test]
    fn forward_gradient_matches_differences() {
        let m = model(2);
        let mut rng = rng_from_seed(3);
        let omega: Vec<f64> = (0..m.weights())
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        let z = [0.4, -1.3];
        let (_, grad) = m.forward(&omega, &z).unwrap();
        let h = 1e-6;
        for i in 0..omega.len() {
            let mut up = omega.clone();
            let mut dn = omega.clone();
            up[i] += h;
            dn[i] -= h;
            let fd = (m.forward(&up, &z).unwrap().0 - m.forward(&dn, &z).unwrap().0) / (2.0 * h);
            let rel = (fd - grad[i]).abs() / grad[i].abs().max(1e-3);
            assert!(rel < 1e-6, "weight {i}: {fd} vs {}", grad[i]);
        }
    }

    #[test]
    fn ls_gradient_in_c_at_the_mean_is_minus_one() {
        let m = model(1);
        let d = m.weights();
        let mut theta = vec![0.0; d + 1];
        theta[d - 1] = 0.5;
        theta[d] = 0.3;
        // y_0 arbitrary, y_1 equal to the network output 0.5
        let y = [0.0, 0.5];
        let (_, g) = m
            .criterion_gradient(&ResolvedRule::Ls, &theta, &Sample::univariate(&y))
            .unwrap();
        assert!((g[d] + 1.0).abs() < 1e-12);
    }
}
