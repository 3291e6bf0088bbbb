//! Per-pixel softmax linear classifier.

use celldet_core::{Error, Raster};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::features::{features_of_input, FeatureConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PixelModel {
    pub features: FeatureConfig,
    pub classes: usize,
    /// Per-feature standardisation applied before the linear map.
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    /// Row-major `[feature][class]`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl PixelModel {
    pub fn new(features: FeatureConfig, classes: usize) -> Self {
        let n = features.count();
        Self {
            features,
            classes,
            mean: vec![0.0; n],
            scale: vec![1.0; n],
            weights: vec![0.0; n * classes],
            bias: vec![0.0; classes],
        }
    }

    pub fn n_features(&self) -> usize {
        self.mean.len()
    }

    /// Sets the standardisation from the pooled statistics of `feats`.
    pub fn fit_standardization(&mut self, feats: &[&Raster]) {
        let nf = self.n_features();
        let count: usize = feats.iter().map(|f| f.plane_len()).sum();
        if count == 0 {
            return;
        }
        for k in 0..nf {
            let mut s = 0.0;
            let mut s2 = 0.0;
            for f in feats {
                for &v in f.plane(k) {
                    s += v;
                    s2 += v * v;
                }
            }
            let m = s / count as f64;
            let var = (s2 / count as f64 - m * m).max(0.0);
            self.mean[k] = m;
            self.scale[k] = if var > 1e-12 { var.sqrt() } else { 1.0 };
        }
    }

    pub fn n_params(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    pub fn params(&self) -> Vec<f64> {
        self.weights.iter().chain(&self.bias).copied().collect()
    }

    pub fn set_params(&mut self, p: &[f64]) {
        let nw = self.weights.len();
        self.weights.copy_from_slice(&p[..nw]);
        self.bias.copy_from_slice(&p[nw..]);
    }

    pub fn is_finite(&self) -> bool {
        self.params().iter().all(|v| v.is_finite())
    }

    fn check_features(&self, feats: &Raster) -> Result<()> {
        if feats.channels() != self.n_features() {
            return Err(Error::Shape(format!(
                "model has {} features, raster has {} channels",
                self.n_features(),
                feats.channels()
            ))
            .into());
        }
        Ok(())
    }

    /// Softmax class probabilities from a feature raster.
    pub fn predict_features(&self, feats: &Raster) -> Result<Raster> {
        self.check_features(feats)?;
        let (h, w) = feats.dims();
        let nf = self.n_features();
        let k = self.classes;
        let mut out = Raster::zeros(h, w, k);
        out.mpp = feats.mpp;
        let mut z = vec![0.0; nf];
        let mut logits = vec![0.0; k];
        let n = h * w;
        let fd = feats.data();
        let od = out.data_mut();
        for i in 0..n {
            for f in 0..nf {
                z[f] = (fd[f * n + i] - self.mean[f]) / self.scale[f];
            }
            logits.copy_from_slice(&self.bias);
            for f in 0..nf {
                let row = &self.weights[f * k..(f + 1) * k];
                for c in 0..k {
                    logits[c] += z[f] * row[c];
                }
            }
            let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut s = 0.0;
            for l in logits.iter_mut() {
                *l = (*l - m).exp();
                s += *l;
            }
            for c in 0..k {
                od[c * n + i] = logits[c] / s;
            }
        }
        Ok(out)
    }

    /// Probabilities for a model input (image channels, then tissue channels
    /// when the model uses them).
    pub fn predict(&self, input: &Raster) -> Result<Raster> {
        self.predict_features(&features_of_input(input, &self.features)?)
    }

    /// Accumulates parameter gradients given d(loss)/d(probability).
    pub fn accumulate_gradient(&self, feats: &Raster, probs: &Raster, dprob: &Raster, grad: &mut [f64]) {
        let nf = self.n_features();
        let k = self.classes;
        let n = feats.plane_len();
        let (fd, pd, gd) = (feats.data(), probs.data(), dprob.data());
        let nw = self.weights.len();
        let mut z = vec![0.0; nf];
        let mut dl = vec![0.0; k];
        for i in 0..n {
            // Softmax Jacobian: dL/dlogit_c = p_c (g_c - sum_j p_j g_j).
            let mut dot = 0.0;
            for c in 0..k {
                dot += pd[c * n + i] * gd[c * n + i];
            }
            let mut any = false;
            for c in 0..k {
                dl[c] = pd[c * n + i] * (gd[c * n + i] - dot);
                any |= dl[c] != 0.0;
            }
            if !any {
                continue;
            }
            for f in 0..nf {
                z[f] = (fd[f * n + i] - self.mean[f]) / self.scale[f];
            }
            for f in 0..nf {
                let row = &mut grad[f * k..(f + 1) * k];
                for c in 0..k {
                    row[c] += z[f] * dl[c];
                }
            }
            for c in 0..k {
                grad[nw + c] += dl[c];
            }
        }
    }
}
