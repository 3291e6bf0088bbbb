//! Per-pixel handcrafted features for the surrogate model.

use celldet_core::imgproc::gaussian_blur;
use celldet_core::{Error, Raster};
use serde::{Deserialize, Serialize};

use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    pub image_channels: usize,
    pub blur_sigmas: Vec<f64>,
    /// Scale of the local standard deviation window.
    pub std_sigma: f64,
    pub include_tissue_channels: bool,
    pub tissue_channels: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            image_channels: 3,
            blur_sigmas: vec![1.0, 2.0, 4.0, 8.0],
            std_sigma: 2.0,
            include_tissue_channels: false,
            tissue_channels: 2,
        }
    }
}

impl FeatureConfig {
    pub fn with_tissue(mut self, include: bool) -> Self {
        self.include_tissue_channels = include;
        self
    }

    pub fn base_count(&self) -> usize {
        self.image_channels * (2 + self.blur_sigmas.len())
    }

    pub fn count(&self) -> usize {
        self.base_count() + if self.include_tissue_channels { self.tissue_channels } else { 0 }
    }

    /// Channels the model expects in its input raster.
    pub fn input_channels(&self) -> usize {
        self.image_channels + if self.include_tissue_channels { self.tissue_channels } else { 0 }
    }
}

/// Raw channels, Gaussian-blurred channels at every configured scale, local
/// standard deviation per channel, then the tissue channels when enabled.
pub fn extract_features(cell_img: &Raster, tissue: Option<&Raster>, cfg: &FeatureConfig) -> Result<Raster> {
    if cell_img.channels() != cfg.image_channels {
        return Err(Error::Shape(format!(
            "expected {} image channels, got {}",
            cfg.image_channels,
            cell_img.channels()
        ))
        .into());
    }
    let mut parts: Vec<Raster> = vec![cell_img.clone()];
    for &s in &cfg.blur_sigmas {
        parts.push(gaussian_blur(cell_img, s)?);
    }
    let mean = gaussian_blur(cell_img, cfg.std_sigma)?;
    let mean_sq = gaussian_blur(&cell_img.map(|v| v * v), cfg.std_sigma)?;
    let mut std = mean_sq;
    for (s, m) in std.data_mut().iter_mut().zip(mean.data()) {
        *s = (*s - m * m).max(0.0).sqrt();
    }
    parts.push(std);
    if cfg.include_tissue_channels {
        let t = tissue.ok_or_else(|| Error::Parameter("tissue channels requested but none given".into()))?;
        if t.dims() != cell_img.dims() || t.channels() != cfg.tissue_channels {
            return Err(Error::Shape(format!(
                "tissue channels {}x{}x{} do not align with the {}x{} image",
                t.height(),
                t.width(),
                t.channels(),
                cell_img.height(),
                cell_img.width()
            ))
            .into());
        }
        parts.push(t.clone());
    }
    let refs: Vec<&Raster> = parts.iter().collect();
    let mut out = Raster::stack(&refs)?;
    out.mpp = cell_img.mpp;
    Ok(out)
}

/// Features of a model input whose leading channels are the image and whose
/// remaining channels (if any) are tissue context.
pub fn features_of_input(input: &Raster, cfg: &FeatureConfig) -> Result<Raster> {
    if input.channels() != cfg.input_channels() {
        return Err(Error::Shape(format!(
            "model expects {} input channels, got {}",
            cfg.input_channels(),
            input.channels()
        ))
        .into());
    }
    let image = input.channel_range(0, cfg.image_channels);
    if cfg.include_tissue_channels {
        let tissue = input.channel_range(cfg.image_channels, input.channels());
        extract_features(&image, Some(&tissue), cfg)
    } else {
        extract_features(&image, None, cfg)
    }
}
