//! Frozen, non-learnable preprocessing: image to ring tensor.

use std::path::Path;

use crate::error::Result;
use crate::image_io::{load_image, SpectralImage, ANALYSIS_SIZE};
use crate::rings::{build_geometry, extract_rings, RingGeometry, RingTensor};
use crate::spectrum::{compute_residual, dc_position, ResidualMap};

/// Residual extraction and ring layout sharing one geometry. The power-law
/// fit uses as many radial bands as there are rings.
#[derive(Debug, Clone)]
pub struct FeatureExtractor {
    geometry: RingGeometry,
}

impl FeatureExtractor {
    /// Extractor for the standard analysis resolution.
    pub fn new(num_rings: usize) -> Result<Self> {
        Self::with_size(ANALYSIS_SIZE, ANALYSIS_SIZE, num_rings)
    }

    pub fn with_size(height: usize, width: usize, num_rings: usize) -> Result<Self> {
        let geometry = build_geometry(height, width, dc_position(height, width), num_rings)?;
        Ok(Self { geometry })
    }

    pub fn from_geometry(geometry: RingGeometry) -> Self {
        Self { geometry }
    }

    pub fn geometry(&self) -> &RingGeometry {
        &self.geometry
    }

    pub fn residual(&self, img: &SpectralImage) -> Result<ResidualMap> {
        compute_residual(img, self.geometry.num_rings().max(2))
    }

    pub fn extract(&self, img: &SpectralImage) -> Result<RingTensor> {
        extract_rings(&self.residual(img)?, &self.geometry)
    }

    pub fn extract_path(&self, path: impl AsRef<Path>) -> Result<RingTensor> {
        self.extract(&load_image(path)?)
    }
}
