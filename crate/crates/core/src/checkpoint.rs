//! `SRLC` model checkpoints.
//!
//! Layout (little-endian): magic `SRLC`, u32 version, u32 R, u32 K_max,
//! u32 hidden width, then the frozen ring geometry as u32 R, R x u32 ring
//! counts, u32 ordering convention, u32 grid height, u32 grid width; then
//! every parameter tensor as `f32` in [`crate::model::TENSOR_NAMES`] order;
//! then the calibration as f64 mu, f64 sigma.

use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::binio;
use crate::error::{Error, Result};
use crate::model::{ModelParams, ModelShape};
use crate::rings::{build_geometry, RingGeometry, ORDERING_CONVENTION};
use crate::scoring::LatentCalibration;
use crate::spectrum::dc_position;

const MAGIC: &[u8; 4] = b"SRLC";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub grid_height: usize,
    pub grid_width: usize,
    pub ring_counts: Vec<usize>,
    pub params: ModelParams,
    pub calibration: LatentCalibration,
}

impl Checkpoint {
    /// Rebuilds the ring geometry and checks it against the stored counts.
    pub fn geometry(&self) -> Result<RingGeometry> {
        let geo = build_geometry(
            self.grid_height,
            self.grid_width,
            dc_position(self.grid_height, self.grid_width),
            self.ring_counts.len(),
        )?;
        if geo.counts() != self.ring_counts {
            return Err(Error::Geometry("stored ring counts do not match rebuilt geometry".into()));
        }
        Ok(geo)
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        let io = |e| Error::io("<checkpoint stream>", e);
        let shape = &self.params.shape;
        w.write_all(MAGIC).map_err(io)?;
        for v in [VERSION, shape.rings as u32, shape.k_max as u32, shape.hidden as u32] {
            binio::write_u32(&mut w, v).map_err(io)?;
        }
        binio::write_u32(&mut w, self.ring_counts.len() as u32).map_err(io)?;
        for &c in &self.ring_counts {
            binio::write_u32(&mut w, c as u32).map_err(io)?;
        }
        for v in [ORDERING_CONVENTION, self.grid_height as u32, self.grid_width as u32] {
            binio::write_u32(&mut w, v).map_err(io)?;
        }
        for t in self.params.tensors() {
            binio::write_f32s(&mut w, t).map_err(io)?;
        }
        binio::write_f64(&mut w, self.calibration.mu).map_err(io)?;
        binio::write_f64(&mut w, self.calibration.sigma).map_err(io)?;
        Ok(())
    }

    pub fn read<R: Read>(mut r: R) -> Result<Self> {
        let io = |e| Error::io("<checkpoint stream>", e);
        binio::expect_magic(&mut r, MAGIC)?;
        binio::expect_version(&mut r, VERSION)?;
        let mut u32s = |n: usize| -> Result<Vec<usize>> {
            (0..n)
                .map(|_| binio::read_u32(&mut r).map(|v| v as usize).map_err(io))
                .collect()
        };
        let head = u32s(4)?;
        let (rings, k_max, hidden, geo_rings) = (head[0], head[1], head[2], head[3]);
        if geo_rings != rings {
            return Err(Error::Format(format!("geometry has {geo_rings} rings, model {rings}")));
        }
        let ring_counts = u32s(rings)?;
        let tail = u32s(3)?;
        if tail[0] != ORDERING_CONVENTION as usize {
            return Err(Error::Format(format!("unknown ring ordering convention {}", tail[0])));
        }
        if ring_counts.iter().any(|&c| c > k_max) || ring_counts.iter().max() != Some(&k_max) {
            return Err(Error::Format("ring counts inconsistent with K_max".into()));
        }
        let mut params = ModelParams::zeros(ModelShape::new(rings, k_max, hidden)?);
        for t in params.tensors_mut() {
            let values = binio::read_f32s(&mut r, t.len()).map_err(io)?;
            t.copy_from_slice(&values);
        }
        let mu = binio::read_f64(&mut r).map_err(io)?;
        let sigma = binio::read_f64(&mut r).map_err(io)?;
        Ok(Self {
            grid_height: tail[1],
            grid_width: tail[2],
            ring_counts,
            params,
            calibration: LatentCalibration { mu, sigma },
        })
    }

    /// Writes to a temporary sibling file, then renames over `path`.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut tmp = path.as_os_str().to_owned();
        tmp.push(".tmp");
        let tmp = std::path::PathBuf::from(tmp);
        {
            let file = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
            let mut w = BufWriter::new(file);
            self.write(&mut w)?;
            w.flush().map_err(|e| Error::io(&tmp, e))?;
        }
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read(BufReader::new(file))
    }
}
