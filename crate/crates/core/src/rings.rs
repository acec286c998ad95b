//! Concentric ring layout of a residual map.
//!
//! Non-DC bins are grouped into `R` equal-width rings around DC. Inside a
//! ring, bins are ordered clockwise (image rows grow downward) starting at
//! the positive horizontal axis; collinear bins are ordered by radius and
//! then row-major index. Ring `r` becomes row `r` of a zero-padded
//! `R x K_max` matrix with a binary validity mask.

use std::cmp::Ordering;
use std::io::{Read, Write};

use crate::binio;
use crate::error::{Error, Result};
use crate::spectrum::{bin_radius, corner_radius, radial_band, ResidualMap};

/// Identifier of the within-ring ordering convention stored in checkpoints.
pub const ORDERING_CONVENTION: u32 = 1;

const RINGS_MAGIC: &[u8; 4] = b"SRLR";
const RINGS_VERSION: u32 = 1;

/// Compares two offsets from DC by clockwise angle from the positive
/// horizontal axis, using exact integer arithmetic.
pub fn clockwise_cmp(a: (i64, i64), b: (i64, i64)) -> Ordering {
    // (drow, dcol); clockwise in image coordinates is counterclockwise in
    // (x = dcol, y = drow).
    let half = |(dy, dx): (i64, i64)| if dy > 0 || (dy == 0 && dx > 0) { 0 } else { 1 };
    half(a).cmp(&half(b)).then_with(|| {
        let cross = a.1 * b.0 - a.0 * b.1;
        0.cmp(&cross)
    })
}

/// Frozen partition of a grid into rings. Depends only on the grid shape,
/// the DC position and the ring count.
#[derive(Debug, Clone, PartialEq)]
pub struct RingGeometry {
    height: usize,
    width: usize,
    dc: (usize, usize),
    num_rings: usize,
    /// Row-major bin indices of each ring, in slot order.
    order: Vec<Vec<usize>>,
    k_max: usize,
}

impl RingGeometry {
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dc(&self) -> (usize, usize) {
        self.dc
    }

    pub fn num_rings(&self) -> usize {
        self.num_rings
    }

    pub fn k_max(&self) -> usize {
        self.k_max
    }

    /// Coefficient count `K_r` of every ring.
    pub fn counts(&self) -> Vec<usize> {
        self.order.iter().map(Vec::len).collect()
    }

    /// Row-major bin indices of ring `r`, in slot order.
    pub fn ring(&self, r: usize) -> &[usize] {
        &self.order[r]
    }

    /// `(ring, slot)` of every bin; `None` for DC.
    pub fn assignments(&self) -> Vec<Option<(usize, usize)>> {
        let mut out = vec![None; self.height * self.width];
        for (r, bins) in self.order.iter().enumerate() {
            for (k, &b) in bins.iter().enumerate() {
                out[b] = Some((r, k));
            }
        }
        out
    }

    /// Validity mask of the padded ring matrix, row-major.
    pub fn mask(&self) -> Vec<u8> {
        let mut m = vec![0u8; self.num_rings * self.k_max];
        for (r, bins) in self.order.iter().enumerate() {
            m[r * self.k_max..r * self.k_max + bins.len()].fill(1);
        }
        m
    }
}

pub fn build_geometry(height: usize, width: usize, dc: (usize, usize), num_rings: usize) -> Result<RingGeometry> {
    if num_rings == 0 {
        return Err(Error::Geometry("ring count must be positive".into()));
    }
    if height * width < 2 {
        return Err(Error::Geometry(format!("grid {height}x{width} has no non-DC bins")));
    }
    if dc.0 >= height || dc.1 >= width {
        return Err(Error::Geometry(format!("dc {dc:?} outside {height}x{width} grid")));
    }
    let r_max = corner_radius(height, width, dc);
    let mut order: Vec<Vec<usize>> = vec![Vec::new(); num_rings];
    for row in 0..height {
        for col in 0..width {
            if (row, col) == dc {
                continue;
            }
            let ring = radial_band(bin_radius(row, col, dc), r_max, num_rings);
            order[ring].push(row * width + col);
        }
    }
    if let Some(empty) = order.iter().position(Vec::is_empty) {
        return Err(Error::Geometry(format!(
            "ring {empty} of {num_rings} is empty on a {height}x{width} grid"
        )));
    }
    let offset = |b: usize| ((b / width) as i64 - dc.0 as i64, (b % width) as i64 - dc.1 as i64);
    for bins in &mut order {
        // bins are pushed in row-major order, so a stable sort keeps that as
        // the final tie-break
        bins.sort_by(|&a, &b| {
            let (oa, ob) = (offset(a), offset(b));
            clockwise_cmp(oa, ob).then_with(|| (oa.0 * oa.0 + oa.1 * oa.1).cmp(&(ob.0 * ob.0 + ob.1 * ob.1)))
        });
    }
    let k_max = order.iter().map(Vec::len).max().unwrap_or(0);
    Ok(RingGeometry {
        height,
        width,
        dc,
        num_rings,
        order,
        k_max,
    })
}

/// Padded ring matrix `X` with validity mask `M`, both `R x K_max` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct RingTensor {
    rings: usize,
    k_max: usize,
    values: Vec<f64>,
    mask: Vec<u8>,
}

impl RingTensor {
    /// Builds a tensor from explicit values and mask. The mask may be any
    /// binary pattern; padded values are kept as given.
    pub fn new(rings: usize, k_max: usize, values: Vec<f64>, mask: Vec<u8>) -> Result<Self> {
        if values.len() != rings * k_max || mask.len() != rings * k_max {
            return Err(Error::Dimension(format!(
                "ring tensor {rings}x{k_max} with {} values and {} mask entries",
                values.len(),
                mask.len()
            )));
        }
        if mask.iter().any(|&m| m > 1) {
            return Err(Error::Format("mask entries must be 0 or 1".into()));
        }
        Ok(Self {
            rings,
            k_max,
            values,
            mask,
        })
    }

    /// Builds a tensor whose row `r` is valid in its first `counts[r]`
    /// slots. Values at padded slots are zeroed.
    pub fn from_counts(counts: &[usize], k_max: usize, mut values: Vec<f64>) -> Result<Self> {
        let rings = counts.len();
        if values.len() != rings * k_max {
            return Err(Error::Dimension(format!(
                "{} values for a {rings}x{k_max} ring tensor",
                values.len()
            )));
        }
        let mut mask = vec![0u8; rings * k_max];
        for (r, &n) in counts.iter().enumerate() {
            if n > k_max {
                return Err(Error::Dimension(format!("ring {r} has {n} > k_max {k_max} entries")));
            }
            mask[r * k_max..r * k_max + n].fill(1);
            values[r * k_max + n..(r + 1) * k_max].fill(0.0);
        }
        Ok(Self {
            rings,
            k_max,
            values,
            mask,
        })
    }

    pub fn rings(&self) -> usize {
        self.rings
    }

    pub fn k_max(&self) -> usize {
        self.k_max
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn mask(&self) -> &[u8] {
        &self.mask
    }

    pub fn x(&self, r: usize, k: usize) -> f64 {
        self.values[r * self.k_max + k]
    }

    pub fn m(&self, r: usize, k: usize) -> bool {
        self.mask[r * self.k_max + k] == 1
    }

    pub fn mask_sum(&self) -> usize {
        self.mask.iter().map(|&m| m as usize).sum()
    }

    /// Mean of the valid entries of each row; `0` for rows with none.
    pub fn row_means(&self) -> Vec<f64> {
        (0..self.rings)
            .map(|r| {
                let (mut s, mut n) = (0.0, 0usize);
                for k in 0..self.k_max {
                    if self.m(r, k) {
                        s += self.x(r, k);
                        n += 1;
                    }
                }
                if n == 0 {
                    0.0
                } else {
                    s / n as f64
                }
            })
            .collect()
    }
}

pub fn extract_rings(res: &ResidualMap, geo: &RingGeometry) -> Result<RingTensor> {
    if res.height != geo.height || res.width != geo.width || res.dc != geo.dc {
        return Err(Error::Geometry(format!(
            "residual map {}x{} dc {:?} does not match geometry {}x{} dc {:?}",
            res.height, res.width, res.dc, geo.height, geo.width, geo.dc
        )));
    }
    let k_max = geo.k_max;
    let mut values = vec![0.0; geo.num_rings * k_max];
    for (r, bins) in geo.order.iter().enumerate() {
        let row = &mut values[r * k_max..r * k_max + bins.len()];
        for (slot, &b) in row.iter_mut().zip(bins) {
            *slot = res.values[b];
        }
    }
    Ok(RingTensor {
        rings: geo.num_rings,
        k_max,
        values,
        mask: geo.mask(),
    })
}

/// Azimuthal average of each ring read straight from the residual map.
pub fn azimuthal_average(res: &ResidualMap, geo: &RingGeometry) -> Vec<f64> {
    geo.order
        .iter()
        .map(|bins| bins.iter().map(|&b| res.values[b]).sum::<f64>() / bins.len() as f64)
        .collect()
}

/// Writes the `SRLR` binary ring format.
pub fn write_rings<W: Write>(mut w: W, t: &RingTensor) -> Result<()> {
    let io = |e| Error::io("<ring stream>", e);
    w.write_all(RINGS_MAGIC).map_err(io)?;
    binio::write_u32(&mut w, RINGS_VERSION).map_err(io)?;
    binio::write_u32(&mut w, t.rings as u32).map_err(io)?;
    binio::write_u32(&mut w, t.k_max as u32).map_err(io)?;
    binio::write_f32s(&mut w, &t.values).map_err(io)?;
    w.write_all(&t.mask).map_err(io)?;
    Ok(())
}

pub fn read_rings<R: Read>(mut r: R) -> Result<RingTensor> {
    let io = |e| Error::io("<ring stream>", e);
    binio::expect_magic(&mut r, RINGS_MAGIC)?;
    binio::expect_version(&mut r, RINGS_VERSION)?;
    let rings = binio::read_u32(&mut r).map_err(io)? as usize;
    let k_max = binio::read_u32(&mut r).map_err(io)? as usize;
    let values = binio::read_f32s(&mut r, rings * k_max).map_err(io)?;
    let mut mask = vec![0u8; rings * k_max];
    r.read_exact(&mut mask).map_err(io)?;
    RingTensor::new(rings, k_max, values, mask)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectrum::dc_position;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn residual(h: usize, w: usize, values: Vec<f64>) -> ResidualMap {
        ResidualMap {
            height: h,
            width: w,
            values,
            dc: dc_position(h, w),
            degenerate_fit: false,
        }
    }

    #[test]
    fn five_by_five_two_rings() {
        let g = build_geometry(5, 5, (2, 2), 2).unwrap();
        assert_eq!(g.counts(), vec![8, 16]);
        assert_eq!(g.k_max(), 16);
        // ring 0 is the 3x3 neighbourhood, clockwise from east
        let expect = [2 * 5 + 3, 3 * 5 + 3, 3 * 5 + 2, 3 * 5 + 1, 2 * 5 + 1, 5 + 1, 5 + 2, 5 + 3];
        assert_eq!(g.ring(0), &expect);
    }

    #[test]
    fn single_ring_holds_everything() {
        let g = build_geometry(7, 4, dc_position(7, 4), 1).unwrap();
        assert_eq!(g.counts(), vec![27]);
    }

    #[test]
    fn full_size_partition() {
        let g = build_geometry(500, 500, (250, 250), 32).unwrap();
        assert_eq!(g.counts().iter().sum::<usize>(), 249_999);
        assert_eq!(g.k_max(), *g.counts().iter().max().unwrap());
        assert_eq!(g.mask().iter().map(|&m| m as usize).sum::<usize>(), 249_999);
    }

    #[test]
    fn empty_ring_is_reported() {
        let err = build_geometry(3, 3, (1, 1), 8).unwrap_err();
        match err {
            Error::Geometry(msg) => assert!(msg.contains("ring 0"), "{msg}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn clockwise_ties_are_collinear_only() {
        assert_eq!(clockwise_cmp((0, 1), (0, 3)), Ordering::Equal);
        assert_eq!(clockwise_cmp((0, 1), (1, 1)), Ordering::Less);
        assert_eq!(clockwise_cmp((1, 0), (0, -1)), Ordering::Less);
        assert_eq!(clockwise_cmp((0, -1), (-1, 0)), Ordering::Less);
        assert_eq!(clockwise_cmp((-1, 0), (-1, 1)), Ordering::Less);
        assert_eq!(clockwise_cmp((-1, 1), (0, 1)), Ordering::Greater);
    }

    #[test]
    fn zero_map_gives_zero_matrix() {
        let g = build_geometry(9, 9, (4, 4), 3).unwrap();
        let t = extract_rings(&residual(9, 9, vec![0.0; 81]), &g).unwrap();
        assert!(t.values().iter().all(|&v| v == 0.0));
        assert_eq!(t.mask(), g.mask().as_slice());
    }

    #[test]
    fn single_hot_bin_lands_in_its_slot() {
        let g = build_geometry(11, 11, (5, 5), 4).unwrap();
        let assign = g.assignments();
        for hot in [0usize, 17, 59, 120] {
            let mut v = vec![0.0; 121];
            v[hot] = 1.0;
            let t = extract_rings(&residual(11, 11, v), &g).unwrap();
            let (r, k) = assign[hot].unwrap();
            assert_eq!(t.x(r, k), 1.0);
            assert_eq!(t.values().iter().filter(|&&x| x != 0.0).count(), 1);
        }
    }

    #[test]
    fn rotation_permutes_rows() {
        // odd square grid: a 90 degree rotation about DC maps rings to
        // themselves
        let n = 13;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let v: Vec<f64> = (0..n * n).map(|_| rng.random::<f64>()).collect();
        let mut rot = vec![0.0; n * n];
        for r in 0..n {
            for c in 0..n {
                rot[c * n + (n - 1 - r)] = v[r * n + c];
            }
        }
        let g = build_geometry(n, n, (6, 6), 4).unwrap();
        let a = extract_rings(&residual(n, n, v), &g).unwrap();
        let b = extract_rings(&residual(n, n, rot), &g).unwrap();
        let counts = g.counts();
        for r in 0..4 {
            let mut ra: Vec<f64> = (0..counts[r]).map(|k| a.x(r, k)).collect();
            let mut rb: Vec<f64> = (0..counts[r]).map(|k| b.x(r, k)).collect();
            ra.sort_by(f64::total_cmp);
            rb.sort_by(f64::total_cmp);
            assert_eq!(ra, rb);
        }
    }

    #[test]
    fn row_means_equal_azimuthal_average() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (h, w) = (20, 16);
        let res = residual(h, w, (0..h * w).map(|_| rng.random::<f64>() - 0.5).collect());
        let g = build_geometry(h, w, res.dc, 5).unwrap();
        let t = extract_rings(&res, &g).unwrap();
        for (a, b) in t.row_means().iter().zip(azimuthal_average(&res, &g)) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let g = build_geometry(9, 9, (4, 4), 3).unwrap();
        assert!(matches!(
            extract_rings(&residual(8, 8, vec![0.0; 64]), &g),
            Err(Error::Geometry(_))
        ));
    }

    #[test]
    fn from_counts_zeroes_padding() {
        let t = RingTensor::from_counts(&[1, 3], 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        assert_eq!(t.values(), &[1.0, 0.0, 0.0, 4.0, 5.0, 6.0]);
        assert_eq!(t.mask(), &[1, 0, 0, 1, 1, 1]);
    }

    #[test]
    fn ring_binary_round_trip() {
        let t = RingTensor::from_counts(&[2, 3], 3, vec![0.5, -2.0, 9.0, 1.0, 0.25, -0.75]).unwrap();
        let mut buf = Vec::new();
        write_rings(&mut buf, &t).unwrap();
        assert_eq!(&buf[..4], b"SRLR");
        assert_eq!(buf.len(), 16 + 6 * 4 + 6);
        assert_eq!(read_rings(&buf[..]).unwrap(), t);
    }
}
