//! Image loading and dataset manifests.
//!
//! Every image entering the pipeline is converted to a single luminance
//! channel in `[0, 1]` and resampled to [`ANALYSIS_SIZE`] square with a
//! corner-aligned bilinear filter.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use image::DynamicImage;

use crate::error::{Error, Result};

/// Side length of the square analysis grid.
pub const ANALYSIS_SIZE: usize = 500;

const LUMA_R: f64 = 0.299;
const LUMA_G: f64 = 0.587;
const LUMA_B: f64 = 0.114;

/// A grayscale intensity grid with values in `[0, 1]`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralImage {
    height: usize,
    width: usize,
    pixels: Vec<f64>,
    source: String,
}

impl SpectralImage {
    /// Wraps a row-major pixel buffer, rejecting empty grids and values
    /// outside `[0, 1]`.
    pub fn new(height: usize, width: usize, pixels: Vec<f64>, source: impl Into<String>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::Format(format!("zero-dimension image {height}x{width}")));
        }
        if pixels.len() != height * width {
            return Err(Error::Format(format!(
                "pixel buffer has {} values, expected {}x{}",
                pixels.len(),
                height,
                width
            )));
        }
        if let Some(i) = pixels.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Format(format!(
                "pixel {} at ({}, {}) outside [0, 1]",
                pixels[i],
                i / width,
                i % width
            )));
        }
        Ok(Self {
            height,
            width,
            pixels,
            source: source.into(),
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * self.width + col]
    }

    pub fn into_pixels(self) -> Vec<f64> {
        self.pixels
    }
}

/// Luminance of an RGB triple already scaled to `[0, 1]`.
///
/// Gray triples map to themselves exactly.
pub fn luminance(r: f64, g: f64, b: f64) -> f64 {
    if r == g && g == b {
        return r;
    }
    (LUMA_R * r + LUMA_G * g + LUMA_B * b).clamp(0.0, 1.0)
}

/// Converts a decoded image into a `[0, 1]` luminance buffer at its native size.
pub fn to_grayscale(img: &DynamicImage) -> (usize, usize, Vec<f64>) {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let pixels = match img {
        DynamicImage::ImageLuma8(buf) => buf.pixels().map(|p| p.0[0] as f64 / 255.0).collect(),
        DynamicImage::ImageLumaA8(buf) => buf.pixels().map(|p| p.0[0] as f64 / 255.0).collect(),
        DynamicImage::ImageLuma16(buf) => buf.pixels().map(|p| p.0[0] as f64 / 65535.0).collect(),
        DynamicImage::ImageLumaA16(buf) => buf.pixels().map(|p| p.0[0] as f64 / 65535.0).collect(),
        DynamicImage::ImageRgb8(buf) => buf
            .pixels()
            .map(|p| rgb8(p.0[0], p.0[1], p.0[2]))
            .collect(),
        DynamicImage::ImageRgba8(buf) => buf
            .pixels()
            .map(|p| rgb8(p.0[0], p.0[1], p.0[2]))
            .collect(),
        DynamicImage::ImageRgb16(buf) => buf
            .pixels()
            .map(|p| rgb16(p.0[0], p.0[1], p.0[2]))
            .collect(),
        DynamicImage::ImageRgba16(buf) => buf
            .pixels()
            .map(|p| rgb16(p.0[0], p.0[1], p.0[2]))
            .collect(),
        other => other
            .to_rgb32f()
            .pixels()
            .map(|p| {
                let c = |v: f32| (v as f64).clamp(0.0, 1.0);
                luminance(c(p.0[0]), c(p.0[1]), c(p.0[2]))
            })
            .collect(),
    };
    (h, w, pixels)
}

fn rgb8(r: u8, g: u8, b: u8) -> f64 {
    luminance(r as f64 / 255.0, g as f64 / 255.0, b as f64 / 255.0)
}

fn rgb16(r: u16, g: u16, b: u16) -> f64 {
    luminance(r as f64 / 65535.0, g as f64 / 65535.0, b as f64 / 65535.0)
}

/// Corner-aligned bilinear resampling: output corners land exactly on input
/// corners. Same-size input is returned unchanged.
pub fn resize_bilinear(src: &[f64], src_h: usize, src_w: usize, dst_h: usize, dst_w: usize) -> Vec<f64> {
    assert_eq!(src.len(), src_h * src_w);
    if src_h == dst_h && src_w == dst_w {
        return src.to_vec();
    }
    let axis = |n_src: usize, n_dst: usize| -> Vec<(usize, usize, f64)> {
        (0..n_dst)
            .map(|i| {
                let pos = if n_dst == 1 || n_src == 1 {
                    0.0
                } else {
                    i as f64 * (n_src - 1) as f64 / (n_dst - 1) as f64
                };
                let i0 = (pos.floor() as usize).min(n_src - 1);
                let i1 = (i0 + 1).min(n_src - 1);
                (i0, i1, pos - i0 as f64)
            })
            .collect()
    };
    let rows = axis(src_h, dst_h);
    let cols = axis(src_w, dst_w);
    let lerp = |a: f64, b: f64, t: f64| a + t * (b - a);

    let mut out = Vec::with_capacity(dst_h * dst_w);
    for &(r0, r1, ty) in &rows {
        for &(c0, c1, tx) in &cols {
            let top = lerp(src[r0 * src_w + c0], src[r0 * src_w + c1], tx);
            let bottom = lerp(src[r1 * src_w + c0], src[r1 * src_w + c1], tx);
            out.push(lerp(top, bottom, ty));
        }
    }
    out
}

/// Builds an analysis-resolution image from an in-memory decoded image.
pub fn prepare_image(img: &DynamicImage, source: impl Into<String>) -> Result<SpectralImage> {
    let (h, w, gray) = to_grayscale(img);
    if h == 0 || w == 0 {
        return Err(Error::Format(format!("zero-dimension image {h}x{w}")));
    }
    let pixels = resize_bilinear(&gray, h, w, ANALYSIS_SIZE, ANALYSIS_SIZE)
        .into_iter()
        .map(|v| v.clamp(0.0, 1.0))
        .collect();
    SpectralImage::new(ANALYSIS_SIZE, ANALYSIS_SIZE, pixels, source)
}

/// Loads an image from disk as a 500x500 luminance grid in `[0, 1]`.
pub fn load_image(path: impl AsRef<Path>) -> Result<SpectralImage> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let reader = image::ImageReader::new(std::io::Cursor::new(bytes))
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?;
    let img = reader.decode().map_err(|source| Error::Decode {
        path: path.to_path_buf(),
        source,
    })?;
    prepare_image(&img, path.display().to_string())
}

/// Writes a `[0, 1]` grid as a 16-bit grayscale PNG.
pub fn save_png16(path: impl AsRef<Path>, height: usize, width: usize, pixels: &[f64]) -> Result<()> {
    let path = path.as_ref();
    let data: Vec<u16> = pixels
        .iter()
        .map(|v| (v.clamp(0.0, 1.0) * 65535.0).round() as u16)
        .collect();
    let buf = image::ImageBuffer::<image::Luma<u16>, Vec<u16>>::from_raw(width as u32, height as u32, data)
        .ok_or_else(|| Error::Format("pixel buffer does not match dimensions".into()))?;
    buf.save(path).map_err(|source| match source {
        image::ImageError::IoError(e) => Error::io(path, e),
        other => Error::Decode {
            path: path.to_path_buf(),
            source: other,
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Bonafide,
    Attack,
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "bonafide" => Ok(Label::Bonafide),
            "attack" => Ok(Label::Attack),
            other => Err(format!("unknown label `{other}`")),
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Bonafide => "bonafide",
            Label::Attack => "attack",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split `{other}`")),
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub label: Label,
    pub split: Split,
}

/// A labelled list of images. The train split is bona fide only.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DatasetManifest {
    entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    /// Validates path uniqueness and the one-class constraint.
    pub fn new(entries: Vec<ManifestEntry>) -> Result<Self> {
        let mut seen = std::collections::BTreeSet::new();
        for e in &entries {
            if e.split == Split::Train && e.label == Label::Attack {
                return Err(Error::Protocol(format!(
                    "attack sample {} in train split",
                    e.path.display()
                )));
            }
            if !seen.insert(&e.path) {
                return Err(Error::Format(format!("duplicate manifest path {}", e.path.display())));
            }
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[ManifestEntry] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }

    /// Parses the tab-separated manifest text. Relative paths are resolved
    /// against `base` when given.
    pub fn parse(text: &str, base: Option<&Path>) -> Result<Self> {
        let mut entries = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(Error::Parse {
                    line: line_no,
                    msg: format!("expected 3 tab-separated fields, found {}", fields.len()),
                });
            }
            let label = fields[1]
                .trim()
                .parse::<Label>()
                .map_err(|msg| Error::Parse { line: line_no, msg })?;
            let split = fields[2]
                .trim()
                .parse::<Split>()
                .map_err(|msg| Error::Parse { line: line_no, msg })?;
            let mut path = PathBuf::from(fields[0]);
            if let Some(base) = base {
                if path.is_relative() {
                    path = base.join(path);
                }
            }
            entries.push(ManifestEntry { path, label, split });
        }
        if entries.is_empty() {
            log::warn!("manifest contains no entries");
        }
        Self::new(entries)
    }

    /// Serializes with paths written verbatim.
    pub fn to_text(&self) -> String {
        let mut out = String::from("# path\tlabel\tsplit\n");
        for e in &self.entries {
            out.push_str(&format!("{}\t{}\t{}\n", e.path.display(), e.label, e.split));
        }
        out
    }
}

/// Reads a manifest file; relative paths resolve against the file's directory.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    DatasetManifest::parse(&text, path.parent())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gray_triple_is_identity() {
        for v in [0.0, 0.1, 0.5019607843137255, 0.77, 1.0] {
            assert_eq!(luminance(v, v, v), v);
        }
        assert!((luminance(1.0, 0.0, 0.0) - 0.299).abs() < 1e-15);
    }

    #[test]
    fn resize_constant_is_constant() {
        let src = vec![0.37; 7 * 11];
        let out = resize_bilinear(&src, 7, 11, 23, 5);
        assert!(out.iter().all(|&v| v == 0.37));
    }

    #[test]
    fn resize_hits_corners() {
        let src = vec![0.0, 1.0, 0.25, 0.5];
        let out = resize_bilinear(&src, 2, 2, 5, 5);
        assert_eq!(out[0], 0.0);
        assert_eq!(out[4], 1.0);
        assert_eq!(out[20], 0.25);
        assert_eq!(out[24], 0.5);
        assert_eq!(out[2], 0.5);
    }

    #[test]
    fn rejects_out_of_range_pixels() {
        assert!(matches!(
            SpectralImage::new(1, 2, vec![0.5, 1.5], "x"),
            Err(Error::Format(_))
        ));
        assert!(SpectralImage::new(1, 1, vec![f64::NAN], "x").is_err());
        assert!(SpectralImage::new(0, 1, vec![], "x").is_err());
    }

    #[test]
    fn manifest_parses_and_enforces_one_class() {
        let m = DatasetManifest::parse("a.png\tbonafide\ttrain\nb.png\tbonafide\ttrain\n", None).unwrap();
        assert_eq!(m.len(), 2);

        let err = DatasetManifest::parse("a.png\tattack\ttrain\n", None).unwrap_err();
        assert!(matches!(err, Error::Protocol(_)));

        let err = DatasetManifest::parse("a.png\tmorph\ttest\n", None).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));

        let err = DatasetManifest::parse("a.png\tbonafide\ttest\na.png\tattack\ttest\n", None).unwrap_err();
        assert!(matches!(err, Error::Format(_)));
    }

    #[test]
    fn manifest_skips_comments_and_blank_lines() {
        let text = "# header\n\nx.png\tattack\ttest\n# trailing\n";
        let m = DatasetManifest::parse(text, Some(Path::new("/data"))).unwrap();
        assert_eq!(m.entries()[0].path, PathBuf::from("/data/x.png"));
        assert_eq!(m.entries()[0].label, Label::Attack);
        assert_eq!(m.entries()[0].split, Split::Test);
    }

    #[test]
    fn empty_manifest_is_allowed() {
        assert!(DatasetManifest::parse("", None).unwrap().is_empty());
        assert!(DatasetManifest::parse("# only a comment\n", None).unwrap().is_empty());
    }

    #[test]
    fn manifest_text_round_trips() {
        let text = "a.png\tbonafide\ttrain\nb.png\tattack\ttest\nc.png\tbonafide\tval\n";
        let m = DatasetManifest::parse(text, None).unwrap();
        assert_eq!(DatasetManifest::parse(&m.to_text(), None).unwrap(), m);
    }
}
