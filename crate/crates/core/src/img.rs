//! Grayscale image storage, PGM/PNG I/O, and the synthetic test phantom.
//!
//! Pixels are `f64` intensities in the nominal range [0, 255], stored
//! row-major. Files are read and written losslessly for 8-bit data: an
//! integer sample maps to exactly the same real value.

use std::fs;
use std::ops::{Index, IndexMut};
use std::path::Path;

use crate::error::{Error, Result};

/// 2D grayscale image with one `f64` intensity per pixel, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageGrid {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl ImageGrid {
    /// Builds a grid, checking the shape and that every entry is finite.
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidImage(format!(
                "dimensions must be at least 1x1, got {height}x{width}"
            )));
        }
        if data.len() != height * width {
            return Err(Error::InvalidImage(format!(
                "data length {} does not match {height}x{width}",
                data.len()
            )));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidImage("non-finite pixel value".into()));
        }
        Ok(Self { height, width, data })
    }

    /// Grid filled with a single value.
    pub fn constant(height: usize, width: usize, value: f64) -> Self {
        Self { height, width, data: vec![value; height * width] }
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self::constant(height, width, 0.0)
    }

    /// Wraps an already-validated buffer without rescanning it.
    pub(crate) fn from_vec_unchecked(height: usize, width: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), height * width);
        Self { height, width, data }
    }

    /// Builds a grid by evaluating `f(row, col)` at every pixel.
    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for i in 0..height {
            for j in 0..width {
                data.push(f(i, j));
            }
        }
        Self { height, width, data }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Elementwise map into a new grid of the same shape.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Elementwise combination of two same-shaped grids.
    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        assert_eq!(self.dims(), other.dims(), "shape mismatch in zip_map");
        Self {
            height: self.height,
            width: self.width,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    /// Standard per-pixel inner product.
    pub fn dot(&self, other: &Self) -> f64 {
        assert_eq!(self.dims(), other.dims(), "shape mismatch in dot");
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn norm_l2(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn min_value(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn clamped(&self, lo: f64, hi: f64) -> Self {
        self.map(|v| v.clamp(lo, hi))
    }

    pub fn is_all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

impl Index<(usize, usize)> for ImageGrid {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.width + j]
    }
}

impl IndexMut<(usize, usize)> for ImageGrid {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.width + j]
    }
}

/// Loads an 8-bit grayscale PGM (P2 or P5) or PNG image.
///
/// Integer samples map to the same real value; color or 16-bit inputs are
/// rejected. The format is selected by file extension.
pub fn load_image(path: &Path) -> Result<ImageGrid> {
    match extension_of(path)?.as_str() {
        "pgm" => load_pgm(path),
        "png" => load_png(path),
        ext => Err(Error::UnsupportedFormat(format!(
            "{ext}: expected .pgm or .png"
        ))),
    }
}

/// Writes a grid as binary PGM (P5) or 8-bit grayscale PNG by extension.
///
/// Values are clamped to [0, 255] and rounded half away from zero.
pub fn save_image(grid: &ImageGrid, path: &Path) -> Result<()> {
    let bytes: Vec<u8> = grid
        .data()
        .iter()
        .map(|&v| v.clamp(0.0, 255.0).round() as u8)
        .collect();
    match extension_of(path)?.as_str() {
        "pgm" => {
            let mut out = Vec::with_capacity(bytes.len() + 32);
            out.extend_from_slice(format!("P5\n{} {}\n255\n", grid.width(), grid.height()).as_bytes());
            out.extend_from_slice(&bytes);
            fs::write(path, out).map_err(|source| Error::Write { path: path.into(), source })
        }
        "png" => {
            let img = image::GrayImage::from_raw(grid.width() as u32, grid.height() as u32, bytes)
                .expect("buffer length matches dimensions");
            img.save_with_format(path, image::ImageFormat::Png)
                .map_err(|e| Error::Write {
                    path: path.into(),
                    source: std::io::Error::other(e.to_string()),
                })
        }
        ext => Err(Error::UnsupportedFormat(format!(
            "{ext}: expected .pgm or .png"
        ))),
    }
}

fn extension_of(path: &Path) -> Result<String> {
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
        .ok_or_else(|| Error::UnsupportedFormat(format!("{}: missing extension", path.display())))
}

fn load_png(path: &Path) -> Result<ImageGrid> {
    let reader = image::ImageReader::open(path)
        .map_err(|source| Error::Read { path: path.into(), source })?;
    let img = reader
        .decode()
        .map_err(|e| Error::UnsupportedFormat(format!("{}: {e}", path.display())))?;
    match img {
        image::DynamicImage::ImageLuma8(g) => {
            let (w, h) = (g.width() as usize, g.height() as usize);
            ImageGrid::new(h, w, g.into_raw().into_iter().map(f64::from).collect())
        }
        image::DynamicImage::ImageLuma16(_) => Err(Error::UnsupportedFormat(
            "16-bit PNG not supported".into(),
        )),
        other => Err(Error::GrayscaleRequired(format!(
            "PNG has color type {:?}",
            other.color()
        ))),
    }
}

fn load_pgm(path: &Path) -> Result<ImageGrid> {
    let bytes = fs::read(path).map_err(|source| Error::Read { path: path.into(), source })?;
    let mut cursor = 0usize;
    let magic = next_token(&bytes, &mut cursor)
        .ok_or_else(|| Error::UnsupportedFormat("empty PGM file".into()))?;
    match magic.as_str() {
        "P2" | "P5" => {}
        "P3" | "P6" => return Err(Error::GrayscaleRequired("color PPM input".into())),
        other => {
            return Err(Error::UnsupportedFormat(format!(
                "PNM magic {other}: only P2/P5 supported"
            )))
        }
    }
    let width = next_usize(&bytes, &mut cursor, "width")?;
    let height = next_usize(&bytes, &mut cursor, "height")?;
    let maxval = next_usize(&bytes, &mut cursor, "maxval")?;
    if maxval == 0 || maxval > 255 {
        return Err(Error::UnsupportedFormat(format!(
            "PGM maxval {maxval}: only 8-bit (maxval <= 255) supported"
        )));
    }
    let npix = width
        .checked_mul(height)
        .ok_or_else(|| Error::InvalidImage("image dimensions overflow".into()))?;

    let mut data = Vec::with_capacity(npix);
    if magic == "P5" {
        // Single whitespace byte separates the header from raw samples.
        cursor += 1;
        if bytes.len() < cursor + npix {
            return Err(Error::InvalidImage(format!(
                "P5 payload truncated: expected {npix} samples"
            )));
        }
        for &b in &bytes[cursor..cursor + npix] {
            if b as usize > maxval {
                return Err(Error::InvalidImage(format!(
                    "sample {b} exceeds maxval {maxval}"
                )));
            }
            data.push(f64::from(b));
        }
    } else {
        for _ in 0..npix {
            let v = next_usize(&bytes, &mut cursor, "sample")?;
            if v > maxval {
                return Err(Error::InvalidImage(format!(
                    "sample {v} exceeds maxval {maxval}"
                )));
            }
            data.push(v as f64);
        }
    }
    ImageGrid::new(height, width, data)
}

/// Reads the next whitespace-delimited PNM header token, skipping `#` comments.
fn next_token(bytes: &[u8], cursor: &mut usize) -> Option<String> {
    loop {
        while *cursor < bytes.len() && bytes[*cursor].is_ascii_whitespace() {
            *cursor += 1;
        }
        if *cursor < bytes.len() && bytes[*cursor] == b'#' {
            while *cursor < bytes.len() && bytes[*cursor] != b'\n' {
                *cursor += 1;
            }
            continue;
        }
        break;
    }
    let start = *cursor;
    while *cursor < bytes.len() && !bytes[*cursor].is_ascii_whitespace() {
        *cursor += 1;
    }
    if start == *cursor {
        None
    } else {
        Some(String::from_utf8_lossy(&bytes[start..*cursor]).into_owned())
    }
}

fn next_usize(bytes: &[u8], cursor: &mut usize, what: &str) -> Result<usize> {
    next_token(bytes, cursor)
        .ok_or_else(|| Error::InvalidImage(format!("PGM header ended before {what}")))?
        .parse()
        .map_err(|_| Error::InvalidImage(format!("PGM {what} is not a number")))
}

/// Deterministic piecewise-constant phantom: background 60, a disk at 200,
/// a rectangle at 130, and a 3-pixel diagonal stripe at 255.
///
/// Every intensity is strictly positive so Poisson means and `log` of the
/// blurred image stay well defined.
pub fn make_synthetic(size: usize) -> Result<ImageGrid> {
    if size < 32 {
        return Err(Error::InvalidParameter(format!(
            "synthetic size must be at least 32, got {size}"
        )));
    }
    let disk_center = size as f64 / 3.0;
    let disk_radius = size as f64 / 5.0;
    let rect_lo = size / 2 + size / 16;
    let rect_hi = size - size / 16;
    let mut grid = ImageGrid::constant(size, size, 60.0);
    for i in 0..size {
        for j in 0..size {
            let (di, dj) = (i as f64 - disk_center, j as f64 - disk_center);
            if di * di + dj * dj <= disk_radius * disk_radius {
                grid[(i, j)] = 200.0;
            }
            if (rect_lo..rect_hi).contains(&i) && (rect_lo..rect_hi).contains(&j) {
                grid[(i, j)] = 130.0;
            }
            if i.abs_diff(j) <= 1 {
                grid[(i, j)] = 255.0;
            }
        }
    }
    Ok(grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn tmpdir() -> tempfile::TempDir {
        tempfile::tempdir().expect("create temp dir")
    }

    #[test]
    fn grid_invariants_are_enforced() {
        assert!(ImageGrid::new(0, 4, vec![]).is_err());
        assert!(ImageGrid::new(2, 2, vec![0.0; 3]).is_err());
        assert!(ImageGrid::new(1, 2, vec![0.0, f64::NAN]).is_err());
        assert!(ImageGrid::new(1, 2, vec![0.0, f64::INFINITY]).is_err());
        assert!(ImageGrid::new(1, 1, vec![7.0]).is_ok());
    }

    #[test]
    fn ascii_pgm_values_map_identically() {
        let dir = tmpdir();
        let path = dir.path().join("a.pgm");
        fs::write(&path, "P2\n# comment\n2 2\n255\n0 64\n128 255\n").unwrap();
        let grid = load_image(&path).unwrap();
        assert_eq!(grid.dims(), (2, 2));
        assert_eq!(grid.data(), &[0.0, 64.0, 128.0, 255.0]);
    }

    #[test]
    fn save_load_round_trip_is_identity() {
        let dir = tmpdir();
        for name in ["r.pgm", "r.png"] {
            let path = dir.path().join(name);
            let grid = ImageGrid::from_fn(5, 7, |i, j| ((i * 41 + j * 13) % 256) as f64);
            save_image(&grid, &path).unwrap();
            let back = load_image(&path).unwrap();
            assert_eq!(grid, back, "round trip failed for {name}");
        }
    }

    #[test]
    fn save_clamps_and_rounds_half_away_from_zero() {
        let dir = tmpdir();
        let path = dir.path().join("c.pgm");
        let grid = ImageGrid::new(1, 4, vec![255.7, -3.0, 127.5, 10.4]).unwrap();
        save_image(&grid, &path).unwrap();
        let back = load_image(&path).unwrap();
        assert_eq!(back.data(), &[255.0, 0.0, 128.0, 10.0]);
    }

    #[test]
    fn color_png_is_rejected() {
        let dir = tmpdir();
        let path = dir.path().join("rgb.png");
        let img = image::RgbImage::from_pixel(3, 3, image::Rgb([10, 20, 30]));
        img.save(&path).unwrap();
        match load_image(&path) {
            Err(Error::GrayscaleRequired(_)) => {}
            other => panic!("expected GrayscaleRequired, got {other:?}"),
        }
    }

    #[test]
    fn color_ppm_is_rejected() {
        let dir = tmpdir();
        let path = dir.path().join("c.pgm");
        fs::write(&path, "P3\n1 1\n255\n1 2 3\n").unwrap();
        assert!(matches!(load_image(&path), Err(Error::GrayscaleRequired(_))));
    }

    #[test]
    fn sixteen_bit_pgm_is_rejected() {
        let dir = tmpdir();
        let path = dir.path().join("deep.pgm");
        fs::write(&path, "P2\n1 1\n65535\n1000\n").unwrap();
        assert!(matches!(load_image(&path), Err(Error::UnsupportedFormat(_))));
    }

    #[test]
    fn binary_pgm_loads() {
        let dir = tmpdir();
        let path = dir.path().join("b.pgm");
        let mut bytes = b"P5\n2 2\n255\n".to_vec();
        bytes.extend_from_slice(&[0, 64, 128, 255]);
        fs::write(&path, bytes).unwrap();
        let grid = load_image(&path).unwrap();
        assert_eq!(grid.data(), &[0.0, 64.0, 128.0, 255.0]);
    }

    #[test]
    fn missing_file_reports_read_error() {
        assert!(matches!(
            load_image(Path::new("/nonexistent/x.pgm")),
            Err(Error::Read { .. })
        ));
    }

    #[test]
    fn synthetic_is_deterministic_with_expected_range() {
        let a = make_synthetic(128).unwrap();
        let b = make_synthetic(128).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.dims(), (128, 128));
        assert_eq!(a.min_value(), 60.0);
        assert_eq!(a.max_value(), 255.0);
    }

    #[test]
    fn synthetic_histogram_has_exactly_four_values() {
        for size in [32, 100, 128] {
            let grid = make_synthetic(size).unwrap();
            let values: BTreeSet<u64> = grid.data().iter().map(|&v| v as u64).collect();
            assert_eq!(
                values,
                BTreeSet::from([60, 130, 200, 255]),
                "size {size}"
            );
        }
    }

    #[test]
    fn synthetic_rejects_small_sizes() {
        assert!(make_synthetic(31).is_err());
        assert!(make_synthetic(0).is_err());
    }
}
