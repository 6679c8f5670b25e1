use super::{BoundingBox, FaceError};
use crate::neural_kernel::Matrix;

/// Grayscale image with pixels in `[0, 1]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self, FaceError> {
        if width == 0 || height == 0 || pixels.len() != width * height {
            return Err(FaceError::InvalidImage(format!(
                "{width}x{height} image with {} pixels",
                pixels.len()
            )));
        }
        if pixels.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(FaceError::InvalidImage("pixel outside [0, 1]".into()));
        }
        Ok(Self { width, height, pixels })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Self { width, height, pixels: vec![value.clamp(0.0, 1.0); width * height] }
    }

    /// Builds an image from a matrix, clamping values into `[0, 1]`.
    pub fn from_matrix_clamped(m: &Matrix) -> Self {
        Self {
            width: m.cols(),
            height: m.rows(),
            pixels: m.data().iter().map(|v| v.clamp(0.0, 1.0)).collect(),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }

    pub fn to_matrix(&self) -> Matrix {
        Matrix::new(self.height, self.width, self.pixels.clone()).expect("image dimensions are valid")
    }

    /// Decodes a single binary PGM (P5, maxval 255) image.
    pub fn from_pgm(bytes: &[u8]) -> Result<Self, FaceError> {
        let (img, rest) = parse_pgm(bytes)?;
        if !rest.iter().all(u8::is_ascii_whitespace) {
            return Err(FaceError::Pgm("trailing data after image".into()));
        }
        Ok(img)
    }

    /// Encodes as binary PGM, rounding to 8 bits.
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(self.pixels.iter().map(|p| (p * 255.0).round().clamp(0.0, 255.0) as u8));
        out
    }
}

/// Decodes a stream of concatenated P5 images (the netpbm multi-image
/// convention), as used for stored video blobs.
pub fn decode_pgm_stream(mut bytes: &[u8]) -> Result<Vec<GrayImage>, FaceError> {
    let mut frames = Vec::new();
    loop {
        let start = bytes.iter().position(|b| !b.is_ascii_whitespace());
        match start {
            None => break,
            Some(i) => bytes = &bytes[i..],
        }
        let (img, rest) = parse_pgm(bytes)?;
        frames.push(img);
        bytes = rest;
    }
    if frames.is_empty() {
        return Err(FaceError::Pgm("no frames in stream".into()));
    }
    Ok(frames)
}

fn parse_pgm(bytes: &[u8]) -> Result<(GrayImage, &[u8]), FaceError> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(FaceError::Pgm("missing P5 magic".into()));
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in &mut fields {
        // whitespace and comments
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                break;
            }
        }
        let start = pos;
        while pos < bytes.len() && bytes[pos].is_ascii_digit() {
            pos += 1;
        }
        if start == pos {
            return Err(FaceError::Pgm("truncated header".into()));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| FaceError::Pgm("bad header number".into()))?;
    }
    let [width, height, maxval] = fields;
    if maxval != 255 {
        return Err(FaceError::Pgm(format!("unsupported maxval {maxval}")));
    }
    if width == 0 || height == 0 {
        return Err(FaceError::Pgm("zero image dimension".into()));
    }
    // exactly one whitespace byte before the raster
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(FaceError::Pgm("truncated header".into()));
    }
    pos += 1;
    let n = width * height;
    if bytes.len() < pos + n {
        return Err(FaceError::Pgm("truncated raster".into()));
    }
    let pixels = bytes[pos..pos + n].iter().map(|&b| b as f64 / 255.0).collect();
    Ok((GrayImage { width, height, pixels }, &bytes[pos + n..]))
}

/// Bilinear sample at `(x, y)`; `None` outside the pixel grid.
#[inline]
pub(crate) fn sample_bilinear(m: &Matrix, x: f64, y: f64) -> Option<f64> {
    let max_x = (m.cols() - 1) as f64;
    let max_y = (m.rows() - 1) as f64;
    if !(x >= 0.0 && y >= 0.0 && x <= max_x && y <= max_y) {
        return None;
    }
    Some(sample_clamped(m, x, y))
}

/// Bilinear sample with coordinates clamped to the grid.
#[inline]
pub(crate) fn sample_clamped(m: &Matrix, x: f64, y: f64) -> f64 {
    let x = x.clamp(0.0, (m.cols() - 1) as f64);
    let y = y.clamp(0.0, (m.rows() - 1) as f64);
    let x0 = x.floor() as usize;
    let y0 = y.floor() as usize;
    let fx = x - x0 as f64;
    let fy = y - y0 as f64;
    let x1 = (x0 + 1).min(m.cols() - 1);
    let y1 = (y0 + 1).min(m.rows() - 1);
    let top = if fx == 0.0 { m.get(y0, x0) } else { m.get(y0, x0) * (1.0 - fx) + m.get(y0, x1) * fx };
    if fy == 0.0 {
        return top;
    }
    let bottom = if fx == 0.0 { m.get(y1, x0) } else { m.get(y1, x0) * (1.0 - fx) + m.get(y1, x1) * fx };
    top * (1.0 - fy) + bottom * fy
}

/// Bilinear resize with pixel-center alignment.
pub fn resize_matrix(m: &Matrix, rows: usize, cols: usize) -> Matrix {
    let sx = m.cols() as f64 / cols as f64;
    let sy = m.rows() as f64 / rows as f64;
    let mut out = Matrix::zeros(rows, cols);
    for r in 0..rows {
        let y = (r as f64 + 0.5) * sy - 0.5;
        for c in 0..cols {
            let x = (c as f64 + 0.5) * sx - 0.5;
            out.set(r, c, sample_clamped(m, x, y));
        }
    }
    out
}

/// Samples the region `box` (in pixel coordinates of `m`) onto a
/// `rows × cols` grid; samples outside `m` are 0.
pub fn crop_resize(m: &Matrix, b: &BoundingBox, rows: usize, cols: usize) -> Matrix {
    let sx = b.w / cols as f64;
    let sy = b.h / rows as f64;
    let mut out = Matrix::zeros(rows, cols);
    for r in 0..rows {
        let y = b.y + (r as f64 + 0.5) * sy - 0.5;
        for c in 0..cols {
            let x = b.x + (c as f64 + 0.5) * sx - 0.5;
            out.set(r, c, sample_bilinear(m, x, y).unwrap_or(0.0));
        }
    }
    out
}

pub fn resize(img: &GrayImage, width: usize, height: usize) -> GrayImage {
    GrayImage::from_matrix_clamped(&resize_matrix(&img.to_matrix(), height, width))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_round_trip() {
        let img = GrayImage::new(3, 2, vec![0.0, 1.0, 128.0 / 255.0, 1.0 / 255.0, 0.5 + 0.5 / 255.0, 0.2]).unwrap();
        let bytes = img.to_pgm();
        assert!(bytes.starts_with(b"P5\n3 2\n255\n"));
        let back = GrayImage::from_pgm(&bytes).unwrap();
        assert_eq!(back.get(0, 0), 0.0);
        assert_eq!(back.get(1, 0), 1.0);
        assert_eq!(back.get(2, 0), 128.0 / 255.0);
    }

    #[test]
    fn pgm_with_comment_and_stream() {
        let mut bytes = b"P5\n# a comment\n2 1\n255\n\x00\xff".to_vec();
        bytes.extend_from_slice(b"P5 1 1 255\n\x80");
        let frames = decode_pgm_stream(&bytes).unwrap();
        assert_eq!(frames.len(), 2);
        assert_eq!(frames[0].pixels(), &[0.0, 1.0]);
        assert_eq!(frames[1].get(0, 0), 128.0 / 255.0);
        assert!(GrayImage::from_pgm(&bytes).is_err());
    }

    #[test]
    fn rejects_other_formats() {
        assert!(GrayImage::from_pgm(b"P2\n1 1\n255\n0").is_err());
        assert!(GrayImage::from_pgm(b"P5\n1 1\n65535\n\0\0").is_err());
        assert!(GrayImage::from_pgm(b"P5\n2 2\n255\n\0").is_err());
    }

    #[test]
    fn resize_constant_stays_constant() {
        let m = Matrix::filled(7, 9, 0.37);
        let r = resize_matrix(&m, 4, 3);
        assert!(r.data().iter().all(|v| (v - 0.37).abs() < 1e-12));
    }

    #[test]
    fn same_size_resize_is_identity() {
        let m = Matrix::new(2, 3, vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6]).unwrap();
        assert_eq!(resize_matrix(&m, 2, 3), m);
    }

    #[test]
    fn bilinear_midpoint() {
        let m = Matrix::from_rows(&[&[0.0, 1.0], &[2.0, 3.0]]).unwrap();
        assert_eq!(sample_bilinear(&m, 0.5, 0.5), Some(1.5));
        assert_eq!(sample_bilinear(&m, 1.0, 1.0), Some(3.0));
        assert_eq!(sample_bilinear(&m, 1.01, 0.0), None);
    }
}
