use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// Dense depth map in millimetres, row-major. A sample of 0 means "no return".
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DepthImage {
    width: usize,
    height: usize,
    data: Vec<u16>,
}

impl DepthImage {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0; width * height],
        }
    }

    pub fn filled(width: usize, height: usize, value: u16) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<u16>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::invalid(format!(
                "depth buffer has {} samples, expected {}x{}",
                data.len(),
                width,
                height
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u16) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self { width, height, data }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u16 {
        self.data[y * self.width + x]
    }

    /// Like [`get`](Self::get) but returns 0 outside the image.
    #[inline]
    pub fn get_or_invalid(&self, x: i64, y: i64) -> u16 {
        if x < 0 || y < 0 || x >= self.width as i64 || y >= self.height as i64 {
            0
        } else {
            self.data[y as usize * self.width + x as usize]
        }
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: u16) {
        self.data[y * self.width + x] = value;
    }

    pub fn as_slice(&self) -> &[u16] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [u16] {
        &mut self.data
    }

    /// Fraction of pixels holding a valid depth no farther than `max_range` mm.
    pub fn in_range_fraction(&self, max_range: f64) -> f64 {
        let n = self
            .data
            .iter()
            .filter(|&&d| d > 0 && f64::from(d) <= max_range)
            .count();
        n as f64 / self.data.len().max(1) as f64
    }

    /// Binary PGM (`P5`, maxval 65535, big-endian samples).
    pub fn to_pgm_bytes(&self) -> Vec<u8> {
        let header = format!("P5\n{} {}\n65535\n", self.width, self.height);
        let mut out = Vec::with_capacity(header.len() + self.data.len() * 2);
        out.extend_from_slice(header.as_bytes());
        for &d in &self.data {
            out.extend_from_slice(&d.to_be_bytes());
        }
        out
    }

    pub fn write_pgm(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        file.write_all(&self.to_pgm_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read_pgm(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_pgm_bytes(&bytes).map_err(|reason| Error::Pgm {
            path: path.to_path_buf(),
            reason,
        })
    }

    /// Parses a binary PGM. 8-bit files (maxval < 256) are accepted and widened.
    pub fn from_pgm_bytes(bytes: &[u8]) -> std::result::Result<Self, String> {
        let mut pos = 0usize;
        let magic = next_token(bytes, &mut pos).ok_or("missing magic")?;
        if magic != b"P5" {
            return Err(format!("unsupported magic {:?}", String::from_utf8_lossy(magic)));
        }
        let width = parse_header_number(bytes, &mut pos, "width")?;
        let height = parse_header_number(bytes, &mut pos, "height")?;
        let maxval = parse_header_number(bytes, &mut pos, "maxval")?;
        if width == 0 || height == 0 {
            return Err("zero image dimension".into());
        }
        if maxval == 0 || maxval > 65535 {
            return Err(format!("maxval {maxval} out of range"));
        }
        // exactly one whitespace byte separates the header from the raster
        if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
            return Err("missing raster separator".into());
        }
        pos += 1;
        let n = width * height;
        let raster = &bytes[pos..];
        let data: Vec<u16> = if maxval < 256 {
            if raster.len() < n {
                return Err(format!("truncated raster: {} of {} bytes", raster.len(), n));
            }
            raster[..n].iter().map(|&b| u16::from(b)).collect()
        } else {
            if raster.len() < 2 * n {
                return Err(format!("truncated raster: {} of {} bytes", raster.len(), 2 * n));
            }
            raster[..2 * n]
                .chunks_exact(2)
                .map(|c| u16::from_be_bytes([c[0], c[1]]))
                .collect()
        };
        if data.iter().any(|&d| usize::from(d) > maxval) {
            return Err("sample exceeds maxval".into());
        }
        Ok(Self { width, height, data })
    }
}

fn next_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Option<&'a [u8]> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    (start < *pos).then(|| &bytes[start..*pos])
}

fn parse_header_number(bytes: &[u8], pos: &mut usize, what: &str) -> std::result::Result<usize, String> {
    let tok = next_token(bytes, pos).ok_or_else(|| format!("missing {what}"))?;
    std::str::from_utf8(tok)
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| format!("bad {what} {:?}", String::from_utf8_lossy(tok)))
}
