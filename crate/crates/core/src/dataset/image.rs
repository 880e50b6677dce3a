use std::fs;
use std::io::BufWriter;
use std::path::Path;

use crate::error::{Error, Result};

/// A pixel grid with 1 (grayscale) or 3 (HSV or RGB) channels, stored
/// row-major with channels interleaved. Values are bytes, so the [0, 255]
/// range holds by construction.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<u8>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::shape(format!("image dimensions must be positive, got {width}x{height}")));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::shape(format!("images have 1 or 3 channels, got {channels}")));
        }
        let expected = width * height * channels;
        if data.len() != expected {
            return Err(Error::Length { expected, found: data.len() });
        }
        Ok(Image { width, height, channels, data })
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: u8) -> Result<Self> {
        Image::new(width, height, channels, vec![value; width * height * channels])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.width, self.height, self.channels)
    }

    pub fn same_dims(&self, other: &Image) -> bool {
        self.dims() == other.dims()
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> u8 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, v: u8) {
        self.data[(y * self.width + x) * self.channels + c] = v;
    }

    /// Pixel values divided by 255, in planar (channel-major) order as the
    /// network expects.
    pub fn to_unit_planar(&self) -> Vec<f64> {
        let plane = self.width * self.height;
        let mut out = vec![0.0; plane * self.channels];
        for p in 0..plane {
            for c in 0..self.channels {
                out[c * plane + p] = f64::from(self.data[p * self.channels + c]) / 255.0;
            }
        }
        out
    }

    /// Inverse of [`Image::to_unit_planar`]; values are clamped to [0, 1]
    /// and rounded to the nearest byte.
    pub fn from_unit_planar(width: usize, height: usize, channels: usize, planar: &[f64]) -> Result<Self> {
        let plane = width * height;
        if planar.len() != plane * channels {
            return Err(Error::Length { expected: plane * channels, found: planar.len() });
        }
        let mut data = vec![0u8; plane * channels];
        for p in 0..plane {
            for c in 0..channels {
                data[p * channels + c] = unit_to_byte(planar[c * plane + p]);
            }
        }
        Image::new(width, height, channels, data)
    }

    /// Copy of the `w`×`h` window whose top-left corner is (`x0`, `y0`).
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Result<Image> {
        if x0 + w > self.width || y0 + h > self.height {
            return Err(Error::shape(format!(
                "crop {w}x{h}@({x0},{y0}) exceeds image {}x{}",
                self.width, self.height
            )));
        }
        let c = self.channels;
        let mut data = Vec::with_capacity(w * h * c);
        for y in y0..y0 + h {
            let start = (y * self.width + x0) * c;
            data.extend_from_slice(&self.data[start..start + w * c]);
        }
        Image::new(w, h, c, data)
    }

    /// Left-right mirror.
    pub fn mirror_horizontal(&self) -> Image {
        let mut out = self.clone();
        for y in 0..self.height {
            for x in 0..self.width {
                for c in 0..self.channels {
                    out.set(x, y, c, self.get(self.width - 1 - x, y, c));
                }
            }
        }
        out
    }

    /// Write binary PGM (1 channel) or PPM (3 channels).
    pub fn to_pnm_bytes(&self) -> Vec<u8> {
        let magic = if self.channels == 1 { "P5" } else { "P6" };
        let mut out = format!("{magic}\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.data);
        out
    }

    pub fn from_pnm_bytes(bytes: &[u8]) -> Result<Image> {
        let mut fields = Vec::with_capacity(4);
        let mut pos = 0;
        while fields.len() < 4 {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(Error::Format("truncated PNM header".into()));
            }
            fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
        }
        // exactly one whitespace byte separates the header from the raster
        pos += 1;
        let channels = match fields[0].as_str() {
            "P5" => 1,
            "P6" => 3,
            other => return Err(Error::Format(format!("unsupported PNM magic {other:?}"))),
        };
        let parse = |s: &str| s.parse::<usize>().map_err(|_| Error::Format(format!("bad PNM header field {s:?}")));
        let (w, h, maxval) = (parse(&fields[1])?, parse(&fields[2])?, parse(&fields[3])?);
        if maxval != 255 {
            return Err(Error::Format(format!("only 8-bit PNM is supported, maxval {maxval}")));
        }
        let need = w * h * channels;
        let raster = bytes.get(pos..).unwrap_or(&[]);
        if raster.len() < need {
            return Err(Error::Length { expected: need, found: raster.len() });
        }
        Image::new(w, h, channels, raster[..need].to_vec())
    }

    pub fn write_pnm(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path.as_ref(), self.to_pnm_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read_pnm(path: impl AsRef<Path>) -> Result<Image> {
        let bytes = fs::read(path.as_ref()).map_err(|e| Error::io(path.as_ref(), e))?;
        Image::from_pnm_bytes(&bytes)
    }

    /// Write an 8-bit PNG. Three-channel images are written as RGB, so HSV
    /// genomes should go through `hsv_to_rgb` first.
    pub fn write_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut enc = png::Encoder::new(BufWriter::new(file), self.width as u32, self.height as u32);
        enc.set_color(if self.channels == 1 { png::ColorType::Grayscale } else { png::ColorType::Rgb });
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc.write_header().map_err(|e| Error::Format(e.to_string()))?;
        writer.write_image_data(&self.data).map_err(|e| Error::Format(e.to_string()))?;
        writer.finish().map_err(|e| Error::Format(e.to_string()))
    }

    /// Writes PNG when the extension is `.png`, binary PGM/PPM otherwise.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("png") => self.write_png(path),
            _ => self.write_pnm(path),
        }
    }
}

#[inline]
pub(crate) fn unit_to_byte(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}
