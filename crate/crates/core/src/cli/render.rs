//! PNG heatmaps of encoded images, one pixel per matrix entry.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Palette {
    /// 8-bit grayscale, -1 -> 0 and +1 -> 255, linear.
    Gray,
    /// RGB, -1 blue through 0 white to +1 red.
    Diverging,
}

/// Linear map of `[-1, 1]` onto `0..=255`, clamped.
pub fn gray_level(v: f64) -> u8 {
    ((v.clamp(-1.0, 1.0) + 1.0) * 127.5).round() as u8
}

pub fn diverging_rgb(v: f64) -> [u8; 3] {
    let v = v.clamp(-1.0, 1.0);
    if v < 0.0 {
        let c = (255.0 * (1.0 + v)).round() as u8;
        [c, c, 255]
    } else {
        let c = (255.0 * (1.0 - v)).round() as u8;
        [255, c, c]
    }
}

pub fn image_filename(record_id: &str, offset: u64, label: &str) -> String {
    format!("{record_id}_{offset}_{label}.png")
}

/// Writes a row-major `n x n` image to `path`.
pub fn write_png(values: &[f64], n: usize, palette: Palette, path: &Path) -> Result<()> {
    if values.len() != n * n {
        return Err(Error::ShapeMismatch(format!(
            "{} values for a {n}x{n} image",
            values.len()
        )));
    }
    let file = File::create(path).map_err(|e| Error::write(path, e))?;
    let mut encoder = png::Encoder::new(BufWriter::new(file), n as u32, n as u32);
    encoder.set_depth(png::BitDepth::Eight);
    let data: Vec<u8> = match palette {
        Palette::Gray => {
            encoder.set_color(png::ColorType::Grayscale);
            values.iter().map(|&v| gray_level(v)).collect()
        }
        Palette::Diverging => {
            encoder.set_color(png::ColorType::Rgb);
            values.iter().flat_map(|&v| diverging_rgb(v)).collect()
        }
    };
    let io = |e: png::EncodingError| Error::write(path, std::io::Error::other(e));
    let mut writer = encoder.write_header().map_err(io)?;
    writer.write_image_data(&data).map_err(io)?;
    writer.finish().map_err(io)
}
