//! Debug rendering of one 2D slice: grey levels plus a white contour.

use std::path::Path;

use image::{GrayImage, Luma};

use crate::error::CliError;
use crate::format::{MaskData, MaskFile};

pub fn export_png(file: &MaskFile, slice: usize, scale: u32, out: &Path) -> Result<(), CliError> {
    let (slices, rows, cols) = match file.dims.as_slice() {
        [n] => (1, 1, *n),
        [r, c] => (1, *r, *c),
        [s, r, c] => (*s, *r, *c),
        _ => return Err(CliError::Format(format!("cannot render dims {:?}", file.dims))),
    };
    if slice >= slices {
        return Err(CliError::Usage(format!("slice {slice} out of range (0..{slices})")));
    }
    let scale = scale.max(1);
    let offset = slice * rows * cols;
    let value = |r: usize, c: usize| -> f64 {
        match &file.data {
            MaskData::Binary(v) => v[offset + r * cols + c] as u8 as f64,
            MaskData::Soft(v) => v[offset + r * cols + c],
        }
    };
    let inside = |r: isize, c: isize| -> bool {
        r >= 0 && c >= 0 && (r as usize) < rows && (c as usize) < cols && value(r as usize, c as usize) > 0.5
    };
    let mut img = GrayImage::new(cols as u32 * scale, rows as u32 * scale);
    for r in 0..rows {
        for c in 0..cols {
            let (ri, ci) = (r as isize, c as isize);
            let edge = inside(ri, ci)
                && [(-1, 0), (1, 0), (0, -1), (0, 1)]
                    .iter()
                    .any(|(dr, dc)| !inside(ri + dr, ci + dc));
            let grey = if edge { 255 } else { (value(r, c) * 200.0).round() as u8 };
            for y in 0..scale {
                for x in 0..scale {
                    img.put_pixel(c as u32 * scale + x, r as u32 * scale + y, Luma([grey]));
                }
            }
        }
    }
    img.save(out)
        .map_err(|e| CliError::Format(format!("{}: {e}", out.display())))
}
