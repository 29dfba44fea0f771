//! Bilinear upsampling of coarse bands onto the 10 m grid.
//!
//! Pixels are areas: fine pixel `i` has its center at `(i + 0.5) / factor - 0.5`
//! in coarse pixel coordinates. Samples outside the grid clamp to the edge.
//! Because the mapping is a pure translation of the output index, any window
//! can be computed directly from the coarse grid and equals the same window
//! cut from a full upsampled band.

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};

pub const TARGET_RESOLUTION: f64 = 10.0;

/// Integer upsampling factor from `native_res` to the 10 m grid.
pub fn upsample_factor(native_res: f64) -> Result<usize> {
    if native_res == 10.0 {
        Ok(1)
    } else if native_res == 20.0 {
        Ok(2)
    } else {
        Err(Error::UnsupportedResolution(native_res))
    }
}

/// Upsamples a whole band to the 10 m grid. 10 m input is returned unchanged.
pub fn upsample_band(grid: ArrayView2<f32>, native_res: f64) -> Result<Array2<f32>> {
    let factor = upsample_factor(native_res)?;
    if grid.is_empty() {
        return Err(Error::Invalid("cannot upsample an empty grid".into()));
    }
    if factor == 1 {
        return Ok(grid.to_owned());
    }
    let (h, w) = grid.dim();
    Ok(upsample_window(grid, factor, 0, 0, h * factor, w * factor))
}

/// Computes the `rows x cols` window with top-left fine pixel `(row0, col0)`
/// of the band upsampled by `factor`.
pub fn upsample_window(
    grid: ArrayView2<f32>,
    factor: usize,
    row0: usize,
    col0: usize,
    rows: usize,
    cols: usize,
) -> Array2<f32> {
    let (h, w) = grid.dim();
    if factor == 1 {
        return grid
            .slice(ndarray::s![row0..row0 + rows, col0..col0 + cols])
            .to_owned();
    }
    let taps = |i: usize, n: usize| -> (usize, usize, f64) {
        let src = ((i as f64 + 0.5) / factor as f64 - 0.5).clamp(0.0, (n - 1) as f64);
        let lo = src.floor() as usize;
        let hi = (lo + 1).min(n - 1);
        (lo, hi, src - lo as f64)
    };
    let col_taps: Vec<_> = (col0..col0 + cols).map(|c| taps(c, w)).collect();
    Array2::from_shape_fn((rows, cols), |(r, c)| {
        let (y0, y1, wy) = taps(row0 + r, h);
        let (x0, x1, wx) = col_taps[c];
        let top = (1.0 - wx) * grid[[y0, x0]] as f64 + wx * grid[[y0, x1]] as f64;
        let bottom = (1.0 - wx) * grid[[y1, x0]] as f64 + wx * grid[[y1, x1]] as f64;
        ((1.0 - wy) * top + wy * bottom) as f32
    })
}
