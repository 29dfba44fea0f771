//! The eight symmetries of the square.
//!
//! `transform_id = r + 4 * f`: `f = 1` mirrors columns first, then `r`
//! quarter turns are applied. Each transform is a 2x2 integer matrix acting
//! on pixel coordinates centered on the patch, so composition is a matrix
//! product.

use ndarray::{Array3, Axis};

use crate::error::{Error, Result};

pub const NUM_TRANSFORMS: u8 = 8;

type Mat = [[i32; 2]; 2];

const ROT: Mat = [[0, -1], [1, 0]];
const FLIP: Mat = [[-1, 0], [0, 1]];
const ID: Mat = [[1, 0], [0, 1]];

fn mul(a: Mat, b: Mat) -> Mat {
    let mut m = [[0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            m[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    m
}

fn matrix(id: u8) -> Mat {
    let mut m = if id >= 4 { FLIP } else { ID };
    for _ in 0..id % 4 {
        m = mul(ROT, m);
    }
    m
}

fn check(id: u8) -> Result<()> {
    if id >= NUM_TRANSFORMS {
        return Err(Error::InvalidTransform(id));
    }
    Ok(())
}

fn id_of(m: Mat) -> u8 {
    (0..NUM_TRANSFORMS)
        .find(|&i| matrix(i) == m)
        .expect("the eight matrices are closed under products")
}

/// The transform equal to applying `first` and then `second`.
pub fn compose(first: u8, second: u8) -> Result<u8> {
    check(first)?;
    check(second)?;
    Ok(id_of(mul(matrix(second), matrix(first))))
}

pub fn inverse(id: u8) -> Result<u8> {
    check(id)?;
    Ok((0..NUM_TRANSFORMS)
        .find(|&j| compose(id, j).ok() == Some(0))
        .expect("group inverse exists"))
}

/// For each output pixel (row-major), the source pixel index.
pub fn source_index(id: u8, size: usize) -> Result<Vec<usize>> {
    check(id)?;
    // inverse matrix of an orthogonal integer matrix is its transpose
    let m = matrix(id);
    let n = size as i64;
    let mut idx = Vec::with_capacity(size * size);
    for r in 0..n {
        for c in 0..n {
            // doubled centered coordinates stay integral
            let (u, v) = ((2 * c - (n - 1)) as i32, (2 * r - (n - 1)) as i32);
            let su = m[0][0] * u + m[1][0] * v;
            let sv = m[0][1] * u + m[1][1] * v;
            let sc = (su as i64 + n - 1) / 2;
            let sr = (sv as i64 + n - 1) / 2;
            idx.push((sr * n + sc) as usize);
        }
    }
    Ok(idx)
}

/// Applies the transform to both spatial axes of a `[bands, n, n]` array;
/// band order is untouched.
pub fn augment(array: &Array3<f32>, id: u8) -> Result<Array3<f32>> {
    check(id)?;
    let (bands, h, w) = array.dim();
    if h != w {
        return Err(Error::Shape(format!("augmentation needs square patches, got {h}x{w}")));
    }
    if id == 0 {
        return Ok(array.clone());
    }
    let idx = source_index(id, h)?;
    let mut out = Array3::zeros((bands, h, w));
    for (src, mut dst) in array.axis_iter(Axis(0)).zip(out.axis_iter_mut(Axis(0))) {
        let s = src.as_standard_layout();
        let s = s.as_slice().expect("standard layout");
        for (o, &i) in dst.iter_mut().zip(&idx) {
            *o = s[i];
        }
    }
    Ok(out)
}

/// In-place variant on a flat `[bands, n, n]` buffer, using a scratch plane.
pub fn augment_flat(data: &mut [f32], bands: usize, size: usize, index: &[usize], scratch: &mut Vec<f32>) {
    let plane = size * size;
    scratch.resize(plane, 0.0);
    for b in 0..bands {
        let p = &mut data[b * plane..(b + 1) * plane];
        scratch.copy_from_slice(p);
        for (o, &i) in p.iter_mut().zip(index) {
            *o = scratch[i];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(n: usize) -> Array3<f32> {
        Array3::from_shape_fn((2, n, n), |(b, r, c)| (b * 1000 + r * n + c) as f32)
    }

    #[test]
    fn rotation_order_four_and_flip_involution() {
        let x = sample(5);
        let mut y = x.clone();
        for _ in 0..4 {
            y = augment(&y, 1).unwrap();
        }
        assert_eq!(y, x);
        assert_eq!(augment(&augment(&x, 4).unwrap(), 4).unwrap(), x);
        assert_ne!(augment(&x, 1).unwrap(), x);
    }

    #[test]
    fn flip_mirrors_columns() {
        let x = sample(4);
        let y = augment(&x, 4).unwrap();
        assert_eq!(y[[0, 1, 0]], x[[0, 1, 3]]);
        assert_eq!(y[[1, 2, 1]], x[[1, 2, 2]]);
    }

    #[test]
    fn composition_table_matches_arrays() {
        let x = sample(6);
        for a in 0..8 {
            for b in 0..8 {
                let two = augment(&augment(&x, a).unwrap(), b).unwrap();
                assert_eq!(two, augment(&x, compose(a, b).unwrap()).unwrap(), "{a} then {b}");
            }
            assert_eq!(compose(a, inverse(a).unwrap()).unwrap(), 0);
        }
    }

    #[test]
    fn invalid_id() {
        assert!(matches!(augment(&sample(3), 8), Err(Error::InvalidTransform(8))));
    }
}
