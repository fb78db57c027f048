//! Fixed per-task input transformations for New-Instance benchmarks.

use crate::error::{ensure, Result};

/// Rotates a square row-major image about its center by `degrees`
/// (counter-clockwise as displayed). Bilinear interpolation, zero fill.
pub fn rotate_image(img: &[f32], side: usize, degrees: f64) -> Vec<f32> {
    debug_assert_eq!(img.len(), side * side);
    let (sin, cos) = degrees.to_radians().sin_cos();
    let center = (side as f64 - 1.0) / 2.0;
    let at = |r: isize, c: isize| -> f64 {
        if r < 0 || c < 0 || r >= side as isize || c >= side as isize {
            0.0
        } else {
            img[r as usize * side + c as usize] as f64
        }
    };
    let mut out = vec![0.0f32; side * side];
    for r in 0..side {
        for c in 0..side {
            // destination offset with y pointing up
            let x = c as f64 - center;
            let y = center - r as f64;
            // inverse rotation gives the source location
            let sx = cos * x + sin * y;
            let sy = -sin * x + cos * y;
            let src_c = sx + center;
            let src_r = center - sy;
            let r0 = src_r.floor();
            let c0 = src_c.floor();
            let fr = src_r - r0;
            let fc = src_c - c0;
            let (r0, c0) = (r0 as isize, c0 as isize);
            let v = at(r0, c0) * (1.0 - fr) * (1.0 - fc)
                + at(r0, c0 + 1) * (1.0 - fr) * fc
                + at(r0 + 1, c0) * fr * (1.0 - fc)
                + at(r0 + 1, c0 + 1) * fr * fc;
            out[r * side + c] = v.clamp(0.0, 1.0) as f32;
        }
    }
    out
}

pub fn validate_permutation(perm: &[usize]) -> Result<()> {
    let mut seen = vec![false; perm.len()];
    for &p in perm {
        ensure!(
            p < perm.len() && !seen[p],
            Validation,
            "not a permutation of 0..{}: index {p} repeated or out of range",
            perm.len()
        );
        seen[p] = true;
    }
    Ok(())
}

/// `out[i] = img[perm[i]]`
pub fn permute_image(img: &[f32], perm: &[usize]) -> Result<Vec<f32>> {
    ensure!(
        img.len() == perm.len(),
        Dimension,
        "image has {} pixels, permutation {}",
        img.len(),
        perm.len()
    );
    validate_permutation(perm)?;
    Ok(perm.iter().map(|&p| img[p]).collect())
}

pub fn invert_permutation(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (i, &p) in perm.iter().enumerate() {
        inv[p] = i;
    }
    inv
}
