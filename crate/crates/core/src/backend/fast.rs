use super::Backend;

/// Column block width for `gemm_nn`.
const COL_BLOCK: usize = 128;
/// Lanes below which `sum` falls back to a sequential loop.
const PAIRWISE_BASE: usize = 16;

/// `f32` storage backend.
///
/// Products are cache-blocked over output columns and accumulate in `f64`
/// registers with the inner index ascending; `sum` is pairwise. Zero entries
/// of the left operand are skipped in `gemm_nn`/`gemm_tn` (operands are
/// assumed finite). With the `parallel` feature, output rows are split across
/// threads; each row's arithmetic is unchanged, so results stay bit-identical.
#[derive(Clone, Copy, Debug, Default)]
pub struct Fast;

fn nn_row(i: usize, k: usize, n: usize, a: &[f32], b: &[f32], c_row: &mut [f32]) {
    let mut acc = [0.0f64; COL_BLOCK];
    let a_row = &a[i * k..(i + 1) * k];
    for jb in (0..n).step_by(COL_BLOCK) {
        let w = COL_BLOCK.min(n - jb);
        let acc = &mut acc[..w];
        acc.fill(0.0);
        for (l, &ail) in a_row.iter().enumerate() {
            if ail == 0.0 {
                continue;
            }
            let ail = ail as f64;
            let b_row = &b[l * n + jb..l * n + jb + w];
            for (s, &bv) in acc.iter_mut().zip(b_row) {
                *s += ail * bv as f64;
            }
        }
        for (dst, &s) in c_row[jb..jb + w].iter_mut().zip(acc.iter()) {
            *dst = s as f32;
        }
    }
}

fn dot(x: &[f32], y: &[f32]) -> f64 {
    let mut lanes = [0.0f64; 4];
    let chunks = x.len() / 4;
    for q in 0..chunks {
        for l in 0..4 {
            lanes[l] += x[4 * q + l] as f64 * y[4 * q + l] as f64;
        }
    }
    let mut tail = 0.0f64;
    for idx in chunks * 4..x.len() {
        tail += x[idx] as f64 * y[idx] as f64;
    }
    ((lanes[0] + lanes[1]) + (lanes[2] + lanes[3])) + tail
}

fn pairwise(xs: &[f32]) -> f64 {
    if xs.len() <= PAIRWISE_BASE {
        xs.iter().fold(0.0f64, |acc, &v| acc + v as f64)
    } else {
        let mid = xs.len() / 2;
        pairwise(&xs[..mid]) + pairwise(&xs[mid..])
    }
}

impl Backend for Fast {
    type Elem = f32;

    const NAME: &'static str = "fast";

    fn gemm_nn(m: usize, k: usize, n: usize, a: &[f32], b: &[f32], c: &mut [f32]) {
        if n == 0 {
            return;
        }
        #[cfg(feature = "parallel")]
        {
            use rayon::prelude::*;
            c.par_chunks_mut(n)
                .enumerate()
                .for_each(|(i, row)| nn_row(i, k, n, a, b, row));
        }
        #[cfg(not(feature = "parallel"))]
        for (i, row) in c.chunks_mut(n).enumerate().take(m) {
            nn_row(i, k, n, a, b, row);
        }
        let _ = m;
    }

    fn gemm_tn(m: usize, k: usize, n: usize, a: &[f32], b: &[f32], c: &mut [f32]) {
        let mut acc = vec![0.0f64; m * n];
        for l in 0..k {
            let b_row = &b[l * n..(l + 1) * n];
            for i in 0..m {
                let ali = a[l * m + i];
                if ali == 0.0 {
                    continue;
                }
                let ali = ali as f64;
                for (s, &bv) in acc[i * n..(i + 1) * n].iter_mut().zip(b_row) {
                    *s += ali * bv as f64;
                }
            }
        }
        for (dst, s) in c.iter_mut().zip(acc) {
            *dst = s as f32;
        }
    }

    fn gemm_nt(m: usize, k: usize, n: usize, a: &[f32], b: &[f32], c: &mut [f32]) {
        for i in 0..m {
            let a_row = &a[i * k..(i + 1) * k];
            for j in 0..n {
                c[i * n + j] = dot(a_row, &b[j * k..(j + 1) * k]) as f32;
            }
        }
    }

    fn sum(xs: &[f32]) -> f32 {
        pairwise(xs) as f32
    }
}
