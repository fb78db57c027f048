use super::Backend;

/// `f64` backend with textbook loops: every output element is a left-to-right
/// sum over the inner index.
#[derive(Clone, Copy, Debug, Default)]
pub struct Reference;

impl Backend for Reference {
    type Elem = f64;

    const NAME: &'static str = "reference";

    fn gemm_nn(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
        for i in 0..m {
            for j in 0..n {
                let mut acc = 0.0;
                for l in 0..k {
                    acc += a[i * k + l] * b[l * n + j];
                }
                c[i * n + j] = acc;
            }
        }
    }

    fn gemm_tn(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
        for i in 0..m {
            for j in 0..n {
                let mut acc = 0.0;
                for l in 0..k {
                    acc += a[l * m + i] * b[l * n + j];
                }
                c[i * n + j] = acc;
            }
        }
    }

    fn gemm_nt(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
        for i in 0..m {
            for j in 0..n {
                let mut acc = 0.0;
                for l in 0..k {
                    acc += a[i * k + l] * b[j * k + l];
                }
                c[i * n + j] = acc;
            }
        }
    }

    fn sum(xs: &[f64]) -> f64 {
        xs.iter().fold(0.0, |acc, &v| acc + v)
    }
}
