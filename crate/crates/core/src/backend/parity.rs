//! Side-by-side execution of a kernel sequence on two backends.

use super::{reduce, softmax_cross_entropy, streams, Backend, Fast, ReduceOp, Reference, Rng, Scalar, Tensor};
use crate::error::Result;

/// One step applied to the running tensor. Operands the step needs are drawn
/// fresh from the program's generator, uniform in `[-10, 10]`.
#[derive(Clone, Debug, PartialEq)]
pub enum Kernel {
    /// `x · W`, `W` is `[cols(x), cols]`.
    Matmul { cols: usize },
    /// `xᵀ · R`, `R` is `[rows(x), cols]`.
    MatmulTn { cols: usize },
    /// `x · Rᵀ`, `R` is `[rows, cols(x)]`.
    MatmulNt { rows: usize },
    Add,
    Sub,
    Mul,
    Relu,
    /// Exact in both backends; puts `Log` on a positive domain.
    Abs,
    Exp,
    Log,
    Scale(f64),
    Reduce(ReduceOp, Option<usize>),
    /// Replaces `x` by the cross-entropy gradient for random targets; the loss
    /// is compared as well.
    SoftmaxCe,
}

#[derive(Clone, Debug, PartialEq)]
pub struct KernelProgram {
    pub input_shape: Vec<usize>,
    pub steps: Vec<Kernel>,
}

impl KernelProgram {
    pub fn new(input_shape: &[usize], steps: Vec<Kernel>) -> Self {
        Self {
            input_shape: input_shape.to_vec(),
            steps,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParityReport {
    pub max_abs: f64,
    /// Max over elements and steps of `|ref - other| / (|ref| + 1e-12)`.
    pub max_rel: f64,
    pub tol: f64,
    pub passed: bool,
    /// Index of the step where `max_rel` was attained.
    pub worst_step: Option<usize>,
}

/// Runs `program` on [`Reference`] and [`Fast`] from the same seeded inputs.
pub fn backend_parity_check(program: &KernelProgram, tol: f64) -> ParityReport {
    parity_check::<Reference, Fast>(program, 0, tol)
}

/// Runs `program` on `R` (trusted) and `F` and reports their deviation.
/// Errors in either run count as a failed check.
pub fn parity_check<R: Backend, F: Backend>(program: &KernelProgram, seed: u64, tol: f64) -> ParityReport {
    let mut report = ParityReport {
        max_abs: 0.0,
        max_rel: 0.0,
        tol,
        passed: false,
        worst_step: None,
    };
    if run::<R, F>(program, seed, &mut report).is_err() {
        report.max_abs = f64::INFINITY;
        report.max_rel = f64::INFINITY;
        return report;
    }
    report.passed = report.max_rel < tol;
    report
}

/// Uniform in `[-10, 10]`, rounded through `f32` so both backends start from
/// identical values.
fn operand(rng: &mut Rng, shape: &[usize]) -> Tensor<f64> {
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.uniform_range(-10.0, 10.0) as f32 as f64).collect();
    Tensor::new(shape.to_vec(), data).expect("shape/product agree")
}

fn compare<A: Scalar, B: Scalar>(a: &Tensor<A>, b: &Tensor<B>, step: usize, report: &mut ParityReport) {
    for (&x, &y) in a.data().iter().zip(b.data()) {
        let (x, y) = (x.as_f64(), y.as_f64());
        let abs = (x - y).abs();
        let rel = abs / (x.abs() + 1e-12);
        let (abs, rel) = if abs.is_nan() {
            (f64::INFINITY, f64::INFINITY)
        } else {
            (abs, rel)
        };
        report.max_abs = report.max_abs.max(abs);
        if rel > report.max_rel || report.worst_step.is_none() {
            report.max_rel = report.max_rel.max(rel);
            report.worst_step = Some(step);
        }
    }
}

fn run<R: Backend, F: Backend>(program: &KernelProgram, seed: u64, report: &mut ParityReport) -> Result<()> {
    let mut rng = Rng::new(seed, streams::PARITY);
    let x0 = operand(&mut rng, &program.input_shape);
    let mut xr: Tensor<R::Elem> = x0.cast();
    let mut xf: Tensor<F::Elem> = x0.cast();
    for (i, step) in program.steps.iter().enumerate() {
        match step {
            Kernel::Matmul { cols } => {
                let w = operand(&mut rng, &[xr.cols(), *cols]);
                xr = R::matmul(&xr, &w.cast())?;
                xf = F::matmul(&xf, &w.cast())?;
            }
            Kernel::MatmulTn { cols } => {
                let w = operand(&mut rng, &[xr.rows(), *cols]);
                xr = R::matmul_tn(&xr, &w.cast())?;
                xf = F::matmul_tn(&xf, &w.cast())?;
            }
            Kernel::MatmulNt { rows } => {
                let w = operand(&mut rng, &[*rows, xr.cols()]);
                xr = R::matmul_nt(&xr, &w.cast())?;
                xf = F::matmul_nt(&xf, &w.cast())?;
            }
            Kernel::Add | Kernel::Sub | Kernel::Mul => {
                let w = operand(&mut rng, xr.shape());
                let (wr, wf) = (w.cast(), w.cast());
                (xr, xf) = match step {
                    Kernel::Add => (xr.add(&wr)?, xf.add(&wf)?),
                    Kernel::Sub => (xr.sub(&wr)?, xf.sub(&wf)?),
                    _ => (xr.mul(&wr)?, xf.mul(&wf)?),
                };
            }
            Kernel::Relu => (xr, xf) = (xr.relu(), xf.relu()),
            Kernel::Abs => (xr, xf) = (xr.map(num_traits::Float::abs), xf.map(num_traits::Float::abs)),
            Kernel::Exp => (xr, xf) = (xr.exp(), xf.exp()),
            Kernel::Log => (xr, xf) = (xr.ln(), xf.ln()),
            Kernel::Scale(k) => (xr, xf) = (xr.scale(R::Elem::of(*k)), xf.scale(F::Elem::of(*k))),
            Kernel::Reduce(op, axis) => {
                xr = reduce::<R>(*op, &xr, *axis)?;
                xf = reduce::<F>(*op, &xf, *axis)?;
            }
            Kernel::SoftmaxCe => {
                let classes = xr.cols();
                let targets: Vec<usize> = (0..xr.rows()).map(|_| rng.below(classes)).collect();
                let (lr, gr) = softmax_cross_entropy::<R>(&xr, &targets)?;
                let (lf, gf) = softmax_cross_entropy::<F>(&xf, &targets)?;
                compare(&Tensor::scalar(lr), &Tensor::scalar(lf), i, report);
                (xr, xf) = (gr, gf);
            }
        }
        compare(&xr, &xf, i, report);
    }
    Ok(())
}
