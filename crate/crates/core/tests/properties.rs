use std::collections::BTreeSet;

use proptest::prelude::*;
use sequel::algorithms::{agem_project, quadratic_penalty, MemoryBuffer, MemoryItem, MemoryPolicy};
use sequel::backend::parity::{backend_parity_check, Kernel, KernelProgram};
use sequel::backend::softmax_cross_entropy;
use sequel::benchmarks::{invert_permutation, permute_image, DataLoader, Scenario, TaskDataset};
use sequel::events::MetricState;
use sequel::nn::{HeadLayout, Mlp, MlpConfig, Mode, ParamVector, Sgd};
use sequel::{Reference, Rng, Tensor};

fn random_tensor(rows: usize, cols: usize, rng: &mut Rng) -> Tensor<f64> {
    Tensor::new(vec![rows, cols], (0..rows * cols).map(|_| rng.uniform_range(-1.0, 1.0)).collect()).unwrap()
}

fn loss(model: &Mlp<Reference>, x: &Tensor<f64>, y: &[usize], t: &[usize]) -> f64 {
    let logits = model.predict(x, t).unwrap();
    softmax_cross_entropy::<Reference>(&logits, y).unwrap().0
}

/// Central difference, or `None` when the one-sided slopes disagree, which
/// means a ReLU kink lies inside the stencil.
fn central_difference(model: &Mlp<Reference>, i: usize, x: &Tensor<f64>, y: &[usize], t: &[usize]) -> Option<f64> {
    let h = 1e-6;
    let at = |delta: f64| {
        let mut m = model.clone();
        m.params_mut()[i] += delta;
        loss(&m, x, y, t)
    };
    let (plus, mid, minus) = (at(h), at(0.0), at(-h));
    let forward = (plus - mid) / h;
    let backward = (mid - minus) / h;
    let central = (plus - minus) / (2.0 * h);
    ((forward - backward).abs() <= 1e-4 * (1.0 + central.abs())).then_some(central)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn mlp_gradient_matches_central_differences(
        widths in prop::collection::vec(1usize..12, 0..3),
        input in 1usize..6,
        classes in 2usize..5,
        rows in 1usize..4,
        multi_head in any::<bool>(),
        seed in any::<u64>(),
    ) {
        let heads = if multi_head { HeadLayout::PerTask { num_tasks: 2 } } else { HeadLayout::Shared };
        let cfg = MlpConfig::new(input, widths, classes * if multi_head { 2 } else { 1 }).with_heads(heads);
        let model = Mlp::<Reference>::new(cfg, seed).unwrap();
        let mut rng = Rng::new(seed, 77);
        let x = random_tensor(rows, input, &mut rng);
        let y: Vec<usize> = (0..rows).map(|_| rng.below(classes)).collect();
        let t = vec![if multi_head { 2 } else { 1 }; rows];
        let (logits, cache) = model.forward(&x, &t, Mode::Eval, &mut rng).unwrap();
        let (_, gl) = softmax_cross_entropy::<Reference>(&logits, &y).unwrap();
        let g = model.backward(&cache, &gl, None).unwrap();
        for i in 0..model.num_params() {
            let Some(fd) = central_difference(&model, i, &x, &y, &t) else {
                continue;
            };
            let scale = g[i].abs().max(fd.abs());
            prop_assert!(scale < 1e-7 || (g[i] - fd).abs() / scale < 1e-4, "param {i}: {} vs {fd}", g[i]);
        }
    }
}

proptest! {
    #[test]
    fn agem_projection_is_never_against_the_reference(
        g in prop::collection::vec(-5.0f64..5.0, 1..20),
        seed in any::<u64>(),
    ) {
        let mut rng = Rng::new(seed, 1);
        let r: Vec<f64> = g.iter().map(|_| rng.uniform_range(-5.0, 5.0)).collect();
        let g = ParamVector::from_vec(g);
        let r = ParamVector::from_vec(r);
        let out = agem_project(&g, &r).unwrap();
        let bound = -1e-10 * out.norm() * r.norm();
        prop_assert!(out.dot(&r).unwrap() >= bound);
        if g.dot(&r).unwrap() >= 0.0 {
            prop_assert!(out.bit_eq(&g));
        }
    }

    #[test]
    fn quadratic_penalty_gradient_matches_differences(
        v in prop::collection::vec((-3.0f64..3.0, -3.0f64..3.0, 0.0f64..2.0), 1..10),
        lambda in 0.0f64..5.0,
    ) {
        let theta = ParamVector::from_vec(v.iter().map(|t| t.0).collect());
        let old = ParamVector::from_vec(v.iter().map(|t| t.1).collect());
        let omega = ParamVector::from_vec(v.iter().map(|t| t.2).collect());
        let (value, grad) = quadratic_penalty(&theta, &old, &omega, lambda).unwrap();
        prop_assert!(value >= 0.0);
        // central differences are exact on a quadratic, so a large step only
        // shrinks rounding noise
        let h = 0.5;
        for i in 0..theta.len() {
            let mut p = theta.clone();
            p[i] += h;
            let mut m = theta.clone();
            m[i] -= h;
            let fd = (quadratic_penalty(&p, &old, &omega, lambda).unwrap().0
                - quadratic_penalty(&m, &old, &omega, lambda).unwrap().0) / (2.0 * h);
            let scale = grad[i].abs().max(fd.abs()).max(1e-8);
            prop_assert!((grad[i] - fd).abs() / scale < 1e-6, "{} vs {fd}", grad[i]);
        }
    }

    #[test]
    fn single_kernel_parity(
        rows in 1usize..12, inner in 1usize..40, cols in 1usize..12, which in 0usize..6,
    ) {
        let kernel = match which {
            0 => Kernel::Matmul { cols },
            1 => Kernel::MatmulTn { cols },
            2 => Kernel::MatmulNt { rows: cols },
            3 => Kernel::Add,
            4 => Kernel::Relu,
            _ => Kernel::Scale(0.5),
        };
        let report = backend_parity_check(&KernelProgram::new(&[rows, inner], vec![kernel]), 1e-4);
        prop_assert!(report.passed, "{report:?}");
    }

    #[test]
    fn permutation_round_trips(n in 1usize..100, seed in any::<u64>()) {
        let perm = Rng::new(seed, 7).permutation(n);
        let img: Vec<f32> = (0..n).map(|i| i as f32).collect();
        let there = permute_image(&img, &perm).unwrap();
        let back = permute_image(&there, &invert_permutation(&perm)).unwrap();
        prop_assert_eq!(back, img);
    }

    #[test]
    fn reservoir_never_exceeds_capacity(capacity in 0usize..30, stream in 0usize..200, seed in any::<u64>()) {
        let mut buf = MemoryBuffer::new(MemoryPolicy::Reservoir { capacity });
        let mut rng = Rng::new(seed, 5);
        for i in 0..stream {
            let item = MemoryItem { x: vec![i as f32], target: 0, label: 0, task: 1, index: i, logits: None };
            buf.offer(item, &mut rng).unwrap();
        }
        prop_assert_eq!(buf.len(), capacity.min(stream));
        prop_assert_eq!(buf.seen(), stream);
        let distinct: BTreeSet<usize> = buf.items().iter().map(|i| i.index).collect();
        prop_assert_eq!(distinct.len(), buf.len());
    }

    #[test]
    fn per_task_memory_is_class_balanced(
        per_class in prop::collection::vec(1usize..15, 2..5), k in 0usize..40, seed in any::<u64>(),
    ) {
        let y: Vec<usize> = per_class.iter().enumerate().flat_map(|(c, &n)| std::iter::repeat(c).take(n)).collect();
        let n = y.len();
        let x = Tensor::new(vec![n, 1], (0..n).map(|i| i as f32).collect()).unwrap();
        let classes = (0..per_class.len()).collect();
        let ds = TaskDataset::new(1, x, y.clone(), classes, Scenario::NewInstance).unwrap();
        let mut buf = MemoryBuffer::new(MemoryPolicy::PerTask { per_task: k });
        let rows = buf.insert_task(&ds, &mut Rng::new(seed, 5)).unwrap();
        prop_assert_eq!(rows.len(), k.min(n));
        prop_assert_eq!(rows.iter().collect::<BTreeSet<_>>().len(), rows.len());
        // a class gets fewer than its fair share only when it runs out
        let counts: Vec<usize> = (0..per_class.len()).map(|c| rows.iter().filter(|&&r| y[r] == c).count()).collect();
        let most = *counts.iter().max().unwrap();
        for (c, &got) in counts.iter().enumerate() {
            prop_assert!(got + 1 >= most || got == per_class[c], "{counts:?} of {per_class:?}");
        }
    }

    #[test]
    fn loader_visits_every_row_once(n in 1usize..60, bs in 1usize..20, seed in any::<u64>()) {
        let x = Tensor::new(vec![n, 1], (0..n).map(|i| i as f32).collect()).unwrap();
        let ds = TaskDataset::new(1, x, vec![0; n], vec![0], Scenario::NewInstance).unwrap();
        let order = Rng::new(seed, 4).permutation(n);
        let batches: Vec<_> = DataLoader::<f64>::new(&ds, order, bs).collect();
        prop_assert_eq!(batches.len(), n.div_ceil(bs));
        let mut seen: Vec<usize> = batches.iter().flat_map(|b| b.idx.clone()).collect();
        seen.sort_unstable();
        prop_assert_eq!(seen, (0..n).collect::<Vec<_>>());
    }

    #[test]
    fn forgetting_matches_its_definition(
        acc in prop::collection::vec(prop::collection::vec(0.0f64..1.0, 6), 2..6),
    ) {
        let rows: Vec<Vec<f64>> = acc.iter().enumerate().map(|(l, r)| r[..=l].to_vec()).collect();
        let state = MetricState::from_rows(rows.clone()).unwrap();
        let last = rows.len();
        let mut total = 0.0;
        for j in 0..last - 1 {
            let best = (j..last - 1).map(|k| rows[k][j]).fold(f64::MIN, f64::max);
            total += best - rows[last - 1][j];
        }
        let expected = total / (last - 1) as f64;
        prop_assert!((state.forgetting(last).unwrap() - expected).abs() < 1e-12);
        let avg = rows[last - 1].iter().sum::<f64>() / last as f64;
        prop_assert!((state.average_accuracy(last).unwrap() - avg).abs() < 1e-12);
    }

    #[test]
    fn momentum_matches_geometric_series(m in 0.0f64..0.95, g in -2.0f64..2.0, steps in 1usize..20) {
        let mut opt = Sgd::<f64>::new(0.1, m, 1.0).unwrap();
        let mut theta = ParamVector::from_vec(vec![0.0]);
        let grad = ParamVector::from_vec(vec![g]);
        for _ in 0..steps {
            opt.step(&mut theta, &grad).unwrap();
        }
        let v = g * (1.0 - m.powi(steps as i32)) / (1.0 - m);
        prop_assert!((opt.velocity().unwrap()[0] - v).abs() < 1e-9 * (1.0 + v.abs()));
    }
}
