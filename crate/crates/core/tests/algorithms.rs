mod common;

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::rc::Rc;

use common::{run, synthetic, tapped, Setup};
use sequel::algorithms::{
    mcsgd_consolidate, Agem, Algorithm, AlgorithmSpec, Anchor, DataImportance, Der, Er, LineConfig, McSgd,
    MemoryItem, Regularized, SiImportance,
};
use sequel::benchmarks::Scenario;
use sequel::events::EventKind;
use sequel::nn::ParamVector;
use sequel::{Reference, Tensor};

type Snapshots = Rc<RefCell<Vec<ParamVector<f64>>>>;

fn omega_history(spec: &AlgorithmSpec) -> Vec<ParamVector<f64>> {
    let bench = synthetic(3, Scenario::NewInstance, 16);
    let seen: Snapshots = Rc::default();
    let sink = seen.clone();
    let tap = Box::new(move |kind: EventKind, algo: &dyn Algorithm<Reference>, _: &_| {
        if kind != EventKind::TaskFit {
            return;
        }
        let any = algo.as_any();
        let omega = any
            .downcast_ref::<Regularized<Reference, DataImportance>>()
            .and_then(|r| r.omega())
            .or_else(|| {
                any.downcast_ref::<Regularized<Reference, SiImportance<f64>>>()
                    .and_then(|r| r.omega())
            })
            .expect("regularized algorithm with omega");
        sink.borrow_mut().push(omega.clone());
    });
    let mut t = tapped::<Reference>(&bench, spec, &Setup::default(), tap).unwrap();
    t.fit(1).unwrap();
    let out = seen.borrow().clone();
    out
}

#[test]
fn importance_never_decreases_across_boundaries() {
    for spec in [
        AlgorithmSpec::Ewc { lambda: 1.0, budget: 64 },
        AlgorithmSpec::Mas { lambda: 1.0, budget: 64 },
        AlgorithmSpec::Si { lambda: 1.0, damping: 0.1 },
    ] {
        let history = omega_history(&spec);
        assert_eq!(history.len(), 3, "{}", spec.name());
        assert!(history[0].as_slice().iter().any(|&v| v > 0.0), "{} learned no importance", spec.name());
        for w in history.windows(2) {
            for (a, b) in w[0].as_slice().iter().zip(w[1].as_slice()) {
                assert!(b >= a, "{}: omega decreased {a} -> {b}", spec.name());
            }
        }
    }
}

#[test]
fn der_memory_holds_real_samples_and_their_recorded_logits() {
    let bench = synthetic(2, Scenario::NewClass, 16);
    let spec = AlgorithmSpec::Derpp {
        mem_size: 40,
        alpha: 0.5,
        beta: 0.5,
        mem_batch_size: 8,
    };
    // slot -> parameters that were live when the slot was last written
    let written: Rc<RefCell<BTreeMap<usize, ParamVector<f64>>>> = Rc::default();
    let last: Rc<RefCell<Vec<MemoryItem>>> = Rc::default();
    let (w, l) = (written.clone(), last.clone());
    let tap = Box::new(move |kind: EventKind, algo: &dyn Algorithm<Reference>, core: &sequel::algorithms::TrainerCore<Reference>| {
        if kind != EventKind::TrainingStep {
            return;
        }
        let items = algo.as_any().downcast_ref::<Der>().unwrap().memory().items().to_vec();
        let mut prev = l.borrow_mut();
        for (slot, item) in items.iter().enumerate() {
            if prev.get(slot) != Some(item) {
                w.borrow_mut().insert(slot, core.model.snapshot());
            }
        }
        *prev = items;
    });
    let mut t = tapped::<Reference>(&bench, &spec, &Setup::default(), tap).unwrap();
    t.fit(1).unwrap();
    let der = t.algorithm().as_any().downcast_ref::<common::Tap<Reference>>().unwrap();
    let der = der.inner.as_any().downcast_ref::<Der>().unwrap();
    let items = der.memory().items();
    assert_eq!(items.len(), 40);
    assert!(items.iter().any(|i| i.task == 1) && items.iter().any(|i| i.task == 2));
    let written = written.borrow();
    let mut replay = t.model().clone();
    for (slot, item) in items.iter().enumerate() {
        let ds = bench.train_set(item.task).unwrap();
        assert_eq!(item.x, ds.row(item.index), "slot {slot}");
        assert_eq!(item.target, ds.targets[item.index]);
        replay.restore(&written[&slot]).unwrap();
        let x = Tensor::new(vec![1, item.x.len()], item.x.iter().map(|&v| v as f64).collect()).unwrap();
        let logits = replay.predict(&x, &[item.task]).unwrap();
        assert_eq!(logits.data(), item.logits.as_deref().unwrap(), "slot {slot}");
    }
}

#[test]
fn er_stores_per_task_memory_and_replays_earlier_tasks() {
    let bench = synthetic(3, Scenario::NewInstance, 16);
    let spec = AlgorithmSpec::Er {
        per_task_memory_samples: 20,
        mem_batch_size: 12,
    };
    let t = run::<Reference>(&bench, &spec, &Setup::default(), 1).unwrap();
    let er = t.algorithm().as_any().downcast_ref::<Er>().unwrap();
    for task in 1..=3 {
        assert_eq!(er.memory().count_for_task(task), 20);
    }
    for item in er.memory().items() {
        assert_eq!(item.x, bench.train_set(item.task).unwrap().row(item.index));
    }
    let ds = bench.train_set(3).unwrap();
    let mut rng = sequel::Rng::new(1, 1);
    let mut loader = bench.train_loader::<f64>(3, &mut rng).unwrap();
    let batch = loader.next().unwrap();
    assert!(ds.len() >= batch.len());
    let combined = er.replay_batch(&batch, 3, &mut rng).unwrap();
    assert_eq!(combined.len(), batch.len() + 12);
    assert!(combined.t[..batch.len()].iter().all(|&t| t == 3));
    assert!(combined.t[batch.len()..].iter().all(|&t| t < 3));
    // nothing earlier than task 1 exists
    assert_eq!(er.replay_batch(&batch, 1, &mut rng).unwrap().len(), batch.len());
}

#[test]
fn agem_projects_some_steps_and_stores_memory() {
    let bench = synthetic(2, Scenario::NewInstance, 16);
    let spec = AlgorithmSpec::Agem {
        per_task_memory_samples: 30,
        mem_batch_size: 16,
    };
    let setup = Setup {
        lr: 0.2,
        ..Setup::default()
    };
    let t = run::<Reference>(&bench, &spec, &setup, 1).unwrap();
    let agem = t.algorithm().as_any().downcast_ref::<Agem>().unwrap();
    assert_eq!(agem.memory().len(), 60);
    assert!(agem.projections() > 0);
}

#[test]
fn mcsgd_runs_and_keeps_earlier_tasks() {
    let bench = synthetic(3, Scenario::NewInstance, 16);
    let line = LineConfig {
        lr: 0.05,
        momentum: 0.8,
        batch_size: 16,
        epochs: 1,
        line_samples: 5,
        init_position: 0.1,
    };
    let spec = AlgorithmSpec::McSgd {
        per_task_memory_samples: 40,
        line,
    };
    let t = run::<Reference>(&bench, &spec, &Setup::default(), 1).unwrap();
    let mc = t.algorithm().as_any().downcast_ref::<McSgd<f64>>().unwrap();
    assert_eq!(mc.memory().len(), 120);
    let m = t.metrics().unwrap();
    assert!(m.average_accuracy(3).unwrap() > 0.5, "{:?}", m.rows());
}

fn toy_grad(c: &[f64; 2]) -> impl FnMut(Anchor, usize, &ParamVector<f64>) -> sequel::Result<ParamVector<f64>> + '_ {
    move |_, _, p| Ok(ParamVector::from_vec(vec![p[0] - c[0], p[1] - c[1]]))
}

fn toy_loss(w: &ParamVector<f64>, c: &[f64; 2]) -> f64 {
    0.5 * ((w[0] - c[0]).powi(2) + (w[1] - c[1]).powi(2))
}

#[test]
fn convex_toy_reaches_the_on_segment_optimum() {
    // L(w) = |w - c|^2 / 2 with c the midpoint of the segment: the averaged
    // line gradient sum_a mean_alpha((1 - alpha) a + alpha w - c) vanishes
    // exactly at w = 2c - (a0 + a1) / 2 = c.
    let w_prev = ParamVector::from_vec(vec![0.0, 0.0]);
    let w_cur = ParamVector::from_vec(vec![2.0, 1.0]);
    let c = [1.0, 0.5];
    let mut losses = Vec::new();
    let mut cfg = LineConfig {
        lr: 0.1,
        momentum: 0.0,
        batch_size: 1,
        epochs: 1,
        line_samples: 10,
        init_position: 0.1,
    };
    for epochs in 1..=8 {
        cfg.epochs = epochs;
        let w = mcsgd_consolidate(&w_prev, &w_cur, &cfg, 5, toy_grad(&c)).unwrap();
        losses.push(toy_loss(&w, &c));
    }
    let start = toy_loss(&ParamVector::from_vec(vec![0.2, 0.1]), &c);
    assert!(losses[0] < start);
    for w in losses.windows(2) {
        assert!(w[1] < w[0], "{losses:?}");
    }
    // each step contracts w - c by (1 - lr * 2 * mean(alpha)) = 1 - lr
    let per_epoch = (1.0f64 - cfg.lr).powi(2 * 5);
    assert!((losses[0] / start - per_epoch).abs() < 1e-9);
    for w in losses.windows(2) {
        assert!((w[1] / w[0] - per_epoch).abs() < 1e-9, "{losses:?}");
    }
}
