use std::collections::BTreeMap;

use crate::backend::{Rng, Scalar, Tensor};
use crate::benchmarks::{Batch, TaskDataset};
use crate::error::{ensure, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MemoryPolicy {
    /// `per_task` class-balanced samples chosen at the end of each task.
    PerTask { per_task: usize },
    /// Reservoir sampling over the whole stream.
    Reservoir { capacity: usize },
}

/// A stored training sample. Never modified after insertion.
#[derive(Clone, Debug, PartialEq)]
pub struct MemoryItem {
    pub x: Vec<f32>,
    pub target: usize,
    pub label: usize,
    pub task: usize,
    /// Row index within the task's training set.
    pub index: usize,
    /// Model outputs recorded at insertion.
    pub logits: Option<Vec<f64>>,
}

impl MemoryItem {
    pub fn from_dataset(ds: &TaskDataset, row: usize) -> Self {
        Self {
            x: ds.row(row).to_vec(),
            target: ds.targets[row],
            label: ds.y[row],
            task: ds.task,
            index: row,
            logits: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct MemoryBuffer {
    policy: MemoryPolicy,
    items: Vec<MemoryItem>,
    seen: usize,
}

impl MemoryBuffer {
    pub fn new(policy: MemoryPolicy) -> Self {
        Self {
            policy,
            items: Vec::new(),
            seen: 0,
        }
    }

    pub fn policy(&self) -> MemoryPolicy {
        self.policy
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn items(&self) -> &[MemoryItem] {
        &self.items
    }

    /// Stream items offered so far under the reservoir policy.
    pub fn seen(&self) -> usize {
        self.seen
    }

    pub fn count_for_task(&self, task: usize) -> usize {
        self.items.iter().filter(|i| i.task == task).count()
    }

    /// Stores a class-balanced selection of `per_task` rows of `ds`: classes
    /// are visited round-robin in a shuffled order, drawing a shuffled
    /// sample within each class. Returns the chosen row indices.
    pub fn insert_task(&mut self, ds: &TaskDataset, rng: &mut Rng) -> Result<Vec<usize>> {
        let MemoryPolicy::PerTask { per_task } = self.policy else {
            return Err(crate::Error::Validation("insert_task needs a per-task memory".into()));
        };
        ensure!(
            self.count_for_task(ds.task) == 0,
            Validation,
            "task {} already has memory",
            ds.task
        );
        let chosen = balanced_selection(ds, per_task, rng);
        self.items
            .extend(chosen.iter().map(|&row| MemoryItem::from_dataset(ds, row)));
        Ok(chosen)
    }

    /// Counts one stream item and returns the slot it should occupy, if any.
    pub fn reservoir_slot(&mut self, rng: &mut Rng) -> Result<Option<usize>> {
        let MemoryPolicy::Reservoir { capacity } = self.policy else {
            return Err(crate::Error::Validation("reservoir_slot needs a reservoir memory".into()));
        };
        self.seen += 1;
        if self.items.len() < capacity {
            return Ok(Some(self.items.len()));
        }
        let j = rng.below(self.seen);
        Ok((j < capacity).then_some(j))
    }

    /// Writes `item` into a slot returned by [`Self::reservoir_slot`].
    pub fn place(&mut self, slot: usize, item: MemoryItem) -> Result<()> {
        ensure!(slot <= self.items.len(), Range, "slot {slot} beyond {} items", self.items.len());
        if slot == self.items.len() {
            self.items.push(item);
        } else {
            self.items[slot] = item;
        }
        Ok(())
    }

    /// Offers one stream item to the reservoir.
    pub fn offer(&mut self, item: MemoryItem, rng: &mut Rng) -> Result<bool> {
        match self.reservoir_slot(rng)? {
            Some(slot) => self.place(slot, item).map(|_| true),
            None => Ok(false),
        }
    }

    /// Up to `n` distinct items drawn uniformly among those whose task
    /// satisfies `keep`.
    pub fn sample(&self, n: usize, keep: impl Fn(usize) -> bool, rng: &mut Rng) -> Vec<&MemoryItem> {
        let pool: Vec<&MemoryItem> = self.items.iter().filter(|i| keep(i.task)).collect();
        if pool.is_empty() || n == 0 {
            return Vec::new();
        }
        let k = n.min(pool.len());
        rng.sample_indices(pool.len(), k)
            .into_iter()
            .map(|i| pool[i])
            .collect()
    }

    /// Items of tasks before `task`.
    pub fn before(&self, task: usize) -> Vec<&MemoryItem> {
        self.items.iter().filter(|i| i.task < task).collect()
    }

    pub fn of_task(&self, task: usize) -> Vec<&MemoryItem> {
        self.items.iter().filter(|i| i.task == task).collect()
    }
}

fn balanced_selection(ds: &TaskDataset, k: usize, rng: &mut Rng) -> Vec<usize> {
    if k == 0 {
        return Vec::new();
    }
    if k > ds.len() {
        log::warn!(
            "task {}: memory of {k} samples requested but only {} exist; storing all",
            ds.task,
            ds.len()
        );
    }
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (row, &label) in ds.y.iter().enumerate() {
        by_class.entry(label).or_default().push(row);
    }
    let mut pools: Vec<Vec<usize>> = by_class.into_values().collect();
    rng.shuffle(&mut pools);
    for pool in &mut pools {
        rng.shuffle(pool);
        pool.reverse();
    }
    let want = k.min(ds.len());
    let mut out = Vec::with_capacity(want);
    while out.len() < want {
        for pool in &mut pools {
            if out.len() == want {
                break;
            }
            if let Some(row) = pool.pop() {
                out.push(row);
            }
        }
    }
    out
}

/// Stacks memory items into a batch.
pub fn memory_batch<S: Scalar>(items: &[&MemoryItem]) -> Result<Batch<S>> {
    ensure!(!items.is_empty(), Validation, "empty memory batch");
    let dim = items[0].x.len();
    let mut x = Vec::with_capacity(items.len() * dim);
    for item in items {
        ensure!(item.x.len() == dim, Dimension, "memory items of mixed width");
        x.extend(item.x.iter().map(|&v| S::of(v as f64)));
    }
    Ok(Batch {
        x: Tensor::new(vec![items.len(), dim], x)?,
        y: items.iter().map(|i| i.target).collect(),
        labels: items.iter().map(|i| i.label).collect(),
        t: items.iter().map(|i| i.task).collect(),
        idx: items.iter().map(|i| i.index).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchmarks::Scenario;

    fn dataset(task: usize, per_class: usize, classes: usize) -> TaskDataset {
        let n = per_class * classes;
        let x: Vec<f32> = (0..n).map(|i| i as f32).collect();
        let y: Vec<usize> = (0..n).map(|i| i % classes).collect();
        TaskDataset::new(task, Tensor::new(vec![n, 1], x).unwrap(), y, (0..classes).collect(), Scenario::NewInstance)
            .unwrap()
    }

    #[test]
    fn class_balanced_counts() {
        let ds = dataset(1, 30, 10);
        let mut mem = MemoryBuffer::new(MemoryPolicy::PerTask { per_task: 100 });
        mem.insert_task(&ds, &mut Rng::new(0, 5)).unwrap();
        let mut counts = [0usize; 10];
        for item in mem.items() {
            counts[item.label] += 1;
        }
        assert_eq!(counts, [10; 10]);
    }

    #[test]
    fn uneven_classes_fill_up() {
        // 3 classes, 7 items requested: 3/2/2 split
        let ds = dataset(1, 5, 3);
        let mut mem = MemoryBuffer::new(MemoryPolicy::PerTask { per_task: 7 });
        mem.insert_task(&ds, &mut Rng::new(1, 5)).unwrap();
        let mut counts = [0usize; 3];
        for item in mem.items() {
            counts[item.label] += 1;
        }
        counts.sort();
        assert_eq!(counts, [2, 2, 3]);
    }

    #[test]
    fn zero_and_oversized_requests() {
        let ds = dataset(1, 2, 2);
        let mut empty = MemoryBuffer::new(MemoryPolicy::PerTask { per_task: 0 });
        empty.insert_task(&ds, &mut Rng::new(0, 5)).unwrap();
        assert!(empty.is_empty());
        let mut all = MemoryBuffer::new(MemoryPolicy::PerTask { per_task: 50 });
        let mut rows = all.insert_task(&ds, &mut Rng::new(0, 5)).unwrap();
        rows.sort();
        assert_eq!(rows, vec![0, 1, 2, 3]);
    }

    #[test]
    fn selection_is_seeded() {
        let ds = dataset(2, 20, 4);
        let pick = |seed| {
            let mut m = MemoryBuffer::new(MemoryPolicy::PerTask { per_task: 9 });
            m.insert_task(&ds, &mut Rng::new(seed, 5)).unwrap()
        };
        assert_eq!(pick(3), pick(3));
        assert_ne!(pick(3), pick(4));
    }

    #[test]
    fn stored_items_are_real_rows() {
        let ds = dataset(3, 4, 2);
        let mut mem = MemoryBuffer::new(MemoryPolicy::PerTask { per_task: 5 });
        mem.insert_task(&ds, &mut Rng::new(0, 5)).unwrap();
        for item in mem.items() {
            assert_eq!(item.x, ds.row(item.index));
            assert_eq!(item.label, ds.y[item.index]);
            assert_eq!(item.task, 3);
        }
    }

    #[test]
    fn reservoir_never_exceeds_capacity() {
        let ds = dataset(1, 50, 2);
        let mut mem = MemoryBuffer::new(MemoryPolicy::Reservoir { capacity: 10 });
        let mut rng = Rng::new(0, 5);
        for row in 0..ds.len() {
            mem.offer(MemoryItem::from_dataset(&ds, row), &mut rng).unwrap();
            assert!(mem.len() <= 10);
        }
        assert_eq!(mem.len(), 10);
        assert_eq!(mem.seen(), 100);
    }

    #[test]
    fn sampling_respects_filter() {
        let mut mem = MemoryBuffer::new(MemoryPolicy::PerTask { per_task: 4 });
        let mut rng = Rng::new(0, 5);
        for t in 1..=3 {
            mem.insert_task(&dataset(t, 4, 2), &mut rng).unwrap();
        }
        let s = mem.sample(6, |t| t < 3, &mut rng);
        assert_eq!(s.len(), 6);
        assert!(s.iter().all(|i| i.task < 3));
        assert_eq!(mem.sample(100, |t| t == 1, &mut rng).len(), 4);
        let b: Batch<f64> = memory_batch(&s).unwrap();
        assert_eq!(b.len(), 6);
    }
}
