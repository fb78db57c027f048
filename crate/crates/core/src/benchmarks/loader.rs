use super::TaskDataset;
use crate::backend::{Scalar, Tensor};
use crate::error::{ensure, Result};

/// A minibatch. `y` holds training targets, `labels` the global labels,
/// `t` the task id of each row and `idx` the row index within its task.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch<S> {
    pub x: Tensor<S>,
    pub y: Vec<usize>,
    pub labels: Vec<usize>,
    pub t: Vec<usize>,
    pub idx: Vec<usize>,
}

impl<S: Scalar> Batch<S> {
    pub fn from_rows(ds: &TaskDataset, rows: &[usize]) -> Self {
        Self {
            x: ds.x.gather_rows(rows).cast(),
            y: rows.iter().map(|&i| ds.targets[i]).collect(),
            labels: rows.iter().map(|&i| ds.y[i]).collect(),
            t: vec![ds.task; rows.len()],
            idx: rows.to_vec(),
        }
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// Stacks `self` above `other`.
    pub fn concat(&self, other: &Batch<S>) -> Result<Self> {
        ensure!(
            self.x.cols() == other.x.cols(),
            Dimension,
            "cannot stack batches of width {} and {}",
            self.x.cols(),
            other.x.cols()
        );
        let cat = |a: &[usize], b: &[usize]| a.iter().chain(b).copied().collect::<Vec<_>>();
        Ok(Self {
            x: Tensor::concat_rows(&[&self.x, &other.x])?,
            y: cat(&self.y, &other.y),
            labels: cat(&self.labels, &other.labels),
            t: cat(&self.t, &other.t),
            idx: cat(&self.idx, &other.idx),
        })
    }

    /// Rows grouped by task id, ascending.
    pub fn task_groups(&self) -> Vec<(usize, Vec<usize>)> {
        let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
        for (row, &t) in self.t.iter().enumerate() {
            groups.entry(t).or_default().push(row);
        }
        groups.into_iter().collect()
    }

    pub fn select(&self, rows: &[usize]) -> Self {
        Self {
            x: self.x.gather_rows(rows),
            y: rows.iter().map(|&i| self.y[i]).collect(),
            labels: rows.iter().map(|&i| self.labels[i]).collect(),
            t: rows.iter().map(|&i| self.t[i]).collect(),
            idx: rows.iter().map(|&i| self.idx[i]).collect(),
        }
    }
}

/// Iterates a dataset in a fixed row order.
pub struct DataLoader<'a, S> {
    ds: &'a TaskDataset,
    order: Vec<usize>,
    batch_size: usize,
    pos: usize,
    _scalar: std::marker::PhantomData<S>,
}

impl<'a, S: Scalar> DataLoader<'a, S> {
    pub fn new(ds: &'a TaskDataset, order: Vec<usize>, batch_size: usize) -> Self {
        Self {
            ds,
            order,
            batch_size: batch_size.max(1),
            pos: 0,
            _scalar: Default::default(),
        }
    }

    pub fn num_batches(&self) -> usize {
        self.order.len().div_ceil(self.batch_size)
    }

    pub fn dataset(&self) -> &'a TaskDataset {
        self.ds
    }
}

impl<S: Scalar> Iterator for DataLoader<'_, S> {
    type Item = Batch<S>;

    fn next(&mut self) -> Option<Batch<S>> {
        if self.pos >= self.order.len() {
            return None;
        }
        let end = (self.pos + self.batch_size).min(self.order.len());
        let batch = Batch::from_rows(self.ds, &self.order[self.pos..end]);
        self.pos = end;
        Some(batch)
    }
}
