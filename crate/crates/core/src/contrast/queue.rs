use super::infonce::check_unit_rows;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// FIFO ring of unit-norm keys tagged with their subject.
#[derive(Debug, Clone, PartialEq)]
pub struct KeyQueue<T> {
    capacity: usize,
    dim: usize,
    keys: Vec<T>,
    subjects: Vec<u32>,
    cursor: usize,
    fill: usize,
}

impl<T: Scalar> KeyQueue<T> {
    pub fn new(capacity: usize, dim: usize) -> Result<Self> {
        if capacity == 0 || dim == 0 {
            return Err(Error::Config(format!("queue capacity {capacity} and key dim {dim} must be positive")));
        }
        Ok(Self { capacity, dim, keys: vec![T::zero(); capacity * dim], subjects: vec![0; capacity], cursor: 0, fill: 0 })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of stored keys.
    pub fn len(&self) -> usize {
        self.fill
    }

    pub fn is_empty(&self) -> bool {
        self.fill == 0
    }

    /// Appends `keys` (`[batch, dim]`), overwriting the oldest entries once full.
    pub fn enqueue(&mut self, keys: &Tensor<T>, subjects: &[u32]) -> Result<()> {
        check_unit_rows(keys, "queued keys", self.dim)?;
        let b = keys.dim(0);
        if b != subjects.len() {
            return Err(Error::Shape(format!("{b} keys but {} subject tags", subjects.len())));
        }
        if b > self.capacity {
            return Err(Error::InvalidInput(format!("batch of {b} exceeds queue capacity {}", self.capacity)));
        }
        for (i, &s) in subjects.iter().enumerate() {
            let c = self.cursor;
            self.keys[c * self.dim..(c + 1) * self.dim].copy_from_slice(keys.row(i));
            self.subjects[c] = s;
            self.cursor = (c + 1) % self.capacity;
        }
        self.fill = (self.fill + b).min(self.capacity);
        Ok(())
    }

    /// Stored keys as `[len, dim]` in storage order (not age order).
    pub fn bank(&self) -> Tensor<T> {
        Tensor::from_vec(&[self.fill, self.dim], self.keys[..self.fill * self.dim].to_vec())
    }

    /// Subject tags aligned with [`KeyQueue::bank`].
    pub fn subjects(&self) -> &[u32] {
        &self.subjects[..self.fill]
    }

    /// Storage slots from oldest to newest.
    pub fn slots_by_age(&self) -> impl Iterator<Item = usize> + '_ {
        let start = if self.fill < self.capacity { 0 } else { self.cursor };
        (0..self.fill).map(move |i| (start + i) % self.capacity)
    }

    pub fn key(&self, slot: usize) -> &[T] {
        &self.keys[slot * self.dim..(slot + 1) * self.dim]
    }

    pub fn subject(&self, slot: usize) -> u32 {
        self.subjects[slot]
    }

    /// Bank rows holding keys of `subject`.
    pub fn subject_filtered_negatives(&self, subject: u32) -> Vec<usize> {
        self.subjects().iter().enumerate().filter(|(_, &s)| s == subject).map(|(i, _)| i).collect()
    }

    /// Same-subject rows, or `None` when fewer than `min_negatives` exist.
    pub fn subject_negatives_or_skip(&self, subject: u32, min_negatives: usize) -> Option<Vec<usize>> {
        let rows = self.subject_filtered_negatives(subject);
        (rows.len() >= min_negatives.max(1)).then_some(rows)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn basis(ids: &[usize], d: usize) -> Tensor<f64> {
        let mut t = Tensor::zeros(&[ids.len(), d]);
        for (r, &i) in ids.iter().enumerate() {
            t.row_mut(r)[i % d] = 1.0;
        }
        t
    }

    #[test]
    fn fifo_eviction() {
        let mut q = KeyQueue::<f64>::new(5, 8).unwrap();
        q.enqueue(&basis(&[0, 1, 2], 8), &[0, 1, 2]).unwrap();
        assert_eq!(q.len(), 3);
        q.enqueue(&basis(&[3, 4, 5], 8), &[3, 4, 5]).unwrap();
        assert_eq!(q.len(), 5);
        let order: Vec<u32> = q.slots_by_age().map(|s| q.subject(s)).collect();
        assert_eq!(order, vec![1, 2, 3, 4, 5]);
    }

    #[test]
    fn oversized_batch_and_bad_norms_rejected() {
        let mut q = KeyQueue::<f64>::new(2, 4).unwrap();
        assert!(q.enqueue(&basis(&[0, 1, 2], 4), &[0, 0, 0]).is_err());
        assert!(matches!(q.enqueue(&Tensor::full(&[1, 4], 1.0), &[0]), Err(Error::Contract(_))));
    }

    #[test]
    fn subject_filter() {
        let mut q = KeyQueue::<f64>::new(10, 4).unwrap();
        q.enqueue(&basis(&[0, 1, 2], 4), &[7, 7, 9]).unwrap();
        assert_eq!(q.subject_filtered_negatives(7), vec![0, 1]);
        assert_eq!(q.subject_filtered_negatives(9), vec![2]);
        assert!(q.subject_negatives_or_skip(3, 1).is_none());
        assert!(q.subject_negatives_or_skip(7, 3).is_none());
        assert_eq!(q.bank().dim(0), 3);
    }
}
