use super::rollout::Transition;
use super::{Result, RlError};
use crate::rng::{stream_rng, StreamRng};
use crate::tensor::Tensor;
use rand::Rng;

/// Column-stacked minibatch.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub s: Tensor,
    pub a: Tensor,
    /// `[B, 1]`.
    pub r: Tensor,
    pub s_next: Tensor,
}

impl Batch {
    pub fn from_transitions(ts: &[&Transition]) -> Self {
        let rows = |f: &dyn Fn(&Transition) -> Vec<f64>| {
            Tensor::from_rows(&ts.iter().map(|t| f(t)).collect::<Vec<_>>()).expect("uniform widths")
        };
        Self {
            s: rows(&|t| t.s.clone()),
            a: rows(&|t| t.a.clone()),
            r: rows(&|t| vec![t.r]),
            s_next: rows(&|t| t.s_next.clone()),
        }
    }

    pub fn len(&self) -> usize {
        self.r.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Fixed-capacity ring of transitions with a seeded uniform sampler.
#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    capacity: usize,
    data: Vec<Transition>,
    next: usize,
    rng: StreamRng,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, seed: u64, stream: u64) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
            data: Vec::with_capacity(capacity.min(1 << 16)),
            next: 0,
            rng: stream_rng(seed, stream),
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&mut self, t: Transition) {
        if self.data.len() < self.capacity {
            self.data.push(t);
        } else {
            self.data[self.next] = t;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    pub fn get(&self, i: usize) -> &Transition {
        &self.data[i]
    }

    /// Slot indices drawn uniformly with replacement.
    pub fn sample_indices(&mut self, batch: usize) -> Result<Vec<usize>> {
        if self.data.len() < batch || self.data.is_empty() {
            return Err(RlError::Underfull {
                len: self.data.len(),
                batch,
            });
        }
        let n = self.data.len();
        Ok((0..batch).map(|_| self.rng.random_range(0..n)).collect())
    }

    pub fn sample(&mut self, batch: usize) -> Result<Batch> {
        let idx = self.sample_indices(batch)?;
        let ts: Vec<&Transition> = idx.iter().map(|&i| &self.data[i]).collect();
        Ok(Batch::from_transitions(&ts))
    }
}
