//! Dense tensors at a point, with per-index variance and role tags.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variance {
    Up,
    Down,
}

/// Which index space a slot ranges over. `H` slots run over `0..n`, `V`
/// slots over `n..n+m` (stored re-based at 0), `Total` over `0..n+m`.
/// Spinor slots remember the block they were soldered from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Role {
    H,
    V,
    Total,
    Unprimed(Block),
    Primed(Block),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Block {
    Total,
    H,
    V,
}

impl Block {
    /// The tensor role of this block.
    pub fn role(self) -> Role {
        match self {
            Block::Total => Role::Total,
            Block::H => Role::H,
            Block::V => Role::V,
        }
    }
}

pub trait Entry: Copy + Default + PartialEq + std::ops::Sub<Output = Self> + std::ops::Add<Output = Self> {
    fn magnitude(self) -> f64;
}

impl Entry for f64 {
    fn magnitude(self) -> f64 {
        self.abs()
    }
}

impl Entry for Complex64 {
    fn magnitude(self) -> f64 {
        self.norm()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorBlock<T = f64> {
    pub dims: Vec<usize>,
    pub variance: Vec<Variance>,
    pub roles: Vec<Role>,
    pub data: Vec<T>,
}

impl<T: Entry> TensorBlock<T> {
    pub fn zeros(dims: &[usize], variance: &[Variance], roles: &[Role]) -> Self {
        assert_eq!(dims.len(), variance.len());
        assert_eq!(dims.len(), roles.len());
        TensorBlock {
            dims: dims.to_vec(),
            variance: variance.to_vec(),
            roles: roles.to_vec(),
            data: vec![T::default(); dims.iter().product()],
        }
    }

    /// All slots of extent `dim` with role `Total`.
    pub fn total(dim: usize, variance: &[Variance]) -> Self {
        let r = variance.len();
        TensorBlock::zeros(&vec![dim; r], variance, &vec![Role::Total; r])
    }

    pub fn from_data(dims: &[usize], variance: &[Variance], roles: &[Role], data: Vec<T>) -> Self {
        assert_eq!(data.len(), dims.iter().product::<usize>());
        TensorBlock {
            dims: dims.to_vec(),
            variance: variance.to_vec(),
            roles: roles.to_vec(),
            data,
        }
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    pub fn offset(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.dims.len());
        idx.iter().zip(&self.dims).fold(0, |acc, (&i, &d)| {
            debug_assert!(i < d);
            acc * d + i
        })
    }

    pub fn get(&self, idx: &[usize]) -> T {
        self.data[self.offset(idx)]
    }

    pub fn set(&mut self, idx: &[usize], v: T) {
        let o = self.offset(idx);
        self.data[o] = v;
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.magnitude()))
    }

    /// `max |self − other|` over matching shapes.
    pub fn max_diff(&self, other: &TensorBlock<T>) -> f64 {
        assert_eq!(self.dims, other.dims);
        self.data.iter().zip(&other.data).fold(0.0, |m, (a, b)| m.max((*a - *b).magnitude()))
    }

    /// Multi-indices in storage order.
    pub fn indices(&self) -> MultiIndex {
        MultiIndex::new(&self.dims)
    }
}

/// Row-major iterator over all multi-indices of a shape.
pub struct MultiIndex {
    dims: Vec<usize>,
    cur: Vec<usize>,
    done: bool,
}

impl MultiIndex {
    pub fn new(dims: &[usize]) -> MultiIndex {
        MultiIndex {
            dims: dims.to_vec(),
            cur: vec![0; dims.len()],
            done: dims.contains(&0),
        }
    }
}

impl Iterator for MultiIndex {
    type Item = Vec<usize>;
    fn next(&mut self) -> Option<Vec<usize>> {
        if self.done {
            return None;
        }
        let out = self.cur.clone();
        let mut k = self.dims.len();
        loop {
            if k == 0 {
                self.done = true;
                break;
            }
            k -= 1;
            self.cur[k] += 1;
            if self.cur[k] < self.dims[k] {
                break;
            }
            self.cur[k] = 0;
        }
        Some(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn offsets_are_row_major() {
        let t: TensorBlock = TensorBlock::total(3, &[Variance::Up, Variance::Down]);
        assert_eq!(t.offset(&[1, 2]), 5);
        assert_eq!(t.indices().count(), 9);
        assert_eq!(t.indices().nth(5), Some(vec![1, 2]));
    }

    #[test]
    fn rank_zero_has_one_entry() {
        let t: TensorBlock = TensorBlock::zeros(&[], &[], &[]);
        assert_eq!(t.data.len(), 1);
        assert_eq!(t.indices().count(), 1);
    }
}
