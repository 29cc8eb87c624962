//! Index bookkeeping for symmetric matrices, increasing multi-indices and
//! full covariant tensors on up to four axes.

use std::sync::OnceLock;

/// Position of `(i, j)` in the lexicographic upper-triangle list
/// `(0,0), (0,1), .., (0,n-1), (1,1), ..`.
#[inline]
pub fn sym_index(n: usize, i: usize, j: usize) -> usize {
    let (a, b) = if i <= j { (i, j) } else { (j, i) };
    a * n - a * (a + 1) / 2 + b
}

/// Number of independent components of a symmetric `n x n` matrix.
#[inline]
pub fn sym_len(n: usize) -> usize {
    n * (n + 1) / 2
}

/// Pairs `(i, j)` with `i <= j` in storage order.
pub fn sym_pairs(n: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(sym_len(n));
    for i in 0..n {
        for j in i..n {
            out.push((i, j));
        }
    }
    out
}

pub fn binomial(n: usize, r: usize) -> usize {
    if r > n {
        return 0;
    }
    (0..r).fold(1, |acc, k| acc * (n - k) / (k + 1))
}

/// Increasing multi-indices of every degree for one ambient dimension.
pub struct FormBasis {
    n: usize,
    /// Bitmasks of the multi-indices of each degree, in lexicographic order.
    masks: Vec<Vec<u8>>,
    /// Position of a mask within its degree.
    position: [usize; 16],
}

impl FormBasis {
    fn build(n: usize) -> Self {
        let mut masks = vec![Vec::new(); n + 1];
        let mut all: Vec<Vec<usize>> = (0u8..(1 << n))
            .map(|m| (0..n).filter(|&i| m & (1 << i) != 0).collect())
            .collect();
        all.sort();
        let mut position = [usize::MAX; 16];
        for idx in all {
            let mask = idx.iter().fold(0u8, |m, &i| m | (1 << i));
            let r = idx.len();
            position[mask as usize] = masks[r].len();
            masks[r].push(mask);
        }
        FormBasis { n, masks, position }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn count(&self, degree: usize) -> usize {
        self.masks[degree].len()
    }

    pub fn masks(&self, degree: usize) -> &[u8] {
        &self.masks[degree]
    }

    /// Sorted axes of the `pos`-th multi-index of a degree.
    pub fn indices(&self, degree: usize, pos: usize) -> Vec<usize> {
        mask_axes(self.masks[degree][pos])
    }

    pub fn position(&self, mask: u8) -> usize {
        self.position[mask as usize]
    }

    /// Storage position and sign of the skew component `omega_{t_0 .. t_{r-1}}`
    /// for an arbitrary tuple of axes; `None` when an axis repeats.
    pub fn locate(&self, tuple: &[usize]) -> Option<(usize, f64)> {
        let mut mask = 0u8;
        for &t in tuple {
            if mask & (1 << t) != 0 {
                return None;
            }
            mask |= 1 << t;
        }
        let mut inversions = 0;
        for a in 0..tuple.len() {
            for b in a + 1..tuple.len() {
                if tuple[a] > tuple[b] {
                    inversions += 1;
                }
            }
        }
        let sign = if inversions % 2 == 0 { 1.0 } else { -1.0 };
        Some((self.position[mask as usize], sign))
    }

    /// Position of `{k} u J` and the sign of moving `k` to the front,
    /// for `J` given as a mask not containing `k`.
    pub fn prepend(&self, k: usize, j_mask: u8) -> Option<(usize, f64)> {
        if j_mask & (1 << k) != 0 {
            return None;
        }
        let below = (j_mask & ((1u8 << k) - 1)).count_ones();
        let sign = if below % 2 == 0 { 1.0 } else { -1.0 };
        Some((self.position[(j_mask | (1 << k)) as usize], sign))
    }
}

pub fn mask_axes(mask: u8) -> Vec<usize> {
    (0..8).filter(|&i| mask & (1 << i) != 0).collect()
}

/// Shared multi-index tables for dimension `n <= 4`.
pub fn form_basis(n: usize) -> &'static FormBasis {
    static TABLES: OnceLock<Vec<FormBasis>> = OnceLock::new();
    &TABLES.get_or_init(|| (0..=4).map(FormBasis::build).collect())[n]
}

/// Flat index of a rank-`r` covariant tensor component.
#[inline]
pub fn tensor_index(n: usize, idx: &[usize]) -> usize {
    idx.iter().fold(0, |acc, &i| acc * n + i)
}

/// Inverse of [`tensor_index`].
pub fn tensor_multi(n: usize, rank: usize, mut flat: usize) -> Vec<usize> {
    let mut idx = vec![0; rank];
    for slot in (0..rank).rev() {
        idx[slot] = flat % n;
        flat /= n;
    }
    idx
}

pub fn pow(n: usize, r: usize) -> usize {
    n.pow(r as u32)
}
