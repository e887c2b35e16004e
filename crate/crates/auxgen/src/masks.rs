//! Additive attention masks: 0 allows attention, a large negative
//! constant blocks it.

use auxgen_tensor::{Scalar, Tensor};

/// Seq2seq generation mask over a length-(m+t) sequence: the m context
/// tokens attend bidirectionally among themselves and never see the
/// response; response position l attends the whole context plus response
/// positions ≤ l.
pub fn generation_mask<T: Scalar>(m: usize, t: usize) -> Tensor<T> {
    let n = m + t;
    let mut data = vec![T::ZERO; n * n];
    for i in 0..n {
        for j in 0..n {
            let allowed = if i < m { j < m } else { j < m || j <= i };
            if !allowed {
                data[i * n + j] = T::MASK_NEG;
            }
        }
    }
    Tensor::from_vec(&[n, n], data).expect("square mask")
}

/// Rows m..m+t of the generation mask: the visibility of each response
/// position over the full sequence, used by the decoder's cross-attention.
pub fn decoder_mask<T: Scalar>(m: usize, t: usize) -> Tensor<T> {
    let n = m + t;
    let mut data = vec![T::ZERO; t * n];
    for l in 0..t {
        for j in 0..n {
            if j >= m && j > m + l {
                data[l * n + j] = T::MASK_NEG;
            }
        }
    }
    Tensor::from_vec(&[t, n], data).expect("rectangular mask")
}

/// Same-utterance visibility: token i may attend token j iff they carry
/// the same utterance index. Applied to word-order-recovery sequences.
pub fn block_diagonal_mask<T: Scalar>(utterance: &[usize]) -> Tensor<T> {
    let n = utterance.len();
    let mut data = vec![T::ZERO; n * n];
    for i in 0..n {
        for j in 0..n {
            if utterance[i] != utterance[j] {
                data[i * n + j] = T::MASK_NEG;
            }
        }
    }
    Tensor::from_vec(&[n, n], data).expect("square mask")
}

/// All-zero mask: unrestricted bidirectional attention.
pub fn zero_mask<T: Scalar>(rows: usize, cols: usize) -> Tensor<T> {
    Tensor::zeros(&[rows, cols])
}
