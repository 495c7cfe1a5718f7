use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

/// Default embedding width.
pub const DEFAULT_DIM: usize = 256;

/// An L2-normalized embedding, or the zero vector for empty text.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct EmbeddingVector<T: Scalar> {
    values: Vec<T>,
}

impl<T: Scalar> EmbeddingVector<T> {
    /// Normalizes `raw`; an all-zero input stays zero.
    pub fn normalized(raw: Vec<T>) -> Self {
        let norm = raw.iter().map(|&x| x * x).sum::<T>().sqrt();
        if norm.is_zero() {
            return Self { values: raw };
        }
        Self {
            values: raw.into_iter().map(|x| x / norm).collect(),
        }
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> T {
        self.values.iter().map(|&x| x * x).sum::<T>().sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|x| x.is_zero())
    }
}

/// 64-bit FNV-1a.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Bucket and sign a token hashes to.
pub fn token_slot(token: &str, dim: usize) -> (usize, bool) {
    let h = fnv1a(token.as_bytes());
    ((h % dim as u64) as usize, h >> 63 == 1)
}

/// Signed hashed bag-of-tokens embedding.
pub fn embed<T: Scalar, S: AsRef<str>>(tokens: &[S], dim: usize) -> EmbeddingVector<T> {
    assert!(dim > 0, "embedding dimension must be positive");
    let mut raw = vec![T::zero(); dim];
    for t in tokens {
        let (i, negative) = token_slot(t.as_ref(), dim);
        raw[i] = if negative { raw[i] - T::one() } else { raw[i] + T::one() };
    }
    EmbeddingVector::normalized(raw)
}

/// `u·v / (‖u‖‖v‖)`, or 0 when either side is zero.
pub fn cosine<T: Scalar>(u: &EmbeddingVector<T>, v: &EmbeddingVector<T>) -> T {
    assert_eq!(u.dim(), v.dim(), "embedding dimensions differ");
    let nu = u.norm();
    let nv = v.norm();
    if nu.is_zero() || nv.is_zero() {
        return T::zero();
    }
    let dot: T = u.values.iter().zip(&v.values).map(|(&a, &b)| a * b).sum();
    let c = dot / (nu * nv);
    c.max(-T::one()).min(T::one())
}
