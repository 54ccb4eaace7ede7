use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense row-major `rows x dim` matrix of `f32`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub rows: usize,
    pub dim: usize,
    pub data: Vec<f32>,
}

impl Matrix {
    pub fn zeros(rows: usize, dim: usize) -> Self {
        Matrix {
            rows,
            dim,
            data: vec![0.0; rows * dim],
        }
    }

    pub fn from_rows(rows: &[Vec<f32>], dim: usize) -> Result<Self> {
        let mut data = Vec::with_capacity(rows.len() * dim);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != dim {
                return Err(Error::invalid(format!("row {i} has {} values, expected {dim}", r.len())));
            }
            data.extend_from_slice(r);
        }
        Ok(Matrix {
            rows: rows.len(),
            dim,
            data,
        })
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|&v| f64::from(v) * f64::from(v)).sum()
    }
}

/// Token embeddings with zero rows prepended up to a fixed length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PaddedEmbeddingMatrix {
    pub matrix: Matrix,
    /// Index of the first real (non-pad) row.
    pub valid_from: usize,
}

impl PaddedEmbeddingMatrix {
    pub fn valid_rows(&self) -> usize {
        self.matrix.rows - self.valid_from
    }

    pub fn unpad(&self) -> Matrix {
        let d = self.matrix.dim;
        Matrix {
            rows: self.valid_rows(),
            dim: d,
            data: self.matrix.data[self.valid_from * d..].to_vec(),
        }
    }
}

pub fn front_pad(tokens: &Matrix, max_len: usize) -> Result<PaddedEmbeddingMatrix> {
    if tokens.rows > max_len {
        return Err(Error::invalid(format!(
            "{} token rows exceed max_len {max_len}",
            tokens.rows
        )));
    }
    let valid_from = max_len - tokens.rows;
    let mut data = vec![0.0; valid_from * tokens.dim];
    data.extend_from_slice(&tokens.data);
    Ok(PaddedEmbeddingMatrix {
        matrix: Matrix {
            rows: max_len,
            dim: tokens.dim,
            data,
        },
        valid_from,
    })
}
