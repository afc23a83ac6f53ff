//! Query and key construction through an orthonormal linear projection of
//! the whitened feature space, plus the projection optimizer.
//!
//! The optimizer maximizes the mean pairwise discriminant gain, which
//! reduces to Fisher's linear discriminant analysis: the optimal rows are
//! the leading eigenvectors of the whitened between-class scatter matrix.

use std::io::{BufRead, Write};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::sensing::GmmModel;

const ORTHONORMALITY_TOL: f64 = 1e-10;

/// Orthonormal row projection together with the pairwise discriminant gains
/// it induces. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    rows: Vec<Vec<f64>>,
    query_dim: usize,
    feature_dim: usize,
    gains: Vec<Vec<f64>>,
}

impl Projection {
    /// Wraps an explicit row matrix, checking orthonormality and caching the
    /// pairwise gains for `model`.
    pub fn from_rows(rows: Vec<Vec<f64>>, model: &GmmModel) -> Result<Self> {
        let query_dim = rows.len();
        let feature_dim = model.feature_dim();
        if query_dim == 0 || query_dim > feature_dim {
            return Err(Error::invalid("projection", format!("query dimension must lie in [1, {feature_dim}], got {query_dim}")));
        }
        if rows.iter().any(|r| r.len() != feature_dim) {
            return Err(Error::invalid("projection", "row length must equal the feature dimension"));
        }
        for i in 0..query_dim {
            for j in i..query_dim {
                let dot: f64 = rows[i].iter().zip(&rows[j]).map(|(a, b)| a * b).sum();
                let expect = if i == j { 1.0 } else { 0.0 };
                if (dot - expect).abs() > ORTHONORMALITY_TOL {
                    return Err(Error::invalid("projection", format!("rows {i} and {j} fail orthonormality: inner product {dot}")));
                }
            }
        }
        let gains = pairwise_gains(&rows, model);
        Ok(Projection {
            rows,
            query_dim,
            feature_dim,
            gains,
        })
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn query_dim(&self) -> usize {
        self.query_dim
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    /// Symmetric matrix of pairwise discriminant gains under this
    /// projection; zero diagonal.
    pub fn gains(&self) -> &[Vec<f64>] {
        &self.gains
    }

    pub fn gain(&self, i: usize, j: usize) -> f64 {
        self.gains[i][j]
    }

    /// Writes the row matrix as plain text: a `rows cols` header line
    /// followed by one whitespace-separated row per line. Values use the
    /// shortest representation that round-trips through `f64` parsing.
    pub fn export_matrix(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "{} {}", self.query_dim, self.feature_dim)?;
        for row in &self.rows {
            let line: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
            writeln!(w, "{}", line.join(" "))?;
        }
        Ok(())
    }

    /// Reads a matrix written by [`Projection::export_matrix`] and
    /// revalidates it against `model` (orthonormality, dimensions, gains).
    pub fn import_matrix(r: impl BufRead, model: &GmmModel) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::MalformedMatrix("missing header".into()))??;
        let dims: Vec<usize> = header
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| Error::MalformedMatrix(format!("bad header token {t:?}"))))
            .collect::<Result<_>>()?;
        if dims.len() != 2 {
            return Err(Error::MalformedMatrix("header must contain two dimensions".into()));
        }
        let (nrows, ncols) = (dims[0], dims[1]);
        let mut rows = Vec::with_capacity(nrows);
        for (idx, line) in lines.enumerate().take(nrows) {
            let line = line?;
            let row: Vec<f64> = line
                .split_whitespace()
                .map(|t| t.parse().map_err(|_| Error::MalformedMatrix(format!("bad value {t:?} on row {idx}"))))
                .collect::<Result<_>>()?;
            if row.len() != ncols {
                return Err(Error::MalformedMatrix(format!("row {idx} has {} values, expected {ncols}", row.len())));
            }
            rows.push(row);
        }
        if rows.len() != nrows {
            return Err(Error::MalformedMatrix(format!("expected {nrows} rows, found {}", rows.len())));
        }
        Projection::from_rows(rows, model)
    }
}

fn pairwise_gains(rows: &[Vec<f64>], model: &GmmModel) -> Vec<Vec<f64>> {
    let z = model.num_classes();
    let mut gains = vec![vec![0.0; z]; z];
    for i in 0..z {
        for j in (i + 1)..z {
            // ||P Σ^{-1/2} (μ_i - μ_j)||²
            let mut g = 0.0;
            for row in rows {
                let mut dot = 0.0;
                for n in 0..model.feature_dim() {
                    let w = (model.centroid(i)[n] - model.centroid(j)[n]) * model.inv_std_diag()[n];
                    dot += row[n] * w;
                }
                g += dot * dot;
            }
            gains[i][j] = g;
            gains[j][i] = g;
        }
    }
    gains
}

/// Gain-maximizing orthonormal projection onto `query_dim` dimensions: the
/// leading eigenvectors of the whitened between-class scatter
/// W = Σ_i Σ^{-1/2}(μ_i - μ̄)(μ_i - μ̄)ᵀ Σ^{-1/2}.
///
/// Eigenvectors are sorted by eigenvalue magnitude (descending, index
/// tie-break) and sign-fixed so the first nonzero component is positive,
/// making the result deterministic.
pub fn optimal_projection(model: &GmmModel, query_dim: usize) -> Result<Projection> {
    let d = model.feature_dim();
    let z = model.num_classes();
    if query_dim == 0 || query_dim > d {
        return Err(Error::invalid("query_dim", format!("must lie in [1, {d}], got {query_dim}")));
    }
    let mut mean = vec![0.0; d];
    for i in 0..z {
        for n in 0..d {
            mean[n] += model.centroid(i)[n];
        }
    }
    for v in &mut mean {
        *v /= z as f64;
    }

    let mut w = DMatrix::<f64>::zeros(d, d);
    for i in 0..z {
        let tilde = DVector::from_iterator(
            d,
            (0..d).map(|n| (model.centroid(i)[n] - mean[n]) * model.inv_std_diag()[n]),
        );
        w += &tilde * tilde.transpose();
    }

    let eigen = w.symmetric_eigen();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| {
        eigen.eigenvalues[b]
            .abs()
            .partial_cmp(&eigen.eigenvalues[a].abs())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    if eigen.eigenvalues.iter().any(|v| !v.is_finite()) {
        return Err(Error::EigenFailure);
    }

    let mut rows = Vec::with_capacity(query_dim);
    for &col in order.iter().take(query_dim) {
        let mut row: Vec<f64> = (0..d).map(|n| eigen.eigenvectors[(n, col)]).collect();
        if let Some(first) = row.iter().find(|v| v.abs() > 1e-12) {
            if *first < 0.0 {
                for v in &mut row {
                    *v = -*v;
                }
            }
        }
        rows.push(row);
    }
    Projection::from_rows(rows, model)
}

/// Mean pairwise discriminant gain attained by the projection:
/// 2/(|Z|(|Z|-1)) Σ_{i<j} G_ij.
pub fn projection_objective(projection: &Projection) -> f64 {
    let z = projection.gains.len();
    let mut total = 0.0;
    for i in 0..z {
        for j in (i + 1)..z {
            total += projection.gains[i][j];
        }
    }
    2.0 * total / (z as f64 * (z - 1) as f64)
}

/// Encodes a feature vector into the query subspace:
/// q = sqrt(d/l) P Σ^{-1/2} x.
pub fn encode_query(x: &[f64], projection: &Projection, model: &GmmModel) -> Vec<f64> {
    debug_assert_eq!(x.len(), model.feature_dim());
    let scale = (model.feature_dim() as f64 / projection.query_dim as f64).sqrt();
    let whitened: Vec<f64> = x
        .iter()
        .zip(model.inv_std_diag())
        .map(|(&v, &inv)| v * inv)
        .collect();
    projection
        .rows
        .iter()
        .map(|row| scale * dot(row, &whitened))
        .collect()
}

// Four independent accumulators break the floating-point dependency chain;
// this dot product sits on the per-device hot path of the simulator.
#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let chunks_a = a.chunks_exact(4);
    let chunks_b = b.chunks_exact(4);
    let rem_a = chunks_a.remainder();
    let rem_b = chunks_b.remainder();
    let mut acc = [0.0f64; 4];
    for (pa, pb) in chunks_a.zip(chunks_b) {
        acc[0] += pa[0] * pb[0];
        acc[1] += pa[1] * pb[1];
        acc[2] += pa[2] * pb[2];
        acc[3] += pa[3] * pb[3];
    }
    let mut tail = 0.0;
    for (&x, &y) in rem_a.iter().zip(rem_b) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Device-side key vector; the identical map applied to the observation.
pub fn encode_key(x: &[f64], projection: &Projection, model: &GmmModel) -> Vec<f64> {
    encode_query(x, projection, model)
}

/// Matching score exp(-||k - q||²/d). The exponent is normalized by the
/// full feature dimension even in reduced dimension, matching the score the
/// devices evaluate.
pub fn matching_score(key: &[f64], query: &[f64], feature_dim: usize) -> f64 {
    debug_assert_eq!(key.len(), query.len());
    let dist: f64 = key
        .iter()
        .zip(query)
        .map(|(k, q)| (k - q) * (k - q))
        .sum();
    (-dist / feature_dim as f64).exp()
}
