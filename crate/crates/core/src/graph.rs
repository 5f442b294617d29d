//! Electrode-grid graph, weighted Laplacian and its spectral basis.
//!
//! Vertices live on a `rows x cols` lattice at a fixed pitch; each active
//! vertex is connected to the active vertices of its 8-neighborhood with
//! weight `alpha / d`, where `d` is the Euclidean distance and `alpha` the
//! smallest edge distance, so the largest weight is one.

use std::collections::BTreeSet;

use nalgebra::DMatrix;
use ndarray::{Array1, Array2};

use crate::error::{Error, Result};

/// Undirected weighted graph over the active electrodes of a lattice array.
///
/// Inactive lattice sites are dropped from the analysis dimension entirely:
/// `adjacency` and everything derived from it are `K x K` with `K` the
/// number of active vertices, listed in row-major lattice order.
#[derive(Debug, Clone, PartialEq)]
pub struct ElectrodeGraph {
    rows: usize,
    cols: usize,
    pitch_mm: f64,
    alpha_mm: f64,
    inactive: BTreeSet<usize>,
    /// Lattice index of each active vertex, row-major ascending.
    active: Vec<usize>,
    /// Active-vertex positions in millimetres, `K x 2` (x, y).
    positions: Array2<f64>,
    /// Symmetric nonnegative adjacency with zero diagonal, `K x K`.
    adjacency: Array2<f64>,
}

impl ElectrodeGraph {
    /// Build the 8-neighborhood grid graph on a `rows x cols` lattice.
    ///
    /// `inactive` holds row-major lattice indices to exclude; those vertices
    /// are removed from the analysis dimension rather than zero-padded.
    pub fn build_grid(
        rows: usize,
        cols: usize,
        pitch_mm: f64,
        inactive: &BTreeSet<usize>,
    ) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidParameter(format!(
                "grid must be at least 1x1, got {rows}x{cols}"
            )));
        }
        if !(pitch_mm > 0.0) || !pitch_mm.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "pitch must be positive, got {pitch_mm}"
            )));
        }
        let n = rows * cols;
        if let Some(&bad) = inactive.iter().find(|&&i| i >= n) {
            return Err(Error::InvalidParameter(format!(
                "inactive index {bad} out of range for {n} lattice sites"
            )));
        }
        let active: Vec<usize> = (0..n).filter(|i| !inactive.contains(i)).collect();
        if active.is_empty() {
            return Err(Error::EmptyGraph);
        }
        let k = active.len();

        // Map lattice index -> active index.
        let mut to_active = vec![usize::MAX; n];
        for (ai, &li) in active.iter().enumerate() {
            to_active[li] = ai;
        }

        let mut positions = Array2::zeros((k, 2));
        for (ai, &li) in active.iter().enumerate() {
            let (r, c) = (li / cols, li % cols);
            positions[[ai, 0]] = c as f64 * pitch_mm;
            positions[[ai, 1]] = r as f64 * pitch_mm;
        }

        let mut adjacency = Array2::zeros((k, k));
        let mut min_dist = f64::INFINITY;
        for (ai, &li) in active.iter().enumerate() {
            let (r, c) = (li as isize / cols as isize, li as isize % cols as isize);
            for dr in -1..=1isize {
                for dc in -1..=1isize {
                    if dr == 0 && dc == 0 {
                        continue;
                    }
                    let (nr, nc) = (r + dr, c + dc);
                    if nr < 0 || nr >= rows as isize || nc < 0 || nc >= cols as isize {
                        continue;
                    }
                    let nli = (nr * cols as isize + nc) as usize;
                    let aj = to_active[nli];
                    if aj == usize::MAX {
                        continue;
                    }
                    let d = pitch_mm * ((dr * dr + dc * dc) as f64).sqrt();
                    min_dist = min_dist.min(d);
                    adjacency[[ai, aj]] = d; // distance for now, weights below
                }
            }
        }

        // Eq-style weights alpha/d with alpha the smallest edge distance,
        // which is the pitch whenever any axis-aligned edge exists.
        let alpha_mm = if min_dist.is_finite() { min_dist } else { pitch_mm };
        adjacency.mapv_inplace(|d| if d > 0.0 { alpha_mm / d } else { 0.0 });

        Ok(Self {
            rows,
            cols,
            pitch_mm,
            alpha_mm,
            inactive: inactive.clone(),
            active,
            positions,
            adjacency,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn pitch_mm(&self) -> f64 {
        self.pitch_mm
    }

    /// Scaling parameter of the distance weights (smallest edge distance).
    pub fn alpha_mm(&self) -> f64 {
        self.alpha_mm
    }

    /// Number of active vertices K (the analysis dimension).
    pub fn vertex_count(&self) -> usize {
        self.active.len()
    }

    pub fn inactive(&self) -> &BTreeSet<usize> {
        &self.inactive
    }

    /// Lattice indices of the active vertices, row-major ascending.
    pub fn active_lattice_indices(&self) -> &[usize] {
        &self.active
    }

    /// Per-lattice-site activity mask of length `rows * cols`.
    pub fn active_mask(&self) -> Vec<bool> {
        (0..self.rows * self.cols)
            .map(|i| !self.inactive.contains(&i))
            .collect()
    }

    /// Active-vertex positions in millimetres, `K x 2`.
    pub fn positions(&self) -> &Array2<f64> {
        &self.positions
    }

    pub fn adjacency(&self) -> &Array2<f64> {
        &self.adjacency
    }

    /// Number of undirected edges.
    pub fn edge_count(&self) -> usize {
        let k = self.vertex_count();
        let mut count = 0;
        for i in 0..k {
            for j in (i + 1)..k {
                if self.adjacency[[i, j]] > 0.0 {
                    count += 1;
                }
            }
        }
        count
    }

    /// Weighted degree of each vertex.
    pub fn degrees(&self) -> Array1<f64> {
        self.adjacency.sum_axis(ndarray::Axis(1))
    }

    /// Combinatorial Laplacian `L = D - W`.
    pub fn laplacian(&self) -> Array2<f64> {
        let k = self.vertex_count();
        let deg = self.degrees();
        let mut l = -self.adjacency.clone();
        for i in 0..k {
            l[[i, i]] = deg[i];
        }
        l
    }
}

/// Orthonormal Laplacian eigenbasis with ascending eigenvalues.
///
/// Column `k` of `basis` is the eigenvector `u_k`; `lambdas[k]` the graph
/// frequency. Signs follow the first-nonzero-positive convention and
/// degenerate blocks are ordered by the vertex index of each eigenvector's
/// largest-magnitude entry, so the output is reproducible across runs.
#[derive(Debug, Clone, PartialEq)]
pub struct LaplacianSpectrum {
    basis: Array2<f64>,
    lambdas: Vec<f64>,
}

impl LaplacianSpectrum {
    /// Dimension K of the signal space.
    pub fn len(&self) -> usize {
        self.lambdas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambdas.is_empty()
    }

    /// `K x K` eigenvector matrix U, columns in ascending-eigenvalue order.
    pub fn basis(&self) -> &Array2<f64> {
        &self.basis
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn eigenvector(&self, k: usize) -> ndarray::ArrayView1<'_, f64> {
        self.basis.column(k)
    }

    pub fn lambda_max(&self) -> f64 {
        *self.lambdas.last().expect("spectrum is nonempty")
    }
}

const SYMMETRY_TOL: f64 = 1e-9;
const ZERO_EIGENVALUE_TOL: f64 = 1e-12;
const DEGENERACY_TOL: f64 = 1e-9;

/// Eigendecompose a symmetric PSD matrix into a [`LaplacianSpectrum`].
pub fn eigendecompose(l: &Array2<f64>) -> Result<LaplacianSpectrum> {
    let k = l.nrows();
    if l.ncols() != k || k == 0 {
        return Err(Error::InvalidParameter(format!(
            "matrix must be square and nonempty, got {}x{}",
            l.nrows(),
            l.ncols()
        )));
    }
    let scale = l.iter().fold(0.0f64, |m, &v| m.max(v.abs())).max(1.0);
    for i in 0..k {
        for j in (i + 1)..k {
            if (l[[i, j]] - l[[j, i]]).abs() > SYMMETRY_TOL * scale {
                return Err(Error::InvalidParameter(format!(
                    "matrix is not symmetric at ({i},{j})"
                )));
            }
        }
    }

    let m = DMatrix::from_fn(k, k, |i, j| 0.5 * (l[[i, j]] + l[[j, i]]));
    let eig = m.symmetric_eigen();

    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));

    let mut lambdas: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    for lam in lambdas.iter_mut() {
        if lam.abs() < ZERO_EIGENVALUE_TOL * scale {
            *lam = 0.0;
        }
    }

    let mut basis = Array2::zeros((k, k));
    for (col, &src) in order.iter().enumerate() {
        for row in 0..k {
            basis[[row, col]] = eig.eigenvectors[(row, src)];
        }
    }

    // Deterministic ordering inside degenerate blocks: sort the block's
    // eigenvectors by the vertex index of their largest-magnitude entry.
    let mut start = 0;
    while start < k {
        let mut end = start + 1;
        while end < k && (lambdas[end] - lambdas[start]).abs() <= DEGENERACY_TOL * scale {
            end += 1;
        }
        if end - start > 1 {
            let mut cols: Vec<(usize, Array1<f64>)> = (start..end)
                .map(|c| (argmax_abs(&basis.column(c).to_owned()), basis.column(c).to_owned()))
                .collect();
            cols.sort_by_key(|(idx, _)| *idx);
            for (offset, (_, v)) in cols.into_iter().enumerate() {
                basis.column_mut(start + offset).assign(&v);
            }
        }
        start = end;
    }

    // Sign convention: first entry above tolerance is positive.
    for mut col in basis.columns_mut() {
        if let Some(&lead) = col.iter().find(|v| v.abs() > 1e-12) {
            if lead < 0.0 {
                col.mapv_inplace(|v| -v);
            }
        }
    }

    Ok(LaplacianSpectrum { basis, lambdas })
}

fn argmax_abs(v: &Array1<f64>) -> usize {
    let mut best = 0;
    let mut best_val = -1.0;
    for (i, &x) in v.iter().enumerate() {
        if x.abs() > best_val {
            best_val = x.abs();
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn grid(rows: usize, cols: usize, pitch: f64) -> ElectrodeGraph {
        ElectrodeGraph::build_grid(rows, cols, pitch, &BTreeSet::new()).unwrap()
    }

    #[test]
    fn single_vertex_has_no_edges() {
        let g = grid(1, 1, 2.0);
        assert_eq!(g.vertex_count(), 1);
        assert_eq!(g.edge_count(), 0);
    }

    #[test]
    fn two_by_two_grid_weights() {
        let g = grid(2, 2, 2.0);
        assert_eq!(g.vertex_count(), 4);
        assert_eq!(g.edge_count(), 6);
        let w = g.adjacency();
        // Axis-aligned neighbors at distance 2 mm -> weight 1.
        assert_abs_diff_eq!(w[[0, 1]], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(w[[0, 2]], 1.0, epsilon = 1e-15);
        // Diagonal neighbors at distance 2*sqrt(2) -> weight 1/sqrt(2).
        assert_abs_diff_eq!(w[[0, 3]], 1.0 / 2f64.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(w[[1, 2]], 1.0 / 2f64.sqrt(), epsilon = 1e-15);
        // Degrees: two axis edges and one diagonal each.
        let expected_degree = 2.0 + 1.0 / 2f64.sqrt();
        for d in g.degrees() {
            assert_abs_diff_eq!(d, expected_degree, epsilon = 1e-14);
        }
    }

    #[test]
    fn mapping_array_with_masked_electrodes() {
        let inactive: BTreeSet<usize> = [0, 1, 2, 3].into_iter().collect();
        let g = ElectrodeGraph::build_grid(8, 24, 2.0, &inactive).unwrap();
        assert_eq!(g.vertex_count(), 188);
        assert_eq!(g.adjacency().nrows(), 188);
    }

    #[test]
    fn invalid_parameters_rejected() {
        assert!(ElectrodeGraph::build_grid(2, 2, 0.0, &BTreeSet::new()).is_err());
        assert!(ElectrodeGraph::build_grid(2, 2, -1.0, &BTreeSet::new()).is_err());
        let all: BTreeSet<usize> = (0..4).collect();
        assert!(matches!(
            ElectrodeGraph::build_grid(2, 2, 2.0, &all),
            Err(Error::EmptyGraph)
        ));
        let oob: BTreeSet<usize> = [7].into_iter().collect();
        assert!(ElectrodeGraph::build_grid(2, 2, 2.0, &oob).is_err());
    }

    #[test]
    fn adjacency_invariants() {
        let inactive: BTreeSet<usize> = [5, 17].into_iter().collect();
        let g = ElectrodeGraph::build_grid(4, 6, 2.0, &inactive).unwrap();
        let w = g.adjacency();
        let k = g.vertex_count();
        let mut max_w: f64 = 0.0;
        for i in 0..k {
            assert_eq!(w[[i, i]], 0.0);
            for j in 0..k {
                assert!(w[[i, j]] >= 0.0);
                assert_eq!(w[[i, j]], w[[j, i]]);
                max_w = max_w.max(w[[i, j]]);
            }
        }
        assert_abs_diff_eq!(max_w, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn laplacian_of_single_edge() {
        let g = grid(1, 2, 1.0);
        let l = g.laplacian();
        assert_eq!(l[[0, 0]], 1.0);
        assert_eq!(l[[0, 1]], -1.0);
        assert_eq!(l[[1, 0]], -1.0);
        assert_eq!(l[[1, 1]], 1.0);
    }

    #[test]
    fn laplacian_rows_sum_to_zero() {
        let inactive: BTreeSet<usize> = [3].into_iter().collect();
        let g = ElectrodeGraph::build_grid(3, 5, 2.0, &inactive).unwrap();
        let l = g.laplacian();
        for row in l.rows() {
            assert_abs_diff_eq!(row.sum(), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn two_by_two_laplacian_diagonal() {
        let g = grid(2, 2, 2.0);
        let l = g.laplacian();
        for i in 0..4 {
            assert_abs_diff_eq!(l[[i, i]], 2.0 + 1.0 / 2f64.sqrt(), epsilon = 1e-14);
        }
    }

    #[test]
    fn eigen_path_two_vertices() {
        let g = grid(1, 2, 1.0);
        let s = eigendecompose(&g.laplacian()).unwrap();
        assert_abs_diff_eq!(s.lambdas()[0], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.lambdas()[1], 2.0, epsilon = 1e-12);
        let u0 = s.eigenvector(0);
        assert_abs_diff_eq!(u0[0], 1.0 / 2f64.sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(u0[1], 1.0 / 2f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn eigen_path_three_vertices() {
        let g = grid(1, 3, 1.0);
        let s = eigendecompose(&g.laplacian()).unwrap();
        let expected = [0.0, 1.0, 3.0];
        for (lam, want) in s.lambdas().iter().zip(expected) {
            assert_abs_diff_eq!(*lam, want, epsilon = 1e-12);
        }
    }

    #[test]
    fn connected_graph_zero_eigenvalue_is_simple() {
        let g = grid(3, 4, 2.0);
        let s = eigendecompose(&g.laplacian()).unwrap();
        assert_eq!(s.lambdas()[0], 0.0);
        assert!(s.lambdas()[1] > 1e-6);
        // Constant eigenvector with the positive sign convention.
        let k = g.vertex_count() as f64;
        for &v in s.eigenvector(0).iter() {
            assert_abs_diff_eq!(v, 1.0 / k.sqrt(), epsilon = 1e-10);
        }
    }

    #[test]
    fn non_symmetric_rejected() {
        let mut l = Array2::zeros((2, 2));
        l[[0, 1]] = 1.0;
        assert!(eigendecompose(&l).is_err());
    }

    #[test]
    fn reconstruction_and_orthonormality() {
        for (rows, cols, masked) in [(2, 2, vec![]), (3, 7, vec![4]), (8, 24, vec![0, 50, 100, 191])] {
            let inactive: BTreeSet<usize> = masked.into_iter().collect();
            let g = ElectrodeGraph::build_grid(rows, cols, 2.0, &inactive).unwrap();
            let l = g.laplacian();
            let s = eigendecompose(&l).unwrap();
            let k = g.vertex_count();
            let u = s.basis();

            // U^T U = I
            let gram = u.t().dot(u);
            for i in 0..k {
                for j in 0..k {
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert_abs_diff_eq!(gram[[i, j]], want, epsilon = 1e-10);
                }
            }

            // U diag(lambda) U^T = L
            let mut lam = Array2::zeros((k, k));
            for i in 0..k {
                lam[[i, i]] = s.lambdas()[i];
            }
            let rec = u.dot(&lam).dot(&u.t());
            let err = (&rec - &l).iter().fold(0.0f64, |m, &v| m.max(v.abs()));
            assert!(err < 1e-8, "reconstruction error {err} for {rows}x{cols}");
        }
    }

    #[test]
    fn eigendecompose_is_reproducible() {
        let g = grid(4, 4, 2.0);
        let l = g.laplacian();
        let a = eigendecompose(&l).unwrap();
        let b = eigendecompose(&l).unwrap();
        assert_eq!(a, b);
    }
}
