//! Orthogonal matrices as exponentials of skew-symmetric ones.
//!
//! The free parameters are the strictly-lower-triangular entries of `S_raw`,
//! stored compactly in row-major order `(1,0), (2,0), (2,1), (3,0), …`.

use nalgebra::DMatrix;

/// Number of free entries of an `n × n` skew-symmetric matrix.
pub fn n_lower(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

/// Row/column of each compact entry.
pub(crate) fn lower_indices(n: usize) -> impl Iterator<Item = (usize, usize)> {
    (1..n).flat_map(|i| (0..i).map(move |j| (i, j)))
}

/// `S = S_raw − S_rawᵀ` from the compact lower entries.
pub fn skew_from_lower(lower: &[f64], n: usize) -> DMatrix<f64> {
    assert_eq!(lower.len(), n_lower(n), "compact skew length");
    let mut s = DMatrix::zeros(n, n);
    for ((i, j), v) in lower_indices(n).zip(lower) {
        s[(i, j)] = *v;
        s[(j, i)] = -*v;
    }
    s
}

/// `W = exp(S_raw − S_rawᵀ)` (scaling and squaring with a Padé approximant).
pub fn realize_orthogonal(lower: &[f64], n: usize) -> DMatrix<f64> {
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    skew_from_lower(lower, n).exp()
}

/// Directional derivative of the matrix exponential at `S` along `E`: the
/// upper-right block of `exp([[S, E], [0, S]])`.
pub fn dexp(s: &DMatrix<f64>, e: &DMatrix<f64>) -> DMatrix<f64> {
    let n = s.nrows();
    let mut big = DMatrix::zeros(2 * n, 2 * n);
    big.view_mut((0, 0), (n, n)).copy_from(s);
    big.view_mut((n, n), (n, n)).copy_from(s);
    big.view_mut((0, n), (n, n)).copy_from(e);
    big.exp().view((0, n), (n, n)).into_owned()
}

/// Gradient with respect to the compact lower entries of a scalar whose
/// gradient with respect to `W = exp(S)` is `g`.
///
/// Uses `⟨G, dexp(S, E)⟩ = ⟨dexp(Sᵀ, G), E⟩`.
pub fn dexp_adjoint(s: &DMatrix<f64>, g: &DMatrix<f64>) -> Vec<f64> {
    let n = s.nrows();
    let m = dexp(&s.transpose(), g);
    lower_indices(n).map(|(i, j)| m[(i, j)] - m[(j, i)]).collect()
}

/// `∂W/∂θ_k` for every compact entry `k`.
pub(crate) fn dexp_basis(s: &DMatrix<f64>) -> Vec<DMatrix<f64>> {
    let n = s.nrows();
    lower_indices(n)
        .map(|(i, j)| {
            let mut e = DMatrix::zeros(n, n);
            e[(i, j)] = 1.0;
            e[(j, i)] = -1.0;
            dexp(s, &e)
        })
        .collect()
}
