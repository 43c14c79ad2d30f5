//! Ego-centric interaction graphs.
//!
//! Every pedestrian in a scene is a node; the base adjacency is fully
//! connected with self-loops. For one ego, the group labels split that
//! graph into two complementary routes:
//!
//! * **intra** — columns of the ego's own group (the ego always belongs
//!   to its group; an ungrouped ego is a singleton);
//! * **inter** — columns of everyone outside the group, plus the ego's own
//!   column so the route keeps the ego's self-state.
//!
//! Both masked adjacencies are row-normalized to be row-stochastic, so a
//! graph-convolution layer averages exactly the neighbors each route
//! selects.

use ndarray::Array2;

use crate::coherence::GroupLabels;

/// Fully connected base adjacency with self-loops (all ones).
pub fn base_adjacency(n: usize) -> Array2<f64> {
    assert!(n >= 1, "adjacency needs at least one node");
    Array2::ones((n, n))
}

/// Column masks for one ego: `(intra, inter)`, each N×N with 0/1 entries.
/// `intra[:, j] = 1` iff `j` shares the ego's group; `inter` is the
/// complement plus the ego's own column.
pub fn coherence_masks(labels: &GroupLabels, ego: usize) -> (Array2<f64>, Array2<f64>) {
    let n = labels.n_peds();
    assert!(ego < n, "ego index {ego} out of range for {n} pedestrians");
    let members = labels.members_of(ego);
    let mut intra = Array2::zeros((n, n));
    let mut inter = Array2::zeros((n, n));
    for j in 0..n {
        let in_group = members.contains(&j);
        for i in 0..n {
            if in_group {
                intra[(i, j)] = 1.0;
            }
            if !in_group || j == ego {
                inter[(i, j)] = 1.0;
            }
        }
    }
    (intra, inter)
}

/// Divide each row by its sum. A zero row of a square matrix falls back to
/// a one-hot at the diagonal (the node keeps only itself). Entries must be
/// nonnegative; a negative entry is a contract violation.
pub fn row_normalize(a: &Array2<f64>) -> Array2<f64> {
    assert!(a.iter().all(|&x| x >= 0.0), "row_normalize input must be nonnegative");
    let mut out = a.clone();
    for (i, mut row) in out.rows_mut().into_iter().enumerate() {
        let s: f64 = row.sum();
        if s == 0.0 {
            assert_eq!(a.nrows(), a.ncols(), "zero-row fallback needs a square matrix");
            row[i] = 1.0;
        } else {
            row.mapv_inplace(|x| x / s);
        }
    }
    out
}

/// Row-stochastic `(intra, inter)` adjacencies for one ego: the base
/// adjacency masked by [`coherence_masks`], then row-normalized.
pub fn build_masked_adjacency(labels: &GroupLabels, ego: usize) -> (Array2<f64>, Array2<f64>) {
    let n = labels.n_peds();
    let base = base_adjacency(n);
    let (m_intra, m_inter) = coherence_masks(labels, ego);
    (row_normalize(&(&base * &m_intra)), row_normalize(&(&base * &m_inter)))
}
