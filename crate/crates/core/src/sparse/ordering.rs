use std::collections::BTreeSet;

use super::CscMatrix;
use crate::Real;

/// Minimum-degree fill-reducing ordering of a structurally symmetric matrix.
///
/// Greedy elimination on the explicit elimination graph: at every step the
/// node of smallest current degree is eliminated (ties go to the lowest
/// index) and its neighbours are joined into a clique. Returns `perm` with
/// `perm[k]` = original index of the k-th pivot.
pub fn minimum_degree<T: Real>(a: &CscMatrix<T>) -> Vec<usize> {
    let n = a.ncols();
    assert_eq!(a.nrows(), n, "ordering needs a square matrix");
    let mut adj: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    for (r, c, _) in a.triplets() {
        if r != c {
            adj[r].insert(c);
            adj[c].insert(r);
        }
    }

    let mut eliminated = vec![false; n];
    let mut perm = Vec::with_capacity(n);
    for _ in 0..n {
        let pivot = (0..n)
            .filter(|&i| !eliminated[i])
            .min_by_key(|&i| (adj[i].len(), i))
            .expect("uneliminated node exists");
        eliminated[pivot] = true;
        perm.push(pivot);

        let nbrs: Vec<usize> = std::mem::take(&mut adj[pivot]).into_iter().collect();
        for &u in &nbrs {
            adj[u].remove(&pivot);
        }
        for (k, &u) in nbrs.iter().enumerate() {
            for &v in &nbrs[k + 1..] {
                adj[u].insert(v);
                adj[v].insert(u);
            }
        }
    }
    perm
}
