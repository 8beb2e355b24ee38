//! Bipartite structure of a non-negative matrix's positive support.

use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;

/// Maximum matching of rows to columns over `support(i, j)`; returns the
/// column matched to each row.
pub fn max_matching(n: usize, support: impl Fn(usize, usize) -> bool) -> Vec<Option<usize>> {
    let adj: Vec<Vec<usize>> = (0..n)
        .map(|i| (0..n).filter(|&j| support(i, j)).collect())
        .collect();
    let mut col_owner: Vec<Option<usize>> = vec![None; n];
    for row in 0..n {
        let mut visited = vec![false; n];
        augment(row, &adj, &mut col_owner, &mut visited);
    }
    let mut row_match = vec![None; n];
    for (j, owner) in col_owner.iter().enumerate() {
        if let Some(i) = owner {
            row_match[*i] = Some(j);
        }
    }
    row_match
}

fn augment(
    row: usize,
    adj: &[Vec<usize>],
    col_owner: &mut [Option<usize>],
    visited: &mut [bool],
) -> bool {
    for &j in &adj[row] {
        if visited[j] {
            continue;
        }
        visited[j] = true;
        match col_owner[j] {
            None => {
                col_owner[j] = Some(row);
                return true;
            }
            Some(other) => {
                if augment(other, adj, col_owner, visited) {
                    col_owner[j] = Some(row);
                    return true;
                }
            }
        }
    }
    false
}

/// A perfect matching as a 0-based row-to-column map, if one exists.
pub fn perfect_matching(n: usize, support: impl Fn(usize, usize) -> bool) -> Option<Vec<usize>> {
    max_matching(n, support).into_iter().collect()
}

/// Which positive entries lie on at least one perfect matching.
///
/// Returns `None` when there is no perfect matching. Otherwise entry
/// `i * n + j` is `true` iff `(i, j)` belongs to some perfect matching; the
/// remaining positive entries carry zero mass in every doubly stochastic
/// matrix supported on the pattern.
pub fn allowed_edges(n: usize, support: impl Fn(usize, usize) -> bool) -> Option<Vec<bool>> {
    let matching = perfect_matching(n, &support)?;
    let mut row_of_col = vec![0; n];
    for (i, &j) in matching.iter().enumerate() {
        row_of_col[j] = i;
    }
    // row i -> row i' when i can take the column currently matched to i'
    let mut g = DiGraph::<(), ()>::with_capacity(n, n * n);
    let nodes: Vec<_> = (0..n).map(|_| g.add_node(())).collect();
    for i in 0..n {
        for j in 0..n {
            if support(i, j) && matching[i] != j {
                g.add_edge(nodes[i], nodes[row_of_col[j]], ());
            }
        }
    }
    let mut component = vec![0; n];
    for (c, scc) in tarjan_scc(&g).into_iter().enumerate() {
        for v in scc {
            component[v.index()] = c;
        }
    }
    let mut allowed = vec![false; n * n];
    for i in 0..n {
        for j in 0..n {
            allowed[i * n + j] = support(i, j)
                && (matching[i] == j || component[i] == component[row_of_col[j]]);
        }
    }
    Some(allowed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_pattern_is_all_forced() {
        let allowed = allowed_edges(3, |i, j| i == j).unwrap();
        assert_eq!(
            allowed,
            vec![true, false, false, false, true, false, false, false, true]
        );
    }

    #[test]
    fn upper_triangular_keeps_only_the_diagonal() {
        let allowed = allowed_edges(3, |i, j| i <= j).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(allowed[i * 3 + j], i == j, "({i},{j})");
            }
        }
    }

    #[test]
    fn full_pattern_is_all_allowed() {
        assert!(allowed_edges(4, |_, _| true).unwrap().iter().all(|&b| b));
    }

    #[test]
    fn missing_matching_is_detected() {
        // column 2 has no support
        assert!(perfect_matching(3, |_, j| j < 2).is_none());
        assert!(allowed_edges(3, |_, j| j < 2).is_none());
    }
}
