//! Dense linear assignment and bottleneck assignment.

/// Minimum-cost perfect matching for an n×n row-major cost matrix by
/// shortest augmenting paths with dual potentials (O(n³)). Returns the
/// column assigned to each row.
pub fn solve_assignment(cost: &[f64], n: usize) -> Vec<usize> {
    debug_assert_eq!(cost.len(), n * n);
    if n == 0 {
        return Vec::new();
    }
    // 1-based bookkeeping with a virtual column 0.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut row_of = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut minv = vec![0.0; n + 1];
    let mut used = vec![false; n + 1];
    for i in 1..=n {
        row_of[0] = i;
        let mut j0 = 0;
        minv.fill(f64::INFINITY);
        used.fill(false);
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let row = &cost[(i0 - 1) * n..i0 * n];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = row[j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            debug_assert!(j1 != 0, "costs must be finite");
            for j in 0..=n {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for j in 1..=n {
        assignment[row_of[j] - 1] = j - 1;
    }
    assignment
}

/// Hopcroft–Karp maximum matching on the bipartite graph
/// `{(i, j) : cost[i][j] ≤ threshold}`. Returns the row→column matching if
/// it is perfect.
pub fn perfect_matching_below(cost: &[f64], n: usize, threshold: f64) -> Option<Vec<usize>> {
    const FREE: usize = usize::MAX;
    let adj: Vec<Vec<usize>> = (0..n)
        .map(|i| (0..n).filter(|&j| cost[i * n + j] <= threshold).collect())
        .collect();
    if adj.iter().any(Vec::is_empty) {
        return None;
    }
    let mut match_row = vec![FREE; n];
    let mut match_col = vec![FREE; n];
    let mut dist = vec![0usize; n];
    let mut queue = Vec::with_capacity(n);
    let mut matched = 0;
    loop {
        // BFS layering from free rows.
        queue.clear();
        for i in 0..n {
            if match_row[i] == FREE {
                dist[i] = 0;
                queue.push(i);
            } else {
                dist[i] = usize::MAX;
            }
        }
        let mut found = false;
        let mut head = 0;
        while head < queue.len() {
            let i = queue[head];
            head += 1;
            for &j in &adj[i] {
                let k = match_col[j];
                if k == FREE {
                    found = true;
                } else if dist[k] == usize::MAX {
                    dist[k] = dist[i] + 1;
                    queue.push(k);
                }
            }
        }
        if !found {
            break;
        }
        let mut next = vec![0usize; n];
        for i in 0..n {
            if match_row[i] == FREE && augment(i, &adj, &mut match_row, &mut match_col, &mut dist, &mut next) {
                matched += 1;
            }
        }
    }
    (matched == n).then_some(match_row)
}

/// Iterative DFS along the BFS layers.
fn augment(
    root: usize,
    adj: &[Vec<usize>],
    match_row: &mut [usize],
    match_col: &mut [usize],
    dist: &mut [usize],
    next: &mut [usize],
) -> bool {
    const FREE: usize = usize::MAX;
    let mut stack = vec![root];
    while let Some(&i) = stack.last() {
        if next[i] == adj[i].len() {
            dist[i] = usize::MAX;
            stack.pop();
            continue;
        }
        let j = adj[i][next[i]];
        next[i] += 1;
        let k = match_col[j];
        if k == FREE {
            // Flip the alternating path held on the stack.
            let mut col = j;
            while let Some(r) = stack.pop() {
                let prev = match_row[r];
                match_row[r] = col;
                match_col[col] = r;
                col = prev;
            }
            return true;
        }
        if dist[k] == dist[i] + 1 {
            stack.push(k);
        }
    }
    false
}

/// Assignment minimising the largest matched cost: binary search over the
/// sorted distinct entries with a perfect-matching test.
pub fn solve_bottleneck(cost: &[f64], n: usize) -> (f64, Vec<usize>) {
    if n == 0 {
        return (0.0, Vec::new());
    }
    let mut levels = cost.to_vec();
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    // The largest row minimum is a lower bound.
    let floor = (0..n)
        .map(|i| cost[i * n..(i + 1) * n].iter().copied().fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max);
    let mut lo = levels.partition_point(|&c| c < floor);
    let mut hi = levels.len() - 1;
    let mut best = perfect_matching_below(cost, n, levels[hi]).expect("complete graph has a perfect matching");
    while lo < hi {
        let mid = (lo + hi) / 2;
        match perfect_matching_below(cost, n, levels[mid]) {
            Some(m) => {
                best = m;
                hi = mid;
            }
            None => lo = mid + 1,
        }
    }
    (levels[hi], best)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_assignment() {
        let c = [4.0, 1.0, 3.0, 2.0, 0.0, 5.0, 3.0, 2.0, 2.0];
        let a = solve_assignment(&c, 3);
        let total: f64 = a.iter().enumerate().map(|(i, &j)| c[i * 3 + j]).sum();
        assert_eq!(total, 5.0);
    }

    #[test]
    fn bottleneck_small() {
        let c = [1.0, 9.0, 2.0, 3.0];
        assert_eq!(solve_bottleneck(&c, 2), (3.0, vec![0, 1]));
        let c = [5.0, 1.0, 1.0, 5.0];
        assert_eq!(solve_bottleneck(&c, 2), (1.0, vec![1, 0]));
    }
}
