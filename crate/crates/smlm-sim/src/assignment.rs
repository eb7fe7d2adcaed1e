//! Minimum-cost bipartite assignment (Hungarian algorithm with potentials,
//! O(rows^2 * cols)). Used by the matching step in `metrics`; forbidden
//! pairs are encoded by the caller as a large finite cost.

/// Assigns every row to a distinct column minimizing total cost.
///
/// Requires `rows <= cols` and finite costs. Returns `row_to_col`.
pub(crate) fn solve(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    if n == 0 {
        return Vec::new();
    }
    let m = cost[0].len();
    assert!(n <= m, "solve() needs rows <= cols");
    debug_assert!(cost.iter().all(|r| r.len() == m && r.iter().all(|c| c.is_finite())));

    // 1-based arrays; p[j] is the row currently matched to column j.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];

    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        // Walk the augmenting path back.
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut row_to_col = vec![usize::MAX; n];
    for j in 1..=m {
        if p[j] != 0 {
            row_to_col[p[j] - 1] = j - 1;
        }
    }
    row_to_col
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use rand::Rng;

    fn total(cost: &[Vec<f64>], assign: &[usize]) -> f64 {
        assign.iter().enumerate().map(|(i, &j)| cost[i][j]).sum()
    }

    /// Exhaustive minimum over all injective row->col maps.
    fn brute_force(cost: &[Vec<f64>]) -> f64 {
        let n = cost.len();
        let m = cost[0].len();
        let mut best = f64::INFINITY;
        let mut cols: Vec<usize> = (0..m).collect();
        permute(&mut cols, 0, &mut |perm| {
            let t: f64 = (0..n).map(|i| cost[i][perm[i]]).sum();
            if t < best {
                best = t;
            }
        });
        best
    }

    fn permute(v: &mut Vec<usize>, k: usize, f: &mut impl FnMut(&[usize])) {
        if k == v.len() {
            f(v);
            return;
        }
        for i in k..v.len() {
            v.swap(k, i);
            permute(v, k + 1, f);
            v.swap(k, i);
        }
    }

    #[test]
    fn known_small_instance() {
        let cost = vec![
            vec![4.0, 1.0, 3.0],
            vec![2.0, 0.0, 5.0],
            vec![3.0, 2.0, 2.0],
        ];
        let a = solve(&cost);
        assert_eq!(total(&cost, &a), 5.0); // 1 + 2 + 2
    }

    #[test]
    fn matches_brute_force_on_random_instances() {
        for seed in 0..300u64 {
            let mut rng = substream(500, seed);
            let n = rng.gen_range(1..=5usize);
            let m = rng.gen_range(n..=6usize);
            let cost: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..m).map(|_| rng.gen::<f64>() * 100.0).collect())
                .collect();
            let a = solve(&cost);
            let mut seen = vec![false; m];
            for &j in &a {
                assert!(!seen[j], "column used twice");
                seen[j] = true;
            }
            let opt = brute_force(&cost);
            assert!(
                (total(&cost, &a) - opt).abs() < 1e-9,
                "seed {seed}: {} vs {opt}",
                total(&cost, &a)
            );
        }
    }

    #[test]
    fn empty_input() {
        assert!(solve(&[]).is_empty());
    }
}
