//! Dense linear assignment by successive shortest augmenting paths with
//! reduced costs kept nonnegative through row and column duals.

/// Optimal assignment of an `n x n` cost matrix (row-major).
///
/// Returns `col_of_row` and duals `(u, v)` with `c[i][j] - u[i] - v[j] >= 0`
/// up to rounding and equality on the assignment.
pub fn lap_jv(n: usize, cost: &[f64]) -> (Vec<usize>, Vec<f64>, Vec<f64>) {
    assert_eq!(cost.len(), n * n);
    let c = |i: usize, j: usize| cost[(i - 1) * n + (j - 1)];
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    // row_of[j]: row assigned to column j, 0 when free; column 0 is the source.
    let mut row_of = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut minv = vec![0.0; n + 1];
    let mut used = vec![false; n + 1];
    for i in 1..=n {
        row_of[0] = i;
        let mut j0 = 0;
        minv.iter_mut().for_each(|m| *m = f64::INFINITY);
        used.iter_mut().for_each(|b| *b = false);
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = c(i0, j) - u[i0] - v[j];
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
    let mut col_of_row = vec![0usize; n];
    for j in 1..=n {
        col_of_row[row_of[j] - 1] = j - 1;
    }
    (col_of_row, u[1..].to_vec(), v[1..].to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::RngStream;
    use rand::Rng;

    fn brute(n: usize, cost: &[f64]) -> f64 {
        fn rec(k: usize, n: usize, used: &mut Vec<bool>, acc: f64, cost: &[f64], best: &mut f64) {
            if k == n {
                *best = best.min(acc);
                return;
            }
            for j in 0..n {
                if !used[j] {
                    used[j] = true;
                    rec(k + 1, n, used, acc + cost[k * n + j], cost, best);
                    used[j] = false;
                }
            }
        }
        let mut best = f64::INFINITY;
        rec(0, n, &mut vec![false; n], 0.0, cost, &mut best);
        best
    }

    #[test]
    fn matches_brute_force() {
        let mut rng = RngStream::new(77, 0).rng();
        for trial in 0..200 {
            let n = 1 + trial % 7;
            let cost: Vec<f64> = (0..n * n).map(|_| rng.gen_range(0.0..10.0)).collect();
            let (a, u, v) = lap_jv(n, &cost);
            let got: f64 = a.iter().enumerate().map(|(i, &j)| cost[i * n + j]).sum();
            assert!((got - brute(n, &cost)).abs() < 1e-9);
            for i in 0..n {
                for j in 0..n {
                    assert!(cost[i * n + j] - u[i] - v[j] > -1e-9);
                }
            }
            let dual: f64 = u.iter().sum::<f64>() + v.iter().sum::<f64>();
            assert!((dual - got).abs() < 1e-9);
        }
    }
}
