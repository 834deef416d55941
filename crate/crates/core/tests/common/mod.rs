#![allow(dead_code)]

use fairrm::model::Instance;
use rand::Rng;

/// Solves the square system `m x = b` by Gaussian elimination with partial
/// pivoting; `None` when (numerically) singular.
pub fn solve_square(mut m: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&a, &c| m[a][col].abs().total_cmp(&m[c][col].abs()))?;
        if m[piv][col].abs() < 1e-10 {
            return None;
        }
        m.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = m[row][col] / m[col][col];
            if f != 0.0 {
                for k in col..n {
                    m[row][k] -= f * m[col][k];
                }
                b[row] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| m[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / m[row][row];
    }
    Some(x)
}

fn combinations(n: usize, k: usize, f: &mut impl FnMut(&[usize])) {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, f: &mut impl FnMut(&[usize])) {
        if cur.len() == k {
            f(cur);
            return;
        }
        for i in start..n {
            if n - i < k - cur.len() {
                break;
            }
            cur.push(i);
            rec(i + 1, n, k, cur, f);
            cur.pop();
        }
    }
    rec(0, n, k, &mut Vec::with_capacity(k), f);
}

/// Maximum of `c x` over `{G x <= h, lo <= x <= hi}` by enumerating every
/// vertex. The region must be bounded; `None` means infeasible.
pub fn vertex_enumeration(
    c: &[f64],
    g: &[Vec<f64>],
    h: &[f64],
    lo: &[f64],
    hi: &[f64],
) -> Option<(f64, Vec<f64>)> {
    let k = c.len();
    // Every constraint as (row, rhs) with `row . x <= rhs`.
    let mut rows: Vec<(Vec<f64>, f64)> = g.iter().cloned().zip(h.iter().copied()).collect();
    for j in 0..k {
        let mut e = vec![0.0; k];
        e[j] = -1.0;
        rows.push((e, -lo[j]));
        if hi[j].is_finite() {
            let mut e = vec![0.0; k];
            e[j] = 1.0;
            rows.push((e, hi[j]));
        }
    }
    let feasible = |x: &[f64]| {
        rows.iter().all(|(r, b)| {
            let lhs: f64 = r.iter().zip(x).map(|(a, v)| a * v).sum();
            lhs <= b + 1e-9 * (1.0 + b.abs())
        })
    };
    let mut best: Option<(f64, Vec<f64>)> = None;
    combinations(rows.len(), k, &mut |idx| {
        let m: Vec<Vec<f64>> = idx.iter().map(|&i| rows[i].0.clone()).collect();
        let b: Vec<f64> = idx.iter().map(|&i| rows[i].1).collect();
        if let Some(x) = solve_square(m, b) {
            if feasible(&x) {
                let v: f64 = c.iter().zip(&x).map(|(a, b)| a * b).sum();
                if best.as_ref().is_none_or(|(bv, _)| v > *bv) {
                    best = Some((v, x));
                }
            }
        }
    });
    best
}

/// Integer hindsight optimum: the best acceptance counts `k_i <= counts_i`
/// that fit capacity, by exhaustive search.
pub fn integer_hindsight(inst: &Instance, counts: &[u64]) -> f64 {
    fn rec(inst: &Instance, counts: &[u64], i: usize, rem: &mut Vec<f64>, acc: f64, best: &mut f64) {
        if i == counts.len() {
            *best = best.max(acc);
            return;
        }
        let mut taken = 0;
        rec(inst, counts, i + 1, rem, acc, best);
        while taken < counts[i] && inst.demand[i].iter().zip(rem.iter()).all(|(a, m)| *a <= m + 1e-9) {
            for (m, a) in rem.iter_mut().zip(&inst.demand[i]) {
                *m -= a;
            }
            taken += 1;
            rec(inst, counts, i + 1, rem, acc + inst.rewards[i] * taken as f64, best);
        }
        for (m, a) in rem.iter_mut().zip(&inst.demand[i]) {
            *m += a * taken as f64;
        }
    }
    let mut best = 0.0;
    rec(inst, counts, 0, &mut inst.capacity.clone(), 0.0, &mut best);
    best
}

/// Random network instance with `n` types, `L` resources and a nonzero
/// demand for every type.
pub fn random_instance<R: Rng>(rng: &mut R, n: usize, l: usize, horizon: usize) -> Instance {
    let demand: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let mut row: Vec<f64> =
                (0..l).map(|_| if rng.random_bool(0.7) { rng.random_range(1..=3) as f64 } else { 0.0 }).collect();
            if row.iter().all(|a| *a == 0.0) {
                row[rng.random_range(0..l)] = 1.0;
            }
            row
        })
        .collect();
    let rewards: Vec<f64> = (0..n).map(|_| rng.random_range(1..=9) as f64).collect();
    let capacity: Vec<f64> = (0..l).map(|_| rng.random_range(1..=8) as f64).collect();
    let mut w: Vec<f64> = (0..=n).map(|_| rng.random_range(0.1..1.0)).collect();
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    Instance::new(demand, rewards, capacity, horizon, w)
}

/// The scarcity instance used by the audits: resource 1 binds with
/// `x* = (0.25, 0.25, 0.25)`, so type 3 is accepted with probability 1/2.
pub fn scarcity_instance() -> Instance {
    Instance::new(
        vec![vec![0.3, 0.1], vec![0.3, 0.2], vec![0.4, 0.1]],
        vec![3.0, 2.0, 1.0],
        vec![100.0, 100.0],
        400,
        vec![0.0, 0.25, 0.25, 0.5],
    )
}
