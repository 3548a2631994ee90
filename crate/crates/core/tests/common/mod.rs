//! Test support: random instance generators and an independent dense solver
//! for the log balance system.
#![allow(dead_code)]

use std::collections::VecDeque;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use unitcomplete::RatingMatrix;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn dense(rows: &[&[Option<f64>]]) -> RatingMatrix {
    RatingMatrix::from_dense(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
}

/// Random support pattern on `m × n` that is connected as a bipartite
/// graph: a random spanning tree plus independent cells at `density`.
pub fn connected_pattern(m: usize, n: usize, density: f64, rng: &mut impl Rng) -> Vec<(usize, usize)> {
    let mut present = vec![false; m * n];
    let mut nodes: Vec<(bool, usize)> = (0..m).map(|i| (true, i)).chain((0..n).map(|j| (false, j))).collect();
    nodes.shuffle(rng);
    // put one row and one column up front so every later node has a partner
    let r = nodes.iter().position(|&(is_row, _)| is_row).unwrap();
    nodes.swap(0, r);
    let c = nodes.iter().skip(1).position(|&(is_row, _)| !is_row).unwrap() + 1;
    nodes.swap(1, c);
    let mut placed_rows = vec![nodes[0].1];
    let mut placed_cols = vec![nodes[1].1];
    present[nodes[0].1 * n + nodes[1].1] = true;
    for &(is_row, k) in &nodes[2..] {
        if is_row {
            let j = placed_cols[rng.random_range(0..placed_cols.len())];
            present[k * n + j] = true;
            placed_rows.push(k);
        } else {
            let i = placed_rows[rng.random_range(0..placed_rows.len())];
            present[i * n + k] = true;
            placed_cols.push(k);
        }
    }
    for cell in present.iter_mut() {
        if rng.random_bool(density) {
            *cell = true;
        }
    }
    (0..m * n).filter(|&k| present[k]).map(|k| (k / n, k % n)).collect()
}

/// Connected random matrix with values log-uniform in `[0.1, 10]`.
pub fn random_connected(m: usize, n: usize, density: f64, rng: &mut impl Rng) -> RatingMatrix {
    let cells = connected_pattern(m, n, density, rng);
    let triplets: Vec<_> = cells
        .into_iter()
        .map(|(i, j)| (i, j, log_uniform(rng, 0.1, 10.0)))
        .collect();
    RatingMatrix::from_triplets(m, n, triplets).unwrap()
}

pub fn log_uniform(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    (rng.random_range(lo.ln()..hi.ln())).exp()
}

pub fn uniform_vec(rng: &mut impl Rng, len: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..len).map(|_| rng.random_range(lo..hi)).collect()
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

/// Components of the positive support by breadth-first search.
/// Returns per-row and per-column component ids (`None` without edges).
pub fn bfs_components(m: &RatingMatrix) -> (Vec<Option<usize>>, Vec<Option<usize>>) {
    let (nr, nc) = (m.n_rows(), m.n_cols());
    let mut adj = vec![Vec::new(); nr + nc];
    for (i, j, _) in m.positive_cells() {
        adj[i].push(nr + j);
        adj[nr + j].push(i);
    }
    let mut label = vec![None; nr + nc];
    let mut next = 0;
    for start in 0..nr + nc {
        if label[start].is_some() || adj[start].is_empty() {
            continue;
        }
        let mut queue = VecDeque::from([start]);
        label[start] = Some(next);
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                if label[v].is_none() {
                    label[v] = Some(next);
                    queue.push_back(v);
                }
            }
        }
        next += 1;
    }
    (label[..nr].to_vec(), label[nr..].to_vec())
}

/// Log offsets `(r, c)` solving the balance equations
/// `Σ_j (x_ij + r_i + c_j) = 0` per row and per column, with the symmetric
/// gauge `mean(r) = mean(c)` in each component. Built as a stacked
/// least-squares system and solved through its normal equations by
/// Gaussian elimination; the stacked system is consistent and has full
/// column rank, so the least-squares solution is exact.
pub fn oracle_offsets(m: &RatingMatrix) -> (Vec<Option<f64>>, Vec<Option<f64>>) {
    let (nr, nc) = (m.n_rows(), m.n_cols());
    let dim = nr + nc;
    let (row_comp, col_comp) = bfs_components(m);
    let mut eqs: Vec<(Vec<f64>, f64)> = Vec::new();

    for i in 0..nr {
        let mut a = vec![0.0; dim];
        let mut b = 0.0;
        for (j, v) in m.row(i).filter(|&(_, v)| v > 0.0) {
            a[i] += 1.0;
            a[nr + j] += 1.0;
            b -= v.ln();
        }
        if a[i] == 0.0 {
            a[i] = 1.0; // pin unused variable
        }
        eqs.push((a, b));
    }
    for j in 0..nc {
        let mut a = vec![0.0; dim];
        let mut b = 0.0;
        for (i, _, v) in m.positive_cells().filter(|&(_, jj, _)| jj == j) {
            a[i] += 1.0;
            a[nr + j] += 1.0;
            b -= v.ln();
        }
        if a[nr + j] == 0.0 {
            a[nr + j] = 1.0;
        }
        eqs.push((a, b));
    }
    let n_comp = row_comp.iter().flatten().max().map_or(0, |&c| c + 1);
    for comp in 0..n_comp {
        let rows: Vec<usize> = (0..nr).filter(|&i| row_comp[i] == Some(comp)).collect();
        let cols: Vec<usize> = (0..nc).filter(|&j| col_comp[j] == Some(comp)).collect();
        let mut a = vec![0.0; dim];
        for &i in &rows {
            a[i] = 1.0 / rows.len() as f64;
        }
        for &j in &cols {
            a[nr + j] = -1.0 / cols.len() as f64;
        }
        eqs.push((a, 0.0));
    }

    let mut ata = vec![vec![0.0; dim + 1]; dim];
    for (a, b) in &eqs {
        for p in 0..dim {
            if a[p] == 0.0 {
                continue;
            }
            for q in 0..dim {
                ata[p][q] += a[p] * a[q];
            }
            ata[p][dim] += a[p] * b;
        }
    }
    let z = gauss_solve(ata);
    let r = (0..nr).map(|i| row_comp[i].map(|_| z[i])).collect();
    let c = (0..nc).map(|j| col_comp[j].map(|_| z[nr + j])).collect();
    (r, c)
}

/// Oracle prediction `exp(−(r_i + c_j))` for a cell in one component.
pub fn oracle_prediction(offsets: &(Vec<Option<f64>>, Vec<Option<f64>>), i: usize, j: usize) -> Option<f64> {
    Some((-(offsets.0[i]? + offsets.1[j]?)).exp())
}

fn gauss_solve(mut aug: Vec<Vec<f64>>) -> Vec<f64> {
    let n = aug.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&a, &b| aug[a][col].abs().partial_cmp(&aug[b][col].abs()).unwrap())
            .unwrap();
        aug.swap(col, pivot);
        let p = aug[col][col];
        assert!(p.abs() > 1e-12, "singular oracle system");
        for row in 0..n {
            if row != col {
                let f = aug[row][col] / p;
                if f != 0.0 {
                    let pivot_row = aug[col].clone();
                    for (a, p) in aug[row][col..].iter_mut().zip(&pivot_row[col..]) {
                        *a -= f * p;
                    }
                }
            }
        }
    }
    (0..n).map(|i| aug[i][n] / aug[i][i]).collect()
}

/// Rank-one matrix `u_i · v_j` on the given cells.
pub fn rank_one(u: &[f64], v: &[f64], cells: &[(usize, usize)]) -> RatingMatrix {
    RatingMatrix::from_triplets(u.len(), v.len(), cells.iter().map(|&(i, j)| (i, j, u[i] * v[j]))).unwrap()
}

/// Instance for the eccentric-user filter: a rank-one block of
/// `n_users − 1` users with about 15% of cells missing, plus a last user whose
/// ratings are another user's values permuted across items and scaled by a
/// log-uniform `[0.01, 100]` factor per item. Row 0 and column 0 are fully
/// observed, which keeps the support connected.
pub fn rank_one_plus_scrambled(n_users: usize, n_items: usize, seed: u64) -> RatingMatrix {
    let mut g = rng(seed);
    let u = uniform_vec(&mut g, n_users - 1, 0.5, 5.0);
    let v = uniform_vec(&mut g, n_items, 0.5, 5.0);
    let mut cells = Vec::new();
    for (i, &ui) in u.iter().enumerate() {
        for (j, &vj) in v.iter().enumerate() {
            if i == 0 || j == 0 || !g.random_bool(0.15) {
                cells.push((i, j, ui * vj));
            }
        }
    }
    let source = g.random_range(0..n_users - 1);
    let mut perm: Vec<usize> = (0..n_items).collect();
    perm.shuffle(&mut g);
    for (j, &pj) in perm.iter().enumerate() {
        let w = log_uniform(&mut g, 0.01, 100.0);
        if j == 0 || !g.random_bool(0.15) {
            cells.push((n_users - 1, j, u[source] * v[pj] * w));
        }
    }
    RatingMatrix::from_triplets(n_users, n_items, cells).unwrap()
}

/// Brute-force holdout error per user: for each user with at least
/// `min_ratings` positive cells, hide every fifth of them (at least one),
/// solve the rest with [`oracle_offsets`] and return the mean absolute
/// relative error on the hidden cells.
pub fn oracle_user_errors(m: &RatingMatrix, min_ratings: usize) -> Vec<(usize, f64)> {
    let mut out = Vec::new();
    for i in 0..m.n_rows() {
        let cols: Vec<(usize, f64)> = m.row(i).filter(|&(_, v)| v > 0.0).collect();
        if cols.len() < min_ratings {
            continue;
        }
        let hidden: std::collections::BTreeSet<(usize, usize)> =
            cols.iter().step_by(5).map(|&(j, _)| (i, j)).collect();
        let train = m.without_cells(&hidden);
        let off = oracle_offsets(&train);
        let err: f64 = hidden
            .iter()
            .map(|&(i, j)| {
                let truth = m.get(i, j).unwrap();
                (oracle_prediction(&off, i, j).unwrap() - truth).abs() / truth
            })
            .sum::<f64>()
            / hidden.len() as f64;
        out.push((i, err));
    }
    out
}
