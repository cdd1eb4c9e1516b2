//! Test-only oracles, written independently of the library's builders and solvers.
#![allow(dead_code)]

use wannier_ladder::faer::{c64, Mat};

/// Term-by-term assembly of the Haldane Hamiltonian on a periodic lattice,
/// reading each neighbour sum off the tight-binding equation row by row.
/// Index convention: `2 * (n * nx + m) + s` with `s = 0` for A and `1` for B.
pub fn haldane_periodic_oracle(nx: usize, ny: usize, t: f64, tp: f64, v: f64, phi: f64) -> Vec<Vec<c64>> {
    let dim = 2 * nx * ny;
    let mut h = vec![vec![c64::new(0.0, 0.0); dim]; dim];
    let idx = |m: i64, n: i64, s: usize| -> usize {
        let m = m.rem_euclid(nx as i64) as usize;
        let n = n.rem_euclid(ny as i64) as usize;
        2 * (n * nx + m) + s
    };
    let ep = c64::new(tp * phi.cos(), tp * phi.sin());
    let em = c64::new(tp * phi.cos(), -tp * phi.sin());
    for n in 0..ny as i64 {
        for m in 0..nx as i64 {
            // (H psi)^A_{m,n}
            let a = idx(m, n, 0);
            h[a][a] += c64::new(v, 0.0);
            h[a][idx(m, n, 1)] += c64::new(t, 0.0);
            h[a][idx(m, n - 1, 1)] += c64::new(t, 0.0);
            h[a][idx(m - 1, n, 1)] += c64::new(t, 0.0);
            h[a][idx(m, n + 1, 0)] += ep;
            h[a][idx(m - 1, n, 0)] += ep;
            h[a][idx(m + 1, n - 1, 0)] += ep;
            h[a][idx(m, n - 1, 0)] += em;
            h[a][idx(m + 1, n, 0)] += em;
            h[a][idx(m - 1, n + 1, 0)] += em;
            // (H psi)^B_{m,n}
            let b = idx(m, n, 1);
            h[b][b] += c64::new(-v, 0.0);
            h[b][idx(m, n, 0)] += c64::new(t, 0.0);
            h[b][idx(m + 1, n, 0)] += c64::new(t, 0.0);
            h[b][idx(m, n + 1, 0)] += c64::new(t, 0.0);
            h[b][idx(m, n - 1, 1)] += ep;
            h[b][idx(m + 1, n, 1)] += ep;
            h[b][idx(m - 1, n + 1, 1)] += ep;
            h[b][idx(m, n + 1, 1)] += em;
            h[b][idx(m - 1, n, 1)] += em;
            h[b][idx(m + 1, n - 1, 1)] += em;
        }
    }
    h
}

/// Cyclic Jacobi eigenvalue iteration for a complex Hermitian matrix.
/// Returns ascending eigenvalues.
pub fn jacobi_eigenvalues(a: &[Vec<c64>]) -> Vec<f64> {
    let n = a.len();
    let mut a: Vec<Vec<c64>> = a.to_vec();
    for _sweep in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).filter(|(i, j)| i != j).map(|(i, j)| a[i][j].norm_sqr()).sum();
        if off < 1e-26 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p][q];
                if apq.norm() < 1e-300 {
                    continue;
                }
                // Remove the phase of a_pq, then apply a real Jacobi rotation.
                let phase = apq / apq.norm();
                let app = a[p][p].re;
                let aqq = a[q][q].re;
                let theta = 0.5 * (2.0 * apq.norm()).atan2(aqq - app);
                let (s, c) = theta.sin_cos();
                // Rotation G acting on columns p, q: col_p' = c col_p - s conj(phase) col_q, col_q' = s phase col_p + c col_q
                let g_pp = c64::new(c, 0.0);
                let g_qp = -phase.conj() * s;
                let g_pq = phase * s;
                let g_qq = c64::new(c, 0.0);
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = akp * g_pp + akq * g_qp;
                    a[k][q] = akp * g_pq + akq * g_qq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = g_pp.conj() * apk + g_qp.conj() * aqk;
                    a[q][k] = g_pq.conj() * apk + g_qq.conj() * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a[i][i].re).collect();
    ev.sort_by(f64::total_cmp);
    ev
}

pub fn to_rows(m: &Mat<c64>) -> Vec<Vec<c64>> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect()
}

/// Dense complex matrix product on row vectors.
pub fn matmul(a: &[Vec<c64>], b: &[Vec<c64>]) -> Vec<Vec<c64>> {
    let (n, k, m) = (a.len(), b.len(), b[0].len());
    let mut c = vec![vec![c64::new(0.0, 0.0); m]; n];
    for i in 0..n {
        for l in 0..k {
            let ail = a[i][l];
            if ail == c64::new(0.0, 0.0) {
                continue;
            }
            for j in 0..m {
                c[i][j] += ail * b[l][j];
            }
        }
    }
    c
}

/// Bloch Hamiltonian read off the 3x3 real-space oracle: row cell `(0, 0)`
/// against every cell, with each cell placed at its minimal-image offset.
pub fn bloch_oracle(t: f64, tp: f64, v: f64, phi: f64, k1: f64, k2: f64) -> [[c64; 2]; 2] {
    let h = haldane_periodic_oracle(3, 3, t, tp, v, phi);
    let image = |i: usize| if i == 2 { -1.0 } else { i as f64 };
    let mut out = [[c64::new(0.0, 0.0); 2]; 2];
    for n in 0..3 {
        for m in 0..3 {
            let phase = c64::from_polar(1.0, k1 * image(m) + k2 * image(n));
            for s in 0..2 {
                for r in 0..2 {
                    out[s][r] += h[s][2 * (n * 3 + m) + r] * phase;
                }
            }
        }
    }
    out
}

/// Normalized lower eigenvector of a 2x2 Hermitian matrix, in closed form.
pub fn lower_eigenvector(h: [[c64; 2]; 2]) -> [c64; 2] {
    let (a, d, b) = (h[0][0].re, h[1][1].re, h[0][1]);
    let half = 0.5 * (a - d);
    let lambda = 0.5 * (a + d) - (half * half + b.norm_sqr()).sqrt();
    // (a - λ) x + b y = 0; pick whichever row is better conditioned.
    let v = if (a - lambda).abs() >= (d - lambda).abs() {
        [-b, c64::new(a - lambda, 0.0)]
    } else {
        [c64::new(d - lambda, 0.0), -b.conj()]
    };
    let norm = (v[0].norm_sqr() + v[1].norm_sqr()).sqrt();
    [v[0] / norm, v[1] / norm]
}

/// Wilson-loop phase `-arg Π <u_i|u_{i+1}>` of the lower band around a `k1` loop.
pub fn wilson_phase(t: f64, tp: f64, v: f64, phi: f64, k2: f64, n_k1: usize) -> f64 {
    let us: Vec<[c64; 2]> = (0..n_k1)
        .map(|j| lower_eigenvector(bloch_oracle(t, tp, v, phi, std::f64::consts::TAU * j as f64 / n_k1 as f64, k2)))
        .collect();
    let mut prod = c64::new(1.0, 0.0);
    for j in 0..n_k1 {
        let (u, w) = (us[j], us[(j + 1) % n_k1]);
        prod *= u[0].conj() * w[0] + u[1].conj() * w[1];
    }
    -prod.arg()
}
