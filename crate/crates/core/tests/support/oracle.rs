//! Explicit-loop reference SINRs.
//!
//! Deliberately shares nothing with the library's linear algebra: complex
//! numbers are `(re, im)` tuples, covariances are built entry by entry and
//! inverted by Gauss-Jordan elimination.

#![allow(dead_code)]

use isac_core::channel::Channels;
use isac_core::linalg::CMatrix;

pub type C = (f64, f64);

fn add(a: C, b: C) -> C {
    (a.0 + b.0, a.1 + b.1)
}
fn sub(a: C, b: C) -> C {
    (a.0 - b.0, a.1 - b.1)
}
fn mul(a: C, b: C) -> C {
    (a.0 * b.0 - a.1 * b.1, a.0 * b.1 + a.1 * b.0)
}
fn conj(a: C) -> C {
    (a.0, -a.1)
}
fn abs2(a: C) -> f64 {
    a.0 * a.0 + a.1 * a.1
}
fn div(a: C, b: C) -> C {
    let d = abs2(b);
    let n = mul(a, conj(b));
    (n.0 / d, n.1 / d)
}

fn entry(m: &CMatrix<f64>, r: usize, c: usize) -> C {
    let z = m.get(r, c);
    (z.re, z.im)
}

/// `sum_m H[m] F[m] w[m][:, s]` for every stream, computed element by element.
fn signatures(h: &[&CMatrix<f64>], f: &[CMatrix<f64>], w: &[CMatrix<f64>]) -> Vec<Vec<C>> {
    let rows = h[0].rows();
    let streams = w[0].cols();
    let mut out = vec![vec![(0.0, 0.0); rows]; streams];
    for s in 0..streams {
        for r in 0..rows {
            let mut acc = (0.0, 0.0);
            for m in 0..h.len() {
                for t in 0..h[m].cols() {
                    let mut fw = (0.0, 0.0);
                    for k in 0..f[m].cols() {
                        fw = add(fw, mul(entry(&f[m], t, k), entry(&w[m], k, s)));
                    }
                    acc = add(acc, mul(entry(h[m], r, t), fw));
                }
            }
            out[s][r] = acc;
        }
    }
    out
}

fn invert(mut a: Vec<Vec<C>>) -> Vec<Vec<C>> {
    let n = a.len();
    let mut inv: Vec<Vec<C>> = (0..n).map(|r| (0..n).map(|c| if r == c { (1.0, 0.0) } else { (0.0, 0.0) }).collect()).collect();
    for k in 0..n {
        let p = (k..n).max_by(|&x, &y| abs2(a[x][k]).partial_cmp(&abs2(a[y][k])).unwrap()).unwrap();
        a.swap(k, p);
        inv.swap(k, p);
        let piv = a[k][k];
        for c in 0..n {
            a[k][c] = div(a[k][c], piv);
            inv[k][c] = div(inv[k][c], piv);
        }
        for r in 0..n {
            if r != k {
                let f = a[r][k];
                for c in 0..n {
                    a[r][c] = sub(a[r][c], mul(f, a[k][c]));
                    inv[r][c] = sub(inv[r][c], mul(f, inv[k][c]));
                }
            }
        }
    }
    inv
}

fn covariance(n: usize, sigma2: f64, cols: &[&Vec<C>]) -> Vec<Vec<C>> {
    let mut r = vec![vec![(0.0, 0.0); n]; n];
    for a in 0..n {
        r[a][a] = (sigma2, 0.0);
        for b in 0..n {
            for v in cols {
                r[a][b] = add(r[a][b], mul(v[a], conj(v[b])));
            }
        }
    }
    r
}

/// User SINR; `error` switches to the imperfect-CSI form.
pub fn user_sinr(
    est: &Channels<f64>,
    error: Option<&Channels<f64>>,
    f: &[CMatrix<f64>],
    w: &[CMatrix<f64>],
    sigma2: f64,
    i: usize,
) -> f64 {
    let h: Vec<&CMatrix<f64>> = (0..f.len()).map(|m| &est.com[m][i]).collect();
    let g = signatures(&h, f, w);
    let n = g[i].len();
    let mut cols: Vec<&Vec<C>> = (0..g.len()).filter(|&s| s != i).map(|s| &g[s]).collect();
    let ge;
    if let Some(e) = error {
        let he: Vec<&CMatrix<f64>> = (0..f.len()).map(|m| &e.com[m][i]).collect();
        ge = signatures(&he, f, w);
        cols.extend(ge.iter());
    }
    let rinv = invert(covariance(n, sigma2, &cols));
    let d = &g[i];
    let mut q = (0.0, 0.0);
    for a in 0..n {
        for b in 0..n {
            q = add(q, mul(conj(d[a]), mul(rinv[a][b], d[b])));
        }
    }
    q.0
}

/// MVDR receive row vector for target `j` from the estimated channels.
pub fn mvdr(est: &Channels<f64>, f: &[CMatrix<f64>], w: &[CMatrix<f64>], sigma2: f64, j: usize) -> Vec<C> {
    let h: Vec<&CMatrix<f64>> = (0..f.len()).map(|m| &est.sen[m][j]).collect();
    let g = signatures(&h, f, w);
    let desired = est.com[0].len() + j;
    let n = g[desired].len();
    let cols: Vec<&Vec<C>> = (0..g.len()).filter(|&s| s != desired).map(|s| &g[s]).collect();
    let rinv = invert(covariance(n, sigma2, &cols));
    // u = (R^{-1} h)^H / ||R^{-1} h||
    let mut x = vec![(0.0, 0.0); n];
    for a in 0..n {
        for b in 0..n {
            x[a] = add(x[a], mul(rinv[a][b], g[desired][b]));
        }
    }
    let norm = x.iter().map(|z| abs2(*z)).sum::<f64>().sqrt();
    x.iter().map(|z| (z.0 / norm, -z.1 / norm)).collect()
}

/// Radar SINR for a given receive row vector `u`.
pub fn radar_sinr(
    est: &Channels<f64>,
    error: Option<&Channels<f64>>,
    f: &[CMatrix<f64>],
    w: &[CMatrix<f64>],
    u: &[C],
    sigma2: f64,
    j: usize,
) -> f64 {
    let h: Vec<&CMatrix<f64>> = (0..f.len()).map(|m| &est.sen[m][j]).collect();
    let g = signatures(&h, f, w);
    let desired = est.com[0].len() + j;
    let proj = |v: &Vec<C>| {
        let mut acc = (0.0, 0.0);
        for (a, b) in u.iter().zip(v) {
            acc = add(acc, mul(*a, *b));
        }
        abs2(acc)
    };
    let num = proj(&g[desired]);
    let mut den = sigma2 * u.iter().map(|z| abs2(*z)).sum::<f64>();
    for s in (0..g.len()).filter(|&s| s != desired) {
        den += proj(&g[s]);
    }
    if let Some(e) = error {
        let he: Vec<&CMatrix<f64>> = (0..f.len()).map(|m| &e.sen[m][j]).collect();
        for v in signatures(&he, f, w).iter() {
            den += proj(v);
        }
    }
    num / den
}

/// `sum_s ||F w_s||^2` with explicit loops.
pub fn bs_power(f: &CMatrix<f64>, w: &CMatrix<f64>) -> f64 {
    let mut total = 0.0;
    for s in 0..w.cols() {
        for t in 0..f.rows() {
            let mut acc = (0.0, 0.0);
            for k in 0..f.cols() {
                acc = add(acc, mul(entry(f, t, k), entry(w, k, s)));
            }
            total += abs2(acc);
        }
    }
    total
}
