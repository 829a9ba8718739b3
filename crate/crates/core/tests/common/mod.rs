//! Test-side oracles. Nothing here calls into the crate's numerics: the
//! estimators are direct double-loop summations, eigenproblems use cyclic
//! Jacobi, and the penalized problem is solved through its dual.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use repcov::{RepeatedData, SubjectBlock, SymMatrix};

pub type Mat = Vec<Vec<f64>>;

pub fn zeros(p: usize) -> Mat {
    vec![vec![0.0; p]; p]
}

pub fn to_mat(a: &SymMatrix) -> Mat {
    a.rows()
}

pub fn max_abs_diff(a: &Mat, b: &Mat) -> f64 {
    a.iter()
        .flatten()
        .zip(b.iter().flatten())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

pub fn frob(a: &Mat) -> f64 {
    a.iter().flatten().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn sub(a: &Mat, b: &Mat) -> Mat {
    a.iter()
        .zip(b)
        .map(|(r, s)| r.iter().zip(s).map(|(x, y)| x - y).collect())
        .collect()
}

/// Raw observations as `subjects[i][j][k]`.
pub fn raw(data: &RepeatedData) -> Vec<Mat> {
    data.subjects()
        .iter()
        .map(|s| (0..s.n()).map(|j| s.row(j)).collect())
        .collect()
}

pub fn from_raw(groups: &[Mat]) -> RepeatedData {
    let subjects = groups
        .iter()
        .enumerate()
        .map(|(i, rows)| SubjectBlock::new(format!("s{i}"), rows).unwrap())
        .collect();
    RepeatedData::new(subjects).unwrap()
}

/// Uniform(−1, 1) entries plus a per-subject shift, so both covariance
/// levels carry signal.
pub fn random_data(rng: &mut ChaCha8Rng, sizes: &[usize], p: usize) -> RepeatedData {
    let groups: Vec<Mat> = sizes
        .iter()
        .map(|&n| {
            let shift: Vec<f64> = (0..p).map(|_| rng.gen_range(-2.0..2.0)).collect();
            (0..n)
                .map(|_| (0..p).map(|k| shift[k] + rng.gen_range(-1.0..1.0)).collect())
                .collect()
        })
        .collect();
    from_raw(&groups)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn mean_rows(rows: &Mat) -> Vec<f64> {
    let p = rows[0].len();
    let mut m = vec![0.0; p];
    for r in rows {
        for k in 0..p {
            m[k] += r[k];
        }
    }
    m.iter().map(|v| v / rows.len() as f64).collect()
}

pub fn naive_within(g: &[Mat]) -> Mat {
    let p = g[0][0].len();
    let total: usize = g.iter().map(Vec::len).sum();
    let mut s = zeros(p);
    for rows in g {
        let mu = mean_rows(rows);
        for r in rows {
            for k in 0..p {
                for l in 0..p {
                    s[k][l] += (r[k] - mu[k]) * (r[l] - mu[l]);
                }
            }
        }
    }
    let d = (total - g.len()) as f64;
    s.iter().map(|r| r.iter().map(|v| v / d).collect()).collect()
}

pub fn naive_aggregated(g: &[Mat]) -> Mat {
    let p = g[0][0].len();
    let m = g.len();
    let means: Vec<Vec<f64>> = g.iter().map(mean_rows).collect();
    let grand: Vec<f64> = (0..p).map(|k| means.iter().map(|v| v[k]).sum::<f64>() / m as f64).collect();
    let mut s = zeros(p);
    for mu in &means {
        for k in 0..p {
            for l in 0..p {
                s[k][l] += (mu[k] - grand[k]) * (mu[l] - grand[l]) / (m - 1) as f64;
            }
        }
    }
    s
}

/// `n* = m / Σ 1/n_i` in plain floating point.
pub fn n_star(sizes: &[usize]) -> f64 {
    sizes.len() as f64 / sizes.iter().map(|&n| 1.0 / n as f64).sum::<f64>()
}

/// `n0 = (N − Σn²/N)/(m − 1)` in plain floating point.
pub fn n_zero(sizes: &[usize]) -> f64 {
    let n: f64 = sizes.iter().sum::<usize>() as f64;
    let sq: f64 = sizes.iter().map(|&x| (x * x) as f64).sum();
    (n - sq / n) / (sizes.len() - 1) as f64
}

pub fn naive_between(g: &[Mat]) -> Mat {
    let sizes: Vec<usize> = g.iter().map(Vec::len).collect();
    let m = g.len() as f64;
    let agg = naive_aggregated(g);
    let w = naive_within(g);
    // Σ̄ − Σ_i (m n_i)^{-1} Σ̂ε, summed term by term.
    let factor: f64 = sizes.iter().map(|&n| 1.0 / (m * n as f64)).sum();
    sub(&agg, &w.iter().map(|r| r.iter().map(|v| v * factor).collect()).collect())
}

pub fn naive_anova(g: &[Mat]) -> Mat {
    let p = g[0][0].len();
    let sizes: Vec<usize> = g.iter().map(Vec::len).collect();
    let m = g.len();
    let total: usize = sizes.iter().sum();
    let mut grand = vec![0.0; p];
    for rows in g {
        for r in rows {
            for k in 0..p {
                grand[k] += r[k] / total as f64;
            }
        }
    }
    let w = naive_within(g);
    let n0 = n_zero(&sizes);
    let mut s = zeros(p);
    for rows in g {
        let mu = mean_rows(rows);
        let wt = rows.len() as f64 / (m - 1) as f64;
        for k in 0..p {
            for l in 0..p {
                s[k][l] += wt * (mu[k] - grand[k]) * (mu[l] - grand[l]);
            }
        }
    }
    for k in 0..p {
        for l in 0..p {
            s[k][l] = (s[k][l] - w[k][l]) / n0;
        }
    }
    s
}

/// Cyclic Jacobi eigendecomposition: eigenvalues and eigenvectors (columns).
pub fn jacobi_eigen(a: &Mat) -> (Vec<f64>, Mat) {
    let p = a.len();
    let mut a = a.clone();
    let mut v = zeros(p);
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for _sweep in 0..100 {
        let off: f64 = (0..p)
            .flat_map(|i| (0..p).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        if off < 1e-30 {
            break;
        }
        for i in 0..p {
            for j in (i + 1)..p {
                if a[i][j].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[j][j] - a[i][i]) / (2.0 * a[i][j]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..p {
                    let (aki, akj) = (a[k][i], a[k][j]);
                    a[k][i] = c * aki - s * akj;
                    a[k][j] = s * aki + c * akj;
                }
                for k in 0..p {
                    let (aik, ajk) = (a[i][k], a[j][k]);
                    a[i][k] = c * aik - s * ajk;
                    a[j][k] = s * aik + c * ajk;
                }
                for k in 0..p {
                    let (vki, vkj) = (v[k][i], v[k][j]);
                    v[k][i] = c * vki - s * vkj;
                    v[k][j] = s * vki + c * vkj;
                }
            }
        }
    }
    ((0..p).map(|i| a[i][i]).collect(), v)
}

/// `Σ_k f(λ_k) v_k v_kᵀ` in the Jacobi eigenbasis.
pub fn spectral_map(a: &Mat, f: impl Fn(f64) -> f64) -> Mat {
    let (w, v) = jacobi_eigen(a);
    let p = a.len();
    let mut out = zeros(p);
    for (k, &lam) in w.iter().enumerate() {
        let fl = f(lam);
        for i in 0..p {
            for j in 0..p {
                out[i][j] += fl * v[i][k] * v[j][k];
            }
        }
    }
    for i in 0..p {
        for j in 0..i {
            let s = 0.5 * (out[i][j] + out[j][i]);
            out[i][j] = s;
            out[j][i] = s;
        }
    }
    out
}

pub fn floor_projection(a: &Mat, delta: f64) -> Mat {
    spectral_map(a, |l| l.max(delta))
}

pub fn objective(b: &Mat, s: &Mat, lambda: f64) -> f64 {
    let p = b.len();
    let mut f = 0.0;
    for i in 0..p {
        for j in 0..p {
            f += 0.5 * (s[i][j] - b[i][j]).powi(2);
            if i != j {
                f += lambda * s[i][j].abs();
            }
        }
    }
    f
}

pub struct DualSolution {
    /// Best primal objective seen (an upper bound on the optimum).
    pub primal: f64,
    /// Best dual objective seen (a lower bound on the optimum).
    pub dual: f64,
    pub sigma: Mat,
    pub iterations: usize,
}

/// Accelerated projected gradient ascent on the dual
///
/// g(Z) = ½ dist²(B − Z, {X ⪰ δI}) + ⟨Z, B⟩ − ½‖Z‖²,  |Z_kl| ≤ λ, Z_kk = 0,
///
/// whose gradient is the primal point P(B − Z). Stops once the duality gap
/// is below `gap_tol · (1 + |primal|)`.
pub fn dual_oracle(b: &Mat, lambda: f64, delta: f64, gap_tol: f64, max_iters: usize) -> DualSolution {
    let p = b.len();
    let clip = |z: &mut Mat| {
        for i in 0..p {
            for j in 0..p {
                z[i][j] = if i == j { 0.0 } else { z[i][j].clamp(-lambda, lambda) };
            }
        }
    };
    let eval = |z: &Mat| -> (f64, Mat) {
        let target = sub(b, z);
        let proj = floor_projection(&target, delta);
        let dist2: f64 = sub(&target, &proj).iter().flatten().map(|x| x * x).sum();
        let zb: f64 = z.iter().flatten().zip(b.iter().flatten()).map(|(x, y)| x * y).sum();
        let zz: f64 = z.iter().flatten().map(|x| x * x).sum();
        (0.5 * dist2 + zb - 0.5 * zz, proj)
    };
    let mut z = zeros(p);
    let mut y = z.clone();
    let mut t = 1.0f64;
    let mut best_primal = f64::INFINITY;
    let mut best_dual = f64::NEG_INFINITY;
    let mut best_sigma = zeros(p);
    let mut prev_dual = f64::NEG_INFINITY;
    for it in 1..=max_iters {
        let (gy, sigma_y) = eval(&y);
        let _ = gy;
        // Step size 1: the gradient map is 1-Lipschitz.
        let mut z_next = y.clone();
        for i in 0..p {
            for j in 0..p {
                z_next[i][j] += sigma_y[i][j];
            }
        }
        clip(&mut z_next);
        let (g_next, sigma_next) = eval(&z_next);
        let f_next = objective(b, &sigma_next, lambda);
        if f_next < best_primal {
            best_primal = f_next;
            best_sigma = sigma_next;
        }
        best_dual = best_dual.max(g_next);
        if best_primal - best_dual <= gap_tol * (1.0 + best_primal.abs()) {
            return DualSolution {
                primal: best_primal,
                dual: best_dual,
                sigma: best_sigma,
                iterations: it,
            };
        }
        // Restart momentum whenever the dual value decreases.
        let t_next = if g_next < prev_dual { 1.0 } else { 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt()) };
        let beta = if g_next < prev_dual { 0.0 } else { (t - 1.0) / t_next };
        for i in 0..p {
            for j in 0..p {
                y[i][j] = z_next[i][j] + beta * (z_next[i][j] - z[i][j]);
            }
        }
        clip(&mut y);
        prev_dual = g_next;
        z = z_next;
        t = t_next;
    }
    DualSolution {
        primal: best_primal,
        dual: best_dual,
        sigma: best_sigma,
        iterations: max_iters,
    }
}

/// Random symmetric matrix with entries in (−1, 1), plus a diagonal shift.
pub fn random_symmetric(rng: &mut ChaCha8Rng, p: usize, shift: f64) -> SymMatrix {
    let mut rows = zeros(p);
    for i in 0..p {
        for j in 0..=i {
            let v: f64 = rng.gen_range(-1.0..1.0);
            rows[i][j] = v;
            rows[j][i] = v;
        }
        rows[i][i] += shift;
    }
    SymMatrix::from_rows(&rows).unwrap()
}

/// The five closed-form tuning values, from sizes, straight from the
/// displayed formulas (λ̃b with the balanced-consistent `M_b` scaling).
pub struct TheoryScript {
    pub eps: f64,
    pub b: f64,
    pub zero: f64,
    pub tilde_b: f64,
    pub one: f64,
}

pub fn theory_script(sizes: &[usize], p: usize, c1: f64, c2: f64, mb: f64, me: f64) -> TheoryScript {
    let m = sizes.len() as f64;
    let n: f64 = sizes.iter().sum::<usize>() as f64;
    let lp = (p as f64).ln();
    let ns = n_star(sizes);
    let n0 = n_zero(sizes);
    let nmax = *sizes.iter().max().unwrap() as f64;
    TheoryScript {
        eps: c1 * (n * lp).sqrt() / (n - m),
        b: c1 * (lp / m).sqrt() + c2 * (n * lp).sqrt() / ((n - m) * ns) + mb / m + me / (m * ns),
        zero: c1 * (lp / m).sqrt() + mb / m + me / ns,
        tilde_b: c1 * (nmax / n0) * (lp / m).sqrt()
            + c2 * (n * lp).sqrt() / ((n - m) * n0)
            + mb * (2.0 * n - n0 * m) / (n0 * m * m)
            + me / (m * n0),
        one: c1 * (lp / m).sqrt() + mb + (2.0 - ns) * me / (2.0 * ns),
    }
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}
