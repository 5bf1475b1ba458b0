//! Shared numerical utilities: quadrature, extrapolation, fitting, and
//! sparse iterative solvers used by the physics modules.

use num_complex::Complex64;

/// Gauss-Legendre nodes and weights on [-1, 1], computed by Newton iteration
/// on the Legendre polynomial roots.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 2);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Initial guess (Chebyshev-like).
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // Evaluate P_n(x) and P_n'(x) by recurrence.
            let mut p0 = 1.0;
            let mut p1 = x;
            for j in 2..=n {
                let p2 = ((2 * j - 1) as f64 * x * p1 - (j - 1) as f64 * p0) / j as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Fixed-order Gauss-Legendre integral of a complex-valued function on [a, b].
pub fn integrate_gl<F: FnMut(f64) -> Complex64>(mut f: F, a: f64, b: f64, n: usize) -> Complex64 {
    let (xs, ws) = gauss_legendre(n);
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut acc = Complex64::new(0.0, 0.0);
    for (x, w) in xs.iter().zip(ws.iter()) {
        acc += f(c + h * x) * *w;
    }
    acc * h
}

/// Adaptive complex-valued quadrature: recursively bisects until the
/// difference between a 15-point and a 31-point Gauss rule on each panel is
/// below the tolerance.
pub fn integrate_adaptive<F: FnMut(f64) -> Complex64>(
    f: &mut F,
    a: f64,
    b: f64,
    tol: f64,
) -> Complex64 {
    fn recurse<F: FnMut(f64) -> Complex64>(
        f: &mut F,
        a: f64,
        b: f64,
        tol: f64,
        depth: usize,
    ) -> Complex64 {
        let coarse = integrate_gl(&mut *f, a, b, 15);
        let fine = integrate_gl(&mut *f, a, b, 31);
        if (fine - coarse).norm() <= tol || depth >= 40 {
            return fine;
        }
        let m = 0.5 * (a + b);
        recurse(f, a, m, 0.5 * tol, depth + 1) + recurse(f, m, b, 0.5 * tol, depth + 1)
    }
    recurse(f, a, b, tol, 0)
}

/// Neville polynomial extrapolation of g(h) to h = 0, given samples
/// (h_i, g_i). Used for Richardson extrapolation of momentum/frequency
/// limits; pass h_i = p_i^2 when the leading correction is quadratic.
pub fn extrapolate_to_zero(hs: &[f64], gs: &[f64]) -> f64 {
    assert_eq!(hs.len(), gs.len());
    let n = hs.len();
    let mut t = gs.to_vec();
    for level in 1..n {
        for i in 0..n - level {
            // Lagrange/Neville update targeting h = 0.
            t[i] = (hs[i + level] * t[i] - hs[i] * t[i + 1]) / (hs[i + level] - hs[i]);
        }
    }
    t[0]
}

/// Least-squares straight line y = slope * x + intercept.
/// Returns (slope, intercept, rms residual).
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    let sx: f64 = xs.iter().sum();
    let sy: f64 = ys.iter().sum();
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| x * y).sum();
    let denom = n * sxx - sx * sx;
    let slope = (n * sxy - sx * sy) / denom;
    let intercept = (sy - slope * sx) / n;
    let rss: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let r = y - (slope * x + intercept);
            r * r
        })
        .sum();
    (slope, intercept, (rss / n).sqrt())
}

/// Standard error of the slope of a least-squares line.
pub fn slope_std_error(xs: &[f64], ys: &[f64]) -> f64 {
    let (slope, intercept, _) = linear_fit(xs, ys);
    let n = xs.len() as f64;
    let mean_x = xs.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mean_x) * (x - mean_x)).sum();
    let rss: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let r = y - (slope * x + intercept);
            r * r
        })
        .sum();
    (rss / (n - 2.0) / sxx).sqrt()
}

/// Sparse real symmetric matrix in CSR-like form for iterative solvers.
pub struct SparseSym {
    pub dim: usize,
    pub row_offsets: Vec<usize>,
    pub cols: Vec<u32>,
    pub vals: Vec<f64>,
}

impl SparseSym {
    pub fn matvec(&self, v: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|x| *x = 0.0);
        for row in 0..self.dim {
            let mut acc = 0.0;
            for idx in self.row_offsets[row]..self.row_offsets[row + 1] {
                acc += self.vals[idx] * v[self.cols[idx] as usize];
            }
            out[row] = acc;
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Lowest eigenpair of a sparse real symmetric matrix by Lanczos with full
/// reorthogonalization. Returns (eigenvalue, eigenvector).
pub fn lanczos_ground(h: &SparseSym, max_iter: usize, tol: f64, seed: u64) -> (f64, Vec<f64>) {
    use rand::{Rng, SeedableRng};
    let n = h.dim;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut q: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let nq = norm(&q);
    q.iter_mut().for_each(|x| *x /= nq);

    let mut basis: Vec<Vec<f64>> = vec![q.clone()];
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let mut w = vec![0.0; n];
    let mut prev_ev = f64::INFINITY;

    for it in 0..max_iter {
        h.matvec(&basis[it], &mut w);
        let alpha = dot(&w, &basis[it]);
        alphas.push(alpha);
        // Full reorthogonalization (twice for stability).
        for _ in 0..2 {
            for b in &basis {
                let c = dot(&w, b);
                w.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
            }
        }
        let beta = norm(&w);
        // Tridiagonal eigenproblem for the current Krylov space.
        let k = alphas.len();
        let mut t = nalgebra::DMatrix::<f64>::zeros(k, k);
        for i in 0..k {
            t[(i, i)] = alphas[i];
            if i + 1 < k {
                t[(i, i + 1)] = betas[i];
                t[(i + 1, i)] = betas[i];
            }
        }
        let eig = t.symmetric_eigen();
        let (mut ev, mut idx) = (f64::INFINITY, 0);
        for (i, &e) in eig.eigenvalues.iter().enumerate() {
            if e < ev {
                ev = e;
                idx = i;
            }
        }
        let converged = beta < tol || (prev_ev - ev).abs() < tol * 1e-2;
        if converged || it + 1 == max_iter || beta < 1e-14 {
            let coeffs = eig.eigenvectors.column(idx);
            let mut vec = vec![0.0; n];
            for (j, b) in basis.iter().enumerate() {
                let c = coeffs[j];
                vec.iter_mut().zip(b).for_each(|(x, y)| *x += c * y);
            }
            let nv = norm(&vec);
            vec.iter_mut().for_each(|x| *x /= nv);
            return (ev, vec);
        }
        prev_ev = ev;
        betas.push(beta);
        let mut next = w.clone();
        next.iter_mut().for_each(|x| *x /= beta);
        basis.push(next);
    }
    unreachable!()
}

/// Conjugate-gradient solve of (H - e0 + shift) x = b restricted to the
/// orthogonal complement of `deflate` (the ground state). H - e0 is positive
/// semidefinite there, so plain CG applies after projecting out `deflate`.
pub fn cg_deflated(
    h: &SparseSym,
    e0: f64,
    b: &[f64],
    deflate: &[f64],
    tol: f64,
    max_iter: usize,
) -> Vec<f64> {
    let n = h.dim;
    let project = |v: &mut Vec<f64>| {
        let c = dot(v, deflate);
        v.iter_mut().zip(deflate).for_each(|(x, y)| *x -= c * y);
    };
    let mut rhs = b.to_vec();
    project(&mut rhs);
    let mut x = vec![0.0; n];
    let mut r = rhs.clone();
    let mut p = r.clone();
    let mut hp = vec![0.0; n];
    let mut rs_old = dot(&r, &r);
    let b_norm = rs_old.sqrt().max(1e-300);
    for _ in 0..max_iter {
        if rs_old.sqrt() <= tol * b_norm {
            break;
        }
        h.matvec(&p, &mut hp);
        hp.iter_mut().zip(&p).for_each(|(y, pi)| *y -= e0 * pi);
        project(&mut hp);
        let alpha = rs_old / dot(&p, &hp);
        x.iter_mut().zip(&p).for_each(|(xi, pi)| *xi += alpha * pi);
        r.iter_mut().zip(&hp).for_each(|(ri, hi)| *ri -= alpha * hi);
        // Re-project: roundoff reintroduces the (H - e0)-null direction.
        project(&mut r);
        let rs_new = dot(&r, &r);
        let beta = rs_new / rs_old;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
        rs_old = rs_new;
    }
    x
}
