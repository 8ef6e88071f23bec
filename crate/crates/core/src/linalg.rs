//! Symmetric banded matrices, banded Cholesky, shift-invert iteration and a
//! dense generalized eigensolver for small problems.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Symmetric matrix stored by its lower band.
#[derive(Debug, Clone, PartialEq)]
pub struct BandedSym {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl BandedSym {
    pub fn zeros(n: usize, bw: usize) -> Self {
        Self { n, bw, data: vec![0.0; n * (bw + 1)] }
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len(), 0);
        for (i, d) in diag.iter().enumerate() {
            m.add(i, i, *d);
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        // i >= j, i - j <= bw
        i * (self.bw + 1) + self.bw - (i - j)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        if r - c > self.bw {
            0.0
        } else {
            self.data[self.idx(r, c)]
        }
    }

    /// Adds `v` to entry `(i, j)` (and implicitly to `(j, i)`).
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        assert!(r - c <= self.bw, "entry ({i},{j}) outside band {}", self.bw);
        let k = self.idx(r, c);
        self.data[k] += v;
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.data[self.idx(i, i)]).collect()
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        let mut y = vec![0.0; self.n];
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bw);
            let row = &self.data[i * (self.bw + 1)..(i + 1) * (self.bw + 1)];
            let mut acc = 0.0;
            for j in lo..i {
                let a = row[self.bw - (i - j)];
                acc += a * x[j];
                y[j] += a * x[i];
            }
            acc += row[self.bw] * x[i];
            y[i] += acc;
        }
        y
    }

    /// `|A| |x|` componentwise, used for backward-error estimates.
    pub fn abs_matvec(&self, x: &[f64]) -> Vec<f64> {
        let ax: Vec<f64> = x.iter().map(|v| v.abs()).collect();
        let mut y = vec![0.0; self.n];
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bw);
            for j in lo..=i {
                let a = self.data[self.idx(i, j)].abs();
                y[i] += a * ax[j];
                if j != i {
                    y[j] += a * ax[i];
                }
            }
        }
        y
    }

    /// `xᵀ A y`.
    pub fn form(&self, x: &[f64], y: &[f64]) -> f64 {
        dot(x, &self.matvec(y))
    }

    /// `a·self + b·other`, with the wider of the two bands.
    pub fn combine(&self, a: f64, other: &BandedSym, b: f64) -> BandedSym {
        assert_eq!(self.n, other.n);
        let bw = self.bw.max(other.bw);
        let mut out = BandedSym::zeros(self.n, bw);
        for i in 0..self.n {
            for j in i.saturating_sub(bw)..=i {
                let v = a * self.get(i, j) + b * other.get(i, j);
                if v != 0.0 {
                    out.add(i, j, v);
                }
            }
        }
        out
    }

    /// Diagonal matrix of row sums.
    pub fn lumped(&self) -> BandedSym {
        let ones = vec![1.0; self.n];
        BandedSym::from_diagonal(&self.matvec(&ones))
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| self.get(i, j))
    }

    /// Nonzero entries of the lower triangle as `(row, col, value)`.
    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        for i in 0..self.n {
            for j in i.saturating_sub(self.bw)..=i {
                let v = self.data[self.idx(i, j)];
                if v != 0.0 {
                    out.push((i, j, v));
                }
            }
        }
        out
    }

    pub fn cholesky(&self) -> Result<BandCholesky> {
        let n = self.n;
        let bw = self.bw;
        let mut l = self.data.clone();
        let w = bw + 1;
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            for j in lo..=i {
                let klo = lo.max(j.saturating_sub(bw));
                let mut s = l[i * w + bw - (i - j)];
                for k in klo..j {
                    s -= l[i * w + bw - (i - k)] * l[j * w + bw - (j - k)];
                }
                if i == j {
                    if !(s > 0.0) || !s.is_finite() {
                        return Err(Error::FactorizationFailed(i));
                    }
                    l[i * w + bw] = s.sqrt();
                } else {
                    l[i * w + bw - (i - j)] = s / l[j * w + bw];
                }
            }
        }
        Ok(BandCholesky { n, bw, l })
    }
}

/// Lower Cholesky factor of a [`BandedSym`].
#[derive(Debug, Clone)]
pub struct BandCholesky {
    n: usize,
    bw: usize,
    l: Vec<f64>,
}

impl BandCholesky {
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let w = self.bw + 1;
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bw);
            let mut s = b[i];
            for k in lo..i {
                s -= self.l[i * w + self.bw - (i - k)] * b[k];
            }
            b[i] = s / self.l[i * w + self.bw];
        }
        for i in (0..self.n).rev() {
            let hi = (i + self.bw).min(self.n - 1);
            let mut s = b[i];
            for k in (i + 1)..=hi {
                s -= self.l[k * w + self.bw - (k - i)] * b[k];
            }
            b[i] = s / self.l[i * w + self.bw];
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Result of [`inverse_iteration`].
#[derive(Debug, Clone)]
pub struct EigenPair {
    pub value: f64,
    pub vector: Vec<f64>,
    pub iterations: usize,
    pub shift: f64,
    /// Componentwise backward error `max_i |r_i| / (|K||v| + |λ||M||v|)_i`.
    pub backward_error: f64,
}

/// Smallest eigenpair of `K v = λ M v` by shift-invert iteration.
///
/// `shift` must lie below the lowest eigenvalue; if the shifted matrix is not
/// positive definite the shift is lowered until it factors. `deflate` holds
/// vectors the iterate is kept M-orthogonal to.
pub fn inverse_iteration(
    k: &BandedSym,
    m: &BandedSym,
    shift: Option<f64>,
    tol: f64,
    max_iter: usize,
    deflate: &[Vec<f64>],
    start: Option<&[f64]>,
) -> Result<EigenPair> {
    let n = k.dim();
    if n == 0 {
        return Err(Error::InvalidDomain("no free nodes".into()));
    }
    let mut sigma = shift.unwrap_or(0.0);
    let mut step = 1.0f64.max(sigma.abs());
    let factor = loop {
        match k.combine(1.0, m, -sigma).cholesky() {
            Ok(f) => break f,
            Err(_) => {
                sigma -= step;
                step *= 2.0;
                if !sigma.is_finite() || step > 1e300 {
                    return Err(Error::FactorizationFailed(0));
                }
            }
        }
    };
    let mdeflate: Vec<Vec<f64>> = deflate.iter().map(|d| m.matvec(d)).collect();
    let project = |v: &mut Vec<f64>| {
        for (d, md) in deflate.iter().zip(&mdeflate) {
            let c = dot(v, md) / dot(d, md);
            for (vi, di) in v.iter_mut().zip(d) {
                *vi -= c * di;
            }
        }
    };
    let mut v: Vec<f64> = match start {
        Some(s) => s.to_vec(),
        None => vec![1.0; n],
    };
    project(&mut v);
    normalize_m(&mut v, m);
    let mut lambda = k.form(&v, &v);
    for it in 1..=max_iter {
        let mut w = factor.solve(&m.matvec(&v));
        project(&mut w);
        normalize_m(&mut w, m);
        let new_lambda = k.form(&w, &w);
        let diff: Vec<f64> = w.iter().zip(&v).map(|(a, b)| a - b).collect();
        let change = dot(&diff, &m.matvec(&diff)).max(0.0).sqrt();
        // Below `tol` in the iterate, remaining Rayleigh-quotient jitter is rounding.
        let converged =
            change <= tol || ((new_lambda - lambda).abs() <= tol * new_lambda.abs().max(1.0) && change <= tol.sqrt());
        v = w;
        lambda = new_lambda;
        if converged {
            let be = backward_error(k, m, lambda, &v);
            return Ok(EigenPair { value: lambda, vector: v, iterations: it, shift: sigma, backward_error: be });
        }
    }
    Err(Error::NotConverged(max_iter))
}

fn normalize_m(v: &mut [f64], m: &BandedSym) {
    let nrm = m.form(v, v).sqrt();
    if nrm > 0.0 {
        for x in v.iter_mut() {
            *x /= nrm;
        }
    }
}

/// Componentwise backward error of an approximate eigenpair.
pub fn backward_error(k: &BandedSym, m: &BandedSym, lambda: f64, v: &[f64]) -> f64 {
    let kv = k.matvec(v);
    let mv = m.matvec(v);
    let ak = k.abs_matvec(v);
    let am = m.abs_matvec(v);
    let mut worst = 0.0f64;
    for i in 0..v.len() {
        let denom = ak[i] + lambda.abs() * am[i];
        if denom > 0.0 {
            worst = worst.max((kv[i] - lambda * mv[i]).abs() / denom);
        }
    }
    worst
}

/// Full generalized eigendecomposition of a small symmetric pencil.
///
/// Returns eigenvalues in ascending order and M-orthonormal eigenvectors as
/// matrix columns.
pub fn dense_generalized_eigen(k: &DMatrix<f64>, m: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = k.nrows();
    let scale: Vec<f64> = (0..n).map(|i| 1.0 / m[(i, i)].sqrt()).collect();
    let ks = DMatrix::from_fn(n, n, |i, j| k[(i, j)] * scale[i] * scale[j]);
    let ms = DMatrix::from_fn(n, n, |i, j| m[(i, j)] * scale[i] * scale[j]);
    let chol = nalgebra::Cholesky::new(ms).ok_or(Error::FactorizationFailed(0))?;
    let l = chol.l();
    let x = l.solve_lower_triangular(&ks).ok_or(Error::FactorizationFailed(0))?;
    let c = l.solve_lower_triangular(&x.transpose()).ok_or(Error::FactorizationFailed(0))?;
    let c = (&c + c.transpose()) * 0.5;
    let eig = SymmetricEigen::new(c);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let mut values = Vec::with_capacity(n);
    let mut vectors = DMatrix::zeros(n, n);
    for (col, &idx) in order.iter().enumerate() {
        values.push(eig.eigenvalues[idx]);
        let y: DVector<f64> = eig.eigenvectors.column(idx).into_owned();
        let z = l.tr_solve_lower_triangular(&y).ok_or(Error::FactorizationFailed(0))?;
        for i in 0..n {
            vectors[(i, col)] = z[i] * scale[i];
        }
    }
    Ok((values, vectors))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian(n: usize) -> BandedSym {
        let mut a = BandedSym::zeros(n, 1);
        for i in 0..n {
            a.add(i, i, 2.0);
            if i + 1 < n {
                a.add(i + 1, i, -1.0);
            }
        }
        a
    }

    #[test]
    fn cholesky_solves_tridiagonal_system() {
        let a = laplacian(50);
        let x: Vec<f64> = (0..50).map(|i| (i as f64 * 0.3).sin()).collect();
        let b = a.matvec(&x);
        let y = a.cholesky().unwrap().solve(&b);
        for (p, q) in x.iter().zip(&y) {
            assert!((p - q).abs() < 1e-10);
        }
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let mut a = laplacian(5);
        a.add(2, 2, -10.0);
        assert!(matches!(a.cholesky(), Err(Error::FactorizationFailed(_))));
    }

    #[test]
    fn wide_band_matches_dense() {
        let n = 30;
        let bw = 4;
        let mut a = BandedSym::zeros(n, bw);
        for i in 0..n {
            a.add(i, i, 10.0 + i as f64);
            for d in 1..=bw {
                if i + d < n {
                    a.add(i + d, i, 1.0 / (1.0 + d as f64 + i as f64 * 0.1));
                }
            }
        }
        let x: Vec<f64> = (0..n).map(|i| 1.0 + (i as f64).cos()).collect();
        let dense = a.to_dense() * DVector::from_vec(x.clone());
        let band = a.matvec(&x);
        for i in 0..n {
            assert!((dense[i] - band[i]).abs() < 1e-12);
        }
        let sol = a.cholesky().unwrap().solve(&band);
        for i in 0..n {
            assert!((sol[i] - x[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn inverse_iteration_finds_lowest_mode() {
        let n = 99;
        let h = 1.0 / (n as f64 + 1.0);
        let mut k = laplacian(n);
        let mut m = BandedSym::zeros(n, 1);
        for i in 0..n {
            m.add(i, i, 4.0 * h / 6.0);
            if i + 1 < n {
                m.add(i + 1, i, h / 6.0);
            }
        }
        k = k.combine(1.0 / h, &m, 0.0);
        let ep = inverse_iteration(&k, &m, Some(5.0), 1e-12, 500, &[], None).unwrap();
        let exact = std::f64::consts::PI.powi(2);
        assert!((ep.value / exact - 1.0).abs() < 1e-3);
        assert!(ep.backward_error < 1e-8);
        let (vals, _) = dense_generalized_eigen(&k.to_dense(), &m.to_dense()).unwrap();
        assert!((vals[0] - ep.value).abs() < 1e-9 * ep.value);
    }
}
