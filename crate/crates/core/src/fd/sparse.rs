//! Compressed sparse rows plus the linear solvers used by the grids: a banded
//! LU for narrow one-dimensional systems, a sparse LU (faer) for the rest,
//! and ILU(0)-preconditioned BiCGSTAB for large three-dimensional systems.

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::Lu;
use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;

use crate::error::{Error, Result};

/// Normwise backward error every solve must reach:
/// `|b - A x| <= SOLVE_TOL (|A| |x| + |b|)`.
pub const SOLVE_TOL: f64 = 1e-10;

/// `|r| / (|A|_inf |x| + |b|)` in the 2-norm.
pub fn backward_error(a_norm: f64, x: &[f64], b: &[f64], r: &[f64]) -> f64 {
    let den = a_norm * norm2(x) + norm2(b);
    if den == 0.0 {
        0.0
    } else {
        norm2(r) / den
    }
}
const COND_LIMIT: f64 = 1e14;
const MAX_BAND_WIDTH: usize = 24;
const MAX_KRYLOV_ITERS: usize = 5000;

#[derive(Clone, Debug, PartialEq)]
pub struct Csr {
    n_rows: usize,
    n_cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl Csr {
    /// Sums duplicate entries and drops exact zeros.
    pub fn from_triplets(n_rows: usize, n_cols: usize, mut trips: Vec<(usize, usize, f64)>) -> Self {
        trips.sort_unstable_by_key(|&(r, c, _)| (r, c));
        let mut indptr = vec![0; n_rows + 1];
        let mut indices = Vec::with_capacity(trips.len());
        let mut values: Vec<f64> = Vec::with_capacity(trips.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in trips {
            debug_assert!(r < n_rows && c < n_cols);
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                indices.push(c);
                values.push(v);
                indptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..n_rows {
            indptr[r + 1] += indptr[r];
        }
        Self {
            n_rows,
            n_cols,
            indptr,
            indices,
            values,
        }
        .pruned()
    }

    fn pruned(self) -> Self {
        if self.values.iter().all(|&v| v != 0.0) {
            return self;
        }
        let mut trips = Vec::with_capacity(self.nnz());
        for r in 0..self.n_rows {
            for (c, v) in self.row(r) {
                if v != 0.0 {
                    trips.push((r, c, v));
                }
            }
        }
        Self::from_triplets(self.n_rows, self.n_cols, trips)
    }

    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Self::from_triplets(n_rows, n_cols, Vec::new())
    }

    pub fn identity_on(n: usize, rows: impl Fn(usize) -> bool) -> Self {
        Self::from_triplets(n, n, (0..n).filter(|&r| rows(r)).map(|r| (r, r, 1.0)).collect())
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.indptr[r]..self.indptr[r + 1];
        self.indices[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let span = self.indptr[r]..self.indptr[r + 1];
        match self.indices[span.clone()].binary_search(&c) {
            Ok(k) => self.values[span.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        (0..self.n_rows)
            .flat_map(|r| self.row(r).map(move |(c, v)| (r, c, v)))
            .collect()
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for (r, out) in y.iter_mut().enumerate().take(self.n_rows) {
            let mut acc = 0.0;
            for k in self.indptr[r]..self.indptr[r + 1] {
                acc += self.values[k] * x[self.indices[k]];
            }
            *out = acc;
        }
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n_rows];
        self.matvec(x, &mut y);
        y
    }

    /// `a * self + b * other`.
    pub fn combine(&self, a: f64, other: &Csr, b: f64) -> Csr {
        assert_eq!((self.n_rows, self.n_cols), (other.n_rows, other.n_cols));
        let mut trips: Vec<(usize, usize, f64)> =
            self.triplets().into_iter().map(|(r, c, v)| (r, c, a * v)).collect();
        trips.extend(other.triplets().into_iter().map(|(r, c, v)| (r, c, b * v)));
        Csr::from_triplets(self.n_rows, self.n_cols, trips)
    }

    pub fn transpose(&self) -> Csr {
        Csr::from_triplets(
            self.n_cols,
            self.n_rows,
            self.triplets().into_iter().map(|(r, c, v)| (c, r, v)).collect(),
        )
    }

    pub fn norm_inf(&self) -> f64 {
        (0..self.n_rows)
            .map(|r| self.row(r).map(|(_, v)| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Lower and upper bandwidth.
    pub fn bandwidth(&self) -> (usize, usize) {
        let mut lo = 0;
        let mut up = 0;
        for r in 0..self.n_rows {
            for (c, _) in self.row(r) {
                if c < r {
                    lo = lo.max(r - c);
                } else {
                    up = up.max(c - r);
                }
            }
        }
        (lo, up)
    }

    fn to_faer(&self) -> Result<SparseColMat<usize, f64>> {
        let trips: Vec<Triplet<usize, usize, f64>> = self
            .triplets()
            .into_iter()
            .map(|(r, c, v)| Triplet::new(r, c, v))
            .collect();
        SparseColMat::try_new_from_triplets(self.n_rows, self.n_cols, &trips)
            .map_err(|e| Error::Shape(format!("sparse matrix: {e:?}")))
    }
}

fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

/// LU with partial pivoting in band storage.
#[derive(Clone, Debug)]
struct BandedLu {
    n: usize,
    kl: usize,
    ku: usize,
    ab: Vec<f64>,
    piv: Vec<usize>,
}

impl BandedLu {
    fn width(kl: usize, ku: usize) -> usize {
        2 * kl + ku + 1
    }

    fn new(a: &Csr) -> Result<Self> {
        let n = a.n_rows();
        let (kl, ku) = a.bandwidth();
        let w = Self::width(kl, ku);
        let mut ab = vec![0.0; n * w];
        for r in 0..n {
            for (c, v) in a.row(r) {
                ab[r * w + c + kl - r] = v;
            }
        }
        let mut lu = Self {
            n,
            kl,
            ku,
            ab,
            piv: vec![0; n],
        };
        lu.factor()?;
        Ok(lu)
    }

    #[inline]
    fn at(&self, r: usize, c: usize) -> usize {
        r * Self::width(self.kl, self.ku) + c + self.kl - r
    }

    fn factor(&mut self) -> Result<()> {
        let (n, kl, ku) = (self.n, self.kl, self.ku);
        for k in 0..n {
            let last_row = (k + kl + 1).min(n);
            let last_col = (k + kl + ku + 1).min(n);
            let mut p = k;
            let mut best = self.ab[self.at(k, k)].abs();
            for i in k + 1..last_row {
                let v = self.ab[self.at(i, k)].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best == 0.0 {
                return Err(Error::SingularSystem);
            }
            self.piv[k] = p;
            if p != k {
                for j in k..last_col {
                    let (a, b) = (self.at(k, j), self.at(p, j));
                    self.ab.swap(a, b);
                }
            }
            let pivot = self.ab[self.at(k, k)];
            for i in k + 1..last_row {
                let ik = self.at(i, k);
                let l = self.ab[ik] / pivot;
                if l == 0.0 {
                    continue;
                }
                self.ab[ik] = l;
                for j in k + 1..last_col {
                    let kj = self.ab[self.at(k, j)];
                    let ij = self.at(i, j);
                    self.ab[ij] -= l * kj;
                }
            }
        }
        Ok(())
    }

    fn solve_in_place(&self, b: &mut [f64]) {
        let (n, kl, ku) = (self.n, self.kl, self.ku);
        for k in 0..n {
            b.swap(k, self.piv[k]);
            let bk = b[k];
            if bk != 0.0 {
                for i in k + 1..(k + kl + 1).min(n) {
                    b[i] -= self.ab[self.at(i, k)] * bk;
                }
            }
        }
        for k in (0..n).rev() {
            let mut acc = b[k];
            for j in k + 1..(k + kl + ku + 1).min(n) {
                acc -= self.ab[self.at(k, j)] * b[j];
            }
            b[k] = acc / self.ab[self.at(k, k)];
        }
    }
}

/// Incomplete LU with the sparsity pattern of the matrix.
#[derive(Clone, Debug)]
struct Ilu0 {
    lu: Csr,
    diag: Vec<usize>,
}

impl Ilu0 {
    fn new(a: &Csr) -> Result<Self> {
        let mut lu = a.clone();
        let n = lu.n_rows;
        let mut diag = vec![usize::MAX; n];
        for (r, d) in diag.iter_mut().enumerate() {
            let span = lu.indptr[r]..lu.indptr[r + 1];
            if let Ok(k) = lu.indices[span.clone()].binary_search(&r) {
                *d = span.start + k;
            } else {
                return Err(Error::SingularSystem);
            }
        }
        let mut pos = vec![usize::MAX; n];
        for i in 0..n {
            let (start, end) = (lu.indptr[i], lu.indptr[i + 1]);
            for k in start..end {
                pos[lu.indices[k]] = k;
            }
            for kk in start..end {
                let k = lu.indices[kk];
                if k >= i {
                    break;
                }
                let pivot = lu.values[diag[k]];
                if pivot == 0.0 {
                    return Err(Error::SingularSystem);
                }
                let l = lu.values[kk] / pivot;
                lu.values[kk] = l;
                for jj in diag[k] + 1..lu.indptr[k + 1] {
                    let j = lu.indices[jj];
                    let p = pos[j];
                    if p != usize::MAX {
                        lu.values[p] -= l * lu.values[jj];
                    }
                }
            }
            for k in start..end {
                pos[lu.indices[k]] = usize::MAX;
            }
            if lu.values[diag[i]] == 0.0 {
                return Err(Error::SingularSystem);
            }
        }
        Ok(Self { lu, diag })
    }

    fn apply(&self, b: &[f64], x: &mut [f64]) {
        let n = self.lu.n_rows;
        for i in 0..n {
            let mut acc = b[i];
            for k in self.lu.indptr[i]..self.diag[i] {
                acc -= self.lu.values[k] * x[self.lu.indices[k]];
            }
            x[i] = acc;
        }
        for i in (0..n).rev() {
            let mut acc = x[i];
            for k in self.diag[i] + 1..self.lu.indptr[i + 1] {
                acc -= self.lu.values[k] * x[self.lu.indices[k]];
            }
            x[i] = acc / self.lu.values[self.diag[i]];
        }
    }
}

enum Inner {
    Banded(BandedLu),
    Sparse(Box<Lu<usize, f64>>),
    Krylov(Ilu0),
}

/// A factored (or preconditioned) square matrix ready for repeated solves.
pub struct Factorization {
    a: Csr,
    inner: Inner,
}

impl std::fmt::Debug for Factorization {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let kind = match self.inner {
            Inner::Banded(_) => "banded",
            Inner::Sparse(_) => "sparse-lu",
            Inner::Krylov(_) => "bicgstab-ilu0",
        };
        write!(f, "Factorization({kind}, n = {})", self.a.n_rows)
    }
}

impl Factorization {
    /// Direct factorization, or ILU(0) + BiCGSTAB when `iterative`.
    /// Numerically singular matrices are reported as [`Error::SingularSystem`].
    pub fn new(a: Csr, iterative: bool) -> Result<Self> {
        if a.n_rows != a.n_cols {
            return Err(Error::Shape("matrix must be square".into()));
        }
        let inner = if iterative {
            Inner::Krylov(Ilu0::new(&a)?)
        } else {
            let (kl, ku) = a.bandwidth();
            if BandedLu::width(kl, ku) <= MAX_BAND_WIDTH {
                Inner::Banded(BandedLu::new(&a)?)
            } else {
                let lu = a.to_faer()?.sp_lu().map_err(|_| Error::SingularSystem)?;
                Inner::Sparse(Box::new(lu))
            }
        };
        let f = Self { a, inner };
        if !iterative {
            f.check_conditioning()?;
        }
        Ok(f)
    }

    pub fn matrix(&self) -> &Csr {
        &self.a
    }

    fn check_conditioning(&self) -> Result<()> {
        let n = self.a.n_rows;
        let probe: Vec<f64> = (0..n)
            .map(|i| 1.0 + 0.5 * ((i as f64 * 0.618_033_988_749_895).fract() - 0.5))
            .collect();
        let x = self.direct(&probe);
        let x_norm = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if !x_norm.is_finite() || x_norm * self.a.norm_inf() > COND_LIMIT {
            return Err(Error::SingularSystem);
        }
        Ok(())
    }

    fn direct(&self, b: &[f64]) -> Vec<f64> {
        match &self.inner {
            Inner::Banded(lu) => {
                let mut x = b.to_vec();
                lu.solve_in_place(&mut x);
                x
            }
            Inner::Sparse(lu) => {
                let mut m = Mat::<f64>::from_fn(b.len(), 1, |i, _| b[i]);
                lu.solve_in_place(&mut m);
                (0..b.len()).map(|i| m[(i, 0)]).collect()
            }
            Inner::Krylov(_) => unreachable!("direct solve on an iterative factorization"),
        }
    }

    fn residual(&self, x: &[f64], b: &[f64], r: &mut [f64]) -> f64 {
        self.a.matvec(x, r);
        for (ri, bi) in r.iter_mut().zip(b) {
            *ri = bi - *ri;
        }
        norm2(r)
    }

    /// Solves `A x = b` to backward error [`SOLVE_TOL`] (relative residual
    /// for the Krylov path).
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let b_norm = norm2(b);
        if b_norm == 0.0 {
            return Ok(vec![0.0; b.len()]);
        }
        match &self.inner {
            Inner::Krylov(ilu) => self.bicgstab(ilu, b, b_norm),
            _ => {
                let a_norm = self.a.norm_inf();
                let mut x = self.direct(b);
                let mut r = vec![0.0; b.len()];
                self.residual(&x, b, &mut r);
                let mut err = backward_error(a_norm, &x, b, &r);
                for _ in 0..4 {
                    if err <= SOLVE_TOL {
                        break;
                    }
                    let dx = self.direct(&r);
                    x.iter_mut().zip(&dx).for_each(|(xi, d)| *xi += d);
                    self.residual(&x, b, &mut r);
                    err = backward_error(a_norm, &x, b, &r);
                }
                if !err.is_finite() {
                    return Err(Error::SingularSystem);
                }
                if err > SOLVE_TOL {
                    return Err(Error::NoConvergence {
                        iterations: 5,
                        residual: err,
                    });
                }
                Ok(x)
            }
        }
    }

    fn bicgstab(&self, ilu: &Ilu0, b: &[f64], b_norm: f64) -> Result<Vec<f64>> {
        let n = b.len();
        let mut x = vec![0.0; n];
        let mut r = b.to_vec();
        let r_hat = r.clone();
        let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
        let mut v = vec![0.0; n];
        let mut p = vec![0.0; n];
        let mut y = vec![0.0; n];
        let mut s = vec![0.0; n];
        let mut z = vec![0.0; n];
        let mut t = vec![0.0; n];
        let mut res = b_norm;
        for it in 0..MAX_KRYLOV_ITERS {
            let rho_new = dot(&r_hat, &r);
            if rho_new == 0.0 || !rho_new.is_finite() {
                return Err(Error::NoConvergence {
                    iterations: it,
                    residual: res / b_norm,
                });
            }
            let beta = (rho_new / rho) * (alpha / omega);
            rho = rho_new;
            for i in 0..n {
                p[i] = r[i] + beta * (p[i] - omega * v[i]);
            }
            ilu.apply(&p, &mut y);
            self.a.matvec(&y, &mut v);
            alpha = rho / dot(&r_hat, &v);
            for i in 0..n {
                s[i] = r[i] - alpha * v[i];
            }
            if norm2(&s) <= SOLVE_TOL * b_norm * 0.5 {
                x.iter_mut().zip(&y).for_each(|(xi, yi)| *xi += alpha * yi);
                res = self.residual(&x, b, &mut r);
                if res <= SOLVE_TOL * b_norm {
                    return Ok(x);
                }
                continue;
            }
            ilu.apply(&s, &mut z);
            self.a.matvec(&z, &mut t);
            omega = dot(&t, &s) / dot(&t, &t);
            for i in 0..n {
                x[i] += alpha * y[i] + omega * z[i];
                r[i] = s[i] - omega * t[i];
            }
            res = norm2(&r);
            if res <= SOLVE_TOL * b_norm * 0.5 {
                res = self.residual(&x, b, &mut r);
                if res <= SOLVE_TOL * b_norm {
                    return Ok(x);
                }
            }
            if !res.is_finite() {
                break;
            }
        }
        Err(Error::NoConvergence {
            iterations: MAX_KRYLOV_ITERS,
            residual: res / b_norm,
        })
    }
}
