//! Dense Hermitian linear algebra, random-matrix generators and the
//! planted-sign hard instance.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng::Rng;

pub type C64 = Complex64;
pub type CVector = DVector<C64>;
pub type CMatrix = DMatrix<C64>;

/// Scalar field of a matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Field {
    Real,
    Complex,
}

impl Field {
    pub fn as_str(self) -> &'static str {
        match self {
            Field::Real => "real",
            Field::Complex => "complex",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Entries {
    Real(DMatrix<f64>),
    Complex(CMatrix),
}

/// Dense Hermitian matrix with exact symmetry checked at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianMatrix {
    entries: Entries,
    norm_bounded: bool,
}

impl HermitianMatrix {
    /// Real symmetric matrix; rejects any asymmetric entry.
    pub fn from_real(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() || m.nrows() == 0 {
            return Err(invalid("matrix must be square and non-empty"));
        }
        let d = m.nrows();
        for i in 0..d {
            for j in 0..i {
                if m[(i, j)] != m[(j, i)] {
                    return Err(Error::NotHermitian { row: i, col: j });
                }
            }
        }
        if m.iter().any(|x| !x.is_finite()) {
            return Err(invalid("matrix has non-finite entries"));
        }
        Ok(HermitianMatrix {
            entries: Entries::Real(m),
            norm_bounded: false,
        })
    }

    /// Complex Hermitian matrix; rejects entries that are not exact mirrored conjugates.
    pub fn from_complex(m: CMatrix) -> Result<Self> {
        if !m.is_square() || m.nrows() == 0 {
            return Err(invalid("matrix must be square and non-empty"));
        }
        let d = m.nrows();
        for i in 0..d {
            for j in 0..=i {
                if m[(i, j)] != m[(j, i)].conj() {
                    return Err(Error::NotHermitian { row: i, col: j });
                }
            }
        }
        if m.iter().any(|x| !x.re.is_finite() || !x.im.is_finite()) {
            return Err(invalid("matrix has non-finite entries"));
        }
        Ok(HermitianMatrix {
            entries: Entries::Complex(m),
            norm_bounded: false,
        })
    }

    /// Symmetrizes `m` as (m + m^†)/2 before construction.
    pub fn symmetrized(m: CMatrix) -> Result<Self> {
        let h = (&m + m.adjoint()).map(|x| x * 0.5);
        let mut h = h;
        for i in 0..h.nrows() {
            h[(i, i)].im = 0.0;
        }
        Self::from_complex(h)
    }

    /// Records the caller's promise that ‖A‖ ≤ 1.
    pub fn assert_norm_bounded(mut self) -> Self {
        self.norm_bounded = true;
        self
    }

    pub fn norm_bounded(&self) -> bool {
        self.norm_bounded
    }

    pub fn dim(&self) -> usize {
        match &self.entries {
            Entries::Real(m) => m.nrows(),
            Entries::Complex(m) => m.nrows(),
        }
    }

    pub fn field(&self) -> Field {
        match &self.entries {
            Entries::Real(_) => Field::Real,
            Entries::Complex(_) => Field::Complex,
        }
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        match &self.entries {
            Entries::Real(m) => C64::new(m[(i, j)], 0.0),
            Entries::Complex(m) => m[(i, j)],
        }
    }

    pub fn as_real(&self) -> Option<&DMatrix<f64>> {
        match &self.entries {
            Entries::Real(m) => Some(m),
            Entries::Complex(_) => None,
        }
    }

    pub fn to_complex(&self) -> CMatrix {
        match &self.entries {
            Entries::Real(m) => m.map(|x| C64::new(x, 0.0)),
            Entries::Complex(m) => m.clone(),
        }
    }

    /// Row `j` as a column vector (entries A_{j,k}).
    pub fn row(&self, j: usize) -> CVector {
        let d = self.dim();
        CVector::from_fn(d, |k, _| self.get(j, k))
    }

    pub fn matvec(&self, v: &CVector) -> CVector {
        match &self.entries {
            Entries::Real(m) => {
                let re = m * v.map(|x| x.re);
                let im = m * v.map(|x| x.im);
                CVector::from_fn(v.len(), |i, _| C64::new(re[i], im[i]))
            }
            Entries::Complex(m) => m * v,
        }
    }

    /// Spectral norm, from the eigenvalues.
    pub fn spectral_norm(&self) -> f64 {
        match &self.entries {
            Entries::Real(m) => m.clone().symmetric_eigenvalues().amax(),
            Entries::Complex(m) => m.clone().symmetric_eigenvalues().amax(),
        }
    }
}

/// Eigenvalues sorted by non-increasing magnitude with orthonormal eigenvectors.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDecomposition {
    pub eigenvalues: DVector<f64>,
    /// Column i is the eigenvector of `eigenvalues[i]`.
    pub eigenvectors: CMatrix,
    pub field: Field,
}

impl SpectralDecomposition {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// |λ_q| − |λ_{q+1}| (1-based q).
    pub fn gap(&self, q: usize) -> f64 {
        assert!(q >= 1 && q < self.dim(), "gap index out of range");
        self.eigenvalues[q - 1].abs() - self.eigenvalues[q].abs()
    }

    pub fn vector(&self, i: usize) -> CVector {
        self.eigenvectors.column(i).into_owned()
    }

    /// Rebuilds VΛV^†.
    pub fn reconstruct(&self) -> CMatrix {
        let v = &self.eigenvectors;
        let scaled = CMatrix::from_fn(v.nrows(), v.ncols(), |i, j| v[(i, j)] * self.eigenvalues[j]);
        scaled * v.adjoint()
    }
}

/// Eigendecomposition with deterministic ordering and eigenvector normalization:
/// |λ| descending, then signed λ descending; each eigenvector has its first
/// non-negligible entry real positive; degenerate eigenspaces get the basis
/// obtained by Gram–Schmidt on the projected standard basis vectors.
pub fn eigendecompose(a: &HermitianMatrix) -> Result<SpectralDecomposition> {
    let d = a.dim();
    let (values, vectors): (Vec<f64>, CMatrix) = match &a.entries {
        Entries::Real(m) => match SymmetricEigen::try_new(m.clone(), f64::EPSILON, 0) {
            Some(e) => (
                e.eigenvalues.iter().copied().collect(),
                e.eigenvectors.map(|x| C64::new(x, 0.0)),
            ),
            None => {
                let (vals, vecs) = jacobi_eigen(m, 1e-14, 100)?;
                (vals.iter().copied().collect(), vecs.map(|x| C64::new(x, 0.0)))
            }
        },
        Entries::Complex(m) => match SymmetricEigen::try_new(m.clone(), f64::EPSILON, 0) {
            Some(e) => (e.eigenvalues.iter().copied().collect(), e.eigenvectors),
            None => {
                return Err(Error::NoConvergence {
                    residual: off_diagonal_residual(m),
                })
            }
        },
    };
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| {
        values[j]
            .abs()
            .total_cmp(&values[i].abs())
            .then(values[j].total_cmp(&values[i]))
    });
    let eigenvalues = DVector::from_iterator(d, order.iter().map(|&i| values[i]));
    let mut eigenvectors = CMatrix::zeros(d, d);
    for (col, &i) in order.iter().enumerate() {
        eigenvectors.set_column(col, &vectors.column(i));
    }
    let scale = eigenvalues.amax().max(1.0);
    let tol = 1e-10 * scale;
    let mut start = 0;
    while start < d {
        let mut end = start + 1;
        while end < d && (eigenvalues[end] - eigenvalues[start]).abs() <= tol {
            end += 1;
        }
        if end - start > 1 {
            canonicalize_block(&mut eigenvectors, start, end);
        } else {
            orient(&mut eigenvectors, start);
        }
        start = end;
    }
    Ok(SpectralDecomposition {
        eigenvalues,
        eigenvectors,
        field: a.field(),
    })
}

fn off_diagonal_residual(m: &CMatrix) -> f64 {
    let mut s = 0.0;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if i != j {
                s += m[(i, j)].norm_sqr();
            }
        }
    }
    s.sqrt()
}

fn orient(v: &mut CMatrix, col: usize) {
    let d = v.nrows();
    if let Some(k) = (0..d).find(|&k| v[(k, col)].norm() > 1e-9) {
        let phase = v[(k, col)].conj() / v[(k, col)].norm();
        for r in 0..d {
            v[(r, col)] *= phase;
        }
    }
}

fn canonicalize_block(v: &mut CMatrix, start: usize, end: usize) {
    let d = v.nrows();
    let block = v.columns(start, end - start).into_owned();
    let proj = &block * block.adjoint();
    let mut basis: Vec<CVector> = Vec::new();
    for k in 0..d {
        if basis.len() == end - start {
            break;
        }
        let mut x = proj.column(k).into_owned();
        for b in &basis {
            let c = b.dotc(&x);
            x -= b * c;
        }
        let n = x.norm();
        if n > 1e-6 {
            basis.push(x / C64::new(n, 0.0));
        }
    }
    for (i, b) in basis.iter().enumerate() {
        v.set_column(start + i, b);
        orient(v, start + i);
    }
}

/// Cyclic Jacobi eigenvalue iteration for real symmetric matrices
/// (unsorted output). Used as an independent oracle and as a fallback.
pub fn jacobi_eigen(a: &DMatrix<f64>, tol: f64, max_sweeps: usize) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let n = a.nrows();
    let mut m = a.clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    let frob = m.norm().max(f64::MIN_POSITIVE);
    for _ in 0..max_sweeps {
        let mut off = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    off += m[(i, j)] * m[(i, j)];
                }
            }
        }
        if off.sqrt() <= tol * frob {
            return Ok((m.diagonal(), v));
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[(p, q)];
                if apq.abs() < f64::MIN_POSITIVE {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut off = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                off += m[(i, j)] * m[(i, j)];
            }
        }
    }
    if off.sqrt() <= tol * frob {
        Ok((m.diagonal(), v))
    } else {
        Err(Error::NoConvergence { residual: off.sqrt() })
    }
}

/// Which spectral quantity `project_above` thresholds. For a Hermitian
/// decomposition both coincide: singular values are the |λ_i| and the left
/// singular vectors are the eigenvectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProjectMode {
    Singular,
    EigenAbs,
}

/// Σ_{|λ_i| > threshold} v_i v_i^†.
pub fn project_above(dec: &SpectralDecomposition, threshold: f64, _mode: ProjectMode) -> Result<CMatrix> {
    if !(threshold >= 0.0) {
        return Err(invalid("threshold must be non-negative"));
    }
    let d = dec.dim();
    let cols: Vec<usize> = (0..d).filter(|&i| dec.eigenvalues[i].abs() > threshold).collect();
    Ok(projector_from_columns(&dec.eigenvectors, &cols))
}

/// Orthogonal projector onto the span of the selected orthonormal columns.
pub fn projector_from_columns(v: &CMatrix, cols: &[usize]) -> CMatrix {
    let d = v.nrows();
    let mut w = CMatrix::zeros(d, cols.len());
    for (k, &c) in cols.iter().enumerate() {
        w.set_column(k, &v.column(c));
    }
    &w * w.adjoint()
}

/// Singular values in non-increasing order.
pub fn singular_values(m: &CMatrix) -> Vec<f64> {
    let mut s: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Operator (spectral) norm.
pub fn op_norm(m: &CMatrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    singular_values(m).first().copied().unwrap_or(0.0)
}

/// Trace norm (sum of singular values).
pub fn trace_norm(m: &CMatrix) -> f64 {
    singular_values(m).iter().sum()
}

/// Left singular vectors of `m` whose singular value exceeds `threshold`
/// (or is at least `threshold` when `inclusive`), as orthonormal columns.
pub fn left_singular_above(m: &CMatrix, threshold: f64, inclusive: bool) -> CMatrix {
    let d = m.nrows();
    if m.ncols() == 0 {
        return CMatrix::zeros(d, 0);
    }
    let svd = m.clone().svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let keep: Vec<usize> = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, &s)| if inclusive { s >= threshold } else { s > threshold })
        .map(|(i, _)| i)
        .collect();
    let mut w = CMatrix::zeros(d, keep.len());
    for (k, &i) in keep.iter().enumerate() {
        w.set_column(k, &u.column(i));
    }
    w
}

/// Π^m_{>threshold} (or Π^m_{≥threshold}): projector onto the selected left singular vectors.
pub fn singular_projector(m: &CMatrix, threshold: f64, inclusive: bool) -> CMatrix {
    let w = left_singular_above(m, threshold, inclusive);
    &w * w.adjoint()
}

fn normal(rng: &mut Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Standard complex normal: independent real and imaginary parts of variance 1/2.
pub fn complex_normal(rng: &mut Rng) -> C64 {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    C64::new(h * normal(rng), h * normal(rng))
}

/// Symmetric Gaussian matrix G_{ij} = b_{ij} g_{ij} with i.i.d. g on the upper triangle.
pub fn gen_symmetric_gaussian(b: &DMatrix<f64>, rng: &mut Rng) -> Result<HermitianMatrix> {
    let d = b.nrows();
    if !b.is_square() || d == 0 {
        return Err(invalid("scale grid must be square"));
    }
    for i in 0..d {
        for j in 0..=i {
            if b[(i, j)] != b[(j, i)] || b[(i, j)] < 0.0 {
                return Err(invalid("scale grid must be symmetric and non-negative"));
            }
        }
    }
    let mut g = DMatrix::<f64>::zeros(d, d);
    for i in 0..d {
        for j in i..d {
            let x = b[(i, j)] * normal(rng);
            g[(i, j)] = x;
            g[(j, i)] = x;
        }
    }
    HermitianMatrix::from_real(g)
}

/// GOE-style draw with unit off-diagonal variance, used by tests and benches.
pub fn gen_goe(d: usize, rng: &mut Rng) -> HermitianMatrix {
    gen_symmetric_gaussian(&DMatrix::from_element(d, d, 1.0), rng).expect("all-ones grid is valid")
}

/// N×n matrix of i.i.d. standard (real or complex) normal entries.
pub fn gen_gaussian_rect(rows: usize, cols: usize, field: Field, rng: &mut Rng) -> Result<CMatrix> {
    if rows < cols || cols == 0 {
        return Err(invalid("need rows >= cols >= 1"));
    }
    Ok(gaussian_matrix(rows, cols, field, rng))
}

/// Gaussian matrix without the tall-shape precondition.
pub fn gaussian_matrix(rows: usize, cols: usize, field: Field, rng: &mut Rng) -> CMatrix {
    let mut m = CMatrix::zeros(rows, cols);
    // column-major fill keeps the draw order independent of storage details
    for j in 0..cols {
        for i in 0..rows {
            m[(i, j)] = match field {
                Field::Real => C64::new(normal(rng), 0.0),
                Field::Complex => complex_normal(rng),
            };
        }
    }
    m
}

/// Uniform point on the real unit sphere S^{d−1}.
pub fn random_unit_vector(d: usize, rng: &mut Rng) -> CVector {
    loop {
        let v = CVector::from_fn(d, |_, _| C64::new(normal(rng), 0.0));
        let n = v.norm();
        if n > 0.0 {
            return v / C64::new(n, 0.0);
        }
    }
}

/// The planted-sign instance A = uuᵀ/d + N.
#[derive(Debug, Clone)]
pub struct HardInstance {
    pub d: usize,
    pub u: Vec<i8>,
    pub noise_sigma: f64,
    pub matrix: HermitianMatrix,
    pub seed: u64,
}

#[derive(Serialize, Deserialize)]
struct HardInstanceSidecar {
    d: usize,
    seed: u64,
    u: Vec<i8>,
}

/// Draws the planted-sign instance with noise N_{ij} ~ N(0, 1/(4·10⁶ d)).
pub fn gen_hard_instance(d: usize, seed: u64) -> Result<HardInstance> {
    if d < 4 {
        return Err(invalid("hard instance needs d >= 4"));
    }
    let mut rng = crate::rng::labeled_stream(seed, "hard-instance", 0);
    let u: Vec<i8> = (0..d).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect();
    let sigma = 1.0 / (2000.0 * (d as f64).sqrt());
    let inv_d = 1.0 / d as f64;
    let mut a = DMatrix::<f64>::zeros(d, d);
    for i in 0..d {
        for j in i..d {
            let x = (u[i] * u[j]) as f64 * inv_d + sigma * normal(&mut rng);
            a[(i, j)] = x;
            a[(j, i)] = x;
        }
    }
    Ok(HardInstance {
        d,
        u,
        noise_sigma: sigma,
        matrix: HermitianMatrix::from_real(a)?,
        seed,
    })
}

impl HardInstance {
    /// The planted unit vector u/√d.
    pub fn planted(&self) -> CVector {
        let s = 1.0 / (self.d as f64).sqrt();
        CVector::from_fn(self.d, |i, _| C64::new(self.u[i] as f64 * s, 0.0))
    }

    /// The noise matrix N = A − uuᵀ/d.
    pub fn noise(&self) -> DMatrix<f64> {
        let a = self.matrix.as_real().expect("hard instance is real");
        let inv_d = 1.0 / self.d as f64;
        DMatrix::from_fn(self.d, self.d, |i, j| {
            a[(i, j)] - (self.u[i] * self.u[j]) as f64 * inv_d
        })
    }

    pub fn save(&self, matrix_path: &Path, sidecar_path: &Path) -> Result<()> {
        write_matrix_csv(&self.matrix, matrix_path)?;
        let side = HardInstanceSidecar {
            d: self.d,
            seed: self.seed,
            u: self.u.clone(),
        };
        std::fs::write(sidecar_path, serde_json::to_string(&side)?)?;
        Ok(())
    }

    pub fn load(matrix_path: &Path, sidecar_path: &Path) -> Result<Self> {
        let matrix = read_matrix_csv(matrix_path)?;
        let side: HardInstanceSidecar = serde_json::from_str(&std::fs::read_to_string(sidecar_path)?)?;
        if side.d != matrix.dim() || side.u.len() != side.d {
            return Err(Error::DimensionMismatch {
                expected: side.d,
                got: matrix.dim(),
            });
        }
        Ok(HardInstance {
            d: side.d,
            noise_sigma: 1.0 / (2000.0 * (side.d as f64).sqrt()),
            u: side.u,
            matrix,
            seed: side.seed,
        })
    }
}

/// Row-major CSV with a `dim=<d>,field=<real|complex>` header; complex entries
/// are written as interleaved `re,im` pairs.
pub fn matrix_to_csv(a: &HermitianMatrix) -> String {
    let d = a.dim();
    let mut out = format!("dim={d},field={}\n", a.field().as_str());
    for i in 0..d {
        let mut line = String::new();
        for j in 0..d {
            if j > 0 {
                line.push(',');
            }
            let x = a.get(i, j);
            match a.field() {
                Field::Real => write!(line, "{}", x.re).unwrap(),
                Field::Complex => write!(line, "{},{}", x.re, x.im).unwrap(),
            }
        }
        out.push_str(&line);
        out.push('\n');
    }
    out
}

pub fn matrix_from_csv(text: &str) -> Result<HermitianMatrix> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::Parse("empty matrix file".into()))?;
    let mut dim = None;
    let mut field = None;
    for part in header.split(',') {
        match part.split_once('=') {
            Some(("dim", v)) => dim = v.trim().parse::<usize>().ok(),
            Some(("field", "real")) => field = Some(Field::Real),
            Some(("field", "complex")) => field = Some(Field::Complex),
            _ => return Err(Error::Parse(format!("bad header field `{part}`"))),
        }
    }
    let (d, field) = match (dim, field) {
        (Some(d), Some(f)) => (d, f),
        _ => return Err(Error::Parse("header needs dim and field".into())),
    };
    let per = if field == Field::Real { 1 } else { 2 };
    let mut m = CMatrix::zeros(d, d);
    for i in 0..d {
        let line = lines.next().ok_or_else(|| Error::Parse(format!("missing row {i}")))?;
        let vals: Vec<f64> = line
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("row {i}: {e}")))
            })
            .collect::<Result<_>>()?;
        if vals.len() != d * per {
            return Err(Error::Parse(format!(
                "row {i} has {} values, expected {}",
                vals.len(),
                d * per
            )));
        }
        for j in 0..d {
            m[(i, j)] = if per == 1 {
                C64::new(vals[j], 0.0)
            } else {
                C64::new(vals[2 * j], vals[2 * j + 1])
            };
        }
    }
    match field {
        Field::Real => HermitianMatrix::from_real(m.map(|x| x.re)),
        Field::Complex => HermitianMatrix::from_complex(m),
    }
}

pub fn write_matrix_csv(a: &HermitianMatrix, path: &Path) -> Result<()> {
    std::fs::write(path, matrix_to_csv(a))?;
    Ok(())
}

pub fn read_matrix_csv(path: &Path) -> Result<HermitianMatrix> {
    matrix_from_csv(&std::fs::read_to_string(path)?)
}

/// Diagonal real matrix helper.
pub fn diagonal(values: &[f64]) -> HermitianMatrix {
    HermitianMatrix::from_real(DMatrix::from_diagonal(&DVector::from_column_slice(values)))
        .expect("diagonal matrices are symmetric")
}

/// Real symmetric matrix with prescribed spectrum and a random orthogonal eigenbasis.
pub fn with_spectrum(values: &[f64], rng: &mut Rng) -> HermitianMatrix {
    let d = values.len();
    let g = gaussian_matrix(d, d, Field::Real, rng).map(|x| x.re);
    let q = g.qr().q();
    let lam = DMatrix::from_diagonal(&DVector::from_column_slice(values));
    let a = &q * lam * q.transpose();
    let sym = DMatrix::from_fn(d, d, |i, j| if i <= j { a[(i, j)] } else { a[(j, i)] });
    HermitianMatrix::from_real(sym).expect("symmetrized")
}
