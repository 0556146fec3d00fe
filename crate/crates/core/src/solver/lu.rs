use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::sparse::{SparseColMatRef, SymbolicSparseColMatRef};
use faer::MatMut;

use crate::error::{Error, Result};
use crate::sparse::SparseMatrix;

/// Relative residual every direct solve must reach.
pub const SOLVE_TOLERANCE: f64 = 1e-10;
const MAX_REFINEMENT_STEPS: usize = 3;

/// Column-compressed copy of a [`SparseMatrix`] in the layout faer expects.
struct Csc {
    n: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<f64>,
}

impl Csc {
    fn from_csr(a: &SparseMatrix) -> Self {
        // the CSR arrays of A^T are the CSC arrays of A
        let t = a.transpose();
        Self {
            n: a.nrows(),
            col_ptr: t.row_ptr().to_vec(),
            row_idx: t.col_idx().to_vec(),
            values: t.values().to_vec(),
        }
    }

    fn symbolic(&self) -> SymbolicSparseColMatRef<'_, usize> {
        SymbolicSparseColMatRef::new_checked(self.n, self.n, &self.col_ptr, None, &self.row_idx)
    }
}

/// Sparse LU factors of a square matrix (fill-reducing ordering plus
/// partial pivoting), with the symbolic analysis kept for reuse.
pub struct LuFactorization {
    n: usize,
    symbolic: SymbolicLu<usize>,
    pattern: (Vec<usize>, Vec<usize>),
    lu: Lu<usize, f64>,
}

impl std::fmt::Debug for LuFactorization {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LuFactorization").field("n", &self.n).finish_non_exhaustive()
    }
}

impl LuFactorization {
    pub fn new(a: &SparseMatrix) -> Result<Self> {
        Self::with_previous(a, None)
    }

    /// Factorizes `a`, reusing the symbolic analysis of `previous` when the
    /// sparsity patterns coincide.
    pub fn with_previous(a: &SparseMatrix, previous: Option<&LuFactorization>) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::Dimension {
                context: "LU factorization (square matrix)",
                expected: a.nrows(),
                actual: a.ncols(),
            });
        }
        let n = a.nrows();
        let csc = Csc::from_csr(a);
        let singular = |detail: String| Error::Singular { n, detail };
        let reuse = previous.filter(|p| p.pattern.0 == csc.col_ptr && p.pattern.1 == csc.row_idx);
        let symbolic = match reuse {
            Some(p) => p.symbolic.clone(),
            None => SymbolicLu::try_new(csc.symbolic()).map_err(|e| singular(format!("symbolic analysis: {e:?}")))?,
        };
        let mat = SparseColMatRef::new(csc.symbolic(), &csc.values);
        let lu = Lu::try_new_with_symbolic(symbolic.clone(), mat)
            .map_err(|e| singular(format!("numeric factorization: {e:?}")))?;
        Ok(Self {
            n,
            symbolic,
            pattern: (csc.col_ptr, csc.row_idx),
            lu,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        assert_eq!(b.len(), self.n, "right-hand side length");
        let rhs = MatMut::from_column_major_slice_mut(b, self.n, 1);
        self.lu.solve_in_place(rhs);
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn residual(a: &SparseMatrix, x: &[f64], b: &[f64]) -> Vec<f64> {
    let mut r = b.to_vec();
    a.mul_vec_acc(-1.0, x, &mut r);
    r
}

/// Solves with existing factors of `a`, refining iteratively until the
/// relative residual reaches [`SOLVE_TOLERANCE`].
pub fn solve_refined(a: &SparseMatrix, lu: &LuFactorization, b: &[f64]) -> Result<Vec<f64>> {
    if b.len() != a.nrows() {
        return Err(Error::Dimension {
            context: "linear solve right-hand side",
            expected: a.nrows(),
            actual: b.len(),
        });
    }
    let bnorm = norm(b);
    if bnorm == 0.0 {
        return Ok(vec![0.0; b.len()]);
    }
    let mut x = lu.solve(b);
    let mut rel = f64::INFINITY;
    for _ in 0..=MAX_REFINEMENT_STEPS {
        let r = residual(a, &x, b);
        rel = norm(&r) / bnorm;
        if !rel.is_finite() {
            break;
        }
        if rel <= SOLVE_TOLERANCE {
            return Ok(x);
        }
        let dx = lu.solve(&r);
        x.iter_mut().zip(&dx).for_each(|(x, d)| *x += d);
    }
    Err(Error::Singular {
        n: a.nrows(),
        detail: format!(
            "relative residual {rel:.3e} above {SOLVE_TOLERANCE:e}; the system is singular or \
             numerically so (eps = 0 or missing boundary constraints are the usual causes)"
        ),
    })
}

/// Direct solve of `a x = b` with residual check.
pub fn linear_solve(a: &SparseMatrix, b: &[f64]) -> Result<Vec<f64>> {
    let lu = LuFactorization::new(a)?;
    solve_refined(a, &lu, b)
}
