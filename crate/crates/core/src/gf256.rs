//! GF(2^8) arithmetic and dense linear algebra over it.
//!
//! The field is built on the primitive polynomial x^8 + x^4 + x^3 + x^2 + 1
//! (0x11D) with generator 2. Addition is XOR. Multiplication goes through a
//! 256x256 product table built once from the log/antilog tables, so the
//! slice kernels used on 1000-byte symbols are a single lookup per byte.

use std::fmt;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Sub};
use std::sync::LazyLock;

use thiserror::Error;

/// Full primitive polynomial, including the x^8 term.
pub const PRIMITIVE_POLY: u16 = 0x11D;

const fn build_exp() -> [u8; 512] {
    let mut exp = [0u8; 512];
    let mut x: u16 = 1;
    let mut i = 0;
    while i < 255 {
        exp[i] = x as u8;
        exp[i + 255] = x as u8;
        x <<= 1;
        if x & 0x100 != 0 {
            x ^= PRIMITIVE_POLY;
        }
        i += 1;
    }
    exp[510] = exp[0];
    exp
}

const fn build_log() -> [u8; 256] {
    let exp = build_exp();
    let mut log = [0u8; 256];
    let mut i = 0;
    while i < 255 {
        log[exp[i] as usize] = i as u8;
        i += 1;
    }
    log
}

static EXP: [u8; 512] = build_exp();
static LOG: [u8; 256] = build_log();

static MUL_TABLE: LazyLock<Box<[[u8; 256]; 256]>> = LazyLock::new(|| {
    let mut table = Box::new([[0u8; 256]; 256]);
    for a in 1..256usize {
        for b in 1..256usize {
            table[a][b] = EXP[LOG[a] as usize + LOG[b] as usize];
        }
    }
    table
});

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GfError {
    #[error("zero has no multiplicative inverse in GF(256)")]
    ZeroInverse,
}

#[inline]
pub fn gf_add(a: u8, b: u8) -> u8 {
    a ^ b
}

#[inline]
pub fn gf_mul(a: u8, b: u8) -> u8 {
    MUL_TABLE[a as usize][b as usize]
}

pub fn gf_inv(a: u8) -> Result<u8, GfError> {
    if a == 0 {
        return Err(GfError::ZeroInverse);
    }
    Ok(EXP[255 - LOG[a as usize] as usize])
}

/// `a` raised to `e` by repeated table multiplication.
pub fn gf_pow(a: u8, e: u32) -> u8 {
    if e == 0 {
        return 1;
    }
    if a == 0 {
        return 0;
    }
    let l = (LOG[a as usize] as u64 * e as u64) % 255;
    EXP[l as usize]
}

/// The row of the product table for a fixed multiplier.
#[inline]
pub fn mul_row(c: u8) -> &'static [u8; 256] {
    &MUL_TABLE[c as usize]
}

/// `dst[i] ^= c * src[i]` for every byte position.
///
/// `dst` and `src` must have the same length.
pub fn mul_add_slice(dst: &mut [u8], src: &[u8], c: u8) {
    debug_assert_eq!(dst.len(), src.len());
    match c {
        0 => {}
        1 => {
            for (d, s) in dst.iter_mut().zip(src) {
                *d ^= *s;
            }
        }
        _ => {
            let row = mul_row(c);
            for (d, s) in dst.iter_mut().zip(src) {
                *d ^= row[*s as usize];
            }
        }
    }
}

/// `buf[i] = c * buf[i]` for every byte position.
pub fn mul_slice_in_place(buf: &mut [u8], c: u8) {
    if c == 1 {
        return;
    }
    let row = mul_row(c);
    for b in buf.iter_mut() {
        *b = row[*b as usize];
    }
}

/// A field element. Thin wrapper so matrix code reads as algebra.
#[derive(Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FieldElement(pub u8);

impl FieldElement {
    pub const ZERO: FieldElement = FieldElement(0);
    pub const ONE: FieldElement = FieldElement(1);

    pub fn inv(self) -> Result<FieldElement, GfError> {
        gf_inv(self.0).map(FieldElement)
    }

    pub fn pow(self, e: u32) -> FieldElement {
        FieldElement(gf_pow(self.0, e))
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0
    }
}

impl fmt::Debug for FieldElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#04x}", self.0)
    }
}

impl From<u8> for FieldElement {
    fn from(v: u8) -> Self {
        FieldElement(v)
    }
}

impl Add for FieldElement {
    type Output = FieldElement;
    fn add(self, rhs: FieldElement) -> FieldElement {
        FieldElement(self.0 ^ rhs.0)
    }
}

impl AddAssign for FieldElement {
    fn add_assign(&mut self, rhs: FieldElement) {
        self.0 ^= rhs.0;
    }
}

// Subtraction and addition coincide in characteristic 2.
impl Sub for FieldElement {
    type Output = FieldElement;
    fn sub(self, rhs: FieldElement) -> FieldElement {
        FieldElement(self.0 ^ rhs.0)
    }
}

impl Mul for FieldElement {
    type Output = FieldElement;
    fn mul(self, rhs: FieldElement) -> FieldElement {
        FieldElement(gf_mul(self.0, rhs.0))
    }
}

impl MulAssign for FieldElement {
    fn mul_assign(&mut self, rhs: FieldElement) {
        self.0 = gf_mul(self.0, rhs.0);
    }
}

impl Div for FieldElement {
    type Output = FieldElement;
    /// Panics on division by zero, like integer division.
    fn div(self, rhs: FieldElement) -> FieldElement {
        self * rhs.inv().expect("division by zero in GF(256)")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SolveError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    /// Indices (0-based) of the unknowns the system does not pin down.
    #[error("rank-deficient system; undetermined unknowns {undetermined:?}")]
    RankDeficient { undetermined: Vec<usize> },
}

/// Row-major dense matrix over GF(256).
#[derive(Clone, PartialEq, Eq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    cells: Vec<u8>,
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{}", self.rows, self.cols)?;
        for r in 0..self.rows {
            writeln!(f, "  {:02x?}", self.row(r))?;
        }
        Ok(())
    }
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            cells: vec![0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1);
        }
        m
    }

    pub fn from_rows(rows: &[Vec<u8>]) -> Result<Self, SolveError> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(SolveError::DimensionMismatch(
                "rows have different lengths".into(),
            ));
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            cells: rows.concat(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> u8 {
        self.cells[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: u8) {
        self.cells[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[u8] {
        &self.cells[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [u8] {
        &mut self.cells[r * self.cols..(r + 1) * self.cols]
    }

    /// New matrix made of the given rows of `self`, in order.
    pub fn select_rows(&self, idx: &[usize]) -> Matrix {
        let mut cells = Vec::with_capacity(idx.len() * self.cols);
        for &r in idx {
            cells.extend_from_slice(self.row(r));
        }
        Matrix {
            rows: idx.len(),
            cols: self.cols,
            cells,
        }
    }

    pub fn mul(&self, other: &Matrix) -> Result<Matrix, SolveError> {
        if self.cols != other.rows {
            return Err(SolveError::DimensionMismatch(format!(
                "{}x{} times {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(r, k);
                if a != 0 {
                    let src = other.row(k).to_vec();
                    mul_add_slice(out.row_mut(r), &src, a);
                }
            }
        }
        Ok(out)
    }

    /// Inverse of a square matrix by Gauss-Jordan elimination.
    pub fn invert(&self) -> Result<Matrix, SolveError> {
        if self.rows != self.cols {
            return Err(SolveError::DimensionMismatch(format!(
                "cannot invert {}x{}",
                self.rows, self.cols
            )));
        }
        let n = self.rows;
        let mut work = self.clone();
        let mut inv = Matrix::identity(n);
        let reduced = eliminate(&mut work, |a, b, c| {
            // mirror every row operation on the right-hand identity
            match (a, b) {
                (RowOp::Swap, Some(other)) => swap_rows(&mut inv, c, other),
                (RowOp::Scale(s), None) => mul_slice_in_place(inv.row_mut(c), s),
                (RowOp::AddScaled(s), Some(from)) => {
                    let src = inv.row(from).to_vec();
                    mul_add_slice(inv.row_mut(c), &src, s);
                }
                _ => unreachable!(),
            }
        });
        if reduced.rank < n {
            return Err(SolveError::RankDeficient {
                undetermined: reduced.undetermined(&work),
            });
        }
        Ok(inv)
    }

    /// Rank by elimination on a copy.
    pub fn rank(&self) -> usize {
        let mut work = self.clone();
        eliminate(&mut work, |_, _, _| {}).rank
    }
}

fn swap_rows(m: &mut Matrix, a: usize, b: usize) {
    if a == b {
        return;
    }
    let cols = m.cols;
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    let (head, tail) = m.cells.split_at_mut(hi * cols);
    head[lo * cols..(lo + 1) * cols].swap_with_slice(&mut tail[..cols]);
}

enum RowOp {
    Swap,
    Scale(u8),
    AddScaled(u8),
}

struct Reduced {
    rank: usize,
    /// pivot column of each of the first `rank` rows
    pivots: Vec<usize>,
}

impl Reduced {
    /// Unknowns not uniquely fixed by a reduced row-echelon matrix: free
    /// columns, plus pivot columns whose row still references a free column.
    fn undetermined(&self, rref: &Matrix) -> Vec<usize> {
        let is_pivot = {
            let mut v = vec![false; rref.cols];
            for &p in &self.pivots {
                v[p] = true;
            }
            v
        };
        let mut out = Vec::new();
        for c in 0..rref.cols {
            if !is_pivot[c] {
                out.push(c);
                continue;
            }
            let r = self.pivots.iter().position(|&p| p == c).unwrap();
            if (0..rref.cols).any(|fc| !is_pivot[fc] && rref.get(r, fc) != 0) {
                out.push(c);
            }
        }
        out
    }
}

/// In-place Gauss-Jordan elimination to reduced row-echelon form.
///
/// Pivots are taken as the first nonzero entry at or below the current row
/// (lowest row index wins). `on_op(op, other_row, row)` is called for every
/// row operation so callers can replay it on an augmented right-hand side.
fn eliminate(m: &mut Matrix, mut on_op: impl FnMut(RowOp, Option<usize>, usize)) -> Reduced {
    let mut pivots = Vec::new();
    let mut row = 0;
    for col in 0..m.cols {
        if row == m.rows {
            break;
        }
        let Some(p) = (row..m.rows).find(|&r| m.get(r, col) != 0) else {
            continue;
        };
        if p != row {
            swap_rows(m, p, row);
            on_op(RowOp::Swap, Some(p), row);
        }
        let inv = gf_inv(m.get(row, col)).expect("pivot is nonzero");
        if inv != 1 {
            mul_slice_in_place(m.row_mut(row), inv);
            on_op(RowOp::Scale(inv), None, row);
        }
        let pivot_row = m.row(row).to_vec();
        for r in 0..m.rows {
            if r == row {
                continue;
            }
            let f = m.get(r, col);
            if f != 0 {
                mul_add_slice(m.row_mut(r), &pivot_row, f);
                on_op(RowOp::AddScaled(f), Some(row), r);
            }
        }
        pivots.push(col);
        row += 1;
    }
    Reduced {
        rank: pivots.len(),
        pivots,
    }
}

/// Solve `coeffs * x = rhs` where each unknown and each right-hand side is a
/// byte vector and row operations are applied symbol-wise.
///
/// Over-determined systems are accepted as long as the coefficient matrix
/// has full column rank; rows beyond the rank are ignored.
pub fn solve_linear_system(coeffs: &Matrix, rhs: &[Vec<u8>]) -> Result<Vec<Vec<u8>>, SolveError> {
    if coeffs.rows() != rhs.len() {
        return Err(SolveError::DimensionMismatch(format!(
            "{} equations but {} right-hand sides",
            coeffs.rows(),
            rhs.len()
        )));
    }
    let len = rhs.first().map_or(0, Vec::len);
    if rhs.iter().any(|v| v.len() != len) {
        return Err(SolveError::DimensionMismatch(
            "right-hand sides differ in length".into(),
        ));
    }
    // Rank check on the coefficients alone before touching the payloads.
    let mut probe = coeffs.clone();
    let reduced = eliminate(&mut probe, |_, _, _| {});
    if reduced.rank < coeffs.cols() {
        return Err(SolveError::RankDeficient {
            undetermined: reduced.undetermined(&probe),
        });
    }

    let mut work = coeffs.clone();
    let mut rhs: Vec<Vec<u8>> = rhs.to_vec();
    let reduced = eliminate(&mut work, |op, other, r| match (op, other) {
        (RowOp::Swap, Some(o)) => rhs.swap(o, r),
        (RowOp::Scale(s), None) => mul_slice_in_place(&mut rhs[r], s),
        (RowOp::AddScaled(s), Some(from)) => {
            let (dst, src) = pick_two(&mut rhs, r, from);
            mul_add_slice(dst, src, s);
        }
        _ => unreachable!(),
    });
    rhs.truncate(reduced.rank);
    Ok(rhs)
}

fn pick_two(v: &mut [Vec<u8>], dst: usize, src: usize) -> (&mut [u8], &[u8]) {
    assert_ne!(dst, src);
    if dst < src {
        let (a, b) = v.split_at_mut(src);
        (&mut a[dst], &b[0])
    } else {
        let (a, b) = v.split_at_mut(dst);
        (&mut b[0], &a[src])
    }
}
