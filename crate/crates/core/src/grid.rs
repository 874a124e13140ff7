//! Uniform node-centred grid over the square tissue and scalar fields on it.

use crate::error::{ModelError, ModelResult};
use crate::scalar::Real;

/// Uniform rectangular grid of `m1 × m2` nodes covering `[0, L] × [0, L]`.
///
/// Node `(i, j)` sits at `(i·dx, j·dy)`; `i` runs along x (the electrode
/// axis), `j` along y.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid2D<S> {
    m1: usize,
    m2: usize,
    dx: S,
    dy: S,
    l: S,
}

impl<S: Real> Grid2D<S> {
    pub fn new(m1: usize, m2: usize, l: S) -> ModelResult<Self> {
        if m1 < 3 || m2 < 3 {
            return Err(ModelError::OutOfRange {
                name: "M1/M2",
                value: m1.min(m2) as f64,
                expected: "at least 3 nodes per direction",
            });
        }
        if !(l > S::zero()) {
            return Err(ModelError::NonPositive {
                name: "L",
                value: l.to_f64_lossy(),
            });
        }
        Ok(Self {
            m1,
            m2,
            dx: l / S::from_count((m1 - 1) as u64),
            dy: l / S::from_count((m2 - 1) as u64),
            l,
        })
    }

    pub fn m1(&self) -> usize {
        self.m1
    }

    pub fn m2(&self) -> usize {
        self.m2
    }

    pub fn dx(&self) -> S {
        self.dx
    }

    pub fn dy(&self) -> S {
        self.dy
    }

    pub fn side(&self) -> S {
        self.l
    }

    pub fn len(&self) -> usize {
        self.m1 * self.m2
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.m1 + i
    }

    pub fn x(&self, i: usize) -> S {
        S::from_count(i as u64) * self.dx
    }

    pub fn y(&self, j: usize) -> S {
        S::from_count(j as u64) * self.dy
    }

    /// Column index of the node closest to `x`.
    pub fn nearest_column(&self, x: S) -> usize {
        nearest(x / self.dx, self.m1)
    }

    /// Row index of the node closest to `y`.
    pub fn nearest_row(&self, y: S) -> usize {
        nearest(y / self.dy, self.m2)
    }

    pub fn contains(&self, x: S, y: S) -> bool {
        x >= S::zero() && x <= self.l && y >= S::zero() && y <= self.l
    }

    /// Trapezoidal quadrature weight of node `(i, j)` in units of dx·dy.
    #[inline]
    pub fn weight(&self, i: usize, j: usize) -> S {
        let half = S::lit(0.5);
        let wx = if i == 0 || i + 1 == self.m1 {
            half
        } else {
            S::one()
        };
        let wy = if j == 0 || j + 1 == self.m2 {
            half
        } else {
            S::one()
        };
        wx * wy
    }
}

fn nearest<S: Real>(scaled: S, count: usize) -> usize {
    let r = scaled.round().to_f64_lossy();
    if r <= 0.0 {
        0
    } else {
        (r as usize).min(count - 1)
    }
}

/// Real-valued field stored row-major (`j` outer, `i` inner).
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField<S> {
    m1: usize,
    m2: usize,
    data: Vec<S>,
}

impl<S: Real> ScalarField<S> {
    pub fn filled(grid: &Grid2D<S>, value: S) -> Self {
        Self {
            m1: grid.m1(),
            m2: grid.m2(),
            data: vec![value; grid.len()],
        }
    }

    pub fn from_fn(grid: &Grid2D<S>, mut f: impl FnMut(usize, usize) -> S) -> Self {
        let mut data = Vec::with_capacity(grid.len());
        for j in 0..grid.m2() {
            for i in 0..grid.m1() {
                data.push(f(i, j));
            }
        }
        Self {
            m1: grid.m1(),
            m2: grid.m2(),
            data,
        }
    }

    pub fn m1(&self) -> usize {
        self.m1
    }

    pub fn m2(&self) -> usize {
        self.m2
    }

    pub fn matches(&self, grid: &Grid2D<S>) -> bool {
        self.m1 == grid.m1() && self.m2 == grid.m2()
    }

    pub(crate) fn check(&self, grid: &Grid2D<S>, what: &str) -> ModelResult<()> {
        if self.matches(grid) {
            Ok(())
        } else {
            Err(ModelError::GridMismatch(format!(
                "{what} is {}x{}, grid is {}x{}",
                self.m1,
                self.m2,
                grid.m1(),
                grid.m2()
            )))
        }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> S {
        self.data[j * self.m1 + i]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: S) {
        self.data[j * self.m1 + i] = value;
    }

    pub fn as_slice(&self) -> &[S] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [S] {
        &mut self.data
    }

    /// Values along row `j` (fixed y), ordered by increasing x.
    pub fn row(&self, j: usize) -> &[S] {
        &self.data[j * self.m1..(j + 1) * self.m1]
    }

    /// Values along column `i` (fixed x), ordered by increasing y.
    pub fn column(&self, i: usize) -> Vec<S> {
        (0..self.m2).map(|j| self.get(i, j)).collect()
    }

    pub fn max(&self) -> S {
        self.data.iter().copied().fold(S::neg_infinity(), S::max)
    }

    pub fn min(&self) -> S {
        self.data.iter().copied().fold(S::infinity(), S::min)
    }

    /// Arithmetic mean over all nodes.
    pub fn mean(&self) -> S {
        let sum = self.data.iter().copied().fold(S::zero(), |a, b| a + b);
        sum / S::from_count(self.data.len() as u64)
    }

    /// Trapezoidal integral over the domain (units of value·mm²).
    pub fn integral(&self, grid: &Grid2D<S>) -> S {
        let mut total = S::zero();
        for j in 0..self.m2 {
            for i in 0..self.m1 {
                total = total + grid.weight(i, j) * self.get(i, j);
            }
        }
        total * grid.dx() * grid.dy()
    }

    /// Fraction of nodes whose value is strictly above `threshold`.
    pub fn fraction_above(&self, threshold: S) -> S {
        let count = self.data.iter().filter(|&&v| v > threshold).count();
        S::from_count(count as u64) / S::from_count(self.data.len() as u64)
    }

    /// Bilinear interpolation at `(x, y)`; exact at nodes.
    pub fn sample(&self, grid: &Grid2D<S>, x: S, y: S) -> S {
        let (i0, fx) = cell(x / grid.dx(), self.m1);
        let (j0, fy) = cell(y / grid.dy(), self.m2);
        let one = S::one();
        let v00 = self.get(i0, j0);
        let v10 = self.get(i0 + 1, j0);
        let v01 = self.get(i0, j0 + 1);
        let v11 = self.get(i0 + 1, j0 + 1);
        if fx == S::zero() && fy == S::zero() {
            return v00;
        }
        (one - fy) * ((one - fx) * v00 + fx * v10) + fy * ((one - fx) * v01 + fx * v11)
    }
}

/// Lower cell index and fractional offset, snapping to nodes within 1e-9.
fn cell<S: Real>(scaled: S, count: usize) -> (usize, S) {
    let snapped = scaled.round();
    let s = if (scaled - snapped).abs() < S::lit(1e-9) {
        snapped
    } else {
        scaled
    };
    let s = s.max(S::zero()).min(S::from_count((count - 1) as u64));
    let base = s.floor().to_f64_lossy() as usize;
    let base = base.min(count - 2);
    (base, s - S::from_count(base as u64))
}
