//! Sparse accumulation of the cross-products needed by the Gaussian block
//! updates, and the multivariate-normal draw from a precision matrix.
//!
//! The occupancy regression design X = (1, X^Y, X^S, X^C) has one-hot year
//! and grid-cell blocks, so every block of X' W X is a sum of W entries over
//! index classes and the whole product costs O(n p_C^2) instead of a dense
//! O(n^2 p^2) multiplication.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::{Error, Result};

/// Column layout of the occupancy regression block:
/// [intercept | years 0..Y | grid cells 0..M | covariates 0..P].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockLayout {
    pub n_years: usize,
    pub n_cells: usize,
    pub n_covs: usize,
}

impl BlockLayout {
    pub fn dim(&self) -> usize {
        1 + self.n_years + self.n_cells + self.n_covs
    }

    pub fn intercept(&self) -> usize {
        0
    }

    pub fn year(&self, t: usize) -> usize {
        1 + t
    }

    pub fn cell(&self, c: usize) -> usize {
        1 + self.n_years + c
    }

    pub fn cov(&self, k: usize) -> usize {
        1 + self.n_years + self.n_cells + k
    }
}

/// View of the per-unit design index arrays.
#[derive(Debug, Clone, Copy)]
pub struct UnitDesign<'a> {
    /// Year index of each unit.
    pub year: &'a [usize],
    /// Grid-cell index of each unit's site; `None` drops the spatial block.
    pub cell: Option<&'a [usize]>,
    /// Row-major n x p covariate matrix.
    pub x: &'a [f64],
    pub n_covs: usize,
    pub n_years: usize,
    pub n_cells: usize,
}

impl<'a> UnitDesign<'a> {
    pub fn layout(&self) -> BlockLayout {
        BlockLayout {
            n_years: self.n_years,
            n_cells: if self.cell.is_some() { self.n_cells } else { 0 },
            n_covs: self.n_covs,
        }
    }

    pub fn len(&self) -> usize {
        self.year.len()
    }

    pub fn is_empty(&self) -> bool {
        self.year.is_empty()
    }

    fn row(&self, j: usize) -> &[f64] {
        &self.x[j * self.n_covs..(j + 1) * self.n_covs]
    }
}

#[derive(Debug, Clone)]
pub struct CrossProducts {
    pub xtwx: DMatrix<f64>,
    pub xtk: DVector<f64>,
}

/// All blocks of X' W X and X' k in a single pass over the units,
/// W = diag(omega).
pub fn sparse_cross_products(
    design: &UnitDesign<'_>,
    omega: &[f64],
    kvec: &[f64],
) -> CrossProducts {
    let layout = design.layout();
    let q = layout.dim();
    let mut xtwx = DMatrix::<f64>::zeros(q, q);
    let mut xtk = DVector::<f64>::zeros(q);
    let p = design.n_covs;

    for j in 0..design.len() {
        let w = omega[j];
        let k = kvec[j];
        let ti = layout.year(design.year[j]);
        let row = design.row(j);

        xtwx[(0, 0)] += w;
        xtwx[(0, ti)] += w;
        xtwx[(ti, ti)] += w;
        xtk[0] += k;
        xtk[ti] += k;

        let ci = design.cell.map(|cells| layout.cell(cells[j]));
        if let Some(ci) = ci {
            xtwx[(0, ci)] += w;
            xtwx[(ti, ci)] += w;
            xtwx[(ci, ci)] += w;
            xtk[ci] += k;
        }

        for a in 0..p {
            let wxa = w * row[a];
            let ca = layout.cov(a);
            xtwx[(0, ca)] += wxa;
            xtwx[(ti, ca)] += wxa;
            if let Some(ci) = ci {
                xtwx[(ci, ca)] += wxa;
            }
            for b in 0..=a {
                xtwx[(layout.cov(b), ca)] += wxa * row[b];
            }
            xtk[ca] += k * row[a];
        }
    }

    // accumulated upper triangle only; mirror
    for r in 0..q {
        for c in (r + 1)..q {
            xtwx[(c, r)] = xtwx[(r, c)];
        }
    }
    CrossProducts { xtwx, xtk }
}

/// One draw from N(P^{-1} r, P^{-1}) given the precision P and linear term r.
///
/// On Cholesky failure the diagonal is jittered upward (relative to its
/// largest entry) a few times before giving up; `block` names the failing
/// update in the error. Returns the draw and the number of jitter
/// escalations that were needed.
pub fn draw_from_precision<R: Rng + ?Sized>(
    prec: DMatrix<f64>,
    rhs: &DVector<f64>,
    block: &str,
    rng: &mut R,
) -> Result<(DVector<f64>, usize)> {
    let q = prec.nrows();
    let max_diag = (0..q)
        .map(|i| prec[(i, i)].abs())
        .fold(0.0f64, f64::max)
        .max(1e-300);

    let mut jitter = 0.0;
    let mut escalations = 0usize;
    let chol = loop {
        let mut attempt = prec.clone();
        if jitter > 0.0 {
            for i in 0..q {
                attempt[(i, i)] += jitter;
            }
        }
        match Cholesky::new(attempt) {
            Some(c) => break c,
            None => {
                escalations += 1;
                jitter = if jitter == 0.0 {
                    1e-10 * max_diag
                } else {
                    jitter * 10.0
                };
                if jitter > 1e-4 * max_diag {
                    return Err(Error::IllConditioned(format!(
                        "{block}: precision matrix failed Cholesky after jitter escalation"
                    )));
                }
            }
        }
    };

    let mean = chol.solve(rhs);
    let eta = DVector::from_fn(q, |_, _| StandardNormal.sample(rng));
    // P = L L', so P^{-1} = L^{-T} L^{-1}; L^{-T} eta has covariance P^{-1}
    let lt = chol.l().transpose();
    let noise = lt
        .solve_upper_triangular(&eta)
        .ok_or_else(|| Error::IllConditioned(format!("{block}: singular Cholesky factor")))?;
    Ok((mean + noise, escalations))
}
