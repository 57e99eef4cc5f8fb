//! Symmetric block-tridiagonal systems with an optional low-rank corner
//! term, A = T + ρ·G·Gᵀ.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

#[derive(Debug, Clone)]
pub struct BlockTridiagonal {
    /// Diagonal blocks A_ii.
    pub diag: Vec<DMatrix<f64>>,
    /// Sub-diagonal blocks A_{i+1,i}.
    pub sub: Vec<DMatrix<f64>>,
    /// Low-rank term (G, ρ), G stored densely with one row per unknown.
    pub corner: Option<(DMatrix<f64>, f64)>,
}

/// (G, Z = A⁻¹G, Cholesky of the capacitance I/ρ + GᵀZ).
type Woodbury = (DMatrix<f64>, DMatrix<f64>, Cholesky<f64, Dyn>);

pub struct Factor {
    chol: Vec<Cholesky<f64, Dyn>>,
    /// L_{i+1,i}.
    lower: Vec<DMatrix<f64>>,
    sizes: Vec<usize>,
    woodbury: Option<Woodbury>,
}

impl BlockTridiagonal {
    pub fn zeros(blocks: usize, size: usize) -> Self {
        Self {
            diag: vec![DMatrix::zeros(size, size); blocks],
            sub: vec![DMatrix::zeros(size, size); blocks.saturating_sub(1)],
            corner: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.diag.iter().map(|d| d.nrows()).sum()
    }

    pub fn mul(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut y = DVector::zeros(x.len());
        let s = self.diag[0].nrows();
        for i in 0..self.diag.len() {
            let xi = x.rows(i * s, s);
            let mut yi = &self.diag[i] * xi;
            if i > 0 {
                yi += &self.sub[i - 1] * x.rows((i - 1) * s, s);
            }
            if i + 1 < self.diag.len() {
                yi += self.sub[i].transpose() * x.rows((i + 1) * s, s);
            }
            y.rows_mut(i * s, s).copy_from(&yi);
        }
        if let Some((g, rho)) = &self.corner {
            y += g * (g.transpose() * x) * *rho;
        }
        y
    }

    /// Block Cholesky of (A + shift·I); None if not positive definite.
    pub fn factor(&self, shift: f64) -> Option<Factor> {
        let k = self.diag.len();
        let mut chol = Vec::with_capacity(k);
        let mut lower = Vec::with_capacity(k.saturating_sub(1));
        let sizes: Vec<usize> = self.diag.iter().map(|d| d.nrows()).collect();
        for i in 0..k {
            let mut d = self.diag[i].clone();
            for j in 0..d.nrows() {
                d[(j, j)] += shift;
            }
            if i > 0 {
                let l: &DMatrix<f64> = &lower[i - 1];
                d -= l * l.transpose();
            }
            let c = d.cholesky()?;
            if i + 1 < k {
                // L_{i+1,i} = A_{i+1,i} L_ii⁻ᵀ
                lower.push(c.l().solve_lower_triangular(&self.sub[i].transpose())?.transpose());
            }
            chol.push(c);
        }
        let mut f = Factor { chol, lower, sizes, woodbury: None };
        if let Some((g, rho)) = &self.corner {
            let z = DMatrix::from_columns(&(0..g.ncols()).map(|c| f.solve_tridiagonal(&g.column(c).into_owned())).collect::<Vec<_>>());
            let mut cap = g.transpose() * &z;
            for j in 0..cap.nrows() {
                cap[(j, j)] += 1.0 / rho;
            }
            let cap = cap.cholesky()?;
            f.woodbury = Some((g.clone(), z, cap));
        }
        Some(f)
    }
}

impl Factor {
    fn solve_tridiagonal(&self, b: &DVector<f64>) -> DVector<f64> {
        let k = self.chol.len();
        let mut offs = vec![0; k + 1];
        for i in 0..k {
            offs[i + 1] = offs[i] + self.sizes[i];
        }
        // forward: L y = b
        let mut y: Vec<DVector<f64>> = Vec::with_capacity(k);
        for i in 0..k {
            let mut r = b.rows(offs[i], self.sizes[i]).into_owned();
            if i > 0 {
                r -= &self.lower[i - 1] * &y[i - 1];
            }
            let yi = self.chol[i].l().solve_lower_triangular(&r).expect("non-singular factor");
            y.push(yi);
        }
        // backward: Lᵀ x = y
        let mut x = DVector::zeros(b.len());
        let mut next: Option<DVector<f64>> = None;
        for i in (0..k).rev() {
            let mut r = y[i].clone();
            if let Some(xn) = &next {
                r -= self.lower[i].transpose() * xn;
            }
            let xi = self.chol[i].l().transpose().solve_upper_triangular(&r).expect("non-singular factor");
            x.rows_mut(offs[i], self.sizes[i]).copy_from(&xi);
            next = Some(xi);
        }
        x
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let y = self.solve_tridiagonal(b);
        match &self.woodbury {
            None => y,
            Some((g, z, cap)) => {
                let t = cap.solve(&(g.transpose() * &y));
                y - z * t
            }
        }
    }
}
