//! 2×2 symmetric matrix helpers for complex batch normalization.

/// Symmetric `[[a, b], [b, d]]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Sym2 {
    pub a: f64,
    pub b: f64,
    pub d: f64,
}

/// General 2×2 `[[m00, m01], [m10, m11]]`.
pub(crate) type Mat2 = [[f64; 2]; 2];

#[derive(Debug, Clone, Copy)]
pub(crate) struct Eigen2 {
    /// Columns are eigenvectors.
    pub u: Mat2,
    pub lambda: [f64; 2],
}

impl Sym2 {
    pub fn eigen(&self) -> Eigen2 {
        let theta = 0.5 * (2.0 * self.b).atan2(self.a - self.d);
        let (s, c) = theta.sin_cos();
        let l1 = self.a * c * c + 2.0 * self.b * s * c + self.d * s * s;
        let l2 = self.a * s * s - 2.0 * self.b * s * c + self.d * c * c;
        Eigen2 { u: [[c, -s], [s, c]], lambda: [l1, l2] }
    }

    #[cfg(test)]
    pub fn to_mat(self) -> Mat2 {
        [[self.a, self.b], [self.b, self.d]]
    }
}

impl Eigen2 {
    /// `U·diag(f(λ))·Uᵀ`.
    pub fn apply(&self, f: impl Fn(f64) -> f64) -> Mat2 {
        let f0 = f(self.lambda[0]);
        let f1 = f(self.lambda[1]);
        let u = &self.u;
        let mut out = [[0.0; 2]; 2];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = u[i][0] * f0 * u[j][0] + u[i][1] * f1 * u[j][1];
            }
        }
        out
    }

    /// Adjoint of the Fréchet derivative of `C ↦ C^{-1/2}` applied to `g`.
    pub fn inv_sqrt_adjoint(&self, g: &Mat2) -> Mat2 {
        let [l1, l2] = self.lambda;
        let (r1, r2) = (l1.sqrt(), l2.sqrt());
        let f11 = -0.5 / (l1 * r1);
        let f22 = -0.5 / (l2 * r2);
        let f12 = -1.0 / (r1 * r2 * (r1 + r2));
        let gs = [[g[0][0], 0.5 * (g[0][1] + g[1][0])], [0.5 * (g[0][1] + g[1][0]), g[1][1]]];
        let ut = transpose(&self.u);
        let mut inner = matmul(&matmul(&ut, &gs), &self.u);
        inner[0][0] *= f11;
        inner[1][1] *= f22;
        inner[0][1] *= f12;
        inner[1][0] *= f12;
        matmul(&matmul(&self.u, &inner), &ut)
    }
}

pub(crate) fn matmul(a: &Mat2, b: &Mat2) -> Mat2 {
    let mut out = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

pub(crate) fn add(a: &Mat2, b: &Mat2) -> Mat2 {
    [[a[0][0] + b[0][0], a[0][1] + b[0][1]], [a[1][0] + b[1][0], a[1][1] + b[1][1]]]
}

pub(crate) fn transpose(a: &Mat2) -> Mat2 {
    [[a[0][0], a[1][0]], [a[0][1], a[1][1]]]
}

pub(crate) fn apply(a: &Mat2, x: [f64; 2]) -> [f64; 2] {
    [a[0][0] * x[0] + a[0][1] * x[1], a[1][0] * x[0] + a[1][1] * x[1]]
}
