//! Small fixed-dimension vector and symmetric-matrix helpers.
//!
//! Everything runs in dimension 1 or 2; points and vectors are `[f64; 2]`
//! with the second component ignored (and kept at zero) in 1-D.

/// Point or vector in the ambient space, `[x, y]`; `y = 0` in 1-D.
pub type Vec2 = [f64; 2];

pub fn dot(a: Vec2, b: Vec2) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

pub fn sub(a: Vec2, b: Vec2) -> Vec2 {
    [a[0] - b[0], a[1] - b[1]]
}

pub fn add(a: Vec2, b: Vec2) -> Vec2 {
    [a[0] + b[0], a[1] + b[1]]
}

pub fn scale(a: Vec2, s: f64) -> Vec2 {
    [a[0] * s, a[1] * s]
}

pub fn norm(a: Vec2) -> f64 {
    dot(a, a).sqrt()
}

pub fn dist(a: Vec2, b: Vec2) -> f64 {
    norm(sub(a, b))
}

pub fn normalize(a: Vec2) -> Vec2 {
    let n = norm(a);
    if n == 0.0 {
        [0.0, 0.0]
    } else {
        scale(a, 1.0 / n)
    }
}

/// Counterclockwise perpendicular.
pub fn perp(a: Vec2) -> Vec2 {
    [-a[1], a[0]]
}

pub fn is_finite(a: Vec2) -> bool {
    a[0].is_finite() && a[1].is_finite()
}

/// Symmetric 2x2 matrix; in 1-D only `a11` is read.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymMat2 {
    pub a11: f64,
    pub a12: f64,
    pub a22: f64,
}

impl SymMat2 {
    pub fn identity() -> Self {
        SymMat2 { a11: 1.0, a12: 0.0, a22: 1.0 }
    }

    pub fn diagonal(a11: f64, a22: f64) -> Self {
        SymMat2 { a11, a12: 0.0, a22 }
    }

    /// R diag(l1, l2) R^T for a rotation by `theta`.
    pub fn rotated_anisotropic(l1: f64, l2: f64, theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        SymMat2 {
            a11: l1 * c * c + l2 * s * s,
            a12: (l1 - l2) * s * c,
            a22: l1 * s * s + l2 * c * c,
        }
    }

    pub fn apply(&self, v: Vec2) -> Vec2 {
        [self.a11 * v[0] + self.a12 * v[1], self.a12 * v[0] + self.a22 * v[1]]
    }

    /// Quadratic form <A v, v>.
    pub fn quad(&self, v: Vec2) -> f64 {
        self.a11 * v[0] * v[0] + 2.0 * self.a12 * v[0] * v[1] + self.a22 * v[1] * v[1]
    }

    pub fn eig_min(&self) -> f64 {
        let tr = self.a11 + self.a22;
        let det = self.a11 * self.a22 - self.a12 * self.a12;
        let disc = (tr * tr / 4.0 - det).max(0.0).sqrt();
        tr / 2.0 - disc
    }

    pub fn eig_max(&self) -> f64 {
        let tr = self.a11 + self.a22;
        let det = self.a11 * self.a22 - self.a12 * self.a12;
        let disc = (tr * tr / 4.0 - det).max(0.0).sqrt();
        tr / 2.0 + disc
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rotated_anisotropic_eigenvalues() {
        let a = SymMat2::rotated_anisotropic(3.0, 0.5, 0.7);
        assert!((a.eig_min() - 0.5).abs() < 1e-12);
        assert!((a.eig_max() - 3.0).abs() < 1e-12);
        // quadratic form along the rotated axis recovers l1
        let v = [0.7f64.cos(), 0.7f64.sin()];
        assert!((a.quad(v) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn perp_is_orthogonal() {
        let v = [0.3, -1.7];
        assert_eq!(dot(v, perp(v)), 0.0);
    }
}
