//! Small complex-Gaussian algebra.
//!
//! The joint channel state of the two users at one receive antenna is a
//! 2-dimensional circularly-symmetric complex Gaussian, so everything the
//! detector does reduces to 2x2 Hermitian matrix arithmetic. Covariances
//! follow the convention `E[z z^H] = C` (for a scalar, `C = E[|z|^2]`, split
//! evenly between real and imaginary parts). These types are stack-only; the
//! detector's inner loops must not allocate.

use num_complex::Complex64;

pub type C64 = Complex64;
/// Complex 2-vector `(h, h')` for one antenna.
pub type CVec2 = [C64; 2];

pub const ZV: CVec2 = [C64::new(0.0, 0.0), C64::new(0.0, 0.0)];

#[inline]
pub fn cvec2_add(a: CVec2, b: CVec2) -> CVec2 {
    [a[0] + b[0], a[1] + b[1]]
}

#[inline]
pub fn cvec2_scale(a: CVec2, s: f64) -> CVec2 {
    [a[0] * s, a[1] * s]
}

/// `a^H b`.
#[inline]
pub fn cvec2_dot(a: CVec2, b: CVec2) -> C64 {
    a[0].conj() * b[0] + a[1].conj() * b[1]
}

/// Hermitian 2x2 matrix `[[aa, ab], [conj(ab), bb]]` with real diagonal.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Herm2 {
    pub aa: f64,
    pub bb: f64,
    pub ab: C64,
}

impl Herm2 {
    pub const ZERO: Herm2 = Herm2 { aa: 0.0, bb: 0.0, ab: C64::new(0.0, 0.0) };

    #[inline]
    pub fn diag(aa: f64, bb: f64) -> Herm2 {
        Herm2 { aa, bb, ab: C64::new(0.0, 0.0) }
    }

    #[inline]
    pub fn det(&self) -> f64 {
        self.aa * self.bb - self.ab.norm_sqr()
    }

    /// Inverse via the adjugate; caller guarantees positive definiteness.
    #[inline]
    pub fn inv(&self) -> Herm2 {
        let d = self.det();
        Herm2 { aa: self.bb / d, bb: self.aa / d, ab: -self.ab / d }
    }

    #[inline]
    pub fn add(&self, o: &Herm2) -> Herm2 {
        Herm2 { aa: self.aa + o.aa, bb: self.bb + o.bb, ab: self.ab + o.ab }
    }

    #[inline]
    pub fn sub(&self, o: &Herm2) -> Herm2 {
        Herm2 { aa: self.aa - o.aa, bb: self.bb - o.bb, ab: self.ab - o.ab }
    }

    #[inline]
    pub fn mul_vec(&self, v: CVec2) -> CVec2 {
        [self.aa * v[0] + self.ab * v[1], self.ab.conj() * v[0] + self.bb * v[1]]
    }

    /// `v^H M v` (real for Hermitian M).
    #[inline]
    pub fn quad(&self, v: CVec2) -> f64 {
        self.aa * v[0].norm_sqr()
            + self.bb * v[1].norm_sqr()
            + 2.0 * (v[0].conj() * self.ab * v[1]).re
    }

    /// `u^T M u` for a real coefficient vector `u = [x, x']` (symbol pair).
    #[inline]
    pub fn quad_real(&self, x0: f64, x1: f64) -> f64 {
        self.aa * x0 * x0 + self.bb * x1 * x1 + 2.0 * x0 * x1 * self.ab.re
    }

    /// `M u` for real `u`.
    #[inline]
    pub fn mul_real(&self, x0: f64, x1: f64) -> CVec2 {
        [self.aa * x0 + self.ab * x1, self.ab.conj() * x0 + self.bb * x1]
    }

    /// Rank-one downdate `M - v v^H / s`, the covariance part of a scalar
    /// measurement update with gain denominator `s`.
    #[inline]
    pub fn rank1_downdate(&self, v: CVec2, s: f64) -> Herm2 {
        Herm2 {
            aa: self.aa - v[0].norm_sqr() / s,
            bb: self.bb - v[1].norm_sqr() / s,
            ab: self.ab - v[0] * v[1].conj() / s,
        }
    }

    /// Smallest eigenvalue; the discriminant form avoids cancellation.
    #[inline]
    pub fn min_eig(&self) -> f64 {
        let d = self.aa - self.bb;
        let disc = (d * d + 4.0 * self.ab.norm_sqr()).sqrt();
        0.5 * (self.aa + self.bb - disc)
    }
}

/// Log-density of a scalar circularly-symmetric complex Gaussian,
/// `ln CN(y; m, s)` with `s = E[|y-m|^2] > 0`.
#[inline]
pub fn ln_cn_scalar(y: C64, m: C64, s: f64) -> f64 {
    -(std::f64::consts::PI * s).ln() - (y - m).norm_sqr() / s
}

/// Canonical (information) form of an unnormalized Gaussian over one
/// antenna block: `f(s) = exp(g + 2 Re(eta^H s) - s^H lam s)`.
///
/// Products and quotients of Gaussians are componentwise sums and
/// differences here, which is how the forward message, backward message and
/// stationary prior are combined exactly.
#[derive(Clone, Copy, Debug)]
pub struct Canon2 {
    pub lam: Herm2,
    pub eta: CVec2,
    pub g: f64,
}

const LN_PI: f64 = 1.144_729_885_849_400_2;

impl Canon2 {
    /// Canonical form of the normalized density `CN(s; mean, cov)`.
    pub fn from_gaussian(mean: CVec2, cov: &Herm2) -> Canon2 {
        let lam = cov.inv();
        let eta = lam.mul_vec(mean);
        // ln det lam = -ln det cov
        let g = -2.0 * LN_PI + lam.det().ln() - lam.quad(mean);
        Canon2 { lam, eta, g }
    }

    pub fn add(&self, o: &Canon2) -> Canon2 {
        Canon2 { lam: self.lam.add(&o.lam), eta: cvec2_add(self.eta, o.eta), g: self.g + o.g }
    }

    pub fn sub(&self, o: &Canon2) -> Canon2 {
        Canon2 {
            lam: self.lam.sub(&o.lam),
            eta: [self.eta[0] - o.eta[0], self.eta[1] - o.eta[1]],
            g: self.g - o.g,
        }
    }

    /// `ln ∫ f(s) ds`; requires `lam` positive definite.
    pub fn log_mass(&self) -> f64 {
        let cov = self.lam.inv();
        self.g + 2.0 * LN_PI - self.lam.det().ln() + cov.quad(self.eta)
    }

    /// Moment form `(mean, cov)` of the normalized density.
    pub fn moments(&self) -> (CVec2, Herm2) {
        let cov = self.lam.inv();
        (cov.mul_vec(self.eta), cov)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn sample_herm() -> Herm2 {
        Herm2 { aa: 2.0, bb: 1.25, ab: c(0.4, -0.3) }
    }

    #[test]
    fn inverse_is_two_sided() {
        let m = sample_herm();
        let i = m.inv();
        // (m * i) applied to basis vectors must give the identity columns.
        let e0 = m.mul_vec(i.mul_vec([c(1.0, 0.0), c(0.0, 0.0)]));
        let e1 = m.mul_vec(i.mul_vec([c(0.0, 0.0), c(1.0, 0.0)]));
        assert!((e0[0] - 1.0).norm() < 1e-14 && e0[1].norm() < 1e-14);
        assert!((e1[1] - 1.0).norm() < 1e-14 && e1[0].norm() < 1e-14);
    }

    #[test]
    fn quad_matches_explicit_expansion() {
        let m = sample_herm();
        let v = [c(0.7, -1.1), c(-0.2, 0.5)];
        let mv = m.mul_vec(v);
        let direct = (v[0].conj() * mv[0] + v[1].conj() * mv[1]).re;
        assert!((m.quad(v) - direct).abs() < 1e-14);
        assert!((m.quad_real(1.0, -1.0) - m.quad([c(1.0, 0.0), c(-1.0, 0.0)])).abs() < 1e-14);
    }

    #[test]
    fn min_eig_of_diagonal_and_rotated() {
        assert_eq!(Herm2::diag(3.0, 0.5).min_eig(), 0.5);
        // [[1, i],[-i, 1]] has eigenvalues {0, 2}.
        let m = Herm2 { aa: 1.0, bb: 1.0, ab: c(0.0, 1.0) };
        assert!(m.min_eig().abs() < 1e-15);
    }

    #[test]
    fn normalized_gaussian_has_unit_mass() {
        let cov = sample_herm();
        let mean = [c(0.3, 0.9), c(-1.2, 0.1)];
        let canon = Canon2::from_gaussian(mean, &cov);
        assert!(canon.log_mass().abs() < 1e-12, "density must integrate to 1");
        let (m2, c2) = canon.moments();
        assert!((m2[0] - mean[0]).norm() < 1e-12 && (m2[1] - mean[1]).norm() < 1e-12);
        assert!((c2.aa - cov.aa).abs() < 1e-12 && (c2.ab - cov.ab).norm() < 1e-12);
    }

    #[test]
    fn product_mass_equals_convolution_likelihood() {
        // ∫ CN(s; m1, P1) CN(s; m2, P2) ds = CN(m1; m2, P1 + P2), evaluated
        // here through the canonical form on one side and directly on the
        // other. Scalar blocks make the direct side easy: use diagonal P.
        let p1 = Herm2::diag(0.8, 1.6);
        let p2 = Herm2::diag(0.5, 0.7);
        let m1 = [c(0.2, -0.4), c(1.0, 0.3)];
        let m2 = [c(-0.6, 0.1), c(0.4, -0.2)];
        let mass = Canon2::from_gaussian(m1, &p1).add(&Canon2::from_gaussian(m2, &p2)).log_mass();
        let direct = ln_cn_scalar(m1[0], m2[0], p1.aa + p2.aa) + ln_cn_scalar(m1[1], m2[1], p1.bb + p2.bb);
        assert!((mass - direct).abs() < 1e-12, "mass {mass} vs direct {direct}");
    }

    #[test]
    fn rank1_downdate_matches_definition() {
        let m = sample_herm();
        let v = [c(0.5, 0.2), c(-0.3, 0.8)];
        let s = 1.7;
        let d = m.rank1_downdate(v, s);
        let manual_ab = m.ab - v[0] * v[1].conj() / s;
        assert!((d.aa - (m.aa - v[0].norm_sqr() / s)).abs() < 1e-15);
        assert!((d.ab - manual_ab).norm() < 1e-15);
    }
}
