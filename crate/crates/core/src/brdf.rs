//! Lambertian diffuse and GGX specular reflectance.
//!
//! GGX uses the width `α = r` directly and the height-correlated Smith
//! masking-shadowing term. Fresnel is constant and folded into `k_s`.

use crate::math::{Rgb, Vec3, PI};
use crate::scene::MaterialParams;

const COS_EPS: f64 = 1e-6;

/// GGX normal distribution for `cos_h = n·h`.
#[inline]
pub fn ggx_ndf(cos_h: f64, alpha: f64) -> f64 {
    if cos_h <= 0.0 {
        return 0.0;
    }
    let a2 = alpha * alpha;
    let d = cos_h * cos_h * (a2 - 1.0) + 1.0;
    a2 / (PI * d * d)
}

/// Smith Λ for GGX.
#[inline]
fn smith_lambda(cos: f64, alpha: f64) -> f64 {
    let c2 = cos * cos;
    let tan2 = (1.0 - c2).max(0.0) / c2;
    0.5 * (-1.0 + (1.0 + alpha * alpha * tan2).sqrt())
}

/// Height-correlated masking-shadowing for GGX.
#[inline]
pub fn smith_g2(cos_i: f64, cos_o: f64, alpha: f64) -> f64 {
    1.0 / (1.0 + smith_lambda(cos_i, alpha) + smith_lambda(cos_o, alpha))
}

/// Specular lobe with unit `k_s`.
#[inline]
pub fn ggx_unit(n: Vec3, wi: Vec3, wo: Vec3, alpha: f64) -> f64 {
    let cos_i = n.dot(wi);
    let cos_o = n.dot(wo);
    if cos_i <= 0.0 || cos_o <= 0.0 {
        return 0.0;
    }
    let h = (wi + wo).normalized();
    let (ci, co) = (cos_i.max(COS_EPS), cos_o.max(COS_EPS));
    ggx_ndf(n.dot(h), alpha) * smith_g2(ci, co, alpha) / (4.0 * ci * co)
}

/// Diffuse lobe with unit `k_d`: `1/π` inside the hemisphere, zero otherwise.
#[inline]
pub fn lambert_unit(n: Vec3, wi: Vec3, wo: Vec3) -> f64 {
    if n.dot(wi) > 0.0 && n.dot(wo) > 0.0 {
        1.0 / PI
    } else {
        0.0
    }
}

pub fn eval_diffuse(n: Vec3, wi: Vec3, wo: Vec3, k_d: Rgb) -> Rgb {
    k_d * lambert_unit(n, wi, wo)
}

pub fn eval_specular(n: Vec3, wi: Vec3, wo: Vec3, k_s: Rgb, roughness: f64) -> Rgb {
    k_s * ggx_unit(n, wi, wo, roughness)
}

/// Full BRDF `k_d f_d + k_s f_s`.
pub fn eval_brdf(rho: &MaterialParams, n: Vec3, wi: Vec3, wo: Vec3) -> Rgb {
    eval_diffuse(n, wi, wo, rho.k_d) + eval_specular(n, wi, wo, rho.k_s, rho.roughness)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::uniform_sphere;
    use proptest::prelude::*;

    /// Midpoint rule over (θ, φ) on the hemisphere around +z: an integration route
    /// independent of the crate's quadrature module.
    fn hemisphere_integral(f: impl Fn(Vec3) -> f64, n_theta: usize, n_phi: usize) -> f64 {
        let dt = 0.5 * PI / n_theta as f64;
        let dp = 2.0 * PI / n_phi as f64;
        let mut sum = 0.0;
        for i in 0..n_theta {
            let t = (i as f64 + 0.5) * dt;
            let (st, ct) = t.sin_cos();
            for j in 0..n_phi {
                let p = (j as f64 + 0.5) * dp;
                sum += f(Vec3::new(st * p.cos(), st * p.sin(), ct)) * st * dt * dp;
            }
        }
        sum
    }

    const Z: Vec3 = Vec3::new(0.0, 0.0, 1.0);

    #[test]
    fn lambert_constant_and_hemisphere() {
        let wo = Vec3::new(0.2, 0.1, 0.9).normalized();
        let wi = Vec3::new(-0.4, 0.3, 0.5).normalized();
        let v = eval_diffuse(Z, wi, wo, Rgb::WHITE);
        assert_eq!(v, Rgb::splat(1.0 / PI));
        let below = Vec3::new(0.0, 0.6, -0.8);
        assert_eq!(eval_diffuse(Z, below, wo, Rgb::WHITE), Rgb::BLACK);
    }

    #[test]
    fn white_furnace_diffuse() {
        let wo = Vec3::new(0.0, 0.0, 1.0);
        let e = hemisphere_integral(|wi| lambert_unit(Z, wi, wo) * wi.z, 400, 64);
        assert!((e - 1.0).abs() < 1e-3, "{e}");
    }

    #[test]
    fn ndf_peak_value() {
        for r in [0.05, 0.3, 1.0] {
            assert!((ggx_ndf(1.0, r) - 1.0 / (PI * r * r)).abs() < 1e-9 / (r * r));
        }
    }

    #[test]
    fn ndf_normalization() {
        for r in [0.1, 0.3, 0.8] {
            // dense near the pole so the r = 0.1 peak is resolved
            let total = hemisphere_integral(|h| ggx_ndf(h.z, r) * h.z, 4000, 8);
            assert!((total - 1.0).abs() < 1e-2, "r={r}: {total}");
        }
    }

    #[test]
    fn specular_energy_bounded() {
        for deg in [0.0_f64, 45.0, 80.0] {
            let t = deg.to_radians();
            let wo = Vec3::new(t.sin(), 0.0, t.cos());
            let e = hemisphere_integral(|wi| ggx_unit(Z, wi, wo, 1.0) * wi.z, 600, 240);
            assert!(e <= 1.0 && e > 0.3, "{deg}: {e}");
        }
    }

    #[test]
    fn additive_split() {
        let n = Vec3::new(0.1, 0.2, 0.95).normalized();
        let wi = Vec3::new(0.3, -0.2, 0.8).normalized();
        let wo = Vec3::new(-0.2, 0.1, 0.9).normalized();
        let rho = MaterialParams::new(Rgb::new(0.5, 0.0, 0.0), Rgb::splat(0.04), 0.2);
        let d = eval_diffuse(n, wi, wo, rho.k_d);
        let s = eval_specular(n, wi, wo, rho.k_s, 0.2);
        assert_eq!(eval_brdf(&rho, n, wi, wo), d + s);
        let no_spec = MaterialParams { k_s: Rgb::BLACK, ..rho };
        assert_eq!(eval_brdf(&no_spec, n, wi, wo), d);
        let no_diff = MaterialParams { k_d: Rgb::BLACK, ..rho };
        assert_eq!(eval_brdf(&no_diff, n, wi, wo), s);
    }

    proptest! {
        #[test]
        fn reciprocity_and_nonnegativity(
            a in 0.0..1.0f64, b in 0.0..1.0f64, c in 0.0..1.0f64, d in 0.0..1.0f64,
            e in 0.0..1.0f64, f in 0.0..1.0f64, r in 0.01..1.0f64,
        ) {
            let n = uniform_sphere(a, b);
            let wi = uniform_sphere(c, d);
            let wo = uniform_sphere(e, f);
            let rho = MaterialParams::new(Rgb::new(0.3, 0.5, 0.7), Rgb::new(0.9, 0.4, 0.1), r);
            let x = eval_brdf(&rho, n, wi, wo);
            let y = eval_brdf(&rho, n, wo, wi);
            for ch in 0..3 {
                prop_assert!(x[ch] >= 0.0);
                prop_assert!((x[ch] - y[ch]).abs() <= 1e-9 * x[ch].abs().max(1.0));
            }
            if n.dot(wi) <= 0.0 || n.dot(wo) <= 0.0 {
                prop_assert_eq!(x, Rgb::BLACK);
            }
        }
    }
}
