//! Reference evaluation of single-lobe reflection by deterministic quadrature,
//! plus PMM evaluation and rasterization.
//!
//! The quadrature is Gauss–Legendre in `cos θ` times a uniform trapezoid in `φ`.
//! For each evaluation the rule is placed on whichever feature of the integrand is
//! sharpest: its pole goes on the lobe mean, or, for glossy specular, it is warped
//! onto the GGX half-vector distribution around the normal.

use crate::brdf::{ggx_unit, lambert_unit, smith_g2};
use crate::error::{Error, Result};
use crate::image::{EnvMap, RgbImage};
use crate::math::{Frame, Rgb, Vec3, PI};
use crate::scene::{IsgLobe, MaterialParams, PmmIllumination};

pub use crate::envfit::fit_pmm_to_envmap;

/// Exponent beyond which a lobe ring contributes nothing representable.
const LOBE_CUTOFF: f64 = 60.0;

#[derive(Copy, Clone, Debug, PartialEq)]
pub struct Node {
    pub dir: Vec3,
    /// Solid angle in steradians.
    pub weight: f64,
}

/// Product rule on the sphere with its pole at +z.
#[derive(Clone, Debug)]
pub struct QuadratureRule {
    pub n_theta: usize,
    pub n_phi: usize,
    cos_theta: Vec<f64>,
    sin_theta: Vec<f64>,
    ring_weight: Vec<f64>,
    cos_phi: Vec<f64>,
    sin_phi: Vec<f64>,
}

/// Gauss–Legendre nodes and weights on [-1, 1], ascending.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, 0.0);
            for k in 0..n {
                let p2 = p1;
                p1 = p0;
                p0 = ((2 * k + 1) as f64 * z * p1 - k as f64 * p2) / (k + 1) as f64;
            }
            dp = n as f64 * (z * p0 - p1) / (z * z - 1.0);
            let dz = p0 / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

impl QuadratureRule {
    pub fn new(n_theta: usize, n_phi: usize) -> Self {
        assert!(n_theta > 0 && n_phi > 0, "empty quadrature rule");
        let (x, w) = gauss_legendre(n_theta);
        let dphi = 2.0 * PI / n_phi as f64;
        let (cos_phi, sin_phi) = (0..n_phi)
            .map(|j| {
                let p = (j as f64 + 0.5) * dphi;
                (p.cos(), p.sin())
            })
            .unzip();
        QuadratureRule {
            n_theta,
            n_phi,
            sin_theta: x.iter().map(|c| (1.0 - c * c).max(0.0).sqrt()).collect(),
            cos_theta: x,
            ring_weight: w.iter().map(|wi| wi * dphi).collect(),
            cos_phi,
            sin_phi,
        }
    }

    /// 128 × 256, used for training targets.
    pub fn training() -> Self {
        QuadratureRule::new(128, 256)
    }

    /// 64 × 128, used in tests and for fast rendering.
    pub fn test() -> Self {
        QuadratureRule::new(64, 128)
    }

    pub fn len(&self) -> usize {
        self.n_theta * self.n_phi
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Nodes in the canonical frame.
    pub fn nodes(&self) -> impl Iterator<Item = Node> + '_ {
        (0..self.n_theta).flat_map(move |i| {
            (0..self.n_phi).map(move |j| Node {
                dir: self.local_dir(i, j),
                weight: self.ring_weight[i],
            })
        })
    }

    #[inline]
    fn local_dir(&self, i: usize, j: usize) -> Vec3 {
        let s = self.sin_theta[i];
        Vec3::new(s * self.cos_phi[j], s * self.sin_phi[j], self.cos_theta[i])
    }

    /// Gauss–Legendre weight of ring `i` on [-1, 1].
    #[inline]
    fn gl_weight(&self, i: usize) -> f64 {
        self.ring_weight[i] * self.n_phi as f64 / (2.0 * PI)
    }

    pub fn total_weight(&self) -> f64 {
        self.ring_weight.iter().sum::<f64>() * self.n_phi as f64
    }
}

/// Which part of the reflection operator to evaluate.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum ReflectionPart {
    Diffuse,
    Specular,
    Both,
}

#[inline]
pub fn isg_kernel(dir: Vec3, mean: Vec3, sharpness: f64) -> f64 {
    (-2.0 * sharpness * (1.0 - dir.dot(mean))).exp()
}

pub fn eval_isg(dir: Vec3, lobe: &IsgLobe) -> Rgb {
    lobe.weight * isg_kernel(dir, lobe.mean, lobe.sharpness)
}

pub fn eval_pmm(dir: Vec3, pmm: &PmmIllumination) -> Rgb {
    pmm.lobes
        .iter()
        .fold(Rgb::BLACK, |acc, l| acc + eval_isg(dir, l))
}

/// Angular spread of a lobe, roughly one standard deviation in radians.
fn lobe_width(sharpness: f64) -> f64 {
    1.0 / (2.0 * sharpness).sqrt()
}

/// Diffuse response to a unit-weight lobe with unit albedo.
pub fn diffuse_unit_response(mean: Vec3, sharpness: f64, n: Vec3, wo: Vec3, rule: &QuadratureRule) -> f64 {
    if n.dot(wo) <= 0.0 {
        return 0.0;
    }
    let frame = Frame::from_axis(mean);
    let nl = frame.to_local(n);
    let mut total = 0.0;
    for i in (0..rule.n_theta).rev() {
        let c = rule.cos_theta[i];
        let expo = 2.0 * sharpness * (1.0 - c);
        if expo > LOBE_CUTOFF {
            break;
        }
        let s = rule.sin_theta[i];
        let (a, b) = (nl.x * s, nl.y * s);
        let zc = nl.z * c;
        let mut ring = 0.0;
        for j in 0..rule.n_phi {
            let cos_i = a * rule.cos_phi[j] + b * rule.sin_phi[j] + zc;
            if cos_i > 0.0 {
                ring += cos_i;
            }
        }
        total += ring * (-expo).exp() * rule.ring_weight[i];
    }
    let probe = lambert_unit(n, n, wo);
    total * probe
}

/// Specular response to a unit-weight lobe with unit `k_s`.
pub fn specular_unit_response(
    mean: Vec3,
    sharpness: f64,
    n: Vec3,
    wo: Vec3,
    roughness: f64,
    rule: &QuadratureRule,
) -> f64 {
    if n.dot(wo) <= 0.0 {
        return 0.0;
    }
    if lobe_width(sharpness) <= 2.0 * roughness {
        let frame = Frame::from_axis(mean);
        let (nl, wl) = (frame.to_local(n), frame.to_local(wo));
        let mut total = 0.0;
        for i in (0..rule.n_theta).rev() {
            let expo = 2.0 * sharpness * (1.0 - rule.cos_theta[i]);
            if expo > LOBE_CUTOFF {
                break;
            }
            let mut ring = 0.0;
            for j in 0..rule.n_phi {
                let wi = rule.local_dir(i, j);
                let cos_i = nl.dot(wi);
                if cos_i > 0.0 {
                    ring += ggx_unit(nl, wi, wl, roughness) * cos_i;
                }
            }
            total += ring * (-expo).exp() * rule.ring_weight[i];
        }
        total
    } else {
        // GGX-warped half-vector rule around n: u = tan²θ_h / (α² + tan²θ_h) carries
        // the measure D(h) cosθ_h dω_h, so the glossy peak is integrated smoothly.
        let frame = Frame::from_axis(n);
        let (wl, ml) = (frame.to_local(wo), frame.to_local(mean));
        let cos_o = wl.z.max(1e-6);
        let a2 = roughness * roughness;
        let mut total = 0.0;
        for i in 0..rule.n_theta {
            let u = 0.5 * (rule.cos_theta[i] + 1.0);
            let tan2 = a2 * u / (1.0 - u);
            let cos_h = 1.0 / (1.0 + tan2).sqrt();
            let sin_h = (1.0 - cos_h * cos_h).max(0.0).sqrt();
            let mut ring = 0.0;
            for j in 0..rule.n_phi {
                let h = Vec3::new(sin_h * rule.cos_phi[j], sin_h * rule.sin_phi[j], cos_h);
                let oh = wl.dot(h);
                if oh <= 0.0 {
                    continue;
                }
                let wi = h * (2.0 * oh) - wl;
                if wi.z <= 0.0 {
                    continue;
                }
                let expo = 2.0 * sharpness * (1.0 - ml.dot(wi));
                if expo < LOBE_CUTOFF {
                    ring += smith_g2(wi.z.max(1e-6), cos_o, roughness) * oh * (-expo).exp();
                }
            }
            // GL weight on [-1,1] halves on [0,1]; the φ trapezoid over dφ/2π is 1/n_φ
            total += ring / (cos_o * cos_h) * 0.5 * rule.gl_weight(i);
        }
        total / rule.n_phi as f64
    }
}

/// Reflected radiance toward `wo` from a surface with normal `n` lit by one lobe.
pub fn reflect_lobe_oracle(
    lobe: &IsgLobe,
    rho: &MaterialParams,
    n: Vec3,
    wo: Vec3,
    rule: &QuadratureRule,
    part: ReflectionPart,
) -> Result<Rgb> {
    if n.dot(wo) <= 0.0 {
        return Err(Error::BackFacing);
    }
    let diffuse = || {
        lobe.weight.mul_elem(rho.k_d)
            * diffuse_unit_response(lobe.mean, lobe.sharpness, n, wo, rule)
    };
    let specular = || {
        lobe.weight.mul_elem(rho.k_s)
            * specular_unit_response(lobe.mean, lobe.sharpness, n, wo, rho.roughness, rule)
    };
    Ok(match part {
        ReflectionPart::Diffuse => diffuse(),
        ReflectionPart::Specular => specular(),
        ReflectionPart::Both => diffuse() + specular(),
    })
}

/// Rasterizes a PMM into a lat-long map by evaluating it at each pixel centre.
pub fn pmm_to_envmap(pmm: &PmmIllumination, width: usize, height: usize) -> EnvMap {
    let probe = EnvMap::new(RgbImage::new(width, height));
    EnvMap::new(RgbImage::from_fn(width, height, |x, y| {
        eval_pmm(probe.direction(x, y), pmm)
    }))
}
