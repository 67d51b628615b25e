//! Fitting a PMM to a lat-long environment map.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::image::EnvMap;
use crate::lbfgs::{minimize, LbfgsConfig};
use crate::math::{fibonacci_sphere, Rgb, Vec3, PI};
use crate::scene::{IsgLobe, PmmIllumination, SHARPNESS_MAX, SHARPNESS_MIN};

const CLUSTER_ROUNDS: usize = 25;

struct Pixel {
    dir: Vec3,
    area: f64,
    value: Rgb,
    /// Luminance times solid angle.
    mass: f64,
}

/// `∫ exp(-2σ(1 - ω·μ)) dω`.
fn lobe_integral(sharpness: f64) -> f64 {
    if sharpness < 1e-8 {
        4.0 * PI
    } else {
        PI * (1.0 - (-4.0 * sharpness).exp()) / sharpness
    }
}

/// Concentration of a direction cluster from its mean resultant length.
fn sharpness_from_resultant(r: f64) -> f64 {
    let r = r.clamp(0.0, 0.999_999);
    let kappa = r * (3.0 - r * r) / (1.0 - r * r);
    (0.5 * kappa).clamp(SHARPNESS_MIN, SHARPNESS_MAX)
}

fn seed_means(pixels: &[Pixel], n_p: usize, rng: &mut ChaCha8Rng) -> Vec<Vec3> {
    let total: f64 = pixels.iter().map(|p| p.mass).sum();
    let pick = |rng: &mut ChaCha8Rng, weights: &[f64], total: f64| -> Option<usize> {
        if total <= 0.0 {
            return None;
        }
        let mut u = rng.gen::<f64>() * total;
        for (i, &w) in weights.iter().enumerate() {
            u -= w;
            if u <= 0.0 && w > 0.0 {
                return Some(i);
            }
        }
        weights.iter().rposition(|&w| w > 0.0)
    };
    let masses: Vec<f64> = pixels.iter().map(|p| p.mass).collect();
    let first = pick(rng, &masses, total).unwrap_or(0);
    let mut means = vec![pixels[first].dir];
    let mut dist: Vec<f64> = pixels.iter().map(|p| 1.0 - p.dir.dot(means[0])).collect();
    let fallback = fibonacci_sphere(n_p);
    while means.len() < n_p {
        let w: Vec<f64> = pixels.iter().zip(&dist).map(|(p, d)| p.mass * d).collect();
        let t: f64 = w.iter().sum();
        let next = match pick(rng, &w, t) {
            Some(i) => pixels[i].dir,
            None => fallback[means.len()],
        };
        for (d, p) in dist.iter_mut().zip(pixels) {
            *d = d.min(1.0 - p.dir.dot(next));
        }
        means.push(next);
    }
    means
}

/// Hard-assignment clustering of pixel directions weighted by luminance.
fn cluster(pixels: &[Pixel], mut means: Vec<Vec3>) -> Vec<IsgLobe> {
    let n_p = means.len();
    let mut sums = vec![Vec3::ZERO; n_p];
    let mut mass = vec![0.0; n_p];
    let mut energy = vec![Rgb::BLACK; n_p];
    for _ in 0..CLUSTER_ROUNDS {
        sums.iter_mut().for_each(|s| *s = Vec3::ZERO);
        mass.iter_mut().for_each(|m| *m = 0.0);
        energy.iter_mut().for_each(|e| *e = Rgb::BLACK);
        for p in pixels {
            let j = (0..n_p)
                .max_by(|&a, &b| p.dir.dot(means[a]).total_cmp(&p.dir.dot(means[b])))
                .unwrap_or(0);
            sums[j] += p.dir * p.mass;
            mass[j] += p.mass;
            energy[j] += p.value * p.area;
        }
        let mut moved = false;
        for j in 0..n_p {
            if sums[j].length() > 0.0 {
                let m = sums[j].normalized();
                moved |= m.dot(means[j]) < 1.0 - 1e-12;
                means[j] = m;
            }
        }
        if !moved {
            break;
        }
    }
    (0..n_p)
        .map(|j| {
            let r = if mass[j] > 0.0 { sums[j].length() / mass[j] } else { 0.0 };
            let sharpness = sharpness_from_resultant(r);
            IsgLobe::new(energy[j] / lobe_integral(sharpness), sharpness, means[j])
        })
        .collect()
}

/// Per lobe: 3 log weights, log sharpness, unnormalized mean.
const PARAMS_PER_LOBE: usize = 7;
const LOG_WEIGHT_FLOOR: f64 = -40.0;

fn pack(lobes: &[IsgLobe], scale: f64) -> Vec<f64> {
    let mut x = Vec::with_capacity(lobes.len() * PARAMS_PER_LOBE);
    for l in lobes {
        for c in 0..3 {
            x.push((l.weight[c] / scale).max(1e-12).ln().max(LOG_WEIGHT_FLOOR));
        }
        x.push(l.sharpness.ln());
        x.extend_from_slice(&l.mean.to_array());
    }
    x
}

fn unpack(x: &[f64], scale: f64) -> Vec<IsgLobe> {
    x.chunks_exact(PARAMS_PER_LOBE)
        .map(|p| {
            IsgLobe::new(
                Rgb::new(p[0].exp(), p[1].exp(), p[2].exp()) * scale,
                p[3].exp(),
                Vec3::new(p[4], p[5], p[6]),
            )
            .projected()
        })
        .collect()
}

/// Solid-angle weighted squared error of `lobes` against the pixels, with
/// weights expressed in units of `scale`.
fn refine_cost(x: &[f64], grad: &mut [f64], pixels: &[Pixel], scale: f64) -> f64 {
    grad.iter_mut().for_each(|g| *g = 0.0);
    let n_p = x.len() / PARAMS_PER_LOBE;
    let lobes: Vec<(Rgb, f64, Vec3, f64)> = x
        .chunks_exact(PARAMS_PER_LOBE)
        .map(|p| {
            let raw = Vec3::new(p[4], p[5], p[6]);
            (
                Rgb::new(p[0].exp(), p[1].exp(), p[2].exp()),
                p[3].exp(),
                raw.normalized(),
                raw.length(),
            )
        })
        .collect();
    let mut kern = vec![0.0; n_p];
    let mut cost = 0.0;
    let mut gmean = vec![Vec3::ZERO; n_p];
    for p in pixels {
        let mut model = Rgb::BLACK;
        for (j, (w, s, m, _)) in lobes.iter().enumerate() {
            kern[j] = (-2.0 * s * (1.0 - p.dir.dot(*m))).exp();
            model += *w * kern[j];
        }
        let r = model - p.value / scale;
        cost += p.area * (r[0] * r[0] + r[1] * r[1] + r[2] * r[2]);
        for (j, (w, s, _, _)) in lobes.iter().enumerate() {
            if kern[j] == 0.0 {
                continue;
            }
            let g = &mut grad[j * PARAMS_PER_LOBE..(j + 1) * PARAMS_PER_LOBE];
            let mut rk = 0.0;
            for c in 0..3 {
                let t = 2.0 * p.area * r[c] * w[c] * kern[j];
                g[c] += t;
                rk += t;
            }
            g[3] += rk * (-2.0 * s * (1.0 - p.dir.dot(lobes[j].2)));
            gmean[j] += p.dir * (rk * 2.0 * s);
        }
    }
    for (j, (_, _, m, len)) in lobes.iter().enumerate() {
        let gm = (gmean[j] - *m * gmean[j].dot(*m)) / *len;
        let g = &mut grad[j * PARAMS_PER_LOBE..];
        g[4] = gm.x;
        g[5] = gm.y;
        g[6] = gm.z;
    }
    cost
}

/// Fits an `n_p`-lobe PMM by luminance-weighted clustering of pixel directions
/// followed by joint L-BFGS refinement of the solid-angle weighted squared
/// radiance error. Deterministic for a given seed.
pub fn fit_pmm_to_envmap(env: &EnvMap, n_p: usize, seed: u64) -> Result<PmmIllumination> {
    if n_p < 1 {
        return Err(Error::InvalidArgument("n_p must be at least 1".into()));
    }
    let mut pixels = Vec::with_capacity(env.width() * env.height());
    for y in 0..env.height() {
        let area = env.pixel_solid_angle(y);
        for x in 0..env.width() {
            let value = env.image.get(x, y);
            pixels.push(Pixel {
                dir: env.direction(x, y),
                area,
                value,
                mass: value.mean().max(0.0) * area,
            });
        }
    }
    let scale = pixels.iter().map(|p| p.value.max_channel()).fold(0.0, f64::max);
    if scale <= 0.0 || !scale.is_finite() {
        let lobes = fibonacci_sphere(n_p)
            .into_iter()
            .map(|m| IsgLobe::new(Rgb::BLACK, 1.0, m))
            .collect();
        return Ok(PmmIllumination::new(lobes));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let init = cluster(&pixels, seed_means(&pixels, n_p, &mut rng));
    let mut x = pack(&init, scale);
    let cfg = LbfgsConfig {
        max_iters: 400,
        grad_tol: 1e-12,
        ..LbfgsConfig::default()
    };
    minimize(|x, g| refine_cost(x, g, &pixels, scale), &mut x, &cfg)?;
    Ok(PmmIllumination::new(unpack(&x, scale)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::pmm_to_envmap;

    fn rel_l2(a: &EnvMap, b: &EnvMap) -> f64 {
        let (mut num, mut den) = (0.0, 0.0);
        for y in 0..a.height() {
            let da = a.pixel_solid_angle(y);
            for x in 0..a.width() {
                let d = a.image.get(x, y) - b.image.get(x, y);
                let v = b.image.get(x, y);
                num += da * (0..3).map(|c| d[c] * d[c]).sum::<f64>();
                den += da * (0..3).map(|c| v[c] * v[c]).sum::<f64>();
            }
        }
        (num / den).sqrt()
    }

    fn four_lobes() -> PmmIllumination {
        PmmIllumination::new(vec![
            IsgLobe::new(Rgb::new(3.0, 2.5, 2.0), 40.0, Vec3::new(0.2, 1.0, -0.3)),
            IsgLobe::new(Rgb::new(0.4, 0.5, 0.9), 3.0, Vec3::new(-1.0, 0.1, 0.2)),
            IsgLobe::new(Rgb::new(1.0, 0.3, 0.2), 15.0, Vec3::new(0.5, -0.4, -1.0)),
            IsgLobe::new(Rgb::new(0.3, 0.8, 0.3), 8.0, Vec3::new(0.1, -1.0, 0.8)),
        ])
    }

    #[test]
    fn lobe_integral_matches_quadrature() {
        let rule = crate::oracle::QuadratureRule::test();
        for s in [1e-3, 0.5, 4.0, 60.0] {
            let q: f64 = rule
                .nodes()
                .map(|n| n.weight * (-2.0 * s * (1.0 - n.dir.y)).exp())
                .sum();
            assert!((q - lobe_integral(s)).abs() < 1e-6 * q, "{s}");
        }
    }

    #[test]
    fn four_lobe_round_trip() {
        let truth = four_lobes();
        let env = pmm_to_envmap(&truth, 128, 64);
        let fit = fit_pmm_to_envmap(&env, 4, 7).unwrap();
        let err = rel_l2(&pmm_to_envmap(&fit, 128, 64), &env);
        assert!(err < 0.05, "relative error {err}");
        for t in &truth.lobes {
            let best = fit
                .lobes
                .iter()
                .map(|f| f.mean.angle_to(t.mean).to_degrees())
                .fold(f64::INFINITY, f64::min);
            assert!(best < 5.0, "mean off by {best} degrees");
        }
    }

    #[test]
    fn constant_map_gives_broad_lobe() {
        let env = EnvMap::constant(64, 32, Rgb::new(0.5, 0.5, 0.5));
        let fit = fit_pmm_to_envmap(&env, 1, 0).unwrap();
        assert!(fit.lobes[0].sharpness < 0.05, "{:?}", fit.lobes[0]);
        let err = rel_l2(&pmm_to_envmap(&fit, 64, 32), &env);
        assert!(err < 0.02, "{err}");
    }

    #[test]
    fn zero_map_gives_zero_weights() {
        let env = EnvMap::constant(16, 8, Rgb::BLACK);
        let fit = fit_pmm_to_envmap(&env, 3, 0).unwrap();
        assert_eq!(fit.len(), 3);
        assert!(fit.lobes.iter().all(|l| l.weight == Rgb::BLACK));
    }

    #[test]
    fn needs_a_lobe() {
        let env = EnvMap::constant(4, 2, Rgb::WHITE);
        assert!(matches!(fit_pmm_to_envmap(&env, 0, 0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn deterministic() {
        let env = pmm_to_envmap(&four_lobes(), 32, 16);
        assert_eq!(fit_pmm_to_envmap(&env, 6, 3).unwrap(), fit_pmm_to_envmap(&env, 6, 3).unwrap());
    }

    #[test]
    fn refine_gradient_matches_differences() {
        let env = pmm_to_envmap(&four_lobes(), 16, 8);
        let mut pixels = Vec::new();
        for y in 0..8 {
            for x in 0..16 {
                let value = env.image.get(x, y);
                pixels.push(Pixel {
                    dir: env.direction(x, y),
                    area: env.pixel_solid_angle(y),
                    value,
                    mass: value.mean(),
                });
            }
        }
        let mut lobes = four_lobes().lobes;
        lobes.iter_mut().for_each(|l| l.sharpness *= 0.7);
        let mut x = pack(&lobes, 2.0);
        x[4] *= 1.3;
        let mut g = vec![0.0; x.len()];
        refine_cost(&x, &mut g, &pixels, 2.0);
        let mut scratch = vec![0.0; x.len()];
        for i in 0..x.len() {
            let h = 1e-6;
            let mut xp = x.clone();
            xp[i] += h;
            let fp = refine_cost(&xp, &mut scratch, &pixels, 2.0);
            xp[i] -= 2.0 * h;
            let fm = refine_cost(&xp, &mut scratch, &pixels, 2.0);
            let fd = (fp - fm) / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-5 * (1.0 + fd.abs()), "{i}: {fd} vs {}", g[i]);
        }
    }
}
