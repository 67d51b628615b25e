//! Synthetic sphere renderer, observation extraction and random scenes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::brdf::{ggx_unit, lambert_unit};
use crate::error::{Error, Result};
use crate::image::{EnvMap, RgbImage};
use crate::math::{uniform_sphere, Rgb, Vec3, FRONT};
use crate::oracle::{diffuse_unit_response, specular_unit_response, QuadratureRule};
use crate::scene::{IsgLobe, MaterialParams, Observation, ObservationSet, PmmIllumination};

/// Material id of pixels that show no object.
pub const BACKGROUND: u16 = u16::MAX;

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Projection {
    Orthographic,
    /// Pinhole at distance `distance` from the sphere centre.
    Perspective { fov_deg: f64, distance: f64 },
}

/// Camera looking along +z at a unit sphere centred on the origin. Image rows
/// run top to bottom, so pixel `(x, y)` sees `+x` to the right and `+y` up.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub width: usize,
    pub height: usize,
    pub projection: Projection,
}

impl Camera {
    pub fn orthographic(size: usize) -> Self {
        Camera {
            width: size,
            height: size,
            projection: Projection::Orthographic,
        }
    }

    pub fn perspective(size: usize, fov_deg: f64, distance: f64) -> Self {
        Camera {
            width: size,
            height: size,
            projection: Projection::Perspective { fov_deg, distance },
        }
    }

    fn ndc(&self, x: usize, y: usize) -> (f64, f64) {
        (
            2.0 * (x as f64 + 0.5) / self.width as f64 - 1.0,
            1.0 - 2.0 * (y as f64 + 0.5) / self.height as f64,
        )
    }

    /// Unit direction from a surface point seen through pixel `(x, y)` toward
    /// the camera.
    pub fn view_dir(&self, x: usize, y: usize) -> Vec3 {
        match self.projection {
            Projection::Orthographic => FRONT,
            Projection::Perspective { fov_deg, .. } => {
                let (u, v) = self.ndc(x, y);
                let t = (0.5 * fov_deg.to_radians()).tan();
                -Vec3::new(u * t, v * t, 1.0).normalized()
            }
        }
    }

    /// Normal of the unit sphere at the first hit through pixel `(x, y)`.
    pub fn sphere_normal(&self, x: usize, y: usize) -> Option<Vec3> {
        match self.projection {
            Projection::Orthographic => {
                let (u, v) = self.ndc(x, y);
                let r2 = u * u + v * v;
                (r2 < 1.0).then(|| Vec3::new(u, v, -(1.0 - r2).sqrt()))
            }
            Projection::Perspective { distance, .. } => {
                let origin = Vec3::new(0.0, 0.0, -distance);
                let dir = -self.view_dir(x, y);
                let b = origin.dot(dir);
                let disc = b * b - (origin.length_squared() - 1.0);
                if disc <= 0.0 {
                    return None;
                }
                let s = -b - disc.sqrt();
                (s > 0.0).then(|| (origin + dir * s).normalized())
            }
        }
    }
}

/// Incident light in the camera frame.
#[derive(Copy, Clone, Debug)]
pub enum Illumination<'a> {
    Pmm(&'a PmmIllumination),
    Env(&'a EnvMap),
}

/// Envmap pixels flattened to `(direction, radiance × solid angle)`.
struct EnvSamples(Vec<(Vec3, Rgb)>);

impl EnvSamples {
    fn new(env: &EnvMap) -> Self {
        let mut v = Vec::with_capacity(env.width() * env.height());
        for y in 0..env.height() {
            let da = env.pixel_solid_angle(y);
            for x in 0..env.width() {
                let l = env.image.get(x, y);
                if l.max_channel() > 0.0 {
                    v.push((env.direction(x, y), l * da));
                }
            }
        }
        EnvSamples(v)
    }
}

/// Diffuse and specular radiance at one surface point, kept apart so that the
/// full result is exactly their sum.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct Shading {
    pub diffuse: Rgb,
    pub specular: Rgb,
}

impl Shading {
    pub fn total(&self) -> Rgb {
        self.diffuse + self.specular
    }
}

/// Reflected radiance of a PMM: per-lobe quadrature, then `k_d ⊙ Σ w D + k_s ⊙ Σ w S`.
pub fn shade_pmm(
    pmm: &PmmIllumination,
    rho: &MaterialParams,
    n: Vec3,
    wo: Vec3,
    rule: &QuadratureRule,
) -> Shading {
    let mut d = Rgb::BLACK;
    let mut s = Rgb::BLACK;
    let want_specular = rho.k_s.max_channel() != 0.0;
    for l in &pmm.lobes {
        if l.weight.max_channel() == 0.0 {
            continue;
        }
        d += l.weight * diffuse_unit_response(l.mean, l.sharpness, n, wo, rule);
        if want_specular {
            s += l.weight * specular_unit_response(l.mean, l.sharpness, n, wo, rho.roughness, rule);
        }
    }
    Shading {
        diffuse: rho.k_d.mul_elem(d),
        specular: rho.k_s.mul_elem(s),
    }
}

fn shade_env(samples: &EnvSamples, rho: &MaterialParams, n: Vec3, wo: Vec3) -> Shading {
    let mut d = Rgb::BLACK;
    let mut s = Rgb::BLACK;
    for &(wi, l) in &samples.0 {
        let cos = n.dot(wi);
        if cos <= 0.0 {
            continue;
        }
        d += l * (lambert_unit(n, wi, wo) * cos);
        s += l * (ggx_unit(n, wi, wo, rho.roughness) * cos);
    }
    Shading {
        diffuse: rho.k_d.mul_elem(d),
        specular: rho.k_s.mul_elem(s),
    }
}

/// Per-pixel shading of one sphere, in f64.
pub fn shade_sphere(
    illum: Illumination,
    rho: &MaterialParams,
    camera: &Camera,
    rule: &QuadratureRule,
) -> Vec<Option<Shading>> {
    let env = match illum {
        Illumination::Env(e) => Some(EnvSamples::new(e)),
        Illumination::Pmm(_) => None,
    };
    let mut out = Vec::with_capacity(camera.width * camera.height);
    for y in 0..camera.height {
        for x in 0..camera.width {
            out.push(camera.sphere_normal(x, y).map(|n| {
                let wo = camera.view_dir(x, y);
                match (illum, &env) {
                    (Illumination::Pmm(p), _) => shade_pmm(p, rho, n, wo, rule),
                    (Illumination::Env(_), Some(samples)) => shade_env(samples, rho, n, wo),
                    (Illumination::Env(_), None) => unreachable!(),
                }
            }));
        }
    }
    out
}

/// One rendered image with its label maps.
#[derive(Clone, Debug, PartialEq)]
pub struct RenderedView {
    pub radiance: RgbImage,
    /// Camera-space normals stored as RGB.
    pub normals: RgbImage,
    pub material_ids: Vec<u16>,
    pub illum_id: usize,
    pub camera: Camera,
}

impl RenderedView {
    pub fn foreground_count(&self) -> usize {
        self.material_ids.iter().filter(|&&m| m != BACKGROUND).count()
    }
}

/// Renders a unit sphere of one material.
pub fn render_sphere(
    illum: Illumination,
    rho: &MaterialParams,
    material_id: u16,
    illum_id: usize,
    camera: &Camera,
    rule: &QuadratureRule,
) -> RenderedView {
    let shading = shade_sphere(illum, rho, camera, rule);
    let (w, h) = (camera.width, camera.height);
    let mut radiance = RgbImage::new(w, h);
    let mut normals = RgbImage::new(w, h);
    let mut material_ids = vec![BACKGROUND; w * h];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if let (Some(s), Some(n)) = (shading[i], camera.sphere_normal(x, y)) {
                radiance.set(x, y, s.total());
                normals.set(x, y, Rgb::new(n.x, n.y, n.z));
                material_ids[i] = material_id;
            }
        }
    }
    RenderedView {
        radiance,
        normals,
        material_ids,
        illum_id,
        camera: *camera,
    }
}

/// How stored pixel values map to linear radiance.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Encoding {
    Linear,
    Gamma(f64),
}

/// Observations of every foreground pixel; back-facing pixels are skipped and
/// counted in the second return value.
pub fn extract_urm(view: &RenderedView, encoding: Encoding, exposure: f64) -> (Vec<Observation>, usize) {
    let mut out = Vec::new();
    let mut dropped = 0;
    for y in 0..view.radiance.height {
        for x in 0..view.radiance.width {
            let id = view.material_ids[y * view.radiance.width + x];
            if id == BACKGROUND {
                continue;
            }
            let raw = view.radiance.get(x, y);
            let linear = match encoding {
                Encoding::Linear => raw,
                Encoding::Gamma(g) => raw.map(|v| v.max(0.0).powf(g)),
            };
            let nm = view.normals.get(x, y);
            let obs = Observation::new(
                Vec3::new(nm[0], nm[1], nm[2]).normalized(),
                view.camera.view_dir(x, y),
                linear * exposure,
                id as usize,
                view.illum_id,
            );
            if obs.is_back_facing() {
                dropped += 1;
            } else {
                out.push(obs);
            }
        }
    }
    (out, dropped)
}

/// Parameters and incidence pattern a synthetic dataset was rendered from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub materials: Vec<MaterialParams>,
    pub illuminations: Vec<PmmIllumination>,
    /// `mask[material][illum]`.
    pub mask: Vec<Vec<bool>>,
    pub camera: Camera,
}

pub struct MatrixDataset {
    pub set: ObservationSet,
    pub views: Vec<RenderedView>,
    pub truth: GroundTruth,
}

/// Renders one sphere per masked pair and gathers their observations.
pub fn generate_matrix_dataset(
    materials: &[MaterialParams],
    illums: &[PmmIllumination],
    mask: &[Vec<bool>],
    camera: &Camera,
    rule: &QuadratureRule,
) -> Result<MatrixDataset> {
    if mask.len() != materials.len() || mask.iter().any(|row| row.len() != illums.len()) {
        return Err(Error::DimensionMismatch(format!(
            "mask must be {}x{}",
            materials.len(),
            illums.len()
        )));
    }
    if !mask.iter().flatten().any(|&b| b) {
        return Err(Error::InvalidArgument("mask selects no pairs".into()));
    }
    if materials.len() > BACKGROUND as usize {
        return Err(Error::InvalidArgument("too many materials".into()));
    }
    let mut views = Vec::new();
    let mut observations = Vec::new();
    for (i, pmm) in illums.iter().enumerate() {
        for (m, rho) in materials.iter().enumerate() {
            if !mask[m][i] {
                continue;
            }
            let view = render_sphere(Illumination::Pmm(pmm), rho, m as u16, i, camera, rule);
            observations.extend(extract_urm(&view, Encoding::Linear, 1.0).0);
            views.push(view);
        }
    }
    Ok(MatrixDataset {
        set: ObservationSet::new(observations, materials.len(), illums.len())?,
        views,
        truth: GroundTruth {
            materials: materials.to_vec(),
            illuminations: illums.to_vec(),
            mask: mask.to_vec(),
            camera: *camera,
        },
    })
}

pub fn full_mask(m: usize, n: usize) -> Vec<Vec<bool>> {
    vec![vec![true; n]; m]
}

/// Row 0 full, otherwise only the diagonal.
pub fn star_mask(m: usize, n: usize) -> Vec<Vec<bool>> {
    (0..m)
        .map(|a| (0..n).map(|b| a == 0 || a == b).collect())
        .collect()
}

/// Parses `full`, `star`, `diagonal`, or rows of `0`/`1` separated by `/`
/// (e.g. `110/011/101`).
pub fn parse_mask(pattern: &str, m: usize, n: usize) -> Result<Vec<Vec<bool>>> {
    match pattern.trim() {
        "full" => Ok(full_mask(m, n)),
        "star" => Ok(star_mask(m, n)),
        "diagonal" => Ok((0..m).map(|a| (0..n).map(|b| a == b).collect()).collect()),
        rows => {
            let mask: Vec<Vec<bool>> = rows
                .split('/')
                .map(|r| {
                    r.trim()
                        .chars()
                        .map(|c| match c {
                            '1' => Ok(true),
                            '0' => Ok(false),
                            _ => Err(Error::Parse(format!("bad mask character {c:?}"))),
                        })
                        .collect()
                })
                .collect::<Result<_>>()?;
            if mask.len() != m || mask.iter().any(|r| r.len() != n) {
                return Err(Error::DimensionMismatch(format!("mask {pattern:?} is not {m}x{n}")));
            }
            Ok(mask)
        }
    }
}

/// A plausible random environment: a sharp sun, a few mid-size sources and a
/// broad sky. `colored` tints each lobe independently.
pub fn random_illumination<R: Rng>(rng: &mut R, colored: bool) -> PmmIllumination {
    let tint = |rng: &mut R| {
        if colored {
            Rgb::new(rng.gen_range(0.3..1.0), rng.gen_range(0.3..1.0), rng.gen_range(0.3..1.0))
        } else {
            let t = rng.gen_range(-0.05..0.05);
            Rgb::new(1.0 + t, 1.0, 1.0 - t)
        }
    };
    let dir = |rng: &mut R| uniform_sphere(rng.gen(), rng.gen());
    let mut lobes = Vec::new();
    let sun = dir(rng);
    let t = tint(rng);
    lobes.push(IsgLobe::new(t * rng.gen_range(3.0..6.0), rng.gen_range(20.0..60.0), sun));
    for _ in 0..4 {
        let d = dir(rng);
        let t = tint(rng);
        lobes.push(IsgLobe::new(t * rng.gen_range(0.3..1.2), rng.gen_range(2.0..10.0), d));
    }
    let sky = Vec3::new(rng.gen_range(-0.3..0.3), 1.0, rng.gen_range(-0.3..0.3));
    let t = tint(rng);
    lobes.push(IsgLobe::new(t * rng.gen_range(0.2..0.5), rng.gen_range(0.2..1.0), sky));
    PmmIllumination::new(lobes)
}

pub fn random_material<R: Rng>(rng: &mut R) -> MaterialParams {
    let k_d = Rgb::new(rng.gen_range(0.1..0.8), rng.gen_range(0.1..0.8), rng.gen_range(0.1..0.8));
    let k_s = Rgb::splat(rng.gen_range(0.05..0.4));
    MaterialParams::new(k_d, k_s, rng.gen_range(0.1..0.5))
}

/// `m` random materials and `n` random illuminations. Each item has its own
/// random stream, so smaller scenes of one seed are prefixes of larger ones.
pub fn random_scene(
    m: usize,
    n: usize,
    seed: u64,
    colored: bool,
) -> (Vec<MaterialParams>, Vec<PmmIllumination>) {
    let stream = |k: usize| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(k as u64);
        rng
    };
    let materials = (0..m).map(|j| random_material(&mut stream(2 * j))).collect();
    let illums = (0..n).map(|i| random_illumination(&mut stream(2 * i + 1), colored)).collect();
    (materials, illums)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::pmm_to_envmap;
    use crate::scene::validate_observation_set;

    #[test]
    fn smaller_scenes_are_prefixes() {
        let (m5, i5) = random_scene(5, 4, 9, true);
        let (m2, i3) = random_scene(2, 3, 9, true);
        assert_eq!(&m5[..2], &m2[..]);
        assert_eq!(&i5[..3], &i3[..]);
        assert_ne!(m5[0], m5[1]);
    }

    fn rule() -> QuadratureRule {
        QuadratureRule::new(32, 64)
    }

    #[test]
    fn zero_light_is_black() {
        let pmm = PmmIllumination::new(vec![IsgLobe::new(Rgb::BLACK, 3.0, FRONT)]);
        let rho = MaterialParams::new(Rgb::WHITE, Rgb::WHITE, 0.3);
        let v = render_sphere(Illumination::Pmm(&pmm), &rho, 0, 0, &Camera::orthographic(8), &rule());
        assert!(v.radiance.data.iter().all(|p| *p == [0.0; 3]));
        assert!(v.foreground_count() > 0);
    }

    #[test]
    fn furnace_sphere() {
        let env = EnvMap::constant(64, 32, Rgb::WHITE);
        let rho = MaterialParams::new(Rgb::WHITE, Rgb::BLACK, 0.3);
        let cam = Camera::orthographic(12);
        let v = render_sphere(Illumination::Env(&env), &rho, 0, 0, &cam, &rule());
        for (p, id) in v.radiance.data.iter().zip(&v.material_ids) {
            if *id != BACKGROUND {
                for c in p {
                    assert!((c - 1.0).abs() < 0.01, "{p:?}");
                }
            }
        }
        // constant light as a near-flat lobe through the lobe path
        let pmm = PmmIllumination::new(vec![IsgLobe::new(Rgb::WHITE, 1e-4, FRONT)]);
        let v = render_sphere(Illumination::Pmm(&pmm), &rho, 0, 0, &cam, &rule());
        for (p, id) in v.radiance.data.iter().zip(&v.material_ids) {
            if *id != BACKGROUND {
                assert!((p[0] - 1.0).abs() < 0.01, "{p:?}");
            }
        }
    }

    #[test]
    fn pmm_and_envmap_paths_agree() {
        let pmm = PmmIllumination::new(vec![
            IsgLobe::new(Rgb::new(1.0, 0.8, 0.6), 6.0, Vec3::new(0.3, 0.6, -1.0)),
            IsgLobe::new(Rgb::new(0.2, 0.3, 0.5), 1.0, Vec3::new(-0.5, 1.0, 0.2)),
        ]);
        let env = pmm_to_envmap(&pmm, 256, 128);
        let rho = MaterialParams::new(Rgb::new(0.6, 0.5, 0.4), Rgb::splat(0.3), 0.35);
        let cam = Camera::orthographic(10);
        let a = shade_sphere(Illumination::Pmm(&pmm), &rho, &cam, &QuadratureRule::test());
        let b = shade_sphere(Illumination::Env(&env), &rho, &cam, &QuadratureRule::test());
        let (mut sum, mut count) = (0.0, 0);
        for (a, b) in a.iter().zip(&b) {
            if let (Some(a), Some(b)) = (a, b) {
                let (a, b) = (a.total(), b.total());
                for c in 0..3 {
                    sum += (a[c] - b[c]).abs() / (a[c] + 1e-3);
                    count += 1;
                }
            }
        }
        let mean = sum / count as f64;
        assert!(mean < 0.02, "{mean}");
    }

    #[test]
    fn linear_and_additive() {
        let (mats, ills) = random_scene(1, 1, 4, true);
        let cam = Camera::orthographic(6);
        let r = rule();
        let base = shade_sphere(Illumination::Pmm(&ills[0]), &mats[0], &cam, &r);
        let doubled = ills[0].scaled(2.0);
        let twice = shade_sphere(Illumination::Pmm(&doubled), &mats[0], &cam, &r);
        let d_only = MaterialParams { k_s: Rgb::BLACK, ..mats[0] };
        let s_only = MaterialParams { k_d: Rgb::BLACK, ..mats[0] };
        let d = shade_sphere(Illumination::Pmm(&ills[0]), &d_only, &cam, &r);
        let s = shade_sphere(Illumination::Pmm(&ills[0]), &s_only, &cam, &r);
        for i in 0..base.len() {
            let Some(b) = base[i] else { continue };
            assert_eq!(twice[i].unwrap().total(), b.total() * 2.0);
            assert_eq!(d[i].unwrap().total() + s[i].unwrap().total(), b.total());
        }
        let scaled = ills[0].scaled(0.37);
        let lin = shade_sphere(Illumination::Pmm(&scaled), &mats[0], &cam, &r);
        for i in 0..base.len() {
            let Some(b) = base[i] else { continue };
            let l = lin[i].unwrap().total();
            for c in 0..3 {
                assert!((l[c] - 0.37 * b.total()[c]).abs() <= 1e-12 * b.total()[c].max(1e-300));
            }
        }
    }

    #[test]
    fn image_level_linearity_is_exact_for_powers_of_two() {
        let (mats, ills) = random_scene(1, 1, 9, false);
        let cam = Camera::orthographic(6);
        let a = render_sphere(Illumination::Pmm(&ills[0]), &mats[0], 0, 0, &cam, &rule());
        let b = render_sphere(Illumination::Pmm(&ills[0].scaled(0.5)), &mats[0], 0, 0, &cam, &rule());
        for (p, q) in a.radiance.data.iter().zip(&b.radiance.data) {
            for c in 0..3 {
                assert_eq!(p[c] * 0.5, q[c]);
            }
        }
    }

    #[test]
    fn extraction_accounting() {
        let (mats, ills) = random_scene(1, 1, 1, false);
        let cam = Camera::orthographic(9);
        let v = render_sphere(Illumination::Pmm(&ills[0]), &mats[0], 0, 3, &cam, &rule());
        let (obs, dropped) = extract_urm(&v, Encoding::Linear, 1.0);
        assert_eq!(obs.len() + dropped, v.foreground_count());
        for o in &obs {
            assert_eq!(o.illum_id, 3);
            assert!(o.is_valid());
        }
        // linear pass-through
        let first = v.material_ids.iter().position(|&m| m != BACKGROUND).unwrap();
        let (x, y) = (first % 9, first / 9);
        assert_eq!(obs[0].radiance, v.radiance.get(x, y));
    }

    #[test]
    fn gamma_decoding() {
        let mut v = RenderedView {
            radiance: RgbImage::new(1, 1),
            normals: RgbImage::new(1, 1),
            material_ids: vec![0],
            illum_id: 0,
            camera: Camera::orthographic(1),
        };
        v.radiance.set(0, 0, Rgb::splat(0.5));
        v.normals.set(0, 0, Rgb::new(0.0, 0.0, -1.0));
        let (obs, _) = extract_urm(&v, Encoding::Gamma(2.2), 1.0);
        assert!((obs[0].radiance[0] - 0.217_637_640_824).abs() < 1e-9);
    }

    #[test]
    fn back_facing_pixels_are_dropped() {
        let mut v = RenderedView {
            radiance: RgbImage::new(2, 1),
            normals: RgbImage::new(2, 1),
            material_ids: vec![0, 0],
            illum_id: 0,
            camera: Camera::orthographic(2),
        };
        v.camera.height = 1;
        v.normals.set(0, 0, Rgb::new(0.0, 0.0, -1.0));
        v.normals.set(1, 0, Rgb::new(0.0, 0.0, 1.0));
        let (obs, dropped) = extract_urm(&v, Encoding::Linear, 1.0);
        assert_eq!((obs.len(), dropped), (1, 1));
    }

    #[test]
    fn perspective_sees_less_than_a_hemisphere() {
        let cam = Camera::perspective(32, 40.0, 4.0);
        let mut seen = 0;
        for y in 0..32 {
            for x in 0..32 {
                if let Some(n) = cam.sphere_normal(x, y) {
                    seen += 1;
                    let wo = cam.view_dir(x, y);
                    assert!(n.dot(wo) > 0.0);
                    assert!((n.length() - 1.0).abs() < 1e-12);
                }
            }
        }
        assert!(seen > 100);
        // the centre pixel looks straight at the sphere
        let n = Camera::perspective(33, 40.0, 4.0).sphere_normal(16, 16).unwrap();
        assert!((n - FRONT).length() < 1e-9);
    }

    #[test]
    fn matrix_dataset_shapes() {
        let (mats, ills) = random_scene(3, 3, 2, false);
        let cam = Camera::orthographic(6);
        let ds = generate_matrix_dataset(&mats, &ills, &full_mask(3, 3), &cam, &rule()).unwrap();
        assert_eq!(ds.views.len(), 9);
        assert!(validate_observation_set(&ds.set).unwrap().is_connected());
        let star = generate_matrix_dataset(&mats, &ills, &star_mask(3, 3), &cam, &rule()).unwrap();
        assert_eq!(star.views.len(), 5);
        assert!(validate_observation_set(&star.set).unwrap().is_connected());
        let empty = vec![vec![false; 3]; 3];
        assert!(generate_matrix_dataset(&mats, &ills, &empty, &cam, &rule()).is_err());
    }

    #[test]
    fn mask_patterns() {
        assert_eq!(parse_mask("10/01", 2, 2).unwrap(), vec![vec![true, false], vec![false, true]]);
        assert_eq!(parse_mask("full", 2, 3).unwrap(), full_mask(2, 3));
        assert!(parse_mask("1x/01", 2, 2).is_err());
        assert!(parse_mask("10", 2, 2).is_err());
    }

    #[test]
    fn random_scene_is_deterministic() {
        assert_eq!(random_scene(2, 2, 5, true), random_scene(2, 2, 5, true));
        assert_ne!(random_scene(2, 2, 5, true), random_scene(2, 2, 6, true));
    }
}
