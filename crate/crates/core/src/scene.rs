//! Illumination, material and observation types.
//!
//! Camera space throughout: the camera sits at the origin looking along +z, so
//! surfaces that face it have normals with a negative z component, and "front"
//! is the direction `(0, 0, -1)`. Illumination is expressed in the same frame.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{Rgb, Vec3, FRONT};

/// Lower bound on GGX roughness.
pub const ROUGHNESS_MIN: f64 = 0.01;
/// Admissible range of lobe sharpness.
pub const SHARPNESS_MIN: f64 = 1e-3;
pub const SHARPNESS_MAX: f64 = 5e2;
/// Default number of lobes per illumination.
pub const DEFAULT_LOBES: usize = 32;

/// One isotropic spherical Gaussian: `weight * exp(-2 sharpness (1 - ω·mean))`.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IsgLobe {
    pub weight: Rgb,
    pub sharpness: f64,
    pub mean: Vec3,
}

impl IsgLobe {
    pub fn new(weight: Rgb, sharpness: f64, mean: Vec3) -> Self {
        IsgLobe {
            weight,
            sharpness,
            mean: mean.normalized(),
        }
    }

    /// Clamps into the admissible parameter set.
    pub fn projected(self) -> Self {
        IsgLobe {
            weight: self.weight.map(|c| c.max(0.0)),
            sharpness: self.sharpness.clamp(SHARPNESS_MIN, SHARPNESS_MAX),
            mean: self.mean.normalized(),
        }
    }

    pub fn is_valid(&self) -> bool {
        (self.mean.length() - 1.0).abs() <= 1e-6
            && self.sharpness > 0.0
            && self.weight.is_finite()
            && self.weight.min_channel() >= 0.0
    }
}

/// Parametric mixture of ISG lobes modelling the incident light of one image.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PmmIllumination {
    pub lobes: Vec<IsgLobe>,
}

impl PmmIllumination {
    pub fn new(lobes: Vec<IsgLobe>) -> Self {
        PmmIllumination { lobes }
    }

    pub fn len(&self) -> usize {
        self.lobes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lobes.is_empty()
    }

    /// Sum of lobe weights per channel.
    pub fn total_weight(&self) -> Rgb {
        self.lobes.iter().fold(Rgb::BLACK, |acc, l| acc + l.weight)
    }

    /// Every lobe weight multiplied by `s`.
    pub fn scaled(&self, s: f64) -> Self {
        PmmIllumination {
            lobes: self
                .lobes
                .iter()
                .map(|l| IsgLobe {
                    weight: l.weight * s,
                    ..*l
                })
                .collect(),
        }
    }

    /// Lobe means rotated by `rot`.
    pub fn rotated(&self, rot: &crate::math::Mat3) -> Self {
        PmmIllumination {
            lobes: self
                .lobes
                .iter()
                .map(|l| IsgLobe {
                    mean: rot.apply(l.mean).normalized(),
                    ..*l
                })
                .collect(),
        }
    }
}

/// Lambertian + GGX material: `k_d f_d + k_s f_s(r)`.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaterialParams {
    pub k_d: Rgb,
    pub k_s: Rgb,
    pub roughness: f64,
}

impl MaterialParams {
    pub const DOF: usize = 7;

    pub fn new(k_d: Rgb, k_s: Rgb, roughness: f64) -> Self {
        MaterialParams { k_d, k_s, roughness }
    }

    pub fn projected(self) -> Self {
        MaterialParams {
            k_d: self.k_d.map(|c| c.clamp(0.0, 1.0)),
            k_s: self.k_s.map(|c| c.clamp(0.0, 1.0)),
            roughness: self.roughness.clamp(ROUGHNESS_MIN, 1.0),
        }
    }

    pub fn is_valid(&self) -> bool {
        let unit = |c: Rgb| c.0.iter().all(|v| (0.0..=1.0).contains(v));
        unit(self.k_d) && unit(self.k_s) && (ROUGHNESS_MIN..=1.0).contains(&self.roughness)
    }

    pub fn to_array(&self) -> [f64; 7] {
        let (d, s) = (self.k_d.0, self.k_s.0);
        [d[0], d[1], d[2], s[0], s[1], s[2], self.roughness]
    }
}

/// The half-angle feature between the front direction and the mirrored view direction:
/// `(2 (n·ω) n - ω + (0, 0, -1)) / 2`. Not renormalized.
pub fn half_angle(normal: Vec3, view_dir: Vec3) -> Vec3 {
    (normal * (2.0 * normal.dot(view_dir)) - view_dir + FRONT) * 0.5
}

/// One entry of an unstructured reflectance map.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub normal: Vec3,
    /// Unit direction from the surface toward the observer.
    pub view_dir: Vec3,
    pub half_angle: Vec3,
    /// Linear radiance.
    pub radiance: Rgb,
    pub material_id: usize,
    pub illum_id: usize,
}

impl Observation {
    pub fn new(
        normal: Vec3,
        view_dir: Vec3,
        radiance: Rgb,
        material_id: usize,
        illum_id: usize,
    ) -> Self {
        Observation {
            normal,
            view_dir,
            half_angle: half_angle(normal, view_dir),
            radiance,
            material_id,
            illum_id,
        }
    }

    pub fn is_back_facing(&self) -> bool {
        self.normal.dot(self.view_dir) <= 0.0
    }

    pub fn is_valid(&self) -> bool {
        (self.normal.length() - 1.0).abs() <= 1e-6
            && (self.view_dir.length() - 1.0).abs() <= 1e-6
            && self.radiance.is_finite()
            && self.radiance.min_channel() >= 0.0
            && (self.half_angle - half_angle(self.normal, self.view_dir)).length() <= 1e-6
    }
}

/// All observations plus the material × illumination incidence structure.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ObservationSet {
    pub observations: Vec<Observation>,
    pub n_materials: usize,
    pub n_illums: usize,
    /// `coverage[material][illum]`.
    pub coverage: Vec<Vec<bool>>,
}

impl ObservationSet {
    /// Builds a set and derives its coverage matrix. Fails if an index is out of range.
    pub fn new(observations: Vec<Observation>, n_materials: usize, n_illums: usize) -> Result<Self> {
        let mut coverage = vec![vec![false; n_illums]; n_materials];
        for (k, o) in observations.iter().enumerate() {
            if o.material_id >= n_materials || o.illum_id >= n_illums {
                return Err(Error::InvalidArgument(format!(
                    "observation {k} has pair ({}, {}) outside {n_materials}x{n_illums}",
                    o.material_id, o.illum_id
                )));
            }
            coverage[o.material_id][o.illum_id] = true;
        }
        Ok(ObservationSet {
            observations,
            n_materials,
            n_illums,
            coverage,
        })
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    /// Drops observations whose normal faces away from the viewer; returns how many went.
    pub fn drop_back_facing(&mut self) -> usize {
        let before = self.observations.len();
        self.observations.retain(|o| !o.is_back_facing());
        let dropped = before - self.observations.len();
        self.recompute_coverage();
        dropped
    }

    /// Removes every observation of one material/illumination pair.
    pub fn without_pair(&self, material: usize, illum: usize) -> Self {
        let mut out = self.clone();
        out.observations
            .retain(|o| !(o.material_id == material && o.illum_id == illum));
        out.recompute_coverage();
        out
    }

    pub fn recompute_coverage(&mut self) {
        for row in &mut self.coverage {
            row.iter_mut().for_each(|c| *c = false);
        }
        for o in &self.observations {
            self.coverage[o.material_id][o.illum_id] = true;
        }
    }
}

/// A connected group of materials and illuminations.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Component {
    pub materials: Vec<usize>,
    pub illums: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CoverageReport {
    pub components: Vec<Component>,
    /// `pair_counts[material][illum]` observations per pair.
    pub pair_counts: Vec<Vec<usize>>,
}

impl CoverageReport {
    pub fn is_connected(&self) -> bool {
        self.components.len() == 1
    }
}

/// Connected components of the bipartite material–illumination graph.
///
/// More than one component means the relative radiometric scale between the
/// components is not constrained by the data.
pub fn validate_observation_set(set: &ObservationSet) -> Result<CoverageReport> {
    if set.observations.is_empty() {
        return Err(Error::NoObservations);
    }
    let (m, n) = (set.n_materials, set.n_illums);
    let mut pair_counts = vec![vec![0usize; n]; m];
    for o in &set.observations {
        pair_counts[o.material_id][o.illum_id] += 1;
    }

    // union-find over materials 0..m followed by illuminations m..m+n
    let mut parent: Vec<usize> = (0..m + n).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for (i, row) in pair_counts.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            if c > 0 {
                let (a, b) = (find(&mut parent, i), find(&mut parent, m + j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }

    let mut roots: Vec<usize> = Vec::new();
    let mut components: Vec<Component> = Vec::new();
    for node in 0..m + n {
        let r = find(&mut parent, node);
        let idx = match roots.iter().position(|&x| x == r) {
            Some(idx) => idx,
            None => {
                roots.push(r);
                components.push(Component {
                    materials: Vec::new(),
                    illums: Vec::new(),
                });
                roots.len() - 1
            }
        };
        if node < m {
            components[idx].materials.push(node);
        } else {
            components[idx].illums.push(node - m);
        }
    }
    Ok(CoverageReport {
        components,
        pair_counts,
    })
}

/// Number of free parameters: 7 per material plus 6 per lobe
/// (RGB weight, sharpness and two angles for the mean).
pub fn count_variables(n_materials: usize, n_illums: usize, n_lobes: usize) -> usize {
    MaterialParams::DOF * n_materials + 6 * n_lobes * n_illums
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::Mat3;
    use proptest::prelude::*;

    fn close(a: Vec3, b: Vec3) -> bool {
        (a - b).length() < 1e-12
    }

    #[test]
    fn half_angle_examples() {
        let front = Vec3::new(0.0, 0.0, -1.0);
        assert!(close(half_angle(front, front), front));
        assert!(close(half_angle(Vec3::new(0.0, 1.0, 0.0), front), Vec3::ZERO));
        // reflected ray is (0,1,0); midpoint with (0,0,-1)
        let s = 0.5_f64.sqrt();
        let h = half_angle(Vec3::new(0.0, s, -s), front);
        assert!(close(h, Vec3::new(0.0, 0.5, -0.5)), "{h:?}");
    }

    #[test]
    fn half_angle_mirror_fixed_point() {
        // normal halfway between the view direction and front reflects view onto front
        for w in [
            Vec3::new(0.3, -0.2, -0.9).normalized(),
            Vec3::new(-0.7, 0.1, -0.4).normalized(),
        ] {
            let n = (w + FRONT).normalized();
            assert!(close(w.reflect(n), FRONT));
            assert!((half_angle(n, w) - FRONT).length() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn half_angle_equivariant_under_z_rotation(
            angle in 0.0..6.28f64, nx in -0.7..0.7f64, ny in -0.7..0.7f64,
            wx in -0.7..0.7f64, wy in -0.7..0.7f64,
        ) {
            let n = Vec3::new(nx, ny, -1.0).normalized();
            let w = Vec3::new(wx, wy, -1.0).normalized();
            let rot = Mat3::rotation(Vec3::new(0.0, 0.0, 1.0), angle);
            let lhs = half_angle(rot.apply(n), rot.apply(w));
            let rhs = rot.apply(half_angle(n, w));
            prop_assert!((lhs - rhs).length() < 1e-12);
        }

        #[test]
        fn count_variables_linear(m in 1usize..50, n in 1usize..50, np in 1usize..64) {
            let base = count_variables(m, n, np);
            prop_assert_eq!(count_variables(m + 1, n, np) - base, 7);
            prop_assert_eq!(count_variables(m, n + 1, np) - base, 6 * np);
        }
    }

    #[test]
    fn count_variables_examples() {
        assert_eq!(count_variables(5, 5, 32), 995);
        assert_eq!(count_variables(1, 1, 1), 13);
        assert_eq!(count_variables(2, 3, 32), 590);
    }

    fn obs(m: usize, i: usize) -> Observation {
        let front = Vec3::new(0.0, 0.0, -1.0);
        Observation::new(front, front, Rgb::splat(0.5), m, i)
    }

    fn set_from_pairs(pairs: &[(usize, usize)], m: usize, n: usize) -> ObservationSet {
        ObservationSet::new(pairs.iter().map(|&(a, b)| obs(a, b)).collect(), m, n).unwrap()
    }

    #[test]
    fn full_matrix_is_one_component() {
        let pairs: Vec<_> = (0..3).flat_map(|i| (0..3).map(move |j| (i, j))).collect();
        let r = validate_observation_set(&set_from_pairs(&pairs, 3, 3)).unwrap();
        assert_eq!(r.components.len(), 1);
        assert_eq!(r.pair_counts[2][1], 1);
    }

    #[test]
    fn disjoint_pairs_are_two_components() {
        let r = validate_observation_set(&set_from_pairs(&[(0, 0), (1, 1)], 2, 2)).unwrap();
        assert_eq!(r.components.len(), 2);
        assert_eq!(r.components[0].materials, vec![0]);
        assert_eq!(r.components[0].illums, vec![0]);
    }

    #[test]
    fn star_is_connected() {
        let mut pairs: Vec<_> = (0..4).map(|j| (0, j)).collect();
        pairs.extend([(1, 0), (2, 1), (3, 2)]);
        let r = validate_observation_set(&set_from_pairs(&pairs, 4, 4)).unwrap();
        assert!(r.is_connected());
    }

    #[test]
    fn empty_set_is_an_error() {
        let set = ObservationSet::new(vec![], 1, 1).unwrap();
        assert!(matches!(
            validate_observation_set(&set),
            Err(Error::NoObservations)
        ));
    }

    #[test]
    fn out_of_range_ids_rejected() {
        assert!(ObservationSet::new(vec![obs(2, 0)], 2, 1).is_err());
    }

    #[test]
    fn coverage_tracks_pairs() {
        let set = set_from_pairs(&[(0, 1), (1, 0)], 2, 2);
        assert_eq!(set.coverage, vec![vec![false, true], vec![true, false]]);
        let reduced = set.without_pair(0, 1);
        assert_eq!(reduced.coverage, vec![vec![false, false], vec![true, false]]);
    }

    #[test]
    fn observation_validity() {
        let o = obs(0, 0);
        assert!(o.is_valid());
        let mut bad = o;
        bad.half_angle = Vec3::ZERO;
        assert!(!bad.is_valid());
    }
}
