//! Joint estimation of per-image illumination and per-material reflectance.
//!
//! The unknowns are packed into one unconstrained vector. Per lobe:
//! `[ln w (3), ln σ, mean (3, normalized on use)]`; per material:
//! `[logit k_d (3), logit k_s (3), logit of r rescaled to [r_min, 1]]`.
//! Illuminations come first, then materials.

use std::path::Path;
use std::time::Instant;

use log::{info, warn};
use ndarray::{Array1, Array2, ArrayView1};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{from_toml, read_text, to_toml, write_text};
use crate::error::{Error, Result};
use crate::lbfgs::{minimize, LbfgsConfig};
use crate::math::{fibonacci_sphere, logistic, logit, Rgb, Vec3};
use crate::nn::{NetKind, Tape, INPUT_DIM};
use crate::scene::{
    count_variables, validate_observation_set, IsgLobe, MaterialParams, Observation, ObservationSet,
    PmmIllumination, DEFAULT_LOBES, ROUGHNESS_MIN, SHARPNESS_MAX, SHARPNESS_MIN,
};
use crate::surrogate::{raw_features, slot, NetScalar, Surrogate};

pub const LOBE_PARAMS: usize = 7;
pub const MATERIAL_PARAMS: usize = 7;

/// Initial lobe sharpness.
pub const INIT_SHARPNESS: f64 = 4.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub n_lobes: usize,
    /// Weight λ of the illumination chromaticity prior.
    pub prior_weight: f64,
    pub batch_size: usize,
    /// Stop once this many passes over the observations have been drawn.
    pub epochs_target: f64,
    pub lbfgs_history: usize,
    pub inner_iters: usize,
    /// Full-cost evaluation period, in batches.
    pub full_cost_every: usize,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            n_lobes: DEFAULT_LOBES,
            prior_weight: 0.1,
            batch_size: 4096,
            epochs_target: 5.0,
            lbfgs_history: 10,
            inner_iters: 20,
            full_cost_every: 5,
            seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.n_lobes > 0
            && self.prior_weight >= 0.0
            && self.prior_weight.is_finite()
            && self.batch_size > 0
            && self.epochs_target > 0.0
            && self.lbfgs_history > 0
            && self.inner_iters > 0
            && self.full_cost_every > 0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid solver configuration {self:?}")))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateState {
    pub illuminations: Vec<PmmIllumination>,
    pub materials: Vec<MaterialParams>,
}

impl EstimateState {
    pub fn n_lobes(&self) -> usize {
        self.illuminations.first().map_or(0, |p| p.len())
    }
}

/// Layout of the packed parameter vector.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct Packing {
    pub n_illums: usize,
    pub n_materials: usize,
    pub n_lobes: usize,
}

impl Packing {
    pub fn len(&self) -> usize {
        self.n_illums * self.n_lobes * LOBE_PARAMS + self.n_materials * MATERIAL_PARAMS
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn lobe_offset(&self, illum: usize, lobe: usize) -> usize {
        (illum * self.n_lobes + lobe) * LOBE_PARAMS
    }

    #[inline]
    pub fn material_offset(&self, material: usize) -> usize {
        self.n_illums * self.n_lobes * LOBE_PARAMS + material * MATERIAL_PARAMS
    }

    pub fn of(state: &EstimateState) -> Packing {
        Packing {
            n_illums: state.illuminations.len(),
            n_materials: state.materials.len(),
            n_lobes: state.n_lobes(),
        }
    }

    pub fn pack(&self, state: &EstimateState) -> Vec<f64> {
        let mut x = vec![0.0; self.len()];
        for (i, pmm) in state.illuminations.iter().enumerate() {
            for (l, lobe) in pmm.lobes.iter().enumerate() {
                let o = self.lobe_offset(i, l);
                for c in 0..3 {
                    x[o + c] = lobe.weight[c].ln();
                }
                x[o + 3] = lobe.sharpness.ln();
                x[o + 4..o + 7].copy_from_slice(&lobe.mean.to_array());
            }
        }
        for (m, rho) in state.materials.iter().enumerate() {
            let o = self.material_offset(m);
            for c in 0..3 {
                x[o + c] = logit(rho.k_d[c]);
                x[o + 3 + c] = logit(rho.k_s[c]);
            }
            x[o + 6] = logit((rho.roughness - ROUGHNESS_MIN) / (1.0 - ROUGHNESS_MIN));
        }
        x
    }

    pub fn unpack(&self, x: &[f64]) -> EstimateState {
        let dec = Decoded::new(self, x);
        EstimateState {
            illuminations: (0..self.n_illums)
                .map(|i| {
                    PmmIllumination::new(
                        (0..self.n_lobes)
                            .map(|l| {
                                let d = &dec.lobes[i * self.n_lobes + l];
                                IsgLobe {
                                    weight: d.weight,
                                    sharpness: d.log_sharpness.exp(),
                                    mean: d.mean,
                                }
                            })
                            .collect(),
                    )
                })
                .collect(),
            materials: dec.materials.iter().map(|d| d.params).collect(),
        }
    }
}

struct DecodedLobe {
    weight: Rgb,
    /// Clamped into the admissible range.
    log_sharpness: f64,
    sharpness_free: bool,
    mean: Vec3,
    raw_mean_len: f64,
}

struct DecodedMaterial {
    params: MaterialParams,
    /// `dr/du` of the roughness parameter.
    roughness_slope: f64,
}

struct Decoded {
    lobes: Vec<DecodedLobe>,
    materials: Vec<DecodedMaterial>,
}

impl Decoded {
    fn new(p: &Packing, x: &[f64]) -> Self {
        let (lo, hi) = (SHARPNESS_MIN.ln(), SHARPNESS_MAX.ln());
        let lobes = (0..p.n_illums * p.n_lobes)
            .map(|k| {
                let v = &x[k * LOBE_PARAMS..(k + 1) * LOBE_PARAMS];
                let raw = Vec3::new(v[4], v[5], v[6]);
                DecodedLobe {
                    weight: Rgb::new(v[0].exp(), v[1].exp(), v[2].exp()),
                    log_sharpness: v[3].clamp(lo, hi),
                    sharpness_free: v[3] > lo && v[3] < hi,
                    mean: raw.normalized(),
                    raw_mean_len: raw.length(),
                }
            })
            .collect();
        let materials = (0..p.n_materials)
            .map(|m| {
                let o = p.material_offset(m);
                let s = logistic(x[o + 6]);
                DecodedMaterial {
                    params: MaterialParams {
                        k_d: Rgb::new(logistic(x[o]), logistic(x[o + 1]), logistic(x[o + 2])),
                        k_s: Rgb::new(logistic(x[o + 3]), logistic(x[o + 4]), logistic(x[o + 5])),
                        roughness: ROUGHNESS_MIN + (1.0 - ROUGHNESS_MIN) * s,
                    },
                    roughness_slope: (1.0 - ROUGHNESS_MIN) * s * (1.0 - s),
                }
            })
            .collect();
        Decoded { lobes, materials }
    }
}

/// Observations per network evaluation chunk.
const CHUNK: usize = 128;

/// Chromatic variance of one illumination's summed lobe weights and its
/// gradient with respect to that sum.
pub fn chroma_variance(pmm: &PmmIllumination) -> (f64, Rgb) {
    let s = pmm.total_weight();
    let mean = s.mean();
    let dev = s.map(|v| v - mean);
    let var = (dev[0] * dev[0] + dev[1] * dev[1] + dev[2] * dev[2]) / 3.0;
    (var, dev * (2.0 / 3.0))
}

/// `Σ_illums V(Σ_lobes w)` over RGB channels.
pub fn prior(illuminations: &[PmmIllumination]) -> f64 {
    illuminations.iter().map(|p| chroma_variance(p).0).sum()
}

/// Radiance predicted by the surrogate for one observation, in f64.
pub fn predict_radiance(surrogate: &Surrogate, state: &EstimateState, obs: &Observation) -> Rgb {
    let rho = &state.materials[obs.material_id];
    state.illuminations[obs.illum_id]
        .lobes
        .iter()
        .map(|l| surrogate.reflect_lobe(l, rho, obs.normal, obs.view_dir))
        .fold(Rgb::BLACK, |a, b| a + b)
}

/// `o_L - prediction`.
pub fn data_residual(surrogate: &Surrogate, state: &EstimateState, obs: &Observation) -> Rgb {
    obs.radiance - predict_radiance(surrogate, state, obs)
}

/// Cost and gradient over the packed vector for subsets of the observations.
pub struct Objective<'a> {
    pub surrogate: &'a Surrogate,
    pub set: &'a ObservationSet,
    pub packing: Packing,
    pub prior_weight: f64,
}

struct ChunkBuffers<T: NetScalar> {
    xd: Array2<T>,
    xs: Array2<T>,
    tape_d: Tape<T>,
    tape_s: Tape<T>,
}

impl<'a> Objective<'a> {
    pub fn new(surrogate: &'a Surrogate, set: &'a ObservationSet, n_lobes: usize, prior_weight: f64) -> Self {
        Objective {
            surrogate,
            set,
            packing: Packing {
                n_illums: set.n_illums,
                n_materials: set.n_materials,
                n_lobes,
            },
            prior_weight,
        }
    }

    /// `Σ_{o ∈ subset} ‖o_L − prediction‖²`, optionally accumulating its gradient.
    pub fn data_cost<T: NetScalar>(&self, x: &[f64], subset: &[usize], mut grad: Option<&mut [f64]>) -> f64 {
        let p = &self.packing;
        let dec = Decoded::new(p, x);
        let n_p = p.n_lobes;
        let want = grad.is_some();
        let mut gbuf = if want { vec![0.0; p.len()] } else { Vec::new() };
        let net_d = T::net(self.surrogate, NetKind::Diffuse);
        let net_s = T::net(self.surrogate, NetKind::Specular);
        let mut cost = 0.0;
        let mut bufs = ChunkBuffers::<T> {
            xd: Array2::zeros((0, INPUT_DIM)),
            xs: Array2::zeros((0, INPUT_DIM)),
            tape_d: Tape::default(),
            tape_s: Tape::default(),
        };
        for chunk in subset.chunks(CHUNK) {
            let rows = chunk.len() * n_p;
            if bufs.xd.nrows() != rows {
                bufs.xd = Array2::zeros((rows, INPUT_DIM));
                bufs.xs = Array2::zeros((rows, INPUT_DIM));
            }
            for (k, &oi) in chunk.iter().enumerate() {
                let o = &self.set.observations[oi];
                let r = dec.materials[o.material_id].params.roughness;
                for l in 0..n_p {
                    let lobe = &dec.lobes[o.illum_id * n_p + l];
                    let row = k * n_p + l;
                    let s = lobe.log_sharpness.exp();
                    let fd = raw_features(lobe.mean, s, o.normal, o.view_dir, 0.0);
                    let fs = raw_features(lobe.mean, s, o.half_angle, o.view_dir, r);
                    for j in 0..INPUT_DIM {
                        bufs.xd[[row, j]] = T::of(fd[j]);
                        bufs.xs[[row, j]] = T::of(fs[j]);
                    }
                    // keep ln σ exact rather than ln(exp(ln σ))
                    bufs.xd[[row, slot::LOG_SHARPNESS]] = T::of(lobe.log_sharpness);
                    bufs.xs[[row, slot::LOG_SHARPNESS]] = T::of(lobe.log_sharpness);
                }
            }
            let (d_out, s_out) = if want {
                (
                    net_d.forward(bufs.xd.view(), &mut bufs.tape_d),
                    net_s.forward(bufs.xs.view(), &mut bufs.tape_s),
                )
            } else {
                (net_d.infer_batch(bufs.xd.view()), net_s.infer_batch(bufs.xs.view()))
            };
            let mut dd = Array1::<T>::zeros(if want { rows } else { 0 });
            let mut ds = Array1::<T>::zeros(if want { rows } else { 0 });
            for (k, &oi) in chunk.iter().enumerate() {
                let o = &self.set.observations[oi];
                let mat = &dec.materials[o.material_id].params;
                let mut pred = Rgb::BLACK;
                let mut dsum = Rgb::BLACK;
                let mut ssum = Rgb::BLACK;
                for l in 0..n_p {
                    let w = dec.lobes[o.illum_id * n_p + l].weight;
                    let (d, s) = (d_out[k * n_p + l].as_f64(), s_out[k * n_p + l].as_f64());
                    let wd = w * d;
                    let ws = w * s;
                    dsum += wd;
                    ssum += ws;
                }
                pred += mat.k_d.mul_elem(dsum) + mat.k_s.mul_elem(ssum);
                let res = o.radiance - pred;
                cost += res[0] * res[0] + res[1] * res[1] + res[2] * res[2];
                if !want {
                    continue;
                }
                let g = &mut gbuf;
                let e = res * -2.0;
                let mo = p.material_offset(o.material_id);
                for c in 0..3 {
                    g[mo + c] += e[c] * dsum[c];
                    g[mo + 3 + c] += e[c] * ssum[c];
                }
                for l in 0..n_p {
                    let lobe = &dec.lobes[o.illum_id * n_p + l];
                    let row = k * n_p + l;
                    let (d, s) = (d_out[row].as_f64(), s_out[row].as_f64());
                    let lo = p.lobe_offset(o.illum_id, l);
                    let (mut gd, mut gs) = (0.0, 0.0);
                    for c in 0..3 {
                        let ew = e[c] * lobe.weight[c];
                        g[lo + c] += ew * (mat.k_d[c] * d + mat.k_s[c] * s);
                        gd += ew * mat.k_d[c];
                        gs += ew * mat.k_s[c];
                    }
                    dd[row] = T::of(gd);
                    ds[row] = T::of(gs);
                }
            }
            if !want {
                continue;
            }
            let gin_d = net_d.input_gradient(&bufs.tape_d, dd.view());
            let gin_s = net_s.input_gradient(&bufs.tape_s, ds.view());
            for (k, &oi) in chunk.iter().enumerate() {
                let o = &self.set.observations[oi];
                let mo = p.material_offset(o.material_id);
                for l in 0..n_p {
                    let row = k * n_p + l;
                    let lo = p.lobe_offset(o.illum_id, l);
                    accumulate_lobe_grad(&mut gbuf[lo..lo + LOBE_PARAMS], gin_d.row(row));
                    accumulate_lobe_grad(&mut gbuf[lo..lo + LOBE_PARAMS], gin_s.row(row));
                    gbuf[mo + 6] += gin_s[[row, slot::ROUGHNESS]].as_f64();
                }
            }
        }
        if let Some(g) = grad.as_deref_mut() {
            finish_gradient(p, &dec, &mut gbuf);
            for (a, b) in g.iter_mut().zip(&gbuf) {
                *a += b;
            }
        }
        cost
    }

    /// `λ · prior`, optionally accumulating its gradient.
    pub fn prior_cost(&self, x: &[f64], grad: Option<&mut [f64]>) -> f64 {
        if self.prior_weight == 0.0 {
            return 0.0;
        }
        let p = &self.packing;
        let state = p.unpack(x);
        let mut total = 0.0;
        let mut grad = grad;
        for (i, pmm) in state.illuminations.iter().enumerate() {
            let (v, gs) = chroma_variance(pmm);
            total += v;
            if let Some(g) = grad.as_deref_mut() {
                for (l, lobe) in pmm.lobes.iter().enumerate() {
                    let o = p.lobe_offset(i, l);
                    for c in 0..3 {
                        g[o + c] += self.prior_weight * gs[c] * lobe.weight[c];
                    }
                }
            }
        }
        self.prior_weight * total
    }

    /// Data over `subset` plus the weighted prior; `grad` is overwritten.
    pub fn cost<T: NetScalar>(&self, x: &[f64], subset: &[usize], grad: Option<&mut [f64]>) -> f64 {
        match grad {
            Some(g) => {
                g.iter_mut().for_each(|v| *v = 0.0);
                let d = self.data_cost::<T>(x, subset, Some(g));
                d + self.prior_cost(x, Some(g))
            }
            None => self.data_cost::<T>(x, subset, None) + self.prior_cost(x, None),
        }
    }

    pub fn full_cost<T: NetScalar>(&self, x: &[f64]) -> f64 {
        let all: Vec<usize> = (0..self.set.len()).collect();
        self.cost::<T>(x, &all, None)
    }
}

/// Adds feature-space gradients for one lobe row; mean components are still in
/// normalized coordinates and are projected in [`finish_gradient`].
#[inline]
fn accumulate_lobe_grad<T: NetScalar>(g: &mut [f64], row: ArrayView1<T>) {
    for j in 0..3 {
        g[4 + j] += row[slot::MEAN + j].as_f64();
    }
    g[3] += row[slot::LOG_SHARPNESS].as_f64();
}

fn finish_gradient(p: &Packing, dec: &Decoded, g: &mut [f64]) {
    for (k, lobe) in dec.lobes.iter().enumerate() {
        let o = k * LOBE_PARAMS;
        if !lobe.sharpness_free {
            g[o + 3] = 0.0;
        }
        let gm = Vec3::new(g[o + 4], g[o + 5], g[o + 6]);
        let t = (gm - lobe.mean * gm.dot(lobe.mean)) / lobe.raw_mean_len;
        g[o + 4] = t.x;
        g[o + 5] = t.y;
        g[o + 6] = t.z;
    }
    for (m, mat) in dec.materials.iter().enumerate() {
        let o = p.material_offset(m);
        for c in 0..3 {
            let kd = mat.params.k_d[c];
            let ks = mat.params.k_s[c];
            g[o + c] *= kd * (1.0 - kd);
            g[o + 3 + c] *= ks * (1.0 - ks);
        }
        g[o + 6] *= mat.roughness_slope;
    }
}

/// Deterministic starting point: Fibonacci lobe means, σ = 4, gray weights
/// from the mean observed radiance of each image, `k_d` from the mean observed
/// colour of each material, `k_s` = 0.2, r = 0.4. Weights are then rescaled
/// per image so the predicted mean radiance matches the observed mean.
pub fn init_estimate(set: &ObservationSet, n_lobes: usize, surrogate: &Surrogate) -> EstimateState {
    let mut illum_sum = vec![Rgb::BLACK; set.n_illums];
    let mut illum_count = vec![0usize; set.n_illums];
    let mut mat_sum = vec![Rgb::BLACK; set.n_materials];
    let mut mat_count = vec![0usize; set.n_materials];
    for o in &set.observations {
        illum_sum[o.illum_id] += o.radiance;
        illum_count[o.illum_id] += 1;
        mat_sum[o.material_id] += o.radiance;
        mat_count[o.material_id] += 1;
    }
    let means = fibonacci_sphere(n_lobes);
    let mean_of = |s: Rgb, c: usize| if c > 0 { s / c as f64 } else { Rgb::BLACK };
    let illuminations: Vec<PmmIllumination> = (0..set.n_illums)
        .map(|i| {
            let gray = (mean_of(illum_sum[i], illum_count[i]).mean() / n_lobes as f64).max(1e-6);
            PmmIllumination::new(
                means
                    .iter()
                    .map(|&m| IsgLobe::new(Rgb::splat(gray), INIT_SHARPNESS, m))
                    .collect(),
            )
        })
        .collect();
    let materials = (0..set.n_materials)
        .map(|m| {
            let c = if mat_count[m] > 0 {
                mean_of(mat_sum[m], mat_count[m])
            } else {
                Rgb::splat(0.5)
            };
            MaterialParams::new(c.map(|v| v.clamp(0.05, 0.95)), Rgb::splat(0.2), 0.4)
        })
        .collect();
    let mut state = EstimateState {
        illuminations,
        materials,
    };
    let p = Packing::of(&state);
    let x = p.pack(&state);
    let obj = Objective::new(surrogate, set, n_lobes, 0.0);
    let dec = Decoded::new(&p, &x);
    const PROBES: usize = 256;
    for i in 0..set.n_illums {
        let idx: Vec<usize> = (0..set.len()).filter(|&k| set.observations[k].illum_id == i).collect();
        if idx.is_empty() {
            continue;
        }
        let step = idx.len().div_ceil(PROBES);
        let probe: Vec<usize> = idx.iter().step_by(step).copied().collect();
        let observed: f64 = probe.iter().map(|&k| set.observations[k].radiance.mean()).sum();
        let predicted: f64 = probe
            .iter()
            .map(|&k| predict_packed(&obj, &dec, &set.observations[k]).mean())
            .sum();
        if predicted > 0.0 && observed > 0.0 {
            state.illuminations[i] = state.illuminations[i].scaled(observed / predicted);
        }
    }
    state
}

fn predict_packed(obj: &Objective, dec: &Decoded, o: &Observation) -> Rgb {
    let rho = &dec.materials[o.material_id].params;
    let n_p = obj.packing.n_lobes;
    (0..n_p)
        .map(|l| {
            let d = &dec.lobes[o.illum_id * n_p + l];
            let lobe = IsgLobe {
                weight: d.weight,
                sharpness: d.log_sharpness.exp(),
                mean: d.mean,
            };
            obj.surrogate.reflect_lobe(&lobe, rho, o.normal, o.view_dir)
        })
        .fold(Rgb::BLACK, |a, b| a + b)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchRecord {
    pub batch: usize,
    pub size: usize,
    pub cost_before: f64,
    pub cost_after: f64,
    pub evaluations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveLog {
    pub observations: usize,
    pub dropped_back_facing: usize,
    pub components: usize,
    pub batches: Vec<BatchRecord>,
    /// `(batches completed, full cost)` at each checkpoint; the first entry is
    /// the initial state.
    pub full_costs: Vec<(usize, f64)>,
    pub best_batch: usize,
    pub aborted: Option<String>,
}

impl SolveLog {
    pub fn initial_cost(&self) -> f64 {
        self.full_costs.first().map_or(f64::NAN, |c| c.1)
    }

    pub fn best_cost(&self) -> f64 {
        self.full_costs.iter().map(|c| c.1).fold(f64::INFINITY, f64::min)
    }

    pub fn evaluations(&self) -> usize {
        self.batches.iter().map(|b| b.evaluations).sum()
    }
}

pub struct SolveOutcome {
    pub state: EstimateState,
    pub log: SolveLog,
}

/// Minibatched L-BFGS over random batches drawn without replacement until the
/// observations have been visited `epochs_target` times on average. Returns
/// the checkpoint with the lowest full cost.
pub fn solve(set: &ObservationSet, config: &SolverConfig, surrogate: &Surrogate) -> Result<SolveOutcome> {
    config.validate()?;
    let mut set = set.clone();
    let dropped = set.drop_back_facing();
    if dropped > 0 {
        info!("dropped {dropped} back-facing observations");
    }
    let coverage = validate_observation_set(&set)?;
    if !coverage.is_connected() {
        warn!(
            "observation graph has {} components; relative scales between them are unconstrained",
            coverage.components.len()
        );
    }
    let started = Instant::now();
    let init = init_estimate(&set, config.n_lobes, surrogate);
    let obj = Objective::new(surrogate, &set, config.n_lobes, config.prior_weight);
    let mut x = obj.packing.pack(&init);
    let mut best_x = x.clone();
    let mut best_cost = obj.full_cost::<f32>(&x);
    let mut log = SolveLog {
        observations: set.len(),
        dropped_back_facing: dropped,
        components: coverage.components.len(),
        batches: Vec::new(),
        full_costs: vec![(0, best_cost)],
        best_batch: 0,
        aborted: None,
    };
    if !best_cost.is_finite() {
        return Err(Error::Numerical(format!("initial cost is {best_cost}")));
    }
    let lbfgs = LbfgsConfig {
        history: config.lbfgs_history,
        max_iters: config.inner_iters,
        grad_tol: 0.0,
        ..LbfgsConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..set.len()).collect();
    order.shuffle(&mut rng);
    let mut cursor = 0;
    let target = (config.epochs_target * set.len() as f64).ceil() as usize;
    let mut drawn = 0;
    let batch_size = config.batch_size.min(set.len());
    let mut batch_idx = 0;
    while drawn < target {
        let mut batch = Vec::with_capacity(batch_size);
        while batch.len() < batch_size {
            if cursor == order.len() {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            let take = (batch_size - batch.len()).min(order.len() - cursor);
            batch.extend_from_slice(&order[cursor..cursor + take]);
            cursor += take;
        }
        drawn += batch.len();
        batch_idx += 1;
        let report = minimize(|v, g| obj.cost::<f32>(v, &batch, Some(g)), &mut x, &lbfgs);
        match report {
            Ok(r) => log.batches.push(BatchRecord {
                batch: batch_idx,
                size: batch.len(),
                cost_before: r.initial_cost,
                cost_after: r.final_cost,
                evaluations: r.evaluations,
            }),
            Err(e) => {
                log.aborted = Some(format!("batch {batch_idx}: {e}"));
                warn!("aborting solve: {e}");
                break;
            }
        }
        if batch_idx % config.full_cost_every == 0 || drawn >= target {
            let c = obj.full_cost::<f32>(&x);
            log.full_costs.push((batch_idx, c));
            info!(
                "batch {batch_idx}: full cost {c:.6e} ({:.1}s)",
                started.elapsed().as_secs_f64()
            );
            if !c.is_finite() {
                log.aborted = Some(format!("non-finite full cost after batch {batch_idx}"));
                break;
            }
            if c < best_cost {
                best_cost = c;
                best_x.clone_from(&x);
                log.best_batch = batch_idx;
            }
        }
    }
    Ok(SolveOutcome {
        state: obj.packing.unpack(&best_x),
        log,
    })
}

/// Serialized result of a solve. Contains no timestamps, so identical inputs
/// give identical files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateFile {
    pub n_materials: usize,
    pub n_illums: usize,
    pub n_lobes: usize,
    pub variables: usize,
    pub material_names: Vec<String>,
    pub config: SolverConfig,
    pub state: EstimateState,
    pub log: SolveLog,
}

impl EstimateFile {
    pub fn new(outcome: SolveOutcome, material_names: Vec<String>, config: SolverConfig) -> Self {
        let (m, n) = (outcome.state.materials.len(), outcome.state.illuminations.len());
        EstimateFile {
            n_materials: m,
            n_illums: n,
            n_lobes: config.n_lobes,
            variables: count_variables(m, n, config.n_lobes),
            material_names,
            config,
            state: outcome.state,
            log: outcome.log,
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_text(path.as_ref(), &to_toml(self)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f: EstimateFile = from_toml(&read_text(path)?, path)?;
        let lobes_ok = f.state.illuminations.iter().all(|p| p.lobes.len() == f.n_lobes);
        if f.state.materials.len() != f.n_materials || f.state.illuminations.len() != f.n_illums || !lobes_ok {
            return Err(Error::Parse(format!("{}: header does not match contents", path.display())));
        }
        Ok(f)
    }
}
