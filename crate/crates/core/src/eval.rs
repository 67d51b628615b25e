//! Image comparison and the synthetic experiments.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use log::info;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::write_text;
use crate::error::{Error, Result};
use crate::estimator::{prior, solve, EstimateState, SolveLog, SolverConfig};
use crate::image::RgbImage;
use crate::math::{Frame, Mat3, Vec3, PI};
use crate::oracle::QuadratureRule;
use crate::pfm::write_pfm;
use crate::scene::{MaterialParams, Observation, ObservationSet, PmmIllumination};
use crate::surrogate::Surrogate;
use crate::synth::{
    full_mask, generate_matrix_dataset, random_scene, render_sphere, Camera, GroundTruth,
    Illumination,
};

const SSIM_RADIUS: usize = 5;
const SSIM_SIGMA: f64 = 1.5;
const C1: f64 = 0.01 * 0.01;
const C2: f64 = 0.03 * 0.03;

/// 99th percentile of all channel values.
pub fn percentile99(img: &RgbImage) -> f64 {
    let mut v: Vec<f64> = img.channel_values().collect();
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(f64::total_cmp);
    v[((0.99 * (v.len() - 1) as f64).round() as usize).min(v.len() - 1)]
}

/// Scale by `1 / scale_ref`, clamp to [0, 1], gamma 1/2.2. One plane per channel.
fn tone_map(img: &RgbImage, scale_ref: f64) -> [Vec<f64>; 3] {
    let s = if scale_ref > 0.0 { 1.0 / scale_ref } else { 1.0 };
    let plane = |c: usize| {
        img.data
            .iter()
            .map(|p| (p[c] as f64 * s).clamp(0.0, 1.0).powf(1.0 / 2.2))
            .collect()
    };
    [plane(0), plane(1), plane(2)]
}

fn gaussian_kernel() -> Vec<f64> {
    let r = SSIM_RADIUS as isize;
    let k: Vec<f64> = (-r..=r)
        .map(|i| (-(i * i) as f64 / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.into_iter().map(|v| v / s).collect()
}

/// Separable Gaussian blur; the kernel is renormalized where it leaves the image.
fn blur(src: &[f64], w: usize, h: usize, k: &[f64]) -> Vec<f64> {
    let r = SSIM_RADIUS as isize;
    let pass = |src: &[f64], horizontal: bool| -> Vec<f64> {
        let mut out = vec![0.0; src.len()];
        for y in 0..h {
            for x in 0..w {
                let (mut acc, mut norm) = (0.0, 0.0);
                for (t, &kv) in (-r..=r).zip(k) {
                    let (xx, yy) = if horizontal {
                        (x as isize + t, y as isize)
                    } else {
                        (x as isize, y as isize + t)
                    };
                    if xx < 0 || yy < 0 || xx >= w as isize || yy >= h as isize {
                        continue;
                    }
                    acc += kv * src[yy as usize * w + xx as usize];
                    norm += kv;
                }
                out[y * w + x] = acc / norm;
            }
        }
        out
    };
    pass(&pass(src, true), false)
}

fn ssim_plane(a: &[f64], b: &[f64], w: usize, h: usize, k: &[f64]) -> f64 {
    let mu_a = blur(a, w, h, k);
    let mu_b = blur(b, w, h, k);
    let sq = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| p * q).collect::<Vec<f64>>();
    let e_aa = blur(&sq(a, a), w, h, k);
    let e_bb = blur(&sq(b, b), w, h, k);
    let e_ab = blur(&sq(a, b), w, h, k);
    let mut total = 0.0;
    for i in 0..a.len() {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let va = e_aa[i] - ma * ma;
        let vb = e_bb[i] - mb * mb;
        let cov = e_ab[i] - ma * mb;
        total += ((2.0 * ma * mb + C1) * (2.0 * cov + C2))
            / ((ma * ma + mb * mb + C1) * (va + vb + C2));
    }
    total / a.len() as f64
}

/// `(1 - SSIM) / 2` after tone mapping both images with the reference's 99th
/// percentile. 11×11 Gaussian window (σ = 1.5), channel-averaged.
pub fn dssim(reference: &RgbImage, test: &RgbImage) -> Result<f64> {
    reference.check_same_size(test)?;
    dssim_scaled(reference, test, percentile99(reference))
}

/// DSSIM with an explicit tone-mapping scale.
pub fn dssim_scaled(a: &RgbImage, b: &RgbImage, scale: f64) -> Result<f64> {
    a.check_same_size(b)?;
    if a.data.is_empty() {
        return Err(Error::DimensionMismatch("empty image".into()));
    }
    let (pa, pb) = (tone_map(a, scale), tone_map(b, scale));
    let k = gaussian_kernel();
    let ssim: f64 = (0..3)
        .map(|c| ssim_plane(&pa[c], &pb[c], a.width, a.height, &k))
        .sum::<f64>()
        / 3.0;
    Ok(((1.0 - ssim) / 2.0).clamp(0.0, 1.0))
}

/// Rendering setup shared by ground truth and estimates.
#[derive(Clone, Debug)]
pub struct RenderSetup {
    pub camera: Camera,
    pub rule: QuadratureRule,
    /// Extra camera rotations (applied to the illumination) at which every
    /// pair is also scored.
    pub novel_views: Vec<Mat3>,
}

impl RenderSetup {
    pub fn new(camera: Camera) -> Self {
        RenderSetup {
            camera,
            rule: QuadratureRule::new(32, 64),
            novel_views: Vec::new(),
        }
    }

    fn views(&self) -> Vec<Mat3> {
        std::iter::once(Mat3::IDENTITY).chain(self.novel_views.iter().copied()).collect()
    }

    pub fn render(&self, pmm: &PmmIllumination, rho: &MaterialParams, view: &Mat3) -> RgbImage {
        let rotated = pmm.rotated(view);
        render_sphere(Illumination::Pmm(&rotated), rho, 0, 0, &self.camera, &self.rule).radiance
    }
}

/// DSSIM of every material/illumination pair, re-rendered from the estimate
/// versus the ground truth, averaged over the capture view and any novel views.
pub fn rerender_score(estimate: &EstimateState, truth: &GroundTruth, setup: &RenderSetup) -> Result<Vec<Vec<f64>>> {
    Ok(rerender(estimate, truth, setup)?.0)
}

/// Scores plus a capture-view montage: each cell holds the truth (left) and
/// the estimate (right); rows are materials, columns illuminations.
pub fn rerender(estimate: &EstimateState, truth: &GroundTruth, setup: &RenderSetup) -> Result<(Vec<Vec<f64>>, RgbImage)> {
    if estimate.materials.len() != truth.materials.len()
        || estimate.illuminations.len() != truth.illuminations.len()
    {
        return Err(Error::DimensionMismatch(format!(
            "estimate is {}x{}, truth is {}x{}",
            estimate.materials.len(),
            estimate.illuminations.len(),
            truth.materials.len(),
            truth.illuminations.len()
        )));
    }
    let views = setup.views();
    let (w, h) = (setup.camera.width, setup.camera.height);
    let (m, n) = (truth.materials.len(), truth.illuminations.len());
    let mut montage = RgbImage::new(2 * w * n, h * m);
    let mut table = vec![vec![0.0; n]; m];
    for (mi, row) in table.iter_mut().enumerate() {
        for (ii, cell) in row.iter_mut().enumerate() {
            let mut sum = 0.0;
            for (k, v) in views.iter().enumerate() {
                let a = setup.render(&truth.illuminations[ii], &truth.materials[mi], v);
                let b = setup.render(&estimate.illuminations[ii], &estimate.materials[mi], v);
                sum += dssim(&a, &b)?;
                if k == 0 {
                    for y in 0..h {
                        for x in 0..w {
                            montage.set(2 * w * ii + x, h * mi + y, a.get(x, y));
                            montage.set(2 * w * ii + w + x, h * mi + y, b.get(x, y));
                        }
                    }
                }
            }
            *cell = sum / views.len() as f64;
        }
    }
    Ok((table, montage))
}

pub fn table_mean(table: &[Vec<f64>]) -> f64 {
    let v: Vec<f64> = table.iter().flatten().copied().collect();
    v.iter().sum::<f64>() / v.len().max(1) as f64
}

/// Mean over the cells selected (`true`) or not selected (`false`) by `mask`.
pub fn masked_mean(table: &[Vec<f64>], mask: &[Vec<bool>], selected: bool) -> Option<f64> {
    let v: Vec<f64> = table
        .iter()
        .zip(mask)
        .flat_map(|(r, mr)| r.iter().zip(mr).filter(|(_, &b)| b == selected).map(|(v, _)| *v))
        .collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Settings shared by all experiments.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub resolution: usize,
    pub solver: SolverConfig,
    pub seeds: Vec<u64>,
    /// Gauss–Legendre × azimuth node counts for all renders.
    pub render_nodes: (usize, usize),
    /// Yaw angles (degrees) of additional evaluation views.
    pub novel_view_yaws: Vec<f64>,
    /// Tinted rather than near-white illuminations.
    pub colored: bool,
    /// Where trial montages are written as PFM, if anywhere.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub visuals: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            resolution: 24,
            solver: SolverConfig {
                n_lobes: 16,
                epochs_target: 1.0,
                ..SolverConfig::default()
            },
            seeds: vec![0, 1, 2],
            render_nodes: (32, 64),
            novel_view_yaws: Vec::new(),
            colored: false,
            visuals: None,
        }
    }
}

impl ExperimentConfig {
    pub fn setup(&self) -> RenderSetup {
        RenderSetup {
            camera: Camera::orthographic(self.resolution),
            rule: QuadratureRule::new(self.render_nodes.0, self.render_nodes.1),
            novel_views: self
                .novel_view_yaws
                .iter()
                .map(|&d| Mat3::rotation(Vec3::new(0.0, 1.0, 0.0), d.to_radians()))
                .collect(),
        }
    }

    fn solver_for(&self, seed: u64) -> SolverConfig {
        SolverConfig {
            seed,
            ..self.solver.clone()
        }
    }
}

/// One solved synthetic scene.
pub struct Trial {
    pub truth: GroundTruth,
    pub estimate: EstimateState,
    pub log: SolveLog,
    pub scores: Vec<Vec<f64>>,
}

fn scene_seed(seed: u64, tag: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ tag
}

/// Renders a random `m×n` scene under `mask`, optionally edits the
/// observations, solves and scores every pair.
pub fn run_trial(
    label: &str,
    m: usize,
    n: usize,
    mask: &[Vec<bool>],
    seed: u64,
    cfg: &ExperimentConfig,
    surrogate: &Surrogate,
    edit: impl FnOnce(&mut ObservationSet),
) -> Result<Trial> {
    let (materials, illums) = random_scene(m, n, scene_seed(seed, 1), cfg.colored);
    let setup = cfg.setup();
    let ds = generate_matrix_dataset(&materials, &illums, mask, &setup.camera, &setup.rule)?;
    let mut set = ds.set;
    edit(&mut set);
    let out = solve(&set, &cfg.solver_for(seed), surrogate)?;
    let (scores, montage) = rerender(&out.state, &ds.truth, &setup)?;
    if let Some(dir) = &cfg.visuals {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_pfm(dir.join(format!("{label}_seed{seed}.pfm")), &montage)?;
    }
    Ok(Trial {
        truth: ds.truth,
        estimate: out.state,
        log: out.log,
        scores,
    })
}

/// Machine-readable experiment output.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Csv {
    pub description: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Csv {
    pub fn new(description: &str, header: &[&str]) -> Self {
        Csv {
            description: description.into(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    /// `# description` line, header row, then data rows.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# {}", self.description);
        let _ = writeln!(s, "{}", self.header.join(","));
        for r in &self.rows {
            let _ = writeln!(s, "{}", r.join(","));
        }
        s
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        write_text(path.as_ref(), &self.to_text())
    }
}

fn fmt(v: f64) -> String {
    format!("{v:.6}")
}

/// Mean DSSIM per condition, averaged over seeds.
#[derive(Clone, Debug, PartialEq)]
pub struct Curve {
    pub labels: Vec<String>,
    /// `per_seed[condition][seed]`.
    pub per_seed: Vec<Vec<f64>>,
}

impl Curve {
    pub fn means(&self) -> Vec<f64> {
        self.per_seed
            .iter()
            .map(|v| v.iter().sum::<f64>() / v.len().max(1) as f64)
            .collect()
    }

    pub fn to_csv(&self, description: &str, label: &str, seeds: &[u64], value: &str) -> Csv {
        let mut csv = Csv::new(description, &[label, "seed", value]);
        for (l, vals) in self.labels.iter().zip(&self.per_seed) {
            for (s, v) in seeds.iter().zip(vals) {
                csv.push(vec![l.clone(), s.to_string(), fmt(*v)]);
            }
        }
        for (l, m) in self.labels.iter().zip(self.means()) {
            csv.push(vec![l.clone(), "mean".into(), fmt(m)]);
        }
        csv
    }
}

/// Complete `k×k` matrices for each size.
pub fn experiment_matrix_size(sizes: &[usize], cfg: &ExperimentConfig, surrogate: &Surrogate) -> Result<Curve> {
    let mut per_seed = Vec::new();
    for &k in sizes {
        let mut vals = Vec::new();
        for &seed in &cfg.seeds {
            let t = run_trial(&format!("size{k}"), k, k, &full_mask(k, k), seed, cfg, surrogate, |_| {})?;
            let v = table_mean(&t.scores);
            info!("matrix size {k}, seed {seed}: {v:.4}");
            vals.push(v);
        }
        per_seed.push(vals);
    }
    Ok(Curve {
        labels: sizes.iter().map(|k| format!("{k}x{k}")).collect(),
        per_seed,
    })
}

/// `1×k`, `k×1` and `k×k` complete matrices (materials × illuminations).
pub fn experiment_structure(k: usize, cfg: &ExperimentConfig, surrogate: &Surrogate) -> Result<Curve> {
    let shapes = [(1, k), (k, 1), (k, k)];
    let mut per_seed = Vec::new();
    for &(m, n) in &shapes {
        let mut vals = Vec::new();
        for &seed in &cfg.seeds {
            let t = run_trial(&format!("shape{m}x{n}"), m, n, &full_mask(m, n), seed, cfg, surrogate, |_| {})?;
            vals.push(table_mean(&t.scores));
        }
        per_seed.push(vals);
    }
    Ok(Curve {
        labels: shapes.iter().map(|(m, n)| format!("{m}x{n}")).collect(),
        per_seed,
    })
}

/// Tilts `n` by an angle drawn uniformly from `[0, max_deg]` in a uniformly
/// random direction.
pub fn perturb_normal<R: Rng>(n: Vec3, max_deg: f64, rng: &mut R) -> Vec3 {
    if max_deg <= 0.0 {
        return n;
    }
    let angle = rng.gen_range(0.0..=max_deg).to_radians();
    let phi = rng.gen_range(0.0..2.0 * PI);
    let f = Frame::from_axis(n);
    f.to_world(Vec3::new(angle.sin() * phi.cos(), angle.sin() * phi.sin(), angle.cos()))
        .normalized()
}

/// Adds normal noise to every observation; back-facing results are dropped by the solver.
pub fn add_normal_noise(set: &mut ObservationSet, max_deg: f64, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for o in &mut set.observations {
        let n = perturb_normal(o.normal, max_deg, &mut rng);
        *o = Observation::new(n, o.view_dir, o.radiance, o.material_id, o.illum_id);
    }
}

/// 3×3 complete scene with perturbed normals at each noise level.
pub fn experiment_normal_noise(levels: &[f64], cfg: &ExperimentConfig, surrogate: &Surrogate) -> Result<Curve> {
    let mut per_seed = Vec::new();
    for &deg in levels {
        let mut vals = Vec::new();
        for &seed in &cfg.seeds {
            let t = run_trial(&format!("noise{deg}"), 3, 3, &full_mask(3, 3), seed, cfg, surrogate, |set| {
                add_normal_noise(set, deg, scene_seed(seed, 2))
            })?;
            vals.push(table_mean(&t.scores));
        }
        per_seed.push(vals);
    }
    Ok(Curve {
        labels: levels.iter().map(|d| format!("{d}")).collect(),
        per_seed,
    })
}

/// Held-out pair score and the full-data baseline for the same pair.
#[derive(Clone, Debug, PartialEq)]
pub struct LeaveOneOut {
    pub held_out: Vec<f64>,
    pub baseline: Vec<f64>,
}

/// Drops every observation of `held` from a `k×k` scene, solves, and scores
/// that pair; the same pair scored after a full solve is the baseline.
pub fn experiment_leave_one_out(
    k: usize,
    held: (usize, usize),
    cfg: &ExperimentConfig,
    surrogate: &Surrogate,
) -> Result<LeaveOneOut> {
    if held.0 >= k || held.1 >= k || k < 2 {
        return Err(Error::InvalidArgument(format!("cannot hold out {held:?} from a {k}x{k} matrix")));
    }
    let mut mask = full_mask(k, k);
    mask[held.0][held.1] = false;
    let (mut held_out, mut baseline) = (Vec::new(), Vec::new());
    for &seed in &cfg.seeds {
        let t = run_trial("held_out", k, k, &mask, seed, cfg, surrogate, |_| {})?;
        held_out.push(t.scores[held.0][held.1]);
        let b = run_trial("baseline", k, k, &full_mask(k, k), seed, cfg, surrogate, |_| {})?;
        baseline.push(b.scores[held.0][held.1]);
    }
    Ok(LeaveOneOut { held_out, baseline })
}

/// Views of a `k×k` scene added one at a time in `order` (pairs
/// `(material, illum)`); every pair is scored after each prefix.
pub fn experiment_progressive(
    k: usize,
    order: &[(usize, usize)],
    cfg: &ExperimentConfig,
    surrogate: &Surrogate,
) -> Result<Curve> {
    let mut per_seed = vec![Vec::new(); order.len()];
    for &seed in &cfg.seeds {
        for len in 1..=order.len() {
            let mut mask = vec![vec![false; k]; k];
            for &(m, i) in &order[..len] {
                mask[m][i] = true;
            }
            let t = run_trial(&format!("prefix{len}"), k, k, &mask, seed, cfg, surrogate, |_| {})?;
            per_seed[len - 1].push(table_mean(&t.scores));
        }
    }
    Ok(Curve {
        labels: (1..=order.len()).map(|l| l.to_string()).collect(),
        per_seed,
    })
}

/// Default progressive order for `k×k`: the diagonal first, then the rest row by row.
pub fn progressive_order(k: usize) -> Vec<(usize, usize)> {
    let mut order: Vec<(usize, usize)> = (0..k).map(|i| (i, i)).collect();
    for m in 0..k {
        for i in 0..k {
            if m != i {
                order.push((m, i));
            }
        }
    }
    order
}

/// Chromatic variance of the solution and the mean DSSIM per prior weight.
#[derive(Clone, Debug, PartialEq)]
pub struct PriorSweep {
    pub weights: Vec<f64>,
    /// `chroma[weight][seed]`.
    pub chroma: Vec<Vec<f64>>,
    pub dssim: Vec<Vec<f64>>,
}

impl PriorSweep {
    pub fn mean_chroma(&self) -> Vec<f64> {
        self.chroma.iter().map(|v| v.iter().sum::<f64>() / v.len() as f64).collect()
    }
}

/// Colored 3×3 scene solved at each prior weight.
pub fn experiment_prior_sweep(weights: &[f64], cfg: &ExperimentConfig, surrogate: &Surrogate) -> Result<PriorSweep> {
    let mut chroma = Vec::new();
    let mut dssims = Vec::new();
    let colored = ExperimentConfig {
        colored: true,
        ..cfg.clone()
    };
    for &w in weights {
        let mut c = Vec::new();
        let mut d = Vec::new();
        for &seed in &cfg.seeds {
            let mut run = colored.clone();
            run.solver.prior_weight = w;
            let t = run_trial(&format!("lambda{w}"), 3, 3, &full_mask(3, 3), seed, &run, surrogate, |_| {})?;
            c.push(prior(&t.estimate.illuminations));
            d.push(table_mean(&t.scores));
        }
        chroma.push(c);
        dssims.push(d);
    }
    Ok(PriorSweep {
        weights: weights.to_vec(),
        chroma,
        dssim: dssims,
    })
}

impl PriorSweep {
    pub fn to_csv(&self, seeds: &[u64]) -> Csv {
        let mut csv = Csv::new(
            "prior sweep: chroma = summed-lobe channel variance of the estimate, dssim = mean re-render DSSIM",
            &["lambda", "seed", "chroma", "dssim"],
        );
        for (k, w) in self.weights.iter().enumerate() {
            for (j, s) in seeds.iter().enumerate() {
                csv.push(vec![w.to_string(), s.to_string(), fmt(self.chroma[k][j]), fmt(self.dssim[k][j])]);
            }
        }
        csv
    }
}
