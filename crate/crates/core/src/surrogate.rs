//! Learned single-lobe reflection: feature layout, training data from the
//! quadrature oracle, training, and held-out evaluation.
//!
//! Both networks predict the response to a unit-weight lobe with unit
//! reflectance. Lobe weight and `k_d`/`k_s` enter the full response linearly
//! and are applied outside the network.

use std::path::Path;
use std::time::Instant;

use log::info;
use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::math::{uniform_hemisphere, uniform_sphere, Rgb, Vec3, FRONT};
use crate::nn::{architecture, Mlp, MlpWeights, NetKind, Scalar, Tape, INPUT_DIM};
use crate::oracle::{diffuse_unit_response, specular_unit_response, QuadratureRule};
use crate::scene::{half_angle, IsgLobe, MaterialParams, ROUGHNESS_MIN};

pub type Features = [f64; INPUT_DIM];

/// Denominator offset of the relative error.
pub const REL_EPS: f64 = 1e-3;

/// Feature slots.
pub mod slot {
    pub const MEAN: usize = 0;
    pub const LOG_SHARPNESS: usize = 3;
    pub const GEOMETRY: usize = 4;
    pub const VIEW: usize = 7;
    pub const ROUGHNESS: usize = 10;
    pub const BIAS: usize = 11;
}

/// Raw feature vector from explicit quantities. `geometry` is the normal for the
/// diffuse network and the half-angle feature for the specular one.
#[inline]
pub fn raw_features(mean: Vec3, sharpness: f64, geometry: Vec3, view: Vec3, roughness: f64) -> Features {
    [
        mean.x,
        mean.y,
        mean.z,
        sharpness.ln(),
        geometry.x,
        geometry.y,
        geometry.z,
        view.x,
        view.y,
        view.z,
        roughness,
        1.0,
    ]
}

/// `[mean (3), ln σ, normal or half-angle (3), view (3), roughness or 0, 1]`.
pub fn featurize(lobe: &IsgLobe, rho: &MaterialParams, n: Vec3, wo: Vec3, kind: NetKind) -> Features {
    match kind {
        NetKind::Diffuse => raw_features(lobe.mean, lobe.sharpness, n, wo, 0.0),
        NetKind::Specular => {
            raw_features(lobe.mean, lobe.sharpness, half_angle(n, wo), wo, rho.roughness)
        }
    }
}

/// Scalar type the surrogate can be evaluated in.
pub trait NetScalar: Scalar {
    fn net(s: &Surrogate, kind: NetKind) -> &Mlp<Self>;
}

impl NetScalar for f32 {
    fn net(s: &Surrogate, kind: NetKind) -> &Mlp<f32> {
        match kind {
            NetKind::Diffuse => &s.diffuse32,
            NetKind::Specular => &s.specular32,
        }
    }
}

impl NetScalar for f64 {
    fn net(s: &Surrogate, kind: NetKind) -> &Mlp<f64> {
        match kind {
            NetKind::Diffuse => &s.diffuse64,
            NetKind::Specular => &s.specular64,
        }
    }
}

/// The diffuse and specular networks, ready to evaluate.
#[derive(Clone, Debug)]
pub struct Surrogate {
    pub diffuse: MlpWeights,
    pub specular: MlpWeights,
    diffuse32: Mlp<f32>,
    specular32: Mlp<f32>,
    diffuse64: Mlp<f64>,
    specular64: Mlp<f64>,
}

impl Surrogate {
    pub fn new(diffuse: MlpWeights, specular: MlpWeights) -> Result<Self> {
        for (w, kind) in [(&diffuse, NetKind::Diffuse), (&specular, NetKind::Specular)] {
            if w.kind != kind {
                return Err(Error::InvalidArgument(format!(
                    "expected a {} network, got {}",
                    kind.name(),
                    w.kind.name()
                )));
            }
            if w.input_dim() != INPUT_DIM || w.layers.last().map(|l| l.outputs) != Some(1) {
                return Err(Error::InvalidArgument(format!(
                    "{} network must map {INPUT_DIM} inputs to 1 output",
                    kind.name()
                )));
            }
        }
        Ok(Surrogate {
            diffuse32: Mlp::from_weights(&diffuse),
            specular32: Mlp::from_weights(&specular),
            diffuse64: Mlp::from_weights(&diffuse),
            specular64: Mlp::from_weights(&specular),
            diffuse,
            specular,
        })
    }

    pub fn load(diffuse: impl AsRef<Path>, specular: impl AsRef<Path>) -> Result<Self> {
        Surrogate::new(MlpWeights::load(diffuse)?, MlpWeights::load(specular)?)
    }

    /// The networks shipped with the crate.
    pub fn bundled() -> Result<Self> {
        Surrogate::new(
            MlpWeights::from_bytes(include_bytes!("../assets/diffuse.ifnn"))?,
            MlpWeights::from_bytes(include_bytes!("../assets/specular.ifnn"))?,
        )
    }

    pub fn weights(&self, kind: NetKind) -> &MlpWeights {
        match kind {
            NetKind::Diffuse => &self.diffuse,
            NetKind::Specular => &self.specular,
        }
    }

    /// Unit response of one network for one feature vector, in f64.
    pub fn unit_response(&self, kind: NetKind, features: &Features) -> f64 {
        let x = ndarray::ArrayView2::from_shape((1, INPUT_DIM), features).expect("row");
        f64::net(self, kind).infer_batch(x)[0]
    }

    /// Reflected colour of one lobe: `w ⊙ (k_d D̂ + k_s Ŝ)`.
    pub fn reflect_lobe(&self, lobe: &IsgLobe, rho: &MaterialParams, n: Vec3, wo: Vec3) -> Rgb {
        let d = self.unit_response(NetKind::Diffuse, &featurize(lobe, rho, n, wo, NetKind::Diffuse));
        let s = self.unit_response(
            NetKind::Specular,
            &featurize(lobe, rho, n, wo, NetKind::Specular),
        );
        lobe.weight.mul_elem(rho.k_d * d + rho.k_s * s)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainingSample {
    pub features: Features,
    pub target: f64,
}

/// Sampling ranges of the training distribution.
pub const SHARPNESS_RANGE: (f64, f64) = (1e-2, 2e2);

/// Draws `count` samples for `kind`: lobe mean uniform on the sphere, `ln σ`
/// uniform, roughness uniform in `[0.01, 1]`, normal uniform on the camera-facing
/// hemisphere and view direction uniform on the normal's hemisphere. Targets
/// come from the quadrature oracle.
pub fn make_training_set(
    kind: NetKind,
    count: usize,
    seed: u64,
    rule: &QuadratureRule,
) -> Vec<TrainingSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = (SHARPNESS_RANGE.0.ln(), SHARPNESS_RANGE.1.ln());
    (0..count)
        .map(|_| {
            let mean = uniform_sphere(rng.gen(), rng.gen());
            let sharpness = rng.gen_range(lo..hi).exp();
            let roughness = rng.gen_range(ROUGHNESS_MIN..1.0);
            let n = uniform_hemisphere(FRONT, rng.gen(), rng.gen());
            let wo = uniform_hemisphere(n, rng.gen(), rng.gen());
            let (features, target) = match kind {
                NetKind::Diffuse => (
                    raw_features(mean, sharpness, n, wo, 0.0),
                    diffuse_unit_response(mean, sharpness, n, wo, rule),
                ),
                NetKind::Specular => (
                    raw_features(mean, sharpness, half_angle(n, wo), wo, roughness),
                    specular_unit_response(mean, sharpness, n, wo, roughness, rule),
                ),
            };
            TrainingSample { features, target }
        })
        .collect()
}

#[derive(Copy, Clone, Debug, PartialEq)]
pub enum Optimizer {
    /// Heavy-ball SGD.
    Momentum { momentum: f64 },
    Adam { beta1: f64, beta2: f64 },
}

#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Final learning rate as a fraction of the initial one (cosine schedule).
    pub final_lr_fraction: f64,
    pub optimizer: Optimizer,
    /// Leading epochs that fit `(ln(p + ε) - ln(t + ε))²` before switching to
    /// the relative-squared error.
    pub warmup_epochs: usize,
    /// Global gradient norm limit per batch.
    pub clip_norm: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 40,
            batch_size: 256,
            learning_rate: 1e-3,
            final_lr_fraction: 0.02,
            optimizer: Optimizer::Adam {
                beta1: 0.9,
                beta2: 0.999,
            },
            warmup_epochs: 30,
            clip_norm: 1.0,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub weights: MlpWeights,
    /// Mean relative-squared loss over the training set before the first update.
    pub initial_loss: f64,
    /// Mean per-batch loss of each epoch.
    pub epoch_losses: Vec<f64>,
}

fn to_matrices(samples: &[TrainingSample]) -> (Array2<f32>, Array1<f32>) {
    let x = Array2::from_shape_fn((samples.len(), INPUT_DIM), |(i, j)| {
        samples[i].features[j] as f32
    });
    let t = samples.iter().map(|s| s.target as f32).collect();
    (x, t)
}

/// Mean of `((p - t) / (t + ε))²`.
pub fn relative_squared_loss(net: &MlpWeights, samples: &[TrainingSample]) -> f64 {
    let mlp = Mlp::<f32>::from_weights(net);
    let (x, t) = to_matrices(samples);
    let p = mlp.infer_batch(x.view());
    let total: f64 = p
        .iter()
        .zip(&t)
        .map(|(&p, &t)| ((p as f64 - t as f64) / (t as f64 + REL_EPS)).powi(2))
        .sum();
    total / samples.len().max(1) as f64
}

struct AdamState {
    m: Vec<Array2<f32>>,
    v: Vec<Array2<f32>>,
    mb: Vec<Array1<f32>>,
    vb: Vec<Array1<f32>>,
    step: i32,
}

/// Trains one network by minibatch minimization of the relative-squared error.
pub fn train(kind: NetKind, samples: &[TrainingSample], cfg: &TrainConfig) -> Result<TrainOutcome> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("no training samples".into()));
    }
    if cfg.batch_size == 0 || cfg.epochs == 0 {
        return Err(Error::InvalidArgument("epochs and batch size must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut init = MlpWeights::random(kind, &architecture(), &mut rng);
    // start the output near the mean target so early gradients are informative
    let mean_t = samples.iter().map(|s| s.target).sum::<f64>() / samples.len() as f64;
    let out_bias = (mean_t.max(1e-4).exp_m1()).ln();
    if let Some(last) = init.layers.last_mut() {
        last.biases[0] = out_bias as f32;
        last.weights.iter_mut().for_each(|w| *w *= 0.1);
    }
    let initial_loss = relative_squared_loss(&init, samples);
    let mut mlp = Mlp::<f32>::from_weights(&init);

    let (x_all, t_all) = to_matrices(samples);
    let n = samples.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut adam = AdamState {
        m: mlp.weights.iter().map(|w| Array2::zeros(w.raw_dim())).collect(),
        v: mlp.weights.iter().map(|w| Array2::zeros(w.raw_dim())).collect(),
        mb: mlp.biases.iter().map(|b| Array1::zeros(b.raw_dim())).collect(),
        vb: mlp.biases.iter().map(|b| Array1::zeros(b.raw_dim())).collect(),
        step: 0,
    };
    let batches_per_epoch = n.div_ceil(cfg.batch_size);
    let total_steps = (batches_per_epoch * cfg.epochs) as f64;
    let mut tape = Tape::default();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let started = Instant::now();

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let progress = (epoch * batches_per_epoch + b) as f64 / total_steps;
            let lr = cfg.learning_rate
                * (cfg.final_lr_fraction
                    + (1.0 - cfg.final_lr_fraction) * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos()));
            let xb = x_all.select(Axis(0), chunk);
            let tb = t_all.select(Axis(0), chunk);
            let p = mlp.forward(xb.view(), &mut tape);
            let bsz = chunk.len() as f32;
            let mut dout = Array1::<f32>::zeros(chunk.len());
            let mut batch_loss = 0.0f64;
            let warm = epoch < cfg.warmup_epochs;
            let eps = REL_EPS as f32;
            for i in 0..chunk.len() {
                if warm {
                    let r = (p[i] + eps).ln() - (tb[i] + eps).ln();
                    batch_loss += (r as f64).powi(2);
                    dout[i] = 2.0 * r / (p[i] + eps) / bsz;
                } else {
                    let denom = tb[i] + eps;
                    let r = (p[i] - tb[i]) / denom;
                    batch_loss += (r as f64).powi(2);
                    dout[i] = 2.0 * r / denom / bsz;
                }
            }
            batch_loss /= chunk.len() as f64;
            if !batch_loss.is_finite() {
                return Err(Error::Diverged(format!(
                    "non-finite loss at epoch {epoch}, batch {b}, learning rate {lr:.3e}"
                )));
            }
            loss_sum += batch_loss;
            let (mut gw, mut gb) = mlp.backward(&tape, dout.view());
            let norm = gw
                .iter()
                .map(|g| g.iter().map(|v| (*v as f64).powi(2)).sum::<f64>())
                .chain(gb.iter().map(|g| g.iter().map(|v| (*v as f64).powi(2)).sum::<f64>()))
                .sum::<f64>()
                .sqrt();
            if norm > cfg.clip_norm {
                let scale = (cfg.clip_norm / norm) as f32;
                gw.iter_mut().for_each(|g| *g *= scale);
                gb.iter_mut().for_each(|g| *g *= scale);
            }
            let lr = lr as f32;
            match cfg.optimizer {
                Optimizer::Momentum { momentum } => {
                    let mu = momentum as f32;
                    for k in 0..gw.len() {
                        adam.m[k].zip_mut_with(&gw[k], |m, g| *m = mu * *m + g);
                        adam.mb[k].zip_mut_with(&gb[k], |m, g| *m = mu * *m + g);
                        mlp.weights[k].scaled_add(-lr, &adam.m[k]);
                        mlp.biases[k].scaled_add(-lr, &adam.mb[k]);
                    }
                }
                Optimizer::Adam { beta1, beta2 } => {
                    adam.step += 1;
                    let (b1, b2) = (beta1 as f32, beta2 as f32);
                    let c1 = 1.0 - b1.powi(adam.step);
                    let c2 = 1.0 - b2.powi(adam.step);
                    let step = lr * c2.sqrt() / c1;
                    for k in 0..gw.len() {
                        ndarray::Zip::from(&mut mlp.weights[k])
                            .and(&mut adam.m[k])
                            .and(&mut adam.v[k])
                            .and(&gw[k])
                            .for_each(|w, m, v, &g| {
                                *m = b1 * *m + (1.0 - b1) * g;
                                *v = b2 * *v + (1.0 - b2) * g * g;
                                *w -= step * *m / (v.sqrt() + 1e-8);
                            });
                        ndarray::Zip::from(&mut mlp.biases[k])
                            .and(&mut adam.mb[k])
                            .and(&mut adam.vb[k])
                            .and(&gb[k])
                            .for_each(|w, m, v, &g| {
                                *m = b1 * *m + (1.0 - b1) * g;
                                *v = b2 * *v + (1.0 - b2) * g * g;
                                *w -= step * *m / (v.sqrt() + 1e-8);
                            });
                    }
                }
            }
        }
        let epoch_loss = loss_sum / batches_per_epoch as f64;
        info!(
            "{} epoch {}/{}: loss {:.5} ({:.0}s)",
            kind.name(),
            epoch + 1,
            cfg.epochs,
            epoch_loss,
            started.elapsed().as_secs_f64()
        );
        epoch_losses.push(epoch_loss);
    }

    let weights = mlp.to_weights(kind);
    if !weights.is_finite() {
        return Err(Error::Diverged("non-finite weights after training".into()));
    }
    Ok(TrainOutcome {
        weights,
        initial_loss,
        epoch_losses,
    })
}

/// Distribution of `|p - t| / (t + ε)` over held-out samples.
#[derive(Clone, Debug, PartialEq)]
pub struct ErrorStats {
    pub count: usize,
    pub mean: f64,
    pub p95: f64,
    pub max: f64,
}

pub fn relative_errors(net: &MlpWeights, samples: &[TrainingSample]) -> Vec<f64> {
    let mlp = Mlp::<f64>::from_weights(net);
    let x = Array2::from_shape_fn((samples.len(), INPUT_DIM), |(i, j)| samples[i].features[j]);
    let p = mlp.infer_batch(x.view());
    p.iter()
        .zip(samples)
        .map(|(&p, s)| (p - s.target).abs() / (s.target + REL_EPS))
        .collect()
}

pub fn error_stats(errors: &[f64]) -> ErrorStats {
    let mut sorted = errors.to_vec();
    sorted.sort_by(f64::total_cmp);
    let count = sorted.len();
    let pct = |q: f64| {
        if count == 0 {
            0.0
        } else {
            sorted[((q * (count - 1) as f64).round() as usize).min(count - 1)]
        }
    };
    ErrorStats {
        count,
        mean: sorted.iter().sum::<f64>() / count.max(1) as f64,
        p95: pct(0.95),
        max: sorted.last().copied().unwrap_or(0.0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{grad_input, infer};

    #[test]
    fn feature_layout() {
        let lobe = IsgLobe::new(Rgb::WHITE, 1.0, Vec3::new(0.0, 1.0, 0.0));
        let rho = MaterialParams::new(Rgb::WHITE, Rgb::WHITE, 0.3);
        let n = Vec3::new(0.0, 0.0, -1.0);
        let d = featurize(&lobe, &rho, n, n, NetKind::Diffuse);
        assert_eq!(d.len(), 12);
        assert_eq!(d[slot::ROUGHNESS], 0.0);
        assert_eq!(d[slot::LOG_SHARPNESS], 0.0);
        assert_eq!(d[slot::BIAS], 1.0);
        assert_eq!(&d[slot::GEOMETRY..slot::GEOMETRY + 3], &[0.0, 0.0, -1.0]);
        let s = featurize(&lobe, &rho, Vec3::new(0.0, 1.0, 0.0), n, NetKind::Specular);
        assert_eq!(s[slot::ROUGHNESS], 0.3);
        // half-angle of a grazing normal is the origin
        assert_eq!(&s[slot::GEOMETRY..slot::GEOMETRY + 3], &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn training_set_is_deterministic_and_nonnegative() {
        let rule = QuadratureRule::new(16, 32);
        let a = make_training_set(NetKind::Specular, 50, 4, &rule);
        let b = make_training_set(NetKind::Specular, 50, 4, &rule);
        assert_eq!(a, b);
        assert!(a.iter().all(|s| s.target >= 0.0));
        let c = make_training_set(NetKind::Specular, 50, 5, &rule);
        assert_ne!(a, c);
    }

    #[test]
    fn back_facing_sharp_lobe_has_near_zero_diffuse_target() {
        let rule = QuadratureRule::test();
        let n = Vec3::new(0.0, 0.0, -1.0);
        let v = diffuse_unit_response(-n, 100.0, n, n, &rule);
        assert!(v < 1e-12, "{v}");
        let lit = diffuse_unit_response(n, 100.0, n, n, &rule);
        assert!(lit > 1e-3);
    }

    #[test]
    fn linear_in_weight_and_albedo() {
        let net_d = MlpWeights::random(NetKind::Diffuse, &architecture(), &mut ChaCha8Rng::seed_from_u64(1));
        let net_s = MlpWeights::random(NetKind::Specular, &architecture(), &mut ChaCha8Rng::seed_from_u64(2));
        let s = Surrogate::new(net_d, net_s).unwrap();
        let lobe = IsgLobe::new(Rgb::new(0.2, 0.4, 0.8), 5.0, Vec3::new(0.3, 0.2, -0.9));
        let rho = MaterialParams::new(Rgb::new(0.5, 0.2, 0.1), Rgb::splat(0.3), 0.2);
        let n = Vec3::new(0.1, 0.1, -1.0).normalized();
        let base = s.reflect_lobe(&lobe, &rho, n, FRONT);
        let doubled = s.reflect_lobe(&IsgLobe { weight: lobe.weight * 2.0, ..lobe }, &rho, n, FRONT);
        assert_eq!(doubled, base * 2.0);
        let scaled_rho = MaterialParams { k_d: rho.k_d * 0.5, k_s: rho.k_s * 0.5, ..rho };
        let half = s.reflect_lobe(&lobe, &scaled_rho, n, FRONT);
        for c in 0..3 {
            assert!((half[c] - 0.5 * base[c]).abs() <= 1e-12 * base[c]);
        }
    }

    #[test]
    fn sharpness_chain_rule() {
        let net = MlpWeights::random(NetKind::Diffuse, &architecture(), &mut ChaCha8Rng::seed_from_u64(3));
        let mean = Vec3::new(0.1, 0.5, -0.8).normalized();
        let n = Vec3::new(0.2, 0.0, -1.0).normalized();
        let f = |sigma: f64| infer(&net, &raw_features(mean, sigma, n, FRONT, 0.0)).unwrap();
        let sigma = 3.0;
        let g = grad_input(&net, &raw_features(mean, sigma, n, FRONT, 0.0)).unwrap();
        let analytic = g[slot::LOG_SHARPNESS] / sigma;
        let h = 1e-4;
        let fd = (f(sigma + h) - f(sigma - h)) / (2.0 * h);
        assert!((analytic - fd).abs() < 1e-4 * fd.abs().max(1e-8), "{analytic} {fd}");
    }

    #[test]
    fn learns_a_constant() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let samples: Vec<TrainingSample> = (0..1000)
            .map(|_| {
                let mut f = [0.0; 12];
                f.iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0));
                f[slot::BIAS] = 1.0;
                TrainingSample { features: f, target: 0.35 }
            })
            .collect();
        let cfg = TrainConfig {
            epochs: 10,
            warmup_epochs: 0,
            batch_size: 50,
            ..Default::default()
        };
        let out = train(NetKind::Diffuse, &samples, &cfg).unwrap();
        let stats = error_stats(&relative_errors(&out.weights, &samples));
        assert!(stats.max < 0.01, "{stats:?}");
    }

    #[test]
    fn training_is_deterministic() {
        let rule = QuadratureRule::new(16, 32);
        let samples = make_training_set(NetKind::Diffuse, 200, 1, &rule);
        let cfg = TrainConfig {
            epochs: 2,
            batch_size: 32,
            ..Default::default()
        };
        let a = train(NetKind::Diffuse, &samples, &cfg).unwrap();
        let b = train(NetKind::Diffuse, &samples, &cfg).unwrap();
        assert_eq!(a.weights.to_bytes(), b.weights.to_bytes());
    }

    #[test]
    fn training_reduces_held_out_loss() {
        let rule = QuadratureRule::new(32, 64);
        let samples = make_training_set(NetKind::Diffuse, 2000, 2, &rule);
        let held_out = make_training_set(NetKind::Diffuse, 500, 3, &rule);
        let cfg = TrainConfig {
            epochs: 30,
            warmup_epochs: 20,
            batch_size: 64,
            ..Default::default()
        };
        let out = train(NetKind::Diffuse, &samples, &cfg).unwrap();
        let before = out.initial_loss;
        let after = relative_squared_loss(&out.weights, &held_out);
        assert!(after * 10.0 <= before, "{before} -> {after}");
    }

    #[test]
    fn divergence_is_reported() {
        let rule = QuadratureRule::new(8, 16);
        let samples = make_training_set(NetKind::Diffuse, 100, 2, &rule);
        let cfg = TrainConfig {
            epochs: 5,
            batch_size: 10,
            learning_rate: 1e12,
            optimizer: Optimizer::Momentum { momentum: 0.99 },
            ..Default::default()
        };
        assert!(matches!(
            train(NetKind::Diffuse, &samples, &cfg),
            Err(Error::Diverged(_))
        ));
    }

    #[test]
    fn error_stats_percentiles() {
        let errs: Vec<f64> = (0..101).map(|i| i as f64 / 100.0).collect();
        let s = error_stats(&errs);
        assert!((s.mean - 0.5).abs() < 1e-12);
        assert!((s.p95 - 0.95).abs() < 1e-12);
        assert_eq!(s.max, 1.0);
    }
}
