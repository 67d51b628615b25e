//! Fully connected softplus networks with analytic input gradients.
//!
//! Weights are stored in `f32`; evaluation runs in either `f32` (fast) or `f64`
//! (used where finite-difference agreement matters).

use std::fs;
use std::path::Path;

use byteorder::{ByteOrder, LittleEndian};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, LinalgScalar};
use num_traits::{Float, NumAssign};
use rand::Rng;

use crate::error::{Error, Result};

pub const INPUT_DIM: usize = 12;
pub const HIDDEN_UNITS: usize = 288;
pub const HIDDEN_LAYERS: usize = 3;

const MAGIC: &[u8; 4] = b"IFNN";
const VERSION: u32 = 1;

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
pub enum NetKind {
    Diffuse,
    Specular,
}

impl NetKind {
    fn code(self) -> u8 {
        match self {
            NetKind::Diffuse => 0,
            NetKind::Specular => 1,
        }
    }

    fn from_code(c: u8) -> Result<Self> {
        match c {
            0 => Ok(NetKind::Diffuse),
            1 => Ok(NetKind::Specular),
            _ => Err(Error::MalformedHeader(format!("unknown network kind {c}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            NetKind::Diffuse => "diffuse",
            NetKind::Specular => "specular",
        }
    }
}

impl std::str::FromStr for NetKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "diffuse" => Ok(NetKind::Diffuse),
            "specular" => Ok(NetKind::Specular),
            _ => Err(Error::InvalidArgument(format!("unknown network kind {s:?}"))),
        }
    }
}

/// One affine layer; `weights` is `inputs × outputs`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f32>,
    pub biases: Vec<f32>,
}

impl Layer {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Layer {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            biases: vec![0.0; outputs],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpWeights {
    pub kind: NetKind,
    pub layers: Vec<Layer>,
}

/// Layer widths of the fixed architecture: 12 → 288 → 288 → 288 → 1.
pub fn architecture() -> Vec<usize> {
    let mut sizes = vec![INPUT_DIM];
    sizes.extend(std::iter::repeat_n(HIDDEN_UNITS, HIDDEN_LAYERS));
    sizes.push(1);
    sizes
}

impl MlpWeights {
    pub fn zeros(kind: NetKind, sizes: &[usize]) -> Self {
        MlpWeights {
            kind,
            layers: sizes.windows(2).map(|w| Layer::zeros(w[0], w[1])).collect(),
        }
    }

    /// Glorot-uniform weights and zero biases.
    pub fn random<R: Rng>(kind: NetKind, sizes: &[usize], rng: &mut R) -> Self {
        let mut net = MlpWeights::zeros(kind, sizes);
        for layer in &mut net.layers {
            let limit = (6.0 / (layer.inputs + layer.outputs) as f64).sqrt();
            for w in &mut layer.weights {
                *w = rng.gen_range(-limit..limit) as f32;
            }
        }
        net
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, |l| l.inputs)
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.biases.len())
            .sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| {
            l.weights.iter().all(|v| v.is_finite()) && l.biases.iter().all(|v| v.is_finite())
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(13 + self.parameter_count() * 4 + self.layers.len() * 8);
        out.extend_from_slice(MAGIC);
        let mut u = [0u8; 4];
        LittleEndian::write_u32(&mut u, VERSION);
        out.extend_from_slice(&u);
        out.push(self.kind.code());
        LittleEndian::write_u32(&mut u, self.layers.len() as u32);
        out.extend_from_slice(&u);
        for l in &self.layers {
            LittleEndian::write_u32(&mut u, l.inputs as u32);
            out.extend_from_slice(&u);
            LittleEndian::write_u32(&mut u, l.outputs as u32);
            out.extend_from_slice(&u);
            for &v in l.weights.iter().chain(&l.biases) {
                LittleEndian::write_f32(&mut u, v);
                out.extend_from_slice(&u);
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        struct Cursor<'a> {
            b: &'a [u8],
            pos: usize,
        }
        impl Cursor<'_> {
            fn take(&mut self, n: usize) -> Result<&[u8]> {
                if self.pos + n > self.b.len() {
                    return Err(Error::ShortRead {
                        expected: self.pos + n,
                        found: self.b.len(),
                    });
                }
                let s = &self.b[self.pos..self.pos + n];
                self.pos += n;
                Ok(s)
            }
            fn u32(&mut self) -> Result<u32> {
                Ok(LittleEndian::read_u32(self.take(4)?))
            }
        }

        let mut c = Cursor { b: bytes, pos: 0 };
        if c.take(4)? != MAGIC {
            return Err(Error::MalformedHeader("bad magic, expected IFNN".into()));
        }
        let version = c.u32()?;
        if version != VERSION {
            return Err(Error::MalformedHeader(format!("unsupported version {version}")));
        }
        let kind = NetKind::from_code(c.take(1)?[0])?;
        let n_layers = c.u32()? as usize;
        if n_layers == 0 || n_layers > 64 {
            return Err(Error::MalformedHeader(format!("bad layer count {n_layers}")));
        }
        let mut layers = Vec::with_capacity(n_layers);
        let mut idx = 0;
        for k in 0..n_layers {
            let inputs = c.u32()? as usize;
            let outputs = c.u32()? as usize;
            if inputs == 0 || outputs == 0 || inputs > 1 << 16 || outputs > 1 << 16 {
                return Err(Error::MalformedHeader(format!("bad shape for layer {k}")));
            }
            if let Some(prev) = layers.last().map(|l: &Layer| l.outputs) {
                if prev != inputs {
                    return Err(Error::MalformedHeader(format!(
                        "layer {k} expects {inputs} inputs but previous layer has {prev} outputs"
                    )));
                }
            }
            let mut read = |n: usize| -> Result<Vec<f32>> {
                let raw = c.take(n * 4)?;
                raw.chunks_exact(4)
                    .map(|ch| {
                        let v = LittleEndian::read_f32(ch);
                        idx += 1;
                        if v.is_finite() {
                            Ok(v)
                        } else {
                            Err(Error::NonFinite(idx - 1))
                        }
                    })
                    .collect()
            };
            let weights = read(inputs * outputs)?;
            let biases = read(outputs)?;
            layers.push(Layer {
                inputs,
                outputs,
                weights,
                biases,
            });
        }
        if c.pos != bytes.len() {
            return Err(Error::MalformedHeader("trailing bytes".into()));
        }
        Ok(MlpWeights { kind, layers })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        MlpWeights::from_bytes(&bytes)
    }
}

/// Scalar type a network can be evaluated in.
pub trait Scalar: LinalgScalar + Float + NumAssign + Send + Sync {
    fn of(v: f64) -> Self;
    fn as_f64(self) -> f64;

    /// `(softplus(x), logistic(x))`.
    #[inline]
    fn softplus_pair(self) -> (Self, Self) {
        softplus_and_slope(self)
    }
}

impl Scalar for f32 {
    #[inline]
    fn of(v: f64) -> Self {
        v as f32
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
    #[inline]
    fn softplus_pair(self) -> (Self, Self) {
        softplus_f32(self)
    }
}

impl Scalar for f64 {
    #[inline]
    fn of(v: f64) -> Self {
        v
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
}

/// Softplus and its derivative (the logistic function), sharing one exponential.
#[inline]
pub fn softplus_and_slope<T: Scalar>(x: T) -> (T, T) {
    let e = (-x.abs()).exp();
    let one = T::one();
    let sp = x.max(T::zero()) + e.ln_1p();
    let s = if x >= T::zero() {
        one / (one + e)
    } else {
        e / (one + e)
    };
    (sp, s)
}

/// Branch-free single-precision softplus and slope, accurate to a few ulp.
#[inline]
pub fn softplus_f32(x: f32) -> (f32, f32) {
    // e = exp(-|x|) by range reduction to [-ln2/2, ln2/2]
    let y = (-x.abs()).max(-87.0);
    let shifted = y * std::f32::consts::LOG2_E + 12_582_912.0;
    let n = shifted - 12_582_912.0;
    let r = y - n * 0.693_145_75 - n * 1.428_606_8e-6;
    let p = 1.0
        + r * (1.0
            + r * (0.5
                + r * (0.166_666_67
                    + r * (0.041_666_668 + r * (0.008_333_334 + r * (0.001_388_888_9 + r * 0.000_198_412_7))))));
    let e = p * f32::from_bits((shifted.to_bits().wrapping_sub(0x4B40_0000 - 127)) << 23);
    // ln(1 + e) = 2 atanh(s), s = e / (2 + e) ≤ 1/3
    let s = e / (2.0 + e);
    let s2 = s * s;
    let series = 1.0
        + s2 * (1.0 / 3.0
            + s2 * (1.0 / 5.0
                + s2 * (1.0 / 7.0 + s2 * (1.0 / 9.0 + s2 * (1.0 / 11.0 + s2 * (1.0 / 13.0 + s2 * (1.0 / 15.0)))))));
    let sp = (x - x.min(0.0)) + 2.0 * s * series;
    let inv = 1.0 / (1.0 + e);
    let slope = if x >= 0.0 { inv } else { e * inv };
    (sp, slope)
}

#[inline]
pub fn softplus(x: f64) -> f64 {
    softplus_and_slope(x).0
}

/// Network parameters materialized as matrices of one scalar type.
#[derive(Clone, Debug)]
pub struct Mlp<T: Scalar> {
    pub weights: Vec<Array2<T>>,
    pub biases: Vec<Array1<T>>,
}

/// Activations kept from a forward pass.
pub struct Tape<T: Scalar> {
    /// Layer inputs; `inputs[0]` is the feature batch.
    inputs: Vec<Array2<T>>,
    /// Derivative of each layer's activation at its pre-activation.
    slopes: Vec<Array2<T>>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Tape {
            inputs: Vec::new(),
            slopes: Vec::new(),
        }
    }
}

impl<T: Scalar> Mlp<T> {
    pub fn from_weights(w: &MlpWeights) -> Self {
        let cast = |v: f32| T::of(v as f64);
        Mlp {
            weights: w
                .layers
                .iter()
                .map(|l| {
                    Array2::from_shape_vec(
                        (l.inputs, l.outputs),
                        l.weights.iter().map(|&v| cast(v)).collect(),
                    )
                    .expect("layer shape")
                })
                .collect(),
            biases: w
                .layers
                .iter()
                .map(|l| l.biases.iter().map(|&v| cast(v)).collect())
                .collect(),
        }
    }

    /// Rounds back to `f32` storage.
    pub fn to_weights(&self, kind: NetKind) -> MlpWeights {
        MlpWeights {
            kind,
            layers: self
                .weights
                .iter()
                .zip(&self.biases)
                .map(|(w, b)| Layer {
                    inputs: w.nrows(),
                    outputs: w.ncols(),
                    weights: w.iter().map(|v| v.as_f64() as f32).collect(),
                    biases: b.iter().map(|v| v.as_f64() as f32).collect(),
                })
                .collect(),
        }
    }

    /// Forward pass over a `batch × inputs` matrix; returns the outputs and fills `tape`.
    pub fn forward(&self, x: ArrayView2<T>, tape: &mut Tape<T>) -> Array1<T> {
        tape.inputs.clear();
        tape.slopes.clear();
        let mut a = x.to_owned();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            let mut z = a.dot(w);
            z += &b.view();
            let mut slope = Array2::zeros(z.raw_dim());
            ndarray::Zip::from(&mut z).and(&mut slope).for_each(|zv, sv| {
                let (sp, s) = zv.softplus_pair();
                *zv = sp;
                *sv = s;
            });
            tape.inputs.push(a);
            tape.slopes.push(slope);
            a = z;
        }
        a.index_axis_move(Axis(1), 0)
    }

    /// Forward pass without keeping activations.
    pub fn infer_batch(&self, x: ArrayView2<T>) -> Array1<T> {
        let mut a = x.to_owned();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            let mut z = a.dot(w);
            z += &b.view();
            z.mapv_inplace(|v| v.softplus_pair().0);
            a = z;
        }
        a.index_axis_move(Axis(1), 0)
    }

    /// Gradient of `Σ_rows dout[row] · output[row]` with respect to the inputs.
    pub fn input_gradient(&self, tape: &Tape<T>, dout: ArrayView1<T>) -> Array2<T> {
        let last = self.weights.len() - 1;
        let mut g = &tape.slopes[last] * &dout.insert_axis(Axis(1));
        for k in (0..=last).rev() {
            let ga = g.dot(&self.weights[k].t());
            if k == 0 {
                return ga;
            }
            g = ga * &tape.slopes[k - 1];
        }
        unreachable!()
    }

    /// Parameter and input gradients of `Σ_rows dout[row] · output[row]`.
    pub fn backward(&self, tape: &Tape<T>, dout: ArrayView1<T>) -> (Vec<Array2<T>>, Vec<Array1<T>>) {
        let last = self.weights.len() - 1;
        let mut gw = Vec::with_capacity(last + 1);
        let mut gb = Vec::with_capacity(last + 1);
        let mut g = &tape.slopes[last] * &dout.insert_axis(Axis(1));
        for k in (0..=last).rev() {
            gw.push(tape.inputs[k].t().dot(&g));
            gb.push(g.sum_axis(Axis(0)));
            if k > 0 {
                g = g.dot(&self.weights[k].t()) * &tape.slopes[k - 1];
            }
        }
        gw.reverse();
        gb.reverse();
        (gw, gb)
    }
}

/// Scalar forward pass for a single feature vector, in f64.
pub fn infer(net: &MlpWeights, features: &[f64]) -> Result<f64> {
    if features.len() != net.input_dim() {
        return Err(Error::DimensionMismatch(format!(
            "{} features for a {}-input network",
            features.len(),
            net.input_dim()
        )));
    }
    if let Some(i) = features.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(i));
    }
    let mlp = Mlp::<f64>::from_weights(net);
    let x = ArrayView2::from_shape((1, features.len()), features).expect("row");
    Ok(mlp.infer_batch(x)[0])
}

/// Exact gradient of [`infer`] with respect to the features.
pub fn grad_input(net: &MlpWeights, features: &[f64]) -> Result<Vec<f64>> {
    if features.len() != net.input_dim() {
        return Err(Error::DimensionMismatch(format!(
            "{} features for a {}-input network",
            features.len(),
            net.input_dim()
        )));
    }
    let mlp = Mlp::<f64>::from_weights(net);
    let x = ArrayView2::from_shape((1, features.len()), features).expect("row");
    let mut tape = Tape::default();
    mlp.forward(x, &mut tape);
    let g = mlp.input_gradient(&tape, ndarray::aview1(&[1.0]));
    Ok(g.row(0).to_vec())
}
