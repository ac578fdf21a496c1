//! Cross-modal opacity modulator.
//!
//! A per-primitive MLP maps the SH coefficient vector of every primitive in
//! the concatenated (visible, then infrared) set to a weight `τ ∈ (0, 1)`:
//!
//! ```text
//! φ_i(x) = LayerNorm(LeakyReLU(x W_i + b_i))      i = 1, 2
//! τ      = sigmoid(φ_2(φ_1(sh)) · w_3)
//! ```
//!
//! The final projection has no bias. Rows are independent, so the stacked
//! `(N + M) × d_c` input is processed row by row.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fsutil::write_atomic;
use crate::scalar::{sigmoid, Scalar};
use crate::scene::MultimodalScene;

/// Rows per parallel work item; fixed so reductions do not depend on the
/// thread count.
const ROW_CHUNK: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CmaConfig {
    pub leaky_slope: f64,
    pub layer_norm_eps: f64,
}

impl Default for CmaConfig {
    fn default() -> Self {
        Self {
            leaky_slope: 0.01,
            layer_norm_eps: 1e-5,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CmaParameters<S> {
    pub d_c: usize,
    pub h1: usize,
    pub h2: usize,
    pub config: CmaConfig,
    /// `d_c × h1`, row-major.
    pub w1: Vec<S>,
    pub b1: Vec<S>,
    pub ln1_gain: Vec<S>,
    pub ln1_bias: Vec<S>,
    /// `h1 × h2`, row-major.
    pub w2: Vec<S>,
    pub b2: Vec<S>,
    pub ln2_gain: Vec<S>,
    pub ln2_bias: Vec<S>,
    pub w3: Vec<S>,
}

impl<S: Scalar> CmaParameters<S> {
    /// Everything zero except unit layer-norm gains.
    pub fn zeros(d_c: usize, h1: usize, h2: usize, config: CmaConfig) -> Result<Self> {
        if d_c == 0 || h1 == 0 || h2 == 0 {
            return Err(Error::InvalidParameter(format!(
                "modulator dims must be positive, got d_c={d_c} h1={h1} h2={h2}"
            )));
        }
        let z = S::zero();
        Ok(Self {
            d_c,
            h1,
            h2,
            config,
            w1: vec![z; d_c * h1],
            b1: vec![z; h1],
            ln1_gain: vec![S::one(); h1],
            ln1_bias: vec![z; h1],
            w2: vec![z; h1 * h2],
            b2: vec![z; h2],
            ln2_gain: vec![S::one(); h2],
            ln2_bias: vec![z; h2],
            w3: vec![z; h2],
        })
    }

    /// Xavier-uniform weights, zero biases, unit gains; deterministic in `seed`.
    pub fn init(seed: u64, d_c: usize, h1: usize, h2: usize, config: CmaConfig) -> Result<Self> {
        let mut p = Self::zeros(d_c, h1, h2, config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut fill = |w: &mut Vec<S>, fan_in: usize, fan_out: usize| {
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for v in w.iter_mut() {
                *v = S::lit(rng.gen_range(-bound..bound));
            }
        };
        fill(&mut p.w1, d_c, h1);
        fill(&mut p.w2, h1, h2);
        fill(&mut p.w3, h2, 1);
        Ok(p)
    }

    pub fn param_count(&self) -> usize {
        self.d_c * self.h1 + 3 * self.h1 + self.h1 * self.h2 + 4 * self.h2
    }

    fn blocks(&self) -> [&Vec<S>; 9] {
        [
            &self.w1,
            &self.b1,
            &self.ln1_gain,
            &self.ln1_bias,
            &self.w2,
            &self.b2,
            &self.ln2_gain,
            &self.ln2_bias,
            &self.w3,
        ]
    }

    fn blocks_mut(&mut self) -> [&mut Vec<S>; 9] {
        [
            &mut self.w1,
            &mut self.b1,
            &mut self.ln1_gain,
            &mut self.ln1_bias,
            &mut self.w2,
            &mut self.b2,
            &mut self.ln2_gain,
            &mut self.ln2_bias,
            &mut self.w3,
        ]
    }

    /// All parameters in a fixed order (w1, b1, ln1, w2, b2, ln2, w3).
    pub fn to_flat(&self) -> Vec<S> {
        self.blocks().iter().flat_map(|b| b.iter().copied()).collect()
    }

    pub fn set_flat(&mut self, flat: &[S]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::Shape(format!(
                "expected {} parameters, got {}",
                self.param_count(),
                flat.len()
            )));
        }
        let mut off = 0;
        for b in self.blocks_mut() {
            let n = b.len();
            b.copy_from_slice(&flat[off..off + n]);
            off += n;
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.blocks().iter().all(|b| b.iter().all(|v| v.is_finite()))
    }

    fn check_input(&self, d_c: usize) -> Result<()> {
        if d_c != self.d_c {
            return Err(Error::Shape(format!(
                "modulator expects {} SH coefficients per primitive, scene has {d_c}",
                self.d_c
            )));
        }
        Ok(())
    }
}

#[inline]
fn leaky<S: Scalar>(z: S, slope: S) -> S {
    if z > S::zero() {
        z
    } else {
        z * slope
    }
}

/// Normalised activations and inverse std for one layer-norm application.
pub fn layer_norm<S: Scalar>(a: &[S], gain: &[S], bias: &[S], eps: S, xhat: &mut [S], out: &mut [S]) -> S {
    let n = S::from_usize(a.len()).unwrap();
    let mean = a.iter().copied().sum::<S>() / n;
    let var = a.iter().map(|&v| (v - mean) * (v - mean)).sum::<S>() / n;
    let inv_std = S::one() / (var + eps).sqrt();
    for i in 0..a.len() {
        xhat[i] = (a[i] - mean) * inv_std;
        out[i] = gain[i] * xhat[i] + bias[i];
    }
    inv_std
}

/// Reverse-mode of [`layer_norm`]: returns `∂L/∂a` and accumulates the
/// gain/bias gradients.
pub fn layer_norm_backward<S: Scalar>(
    d_out: &[S],
    xhat: &[S],
    gain: &[S],
    inv_std: S,
    d_gain: &mut [S],
    d_bias: &mut [S],
    d_a: &mut [S],
) {
    let n = S::from_usize(d_out.len()).unwrap();
    let mut mean_dx = S::zero();
    let mut mean_dx_xhat = S::zero();
    for i in 0..d_out.len() {
        d_gain[i] += d_out[i] * xhat[i];
        d_bias[i] += d_out[i];
        let dx = d_out[i] * gain[i];
        mean_dx += dx;
        mean_dx_xhat += dx * xhat[i];
    }
    mean_dx /= n;
    mean_dx_xhat /= n;
    for i in 0..d_out.len() {
        let dx = d_out[i] * gain[i];
        d_a[i] = inv_std * (dx - mean_dx - xhat[i] * mean_dx_xhat);
    }
}

/// Intermediate values of one row, kept for the backward pass.
struct RowCache<S> {
    z1: Vec<S>,
    xhat1: Vec<S>,
    y1: Vec<S>,
    inv1: S,
    z2: Vec<S>,
    xhat2: Vec<S>,
    y2: Vec<S>,
    inv2: S,
    tau: S,
}

fn forward_row<S: Scalar>(p: &CmaParameters<S>, x: &[S]) -> RowCache<S> {
    let slope = S::lit(p.config.leaky_slope);
    let eps = S::lit(p.config.layer_norm_eps);
    let (h1, h2) = (p.h1, p.h2);
    let mut z1 = p.b1.clone();
    for (i, &xi) in x.iter().enumerate() {
        if xi == S::zero() {
            continue;
        }
        let row = &p.w1[i * h1..(i + 1) * h1];
        for j in 0..h1 {
            z1[j] += xi * row[j];
        }
    }
    let a1: Vec<S> = z1.iter().map(|&z| leaky(z, slope)).collect();
    let mut xhat1 = vec![S::zero(); h1];
    let mut y1 = vec![S::zero(); h1];
    let inv1 = layer_norm(&a1, &p.ln1_gain, &p.ln1_bias, eps, &mut xhat1, &mut y1);

    let mut z2 = p.b2.clone();
    for (i, &yi) in y1.iter().enumerate() {
        let row = &p.w2[i * h2..(i + 1) * h2];
        for j in 0..h2 {
            z2[j] += yi * row[j];
        }
    }
    let a2: Vec<S> = z2.iter().map(|&z| leaky(z, slope)).collect();
    let mut xhat2 = vec![S::zero(); h2];
    let mut y2 = vec![S::zero(); h2];
    let inv2 = layer_norm(&a2, &p.ln2_gain, &p.ln2_bias, eps, &mut xhat2, &mut y2);
    let logit: S = y2.iter().zip(&p.w3).map(|(&a, &b)| a * b).sum();
    RowCache {
        z1,
        xhat1,
        y1,
        inv1,
        z2,
        xhat2,
        y2,
        inv2,
        tau: sigmoid(logit),
    }
}

/// Modulation weights for a stacked `rows × d_c` coefficient matrix.
pub fn cma_forward_rows<S: Scalar>(params: &CmaParameters<S>, rows: &[S]) -> Result<Vec<S>> {
    let d_c = params.d_c;
    if rows.len() % d_c != 0 {
        return Err(Error::Shape(format!(
            "input length {} is not a multiple of d_c = {d_c}",
            rows.len()
        )));
    }
    Ok(rows.par_chunks(d_c).map(|x| forward_row(params, x).tau).collect())
}

/// Stacks the scene's SH coefficients in concatenation order.
pub fn stack_sh<S: Scalar>(scene: &MultimodalScene<S>) -> Vec<S> {
    scene.iter_concat().flat_map(|p| p.sh.iter().copied()).collect()
}

/// `τ` for every primitive of `scene`, visible first.
pub fn cma_forward<S: Scalar>(params: &CmaParameters<S>, scene: &MultimodalScene<S>) -> Result<Vec<S>> {
    params.check_input(scene.sh_dim())?;
    cma_forward_rows(params, &stack_sh(scene))
}

#[derive(Clone, Debug, PartialEq)]
pub struct CmaGradients<S> {
    pub d_params: CmaParameters<S>,
    /// `∂L/∂sh`, same stacking as the input, when requested.
    pub d_sh: Option<Vec<S>>,
}

fn backward_row<S: Scalar>(p: &CmaParameters<S>, x: &[S], d_tau: S, g: &mut CmaParameters<S>, d_x: Option<&mut [S]>) {
    let c = forward_row(p, x);
    let slope = S::lit(p.config.leaky_slope);
    let (h1, h2) = (p.h1, p.h2);
    let d_logit = d_tau * c.tau * (S::one() - c.tau);
    let mut d_y2 = vec![S::zero(); h2];
    for j in 0..h2 {
        g.w3[j] += d_logit * c.y2[j];
        d_y2[j] = d_logit * p.w3[j];
    }
    let mut d_a2 = vec![S::zero(); h2];
    layer_norm_backward(&d_y2, &c.xhat2, &p.ln2_gain, c.inv2, &mut g.ln2_gain, &mut g.ln2_bias, &mut d_a2);
    let d_z2: Vec<S> = d_a2
        .iter()
        .zip(&c.z2)
        .map(|(&d, &z)| if z > S::zero() { d } else { d * slope })
        .collect();
    let mut d_y1 = vec![S::zero(); h1];
    for i in 0..h1 {
        let row = &p.w2[i * h2..(i + 1) * h2];
        let grow = &mut g.w2[i * h2..(i + 1) * h2];
        let mut acc = S::zero();
        for j in 0..h2 {
            grow[j] += c.y1[i] * d_z2[j];
            acc += row[j] * d_z2[j];
        }
        d_y1[i] = acc;
    }
    for j in 0..h2 {
        g.b2[j] += d_z2[j];
    }
    let mut d_a1 = vec![S::zero(); h1];
    layer_norm_backward(&d_y1, &c.xhat1, &p.ln1_gain, c.inv1, &mut g.ln1_gain, &mut g.ln1_bias, &mut d_a1);
    let d_z1: Vec<S> = d_a1
        .iter()
        .zip(&c.z1)
        .map(|(&d, &z)| if z > S::zero() { d } else { d * slope })
        .collect();
    for j in 0..h1 {
        g.b1[j] += d_z1[j];
    }
    for (i, &xi) in x.iter().enumerate() {
        let grow = &mut g.w1[i * h1..(i + 1) * h1];
        for j in 0..h1 {
            grow[j] += xi * d_z1[j];
        }
    }
    if let Some(dx) = d_x {
        for i in 0..x.len() {
            let row = &p.w1[i * h1..(i + 1) * h1];
            dx[i] = row.iter().zip(&d_z1).map(|(&w, &d)| w * d).sum();
        }
    }
}

/// Reverse-mode through the modulator for stacked rows.
pub fn cma_backward_rows<S: Scalar>(
    params: &CmaParameters<S>,
    rows: &[S],
    d_tau: &[S],
    want_input_grad: bool,
) -> Result<CmaGradients<S>> {
    let d_c = params.d_c;
    if rows.len() != d_tau.len() * d_c {
        return Err(Error::Shape(format!(
            "{} gradient entries for {} input values (d_c = {d_c})",
            d_tau.len(),
            rows.len()
        )));
    }
    let zeros = || {
        let mut z = params.clone();
        for b in z.blocks_mut() {
            b.iter_mut().for_each(|v| *v = S::zero());
        }
        z
    };
    let chunk_vals = ROW_CHUNK * d_c;
    let partials: Vec<(CmaParameters<S>, Vec<S>)> = rows
        .par_chunks(chunk_vals)
        .zip(d_tau.par_chunks(ROW_CHUNK))
        .map(|(xs, dts)| {
            let mut g = zeros();
            let mut dx = if want_input_grad { vec![S::zero(); xs.len()] } else { Vec::new() };
            for (r, (x, &dt)) in xs.chunks(d_c).zip(dts).enumerate() {
                if dt == S::zero() {
                    continue;
                }
                let slot = want_input_grad.then(|| &mut dx[r * d_c..(r + 1) * d_c]);
                backward_row(params, x, dt, &mut g, slot);
            }
            (g, dx)
        })
        .collect();
    let mut total = zeros();
    let mut d_sh = want_input_grad.then(|| Vec::with_capacity(rows.len()));
    for (g, dx) in partials {
        for (t, s) in total.blocks_mut().into_iter().zip(g.blocks()) {
            for (a, b) in t.iter_mut().zip(s.iter()) {
                *a += *b;
            }
        }
        if let Some(d) = d_sh.as_mut() {
            d.extend_from_slice(&dx);
        }
    }
    Ok(CmaGradients { d_params: total, d_sh })
}

pub fn cma_backward<S: Scalar>(
    params: &CmaParameters<S>,
    scene: &MultimodalScene<S>,
    d_tau: &[S],
    want_sh_grad: bool,
) -> Result<CmaGradients<S>> {
    params.check_input(scene.sh_dim())?;
    if d_tau.len() != scene.len() {
        return Err(Error::Shape(format!(
            "d_tau has {} entries for {} primitives",
            d_tau.len(),
            scene.len()
        )));
    }
    cma_backward_rows(params, &stack_sh(scene), d_tau, want_sh_grad)
}

const MAGIC: &[u8; 8] = b"FSPLCMA\0";
const VERSION: u32 = 1;

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, &b| (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3))
}

/// Versioned little-endian checkpoint:
/// magic, version, scalar width, `d_c`, `h1`, `h2`, leaky slope, layer-norm
/// epsilon, the flattened parameters, and an FNV-1a checksum of all
/// preceding bytes.
pub fn cma_to_bytes<S: Scalar>(params: &CmaParameters<S>) -> Vec<u8> {
    let mut out = Vec::with_capacity(48 + params.param_count() * S::BYTES);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(S::BYTES as u32).to_le_bytes());
    for d in [params.d_c, params.h1, params.h2] {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    out.extend_from_slice(&params.config.leaky_slope.to_le_bytes());
    out.extend_from_slice(&params.config.layer_norm_eps.to_le_bytes());
    for v in params.to_flat() {
        v.write_le(&mut out);
    }
    let sum = fnv1a(&out);
    out.extend_from_slice(&sum.to_le_bytes());
    out
}

pub fn cma_from_bytes<S: Scalar>(bytes: &[u8]) -> Result<CmaParameters<S>> {
    let bad = |m: String| Error::Checkpoint(m);
    const HEADER: usize = 8 + 4 * 5 + 16;
    if bytes.len() < HEADER + 8 {
        return Err(bad(format!("checkpoint too short ({} bytes)", bytes.len())));
    }
    if &bytes[..8] != MAGIC {
        return Err(bad("bad magic; not a modulator checkpoint".into()));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let version = u32_at(8);
    if version != VERSION {
        return Err(bad(format!("unsupported checkpoint version {version}")));
    }
    let width = u32_at(12) as usize;
    let (d_c, h1, h2) = (u32_at(16) as usize, u32_at(20) as usize, u32_at(24) as usize);
    let slope = f64::from_le_bytes(bytes[28..36].try_into().unwrap());
    let eps = f64::from_le_bytes(bytes[36..44].try_into().unwrap());
    if width != 4 && width != 8 {
        return Err(bad(format!("unsupported scalar width {width}")));
    }
    let config = CmaConfig {
        leaky_slope: slope,
        layer_norm_eps: eps,
    };
    let mut params = CmaParameters::<S>::zeros(d_c, h1, h2, config).map_err(|e| bad(e.to_string()))?;
    let n = params.param_count();
    let expected = HEADER + n * width + 8;
    if bytes.len() != expected {
        return Err(bad(format!(
            "checkpoint length {} does not match header (expected {expected})",
            bytes.len()
        )));
    }
    let stored = u64::from_le_bytes(bytes[expected - 8..].try_into().unwrap());
    if stored != fnv1a(&bytes[..expected - 8]) {
        return Err(bad("checksum mismatch; checkpoint is corrupted".into()));
    }
    let flat: Vec<S> = (0..n)
        .map(|i| {
            let at = HEADER + i * width;
            if width == S::BYTES {
                S::read_le(&bytes[at..at + width])
            } else if width == 4 {
                S::lit(f32::read_le(&bytes[at..]) as f64)
            } else {
                S::lit(f64::read_le(&bytes[at..]))
            }
        })
        .collect();
    params.set_flat(&flat)?;
    Ok(params)
}

pub fn save_cma<S: Scalar>(params: &CmaParameters<S>, path: &Path) -> Result<()> {
    write_atomic(path, &cma_to_bytes(params))
}

pub fn load_cma<S: Scalar>(path: &Path) -> Result<CmaParameters<S>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    cma_from_bytes(&bytes)
}
