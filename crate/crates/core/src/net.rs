//! Fully connected scalar networks `x ↦ W_L ∘ σ ∘ W_{L−1} ∘ … ∘ σ ∘ W_1 (x)`
//! with affine `W_ℓ`, and their exact reverse-mode parameter gradients.
//!
//! Batches are row-major `B × width` buffers; the matrix products go through
//! `matrixmultiply::dgemm`.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampling::RngSeed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActivationKind {
    Linear,
    #[serde(rename = "relu")]
    ReLU,
    Tanh,
}

impl ActivationKind {
    pub const ALL: [ActivationKind; 3] = [ActivationKind::Linear, ActivationKind::ReLU, ActivationKind::Tanh];

    pub fn name(self) -> &'static str {
        match self {
            ActivationKind::Linear => "linear",
            ActivationKind::ReLU => "relu",
            ActivationKind::Tanh => "tanh",
        }
    }

    fn apply_in_place(self, z: &mut [f64]) {
        match self {
            ActivationKind::Linear => {}
            ActivationKind::ReLU => z.iter_mut().for_each(|v| *v = v.max(0.0)),
            ActivationKind::Tanh => z.iter_mut().for_each(|v| *v = v.tanh()),
        }
    }

    /// Multiplies `g` by `σ'` expressed through the activation output `a`.
    /// ReLU uses `σ'(0) = 0`.
    fn backprop_in_place(self, g: &mut [f64], a: &[f64]) {
        match self {
            ActivationKind::Linear => {}
            ActivationKind::ReLU => g.iter_mut().zip(a).for_each(|(g, a)| {
                if *a <= 0.0 {
                    *g = 0.0
                }
            }),
            ActivationKind::Tanh => g.iter_mut().zip(a).for_each(|(g, a)| *g *= 1.0 - a * a),
        }
    }
}

impl fmt::Display for ActivationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ActivationKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "linear" | "identity" => Ok(ActivationKind::Linear),
            "relu" => Ok(ActivationKind::ReLU),
            "tanh" => Ok(ActivationKind::Tanh),
            other => Err(Error::input(format!("unknown activation '{other}'"))),
        }
    }
}

/// Offsets of each layer's weights and biases inside a flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
struct Layout {
    weight_at: Vec<usize>,
    bias_at: Vec<usize>,
    total: usize,
}

impl Layout {
    fn new(widths: &[usize]) -> Self {
        let mut weight_at = Vec::new();
        let mut bias_at = Vec::new();
        let mut at = 0;
        for w in widths.windows(2) {
            weight_at.push(at);
            at += w[0] * w[1];
            bias_at.push(at);
            at += w[1];
        }
        Self { weight_at, bias_at, total: at }
    }
}

fn check_widths(widths: &[usize]) -> Result<()> {
    if widths.len() < 2 {
        return Err(Error::input("a network needs at least an input and an output width"));
    }
    if widths.contains(&0) {
        return Err(Error::input(format!("widths {widths:?} contain a zero")));
    }
    if widths[0] != 1 || widths[widths.len() - 1] != 1 {
        return Err(Error::input(format!("widths {widths:?} must start and end with 1")));
    }
    Ok(())
}

/// Network parameters. Layer `ℓ` has a row-major `N_ℓ × N_{ℓ−1}` weight
/// matrix and an `N_ℓ` bias; the activation is applied after every layer but
/// the last.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    widths: Vec<usize>,
    activation: ActivationKind,
    params: Vec<f64>,
    layout: Layout,
}

/// Parameter-shaped accumulator; same layout as the [`Mlp`] it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientBuffer {
    widths: Vec<usize>,
    values: Vec<f64>,
    layout: Layout,
}

impl GradientBuffer {
    pub fn zeros_like(mlp: &Mlp) -> Self {
        Self { widths: mlp.widths.clone(), values: vec![0.0; mlp.params.len()], layout: mlp.layout.clone() }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn weights(&self, layer: usize) -> &[f64] {
        let start = self.layout.weight_at[layer];
        &self.values[start..self.layout.bias_at[layer]]
    }

    pub fn biases(&self, layer: usize) -> &[f64] {
        let start = self.layout.bias_at[layer];
        &self.values[start..start + self.widths[layer + 1]]
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Forward activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    batch: usize,
    // activations[0] is the input, activations[L] the output
    activations: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        self.activations.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

impl Mlp {
    /// Weights `~ U(−1/√fan_in, 1/√fan_in)`, biases zero.
    pub fn init(widths: &[usize], activation: ActivationKind, seed: RngSeed) -> Result<Self> {
        check_widths(widths)?;
        let layout = Layout::new(widths);
        let mut params = vec![0.0; layout.total];
        let mut rng = seed.rng();
        for (l, w) in widths.windows(2).enumerate() {
            let bound = 1.0 / (w[0] as f64).sqrt();
            let start = layout.weight_at[l];
            for p in &mut params[start..start + w[0] * w[1]] {
                *p = rng.random_range(-bound..bound);
            }
        }
        Ok(Self { widths: widths.to_vec(), activation, params, layout })
    }

    pub fn from_parts(
        widths: &[usize],
        activation: ActivationKind,
        weights: Vec<Vec<f64>>,
        biases: Vec<Vec<f64>>,
    ) -> Result<Self> {
        check_widths(widths)?;
        let layers = widths.len() - 1;
        if weights.len() != layers || biases.len() != layers {
            return Err(Error::input(format!("expected {layers} weight and bias arrays")));
        }
        let layout = Layout::new(widths);
        let mut params = Vec::with_capacity(layout.total);
        for (l, w) in widths.windows(2).enumerate() {
            if weights[l].len() != w[0] * w[1] || biases[l].len() != w[1] {
                return Err(Error::input(format!("layer {l} has inconsistent shapes")));
            }
            params.extend_from_slice(&weights[l]);
            params.extend_from_slice(&biases[l]);
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::input("network parameters must be finite"));
        }
        Ok(Self { widths: widths.to_vec(), activation, params, layout })
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn activation(&self) -> ActivationKind {
        self.activation
    }

    pub fn num_layers(&self) -> usize {
        self.widths.len() - 1
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    /// Exclusive access for optimizer updates.
    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn weights(&self, layer: usize) -> &[f64] {
        &self.params[self.layout.weight_at[layer]..self.layout.bias_at[layer]]
    }

    pub fn biases(&self, layer: usize) -> &[f64] {
        let start = self.layout.bias_at[layer];
        &self.params[start..start + self.widths[layer + 1]]
    }

    pub fn weights_mut(&mut self, layer: usize) -> &mut [f64] {
        let (a, b) = (self.layout.weight_at[layer], self.layout.bias_at[layer]);
        &mut self.params[a..b]
    }

    pub fn biases_mut(&mut self, layer: usize) -> &mut [f64] {
        let start = self.layout.bias_at[layer];
        let end = start + self.widths[layer + 1];
        &mut self.params[start..end]
    }

    pub fn forward(&self, xs: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_cached(xs)?.activations.pop().unwrap_or_default())
    }

    /// Single-point evaluation.
    pub fn eval(&self, x: f64) -> f64 {
        self.forward(&[x]).map(|v| v[0]).unwrap_or(f64::NAN)
    }

    /// `A·Wᵀ + b` for layer `l` on a batch of activations `a`.
    fn affine(&self, l: usize, a: &[f64], batch: usize) -> Vec<f64> {
        let (n_in, n_out) = (self.widths[l], self.widths[l + 1]);
        let bias = self.biases(l);
        let mut z = Vec::with_capacity(batch * n_out);
        for _ in 0..batch {
            z.extend_from_slice(bias);
        }
        let w = self.weights(l);
        if batch > 0 {
            // Z (B×out) += A (B×in) · Wᵀ (in×out)
            unsafe {
                matrixmultiply::dgemm(
                    batch, n_in, n_out, 1.0,
                    a.as_ptr(), n_in as isize, 1,
                    w.as_ptr(), 1, n_in as isize,
                    1.0,
                    z.as_mut_ptr(), n_out as isize, 1,
                );
            }
        }
        z
    }

    pub fn forward_cached(&self, xs: &[f64]) -> Result<ForwardCache> {
        if xs.iter().any(|x| x.is_nan()) {
            return Err(Error::input("NaN in network input"));
        }
        let batch = xs.len();
        let layers = self.num_layers();
        let mut activations = Vec::with_capacity(layers + 1);
        activations.push(xs.to_vec());
        for l in 0..layers {
            let mut z = self.affine(l, &activations[l], batch);
            if l + 1 < layers {
                self.activation.apply_in_place(&mut z);
            }
            activations.push(z);
        }
        Ok(ForwardCache { batch, activations })
    }

    /// Hidden-layer pre-activations, one batch-major vector per hidden layer.
    pub fn pre_activations(&self, xs: &[f64]) -> Result<Vec<Vec<f64>>> {
        let cache = self.forward_cached(xs)?;
        Ok((0..self.num_layers() - 1).map(|l| self.affine(l, &cache.activations[l], cache.batch)).collect())
    }

    /// Gradient of `Σᵢ upstreamᵢ·forward(xsᵢ)` with respect to every parameter.
    pub fn backward(&self, xs: &[f64], upstream: &[f64]) -> Result<GradientBuffer> {
        let cache = self.forward_cached(xs)?;
        self.backward_cached(&cache, upstream)
    }

    pub fn backward_cached(&self, cache: &ForwardCache, upstream: &[f64]) -> Result<GradientBuffer> {
        let batch = cache.batch;
        if upstream.len() != batch {
            return Err(Error::input(format!(
                "upstream has {} entries for a batch of {batch}",
                upstream.len()
            )));
        }
        let mut grads = GradientBuffer::zeros_like(self);
        let mut g = upstream.to_vec();
        for l in (0..self.num_layers()).rev() {
            let (n_in, n_out) = (self.widths[l], self.widths[l + 1]);
            let a = &cache.activations[l];
            {
                let (ws, bs) = (self.layout.weight_at[l], self.layout.bias_at[l]);
                let (dw_part, db_part) = grads.values[ws..bs + n_out].split_at_mut(bs - ws);
                for row in g.chunks_exact(n_out) {
                    db_part.iter_mut().zip(row).for_each(|(d, v)| *d += v);
                }
                if batch > 0 {
                    // dW (out×in) = Gᵀ (out×B) · A (B×in)
                    unsafe {
                        matrixmultiply::dgemm(
                            n_out, batch, n_in, 1.0,
                            g.as_ptr(), 1, n_out as isize,
                            a.as_ptr(), n_in as isize, 1,
                            0.0,
                            dw_part.as_mut_ptr(), n_in as isize, 1,
                        );
                    }
                }
            }
            if l == 0 {
                break;
            }
            // dA (B×in) = G (B×out) · W (out×in)
            let mut da = vec![0.0; batch * n_in];
            if batch > 0 {
                let w = self.weights(l);
                unsafe {
                    matrixmultiply::dgemm(
                        batch, n_out, n_in, 1.0,
                        g.as_ptr(), n_out as isize, 1,
                        w.as_ptr(), n_in as isize, 1,
                        0.0,
                        da.as_mut_ptr(), n_in as isize, 1,
                    );
                }
            }
            self.activation.backprop_in_place(&mut da, a);
            g = da;
        }
        Ok(grads)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&MlpJson::from(self)).expect("network serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: MlpJson = serde_json::from_str(text).map_err(|e| Error::input(e.to_string()))?;
        raw.try_into()
    }
}

/// Flat JSON form: widths, activation name, row-major weights, biases.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MlpJson {
    pub widths: Vec<usize>,
    pub activation: ActivationKind,
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl From<&Mlp> for MlpJson {
    fn from(m: &Mlp) -> Self {
        let layers = m.num_layers();
        Self {
            widths: m.widths.clone(),
            activation: m.activation,
            weights: (0..layers).map(|l| m.weights(l).to_vec()).collect(),
            biases: (0..layers).map(|l| m.biases(l).to_vec()).collect(),
        }
    }
}

impl TryFrom<MlpJson> for Mlp {
    type Error = Error;
    fn try_from(raw: MlpJson) -> Result<Self> {
        Mlp::from_parts(&raw.widths, raw.activation, raw.weights, raw.biases)
    }
}

impl Serialize for Mlp {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        MlpJson::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for Mlp {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = MlpJson::deserialize(d)?;
        raw.try_into().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seed(s: u64) -> RngSeed {
        RngSeed::new(s, 0)
    }

    #[test]
    fn parameter_count_of_default_architecture() {
        let m = Mlp::init(&[1, 100, 100, 100, 1], ActivationKind::ReLU, seed(0)).unwrap();
        // 1·100 + 100·100 + 100·100 + 100·1 weights, 100 + 100 + 100 + 1 biases
        assert_eq!(m.num_params(), 20_501);
    }

    #[test]
    fn init_is_deterministic_and_bounded() {
        let a = Mlp::init(&[1, 8, 8, 1], ActivationKind::Tanh, seed(5)).unwrap();
        let b = Mlp::init(&[1, 8, 8, 1], ActivationKind::Tanh, seed(5)).unwrap();
        assert_eq!(a, b);
        assert!(a.weights(1).iter().all(|w| w.abs() <= 1.0 / 8f64.sqrt()));
        assert!(a.biases(0).iter().all(|b| *b == 0.0));
        assert!(Mlp::init(&[1, 0, 1], ActivationKind::Tanh, seed(5)).is_err());
        assert!(Mlp::init(&[2, 3, 1], ActivationKind::Tanh, seed(5)).is_err());
    }

    #[test]
    fn single_affine_layer() {
        let m = Mlp::from_parts(&[1, 1], ActivationKind::Linear, vec![vec![2.5]], vec![vec![-1.0]]).unwrap();
        assert_eq!(m.forward(&[0.0, 1.0, -2.0]).unwrap(), vec![-1.0, 1.5, -6.0]);
        let g = m.backward(&[3.0], &[1.0]).unwrap();
        assert_eq!(g.weights(0), &[3.0]);
        assert_eq!(g.biases(0), &[1.0]);
    }

    #[test]
    fn zero_weights_give_last_bias() {
        let mut m = Mlp::init(&[1, 4, 1], ActivationKind::Tanh, seed(1)).unwrap();
        m.params_mut().iter_mut().for_each(|p| *p = 0.0);
        m.biases_mut(1)[0] = 0.75;
        assert_eq!(m.forward(&[-3.0, 0.0, 9.0]).unwrap(), vec![0.75; 3]);
    }

    #[test]
    fn linear_net_multiplies_out() {
        // (1,2,1): y = v1(w1 x + b1) + v2(w2 x + b2) + c
        let (w1, w2, b1, b2, v1, v2, c) = (0.3, -1.2, 0.5, 0.25, 2.0, -0.5, 0.1);
        let m = Mlp::from_parts(
            &[1, 2, 1],
            ActivationKind::Linear,
            vec![vec![w1, w2], vec![v1, v2]],
            vec![vec![b1, b2], vec![c]],
        )
        .unwrap();
        let slope = v1 * w1 + v2 * w2;
        let intercept = v1 * b1 + v2 * b2 + c;
        for x in [-2.0, 0.0, 0.7, 5.0] {
            assert!((m.eval(x) - (slope * x + intercept)).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_upstream_gives_zero_gradient() {
        let m = Mlp::init(&[1, 5, 5, 1], ActivationKind::Tanh, seed(2)).unwrap();
        let g = m.backward(&[0.1, 0.2, 0.3], &[0.0; 3]).unwrap();
        assert!(g.as_slice().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn backward_matches_finite_differences() {
        let m = Mlp::init(&[1, 6, 6, 1], ActivationKind::Tanh, seed(4)).unwrap();
        let xs: Vec<f64> = (0..16).map(|i| -1.5 + 0.2 * i as f64).collect();
        let up: Vec<f64> = (0..16).map(|i| ((i * 7) % 5) as f64 - 2.0).collect();
        let g = m.backward(&xs, &up).unwrap();
        let objective = |net: &Mlp| -> f64 {
            net.forward(&xs).unwrap().iter().zip(&up).map(|(y, u)| y * u).sum()
        };
        let h = 1e-6;
        for i in 0..m.num_params() {
            let mut plus = m.clone();
            plus.params_mut()[i] += h;
            let mut minus = m.clone();
            minus.params_mut()[i] -= h;
            let fd = (objective(&plus) - objective(&minus)) / (2.0 * h);
            let an = g.as_slice()[i];
            assert!((fd - an).abs() <= 1e-5 * an.abs().max(1.0), "param {i}: {fd} vs {an}");
        }
    }

    #[test]
    fn shape_errors() {
        let m = Mlp::init(&[1, 3, 1], ActivationKind::ReLU, seed(0)).unwrap();
        assert!(m.backward(&[1.0, 2.0], &[1.0]).is_err());
        assert!(m.forward(&[f64::NAN]).is_err());
    }

    #[test]
    fn json_round_trip_is_bit_exact() {
        let m = Mlp::init(&[1, 7, 3, 1], ActivationKind::ReLU, seed(9)).unwrap();
        let text = m.to_json();
        assert!(text.contains("\"activation\":\"relu\""));
        let back = Mlp::from_json(&text).unwrap();
        assert_eq!(
            m.params().iter().map(|p| p.to_bits()).collect::<Vec<_>>(),
            back.params().iter().map(|p| p.to_bits()).collect::<Vec<_>>()
        );
        assert_eq!(back.widths(), m.widths());
        assert!(Mlp::from_json(r#"{"widths":[1,2,1],"activation":"tanh","weights":[[1.0],[1.0,1.0]],"biases":[[0,0],[0]]}"#).is_err());
    }
}
