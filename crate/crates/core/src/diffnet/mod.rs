//! Small fully connected velocity network with exact reverse-mode gradients.
//!
//! The network maps features `[x, τ, sin 2πτ, cos 2πτ, one_hot(context)]`
//! through `tanh` hidden layers to a linear output of the state dimension.
//! Parameters live in one flat vector; each layer stores its weight matrix
//! row-major (`fan_out × fan_in`) followed by its bias.

mod adam;
pub mod checkpoint;

pub use adam::{adam_update, AdamConfig, AdamState};

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    #[default]
    Tanh,
}

impl Activation {
    pub fn tag(self) -> u8 {
        match self {
            Activation::Tanh => 0,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Activation::Tanh),
            _ => None,
        }
    }
}

/// Number of time features appended after the state: `τ, sin 2πτ, cos 2πτ`.
pub const TIME_FEATURES: usize = 3;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    state_dim: usize,
    context_count: usize,
    hidden_dims: Vec<usize>,
    activation: Activation,
}

impl Architecture {
    pub fn new(state_dim: usize, context_count: usize, hidden_dims: Vec<usize>) -> Result<Self> {
        if state_dim == 0 || context_count == 0 || hidden_dims.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "architecture dims must be >= 1 (state {state_dim}, contexts {context_count}, hidden {hidden_dims:?})"
            )));
        }
        Ok(Architecture {
            state_dim,
            context_count,
            hidden_dims,
            activation: Activation::Tanh,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn context_count(&self) -> usize {
        self.context_count
    }

    pub fn hidden_dims(&self) -> &[usize] {
        &self.hidden_dims
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn input_dim(&self) -> usize {
        self.state_dim + TIME_FEATURES + self.context_count
    }

    pub fn output_dim(&self) -> usize {
        self.state_dim
    }

    /// `(fan_in, fan_out)` of every layer, input to output.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden_dims.len() + 2);
        dims.push(self.input_dim());
        dims.extend_from_slice(&self.hidden_dims);
        dims.push(self.output_dim());
        dims.windows(2).map(|w| (w[0], w[1])).collect()
    }

    pub fn param_count(&self) -> usize {
        self.layer_shapes()
            .iter()
            .map(|&(fan_in, fan_out)| (fan_in + 1) * fan_out)
            .sum()
    }

    fn widest(&self) -> usize {
        self.layer_shapes()
            .iter()
            .map(|&(i, o)| i.max(o))
            .max()
            .unwrap_or(1)
    }
}

/// One network evaluation point: state, continuous time and context index.
#[derive(Clone, Copy, Debug)]
pub struct NetInput<'a> {
    pub x: &'a [f64],
    pub tau: f64,
    pub context: usize,
}

impl<'a> NetInput<'a> {
    pub fn new(x: &'a [f64], tau: f64, context: usize) -> Self {
        NetInput { x, tau, context }
    }

    fn write_features(&self, arch: &Architecture, out: &mut Vec<f64>) -> Result<()> {
        if self.x.len() != arch.state_dim {
            return Err(Error::Shape(format!(
                "state has {} entries, network expects {}",
                self.x.len(),
                arch.state_dim
            )));
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(Error::InvalidArgument(format!("time {} outside [0, 1]", self.tau)));
        }
        if self.context >= arch.context_count {
            return Err(Error::InvalidArgument(format!(
                "context {} out of range (count {})",
                self.context, arch.context_count
            )));
        }
        ensure_finite(self.x, "network input state")?;
        out.clear();
        out.extend_from_slice(self.x);
        let phase = std::f64::consts::TAU * self.tau;
        out.extend_from_slice(&[self.tau, phase.sin(), phase.cos()]);
        out.extend((0..arch.context_count).map(|c| if c == self.context { 1.0 } else { 0.0 }));
        Ok(())
    }
}

/// Flat parameter store tagged with the architecture it belongs to.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    arch: Architecture,
    values: Vec<f64>,
}

impl ParamVector {
    pub fn from_values(arch: Architecture, values: Vec<f64>) -> Result<Self> {
        if values.len() != arch.param_count() {
            return Err(Error::Shape(format!(
                "{} parameter values for an architecture of {}",
                values.len(),
                arch.param_count()
            )));
        }
        ensure_finite(&values, "parameter vector")?;
        Ok(ParamVector { arch, values })
    }

    pub fn zeros(arch: Architecture) -> Self {
        let n = arch.param_count();
        ParamVector {
            arch,
            values: vec![0.0; n],
        }
    }

    /// Weights uniform in `[-1/√fan_in, 1/√fan_in]`, biases zero.
    pub fn init(arch: Architecture, seed: u64) -> Self {
        use rand::Rng as _;
        let mut rng = rng::rng_from(&[rng::stream::INIT, seed]);
        let mut values = Vec::with_capacity(arch.param_count());
        for (fan_in, fan_out) in arch.layer_shapes() {
            let bound = 1.0 / (fan_in as f64).sqrt();
            values.extend((0..fan_in * fan_out).map(|_| rng.random_range(-bound..=bound)));
            values.extend(std::iter::repeat_n(0.0, fan_out));
        }
        ParamVector { arch, values }
    }

    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Velocity prediction for one input.
    pub fn forward(&self, input: NetInput<'_>) -> Result<Vec<f64>> {
        let mut feats = Vec::with_capacity(self.arch.input_dim());
        input.write_features(&self.arch, &mut feats)?;
        let mut cur = feats;
        let mut next = Vec::with_capacity(self.arch.widest());
        let shapes = self.arch.layer_shapes();
        let last = shapes.len() - 1;
        let mut offset = 0;
        for (l, &(fan_in, fan_out)) in shapes.iter().enumerate() {
            affine(&self.values[offset..], fan_in, fan_out, &cur, &mut next);
            if l != last {
                next.iter_mut().for_each(|h| *h = h.tanh());
            }
            offset += (fan_in + 1) * fan_out;
            std::mem::swap(&mut cur, &mut next);
        }
        ensure_finite(&cur, "network output")?;
        Ok(cur)
    }

    /// Adds the gradient of `⟨upstream, forward(input)⟩` with respect to the
    /// parameters into `param_grad` and returns the gradient with respect to
    /// the state `x`.
    pub fn grad_accumulate(
        &self,
        input: NetInput<'_>,
        upstream: &[f64],
        param_grad: &mut [f64],
    ) -> Result<Vec<f64>> {
        if upstream.len() != self.arch.output_dim() {
            return Err(Error::Shape(format!(
                "upstream has {} entries, network output has {}",
                upstream.len(),
                self.arch.output_dim()
            )));
        }
        if param_grad.len() != self.values.len() {
            return Err(Error::Shape(format!(
                "gradient buffer has {} entries, parameters have {}",
                param_grad.len(),
                self.values.len()
            )));
        }
        let shapes = self.arch.layer_shapes();
        let last = shapes.len() - 1;
        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(shapes.len() + 1);
        let mut feats = Vec::with_capacity(self.arch.input_dim());
        input.write_features(&self.arch, &mut feats)?;
        acts.push(feats);
        let mut offsets = Vec::with_capacity(shapes.len());
        let mut offset = 0;
        for (l, &(fan_in, fan_out)) in shapes.iter().enumerate() {
            offsets.push(offset);
            let mut out = Vec::with_capacity(fan_out);
            affine(&self.values[offset..], fan_in, fan_out, &acts[l], &mut out);
            if l != last {
                out.iter_mut().for_each(|h| *h = h.tanh());
            }
            acts.push(out);
            offset += (fan_in + 1) * fan_out;
        }

        let mut delta = upstream.to_vec();
        for l in (0..shapes.len()).rev() {
            let (fan_in, fan_out) = shapes[l];
            let w = &self.values[offsets[l]..offsets[l] + fan_in * fan_out];
            let (gw, gb) = param_grad[offsets[l]..offsets[l] + (fan_in + 1) * fan_out]
                .split_at_mut(fan_in * fan_out);
            let a_in = &acts[l];
            for (o, &d) in delta.iter().enumerate() {
                gb[o] += d;
                if d != 0.0 {
                    let row = &mut gw[o * fan_in..(o + 1) * fan_in];
                    for (g, &a) in row.iter_mut().zip(a_in) {
                        *g += d * a;
                    }
                }
            }
            let mut prev = vec![0.0; fan_in];
            for (o, &d) in delta.iter().enumerate() {
                let row = &w[o * fan_in..(o + 1) * fan_in];
                for (p, &wv) in prev.iter_mut().zip(row) {
                    *p += d * wv;
                }
            }
            if l > 0 {
                for (p, &a) in prev.iter_mut().zip(a_in) {
                    *p *= 1.0 - a * a;
                }
            }
            delta = prev;
        }
        delta.truncate(self.arch.state_dim);
        Ok(delta)
    }

    /// Gradients of `⟨upstream, forward(input)⟩`: `(parameter gradient, state gradient)`.
    pub fn grad(&self, input: NetInput<'_>, upstream: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut pg = vec![0.0; self.values.len()];
        let xg = self.grad_accumulate(input, upstream, &mut pg)?;
        Ok((pg, xg))
    }
}

fn affine(params: &[f64], fan_in: usize, fan_out: usize, input: &[f64], out: &mut Vec<f64>) {
    let (w, rest) = params.split_at(fan_in * fan_out);
    let b = &rest[..fan_out];
    out.clear();
    out.extend(w.chunks_exact(fan_in).zip(b).map(|(row, &bias)| {
        row.iter().zip(input).fold(bias, |acc, (wv, xv)| acc + wv * xv)
    }));
}

/// Euclidean norm.
pub fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng as _, SeedableRng};

    fn arch() -> Architecture {
        Architecture::new(2, 3, vec![5, 4]).unwrap()
    }

    /// Independent forward: explicit matrices, no shared helpers.
    fn reference_forward(p: &ParamVector, x: &[f64], tau: f64, ctx: usize) -> Vec<f64> {
        let a = p.arch();
        let mut h: Vec<f64> = x.to_vec();
        h.push(tau);
        h.push((2.0 * std::f64::consts::PI * tau).sin());
        h.push((2.0 * std::f64::consts::PI * tau).cos());
        for c in 0..a.context_count() {
            h.push(if c == ctx { 1.0 } else { 0.0 });
        }
        let shapes = a.layer_shapes();
        let mut off = 0;
        for (l, (fi, fo)) in shapes.iter().copied().enumerate() {
            let mut w = vec![vec![0.0; fi]; fo];
            for (r, row) in w.iter_mut().enumerate() {
                for (c, e) in row.iter_mut().enumerate() {
                    *e = p.values()[off + r * fi + c];
                }
            }
            let b = &p.values()[off + fi * fo..off + fi * fo + fo];
            let mut z = vec![0.0; fo];
            for r in 0..fo {
                let mut s = 0.0;
                for c in 0..fi {
                    s += w[r][c] * h[c];
                }
                z[r] = s + b[r];
                if l + 1 < shapes.len() {
                    z[r] = z[r].tanh();
                }
            }
            h = z;
            off += (fi + 1) * fo;
        }
        h
    }

    #[test]
    fn init_is_deterministic_with_zero_biases() {
        let a = ParamVector::init(arch(), 7);
        let b = ParamVector::init(arch(), 7);
        let c = ParamVector::init(arch(), 8);
        assert_eq!(a, b);
        assert_ne!(a.values(), c.values());
        let mut off = 0;
        for (fi, fo) in arch().layer_shapes() {
            let bias = &a.values()[off + fi * fo..off + (fi + 1) * fo];
            assert!(bias.iter().all(|&v| v == 0.0));
            let w = &a.values()[off..off + fi * fo];
            let bound = 1.0 / (fi as f64).sqrt();
            assert!(w.iter().all(|v| v.abs() <= bound));
            off += (fi + 1) * fo;
        }
    }

    #[test]
    fn param_count_matches_layers() {
        for hidden in [vec![], vec![1], vec![64, 64], vec![3, 7, 2]] {
            let a = Architecture::new(2, 8, hidden.clone()).unwrap();
            let p = ParamVector::init(a.clone(), 1);
            let mut expected = 0;
            let mut fan_in = 2 + 3 + 8;
            for h in hidden.iter().copied().chain([2]) {
                expected += fan_in * h + h;
                fan_in = h;
            }
            assert_eq!(p.len(), expected);
            assert_eq!(a.param_count(), expected);
        }
        assert_eq!(
            Architecture::new(2, 8, vec![64, 64]).unwrap().param_count(),
            14 * 64 + 65 * 64 + 65 * 2
        );
    }

    #[test]
    fn rejects_zero_dims() {
        assert!(Architecture::new(0, 1, vec![]).is_err());
        assert!(Architecture::new(1, 0, vec![]).is_err());
        assert!(Architecture::new(1, 1, vec![4, 0]).is_err());
    }

    #[test]
    fn zero_params_give_zero_velocity() {
        let p = ParamVector::zeros(arch());
        let v = p.forward(NetInput::new(&[0.3, -2.0], 0.4, 1)).unwrap();
        assert_eq!(v, vec![0.0, 0.0]);
    }

    #[test]
    fn identity_linear_layer_returns_state() {
        let a = Architecture::new(2, 2, vec![]).unwrap();
        let fan_in = a.input_dim();
        let mut vals = vec![0.0; a.param_count()];
        vals[0] = 1.0;
        vals[fan_in + 1] = 1.0;
        let p = ParamVector::from_values(a, vals).unwrap();
        let x = [1.25, -0.5];
        assert_eq!(p.forward(NetInput::new(&x, 0.7, 1)).unwrap(), x.to_vec());
    }

    #[test]
    fn forward_matches_reference() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for seed in 0..20 {
            let mut p = ParamVector::init(arch(), seed);
            p.values_mut()
                .iter_mut()
                .for_each(|v| *v += rng.random_range(-0.3..0.3));
            let x = [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
            let tau = rng.random_range(0.0..=1.0);
            let ctx = rng.random_range(0..3);
            let got = p.forward(NetInput::new(&x, tau, ctx)).unwrap();
            let want = reference_forward(&p, &x, tau, ctx);
            for (g, w) in got.iter().zip(&want) {
                assert!((g - w).abs() < 1e-12, "{g} vs {w}");
            }
        }
    }

    #[test]
    fn forward_is_pure() {
        let p = ParamVector::init(arch(), 11);
        let x = [0.1, 0.2];
        let a = p.forward(NetInput::new(&x, 0.5, 2)).unwrap();
        let b = p.forward(NetInput::new(&x, 0.5, 2)).unwrap();
        assert_eq!(
            a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn forward_rejects_bad_input() {
        let p = ParamVector::init(arch(), 1);
        assert!(p.forward(NetInput::new(&[f64::NAN, 0.0], 0.5, 0)).is_err());
        assert!(p.forward(NetInput::new(&[0.0], 0.5, 0)).is_err());
        assert!(p.forward(NetInput::new(&[0.0, 0.0], 1.5, 0)).is_err());
        assert!(p.forward(NetInput::new(&[0.0, 0.0], 0.5, 3)).is_err());
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let p = ParamVector::init(arch(), 5);
        let (pg, xg) = p.grad(NetInput::new(&[0.4, 0.1], 0.3, 0), &[0.0, 0.0]).unwrap();
        assert!(pg.iter().all(|&g| g == 0.0));
        assert!(xg.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn grad_rejects_shape_mismatch() {
        let p = ParamVector::init(arch(), 5);
        assert!(p.grad(NetInput::new(&[0.4, 0.1], 0.3, 0), &[1.0]).is_err());
    }

    #[test]
    fn batch_gradient_is_sum_of_sample_gradients() {
        let p = ParamVector::init(arch(), 9);
        let samples = [([0.1, 0.2], 0.1, 0), ([1.0, -1.0], 0.9, 2), ([-0.5, 0.3], 0.5, 1)];
        let up = [0.7, -1.3];
        let mut total = vec![0.0; p.len()];
        let mut separate = vec![0.0; p.len()];
        for (x, t, c) in &samples {
            p.grad_accumulate(NetInput::new(x, *t, *c), &up, &mut total).unwrap();
            let (g, _) = p.grad(NetInput::new(x, *t, *c), &up).unwrap();
            separate.iter_mut().zip(&g).for_each(|(s, v)| *s += v);
        }
        for (a, b) in total.iter().zip(&separate) {
            assert!((a - b).abs() < 1e-14);
        }
    }
}
