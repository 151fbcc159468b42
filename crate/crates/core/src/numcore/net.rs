use std::ops::Range;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::rng_from;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Identity,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the activation output.
    fn derivative_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Identity => 1.0,
        }
    }
}

/// Shape of a fully connected network. Hidden layers use `activation`; the output
/// layer is always linear.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetSpec {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub output_dim: usize,
    pub activation: Activation,
}

impl NetSpec {
    pub fn new(input_dim: usize, hidden_dims: Vec<usize>, output_dim: usize) -> Result<Self> {
        let spec = NetSpec {
            input_dim,
            hidden_dims,
            output_dim,
            activation: Activation::Tanh,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn linear(input_dim: usize, output_dim: usize) -> Result<Self> {
        Self::new(input_dim, Vec::new(), output_dim)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 || self.hidden_dims.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "all network dimensions must be >= 1, got {self:?}"
            )));
        }
        Ok(())
    }

    /// `(fan_in, fan_out)` for every layer.
    fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden_dims.len() + 1);
        let mut prev = self.input_dim;
        for &h in self
            .hidden_dims
            .iter()
            .chain(std::iter::once(&self.output_dim))
        {
            dims.push((prev, h));
            prev = h;
        }
        dims
    }

    pub fn layout(&self) -> Vec<Segment> {
        self.layer_dims()
            .into_iter()
            .enumerate()
            .flat_map(|(l, (fan_in, fan_out))| {
                [
                    Segment::new(format!("layer{l}.weight"), vec![fan_out, fan_in]),
                    Segment::new(format!("layer{l}.bias"), vec![fan_out]),
                ]
            })
            .collect()
    }

    pub fn num_params(&self) -> usize {
        self.layer_dims().iter().map(|(i, o)| (i + 1) * o).sum()
    }

    /// Fixed-seed initialization, every entry uniform in `[-s, s]` with `s = 1/sqrt(fan_in)`.
    pub fn init_params(&self, seed: u64) -> ParamVector {
        let mut rng = rng_from(seed, &[0x1A17]);
        let mut values = Vec::with_capacity(self.num_params());
        for (fan_in, fan_out) in self.layer_dims() {
            let s = 1.0 / (fan_in as f64).sqrt();
            for _ in 0..(fan_in + 1) * fan_out {
                values.push(rng.gen_range(-s..=s));
            }
        }
        ParamVector {
            values,
            layout: self.layout(),
        }
    }

    pub fn zero_params(&self) -> ParamVector {
        ParamVector::zeros(self.layout())
    }

    fn check_params(&self, params: &ParamVector) -> Result<()> {
        if params.len() != self.num_params() {
            return Err(Error::Dimension {
                context: "parameter vector",
                expected: self.num_params(),
                actual: params.len(),
            });
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub name: String,
    pub shape: Vec<usize>,
}

impl Segment {
    pub fn new(name: impl Into<String>, shape: Vec<usize>) -> Self {
        Segment {
            name: name.into(),
            shape,
        }
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Flat parameter storage with a named segment layout.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamVector {
    values: Vec<f64>,
    layout: Vec<Segment>,
}

impl ParamVector {
    pub fn new(values: Vec<f64>, layout: Vec<Segment>) -> Result<Self> {
        let total: usize = layout.iter().map(Segment::len).sum();
        if total != values.len() {
            return Err(Error::Dimension {
                context: "parameter layout",
                expected: total,
                actual: values.len(),
            });
        }
        let pv = ParamVector { values, layout };
        if let Some(seg) = pv.first_non_finite_segment() {
            return Err(Error::InvalidArgument(format!(
                "non-finite value in segment `{seg}`"
            )));
        }
        Ok(pv)
    }

    pub fn zeros(layout: Vec<Segment>) -> Self {
        let total = layout.iter().map(Segment::len).sum();
        ParamVector {
            values: vec![0.0; total],
            layout,
        }
    }

    pub fn zeros_like(other: &ParamVector) -> Self {
        Self::zeros(other.layout.clone())
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn layout(&self) -> &[Segment] {
        &self.layout
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn same_layout(&self, other: &ParamVector) -> bool {
        self.layout == other.layout
    }

    pub fn segments(&self) -> impl Iterator<Item = (&Segment, Range<usize>)> {
        let mut offset = 0;
        self.layout.iter().map(move |seg| {
            let r = offset..offset + seg.len();
            offset = r.end;
            (seg, r)
        })
    }

    pub fn segment(&self, name: &str) -> Option<&[f64]> {
        self.segments()
            .find(|(s, _)| s.name == name)
            .map(|(_, r)| &self.values[r])
    }

    pub(crate) fn first_non_finite_segment(&self) -> Option<String> {
        self.segments()
            .find(|(_, r)| self.values[r.clone()].iter().any(|v| !v.is_finite()))
            .map(|(s, _)| s.name.clone())
    }

    pub fn scale(&mut self, k: f64) {
        self.values.iter_mut().for_each(|v| *v *= k);
    }

    pub fn add_assign(&mut self, other: &ParamVector) {
        debug_assert!(self.same_layout(other));
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += b;
        }
    }

    pub fn max_abs_diff(&self, other: &ParamVector) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Loss value together with its gradient.
#[derive(Clone, Debug)]
pub struct GradResult {
    pub loss: f64,
    pub grad: ParamVector,
}

/// Activations recorded during a forward pass: the input, every hidden layer's
/// post-activation output, and the logits.
#[derive(Clone, Debug)]
pub struct Tape {
    activations: Vec<Vec<f64>>,
}

impl Tape {
    pub fn output(&self) -> &[f64] {
        self.activations
            .last()
            .expect("tape always holds the input")
    }
}

pub fn forward_tape(spec: &NetSpec, params: &ParamVector, input: &[f64]) -> Result<Tape> {
    spec.check_params(params)?;
    if input.len() != spec.input_dim {
        return Err(Error::Dimension {
            context: "network input",
            expected: spec.input_dim,
            actual: input.len(),
        });
    }
    let dims = spec.layer_dims();
    let n_layers = dims.len();
    let w = params.values();
    let mut activations = Vec::with_capacity(n_layers + 1);
    activations.push(input.to_vec());
    let mut offset = 0;
    for (l, &(fan_in, fan_out)) in dims.iter().enumerate() {
        let weights = &w[offset..offset + fan_in * fan_out];
        let bias = &w[offset + fan_in * fan_out..offset + (fan_in + 1) * fan_out];
        offset += (fan_in + 1) * fan_out;
        let prev = &activations[l];
        let mut out = bias.to_vec();
        for (j, o) in out.iter_mut().enumerate() {
            let row = &weights[j * fan_in..(j + 1) * fan_in];
            *o += row.iter().zip(prev).map(|(a, b)| a * b).sum::<f64>();
        }
        if l + 1 < n_layers {
            out.iter_mut().for_each(|z| *z = spec.activation.apply(*z));
        }
        activations.push(out);
    }
    Ok(Tape { activations })
}

pub fn forward(spec: &NetSpec, params: &ParamVector, input: &[f64]) -> Result<Vec<f64>> {
    let mut tape = forward_tape(spec, params, input)?;
    Ok(tape.activations.pop().expect("non-empty tape"))
}

/// Accumulates `d(upstream · logits)/d params` into `grad`.
pub fn backward_tape(
    spec: &NetSpec,
    params: &ParamVector,
    tape: &Tape,
    upstream: &[f64],
    grad: &mut [f64],
) -> Result<()> {
    spec.check_params(params)?;
    if upstream.len() != spec.output_dim {
        return Err(Error::Dimension {
            context: "upstream gradient",
            expected: spec.output_dim,
            actual: upstream.len(),
        });
    }
    if grad.len() != params.len() {
        return Err(Error::Dimension {
            context: "gradient buffer",
            expected: params.len(),
            actual: grad.len(),
        });
    }
    let dims = spec.layer_dims();
    let w = params.values();
    let mut offsets = Vec::with_capacity(dims.len());
    let mut acc = 0;
    for &(i, o) in &dims {
        offsets.push(acc);
        acc += (i + 1) * o;
    }
    let mut delta = upstream.to_vec();
    for l in (0..dims.len()).rev() {
        let (fan_in, fan_out) = dims[l];
        let off = offsets[l];
        let prev = &tape.activations[l];
        {
            let (gw, gb) = grad[off..off + (fan_in + 1) * fan_out].split_at_mut(fan_in * fan_out);
            for j in 0..fan_out {
                let d = delta[j];
                if d == 0.0 {
                    continue;
                }
                gb[j] += d;
                for (g, a) in gw[j * fan_in..(j + 1) * fan_in].iter_mut().zip(prev) {
                    *g += d * a;
                }
            }
        }
        if l > 0 {
            let weights = &w[off..off + fan_in * fan_out];
            let mut next = vec![0.0; fan_in];
            for j in 0..fan_out {
                let d = delta[j];
                if d == 0.0 {
                    continue;
                }
                for (n, wt) in next.iter_mut().zip(&weights[j * fan_in..(j + 1) * fan_in]) {
                    *n += wt * d;
                }
            }
            for (n, a) in next.iter_mut().zip(prev) {
                *n *= spec.activation.derivative_from_output(*a);
            }
            delta = next;
        }
    }
    Ok(())
}

/// Exact reverse-mode gradient of `upstream · forward(input)` with respect to the parameters.
pub fn backward(
    spec: &NetSpec,
    params: &ParamVector,
    input: &[f64],
    upstream: &[f64],
) -> Result<ParamVector> {
    let tape = forward_tape(spec, params, input)?;
    let mut grad = ParamVector::zeros_like(params);
    backward_tape(spec, params, &tape, upstream, grad.values_mut())?;
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hand_net() -> (NetSpec, ParamVector) {
        // 2-4-2 with hand-set weights.
        let spec = NetSpec::new(2, vec![4], 2).unwrap();
        let w1 = [0.5, -0.25, 0.1, 0.2, -0.3, 0.4, 0.0, 1.0];
        let b1 = [0.1, 0.0, -0.1, 0.05];
        let w2 = [1.0, -1.0, 0.5, 0.0, -0.5, 0.25, 0.0, 2.0];
        let b2 = [0.2, -0.2];
        let values = [&w1[..], &b1, &w2, &b2].concat();
        let params = ParamVector::new(values, spec.layout()).unwrap();
        (spec, params)
    }

    #[test]
    fn zero_weights_give_zero_logits() {
        let spec = NetSpec::new(3, vec![5], 4).unwrap();
        let out = forward(&spec, &spec.zero_params(), &[1.0, -2.0, 3.0]).unwrap();
        assert_eq!(out, vec![0.0; 4]);
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let spec = NetSpec::linear(2, 2).unwrap();
        let params = ParamVector::new(vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.0], spec.layout()).unwrap();
        assert_eq!(
            forward(&spec, &params, &[1.0, 2.0]).unwrap(),
            vec![1.0, 2.0]
        );
    }

    #[test]
    fn hand_computed_2_4_2() {
        let (spec, params) = hand_net();
        let x = [1.0, 2.0];
        // hidden pre-activations, evaluated by hand:
        // h0 = 0.5*1 - 0.25*2 + 0.1 = 0.1
        // h1 = 0.1*1 + 0.2*2 + 0.0 = 0.5
        // h2 = -0.3*1 + 0.4*2 - 0.1 = 0.4
        // h3 = 0.0*1 + 1.0*2 + 0.05 = 2.05
        let h = [0.1f64.tanh(), 0.5f64.tanh(), 0.4f64.tanh(), 2.05f64.tanh()];
        let y0 = 1.0 * h[0] - 1.0 * h[1] + 0.5 * h[2] + 0.0 * h[3] + 0.2;
        let y1 = -0.5 * h[0] + 0.25 * h[1] + 0.0 * h[2] + 2.0 * h[3] - 0.2;
        let out = forward(&spec, &params, &x).unwrap();
        assert!((out[0] - y0).abs() < 1e-15);
        assert!((out[1] - y1).abs() < 1e-15);
        // Frozen decimal values for the same computation.
        assert!(
            (out[0] - 0.027_525_318_492_558_57).abs() < 1e-12,
            "{}",
            out[0]
        );
        assert!(
            (out[1] - 1.800_485_294_516_760_6).abs() < 1e-12,
            "{}",
            out[1]
        );
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let (spec, params) = hand_net();
        assert!(matches!(
            forward(&spec, &params, &[1.0]),
            Err(Error::Dimension { .. })
        ));
        assert!(matches!(
            backward(&spec, &params, &[1.0, 2.0], &[1.0]),
            Err(Error::Dimension { .. })
        ));
        let bad = ParamVector::zeros(vec![Segment::new("w", vec![3])]);
        assert!(forward(&spec, &bad, &[1.0, 2.0]).is_err());
    }

    #[test]
    fn linear_gradient_equals_input() {
        let spec = NetSpec::linear(1, 1).unwrap();
        let params = ParamVector::new(vec![0.7, 0.0], spec.layout()).unwrap();
        let g = backward(&spec, &params, &[3.0], &[1.0]).unwrap();
        assert_eq!(g.segment("layer0.weight").unwrap(), &[3.0]);
        assert_eq!(g.segment("layer0.bias").unwrap(), &[1.0]);
    }

    #[test]
    fn zero_upstream_gives_zero_gradient() {
        let (spec, params) = hand_net();
        let g = backward(&spec, &params, &[0.3, -0.7], &[0.0, 0.0]).unwrap();
        assert!(g.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let spec = NetSpec::new(16, vec![8], 3).unwrap();
        let a = spec.init_params(5);
        assert_eq!(a, spec.init_params(5));
        assert_ne!(a, spec.init_params(6));
        let w0 = a.segment("layer0.weight").unwrap();
        assert!(w0.iter().all(|v| v.abs() <= 0.25));
        let w1 = a.segment("layer1.weight").unwrap();
        assert!(w1.iter().all(|v| v.abs() <= 1.0 / 8f64.sqrt()));
    }

    #[test]
    fn layout_sizes_sum_to_total() {
        let spec = NetSpec::new(7, vec![5, 3], 2).unwrap();
        let p = spec.init_params(0);
        let total: usize = p.layout().iter().map(Segment::len).sum();
        assert_eq!(total, p.len());
        assert_eq!(total, spec.num_params());
        assert!(NetSpec::new(0, vec![], 1).is_err());
        assert!(NetSpec::new(2, vec![0], 1).is_err());
    }
}
