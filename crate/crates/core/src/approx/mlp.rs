use std::fmt::Write as _;

use rand::Rng;

use super::ApproxError;
use crate::scalar::Real;

/// Dense layer, weights stored row-major as `outputs x inputs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer<T> {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

/// Dot product with four independent partial sums.
fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    let mut tail = T::zero();
    for (&x, &y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

impl<T: Real> Layer<T> {
    pub fn zeros(inputs: usize, outputs: usize) -> Layer<T> {
        Layer { inputs, outputs, weights: vec![T::zero(); inputs * outputs], bias: vec![T::zero(); outputs] }
    }

    fn affine(&self, x: &[T], out: &mut Vec<T>) {
        out.clear();
        for (row, &b) in self.weights.chunks_exact(self.inputs).zip(&self.bias) {
            out.push(b + dot(row, x));
        }
    }

    fn values(&self) -> impl Iterator<Item = &T> {
        self.weights.iter().chain(self.bias.iter())
    }

    fn values_mut(&mut self) -> impl Iterator<Item = &mut T> {
        self.weights.iter_mut().chain(self.bias.iter_mut())
    }
}

/// Feed-forward network: rectifier on hidden layers, identity on the output.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<T> {
    layers: Vec<Layer<T>>,
}

/// Gradient of the loss, one entry per parameter, same layout as [`Mlp`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub layers: Vec<Layer<T>>,
}

/// Which outputs of a sample carry a regression target.
#[derive(Debug, Clone, Copy)]
pub enum Supervision<'a, T> {
    All(&'a [T]),
    /// Only `index` is supervised; other outputs contribute no loss.
    One { index: usize, value: T },
}

#[derive(Debug, Clone, Copy)]
pub struct Sample<'a, T> {
    pub input: &'a [T],
    pub target: Supervision<'a, T>,
    /// Importance weight, `>= 0`.
    pub weight: T,
}

impl<T: Real> Gradients<T> {
    pub fn zeros_like(net: &Mlp<T>) -> Gradients<T> {
        Gradients { layers: net.layers.iter().map(|l| Layer::zeros(l.inputs, l.outputs)).collect() }
    }

    pub fn values(&self) -> impl Iterator<Item = &T> {
        self.layers.iter().flat_map(|l| l.values())
    }

    pub fn is_finite(&self) -> bool {
        self.values().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> T {
        self.values().fold(T::zero(), |m, v| m.max(v.abs()))
    }
}

impl<T: Real> Mlp<T> {
    /// Uniform He initialization for every layer, zero biases.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Result<Mlp<T>, ApproxError> {
        let mut net = Mlp::zeros(sizes)?;
        for layer in &mut net.layers {
            let bound = (6.0 / layer.inputs as f64).sqrt();
            for w in &mut layer.weights {
                *w = T::of(rng.gen_range(-bound..bound));
            }
        }
        Ok(net)
    }

    pub fn zeros(sizes: &[usize]) -> Result<Mlp<T>, ApproxError> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(ApproxError::Shape(format!("invalid layer sizes {sizes:?}")));
        }
        let layers = sizes.windows(2).map(|w| Layer::zeros(w[0], w[1])).collect();
        Ok(Mlp { layers })
    }

    pub fn from_layers(layers: Vec<Layer<T>>) -> Result<Mlp<T>, ApproxError> {
        if layers.is_empty() {
            return Err(ApproxError::Shape("no layers".into()));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.weights.len() != l.inputs * l.outputs || l.bias.len() != l.outputs {
                return Err(ApproxError::Shape(format!("layer {i} storage does not match its size")));
            }
            if i > 0 && layers[i - 1].outputs != l.inputs {
                return Err(ApproxError::Shape(format!("layer {i} input size mismatch")));
            }
        }
        Ok(Mlp { layers })
    }

    /// Zeroes the last layer so every output starts at exactly zero.
    pub fn zero_output_layer(mut self) -> Mlp<T> {
        if let Some(last) = self.layers.last_mut() {
            last.values_mut().for_each(|v| *v = T::zero());
        }
        self
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<T>] {
        &mut self.layers
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.layers[0].inputs];
        s.extend(self.layers.iter().map(|l| l.outputs));
        s
    }

    pub fn input_size(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_size(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn params(&self) -> impl Iterator<Item = &T> {
        self.layers.iter().flat_map(|l| l.values())
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut T> {
        self.layers.iter_mut().flat_map(|l| l.values_mut())
    }

    pub fn is_finite(&self) -> bool {
        self.params().all(|v| v.is_finite())
    }

    fn check_input(&self, x: &[T]) -> Result<(), ApproxError> {
        if x.len() == self.input_size() {
            Ok(())
        } else {
            Err(ApproxError::Shape(format!("input length {} != {}", x.len(), self.input_size())))
        }
    }

    pub fn forward(&self, x: &[T]) -> Result<Vec<T>, ApproxError> {
        self.check_input(x)?;
        let mut cur = x.to_vec();
        let mut next = Vec::new();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            layer.affine(&cur, &mut next);
            if i < last {
                next.iter_mut().for_each(|v| *v = v.max(T::zero()));
            }
            std::mem::swap(&mut cur, &mut next);
        }
        Ok(cur)
    }

    /// Activations of every layer, input first; hidden entries are post-rectifier.
    fn trace(&self, x: &[T]) -> Vec<Vec<T>> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.to_vec());
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut out = Vec::with_capacity(layer.outputs);
            layer.affine(&acts[i], &mut out);
            if i < last {
                out.iter_mut().for_each(|v| *v = v.max(T::zero()));
            }
            acts.push(out);
        }
        acts
    }

    /// Gradient of the importance-weighted squared error
    /// `(1/B) * sum_b w_b * sum_k (y_bk - t_bk)^2` over supervised outputs.
    /// Returns the gradients and the loss.
    pub fn backward(&self, batch: &[Sample<'_, T>]) -> Result<(Gradients<T>, T), ApproxError> {
        self.backward_inner(batch, None)
    }

    /// The loss [`Mlp::backward`] reports, from forward passes only.
    pub fn loss(&self, batch: &[Sample<'_, T>]) -> Result<T, ApproxError> {
        if batch.is_empty() {
            return Err(ApproxError::EmptyBatch);
        }
        let scale = T::one() / T::of(batch.len() as f64);
        let mut loss = T::zero();
        for sample in batch {
            let y = self.forward(sample.input)?;
            let sq = |e: T| sample.weight * e * e * scale;
            match sample.target {
                Supervision::All(t) => {
                    if t.len() != y.len() {
                        return Err(ApproxError::Shape(format!("target length {} != {}", t.len(), y.len())));
                    }
                    loss += y.iter().zip(t).map(|(&a, &b)| sq(a - b)).fold(T::zero(), |x, v| x + v);
                }
                Supervision::One { index, value } => {
                    let a = *y.get(index).ok_or_else(|| ApproxError::Shape(format!("target index {index} >= {}", y.len())))?;
                    loss += sq(a - value);
                }
            }
        }
        Ok(loss)
    }

    /// [`Mlp::backward`] that also returns each sample's network output.
    pub fn backward_with_outputs(&self, batch: &[Sample<'_, T>]) -> Result<(Gradients<T>, T, Vec<Vec<T>>), ApproxError> {
        let mut outputs = Vec::with_capacity(batch.len());
        let (g, loss) = self.backward_inner(batch, Some(&mut outputs))?;
        Ok((g, loss, outputs))
    }

    fn backward_inner(
        &self,
        batch: &[Sample<'_, T>],
        mut outputs: Option<&mut Vec<Vec<T>>>,
    ) -> Result<(Gradients<T>, T), ApproxError> {
        if batch.is_empty() {
            return Err(ApproxError::EmptyBatch);
        }
        let mut grads = Gradients::zeros_like(self);
        let scale = T::one() / T::of(batch.len() as f64);
        let two = T::of(2.0);
        let mut loss = T::zero();
        let out_size = self.output_size();

        for sample in batch {
            self.check_input(sample.input)?;
            let acts = self.trace(sample.input);
            let y = &acts[acts.len() - 1];
            if let Some(out) = outputs.as_deref_mut() {
                out.push(y.clone());
            }
            let mut delta = vec![T::zero(); out_size];
            match sample.target {
                Supervision::All(t) => {
                    if t.len() != out_size {
                        return Err(ApproxError::Shape(format!("target length {} != {out_size}", t.len())));
                    }
                    for k in 0..out_size {
                        let e = y[k] - t[k];
                        loss += sample.weight * e * e * scale;
                        delta[k] = two * sample.weight * e * scale;
                    }
                }
                Supervision::One { index, value } => {
                    if index >= out_size {
                        return Err(ApproxError::Shape(format!("target index {index} >= {out_size}")));
                    }
                    let e = y[index] - value;
                    loss += sample.weight * e * e * scale;
                    delta[index] = two * sample.weight * e * scale;
                }
            }
            for li in (0..self.layers.len()).rev() {
                let layer = &self.layers[li];
                let input = &acts[li];
                let g = &mut grads.layers[li];
                for (o, &d) in delta.iter().enumerate() {
                    if d == T::zero() {
                        continue;
                    }
                    g.bias[o] += d;
                    let row = &mut g.weights[o * layer.inputs..(o + 1) * layer.inputs];
                    for (gw, &xi) in row.iter_mut().zip(input) {
                        *gw += d * xi;
                    }
                }
                if li == 0 {
                    break;
                }
                let mut prev = vec![T::zero(); layer.inputs];
                for (o, &d) in delta.iter().enumerate() {
                    if d == T::zero() {
                        continue;
                    }
                    let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                    for (p, &w) in prev.iter_mut().zip(row) {
                        *p += d * w;
                    }
                }
                // rectifier derivative, taken as 0 at the kink
                for (p, &a) in prev.iter_mut().zip(input) {
                    if a <= T::zero() {
                        *p = T::zero();
                    }
                }
                delta = prev;
            }
        }
        Ok((grads, loss))
    }

    /// Overwrites all parameters with `other`'s (same shapes required).
    pub fn copy_from(&mut self, other: &Mlp<T>) {
        debug_assert_eq!(self.sizes(), other.sizes());
        self.layers.clone_from(&other.layers);
    }

    /// Text snapshot: a `mlp` header with layer sizes, then one value per
    /// line, layer by layer, weights row-major before biases.
    pub fn to_text(&self) -> String {
        let mut out = String::from("mlp");
        for s in self.sizes() {
            let _ = write!(out, " {s}");
        }
        out.push('\n');
        for v in self.params() {
            let _ = writeln!(out, "{v}");
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Mlp<T>, ApproxError> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| ApproxError::Parse("empty snapshot".into()))?;
        let mut parts = header.split_whitespace();
        if parts.next() != Some("mlp") {
            return Err(ApproxError::Parse("missing `mlp` header".into()));
        }
        let sizes = parts
            .map(|p| p.parse::<usize>().map_err(|e| ApproxError::Parse(e.to_string())))
            .collect::<Result<Vec<_>, _>>()?;
        let mut net = Mlp::zeros(&sizes)?;
        let mut values = lines.filter(|l| !l.trim().is_empty());
        for slot in net.params_mut() {
            let line = values.next().ok_or_else(|| ApproxError::Parse("truncated snapshot".into()))?;
            *slot = line
                .trim()
                .parse::<T>()
                .map_err(|_| ApproxError::Parse(format!("bad value `{line}`")))?;
        }
        if values.next().is_some() {
            return Err(ApproxError::Parse("trailing values in snapshot".into()));
        }
        Ok(net)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_network_outputs_zero() {
        let net = Mlp::<f64>::zeros(&[3, 4, 2]).unwrap();
        assert_eq!(net.forward(&[1.0, -2.0, 5.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn single_affine_layer() {
        let net = Mlp::from_layers(vec![Layer { inputs: 1, outputs: 1, weights: vec![2.0], bias: vec![1.0] }]).unwrap();
        assert_eq!(net.forward(&[3.0]).unwrap(), vec![7.0]);
    }

    #[test]
    fn repeated_forward_is_bit_identical() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = Mlp::<f64>::new(&[5, 16, 16, 3], &mut rng).unwrap();
        let x = [0.1, 0.9, 0.0, 1.0, 0.5];
        assert_eq!(net.forward(&x).unwrap(), net.forward(&x).unwrap());
    }

    #[test]
    fn shape_mismatch_errors() {
        let net = Mlp::<f64>::zeros(&[2, 3]).unwrap();
        assert!(matches!(net.forward(&[1.0]), Err(ApproxError::Shape(_))));
        let t = [1.0, 2.0];
        let batch = [Sample { input: &[1.0, 2.0][..], target: Supervision::All(&t), weight: 1.0 }];
        assert!(matches!(net.backward(&batch), Err(ApproxError::Shape(_))));
        assert!(matches!(net.backward(&[]), Err(ApproxError::EmptyBatch)));
    }

    #[test]
    fn one_parameter_gradient() {
        // loss = (w x - t)^2, dloss/dw = 2 x (w x - t) = 8 at w=1, x=2, t=0
        let net = Mlp::from_layers(vec![Layer { inputs: 1, outputs: 1, weights: vec![1.0], bias: vec![0.0] }]).unwrap();
        let batch = [Sample { input: &[2.0][..], target: Supervision::One { index: 0, value: 0.0 }, weight: 1.0 }];
        let (g, loss) = net.backward(&batch).unwrap();
        assert_eq!(g.layers[0].weights[0], 8.0);
        assert_eq!(loss, 4.0);
    }

    #[test]
    fn exact_targets_give_zero_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let net = Mlp::<f64>::new(&[4, 8, 3], &mut rng).unwrap();
        let x = [0.2, 0.4, 0.6, 0.8];
        let y = net.forward(&x).unwrap();
        let batch = [Sample { input: &x[..], target: Supervision::All(&y), weight: 1.0 }];
        let (g, loss) = net.backward(&batch).unwrap();
        assert_eq!(loss, 0.0);
        assert!(g.values().all(|v| *v == 0.0));
    }

    #[test]
    fn text_snapshot_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = Mlp::<f64>::new(&[3, 5, 2], &mut rng).unwrap();
        assert_eq!(Mlp::<f64>::from_text(&net.to_text()).unwrap(), net);
        assert!(Mlp::<f64>::from_text("mlp 2 1\n1.0\n").is_err());
    }

    #[test]
    fn f32_networks_work_too() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let net = Mlp::<f32>::new(&[2, 4, 1], &mut rng).unwrap().zero_output_layer();
        assert_eq!(net.forward(&[1.0, 1.0]).unwrap(), vec![0.0f32]);
    }
}
