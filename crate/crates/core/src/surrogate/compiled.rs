use alloc::vec::Vec;

use super::mlp::{Activation, Mlp, Post};
use crate::math::sqrt;

/// Single-precision copy of a trained [`Mlp`] for prediction, with batch
/// normalization folded into the preceding dense map.
///
/// The whole surrogate then fits in a 2 MiB cache. Outputs agree with the
/// `f64` inference pass to about `1e-6`.
#[derive(Clone, Debug, PartialEq)]
pub struct CompiledMlp {
    layers: Vec<Layer>,
}

#[derive(Clone, Debug, PartialEq)]
struct Layer {
    output: usize,
    /// `[input][output]`, like [`super::Dense`].
    weights: Vec<f32>,
    bias: Vec<f32>,
    activation: Activation,
}

impl CompiledMlp {
    pub fn new(model: &Mlp) -> Self {
        let layers = model
            .layers
            .iter()
            .map(|l| {
                let no = l.output;
                let (scale, shift): (Vec<f64>, Vec<f64>) = match &l.post {
                    Post::BatchNorm(bn) => (0..no)
                        .map(|o| {
                            let s = bn.gamma[o] / sqrt(bn.running_var[o] + bn.eps);
                            (s, bn.beta[o] - bn.running_mean[o] * s)
                        })
                        .unzip(),
                    _ => (alloc::vec![1.0; no], alloc::vec![0.0; no]),
                };
                let weights = l
                    .weights
                    .iter()
                    .enumerate()
                    .map(|(n, &w)| (w * scale[n % no]) as f32)
                    .collect();
                let bias = (0..no)
                    .map(|o| (l.bias[o] * scale[o] + shift[o]) as f32)
                    .collect();
                Layer {
                    output: no,
                    weights,
                    bias,
                    activation: l.activation,
                }
            })
            .collect();
        Self { layers }
    }

    /// Output probabilities for one feature row.
    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut cur: Vec<f32> = x.iter().map(|&v| v as f32).collect();
        let mut next = Vec::new();
        for l in &self.layers {
            affine(&cur, &l.weights, &l.bias, &mut next);
            match l.activation {
                Activation::Tanh => next.iter_mut().for_each(|v| *v = libm::tanhf(*v)),
                Activation::Relu => next.iter_mut().for_each(|v| *v = v.max(0.0)),
                Activation::Sigmoid => next.iter_mut().for_each(|v| *v = sigmoid(*v)),
            }
            debug_assert_eq!(next.len(), l.output);
            core::mem::swap(&mut cur, &mut next);
        }
        cur.into_iter().map(f64::from).collect()
    }
}

fn sigmoid(z: f32) -> f32 {
    if z >= 0.0 {
        1.0 / (1.0 + libm::expf(-z))
    } else {
        let e = libm::expf(z);
        e / (1.0 + e)
    }
}

/// `out = b + x W`, four input rows per pass over `out`.
fn affine(x: &[f32], w: &[f32], b: &[f32], out: &mut Vec<f32>) {
    let no = b.len();
    out.clear();
    out.extend_from_slice(b);
    let mut rows = w.chunks_exact(4 * no);
    let mut xs = x.chunks_exact(4);
    for (quad, xq) in (&mut rows).zip(&mut xs) {
        let (r0, rest) = quad.split_at(no);
        let (r1, rest) = rest.split_at(no);
        let (r2, r3) = rest.split_at(no);
        for ((((o, a), b), c), d) in out.iter_mut().zip(r0).zip(r1).zip(r2).zip(r3) {
            *o += xq[0] * a + xq[1] * b + xq[2] * c + xq[3] * d;
        }
    }
    for (r, &xv) in rows.remainder().chunks_exact(no).zip(xs.remainder()) {
        out.iter_mut().zip(r).for_each(|(o, wv)| *o += xv * wv);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surrogate::mlp::Mode;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn matches_the_double_precision_pass() {
        let mut m = Mlp::surrogate(27, 5, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for l in &mut m.layers {
            l.bias
                .iter_mut()
                .for_each(|b| *b = rng.random_range(-0.2..0.2));
            if let Post::BatchNorm(bn) = &mut l.post {
                for o in 0..l.output {
                    bn.gamma[o] = rng.random_range(0.5..1.5);
                    bn.beta[o] = rng.random_range(-0.3..0.3);
                    bn.running_mean[o] = rng.random_range(-0.5..0.5);
                    bn.running_var[o] = rng.random_range(0.2..3.0);
                }
            }
        }
        let c = CompiledMlp::new(&m);
        for _ in 0..20 {
            // 27 inputs leave a remainder after the four-row blocks
            let x: Vec<f64> = (0..27).map(|_| rng.random_range(-2.0..2.0)).collect();
            let want = m.forward(&x, 1, Mode::Infer).unwrap();
            let got = c.forward(&x);
            for (a, b) in got.iter().zip(&want) {
                assert!((a - b).abs() < 1e-5, "{a} vs {b}");
            }
        }
    }
}
