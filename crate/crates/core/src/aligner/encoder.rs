//! Word-level EEG encoder: input MLP, learnable positional encodings,
//! pre-norm transformer blocks, output MLP, L2 normalization.

use ndarray::{s, Array2, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::nn::{gelu, gelu_backward, softmax_rows, softmax_rows_backward, LayerNorm, Linear, LnCache, Tensor};
use super::EncoderConfig;
use crate::error::{validation, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub ln1: LayerNorm,
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub proj: Linear,
    pub ln2: LayerNorm,
    pub ff1: Linear,
    pub ff2: Linear,
}

/// All trainable encoder parameters. Also used as the gradient container.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderWeights {
    pub input1: Linear,
    pub input2: Linear,
    pub positions: Array2<f64>,
    pub blocks: Vec<Block>,
    pub ln_out: LayerNorm,
    pub output1: Linear,
    pub output2: Linear,
}

impl EncoderWeights {
    pub fn init(cfg: &EncoderConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = cfg.model_dim;
        let input1 = Linear::new(&mut rng, cfg.input_dim, d);
        let input2 = Linear::new(&mut rng, d, d);
        let pos_init = Normal::new(0.0, 0.02).unwrap();
        let positions = Array2::from_shape_fn((cfg.max_positions, d), |_| pos_init.sample(&mut rng));
        let blocks = (0..cfg.layers)
            .map(|_| Block {
                ln1: LayerNorm::new(d),
                query: Linear::new(&mut rng, d, d),
                key: Linear::new(&mut rng, d, d),
                value: Linear::new(&mut rng, d, d),
                proj: Linear::new(&mut rng, d, d),
                ln2: LayerNorm::new(d),
                ff1: Linear::new(&mut rng, d, cfg.ffn_dim),
                ff2: Linear::new(&mut rng, cfg.ffn_dim, d),
            })
            .collect();
        EncoderWeights {
            input1,
            input2,
            positions,
            blocks,
            ln_out: LayerNorm::new(d),
            output1: Linear::new(&mut rng, d, d),
            output2: Linear::new(&mut rng, d, cfg.output_dim),
        }
    }

    pub fn zeros_like(&self) -> Self {
        EncoderWeights {
            input1: self.input1.zeros_like(),
            input2: self.input2.zeros_like(),
            positions: Array2::zeros(self.positions.raw_dim()),
            blocks: self
                .blocks
                .iter()
                .map(|b| Block {
                    ln1: b.ln1.zeros_like(),
                    query: b.query.zeros_like(),
                    key: b.key.zeros_like(),
                    value: b.value.zeros_like(),
                    proj: b.proj.zeros_like(),
                    ln2: b.ln2.zeros_like(),
                    ff1: b.ff1.zeros_like(),
                    ff2: b.ff2.zeros_like(),
                })
                .collect(),
            ln_out: self.ln_out.zeros_like(),
            output1: self.output1.zeros_like(),
            output2: self.output2.zeros_like(),
        }
    }

    /// Named tensors in a fixed order (the checkpoint and optimizer order).
    pub fn tensors(&self) -> Vec<Tensor<'_>> {
        let mut out = Vec::new();
        self.input1.tensors("input.0", &mut out);
        self.input2.tensors("input.1", &mut out);
        out.push(Tensor {
            name: "positions".into(),
            shape: self.positions.shape().to_vec(),
            data: self.positions.as_slice().unwrap(),
        });
        for (i, b) in self.blocks.iter().enumerate() {
            b.ln1.tensors(&format!("blocks.{i}.ln1"), &mut out);
            b.query.tensors(&format!("blocks.{i}.query"), &mut out);
            b.key.tensors(&format!("blocks.{i}.key"), &mut out);
            b.value.tensors(&format!("blocks.{i}.value"), &mut out);
            b.proj.tensors(&format!("blocks.{i}.proj"), &mut out);
            b.ln2.tensors(&format!("blocks.{i}.ln2"), &mut out);
            b.ff1.tensors(&format!("blocks.{i}.ff1"), &mut out);
            b.ff2.tensors(&format!("blocks.{i}.ff2"), &mut out);
        }
        self.ln_out.tensors("ln_out", &mut out);
        self.output1.tensors("output.0", &mut out);
        self.output2.tensors("output.1", &mut out);
        out
    }

    /// Mutable slices in the same order as [`tensors`](Self::tensors).
    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        self.input1.tensors_mut(&mut out);
        self.input2.tensors_mut(&mut out);
        out.push(self.positions.as_slice_mut().unwrap());
        for b in &mut self.blocks {
            b.ln1.tensors_mut(&mut out);
            b.query.tensors_mut(&mut out);
            b.key.tensors_mut(&mut out);
            b.value.tensors_mut(&mut out);
            b.proj.tensors_mut(&mut out);
            b.ln2.tensors_mut(&mut out);
            b.ff1.tensors_mut(&mut out);
            b.ff2.tensors_mut(&mut out);
        }
        self.ln_out.tensors_mut(&mut out);
        self.output1.tensors_mut(&mut out);
        self.output2.tensors_mut(&mut out);
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.data.len()).sum()
    }

    pub fn add_assign(&mut self, other: &EncoderWeights) {
        let src = other.tensors();
        for (dst, t) in self.tensors_mut().into_iter().zip(src) {
            dst.iter_mut().zip(t.data).for_each(|(a, b)| *a += b);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|v| *v *= factor);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.data.iter().all(|v| v.is_finite()))
    }
}

struct BlockCache {
    ln1: LnCache,
    n1: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    attn: Vec<Array2<f64>>,
    mixed: Array2<f64>,
    ln2: LnCache,
    n2: Array2<f64>,
    f1: Array2<f64>,
    g1: Array2<f64>,
}

/// Activations kept from a forward pass for backpropagation.
pub struct ForwardCache {
    x: Array2<f64>,
    a_in: Array2<f64>,
    g_in: Array2<f64>,
    blocks: Vec<BlockCache>,
    ln_out: LnCache,
    n_out: Array2<f64>,
    a_out: Array2<f64>,
    g_out: Array2<f64>,
    norms: Vec<f64>,
    y: Array2<f64>,
}

impl ForwardCache {
    /// Unit-norm outputs, one row per position.
    pub fn output(&self) -> &Array2<f64> {
        &self.y
    }
}

pub struct Encoder<'a> {
    pub config: &'a EncoderConfig,
    pub weights: &'a EncoderWeights,
}

impl Encoder<'_> {
    fn check_input(&self, x: &ArrayView2<f64>) -> Result<()> {
        if x.nrows() > self.config.max_positions {
            return Err(validation(format!(
                "sequence of {} positions exceeds max_positions {}",
                x.nrows(),
                self.config.max_positions
            )));
        }
        if x.ncols() != self.config.input_dim {
            return Err(validation(format!(
                "feature dim {} does not match encoder input_dim {}",
                x.ncols(),
                self.config.input_dim
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(validation("non-finite input feature"));
        }
        Ok(())
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Result<ForwardCache> {
        self.check_input(&x)?;
        let w = self.weights;
        let len = x.nrows();
        let heads = self.config.heads;
        let hd = self.config.head_dim();
        let scale = 1.0 / (hd as f64).sqrt();

        let a_in = w.input1.forward(&x);
        let g_in = gelu(&a_in);
        let mut h = w.input2.forward(&g_in.view()) + &w.positions.slice(s![..len, ..]);

        let mut caches = Vec::with_capacity(w.blocks.len());
        for b in &w.blocks {
            let h_in = h;
            let (n1, ln1) = b.ln1.forward(&h_in);
            let q = b.query.forward(&n1.view());
            let k = b.key.forward(&n1.view());
            let v = b.value.forward(&n1.view());
            let mut mixed = Array2::zeros((len, self.config.model_dim));
            let mut attn = Vec::with_capacity(heads);
            for head in 0..heads {
                let cols = s![.., head * hd..(head + 1) * hd];
                let scores = q.slice(cols).dot(&k.slice(cols).t()) * scale;
                let a = softmax_rows(&scores);
                mixed.slice_mut(cols).assign(&a.dot(&v.slice(cols)));
                attn.push(a);
            }
            let h_mid = &h_in + &b.proj.forward(&mixed.view());
            let (n2, ln2) = b.ln2.forward(&h_mid);
            let f1 = b.ff1.forward(&n2.view());
            let g1 = gelu(&f1);
            h = &h_mid + &b.ff2.forward(&g1.view());
            caches.push(BlockCache {
                ln1,
                n1,
                q,
                k,
                v,
                attn,
                mixed,
                ln2,
                n2,
                f1,
                g1,
            });
        }

        let (n_out, ln_out) = w.ln_out.forward(&h);
        let a_out = w.output1.forward(&n_out.view());
        let g_out = gelu(&a_out);
        let z = w.output2.forward(&g_out.view());
        let norms: Vec<f64> = z
            .axis_iter(Axis(0))
            .map(|r| r.dot(&r).sqrt().max(1e-12))
            .collect();
        let mut y = z;
        for (mut row, n) in y.axis_iter_mut(Axis(0)).zip(&norms) {
            row /= *n;
        }
        Ok(ForwardCache {
            x: x.to_owned(),
            a_in,
            g_in,
            blocks: caches,
            ln_out,
            n_out,
            a_out,
            g_out,
            norms,
            y,
        })
    }

    /// Unit-norm outputs without keeping the cache.
    pub fn encode(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        Ok(self.forward(x)?.y)
    }

    /// Gradients of a scalar loss w.r.t. all weights, given d loss / d outputs.
    pub fn backward(&self, cache: &ForwardCache, dy: &Array2<f64>) -> EncoderWeights {
        let w = self.weights;
        let mut grad = w.zeros_like();
        let len = cache.x.nrows();
        let hd = self.config.head_dim();
        let scale = 1.0 / (hd as f64).sqrt();

        // through the L2 normalization
        let mut dz = dy.clone();
        for (i, mut row) in dz.axis_iter_mut(Axis(0)).enumerate() {
            let y = cache.y.row(i);
            let proj = y.dot(&row);
            row.zip_mut_with(&y, |d, &yv| *d = (*d - yv * proj) / cache.norms[i]);
        }

        let dg_out = w.output2.backward(&cache.g_out.view(), &dz, &mut grad.output2);
        let da_out = gelu_backward(&cache.a_out, &dg_out);
        let dn_out = w.output1.backward(&cache.n_out.view(), &da_out, &mut grad.output1);
        let mut dh = w.ln_out.backward(&cache.ln_out, &dn_out, &mut grad.ln_out);

        for (i, b) in w.blocks.iter().enumerate().rev() {
            let c = &cache.blocks[i];
            let g = &mut grad.blocks[i];
            // feed-forward residual branch
            let dg1 = b.ff2.backward(&c.g1.view(), &dh, &mut g.ff2);
            let df1 = gelu_backward(&c.f1, &dg1);
            let dn2 = b.ff1.backward(&c.n2.view(), &df1, &mut g.ff1);
            let dh_mid = &dh + &b.ln2.backward(&c.ln2, &dn2, &mut g.ln2);
            // attention residual branch
            let dmixed = b.proj.backward(&c.mixed.view(), &dh_mid, &mut g.proj);
            let mut dq = Array2::zeros(c.q.raw_dim());
            let mut dk = Array2::zeros(c.k.raw_dim());
            let mut dv = Array2::zeros(c.v.raw_dim());
            for (head, a) in c.attn.iter().enumerate() {
                let cols = s![.., head * hd..(head + 1) * hd];
                let dout = dmixed.slice(cols);
                let da = dout.dot(&c.v.slice(cols).t());
                dv.slice_mut(cols).assign(&a.t().dot(&dout));
                let ds = softmax_rows_backward(a, &da) * scale;
                dq.slice_mut(cols).assign(&ds.dot(&c.k.slice(cols)));
                dk.slice_mut(cols).assign(&ds.t().dot(&c.q.slice(cols)));
            }
            let mut dn1 = b.query.backward(&c.n1.view(), &dq, &mut g.query);
            dn1 += &b.key.backward(&c.n1.view(), &dk, &mut g.key);
            dn1 += &b.value.backward(&c.n1.view(), &dv, &mut g.value);
            dh = dh_mid + b.ln1.backward(&c.ln1, &dn1, &mut g.ln1);
        }

        grad.positions.slice_mut(s![..len, ..]).assign(&dh);
        let dg_in = w.input2.backward(&cache.g_in.view(), &dh, &mut grad.input2);
        let da_in = gelu_backward(&cache.a_in, &dg_in);
        w.input1.backward(&cache.x.view(), &da_in, &mut grad.input1);
        grad
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn setup() -> (EncoderConfig, EncoderWeights, Array2<f64>) {
        let mut cfg = EncoderConfig::compact(6, 5);
        cfg.model_dim = 8;
        cfg.heads = 2;
        cfg.ffn_dim = 12;
        cfg.max_positions = 10;
        let w = EncoderWeights::init(&cfg, 11);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = Array2::from_shape_fn((4, 6), |_| rng.random_range(-1.0..1.0));
        (cfg, w, x)
    }

    #[test]
    fn outputs_are_unit_rows() {
        let (cfg, w, x) = setup();
        let enc = Encoder { config: &cfg, weights: &w };
        let y = enc.encode(x.view()).unwrap();
        assert_eq!(y.dim(), (4, 5));
        for row in y.axis_iter(Axis(0)) {
            assert!((row.dot(&row).sqrt() - 1.0).abs() < 1e-6);
        }
        assert_eq!(enc.encode(x.view()).unwrap(), y);
    }

    #[test]
    fn rejects_long_or_misshaped_input() {
        let (cfg, w, _) = setup();
        let enc = Encoder { config: &cfg, weights: &w };
        let err = enc.encode(Array2::zeros((11, 6)).view()).unwrap_err();
        assert!(err.to_string().contains("max_positions"));
        assert!(enc.encode(Array2::zeros((3, 5)).view()).is_err());
    }

    #[test]
    fn tensor_order_is_stable() {
        let (_, w, _) = setup();
        let names: Vec<String> = w.tensors().into_iter().map(|t| t.name).collect();
        assert_eq!(names[0], "input.0.weight");
        assert_eq!(names.last().unwrap(), "output.1.bias");
        assert_eq!(names.len(), w.clone().tensors_mut().len());
    }
}
