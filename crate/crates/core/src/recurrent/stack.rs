use serde::{Deserialize, Serialize};

use super::cell::{CellKind, CellParams, StepCache};
use crate::error::{Error, Result};
use crate::nn::{dropout_mask, Activation, DenseParams, Example, Matrix, Params, Trainable};
use crate::rng::Rng;

/// k stacked recurrent layers; layer i consumes layer i−1's hidden sequence.
/// Initial hidden and cell states are zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecurrentEncoder {
    pub layers: Vec<CellParams>,
}

pub(crate) struct EncoderCache {
    /// `steps[layer][t]`
    steps: Vec<Vec<StepCache>>,
}

impl EncoderCache {
    pub(crate) fn final_hidden(&self) -> &[f64] {
        &self.steps.last().unwrap().last().unwrap().h
    }
}

impl RecurrentEncoder {
    pub fn init(kind: CellKind, input: usize, hidden: &[usize], rng: &mut Rng) -> Self {
        let mut layers = Vec::with_capacity(hidden.len());
        let mut in_dim = input;
        for &h in hidden {
            layers.push(CellParams::init(kind, in_dim, h, rng));
            in_dim = h;
        }
        RecurrentEncoder { layers }
    }

    pub fn zeros(kind: CellKind, input: usize, hidden: &[usize]) -> Self {
        let mut layers = Vec::with_capacity(hidden.len());
        let mut in_dim = input;
        for &h in hidden {
            layers.push(CellParams::zeros(kind, in_dim, h));
            in_dim = h;
        }
        RecurrentEncoder { layers }
    }

    pub fn input_size(&self) -> usize {
        self.layers[0].input_size()
    }

    pub fn output_size(&self) -> usize {
        self.layers.last().map_or(0, CellParams::hidden_size)
    }

    pub(crate) fn validate(&self, window: &Matrix) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::InvalidArgument("encoder has no layers".into()));
        }
        if window.rows() == 0 {
            return Err(Error::Empty("input window (T = 0)"));
        }
        if window.cols() != self.input_size() {
            return Err(Error::dim("window feature count", self.input_size(), window.cols()));
        }
        Ok(())
    }

    /// Unroll the window (T×S) through every layer. Inputs must be validated.
    pub(crate) fn encode_cached(&self, window: &Matrix) -> EncoderCache {
        let t_len = window.rows();
        let mut steps: Vec<Vec<StepCache>> = Vec::with_capacity(self.layers.len());
        for (li, layer) in self.layers.iter().enumerate() {
            let n = layer.hidden_size();
            let mut h = vec![0.0; n];
            let mut c = vec![0.0; n];
            let mut seq = Vec::with_capacity(t_len);
            for t in 0..t_len {
                let x = if li == 0 {
                    window.row(t)
                } else {
                    steps[li - 1][t].h.as_slice()
                };
                let s = layer.step(x, &h, &c);
                h.clone_from(&s.h);
                if layer.kind == CellKind::Lstm {
                    c.clone_from(&s.c);
                }
                seq.push(s);
            }
            steps.push(seq);
        }
        EncoderCache { steps }
    }

    pub fn encode(&self, window: &Matrix) -> Result<Vec<f64>> {
        self.validate(window)?;
        Ok(self.encode_cached(window).final_hidden().to_vec())
    }

    /// Backpropagate a gradient on the top layer's final hidden state.
    pub(crate) fn backward(&self, cache: &EncoderCache, d_final: &[f64], grad: &mut RecurrentEncoder) {
        let t_len = cache.steps[0].len();
        let top = self.layers.len() - 1;
        // Gradient flowing into each step's hidden output from the layer above.
        let mut d_from_above: Vec<Vec<f64>> = vec![vec![0.0; self.layers[top].hidden_size()]; t_len];
        d_from_above[t_len - 1].copy_from_slice(d_final);
        for li in (0..=top).rev() {
            let layer = &self.layers[li];
            let n = layer.hidden_size();
            let mut dh_next = vec![0.0; n];
            let mut dc_next = vec![0.0; n];
            let mut d_below = vec![vec![0.0; layer.input_size()]; t_len];
            for t in (0..t_len).rev() {
                let dh: Vec<f64> = d_from_above[t].iter().zip(&dh_next).map(|(a, b)| a + b).collect();
                let (dx, dh_prev, dc_prev) =
                    layer.step_backward(&cache.steps[li][t], &dh, &dc_next, &mut grad.layers[li]);
                d_below[t] = dx;
                dh_next = dh_prev;
                if layer.kind == CellKind::Lstm {
                    dc_next = dc_prev;
                }
            }
            d_from_above = d_below;
        }
    }
}

impl Params for RecurrentEncoder {
    fn visit(&self, f: &mut dyn FnMut(&[f64])) {
        self.layers.visit(f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        self.layers.visit_mut(f);
    }
}

/// Architecture of a [`StackedRecurrentNet`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackConfig {
    pub kind: CellKind,
    pub input_size: usize,
    pub hidden: Vec<usize>,
    pub head_units: usize,
    pub head_activation: Activation,
    pub dropout: f64,
}

impl StackConfig {
    /// Two 32-unit recurrent layers, a 16-unit dense head, dropout 0.2.
    pub fn standard(kind: CellKind, input_size: usize) -> Self {
        StackConfig {
            kind,
            input_size,
            hidden: vec![32, 32],
            head_units: 16,
            head_activation: Activation::Tanh,
            dropout: 0.2,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.input_size == 0 || self.hidden.is_empty() || self.hidden.contains(&0) || self.head_units == 0 {
            return Err(Error::InvalidArgument("stack sizes must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidArgument(format!("dropout rate {} not in [0,1)", self.dropout)));
        }
        Ok(())
    }
}

/// Recurrent encoder → dense head → dropout → linear scalar output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackedRecurrentNet {
    pub encoder: RecurrentEncoder,
    pub head: DenseParams,
    pub head_activation: Activation,
    pub output: DenseParams,
    pub dropout: f64,
}

pub(crate) struct NetCache {
    enc: EncoderCache,
    head_out: Vec<f64>,
    dropped: Vec<f64>,
    mask: Option<Vec<f64>>,
    pub(crate) prediction: f64,
}

impl StackedRecurrentNet {
    pub fn new(config: &StackConfig, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let encoder = RecurrentEncoder::init(config.kind, config.input_size, &config.hidden, rng);
        let top = encoder.output_size();
        Ok(StackedRecurrentNet {
            encoder,
            head: DenseParams::init(config.head_units, top, rng),
            head_activation: config.head_activation,
            output: DenseParams::init(1, config.head_units, rng),
            dropout: config.dropout,
        })
    }

    pub fn zeros(config: &StackConfig) -> Result<Self> {
        config.validate()?;
        let encoder = RecurrentEncoder::zeros(config.kind, config.input_size, &config.hidden);
        let top = encoder.output_size();
        Ok(StackedRecurrentNet {
            encoder,
            head: DenseParams::zeros(config.head_units, top),
            head_activation: config.head_activation,
            output: DenseParams::zeros(1, config.head_units),
            dropout: config.dropout,
        })
    }

    pub fn kind(&self) -> CellKind {
        self.encoder.layers[0].kind
    }

    pub fn input_size(&self) -> usize {
        self.encoder.input_size()
    }

    pub fn head_units(&self) -> usize {
        self.head.out_dim()
    }

    pub(crate) fn forward_cached(&self, window: &Matrix, mask: Option<Vec<f64>>) -> Result<NetCache> {
        self.encoder.validate(window)?;
        if let Some(m) = &mask {
            if m.len() != self.head_units() {
                return Err(Error::dim("dropout mask", self.head_units(), m.len()));
            }
        }
        let enc = self.encoder.encode_cached(window);
        let mut head_out = vec![0.0; self.head_units()];
        self.head.forward_into(enc.final_hidden(), self.head_activation, &mut head_out);
        let dropped = match &mask {
            Some(m) => head_out.iter().zip(m).map(|(a, b)| a * b).collect(),
            None => head_out.clone(),
        };
        let mut out = [0.0];
        self.output.forward_into(&dropped, Activation::Linear, &mut out);
        Ok(NetCache {
            enc,
            head_out,
            dropped,
            mask,
            prediction: out[0],
        })
    }

    /// Scalar prediction for a T×S window. With `mask`, it multiplies the
    /// head activations (inverted dropout); without, the pass is deterministic.
    pub fn forward(&self, window: &Matrix, mask: Option<&[f64]>) -> Result<f64> {
        Ok(self.forward_cached(window, mask.map(<[f64]>::to_vec))?.prediction)
    }

    /// One forward pass with a freshly drawn dropout mask.
    pub fn forward_sampled(&self, window: &Matrix, rng: &mut Rng) -> Result<f64> {
        let mask = dropout_mask(self.head_units(), self.dropout, rng);
        self.forward(window, Some(&mask))
    }

    pub(crate) fn backward(&self, cache: &NetCache, d_pred: f64, grad: &mut StackedRecurrentNet) {
        let mut d_dropped = vec![0.0; self.head_units()];
        self.output
            .backward(&cache.dropped, &[cache.prediction], &[d_pred], Activation::Linear, &mut grad.output, Some(&mut d_dropped));
        let d_head: Vec<f64> = match &cache.mask {
            Some(m) => d_dropped.iter().zip(m).map(|(a, b)| a * b).collect(),
            None => d_dropped,
        };
        let mut d_enc = vec![0.0; self.encoder.output_size()];
        self.head.backward(
            cache.enc.final_hidden(),
            &cache.head_out,
            &d_head,
            self.head_activation,
            &mut grad.head,
            Some(&mut d_enc),
        );
        self.encoder.backward(&cache.enc, &d_enc, &mut grad.encoder);
    }

    pub fn zeros_like(&self) -> Self {
        let mut g = self.clone();
        g.fill(0.0);
        g
    }
}

impl Params for StackedRecurrentNet {
    fn visit(&self, f: &mut dyn FnMut(&[f64])) {
        self.encoder.visit(f);
        self.head.visit(f);
        self.output.visit(f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        self.encoder.visit_mut(f);
        self.head.visit_mut(f);
        self.output.visit_mut(f);
    }
}

impl Trainable for StackedRecurrentNet {
    type Input = Matrix;

    fn batch_loss_grad(&self, batch: &[&Example<Matrix>], mut dropout: Option<&mut Rng>) -> Result<(f64, Self)> {
        bptt_gradients(self, batch, |_| dropout.as_deref_mut().map(|r| dropout_mask(self.head_units(), self.dropout, r)))
    }

    fn predict(&self, input: &Matrix) -> Result<f64> {
        self.forward(input, None)
    }
}

/// Exact gradient of the mean squared error over `batch`. `mask_for` supplies
/// the dropout mask (or none) for each example index.
pub fn bptt_gradients(
    net: &StackedRecurrentNet,
    batch: &[&Example<Matrix>],
    mut mask_for: impl FnMut(usize) -> Option<Vec<f64>>,
) -> Result<(f64, StackedRecurrentNet)> {
    if batch.is_empty() {
        return Err(Error::Empty("bptt batch"));
    }
    let n = batch.len() as f64;
    let mut grad = net.zeros_like();
    let mut loss = 0.0;
    for (i, ex) in batch.iter().enumerate() {
        let cache = net.forward_cached(&ex.input, mask_for(i))?;
        if !cache.prediction.is_finite() {
            return Err(Error::NonFinite("recurrent forward pass"));
        }
        let d = cache.prediction - ex.target;
        loss += d * d;
        net.backward(&cache, 2.0 * d / n, &mut grad);
    }
    Ok((loss / n, grad))
}
