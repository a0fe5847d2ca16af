//! Multi-source attention network: one recurrent encoder per feature,
//! scalar relu attention coefficients against the target branch, a tanh
//! combination layer and a linear output. Trained directly per horizon.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{dot, dropout_mask, fit, Activation, DenseParams, Example, Matrix, Params, TrainConfig, Trainable};
use crate::panel::{PanelScaler, WeeklyPanel, CF};
use crate::recurrent::stack::EncoderCache;
use crate::recurrent::{CellKind, RecurrentEncoder};
use crate::rng::{child_rng, Rng};

/// `a_j = relu(w_rᵀh^r + w_jᵀh^j + b_j)`.
pub fn attention_coefficient(h_target: &[f64], h_j: &[f64], w_target: &[f64], w_j: &[f64], b_j: f64) -> Result<f64> {
    let n = h_target.len();
    for (ctx, v) in [("h_j", h_j), ("w_target", w_target), ("w_j", w_j)] {
        if v.len() != n {
            return Err(Error::Dimension { context: ctx, expected: n, actual: v.len() });
        }
    }
    Ok((dot(w_target, h_target) + dot(w_j, h_j) + b_j).max(0.0))
}

/// `h^a = tanh(W_a Σ_j a_j h^j + b_a)`, the sum running over every branch.
pub fn attention_combine(coefficients: &[f64], hiddens: &[Vec<f64>], params: &DenseParams) -> Result<Vec<f64>> {
    if coefficients.is_empty() {
        return Err(Error::Empty("attention branches"));
    }
    if coefficients.len() != hiddens.len() {
        return Err(Error::dim("attention hiddens", coefficients.len(), hiddens.len()));
    }
    let mut sum = vec![0.0; params.in_dim()];
    for (a, h) in coefficients.iter().zip(hiddens) {
        if h.len() != sum.len() {
            return Err(Error::dim("attention hidden size", sum.len(), h.len()));
        }
        sum.iter_mut().zip(h).for_each(|(s, v)| *s += a * v);
    }
    crate::nn::dense_forward(&sum, params, Activation::Tanh)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiSourceConfig {
    pub kind: CellKind,
    pub features: usize,
    /// Branch index holding confirmed cases.
    pub target: usize,
    pub hidden: Vec<usize>,
    pub attention_units: usize,
    pub dropout: f64,
}

impl MultiSourceConfig {
    pub fn standard(kind: CellKind, features: usize, target: usize) -> Self {
        MultiSourceConfig {
            kind,
            features,
            target,
            hidden: vec![32, 32],
            attention_units: 16,
            dropout: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiSourceNet {
    pub branches: Vec<RecurrentEncoder>,
    pub target: usize,
    pub w_target: Vec<f64>,
    /// Row j is `w_j`.
    pub w_feature: Matrix,
    pub b_feature: Vec<f64>,
    pub attention: DenseParams,
    pub output: DenseParams,
    pub dropout: f64,
    pub horizon: usize,
}

struct Cache {
    encs: Vec<EncoderCache>,
    scores: Vec<f64>,
    coeffs: Vec<f64>,
    combined: Vec<f64>,
    ha: Vec<f64>,
    dropped: Vec<f64>,
    mask: Option<Vec<f64>>,
    prediction: f64,
}

impl MultiSourceNet {
    pub fn new(config: &MultiSourceConfig, horizon: usize, rng: &mut Rng) -> Result<Self> {
        let mut net = Self::zeros(config, horizon)?;
        for b in net.branches.iter_mut() {
            *b = RecurrentEncoder::init(config.kind, 1, &config.hidden, rng);
        }
        let h = net.hidden_size();
        let bound = 1.0 / (h as f64).sqrt();
        net.w_target.iter_mut().for_each(|w| *w = rng.gen_range(-bound..bound));
        net.w_feature.as_mut_slice().iter_mut().for_each(|w| *w = rng.gen_range(-bound..bound));
        // Start coefficients in the active relu region.
        net.b_feature.iter_mut().for_each(|b| *b = 0.5);
        net.attention = DenseParams::init(config.attention_units, h, rng);
        net.output = DenseParams::init(1, config.attention_units, rng);
        Ok(net)
    }

    pub fn zeros(config: &MultiSourceConfig, horizon: usize) -> Result<Self> {
        if config.features == 0 {
            return Err(Error::InvalidArgument("attention model needs at least one feature".into()));
        }
        if config.target >= config.features {
            return Err(Error::InvalidArgument("target branch out of range".into()));
        }
        if config.hidden.is_empty() || config.hidden.contains(&0) || config.attention_units == 0 {
            return Err(Error::InvalidArgument("layer sizes must be positive".into()));
        }
        if !(0.0..1.0).contains(&config.dropout) {
            return Err(Error::InvalidArgument("dropout must be in [0,1)".into()));
        }
        let h = *config.hidden.last().unwrap();
        Ok(MultiSourceNet {
            branches: (0..config.features)
                .map(|_| RecurrentEncoder::zeros(config.kind, 1, &config.hidden))
                .collect(),
            target: config.target,
            w_target: vec![0.0; h],
            w_feature: Matrix::zeros(config.features, h),
            b_feature: vec![0.0; config.features],
            attention: DenseParams::zeros(config.attention_units, h),
            output: DenseParams::zeros(1, config.attention_units),
            dropout: config.dropout,
            horizon,
        })
    }

    pub fn num_features(&self) -> usize {
        self.branches.len()
    }

    pub fn hidden_size(&self) -> usize {
        self.branches[0].output_size()
    }

    /// Checks the shape invariants a deserialized net must satisfy.
    pub fn validate(&self) -> Result<()> {
        let m = self.branches.len();
        if m == 0 {
            return Err(Error::Empty("attention branches"));
        }
        let h = self.hidden_size();
        if self.branches.iter().any(|b| b.output_size() != h || b.input_size() != 1) {
            return Err(Error::InvalidArgument("all branches must share one hidden size and take one feature".into()));
        }
        if self.target >= m
            || self.w_target.len() != h
            || self.w_feature.rows() != m
            || self.w_feature.cols() != h
            || self.b_feature.len() != m
            || self.attention.in_dim() != h
            || self.output.in_dim() != self.attention.out_dim()
            || self.output.out_dim() != 1
        {
            return Err(Error::InvalidArgument("inconsistent attention parameter shapes".into()));
        }
        Ok(())
    }

    fn forward_cached(&self, window: &Matrix, mask: Option<Vec<f64>>) -> Result<Cache> {
        let m = self.num_features();
        if window.cols() != m {
            return Err(Error::dim("attention window columns", m, window.cols()));
        }
        if window.rows() == 0 {
            return Err(Error::Empty("input window (T = 0)"));
        }
        let h = self.hidden_size();
        let encs: Vec<EncoderCache> = self
            .branches
            .iter()
            .enumerate()
            .map(|(j, b)| {
                let col = Matrix::from_fn(window.rows(), 1, |t, _| window.get(t, j));
                b.encode_cached(&col)
            })
            .collect();
        let h_target = encs[self.target].final_hidden();
        let base = dot(&self.w_target, h_target);
        let scores: Vec<f64> = (0..m)
            .map(|j| base + dot(self.w_feature.row(j), encs[j].final_hidden()) + self.b_feature[j])
            .collect();
        let coeffs: Vec<f64> = scores.iter().map(|s| s.max(0.0)).collect();
        let mut combined = vec![0.0; h];
        for (a, e) in coeffs.iter().zip(&encs) {
            combined.iter_mut().zip(e.final_hidden()).for_each(|(c, v)| *c += a * v);
        }
        let mut ha = vec![0.0; self.attention.out_dim()];
        self.attention.forward_into(&combined, Activation::Tanh, &mut ha);
        let dropped: Vec<f64> = match &mask {
            Some(mk) => {
                if mk.len() != ha.len() {
                    return Err(Error::dim("dropout mask", ha.len(), mk.len()));
                }
                ha.iter().zip(mk).map(|(a, b)| a * b).collect()
            }
            None => ha.clone(),
        };
        let mut out = [0.0];
        self.output.forward_into(&dropped, Activation::Linear, &mut out);
        Ok(Cache { encs, scores, coeffs, combined, ha, dropped, mask, prediction: out[0] })
    }

    /// Scalar prediction for a T×m window whose columns follow branch order.
    pub fn forward(&self, window: &Matrix, mask: Option<&[f64]>) -> Result<f64> {
        Ok(self.forward_cached(window, mask.map(<[f64]>::to_vec))?.prediction)
    }

    pub fn forward_sampled(&self, window: &Matrix, rng: &mut Rng) -> Result<f64> {
        let mask = dropout_mask(self.attention.out_dim(), self.dropout, rng);
        self.forward(window, Some(&mask))
    }

    /// Attention coefficients for a window (diagnostics).
    pub fn coefficients(&self, window: &Matrix) -> Result<Vec<f64>> {
        Ok(self.forward_cached(window, None)?.coeffs)
    }

    fn backward(&self, c: &Cache, d_pred: f64, g: &mut MultiSourceNet) {
        let m = self.num_features();
        let mut d_dropped = vec![0.0; self.attention.out_dim()];
        self.output
            .backward(&c.dropped, &[c.prediction], &[d_pred], Activation::Linear, &mut g.output, Some(&mut d_dropped));
        let d_ha: Vec<f64> = match &c.mask {
            Some(mk) => d_dropped.iter().zip(mk).map(|(a, b)| a * b).collect(),
            None => d_dropped,
        };
        let mut d_comb = vec![0.0; self.hidden_size()];
        self.attention.backward(&c.combined, &c.ha, &d_ha, Activation::Tanh, &mut g.attention, Some(&mut d_comb));

        let mut d_h: Vec<Vec<f64>> = vec![vec![0.0; self.hidden_size()]; m];
        let h_target = c.encs[self.target].final_hidden();
        for j in 0..m {
            let hj = c.encs[j].final_hidden();
            for (d, &v) in d_h[j].iter_mut().zip(&d_comb) {
                *d += c.coeffs[j] * v;
            }
            if c.scores[j] <= 0.0 {
                continue;
            }
            let ds = dot(&d_comb, hj);
            g.b_feature[j] += ds;
            for k in 0..hj.len() {
                g.w_target[k] += ds * h_target[k];
                let gw = g.w_feature.get(j, k) + ds * hj[k];
                g.w_feature.set(j, k, gw);
                d_h[self.target][k] += ds * self.w_target[k];
                d_h[j][k] += ds * self.w_feature.get(j, k);
            }
        }
        for j in 0..m {
            self.branches[j].backward(&c.encs[j], &d_h[j], &mut g.branches[j]);
        }
    }

    fn zeros_like(&self) -> Self {
        let mut g = self.clone();
        g.fill(0.0);
        g
    }
}

impl Params for MultiSourceNet {
    fn visit(&self, f: &mut dyn FnMut(&[f64])) {
        self.branches.visit(f);
        f(&self.w_target);
        f(self.w_feature.as_slice());
        f(&self.b_feature);
        self.attention.visit(f);
        self.output.visit(f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        self.branches.visit_mut(f);
        f(&mut self.w_target);
        f(self.w_feature.as_mut_slice());
        f(&mut self.b_feature);
        self.attention.visit_mut(f);
        self.output.visit_mut(f);
    }
}

impl Trainable for MultiSourceNet {
    type Input = Matrix;

    fn batch_loss_grad(&self, batch: &[&Example<Matrix>], mut dropout: Option<&mut Rng>) -> Result<(f64, Self)> {
        let masks: Vec<Option<Vec<f64>>> = batch
            .iter()
            .map(|_| dropout.as_deref_mut().map(|r| dropout_mask(self.attention.out_dim(), self.dropout, r)))
            .collect();
        multisource_gradients(self, batch, &masks)
    }

    fn predict(&self, input: &Matrix) -> Result<f64> {
        self.forward(input, None)
    }
}

/// Mean squared error over `batch` and its exact gradient; `masks[i]` is the
/// dropout mask for example i.
pub fn multisource_gradients(
    net: &MultiSourceNet,
    batch: &[&Example<Matrix>],
    masks: &[Option<Vec<f64>>],
) -> Result<(f64, MultiSourceNet)> {
    if batch.is_empty() {
        return Err(Error::Empty("attention batch"));
    }
    let n = batch.len() as f64;
    let mut g = net.zeros_like();
    let mut loss = 0.0;
    for (ex, mask) in batch.iter().zip(masks) {
        let c = net.forward_cached(&ex.input, mask.clone())?;
        if !c.prediction.is_finite() {
            return Err(Error::NonFinite("attention forward pass"));
        }
        let d = c.prediction - ex.target;
        loss += d * d;
        net.backward(&c, 2.0 * d / n, &mut g);
    }
    Ok((loss / n, g))
}

/// Scaled direct-strategy examples for `horizon`, ordered by origin week then
/// region. Columns follow `features`.
pub fn direct_examples(
    panel: &WeeklyPanel,
    scaler: &PanelScaler,
    regions: &[usize],
    features: &[usize],
    window: usize,
    horizon: usize,
) -> Vec<Example<Matrix>> {
    let n = panel.num_weeks();
    let mut out = Vec::new();
    if n < window + horizon {
        return out;
    }
    for origin in (window - 1)..(n - horizon) {
        for &r in regions {
            out.push(Example {
                input: scaler.window(panel, r, origin, features, window),
                target: scaler.scale_target(r, panel.value(r, origin + horizon, scaler.target_feature)),
            });
        }
    }
    out
}

/// One independently trained net per horizon on every region of `panel`
/// (the training span). Feature columns follow `features`; CF must be among
/// them.
pub fn train_direct_per_horizon(
    panel: &WeeklyPanel,
    features: &[&str],
    horizons: &[usize],
    window: usize,
    config: &MultiSourceConfig,
    train: &TrainConfig,
    seed: u64,
) -> Result<Vec<MultiSourceNet>> {
    let max_h = horizons.iter().copied().max().ok_or(Error::Empty("horizons"))?;
    if panel.num_weeks() < window + max_h {
        return Err(Error::InvalidArgument(format!(
            "{} weeks cannot supply a window of {window} plus horizon {max_h}",
            panel.num_weeks()
        )));
    }
    let idx = features.iter().map(|f| panel.feature_index(f)).collect::<Result<Vec<_>>>()?;
    let target = features
        .iter()
        .position(|f| *f == CF)
        .ok_or_else(|| Error::InvalidArgument("feature list must include CF".into()))?;
    let config = MultiSourceConfig { features: idx.len(), target, ..config.clone() };
    let scaler = PanelScaler::fit(panel)?;
    let regions: Vec<usize> = (0..panel.num_regions()).collect();
    horizons
        .iter()
        .map(|&h| {
            let examples = direct_examples(panel, &scaler, &regions, &idx, window, h);
            let mut rng = child_rng(seed, &format!("att/h{h}"));
            let mut net = MultiSourceNet::new(&config, h, &mut rng)?;
            fit(&mut net, &examples, train, &mut rng)?;
            Ok(net)
        })
        .collect()
}
