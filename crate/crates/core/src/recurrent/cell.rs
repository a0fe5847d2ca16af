//! RNN, GRU and LSTM cells with per-step caches for backpropagation.
//!
//! Gate layouts:
//! * RNN:  `[hidden]`
//! * GRU:  `[update, reset, candidate]`, `h' = (1−z)⊙h + z⊙ĥ`
//! * LSTM: `[input, forget, cell, output]`, peephole-free

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{sigmoid, Matrix, Params};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellKind {
    Rnn,
    Gru,
    Lstm,
}

impl CellKind {
    pub fn gate_count(self) -> usize {
        match self {
            CellKind::Rnn => 1,
            CellKind::Gru => 3,
            CellKind::Lstm => 4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            CellKind::Rnn => "RNN",
            CellKind::Gru => "GRU",
            CellKind::Lstm => "LSTM",
        }
    }
}

/// `W` (H×In), `U` (H×H) and `b` (H) of one gate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateParams {
    pub w: Matrix,
    pub u: Matrix,
    pub b: Vec<f64>,
}

impl GateParams {
    pub fn zeros(hidden: usize, input: usize) -> Self {
        GateParams {
            w: Matrix::zeros(hidden, input),
            u: Matrix::zeros(hidden, hidden),
            b: vec![0.0; hidden],
        }
    }

    #[inline]
    fn preactivation(&self, x: &[f64], h: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.b);
        self.w.matvec_acc(x, out);
        self.u.matvec_acc(h, out);
    }

    /// Accumulate parameter gradients for pre-activation gradient `da` and
    /// propagate into `dx` / `dh`.
    #[inline]
    fn backward(&self, da: &[f64], x: &[f64], h: &[f64], grad: &mut GateParams, dx: &mut [f64], dh: &mut [f64]) {
        grad.w.outer_acc(da, x);
        grad.u.outer_acc(da, h);
        for (g, d) in grad.b.iter_mut().zip(da) {
            *g += d;
        }
        self.w.matvec_t_acc(da, dx);
        self.u.matvec_t_acc(da, dh);
    }
}

impl Params for GateParams {
    fn visit(&self, f: &mut dyn FnMut(&[f64])) {
        f(self.w.as_slice());
        f(self.u.as_slice());
        f(&self.b);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        f(self.w.as_mut_slice());
        f(self.u.as_mut_slice());
        f(&mut self.b);
    }
}

/// Parameters of one recurrent layer (one cell shared across time steps).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellParams {
    pub kind: CellKind,
    pub gates: Vec<GateParams>,
}

impl CellParams {
    pub fn zeros(kind: CellKind, input: usize, hidden: usize) -> Self {
        CellParams {
            kind,
            gates: (0..kind.gate_count()).map(|_| GateParams::zeros(hidden, input)).collect(),
        }
    }

    /// Uniform ±1/√hidden for every weight; LSTM forget bias starts at 1.
    pub fn init(kind: CellKind, input: usize, hidden: usize, rng: &mut Rng) -> Self {
        let bound = 1.0 / (hidden.max(1) as f64).sqrt();
        let mut p = Self::zeros(kind, input, hidden);
        p.visit_mut(&mut |c| c.iter_mut().for_each(|x| *x = rng.gen_range(-bound..bound)));
        for g in &mut p.gates {
            g.b.iter_mut().for_each(|b| *b = 0.0);
        }
        if kind == CellKind::Lstm {
            p.gates[1].b.iter_mut().for_each(|b| *b = 1.0);
        }
        p
    }

    pub fn hidden_size(&self) -> usize {
        self.gates[0].b.len()
    }

    pub fn input_size(&self) -> usize {
        self.gates[0].w.cols()
    }

    fn check(&self, x: &[f64], h: &[f64]) -> Result<()> {
        if self.gates.len() != self.kind.gate_count() {
            return Err(Error::dim("cell gate count", self.kind.gate_count(), self.gates.len()));
        }
        if x.len() != self.input_size() {
            return Err(Error::dim("cell input", self.input_size(), x.len()));
        }
        if h.len() != self.hidden_size() {
            return Err(Error::dim("cell hidden state", self.hidden_size(), h.len()));
        }
        Ok(())
    }

    /// One step. `c_prev` is only read for LSTM cells.
    pub(crate) fn step(&self, x: &[f64], h_prev: &[f64], c_prev: &[f64]) -> StepCache {
        let n = self.hidden_size();
        let mut cache = StepCache {
            x: x.to_vec(),
            h_prev: h_prev.to_vec(),
            c_prev: Vec::new(),
            acts: vec![vec![0.0; n]; self.gates.len()],
            aux: Vec::new(),
            c: Vec::new(),
            h: vec![0.0; n],
        };
        match self.kind {
            CellKind::Rnn => {
                let a = &mut cache.acts[0];
                self.gates[0].preactivation(x, h_prev, a);
                a.iter_mut().for_each(|v| *v = v.tanh());
                cache.h.copy_from_slice(a);
            }
            CellKind::Gru => {
                let (zr, cand) = cache.acts.split_at_mut(2);
                let (z, r) = zr.split_at_mut(1);
                let (z, r, cand) = (&mut z[0], &mut r[0], &mut cand[0]);
                self.gates[0].preactivation(x, h_prev, z);
                z.iter_mut().for_each(|v| *v = sigmoid(*v));
                self.gates[1].preactivation(x, h_prev, r);
                r.iter_mut().for_each(|v| *v = sigmoid(*v));
                let rh: Vec<f64> = r.iter().zip(h_prev).map(|(a, b)| a * b).collect();
                self.gates[2].preactivation(x, &rh, cand);
                cand.iter_mut().for_each(|v| *v = v.tanh());
                for k in 0..n {
                    cache.h[k] = (1.0 - z[k]) * h_prev[k] + z[k] * cand[k];
                }
                cache.aux = rh;
            }
            CellKind::Lstm => {
                cache.c_prev = c_prev.to_vec();
                for (gi, act) in cache.acts.iter_mut().enumerate() {
                    self.gates[gi].preactivation(x, h_prev, act);
                    if gi == 2 {
                        act.iter_mut().for_each(|v| *v = v.tanh());
                    } else {
                        act.iter_mut().for_each(|v| *v = sigmoid(*v));
                    }
                }
                let (i, f, g, o) = (&cache.acts[0], &cache.acts[1], &cache.acts[2], &cache.acts[3]);
                cache.c = (0..n).map(|k| f[k] * c_prev[k] + i[k] * g[k]).collect();
                cache.aux = cache.c.iter().map(|c| c.tanh()).collect();
                for k in 0..n {
                    cache.h[k] = o[k] * cache.aux[k];
                }
            }
        }
        cache
    }

    /// Backward through one step. `dh` is the gradient on this step's hidden
    /// output, `dc` on its cell state (LSTM only). Returns
    /// `(dx, dh_prev, dc_prev)`.
    pub(crate) fn step_backward(
        &self,
        cache: &StepCache,
        dh: &[f64],
        dc: &[f64],
        grad: &mut CellParams,
    ) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let n = self.hidden_size();
        let mut dx = vec![0.0; self.input_size()];
        let mut dh_prev = vec![0.0; n];
        let mut dc_prev = Vec::new();
        let x = &cache.x;
        let hp = &cache.h_prev;
        match self.kind {
            CellKind::Rnn => {
                let h = &cache.acts[0];
                let da: Vec<f64> = (0..n).map(|k| dh[k] * (1.0 - h[k] * h[k])).collect();
                self.gates[0].backward(&da, x, hp, &mut grad.gates[0], &mut dx, &mut dh_prev);
            }
            CellKind::Gru => {
                let (z, r, cand) = (&cache.acts[0], &cache.acts[1], &cache.acts[2]);
                let rh = &cache.aux;
                let mut da_z = vec![0.0; n];
                let mut da_c = vec![0.0; n];
                for k in 0..n {
                    dh_prev[k] = dh[k] * (1.0 - z[k]);
                    da_z[k] = dh[k] * (cand[k] - hp[k]) * z[k] * (1.0 - z[k]);
                    da_c[k] = dh[k] * z[k] * (1.0 - cand[k] * cand[k]);
                }
                let mut d_rh = vec![0.0; n];
                self.gates[2].backward(&da_c, x, rh, &mut grad.gates[2], &mut dx, &mut d_rh);
                let mut da_r = vec![0.0; n];
                for k in 0..n {
                    dh_prev[k] += d_rh[k] * r[k];
                    da_r[k] = d_rh[k] * hp[k] * r[k] * (1.0 - r[k]);
                }
                self.gates[0].backward(&da_z, x, hp, &mut grad.gates[0], &mut dx, &mut dh_prev);
                self.gates[1].backward(&da_r, x, hp, &mut grad.gates[1], &mut dx, &mut dh_prev);
            }
            CellKind::Lstm => {
                let (i, f, g, o) = (&cache.acts[0], &cache.acts[1], &cache.acts[2], &cache.acts[3]);
                let tc = &cache.aux;
                let cp = &cache.c_prev;
                let mut das = vec![vec![0.0; n]; 4];
                dc_prev = vec![0.0; n];
                for k in 0..n {
                    let dct = dc[k] + dh[k] * o[k] * (1.0 - tc[k] * tc[k]);
                    das[0][k] = dct * g[k] * i[k] * (1.0 - i[k]);
                    das[1][k] = dct * cp[k] * f[k] * (1.0 - f[k]);
                    das[2][k] = dct * i[k] * (1.0 - g[k] * g[k]);
                    das[3][k] = dh[k] * tc[k] * o[k] * (1.0 - o[k]);
                    dc_prev[k] = dct * f[k];
                }
                for (gi, da) in das.iter().enumerate() {
                    self.gates[gi].backward(da, x, hp, &mut grad.gates[gi], &mut dx, &mut dh_prev);
                }
            }
        }
        (dx, dh_prev, dc_prev)
    }
}

impl Params for CellParams {
    fn visit(&self, f: &mut dyn FnMut(&[f64])) {
        self.gates.iter().for_each(|g| g.visit(f));
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        self.gates.iter_mut().for_each(|g| g.visit_mut(f));
    }
}

/// Values saved by a forward step for the backward pass.
#[derive(Debug, Clone)]
pub(crate) struct StepCache {
    x: Vec<f64>,
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    /// Gate activations in gate order.
    acts: Vec<Vec<f64>>,
    /// GRU: `r⊙h_prev`; LSTM: `tanh(c)`.
    aux: Vec<f64>,
    pub(crate) c: Vec<f64>,
    pub(crate) h: Vec<f64>,
}

fn expect_kind(params: &CellParams, kind: CellKind) -> Result<()> {
    if params.kind != kind {
        return Err(Error::InvalidArgument(format!(
            "expected {} cell parameters, got {}",
            kind.name(),
            params.kind.name()
        )));
    }
    Ok(())
}

/// `h_t = tanh(W·x_t + U·h_prev + b)`.
pub fn rnn_cell_forward(x: &[f64], h_prev: &[f64], params: &CellParams) -> Result<Vec<f64>> {
    expect_kind(params, CellKind::Rnn)?;
    params.check(x, h_prev)?;
    Ok(params.step(x, h_prev, &[]).h)
}

pub fn gru_cell_forward(x: &[f64], h_prev: &[f64], params: &CellParams) -> Result<Vec<f64>> {
    expect_kind(params, CellKind::Gru)?;
    params.check(x, h_prev)?;
    Ok(params.step(x, h_prev, &[]).h)
}

/// Returns `(h_t, c_t)`.
pub fn lstm_cell_forward(
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
    params: &CellParams,
) -> Result<(Vec<f64>, Vec<f64>)> {
    expect_kind(params, CellKind::Lstm)?;
    params.check(x, h_prev)?;
    if c_prev.len() != params.hidden_size() {
        return Err(Error::dim("lstm cell state", params.hidden_size(), c_prev.len()));
    }
    let s = params.step(x, h_prev, c_prev);
    Ok((s.h, s.c))
}
