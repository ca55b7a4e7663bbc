//! Recurrent cells (LSTM, BiLSTM, GRU) with a 2-class affine head, plus
//! analytic backpropagation through time and a finite-difference gradient
//! check.
//!
//! Cell recurrences:
//!
//! ```text
//! LSTM: i = s(Wi x + Ui h' + bi)   f = s(Wf x + Uf h' + bf)
//!       g = tanh(Wg x + Ug h' + bg) o = s(Wo x + Uo h' + bo)
//!       c = f.c' + i.g              h = o.tanh(c)
//! GRU:  z = s(Wz x + Uz h' + bz)   r = s(Wr x + Ur h' + br)
//!       n = tanh(Wn x + Un (r.h') + bn)
//!       h = z.h' + (1 - z).n
//! ```
//!
//! A saturated GRU update gate (z -> 1) therefore freezes the hidden
//! state. BiLSTM runs two independent LSTM passes and concatenates the
//! final hidden states.
//!
//! Parameters live in one flat `f64` vector: the gate blocks in the order
//! above (`W`, `U`, `b` per gate, row-major, forward cell before backward
//! cell for BiLSTM), followed by the head weights (2 x D) and biases (2).
//! This order is also the model file layout.

use super::EnsembleError;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CellKind {
    Lstm,
    BiLstm,
    Gru,
}

impl CellKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            CellKind::Lstm => "lstm",
            CellKind::BiLstm => "bilstm",
            CellKind::Gru => "gru",
        }
    }

    pub(crate) fn to_byte(self) -> u8 {
        match self {
            CellKind::Lstm => 0,
            CellKind::BiLstm => 1,
            CellKind::Gru => 2,
        }
    }

    pub(crate) fn from_byte(b: u8) -> Option<Self> {
        match b {
            0 => Some(CellKind::Lstm),
            1 => Some(CellKind::BiLstm),
            2 => Some(CellKind::Gru),
            _ => None,
        }
    }
}

impl std::str::FromStr for CellKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "lstm" => Ok(CellKind::Lstm),
            "bilstm" => Ok(CellKind::BiLstm),
            "gru" => Ok(CellKind::Gru),
            other => Err(format!("unknown cell kind `{other}`")),
        }
    }
}

impl std::fmt::Display for CellKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

fn gate_block_len(d: usize, h: usize) -> usize {
    h * d + h * h + h
}

fn directional_gates(kind: CellKind) -> usize {
    match kind {
        CellKind::Lstm | CellKind::BiLstm => 4,
        CellKind::Gru => 3,
    }
}

fn cell_params_len(kind: CellKind, d: usize, h: usize) -> usize {
    let directions = if kind == CellKind::BiLstm { 2 } else { 1 };
    directions * directional_gates(kind) * gate_block_len(d, h)
}

fn head_input_dim(kind: CellKind, h: usize) -> usize {
    if kind == CellKind::BiLstm {
        2 * h
    } else {
        h
    }
}

/// Weights and biases for one recurrent classifier, stored flat.
#[derive(Debug, Clone, PartialEq)]
pub struct RnnParams {
    kind: CellKind,
    input_dim: usize,
    hidden: usize,
    theta: Vec<f64>,
}

impl RnnParams {
    pub fn zeros(kind: CellKind, input_dim: usize, hidden: usize) -> Self {
        let len = cell_params_len(kind, input_dim, hidden)
            + 2 * head_input_dim(kind, hidden)
            + 2;
        Self { kind, input_dim, hidden, theta: vec![0.0; len] }
    }

    /// Seeded Xavier-uniform initialization; LSTM forget-gate biases start
    /// at 1.
    pub fn init(kind: CellKind, input_dim: usize, hidden: usize, seed: u64) -> Self {
        let mut params = Self::zeros(kind, input_dim, hidden);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (d, h) = (input_dim, hidden);
        let gates = directional_gates(kind);
        let directions = if kind == CellKind::BiLstm { 2 } else { 1 };
        let bound_w = (6.0 / (d + h) as f64).sqrt();
        let bound_u = (6.0 / (2 * h) as f64).sqrt();
        for dir in 0..directions {
            for gate in 0..gates {
                let off = gate_offset(kind, d, h, dir, gate);
                for j in 0..h * d {
                    params.theta[off.w + j] = rng.random_range(-bound_w..bound_w);
                }
                for j in 0..h * h {
                    params.theta[off.u + j] = rng.random_range(-bound_u..bound_u);
                }
                if matches!(kind, CellKind::Lstm | CellKind::BiLstm) && gate == 1 {
                    for j in 0..h {
                        params.theta[off.b + j] = 1.0;
                    }
                }
            }
        }
        let hd = head_input_dim(kind, h);
        let head = head_offset(kind, d, h);
        let bound_head = (6.0 / (hd + 2) as f64).sqrt();
        for j in 0..2 * hd {
            params.theta[head + j] = rng.random_range(-bound_head..bound_head);
        }
        params
    }

    pub fn from_theta(
        kind: CellKind,
        input_dim: usize,
        hidden: usize,
        theta: Vec<f64>,
    ) -> Result<Self, EnsembleError> {
        let expected = Self::zeros(kind, input_dim, hidden).theta.len();
        if theta.len() != expected {
            return Err(EnsembleError::DimensionMismatch { expected, got: theta.len() });
        }
        Ok(Self { kind, input_dim, hidden, theta })
    }

    pub fn kind(&self) -> CellKind {
        self.kind
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub(crate) fn theta_mut(&mut self) -> &mut [f64] {
        &mut self.theta
    }

    pub fn param_count(&self) -> usize {
        self.theta.len()
    }
}

#[derive(Clone, Copy)]
struct GateOffset {
    w: usize,
    u: usize,
    b: usize,
}

fn gate_offset(kind: CellKind, d: usize, h: usize, direction: usize, gate: usize) -> GateOffset {
    let per_gate = gate_block_len(d, h);
    let base = (direction * directional_gates(kind) + gate) * per_gate;
    GateOffset { w: base, u: base + h * d, b: base + h * d + h * h }
}

fn head_offset(kind: CellKind, d: usize, h: usize) -> usize {
    cell_params_len(kind, d, h)
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// y += W x with row-major W of shape (y.len(), x.len()).
fn matvec_add(y: &mut [f64], w: &[f64], x: &[f64]) {
    debug_assert_eq!(w.len(), y.len() * x.len());
    for (row, yi) in y.iter_mut().enumerate() {
        let r = &w[row * x.len()..(row + 1) * x.len()];
        let mut acc = 0.0;
        for (wj, xj) in r.iter().zip(x) {
            acc += wj * xj;
        }
        *yi += acc;
    }
}

/// dx += W^T dy with row-major W of shape (dy.len(), dx.len()).
fn matvec_t_add(dx: &mut [f64], w: &[f64], dy: &[f64]) {
    debug_assert_eq!(w.len(), dy.len() * dx.len());
    for (row, dyi) in dy.iter().enumerate() {
        let r = &w[row * dx.len()..(row + 1) * dx.len()];
        for (dxj, wj) in dx.iter_mut().zip(r) {
            *dxj += wj * dyi;
        }
    }
}

/// dW += dy (outer) x.
fn outer_add(dw: &mut [f64], dy: &[f64], x: &[f64]) {
    debug_assert_eq!(dw.len(), dy.len() * x.len());
    for (row, dyi) in dy.iter().enumerate() {
        let r = &mut dw[row * x.len()..(row + 1) * x.len()];
        for (dwj, xj) in r.iter_mut().zip(x) {
            *dwj += dyi * xj;
        }
    }
}

fn add_assign(y: &mut [f64], x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += xi;
    }
}

/// Gate pre-activation: b + W x + U h_prev (+ U applied to `recur` which
/// is h_prev or r.h_prev for the GRU candidate).
fn preactivation(
    theta: &[f64],
    off: GateOffset,
    d: usize,
    h: usize,
    x: &[f64],
    recur: &[f64],
) -> Vec<f64> {
    let mut a = theta[off.b..off.b + h].to_vec();
    matvec_add(&mut a, &theta[off.w..off.w + h * d], x);
    matvec_add(&mut a, &theta[off.u..off.u + h * h], recur);
    a
}

struct LstmTrace {
    i: Vec<Vec<f64>>,
    f: Vec<Vec<f64>>,
    g: Vec<Vec<f64>>,
    o: Vec<Vec<f64>>,
    c: Vec<Vec<f64>>,
    tc: Vec<Vec<f64>>,
    h: Vec<Vec<f64>>,
}

/// Runs an LSTM pass over the steps (optionally in reverse input order);
/// trace entries are in processing order.
fn lstm_forward(
    params: &RnnParams,
    direction: usize,
    steps: &[Vec<f64>],
    reverse: bool,
) -> LstmTrace {
    let (d, h) = (params.input_dim, params.hidden);
    let t_len = steps.len();
    let offs: Vec<GateOffset> =
        (0..4).map(|g| gate_offset(params.kind, d, h, direction, g)).collect();
    let mut trace = LstmTrace {
        i: Vec::with_capacity(t_len),
        f: Vec::with_capacity(t_len),
        g: Vec::with_capacity(t_len),
        o: Vec::with_capacity(t_len),
        c: Vec::with_capacity(t_len),
        tc: Vec::with_capacity(t_len),
        h: Vec::with_capacity(t_len),
    };
    let zeros = vec![0.0; h];
    for k in 0..t_len {
        let x = &steps[if reverse { t_len - 1 - k } else { k }];
        let h_prev = if k == 0 { &zeros } else { &trace.h[k - 1] };
        let c_prev = if k == 0 { &zeros } else { &trace.c[k - 1] };
        let mut i = preactivation(&params.theta, offs[0], d, h, x, h_prev);
        let mut f = preactivation(&params.theta, offs[1], d, h, x, h_prev);
        let mut g = preactivation(&params.theta, offs[2], d, h, x, h_prev);
        let mut o = preactivation(&params.theta, offs[3], d, h, x, h_prev);
        for v in i.iter_mut() {
            *v = sigmoid(*v);
        }
        for v in f.iter_mut() {
            *v = sigmoid(*v);
        }
        for v in g.iter_mut() {
            *v = v.tanh();
        }
        for v in o.iter_mut() {
            *v = sigmoid(*v);
        }
        let c: Vec<f64> =
            (0..h).map(|j| f[j] * c_prev[j] + i[j] * g[j]).collect();
        let tc: Vec<f64> = c.iter().map(|v| v.tanh()).collect();
        let hv: Vec<f64> = (0..h).map(|j| o[j] * tc[j]).collect();
        trace.i.push(i);
        trace.f.push(f);
        trace.g.push(g);
        trace.o.push(o);
        trace.c.push(c);
        trace.tc.push(tc);
        trace.h.push(hv);
    }
    trace
}

/// BPTT for one LSTM direction, seeding from the gradient on the final
/// hidden state. Accumulates into `grad`.
fn lstm_backward(
    params: &RnnParams,
    direction: usize,
    steps: &[Vec<f64>],
    reverse: bool,
    trace: &LstmTrace,
    dh_final: &[f64],
    grad: &mut [f64],
) {
    let (d, h) = (params.input_dim, params.hidden);
    let t_len = steps.len();
    let offs: Vec<GateOffset> =
        (0..4).map(|g| gate_offset(params.kind, d, h, direction, g)).collect();
    let zeros = vec![0.0; h];
    let mut dh = dh_final.to_vec();
    let mut dc = vec![0.0; h];
    for k in (0..t_len).rev() {
        let x = &steps[if reverse { t_len - 1 - k } else { k }];
        let h_prev = if k == 0 { &zeros } else { &trace.h[k - 1] };
        let c_prev = if k == 0 { &zeros } else { &trace.c[k - 1] };
        let (i, f, g, o) = (&trace.i[k], &trace.f[k], &trace.g[k], &trace.o[k]);
        let tc = &trace.tc[k];

        let mut da = [vec![0.0; h], vec![0.0; h], vec![0.0; h], vec![0.0; h]];
        for j in 0..h {
            let dcj = dc[j] + dh[j] * o[j] * (1.0 - tc[j] * tc[j]);
            da[0][j] = dcj * g[j] * i[j] * (1.0 - i[j]);
            da[1][j] = dcj * c_prev[j] * f[j] * (1.0 - f[j]);
            da[2][j] = dcj * i[j] * (1.0 - g[j] * g[j]);
            da[3][j] = dh[j] * tc[j] * o[j] * (1.0 - o[j]);
            dc[j] = dcj * f[j];
        }
        let mut dh_prev = vec![0.0; h];
        for (gate, dag) in da.iter().enumerate() {
            let off = offs[gate];
            outer_add(&mut grad[off.w..off.w + h * d], dag, x);
            outer_add(&mut grad[off.u..off.u + h * h], dag, h_prev);
            add_assign(&mut grad[off.b..off.b + h], dag);
            matvec_t_add(&mut dh_prev, &params.theta[off.u..off.u + h * h], dag);
        }
        dh = dh_prev;
    }
}

struct GruTrace {
    z: Vec<Vec<f64>>,
    r: Vec<Vec<f64>>,
    n: Vec<Vec<f64>>,
    h: Vec<Vec<f64>>,
}

fn gru_forward(params: &RnnParams, steps: &[Vec<f64>]) -> GruTrace {
    let (d, h) = (params.input_dim, params.hidden);
    let offs: Vec<GateOffset> =
        (0..3).map(|g| gate_offset(params.kind, d, h, 0, g)).collect();
    let mut trace = GruTrace {
        z: Vec::with_capacity(steps.len()),
        r: Vec::with_capacity(steps.len()),
        n: Vec::with_capacity(steps.len()),
        h: Vec::with_capacity(steps.len()),
    };
    let zeros = vec![0.0; h];
    for (k, x) in steps.iter().enumerate() {
        let h_prev = if k == 0 { &zeros } else { &trace.h[k - 1] };
        let mut z = preactivation(&params.theta, offs[0], d, h, x, h_prev);
        let mut r = preactivation(&params.theta, offs[1], d, h, x, h_prev);
        for v in z.iter_mut() {
            *v = sigmoid(*v);
        }
        for v in r.iter_mut() {
            *v = sigmoid(*v);
        }
        let rh: Vec<f64> = (0..h).map(|j| r[j] * h_prev[j]).collect();
        let mut n = preactivation(&params.theta, offs[2], d, h, x, &rh);
        for v in n.iter_mut() {
            *v = v.tanh();
        }
        let hv: Vec<f64> = (0..h).map(|j| z[j] * h_prev[j] + (1.0 - z[j]) * n[j]).collect();
        trace.z.push(z);
        trace.r.push(r);
        trace.n.push(n);
        trace.h.push(hv);
    }
    trace
}

fn gru_backward(
    params: &RnnParams,
    steps: &[Vec<f64>],
    trace: &GruTrace,
    dh_final: &[f64],
    grad: &mut [f64],
) {
    let (d, h) = (params.input_dim, params.hidden);
    let offs: Vec<GateOffset> =
        (0..3).map(|g| gate_offset(params.kind, d, h, 0, g)).collect();
    let zeros = vec![0.0; h];
    let mut dh = dh_final.to_vec();
    for k in (0..steps.len()).rev() {
        let x = &steps[k];
        let h_prev = if k == 0 { &zeros } else { &trace.h[k - 1] };
        let (z, r, n) = (&trace.z[k], &trace.r[k], &trace.n[k]);

        let mut da_z = vec![0.0; h];
        let mut da_n = vec![0.0; h];
        let mut dh_prev = vec![0.0; h];
        for j in 0..h {
            da_z[j] = dh[j] * (h_prev[j] - n[j]) * z[j] * (1.0 - z[j]);
            da_n[j] = dh[j] * (1.0 - z[j]) * (1.0 - n[j] * n[j]);
            dh_prev[j] = dh[j] * z[j];
        }
        // Candidate gate sees r.h_prev through its recurrent weights.
        let rh: Vec<f64> = (0..h).map(|j| r[j] * h_prev[j]).collect();
        let off_n = offs[2];
        outer_add(&mut grad[off_n.w..off_n.w + h * d], &da_n, x);
        outer_add(&mut grad[off_n.u..off_n.u + h * h], &da_n, &rh);
        add_assign(&mut grad[off_n.b..off_n.b + h], &da_n);
        let mut drh = vec![0.0; h];
        matvec_t_add(&mut drh, &params.theta[off_n.u..off_n.u + h * h], &da_n);
        let mut da_r = vec![0.0; h];
        for j in 0..h {
            da_r[j] = drh[j] * h_prev[j] * r[j] * (1.0 - r[j]);
            dh_prev[j] += drh[j] * r[j];
        }
        for (off, dag) in [(offs[0], &da_z), (offs[1], &da_r)] {
            outer_add(&mut grad[off.w..off.w + h * d], dag, x);
            outer_add(&mut grad[off.u..off.u + h * h], dag, h_prev);
            add_assign(&mut grad[off.b..off.b + h], dag);
            matvec_t_add(&mut dh_prev, &params.theta[off.u..off.u + h * h], dag);
        }
        dh = dh_prev;
    }
}

fn softmax2(logits: [f64; 2]) -> [f64; 2] {
    let m = logits[0].max(logits[1]);
    let e0 = (logits[0] - m).exp();
    let e1 = (logits[1] - m).exp();
    [e0 / (e0 + e1), e1 / (e0 + e1)]
}

fn head_forward(params: &RnnParams, hin: &[f64]) -> [f64; 2] {
    let base = head_offset(params.kind, params.input_dim, params.hidden);
    let hd = hin.len();
    let mut logits = [params.theta[base + 2 * hd], params.theta[base + 2 * hd + 1]];
    for (row, logit) in logits.iter_mut().enumerate() {
        let w = &params.theta[base + row * hd..base + (row + 1) * hd];
        for (wj, xj) in w.iter().zip(hin) {
            *logit += wj * xj;
        }
    }
    logits
}

fn check_steps(params: &RnnParams, steps: &[Vec<f64>]) -> Result<(), EnsembleError> {
    if steps.is_empty() {
        return Err(EnsembleError::EmptySequence);
    }
    for s in steps {
        if s.len() != params.input_dim {
            return Err(EnsembleError::DimensionMismatch {
                expected: params.input_dim,
                got: s.len(),
            });
        }
    }
    Ok(())
}

fn final_head_input(params: &RnnParams, steps: &[Vec<f64>]) -> Vec<f64> {
    match params.kind {
        CellKind::Lstm => lstm_forward(params, 0, steps, false).h.pop().unwrap(),
        CellKind::Gru => gru_forward(params, steps).h.pop().unwrap(),
        CellKind::BiLstm => {
            let mut fwd = lstm_forward(params, 0, steps, false).h.pop().unwrap();
            let bwd = lstm_forward(params, 1, steps, true).h.pop().unwrap();
            fwd.extend(bwd);
            fwd
        }
    }
}

/// Class probabilities `[p_attack, p_live]` for a whole sequence.
pub fn rnn_forward(params: &RnnParams, steps: &[Vec<f64>]) -> Result<[f64; 2], EnsembleError> {
    check_steps(params, steps)?;
    Ok(softmax2(head_forward(params, &final_head_input(params, steps))))
}

/// Per-step class probabilities: the head applied to the hidden state at
/// every prefix (for BiLSTM, to the forward state at t concatenated with
/// the backward state at t).
pub fn rnn_step_probs(
    params: &RnnParams,
    steps: &[Vec<f64>],
) -> Result<Vec<[f64; 2]>, EnsembleError> {
    check_steps(params, steps)?;
    let t_len = steps.len();
    let head_inputs: Vec<Vec<f64>> = match params.kind {
        CellKind::Lstm => lstm_forward(params, 0, steps, false).h,
        CellKind::Gru => gru_forward(params, steps).h,
        CellKind::BiLstm => {
            let fwd = lstm_forward(params, 0, steps, false).h;
            let bwd = lstm_forward(params, 1, steps, true).h;
            (0..t_len)
                .map(|t| {
                    let mut v = fwd[t].clone();
                    // Backward trace index k corresponds to original
                    // position t_len - 1 - k.
                    v.extend_from_slice(&bwd[t_len - 1 - t]);
                    v
                })
                .collect()
        }
    };
    Ok(head_inputs.iter().map(|hin| softmax2(head_forward(params, hin))).collect())
}

/// Cross-entropy loss for one sequence; accumulates parameter gradients.
pub(crate) fn loss_and_grad(
    params: &RnnParams,
    steps: &[Vec<f64>],
    label: u8,
    grad: &mut [f64],
) -> f64 {
    debug_assert_eq!(grad.len(), params.theta.len());
    let (d, h) = (params.input_dim, params.hidden);
    let hin: Vec<f64>;
    enum Traces {
        Lstm(LstmTrace),
        Gru(GruTrace),
        Bi(LstmTrace, LstmTrace),
    }
    let traces = match params.kind {
        CellKind::Lstm => {
            let t = lstm_forward(params, 0, steps, false);
            hin = t.h.last().unwrap().clone();
            Traces::Lstm(t)
        }
        CellKind::Gru => {
            let t = gru_forward(params, steps);
            hin = t.h.last().unwrap().clone();
            Traces::Gru(t)
        }
        CellKind::BiLstm => {
            let tf = lstm_forward(params, 0, steps, false);
            let tb = lstm_forward(params, 1, steps, true);
            let mut v = tf.h.last().unwrap().clone();
            v.extend_from_slice(tb.h.last().unwrap());
            hin = v;
            Traces::Bi(tf, tb)
        }
    };

    let logits = head_forward(params, &hin);
    let p = softmax2(logits);
    let loss = -p[label as usize].ln();

    let mut dlogits = p;
    dlogits[label as usize] -= 1.0;

    let base = head_offset(params.kind, d, h);
    let hd = hin.len();
    let mut dhin = vec![0.0; hd];
    for (row, &dl) in dlogits.iter().enumerate() {
        let wrow = &params.theta[base + row * hd..base + (row + 1) * hd];
        let grow = &mut grad[base + row * hd..base + (row + 1) * hd];
        for j in 0..hd {
            grow[j] += dl * hin[j];
            dhin[j] += dl * wrow[j];
        }
        grad[base + 2 * hd + row] += dl;
    }

    match traces {
        Traces::Lstm(t) => lstm_backward(params, 0, steps, false, &t, &dhin, grad),
        Traces::Gru(t) => gru_backward(params, steps, &t, &dhin, grad),
        Traces::Bi(tf, tb) => {
            lstm_backward(params, 0, steps, false, &tf, &dhin[..h], grad);
            lstm_backward(params, 1, steps, true, &tb, &dhin[h..], grad);
        }
    }
    loss
}

/// Compares analytic BPTT gradients against central finite differences
/// (step 1e-5) on a random instance; returns the maximum relative error.
pub fn gradient_check(
    kind: CellKind,
    input_dim: usize,
    hidden: usize,
    n_steps: usize,
    seed: u64,
) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = RnnParams::init(kind, input_dim, hidden, rng.random());
    let steps: Vec<Vec<f64>> = (0..n_steps)
        .map(|_| (0..input_dim).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let label = rng.random_range(0..2u8);

    let mut analytic = vec![0.0; params.param_count()];
    loss_and_grad(&params, &steps, label, &mut analytic);

    let eps = 1e-5;
    let mut worst = 0.0f64;
    let mut probe = params.clone();
    for j in 0..params.param_count() {
        let original = probe.theta[j];
        probe.theta[j] = original + eps;
        let up = -rnn_forward(&probe, &steps).unwrap()[label as usize].ln();
        probe.theta[j] = original - eps;
        let down = -rnn_forward(&probe, &steps).unwrap()[label as usize].ln();
        probe.theta[j] = original;
        let numeric = (up - down) / (2.0 * eps);
        let rel = (analytic[j] - numeric).abs()
            / (analytic[j].abs() + numeric.abs()).max(1e-4);
        worst = worst.max(rel);
    }
    worst
}
