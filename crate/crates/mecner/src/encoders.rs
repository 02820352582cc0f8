//! Per-character feature encoders.
//!
//! Three streams feed the tagger: a CNN over radical embeddings, a
//! Conv-GRU over character embeddings (a unidirectional GRU whose
//! output sequence is convolved and concatenated back per position),
//! and word embeddings duplicated onto characters. Ablation switches
//! replace the Conv-GRU with a plain CNN or a BiLSTM and can drop the
//! radical or word streams.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::nd::{Graph, NodeId, ParamId, ParamStore, Tensor};

/// Character-stream encoder selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CharMode {
    ConvGru,
    CnnOnly,
    BilstmOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncoderConfig {
    pub gru_dim: usize,
    pub conv_kernel: usize,
    pub convgru_filters: usize,
    pub radical_filters: usize,
    pub char_mode: CharMode,
    pub use_radical: bool,
    pub use_word: bool,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            gru_dim: 150,
            conv_kernel: 3,
            convgru_filters: 150,
            radical_filters: 100,
            char_mode: CharMode::ConvGru,
            use_radical: true,
            use_word: true,
        }
    }
}

impl EncoderConfig {
    /// Width of the character stream, a pure function of the config.
    pub fn char_stream_dim(&self) -> usize {
        match self.char_mode {
            CharMode::ConvGru => self.gru_dim + self.convgru_filters,
            CharMode::CnnOnly => self.convgru_filters,
            CharMode::BilstmOnly => 2 * self.gru_dim,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.conv_kernel.is_multiple_of(2) {
            return Err(format!("conv_kernel must be odd, got {}", self.conv_kernel));
        }
        for (name, v) in [
            ("gru_dim", self.gru_dim),
            ("conv_kernel", self.conv_kernel),
            ("convgru_filters", self.convgru_filters),
            ("radical_filters", self.radical_filters),
        ] {
            if v == 0 {
                return Err(format!("{name} must be positive"));
            }
        }
        Ok(())
    }
}

/// Sequence processing order of a recurrent pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

/// Standard GRU cell weights: update gate z, reset gate r, candidate h.
#[derive(Debug, Clone, Copy)]
pub struct GruParams {
    pub wz: ParamId,
    pub wr: ParamId,
    pub wh: ParamId,
    pub uz: ParamId,
    pub ur: ParamId,
    pub uh: ParamId,
    pub bz: ParamId,
    pub br: ParamId,
    pub bh: ParamId,
    pub hidden: usize,
}

impl GruParams {
    pub fn init<R: Rng>(
        store: &mut ParamStore,
        prefix: &str,
        d_in: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Self {
        let mut w = |name: &str| {
            store.register(&format!("{prefix}.{name}"), Tensor::glorot(d_in, hidden, rng))
        };
        let (wz, wr, wh) = (w("wz"), w("wr"), w("wh"));
        let mut u = |name: &str| {
            store.register(
                &format!("{prefix}.{name}"),
                Tensor::glorot(hidden, hidden, rng),
            )
        };
        let (uz, ur, uh) = (u("uz"), u("ur"), u("uh"));
        let mut b =
            |name: &str| store.register(&format!("{prefix}.{name}"), Tensor::zeros(&[hidden]));
        let (bz, br, bh) = (b("bz"), b("br"), b("bh"));
        GruParams {
            wz,
            wr,
            wh,
            uz,
            ur,
            uh,
            bz,
            br,
            bh,
            hidden,
        }
    }
}

/// Runs the GRU recurrence from a zero initial hidden state.
///
/// Cell equations:
///   z_t = sigmoid(x_t Wz + h_{t-1} Uz + bz)
///   r_t = sigmoid(x_t Wr + h_{t-1} Ur + br)
///   c_t = tanh(x_t Wh + (r_t * h_{t-1}) Uh + bh)
///   h_t = z_t * h_{t-1} + (1 - z_t) * c_t
///
/// The backward direction processes the reversed sequence and
/// re-reverses its outputs, so output row t always corresponds to
/// input row t.
pub fn gru_forward(
    g: &mut Graph,
    store: &ParamStore,
    p: &GruParams,
    inputs: NodeId,
    direction: Direction,
) -> NodeId {
    let l = g.shape(inputs)[0];
    assert!(l >= 1, "gru_forward needs at least one position");
    let h = p.hidden;

    let wz = g.param(store, p.wz);
    let wr = g.param(store, p.wr);
    let wh = g.param(store, p.wh);
    let uz = g.param(store, p.uz);
    let ur = g.param(store, p.ur);
    let uh = g.param(store, p.uh);
    let bz = g.param(store, p.bz);
    let br = g.param(store, p.br);
    let bh = g.param(store, p.bh);

    // Input-side projections for the whole sequence at once.
    let xz = g.matmul(inputs, wz);
    let xr = g.matmul(inputs, wr);
    let xh = g.matmul(inputs, wh);

    let ones = g.constant(&[1, h], vec![1.0; h]);
    let mut hidden = g.zeros(&[1, h]);
    let mut outputs = vec![0usize; l];
    let order: Vec<usize> = match direction {
        Direction::Forward => (0..l).collect(),
        Direction::Backward => (0..l).rev().collect(),
    };
    for t in order {
        let gate = |g: &mut Graph, x_all: NodeId, u: NodeId, b: NodeId, hid: NodeId| {
            let xt = g.row(x_all, t);
            let hu = g.matmul(hid, u);
            let s = g.add(xt, hu);
            g.add_bias(s, b)
        };
        let z_pre = gate(g, xz, uz, bz, hidden);
        let z = g.sigmoid(z_pre);
        let r_pre = gate(g, xr, ur, br, hidden);
        let r = g.sigmoid(r_pre);

        let rh = g.mul(r, hidden);
        let xt = g.row(xh, t);
        let hu = g.matmul(rh, uh);
        let c_pre = g.add(xt, hu);
        let c_pre = g.add_bias(c_pre, bh);
        let cand = g.tanh(c_pre);

        let keep = g.mul(z, hidden);
        let gate_inv = g.sub(ones, z);
        let fresh = g.mul(gate_inv, cand);
        hidden = g.add(keep, fresh);
        outputs[t] = hidden;
    }
    g.stack_rows(&outputs)
}

/// Standard LSTM cell weights (input, forget, output gates plus the
/// cell candidate), for the BiLSTM ablation.
#[derive(Debug, Clone, Copy)]
pub struct LstmParams {
    pub wi: ParamId,
    pub wf: ParamId,
    pub wo: ParamId,
    pub wg: ParamId,
    pub ui: ParamId,
    pub uf: ParamId,
    pub uo: ParamId,
    pub ug: ParamId,
    pub bi: ParamId,
    pub bf: ParamId,
    pub bo: ParamId,
    pub bg: ParamId,
    pub hidden: usize,
}

impl LstmParams {
    pub fn init<R: Rng>(
        store: &mut ParamStore,
        prefix: &str,
        d_in: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Self {
        let mut w = |name: &str| {
            store.register(&format!("{prefix}.{name}"), Tensor::glorot(d_in, hidden, rng))
        };
        let (wi, wf, wo, wg) = (w("wi"), w("wf"), w("wo"), w("wg"));
        let mut u = |name: &str| {
            store.register(
                &format!("{prefix}.{name}"),
                Tensor::glorot(hidden, hidden, rng),
            )
        };
        let (ui, uf, uo, ug) = (u("ui"), u("uf"), u("uo"), u("ug"));
        let bi = store.register(&format!("{prefix}.bi"), Tensor::zeros(&[hidden]));
        // Forget-gate bias starts at 1 so early training keeps state.
        let bf = store.register(
            &format!("{prefix}.bf"),
            Tensor::new(&[hidden], vec![1.0; hidden]),
        );
        let bo = store.register(&format!("{prefix}.bo"), Tensor::zeros(&[hidden]));
        let bg = store.register(&format!("{prefix}.bg"), Tensor::zeros(&[hidden]));
        LstmParams {
            wi,
            wf,
            wo,
            wg,
            ui,
            uf,
            uo,
            ug,
            bi,
            bf,
            bo,
            bg,
            hidden,
        }
    }
}

pub fn lstm_forward(
    g: &mut Graph,
    store: &ParamStore,
    p: &LstmParams,
    inputs: NodeId,
    direction: Direction,
) -> NodeId {
    let l = g.shape(inputs)[0];
    assert!(l >= 1, "lstm_forward needs at least one position");
    let h = p.hidden;

    let leaves: Vec<NodeId> = [
        p.wi, p.wf, p.wo, p.wg, p.ui, p.uf, p.uo, p.ug, p.bi, p.bf, p.bo, p.bg,
    ]
    .iter()
    .map(|&id| g.param(store, id))
    .collect();
    let (wi, wf, wo, wg) = (leaves[0], leaves[1], leaves[2], leaves[3]);
    let (ui, uf, uo, ug) = (leaves[4], leaves[5], leaves[6], leaves[7]);
    let (bi, bf, bo, bg) = (leaves[8], leaves[9], leaves[10], leaves[11]);

    let xi = g.matmul(inputs, wi);
    let xf = g.matmul(inputs, wf);
    let xo = g.matmul(inputs, wo);
    let xg = g.matmul(inputs, wg);

    let mut hidden = g.zeros(&[1, h]);
    let mut cell = g.zeros(&[1, h]);
    let mut outputs = vec![0usize; l];
    let order: Vec<usize> = match direction {
        Direction::Forward => (0..l).collect(),
        Direction::Backward => (0..l).rev().collect(),
    };
    for t in order {
        let gate = |g: &mut Graph, x_all: NodeId, u: NodeId, b: NodeId, hid: NodeId| {
            let xt = g.row(x_all, t);
            let hu = g.matmul(hid, u);
            let s = g.add(xt, hu);
            g.add_bias(s, b)
        };
        let i_pre = gate(g, xi, ui, bi, hidden);
        let i = g.sigmoid(i_pre);
        let f_pre = gate(g, xf, uf, bf, hidden);
        let f = g.sigmoid(f_pre);
        let o_pre = gate(g, xo, uo, bo, hidden);
        let o = g.sigmoid(o_pre);
        let c_pre = gate(g, xg, ug, bg, hidden);
        let cand = g.tanh(c_pre);

        let keep = g.mul(f, cell);
        let write = g.mul(i, cand);
        cell = g.add(keep, write);
        let ct = g.tanh(cell);
        hidden = g.mul(o, ct);
        outputs[t] = hidden;
    }
    g.stack_rows(&outputs)
}

/// Kernel and bias of one same-padded 1-D convolution.
#[derive(Debug, Clone, Copy)]
pub struct Conv1dParams {
    pub kernels: ParamId,
    pub bias: ParamId,
}

impl Conv1dParams {
    pub fn init<R: Rng>(
        store: &mut ParamStore,
        prefix: &str,
        k: usize,
        d_in: usize,
        d_out: usize,
        rng: &mut R,
    ) -> Self {
        let limit = (6.0 / (k * d_in + d_out) as f64).sqrt();
        let kernels = store.register(
            &format!("{prefix}.kernels"),
            Tensor::uniform(&[k, d_in, d_out], -limit, limit, rng),
        );
        let bias = store.register(&format!("{prefix}.bias"), Tensor::zeros(&[d_out]));
        Conv1dParams { kernels, bias }
    }
}

fn conv_apply(g: &mut Graph, store: &ParamStore, p: &Conv1dParams, x: NodeId) -> NodeId {
    let kernels = g.param(store, p.kernels);
    let bias = g.param(store, p.bias);
    g.conv1d_same(x, kernels, bias)
}

/// All four intermediate sequences of the Conv-GRU character encoder.
#[derive(Debug, Clone, Copy)]
pub struct ConvGruTrace {
    /// Input character embeddings, `[l, emb]`.
    pub c: NodeId,
    /// GRU output sequence, `[l, gru_dim]`.
    pub x: NodeId,
    /// Convolution over the GRU outputs, `[l, filters]`.
    pub y: NodeId,
    /// Final per-character representation `x (+) y`, `[l, gru_dim + filters]`.
    pub z: NodeId,
}

#[derive(Debug, Clone, Copy)]
pub struct ConvGruParams {
    pub gru: GruParams,
    pub conv: Conv1dParams,
}

impl ConvGruParams {
    pub fn init<R: Rng>(
        store: &mut ParamStore,
        prefix: &str,
        d_in: usize,
        cfg: &EncoderConfig,
        rng: &mut R,
    ) -> Self {
        let gru = GruParams::init(store, &format!("{prefix}.gru"), d_in, cfg.gru_dim, rng);
        let conv = Conv1dParams::init(
            store,
            &format!("{prefix}.conv"),
            cfg.conv_kernel,
            cfg.gru_dim,
            cfg.convgru_filters,
            rng,
        );
        ConvGruParams { gru, conv }
    }
}

/// Conv-GRU character encoder: a left-to-right GRU over the character
/// embeddings, a same-padded convolution over its outputs, and the
/// per-position concatenation of the two.
pub fn conv_gru_encode(
    g: &mut Graph,
    store: &ParamStore,
    p: &ConvGruParams,
    char_embs: NodeId,
) -> ConvGruTrace {
    let x = gru_forward(g, store, &p.gru, char_embs, Direction::Forward);
    let y = conv_apply(g, store, &p.conv, x);
    let z = g.concat(&[x, y]);
    ConvGruTrace {
        c: char_embs,
        x,
        y,
        z,
    }
}

/// Radical stream: same-padded convolution over the radical embedding
/// sequence followed by tanh. One feature vector per character.
pub fn radical_encode(
    g: &mut Graph,
    store: &ParamStore,
    p: &Conv1dParams,
    radical_embs: NodeId,
) -> NodeId {
    assert!(g.shape(radical_embs)[0] >= 1, "radical_encode needs l >= 1");
    let conv = conv_apply(g, store, p, radical_embs);
    g.tanh(conv)
}

/// Character-stream parameters for whichever encoder the config picks.
#[derive(Debug, Clone, Copy)]
pub enum CharEncoderParams {
    ConvGru(ConvGruParams),
    CnnOnly(Conv1dParams),
    Bilstm { fwd: LstmParams, bwd: LstmParams },
}

impl CharEncoderParams {
    pub fn init<R: Rng>(
        store: &mut ParamStore,
        prefix: &str,
        emb_dim: usize,
        cfg: &EncoderConfig,
        rng: &mut R,
    ) -> Self {
        match cfg.char_mode {
            CharMode::ConvGru => {
                CharEncoderParams::ConvGru(ConvGruParams::init(store, prefix, emb_dim, cfg, rng))
            }
            CharMode::CnnOnly => CharEncoderParams::CnnOnly(Conv1dParams::init(
                store,
                &format!("{prefix}.cnn"),
                cfg.conv_kernel,
                emb_dim,
                cfg.convgru_filters,
                rng,
            )),
            CharMode::BilstmOnly => CharEncoderParams::Bilstm {
                fwd: LstmParams::init(
                    store,
                    &format!("{prefix}.lstm_fwd"),
                    emb_dim,
                    cfg.gru_dim,
                    rng,
                ),
                bwd: LstmParams::init(
                    store,
                    &format!("{prefix}.lstm_bwd"),
                    emb_dim,
                    cfg.gru_dim,
                    rng,
                ),
            },
        }
    }
}

/// Encodes the character stream under the configured mode.
pub fn char_encode_ablation(
    g: &mut Graph,
    store: &ParamStore,
    params: &CharEncoderParams,
    char_embs: NodeId,
) -> NodeId {
    match params {
        CharEncoderParams::ConvGru(p) => conv_gru_encode(g, store, p, char_embs).z,
        CharEncoderParams::CnnOnly(p) => {
            let conv = conv_apply(g, store, p, char_embs);
            g.tanh(conv)
        }
        CharEncoderParams::Bilstm { fwd, bwd } => {
            let f = lstm_forward(g, store, fwd, char_embs, Direction::Forward);
            let b = lstm_forward(g, store, bwd, char_embs, Direction::Backward);
            g.concat(&[f, b])
        }
    }
}

/// Concatenates the enabled streams per position, in the fixed order
/// radical, character, word. Each stream must be present exactly when
/// the config enables it.
pub fn compose_repr(
    g: &mut Graph,
    radical: Option<NodeId>,
    char_stream: NodeId,
    word: Option<NodeId>,
    cfg: &EncoderConfig,
) -> NodeId {
    assert_eq!(
        radical.is_some(),
        cfg.use_radical,
        "radical stream does not match use_radical"
    );
    assert_eq!(
        word.is_some(),
        cfg.use_word,
        "word stream does not match use_word"
    );
    let l = g.shape(char_stream)[0];
    let mut parts = Vec::with_capacity(3);
    if let Some(r) = radical {
        assert_eq!(g.shape(r)[0], l, "radical stream length mismatch");
        parts.push(r);
    }
    parts.push(char_stream);
    if let Some(w) = word {
        assert_eq!(g.shape(w)[0], l, "word stream length mismatch");
        parts.push(w);
    }
    g.concat(&parts)
}
