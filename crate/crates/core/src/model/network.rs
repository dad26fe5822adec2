use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Ablation, TrainConfig, WindowInputs};
use crate::nn::{
    gru_gate, GruParams, Init, LstmParams, ParamId, ParamStore, Tape, Tensor, Var, LEAKY_SLOPE,
};
use crate::{Error, Result};

/// Shape and switches of a network; stored next to its checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub input_dim: usize,
    pub hidden: usize,
    pub t_h: u32,
    pub keep: f64,
    pub ablation: Ablation,
    pub self_edge: bool,
}

impl ModelSpec {
    pub fn from_config(config: &TrainConfig, input_dim: usize) -> Self {
        ModelSpec {
            input_dim,
            hidden: config.hidden,
            t_h: config.t_h,
            keep: config.keep,
            ablation: config.ablation,
            self_edge: config.self_edge,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct PcmParams {
    lstm: LstmParams,
    aux_w: ParamId,
    aux_b: ParamId,
    fc_w: ParamId,
    fc_b: ParamId,
    att_w: ParamId,
    att_v: ParamId,
    w_h: ParamId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct MetParams {
    proj_w: ParamId,
    proj_b: ParamId,
    msg_b: ParamId,
    gru: GruParams,
}

/// Parameters of the full network. Every branch is registered whatever the
/// ablation, so checkpoints of all variants share one layout; parameter names
/// are prefixed `pcm.`, `met.` or `readout.`.
#[derive(Debug, Clone, PartialEq)]
pub struct GmeModel {
    pub spec: ModelSpec,
    pub store: ParamStore,
    pcm: PcmParams,
    met: MetParams,
    out_w: ParamId,
    out_b: ParamId,
}

/// Competition-module results for one window.
#[derive(Debug, Clone, Copy)]
pub struct PcmOutput {
    /// `G x H` aggregated competitiveness states.
    pub state: Var,
    /// `C x H` final LSTM states of the competitors.
    pub competitor_states: Option<Var>,
    /// `C x 1` auxiliary next-day funding predictions.
    pub aux_pred: Option<Var>,
    /// `G x (C + 1)` attention weights; the last column is the self-edge
    /// (all zero when the self-edge is disabled).
    pub attention: Var,
}

/// Evolution-module results for one window.
#[derive(Debug, Clone, Copy)]
pub struct MetOutput {
    /// `G x H` evolved target states.
    pub state: Var,
    /// Final states of every node taking part (tree nodes, or targets for
    /// the tree-free variant).
    pub node_states: Var,
}

#[derive(Debug, Clone, Copy)]
pub struct Forward {
    /// `G x 1` nonnegative predictions.
    pub pred: Var,
    pub pcm: Option<PcmOutput>,
    pub met: Option<MetOutput>,
    /// Auxiliary predictions and their targets, when both exist.
    pub aux: Option<(Var, Var)>,
}

impl GmeModel {
    /// Registers all parameters. `output_bias` seeds the readout bias.
    pub fn new(spec: ModelSpec, output_bias: f64, rng: &mut impl Rng) -> Result<Self> {
        let (m, h) = (spec.input_dim, spec.hidden);
        let mut s = ParamStore::new();
        let u = Init::UniformFanIn;
        let pcm = PcmParams {
            lstm: LstmParams::new(&mut s, "pcm.lstm", 1, h, rng)?,
            aux_w: s.add("pcm.aux.w", 1, h, u, rng)?,
            aux_b: s.add("pcm.aux.b", 1, 1, Init::Zeros, rng)?,
            fc_w: s.add("pcm.fc.w", h, m, u, rng)?,
            fc_b: s.add("pcm.fc.b", 1, h, Init::Zeros, rng)?,
            att_w: s.add("pcm.att.w", h, m, u, rng)?,
            att_v: s.add("pcm.att.v", 1, 2 * h, u, rng)?,
            w_h: s.add("pcm.w_h", h, h, u, rng)?,
        };
        let met = MetParams {
            proj_w: s.add("met.proj.w", h, m + 1, u, rng)?,
            proj_b: s.add("met.proj.b", 1, h, Init::Zeros, rng)?,
            msg_b: s.add("met.msg.b", 1, h, Init::Zeros, rng)?,
            gru: GruParams::new(&mut s, "met.gru", h, rng)?,
        };
        let out_w = s.add("readout.w", 1, h, u, rng)?;
        let out_b = s.add("readout.b", 1, 1, Init::Constant(output_bias), rng)?;
        Ok(GmeModel {
            spec,
            store: s,
            pcm,
            met,
            out_w,
            out_b,
        })
    }

    /// Rebuilds a model from its spec and a checkpointed store, checking
    /// that every parameter is present with the expected shape.
    pub fn from_store(spec: ModelSpec, store: ParamStore) -> Result<Self> {
        let mut model = GmeModel::new(spec, 0.0, &mut ChaCha8Rng::seed_from_u64(0))?;
        if store.len() != model.store.len() {
            return Err(Error::Checkpoint(format!(
                "{} parameters, expected {}",
                store.len(),
                model.store.len()
            )));
        }
        for id in model.store.ids().collect::<Vec<_>>() {
            let name = model.store.get(id).name.clone();
            let src = store
                .id(&name)
                .ok_or_else(|| Error::Checkpoint(format!("missing parameter {name}")))?;
            let value = store.value(src);
            if value.shape() != model.store.value(id).shape() {
                return Err(Error::Checkpoint(format!(
                    "{name}: shape {:?}, expected {:?}",
                    value.shape(),
                    model.store.value(id).shape()
                )));
            }
            *model.store.value_mut(id) = value.clone();
        }
        model.store.set_step(store.step());
        Ok(model)
    }

    fn check(&self, inputs: &WindowInputs) -> Result<()> {
        if inputs.feature_dim() != self.spec.input_dim {
            return Err(Error::Shape(format!(
                "window features have {} dims, model expects {}",
                inputs.feature_dim(),
                self.spec.input_dim
            )));
        }
        if inputs.history_days != self.spec.t_h {
            return Err(Error::Invalid(format!(
                "window built with {} history days, model unrolls {}",
                inputs.history_days, self.spec.t_h
            )));
        }
        if inputs.n_targets() == 0 {
            return Err(Error::Empty("target set"));
        }
        Ok(())
    }

    /// Competition module: LSTM over each competitor's hourly series,
    /// static-feature attention from targets to competitors (plus the
    /// optional self-edge), and the weighted sum of projected states.
    pub fn pcm_forward(&self, tape: &mut Tape, inputs: &WindowInputs) -> Result<PcmOutput> {
        self.check(inputs)?;
        let s = &self.store;
        let p = &self.pcm;
        let (g, c, h) = (inputs.n_targets(), inputs.n_competitors(), self.spec.hidden);

        let x_t = tape.constant(inputs.target_x.clone());
        let att_w = tape.param(s, p.att_w);
        let att_v = tape.param(s, p.att_v);
        let w_h = tape.param(s, p.w_h);
        let v_target = tape.slice_cols(att_v, 0, h)?;
        let v_other = tape.slice_cols(att_v, h, h)?;
        let proj_t = tape.matmul_t(x_t, att_w)?;
        let score_t = tape.matmul_t(proj_t, v_target)?;

        let mut logit_blocks = Vec::new();
        let mut mask = Vec::with_capacity(g * (c + 1));
        let mut competitor = None;
        if c > 0 {
            let x_c = tape.constant(inputs.competitor_x.clone());
            let proj_c = tape.matmul_t(x_c, att_w)?;
            let score_c = tape.matmul_t(v_other, proj_c)?;
            logit_blocks.push(tape.outer_add(score_t, score_c)?);

            // oldest hour first
            let steps = (0..inputs.competitor_series.cols())
                .rev()
                .map(|k| {
                    let col = (0..c).map(|i| inputs.competitor_series.get(i, k)).collect();
                    tape.constant(Tensor::column(col))
                })
                .collect::<Vec<_>>();
            let hc = p.lstm.run(tape, s, &steps)?;
            let aux_w = tape.param(s, p.aux_w);
            let aux_b = tape.param(s, p.aux_b);
            let aux = tape.linear(hc, aux_w, aux_b)?;
            competitor = Some((hc, aux));
        }
        let self_score = tape.matmul_t(proj_t, v_other)?;
        logit_blocks.push(tape.add(score_t, self_score)?);
        for row in 0..g {
            mask.extend_from_slice(&inputs.adjacency[row * c..(row + 1) * c]);
            mask.push(self.spec.self_edge);
        }
        let logits = tape.concat_cols(&logit_blocks)?;
        let logits = tape.leaky_relu(logits, LEAKY_SLOPE);
        let alpha = tape.masked_softmax(logits, mask)?;

        let alpha_self = tape.slice_cols(alpha, c, 1)?;
        let fc_w = tape.param(s, p.fc_w);
        let fc_b = tape.param(s, p.fc_b);
        let content = tape.linear(x_t, fc_w, fc_b)?;
        let content = tape.matmul_t(content, w_h)?;
        let mut state = tape.mul_col(content, alpha_self)?;
        if let Some((hc, _)) = competitor {
            let alpha_c = tape.slice_cols(alpha, 0, c)?;
            let values = tape.matmul_t(hc, w_h)?;
            let pooled = tape.matmul(alpha_c, values)?;
            state = tape.add(state, pooled)?;
        }
        Ok(PcmOutput {
            state,
            competitor_states: competitor.map(|(hc, _)| hc),
            aux_pred: competitor.map(|(_, a)| a),
            attention: alpha,
        })
    }

    fn project_states(&self, tape: &mut Tape, x: &Tensor) -> Result<Var> {
        let x = tape.constant(x.clone());
        let w = tape.param(&self.store, self.met.proj_w);
        let b = tape.param(&self.store, self.met.proj_b);
        tape.linear(x, w, b)
    }

    fn gated(
        &self,
        tape: &mut Tape,
        messages: Var,
        h: Var,
        training: bool,
        rng: &mut impl Rng,
    ) -> Result<Var> {
        let b = tape.param(&self.store, self.met.msg_b);
        let a = tape.add_row(messages, b)?;
        let h = gru_gate(tape, &self.store, &self.met.gru, a, h)?;
        tape.dropout(h, self.spec.keep, training, rng)
    }

    /// Evolution module: projected `[x ∥ r]` states, then `t_h - 1` rounds in
    /// which every node sums its children's states and applies the gated
    /// update. Dropout follows each gated update during training.
    pub fn met_forward(
        &self,
        tape: &mut Tape,
        inputs: &WindowInputs,
        training: bool,
        rng: &mut impl Rng,
    ) -> Result<MetOutput> {
        self.check(inputs)?;
        let mut h = self.project_states(tape, &inputs.tree_x)?;
        for _ in 2..=self.spec.t_h {
            let messages = tape.segment_sum(h, inputs.tree_children.clone())?;
            h = self.gated(tape, messages, h, training, rng)?;
        }
        let state = tape.gather_rows(h, (0..inputs.n_targets()).collect())?;
        Ok(MetOutput {
            state,
            node_states: h,
        })
    }

    /// Tree-free evolution: each target receives the sum of all observable
    /// projects' projected states in a single gated update.
    pub fn no_tree_forward(
        &self,
        tape: &mut Tape,
        inputs: &WindowInputs,
        training: bool,
        rng: &mut impl Rng,
    ) -> Result<MetOutput> {
        self.check(inputs)?;
        let g = inputs.n_targets();
        let roots = Tensor::from_vec(
            g,
            inputs.tree_x.cols(),
            inputs.tree_x.data()[..g * inputs.tree_x.cols()].to_vec(),
        )?;
        let h = self.project_states(tape, &roots)?;
        let history = self.project_states(tape, &inputs.history_x)?;
        let all: Vec<usize> = (0..inputs.history_x.rows()).collect();
        let messages = tape.segment_sum(history, vec![all; g])?;
        let state = self.gated(tape, messages, h, training, rng)?;
        Ok(MetOutput {
            state,
            node_states: state,
        })
    }

    /// `relu(W_f (H^c + H^e) + b_f)`; a missing branch counts as zero.
    pub fn readout(&self, tape: &mut Tape, pcm: Option<Var>, met: Option<Var>) -> Result<Var> {
        let combined = match (pcm, met) {
            (Some(a), Some(b)) => tape.add(a, b)?,
            (Some(a), None) | (None, Some(a)) => a,
            (None, None) => return Err(Error::Invalid("readout needs at least one branch".into())),
        };
        let w = tape.param(&self.store, self.out_w);
        let b = tape.param(&self.store, self.out_b);
        let y = tape.linear(combined, w, b)?;
        Ok(tape.relu(y))
    }

    /// Full forward pass for the configured ablation.
    pub fn forward(
        &self,
        tape: &mut Tape,
        inputs: &WindowInputs,
        training: bool,
        rng: &mut impl Rng,
    ) -> Result<Forward> {
        let ablation = self.spec.ablation;
        let pcm = if ablation.uses_competition() {
            Some(self.pcm_forward(tape, inputs)?)
        } else {
            None
        };
        let met = match ablation {
            Ablation::GmeC => None,
            Ablation::NoTree | Ablation::GmeHNoTree => {
                Some(self.no_tree_forward(tape, inputs, training, rng)?)
            }
            Ablation::Full | Ablation::GmeH => Some(self.met_forward(tape, inputs, training, rng)?),
        };
        let pred = self.readout(tape, pcm.map(|o| o.state), met.map(|o| o.state))?;
        let aux = match (pcm.and_then(|o| o.aux_pred), &inputs.aux_targets) {
            (Some(a), Some(t)) => Some((a, tape.constant(Tensor::column(t.clone())))),
            _ => None,
        };
        Ok(Forward {
            pred,
            pcm,
            met,
            aux,
        })
    }

    /// Builds the joint training loss for one window.
    pub fn window_loss(
        &self,
        tape: &mut Tape,
        inputs: &WindowInputs,
        eta: f64,
        training: bool,
        rng: &mut impl Rng,
    ) -> Result<Var> {
        let fwd = self.forward(tape, inputs, training, rng)?;
        let labels = tape.constant(Tensor::column(inputs.labels()?.to_vec()));
        joint_loss(tape, fwd.pred, labels, fwd.aux, eta)
    }

    /// Predictions for one window in evaluation mode.
    pub fn predict(&self, inputs: &WindowInputs) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        // dropout is off, so the generator is never drawn from
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let fwd = self.forward(&mut tape, inputs, false, &mut rng)?;
        Ok(tape.value(fwd.pred).data().to_vec())
    }

    /// Ids of parameters belonging to one branch (`"pcm"`, `"met"` or
    /// `"readout"`).
    pub fn branch_params(&self, branch: &str) -> Vec<ParamId> {
        let prefix = format!("{branch}.");
        self.store
            .ids()
            .filter(|&id| self.store.get(id).name.starts_with(&prefix))
            .collect()
    }
}

/// `eta * MAE(pred, labels) + (1 - eta) * MAE(aux_pred, aux_target)`, or the
/// target term alone when there are no auxiliary targets.
pub fn joint_loss(
    tape: &mut Tape,
    pred: Var,
    labels: Var,
    aux: Option<(Var, Var)>,
    eta: f64,
) -> Result<Var> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::Invalid(format!("eta {eta} outside [0, 1]")));
    }
    let target_loss = tape.mae(pred, labels)?;
    match aux {
        Some((a, t)) if !tape.value(a).is_empty() => {
            let aux_loss = tape.mae(a, t)?;
            let lp = tape.scale(target_loss, eta);
            let ll = tape.scale(aux_loss, 1.0 - eta);
            tape.add(lp, ll)
        }
        _ => Ok(target_loss),
    }
}
