//! Parameters, forward passes, decoding and imitation training.

use std::collections::HashSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::attention::{causal_mask, multi_head, positional_encoding, HeadVars};
use super::tokens::{state_features, tokenize_env, ActionToken, TokenSeq, ENV_FRAMING, STATE_DIM};
use super::{PlannerConfig, TransformerError, LN_EPS};
use crate::gridworld::{validate_path, Action, Cell, GridMap, Path};
use crate::tensor::{init, Adam, Bound, Checkpoint, ParamId, ParamSet, Tape, Var};

/// How `greedy_decode` restricts the argmax.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DecodeMode {
    /// Only `BOS` and `PAD` are excluded.
    Free,
    /// Additionally excludes waits, moves off the map, into walls or onto
    /// already visited cells; `EOS` is allowed only at the goal, where it is forced.
    #[default]
    Constrained,
}

#[derive(Debug, Clone)]
struct AttnIds {
    heads: Vec<[ParamId; 3]>,
    wo: ParamId,
}

#[derive(Debug, Clone)]
struct NormIds {
    gain: ParamId,
    bias: ParamId,
}

#[derive(Debug, Clone)]
struct FfIds {
    w1: ParamId,
    b1: ParamId,
    w2: ParamId,
    b2: ParamId,
}

#[derive(Debug, Clone)]
struct EncLayer {
    attn: AttnIds,
    ln1: NormIds,
    ff: FfIds,
    ln2: NormIds,
}

#[derive(Debug, Clone)]
struct DecLayer {
    self_attn: AttnIds,
    ln1: NormIds,
    cross: AttnIds,
    ln2: NormIds,
    ff: FfIds,
    ln3: NormIds,
}

#[derive(Debug, Clone)]
pub struct TransformerModel {
    pub config: PlannerConfig,
    pub params: ParamSet,
    env_emb: ParamId,
    act_emb: ParamId,
    state_w: ParamId,
    state_b: ParamId,
    enc: Vec<EncLayer>,
    dec: Vec<DecLayer>,
    out_w: ParamId,
    out_b: ParamId,
}

struct Builder<'a> {
    params: &'a mut ParamSet,
    rng: ChaCha8Rng,
    cfg: PlannerConfig,
}

impl Builder<'_> {
    fn uniform(&mut self, name: String, r: usize, c: usize) -> ParamId {
        let t = init::uniform(r, c, &mut self.rng);
        self.params.add(name, t)
    }

    fn attn(&mut self, prefix: &str) -> AttnIds {
        let (d, dk) = (self.cfg.d_model, self.cfg.d_k());
        let heads = (0..self.cfg.heads)
            .map(|i| ["wq", "wk", "wv"].map(|w| self.uniform(format!("{prefix}.h{i}.{w}"), d, dk)))
            .collect();
        let wo = self.uniform(format!("{prefix}.wo"), self.cfg.heads * dk, d);
        AttnIds { heads, wo }
    }

    fn norm(&mut self, prefix: &str) -> NormIds {
        let d = self.cfg.d_model;
        NormIds {
            gain: self.params.add(format!("{prefix}.gain"), init::ones(1, d)),
            bias: self.params.add(format!("{prefix}.bias"), init::zeros(1, d)),
        }
    }

    fn ff(&mut self, prefix: &str) -> FfIds {
        let (d, f) = (self.cfg.d_model, self.cfg.d_ff);
        FfIds {
            w1: self.uniform(format!("{prefix}.w1"), d, f),
            b1: self.params.add(format!("{prefix}.b1"), init::zeros(1, f)),
            w2: self.uniform(format!("{prefix}.w2"), f, d),
            b2: self.params.add(format!("{prefix}.b2"), init::zeros(1, d)),
        }
    }
}

impl TransformerModel {
    pub fn new(config: PlannerConfig, seed: u64) -> Result<Self, TransformerError> {
        config.validate()?;
        let mut params = ParamSet::new();
        let mut b = Builder { params: &mut params, rng: ChaCha8Rng::seed_from_u64(seed), cfg: config };
        let d = config.d_model;
        let env_emb = b.uniform("tf.env_emb".into(), PlannerConfig::ENV_VOCAB, d);
        let act_emb = b.uniform("tf.act_emb".into(), PlannerConfig::ACTION_VOCAB, d);
        let state_w = b.uniform("tf.state.w".into(), STATE_DIM, d);
        let state_b = b.params.add("tf.state.b", init::zeros(1, d));
        let enc = (0..config.layers)
            .map(|l| EncLayer {
                attn: b.attn(&format!("tf.enc{l}.attn")),
                ln1: b.norm(&format!("tf.enc{l}.ln1")),
                ff: b.ff(&format!("tf.enc{l}.ff")),
                ln2: b.norm(&format!("tf.enc{l}.ln2")),
            })
            .collect();
        let dec = (0..config.layers)
            .map(|l| DecLayer {
                self_attn: b.attn(&format!("tf.dec{l}.self")),
                ln1: b.norm(&format!("tf.dec{l}.ln1")),
                cross: b.attn(&format!("tf.dec{l}.cross")),
                ln2: b.norm(&format!("tf.dec{l}.ln2")),
                ff: b.ff(&format!("tf.dec{l}.ff")),
                ln3: b.norm(&format!("tf.dec{l}.ln3")),
            })
            .collect();
        let out_w = b.uniform("tf.out.w".into(), d, PlannerConfig::ACTION_VOCAB);
        let out_b = b.params.add("tf.out.b", init::zeros(1, PlannerConfig::ACTION_VOCAB));
        Ok(Self { config, params, env_emb, act_emb, state_w, state_b, enc, dec, out_w, out_b })
    }

    pub fn param_count(&self) -> usize {
        self.params.count()
    }

    fn attn(tape: &mut Tape, p: &Bound, ids: &AttnIds, xq: Var, xkv: Var, mask: Option<&[bool]>) -> Result<Var, TransformerError> {
        let heads: Vec<HeadVars> = ids.heads.iter().map(|[q, k, v]| HeadVars { wq: p[*q], wk: p[*k], wv: p[*v] }).collect();
        Ok(multi_head(tape, xq, xkv, &heads, p[ids.wo], mask)?)
    }

    /// `LayerNorm(x + sublayer)` with learned gain and bias.
    fn add_norm(tape: &mut Tape, p: &Bound, ids: &NormIds, x: Var, sub: Var) -> Result<Var, TransformerError> {
        let s = tape.add(x, sub)?;
        let n = tape.layer_norm_rows(s, LN_EPS);
        let n = tape.mul_row(n, p[ids.gain])?;
        Ok(tape.add_row(n, p[ids.bias])?)
    }

    fn ff(tape: &mut Tape, p: &Bound, ids: &FfIds, x: Var) -> Result<Var, TransformerError> {
        let h = tape.matmul(x, p[ids.w1])?;
        let h = tape.add_row(h, p[ids.b1])?;
        let h = tape.relu(h);
        let o = tape.matmul(h, p[ids.w2])?;
        Ok(tape.add_row(o, p[ids.b2])?)
    }

    fn check_env(seq: &TokenSeq) -> Result<(), TransformerError> {
        let expected = seq.width * seq.height + ENV_FRAMING;
        if seq.env.len() != expected {
            return Err(TransformerError::EnvLength { expected, found: seq.env.len() });
        }
        Ok(())
    }

    fn encode_on_tape(&self, tape: &mut Tape, p: &Bound, seq: &TokenSeq) -> Result<Var, TransformerError> {
        Self::check_env(seq)?;
        let n = seq.env.len();
        let x = tape.gather_rows(p[self.env_emb], &seq.env_ids())?;
        let mut h = tape.add_const(x, &positional_encoding(n, self.config.d_model))?;
        for l in &self.enc {
            let a = Self::attn(tape, p, &l.attn, h, h, None)?;
            h = Self::add_norm(tape, p, &l.ln1, h, a)?;
            let f = Self::ff(tape, p, &l.ff, h)?;
            h = Self::add_norm(tape, p, &l.ln2, h, f)?;
        }
        Ok(h)
    }

    /// Decoder logits (`inputs.len() x ACTION_VOCAB`) given encoder memory.
    fn decode_on_tape(&self, tape: &mut Tape, p: &Bound, seq: &TokenSeq, memory: Var, inputs: &[ActionToken]) -> Result<Var, TransformerError> {
        let t = inputs.len();
        let d = self.config.d_model;
        let ids: Vec<usize> = inputs.iter().map(|a| a.id()).collect();
        let x = tape.gather_rows(p[self.act_emb], &ids)?;
        let x = tape.add_const(x, &positional_encoding(t, d))?;
        // Position after replaying inputs[..=i]; BOS itself does not move.
        let positions = seq.positions(inputs);
        let feats: Vec<f64> = positions[1..].iter().flat_map(|c| state_features(seq, *c)).collect();
        let feats = tape.constant(t, STATE_DIM, feats)?;
        let s = tape.matmul(feats, p[self.state_w])?;
        let s = tape.add_row(s, p[self.state_b])?;
        let mut h = tape.add(x, s)?;
        let mask = causal_mask(t);
        for l in &self.dec {
            let a = Self::attn(tape, p, &l.self_attn, h, h, Some(&mask))?;
            h = Self::add_norm(tape, p, &l.ln1, h, a)?;
            let c = Self::attn(tape, p, &l.cross, h, memory, None)?;
            h = Self::add_norm(tape, p, &l.ln2, h, c)?;
            let f = Self::ff(tape, p, &l.ff, h)?;
            h = Self::add_norm(tape, p, &l.ln3, h, f)?;
        }
        let logits = tape.matmul(h, p[self.out_w])?;
        Ok(tape.add_row(logits, p[self.out_b])?)
    }

    /// Encoder memory, row-major `env_len x d_model`.
    pub fn encode(&self, seq: &TokenSeq) -> Result<Vec<f64>, TransformerError> {
        let mut tape = Tape::new();
        let p = self.params.bind(&mut tape)?;
        let m = self.encode_on_tape(&mut tape, &p, seq)?;
        Ok(tape.value(m).to_vec())
    }

    /// Decoder logits for every position of `inputs` (which should start with `BOS`).
    pub fn logits(&self, seq: &TokenSeq, memory: &[f64], inputs: &[ActionToken]) -> Result<Vec<f64>, TransformerError> {
        let mut tape = Tape::new();
        let p = self.params.bind(&mut tape)?;
        let mem = tape.constant(seq.env.len(), self.config.d_model, memory.to_vec())?;
        let l = self.decode_on_tape(&mut tape, &p, seq, mem, inputs)?;
        Ok(tape.value(l).to_vec())
    }

    /// Argmax decoding from `BOS`. Returns the emitted tokens, ending with
    /// `EOS` if one was produced within `max_len` steps.
    pub fn greedy_decode(&self, seq: &TokenSeq, memory: &[f64], max_len: usize, mode: DecodeMode) -> Result<Vec<ActionToken>, TransformerError> {
        let v = PlannerConfig::ACTION_VOCAB;
        let goal = seq.goal();
        let mut inputs = vec![ActionToken::Bos];
        let mut pos = seq.positions(&[])[0];
        let mut visited = HashSet::from([pos]);
        let mut out = Vec::new();
        for _ in 0..max_len {
            let logits = self.logits(seq, memory, &inputs)?;
            let last = &logits[logits.len() - v..];
            let allowed = |tok: ActionToken| match (tok, mode) {
                (ActionToken::Bos | ActionToken::Pad, _) => false,
                (_, DecodeMode::Free) => true,
                (ActionToken::Eos, DecodeMode::Constrained) => Some(pos) == goal,
                (_, DecodeMode::Constrained) if Some(pos) == goal => false,
                (ActionToken::Wait, DecodeMode::Constrained) => false,
                (tok, DecodeMode::Constrained) => tok
                    .action()
                    .and_then(|a| pos.step(a))
                    .is_some_and(|n| seq.is_open(n) && !visited.contains(&n)),
            };
            let best = ActionToken::ALL
                .iter()
                .filter(|t| allowed(**t))
                .max_by(|a, b| last[a.id()].total_cmp(&last[b.id()]).then(b.id().cmp(&a.id())));
            let Some(&tok) = best else { break };
            out.push(tok);
            if tok == ActionToken::Eos {
                break;
            }
            if let Some(n) = tok.action().and_then(|a| pos.step(a)).filter(|n| seq.is_open(*n)) {
                pos = n;
                visited.insert(n);
            }
            inputs.push(tok);
        }
        Ok(out)
    }

    /// Tokenizes, encodes and decodes (constrained); returns the path if the
    /// decoded actions form a valid route ending at `goal`.
    pub fn plan(&self, map: &GridMap, start: Cell, goal: Cell) -> Result<Option<Path>, TransformerError> {
        self.plan_with(map, start, goal, DecodeMode::Constrained)
    }

    pub fn plan_with(&self, map: &GridMap, start: Cell, goal: Cell, mode: DecodeMode) -> Result<Option<Path>, TransformerError> {
        let seq = tokenize_env(map, start, goal);
        let memory = self.encode(&seq)?;
        let tokens = self.greedy_decode(&seq, &memory, self.config.max_len, mode)?;
        if tokens.last() != Some(&ActionToken::Eos) {
            return Ok(None);
        }
        let actions: Option<Vec<Action>> = tokens[..tokens.len() - 1].iter().map(|t| t.action()).collect();
        Ok(actions
            .and_then(|a| Path::from_actions(start, &a))
            .filter(|p| validate_path(map, p, start, goal)))
    }

    /// Mean teacher-forced cross-entropy over all non-`PAD` action positions of the batch.
    pub fn loss_on_tape(&self, tape: &mut Tape, p: &Bound, batch: &[(TokenSeq, Path)]) -> Result<Var, TransformerError> {
        if batch.is_empty() {
            return Err(TransformerError::EmptyBatch);
        }
        let mut all_logits = Vec::with_capacity(batch.len());
        let mut targets = Vec::new();
        for (seq, expert) in batch {
            let seq = seq.clone().with_expert(expert)?;
            if seq.actions.len() > self.config.max_len {
                return Err(TransformerError::TooLong { len: seq.actions.len(), max_len: self.config.max_len });
            }
            let inputs: Vec<ActionToken> = std::iter::once(ActionToken::Bos).chain(seq.actions[..seq.actions.len() - 1].iter().copied()).collect();
            let mem = self.encode_on_tape(tape, p, &seq)?;
            all_logits.push(self.decode_on_tape(tape, p, &seq, mem, &inputs)?);
            targets.extend(seq.actions.iter().map(|a| (*a != ActionToken::Pad).then_some(a.id())));
        }
        let logits = if all_logits.len() == 1 { all_logits[0] } else { tape.concat_rows(&all_logits)? };
        Ok(tape.softmax_cross_entropy(logits, &targets)?)
    }

    /// Loss without a parameter update.
    pub fn loss(&self, batch: &[(TokenSeq, Path)]) -> Result<f64, TransformerError> {
        let mut tape = Tape::new();
        let p = self.params.bind(&mut tape)?;
        let l = self.loss_on_tape(&mut tape, &p, batch)?;
        Ok(tape.scalar(l))
    }

    /// One Adam step on the batch loss; returns the pre-step loss.
    pub fn train_step(&mut self, batch: &[(TokenSeq, Path)], adam: &mut Adam) -> Result<f64, TransformerError> {
        let mut tape = Tape::new();
        let p = self.params.bind(&mut tape)?;
        let loss = self.loss_on_tape(&mut tape, &p, batch)?;
        let value = tape.scalar(loss);
        let grads = tape.backward(loss)?;
        self.params.set_grads(&grads, &p);
        adam.step(&mut self.params)?;
        Ok(value)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let c = &self.config;
        Checkpoint::new(self.params.records())
            .with_meta("model", "transformer")
            .with_meta("d_model", c.d_model)
            .with_meta("heads", c.heads)
            .with_meta("layers", c.layers)
            .with_meta("d_ff", c.d_ff)
            .with_meta("max_len", c.max_len)
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self, TransformerError> {
        let config = PlannerConfig {
            d_model: ck.meta_parse("d_model")?,
            heads: ck.meta_parse("heads")?,
            layers: ck.meta_parse("layers")?,
            d_ff: ck.meta_parse("d_ff")?,
            max_len: ck.meta_parse("max_len")?,
        };
        let mut model = Self::new(config, 0)?;
        model.params.load(&ck.tensors)?;
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridworld::Terrain;
    use crate::planners::shortest_path;
    use crate::tensor::{finite_diff_check, AdamConfig, Tensor};

    fn tiny() -> PlannerConfig {
        PlannerConfig { d_model: 8, heads: 2, layers: 1, d_ff: 16, max_len: 32 }
    }

    fn example(map: &GridMap, s: Cell, g: Cell) -> (TokenSeq, Path) {
        (tokenize_env(map, s, g), shortest_path(map, s, g).unwrap())
    }

    #[test]
    fn config_validation() {
        assert!(PlannerConfig::default().validate().is_ok());
        assert_eq!(PlannerConfig::default().d_k(), 16);
        let bad = PlannerConfig { d_model: 10, heads: 4, ..PlannerConfig::default() };
        assert!(matches!(TransformerModel::new(bad, 0), Err(TransformerError::Config(_))));
        let zero = PlannerConfig { d_ff: 0, ..PlannerConfig::default() };
        assert!(zero.validate().is_err());
    }

    #[test]
    fn encoder_shape_position_sensitivity_and_norm() {
        let m = TransformerModel::new(tiny(), 1).unwrap();
        let map = GridMap::open(3, 3);
        let seq = tokenize_env(&map, Cell::new(0, 0), Cell::new(2, 2));
        let mem = m.encode(&seq).unwrap();
        let d = m.config.d_model;
        assert_eq!(mem.len(), seq.env.len() * d);
        for row in mem.chunks(d) {
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d as f64;
            assert!(mean.abs() < 1e-6 && (var - 1.0).abs() < 1e-6);
        }
        // Cells 1 and 3 are both FREE; only their positional codes differ.
        assert_eq!(seq.env[1], seq.env[3]);
        assert_ne!(&mem[d..2 * d], &mem[3 * d..4 * d]);
    }

    #[test]
    fn residual_identity_with_zeroed_sublayers() {
        let mut m = TransformerModel::new(tiny(), 2).unwrap();
        let zero_ids: Vec<ParamId> = m
            .enc
            .iter()
            .flat_map(|l| {
                let mut v: Vec<ParamId> = l.attn.heads.iter().flatten().copied().collect();
                v.extend([l.attn.wo, l.ff.w1, l.ff.b1, l.ff.w2, l.ff.b2]);
                v
            })
            .collect();
        for id in zero_ids {
            m.params.get_mut(id).values_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        let map = GridMap::new(2, 2, vec![Terrain::Passable, Terrain::Blocked, Terrain::Passable, Terrain::Passable]).unwrap();
        let seq = tokenize_env(&map, Cell::new(0, 0), Cell::new(1, 1));
        let mem = m.encode(&seq).unwrap();
        let d = m.config.d_model;
        let pe = positional_encoding(seq.env.len(), d);
        let table = m.params.get(m.env_emb).values().to_vec();
        for (i, tok) in seq.env.iter().enumerate() {
            let mut row: Vec<f64> = (0..d).map(|j| table[tok.id() * d + j] + pe[i * d + j]).collect();
            // One normalisation per sublayer.
            for _ in 0..2 * m.config.layers {
                let mean = row.iter().sum::<f64>() / d as f64;
                let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d as f64;
                row.iter_mut().for_each(|v| *v = (*v - mean) / (var + LN_EPS).sqrt());
            }
            for j in 0..d {
                assert!((mem[i * d + j] - row[j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn causal_invariance() {
        let m = TransformerModel::new(tiny(), 3).unwrap();
        let map = GridMap::open(4, 4);
        let seq = tokenize_env(&map, Cell::new(0, 0), Cell::new(3, 3));
        let mem = m.encode(&seq).unwrap();
        let base = [ActionToken::Bos, ActionToken::Right, ActionToken::Down, ActionToken::Right, ActionToken::Down];
        let v = PlannerConfig::ACTION_VOCAB;
        let l0 = m.logits(&seq, &mem, &base).unwrap();
        for t in 0..base.len() - 1 {
            let mut alt = base;
            for (k, a) in alt.iter_mut().enumerate().skip(t + 1) {
                *a = ActionToken::ALL[(k * 3 + t) % v];
            }
            let l1 = m.logits(&seq, &mem, &alt).unwrap();
            let bits = |l: &[f64]| l[..(t + 1) * v].iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&l0), bits(&l1), "step {t}");
        }
    }

    #[test]
    fn untrained_decode_is_bounded_and_deterministic() {
        let m = TransformerModel::new(tiny(), 4).unwrap();
        let map = GridMap::open(5, 5);
        let seq = tokenize_env(&map, Cell::new(0, 0), Cell::new(4, 4));
        let mem = m.encode(&seq).unwrap();
        for mode in [DecodeMode::Free, DecodeMode::Constrained] {
            let a = m.greedy_decode(&seq, &mem, 7, mode).unwrap();
            assert!(a.len() <= 7);
            assert_eq!(a, m.greedy_decode(&seq, &mem, 7, mode).unwrap());
        }
    }

    #[test]
    fn initial_loss_with_uniform_logits_is_ln_vocab() {
        let mut m = TransformerModel::new(tiny(), 5).unwrap();
        for id in [m.out_w, m.out_b] {
            m.params.get_mut(id).values_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        let map = GridMap::open(3, 3);
        let l = m.loss(&[example(&map, Cell::new(0, 0), Cell::new(2, 2))]).unwrap();
        assert!((l - (PlannerConfig::ACTION_VOCAB as f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn overfits_single_example() {
        let cfg = PlannerConfig { d_model: 16, heads: 2, layers: 1, d_ff: 32, max_len: 32 };
        let mut m = TransformerModel::new(cfg, 6).unwrap();
        let mut adam = Adam::new(&m.params, AdamConfig::with_alpha(0.01));
        let map = GridMap::new(4, 4, {
            let mut c = vec![Terrain::Passable; 16];
            c[5] = Terrain::Blocked;
            c[6] = Terrain::Blocked;
            c
        })
        .unwrap();
        let batch = [example(&map, Cell::new(0, 3), Cell::new(3, 0))];
        let mut last = f64::INFINITY;
        for _ in 0..200 {
            last = m.train_step(&batch, &mut adam).unwrap();
        }
        assert!(last < 0.05, "loss {last}");
    }

    #[test]
    fn train_step_gradient() {
        let map = GridMap::new(3, 3, {
            let mut c = vec![Terrain::Passable; 9];
            c[4] = Terrain::Blocked;
            c
        })
        .unwrap();
        let batch = [example(&map, Cell::new(0, 0), Cell::new(2, 2)), example(&map, Cell::new(2, 0), Cell::new(0, 1))];
        for seed in 0..20 {
            let m = TransformerModel::new(tiny(), 100 + seed).unwrap();
            let theta: Vec<Tensor> = m.params.tensors().to_vec();
            let f = |tape: &mut Tape, vars: &[Var]| {
                let p = Bound::from_vars(vars.to_vec());
                m.loss_on_tape(tape, &p, &batch).map_err(|e| match e {
                    TransformerError::Tensor(t) => t,
                    other => panic!("{other}"),
                })
            };
            let err = finite_diff_check(f, &theta, 1e-6).unwrap();
            assert!(err < 1e-4, "seed {seed}: {err}");
        }
    }

    #[test]
    fn learns_corner_to_corner_on_empty_3x3() {
        let cfg = PlannerConfig { d_model: 16, heads: 2, layers: 1, d_ff: 32, max_len: 16 };
        let mut m = TransformerModel::new(cfg, 7).unwrap();
        let mut adam = Adam::new(&m.params, AdamConfig::with_alpha(0.01));
        let map = GridMap::open(3, 3);
        let cells: Vec<Cell> = map.passable_cells().collect();
        let batch: Vec<(TokenSeq, Path)> = cells
            .iter()
            .flat_map(|s| cells.iter().filter(move |g| *g != s).map(move |g| (*s, *g)))
            .map(|(s, g)| example(&map, s, g))
            .collect();
        for _ in 0..150 {
            m.train_step(&batch, &mut adam).unwrap();
        }
        let (s, g) = (Cell::new(0, 0), Cell::new(2, 2));
        let oracle = shortest_path(&map, s, g).unwrap();
        for mode in [DecodeMode::Free, DecodeMode::Constrained] {
            let p = m.plan_with(&map, s, g, mode).unwrap().expect("valid path");
            assert_eq!(p.steps(), oracle.steps());
            assert_eq!(p.steps(), 4);
        }
    }

    #[test]
    fn checkpoint_roundtrip() {
        let m = TransformerModel::new(tiny(), 8).unwrap();
        let ck = Checkpoint::parse(&m.to_checkpoint().render()).unwrap();
        let back = TransformerModel::from_checkpoint(&ck).unwrap();
        assert_eq!(back.config, m.config);
        let map = GridMap::open(3, 2);
        let seq = tokenize_env(&map, Cell::new(0, 0), Cell::new(2, 1));
        assert_eq!(m.encode(&seq).unwrap(), back.encode(&seq).unwrap());
    }

    #[test]
    fn rejects_bad_env_length() {
        let m = TransformerModel::new(tiny(), 9).unwrap();
        let mut seq = tokenize_env(&GridMap::open(2, 2), Cell::new(0, 0), Cell::new(1, 1));
        seq.env.pop();
        assert!(matches!(m.encode(&seq), Err(TransformerError::EnvLength { .. })));
    }
}
