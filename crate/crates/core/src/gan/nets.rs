//! Generator and discriminator networks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{class_token, raw_path, token_class, Candidate, CandidateSet, GanConfig, GanContext, GanError, GAN_ACTIONS};
use crate::tensor::{init, Bound, Checkpoint, ParamId, ParamSet, Tape, Tensor, Var};
use crate::transformer::tokens::STATE_DIM;
use crate::transformer::ActionToken;

const BN_EPS: f64 = 1e-5;
const BN_MOMENTUM: f64 = 0.1;

#[derive(Debug, Clone)]
struct RnnIds {
    w_in: ParamId,
    w_hh: ParamId,
    b: ParamId,
    w_out: ParamId,
    b_out: ParamId,
}

/// Running per-unit statistics of the recurrent pre-activations.
#[derive(Debug, Clone, PartialEq)]
pub struct BnStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl BnStats {
    fn new(n: usize) -> Self {
        Self { mean: vec![0.0; n], var: vec![1.0; n] }
    }

    fn update(&mut self, batch: &[(Vec<f64>, Vec<f64>)]) {
        if batch.is_empty() {
            return;
        }
        let k = batch.len() as f64;
        for j in 0..self.mean.len() {
            let m = batch.iter().map(|(m, _)| m[j]).sum::<f64>() / k;
            let v = batch.iter().map(|(_, v)| v[j]).sum::<f64>() / k;
            self.mean[j] = (1.0 - BN_MOMENTUM) * self.mean[j] + BN_MOMENTUM * m;
            self.var[j] = (1.0 - BN_MOMENTUM) * self.var[j] + BN_MOMENTUM * v;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum BnMode {
    Train,
    Eval,
}

/// How the generator's previous-action input is produced at each step.
pub(crate) enum Feed<'a> {
    /// Expert classes per row, one per step.
    Teacher(&'a [Vec<usize>]),
    /// Softmax of the previous logits (differentiable).
    Soft,
    /// One-hot of the previous argmax.
    Hard,
}

pub(crate) struct Rollout {
    pub logits: Vec<Var>,
    /// Per-step action vectors suitable as discriminator input.
    pub actions: Vec<Var>,
    /// Per-step state features (row-major `B x STATE_DIM`) seen before acting.
    pub feats: Vec<Vec<f64>>,
    /// Argmax (or teacher) class per row and step.
    pub classes: Vec<Vec<usize>>,
    pub bn_batches: Vec<(Vec<f64>, Vec<f64>)>,
    pub bn_outputs: Vec<Var>,
}

/// Constant inputs for a discriminator pass over `rows` sequences of `max_len` steps.
#[derive(Debug, Clone, PartialEq)]
pub struct SeqBatch {
    pub rows: usize,
    /// Per step, row-major `rows x GAN_ACTIONS` action vectors (one-hot or soft).
    pub steps: Vec<Vec<f64>>,
    /// Per step, row-major `rows x STATE_DIM`.
    pub feats: Vec<Vec<f64>>,
    /// Row-major `rows x cond_dim`.
    pub conds: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct PathGan {
    pub config: GanConfig,
    pub generator: ParamSet,
    pub discriminator: ParamSet,
    g: RnnIds,
    d: RnnIds,
    pub g_bn: BnStats,
    pub d_bn: BnStats,
}

fn rnn(params: &mut ParamSet, prefix: &str, input: usize, hidden: usize, out: usize, rng: &mut ChaCha8Rng) -> RnnIds {
    RnnIds {
        w_in: params.add(format!("{prefix}.w_in"), init::uniform(input, hidden, rng)),
        w_hh: params.add(format!("{prefix}.w_hh"), init::uniform(hidden, hidden, rng)),
        b: params.add(format!("{prefix}.b"), init::zeros(1, hidden)),
        w_out: params.add(format!("{prefix}.w_out"), init::uniform(hidden, out, rng)),
        b_out: params.add(format!("{prefix}.b_out"), init::zeros(1, out)),
    }
}

fn one_hot(rows: &[usize]) -> Vec<f64> {
    let mut v = vec![0.0; rows.len() * GAN_ACTIONS];
    for (r, k) in rows.iter().enumerate() {
        v[r * GAN_ACTIONS + k] = 1.0;
    }
    v
}

fn argmax(row: &[f64]) -> usize {
    row.iter().enumerate().fold(0, |best, (i, v)| if *v > row[best] { i } else { best })
}

/// Binds `params` as constants so no gradient flows into them.
pub fn bind_frozen(params: &ParamSet, tape: &mut Tape) -> Result<Bound, GanError> {
    let frozen: Vec<Tensor> = params
        .tensors()
        .iter()
        .map(|t| {
            let mut t = t.clone();
            t.requires_grad = false;
            t
        })
        .collect();
    Ok(ParamSet::bind_tensors(&frozen, tape)?)
}

impl PathGan {
    pub fn new(config: GanConfig, seed: u64) -> Result<Self, GanError> {
        config.validate()?;
        Ok(Self::build(config, seed))
    }

    /// Like [`PathGan::new`] but skips the hyperparameter range checks, for tiny test networks.
    pub fn new_unchecked(config: GanConfig, seed: u64) -> Self {
        Self::build(config, seed)
    }

    fn build(config: GanConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = config.cond_dim();
        let h = config.hidden;
        let mut generator = ParamSet::new();
        let g = rnn(&mut generator, "gan.g", GAN_ACTIONS + config.noise_dim + c + STATE_DIM, h, GAN_ACTIONS, &mut rng);
        let mut discriminator = ParamSet::new();
        let d = rnn(&mut discriminator, "gan.d", GAN_ACTIONS + c + STATE_DIM, h, 1, &mut rng);
        Self { config, generator, discriminator, g, d, g_bn: BnStats::new(h), d_bn: BnStats::new(h) }
    }

    pub fn param_count(&self) -> usize {
        self.generator.count() + self.discriminator.count()
    }

    /// Uniform noise in `[-1, 1)`.
    pub fn sample_noise(&self, rng: &mut impl Rng) -> Vec<f64> {
        (0..self.config.noise_dim).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    fn cell(
        &self,
        tape: &mut Tape,
        p: &Bound,
        ids: &RnnIds,
        x: Var,
        h: Var,
        bn: Option<(BnMode, &BnStats)>,
        bn_log: &mut Vec<(Vec<f64>, Vec<f64>)>,
        bn_out: &mut Vec<Var>,
    ) -> Result<Var, GanError> {
        let a = tape.matmul(x, p[ids.w_in])?;
        let r = tape.matmul(h, p[ids.w_hh])?;
        let s = tape.add(a, r)?;
        let mut pre = tape.add_row(s, p[ids.b])?;
        match bn {
            Some((BnMode::Train, _)) => {
                let (n, m, v) = tape.batch_norm_cols(pre, BN_EPS);
                bn_log.push((m, v));
                bn_out.push(n);
                pre = n;
            }
            Some((BnMode::Eval, stats)) => {
                let shift = tape.constant(1, stats.mean.len(), stats.mean.iter().map(|m| -m).collect())?;
                let gain = tape.constant(1, stats.var.len(), stats.var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect())?;
                let c = tape.add_row(pre, shift)?;
                pre = tape.mul_row(c, gain)?;
            }
            None => {}
        }
        Ok(tape.tanh(pre))
    }

    fn bn<'a>(&self, mode: BnMode, stats: &'a BnStats) -> Option<(BnMode, &'a BnStats)> {
        self.config.batch_norm.then_some((mode, stats))
    }

    pub(crate) fn conditions(&self, ctxs: &[GanContext]) -> Result<Vec<f64>, GanError> {
        let mut out = Vec::with_capacity(ctxs.len() * self.config.cond_dim());
        for c in ctxs {
            out.extend(c.condition(self.config.embed_dim)?);
        }
        Ok(out)
    }

    pub(crate) fn rollout(
        &self,
        tape: &mut Tape,
        p: &Bound,
        zs: &[Vec<f64>],
        ctxs: &[GanContext],
        feed: Feed,
        mode: BnMode,
    ) -> Result<Rollout, GanError> {
        let cfg = &self.config;
        let b = ctxs.len();
        let mut zc = Vec::with_capacity(b * (cfg.noise_dim + cfg.cond_dim()));
        for (z, ctx) in zs.iter().zip(ctxs) {
            if z.len() != cfg.noise_dim {
                return Err(GanError::NoiseSize { expected: cfg.noise_dim, found: z.len() });
            }
            zc.extend_from_slice(z);
            zc.extend(ctx.condition(cfg.embed_dim)?);
        }
        let zc = tape.constant(b, cfg.noise_dim + cfg.cond_dim(), zc)?;
        let mut h = tape.constant(b, cfg.hidden, vec![0.0; b * cfg.hidden])?;
        let mut prev = tape.constant(b, GAN_ACTIONS, vec![0.0; b * GAN_ACTIONS])?;
        let mut pos: Vec<_> = ctxs.iter().map(|c| c.start).collect();
        let mut out = Rollout {
            logits: Vec::new(),
            actions: Vec::new(),
            feats: Vec::new(),
            classes: vec![Vec::new(); b],
            bn_batches: Vec::new(),
            bn_outputs: Vec::new(),
        };
        for t in 0..cfg.max_len {
            let feats: Vec<f64> = ctxs.iter().zip(&pos).flat_map(|(c, p)| c.features(*p)).collect();
            let f = tape.constant(b, STATE_DIM, feats.clone())?;
            let x = tape.concat_cols(&[prev, zc, f])?;
            h = self.cell(tape, p, &self.g, x, h, self.bn(mode, &self.g_bn), &mut out.bn_batches, &mut out.bn_outputs)?;
            let l = tape.matmul(h, p[self.g.w_out])?;
            let logits = tape.add_row(l, p[self.g.b_out])?;
            let chosen: Vec<usize> = match feed {
                Feed::Teacher(teacher) => teacher.iter().map(|row| row[t]).collect(),
                _ => tape.value(logits).chunks(GAN_ACTIONS).map(argmax).collect(),
            };
            let action = match feed {
                Feed::Soft => tape.softmax_rows(logits),
                _ => tape.constant(b, GAN_ACTIONS, one_hot(&chosen))?,
            };
            for (r, k) in chosen.iter().enumerate() {
                pos[r] = ctxs[r].advance(pos[r], *k);
                out.classes[r].push(*k);
            }
            out.logits.push(logits);
            out.actions.push(action);
            out.feats.push(feats);
            prev = action;
        }
        Ok(out)
    }

    /// Discriminator logits (`rows x 1`) over per-step action vectors.
    pub(crate) fn d_logits(&self, tape: &mut Tape, p: &Bound, actions: &[Var], feats: &[Vec<f64>], conds: &[f64], mode: BnMode) -> Result<(Var, Vec<(Vec<f64>, Vec<f64>)>, Vec<Var>), GanError> {
        let cfg = &self.config;
        let b = conds.len() / cfg.cond_dim();
        let cond = tape.constant(b, cfg.cond_dim(), conds.to_vec())?;
        let mut h = tape.constant(b, cfg.hidden, vec![0.0; b * cfg.hidden])?;
        let mut log = Vec::new();
        let mut outs = Vec::new();
        for (a, f) in actions.iter().zip(feats) {
            let f = tape.constant(b, STATE_DIM, f.clone())?;
            let x = tape.concat_cols(&[*a, cond, f])?;
            h = self.cell(tape, p, &self.d, x, h, self.bn(mode, &self.d_bn), &mut log, &mut outs)?;
        }
        let l = tape.matmul(h, p[self.d.w_out])?;
        Ok((tape.add_row(l, p[self.d.b_out])?, log, outs))
    }

    pub(crate) fn d_logits_batch(&self, tape: &mut Tape, p: &Bound, batch: &SeqBatch, mode: BnMode) -> Result<(Var, Vec<(Vec<f64>, Vec<f64>)>), GanError> {
        let actions = batch
            .steps
            .iter()
            .map(|s| tape.constant(batch.rows, GAN_ACTIONS, s.clone()))
            .collect::<Result<Vec<_>, _>>()?;
        let (l, log, _) = self.d_logits(tape, p, &actions, &batch.feats, &batch.conds, mode)?;
        Ok((l, log))
    }

    /// Classes of `seq` up to and including the first `EOS`, padded with `EOS` to `max_len`.
    pub fn pad_classes(&self, seq: &[ActionToken]) -> Vec<usize> {
        let eos = GAN_ACTIONS - 1;
        let mut out: Vec<usize> = seq.iter().filter_map(|t| token_class(*t)).take_while(|k| *k != eos).take(self.config.max_len).collect();
        out.resize(self.config.max_len, eos);
        out
    }

    /// One-hot discriminator input for fixed sequences.
    pub fn seq_batch(&self, seqs: &[Vec<usize>], ctxs: &[GanContext]) -> Result<SeqBatch, GanError> {
        let rows = ctxs.len();
        let mut pos: Vec<_> = ctxs.iter().map(|c| c.start).collect();
        let mut steps = Vec::with_capacity(self.config.max_len);
        let mut feats = Vec::with_capacity(self.config.max_len);
        for t in 0..self.config.max_len {
            feats.push(ctxs.iter().zip(&pos).flat_map(|(c, p)| c.features(*p)).collect());
            let col: Vec<usize> = seqs.iter().map(|s| s[t]).collect();
            steps.push(one_hot(&col));
            for r in 0..rows {
                pos[r] = ctxs[r].advance(pos[r], col[r]);
            }
        }
        Ok(SeqBatch { rows, steps, feats, conds: self.conditions(ctxs)? })
    }

    /// Argmax generation for each `(z, ctx)` pair; sequences end at the first `EOS`.
    pub fn generate_batch(&self, zs: &[Vec<f64>], ctxs: &[GanContext]) -> Result<Vec<Vec<ActionToken>>, GanError> {
        let mut tape = Tape::new();
        let p = bind_frozen(&self.generator, &mut tape)?;
        let r = self.rollout(&mut tape, &p, zs, ctxs, Feed::Hard, BnMode::Eval)?;
        Ok(r
            .classes
            .iter()
            .map(|row| {
                let end = row.iter().position(|k| *k == GAN_ACTIONS - 1).map_or(row.len(), |i| i + 1);
                row[..end].iter().map(|k| class_token(*k)).collect()
            })
            .collect())
    }

    pub fn generate(&self, z: &[f64], ctx: &GanContext) -> Result<Vec<ActionToken>, GanError> {
        Ok(self.generate_batch(&[z.to_vec()], std::slice::from_ref(ctx))?.remove(0))
    }

    pub fn discriminate_batch(&self, seqs: &[Vec<ActionToken>], ctxs: &[GanContext]) -> Result<Vec<f64>, GanError> {
        let classes: Vec<Vec<usize>> = seqs.iter().map(|s| self.pad_classes(s)).collect();
        let batch = self.seq_batch(&classes, ctxs)?;
        let mut tape = Tape::new();
        let p = bind_frozen(&self.discriminator, &mut tape)?;
        let (l, _) = self.d_logits_batch(&mut tape, &p, &batch, BnMode::Eval)?;
        Ok(tape.value(l).iter().map(|v| crate::tensor::tape::sigmoid(*v)).collect())
    }

    /// Probability in `(0, 1)` that `seq` is an expert path for `ctx`.
    pub fn discriminate(&self, seq: &[ActionToken], ctx: &GanContext) -> Result<f64, GanError> {
        Ok(self.discriminate_batch(&[seq.to_vec()], std::slice::from_ref(ctx))?[0])
    }

    /// Draws `k` noise vectors and scores the generated sequences.
    pub fn candidates(&self, ctx: &GanContext, k: usize, rng: &mut impl Rng) -> Result<CandidateSet, GanError> {
        let zs: Vec<Vec<f64>> = (0..k).map(|_| self.sample_noise(rng)).collect();
        let ctxs = vec![*ctx; k];
        let raws = self.generate_batch(&zs, &ctxs)?;
        let scores = self.discriminate_batch(&raws, &ctxs)?;
        let cands = raws
            .into_iter()
            .zip(scores)
            .map(|(raw, score)| {
                let valid = raw_path(ctx.map, &raw, ctx.start, ctx.goal).is_some();
                Candidate { raw, score, valid }
            })
            .collect();
        CandidateSet::new(cands)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let c = &self.config;
        let mut tensors = self.generator.records();
        tensors.extend(self.discriminator.records());
        let stat = |name: &str, v: &[f64]| (name.to_string(), Tensor::new(vec![1, v.len()], v.to_vec()).expect("row"));
        tensors.push(stat("gan.g.bn_mean", &self.g_bn.mean));
        tensors.push(stat("gan.g.bn_var", &self.g_bn.var));
        tensors.push(stat("gan.d.bn_mean", &self.d_bn.mean));
        tensors.push(stat("gan.d.bn_var", &self.d_bn.var));
        Checkpoint::new(tensors)
            .with_meta("model", "gan")
            .with_meta("noise_dim", c.noise_dim)
            .with_meta("batch", c.batch)
            .with_meta("lr", c.lr)
            .with_meta("hidden", c.hidden)
            .with_meta("max_len", c.max_len)
            .with_meta("embed_dim", c.embed_dim)
            .with_meta("batch_norm", c.batch_norm)
            .with_meta("candidates", c.candidates)
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self, GanError> {
        let config = GanConfig {
            noise_dim: ck.meta_parse("noise_dim")?,
            batch: ck.meta_parse("batch")?,
            lr: ck.meta_parse("lr")?,
            hidden: ck.meta_parse("hidden")?,
            max_len: ck.meta_parse("max_len")?,
            embed_dim: ck.meta_parse("embed_dim")?,
            batch_norm: ck.meta_parse("batch_norm")?,
            candidates: ck.meta_parse("candidates")?,
            ..GanConfig::default()
        };
        let mut gan = Self::new_unchecked(config, 0);
        let ng = gan.generator.len();
        let nd = gan.discriminator.len();
        if ck.tensors.len() != ng + nd + 4 {
            return Err(crate::tensor::CheckpointError::Mismatch(format!("expected {} tensors, found {}", ng + nd + 4, ck.tensors.len())).into());
        }
        gan.generator.load(&ck.tensors[..ng])?;
        gan.discriminator.load(&ck.tensors[ng..ng + nd])?;
        let rest = &ck.tensors[ng + nd..];
        gan.g_bn = BnStats { mean: rest[0].1.values().to_vec(), var: rest[1].1.values().to_vec() };
        gan.d_bn = BnStats { mean: rest[2].1.values().to_vec(), var: rest[3].1.values().to_vec() };
        Ok(gan)
    }

    pub(crate) fn update_bn(&mut self, g: &[(Vec<f64>, Vec<f64>)], d: &[(Vec<f64>, Vec<f64>)]) {
        self.g_bn.update(g);
        self.d_bn.update(d);
    }
}
