//! Adversarial training with a teacher-forced auxiliary term.

use rand::Rng;

use super::nets::{bind_frozen, BnMode, Feed};
use super::{token_class, GanContext, GanError, GenLoss, PathGan, SeqBatch, GAN_ACTIONS};
use crate::gridworld::Path;
use crate::tensor::{Adam, AdamConfig, Bound, Tape, Var};
use crate::transformer::ActionToken;

/// A query paired with an expert path.
#[derive(Debug, Clone)]
pub struct GanExample<'a> {
    pub ctx: GanContext<'a>,
    pub expert: Path,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GanLosses {
    pub d_loss: f64,
    /// Adversarial part of the generator loss.
    pub g_loss: f64,
    /// Teacher-forced cross-entropy part of the generator loss.
    pub supervised: f64,
}

/// Generator loss terms recorded on a tape.
pub struct GeneratorLoss {
    pub adversarial: Var,
    pub supervised: Var,
    pub total: Var,
}

impl PathGan {
    /// Expert classes followed by `EOS` padding to `max_len`.
    pub fn expert_classes(&self, expert: &Path) -> Result<Vec<usize>, GanError> {
        let actions = expert.actions().ok_or(GanError::TooLong { len: expert.steps(), max_len: self.config.max_len })?;
        if actions.len() >= self.config.max_len {
            return Err(GanError::TooLong { len: actions.len(), max_len: self.config.max_len });
        }
        let toks: Vec<ActionToken> = actions.into_iter().map(ActionToken::from_action).collect();
        let mut classes: Vec<usize> = toks.iter().filter_map(|t| token_class(*t)).collect();
        classes.resize(self.config.max_len, GAN_ACTIONS - 1);
        Ok(classes)
    }

    /// Mean BCE of the discriminator with `real -> 1`, `fake -> 0`.
    pub fn discriminator_loss(&self, tape: &mut Tape, pd: &Bound, real: &SeqBatch, fake: &SeqBatch) -> Result<Var, GanError> {
        Ok(self.discriminator_loss_logged(tape, pd, real, fake)?.0)
    }

    fn discriminator_loss_logged(&self, tape: &mut Tape, pd: &Bound, real: &SeqBatch, fake: &SeqBatch) -> Result<(Var, Vec<(Vec<f64>, Vec<f64>)>), GanError> {
        let (lr, mut log) = self.d_logits_batch(tape, pd, real, BnMode::Train)?;
        let (lf, log2) = self.d_logits_batch(tape, pd, fake, BnMode::Train)?;
        log.extend(log2);
        let both = tape.concat_rows(&[lr, lf])?;
        let targets: Vec<f64> = std::iter::repeat_n(1.0, real.rows).chain(std::iter::repeat_n(0.0, fake.rows)).collect();
        Ok((tape.bce_with_logits(both, &targets)?, log))
    }

    /// Adversarial loss of a soft rollout through `pd` plus the weighted
    /// teacher-forced cross-entropy against `teacher`.
    pub fn generator_loss(
        &self,
        tape: &mut Tape,
        pg: &Bound,
        pd: &Bound,
        zs: &[Vec<f64>],
        ctxs: &[GanContext],
        teacher: &[Vec<usize>],
    ) -> Result<GeneratorLoss, GanError> {
        Ok(self.generator_loss_logged(tape, pg, pd, zs, ctxs, teacher)?.0)
    }

    fn generator_loss_logged(
        &self,
        tape: &mut Tape,
        pg: &Bound,
        pd: &Bound,
        zs: &[Vec<f64>],
        ctxs: &[GanContext],
        teacher: &[Vec<usize>],
    ) -> Result<(GeneratorLoss, Vec<(Vec<f64>, Vec<f64>)>), GanError> {
        let soft = self.rollout(tape, pg, zs, ctxs, Feed::Soft, BnMode::Train)?;
        let conds = self.conditions(ctxs)?;
        let (logits, _, _) = self.d_logits(tape, pd, &soft.actions, &soft.feats, &conds, BnMode::Train)?;
        let adversarial = match self.config.generator_loss {
            GenLoss::NonSaturating => tape.bce_with_logits(logits, &vec![1.0; ctxs.len()])?,
            GenLoss::Minimax => {
                let l = tape.bce_with_logits(logits, &vec![0.0; ctxs.len()])?;
                tape.scale(l, -1.0)
            }
        };
        let forced = self.rollout(tape, pg, zs, ctxs, Feed::Teacher(teacher), BnMode::Train)?;
        let all = tape.concat_rows(&forced.logits)?;
        // Rows are step-major: step t holds every batch row.
        let targets: Vec<Option<usize>> = (0..self.config.max_len).flat_map(|t| teacher.iter().map(move |row| Some(row[t]))).collect();
        let supervised = tape.softmax_cross_entropy(all, &targets)?;
        let weighted = tape.scale(supervised, self.config.supervised_weight);
        let total = tape.add(adversarial, weighted)?;
        let mut log = soft.bn_batches;
        log.extend(forced.bn_batches);
        Ok((GeneratorLoss { adversarial, supervised, total }, log))
    }

    /// Soft generator outputs (values only) as a discriminator batch.
    pub fn fake_batch(&self, zs: &[Vec<f64>], ctxs: &[GanContext]) -> Result<SeqBatch, GanError> {
        let mut tape = Tape::new();
        let p = bind_frozen(&self.generator, &mut tape)?;
        let r = self.rollout(&mut tape, &p, zs, ctxs, Feed::Soft, BnMode::Train)?;
        Ok(SeqBatch {
            rows: ctxs.len(),
            steps: r.actions.iter().map(|a| tape.value(*a).to_vec()).collect(),
            feats: r.feats,
            conds: self.conditions(ctxs)?,
        })
    }
}

/// Owns a [`PathGan`] and its two optimizers.
#[derive(Debug, Clone)]
pub struct GanTrainer {
    pub gan: PathGan,
    g_adam: Adam,
    d_adam: Adam,
    iteration: usize,
}

impl GanTrainer {
    pub fn new(gan: PathGan) -> Self {
        let cfg = AdamConfig::with_alpha(gan.config.lr);
        let g_adam = Adam::new(&gan.generator, cfg);
        let d_adam = Adam::new(&gan.discriminator, cfg);
        Self { gan, g_adam, d_adam, iteration: 0 }
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    /// Current learning rate after exponential per-epoch decay.
    pub fn lr(&self) -> f64 {
        self.g_adam.alpha()
    }

    /// One discriminator update on fixed batches; returns the pre-step loss.
    pub fn d_step(&mut self, real: &SeqBatch, fake: &SeqBatch) -> Result<f64, GanError> {
        let mut tape = Tape::new();
        let pd = self.gan.discriminator.bind(&mut tape)?;
        let (loss, log) = self.gan.discriminator_loss_logged(&mut tape, &pd, real, fake)?;
        let value = tape.scalar(loss);
        let grads = tape.backward(loss)?;
        self.gan.discriminator.set_grads(&grads, &pd);
        self.d_adam.step(&mut self.gan.discriminator)?;
        self.gan.update_bn(&[], &log);
        Ok(value)
    }

    /// Discriminator step on `(expert, G(z))`, then generator step.
    pub fn step(&mut self, batch: &[GanExample], rng: &mut impl Rng) -> Result<GanLosses, GanError> {
        let cfg = self.gan.config;
        if batch.len() != cfg.batch {
            return Err(GanError::BatchSize { expected: cfg.batch, found: batch.len() });
        }
        if self.iteration > 0 && self.iteration.is_multiple_of(cfg.epoch_len) {
            let lr = self.g_adam.alpha() * cfg.lr_decay;
            self.g_adam.set_alpha(lr);
            self.d_adam.set_alpha(lr);
        }
        self.iteration += 1;

        let ctxs: Vec<GanContext> = batch.iter().map(|e| e.ctx).collect();
        let teacher = batch.iter().map(|e| self.gan.expert_classes(&e.expert)).collect::<Result<Vec<_>, _>>()?;
        let zs: Vec<Vec<f64>> = (0..batch.len()).map(|_| self.gan.sample_noise(rng)).collect();

        let real = self.gan.seq_batch(&teacher, &ctxs)?;
        let fake = self.gan.fake_batch(&zs, &ctxs)?;
        let d_loss = self.d_step(&real, &fake)?;

        let mut tape = Tape::new();
        let pg = self.gan.generator.bind(&mut tape)?;
        let pd = bind_frozen(&self.gan.discriminator, &mut tape)?;
        let (loss, log) = self.gan.generator_loss_logged(&mut tape, &pg, &pd, &zs, &ctxs, &teacher)?;
        let losses = GanLosses { d_loss, g_loss: tape.scalar(loss.adversarial), supervised: tape.scalar(loss.supervised) };
        let grads = tape.backward(loss.total)?;
        self.gan.generator.set_grads(&grads, &pg);
        self.g_adam.step(&mut self.gan.generator)?;
        self.gan.update_bn(&log, &[]);
        Ok(losses)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::random_shortest_path;
    use crate::gan::{raw_path, GanConfig};
    use crate::gridworld::{Cell, GridMap};
    use crate::tensor::{finite_diff_check, Tensor};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny() -> GanConfig {
        GanConfig { noise_dim: 10, hidden: 8, max_len: 4, embed_dim: 3, ..GanConfig::default() }
    }

    fn tasks(map: &GridMap, n: usize, rng: &mut ChaCha8Rng) -> Vec<(Cell, Cell)> {
        let cells: Vec<Cell> = map.passable_cells().collect();
        (0..n)
            .map(|_| loop {
                let s = cells[rng.gen_range(0..cells.len())];
                let g = cells[rng.gen_range(0..cells.len())];
                if s != g {
                    break (s, g);
                }
            })
            .collect()
    }

    #[test]
    fn zero_discriminator_is_one_half_and_d_loss_ln2() {
        let mut gan = PathGan::new_unchecked(tiny(), 1);
        gan.discriminator.tensors_mut().iter_mut().for_each(|t| t.values_mut().iter_mut().for_each(|v| *v = 0.0));
        let map = GridMap::open(3, 3);
        let ctx = GanContext::new(&map, Cell::new(0, 0), Cell::new(2, 2));
        for seq in [vec![ActionToken::Right, ActionToken::Eos], vec![ActionToken::Up; 7]] {
            assert_eq!(gan.discriminate(&seq, &ctx).unwrap(), 0.5);
        }
        let ctxs = vec![ctx; 3];
        let real = gan.seq_batch(&vec![vec![3, 3, 1, 1]; 3], &ctxs).unwrap();
        let zs: Vec<Vec<f64>> = (0..3).map(|i| vec![i as f64 * 0.1; 10]).collect();
        let fake = gan.fake_batch(&zs, &ctxs).unwrap();
        let mut tape = Tape::new();
        let pd = gan.discriminator.bind(&mut tape).unwrap();
        let l = gan.discriminator_loss(&mut tape, &pd, &real, &fake).unwrap();
        assert!((tape.scalar(l) - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn generation_is_deterministic_and_bounded() {
        let gan = PathGan::new(GanConfig { max_len: 6, ..GanConfig::default() }, 2).unwrap();
        let map = GridMap::open(5, 5);
        let ctx = GanContext::new(&map, Cell::new(0, 0), Cell::new(4, 4));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..10 {
            let z = gan.sample_noise(&mut rng);
            let a = gan.generate(&z, &ctx).unwrap();
            assert!(a.len() <= 6);
            assert_eq!(a, gan.generate(&z, &ctx).unwrap());
            let p = gan.discriminate(&a, &ctx).unwrap();
            assert!(p > 0.0 && p < 1.0);
        }
        assert!(matches!(gan.generate(&[0.0; 3], &ctx), Err(GanError::NoiseSize { .. })));
    }

    #[test]
    fn gradients_pass_finite_difference() {
        let map = GridMap::open(3, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for seed in 0..20 {
            let gan = PathGan::new_unchecked(tiny(), 200 + seed);
            // max_len 4 leaves room for at most three moves before EOS.
            let ts: Vec<(Cell, Cell)> = tasks(&map, 30, &mut rng).into_iter().filter(|(s, g)| s.manhattan(*g) <= 3).take(3).collect();
            let emb: Vec<crate::gcn::GraphEmbedding> = (0..3).map(|_| crate::gcn::GraphEmbedding((0..3).map(|_| rng.gen_range(-1.0..1.0)).collect())).collect();
            let ctxs: Vec<GanContext> = ts.iter().zip(&emb).map(|((s, g), e)| GanContext::new(&map, *s, *g).with_embedding(e)).collect();
            let teacher: Vec<Vec<usize>> =
                ts.iter().map(|(s, g)| gan.expert_classes(&random_shortest_path(&map, *s, *g, &mut rng).unwrap()).unwrap()).collect();
            let zs: Vec<Vec<f64>> = (0..3).map(|_| gan.sample_noise(&mut rng)).collect();

            let g_theta: Vec<Tensor> = gan.generator.tensors().to_vec();
            let f = |tape: &mut Tape, vars: &[Var]| {
                let pg = Bound::from_vars(vars.to_vec());
                let pd = bind_frozen(&gan.discriminator, tape).unwrap();
                Ok(gan.generator_loss(tape, &pg, &pd, &zs, &ctxs, &teacher).unwrap().total)
            };
            let eg = finite_diff_check(f, &g_theta, 1e-6).unwrap();
            assert!(eg < 1e-4, "generator seed {seed}: {eg}");

            let real = gan.seq_batch(&teacher, &ctxs).unwrap();
            let fake = gan.fake_batch(&zs, &ctxs).unwrap();
            let d_theta: Vec<Tensor> = gan.discriminator.tensors().to_vec();
            let f = |tape: &mut Tape, vars: &[Var]| {
                let pd = Bound::from_vars(vars.to_vec());
                Ok(gan.discriminator_loss(tape, &pd, &real, &fake).unwrap())
            };
            let ed = finite_diff_check(f, &d_theta, 1e-6).unwrap();
            assert!(ed < 1e-4, "discriminator seed {seed}: {ed}");
        }
    }

    #[test]
    fn discriminator_learns_separable_toy_data() {
        let gan = PathGan::new(GanConfig { max_len: 6, ..GanConfig::default() }, 3).unwrap();
        let map = GridMap::open(8, 8);
        let ctxs = vec![GanContext::new(&map, Cell::new(0, 0), Cell::new(5, 0)); 32];
        let real = gan.seq_batch(&vec![vec![3, 3, 3, 3, 3, 5]; 32], &ctxs).unwrap();
        let fake = gan.seq_batch(&vec![vec![0, 0, 0, 0, 0, 0]; 32], &ctxs).unwrap();
        let mut trainer = GanTrainer::new(gan);
        let losses: Vec<f64> = (0..100).map(|_| trainer.d_step(&real, &fake).unwrap()).collect();
        let rises = losses.windows(2).filter(|w| w[1] >= w[0]).count();
        assert!(rises <= 5, "{rises} non-decreasing steps");
        assert!(losses[99] < losses[0]);
    }

    #[test]
    fn batch_norm_statistics_in_training_mode() {
        let gan = PathGan::new(GanConfig { batch_norm: true, max_len: 5, ..GanConfig::default() }, 4).unwrap();
        let map = GridMap::open(6, 6);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let ts = tasks(&map, 32, &mut rng);
        let ctxs: Vec<GanContext> = ts.iter().map(|(s, g)| GanContext::new(&map, *s, *g)).collect();
        let zs: Vec<Vec<f64>> = (0..32).map(|_| gan.sample_noise(&mut rng)).collect();
        let mut tape = Tape::new();
        let p = gan.generator.bind(&mut tape).unwrap();
        let r = gan.rollout(&mut tape, &p, &zs, &ctxs, Feed::Soft, BnMode::Train).unwrap();
        assert_eq!(r.bn_outputs.len(), 5);
        let (rows, cols) = tape.shape(r.bn_outputs[0]);
        for v in &r.bn_outputs {
            let vals = tape.value(*v);
            for j in 0..cols {
                let col: Vec<f64> = (0..rows).map(|i| vals[i * cols + j]).collect();
                let mean = col.iter().sum::<f64>() / rows as f64;
                let var = col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / rows as f64;
                assert!(mean.abs() < 1e-6);
                // Units with tiny batch variance are shrunk by the epsilon.
                assert!((var - 1.0).abs() < 1e-3, "var {var}");
            }
        }
    }

    #[test]
    fn short_training_improves_validity_and_lr_decays() {
        let cfg = GanConfig { max_len: 8, epoch_len: 10, lr_decay: 0.5, ..GanConfig::default() };
        let map = GridMap::open(4, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut trainer = GanTrainer::new(PathGan::new(cfg, 7).unwrap());
        let eval_tasks = tasks(&map, 32, &mut ChaCha8Rng::seed_from_u64(99));
        let validity = |gan: &PathGan, rng: &mut ChaCha8Rng| {
            let ctxs: Vec<GanContext> = eval_tasks.iter().map(|(s, g)| GanContext::new(&map, *s, *g)).collect();
            let zs: Vec<Vec<f64>> = (0..ctxs.len()).map(|_| gan.sample_noise(rng)).collect();
            let raws = gan.generate_batch(&zs, &ctxs).unwrap();
            raws.iter().zip(&eval_tasks).filter(|(r, (s, g))| raw_path(&map, r, *s, *g).is_some()).count()
        };
        let before = validity(&trainer.gan, &mut rng);
        for _ in 0..21 {
            let ts = tasks(&map, 32, &mut rng);
            let batch: Vec<GanExample> = ts
                .iter()
                .map(|(s, g)| GanExample { ctx: GanContext::new(&map, *s, *g), expert: random_shortest_path(&map, *s, *g, &mut rng).unwrap() })
                .collect();
            let l = trainer.step(&batch, &mut rng).unwrap();
            assert!(l.d_loss.is_finite() && l.g_loss.is_finite() && l.supervised.is_finite());
        }
        assert!((trainer.lr() - 0.25e-3).abs() < 1e-15);
        let after = validity(&trainer.gan, &mut rng);
        assert!(after > before, "{before} -> {after}");
    }

    #[test]
    fn rejects_wrong_batch_size() {
        let mut trainer = GanTrainer::new(PathGan::new(GanConfig::default(), 0).unwrap());
        let map = GridMap::open(2, 1);
        let ex = GanExample { ctx: GanContext::new(&map, Cell::new(0, 0), Cell::new(1, 0)), expert: Path::new(vec![Cell::new(0, 0), Cell::new(1, 0)]).unwrap() };
        assert!(matches!(trainer.step(&[ex], &mut ChaCha8Rng::seed_from_u64(0)), Err(GanError::BatchSize { expected: 32, found: 1 })));
    }

    #[test]
    fn checkpoint_roundtrip() {
        let gan = PathGan::new(GanConfig { batch_norm: true, ..GanConfig::default() }, 8).unwrap();
        let back = PathGan::from_checkpoint(&crate::tensor::Checkpoint::parse(&gan.to_checkpoint().render()).unwrap()).unwrap();
        let map = GridMap::open(4, 4);
        let ctx = GanContext::new(&map, Cell::new(0, 0), Cell::new(3, 3));
        let z = vec![0.3; 32];
        assert_eq!(gan.generate(&z, &ctx).unwrap(), back.generate(&z, &ctx).unwrap());
        assert_eq!(back.g_bn, gan.g_bn);
    }
}
