//! Unpaired translation training (stage B) and its task-aware fine-tuning
//! (stage C). Both share one step function; they differ only in the
//! generator objective and in where the real batches come from.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use tada_tensor::{Adam, AdamConfig, Param, ParamStore, Tensor};

use super::pool::ImagePool;
use super::schedule::linear_decay_lr;
use super::seed_for;
use super::task::evaluate;
use crate::datamodel::{batch_images, DatasetSplit, Domain, Image, Label, LossBundle};
use crate::error::{Error, Result};
use crate::losses::{
    combine_generator_terms, cycle_loss, disc_loss, gen_adversarial_loss, identity_loss, task_loss, GeneratorTerms,
    LossWeights, Stage,
};
use crate::metrics::Evaluation;
use crate::networks::{
    Checkpoint, Direction, Discriminator, DiscriminatorArch, Generator, GeneratorArch, Head, TaskNetwork, TensorArchive,
};

/// Optimizer and regularization settings shared by stages B and C.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GanConfig {
    pub epochs: usize,
    /// Final epochs over which the learning rate decays linearly to zero.
    pub decay_epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub pool_size: usize,
    pub lambda_cyc: f64,
    pub lambda_id: f64,
    /// Evaluate `f∘G` every this many epochs (and after the last one).
    pub eval_every: usize,
}

impl Default for GanConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            decay_epochs: 10,
            batch_size: 1,
            lr: 2e-4,
            beta1: 0.5,
            beta2: 0.999,
            pool_size: 50,
            lambda_cyc: 10.0,
            lambda_id: 0.5,
            eval_every: 1,
        }
    }
}

impl GanConfig {
    pub fn check(&self) -> Result<()> {
        if self.batch_size == 0 || self.eval_every == 0 {
            return Err(Error::Config("batch_size and eval_every must be positive".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("lr must be positive, got {}", self.lr)));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("Adam betas must lie in [0, 1)".into()));
        }
        LossWeights {
            lambda_cyc: self.lambda_cyc,
            lambda_id: self.lambda_id,
            alpha: 0.0,
            gamma: 1.0,
        }
        .check()
        .map_err(|e| Error::Config(e.to_string()))
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig {
            beta1: self.beta1,
            beta2: self.beta2,
            ..AdamConfig::default()
        }
    }
}

/// One training phase.
#[derive(Debug, Clone, PartialEq)]
pub struct GanPlan {
    pub stage: Stage,
    pub weights: LossWeights,
    pub epochs: usize,
    pub decay_epochs: usize,
    pub steps_per_epoch: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub eval_every: usize,
    /// Tag mixed into the per-epoch random streams.
    pub phase: u64,
}

/// The four trainable actors with their optimizers and fake-image pools.
#[derive(Debug, Clone)]
pub struct GanState {
    pub g_r2s: Generator<f32>,
    pub g_s2r: Generator<f32>,
    pub d_s: Discriminator<f32>,
    pub d_r: Discriminator<f32>,
    pub opt_g_r2s: Adam<f32>,
    pub opt_g_s2r: Adam<f32>,
    pub opt_d_s: Adam<f32>,
    pub opt_d_r: Adam<f32>,
    pub pool_s: ImagePool,
    pub pool_r: ImagePool,
    /// Epochs completed in the current phase.
    pub epoch: usize,
    pub step: u64,
    pub best: Option<BestRecord>,
}

#[derive(Debug, Clone)]
pub struct BestRecord {
    pub metric: f64,
    pub epoch: usize,
    pub g_r2s: Generator<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalPoint {
    pub epoch: usize,
    pub step: u64,
    pub eval: Evaluation,
    pub metric: f64,
}

/// Per-epoch means of the recorded loss components.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochLosses {
    pub epoch: usize,
    pub mean: LossBundle,
}

#[derive(Debug, Clone, Default)]
pub struct GanOutcome {
    pub evals: Vec<EvalPoint>,
    pub losses: Vec<EpochLosses>,
}

/// Labeled real batch for the task term.
pub struct LabeledBatch<'a> {
    pub targets: Vec<usize>,
    pub expert: &'a TaskNetwork<f32>,
}

impl GanState {
    pub fn new(gen_arch: GeneratorArch, disc_arch: DiscriminatorArch, cfg: &GanConfig, seed: u64) -> Result<Self> {
        let g_r2s = Generator::new(gen_arch, Direction::RealToSynthetic, seed_for(seed, &[1]))?;
        let g_s2r = Generator::new(gen_arch, Direction::SyntheticToReal, seed_for(seed, &[2]))?;
        let d_s = Discriminator::new(disc_arch, Domain::Synthetic, seed_for(seed, &[3]))?;
        let d_r = Discriminator::new(disc_arch, Domain::Real, seed_for(seed, &[4]))?;
        let adam = cfg.adam();
        Ok(Self {
            opt_g_r2s: Adam::new(adam, g_r2s.params()),
            opt_g_s2r: Adam::new(adam, g_s2r.params()),
            opt_d_s: Adam::new(adam, d_s.params()),
            opt_d_r: Adam::new(adam, d_r.params()),
            g_r2s,
            g_s2r,
            d_s,
            d_r,
            pool_s: ImagePool::new(cfg.pool_size),
            pool_r: ImagePool::new(cfg.pool_size),
            epoch: 0,
            step: 0,
            best: None,
        })
    }

    /// Start a new phase: epoch counter and best record reset, weights,
    /// optimizer moments and pools carry over.
    pub fn begin_phase(&mut self) {
        self.epoch = 0;
        self.best = None;
    }

    /// One generator update followed by one update of both discriminators.
    #[allow(clippy::too_many_arguments)]
    pub fn step(
        &mut self,
        x_r: &Tensor<f32>,
        x_s: &Tensor<f32>,
        labeled: Option<&LabeledBatch<'_>>,
        stage: Stage,
        weights: &LossWeights,
        lr: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<LossBundle> {
        weights.check()?;
        let p_rs = self.g_r2s.bind(true);
        let p_sr = self.g_s2r.bind(true);
        let pd_s = self.d_s.bind(false);
        let pd_r = self.d_r.bind(false);

        let fake_s = self.g_r2s.forward(&p_rs, x_r)?;
        let rec_r = self.g_s2r.forward(&p_sr, &fake_s)?;
        let fake_r = self.g_s2r.forward(&p_sr, x_s)?;
        let rec_s = self.g_r2s.forward(&p_rs, &fake_r)?;
        let adv_r2s = gen_adversarial_loss(&self.d_s.forward(&pd_s, &fake_s)?)?;
        let adv_s2r = gen_adversarial_loss(&self.d_r.forward(&pd_r, &fake_r)?)?;
        let cycle = cycle_loss(x_r, &rec_r, x_s, &rec_s)?;
        let identity = if weights.lambda_id > 0.0 {
            let id_s = self.g_r2s.forward(&p_rs, x_s)?;
            let id_r = self.g_s2r.forward(&p_sr, x_r)?;
            identity_loss(x_s, &id_s, x_r, &id_r)?
        } else {
            Tensor::scalar(0.0)
        };
        let task = match (stage, labeled) {
            (Stage::B, _) => None,
            (Stage::C, Some(l)) => {
                let f = l.expert;
                let logits = f.forward(&f.bind(), &fake_s)?;
                Some(task_loss(&logits, &l.targets, f.num_classes())?)
            }
            (Stage::C, None) => return Err(Error::usage("stage C step needs a labeled batch")),
        };
        let terms = GeneratorTerms {
            adv_r2s,
            adv_s2r,
            cycle,
            identity,
            task,
        };
        let total = combine_generator_terms(&terms, weights, stage)?;
        let grads = total.backward();
        self.opt_g_r2s.step(self.g_r2s.params_mut(), &p_rs, &grads, lr)?;
        self.opt_g_s2r.step(self.g_s2r.params_mut(), &p_sr, &grads, lr)?;

        let pooled_s = pool_batch(&mut self.pool_s, &fake_s, rng)?;
        let pooled_r = pool_batch(&mut self.pool_r, &fake_r, rng)?;
        let pd_s = self.d_s.bind(true);
        let d_s = disc_loss(&self.d_s.forward(&pd_s, x_s)?, &self.d_s.forward(&pd_s, &pooled_s)?)?;
        let g = d_s.backward();
        self.opt_d_s.step(self.d_s.params_mut(), &pd_s, &g, lr)?;
        let pd_r = self.d_r.bind(true);
        let d_r = disc_loss(&self.d_r.forward(&pd_r, x_r)?, &self.d_r.forward(&pd_r, &pooled_r)?)?;
        let g = d_r.backward();
        self.opt_d_r.step(self.d_r.params_mut(), &pd_r, &g, lr)?;
        self.step += 1;

        let v = |t: &Tensor<f32>| -> Result<f64> { Ok(f64::from(t.item()?)) };
        let bundle = LossBundle {
            g_adv_r2s: v(&terms.adv_r2s)?,
            g_adv_s2r: v(&terms.adv_s2r)?,
            cycle: v(&terms.cycle)?,
            identity: v(&terms.identity)?,
            d_s: v(&d_s)?,
            d_r: v(&d_r)?,
            task: terms.task.as_ref().map(v).transpose()?,
            g_total: v(&total)?,
            alpha: weights.alpha,
            gamma: weights.gamma,
            lambda_cyc: weights.lambda_cyc,
            lambda_id: weights.lambda_id,
        };
        bundle.check()?;
        Ok(bundle)
    }
}

fn pool_batch(pool: &mut ImagePool, fake: &Tensor<f32>, rng: &mut ChaCha8Rng) -> Result<Tensor<f32>> {
    let (n, c, h, w) = fake.dims4()?;
    let per = c * h * w;
    let mut data = Vec::with_capacity(n * per);
    for i in 0..n {
        data.extend(pool.push_pop(fake.data()[i * per..(i + 1) * per].to_vec(), rng));
    }
    Ok(Tensor::from_vec(data, &[n, c, h, w])?)
}

/// Data for one phase. In stage C `real` is the labeled subset.
pub struct GanData<'a> {
    pub real: &'a DatasetSplit,
    pub synthetic: &'a DatasetSplit,
    pub real_val: &'a DatasetSplit,
    pub expert: &'a TaskNetwork<f32>,
}

/// Observer of a running phase; used for logging and snapshots.
pub trait GanHooks {
    fn on_epoch(&mut self, _state: &GanState, _losses: &EpochLosses, _eval: Option<&EvalPoint>) -> Result<()> {
        Ok(())
    }
}

impl GanHooks for () {}

fn mean_bundle(bundles: &[LossBundle]) -> LossBundle {
    let n = bundles.len().max(1) as f64;
    let mut m = bundles.first().copied().unwrap_or_default();
    let sum = |f: fn(&LossBundle) -> f64| bundles.iter().map(f).sum::<f64>() / n;
    m.g_adv_r2s = sum(|b| b.g_adv_r2s);
    m.g_adv_s2r = sum(|b| b.g_adv_s2r);
    m.cycle = sum(|b| b.cycle);
    m.identity = sum(|b| b.identity);
    m.d_s = sum(|b| b.d_s);
    m.d_r = sum(|b| b.d_r);
    m.g_total = sum(|b| b.g_total);
    if bundles.iter().all(|b| b.task.is_some()) && !bundles.is_empty() {
        m.task = Some(bundles.iter().map(|b| b.task.unwrap_or(0.0)).sum::<f64>() / n);
    }
    m
}

/// Run (or resume) a phase from `state.epoch` to `plan.epochs`.
///
/// Each epoch draws `steps_per_epoch` batches: real images walk through
/// reshuffled passes over `data.real`, synthetic images are drawn uniformly
/// at random. The expert judges `f∘G_{R→S}` on the real validation split
/// every `eval_every` epochs and after the last one; the best generator
/// (earliest on ties) is kept in `state.best`.
pub fn train_gan(
    state: &mut GanState,
    plan: &GanPlan,
    data: &GanData<'_>,
    seed: u64,
    hooks: &mut dyn GanHooks,
) -> Result<GanOutcome> {
    plan.weights.check()?;
    if plan.batch_size == 0 || plan.eval_every == 0 {
        return Err(Error::usage("batch size and evaluation interval must be positive"));
    }
    if data.real.is_empty() || data.synthetic.is_empty() {
        return Err(Error::usage("translation training needs real and synthetic images"));
    }
    let use_task = plan.stage == Stage::C;
    if use_task && data.real.num_labeled() != data.real.len() {
        return Err(Error::usage("stage C draws real batches from a fully labeled subset"));
    }
    if use_task && plan.weights.alpha > 0.0 && data.real.num_labeled() == 0 {
        return Err(Error::usage("alpha > 0 needs labeled real samples"));
    }
    let expert_sum = data.expert.params().checksum();
    let segmentation = data.expert.arch().head == Head::Segmenter;
    let mut outcome = GanOutcome::default();

    if plan.epochs == 0 && state.epoch == 0 {
        let eval = evaluate(data.expert, data.real_val, Some(&state.g_r2s), 16)?;
        let metric = eval.headline(segmentation);
        state.best = Some(BestRecord {
            metric,
            epoch: 0,
            g_r2s: state.g_r2s.clone(),
        });
        outcome.evals.push(EvalPoint {
            epoch: 0,
            step: state.step,
            eval,
            metric,
        });
    }

    while state.epoch < plan.epochs {
        let epoch = state.epoch;
        let mut rng = ChaCha8Rng::seed_from_u64(seed_for(seed, &[plan.phase, epoch as u64]));
        let lr = linear_decay_lr(plan.lr, epoch, plan.epochs, plan.decay_epochs);
        let mut order: Vec<usize> = Vec::new();
        let mut bundles = Vec::with_capacity(plan.steps_per_epoch);
        for _ in 0..plan.steps_per_epoch {
            let mut real_idx = Vec::with_capacity(plan.batch_size);
            for _ in 0..plan.batch_size {
                if order.is_empty() {
                    order = (0..data.real.len()).collect();
                    order.shuffle(&mut rng);
                }
                real_idx.push(order.pop().expect("refilled"));
            }
            let synth_idx: Vec<usize> = (0..plan.batch_size)
                .map(|_| rng.random_range(0..data.synthetic.len()))
                .collect();
            let real_imgs: Vec<&Image> = real_idx.iter().map(|&i| &data.real.samples()[i].image).collect();
            let synth_imgs: Vec<&Image> = synth_idx.iter().map(|&i| &data.synthetic.samples()[i].image).collect();
            let x_r = batch_images(&real_imgs)?;
            let x_s = batch_images(&synth_imgs)?;
            let labeled = if use_task {
                let labels: Vec<&Label> = real_idx
                    .iter()
                    .map(|&i| data.real.samples()[i].label.as_ref().expect("labeled subset"))
                    .collect();
                Some(LabeledBatch {
                    targets: labels.iter().flat_map(|l| l.targets()).collect(),
                    expert: data.expert,
                })
            } else {
                None
            };
            bundles.push(state.step(&x_r, &x_s, labeled.as_ref(), plan.stage, &plan.weights, lr, &mut rng)?);
        }
        state.epoch += 1;
        let losses = EpochLosses {
            epoch: state.epoch,
            mean: mean_bundle(&bundles),
        };
        let eval_point = if state.epoch.is_multiple_of(plan.eval_every) || state.epoch == plan.epochs {
            let eval = evaluate(data.expert, data.real_val, Some(&state.g_r2s), 16)?;
            let metric = eval.headline(segmentation);
            if state.best.as_ref().is_none_or(|b| metric > b.metric) {
                state.best = Some(BestRecord {
                    metric,
                    epoch: state.epoch,
                    g_r2s: state.g_r2s.clone(),
                });
            }
            Some(EvalPoint {
                epoch: state.epoch,
                step: state.step,
                eval,
                metric,
            })
        } else {
            None
        };
        hooks.on_epoch(state, &losses, eval_point.as_ref())?;
        outcome.losses.push(losses);
        outcome.evals.extend(eval_point);
    }
    if data.expert.params().checksum() != expert_sum {
        return Err(Error::Checkpoint(
            "frozen expert parameters changed during training".into(),
        ));
    }
    Ok(outcome)
}

// Snapshot layout: every component is stored as named tensors under a
// prefix; scalar state goes into the archive metadata.

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SnapshotMeta {
    models: Vec<crate::networks::CheckpointMeta>,
    adam: Vec<AdamMeta>,
    pool_capacity: usize,
    pool_lens: [usize; 2],
    epoch: usize,
    step: u64,
    best: Option<(f64, usize)>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AdamMeta {
    beta1: f64,
    beta2: f64,
    eps: f64,
    steps: u64,
}

fn push_params(a: &mut TensorArchive, prefix: &str, params: &[Param<f32>]) {
    for p in params {
        a.push(format!("{prefix}/{}", p.name), &p.shape, p.data.clone());
    }
}

fn push_adam(a: &mut TensorArchive, prefix: &str, opt: &Adam<f32>, store: &ParamStore<f32>) -> AdamMeta {
    let (m, v) = opt.moments();
    for (i, p) in store.params().iter().enumerate() {
        a.push(format!("{prefix}/m/{}", p.name), &p.shape, m[i].clone());
        a.push(format!("{prefix}/v/{}", p.name), &p.shape, v[i].clone());
    }
    let c = opt.config();
    AdamMeta {
        beta1: c.beta1,
        beta2: c.beta2,
        eps: c.eps,
        steps: opt.steps(),
    }
}

fn take(a: &TensorArchive, name: &str) -> Result<Vec<f32>> {
    a.get(name)
        .map(|t| t.data.clone())
        .ok_or_else(|| Error::Checkpoint(format!("snapshot lacks tensor {name}")))
}

fn take_params(a: &TensorArchive, prefix: &str, store: &ParamStore<f32>) -> Result<Vec<Param<f32>>> {
    store
        .params()
        .iter()
        .map(|p| {
            let t = a
                .get(&format!("{prefix}/{}", p.name))
                .ok_or_else(|| Error::Checkpoint(format!("snapshot lacks {prefix}/{}", p.name)))?;
            if t.shape != p.shape {
                return Err(Error::Checkpoint(format!(
                    "snapshot shape mismatch for {prefix}/{}",
                    p.name
                )));
            }
            Ok(Param {
                name: p.name.clone(),
                shape: p.shape.clone(),
                data: t.data.clone(),
            })
        })
        .collect()
}

fn take_adam(a: &TensorArchive, prefix: &str, meta: &AdamMeta, store: &ParamStore<f32>) -> Result<Adam<f32>> {
    let mut m = Vec::with_capacity(store.len());
    let mut v = Vec::with_capacity(store.len());
    for p in store.params() {
        m.push(take(a, &format!("{prefix}/m/{}", p.name))?);
        v.push(take(a, &format!("{prefix}/v/{}", p.name))?);
        if m.last().map(Vec::len) != Some(p.data.len()) || v.last().map(Vec::len) != Some(p.data.len()) {
            return Err(Error::Checkpoint(format!(
                "optimizer state size mismatch for {}",
                p.name
            )));
        }
    }
    let config = AdamConfig {
        beta1: meta.beta1,
        beta2: meta.beta2,
        eps: meta.eps,
    };
    Ok(Adam::from_state(config, m, v, meta.steps))
}

impl GanState {
    /// Serialize the complete resumable state.
    pub fn to_archive(&self) -> Result<TensorArchive> {
        let mut a = TensorArchive::new(serde_json::Value::Null);
        let ckpts = [
            Checkpoint::of_generator(&self.g_r2s, "snapshot", self.epoch, 0),
            Checkpoint::of_generator(&self.g_s2r, "snapshot", self.epoch, 0),
            Checkpoint::of_discriminator(&self.d_s, "snapshot", self.epoch, 0),
            Checkpoint::of_discriminator(&self.d_r, "snapshot", self.epoch, 0),
        ];
        let names = ["g_r2s", "g_s2r", "d_s", "d_r"];
        for (c, n) in ckpts.iter().zip(names) {
            push_params(&mut a, n, &c.params);
        }
        let adam = vec![
            push_adam(&mut a, "opt_g_r2s", &self.opt_g_r2s, self.g_r2s.params()),
            push_adam(&mut a, "opt_g_s2r", &self.opt_g_s2r, self.g_s2r.params()),
            push_adam(&mut a, "opt_d_s", &self.opt_d_s, self.d_s.params()),
            push_adam(&mut a, "opt_d_r", &self.opt_d_r, self.d_r.params()),
        ];
        for (name, pool) in [("pool_s", &self.pool_s), ("pool_r", &self.pool_r)] {
            for (i, img) in pool.images().iter().enumerate() {
                a.push(format!("{name}/{i}"), &[img.len()], img.clone());
            }
        }
        if let Some(b) = &self.best {
            push_params(&mut a, "best_g_r2s", b.g_r2s.params().params());
        }
        let meta = SnapshotMeta {
            models: ckpts.iter().map(|c| c.meta.clone()).collect(),
            adam,
            pool_capacity: self.pool_s.capacity(),
            pool_lens: [self.pool_s.len(), self.pool_r.len()],
            epoch: self.epoch,
            step: self.step,
            best: self.best.as_ref().map(|b| (b.metric, b.epoch)),
        };
        a.meta = serde_json::to_value(meta).map_err(|e| Error::Checkpoint(e.to_string()))?;
        Ok(a)
    }

    pub fn from_archive(a: &TensorArchive) -> Result<Self> {
        let meta: SnapshotMeta =
            serde_json::from_value(a.meta.clone()).map_err(|e| Error::Checkpoint(format!("snapshot metadata: {e}")))?;
        if meta.models.len() != 4 || meta.adam.len() != 4 {
            return Err(Error::Checkpoint("snapshot must hold four models".into()));
        }
        let empty = |m: &crate::networks::CheckpointMeta| Checkpoint {
            meta: m.clone(),
            params: Vec::new(),
        };
        // Build each model from its stored architecture, then load values.
        let build = |i: usize, prefix: &str| -> Result<Checkpoint> {
            let skeleton = empty(&meta.models[i]);
            let store: ParamStore<f32> = match meta.models[i].arch {
                crate::networks::ModelArch::Generator { arch, direction } => {
                    Generator::<f32>::new(arch, direction, 0)?.params().clone()
                }
                crate::networks::ModelArch::Discriminator { arch, domain } => {
                    Discriminator::<f32>::new(arch, domain, 0)?.params().clone()
                }
                crate::networks::ModelArch::Task { .. } => {
                    return Err(Error::Checkpoint("snapshot holds a task network".into()))
                }
            };
            Ok(Checkpoint {
                params: take_params(a, prefix, &store)?,
                ..skeleton
            })
        };
        let g_r2s: Generator<f32> = build(0, "g_r2s")?.generator()?;
        let g_s2r: Generator<f32> = build(1, "g_s2r")?.generator()?;
        let d_s: Discriminator<f32> = build(2, "d_s")?.discriminator()?;
        let d_r: Discriminator<f32> = build(3, "d_r")?.discriminator()?;
        if g_r2s.direction() != Direction::RealToSynthetic
            || g_s2r.direction() != Direction::SyntheticToReal
            || d_s.domain() != Domain::Synthetic
            || d_r.domain() != Domain::Real
        {
            return Err(Error::Checkpoint("snapshot models are in the wrong roles".into()));
        }
        let pool = |name: &str, len: usize| -> Result<ImagePool> {
            let images = (0..len)
                .map(|i| take(a, &format!("{name}/{i}")))
                .collect::<Result<Vec<_>>>()?;
            if len > meta.pool_capacity {
                return Err(Error::Checkpoint("pool exceeds its capacity".into()));
            }
            Ok(ImagePool::from_images(meta.pool_capacity, images))
        };
        let best = match meta.best {
            Some((metric, epoch)) => {
                let mut g = g_r2s.clone();
                let params = take_params(a, "best_g_r2s", g.params())?;
                g.params_mut().load(params)?;
                Some(BestRecord {
                    metric,
                    epoch,
                    g_r2s: g,
                })
            }
            None => None,
        };
        Ok(Self {
            opt_g_r2s: take_adam(a, "opt_g_r2s", &meta.adam[0], g_r2s.params())?,
            opt_g_s2r: take_adam(a, "opt_g_s2r", &meta.adam[1], g_s2r.params())?,
            opt_d_s: take_adam(a, "opt_d_s", &meta.adam[2], d_s.params())?,
            opt_d_r: take_adam(a, "opt_d_r", &meta.adam[3], d_r.params())?,
            g_r2s,
            g_s2r,
            d_s,
            d_r,
            pool_s: pool("pool_s", meta.pool_lens[0])?,
            pool_r: pool("pool_r", meta.pool_lens[1])?,
            epoch: meta.epoch,
            step: meta.step,
            best,
        })
    }
}
