//! Stage A (expert), stage B (translation), stage C (task-aware
//! fine-tuning), the equal-compute stage B continuation and the small-data
//! supervised baseline.

use serde_json::json;

use super::{tag_num, Context, RunDir};
use crate::config::EpochBasis;
use crate::data::{labeled_subset_indices, SubsetSize};
use crate::datamodel::DatasetSplit;
use crate::error::{Error, Result};
use crate::losses::{LossWeights, Stage};
use crate::metrics::{Evaluation, MetricRecord};
use crate::networks::{Checkpoint, TaskNetwork, TensorArchive};
use crate::pipeline::{
    evaluate, seed_for, train_gan, train_task_network, EpochLosses, EvalPoint, GanData, GanHooks, GanPlan, GanState,
};

const PHASE_B: u64 = 0xB;
const PHASE_C: u64 = 0xC;
const EXPERT: &str = "expert.ckpt";
const STAGE_B_SNAPSHOT: &str = "stage_b.snapshot";
const STAGE_B_GENERATOR: &str = "stage_b_g_r2s.ckpt";

#[derive(Debug, Clone)]
pub struct ExpertReport {
    pub best_epoch: usize,
    pub in_domain: Evaluation,
    /// The expert on untranslated real validation images.
    pub m2: Evaluation,
}

#[derive(Debug, Clone)]
pub struct I2iReport {
    pub best_metric: f64,
    pub best_epoch: usize,
    pub m2: f64,
    /// Epoch a snapshot was resumed from, if any.
    pub resumed_from: Option<usize>,
}

/// Outcome of one stage C run, continuation or small-data baseline.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseResult {
    pub tag: String,
    pub n_labeled: usize,
    pub best_metric: f64,
    pub best_epoch: usize,
}

#[derive(Debug, Clone)]
pub struct FinetuneReport {
    pub result: PhaseResult,
    pub alpha: f64,
    pub gamma: f64,
    /// Best stage B metric the run started from.
    pub m1: f64,
    /// Set for `alpha == 0`, where the objective has no task term.
    pub reduces_to_task_agnostic: bool,
}

impl FinetuneReport {
    pub fn text(&self) -> String {
        let mut s = format!(
            "stage C alpha={} gamma={} labeled={}: best {:.4} at epoch {} (stage B best {:.4})\n",
            self.alpha, self.gamma, self.result.n_labeled, self.result.best_metric, self.result.best_epoch, self.m1
        );
        if self.reduces_to_task_agnostic {
            s.push_str("alpha = 0: the objective reduces to task-agnostic training\n");
        }
        s
    }
}

fn record(ctx: &Context, stage: &str, epoch: usize, metric: &str, value: f64) -> MetricRecord {
    MetricRecord {
        run_id: ctx.cfg.run_id.clone(),
        stage: stage.into(),
        alpha: None,
        gamma: None,
        n_labeled: None,
        epoch,
        metric: metric.into(),
        value,
    }
}

fn headline_name(ctx: &Context) -> &'static str {
    if ctx.segmentation() {
        "miou"
    } else {
        "accuracy"
    }
}

fn stage_a_key(ctx: &Context) -> serde_json::Value {
    let c = &ctx.cfg;
    json!({"seed": c.seed, "task": c.task, "data": c.data, "networks": c.networks, "stage_a": c.stage_a})
}

fn stage_b_key(ctx: &Context) -> serde_json::Value {
    json!({"expert": stage_a_key(ctx), "stage_b": ctx.cfg.stage_b})
}

pub fn train_expert(ctx: &Context) -> Result<ExpertReport> {
    let cfg = &ctx.cfg;
    if cfg.stage_a.epochs == 0 {
        ctx.run
            .warn("stage A has zero epochs: the expert checkpoint holds the initialized network");
    }
    ctx.run.guard_reset("stage_a", &stage_a_key(ctx))?;
    let metric = headline_name(ctx);
    let mut records = Vec::new();
    let out = train_task_network(
        cfg.networks.task,
        &cfg.stage_a,
        &ctx.data.synthetic_train,
        &ctx.data.synthetic_val,
        seed_for(cfg.seed, &[0xA]),
        |r| {
            ctx.run.log(&format!(
                "stage A epoch {}: train loss {:.4}, val {metric} {:.4}",
                r.epoch,
                r.train_loss,
                r.eval.headline(ctx.segmentation())
            ));
            if r.train_loss.is_finite() {
                records.push(record(ctx, "A", r.epoch, "train_loss", r.train_loss));
            }
            records.push(record(
                ctx,
                "A",
                r.epoch,
                &format!("val_{metric}"),
                r.eval.headline(ctx.segmentation()),
            ));
        },
    )?;
    ctx.run.append_records(&records)?;
    let ckpt = Checkpoint::of_task(&out.network, "A", out.best_epoch, cfg.seed);
    ctx.run.write_artifact(
        "checkpoints/expert",
        &ctx.run.checkpoint(EXPERT),
        &ckpt.to_archive()?.encode()?,
    )?;
    let in_domain = evaluate(&out.network, &ctx.data.synthetic_val, None, cfg.evaluate.batch_size)?;
    let m2 = evaluate(&out.network, &ctx.data.real_val, None, cfg.evaluate.batch_size)?;
    let seg = ctx.segmentation();
    ctx.run.append_records(&[
        record(
            ctx,
            "A",
            out.best_epoch,
            &format!("in_domain_{metric}"),
            in_domain.headline(seg),
        ),
        record(ctx, "M2", out.best_epoch, metric, m2.headline(seg)),
    ])?;
    ctx.run.log(&format!(
        "expert: best epoch {}, in-domain {metric} {:.4}, untranslated real {metric} {:.4}",
        out.best_epoch,
        in_domain.headline(seg),
        m2.headline(seg)
    ));
    Ok(ExpertReport {
        best_epoch: out.best_epoch,
        in_domain,
        m2,
    })
}

/// The frozen expert of this run, or an error naming the missing stage.
pub fn load_expert(ctx: &Context) -> Result<TaskNetwork<f32>> {
    let path = ctx.run.checkpoint(EXPERT);
    if !path.exists() {
        return Err(Error::Missing(format!(
            "stage A expert checkpoint {} (run train-expert first)",
            path.display()
        )));
    }
    ctx.run.guard("stage_a", &stage_a_key(ctx))?;
    let f: TaskNetwork<f32> = Checkpoint::read(&path)?.task()?;
    if f.num_classes() != ctx.cfg.num_classes() {
        return Err(Error::usage(format!(
            "expert predicts {} classes but the dataset has {}",
            f.num_classes(),
            ctx.cfg.num_classes()
        )));
    }
    Ok(f.freeze())
}

/// Snapshots the state after every epoch and records losses and metrics.
struct RunHooks<'a> {
    ctx: &'a Context,
    snapshot: std::path::PathBuf,
    stage: &'a str,
    alpha: Option<f64>,
    gamma: Option<f64>,
    n_labeled: Option<usize>,
}

impl GanHooks for RunHooks<'_> {
    fn on_epoch(&mut self, state: &GanState, losses: &EpochLosses, eval: Option<&EvalPoint>) -> Result<()> {
        let m = &losses.mean;
        let mut values = vec![
            ("g_adv_r2s", m.g_adv_r2s),
            ("g_adv_s2r", m.g_adv_s2r),
            ("cycle", m.cycle),
            ("identity", m.identity),
            ("d_s", m.d_s),
            ("d_r", m.d_r),
            ("g_total", m.g_total),
        ];
        if let Some(t) = m.task {
            values.push(("task", t));
        }
        let metric = headline_name(self.ctx);
        if let Some(e) = eval {
            values.push((metric, e.metric));
        }
        let records: Vec<MetricRecord> = values
            .iter()
            .map(|(name, v)| MetricRecord {
                alpha: self.alpha,
                gamma: self.gamma,
                n_labeled: self.n_labeled,
                ..record(self.ctx, self.stage, losses.epoch, name, *v)
            })
            .collect();
        self.ctx.run.append_records(&records)?;
        let eval_note = eval
            .map(|e| format!(", f∘G {metric} {:.4}", e.metric))
            .unwrap_or_default();
        self.ctx.run.log(&format!(
            "{} epoch {}: G {:.4} cyc {:.4} D_S {:.4} D_R {:.4}{}{eval_note}",
            self.stage,
            losses.epoch,
            m.g_total,
            m.cycle,
            m.d_s,
            m.d_r,
            m.task.map(|t| format!(" task {t:.4}")).unwrap_or_default()
        ));
        crate::io::write_atomic(&self.snapshot, &state.to_archive()?.encode()?)
    }
}

fn read_state(path: &std::path::Path) -> Result<GanState> {
    GanState::from_archive(&TensorArchive::read(path)?)
}

pub fn train_i2i(ctx: &Context) -> Result<I2iReport> {
    let cfg = &ctx.cfg;
    let f = load_expert(ctx)?;
    ctx.run.guard_reset("stage_b", &stage_b_key(ctx))?;
    let snap = ctx.run.checkpoint(STAGE_B_SNAPSHOT);
    let (mut state, resumed_from) = if snap.exists() {
        let s = read_state(&snap)?;
        ctx.run.log(&format!("stage B: resuming from epoch {}", s.epoch));
        let e = s.epoch;
        (s, Some(e))
    } else {
        let s = GanState::new(
            cfg.networks.generator,
            cfg.networks.discriminator,
            &cfg.stage_b,
            seed_for(cfg.seed, &[PHASE_B, 0]),
        )?;
        (s, None)
    };
    let b = &cfg.stage_b;
    let plan = GanPlan {
        stage: Stage::B,
        weights: LossWeights {
            lambda_cyc: b.lambda_cyc,
            lambda_id: b.lambda_id,
            ..LossWeights::default()
        },
        epochs: b.epochs,
        decay_epochs: b.decay_epochs,
        steps_per_epoch: ctx.data.real_train.len().div_ceil(b.batch_size),
        batch_size: b.batch_size,
        lr: b.lr,
        eval_every: b.eval_every,
        phase: PHASE_B,
    };
    let real = ctx.data.real_train.without_labels();
    let synthetic = ctx.data.synthetic_train.without_labels();
    let data = GanData {
        real: &real,
        synthetic: &synthetic,
        real_val: &ctx.data.real_val,
        expert: &f,
    };
    let mut hooks = RunHooks {
        ctx,
        snapshot: snap.clone(),
        stage: "B",
        alpha: None,
        gamma: None,
        n_labeled: None,
    };
    train_gan(&mut state, &plan, &data, seed_for(cfg.seed, &[PHASE_B]), &mut hooks)?;
    ctx.run
        .write_artifact("checkpoints/stage_b_state", &snap, &state.to_archive()?.encode()?)?;
    let best = state
        .best
        .as_ref()
        .ok_or_else(|| Error::Checkpoint("stage B finished without an evaluation".into()))?;
    let g = Checkpoint::of_generator(&best.g_r2s, "B", best.epoch, cfg.seed);
    ctx.run.write_artifact(
        "checkpoints/stage_b_g_r2s",
        &ctx.run.checkpoint(STAGE_B_GENERATOR),
        &g.to_archive()?.encode()?,
    )?;
    let seg = ctx.segmentation();
    let m2 = evaluate(&f, &ctx.data.real_val, None, cfg.evaluate.batch_size)?.headline(seg);
    ctx.run
        .append_records(&[record(ctx, "M1", best.epoch, headline_name(ctx), best.metric)])?;
    ctx.run.log(&format!(
        "stage B: best f∘G {} {:.4} at epoch {} (untranslated {:.4})",
        headline_name(ctx),
        best.metric,
        best.epoch,
        m2
    ));
    Ok(I2iReport {
        best_metric: best.metric,
        best_epoch: best.epoch,
        m2,
        resumed_from,
    })
}

/// Final stage B state, the starting point of every stage C run, and the
/// best stage B metric.
fn stage_b_final(ctx: &Context) -> Result<(GanState, f64)> {
    let snap = ctx.run.checkpoint(STAGE_B_SNAPSHOT);
    if !snap.exists() {
        return Err(Error::Missing(format!(
            "stage B translation state {} (run train-i2i first)",
            snap.display()
        )));
    }
    ctx.run.guard("stage_b", &stage_b_key(ctx))?;
    let mut state = read_state(&snap)?;
    if state.epoch < ctx.cfg.stage_b.epochs {
        return Err(Error::Missing(format!(
            "stage B stopped after epoch {} of {} (rerun train-i2i to finish it)",
            state.epoch, ctx.cfg.stage_b.epochs
        )));
    }
    let best = state.best.as_ref().map_or(f64::NAN, |b| b.metric);
    state.begin_phase();
    Ok((state, best))
}

/// Replicate `r` uses labeled subset seed `subset_seed + r`.
fn subset(ctx: &Context, size: SubsetSize, replicate: u64) -> Result<(Vec<usize>, DatasetSplit)> {
    let seed = ctx.cfg.stage_c.subset_seed.wrapping_add(replicate);
    let mut idx = labeled_subset_indices(&ctx.data.real_train, size, seed)?;
    idx.sort_unstable();
    let split = ctx.data.real_train.select(&idx)?;
    Ok((idx, split))
}

fn stage_c_steps(ctx: &Context, n_labeled: usize) -> usize {
    let b = ctx.cfg.stage_b.batch_size;
    match ctx.cfg.stage_c.epoch_basis {
        EpochBasis::Labeled => n_labeled.div_ceil(b),
        EpochBasis::Full => ctx.data.real_train.len().div_ceil(b),
    }
}

struct Phase<'a> {
    tag: String,
    stage: Stage,
    weights: LossWeights,
    real: &'a DatasetSplit,
    n_labeled: usize,
    replicate: u64,
    key: serde_json::Value,
    record_stage: &'a str,
}

fn run_phase(ctx: &Context, f: &TaskNetwork<f32>, p: Phase<'_>) -> Result<PhaseResult> {
    let c = &ctx.cfg.stage_c;
    let snap = ctx.run.checkpoint(&format!("{}.snapshot", p.tag));
    ctx.run.guard_reset(&p.tag, &p.key)?;
    let mut state = if snap.exists() {
        let s = read_state(&snap)?;
        ctx.run.log(&format!("{}: resuming from epoch {}", p.tag, s.epoch));
        s
    } else {
        stage_b_final(ctx)?.0
    };
    let plan = GanPlan {
        stage: p.stage,
        weights: p.weights,
        epochs: c.epochs,
        decay_epochs: c.decay_epochs,
        steps_per_epoch: stage_c_steps(ctx, p.n_labeled),
        batch_size: ctx.cfg.stage_b.batch_size,
        lr: ctx.cfg.stage_b.lr,
        eval_every: c.eval_every,
        phase: PHASE_C,
    };
    let synthetic = ctx.data.synthetic_train.without_labels();
    let data = GanData {
        real: p.real,
        synthetic: &synthetic,
        real_val: &ctx.data.real_val,
        expert: f,
    };
    let is_c = p.stage == Stage::C;
    let mut hooks = RunHooks {
        ctx,
        snapshot: snap.clone(),
        stage: p.record_stage,
        alpha: is_c.then_some(p.weights.alpha),
        gamma: is_c.then_some(p.weights.gamma),
        n_labeled: Some(p.n_labeled),
    };
    let seed = seed_for(ctx.cfg.seed, &[PHASE_C, p.replicate]);
    train_gan(&mut state, &plan, &data, seed, &mut hooks)?;
    ctx.run.write_artifact(
        &format!("checkpoints/{}_state", p.tag),
        &snap,
        &state.to_archive()?.encode()?,
    )?;
    let best = state
        .best
        .as_ref()
        .ok_or_else(|| Error::Checkpoint(format!("{} finished without an evaluation", p.tag)))?;
    let g = Checkpoint::of_generator(&best.g_r2s, p.record_stage, best.epoch, seed);
    let path = ctx.run.checkpoint(&format!("{}_g_r2s.ckpt", p.tag));
    ctx.run.write_artifact(
        &format!("checkpoints/{}_g_r2s", p.tag),
        &path,
        &g.to_archive()?.encode()?,
    )?;
    Ok(PhaseResult {
        tag: p.tag,
        n_labeled: p.n_labeled,
        best_metric: best.metric,
        best_epoch: best.epoch,
    })
}

pub(super) fn finetune_tag(alpha: f64, gamma: f64, n: usize, replicate: u64) -> String {
    format!("c_a{}_g{}_n{n}_r{replicate}", tag_num(alpha), tag_num(gamma))
}

fn stage_c_key(ctx: &Context, idx: &[usize], extra: serde_json::Value) -> serde_json::Value {
    let c = &ctx.cfg.stage_c;
    json!({
        "stage_b": stage_b_key(ctx),
        "subset": idx,
        "epochs": c.epochs,
        "decay_epochs": c.decay_epochs,
        "eval_every": c.eval_every,
        "epoch_basis": c.epoch_basis,
        "seed": ctx.cfg.seed,
        "run": extra,
    })
}

/// One task-aware fine-tuning run from the final stage B state.
pub fn finetune(ctx: &Context, alpha: f64, gamma: f64, size: SubsetSize, replicate: u64) -> Result<FinetuneReport> {
    let weights = LossWeights {
        alpha,
        gamma,
        ..ctx.cfg.stage_c_weights()
    };
    weights.check()?;
    if matches!(size, SubsetSize::Count(0)) {
        return Err(Error::usage(if alpha > 0.0 {
            "alpha > 0 needs labeled real samples, but the labeled subset is empty"
        } else {
            "stage C draws its batches from the labeled subset, which is empty"
        }));
    }
    let f = load_expert(ctx)?;
    let (_, m1) = stage_b_final(ctx)?;
    let (idx, split) = subset(ctx, size, replicate)?;
    let n = idx.len();
    let tag = finetune_tag(alpha, gamma, n, replicate);
    let key = stage_c_key(
        ctx,
        &idx,
        json!({"alpha": alpha, "gamma": gamma, "lambda_cyc": weights.lambda_cyc, "lambda_id": weights.lambda_id}),
    );
    let result = run_phase(
        ctx,
        &f,
        Phase {
            tag,
            stage: Stage::C,
            weights,
            real: &split,
            n_labeled: n,
            replicate,
            key,
            record_stage: "C",
        },
    )?;
    let report = FinetuneReport {
        m1,
        result,
        alpha,
        gamma,
        reduces_to_task_agnostic: alpha == 0.0,
    };
    ctx.run.log(report.text().trim_end());
    Ok(report)
}

/// Task-agnostic continuation of stage B with the step budget and schedule
/// of a stage C run on `size` labeled samples, but drawing from the whole
/// unlabeled real training split.
pub fn continuation(ctx: &Context, size: SubsetSize, replicate: u64) -> Result<PhaseResult> {
    let f = load_expert(ctx)?;
    let (idx, _) = subset(ctx, size, replicate)?;
    let n = idx.len();
    let real = ctx.data.real_train.without_labels();
    let key = stage_c_key(ctx, &[], json!({"continuation_steps": stage_c_steps(ctx, n)}));
    let weights = LossWeights {
        alpha: 0.0,
        ..ctx.cfg.stage_c_weights()
    };
    let result = run_phase(
        ctx,
        &f,
        Phase {
            tag: format!("cont_n{n}_r{replicate}"),
            stage: Stage::B,
            weights,
            real: &real,
            n_labeled: n,
            replicate,
            key,
            record_stage: "B+",
        },
    )?;
    ctx.run.log(&format!(
        "continuation ({} steps per epoch): best {:.4} at epoch {}",
        stage_c_steps(ctx, n),
        result.best_metric,
        result.best_epoch
    ));
    Ok(result)
}

/// Supervised network trained from scratch on exactly the labeled subset
/// of replicate `replicate`. Reuses a matching checkpoint when present.
pub fn train_m3(ctx: &Context, size: SubsetSize, replicate: u64) -> Result<PhaseResult> {
    let cfg = &ctx.cfg;
    let (idx, split) = subset(ctx, size, replicate)?;
    let n = idx.len();
    let tag = format!("m3_n{n}_r{replicate}");
    let key = json!({"data": cfg.data, "task": cfg.networks.task, "m3": cfg.m3, "subset": idx, "seed": cfg.seed});
    let path = ctx.run.checkpoint(&format!("{tag}.ckpt"));
    let stored_key = ctx.run.checkpoint(&format!("{tag}.key.json"));
    let seg = ctx.segmentation();
    if path.exists() && stored_key.exists() {
        ctx.run.guard(&tag, &key)?;
        let ckpt = Checkpoint::read(&path)?;
        let net: TaskNetwork<f32> = ckpt.task()?;
        let metric = evaluate(&net, &ctx.data.real_val, None, cfg.evaluate.batch_size)?.headline(seg);
        return Ok(PhaseResult {
            tag,
            n_labeled: n,
            best_metric: metric,
            best_epoch: ckpt.meta.epoch,
        });
    }
    ctx.run.guard_reset(&tag, &key)?;
    let out = train_task_network(
        cfg.networks.task,
        &cfg.m3,
        &split,
        &ctx.data.real_val,
        seed_for(cfg.seed, &[0x3, replicate]),
        |_| {},
    )?;
    let ckpt = Checkpoint::of_task(&out.network, "M3", out.best_epoch, cfg.seed);
    ctx.run
        .write_artifact(&format!("checkpoints/{tag}"), &path, &ckpt.to_archive()?.encode()?)?;
    ctx.run.append_records(&[MetricRecord {
        n_labeled: Some(n),
        ..record(ctx, "M3", out.best_epoch, headline_name(ctx), out.best_metric)
    }])?;
    ctx.run.log(&format!(
        "M3 on {n} labeled real samples: best {:.4} at epoch {}",
        out.best_metric, out.best_epoch
    ));
    Ok(PhaseResult {
        tag,
        n_labeled: n,
        best_metric: out.best_metric,
        best_epoch: out.best_epoch,
    })
}

impl RunDir {
    /// Like `guard`, but a changed key discards the stale artifacts of
    /// `name` instead of failing: used by commands that (re)produce them.
    fn guard_reset(&self, name: &str, key: &serde_json::Value) -> Result<()> {
        if self.guard(name, key).is_ok() {
            return Ok(());
        }
        self.log(&format!("{name}: configuration changed, starting from scratch"));
        for file in [format!("{name}.key.json"), format!("{name}.snapshot")] {
            let p = self.checkpoint(&file);
            if p.exists() {
                std::fs::remove_file(&p).map_err(|e| Error::io(&p, e))?;
            }
        }
        self.guard(name, key)
    }
}
