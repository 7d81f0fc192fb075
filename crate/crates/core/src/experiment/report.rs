//! Baseline table, per-class IoU, domain gap and resolution sweep.

use std::collections::BTreeSet;
use std::path::PathBuf;

use super::plot::{Chart, Series};
use super::stages::{finetune_tag, load_expert};
use super::Context;
use crate::data::preprocess::{resize_bilinear, resize_nearest};
use crate::datamodel::{DatasetSplit, Label, Sample};
use crate::error::{Error, Result};
use crate::metrics::{domain_gap, percent, Evaluation};
use crate::networks::{Checkpoint, Generator, TaskNetwork};
use crate::pipeline::evaluate;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Baseline {
    /// Expert on task-agnostic translations.
    M1,
    /// Expert on untranslated real images.
    M2,
    /// Supervised network trained on the labeled real subset.
    M3,
}

impl std::str::FromStr for Baseline {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "m1" => Ok(Baseline::M1),
            "m2" => Ok(Baseline::M2),
            "m3" => Ok(Baseline::M3),
            other => Err(Error::usage(format!(
                "unknown baseline {other:?} (expected m1, m2 or m3)"
            ))),
        }
    }
}

/// Checkpoint overrides; `None` uses the run directory's artifacts.
#[derive(Debug, Clone)]
pub struct EvalRefs {
    pub expert: Option<PathBuf>,
    pub generator: Option<PathBuf>,
    pub m3: Option<PathBuf>,
    pub baselines: BTreeSet<Baseline>,
}

impl Default for EvalRefs {
    fn default() -> Self {
        Self {
            expert: None,
            generator: None,
            m3: None,
            baselines: [Baseline::M1, Baseline::M2, Baseline::M3].into_iter().collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineRow {
    pub name: String,
    pub eval: Evaluation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResolutionRow {
    pub height: usize,
    pub width: usize,
    pub expert: f64,
    pub translated: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub segmentation: bool,
    pub in_domain: Evaluation,
    /// The expert on untranslated real validation images.
    pub untranslated: Evaluation,
    pub rows: Vec<BaselineRow>,
    /// Oracle minus untranslated, in percentage points.
    pub gap: f64,
    pub resolution: Vec<ResolutionRow>,
}

impl EvalReport {
    pub fn text(&self) -> String {
        let metric = if self.segmentation { "mIoU" } else { "accuracy" };
        let h = |e: &Evaluation| e.headline(self.segmentation);
        let mut s = format!("{:<24} {metric:>9}\n", "model");
        s.push_str(&format!(
            "{:<24} {:>9}\n",
            "in-domain (oracle)",
            percent(h(&self.in_domain))
        ));
        for r in &self.rows {
            s.push_str(&format!("{:<24} {:>9}\n", r.name, percent(h(&r.eval))));
        }
        s.push_str("\nper-class IoU\n");
        let c = self.in_domain.iou.len();
        s.push_str(&format!("{:<24}", "model"));
        for k in 0..c {
            s.push_str(&format!(" {:>7}", format!("c{k}")));
        }
        s.push('\n');
        let iou_row = |name: &str, e: &Evaluation| {
            let mut line = format!("{name:<24}");
            for v in &e.iou {
                line.push_str(&format!(" {:>7}", v.map_or("-".to_string(), percent)));
            }
            line.push('\n');
            line
        };
        s.push_str(&iou_row("in-domain (oracle)", &self.in_domain));
        for r in &self.rows {
            s.push_str(&iou_row(&r.name, &r.eval));
        }
        s.push_str(&format!("\ndomain gap (oracle - untranslated): {:.2}\n", self.gap));
        if !self.resolution.is_empty() {
            s.push_str("\nresolution  expert  translated\n");
            for r in &self.resolution {
                s.push_str(&format!(
                    "{:<11} {:>6}  {}\n",
                    format!("{}x{}", r.height, r.width),
                    percent(r.expert),
                    r.translated.map_or("-".into(), percent)
                ));
            }
        }
        s
    }
}

fn read_generator(path: &std::path::Path, what: &str) -> Result<Generator<f32>> {
    if !path.exists() {
        return Err(Error::usage(format!(
            "baseline {what} needs the checkpoint {}, which does not exist",
            path.display()
        )));
    }
    Checkpoint::read(path)?.generator()
}

fn resized(split: &DatasetSplit, h: usize, w: usize) -> Result<DatasetSplit> {
    let samples = split
        .samples()
        .iter()
        .map(|s| {
            let label = match &s.label {
                Some(Label::Mask(m)) => Some(Label::Mask(resize_nearest(m, h, w)?)),
                other => other.clone(),
            };
            Ok(Sample {
                image: resize_bilinear(&s.image, h, w)?,
                label,
                domain: s.domain,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DatasetSplit::new(samples, split.num_classes()))
}

pub fn evaluate_run(ctx: &Context, refs: &EvalRefs) -> Result<EvalReport> {
    let cfg = &ctx.cfg;
    let bs = cfg.evaluate.batch_size;
    let seg = ctx.segmentation();
    let f: TaskNetwork<f32> = match &refs.expert {
        Some(p) => {
            if !p.exists() {
                return Err(Error::usage(format!(
                    "expert checkpoint {} does not exist",
                    p.display()
                )));
            }
            Checkpoint::read(p)?.task::<f32>()?.freeze()
        }
        None => load_expert(ctx)?,
    };
    if f.num_classes() != cfg.num_classes() {
        return Err(Error::usage(format!(
            "class-count mismatch: the expert predicts {} classes, the dataset has {}",
            f.num_classes(),
            cfg.num_classes()
        )));
    }
    let real_val = &ctx.data.real_val;
    let in_domain = evaluate(&f, &ctx.data.synthetic_val, None, bs)?;
    let m2 = evaluate(&f, real_val, None, bs)?;
    let mut rows = Vec::new();
    let mut translator = None;
    let size = cfg.stage_c.labeled;
    for b in &refs.baselines {
        match b {
            Baseline::M1 => {
                let p = refs
                    .generator
                    .clone()
                    .unwrap_or_else(|| ctx.run.checkpoint("stage_b_g_r2s.ckpt"));
                let g = read_generator(&p, "M1")?;
                rows.push(BaselineRow {
                    name: "M1 task-agnostic".into(),
                    eval: evaluate(&f, real_val, Some(&g), bs)?,
                });
                translator = Some(g);
            }
            Baseline::M2 => rows.push(BaselineRow {
                name: "M2 untranslated".into(),
                eval: m2.clone(),
            }),
            Baseline::M3 => {
                let p = match &refs.m3 {
                    Some(p) => p.clone(),
                    None => {
                        let n = size.resolve(ctx.data.real_train.num_labeled())?;
                        ctx.run.checkpoint(&format!("m3_n{n}_r0.ckpt"))
                    }
                };
                if !p.exists() {
                    return Err(Error::usage(format!(
                        "baseline M3 needs the checkpoint {} (run finetune or sweep-gt first)",
                        p.display()
                    )));
                }
                let net: TaskNetwork<f32> = Checkpoint::read(&p)?.task()?;
                rows.push(BaselineRow {
                    name: "M3 supervised".into(),
                    eval: evaluate(&net, real_val, None, bs)?,
                });
            }
        }
    }
    if let Ok(n) = size.resolve(ctx.data.real_train.num_labeled()) {
        let c = &cfg.stage_c;
        let p = ctx
            .run
            .checkpoint(&format!("{}_g_r2s.ckpt", finetune_tag(c.alpha, c.gamma, n, 0)));
        if p.exists() {
            let g: Generator<f32> = Checkpoint::read(&p)?.generator()?;
            rows.push(BaselineRow {
                name: format!("ours alpha={}", c.alpha),
                eval: evaluate(&f, real_val, Some(&g), bs)?,
            });
        }
    }
    let gap = domain_gap(m2.headline(seg) * 100.0, in_domain.headline(seg) * 100.0)?;

    let mut resolution = Vec::new();
    for &[h, w] in &cfg.evaluate.resolutions {
        let split = resized(real_val, h, w)?;
        resolution.push(ResolutionRow {
            height: h,
            width: w,
            expert: evaluate(&f, &split, None, bs)?.headline(seg),
            translated: translator
                .as_ref()
                .map(|g| evaluate(&f, &split, Some(g), bs).map(|e| e.headline(seg)))
                .transpose()?,
        });
    }
    let report = EvalReport {
        segmentation: seg,
        in_domain,
        untranslated: m2,
        rows,
        gap,
        resolution,
    };
    write_report(ctx, &report)?;
    Ok(report)
}

fn write_report(ctx: &Context, r: &EvalReport) -> Result<()> {
    let seg = r.segmentation;
    let mut table = vec![vec![
        "in-domain (oracle)".to_string(),
        format!("{:.6}", r.in_domain.miou),
        format!("{:.6}", r.in_domain.accuracy),
    ]];
    for row in &r.rows {
        table.push(vec![
            row.name.clone(),
            format!("{:.6}", row.eval.miou),
            format!("{:.6}", row.eval.accuracy),
        ]);
    }
    ctx.run.write_table(
        "metrics/evaluate",
        "evaluate.csv",
        &["model", "miou", "accuracy"],
        &table,
    )?;
    let c = r.in_domain.iou.len();
    let header: Vec<String> = std::iter::once("model".to_string())
        .chain((0..c).map(|k| format!("class_{k}")))
        .collect();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let iou_rows: Vec<Vec<String>> = std::iter::once(("in-domain (oracle)", &r.in_domain))
        .chain(r.rows.iter().map(|x| (x.name.as_str(), &x.eval)))
        .map(|(name, e)| {
            std::iter::once(name.to_string())
                .chain(e.iou.iter().map(|v| v.map_or(String::new(), |v| format!("{v:.6}"))))
                .collect()
        })
        .collect();
    ctx.run
        .write_table("metrics/per_class_iou", "per_class_iou.csv", &header, &iou_rows)?;
    ctx.run.write_table(
        "metrics/domain_gap",
        "domain_gap.csv",
        &["oracle", "untranslated", "gap"],
        &[vec![
            percent(r.in_domain.headline(seg)),
            percent(r.untranslated.headline(seg)),
            format!("{:.2}", r.gap),
        ]],
    )?;
    if !r.resolution.is_empty() {
        let rows: Vec<Vec<String>> = r
            .resolution
            .iter()
            .map(|x| {
                vec![
                    x.height.to_string(),
                    x.width.to_string(),
                    format!("{:.6}", x.expert),
                    x.translated.map_or(String::new(), |v| format!("{v:.6}")),
                ]
            })
            .collect();
        ctx.run.write_table(
            "metrics/resolution",
            "resolution.csv",
            &["height", "width", "expert", "translated"],
            &rows,
        )?;
        let mut series = vec![Series {
            name: "expert, untranslated".into(),
            points: r.resolution.iter().map(|x| (x.height as f64, x.expert)).collect(),
        }];
        if r.resolution.iter().all(|x| x.translated.is_some()) {
            series.push(Series {
                name: "expert on G(x)".into(),
                points: r
                    .resolution
                    .iter()
                    .map(|x| (x.height as f64, x.translated.unwrap_or(f64::NAN)))
                    .collect(),
            });
        }
        ctx.run.write_plot(
            "metrics/resolution_plot",
            "resolution.svg",
            &Chart {
                title: "Input resolution".into(),
                x_label: "input height (pixels)".into(),
                y_label: if seg { "mIoU" } else { "accuracy" }.into(),
                series,
                references: Vec::new(),
                log_x: false,
            },
        );
    }
    let path = ctx.run.root().join("logs").join("evaluate.txt");
    ctx.run.write_artifact("logs/evaluate", &path, r.text().as_bytes())
}
