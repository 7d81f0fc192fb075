//! α sweep and labeled-amount sweep, each over the configured replicate
//! seeds, all starting from the same final stage B state.

use super::plot::{Chart, Series};
use super::stages::{continuation, finetune, train_m3, PhaseResult};
use super::Context;
use crate::data::{labeled_subset_indices, SubsetSize};
use crate::error::{Error, Result};
use crate::losses::check_alpha;

/// Median of a nonempty sample (mean of the two middle values when even).
pub fn median(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    match n {
        0 => f64::NAN,
        _ if n % 2 == 1 => v[n / 2],
        _ => (v[n / 2 - 1] + v[n / 2]) / 2.0,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlphaSummary {
    pub alpha: f64,
    pub median: f64,
    pub per_seed: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct AlphaSweep {
    pub n_labeled: usize,
    pub summary: Vec<AlphaSummary>,
    /// Equal-compute task-agnostic continuation, one value per seed.
    pub continuation: Vec<f64>,
}

impl AlphaSweep {
    pub fn continuation_median(&self) -> f64 {
        median(&self.continuation)
    }

    pub fn at(&self, alpha: f64) -> Option<&AlphaSummary> {
        self.summary.iter().find(|s| s.alpha == alpha)
    }

    /// Best median over `0 < α < 1`.
    pub fn best_interior(&self) -> Option<&AlphaSummary> {
        self.summary
            .iter()
            .filter(|s| s.alpha > 0.0 && s.alpha < 1.0)
            .max_by(|a, b| a.median.total_cmp(&b.median))
    }

    pub fn text(&self) -> String {
        let mut s = format!("alpha sweep with {} labeled real samples\n", self.n_labeled);
        s.push_str("alpha   median  per-seed\n");
        for row in &self.summary {
            let seeds: Vec<String> = row.per_seed.iter().map(|v| format!("{v:.4}")).collect();
            s.push_str(&format!("{:<7} {:.4}  {}\n", row.alpha, row.median, seeds.join(" ")));
        }
        s.push_str(&format!(
            "task-agnostic continuation: {:.4}\n",
            self.continuation_median()
        ));
        s
    }
}

/// Validate and deduplicate (keeping first occurrences, with a warning).
fn dedup_alphas(ctx: &Context, alphas: &[f64]) -> Result<Vec<f64>> {
    for &a in alphas {
        check_alpha(a)?;
    }
    let mut out: Vec<f64> = Vec::new();
    for &a in alphas {
        if out.contains(&a) {
            ctx.run.warn(&format!("duplicate alpha {a} ignored"));
        } else {
            out.push(a);
        }
    }
    if out.is_empty() {
        return Err(Error::usage("alpha sweep needs at least one alpha"));
    }
    Ok(out)
}

fn seeds(ctx: &Context) -> Result<&[u64]> {
    if ctx.cfg.sweep.seeds.is_empty() {
        return Err(Error::usage("sweep.seeds is empty"));
    }
    Ok(&ctx.cfg.sweep.seeds)
}

pub fn sweep_alpha(ctx: &Context, alphas: &[f64]) -> Result<AlphaSweep> {
    let alphas = dedup_alphas(ctx, alphas)?;
    let seeds = seeds(ctx)?;
    let c = &ctx.cfg.stage_c;
    let mut rows = Vec::new();
    let mut cont = Vec::new();
    let mut n_labeled = 0;
    for &r in seeds {
        for &a in &alphas {
            let rep = finetune(ctx, a, c.gamma, c.labeled, r)?;
            n_labeled = rep.result.n_labeled;
            rows.push((a, r, rep.result));
        }
        cont.push(continuation(ctx, c.labeled, r)?.best_metric);
    }
    let summary: Vec<AlphaSummary> = alphas
        .iter()
        .map(|&a| {
            let per_seed: Vec<f64> = rows.iter().filter(|x| x.0 == a).map(|x| x.2.best_metric).collect();
            AlphaSummary {
                alpha: a,
                median: median(&per_seed),
                per_seed,
            }
        })
        .collect();
    let sweep = AlphaSweep {
        n_labeled,
        summary,
        continuation: cont,
    };

    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|(a, r, res)| {
            vec![
                a.to_string(),
                r.to_string(),
                res.n_labeled.to_string(),
                format!("{:.6}", res.best_metric),
                res.best_epoch.to_string(),
            ]
        })
        .collect();
    ctx.run.write_table(
        "metrics/sweep_alpha",
        "sweep_alpha.csv",
        &["alpha", "seed", "n_labeled", "best_metric", "best_epoch"],
        &table,
    )?;
    let mut summary_rows: Vec<Vec<String>> = sweep
        .summary
        .iter()
        .map(|s| vec![s.alpha.to_string(), format!("{:.6}", s.median), "stage_c".into()])
        .collect();
    summary_rows.push(vec![
        String::new(),
        format!("{:.6}", sweep.continuation_median()),
        "continuation".into(),
    ]);
    ctx.run.write_table(
        "metrics/sweep_alpha_summary",
        "sweep_alpha_summary.csv",
        &["alpha", "median_best_metric", "kind"],
        &summary_rows,
    )?;
    let metric = if ctx.segmentation() { "mIoU" } else { "accuracy" };
    ctx.run.write_plot(
        "metrics/sweep_alpha_plot",
        "sweep_alpha.svg",
        &Chart {
            title: format!("Task loss weighting ({} labeled)", sweep.n_labeled),
            x_label: "alpha".into(),
            y_label: format!("best {metric} of f∘G"),
            series: vec![Series {
                name: "stage C (median)".into(),
                points: sweep.summary.iter().map(|s| (s.alpha, s.median)).collect(),
            }],
            references: vec![("task-agnostic".into(), sweep.continuation_median())],
            log_x: false,
        },
    );
    ctx.run.log(sweep.text().trim_end());
    Ok(sweep)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GtRow {
    pub fraction: f64,
    pub seed: u64,
    pub ours: PhaseResult,
    pub m3: PhaseResult,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GtSummary {
    pub fraction: f64,
    pub n_labeled: usize,
    pub ours: f64,
    pub m3: f64,
}

#[derive(Debug, Clone)]
pub struct GtSweep {
    pub alpha: f64,
    pub rows: Vec<GtRow>,
    /// Medians per fraction, ascending.
    pub summary: Vec<GtSummary>,
    /// Median of the task-agnostic continuation (the zero-label reference).
    pub baseline: f64,
    /// Smallest fraction at which the supervised baseline matches or beats
    /// our method.
    pub crossover: Option<f64>,
    /// Whether the labeled subsets of each seed are nested across fractions.
    pub nested: bool,
}

impl GtSweep {
    pub fn text(&self) -> String {
        let mut s = format!("labeled-amount sweep at alpha={}\n", self.alpha);
        s.push_str("fraction  n_labeled  ours    M3\n");
        for r in &self.summary {
            s.push_str(&format!(
                "{:<9} {:<10} {:.4}  {:.4}\n",
                r.fraction, r.n_labeled, r.ours, r.m3
            ));
        }
        s.push_str(&format!("0% labels (task-agnostic): {:.4}\n", self.baseline));
        match self.crossover {
            Some(f) => s.push_str(&format!(
                "crossover: direct supervised training matches or beats task-aware translation from fraction {f}\n"
            )),
            None => s.push_str("crossover: none within the swept fractions\n"),
        }
        s
    }
}

pub fn sweep_gt(ctx: &Context, fractions: &[f64]) -> Result<GtSweep> {
    let mut fr: Vec<f64> = fractions.to_vec();
    if fr.is_empty() {
        return Err(Error::usage("labeled-amount sweep needs at least one fraction"));
    }
    if let Some(f) = fr.iter().find(|f| !(**f > 0.0 && **f <= 1.0)) {
        return Err(Error::usage(format!("fraction {f} outside (0, 1]")));
    }
    fr.sort_by(f64::total_cmp);
    fr.dedup();
    let seeds = seeds(ctx)?;
    let c = &ctx.cfg.stage_c;
    let pool = ctx.data.real_train.num_labeled();
    for &f in &fr {
        if SubsetSize::Fraction(f).resolve(pool)? == 0 && c.alpha > 0.0 {
            return Err(Error::usage(format!("fraction {f} yields no labeled samples")));
        }
    }
    let mut nested = true;
    for &r in seeds {
        let sets: Vec<Vec<usize>> = fr
            .iter()
            .map(|&f| {
                labeled_subset_indices(
                    &ctx.data.real_train,
                    SubsetSize::Fraction(f),
                    c.subset_seed.wrapping_add(r),
                )
            })
            .collect::<Result<_>>()?;
        nested &= sets.windows(2).all(|w| w[0].iter().all(|i| w[1].contains(i)));
    }
    let mut rows = Vec::new();
    for &f in &fr {
        for &r in seeds {
            let size = SubsetSize::Fraction(f);
            let ours = finetune(ctx, c.alpha, c.gamma, size, r)?.result;
            let m3 = train_m3(ctx, size, r)?;
            rows.push(GtRow {
                fraction: f,
                seed: r,
                ours,
                m3,
            });
        }
    }
    let baseline = median(
        &seeds
            .iter()
            .map(|&r| continuation(ctx, c.labeled, r).map(|p| p.best_metric))
            .collect::<Result<Vec<_>>>()?,
    );
    let summary: Vec<GtSummary> = fr
        .iter()
        .map(|&f| {
            let sel: Vec<&GtRow> = rows.iter().filter(|r| r.fraction == f).collect();
            GtSummary {
                fraction: f,
                n_labeled: sel[0].ours.n_labeled,
                ours: median(&sel.iter().map(|r| r.ours.best_metric).collect::<Vec<_>>()),
                m3: median(&sel.iter().map(|r| r.m3.best_metric).collect::<Vec<_>>()),
            }
        })
        .collect();
    let crossover = summary.iter().find(|s| s.m3 >= s.ours).map(|s| s.fraction);
    let sweep = GtSweep {
        alpha: c.alpha,
        rows,
        summary,
        baseline,
        crossover,
        nested,
    };

    let table: Vec<Vec<String>> = sweep
        .rows
        .iter()
        .map(|r| {
            vec![
                r.fraction.to_string(),
                r.seed.to_string(),
                r.ours.n_labeled.to_string(),
                format!("{:.6}", r.ours.best_metric),
                format!("{:.6}", r.m3.best_metric),
            ]
        })
        .collect();
    ctx.run.write_table(
        "metrics/sweep_gt",
        "sweep_gt.csv",
        &["fraction", "seed", "n_labeled", "ours", "m3"],
        &table,
    )?;
    // Zero labels: ours is the task-agnostic continuation; the supervised
    // baseline cannot be trained and takes the value of the smallest fraction.
    let mut summary_rows = vec![vec![
        "0".into(),
        "0".into(),
        format!("{:.6}", sweep.baseline),
        format!("{:.6}", sweep.summary[0].m3),
        "m3 copied from the smallest fraction".into(),
    ]];
    for s in &sweep.summary {
        let note = if Some(s.fraction) == sweep.crossover {
            "crossover"
        } else {
            ""
        };
        summary_rows.push(vec![
            s.fraction.to_string(),
            s.n_labeled.to_string(),
            format!("{:.6}", s.ours),
            format!("{:.6}", s.m3),
            note.into(),
        ]);
    }
    ctx.run.write_table(
        "metrics/sweep_gt_summary",
        "sweep_gt_summary.csv",
        &["fraction", "n_labeled", "ours_median", "m3_median", "note"],
        &summary_rows,
    )?;
    let metric = if ctx.segmentation() { "mIoU" } else { "accuracy" };
    ctx.run.write_plot(
        "metrics/sweep_gt_plot",
        "sweep_gt.svg",
        &Chart {
            title: format!("Labeled real data (alpha = {})", sweep.alpha),
            x_label: "fraction of labeled real training images".into(),
            y_label: format!("best {metric}"),
            series: vec![
                Series {
                    name: "ours (median)".into(),
                    points: sweep.summary.iter().map(|s| (s.fraction, s.ours)).collect(),
                },
                Series {
                    name: "supervised (median)".into(),
                    points: sweep.summary.iter().map(|s| (s.fraction, s.m3)).collect(),
                },
            ],
            references: vec![("0% labels".into(), sweep.baseline)],
            log_x: true,
        },
    );
    ctx.run.log(sweep.text().trim_end());
    Ok(sweep)
}
