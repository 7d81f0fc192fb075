//! Independent reference computations and the criterion checks built on
//! them. Shared by the focused integration tests and the acceptance run.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tada::data::{generate_toy_dataset, sample_labeled_subset, SubsetSize, ToyWorldSpec};
use tada::datamodel::{Domain, LabelMask, LossBundle, IGNORE};
use tada::losses::{
    combine_generator_terms, cycle_loss, disc_loss, extended_gen_adversarial_loss, gen_adversarial_loss, identity_loss,
    interpolate, task_loss, total_generator_loss, weighted_task_loss, DiscriminatorScores, GeneratorTerms, LossWeights,
    Stage,
};
use tada::metrics::{accuracy, domain_gap, iou_per_class, miou, ConfusionMatrix};
use tada::networks::{
    Direction, Discriminator, DiscriminatorArch, Generator, GeneratorArch, GeneratorBody, Head, ResnetSpec, TaskArch,
    TaskNetwork,
};
use tada::pipeline::{train_gan, GanConfig, GanData, GanPlan, GanState, LabeledBatch};
use tada_tensor::{Param, ParamStore, Tensor};

/// Outcome of one criterion: a short detail line either way.
pub type Check = Result<String, String>;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(r: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| r.random_range(lo..hi)).collect()
}

fn tensor(data: Vec<f64>, shape: &[usize]) -> Tensor<f64> {
    Tensor::from_vec(data, shape).unwrap()
}

fn rel_err(got: f64, want: f64) -> f64 {
    let scale = got.abs().max(want.abs());
    if scale < 1e-300 {
        0.0
    } else {
        (got - want).abs() / scale
    }
}

// ---------------------------------------------------------------- oracles

pub fn oracle_gen_adv(s: &[f64]) -> f64 {
    let mut acc = 0.0;
    for &v in s {
        acc += (v - 1.0) * (v - 1.0);
    }
    acc / s.len() as f64
}

pub fn oracle_disc(real: &[f64], fake: &[f64]) -> f64 {
    let mut a = 0.0;
    for &v in real {
        a += (v - 1.0) * (v - 1.0);
    }
    let mut b = 0.0;
    for &v in fake {
        b += v * v;
    }
    a / real.len() as f64 + b / fake.len() as f64
}

pub fn oracle_l1(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 0..a.len() {
        acc += (a[i] - b[i]).abs();
    }
    acc / a.len() as f64
}

/// Cross entropy over `(n, c, spatial)` logits with row-major targets.
pub fn oracle_ce(
    logits: &[f64],
    n: usize,
    c: usize,
    spatial: usize,
    targets: &[usize],
    weights: Option<&[f64]>,
) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..n {
        for p in 0..spatial {
            let t = targets[i * spatial + p];
            if t == IGNORE as usize {
                continue;
            }
            let at = |k: usize| logits[(i * c + k) * spatial + p];
            let mut m = f64::NEG_INFINITY;
            for k in 0..c {
                m = m.max(at(k));
            }
            let mut z = 0.0;
            for k in 0..c {
                z += (at(k) - m).exp();
            }
            let nll = m + z.ln() - at(t);
            let w = weights.map_or(1.0, |w| w[t]);
            num += w * nll;
            den += w;
        }
    }
    num / den
}

fn random_shape(r: &mut ChaCha8Rng) -> Vec<usize> {
    vec![
        r.random_range(1..=3),
        r.random_range(1..=3),
        r.random_range(1..=8),
        r.random_range(1..=8),
    ]
}

fn random_targets(r: &mut ChaCha8Rng, len: usize, c: usize) -> Vec<usize> {
    let mut t: Vec<usize> = (0..len)
        .map(|_| {
            if r.random_bool(0.2) {
                IGNORE as usize
            } else {
                r.random_range(0..c)
            }
        })
        .collect();
    let keep = r.random_range(0..len);
    t[keep] = r.random_range(0..c);
    t
}

// ---------------------------------------------------------------- A1

/// Every loss against the scalar-loop oracles on `cases` random inputs.
pub fn a1_loss_oracles(cases: usize, seed: u64) -> Check {
    let mut r = rng(seed);
    let mut worst = 0.0f64;
    let mut evaluations = 0usize;
    let mut note = |name: &str, got: f64, want: f64| -> Result<(), String> {
        let e = rel_err(got, want);
        evaluations += 1;
        worst = worst.max(e);
        if e > 1e-6 || !got.is_finite() {
            return Err(format!("{name}: got {got}, oracle {want} (relative error {e:.2e})"));
        }
        Ok(())
    };
    for _ in 0..cases {
        let shape = random_shape(&mut r);
        let n: usize = shape.iter().product();
        let a = uniform(&mut r, n, -2.0, 2.0);
        let b = uniform(&mut r, n, -2.0, 2.0);
        let c = uniform(&mut r, n, -2.0, 2.0);
        let d = uniform(&mut r, n, -2.0, 2.0);

        let sa = DiscriminatorScores::new(tensor(a.clone(), &shape)).unwrap();
        let sb = DiscriminatorScores::new(tensor(b.clone(), &shape)).unwrap();
        note(
            "generator adversarial",
            gen_adversarial_loss(&sa).unwrap().item().unwrap(),
            oracle_gen_adv(&a),
        )?;
        note(
            "discriminator",
            disc_loss(&sa, &sb).unwrap().item().unwrap(),
            oracle_disc(&a, &b),
        )?;

        let (ta, tb, tc, td) = (
            tensor(a.clone(), &shape),
            tensor(b.clone(), &shape),
            tensor(c.clone(), &shape),
            tensor(d.clone(), &shape),
        );
        let cyc = oracle_l1(&b, &a) + oracle_l1(&d, &c);
        note("cycle", cycle_loss(&ta, &tb, &tc, &td).unwrap().item().unwrap(), cyc)?;
        note(
            "identity",
            identity_loss(&ta, &tb, &tc, &td).unwrap().item().unwrap(),
            cyc,
        )?;

        let (bn, cls, h, w) = (shape[0], r.random_range(2..=5), shape[2], shape[3]);
        let logits = uniform(&mut r, bn * cls * h * w, -4.0, 4.0);
        let targets = random_targets(&mut r, bn * h * w, cls);
        let lt = tensor(logits.clone(), &[bn, cls, h, w]);
        let ce = oracle_ce(&logits, bn, cls, h * w, &targets, None);
        note(
            "task (segmentation)",
            task_loss(&lt, &targets, cls).unwrap().item().unwrap(),
            ce,
        )?;
        let cw = uniform(&mut r, cls, 0.1, 3.0);
        note(
            "task (class weighted)",
            weighted_task_loss(&lt, &targets, cls, Some(&cw))
                .unwrap()
                .item()
                .unwrap(),
            oracle_ce(&logits, bn, cls, h * w, &targets, Some(&cw)),
        )?;
        let flat = uniform(&mut r, bn * cls, -4.0, 4.0);
        let cls_targets = random_targets(&mut r, bn, cls);
        note(
            "task (classification)",
            task_loss(&tensor(flat.clone(), &[bn, cls]), &cls_targets, cls)
                .unwrap()
                .item()
                .unwrap(),
            oracle_ce(&flat, bn, cls, 1, &cls_targets, None),
        )?;

        let alpha = r.random_range(0.0..=1.0);
        let gamma = r.random_range(0.1..20.0);
        let task_t = tensor(vec![ce], &[]);
        let ext = (1.0 - alpha) * oracle_gen_adv(&a) + alpha * gamma * ce;
        note(
            "extended adversarial",
            extended_gen_adversarial_loss(&sa, &task_t, alpha, gamma)
                .unwrap()
                .item()
                .unwrap(),
            ext,
        )?;
        let adv_t = tensor(vec![oracle_gen_adv(&a)], &[]);
        note(
            "interpolation",
            interpolate(&adv_t, &task_t, alpha, gamma).unwrap().item().unwrap(),
            ext,
        )?;

        let weights = LossWeights {
            lambda_cyc: r.random_range(0.0..20.0),
            lambda_id: r.random_range(0.0..1.0),
            alpha,
            gamma,
        };
        let comps = uniform(&mut r, 5, 0.0, 3.0);
        let terms = GeneratorTerms {
            adv_r2s: tensor(vec![comps[0]], &[]),
            adv_s2r: tensor(vec![comps[1]], &[]),
            cycle: tensor(vec![comps[2]], &[]),
            identity: tensor(vec![comps[3]], &[]),
            task: Some(tensor(vec![comps[4]], &[])),
        };
        let rest = comps[1] + weights.lambda_cyc * comps[2] + weights.lambda_cyc * weights.lambda_id * comps[3];
        let want_b = comps[0] + rest;
        let want_c = (1.0 - alpha) * comps[0] + alpha * gamma * comps[4] + rest;
        let combined = |stage| {
            combine_generator_terms(&terms, &weights, stage)
                .unwrap()
                .item()
                .unwrap()
        };
        note("generator total (task-agnostic)", combined(Stage::B), want_b)?;
        note("generator total (task-aware)", combined(Stage::C), want_c)?;
        let bundle = LossBundle {
            g_adv_r2s: comps[0],
            g_adv_s2r: comps[1],
            cycle: comps[2],
            identity: comps[3],
            task: Some(comps[4]),
            alpha,
            gamma,
            lambda_cyc: weights.lambda_cyc,
            lambda_id: weights.lambda_id,
            ..LossBundle::default()
        };
        note(
            "recorded total (task-agnostic)",
            total_generator_loss(&bundle, Stage::B).unwrap(),
            want_b,
        )?;
        note(
            "recorded total (task-aware)",
            total_generator_loss(&bundle, Stage::C).unwrap(),
            want_c,
        )?;
    }
    Ok(format!(
        "{evaluations} evaluations over {cases} random inputs, max relative error {worst:.1e}"
    ))
}

// ---------------------------------------------------------------- A2

/// A single 3x3 convolution layer as a plain parameter block.
struct Conv {
    cin: usize,
    cout: usize,
    stride: usize,
}

impl Conv {
    fn len(&self) -> usize {
        self.cout * self.cin * 9 + self.cout
    }

    fn apply(&self, theta: &[Tensor<f64>; 2], x: &Tensor<f64>) -> Tensor<f64> {
        x.conv2d(&theta[0], Some(&theta[1]), self.stride, 1).unwrap()
    }

    fn leaves(&self, flat: &[f64], trainable: bool) -> [Tensor<f64>; 2] {
        let wn = self.cout * self.cin * 9;
        let mk = |d: Vec<f64>, s: &[usize]| {
            if trainable {
                Tensor::variable(d, s).unwrap()
            } else {
                Tensor::from_vec(d, s).unwrap()
            }
        };
        [
            mk(flat[..wn].to_vec(), &[self.cout, self.cin, 3, 3]),
            mk(flat[wn..].to_vec(), &[self.cout]),
        ]
    }
}

/// Loss and (when asked) its gradient at a parameter vector.
pub type Objective<'a> = dyn Fn(&[f64], bool) -> (f64, Vec<f64>) + 'a;

/// Relative error of analytic against central-difference gradients of a
/// scalar function, over every coordinate of `theta`. Each coordinate takes
/// the best of three step sizes, so that a ReLU or absolute-value kink lying
/// within one step of the point does not masquerade as a wrong gradient.
pub fn gradcheck(theta: &[f64], f: &Objective<'_>) -> f64 {
    let (_, analytic) = f(theta, true);
    let mut worst = 0.0f64;
    let mut p = theta.to_vec();
    for i in 0..theta.len() {
        let a = analytic[i];
        let mut best = f64::INFINITY;
        for h in [1e-5, 1e-6, 1e-7] {
            p[i] = theta[i] + h;
            let up = f(&p, false).0;
            p[i] = theta[i] - h;
            let down = f(&p, false).0;
            p[i] = theta[i];
            let numeric = (up - down) / (2.0 * h);
            let err = if a.abs().max(numeric.abs()) < 1e-8 {
                (a - numeric).abs()
            } else {
                rel_err(a, numeric)
            };
            best = best.min(err);
        }
        worst = worst.max(best);
    }
    worst
}

/// Norm-wise relative error `|a - n| / max(|a|, |n|)` of the whole gradient
/// vector against central differences with a single step.
pub fn gradcheck_normwise(theta: &[f64], f: &Objective<'_>) -> f64 {
    let (_, analytic) = f(theta, true);
    let h = 1e-6;
    let mut p = theta.to_vec();
    let (mut diff, mut na, mut nn) = (0.0, 0.0, 0.0);
    for i in 0..theta.len() {
        p[i] = theta[i] + h;
        let up = f(&p, false).0;
        p[i] = theta[i] - h;
        let down = f(&p, false).0;
        p[i] = theta[i];
        let numeric = (up - down) / (2.0 * h);
        diff += (analytic[i] - numeric).powi(2);
        na += analytic[i] * analytic[i];
        nn += numeric * numeric;
    }
    diff.sqrt() / na.sqrt().max(nn.sqrt())
}

fn grads_of(loss: &Tensor<f64>, leaves: &[&Tensor<f64>]) -> Vec<f64> {
    let g = loss.backward();
    leaves
        .iter()
        .flat_map(|l| g.get(l).map_or_else(|| vec![0.0; l.numel()], <[f64]>::to_vec))
        .collect()
}

/// Gradient checks of every objective term and their composites, with the
/// task term routed through a frozen two-layer expert into one-layer
/// generators.
pub fn a2_gradient_checks(seed: u64) -> Check {
    let mut r = rng(seed);
    let (n, c, s) = (2usize, 2usize, 4usize);
    let shape = [n, c, s, s];
    let x_r = tensor(uniform(&mut r, n * c * s * s, -1.0, 1.0), &shape);
    let x_s = tensor(uniform(&mut r, n * c * s * s, -1.0, 1.0), &shape);
    let gen = Conv {
        cin: c,
        cout: c,
        stride: 1,
    };
    let disc = Conv {
        cin: c,
        cout: 1,
        stride: 2,
    };
    let classes = 3;
    let expert = TaskNetwork::<f64>::new(
        TaskArch {
            image_channels: c,
            num_classes: classes,
            head: Head::Segmenter,
            width: 3,
            depth: 1,
        },
        seed,
    )
    .unwrap()
    .freeze();
    let targets = random_targets(&mut r, n * s * s, classes);
    let g1 = uniform(&mut r, gen.len(), -0.5, 0.5);
    let g2 = uniform(&mut r, gen.len(), -0.5, 0.5);
    let dp = uniform(&mut r, disc.len(), -0.5, 0.5);
    let (alpha, gamma) = (0.3, 2.0);
    let weights = LossWeights {
        lambda_cyc: 10.0,
        lambda_id: 0.5,
        alpha,
        gamma,
    };
    let scalar = |t: &Tensor<f64>| t.item().unwrap();
    let task_of =
        |img: &Tensor<f64>| task_loss(&expert.forward(&expert.bind(), img).unwrap(), &targets, classes).unwrap();

    let gl = gen.len();
    let objectives: Vec<(&str, Vec<f64>, Box<Objective>)> = vec![
        (
            "generator adversarial",
            g1.clone(),
            Box::new(|p: &[f64], grad: bool| {
                let th = gen.leaves(p, true);
                let d = disc.leaves(&dp, false);
                let fake = gen.apply(&th, &x_r).tanh();
                let l = gen_adversarial_loss(&DiscriminatorScores::new(disc.apply(&d, &fake)).unwrap()).unwrap();
                (scalar(&l), if grad { grads_of(&l, &[&th[0], &th[1]]) } else { vec![] })
            }),
        ),
        (
            "discriminator",
            dp.clone(),
            Box::new(|p: &[f64], grad: bool| {
                let th = gen.leaves(&g1, false);
                let d = disc.leaves(p, true);
                let fake = gen.apply(&th, &x_r).tanh().detach();
                let l = disc_loss(
                    &DiscriminatorScores::new(disc.apply(&d, &x_s)).unwrap(),
                    &DiscriminatorScores::new(disc.apply(&d, &fake)).unwrap(),
                )
                .unwrap();
                (scalar(&l), if grad { grads_of(&l, &[&d[0], &d[1]]) } else { vec![] })
            }),
        ),
        (
            "cycle",
            [g1.clone(), g2.clone()].concat(),
            Box::new(|p: &[f64], grad: bool| {
                let a = gen.leaves(&p[..gl], true);
                let b = gen.leaves(&p[gl..], true);
                let rec_r = gen.apply(&b, &gen.apply(&a, &x_r).tanh()).tanh();
                let rec_s = gen.apply(&a, &gen.apply(&b, &x_s).tanh()).tanh();
                let l = cycle_loss(&x_r, &rec_r, &x_s, &rec_s).unwrap();
                (
                    scalar(&l),
                    if grad {
                        grads_of(&l, &[&a[0], &a[1], &b[0], &b[1]])
                    } else {
                        vec![]
                    },
                )
            }),
        ),
        (
            "identity",
            [g1.clone(), g2.clone()].concat(),
            Box::new(|p: &[f64], grad: bool| {
                let a = gen.leaves(&p[..gl], true);
                let b = gen.leaves(&p[gl..], true);
                let l = identity_loss(&x_s, &gen.apply(&a, &x_s).tanh(), &x_r, &gen.apply(&b, &x_r).tanh()).unwrap();
                (
                    scalar(&l),
                    if grad {
                        grads_of(&l, &[&a[0], &a[1], &b[0], &b[1]])
                    } else {
                        vec![]
                    },
                )
            }),
        ),
        (
            "task through frozen expert",
            g1.clone(),
            Box::new(|p: &[f64], grad: bool| {
                let th = gen.leaves(p, true);
                let l = task_of(&gen.apply(&th, &x_r).tanh());
                (scalar(&l), if grad { grads_of(&l, &[&th[0], &th[1]]) } else { vec![] })
            }),
        ),
        (
            "extended adversarial",
            g1.clone(),
            Box::new(|p: &[f64], grad: bool| {
                let th = gen.leaves(p, true);
                let d = disc.leaves(&dp, false);
                let fake = gen.apply(&th, &x_r).tanh();
                let scores = DiscriminatorScores::new(disc.apply(&d, &fake)).unwrap();
                let l = extended_gen_adversarial_loss(&scores, &task_of(&fake), alpha, gamma).unwrap();
                (scalar(&l), if grad { grads_of(&l, &[&th[0], &th[1]]) } else { vec![] })
            }),
        ),
        (
            "full task-aware generator objective",
            [g1.clone(), g2.clone()].concat(),
            Box::new(|p: &[f64], grad: bool| {
                let a = gen.leaves(&p[..gl], true);
                let b = gen.leaves(&p[gl..], true);
                let d = disc.leaves(&dp, false);
                let fake_s = gen.apply(&a, &x_r).tanh();
                let fake_r = gen.apply(&b, &x_s).tanh();
                let terms = GeneratorTerms {
                    adv_r2s: gen_adversarial_loss(&DiscriminatorScores::new(disc.apply(&d, &fake_s)).unwrap()).unwrap(),
                    adv_s2r: gen_adversarial_loss(&DiscriminatorScores::new(disc.apply(&d, &fake_r)).unwrap()).unwrap(),
                    cycle: cycle_loss(
                        &x_r,
                        &gen.apply(&b, &fake_s).tanh(),
                        &x_s,
                        &gen.apply(&a, &fake_r).tanh(),
                    )
                    .unwrap(),
                    identity: identity_loss(&x_s, &gen.apply(&a, &x_s).tanh(), &x_r, &gen.apply(&b, &x_r).tanh())
                        .unwrap(),
                    task: Some(task_of(&fake_s)),
                };
                let l = combine_generator_terms(&terms, &weights, Stage::C).unwrap();
                (
                    scalar(&l),
                    if grad {
                        grads_of(&l, &[&a[0], &a[1], &b[0], &b[1]])
                    } else {
                        vec![]
                    },
                )
            }),
        ),
    ];
    let mut worst = 0.0f64;
    let mut coords = 0;
    for (name, theta, f) in &objectives {
        let e = gradcheck(theta, f.as_ref());
        coords += theta.len();
        if e > 1e-5 {
            return Err(format!("{name}: relative gradient error {e:.2e}"));
        }
        worst = worst.max(e);
    }

    // The expert never receives a gradient of its own.
    let th = gen.leaves(&g1, true);
    let bound = expert.bind();
    let l = task_loss(
        &expert.forward(&bound, &gen.apply(&th, &x_r).tanh()).unwrap(),
        &targets,
        classes,
    )
    .unwrap();
    let g = l.backward();
    if bound.leaves().iter().any(|leaf| g.get(leaf).is_some()) {
        return Err("gradient reached the frozen expert's parameters".into());
    }

    let e = library_network_gradcheck(seed)?;
    worst = worst.max(e);
    Ok(format!(
        "{} objectives over {coords} coordinates plus the library networks, max relative error {worst:.1e}",
        objectives.len()
    ))
}

/// Central differences over every parameter of a library generator for the
/// full task-aware objective with library discriminators. Judged norm-wise:
/// with instance norm and ReLUs a few of the tiny components sit within
/// rounding noise of the finite difference.
fn library_network_gradcheck(seed: u64) -> Result<f64, String> {
    let mut r = rng(seed ^ 0x5eed);
    let arch = GeneratorArch {
        image_channels: 2,
        body: GeneratorBody::Resnet(ResnetSpec {
            base_width: 2,
            n_downsample: 1,
            n_residual: 1,
            stem_kernel: 3,
            long_skip: true,
        }),
    };
    let g_rs = Generator::<f64>::new(arch, Direction::RealToSynthetic, seed).unwrap();
    let g_sr = Generator::<f64>::new(arch, Direction::SyntheticToReal, seed + 1).unwrap();
    let darch = DiscriminatorArch {
        image_channels: 2,
        base_width: 2,
        n_layers: 2,
    };
    let d_s = Discriminator::<f64>::new(darch, Domain::Synthetic, seed + 2).unwrap();
    let d_r = Discriminator::<f64>::new(darch, Domain::Real, seed + 3).unwrap();
    let expert = TaskNetwork::<f64>::new(
        TaskArch {
            image_channels: 2,
            num_classes: 3,
            head: Head::Segmenter,
            width: 3,
            depth: 1,
        },
        seed + 4,
    )
    .unwrap()
    .freeze();
    let shape = [2, 2, 4, 4];
    let x_r = tensor(uniform(&mut r, 64, -1.0, 1.0), &shape);
    let x_s = tensor(uniform(&mut r, 64, -1.0, 1.0), &shape);
    let targets = random_targets(&mut r, 32, 3);
    let weights = LossWeights {
        alpha: 0.7,
        gamma: 3.0,
        ..LossWeights::default()
    };
    let base: Vec<Param<f64>> = g_rs.params().params().to_vec();
    let flat: Vec<f64> = base.iter().flat_map(|p| p.data.iter().copied()).collect();
    let objective = |theta: &[f64], grad: bool| -> (f64, Vec<f64>) {
        let mut g = g_rs.clone();
        let mut at = 0;
        let params = base
            .iter()
            .map(|p| {
                let data = theta[at..at + p.data.len()].to_vec();
                at += p.data.len();
                Param { data, ..p.clone() }
            })
            .collect();
        g.params_mut().load(params).unwrap();
        let p_rs = g.bind(true);
        let p_sr = g_sr.bind(false);
        let fake_s = g.forward(&p_rs, &x_r).unwrap();
        let fake_r = g_sr.forward(&p_sr, &x_s).unwrap();
        let terms = GeneratorTerms {
            adv_r2s: gen_adversarial_loss(&d_s.forward(&d_s.bind(false), &fake_s).unwrap()).unwrap(),
            adv_s2r: gen_adversarial_loss(&d_r.forward(&d_r.bind(false), &fake_r).unwrap()).unwrap(),
            cycle: cycle_loss(
                &x_r,
                &g_sr.forward(&p_sr, &fake_s).unwrap(),
                &x_s,
                &g.forward(&p_rs, &fake_r).unwrap(),
            )
            .unwrap(),
            identity: identity_loss(
                &x_s,
                &g.forward(&p_rs, &x_s).unwrap(),
                &x_r,
                &g_sr.forward(&p_sr, &x_r).unwrap(),
            )
            .unwrap(),
            task: Some(task_loss(&expert.forward(&expert.bind(), &fake_s).unwrap(), &targets, 3).unwrap()),
        };
        let l = combine_generator_terms(&terms, &weights, Stage::C).unwrap();
        let v = l.item().unwrap();
        if !grad {
            return (v, vec![]);
        }
        let leaves: Vec<&Tensor<f64>> = p_rs.leaves().iter().collect();
        (v, grads_of(&l, &leaves))
    };
    let e = gradcheck_normwise(&flat, &objective);
    if e > 1e-5 {
        return Err(format!("library generator: relative gradient error {e:.2e}"));
    }
    Ok(e)
}

// ---------------------------------------------------------------- A3

fn max_param_diff(a: &ParamStore<f32>, b: &ParamStore<f32>) -> f64 {
    a.params()
        .iter()
        .zip(b.params())
        .flat_map(|(p, q)| p.data.iter().zip(&q.data).map(|(x, y)| f64::from((x - y).abs())))
        .fold(0.0, f64::max)
}

fn state_diff(a: &GanState, b: &GanState) -> f64 {
    [
        max_param_diff(a.g_r2s.params(), b.g_r2s.params()),
        max_param_diff(a.g_s2r.params(), b.g_s2r.params()),
        max_param_diff(a.d_s.params(), b.d_s.params()),
        max_param_diff(a.d_r.params(), b.d_r.params()),
    ]
    .into_iter()
    .fold(0.0, f64::max)
}

pub fn tiny_gan_archs() -> (GeneratorArch, DiscriminatorArch) {
    (
        GeneratorArch {
            image_channels: 3,
            body: GeneratorBody::Resnet(ResnetSpec {
                base_width: 4,
                n_downsample: 1,
                n_residual: 1,
                stem_kernel: 3,
                long_skip: true,
            }),
        },
        DiscriminatorArch {
            image_channels: 3,
            base_width: 4,
            n_layers: 2,
        },
    )
}

pub fn tiny_world(seed: u64) -> ToyWorldSpec {
    ToyWorldSpec {
        height: 16,
        width: 16,
        seed,
        ..ToyWorldSpec::default()
    }
}

/// Exact endpoints and midpoint of the interpolated objective, and matched
/// first updates of task-aware training at alpha = 0 and task-agnostic
/// training.
pub fn a3_interpolation(seed: u64) -> Check {
    let mut r = rng(seed);
    for _ in 0..200 {
        let n = r.random_range(1..=16);
        let scores = uniform(&mut r, n, -2.0, 2.0);
        let s = DiscriminatorScores::new(tensor(scores, &[n])).unwrap();
        let adv = gen_adversarial_loss(&s).unwrap().item().unwrap();
        let task = r.random_range(0.0..5.0);
        let gamma = r.random_range(0.1..20.0);
        let tt = tensor(vec![task], &[]);
        let at = |alpha: f64| {
            extended_gen_adversarial_loss(&s, &tt, alpha, gamma)
                .unwrap()
                .item()
                .unwrap()
        };
        if at(0.0).to_bits() != adv.to_bits() {
            return Err(format!("alpha = 0 gives {} instead of {adv}", at(0.0)));
        }
        if at(1.0).to_bits() != (gamma * task).to_bits() {
            return Err(format!("alpha = 1 gives {} instead of {}", at(1.0), gamma * task));
        }
        let mid = at(0.5);
        let avg = (at(0.0) + at(1.0)) / 2.0;
        if (mid - avg).abs() > 1e-12 * avg.abs().max(1.0) {
            return Err(format!("midpoint {mid} differs from endpoint average {avg}"));
        }
        let bundle = LossBundle {
            g_adv_r2s: adv,
            g_adv_s2r: r.random_range(0.0..2.0),
            cycle: r.random_range(0.0..2.0),
            identity: r.random_range(0.0..2.0),
            task: Some(task),
            alpha: 0.0,
            gamma,
            lambda_cyc: 10.0,
            lambda_id: 0.5,
            ..LossBundle::default()
        };
        let b = total_generator_loss(&bundle, Stage::B).unwrap();
        let c = total_generator_loss(&bundle, Stage::C).unwrap();
        if b.to_bits() != c.to_bits() {
            return Err(format!("alpha = 0 total {c} differs from the task-agnostic total {b}"));
        }
    }

    // First update of both stages from one state on one batch.
    let (garch, darch) = tiny_gan_archs();
    let spec = tiny_world(seed);
    let real = generate_toy_dataset(&spec, 4, Domain::Real, Head::Segmenter).unwrap();
    let synthetic = generate_toy_dataset(&tiny_world(seed + 1), 4, Domain::Synthetic, Head::Segmenter).unwrap();
    let expert = TaskNetwork::<f32>::new(TaskArch::segmenter(4), seed).unwrap().freeze();
    let base = GanState::new(garch, darch, &GanConfig::default(), seed).unwrap();
    let images = |split: &tada::datamodel::DatasetSplit| {
        let mut data = Vec::new();
        for s in &split.samples()[..2] {
            data.extend_from_slice(s.image.data());
        }
        Tensor::from_vec(data, &[2, 3, 16, 16]).unwrap()
    };
    let (x_r, x_s) = (images(&real), images(&synthetic));
    let targets: Vec<usize> = real.samples()[..2]
        .iter()
        .flat_map(|s| s.label.as_ref().unwrap().targets())
        .collect();
    let w0 = LossWeights::default();
    let mut b = base.clone();
    let mut c = base.clone();
    b.step(&x_r, &x_s, None, Stage::B, &w0, 2e-4, &mut rng(7)).unwrap();
    let batch = LabeledBatch {
        targets,
        expert: &expert,
    };
    c.step(&x_r, &x_s, Some(&batch), Stage::C, &w0, 2e-4, &mut rng(7))
        .unwrap();
    let step_diff = state_diff(&b, &c);
    if step_diff > 1e-9 {
        return Err(format!(
            "first alpha = 0 update differs from the task-agnostic update by {step_diff:.2e}"
        ));
    }
    let moved = max_param_diff(base.g_r2s.params(), b.g_r2s.params());
    if moved == 0.0 {
        return Err("the first update did not move the generator".into());
    }

    // Same through the phase driver with matched seeds.
    let real_val = generate_toy_dataset(&tiny_world(seed + 2), 2, Domain::Real, Head::Segmenter).unwrap();
    let plan = |stage| GanPlan {
        stage,
        weights: w0,
        epochs: 1,
        decay_epochs: 0,
        steps_per_epoch: 3,
        batch_size: 1,
        lr: 2e-4,
        eval_every: 1,
        phase: 0xC,
    };
    let data = GanData {
        real: &real,
        synthetic: &synthetic,
        real_val: &real_val,
        expert: &expert,
    };
    let mut b = base.clone();
    let mut c = base;
    train_gan(&mut b, &plan(Stage::B), &data, seed, &mut ()).unwrap();
    train_gan(&mut c, &plan(Stage::C), &data, seed, &mut ()).unwrap();
    let run_diff = state_diff(&b, &c);
    if run_diff > 1e-9 {
        return Err(format!(
            "alpha = 0 phase diverges from the task-agnostic phase by {run_diff:.2e}"
        ));
    }
    Ok(format!(
        "endpoints bit-exact on 200 draws; first-update difference {step_diff:.1e}, three-step difference {run_diff:.1e}"
    ))
}

// ---------------------------------------------------------------- A4

/// IoU of one class from pixel sets.
fn set_iou(pred: &[usize], truth: &[usize], k: usize) -> Option<f64> {
    use std::collections::BTreeSet;
    let p: BTreeSet<usize> = (0..pred.len())
        .filter(|&i| pred[i] == k && truth[i] != IGNORE as usize)
        .collect();
    let t: BTreeSet<usize> = (0..truth.len()).filter(|&i| truth[i] == k).collect();
    let union = p.union(&t).count();
    (union > 0).then(|| p.intersection(&t).count() as f64 / union as f64)
}

pub fn a4_metric_oracles(cases: usize, seed: u64) -> Check {
    let mut r = rng(seed);
    for case in 0..cases {
        let c = r.random_range(2..=5);
        let (h, w) = (16, 16);
        let n_masks = r.random_range(1..=3);
        let mut cm = ConfusionMatrix::new(c);
        let mut all_pred = Vec::new();
        let mut all_truth = Vec::new();
        for _ in 0..n_masks {
            let truth: Vec<u8> = (0..h * w)
                .map(|_| {
                    if r.random_bool(0.1) {
                        IGNORE
                    } else {
                        r.random_range(0..c) as u8
                    }
                })
                .collect();
            let pred: Vec<u8> = (0..h * w).map(|_| r.random_range(0..c) as u8).collect();
            cm.accumulate_masks(
                &LabelMask::new(h, w, pred.clone()).unwrap(),
                &LabelMask::new(h, w, truth.clone()).unwrap(),
            )
            .unwrap();
            all_pred.extend(pred.iter().map(|&v| v as usize));
            all_truth.extend(truth.iter().map(|&v| v as usize));
        }
        let counted: Vec<usize> = (0..all_truth.len())
            .filter(|&i| all_truth[i] != IGNORE as usize)
            .collect();
        for i in 0..c {
            for j in 0..c {
                let want = counted
                    .iter()
                    .filter(|&&p| all_truth[p] == i && all_pred[p] == j)
                    .count() as u64;
                if cm.get(i, j) != want {
                    return Err(format!(
                        "case {case}: confusion[{i}][{j}] = {} but {want} pixels",
                        cm.get(i, j)
                    ));
                }
            }
        }
        if cm.total() != counted.len() as u64 {
            return Err(format!(
                "case {case}: total {} but {} counted pixels",
                cm.total(),
                counted.len()
            ));
        }
        let ious = iou_per_class(&cm);
        let mut defined = Vec::new();
        for (k, got) in ious.iter().enumerate() {
            let want = set_iou(&all_pred, &all_truth, k);
            match (got, want) {
                (Some(g), Some(w)) if (g - w).abs() <= 1e-12 => defined.push(w),
                (None, None) => {}
                _ => return Err(format!("case {case}: IoU of class {k} is {got:?}, sets give {want:?}")),
            }
        }
        let want_miou = defined.iter().sum::<f64>() / defined.len() as f64;
        let got_miou = miou(&ious).unwrap();
        if (got_miou - want_miou).abs() > 1e-12 {
            return Err(format!("case {case}: mIoU {got_miou} vs {want_miou}"));
        }
        let hits = counted.iter().filter(|&&p| all_truth[p] == all_pred[p]).count();
        let want_acc = hits as f64 / counted.len() as f64;
        let got_acc = cm.accuracy().unwrap();
        if (got_acc - want_acc).abs() > 1e-12 {
            return Err(format!("case {case}: pixel accuracy {got_acc} vs {want_acc}"));
        }
        let labels: Vec<usize> = (0..20).map(|_| r.random_range(0..c)).collect();
        let preds: Vec<usize> = (0..20).map(|_| r.random_range(0..c)).collect();
        let want = labels.iter().zip(&preds).filter(|(a, b)| a == b).count() as f64 / 20.0;
        if (accuracy(&preds, &labels).unwrap() - want).abs() > 1e-12 {
            return Err(format!("case {case}: classification accuracy disagrees"));
        }
    }
    let pretrained = domain_gap(31.8, 75.6).unwrap();
    let scratch = domain_gap(9.9, 62.7).unwrap();
    if format!("{pretrained:.1}") != "43.8" || format!("{scratch:.1}") != "52.8" {
        return Err(format!(
            "domain gaps {pretrained:.1} and {scratch:.1}, expected 43.8 and 52.8"
        ));
    }
    Ok(format!(
        "{cases} random mask sets exact; domain gaps {pretrained:.1} and {scratch:.1}"
    ))
}

// ---------------------------------------------------------------- A5

/// Short task-agnostic then task-aware training with a frozen expert held
/// in memory: the expert's checksum must not move and it must receive no
/// gradient.
pub fn a5_expert_immutability(seed: u64) -> Check {
    let (garch, darch) = tiny_gan_archs();
    let real = generate_toy_dataset(&tiny_world(seed), 8, Domain::Real, Head::Segmenter).unwrap();
    let synthetic = generate_toy_dataset(&tiny_world(seed + 1), 8, Domain::Synthetic, Head::Segmenter).unwrap();
    let real_val = generate_toy_dataset(&tiny_world(seed + 2), 4, Domain::Real, Head::Segmenter).unwrap();
    let expert = TaskNetwork::<f32>::new(TaskArch::segmenter(4), seed).unwrap().freeze();
    let before = expert.params().checksum();
    let mut state = GanState::new(garch, darch, &GanConfig::default(), seed).unwrap();
    let unlabeled = real.without_labels();
    let plan = |stage, alpha| GanPlan {
        stage,
        weights: LossWeights {
            alpha,
            gamma: 10.0,
            ..LossWeights::default()
        },
        epochs: 2,
        decay_epochs: 1,
        steps_per_epoch: 4,
        batch_size: 2,
        lr: 2e-4,
        eval_every: 1,
        phase: 0xB,
    };
    let data = GanData {
        real: &unlabeled,
        synthetic: &synthetic,
        real_val: &real_val,
        expert: &expert,
    };
    train_gan(&mut state, &plan(Stage::B, 0.0), &data, seed, &mut ()).map_err(|e| e.to_string())?;
    state.begin_phase();
    let subset = sample_labeled_subset(&real, SubsetSize::Count(4), seed).unwrap();
    let data = GanData { real: &subset, ..data };
    let g_before = state.g_r2s.params().checksum();
    train_gan(&mut state, &plan(Stage::C, 0.8), &data, seed, &mut ()).map_err(|e| e.to_string())?;
    let after = expert.params().checksum();
    if before != after {
        return Err(format!("expert checksum moved from {before:016x} to {after:016x}"));
    }
    if state.g_r2s.params().checksum() == g_before {
        return Err("the generator did not train, so the check is vacuous".into());
    }

    let x = {
        let mut d = Vec::new();
        for s in &subset.samples()[..2] {
            d.extend_from_slice(s.image.data());
        }
        Tensor::from_vec(d, &[2, 3, 16, 16]).unwrap()
    };
    let targets: Vec<usize> = subset.samples()[..2]
        .iter()
        .flat_map(|s| s.label.as_ref().unwrap().targets())
        .collect();
    let pg = state.g_r2s.bind(true);
    let pf = expert.bind();
    let logits = expert.forward(&pf, &state.g_r2s.forward(&pg, &x).unwrap()).unwrap();
    let grads = task_loss(&logits, &targets, 4).unwrap().backward();
    let expert_grad: f64 = pf
        .collect_grads(&grads)
        .iter()
        .flatten()
        .map(|v| f64::from(v.abs()))
        .sum();
    let gen_grad: f64 = pg
        .collect_grads(&grads)
        .iter()
        .flatten()
        .map(|v| f64::from(v.abs()))
        .sum();
    if expert_grad != 0.0 || pf.leaves().iter().any(|l| grads.get(l).is_some()) {
        return Err(format!("task loss sends gradient {expert_grad} to the expert"));
    }
    if gen_grad == 0.0 {
        return Err("task loss sends no gradient to the generator".into());
    }
    let mut frozen = expert.clone();
    if frozen.params_mut().is_ok() {
        return Err("a frozen expert hands out mutable parameters".into());
    }
    Ok(format!(
        "checksum {before:016x} unchanged; expert gradient exactly zero, generator gradient {gen_grad:.3e}"
    ))
}
