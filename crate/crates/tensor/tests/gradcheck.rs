//! Central finite-difference checks of every differentiable op.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tada_tensor::Tensor;

const STEP: f64 = 1e-5;
const TOL: f64 = 1e-6;

fn random(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// Checks d f / d input_i for every input against central differences.
fn check(name: &str, inputs: &[(Vec<f64>, Vec<usize>)], f: impl Fn(&[Tensor<f64>]) -> Tensor<f64>) {
    let vars: Vec<_> = inputs
        .iter()
        .map(|(d, s)| Tensor::variable(d.clone(), s).unwrap())
        .collect();
    let out = f(&vars);
    assert_eq!(out.numel(), 1, "{name}: objective must be scalar");
    let grads = out.backward();
    for (which, (data, shape)) in inputs.iter().enumerate() {
        let analytic = grads.get(&vars[which]).expect("gradient reaches every input");
        for i in 0..data.len() {
            let eval = |delta: f64| {
                let ts: Vec<_> = inputs
                    .iter()
                    .enumerate()
                    .map(|(j, (d, s))| {
                        let mut d = d.clone();
                        if j == which {
                            d[i] += delta;
                        }
                        Tensor::from_vec(d, s).unwrap()
                    })
                    .collect();
                f(&ts).item().unwrap()
            };
            let numeric = (eval(STEP) - eval(-STEP)) / (2.0 * STEP);
            let err = (numeric - analytic[i]).abs() / numeric.abs().max(analytic[i].abs()).max(1.0);
            assert!(
                err < TOL,
                "{name}: input {which} {shape:?} elem {i}: analytic {} numeric {numeric}",
                analytic[i]
            );
        }
    }
}

#[test]
fn pointwise_ops() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    // keep away from the kinks of abs/relu
    let x: Vec<f64> = random(&mut rng, 12)
        .into_iter()
        .map(|v| v + v.signum() * 0.05)
        .collect();
    let y = random(&mut rng, 12);
    let s = vec![3, 4];
    let xy = [(x.clone(), s.clone()), (y, s.clone())];
    check("add", &xy, |t| t[0].add(&t[1]).unwrap().sqr().sum_all());
    check("sub", &xy, |t| t[0].sub(&t[1]).unwrap().sqr().sum_all());
    check("mul", &xy, |t| t[0].mul(&t[1]).unwrap().sum_all());
    let xs = [(x, s)];
    check("abs", &xs, |t| t[0].abs().mean_all().unwrap());
    check("relu", &xs, |t| t[0].relu().sqr().sum_all());
    check("leaky", &xs, |t| t[0].leaky_relu(0.2).sqr().sum_all());
    check("tanh", &xs, |t| {
        t[0].tanh().mul_scalar(1.5).add_scalar(0.3).sqr().sum_all()
    });
    check("reshape", &xs, |t| {
        t[0].reshape(&[12]).unwrap().narrow0(2, 5).unwrap().sqr().sum_all()
    });
}

#[test]
fn conv_and_spatial_ops() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = (random(&mut rng, 2 * 3 * 5 * 5), vec![2, 3, 5, 5]);
    let w = (random(&mut rng, 4 * 3 * 3 * 3), vec![4, 3, 3, 3]);
    let b = (random(&mut rng, 4), vec![4]);
    for (stride, pad) in [(1, 1), (2, 1), (1, 0)] {
        check("conv2d", &[x.clone(), w.clone(), b.clone()], |t| {
            t[0].conv2d(&t[1], Some(&t[2]), stride, pad)
                .unwrap()
                .sqr()
                .mean_all()
                .unwrap()
        });
    }
    check("upsample", std::slice::from_ref(&x), |t| {
        t[0].upsample_nearest(2).unwrap().sqr().sum_all()
    });
    check(
        "instance_norm",
        &[x.clone(), (random(&mut rng, 2 * 3 * 5 * 5), vec![2, 3, 5, 5])],
        |t| t[0].instance_norm(1e-5).unwrap().mul(&t[1]).unwrap().sum_all(),
    );
    check("channel_affine", std::slice::from_ref(&x), |t| {
        t[0].channel_affine(&[0.5, -2.0, 1.5], &[0.1, 0.2, 0.3])
            .unwrap()
            .sqr()
            .sum_all()
    });
    check("gap", &[x], |t| t[0].global_avg_pool().unwrap().sqr().sum_all());
}

#[test]
fn cross_entropy_variants() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let logits = (random(&mut rng, 2 * 3 * 2 * 2), vec![2, 3, 2, 2]);
    let targets = [0, 2, 1, 255, 2, 2, 0, 1];
    check("ce mask", std::slice::from_ref(&logits), |t| {
        t[0].cross_entropy(&targets, Some(255), None).unwrap()
    });
    check("ce weighted", &[logits], |t| {
        t[0].cross_entropy(&targets, Some(255), Some(&[0.5, 2.0, 1.0])).unwrap()
    });
    let cls = (random(&mut rng, 4 * 5), vec![4, 5]);
    check("ce class", &[cls], |t| {
        t[0].cross_entropy(&[4, 0, 3, 3], None, None).unwrap()
    });
}
