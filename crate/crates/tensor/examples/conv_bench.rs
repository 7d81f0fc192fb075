//! Rough forward/backward timing for a three-layer conv stack.
use std::time::Instant;

use tada_tensor::{ParamStore, Tensor};

fn main() {
    let mut store = ParamStore::<f32>::new();
    let dims = [(3, 32), (32, 32), (32, 3)];
    let ids: Vec<_> = dims
        .iter()
        .enumerate()
        .map(|(i, &(ci, co))| {
            let n = co * ci * 9;
            store.push(
                format!("w{i}"),
                &[co, ci, 3, 3],
                (0..n).map(|k| ((k % 7) as f32 - 3.0) * 0.01).collect(),
            )
        })
        .collect();
    let x = Tensor::from_vec(vec![0.1f32; 8 * 3 * 48 * 48], &[8, 3, 48, 48]).unwrap();
    let t = Instant::now();
    for _ in 0..20 {
        let b = store.bind(true);
        let mut h = x.clone();
        for (i, id) in ids.iter().enumerate() {
            h = h.conv2d(b.get(*id), None, 1, 1).unwrap();
            if i < 2 {
                h = h.relu();
            }
        }
        let _ = h.sqr().mean_all().unwrap().backward();
    }
    println!("20 fwd+bwd iterations: {:?}", t.elapsed());
}
