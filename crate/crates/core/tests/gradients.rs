mod common;

#[test]
fn analytic_gradients_match_central_differences() {
    for seed in [1, 2] {
        let detail = common::a2_gradient_checks(seed).unwrap();
        println!("seed {seed}: {detail}");
    }
}
