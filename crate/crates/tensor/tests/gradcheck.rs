use surro_tensor::gradcheck::{check_inputs, primitive_suite};
use surro_tensor::Tensor;

#[test]
fn every_primitive_matches_finite_differences() {
    let results = primitive_suite(20, 1e-5, 2024).unwrap();
    assert!(results.len() >= 14);
    for (name, worst) in results {
        println!("{name}: {worst:e}");
        assert!(worst < 1e-4, "{name}: max relative error {worst:e}");
    }
}

#[test]
fn composite_conv_relu_linear_mse() {
    let mut rng = surro_core::rng::SplitMix64::new(3);
    let mut r = |s: &[usize]| Tensor::new(s, (0..s.iter().product()).map(|_| rng.uniform(-1.0, 1.0)).collect()).unwrap();
    let inputs = vec![r(&[2, 2, 6]), r(&[3, 2, 3]), r(&[3]), r(&[1, 18]), r(&[1]), r(&[2, 1])];
    let worst = check_inputs(&inputs, 1e-5, |g, v| {
        let c = g.conv1d(v[0], v[1], v[2], 1, 1)?;
        let c = g.relu(c);
        let f = g.reshape(c, &[2, 18])?;
        let y = g.linear(f, v[3], v[4])?;
        g.mse(y, v[5])
    })
    .unwrap();
    assert!(worst < 1e-4, "{worst:e}");
}
