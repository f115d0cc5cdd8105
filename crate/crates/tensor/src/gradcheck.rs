//! Central finite-difference gradient checks.

use crate::{Graph, ParamStore, Result, Tensor, Var};

/// Relative error with a floor on the denominator, so gradients that are
/// analytically zero are compared in absolute terms.
pub fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-3)
}

/// Checks `d f / d inputs` for a scalar-valued `f` built on a fresh graph.
/// Returns the largest relative error over every input element.
pub fn check_inputs<F>(inputs: &[Tensor], h: f64, f: F) -> Result<f64>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let eval = |ins: &[Tensor]| -> Result<f64> {
        let mut g = Graph::new();
        let vars: Vec<Var> = ins.iter().map(|t| g.input(t.clone())).collect();
        let out = f(&mut g, &vars)?;
        Ok(g.value(out).data()[0])
    };
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.leaf(t.clone())).collect();
    let out = f(&mut g, &vars)?;
    g.backward(out)?;

    let mut worst: f64 = 0.0;
    let mut probe = inputs.to_vec();
    for (k, v) in vars.iter().enumerate() {
        let analytic = g.grad(*v).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; inputs[k].len()]);
        for i in 0..inputs[k].len() {
            let x0 = inputs[k].data()[i];
            probe[k].data_mut()[i] = x0 + h;
            let up = eval(&probe)?;
            probe[k].data_mut()[i] = x0 - h;
            let down = eval(&probe)?;
            probe[k].data_mut()[i] = x0;
            worst = worst.max(rel_error(analytic[i], (up - down) / (2.0 * h)));
        }
    }
    Ok(worst)
}

/// Same check over every unfrozen parameter of `store`.
pub fn check_params<F>(store: &ParamStore, h: f64, f: F) -> Result<f64>
where
    F: Fn(&mut Graph, &ParamStore) -> Result<Var>,
{
    let eval = |s: &ParamStore| -> Result<f64> {
        let mut g = Graph::new();
        let out = f(&mut g, s)?;
        Ok(g.value(out).data()[0])
    };
    let mut work = store.clone();
    work.zero_grads();
    let mut g = Graph::new();
    let out = f(&mut g, &work)?;
    g.backward(out)?;
    g.accumulate_param_grads(&mut work)?;
    let analytic: Vec<Vec<f64>> = work.params().iter().map(|p| p.grad.clone()).collect();

    let mut worst: f64 = 0.0;
    for (k, id) in store.ids().enumerate() {
        if store.param(id).frozen {
            continue;
        }
        for i in 0..store.param(id).value.len() {
            let x0 = store.param(id).value.data()[i];
            work.param_mut(id).value.data_mut()[i] = x0 + h;
            let up = eval(&work)?;
            work.param_mut(id).value.data_mut()[i] = x0 - h;
            let down = eval(&work)?;
            work.param_mut(id).value.data_mut()[i] = x0;
            worst = worst.max(rel_error(analytic[k][i], (up - down) / (2.0 * h)));
        }
    }
    Ok(worst)
}

/// Reduces any output to a scalar with fixed random weights, so every
/// output element contributes to the checked gradient.
pub fn project(g: &mut Graph, out: Var, seed: u64) -> Result<Var> {
    let mut rng = surro_core::rng::SplitMix64::new(seed);
    let shape = g.shape(out).to_vec();
    let n: usize = shape.iter().product();
    let r = g.input(Tensor::new(&shape, (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect())?);
    let m = g.mul(out, r)?;
    Ok(g.sum(m))
}

fn random_tensor(rng: &mut surro_core::rng::SplitMix64, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect()).expect("consistent")
}

type Builder = fn(&mut Graph, &[Var], usize) -> Result<Var>;

/// Every differentiable primitive with a shape generator and a builder
/// that reduces its output to a scalar.
fn primitives() -> Vec<(&'static str, fn(&mut surro_core::rng::SplitMix64) -> Vec<Vec<usize>>, Builder)> {
    use crate::sinusoidal_positional_encoding as pe;
    use crate::NORM_EPS;
    vec![
        (
            "conv1d",
            |r| {
                let (b, ci, co, t, k) = (1 + r.below(2), 1 + r.below(3), 1 + r.below(3), 4 + r.below(5), [1, 3, 5][r.below(3)]);
                vec![vec![b, ci, t], vec![co, ci, k], vec![co]]
            },
            |g, v, s| {
                let k = g.shape(v[1])[2];
                let y = g.conv1d(v[0], v[1], v[2], 1, (k - 1) / 2)?;
                project(g, y, s as u64)
            },
        ),
        (
            "conv1d_stride2",
            |r| {
                let (b, ci, co, t) = (1 + r.below(2), 1 + r.below(3), 1 + r.below(3), 2 * (2 + r.below(3)));
                vec![vec![b, ci, t], vec![co, ci, 2], vec![co]]
            },
            |g, v, s| {
                let y = g.conv1d(v[0], v[1], v[2], 2, 0)?;
                project(g, y, s as u64)
            },
        ),
        (
            "transposed_conv1d",
            |r| {
                let (b, ci, co, t) = (1 + r.below(2), 1 + r.below(3), 1 + r.below(3), 1 + r.below(4));
                vec![vec![b, ci, t], vec![ci, co, 2], vec![co]]
            },
            |g, v, s| {
                let y = g.conv_transpose2(v[0], v[1], v[2])?;
                project(g, y, s as u64)
            },
        ),
        (
            "linear",
            |r| {
                let (m, fi, fo) = (1 + r.below(4), 1 + r.below(5), 1 + r.below(4));
                vec![vec![m, fi], vec![fo, fi], vec![fo]]
            },
            |g, v, s| {
                let y = g.linear(v[0], v[1], v[2])?;
                project(g, y, s as u64)
            },
        ),
        (
            "batch_norm_train",
            |r| {
                let (b, c, t) = (2 + r.below(2), 1 + r.below(3), 2 + r.below(4));
                vec![vec![b, c, t], vec![c], vec![c]]
            },
            |g, v, s| {
                let (y, _) = g.batch_norm_train(v[0], v[1], v[2], NORM_EPS)?;
                project(g, y, s as u64)
            },
        ),
        (
            "batch_norm_eval",
            |r| {
                let (b, c, t) = (1 + r.below(2), 1 + r.below(3), 1 + r.below(4));
                vec![vec![b, c, t], vec![c], vec![c]]
            },
            |g, v, s| {
                let c = g.shape(v[1])[0];
                let mean: Vec<f64> = (0..c).map(|i| 0.1 * i as f64 - 0.2).collect();
                let var: Vec<f64> = (0..c).map(|i| 0.5 + 0.3 * i as f64).collect();
                let y = g.batch_norm_eval(v[0], v[1], v[2], &mean, &var, NORM_EPS)?;
                project(g, y, s as u64)
            },
        ),
        (
            "layer_norm",
            |r| {
                let (b, t, d) = (1 + r.below(2), 1 + r.below(3), 2 + r.below(4));
                vec![vec![b, t, d], vec![d], vec![d]]
            },
            |g, v, s| {
                let y = g.layer_norm(v[0], v[1], v[2], NORM_EPS)?;
                project(g, y, s as u64)
            },
        ),
        (
            "relu",
            |r| vec![vec![1 + r.below(3), 1 + r.below(6)]],
            |g, v, s| {
                let y = g.relu(v[0]);
                project(g, y, s as u64)
            },
        ),
        (
            "dropout",
            |r| vec![vec![1 + r.below(3), 1 + r.below(6)]],
            |g, v, s| {
                let y = g.dropout(v[0], 0.3, s as u64 ^ 0xABCD)?;
                project(g, y, s as u64)
            },
        ),
        (
            "maxpool",
            |r| vec![vec![1 + r.below(2), 1 + r.below(3), 2 + r.below(6)]],
            |g, v, s| {
                let y = g.maxpool2(v[0])?;
                project(g, y, s as u64)
            },
        ),
        (
            "global_avg_pool",
            |r| vec![vec![1 + r.below(3), 1 + r.below(3), 1 + r.below(5)]],
            |g, v, s| {
                let y = g.global_avg_pool(v[0])?;
                project(g, y, s as u64)
            },
        ),
        (
            "attention",
            |r| {
                let h = 1 + r.below(2);
                let shape = vec![1 + r.below(2), 1 + r.below(4), h * (1 + r.below(3))];
                vec![shape.clone(), shape.clone(), shape, vec![h]]
            },
            |g, v, s| {
                let heads = g.shape(v[3])[0];
                let y = g.attention(v[0], v[1], v[2], heads)?;
                project(g, y, s as u64)
            },
        ),
        (
            "transformer_block_with_pe",
            |r| {
                let (b, t, d) = (1 + r.below(2), 2 + r.below(3), 4);
                let ff = 3 + r.below(3);
                vec![
                    vec![b, t, d],
                    vec![d, d],
                    vec![d, d],
                    vec![d, d],
                    vec![d, d],
                    vec![ff, d],
                    vec![d, ff],
                    vec![d],
                    vec![d],
                ]
            },
            |g, v, s| {
                let (t, d) = (g.shape(v[0])[1], g.shape(v[0])[2]);
                let ff = g.shape(v[5])[0];
                let zd = g.input(Tensor::zeros(&[d]));
                let zf = g.input(Tensor::zeros(&[ff]));
                let x = g.add_const(v[0], &pe(t, d)?)?;
                let n1 = g.layer_norm(x, v[7], v[8], NORM_EPS)?;
                let q = g.linear(n1, v[1], zd)?;
                let k = g.linear(n1, v[2], zd)?;
                let vv = g.linear(n1, v[3], zd)?;
                let a = g.attention(q, k, vv, 2)?;
                let o = g.linear(a, v[4], zd)?;
                let x = g.add(x, o)?;
                let n2 = g.layer_norm(x, v[7], v[8], NORM_EPS)?;
                let h = g.linear(n2, v[5], zf)?;
                let h = g.relu(h);
                let h = g.linear(h, v[6], zd)?;
                let x = g.add(x, h)?;
                let m = g.mean_time(x)?;
                project(g, m, s as u64)
            },
        ),
        (
            "mse",
            |r| {
                let n = 1 + r.below(8);
                vec![vec![n], vec![n]]
            },
            |g, v, _| g.mse(v[0], v[1]),
        ),
        (
            "concat_gather",
            |r| vec![vec![2 + r.below(3), 1 + r.below(3)], vec![4, 1 + r.below(3)]],
            |g, v, s| {
                let n = g.shape(v[0])[0];
                let idx: Vec<usize> = (0..4).map(|i| (i * 7 + s) % n).collect();
                let x = g.gather_rows(v[0], &idx)?;
                let y = g.concat_cols(x, v[1])?;
                project(g, y, s as u64)
            },
        ),
    ]
}

/// Runs the finite-difference check on `instances` seeded random small
/// instances of every primitive; returns `(name, worst relative error)`.
pub fn primitive_suite(instances: usize, h: f64, seed: u64) -> Result<Vec<(&'static str, f64)>> {
    let mut out = Vec::new();
    for (p, (name, shapes, build)) in primitives().into_iter().enumerate() {
        let mut worst: f64 = 0.0;
        for i in 0..instances {
            let mut rng = surro_core::rng::SplitMix64::stream(seed, (p * 10_000 + i) as u64);
            let inputs: Vec<Tensor> = shapes(&mut rng).iter().map(|s| random_tensor(&mut rng, s)).collect();
            worst = worst.max(check_inputs(&inputs, h, |g, v| build(g, v, i))?);
        }
        out.push((name, worst));
    }
    Ok(out)
}
