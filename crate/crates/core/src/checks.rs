//! Finite-difference gradient checks over every layer kind and the full
//! networks, as run by the `gradcheck` command.

use rand::Rng as _;

use crate::error::Result;
use crate::networks::{build_shared, CNet, NetConfig, PNet, PairInputs};
use crate::nn::gradcheck::{grad_check, grad_check_sequential, squared_error, GradCheckOptions, GradCheckReport};
use crate::nn::{concat, jitter, split, Gradients, LayerSpec, ParamStore, Sequential, Tensor};
use crate::rng;
use crate::training::{joint_loss, LossTerms};

#[derive(Debug, Clone)]
pub struct CheckResult {
    pub target: String,
    pub report: GradCheckReport,
}

fn random_tensor(shape: Vec<usize>, seed: u64, name: &str) -> Tensor {
    let mut r = rng::substream(seed, name);
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| r.random_range(-1.0..1.0)).collect())
}

/// Random pair batch with binary maps and scores inside the LIS range.
pub fn random_pair_inputs(cfg: &NetConfig, n: usize, seed: u64) -> PairInputs {
    let mut r = rng::substream(seed, "pair-inputs");
    let mut t = |shape: Vec<usize>, binary: bool| {
        let len = shape.iter().product();
        let data = (0..len)
            .map(|_| if binary { (r.random::<f64>() < 0.4) as u8 as f64 } else { r.random_range(-1.0..1.0) })
            .collect();
        Tensor::new(shape, data)
    };
    let (f, g) = (cfg.feature_dim, cfg.grid);
    PairInputs {
        human_feat: t(vec![n, f], false),
        object_feat: t(vec![n, f], false),
        pose_map: t(vec![n, g, g, 3], true),
        spatial_map: t(vec![n, g, g, 2], true),
        human_score: (0..n).map(|i| 0.7 + 0.25 * i as f64 / n as f64).collect(),
        object_score: (0..n).map(|i| 0.95 - 0.3 * i as f64 / n as f64).collect(),
    }
}

fn layer_check(layers: Vec<LayerSpec>, input: Vec<usize>, seed: u64, opts: &GradCheckOptions) -> Result<GradCheckReport> {
    let net = Sequential::new(layers);
    let mut p = ParamStore::new();
    net.init_params(&mut p, seed)?;
    jitter(&mut p, 0.1, seed);
    let x = random_tensor(input, seed, "input");
    let mut out_shape = vec![x.batch()];
    out_shape.extend(net.output_shape(x.item_shape())?);
    let target = random_tensor(out_shape, seed, "target");
    grad_check_sequential(&net, &p, &x, squared_error(&target), opts)
}

fn concat_check(seed: u64, opts: &GradCheckOptions) -> Result<GradCheckReport> {
    let a = Sequential::new(vec![LayerSpec::dense("a", 3, 2)]);
    let b = Sequential::new(vec![LayerSpec::dense("b", 4, 3)]);
    let head = Sequential::new(vec![LayerSpec::dense("h", 5, 1)]);
    let mut p = ParamStore::new();
    for n in [&a, &b, &head] {
        n.init_params(&mut p, seed)?;
    }
    jitter(&mut p, 0.1, seed);
    let xa = random_tensor(vec![2, 3], seed, "a");
    let xb = random_tensor(vec![2, 4], seed, "b");
    let run = |p: &ParamStore, grads: Option<&mut Gradients>| -> Result<f64> {
        let (ya, ca) = a.forward(p, &xa)?;
        let (yb, cb) = b.forward(p, &xb)?;
        let (z, ch) = head.forward(p, &concat(&[&ya, &yb])?)?;
        if let Some(g) = grads {
            let parts = split(&head.backward(p, &ch, &z, g)?, &[2, 3]);
            a.backward(p, &ca, &parts[0], g)?;
            b.backward(p, &cb, &parts[1], g)?;
        }
        Ok(0.5 * z.data.iter().map(|v| v * v).sum::<f64>())
    };
    let mut g = Gradients::for_store(&p);
    run(&p, Some(&mut g))?;
    grad_check(&p, &g, |q| run(q, None), opts)
}

/// Small network shapes that still exercise every stream.
pub fn check_net() -> NetConfig {
    NetConfig { feature_dim: 6, width: 8, grid: 16, conv_channels: [2, 3], kernel: 3, conv_stride: 2, ..NetConfig::default() }
}

fn p_check(seed: u64, opts: &GradCheckOptions) -> Result<GradCheckReport> {
    let cfg = check_net();
    let p = PNet::new(&cfg);
    let mut store = ParamStore::new();
    p.init_params(&mut store, seed)?;
    jitter(&mut store, 0.05, seed);
    let x = random_pair_inputs(&cfg, 3, seed);
    let out = p.forward(&store, &x, Some(&cfg.lis))?;
    // Loss sum(s_P); d s_P / d logit = L f (1 - f).
    let d: Vec<f64> = out.f_p.iter().zip(&out.lis).map(|(f, l)| l * f * (1.0 - f)).collect();
    let mut g = Gradients::for_store(&store);
    p.backward(&store, &out.cache, &d, &mut g)?;
    grad_check(&store, &g, |q| Ok(p.forward(q, &x, Some(&cfg.lis))?.s_p.iter().sum()), opts)
}

fn c_check(seed: u64, opts: &GradCheckOptions) -> Result<GradCheckReport> {
    let cfg = check_net();
    let c = CNet::new(&cfg, 3);
    let mut store = ParamStore::new();
    c.init_params(&mut store, seed)?;
    jitter(&mut store, 0.05, seed);
    let x = random_pair_inputs(&cfg, 3, seed);
    let out = c.forward(&store, &x)?;
    let w: Vec<f64> = (0..out.scores.data.len()).map(|i| 0.3 + 0.1 * i as f64).collect();
    let d = Tensor::new(
        out.scores.shape.clone(),
        out.scores.data.iter().zip(&w).map(|(s, w)| w * s * (1.0 - s)).collect(),
    );
    let mut g = Gradients::for_store(&store);
    c.backward(&store, &out.cache, &d, &mut g)?;
    let loss = |q: &ParamStore| Ok(c.forward(q, &x)?.scores.data.iter().zip(&w).map(|(s, w)| s * w).sum());
    grad_check(&store, &g, loss, opts)
}

fn joint_check(seed: u64, opts: &GradCheckOptions) -> Result<GradCheckReport> {
    let cfg = check_net();
    let k = 3;
    let (p, c) = (PNet::new(&cfg), CNet::new(&cfg, k));
    let mut params = build_shared(&p, &c, true, seed)?;
    jitter(&mut params, 0.05, seed);
    let n = 4;
    let x = random_pair_inputs(&cfg, n, seed);
    let interactive: Vec<bool> = (0..n).map(|i| i % 2 == 0).collect();
    let targets = Tensor::new(
        vec![n, k],
        (0..n * k).map(|j| (interactive[j / k] && j % k == (j / k) % k) as u8 as f64).collect(),
    );
    let out = joint_loss(Some(&p), Some(&c), &params, &x, &targets, &interactive, LossTerms::JOINT)?;
    grad_check(
        &params,
        &out.grads,
        |q| Ok(joint_loss(Some(&p), Some(&c), q, &x, &targets, &interactive, LossTerms::JOINT)?.loss),
        opts,
    )
}

/// Run every check; the caller decides what a failure means.
pub fn gradcheck_suite(opts: &GradCheckOptions) -> Result<Vec<CheckResult>> {
    let s = opts.seed;
    let mut out = Vec::new();
    let mut push = |target: &str, report: GradCheckReport| out.push(CheckResult { target: target.to_string(), report });
    push("dense", layer_check(vec![LayerSpec::dense("fc", 5, 3)], vec![4, 5], s, opts)?);
    push(
        "relu",
        layer_check(vec![LayerSpec::dense("a", 5, 6), LayerSpec::Relu, LayerSpec::dense("b", 6, 2)], vec![4, 5], s, opts)?,
    );
    push("sigmoid", layer_check(vec![LayerSpec::dense("a", 4, 3), LayerSpec::Sigmoid], vec![3, 4], s, opts)?);
    push("residual", layer_check(vec![LayerSpec::residual("res", 6), LayerSpec::dense("out", 6, 2)], vec![3, 6], s, opts)?);
    push(
        "conv",
        layer_check(
            vec![LayerSpec::conv("c1", 3, 4, 5, 1), LayerSpec::conv("c2", 4, 2, 3, 2)],
            vec![2, 7, 6, 3],
            s,
            opts,
        )?,
    );
    push(
        "maxpool+flatten",
        layer_check(
            vec![LayerSpec::conv("c", 2, 3, 3, 1), LayerSpec::MaxPool { size: 2 }, LayerSpec::Flatten, LayerSpec::dense("fc", 12, 2)],
            vec![2, 4, 4, 2],
            s,
            opts,
        )?,
    );
    push(
        "global-avg-pool",
        layer_check(
            vec![LayerSpec::conv("c", 2, 3, 3, 1), LayerSpec::GlobalAvgPool, LayerSpec::dense("fc", 3, 2)],
            vec![2, 5, 4, 2],
            s,
            opts,
        )?,
    );
    push("concat+split", concat_check(s, opts)?);
    push("P", p_check(s, opts)?);
    push("C", c_check(s, opts)?);
    push("joint-shared", joint_check(s, opts)?);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_passes_at_default_tolerance() {
        let results = gradcheck_suite(&GradCheckOptions::default()).unwrap();
        assert_eq!(results.len(), 11);
        for r in &results {
            assert!(r.report.passed(), "{}: {}", r.target, r.report);
        }
        let joint = &results.last().unwrap().report;
        assert!(joint.entries.iter().any(|e| e.name == "c.h.res.fc1.w"));
    }

    #[test]
    fn suite_detects_a_broken_tolerance() {
        let opts = GradCheckOptions { tol: 0.0, ..GradCheckOptions::default() };
        let results = gradcheck_suite(&opts).unwrap();
        assert!(results.iter().any(|r| !r.report.passed()));
    }
}
