use std::fmt;

use rand::seq::index::sample;

use super::layers::Sequential;
use super::params::{Gradients, ParamStore};
use super::tensor::Tensor;
use crate::error::Result;
use crate::rng;

/// Denominator floor for the relative error, so entries whose true
/// gradient is ~0 are compared on an absolute scale.
pub const REL_ERROR_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckOptions {
    pub eps: f64,
    pub tol: f64,
    /// Entries sampled per parameter array; `None` checks every entry.
    pub max_entries: Option<usize>,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            eps: 1e-5,
            tol: 1e-4,
            max_entries: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamCheck {
    pub name: String,
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub checked: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub entries: Vec<ParamCheck>,
    pub tol: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.entries.iter().all(|e| e.max_rel_error <= self.tol)
    }

    pub fn max_rel_error(&self) -> f64 {
        self.entries.iter().map(|e| e.max_rel_error).fold(0.0, f64::max)
    }

    pub fn failures(&self) -> Vec<&ParamCheck> {
        self.entries.iter().filter(|e| e.max_rel_error > self.tol).collect()
    }
}

impl fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for e in &self.entries {
            let status = if e.max_rel_error <= self.tol { "ok" } else { "FAIL" };
            writeln!(
                f,
                "{status:4} {:<32} max_rel_err={:.3e} (entry {}, {} checked)",
                e.name, e.max_rel_error, e.worst_index, e.checked
            )?;
        }
        write!(
            f,
            "{} ({} arrays, tol {:.0e})",
            if self.passed() { "PASS" } else { "FAIL" },
            self.entries.len(),
            self.tol
        )
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR)
}

fn pick(len: usize, max: Option<usize>, seed: u64, name: &str) -> Vec<usize> {
    match max {
        Some(m) if m < len => {
            let mut idx = sample(&mut rng::substream(seed, name), len, m).into_vec();
            idx.sort_unstable();
            idx
        }
        _ => (0..len).collect(),
    }
}

fn check_values(
    name: &str,
    analytic: &[f64],
    indices: &[usize],
    mut numeric: impl FnMut(usize) -> Result<f64>,
) -> Result<ParamCheck> {
    let mut worst = (0.0, 0);
    for &i in indices {
        let err = relative_error(analytic[i], numeric(i)?);
        if err > worst.0 || err.is_nan() {
            worst = (err, i);
        }
    }
    Ok(ParamCheck {
        name: name.to_string(),
        max_rel_error: worst.0,
        worst_index: worst.1,
        checked: indices.len(),
    })
}

/// Compare analytic parameter gradients against central differences of
/// `loss`. Each physical slot is checked once under its canonical name, so
/// a shared block is checked against the sum of all its paths.
pub fn grad_check<L>(params: &ParamStore, analytic: &Gradients, mut loss: L, opts: &GradCheckOptions) -> Result<GradCheckReport>
where
    L: FnMut(&ParamStore) -> Result<f64>,
{
    let mut work = params.clone();
    let mut entries = Vec::new();
    for slot in 0..params.len() {
        let name = params.slots()[slot].name.clone();
        let indices = pick(params.slots()[slot].data.len(), opts.max_entries, opts.seed, &name);
        let check = check_values(&name, &analytic.slots[slot], &indices, |i| {
            let orig = work.slot_data(slot)[i];
            work.slot_data_mut(slot)[i] = orig + opts.eps;
            let plus = loss(&work)?;
            work.slot_data_mut(slot)[i] = orig - opts.eps;
            let minus = loss(&work)?;
            work.slot_data_mut(slot)[i] = orig;
            Ok((plus - minus) / (2.0 * opts.eps))
        })?;
        entries.push(check);
    }
    Ok(GradCheckReport { entries, tol: opts.tol })
}

/// Gradient check of a sequential network under `loss_fn`, which maps the
/// network output to `(loss, d loss / d output)`. Also checks the input
/// gradient, reported under the name `input`.
pub fn grad_check_sequential<F>(
    net: &Sequential,
    params: &ParamStore,
    input: &Tensor,
    loss_fn: F,
    opts: &GradCheckOptions,
) -> Result<GradCheckReport>
where
    F: Fn(&Tensor) -> (f64, Tensor),
{
    let (out, cache) = net.forward(params, input)?;
    let (_, dout) = loss_fn(&out);
    let mut grads = Gradients::for_store(params);
    let dinput = net.backward(params, &cache, &dout, &mut grads)?;
    let eval = |p: &ParamStore, x: &Tensor| -> Result<f64> { Ok(loss_fn(&net.forward(p, x)?.0).0) };

    let mut report = grad_check(params, &grads, |p| eval(p, input), opts)?;
    let indices = pick(input.data.len(), opts.max_entries, opts.seed, "input");
    let mut x = input.clone();
    let input_check = check_values("input", &dinput.data, &indices, |i| {
        let orig = x.data[i];
        x.data[i] = orig + opts.eps;
        let plus = eval(params, &x)?;
        x.data[i] = orig - opts.eps;
        let minus = eval(params, &x)?;
        x.data[i] = orig;
        Ok((plus - minus) / (2.0 * opts.eps))
    })?;
    report.entries.push(input_check);
    Ok(report)
}

/// Quadratic test loss `0.5 * sum((y - target)^2)`.
pub fn squared_error(target: &Tensor) -> impl Fn(&Tensor) -> (f64, Tensor) + '_ {
    move |y: &Tensor| {
        let diff: Vec<f64> = y.data.iter().zip(&target.data).map(|(a, b)| a - b).collect();
        let loss = 0.5 * diff.iter().map(|d| d * d).sum::<f64>();
        (loss, Tensor::new(y.shape.clone(), diff))
    }
}
