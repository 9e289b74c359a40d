use serde::{Deserialize, Serialize};

use super::params::{Gradients, ParamStore};
use super::tensor::{gemm, sigmoid, Tensor};
use crate::error::{Error, Result};
use crate::rng::derive_seed;

/// One layer of a sequential network. Parameterised layers own the
/// parameters `<name>.w` / `<name>.b` (residual blocks: `<name>.fc1.*`,
/// `<name>.fc2.*`) in a [`ParamStore`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Dense {
        name: String,
        input: usize,
        output: usize,
    },
    /// Square kernel, zero padding `kernel / 2`, NHWC layout.
    Conv {
        name: String,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
    },
    /// Non-overlapping `size x size` windows.
    MaxPool { size: usize },
    Relu,
    Sigmoid,
    GlobalAvgPool,
    /// `relu(x + fc2(relu(fc1(x))))` with both layers `dim x dim`.
    Residual { name: String, dim: usize },
    Flatten,
}

impl LayerSpec {
    pub fn dense(name: &str, input: usize, output: usize) -> Self {
        LayerSpec::Dense {
            name: name.to_string(),
            input,
            output,
        }
    }

    pub fn conv(name: &str, in_channels: usize, out_channels: usize, kernel: usize, stride: usize) -> Self {
        LayerSpec::Conv {
            name: name.to_string(),
            in_channels,
            out_channels,
            kernel,
            stride,
        }
    }

    pub fn residual(name: &str, dim: usize) -> Self {
        LayerSpec::Residual {
            name: name.to_string(),
            dim,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Conv { .. } => "conv",
            LayerSpec::MaxPool { .. } => "maxpool",
            LayerSpec::Relu => "relu",
            LayerSpec::Sigmoid => "sigmoid",
            LayerSpec::GlobalAvgPool => "global-average-pool",
            LayerSpec::Residual { .. } => "residual-block",
            LayerSpec::Flatten => "flatten",
        }
    }

    /// `(name, shape, fan_in, fan_out, is_weight)` for every parameter.
    pub fn param_specs(&self) -> Vec<(String, Vec<usize>, usize, usize, bool)> {
        match self {
            LayerSpec::Dense { name, input, output } => vec![
                (format!("{name}.w"), vec![*input, *output], *input, *output, true),
                (format!("{name}.b"), vec![*output], 0, 0, false),
            ],
            LayerSpec::Conv {
                name,
                in_channels,
                out_channels,
                kernel,
                ..
            } => {
                let kk = kernel * kernel;
                vec![
                    (
                        format!("{name}.w"),
                        vec![*kernel, *kernel, *in_channels, *out_channels],
                        kk * in_channels,
                        kk * out_channels,
                        true,
                    ),
                    (format!("{name}.b"), vec![*out_channels], 0, 0, false),
                ]
            }
            LayerSpec::Residual { name, dim } => vec![
                (format!("{name}.fc1.w"), vec![*dim, *dim], *dim, *dim, true),
                (format!("{name}.fc1.b"), vec![*dim], 0, 0, false),
                (format!("{name}.fc2.w"), vec![*dim, *dim], *dim, *dim, true),
                (format!("{name}.fc2.b"), vec![*dim], 0, 0, false),
            ],
            _ => Vec::new(),
        }
    }

    /// Output item shape (batch axis excluded) for an input item shape.
    pub fn output_shape(&self, index: usize, input: &[usize]) -> Result<Vec<usize>> {
        let mismatch = |expected: Vec<usize>| Error::Shape {
            layer: index,
            expected,
            actual: input.to_vec(),
        };
        match self {
            LayerSpec::Dense { input: i, output, .. } => {
                if input != [*i] {
                    return Err(mismatch(vec![*i]));
                }
                Ok(vec![*output])
            }
            LayerSpec::Residual { dim, .. } => {
                if input != [*dim] {
                    return Err(mismatch(vec![*dim]));
                }
                Ok(vec![*dim])
            }
            LayerSpec::Conv {
                in_channels,
                out_channels,
                kernel,
                stride,
                ..
            } => {
                if input.len() != 3 || input[2] != *in_channels || *stride == 0 {
                    return Err(mismatch(vec![0, 0, *in_channels]));
                }
                let pad = kernel / 2;
                let out = |n: usize| (n + 2 * pad).checked_sub(*kernel).map(|v| v / stride + 1);
                match (out(input[0]), out(input[1])) {
                    (Some(h), Some(w)) if h > 0 && w > 0 => Ok(vec![h, w, *out_channels]),
                    _ => Err(mismatch(vec![*kernel, *kernel, *in_channels])),
                }
            }
            LayerSpec::MaxPool { size } => {
                if input.len() != 3 || *size == 0 || input[0] < *size || input[1] < *size {
                    return Err(mismatch(vec![*size, *size, 0]));
                }
                Ok(vec![input[0] / size, input[1] / size, input[2]])
            }
            LayerSpec::GlobalAvgPool => {
                if input.len() != 3 {
                    return Err(mismatch(vec![0, 0, 0]));
                }
                Ok(vec![input[2]])
            }
            LayerSpec::Flatten => Ok(vec![input.iter().product()]),
            LayerSpec::Relu | LayerSpec::Sigmoid => Ok(input.to_vec()),
        }
    }
}

#[derive(Debug, Clone)]
enum LayerCache {
    Dense { input: Tensor },
    Conv { cols: Vec<f64>, input_shape: Vec<usize> },
    MaxPool { argmax: Vec<usize>, input_shape: Vec<usize> },
    Relu { output: Tensor },
    Sigmoid { output: Tensor },
    GlobalAvgPool { input_shape: Vec<usize> },
    Residual { input: Tensor, hidden: Tensor, output: Tensor },
    Flatten { input_shape: Vec<usize> },
}

/// Everything a backward pass needs from the matching forward pass.
#[derive(Debug, Clone)]
pub struct Cache {
    signature: u64,
    stamp: (u64, u64),
    output_shape: Vec<usize>,
    layers: Vec<LayerCache>,
}

/// A feed-forward stack of layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Sequential {
    layers: Vec<LayerSpec>,
    signature: u64,
}

impl Sequential {
    pub fn new(layers: Vec<LayerSpec>) -> Self {
        let signature = derive_seed(0, &format!("{layers:?}"));
        Sequential { layers, signature }
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        self.layers
            .iter()
            .enumerate()
            .try_fold(input.to_vec(), |shape, (i, l)| l.output_shape(i, &shape))
    }

    /// Register this network's parameters. Names already present (shared
    /// blocks registered by another network) are checked for shape and
    /// left untouched.
    pub fn init_params(&self, store: &mut ParamStore, seed: u64) -> Result<()> {
        for (i, layer) in self.layers.iter().enumerate() {
            for (name, shape, fan_in, fan_out, is_weight) in layer.param_specs() {
                if store.contains(&name) {
                    let existing = &store.param(&name)?.shape;
                    if *existing != shape {
                        return Err(Error::Shape {
                            layer: i,
                            expected: shape,
                            actual: existing.clone(),
                        });
                    }
                    continue;
                }
                if is_weight {
                    store.add_glorot(&name, shape, fan_in, fan_out, seed)?;
                } else {
                    store.add_zeros(&name, shape)?;
                }
            }
        }
        Ok(())
    }

    pub fn forward(&self, params: &ParamStore, input: &Tensor) -> Result<(Tensor, Cache)> {
        if input.shape.is_empty() {
            return Err(Error::Shape {
                layer: 0,
                expected: vec![0],
                actual: vec![],
            });
        }
        let mut x = input.clone();
        let mut caches = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let out_item = layer.output_shape(i, x.item_shape())?;
            let (y, c) = forward_layer(layer, params, x, &out_item)?;
            caches.push(c);
            x = y;
        }
        let cache = Cache {
            signature: self.signature,
            stamp: params.stamp(),
            output_shape: x.shape.clone(),
            layers: caches,
        };
        Ok((x, cache))
    }

    /// Accumulates parameter gradients into `grads` and returns the
    /// gradient with respect to the input.
    pub fn backward(
        &self,
        params: &ParamStore,
        cache: &Cache,
        grad_out: &Tensor,
        grads: &mut Gradients,
    ) -> Result<Tensor> {
        Ok(self
            .backward_inner(params, cache, grad_out, grads, true)?
            .expect("input gradient requested"))
    }

    pub(crate) fn backward_inner(
        &self,
        params: &ParamStore,
        cache: &Cache,
        grad_out: &Tensor,
        grads: &mut Gradients,
        need_input_grad: bool,
    ) -> Result<Option<Tensor>> {
        if cache.signature != self.signature || cache.layers.len() != self.layers.len() {
            return Err(Error::StaleCache("cache was produced by a different network".into()));
        }
        if cache.stamp != params.stamp() {
            return Err(Error::StaleCache("parameters changed since the forward pass".into()));
        }
        if !grads.is_congruent(params) {
            return Err(Error::StaleCache("gradient buffers do not match the parameter store".into()));
        }
        if grad_out.shape != cache.output_shape {
            return Err(Error::Shape {
                layer: self.layers.len(),
                expected: cache.output_shape.clone(),
                actual: grad_out.shape.clone(),
            });
        }
        let mut g = grad_out.clone();
        for (i, (layer, c)) in self.layers.iter().zip(&cache.layers).enumerate().rev() {
            let need = need_input_grad || i > 0;
            match backward_layer(layer, params, c, g, grads, need)? {
                Some(next) => g = next,
                None => return Ok(None),
            }
        }
        Ok(Some(g))
    }
}

fn forward_layer(layer: &LayerSpec, params: &ParamStore, x: Tensor, out_item: &[usize]) -> Result<(Tensor, LayerCache)> {
    let n = x.batch();
    let mut out_shape = vec![n];
    out_shape.extend_from_slice(out_item);
    match layer {
        LayerSpec::Dense { name, input, output } => {
            let w = params.get(&format!("{name}.w"))?;
            let b = params.get(&format!("{name}.b"))?;
            let y = affine(&x.data, n, *input, *output, w, b);
            Ok((Tensor::new(out_shape, y), LayerCache::Dense { input: x }))
        }
        LayerSpec::Residual { name, dim } => {
            let d = *dim;
            let w1 = params.get(&format!("{name}.fc1.w"))?;
            let b1 = params.get(&format!("{name}.fc1.b"))?;
            let w2 = params.get(&format!("{name}.fc2.w"))?;
            let b2 = params.get(&format!("{name}.fc2.b"))?;
            let mut hidden = affine(&x.data, n, d, d, w1, b1);
            relu_inplace(&mut hidden);
            let mut y = affine(&hidden, n, d, d, w2, b2);
            for (v, s) in y.iter_mut().zip(&x.data) {
                *v = (*v + s).max(0.0);
            }
            let output = Tensor::new(out_shape, y);
            Ok((
                output.clone(),
                LayerCache::Residual {
                    input: x,
                    hidden: Tensor::new(vec![n, d], hidden),
                    output,
                },
            ))
        }
        LayerSpec::Conv {
            name,
            in_channels,
            out_channels,
            kernel,
            stride,
        } => {
            let w = params.get(&format!("{name}.w"))?;
            let b = params.get(&format!("{name}.b"))?;
            let geom = ConvGeom::new(&x.shape, *in_channels, *kernel, *stride, out_item);
            let cols = im2col(&x.data, &geom);
            let rows = n * geom.oh * geom.ow;
            let mut y = Vec::with_capacity(rows * out_channels);
            for _ in 0..rows {
                y.extend_from_slice(b);
            }
            gemm(rows, geom.patch, *out_channels, 1.0, &cols, false, w, false, 1.0, &mut y);
            Ok((
                Tensor::new(out_shape, y),
                LayerCache::Conv {
                    cols,
                    input_shape: x.shape,
                },
            ))
        }
        LayerSpec::MaxPool { size } => {
            let (h, w, c) = (x.shape[1], x.shape[2], x.shape[3]);
            let (oh, ow) = (out_item[0], out_item[1]);
            let mut y = Vec::with_capacity(n * oh * ow * c);
            let mut argmax = Vec::with_capacity(n * oh * ow * c);
            for b in 0..n {
                for oy in 0..oh {
                    for ox in 0..ow {
                        for ch in 0..c {
                            let mut best = f64::NEG_INFINITY;
                            let mut arg = 0;
                            for dy in 0..*size {
                                for dx in 0..*size {
                                    let idx = ((b * h + oy * size + dy) * w + ox * size + dx) * c + ch;
                                    // Strict comparison: ties go to the first cell.
                                    if x.data[idx] > best {
                                        best = x.data[idx];
                                        arg = idx;
                                    }
                                }
                            }
                            y.push(best);
                            argmax.push(arg);
                        }
                    }
                }
            }
            Ok((
                Tensor::new(out_shape, y),
                LayerCache::MaxPool {
                    argmax,
                    input_shape: x.shape,
                },
            ))
        }
        LayerSpec::Relu => {
            let mut y = x.data;
            relu_inplace(&mut y);
            let output = Tensor::new(out_shape, y);
            Ok((output.clone(), LayerCache::Relu { output }))
        }
        LayerSpec::Sigmoid => {
            let y: Vec<f64> = x.data.iter().map(|&v| sigmoid(v)).collect();
            let output = Tensor::new(out_shape, y);
            Ok((output.clone(), LayerCache::Sigmoid { output }))
        }
        LayerSpec::GlobalAvgPool => {
            let (h, w, c) = (x.shape[1], x.shape[2], x.shape[3]);
            let inv = 1.0 / (h * w) as f64;
            let mut y = vec![0.0; n * c];
            for b in 0..n {
                for p in 0..h * w {
                    let base = (b * h * w + p) * c;
                    for ch in 0..c {
                        y[b * c + ch] += x.data[base + ch] * inv;
                    }
                }
            }
            Ok((
                Tensor::new(out_shape, y),
                LayerCache::GlobalAvgPool { input_shape: x.shape },
            ))
        }
        LayerSpec::Flatten => {
            let input_shape = x.shape.clone();
            Ok((Tensor::new(out_shape, x.data), LayerCache::Flatten { input_shape }))
        }
    }
}

fn backward_layer(
    layer: &LayerSpec,
    params: &ParamStore,
    cache: &LayerCache,
    g: Tensor,
    grads: &mut Gradients,
    need_input_grad: bool,
) -> Result<Option<Tensor>> {
    let n = g.batch();
    match (layer, cache) {
        (LayerSpec::Dense { name, input, output }, LayerCache::Dense { input: x }) => {
            let ws = params.slot(&format!("{name}.w"))?;
            let bs = params.slot(&format!("{name}.b"))?;
            gemm(*input, n, *output, 1.0, &x.data, true, &g.data, false, 1.0, grads.slot_mut(ws));
            add_column_sums(&g.data, *output, grads.slot_mut(bs));
            if !need_input_grad {
                return Ok(None);
            }
            let mut dx = vec![0.0; n * input];
            gemm(n, *output, *input, 1.0, &g.data, false, params.slot_data(ws), true, 0.0, &mut dx);
            Ok(Some(Tensor::new(x.shape.clone(), dx)))
        }
        (LayerSpec::Residual { name, dim }, LayerCache::Residual { input, hidden, output }) => {
            let d = *dim;
            let w1 = params.slot(&format!("{name}.fc1.w"))?;
            let b1 = params.slot(&format!("{name}.fc1.b"))?;
            let w2 = params.slot(&format!("{name}.fc2.w"))?;
            let b2 = params.slot(&format!("{name}.fc2.b"))?;
            let mut ds = g.data;
            for (v, o) in ds.iter_mut().zip(&output.data) {
                if *o <= 0.0 {
                    *v = 0.0;
                }
            }
            gemm(d, n, d, 1.0, &hidden.data, true, &ds, false, 1.0, grads.slot_mut(w2));
            add_column_sums(&ds, d, grads.slot_mut(b2));
            let mut dh = vec![0.0; n * d];
            gemm(n, d, d, 1.0, &ds, false, params.slot_data(w2), true, 0.0, &mut dh);
            for (v, h) in dh.iter_mut().zip(&hidden.data) {
                if *h <= 0.0 {
                    *v = 0.0;
                }
            }
            gemm(d, n, d, 1.0, &input.data, true, &dh, false, 1.0, grads.slot_mut(w1));
            add_column_sums(&dh, d, grads.slot_mut(b1));
            if !need_input_grad {
                return Ok(None);
            }
            // Skip path plus the branch through fc1.
            gemm(n, d, d, 1.0, &dh, false, params.slot_data(w1), true, 1.0, &mut ds);
            Ok(Some(Tensor::new(input.shape.clone(), ds)))
        }
        (
            LayerSpec::Conv {
                name,
                in_channels,
                out_channels,
                kernel,
                stride,
            },
            LayerCache::Conv { cols, input_shape },
        ) => {
            let ws = params.slot(&format!("{name}.w"))?;
            let bs = params.slot(&format!("{name}.b"))?;
            let geom = ConvGeom::new(input_shape, *in_channels, *kernel, *stride, &g.shape[1..]);
            let rows = n * geom.oh * geom.ow;
            gemm(geom.patch, rows, *out_channels, 1.0, cols, true, &g.data, false, 1.0, grads.slot_mut(ws));
            add_column_sums(&g.data, *out_channels, grads.slot_mut(bs));
            if !need_input_grad {
                return Ok(None);
            }
            let mut dcols = vec![0.0; rows * geom.patch];
            gemm(rows, *out_channels, geom.patch, 1.0, &g.data, false, params.slot_data(ws), true, 0.0, &mut dcols);
            let dx = col2im(&dcols, &geom);
            Ok(Some(Tensor::new(input_shape.clone(), dx)))
        }
        (LayerSpec::MaxPool { .. }, LayerCache::MaxPool { argmax, input_shape }) => {
            if !need_input_grad {
                return Ok(None);
            }
            let mut dx = vec![0.0; input_shape.iter().product()];
            for (v, &i) in g.data.iter().zip(argmax) {
                dx[i] += v;
            }
            Ok(Some(Tensor::new(input_shape.clone(), dx)))
        }
        (LayerSpec::Relu, LayerCache::Relu { output }) => {
            if !need_input_grad {
                return Ok(None);
            }
            let mut dx = g.data;
            for (v, o) in dx.iter_mut().zip(&output.data) {
                if *o <= 0.0 {
                    *v = 0.0;
                }
            }
            Ok(Some(Tensor::new(output.shape.clone(), dx)))
        }
        (LayerSpec::Sigmoid, LayerCache::Sigmoid { output }) => {
            if !need_input_grad {
                return Ok(None);
            }
            let dx = g.data.iter().zip(&output.data).map(|(v, s)| v * s * (1.0 - s)).collect();
            Ok(Some(Tensor::new(output.shape.clone(), dx)))
        }
        (LayerSpec::GlobalAvgPool, LayerCache::GlobalAvgPool { input_shape }) => {
            if !need_input_grad {
                return Ok(None);
            }
            let (h, w, c) = (input_shape[1], input_shape[2], input_shape[3]);
            let inv = 1.0 / (h * w) as f64;
            let mut dx = vec![0.0; n * h * w * c];
            for b in 0..n {
                for p in 0..h * w {
                    let base = (b * h * w + p) * c;
                    for ch in 0..c {
                        dx[base + ch] = g.data[b * c + ch] * inv;
                    }
                }
            }
            Ok(Some(Tensor::new(input_shape.clone(), dx)))
        }
        (LayerSpec::Flatten, LayerCache::Flatten { input_shape }) => {
            if !need_input_grad {
                return Ok(None);
            }
            Ok(Some(Tensor::new(input_shape.clone(), g.data)))
        }
        _ => Err(Error::StaleCache(format!("cache entry does not match {} layer", layer.kind()))),
    }
}

fn affine(x: &[f64], n: usize, input: usize, output: usize, w: &[f64], b: &[f64]) -> Vec<f64> {
    let mut y = Vec::with_capacity(n * output);
    for _ in 0..n {
        y.extend_from_slice(b);
    }
    gemm(n, input, output, 1.0, x, false, w, false, 1.0, &mut y);
    y
}

fn relu_inplace(v: &mut [f64]) {
    for x in v.iter_mut() {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
}

fn add_column_sums(g: &[f64], cols: usize, out: &mut [f64]) {
    for row in g.chunks_exact(cols) {
        for (o, v) in out.iter_mut().zip(row) {
            *o += v;
        }
    }
}

struct ConvGeom {
    n: usize,
    h: usize,
    w: usize,
    c: usize,
    k: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
    patch: usize,
}

impl ConvGeom {
    fn new(input_shape: &[usize], c: usize, k: usize, stride: usize, out_item: &[usize]) -> Self {
        ConvGeom {
            n: input_shape[0],
            h: input_shape[1],
            w: input_shape[2],
            c,
            k,
            stride,
            pad: k / 2,
            oh: out_item[0],
            ow: out_item[1],
            patch: k * k * c,
        }
    }

    /// Input pixel for output `(oy, ox)` and kernel tap `(ky, kx)`.
    #[inline]
    fn source(&self, oy: usize, ox: usize, ky: usize, kx: usize) -> Option<(usize, usize)> {
        let iy = (oy * self.stride + ky).checked_sub(self.pad)?;
        let ix = (ox * self.stride + kx).checked_sub(self.pad)?;
        (iy < self.h && ix < self.w).then_some((iy, ix))
    }
}

fn im2col(x: &[f64], g: &ConvGeom) -> Vec<f64> {
    let mut cols = vec![0.0; g.n * g.oh * g.ow * g.patch];
    for b in 0..g.n {
        for oy in 0..g.oh {
            for ox in 0..g.ow {
                let row = ((b * g.oh + oy) * g.ow + ox) * g.patch;
                for ky in 0..g.k {
                    for kx in 0..g.k {
                        if let Some((iy, ix)) = g.source(oy, ox, ky, kx) {
                            let src = ((b * g.h + iy) * g.w + ix) * g.c;
                            let dst = row + (ky * g.k + kx) * g.c;
                            cols[dst..dst + g.c].copy_from_slice(&x[src..src + g.c]);
                        }
                    }
                }
            }
        }
    }
    cols
}

fn col2im(cols: &[f64], g: &ConvGeom) -> Vec<f64> {
    let mut x = vec![0.0; g.n * g.h * g.w * g.c];
    for b in 0..g.n {
        for oy in 0..g.oh {
            for ox in 0..g.ow {
                let row = ((b * g.oh + oy) * g.ow + ox) * g.patch;
                for ky in 0..g.k {
                    for kx in 0..g.k {
                        if let Some((iy, ix)) = g.source(oy, ox, ky, kx) {
                            let dst = ((b * g.h + iy) * g.w + ix) * g.c;
                            let src = row + (ky * g.k + kx) * g.c;
                            for ch in 0..g.c {
                                x[dst + ch] += cols[src + ch];
                            }
                        }
                    }
                }
            }
        }
    }
    x
}

/// Concatenate `[N, d_i]` tensors along the feature axis.
pub fn concat(parts: &[&Tensor]) -> Result<Tensor> {
    let n = parts.first().map_or(0, |t| t.batch());
    for (i, p) in parts.iter().enumerate() {
        if p.shape.len() != 2 || p.batch() != n {
            return Err(Error::Shape {
                layer: i,
                expected: vec![n, 0],
                actual: p.shape.clone(),
            });
        }
    }
    let total: usize = parts.iter().map(|p| p.shape[1]).sum();
    let mut data = Vec::with_capacity(n * total);
    for b in 0..n {
        for p in parts {
            data.extend_from_slice(p.row(b));
        }
    }
    Ok(Tensor::new(vec![n, total], data))
}

/// Backward of [`concat`]: split a `[N, sum(widths)]` gradient into parts.
pub fn split(grad: &Tensor, widths: &[usize]) -> Vec<Tensor> {
    let n = grad.batch();
    let total: usize = widths.iter().sum();
    assert_eq!(grad.shape, vec![n, total], "split widths do not match gradient");
    let mut out: Vec<Vec<f64>> = widths.iter().map(|w| Vec::with_capacity(n * w)).collect();
    for b in 0..n {
        let row = grad.row(b);
        let mut off = 0;
        for (o, w) in out.iter_mut().zip(widths) {
            o.extend_from_slice(&row[off..off + w]);
            off += w;
        }
    }
    out.into_iter()
        .zip(widths)
        .map(|(d, w)| Tensor::new(vec![n, *w], d))
        .collect()
}
