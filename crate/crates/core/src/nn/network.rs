use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::layers::{self, ConvGeom, PoolGeom};
use super::scalar::{sigmoid, Scalar};
use super::spec::{conv_geometry, Activation, LayerSpec, NetworkSpec, Shape};
use super::tensor::Tensor;
use crate::rng::stream;
use crate::{Error, Result};

/// Kernel and bias of one parameterised layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams<T> {
    pub kernel: Tensor<T>,
    pub bias: Tensor<T>,
}

/// One entry per layer; `None` for parameter-free layers. Gradients share
/// this layout.
pub type ParamSet<T> = Vec<Option<LayerParams<T>>>;

pub(crate) fn zeros_like<T: Scalar, U: Scalar>(params: &[Option<LayerParams<U>>]) -> ParamSet<T> {
    params
        .iter()
        .map(|p| {
            p.as_ref().map(|p| LayerParams {
                kernel: Tensor::zeros(&p.kernel.dims),
                bias: Tensor::zeros(&p.bias.dims),
            })
        })
        .collect()
}

/// Named flat view used by the weights file: `layer{i}.kernel`, `layer{i}.bias`.
pub fn named_tensors<T>(params: &[Option<LayerParams<T>>]) -> Vec<(String, &Tensor<T>)> {
    let mut out = Vec::new();
    for (i, p) in params.iter().enumerate() {
        if let Some(p) = p {
            out.push((format!("layer{i}.kernel"), &p.kernel));
            out.push((format!("layer{i}.bias"), &p.bias));
        }
    }
    out
}

#[derive(Debug, Clone)]
pub(crate) enum Op {
    Conv { geom: ConvGeom, relu: bool, dropout: f64 },
    Pool(PoolGeom),
    Flatten,
    Dense { act: Activation, dropout: f64 },
    Concat { width: usize },
}

impl Op {
    fn dropout(&self) -> f64 {
        match *self {
            Op::Conv { dropout, .. } | Op::Dense { dropout, .. } => dropout,
            _ => 0.0,
        }
    }
}

fn compile(spec: &NetworkSpec) -> Result<(Vec<Shape>, Vec<Op>)> {
    let shapes = spec.shapes()?;
    let ops = spec
        .layers
        .iter()
        .zip(&shapes)
        .zip(&shapes[1..])
        .map(|((layer, &input), &output)| match (layer, input, output) {
            (
                LayerSpec::Conv2d {
                    kernel,
                    padding,
                    activation,
                    dropout,
                    ..
                },
                Shape::Map { h, w, c },
                Shape::Map { h: oh, w: ow, c: cout },
            ) => {
                let (pad_t, pad_l, _, _) = conv_geometry(h, w, *kernel, *padding).expect("validated by shapes()");
                Op::Conv {
                    geom: ConvGeom {
                        h,
                        w,
                        cin: c,
                        kh: kernel.0,
                        kw: kernel.1,
                        pad_t,
                        pad_l,
                        oh,
                        ow,
                        cout,
                    },
                    relu: *activation == Activation::Relu,
                    dropout: *dropout,
                }
            }
            (LayerSpec::MaxPool { pool }, Shape::Map { h, w, c }, Shape::Map { h: oh, w: ow, .. }) => {
                Op::Pool(PoolGeom {
                    h,
                    w,
                    c,
                    ph: pool.0,
                    pw: pool.1,
                    oh,
                    ow,
                })
            }
            (LayerSpec::Flatten, _, _) => Op::Flatten,
            (
                LayerSpec::Dense {
                    activation, dropout, ..
                },
                Shape::Vector(_),
                Shape::Vector(_),
            ) => Op::Dense {
                act: *activation,
                dropout: *dropout,
            },
            (LayerSpec::Concat { width }, _, _) => Op::Concat { width: *width },
            _ => unreachable!("shape propagation accepted an inconsistent layer"),
        })
        .collect();
    Ok((shapes, ops))
}

/// Input of one example: the feature map (channels-last) and the optional
/// auxiliary vector consumed by a concat layer.
#[derive(Debug, Clone, PartialEq)]
pub struct NetInput<T> {
    pub map: Vec<T>,
    pub aux: Vec<T>,
}

impl<T: Scalar> NetInput<T> {
    pub fn new(map: Vec<T>) -> Self {
        Self { map, aux: Vec::new() }
    }

    pub fn with_aux(map: Vec<T>, aux: Vec<T>) -> Self {
        Self { map, aux }
    }

    pub fn cast<U: Scalar>(&self) -> NetInput<U> {
        NetInput {
            map: self.map.iter().map(|v| U::from_f64(v.to_f64())).collect(),
            aux: self.aux.iter().map(|v| U::from_f64(v.to_f64())).collect(),
        }
    }
}

/// Per-layer activations of a forward pass.
#[derive(Debug, Clone)]
pub struct Cache<T> {
    spec_id: u64,
    generation: u64,
    train_mode: bool,
    /// `acts[i]` is the input of layer `i`; `acts[n]` holds the probability.
    acts: Vec<Vec<T>>,
    cols: Vec<Vec<T>>,
    argmax: Vec<Vec<usize>>,
    masks: Vec<Vec<T>>,
    logit: T,
}

impl<T: Scalar> Cache<T> {
    pub fn prob(&self) -> T {
        self.acts.last().expect("non-empty cache")[0]
    }

    pub fn logit(&self) -> T {
        self.logit
    }

    /// Input activation of layer `i`.
    pub fn activation(&self, i: usize) -> &[T] {
        &self.acts[i]
    }
}

/// A network spec bound to concrete weights.
#[derive(Debug, Clone)]
pub struct Network<T> {
    spec: NetworkSpec,
    shapes: Vec<Shape>,
    ops: Vec<Op>,
    params: ParamSet<T>,
    spec_id: u64,
    /// Bumped on every parameter mutation so stale caches are detected.
    generation: u64,
}

/// Uniform initialisation: He for ReLU layers, Glorot for the rest; zero biases.
pub fn init_params(spec: &NetworkSpec, seed: u64) -> Result<ParamSet<f32>> {
    let dims = spec.param_dims()?;
    Ok(spec
        .layers
        .iter()
        .zip(dims)
        .enumerate()
        .map(|(i, (layer, d))| {
            d.map(|(kdims, bdims)| {
                let (fan_in, fan_out, act) = match layer {
                    LayerSpec::Conv2d { activation, .. } => {
                        let rf = kdims[1] * kdims[2];
                        (rf * kdims[3], rf * kdims[0], *activation)
                    }
                    LayerSpec::Dense { activation, .. } => (kdims[1], kdims[0], *activation),
                    _ => unreachable!(),
                };
                let limit = match act {
                    Activation::Relu => (6.0 / fan_in as f64).sqrt(),
                    _ => (6.0 / (fan_in + fan_out) as f64).sqrt(),
                };
                let mut rng = stream(seed, &[0x1417, i as u64]);
                let n: usize = kdims.iter().product();
                let data = (0..n).map(|_| rng.gen_range(-limit..limit) as f32).collect();
                LayerParams {
                    kernel: Tensor { dims: kdims, data },
                    bias: Tensor::zeros(&bdims),
                }
            })
        })
        .collect())
}

impl<T: Scalar> Network<T> {
    pub fn new(spec: NetworkSpec, params: ParamSet<T>) -> Result<Self> {
        let (shapes, ops) = compile(&spec)?;
        let dims = spec.param_dims()?;
        if dims.len() != params.len() {
            return Err(Error::invalid(format!(
                "weights cover {} layers, network has {}",
                params.len(),
                dims.len()
            )));
        }
        for (i, (d, p)) in dims.iter().zip(&params).enumerate() {
            match (d, p) {
                (None, None) => {}
                (Some((k, b)), Some(p)) => {
                    if &p.kernel.dims != k || p.kernel.len() != k.iter().product::<usize>() {
                        return Err(Error::shape(format!("layer{i}.kernel"), k, &p.kernel.dims));
                    }
                    if &p.bias.dims != b || p.bias.len() != b.iter().product::<usize>() {
                        return Err(Error::shape(format!("layer{i}.bias"), b, &p.bias.dims));
                    }
                }
                _ => {
                    return Err(Error::invalid(format!(
                        "layer {i}: parameter presence does not match spec"
                    )))
                }
            }
        }
        let spec_id = spec.fingerprint();
        Ok(Self {
            spec,
            shapes,
            ops,
            params,
            spec_id,
            generation: 0,
        })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn params(&self) -> &ParamSet<T> {
        &self.params
    }

    /// Mutable access; invalidates outstanding caches.
    pub fn params_mut(&mut self) -> &mut ParamSet<T> {
        self.generation += 1;
        &mut self.params
    }

    pub fn into_params(self) -> ParamSet<T> {
        self.params
    }

    /// Input shape followed by every layer's output shape.
    pub fn shapes(&self) -> &[Shape] {
        &self.shapes
    }

    pub(crate) fn ops(&self) -> &[Op] {
        &self.ops
    }

    pub fn cast<U: Scalar>(&self) -> Network<U> {
        let params = self
            .params
            .iter()
            .map(|p| {
                p.as_ref().map(|p| LayerParams {
                    kernel: p.kernel.cast(),
                    bias: p.bias.cast(),
                })
            })
            .collect();
        Network::new(self.spec.clone(), params).expect("same spec")
    }

    fn check_input(&self, input: &NetInput<T>) -> Result<()> {
        if input.map.len() != self.shapes[0].len() {
            let [h, w, c] = self.spec.input;
            return Err(Error::shape("network input", &[h, w, c], &[input.map.len()]));
        }
        if input.aux.len() != self.spec.aux_width {
            return Err(Error::shape(
                "auxiliary input",
                &[self.spec.aux_width],
                &[input.aux.len()],
            ));
        }
        Ok(())
    }

    /// Full forward pass. In train mode dropout masks are drawn from `rng`.
    pub fn forward(&self, input: &NetInput<T>, train: Option<&mut ChaCha8Rng>) -> Result<(T, Cache<T>)> {
        self.check_input(input)?;
        let n = self.ops.len();
        let train_mode = train.is_some();
        let mut rng = train;
        let mut acts = Vec::with_capacity(n + 1);
        let mut cols = vec![Vec::new(); n];
        let mut argmax = vec![Vec::new(); n];
        let mut masks = vec![Vec::new(); n];
        acts.push(input.map.clone());
        let mut logit = T::ZERO;
        for (i, op) in self.ops.iter().enumerate() {
            let x = &acts[i];
            let mut out = vec![T::ZERO; self.shapes[i + 1].len()];
            match op {
                Op::Conv { geom, relu, .. } => {
                    let p = self.params[i].as_ref().unwrap();
                    layers::conv_forward(geom, x, &p.kernel.data, &p.bias.data, &mut cols[i], &mut out);
                    if *relu {
                        layers::relu_in_place(&mut out);
                    }
                }
                Op::Pool(g) => {
                    argmax[i] = vec![0; out.len()];
                    layers::maxpool(g, x, 0, g.ow, &mut out, Some(&mut argmax[i]));
                }
                Op::Flatten => out.copy_from_slice(x),
                Op::Dense { act, .. } => {
                    let p = self.params[i].as_ref().unwrap();
                    layers::dense_forward(&p.kernel.data, &p.bias.data, x, &mut out);
                    match act {
                        Activation::Relu => layers::relu_in_place(&mut out),
                        Activation::Sigmoid => {
                            logit = out[0];
                            out[0] = sigmoid(out[0]);
                        }
                        Activation::None => {}
                    }
                }
                Op::Concat { width } => {
                    out[..*width].copy_from_slice(&input.aux);
                    out[*width..].copy_from_slice(x);
                }
            }
            let rate = op.dropout();
            if let Some(r) = rng.as_deref_mut() {
                if rate > 0.0 {
                    let keep = T::from_f64(1.0 / (1.0 - rate));
                    let mask: Vec<T> = (0..out.len())
                        .map(|_| if r.gen::<f64>() < rate { T::ZERO } else { keep })
                        .collect();
                    for (o, m) in out.iter_mut().zip(&mask) {
                        *o *= *m;
                    }
                    masks[i] = mask;
                }
            }
            acts.push(out);
        }
        if !logit.is_finite() {
            return Err(Error::Numeric("non-finite network output".into()));
        }
        let prob = acts[n][0];
        Ok((
            prob,
            Cache {
                spec_id: self.spec_id,
                generation: self.generation,
                train_mode,
                acts,
                cols,
                argmax,
                masks,
                logit,
            },
        ))
    }

    /// Eval-mode probability.
    pub fn predict(&self, input: &NetInput<T>) -> Result<T> {
        self.check_input(input)?;
        let act = self.run_range(0, self.ops.len(), input.map.clone(), &input.aux)?;
        Ok(act[0])
    }

    /// Eval-mode activation after the first `end` layers.
    pub fn forward_to(&self, input: &NetInput<T>, end: usize) -> Result<Vec<T>> {
        self.check_input(input)?;
        if end > self.ops.len() {
            return Err(Error::invalid(format!(
                "layer index {end} beyond network depth {}",
                self.ops.len()
            )));
        }
        self.run_range(0, end, input.map.clone(), &input.aux)
    }

    /// Eval-mode probability resuming from the input of layer `start`.
    /// `aux` is only consulted if a concat layer lies ahead.
    pub fn forward_from(&self, start: usize, act: Vec<T>, aux: &[T]) -> Result<T> {
        if start > self.ops.len() {
            return Err(Error::invalid(format!(
                "layer index {start} beyond network depth {}",
                self.ops.len()
            )));
        }
        if act.len() != self.shapes[start].len() {
            return Err(Error::shape(
                format!("input of layer {start}"),
                &self.shapes[start].dims(),
                &[act.len()],
            ));
        }
        Ok(self.run_range(start, self.ops.len(), act, aux)?[0])
    }

    fn run_range(&self, start: usize, end: usize, mut x: Vec<T>, aux: &[T]) -> Result<Vec<T>> {
        let mut cols = Vec::new();
        for i in start..end {
            let mut out = vec![T::ZERO; self.shapes[i + 1].len()];
            match &self.ops[i] {
                Op::Conv { geom, relu, .. } => {
                    let p = self.params[i].as_ref().unwrap();
                    layers::conv_forward(geom, &x, &p.kernel.data, &p.bias.data, &mut cols, &mut out);
                    if *relu {
                        layers::relu_in_place(&mut out);
                    }
                }
                Op::Pool(g) => layers::maxpool(g, &x, 0, g.ow, &mut out, None),
                Op::Flatten => out.copy_from_slice(&x),
                Op::Dense { act, .. } => {
                    let p = self.params[i].as_ref().unwrap();
                    layers::dense_forward(&p.kernel.data, &p.bias.data, &x, &mut out);
                    match act {
                        Activation::Relu => layers::relu_in_place(&mut out),
                        Activation::Sigmoid => out[0] = sigmoid(out[0]),
                        Activation::None => {}
                    }
                }
                Op::Concat { width } => {
                    if aux.len() != *width {
                        return Err(Error::shape("auxiliary input", &[*width], &[aux.len()]));
                    }
                    out[..*width].copy_from_slice(aux);
                    out[*width..].copy_from_slice(&x);
                }
            }
            x = out;
        }
        Ok(x)
    }

    fn check_cache(&self, cache: &Cache<T>) -> Result<()> {
        if cache.spec_id != self.spec_id || cache.acts.len() != self.ops.len() + 1 {
            return Err(Error::invalid("cache was produced by a different network"));
        }
        if cache.generation != self.generation {
            return Err(Error::invalid("stale cache: weights changed since forward"));
        }
        Ok(())
    }

    /// Gradients of a loss `L` given `dL/dprob`.
    pub fn backward(&self, cache: &Cache<T>, d_loss_d_prob: T) -> Result<ParamSet<T>> {
        let p = cache.prob();
        let mut grads = zeros_like(&self.params);
        self.backward_logit_into(cache, d_loss_d_prob * p * (T::ONE - p), &mut grads)?;
        Ok(grads)
    }

    /// Gradients given `dL/dlogit` directly (for BCE this is `prob − target`).
    pub fn backward_logit(&self, cache: &Cache<T>, d_loss_d_logit: T) -> Result<ParamSet<T>> {
        let mut grads = zeros_like(&self.params);
        self.backward_logit_into(cache, d_loss_d_logit, &mut grads)?;
        Ok(grads)
    }

    /// Accumulates (adds) gradients into `grads`.
    pub fn backward_logit_into(&self, cache: &Cache<T>, d_loss_d_logit: T, grads: &mut ParamSet<T>) -> Result<()> {
        self.check_cache(cache)?;
        if grads.len() != self.params.len() {
            return Err(Error::invalid("gradient buffer layout does not match network"));
        }
        let n = self.ops.len();
        let mut dout = vec![d_loss_d_logit];
        let mut scratch = Vec::new();
        for i in (0..n).rev() {
            let op = &self.ops[i];
            let out = &cache.acts[i + 1];
            if cache.train_mode && !cache.masks[i].is_empty() {
                for (d, m) in dout.iter_mut().zip(&cache.masks[i]) {
                    *d *= *m;
                }
            }
            // Gradient w.r.t. this layer's input is only needed if some
            // earlier layer has parameters.
            let need_dx = self.params[..i].iter().any(Option::is_some);
            let mut dx = if need_dx {
                vec![T::ZERO; cache.acts[i].len()]
            } else {
                Vec::new()
            };
            match op {
                Op::Conv { geom, relu, .. } => {
                    if *relu {
                        relu_mask(&mut dout, out);
                    }
                    let p = self.params[i].as_ref().unwrap();
                    let g = grads[i].as_mut().unwrap();
                    layers::conv_backward(
                        geom,
                        &cache.cols[i],
                        &p.kernel.data,
                        &dout,
                        &mut g.kernel.data,
                        &mut g.bias.data,
                        need_dx.then_some(dx.as_mut_slice()),
                        &mut scratch,
                    );
                }
                Op::Pool(_) => {
                    if need_dx {
                        layers::maxpool_backward(&cache.argmax[i], &dout, &mut dx);
                    }
                }
                Op::Flatten => {
                    if need_dx {
                        dx.copy_from_slice(&dout);
                    }
                }
                Op::Dense { act, .. } => {
                    match act {
                        Activation::Relu => relu_mask(&mut dout, out),
                        // dout already holds dL/dlogit for the output unit.
                        Activation::Sigmoid | Activation::None => {}
                    }
                    let p = self.params[i].as_ref().unwrap();
                    let g = grads[i].as_mut().unwrap();
                    layers::dense_backward(
                        &p.kernel.data,
                        &cache.acts[i],
                        &dout,
                        &mut g.kernel.data,
                        &mut g.bias.data,
                        need_dx.then_some(dx.as_mut_slice()),
                    );
                }
                Op::Concat { width } => {
                    if need_dx {
                        dx.copy_from_slice(&dout[*width..]);
                    }
                }
            }
            if !need_dx {
                break;
            }
            dout = dx;
        }
        Ok(())
    }
}

fn relu_mask<T: Scalar>(dout: &mut [T], out: &[T]) {
    for (d, &o) in dout.iter_mut().zip(out) {
        if o <= T::ZERO {
            *d = T::ZERO;
        }
    }
}
