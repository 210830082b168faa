//! Central finite-difference oracle for network parameter gradients.

use phono::nn::{
    bce_from_logit, init_params, Activation, LayerSpec, NetInput, Network, NetworkSpec, Padding, ParamSet,
};
use phono::rng::{derive_seed, stream};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const STEP: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;
/// Denominator floor for the relative error, so that parameters whose true
/// gradient is zero (dead units) do not turn rounding noise into a failure.
pub const REL_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    Conv,
    MaxPool,
    Flatten,
    Dense,
    Concat,
    Dropout,
}

impl LayerKind {
    pub const ALL: [LayerKind; 6] = [
        LayerKind::Conv,
        LayerKind::MaxPool,
        LayerKind::Flatten,
        LayerKind::Dense,
        LayerKind::Concat,
        LayerKind::Dropout,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LayerKind::Conv => "conv2d",
            LayerKind::MaxPool => "maxpool",
            LayerKind::Flatten => "flatten",
            LayerKind::Dense => "dense",
            LayerKind::Concat => "concat",
            LayerKind::Dropout => "dropout",
        }
    }
}

pub struct Case {
    pub net: Network<f64>,
    pub input: NetInput<f64>,
    pub target: f64,
    /// Seed of the dropout masks; `None` checks eval mode.
    pub dropout_seed: Option<u64>,
}

fn act(rng: &mut ChaCha8Rng) -> Activation {
    if rng.gen_bool(0.5) {
        Activation::Relu
    } else {
        Activation::None
    }
}

fn conv(rng: &mut ChaCha8Rng, filters: usize, kernel: (usize, usize), padding: Padding, dropout: f64) -> LayerSpec {
    LayerSpec::Conv2d {
        filters,
        kernel,
        padding,
        activation: act(rng),
        dropout,
        max_norm: None,
    }
}

fn head() -> LayerSpec {
    LayerSpec::dense(1, Activation::Sigmoid, 0.0, None)
}

/// A small random network exercising `kind`, with random weights, biases,
/// input and target.
pub fn random_case(kind: LayerKind, seed: u64) -> Case {
    let mut rng = stream(seed, &[kind as u64]);
    let h = rng.gen_range(2..6);
    let w = rng.gen_range(2..7);
    let c = rng.gen_range(1..4);
    let mut aux_width = 0;
    let layers = match kind {
        LayerKind::Conv => {
            let padding = if rng.gen_bool(0.5) {
                Padding::Same
            } else {
                Padding::Valid
            };
            let kernel = (rng.gen_range(1..=h.min(3)), rng.gen_range(1..=w.min(3)));
            let filters = rng.gen_range(1..4);
            vec![
                conv(&mut rng, filters, kernel, padding, 0.0),
                LayerSpec::Flatten,
                head(),
            ]
        }
        LayerKind::MaxPool => {
            let pool = (rng.gen_range(1..=h.min(3)), rng.gen_range(1..=w.min(3)));
            vec![
                conv(&mut rng, 2, (2, 2), Padding::Same, 0.0),
                LayerSpec::MaxPool { pool },
                LayerSpec::Flatten,
                head(),
            ]
        }
        LayerKind::Flatten => vec![
            LayerSpec::Flatten,
            LayerSpec::dense(3, act(&mut rng), 0.0, None),
            head(),
        ],
        LayerKind::Dense => {
            let units = rng.gen_range(1..6);
            let a = act(&mut rng);
            vec![
                LayerSpec::Flatten,
                LayerSpec::dense(units, a, 0.0, None),
                LayerSpec::dense(rng.gen_range(1..5), act(&mut rng), 0.0, None),
                head(),
            ]
        }
        LayerKind::Concat => {
            aux_width = rng.gen_range(1..5);
            vec![
                conv(&mut rng, 2, (2, 2), Padding::Same, 0.0),
                LayerSpec::Flatten,
                LayerSpec::Concat { width: aux_width },
                LayerSpec::dense(4, act(&mut rng), 0.0, None),
                head(),
            ]
        }
        LayerKind::Dropout => vec![
            conv(&mut rng, 3, (2, 2), Padding::Same, 0.3),
            LayerSpec::Flatten,
            LayerSpec::dense(5, Activation::Relu, 0.5, None),
            head(),
        ],
    };
    let spec = NetworkSpec {
        input: [h, w, c],
        aux_width,
        layers,
    };
    let params = init_params(&spec, derive_seed(seed, &[1])).expect("valid random spec");
    let mut net = Network::new(spec, params).expect("params fit spec").cast::<f64>();
    for p in net.params_mut().iter_mut().flatten() {
        for v in p.kernel.data.iter_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
        for v in p.bias.data.iter_mut() {
            *v = rng.gen_range(-0.5..0.5);
        }
    }
    let map = (0..h * w * c).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let aux = (0..aux_width).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Case {
        net,
        input: NetInput::with_aux(map, aux),
        target: if rng.gen_bool(0.5) { 1.0 } else { 0.0 },
        dropout_seed: (kind == LayerKind::Dropout).then(|| derive_seed(seed, &[2])),
    }
}

fn loss(case: &Case, net: &Network<f64>) -> f64 {
    let mut rng = case.dropout_seed.map(|s| stream(s, &[]));
    let (_, cache) = net.forward(&case.input, rng.as_mut()).expect("forward");
    bce_from_logit(cache.logit(), case.target)
}

fn param_mut(net: &mut Network<f64>, layer: usize, tensor: usize, j: usize) -> &mut f64 {
    let lp = net.params_mut()[layer].as_mut().unwrap();
    if tensor == 0 {
        &mut lp.kernel.data[j]
    } else {
        &mut lp.bias.data[j]
    }
}

/// Backpropagated gradients of the BCE loss against `target`.
pub fn analytic(case: &Case, target: f64) -> ParamSet<f64> {
    let mut rng = case.dropout_seed.map(|s| stream(s, &[]));
    let (p, cache) = case.net.forward(&case.input, rng.as_mut()).expect("forward");
    case.net.backward_logit(&cache, p - target).expect("backward")
}

/// Largest relative error between backpropagated and finite-difference
/// gradients of the BCE loss over every parameter of the case.
pub fn max_relative_error(case: &Case) -> f64 {
    relative_error_of(case, &analytic(case, case.target))
}

/// Largest relative error of `grads` against finite differences of the
/// case's loss.
pub fn relative_error_of(case: &Case, grads: &ParamSet<f64>) -> f64 {
    let mut probe = case.net.clone();
    let mut worst = 0.0f64;
    for (layer, g) in grads.iter().enumerate() {
        let Some(g) = g else { continue };
        for (tensor, analytic) in [(0, &g.kernel.data), (1, &g.bias.data)] {
            for (j, &a) in analytic.iter().enumerate() {
                let orig = *param_mut(&mut probe, layer, tensor, j);
                *param_mut(&mut probe, layer, tensor, j) = orig + STEP;
                let up = loss(case, &probe);
                *param_mut(&mut probe, layer, tensor, j) = orig - STEP;
                let down = loss(case, &probe);
                *param_mut(&mut probe, layer, tensor, j) = orig;
                let numeric = (up - down) / (2.0 * STEP);
                let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(REL_FLOOR);
                worst = worst.max(rel);
            }
        }
    }
    worst
}

/// Checks `configs` random networks for `kind`; returns the worst error.
pub fn check_kind(kind: LayerKind, configs: usize, seed: u64) -> f64 {
    (0..configs)
        .map(|i| max_relative_error(&random_case(kind, derive_seed(seed, &[i as u64]))))
        .fold(0.0, f64::max)
}
