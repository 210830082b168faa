//! Declarative network architecture and static shape propagation.

use std::fmt;

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Activation {
    Relu,
    Sigmoid,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Padding {
    Same,
    Valid,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LayerSpec {
    /// Stride-1 2-D convolution over a `[H × W × C]` map, followed by the
    /// activation and (in training) inverted dropout.
    Conv2d {
        filters: usize,
        kernel: (usize, usize),
        padding: Padding,
        activation: Activation,
        dropout: f64,
        max_norm: Option<f64>,
    },
    MaxPool {
        pool: (usize, usize),
    },
    Flatten,
    Dense {
        units: usize,
        activation: Activation,
        dropout: f64,
        max_norm: Option<f64>,
    },
    /// Prepends the auxiliary input vector (the segmenter branch) to the
    /// current feature vector: `[aux | x]`.
    Concat {
        width: usize,
    },
}

impl LayerSpec {
    pub fn conv(filters: usize, kernel: (usize, usize), dropout: f64, max_norm: f64) -> Self {
        LayerSpec::Conv2d {
            filters,
            kernel,
            padding: Padding::Same,
            activation: Activation::Relu,
            dropout,
            max_norm: Some(max_norm),
        }
    }

    pub fn dense(units: usize, activation: Activation, dropout: f64, max_norm: Option<f64>) -> Self {
        LayerSpec::Dense {
            units,
            activation,
            dropout,
            max_norm,
        }
    }

    pub fn pool(h: usize, w: usize) -> Self {
        LayerSpec::MaxPool { pool: (h, w) }
    }

    pub fn has_params(&self) -> bool {
        matches!(self, LayerSpec::Conv2d { .. } | LayerSpec::Dense { .. })
    }

    pub fn kind(&self) -> &'static str {
        match self {
            LayerSpec::Conv2d { .. } => "conv2d",
            LayerSpec::MaxPool { .. } => "maxpool",
            LayerSpec::Flatten => "flatten",
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Concat { .. } => "concat",
        }
    }
}

/// Activation shape between layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    Map { h: usize, w: usize, c: usize },
    Vector(usize),
}

impl Shape {
    pub fn len(&self) -> usize {
        match *self {
            Shape::Map { h, w, c } => h * w * c,
            Shape::Vector(n) => n,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dims(&self) -> Vec<usize> {
        match *self {
            Shape::Map { h, w, c } => vec![h, w, c],
            Shape::Vector(n) => vec![n],
        }
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Shape::Map { h, w, c } => write!(f, "[{h}×{w}×{c}]"),
            Shape::Vector(n) => write!(f, "[{n}]"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    /// `[H, W, C]` of the feature-map input.
    pub input: [usize; 3],
    /// Width of the auxiliary vector consumed by a `Concat` layer, 0 if none.
    pub aux_width: usize,
    pub layers: Vec<LayerSpec>,
}

/// Zero-padding `(top, left)` and output size for a stride-1 convolution.
pub(crate) fn conv_geometry(
    h: usize,
    w: usize,
    kernel: (usize, usize),
    padding: Padding,
) -> Option<(usize, usize, usize, usize)> {
    let (kh, kw) = kernel;
    match padding {
        Padding::Same => Some(((kh - 1) / 2, (kw - 1) / 2, h, w)),
        Padding::Valid => (h >= kh && w >= kw).then(|| (0, 0, h - kh + 1, w - kw + 1)),
    }
}

impl NetworkSpec {
    pub fn input_shape(&self) -> Shape {
        let [h, w, c] = self.input;
        Shape::Map { h, w, c }
    }

    /// Input shape followed by the output shape of every layer.
    pub fn shapes(&self) -> Result<Vec<Shape>> {
        let mut shapes = vec![self.input_shape()];
        if self.input.iter().any(|&d| d == 0) {
            return Err(Error::invalid("network input dims must be positive"));
        }
        let mut concat_seen = false;
        for (i, layer) in self.layers.iter().enumerate() {
            let cur = *shapes.last().unwrap();
            let bad = |why: &str| Error::invalid(format!("layer {i} ({}): {why}, input {cur}", layer.kind()));
            let next = match (layer, cur) {
                (
                    LayerSpec::Conv2d {
                        filters,
                        kernel,
                        padding,
                        activation,
                        dropout,
                        ..
                    },
                    Shape::Map { h, w, .. },
                ) => {
                    if *filters == 0 || kernel.0 == 0 || kernel.1 == 0 {
                        return Err(bad("zero-sized filter bank"));
                    }
                    if *activation == Activation::Sigmoid {
                        return Err(bad("sigmoid is reserved for the output layer"));
                    }
                    check_dropout(*dropout).map_err(|_| bad("dropout must be in [0, 1)"))?;
                    let (_, _, oh, ow) =
                        conv_geometry(h, w, *kernel, *padding).ok_or_else(|| bad("kernel larger than input"))?;
                    Shape::Map {
                        h: oh,
                        w: ow,
                        c: *filters,
                    }
                }
                (LayerSpec::MaxPool { pool }, Shape::Map { h, w, c }) => {
                    if pool.0 == 0 || pool.1 == 0 || h < pool.0 || w < pool.1 {
                        return Err(bad("pool window does not fit"));
                    }
                    Shape::Map {
                        h: h / pool.0,
                        w: w / pool.1,
                        c,
                    }
                }
                (LayerSpec::Flatten, Shape::Map { .. }) => Shape::Vector(cur.len()),
                (
                    LayerSpec::Dense {
                        units,
                        activation,
                        dropout,
                        ..
                    },
                    Shape::Vector(_),
                ) => {
                    if *units == 0 {
                        return Err(bad("zero units"));
                    }
                    let last = i + 1 == self.layers.len();
                    if *activation == Activation::Sigmoid && !last {
                        return Err(bad("sigmoid is reserved for the output layer"));
                    }
                    check_dropout(*dropout).map_err(|_| bad("dropout must be in [0, 1)"))?;
                    if *activation == Activation::Sigmoid && *dropout > 0.0 {
                        return Err(bad("no dropout on the sigmoid output"));
                    }
                    Shape::Vector(*units)
                }
                (LayerSpec::Concat { width }, Shape::Vector(n)) => {
                    if concat_seen {
                        return Err(bad("only one concat tap is supported"));
                    }
                    if *width != self.aux_width || *width == 0 {
                        return Err(bad("concat width must equal the auxiliary input width"));
                    }
                    concat_seen = true;
                    Shape::Vector(n + width)
                }
                _ => return Err(bad("incompatible input shape")),
            };
            shapes.push(next);
        }
        if self.aux_width > 0 && !concat_seen {
            return Err(Error::invalid(
                "auxiliary input declared but no concat layer consumes it",
            ));
        }
        match self.layers.last() {
            Some(LayerSpec::Dense {
                units: 1,
                activation: Activation::Sigmoid,
                ..
            }) => Ok(shapes),
            _ => Err(Error::invalid("network must end in Dense(1, Sigmoid)")),
        }
    }

    /// Kernel and bias dims for every layer (`None` for parameter-free layers).
    pub fn param_dims(&self) -> Result<Vec<Option<(Vec<usize>, Vec<usize>)>>> {
        let shapes = self.shapes()?;
        Ok(self
            .layers
            .iter()
            .zip(&shapes)
            .map(|(layer, input)| match (layer, input) {
                (
                    LayerSpec::Conv2d {
                        filters,
                        kernel: (kh, kw),
                        ..
                    },
                    Shape::Map { c, .. },
                ) => Some((vec![*filters, *kh, *kw, *c], vec![*filters])),
                (LayerSpec::Dense { units, .. }, Shape::Vector(n)) => Some((vec![*units, *n], vec![*units])),
                _ => None,
            })
            .collect())
    }

    pub fn param_count(&self) -> Result<usize> {
        Ok(self
            .param_dims()?
            .iter()
            .flatten()
            .map(|(k, b)| k.iter().product::<usize>() + b.iter().product::<usize>())
            .sum())
    }

    pub fn fingerprint(&self) -> u64 {
        // FNV-1a over the debug rendering; stable for a given spec value.
        let text = format!("{self:?}");
        text.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
            (h ^ b as u64).wrapping_mul(0x0100_0000_01b3)
        })
    }

    /// Index of the concat layer, if any.
    pub fn concat_index(&self) -> Option<usize> {
        self.layers.iter().position(|l| matches!(l, LayerSpec::Concat { .. }))
    }
}

fn check_dropout(p: f64) -> std::result::Result<(), ()> {
    if (0.0..1.0).contains(&p) {
        Ok(())
    } else {
        Err(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> NetworkSpec {
        NetworkSpec {
            input: [5, 9, 2],
            aux_width: 0,
            layers: vec![
                LayerSpec::conv(4, (3, 3), 0.0, 2.7),
                LayerSpec::pool(2, 2),
                LayerSpec::Flatten,
                LayerSpec::dense(1, Activation::Sigmoid, 0.0, Some(3.0)),
            ],
        }
    }

    #[test]
    fn same_padding_and_pool_arithmetic() {
        let s = tiny().shapes().unwrap();
        assert_eq!(s[1], Shape::Map { h: 5, w: 9, c: 4 });
        assert_eq!(s[2], Shape::Map { h: 2, w: 4, c: 4 });
        assert_eq!(s[3], Shape::Vector(32));
        assert_eq!(s[4], Shape::Vector(1));
    }

    #[test]
    fn rejects_missing_sigmoid_head() {
        let mut spec = tiny();
        spec.layers.pop();
        spec.layers.push(LayerSpec::dense(2, Activation::None, 0.0, None));
        assert!(spec.shapes().is_err());
    }

    #[test]
    fn rejects_dense_on_map() {
        let mut spec = tiny();
        spec.layers.remove(2);
        let err = spec.shapes().unwrap_err().to_string();
        assert!(err.contains("layer 2 (dense)"), "{err}");
    }

    #[test]
    fn param_count() {
        // conv: 4·3·3·2 + 4, dense: 32 + 1
        assert_eq!(tiny().param_count().unwrap(), 76 + 33);
    }
}
