use std::fmt;
use std::str::FromStr;

use super::segmenter::{SegmenterOutput, EMBEDDING_LEN};
use crate::dsp::{FeatureMap, FeatureVariant};
use crate::nn::{Activation, LayerSpec, NetInput, NetworkSpec, Shape};
use crate::{Error, Result, N_FRAMES};

const CONV_DROPOUT: f64 = 0.2;
const CONV_CAP: f64 = 2.7;
const MLP_DROPOUT: f64 = 0.5;
const MLP_CAP: f64 = 3.0;

/// Flattened width of the Experiment-I convolutional encoder.
pub const CNN_WIDTH: usize = 360;
/// Width of model1's concatenated feature vector.
pub const HYBRID_WIDTH: usize = CNN_WIDTH + EMBEDDING_LEN;
/// Output map of the final model's convolutional stack.
pub const FINAL_INTERMEDIATE: [usize; 3] = [3, 6, 60];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ModelVariant {
    Model1,
    Model1Star,
    Model2,
    Model2Star,
    Model3,
    Model3Star,
    Final,
}

impl ModelVariant {
    pub const ALL: [ModelVariant; 7] = [
        ModelVariant::Model1,
        ModelVariant::Model1Star,
        ModelVariant::Model2,
        ModelVariant::Model2Star,
        ModelVariant::Model3,
        ModelVariant::Model3Star,
        ModelVariant::Final,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelVariant::Model1 => "model1",
            ModelVariant::Model1Star => "model1_star",
            ModelVariant::Model2 => "model2",
            ModelVariant::Model2Star => "model2_star",
            ModelVariant::Model3 => "model3",
            ModelVariant::Model3Star => "model3_star",
            ModelVariant::Final => "final",
        }
    }

    /// Star variants see only the MFCC channel.
    pub fn is_star(self) -> bool {
        matches!(
            self,
            ModelVariant::Model1Star | ModelVariant::Model2Star | ModelVariant::Model3Star
        )
    }

    pub fn uses_segmenter(self) -> bool {
        matches!(
            self,
            ModelVariant::Model1 | ModelVariant::Model1Star | ModelVariant::Model2 | ModelVariant::Model2Star
        )
    }

    pub fn feature_variant(self) -> FeatureVariant {
        match self {
            ModelVariant::Final => FeatureVariant::Exp2TwentySixBand1Ch,
            v if v.is_star() => FeatureVariant::Exp1SixBand1Ch,
            _ => FeatureVariant::Exp1SixBand3Ch,
        }
    }

    /// `[H, W, C]` of the network input.
    pub fn input_dims(self) -> [usize; 3] {
        let [h, w, c] = self.feature_variant().dims();
        match self {
            ModelVariant::Model2 | ModelVariant::Model2Star => [h, w, c + 1],
            _ => [h, w, c],
        }
    }
}

impl fmt::Display for ModelVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelVariant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown model variant {s:?}")))
    }
}

fn mlp_head() -> Vec<LayerSpec> {
    vec![
        LayerSpec::dense(128, Activation::Relu, MLP_DROPOUT, Some(MLP_CAP)),
        LayerSpec::dense(64, Activation::Relu, MLP_DROPOUT, Some(MLP_CAP)),
        LayerSpec::dense(1, Activation::Sigmoid, 0.0, Some(MLP_CAP)),
    ]
}

/// `[6×99×c] → [3×49×20] → [1×12×40] → [1×12×30]`, flattened to 360.
fn experiment1_encoder() -> Vec<LayerSpec> {
    vec![
        LayerSpec::conv(20, (3, 3), CONV_DROPOUT, CONV_CAP),
        LayerSpec::pool(2, 2),
        LayerSpec::conv(40, (3, 3), CONV_DROPOUT, CONV_CAP),
        LayerSpec::pool(3, 4),
        LayerSpec::conv(30, (1, 1), CONV_DROPOUT, CONV_CAP),
        LayerSpec::pool(1, 1),
        LayerSpec::Flatten,
    ]
}

pub fn build_model(variant: ModelVariant) -> Result<NetworkSpec> {
    let input = variant.input_dims();
    let spec = match variant {
        ModelVariant::Final => NetworkSpec {
            input,
            aux_width: 0,
            layers: [
                LayerSpec::conv(16, (3, 3), CONV_DROPOUT, CONV_CAP),
                LayerSpec::pool(2, 2),
                LayerSpec::conv(32, (3, 3), CONV_DROPOUT, CONV_CAP),
                LayerSpec::pool(2, 2),
                LayerSpec::conv(60, (3, 3), CONV_DROPOUT, CONV_CAP),
                LayerSpec::pool(2, 4),
                LayerSpec::Flatten,
            ]
            .into_iter()
            .chain(mlp_head())
            .collect(),
        },
        ModelVariant::Model1 | ModelVariant::Model1Star => NetworkSpec {
            input,
            aux_width: EMBEDDING_LEN,
            layers: experiment1_encoder()
                .into_iter()
                .chain([LayerSpec::Concat { width: EMBEDDING_LEN }])
                .chain(mlp_head())
                .collect(),
        },
        _ => NetworkSpec {
            input,
            aux_width: 0,
            layers: experiment1_encoder().into_iter().chain(mlp_head()).collect(),
        },
    };

    let shapes = spec.shapes()?;
    let flatten = spec
        .layers
        .iter()
        .position(|l| *l == LayerSpec::Flatten)
        .expect("every model flattens");
    let encoded = shapes[flatten + 1].len();
    match variant {
        ModelVariant::Final => {
            let [h, w, c] = FINAL_INTERMEDIATE;
            assert_eq!(shapes[flatten], Shape::Map { h, w, c }, "final model intermediate");
        }
        _ => assert_eq!(encoded, CNN_WIDTH, "{variant} encoder width"),
    }
    if let Some(i) = spec.concat_index() {
        assert_eq!(shapes[i + 1].len(), HYBRID_WIDTH, "{variant} concat width");
    }
    Ok(spec)
}

/// Row-replicates the per-frame states into an `[n_mel × 99]` plane.
pub fn tile_segmentation_channel(states: &[f32], n_mel: usize) -> Result<Vec<f32>> {
    if states.len() != N_FRAMES {
        return Err(Error::shape("segmenter frame states", &[N_FRAMES], &[states.len()]));
    }
    Ok((0..n_mel).flat_map(|_| states.iter().copied()).collect())
}

/// Builds the network input for `variant` from the window's feature map and,
/// where the variant needs one, its segmentation.
pub fn assemble_input(variant: ModelVariant, fm: &FeatureMap, seg: Option<&SegmenterOutput>) -> Result<NetInput<f32>> {
    let expected = variant.feature_variant().dims();
    if fm.dims() != expected {
        return Err(Error::shape(format!("{variant} feature map"), &expected, &fm.dims()));
    }
    let seg = match (variant.uses_segmenter(), seg) {
        (true, Some(s)) => Some(s),
        (true, None) => return Err(Error::invalid(format!("{variant} requires a segmenter"))),
        (false, _) => None,
    };
    match variant {
        ModelVariant::Model2 | ModelVariant::Model2Star => {
            let plane = tile_segmentation_channel(&seg.unwrap().frame_states, fm.n_mel)?;
            Ok(NetInput::new(fm.with_extra_channel(&plane)?.values))
        }
        ModelVariant::Model1 | ModelVariant::Model1Star => {
            let emb = &seg.unwrap().embedding;
            if emb.len() != EMBEDDING_LEN {
                return Err(Error::shape("segmenter embedding", &[EMBEDDING_LEN], &[emb.len()]));
            }
            Ok(NetInput::with_aux(fm.values.clone(), emb.clone()))
        }
        _ => Ok(NetInput::new(fm.values.clone())),
    }
}
