//! Shape contracts of features, networks and explanation maps, each observed
//! on real data rather than read from constants.

use phono::dataset::{synth_pcg, window_signal, SynthConfig, WindowId};
use phono::dsp::{FeatureExtractor, FeatureVariant};
use phono::interpret::occlusion_map;
use phono::models::{assemble_input, build_model, HeuristicSegmenter, ModelVariant, Segmenter};
use phono::nn::{init_params, LayerSpec, NetInput, Network, Shape};

pub struct Contract {
    pub name: &'static str,
    pub expected: Vec<usize>,
    pub observed: Vec<usize>,
}

impl Contract {
    pub fn holds(&self) -> bool {
        self.expected == self.observed
    }
}

fn first_window() -> Vec<f64> {
    let rec = synth_pcg("shape", &SynthConfig::default()).unwrap().recording;
    window_signal(&rec).unwrap()[0].samples.to_vec()
}

fn network(variant: ModelVariant) -> Network<f32> {
    let spec = build_model(variant).unwrap();
    Network::new(spec.clone(), init_params(&spec, 1).unwrap()).unwrap()
}

fn flatten_input(net: &Network<f32>) -> Shape {
    let i = net.spec().layers.iter().position(|l| *l == LayerSpec::Flatten).unwrap();
    net.shapes()[i]
}

pub fn contracts() -> Vec<Contract> {
    let window = first_window();
    let fx = FeatureExtractor::new();
    let mut out = Vec::new();
    for (name, variant, expected) in [
        (
            "feature map, 6 bands x 3 channels",
            FeatureVariant::Exp1SixBand3Ch,
            vec![6, 99, 3],
        ),
        (
            "feature map, 6 bands x 1 channel",
            FeatureVariant::Exp1SixBand1Ch,
            vec![6, 99, 1],
        ),
        (
            "feature map, 26 bands x 1 channel",
            FeatureVariant::Exp2TwentySixBand1Ch,
            vec![26, 99, 1],
        ),
    ] {
        let fm = fx.extract(&window, variant).unwrap();
        assert_eq!(fm.values.len(), fm.dims().iter().product::<usize>());
        out.push(Contract {
            name,
            expected,
            observed: fm.dims().to_vec(),
        });
    }

    // model1: the activation entering the head is [segmenter embedding | CNN].
    let net = network(ModelVariant::Model1);
    let seg = HeuristicSegmenter::default()
        .segment(&WindowId::new("shape", 0), &window)
        .unwrap();
    let fm = fx.extract(&window, FeatureVariant::Exp1SixBand3Ch).unwrap();
    let input = assemble_input(ModelVariant::Model1, &fm, Some(&seg)).unwrap();
    let concat = net.spec().concat_index().unwrap();
    let joined = net.forward_to(&input, concat + 1).unwrap();
    out.push(Contract {
        name: "model1 intermediate width",
        expected: vec![460],
        observed: vec![joined.len()],
    });
    let slice = joined.iter().zip(&seg.embedding).take_while(|(a, b)| a == b).count();
    out.push(Contract {
        name: "model1 segmenter slice width",
        expected: vec![100],
        observed: vec![slice.min(seg.embedding.len())],
    });

    let final_net = network(ModelVariant::Final);
    out.push(Contract {
        name: "final model intermediate",
        expected: vec![3, 6, 60],
        observed: flatten_input(&final_net).dims(),
    });

    let fm = fx.extract(&window, FeatureVariant::Exp2TwentySixBand1Ch).unwrap();
    let x = assemble_input(ModelVariant::Final, &fm, None).unwrap();
    let model = |m: &[f32]| final_net.predict(&NetInput::new(m.to_vec())).unwrap() as f64;
    let occ = occlusion_map(model, &x.map, final_net.spec().input, (3, 3), 0.0).unwrap();
    assert_eq!(occ.values.len(), occ.rows * occ.cols);
    out.push(Contract {
        name: "occlusion map, 3x3 mask",
        expected: vec![24, 97],
        observed: vec![occ.rows, occ.cols],
    });
    out
}
