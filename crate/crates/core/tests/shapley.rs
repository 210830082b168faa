mod support;

use phono::interpret::{
    column_groups, exact_game, sampled_game, shapley_columns, shapley_exact, shapley_grouped, shapley_intermediate,
    shapley_sampled, CoalitionGame, ColumnMaskGame, HeadFeatureGame,
};
use phono::models::{build_model, ModelVariant, HYBRID_WIDTH};
use phono::nn::{init_params, Activation, LayerSpec, NetInput, Network, NetworkSpec, Padding};
use phono::rng::stream;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;
use support::shapley_oracle::{by_all_orderings, compare_estimators, max_abs_diff, random_point_pair, RandomModel};

#[test]
fn sampled_matches_exact_on_random_models() {
    let r = compare_estimators(20, 8, 2000, 7);
    println!("{r:?}");
    assert!(r.sampled_vs_exact < 0.02);
    assert!(r.exact_vs_orderings < 1e-12);
    assert!(r.efficiency < 1e-9);
    assert!(r.linear < 1e-9);
}

#[test]
fn product_of_two_features() {
    let phi = by_all_orderings(&|x: &[f64]| x[0] * x[1], &[1.0, 1.0], &[0.0, 0.0]);
    assert_eq!(phi, vec![0.5, 0.5]);
    let a = shapley_exact(|x: &[f64]| x[0] * x[1], &[1.0, 1.0], &[0.0, 0.0]).unwrap();
    assert!(max_abs_diff(&a.values, &phi) < 1e-15);
}

#[test]
fn sampling_error_shrinks_with_more_permutations() {
    let mean_err = |m: usize| {
        (0..8u64)
            .map(|k| {
                let model = RandomModel::new(8, 6, 100 + k);
                let f = |x: &[f64]| model.eval(x);
                let (x, b) = random_point_pair(8, 200 + k);
                let exact = shapley_exact(f, &x, &b).unwrap();
                let s = shapley_sampled(f, &x, &b, m, k).unwrap();
                s.values
                    .iter()
                    .zip(&exact.values)
                    .map(|(a, e)| (a - e).abs())
                    .sum::<f64>()
                    / 8.0
            })
            .sum::<f64>()
            / 8.0
    };
    let (coarse, fine) = (mean_err(20), mean_err(2000));
    assert!(fine < coarse / 4.0, "m=20: {coarse:e}, m=2000: {fine:e}");
}

#[test]
fn sampled_values_do_not_depend_on_thread_count() {
    let model = RandomModel::new(8, 6, 1);
    let f = |x: &[f64]| model.eval(x);
    let (x, b) = random_point_pair(8, 2);
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let three = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
    let a = one.install(|| shapley_sampled(f, &x, &b, 100, 9).unwrap());
    let c = three.install(|| shapley_sampled(f, &x, &b, 100, 9).unwrap());
    assert_eq!(a, c);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn symmetric_players_share_equally(seed in any::<u64>(), n in 3usize..7) {
        // f depends on x0 and x1 only through x0 + x1, and both move by the same amount.
        let model = RandomModel::new(n - 1, 4, seed);
        let f = |x: &[f64]| {
            let mut y = x[1..].to_vec();
            y[0] += x[0];
            model.eval(&y)
        };
        let (mut x, mut b) = random_point_pair(n, seed);
        x[1] = x[0];
        b[1] = b[0];
        let a = shapley_exact(f, &x, &b).unwrap();
        prop_assert!((a.values[0] - a.values[1]).abs() < 1e-12);
    }

    #[test]
    fn ignored_feature_gets_zero(seed in any::<u64>(), n in 2usize..8, m in 1usize..64) {
        let model = RandomModel::new(n - 1, 4, seed);
        let f = |x: &[f64]| model.eval(&x[..n - 1]);
        let (x, b) = random_point_pair(n, seed ^ 1);
        prop_assert_eq!(shapley_exact(f, &x, &b).unwrap().values[n - 1], 0.0);
        prop_assert_eq!(shapley_sampled(f, &x, &b, m, seed).unwrap().values[n - 1], 0.0);
    }

    #[test]
    fn sampled_estimate_is_efficient(seed in any::<u64>(), n in 1usize..12, m in 1usize..80) {
        let model = RandomModel::new(n, 5, seed);
        let f = |x: &[f64]| model.eval(x);
        let (x, b) = random_point_pair(n, seed ^ 2);
        let s = shapley_sampled(f, &x, &b, m, seed).unwrap();
        prop_assert!((s.sum() - (f(&x) - f(&b))).abs() < 1e-9);
    }

    #[test]
    fn exact_agrees_with_orderings(seed in any::<u64>(), n in 1usize..7) {
        let model = RandomModel::new(n, 4, seed);
        let f = |x: &[f64]| model.eval(x);
        let (x, b) = random_point_pair(n, seed ^ 3);
        let exact = shapley_exact(f, &x, &b).unwrap();
        prop_assert!(max_abs_diff(&exact.values, &by_all_orderings(&f, &x, &b)) < 1e-12);
    }
}

#[test]
fn grouping_confines_mass_to_the_read_frames() {
    // Stub reading only frames 40..=45 of a [26 × 99 × 1] map, with interactions.
    let (h, w) = (26, 99);
    let f = |x: &[f64]| {
        let mut s = 0.0;
        for y in 0..h {
            for col in 40..=45 {
                s += x[y * w + col] * (1.0 + 0.1 * y as f64) / 50.0;
            }
        }
        (s + 0.5 * (x[40] * x[5 * w + 45])).tanh()
    };
    let mut rng = stream(4, &[]);
    let x: Vec<f64> = (0..h * w).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let b = vec![0.0; h * w];
    let groups = column_groups(h, w, 1);
    let map = shapley_grouped(f, &x, &b, &[h, w, 1], &groups, 200, 1).unwrap();
    let col_phi: Vec<f64> = (0..w).map(|c| map.values[c]).collect();
    let total: f64 = col_phi.iter().map(|v| v.abs()).sum();
    let inside: f64 = col_phi[40..=45].iter().map(|v| v.abs()).sum();
    assert!(total > 0.0);
    assert!(inside / total >= 0.95, "inside fraction {}", inside / total);
    assert!((map.sum() / h as f64 - (f(&x) - f(&b))).abs() < 1e-9);
}

fn small_conv_net(seed: u64, aux_width: usize) -> Network<f32> {
    let mut layers = vec![
        LayerSpec::conv(4, (3, 3), 0.0, 3.0),
        LayerSpec::pool(2, 2),
        LayerSpec::Conv2d {
            filters: 3,
            kernel: (2, 3),
            padding: Padding::Valid,
            activation: Activation::Relu,
            dropout: 0.0,
            max_norm: None,
        },
        LayerSpec::pool(1, 2),
        LayerSpec::Flatten,
    ];
    if aux_width > 0 {
        layers.push(LayerSpec::Concat { width: aux_width });
    }
    layers.push(LayerSpec::dense(6, Activation::Relu, 0.0, None));
    layers.push(LayerSpec::dense(1, Activation::Sigmoid, 0.0, None));
    let spec = NetworkSpec {
        input: [5, 17, 2],
        aux_width,
        layers,
    };
    let mut params = init_params(&spec, seed).unwrap();
    let mut rng = stream(seed, &[3]);
    for p in params.iter_mut().flatten() {
        p.bias.data.iter_mut().for_each(|v| *v = rng.gen_range(-0.3..0.3));
    }
    Network::new(spec, params).unwrap()
}

fn random_input(net: &Network<f32>, seed: u64) -> NetInput<f32> {
    let [h, w, c] = net.spec().input;
    let mut rng = stream(seed, &[5]);
    NetInput::with_aux(
        (0..h * w * c).map(|_| rng.gen_range(-2.0..2.0)).collect(),
        (0..net.spec().aux_width).map(|_| rng.gen_range(0.0..1.0)).collect(),
    )
}

/// Masked-input oracle: columns outside the coalition take baseline values.
fn masked_prediction(net: &Network<f32>, input: &NetInput<f32>, baseline: &[f32], coalition: &[bool]) -> f64 {
    let [h, w, c] = net.spec().input;
    let mut map = baseline.to_vec();
    for y in 0..h {
        for x in (0..w).filter(|&x| coalition[x]) {
            for ch in 0..c {
                let i = (y * w + x) * c + ch;
                map[i] = input.map[i];
            }
        }
    }
    net.predict(&NetInput::with_aux(map, input.aux.clone())).unwrap() as f64
}

fn check_column_game(net: &Network<f32>, seed: u64, orders: usize) {
    let input = random_input(net, seed);
    let baseline = random_input(net, seed + 1).map;
    let game = ColumnMaskGame::new(net, &input, &baseline).unwrap();
    let w = net.spec().input[1];
    assert_eq!(game.n_players(), w);
    let mut rng = stream(seed, &[6]);
    let mut order: Vec<usize> = (0..w).collect();
    let mut path = vec![0.0; w + 1];
    for _ in 0..orders {
        order.shuffle(&mut rng);
        game.path_values(&order, &mut path);
        let mut coalition = vec![false; w];
        for k in 0..=w {
            let oracle = masked_prediction(net, &input, &baseline, &coalition);
            assert!((path[k] - oracle).abs() < 2e-5, "step {k}: {} vs {oracle}", path[k]);
            assert!((game.value(&coalition) - oracle).abs() < 1e-12);
            if k < w {
                coalition[order[k]] = true;
            }
        }
    }
}

#[test]
fn column_game_paths_match_masked_predictions() {
    for seed in 0..4 {
        check_column_game(&small_conv_net(seed, 0), seed, 5);
        check_column_game(&small_conv_net(seed, 3), seed, 5);
    }
}

#[test]
fn column_game_on_full_size_variants() {
    for variant in [ModelVariant::Final, ModelVariant::Model1, ModelVariant::Model2Star] {
        let spec = build_model(variant).unwrap();
        let net = Network::new(spec.clone(), init_params(&spec, 8).unwrap()).unwrap();
        check_column_game(&net, 8, 1);
    }
}

#[test]
fn column_game_exact_on_few_columns() {
    // With the columns as players the library's exact enumeration, the
    // orderings oracle over masked predictions and the sampled path
    // estimator must agree.
    let spec = NetworkSpec {
        input: [4, 6, 1],
        aux_width: 0,
        layers: vec![
            LayerSpec::conv(3, (3, 3), 0.0, 3.0),
            LayerSpec::pool(2, 2),
            LayerSpec::Flatten,
            LayerSpec::dense(4, Activation::Relu, 0.0, None),
            LayerSpec::dense(1, Activation::Sigmoid, 0.0, None),
        ],
    };
    let net = Network::new(spec.clone(), init_params(&spec, 2).unwrap()).unwrap();
    let input = random_input(&net, 2);
    let baseline = vec![0.0f32; 24];
    let game = ColumnMaskGame::new(&net, &input, &baseline).unwrap();
    let exact = exact_game(&game).unwrap();
    let columns = |z: &[f64]| {
        let coalition: Vec<bool> = z.iter().map(|&v| v > 0.5).collect();
        masked_prediction(&net, &input, &baseline, &coalition)
    };
    let oracle = by_all_orderings(&columns, &[1.0; 6], &[0.0; 6]);
    assert!(max_abs_diff(&exact, &oracle) < 1e-12);
    let (sampled, _, _) = sampled_game(&game, 4000, 3).unwrap();
    assert!(max_abs_diff(&sampled, &oracle) < 0.02);
    let map = shapley_columns(&net, &input, &baseline, 50, 3).unwrap();
    assert_eq!(map.dims, vec![4, 6, 1]);
    assert!((map.sum() / 4.0 - (map.target_output - map.base_value)).abs() < 1e-6);
}

#[test]
fn head_game_paths_match_values() {
    let net = small_conv_net(5, 4);
    let x = random_input(&net, 1);
    let layer = net.spec().concat_index().unwrap() + 1;
    let inst = net.forward_to(&x, layer).unwrap();
    let base = net.forward_to(&random_input(&net, 2), layer).unwrap();
    let game = HeadFeatureGame::new(&net, layer, inst.clone(), base).unwrap();
    let n = game.n_players();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream(1, &[]));
    let mut path = vec![0.0; n + 1];
    game.path_values(&order, &mut path);
    let mut coalition = vec![false; n];
    for k in 0..=n {
        assert!((path[k] - game.value(&coalition)).abs() < 1e-9);
        if k < n {
            coalition[order[k]] = true;
        }
    }
    let full = game.value(&vec![true; n]);
    assert!((full - net.predict(&x).unwrap() as f64).abs() < 1e-6);
}

#[test]
fn intermediate_split_on_model1() {
    let spec = build_model(ModelVariant::Model1).unwrap();
    let net = Network::new(spec.clone(), init_params(&spec, 4).unwrap()).unwrap();
    let bg: Vec<NetInput<f32>> = (0..60).map(|s| random_input(&net, 100 + s)).collect();
    let x = random_input(&net, 7);
    let r = shapley_intermediate(&net, &x, &bg, 100, 2).unwrap();
    assert_eq!(r.map.dims, vec![HYBRID_WIDTH]);
    let mass: f64 = r.map.values.iter().map(|v| v.abs()).sum();
    assert!((r.segmenter_mass + r.cnn_mass - mass).abs() < 1e-9);
    assert!((r.map.sum() - (r.map.target_output - r.map.base_value)).abs() < 1e-9);
    assert!(shapley_intermediate(&net, &x, &bg[..10], 100, 2).is_err());
}
