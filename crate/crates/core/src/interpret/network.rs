//! Games over a trained network with incremental re-evaluation.
//!
//! Along a permutation path only one player changes per step, so only the
//! activations inside its receptive field are recomputed: dirty frame
//! columns are propagated through the convolution/pooling stack, and the
//! first dense layer is updated by the rank-few change of its input.

use super::shapley::{sampled_game, AttributionMap, CoalitionGame};
use crate::nn::{
    axpy, conv_from_cols, im2col, maxpool, sigmoid, Activation, ConvGeom, NetInput, Network, Op, PoolGeom,
};
use crate::{Error, Result};

/// Evaluates the part of the network from its first dense layer on, keeping
/// that layer's pre-activation in f64 so single-input changes are cheap.
struct DenseHead<'a> {
    net: &'a Network<f32>,
    /// Index of the first dense layer.
    first: usize,
    n_in: usize,
    /// First-layer kernel transposed to `[in][out]`.
    kt: Vec<f64>,
}

impl<'a> DenseHead<'a> {
    fn new(net: &'a Network<f32>, first: usize) -> Result<Self> {
        match net.ops().get(first) {
            Some(Op::Dense { .. }) => {}
            _ => return Err(Error::invalid(format!("layer {first} is not a dense layer"))),
        }
        let n_in = net.shapes()[first].len();
        let k = &net.params()[first].as_ref().unwrap().kernel.data;
        let n_out = k.len() / n_in;
        let mut kt = vec![0.0; k.len()];
        for o in 0..n_out {
            for j in 0..n_in {
                kt[j * n_out + o] = k[o * n_in + j] as f64;
            }
        }
        Ok(Self { net, first, n_in, kt })
    }

    fn pre_activation(&self, x: &[f32]) -> Vec<f64> {
        let p = self.net.params()[self.first].as_ref().unwrap();
        p.kernel
            .data
            .chunks_exact(self.n_in)
            .zip(&p.bias.data)
            .map(|(row, &b)| b as f64 + row.iter().zip(x).map(|(&w, &v)| w as f64 * v as f64).sum::<f64>())
            .collect()
    }

    /// `z += W[:, j] · delta` for each `(j, delta)`.
    #[inline(always)]
    fn update(&self, z: &mut [f64], changes: &[(usize, f64)]) {
        let n = z.len();
        for &(j, d) in changes {
            axpy(d, &self.kt[j * n..(j + 1) * n], z);
        }
    }

    /// Output probability from the first dense layer's pre-activation.
    fn finish(&self, z: &[f64]) -> f64 {
        let act = match self.net.ops()[self.first] {
            Op::Dense { act, .. } => act,
            _ => unreachable!(),
        };
        let x: Vec<f32> = z
            .iter()
            .map(|&v| match act {
                Activation::Relu => v.max(0.0) as f32,
                Activation::Sigmoid => sigmoid(v) as f32,
                Activation::None => v as f32,
            })
            .collect();
        if self.first + 1 == self.net.ops().len() {
            return x[0] as f64;
        }
        self.net
            .forward_from(self.first + 1, x, &[])
            .expect("shapes fixed at construction") as f64
    }
}

/// Conv layer prepared for sparse input updates.
struct DeltaConv {
    geom: ConvGeom,
    relu: bool,
    /// Kernel transposed to `[kh][kw][cin][cout]`.
    kt: Vec<f32>,
    /// Row and column of each input cell.
    yx: Vec<(u32, u32)>,
}

/// Pool layer with index tables, so the update loop needs no division.
struct DeltaPool {
    geom: PoolGeom,
    /// Output cell of each input cell (`u32::MAX` when cropped away).
    up: Vec<u32>,
    /// Top-left input cell of each output window.
    origin: Vec<u32>,
}

enum Stage {
    Conv(DeltaConv),
    Pool(DeltaPool),
}

/// One changed activation: spatial cell, channel and value delta.
#[derive(Clone, Copy)]
struct Change {
    cell: u32,
    ch: u32,
    d: f32,
}

/// Activation state of the convolutional stack for one coalition.
#[derive(Clone)]
struct StackState {
    /// `acts[i]` is the input of stage `i`; the last entry is the flattened map.
    acts: Vec<Vec<f32>>,
    /// Pre-activations of conv stages (empty for pools).
    pre: Vec<Vec<f32>>,
    /// Per-pool scratch flags marking outputs already queued this step.
    seen: Vec<Vec<bool>>,
}

/// Players are frame columns of the input map; a column outside the
/// coalition takes the baseline's values in every mel row and channel.
pub struct ColumnMaskGame<'a> {
    net: &'a Network<f32>,
    instance: Vec<f32>,
    baseline: Vec<f32>,
    aux: Vec<f32>,
    h: usize,
    w: usize,
    c: usize,
    stages: Vec<Stage>,
    head: DenseHead<'a>,
    /// Position of the flattened map inside the head input (after any
    /// prepended auxiliary block).
    flat_offset: usize,
    base_state: StackState,
    base_z: Vec<f64>,
}

impl<'a> ColumnMaskGame<'a> {
    pub fn new(net: &'a Network<f32>, input: &NetInput<f32>, baseline: &[f32]) -> Result<Self> {
        let [h, w, c] = net.spec().input;
        if input.map.len() != h * w * c || baseline.len() != h * w * c {
            return Err(Error::shape(
                "column game input",
                &[h, w, c],
                &[input.map.len(), baseline.len()],
            ));
        }
        let flatten = net
            .ops()
            .iter()
            .position(|o| matches!(o, Op::Flatten))
            .ok_or_else(|| Error::invalid("column masking needs a convolutional stack ending in flatten"))?;
        let mut stages = Vec::new();
        for (i, op) in net.ops()[..flatten].iter().enumerate() {
            stages.push(match op {
                Op::Conv { geom, relu, .. } => {
                    let k = &net.params()[i].as_ref().unwrap().kernel.data;
                    let kk = geom.patch_len();
                    let mut kt = vec![0.0; k.len()];
                    for co in 0..geom.cout {
                        for j in 0..kk {
                            kt[j * geom.cout + co] = k[co * kk + j];
                        }
                    }
                    let yx = (0..geom.h * geom.w)
                        .map(|c| ((c / geom.w) as u32, (c % geom.w) as u32))
                        .collect();
                    Stage::Conv(DeltaConv {
                        geom: *geom,
                        relu: *relu,
                        kt,
                        yx,
                    })
                }
                Op::Pool(g) => {
                    let mut up = vec![u32::MAX; g.h * g.w];
                    for y in 0..g.oh * g.ph {
                        for x in 0..g.ow * g.pw {
                            up[y * g.w + x] = ((y / g.ph) * g.ow + x / g.pw) as u32;
                        }
                    }
                    let origin = (0..g.oh * g.ow)
                        .map(|o| ((o / g.ow) * g.ph * g.w + (o % g.ow) * g.pw) as u32)
                        .collect();
                    Stage::Pool(DeltaPool { geom: *g, up, origin })
                }
                _ => return Err(Error::invalid("only conv/pool layers may precede flatten")),
            });
        }
        let mut first_dense = flatten + 1;
        let mut flat_offset = 0;
        if let Some(Op::Concat { width }) = net.ops().get(first_dense) {
            flat_offset = *width;
            first_dense += 1;
        }
        let head = DenseHead::new(net, first_dense)?;

        let base_input = NetInput::with_aux(baseline.to_vec(), input.aux.clone());
        let mut acts = vec![baseline.to_vec()];
        let mut pre = Vec::new();
        let mut seen = Vec::new();
        let mut cols = Vec::new();
        for (i, stage) in stages.iter().enumerate() {
            match stage {
                Stage::Conv(dc) => {
                    let p = net.params()[i].as_ref().unwrap();
                    let g = &dc.geom;
                    let mut z = vec![0.0; g.oh * g.ow * g.cout];
                    im2col(g, &acts[i], 0, g.ow, &mut cols);
                    conv_from_cols(g, &cols, &p.kernel.data, &p.bias.data, 0, g.ow, &mut z);
                    let a = z.iter().map(|&v| if dc.relu { v.max(0.0) } else { v }).collect();
                    pre.push(z);
                    seen.push(Vec::new());
                    acts.push(a);
                }
                Stage::Pool(DeltaPool { geom: g, .. }) => {
                    let mut out = vec![0.0; g.oh * g.ow * g.c];
                    maxpool(g, &acts[i], 0, g.ow, &mut out, None);
                    pre.push(Vec::new());
                    seen.push(vec![false; out.len()]);
                    acts.push(out);
                }
            }
        }
        let flat = net.forward_to(&base_input, first_dense)?;
        let base_z = head.pre_activation(&flat);
        Ok(Self {
            net,
            instance: input.map.clone(),
            baseline: baseline.to_vec(),
            aux: input.aux.clone(),
            h,
            w,
            c,
            stages,
            head,
            flat_offset,
            base_state: StackState { acts, pre, seen },
            base_z,
        })
    }

    /// Applies sparse input `changes` to stage `i` and returns the
    /// resulting changes of its output.
    #[inline(always)]
    fn propagate(&self, st: &mut StackState, i: usize, changes: &[Change]) -> Vec<Change> {
        let mut next = Vec::new();
        match &self.stages[i] {
            Stage::Conv(dc) => {
                let g = &dc.geom;
                let z = &mut st.pre[i];
                let (mut lo, mut hi) = (usize::MAX, 0);
                // Changes arrive cell-major, so consecutive entries sharing a
                // cell share their output neighbourhood.
                let mut start = 0;
                while start < changes.len() {
                    let cell = changes[start].cell;
                    let mut end = start + 1;
                    while end < changes.len() && changes[end].cell == cell {
                        end += 1;
                    }
                    let group = &changes[start..end];
                    start = end;
                    let (y, x) = dc.yx[cell as usize];
                    for dy in 0..g.kh {
                        let oy = (y as usize + g.pad_t) as isize - dy as isize;
                        if oy < 0 || oy >= g.oh as isize {
                            continue;
                        }
                        for dx in 0..g.kw {
                            let ox = (x as usize + g.pad_l) as isize - dx as isize;
                            if ox < 0 || ox >= g.ow as isize {
                                continue;
                            }
                            let ox = ox as usize;
                            lo = lo.min(ox);
                            hi = hi.max(ox + 1);
                            let o = (oy as usize * g.ow + ox) * g.cout;
                            let zo = &mut z[o..o + g.cout];
                            let kbase = (dy * g.kw + dx) * g.cin;
                            for ch in group {
                                let k = (kbase + ch.ch as usize) * g.cout;
                                axpy(ch.d, &dc.kt[k..k + g.cout], zo);
                            }
                        }
                    }
                }
                let a = &mut st.acts[i + 1];
                for y in 0..g.oh {
                    for x in lo..hi.max(lo) {
                        let cell = y * g.ow + x;
                        for co in 0..g.cout {
                            let j = cell * g.cout + co;
                            let v = if dc.relu { z[j].max(0.0) } else { z[j] };
                            if v != a[j] {
                                next.push(Change {
                                    cell: cell as u32,
                                    ch: co as u32,
                                    d: v - a[j],
                                });
                                a[j] = v;
                            }
                        }
                    }
                }
            }
            Stage::Pool(dp) => {
                let g = &dp.geom;
                let (input, output) = st.acts.split_at_mut(i + 1);
                let (x, out) = (&input[i], &mut output[0]);
                let seen = &mut st.seen[i];
                let mut cells = Vec::with_capacity(changes.len());
                for ch in changes {
                    let oc = dp.up[ch.cell as usize];
                    if oc != u32::MAX {
                        let o = oc as usize * g.c + ch.ch as usize;
                        if !seen[o] {
                            seen[o] = true;
                            cells.push((oc, ch.ch));
                        }
                    }
                }
                for (oc, ch) in cells {
                    let o = oc as usize * g.c + ch as usize;
                    seen[o] = false;
                    let origin = dp.origin[oc as usize] as usize;
                    let mut best = f32::NEG_INFINITY;
                    for dy in 0..g.ph {
                        let row = (origin + dy * g.w) * g.c + ch as usize;
                        for dx in 0..g.pw {
                            let v = x[row + dx * g.c];
                            if v > best {
                                best = v;
                            }
                        }
                    }
                    if best != out[o] {
                        next.push(Change {
                            cell: oc,
                            ch,
                            d: best - out[o],
                        });
                        out[o] = best;
                    }
                }
            }
        }
        next
    }
}

impl ColumnMaskGame<'_> {
    #[inline(always)]
    fn path_values_impl(&self, order: &[usize], out: &mut [f64]) {
        let mut st = self.base_state.clone();
        let mut z = self.base_z.clone();
        out[0] = self.head.finish(&z);
        for (k, &x) in order.iter().enumerate() {
            let mut changes = Vec::new();
            for y in 0..self.h {
                let cell = y * self.w + x;
                for ch in 0..self.c {
                    let o = cell * self.c + ch;
                    let d = self.instance[o] - self.baseline[o];
                    if d != 0.0 {
                        changes.push(Change {
                            cell: cell as u32,
                            ch: ch as u32,
                            d,
                        });
                    }
                    st.acts[0][o] = self.instance[o];
                }
            }
            for i in 0..self.stages.len() {
                if changes.is_empty() {
                    break;
                }
                changes = self.propagate(&mut st, i, &changes);
            }
            if changes.is_empty() {
                out[k + 1] = out[k];
            } else {
                let c = match self.stages.last() {
                    Some(Stage::Pool(dp)) => dp.geom.c,
                    Some(Stage::Conv(dc)) => dc.geom.cout,
                    None => self.c,
                };
                let head: Vec<(usize, f64)> = changes
                    .iter()
                    .map(|ch| (self.flat_offset + ch.cell as usize * c + ch.ch as usize, ch.d as f64))
                    .collect();
                self.head.update(&mut z, &head);
                out[k + 1] = self.head.finish(&z);
            }
        }
    }

    #[cfg(target_arch = "x86_64")]
    #[target_feature(enable = "avx2")]
    unsafe fn path_values_avx2(&self, order: &[usize], out: &mut [f64]) {
        self.path_values_impl(order, out)
    }
}

impl CoalitionGame for ColumnMaskGame<'_> {
    fn n_players(&self) -> usize {
        self.w
    }

    fn value(&self, coalition: &[bool]) -> f64 {
        let mut map = self.baseline.clone();
        for (x, _) in coalition.iter().enumerate().filter(|(_, &on)| on) {
            for y in 0..self.h {
                let o = (y * self.w + x) * self.c;
                map[o..o + self.c].copy_from_slice(&self.instance[o..o + self.c]);
            }
        }
        let input = NetInput::with_aux(map, self.aux.clone());
        self.net.predict(&input).expect("input shape checked at construction") as f64
    }

    fn path_values(&self, order: &[usize], out: &mut [f64]) {
        #[cfg(target_arch = "x86_64")]
        {
            if std::is_x86_feature_detected!("avx2") {
                // SAFETY: the feature was detected at runtime.
                unsafe { self.path_values_avx2(order, out) };
                return;
            }
        }
        self.path_values_impl(order, out)
    }
}

/// Players are the inputs of the first dense layer (for model1, the
/// concatenated CNN + segmenter vector).
pub struct HeadFeatureGame<'a> {
    head: DenseHead<'a>,
    instance: Vec<f32>,
    baseline: Vec<f32>,
    base_z: Vec<f64>,
}

impl<'a> HeadFeatureGame<'a> {
    /// `layer` is the index of a dense layer; instance and baseline are its
    /// input activations.
    pub fn new(net: &'a Network<f32>, layer: usize, instance: Vec<f32>, baseline: Vec<f32>) -> Result<Self> {
        let head = DenseHead::new(net, layer)?;
        if instance.len() != head.n_in || baseline.len() != head.n_in {
            return Err(Error::shape(
                format!("input of layer {layer}"),
                &[head.n_in],
                &[instance.len(), baseline.len()],
            ));
        }
        let base_z = head.pre_activation(&baseline);
        Ok(Self {
            head,
            instance,
            baseline,
            base_z,
        })
    }
}

impl CoalitionGame for HeadFeatureGame<'_> {
    fn n_players(&self) -> usize {
        self.instance.len()
    }

    fn value(&self, coalition: &[bool]) -> f64 {
        let x: Vec<f32> = coalition
            .iter()
            .enumerate()
            .map(|(i, &on)| if on { self.instance[i] } else { self.baseline[i] })
            .collect();
        self.head.finish(&self.head.pre_activation(&x))
    }

    fn path_values(&self, order: &[usize], out: &mut [f64]) {
        let mut z = self.base_z.clone();
        out[0] = self.head.finish(&z);
        for (k, &j) in order.iter().enumerate() {
            let d = self.instance[j] as f64 - self.baseline[j] as f64;
            if d != 0.0 {
                self.head.update(&mut z, &[(j, d)]);
                out[k + 1] = self.head.finish(&z);
            } else {
                out[k + 1] = out[k];
            }
        }
    }
}

/// Column-grouped sampled Shapley values of a network on one input map.
/// Every cell of a frame column receives that column's value.
pub fn shapley_columns(
    net: &Network<f32>,
    input: &NetInput<f32>,
    baseline: &[f32],
    m: usize,
    seed: u64,
) -> Result<AttributionMap> {
    let game = ColumnMaskGame::new(net, input, baseline)?;
    let (phi, base_value, target_output) = sampled_game(&game, m, seed)?;
    let [h, w, c] = net.spec().input;
    let mut values = vec![0.0; h * w * c];
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                values[(y * w + x) * c + ch] = phi[x];
            }
        }
    }
    Ok(AttributionMap {
        dims: vec![h, w, c],
        values,
        base_value,
        target_output,
    })
}

/// Shapley attribution at the concatenated model1 feature vector.
#[derive(Debug, Clone, PartialEq)]
pub struct IntermediateAttribution {
    pub map: AttributionMap,
    /// Σ|φ| over the leading segmenter features.
    pub segmenter_mass: f64,
    /// Σ|φ| over the CNN features.
    pub cnn_mass: f64,
}

pub const MIN_BACKGROUND: usize = 50;

/// Explains the MLP head of a concat network over its concatenated input
/// `[segmenter | CNN]`. The baseline is the mean concatenated activation
/// over `background`.
pub fn shapley_intermediate(
    net: &Network<f32>,
    instance: &NetInput<f32>,
    background: &[NetInput<f32>],
    m: usize,
    seed: u64,
) -> Result<IntermediateAttribution> {
    let concat = net
        .spec()
        .concat_index()
        .ok_or_else(|| Error::invalid("intermediate attribution needs a network with a segmenter concat layer"))?;
    if background.len() < MIN_BACKGROUND {
        return Err(Error::invalid(format!(
            "background set has {} windows, need at least {MIN_BACKGROUND}",
            background.len()
        )));
    }
    let first_dense = concat + 1;
    let act = |x: &NetInput<f32>| net.forward_to(x, first_dense);
    let width = net.shapes()[first_dense].len();
    let mut mean = vec![0.0f64; width];
    for b in background {
        for (m, v) in mean.iter_mut().zip(act(b)?) {
            *m += v as f64;
        }
    }
    let baseline: Vec<f32> = mean.iter().map(|v| (v / background.len() as f64) as f32).collect();
    let game = HeadFeatureGame::new(net, first_dense, act(instance)?, baseline)?;
    let (values, base_value, target_output) = sampled_game(&game, m, seed)?;
    let seg_w = net.spec().aux_width;
    let segmenter_mass = values[..seg_w].iter().map(|v| v.abs()).sum();
    let cnn_mass = values[seg_w..].iter().map(|v| v.abs()).sum();
    Ok(IntermediateAttribution {
        map: AttributionMap {
            dims: vec![width],
            values,
            base_value,
            target_output,
        },
        segmenter_mass,
        cnn_mass,
    })
}
