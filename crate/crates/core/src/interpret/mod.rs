//! Attribution: exact and permutation-sampled Shapley values, grouped and
//! intermediate-layer variants, occlusion maps, and heatmap output.

mod network;
mod occlusion;
mod render;
mod shapley;

use std::fmt::Write as _;

pub use network::{
    shapley_columns, shapley_intermediate, ColumnMaskGame, HeadFeatureGame, IntermediateAttribution, MIN_BACKGROUND,
};
pub use occlusion::{occlusion_map, OcclusionMap};
pub use render::{encode_pgm, format_csv, parse_csv, render_decision, render_heatmap, RenderMode, DECISION_BOUNDARY};
pub use shapley::{
    column_groups, exact_game, sampled_game, shapley_exact, shapley_grouped, shapley_sampled, spread_groups,
    validate_groups, AttributionMap, CoalitionGame, FnGame, MAX_EXACT_PLAYERS,
};

use crate::dsp::FRAME_HOP_S;
use crate::{Error, Result, N_FRAMES};

/// Centre time of MFCC frame `index` within its window.
pub fn frame_to_time(index: usize) -> Result<f64> {
    if index >= N_FRAMES {
        return Err(Error::invalid(format!("frame index {index} outside 0..{N_FRAMES}")));
    }
    Ok(FRAME_HOP_S * index as f64 + FRAME_HOP_S)
}

/// Metadata written next to every explanation.
#[derive(Debug, Clone, PartialEq)]
pub struct ExplanationManifest {
    pub instance_id: String,
    pub method: String,
    pub m: Option<usize>,
    pub seed: u64,
    pub baseline_mode: String,
}

impl ExplanationManifest {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "instance_id={}", self.instance_id);
        let _ = writeln!(s, "method={}", self.method);
        match self.m {
            Some(m) => {
                let _ = writeln!(s, "m={m}");
            }
            None => s.push_str("m=NA\n"),
        }
        let _ = writeln!(s, "seed={}", self.seed);
        let _ = writeln!(s, "baseline={}", self.baseline_mode);
        s
    }
}
