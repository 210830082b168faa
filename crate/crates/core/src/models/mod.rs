//! Model architectures and the segmenter interface.

mod segmenter;
mod variants;

pub use segmenter::{
    heuristic_segmenter, load_segmenter_features, save_segmenter_features, shannon_envelope, FileSegmenter,
    HeuristicSegmenter, Segmenter, SegmenterOutput, EMBEDDING_LEN, STATE_DIASTOLE, STATE_S1, STATE_S2, STATE_SYSTOLE,
};
pub use variants::{
    assemble_input, build_model, tile_segmentation_channel, ModelVariant, CNN_WIDTH, FINAL_INTERMEDIATE, HYBRID_WIDTH,
};
