//! Post-hoc analysis: cross-model transfer, region ablation, confidence
//! statistics, heatmaps, and captioned image grids.

mod ablation;
mod grid;
mod stats;
mod transfer;

pub use ablation::{ablate_region, ablation_delta, mean_fill, Region};
pub use grid::{emit_grid, glyph, text_width, GLYPH_H, GLYPH_W, GUTTER, STRIP};
pub use stats::{
    archive_confidences, classes_at_least, confidence_stats, confidence_stats_from, emit_heatmap, ConfidenceStats,
    Heatmap,
};
pub use transfer::{cross_test, DirectionStats, TransferReport, HIGH_CONFIDENCE};
