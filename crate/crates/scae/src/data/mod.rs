//! Data pipelines: constellation generation, IDX ingestion, padding and
//! translation augmentation.

mod constellation;
mod idx;

pub use constellation::{
    generate_constellations, normalize_points, points_to_tensors, seeded_rng, ConstellationSpec,
    PointSet, MAX_POINTS, NUM_SHAPES,
};
pub use idx::{load_idx, pad_translate, write_idx_images, write_idx_labels, IdxDataset};
