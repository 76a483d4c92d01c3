//! Class activation maps for small sequential CNNs.
//!
//! The crate bundles a minimal f32 inference engine with head-only
//! backpropagation, deterministic reference models, a set of saliency map
//! generators (reciprocal spatial masking plus the usual CAM baselines) and
//! the metrics used to compare them.
//!
//! ```
//! use rxai_core::{make_reference_model, recipro_cam, seeded_input, split_model, CostTally, MaskKernel};
//!
//! let model = make_reference_model(42, "tiny8").unwrap();
//! let split = split_model(&model, model.default_split().unwrap()).unwrap();
//! let input = seeded_input(7, &model.input_shape);
//! let mut tally = CostTally::default();
//! let map = recipro_cam(&split, &input, 3, MaskKernel::Dirac, &mut tally).unwrap();
//! assert_eq!(map.values.shape(), &[4, 4]);
//! assert_eq!(tally.head_forwards, 16);
//! ```

pub mod autodiff;
pub mod cam;
pub mod cost;
pub mod error;
pub mod io;
pub mod layers;
pub mod metrics;
pub mod model;
pub mod preprocess;
pub mod reference;
pub mod tensor;

pub use autodiff::{backward_head, finite_diff_grad, Gradient};
pub use cam::{
    ablation_cam, cam, fake_cam, generate, generate_spatial_masks, grad_cam, normalize_map,
    recipro_cam, recipro_scores, score_cam, upsample_map, ClassScores, MaskKernel, Method,
    SaliencyMap, SpatialMask,
};
pub use cost::CostTally;
pub use error::{Error, Result};
pub use io::{load_model, save_model};
pub use layers::{softmax, Conv2d, LayerSpec, Linear, Pool};
pub use metrics::{
    adcc, average_drop, average_increase, coherency, complexity, deletion_auc, evaluate_method,
    insertion_auc, EvalOptions, EvalSample, ImageRecord, MetricReport,
};
pub use model::{split_model, Model, SplitModel};
pub use preprocess::{load_image, preprocess_image, PreprocessConfig};
pub use reference::{make_reference_model, seeded_input, seeded_uniform_map, PRESETS};
pub use tensor::{hadamard, Tensor};
