//! Dense-array substrate shared by every other module: the [`Tensor`] type,
//! convolutions, resampling, softmax, the `elu + 1` feature map and seeded
//! weight initialisation.
//!
//! All values are `f64` internally. Spatial loops are split across rayon
//! workers by output plane only, so results do not depend on thread count.

mod conv;
mod ops;
mod resample;
mod rng;
mod tensor;

pub use conv::{conv2d, conv3d, relu, ConvSpec};
pub use ops::{phi, phi_scalar, softmax_axis};
pub use resample::{average_pool, bilinear_resize, upsample_nearest3d};
pub use rng::{seeded_init, SeededRng};
pub use tensor::Tensor;
