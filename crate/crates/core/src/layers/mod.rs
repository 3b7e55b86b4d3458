//! Forward and backward passes of every primitive the network uses.
//!
//! Each forward returns its output plus a cache; the matching backward takes
//! the cache by value, so a cache serves exactly one backward call.

mod activation;
mod conv;
mod dense;
mod gradcheck;
mod loss;
mod pool;

pub use activation::{dropout, dropout_backward, relu, relu_backward, DropoutCache, ReluCache};
pub use conv::{conv2d_backward, conv2d_forward, conv_output_extent, ConvCache, ConvGrads};
pub use dense::{
    dense, dense_backward, global_avg_pool, global_avg_pool_backward, DenseCache, DenseGrads,
    GapCache,
};
pub use gradcheck::{finite_difference_gradient, relative_error};
pub use loss::softmax_cross_entropy;
pub use pool::{maxpool2d, maxpool2d_backward, PoolCache};
