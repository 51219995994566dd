//! Dense arrays, a gradient tape, parameters and SGD.

mod array;
pub mod checkpoint;
pub mod gradcheck;
mod kernels;
mod optim;
mod params;
mod tape;

pub use array::Array;
pub use optim::{sgd_step, Sgd};
pub use params::{Param, ParamStore};
pub use tape::{backward, log_softmax_parts, matmul, BackwardFn, Gradients, Tape, Var, NORM_EPS};
