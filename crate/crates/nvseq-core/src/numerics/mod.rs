//! Array math, reverse-mode differentiation, the Adam optimizer, the
//! finite-difference oracle, and the checkpoint format.

pub mod array;
pub mod checkpoint;
pub mod gradcheck;
pub mod rng;
pub mod store;
pub mod tape;

pub use array::RealArray;
pub use gradcheck::{
    check_grads_sampled, finite_diff_coord, finite_diff_grad, relative_error, GradCheckReport,
    DEFAULT_EPS,
};
pub use store::{ParamStore, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use tape::{NodeId, Tape};
