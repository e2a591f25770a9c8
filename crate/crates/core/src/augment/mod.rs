//! Augmentation search space: transforms, sub-policies, policies and the
//! frozen CIFAR-10 sub-policy pool.

mod ops;
mod policy;
mod pool;
pub mod transforms;

pub use ops::{magnitude_value, Magnitude, OpKind, TransformOp, MAX_LEVEL};
pub use policy::{apply_op, apply_policy, apply_subpolicy, random_policy, transform, Policy, SubPolicy};
pub use pool::{builtin_pool, pool_checksum, PolicyPool, POOL_JSON, POOL_SHA256};
