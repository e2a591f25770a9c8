use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::policy::{Policy, SubPolicy};
use crate::error::{Error, Result};

/// The frozen CIFAR-10 sub-policy collection.
pub const POOL_JSON: &str = include_str!("../../data/cifar10_pool.json");
/// SHA-256 of [`POOL_JSON`], recorded when the file was transcribed.
pub const POOL_SHA256: &str = "12f3961584dfdac25ca62fd5d159d8eeeb3682ae73200a97b9917ed245c2560a";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyPool {
    pub version: u32,
    #[serde(default)]
    pub source: String,
    subpolicies: Vec<SubPolicy>,
}

impl PolicyPool {
    pub fn new(version: u32, subpolicies: Vec<SubPolicy>) -> Result<Self> {
        for sp in &subpolicies {
            for op in sp.ops() {
                op.validate()?;
            }
        }
        Ok(Self {
            version,
            source: String::new(),
            subpolicies,
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let pool: Self = serde_json::from_str(text).map_err(|e| Error::Format(format!("policy pool: {e}")))?;
        Self::new(pool.version, pool.subpolicies).map(|p| Self {
            source: pool.source,
            ..p
        })
    }

    pub fn subpolicies(&self) -> &[SubPolicy] {
        &self.subpolicies
    }

    pub fn len(&self) -> usize {
        self.subpolicies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subpolicies.is_empty()
    }

    /// The whole pool as one policy.
    pub fn as_policy(&self) -> Result<Policy> {
        Policy::new(self.subpolicies.clone())
    }
}

pub fn pool_checksum(text: &str) -> String {
    Sha256::digest(text.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

pub fn builtin_pool() -> PolicyPool {
    PolicyPool::from_json(POOL_JSON).expect("embedded policy pool is valid")
}
