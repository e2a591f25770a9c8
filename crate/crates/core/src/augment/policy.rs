use rand::seq::index::sample;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::ops::{Magnitude, OpKind, TransformOp};
use super::pool::PolicyPool;
use super::transforms as tf;
use crate::data::{Image, NORM_MEAN};
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Two transforms applied in order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SubPolicy(pub [TransformOp; 2]);

impl SubPolicy {
    pub fn new(first: TransformOp, second: TransformOp) -> Self {
        Self([first, second])
    }

    pub fn ops(&self) -> &[TransformOp; 2] {
        &self.0
    }
}

/// Non-empty list of sub-policies; one is drawn uniformly per image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<SubPolicy>", into = "Vec<SubPolicy>")]
pub struct Policy {
    subpolicies: Vec<SubPolicy>,
}

impl TryFrom<Vec<SubPolicy>> for Policy {
    type Error = Error;

    fn try_from(subpolicies: Vec<SubPolicy>) -> Result<Self> {
        Policy::new(subpolicies)
    }
}

impl From<Policy> for Vec<SubPolicy> {
    fn from(p: Policy) -> Self {
        p.subpolicies
    }
}

impl Policy {
    pub fn new(subpolicies: Vec<SubPolicy>) -> Result<Self> {
        if subpolicies.is_empty() {
            return Err(Error::Config("a policy needs at least one sub-policy".into()));
        }
        for sp in &subpolicies {
            for op in sp.ops() {
                op.validate()?;
            }
        }
        Ok(Self { subpolicies })
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

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("policy serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Format(format!("policy JSON: {e}")))
    }
}

/// Applies the op's transform unconditionally, drawing a sign or position as needed.
pub fn transform(img: &Image, op: &TransformOp, rng: &mut Rng) -> Image {
    let sign = |rng: &mut Rng| if rng.random::<bool>() { 1.0 } else { -1.0 };
    match (op.kind, op.magnitude()) {
        (OpKind::Rotate, Magnitude::Degrees(d)) => tf::rotate(img, d * sign(rng)),
        (OpKind::ShearX, Magnitude::ShearRatio(m)) => tf::shear_x(img, m * sign(rng)),
        (OpKind::ShearY, Magnitude::ShearRatio(m)) => tf::shear_y(img, m * sign(rng)),
        (OpKind::TranslateX, Magnitude::TranslateFraction(f)) => tf::translate_x(img, f * sign(rng)),
        (OpKind::TranslateY, Magnitude::TranslateFraction(f)) => tf::translate_y(img, f * sign(rng)),
        (OpKind::AutoContrast, _) => tf::auto_contrast(img),
        (OpKind::Invert, _) => tf::invert(img),
        (OpKind::Equalize, _) => tf::equalize(img),
        (OpKind::FlipLR, _) => tf::flip_lr(img),
        (OpKind::Solarize, Magnitude::Threshold(t)) => tf::solarize(img, t),
        (OpKind::Posterize, Magnitude::Bits(b)) => tf::posterize(img, b),
        (OpKind::Contrast, Magnitude::Factor(f)) => tf::contrast(img, f),
        (OpKind::Color, Magnitude::Factor(f)) => tf::color(img, f),
        (OpKind::Brightness, Magnitude::Factor(f)) => tf::brightness(img, f),
        (OpKind::Sharpness, Magnitude::Factor(f)) => tf::sharpness(img, f),
        (OpKind::Cutout, Magnitude::PatchFraction(f)) => {
            let side = (f * img.height().min(img.width()) as f32).round() as usize;
            let cy = rng.random_range(0..img.height());
            let cx = rng.random_range(0..img.width());
            tf::cutout(img, side, cy, cx, NORM_MEAN)
        }
        (kind, m) => unreachable!("{kind:?} has no {m:?} magnitude"),
    }
}

/// With probability `op.p` applies the transform, otherwise returns the input.
pub fn apply_op(img: &Image, op: &TransformOp, rng: &mut Rng) -> Image {
    if rng.random::<f32>() < op.p {
        transform(img, op, rng)
    } else {
        img.clone()
    }
}

pub fn apply_subpolicy(img: &Image, sp: &SubPolicy, rng: &mut Rng) -> Image {
    let [first, second] = sp.ops();
    let mid = apply_op(img, first, rng);
    apply_op(&mid, second, rng)
}

/// Draws one sub-policy uniformly and applies its two ops.
pub fn apply_policy(img: &Image, policy: &Policy, rng: &mut Rng) -> Image {
    let idx = rng.random_range(0..policy.len());
    apply_subpolicy(img, &policy.subpolicies[idx], rng)
}

/// `c` distinct sub-policies drawn uniformly from the pool.
pub fn random_policy(pool: &PolicyPool, c: usize, rng: &mut Rng) -> Result<Policy> {
    if c == 0 || c > pool.len() {
        return Err(Error::Config(format!(
            "sub-policy count {c} outside 1..={}",
            pool.len()
        )));
    }
    let picked = sample(rng, pool.len(), c)
        .into_iter()
        .map(|i| pool.subpolicies()[i])
        .collect();
    Policy::new(picked)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::augment::builtin_pool;
    use crate::rng::stream;

    fn img() -> Image {
        Image::from_fn(8, 8, 3, |r, c, ch| ((r * 5 + c * 3 + ch) % 9) as f32 / 8.0).unwrap()
    }

    fn op(kind: OpKind, p: f32, level: u8) -> TransformOp {
        TransformOp::new(kind, p, level).unwrap()
    }

    #[test]
    fn zero_probability_is_identity() {
        let mut rng = stream(1, &[]);
        for kind in OpKind::ALL {
            assert_eq!(apply_op(&img(), &op(kind, 0.0, 9), &mut rng), img());
        }
    }

    #[test]
    fn invert_always_applied() {
        let mut rng = stream(1, &[]);
        let out = apply_op(&img(), &op(OpKind::Invert, 1.0, 0), &mut rng);
        for (a, b) in out.pixels().iter().zip(img().pixels()) {
            assert_eq!(*a, 1.0 - b);
        }
    }

    #[test]
    fn rotate_deterministic_given_stream() {
        let rot = op(OpKind::Rotate, 1.0, 6);
        let a = apply_op(&img(), &rot, &mut stream(3, &[9]));
        let b = apply_op(&img(), &rot, &mut stream(3, &[9]));
        assert_eq!(a, b);
    }

    #[test]
    fn single_subpolicy_policy_is_op_composition() {
        let sp = SubPolicy::new(op(OpKind::Rotate, 0.7, 4), op(OpKind::Contrast, 0.6, 7));
        let policy = Policy::new(vec![sp]).unwrap();
        for seed in 0..20 {
            let mut r1 = stream(seed, &[]);
            let via_policy = apply_policy(&img(), &policy, &mut r1);
            let mut r2 = stream(seed, &[]);
            let _ = r2.random_range(0..1usize);
            let direct = apply_op(&apply_op(&img(), &sp.0[0], &mut r2), &sp.0[1], &mut r2);
            assert_eq!(via_policy, direct);
        }
    }

    #[test]
    fn subpolicy_selection_is_uniform() {
        // each sub-policy leaves a distinct mark: brightness 0.1 vs identity
        let dark = SubPolicy::new(op(OpKind::Brightness, 1.0, 0), op(OpKind::Invert, 0.0, 0));
        let keep = SubPolicy::new(op(OpKind::Invert, 0.0, 0), op(OpKind::Invert, 0.0, 0));
        let policy = Policy::new(vec![dark, keep]).unwrap();
        let probe = Image::filled(1, 1, 1, 1.0).unwrap();
        let mut rng = stream(42, &[]);
        let darkened = (0..10_000)
            .filter(|_| apply_policy(&probe, &policy, &mut rng).pixels()[0] < 0.5)
            .count();
        assert!((4700..=5300).contains(&darkened), "{darkened}");
    }

    #[test]
    fn random_policy_bounds() {
        let pool = builtin_pool();
        let mut rng = stream(5, &[]);
        assert!(random_policy(&pool, 0, &mut rng).is_err());
        assert!(random_policy(&pool, pool.len() + 1, &mut rng).is_err());
        let all = random_policy(&pool, pool.len(), &mut rng).unwrap();
        for sp in pool.subpolicies() {
            assert!(all.subpolicies().contains(sp));
        }
        let a = random_policy(&pool, 3, &mut stream(8, &[])).unwrap();
        let b = random_policy(&pool, 3, &mut stream(8, &[])).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn json_round_trip_and_shape() {
        let sp = SubPolicy::new(op(OpKind::Invert, 0.1, 0), op(OpKind::Contrast, 0.2, 6));
        let policy = Policy::new(vec![sp]).unwrap();
        let json = policy.to_json();
        assert_eq!(
            json,
            r#"[[{"kind":"Invert","p":0.1,"level":0},{"kind":"Contrast","p":0.2,"level":6}]]"#
        );
        assert_eq!(Policy::from_json(&json).unwrap(), policy);
        assert!(Policy::from_json("[]").is_err());
    }
}
