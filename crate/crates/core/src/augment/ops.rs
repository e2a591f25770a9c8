use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_LEVEL: u8 = 9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum OpKind {
    ShearX,
    ShearY,
    TranslateX,
    TranslateY,
    Rotate,
    AutoContrast,
    Invert,
    Equalize,
    Solarize,
    Posterize,
    Contrast,
    Color,
    Brightness,
    Sharpness,
    Cutout,
    FlipLR,
}

impl OpKind {
    pub const ALL: [OpKind; 16] = [
        OpKind::ShearX,
        OpKind::ShearY,
        OpKind::TranslateX,
        OpKind::TranslateY,
        OpKind::Rotate,
        OpKind::AutoContrast,
        OpKind::Invert,
        OpKind::Equalize,
        OpKind::Solarize,
        OpKind::Posterize,
        OpKind::Contrast,
        OpKind::Color,
        OpKind::Brightness,
        OpKind::Sharpness,
        OpKind::Cutout,
        OpKind::FlipLR,
    ];

    pub fn has_magnitude(self) -> bool {
        !matches!(
            self,
            OpKind::AutoContrast | OpKind::Invert | OpKind::Equalize | OpKind::FlipLR
        )
    }

    /// Geometric ops draw a random sign for their magnitude.
    pub fn is_signed(self) -> bool {
        matches!(
            self,
            OpKind::ShearX | OpKind::ShearY | OpKind::TranslateX | OpKind::TranslateY | OpKind::Rotate
        )
    }
}

/// Typed parameter of an op at a given level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Magnitude {
    None,
    Degrees(f32),
    ShearRatio(f32),
    /// Fraction of the image width or height.
    TranslateFraction(f32),
    /// Enhancement blend factor; 1 is the identity.
    Factor(f32),
    /// Intensities at or above this value are inverted.
    Threshold(f32),
    Bits(u8),
    /// Cutout side as a fraction of the shorter image side.
    PatchFraction(f32),
}

// Endpoints at level 9 (AutoAugment magnitude ranges).
const ROTATE_MAX_DEG: f32 = 30.0;
const SHEAR_MAX: f32 = 0.3;
const TRANSLATE_MAX: f32 = 0.45;
const ENHANCE_MIN: f32 = 0.1;
const ENHANCE_SPAN: f32 = 1.8;
const POSTERIZE_MAX_DROP: f32 = 4.0;
const CUTOUT_MAX: f32 = 0.2;

/// Linear interpolation of `level / 9` over each op's range.
pub fn magnitude_value(kind: OpKind, level: u8) -> Result<Magnitude> {
    if level > MAX_LEVEL {
        return Err(Error::Config(format!("magnitude level {level} exceeds {MAX_LEVEL}")));
    }
    let t = f32::from(level) / f32::from(MAX_LEVEL);
    Ok(match kind {
        OpKind::Rotate => Magnitude::Degrees(ROTATE_MAX_DEG * t),
        OpKind::ShearX | OpKind::ShearY => Magnitude::ShearRatio(SHEAR_MAX * t),
        OpKind::TranslateX | OpKind::TranslateY => Magnitude::TranslateFraction(TRANSLATE_MAX * t),
        OpKind::Contrast | OpKind::Color | OpKind::Brightness | OpKind::Sharpness => {
            Magnitude::Factor(ENHANCE_MIN + ENHANCE_SPAN * t)
        }
        OpKind::Solarize => Magnitude::Threshold(1.0 - t),
        OpKind::Posterize => Magnitude::Bits(8 - (POSTERIZE_MAX_DROP * t).round() as u8),
        OpKind::Cutout => Magnitude::PatchFraction(CUTOUT_MAX * t),
        OpKind::AutoContrast | OpKind::Invert | OpKind::Equalize | OpKind::FlipLR => Magnitude::None,
    })
}

/// One transform with its calling probability and magnitude level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransformOp {
    pub kind: OpKind,
    pub p: f32,
    pub level: u8,
}

impl TransformOp {
    pub fn new(kind: OpKind, p: f32, level: u8) -> Result<Self> {
        let op = Self { kind, p, level };
        op.validate()?;
        Ok(op)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p) {
            return Err(Error::Config(format!("op probability {} outside [0, 1]", self.p)));
        }
        if self.level > MAX_LEVEL {
            return Err(Error::Config(format!("op level {} exceeds {MAX_LEVEL}", self.level)));
        }
        Ok(())
    }

    pub fn magnitude(&self) -> Magnitude {
        magnitude_value(self.kind, self.level).expect("validated level")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn range_endpoints() {
        assert_eq!(magnitude_value(OpKind::Rotate, 0).unwrap(), Magnitude::Degrees(0.0));
        assert_eq!(magnitude_value(OpKind::Rotate, 9).unwrap(), Magnitude::Degrees(30.0));
        assert_eq!(
            magnitude_value(OpKind::TranslateY, 9).unwrap(),
            Magnitude::TranslateFraction(0.45)
        );
        match magnitude_value(OpKind::ShearX, 3).unwrap() {
            Magnitude::ShearRatio(v) => assert!((v - 0.1).abs() < 1e-6),
            other => panic!("{other:?}"),
        }
        assert_eq!(magnitude_value(OpKind::Posterize, 0).unwrap(), Magnitude::Bits(8));
        assert_eq!(magnitude_value(OpKind::Posterize, 9).unwrap(), Magnitude::Bits(4));
        assert_eq!(magnitude_value(OpKind::Solarize, 9).unwrap(), Magnitude::Threshold(0.0));
        assert!(magnitude_value(OpKind::Rotate, 10).is_err());
    }

    #[test]
    fn op_validation() {
        assert!(TransformOp::new(OpKind::Invert, 1.5, 0).is_err());
        assert!(TransformOp::new(OpKind::Invert, 0.5, 12).is_err());
        assert!(TransformOp::new(OpKind::Invert, 0.5, 3).is_ok());
    }
}
