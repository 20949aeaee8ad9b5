use std::fmt;

use crate::{CoreError, Result};

/// Three-level semantic code of a quantized embedding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct SemanticCode {
    pub c1: u32,
    pub c2: u32,
    pub c3: u32,
}

impl SemanticCode {
    pub const LEVELS: usize = 3;

    pub fn new(c1: u32, c2: u32, c3: u32) -> Self {
        Self { c1, c2, c3 }
    }

    pub fn as_array(&self) -> [u32; 3] {
        [self.c1, self.c2, self.c3]
    }

    pub fn from_array(c: [u32; 3]) -> Self {
        Self::new(c[0], c[1], c[2])
    }

    /// Checks each component against its level's codebook size.
    pub fn check_bounds(&self, sizes: [usize; 3]) -> Result<()> {
        for (level, (&value, &size)) in self.as_array().iter().zip(sizes.iter()).enumerate() {
            if value as usize >= size {
                return Err(CoreError::CodeOutOfRange { level, value, size });
            }
        }
        Ok(())
    }
}

impl fmt::Display for SemanticCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{})", self.c1, self.c2, self.c3)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bounds_are_strict() {
        let c = SemanticCode::new(7, 3, 1);
        assert!(c.check_bounds([8, 4, 2]).is_ok());
        match c.check_bounds([8, 3, 2]) {
            Err(CoreError::CodeOutOfRange { level: 1, value: 3, size: 3 }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }
}
