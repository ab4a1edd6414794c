use serde::{Deserialize, Serialize};

use super::AllocError;

/// Largest number of levels a 3-bit resolution map can address.
pub const MAX_LEVELS: usize = 8;

/// Per-patch byte budget for each resolution level.
///
/// Level 0 always costs 0 bytes (the patch is dropped) and budgets are
/// strictly increasing with the level index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<u32>", into = "Vec<u32>")]
pub struct RateTable {
    bytes: Vec<u32>,
}

impl Default for RateTable {
    fn default() -> Self {
        Self {
            bytes: vec![0, 12, 24, 48, 196],
        }
    }
}

impl RateTable {
    pub fn new(bytes: Vec<u32>) -> Result<Self, AllocError> {
        if bytes.len() < 2 || bytes.len() > MAX_LEVELS {
            return Err(AllocError::InvalidTable(format!(
                "need 2..={MAX_LEVELS} levels, got {}",
                bytes.len()
            )));
        }
        if bytes[0] != 0 {
            return Err(AllocError::InvalidTable("level 0 must cost 0 bytes".into()));
        }
        if bytes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(AllocError::InvalidTable(
                "byte budgets must be strictly increasing".into(),
            ));
        }
        Ok(Self { bytes })
    }

    pub fn levels(&self) -> usize {
        self.bytes.len()
    }

    pub fn top_level(&self) -> u8 {
        (self.bytes.len() - 1) as u8
    }

    pub fn bytes(&self, level: u8) -> u32 {
        self.bytes[level as usize]
    }

    pub fn try_bytes(&self, level: u8) -> Option<u32> {
        self.bytes.get(level as usize).copied()
    }

    pub fn top_bytes(&self) -> u32 {
        *self.bytes.last().unwrap()
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.bytes
    }

    /// Highest level whose budget is `<= x`.
    pub(crate) fn floor_level(&self, x: f64) -> u8 {
        // bytes[0] == 0 <= x for any x >= 0
        let n = self.bytes.iter().take_while(|&&b| b as f64 <= x).count();
        (n.max(1) - 1) as u8
    }

    /// Lowest level whose budget is `> x`, saturating at the top level.
    pub(crate) fn ceil_level(&self, x: f64) -> u8 {
        self.bytes
            .iter()
            .position(|&b| b as f64 > x)
            .unwrap_or(self.bytes.len() - 1) as u8
    }

    /// Floor quantization onto the table's byte values.
    pub fn lq(&self, x: f64) -> Result<u32, AllocError> {
        check_input(x)?;
        Ok(self.bytes(self.floor_level(x)))
    }

    /// Strict-ceiling quantization onto the table's byte values, saturating
    /// at the top budget.
    pub fn uq(&self, x: f64) -> Result<u32, AllocError> {
        check_input(x)?;
        Ok(self.bytes(self.ceil_level(x)))
    }
}

fn check_input(x: f64) -> Result<(), AllocError> {
    if x.is_nan() || x < 0.0 {
        Err(AllocError::NegativeInput(x))
    } else {
        Ok(())
    }
}

impl TryFrom<Vec<u32>> for RateTable {
    type Error = AllocError;

    fn try_from(bytes: Vec<u32>) -> Result<Self, Self::Error> {
        Self::new(bytes)
    }
}

impl From<RateTable> for Vec<u32> {
    fn from(t: RateTable) -> Self {
        t.bytes
    }
}
