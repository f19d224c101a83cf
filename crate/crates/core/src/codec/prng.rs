//! Park & Miller "minimal standard" Lehmer generator.
//!
//! x' = 16807 * x mod (2^31 - 1). The state is never zero.

use super::CodecError;

pub const MODULUS: u32 = 0x7FFF_FFFF;
pub const MULTIPLIER: u32 = 16807;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParkMiller {
    state: u32,
}

impl ParkMiller {
    pub fn new(state: u32) -> Result<Self, CodecError> {
        if state == 0 || state >= MODULUS {
            return Err(CodecError::InvalidParams(format!(
                "Park-Miller state must be in [1, 2^31-2], got {state}"
            )));
        }
        Ok(ParkMiller { state })
    }

    /// Seed from the 16-bit value carried on the wire. Zero maps to 1.
    pub fn from_seed16(seed: u16) -> Self {
        ParkMiller {
            state: if seed == 0 { 1 } else { seed as u32 },
        }
    }

    pub fn state(&self) -> u32 {
        self.state
    }

    /// Advance once and return the new state (a 31-bit value).
    #[inline]
    pub fn next_u31(&mut self) -> u32 {
        self.state = ((self.state as u64 * MULTIPLIER as u64) % MODULUS as u64) as u32;
        self.state
    }
}

impl Iterator for ParkMiller {
    type Item = u32;

    fn next(&mut self) -> Option<u32> {
        Some(self.next_u31())
    }
}
