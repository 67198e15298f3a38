//! Seeded PCG32 stream shared by the synthetic generator and weight init.

use rand_core::Rng;
use rand_pcg::Pcg32;

/// Increment of every stream; `Pcg32::new` shifts the stream id left and sets bit 0.
const INCREMENT: u64 = 0xda3e_39cb_94b9_5bdb;

#[derive(Clone, Debug)]
pub struct DetRng(Pcg32);

impl DetRng {
    pub fn new(seed: u64) -> Self {
        DetRng(Pcg32::new(seed, INCREMENT >> 1))
    }

    pub fn next_u32(&mut self) -> u32 {
        self.0.next_u32()
    }

    /// Uniform in [0, 1) with 32 bits of resolution.
    pub fn next_f64(&mut self) -> f64 {
        f64::from(self.next_u32()) / 4_294_967_296.0
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }
}
