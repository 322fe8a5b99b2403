//! Per-path noise streams.
//!
//! Path `i` under seed `s` uses `ChaCha8Rng::seed_from_u64(s)` switched to
//! stream `i`. Each step draws two 64-bit words, maps them to uniforms
//! `u = (w >> 11) * 2^-53`, and applies Box-Muller with `1 - u1` in `(0, 1]`:
//! `r = sqrt(-2 ln(1 - u1))`, `xi1 = r cos(2 pi u2)`, `xi2 = r sin(2 pi u2)`.
//! Increments are `dZ = sqrt(dt) xi1` and
//! `dW = sqrt(dt) (rho xi1 + sqrt(1 - rho^2) xi2)`.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

#[derive(Debug, Clone)]
pub struct NoiseStream {
    rng: ChaCha8Rng,
    sqrt_dt: f64,
    rho: f64,
    rho_perp: f64,
    checksum: u64,
}

impl NoiseStream {
    pub fn new(seed: u64, path_index: u64, dt: f64, rho: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(path_index);
        Self {
            rng,
            sqrt_dt: dt.sqrt(),
            rho,
            rho_perp: (1.0 - rho * rho).sqrt(),
            checksum: FNV_OFFSET,
        }
    }

    #[inline]
    fn uniform(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Two independent standard normals.
    #[inline]
    pub fn normal_pair(&mut self) -> (f64, f64) {
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (std::f64::consts::TAU * u2).sin_cos();
        (r * c, r * s)
    }

    /// Correlated increments `(dZ, dW)` for one step.
    #[inline]
    pub fn increments(&mut self) -> (f64, f64) {
        let (xi1, xi2) = self.normal_pair();
        let dz = self.sqrt_dt * xi1;
        let dw = self.sqrt_dt * (self.rho * xi1 + self.rho_perp * xi2);
        self.mix(dz);
        self.mix(dw);
        (dz, dw)
    }

    #[inline]
    fn mix(&mut self, value: f64) {
        for byte in value.to_bits().to_le_bytes() {
            self.checksum ^= byte as u64;
            self.checksum = self.checksum.wrapping_mul(FNV_PRIME);
        }
    }

    /// FNV-1a over the bit patterns of every increment drawn so far.
    pub fn checksum(&self) -> u64 {
        self.checksum
    }
}
