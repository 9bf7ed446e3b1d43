use super::{CMat, C64};

/// SplitMix64 generator. Small, seedable and stable across platforms and
/// crate versions, which keeps generated scenarios reproducible.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in [0, 1).
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Two independent standard normals (Box–Muller).
    pub fn normal_pair(&mut self) -> (f64, f64) {
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        let r = (-2.0 * u1.ln()).sqrt();
        let t = std::f64::consts::TAU * u2;
        (r * t.cos(), r * t.sin())
    }

    /// Circularly-symmetric complex gaussian with the given variance.
    pub fn cscg(&mut self, variance: f64) -> C64 {
        let (a, b) = self.normal_pair();
        let s = (variance / 2.0).sqrt();
        C64::new(a * s, b * s)
    }
}

/// Matrix of i.i.d. CSCG entries, filled row-major.
pub fn cscg_matrix(rng: &mut SplitMix64, rows: usize, cols: usize, variance: f64) -> CMat {
    let mut m = CMat::zeros(rows, cols);
    for r in 0..rows {
        for c in 0..cols {
            m[(r, c)] = rng.cscg(variance);
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_sequence() {
        // Published SplitMix64 outputs for seed 0.
        let mut r = SplitMix64::new(0);
        assert_eq!(r.next_u64(), 0xE220_A839_7B1D_CDAF);
        assert_eq!(r.next_u64(), 0x6E78_9E6A_A1B9_65F4);
    }

    #[test]
    fn cscg_moments() {
        let mut r = SplitMix64::new(1);
        let n = 200_000;
        let (mut m, mut v, mut re2) = (C64::new(0.0, 0.0), 0.0, 0.0);
        for _ in 0..n {
            let z = r.cscg(2.0);
            m += z;
            v += z.norm_sqr();
            re2 += z.re * z.re;
        }
        let nf = n as f64;
        assert!(m.norm() / nf < 0.01);
        assert!((v / nf - 2.0).abs() < 0.02);
        assert!((re2 / nf - 1.0).abs() < 0.02);
    }
}
