//! BPSK over AWGN: modulation, noise sampling, LLR computation, SNR
//! conversions, and reproducible per-worker random streams.
//!
//! LLR sign convention: positive means bit 0 is more likely.

use rand_chacha::ChaCha12Rng;
use rand_core::{RngCore, SeedableRng};

use crate::error::{Error, Result};

/// AWGN channel parameters; Es/N0 = 1/(2 sigma^2).
#[derive(Debug, Clone, Copy)]
pub struct ChannelParams {
    pub sigma2: f64,
    pub esn0_db: f64,
}

impl ChannelParams {
    pub fn from_esn0_db(esn0_db: f64) -> Result<Self> {
        if !esn0_db.is_finite() {
            return Err(Error::DimMismatch("esn0_db must be finite".into()));
        }
        Ok(ChannelParams {
            sigma2: esn0_db_to_sigma2(esn0_db),
            esn0_db,
        })
    }
}

pub fn esn0_db_to_sigma2(esn0_db: f64) -> f64 {
    1.0 / (2.0 * 10f64.powf(esn0_db / 10.0))
}

pub fn sigma2_to_esn0_db(sigma2: f64) -> f64 {
    10.0 * (1.0 / (2.0 * sigma2)).log10()
}

/// Deterministic random stream: ChaCha12 keyed by the master seed with the
/// stream id selecting a non-overlapping 2^64-block counter partition.
/// Gaussians come from Box-Muller, so draws are bit-stable across platforms.
pub struct RngStream {
    rng: ChaCha12Rng,
    cached_gaussian: Option<f64>,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        RngStream {
            rng,
            cached_gaussian: None,
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform in (0, 1]: 53-bit mantissa, never exactly zero.
    pub fn uniform(&mut self) -> f64 {
        let bits = self.rng.next_u64() >> 11;
        (bits + 1) as f64 * (1.0 / 9007199254740992.0)
    }

    /// Standard normal via Box-Muller; one pair per two uniforms.
    pub fn gaussian(&mut self) -> f64 {
        if let Some(z) = self.cached_gaussian.take() {
            return z;
        }
        let u1 = self.uniform();
        let u2 = self.uniform();
        let radius = (-2.0 * u1.ln()).sqrt();
        let angle = 2.0 * std::f64::consts::PI * u2;
        self.cached_gaussian = Some(radius * angle.sin());
        radius * angle.cos()
    }

    /// Uniform integer in [0, bound) by rejection.
    pub fn below(&mut self, bound: u64) -> u64 {
        debug_assert!(bound > 0);
        let zone = u64::MAX - (u64::MAX % bound);
        loop {
            let x = self.rng.next_u64();
            if x < zone {
                return x % bound;
            }
        }
    }

    /// Uniform in [low, high].
    pub fn uniform_in(&mut self, low: f64, high: f64) -> f64 {
        low + (high - low) * self.uniform()
    }
}

/// BPSK map tau: {0,1} -> {+1,-1}.
pub fn bpsk(bits: &[u8]) -> Vec<f64> {
    bits.iter().map(|&b| 1.0 - 2.0 * b as f64).collect()
}

/// y = x + z with z ~ N(0, sigma2 I).
pub fn transmit(x: &[f64], params: &ChannelParams, rng: &mut RngStream) -> Vec<f64> {
    let sigma = params.sigma2.sqrt();
    x.iter().map(|&xi| xi + sigma * rng.gaussian()).collect()
}

/// Channel LLRs gamma_i = 2 y_i / sigma^2.
pub fn channel_llr(y: &[f64], sigma2: f64) -> Vec<f64> {
    debug_assert!(sigma2 > 0.0);
    y.iter().map(|&yi| 2.0 * yi / sigma2).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn esn0_closed_forms() {
        assert!((esn0_db_to_sigma2(0.0) - 0.5).abs() < 1e-15);
        assert!((esn0_db_to_sigma2(10.0) - 0.05).abs() < 1e-15);
        assert!((esn0_db_to_sigma2(1.0) - 0.397164117).abs() < 1e-8);
    }

    #[test]
    fn esn0_roundtrip() {
        for db in [-3.0, 0.0, 1.0, 4.5, 10.0] {
            let back = sigma2_to_esn0_db(esn0_db_to_sigma2(db));
            assert!((back - db).abs() <= 1e-12 * db.abs().max(1.0));
        }
    }

    #[test]
    fn bpsk_map() {
        assert_eq!(bpsk(&[0, 0, 0]), vec![1.0, 1.0, 1.0]);
        assert_eq!(bpsk(&[1, 0]), vec![-1.0, 1.0]);
        for x in bpsk(&[0, 1, 1, 0]) {
            assert_eq!(x * x, 1.0);
        }
    }

    #[test]
    fn llr_closed_forms() {
        assert_eq!(channel_llr(&[1.0], 0.5), vec![4.0]);
        assert_eq!(channel_llr(&[0.0], 0.3), vec![0.0]);
        let g = channel_llr(&[0.5], 0.39716)[0];
        assert!((g - 2.51788).abs() < 1e-4);
    }

    #[test]
    fn stream_determinism_and_separation() {
        let mut a = RngStream::new(7, 0);
        let mut b = RngStream::new(7, 0);
        let mut c = RngStream::new(7, 1);
        let xs: Vec<f64> = (0..1000).map(|_| a.gaussian()).collect();
        let ys: Vec<f64> = (0..1000).map(|_| b.gaussian()).collect();
        let zs: Vec<f64> = (0..1000).map(|_| c.gaussian()).collect();
        assert_eq!(xs, ys);
        assert_ne!(xs, zs);
    }

    #[test]
    fn gaussian_moments() {
        let mut rng = RngStream::new(42, 0);
        let n = 1_000_000usize;
        let sigma2 = 0.5;
        let params = ChannelParams {
            sigma2,
            esn0_db: sigma2_to_esn0_db(sigma2),
        };
        let x = vec![1.0f64; n];
        let y = transmit(&x, &params, &mut rng);
        let noise: Vec<f64> = y.iter().zip(&x).map(|(a, b)| a - b).collect();
        let mean = noise.iter().sum::<f64>() / n as f64;
        let var = noise.iter().map(|z| (z - mean) * (z - mean)).sum::<f64>() / (n - 1) as f64;
        // |mean| < 4 sigma / sqrt(n)
        assert!(mean.abs() < 4.0 * sigma2.sqrt() / (n as f64).sqrt());
        assert!((var - sigma2).abs() < 0.01 * sigma2);
    }

    #[test]
    fn gaussian_ks_statistic() {
        let mut rng = RngStream::new(3, 5);
        let n = 100_000usize;
        let mut xs: Vec<f64> = (0..n).map(|_| rng.gaussian()).collect();
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let phi = |x: f64| 0.5 * (1.0 + erf(x / std::f64::consts::SQRT_2));
        let mut d = 0f64;
        for (i, &x) in xs.iter().enumerate() {
            let cdf = phi(x);
            d = d.max((cdf - i as f64 / n as f64).abs());
            d = d.max(((i + 1) as f64 / n as f64 - cdf).abs());
        }
        assert!(d < 0.01, "KS statistic {d}");
    }

    // Abramowitz-Stegun 7.1.26, |error| < 1.5e-7 (test oracle only)
    fn erf(x: f64) -> f64 {
        let sign = if x < 0.0 { -1.0 } else { 1.0 };
        let x = x.abs();
        let t = 1.0 / (1.0 + 0.3275911 * x);
        let y = 1.0
            - (((((1.061405429 * t - 1.453152027) * t) + 1.421413741) * t - 0.284496736) * t
                + 0.254829592)
                * t
                * (-x * x).exp();
        sign * y
    }

    #[test]
    fn llr_sign_convention_positive_mean() {
        let mut rng = RngStream::new(11, 0);
        let bits = vec![0u8, 1, 0, 1, 1, 0, 1];
        let x = bpsk(&bits);
        let params = ChannelParams::from_esn0_db(2.0).unwrap();
        let mut acc = 0.0;
        for _ in 0..10_000 {
            let y = transmit(&x, &params, &mut rng);
            let g = channel_llr(&y, params.sigma2);
            for (gi, xi) in g.iter().zip(&x) {
                acc += gi * xi;
            }
        }
        assert!(acc > 0.0);
    }
}
