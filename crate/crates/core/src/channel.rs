//! Single-stream link simulation: Gray-coded 64-QAM over AWGN with a hard
//! nearest-level receiver, or a binary symmetric channel; plus frame
//! capacity accounting on an OFDM resource grid.

use std::str::FromStr;

use num_complex::Complex64;

use crate::codec::HEADER_LEN;
use crate::error::{Error, Result};
use crate::rng::SplitMix64;

pub const BITS_PER_SYMBOL: usize = 6;

/// Per-axis levels indexed by the 3-bit Gray label.
const GRAY_TO_LEVEL: [i8; 8] = {
    let mut t = [0i8; 8];
    // 000→−7, 001→−5, 011→−3, 010→−1, 110→+1, 111→+3, 101→+5, 100→+7
    t[0b000] = -7;
    t[0b001] = -5;
    t[0b011] = -3;
    t[0b010] = -1;
    t[0b110] = 1;
    t[0b111] = 3;
    t[0b101] = 5;
    t[0b100] = 7;
    t
};

/// Gray label of level index `k` (level `2k − 7`).
const LEVEL_TO_GRAY: [u8; 8] = [0b000, 0b001, 0b011, 0b010, 0b110, 0b111, 0b101, 0b100];

/// `1/√42` makes the average symbol energy of the square grid 1.
pub fn qam64_scale() -> f64 {
    1.0 / 42f64.sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ChannelKind {
    Awgn64Qam,
    Bsc,
}

impl FromStr for ChannelKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "awgn64qam" => Ok(ChannelKind::Awgn64Qam),
            "bsc" => Ok(ChannelKind::Bsc),
            other => Err(format!("unknown channel `{other}` (awgn64qam|bsc)")),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum HeaderProtection {
    /// The fixed header is delivered intact; only the body crosses the channel.
    #[default]
    Protected,
    Unprotected,
}

impl FromStr for HeaderProtection {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "protected" => Ok(HeaderProtection::Protected),
            "unprotected" => Ok(HeaderProtection::Unprotected),
            other => Err(format!("unknown header protection `{other}`")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinkConfig {
    /// Es/N0 in dB; `+∞` disables noise.
    pub snr_db: f64,
    pub channel: ChannelKind,
    pub bsc_flip_prob: f64,
    pub seed: u64,
    pub header_protection: HeaderProtection,
}

impl Default for LinkConfig {
    fn default() -> Self {
        Self {
            snr_db: f64::INFINITY,
            channel: ChannelKind::Awgn64Qam,
            bsc_flip_prob: 0.0,
            seed: 0,
            header_protection: HeaderProtection::Protected,
        }
    }
}

impl LinkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.snr_db.is_nan() || self.snr_db == f64::NEG_INFINITY {
            return Err(Error::Config(format!(
                "snr_db must be finite or +inf, got {}",
                self.snr_db
            )));
        }
        if !(0.0..=0.5).contains(&self.bsc_flip_prob) {
            return Err(Error::Config(format!(
                "flip probability {} outside [0, 0.5]",
                self.bsc_flip_prob
            )));
        }
        Ok(())
    }
}

/// Unpacks octets MSB-first into one bit per element.
pub fn bytes_to_bits(bytes: &[u8]) -> Vec<u8> {
    bytes
        .iter()
        .flat_map(|&b| (0..8).rev().map(move |k| (b >> k) & 1))
        .collect()
}

/// Packs bits MSB-first; a trailing partial octet is zero-filled.
pub fn bits_to_bytes(bits: &[u8]) -> Vec<u8> {
    bits.chunks(8)
        .map(|c| {
            c.iter()
                .enumerate()
                .fold(0u8, |acc, (k, &b)| acc | ((b & 1) << (7 - k)))
        })
        .collect()
}

/// Maps bits to unit-energy 64-QAM symbols, zero-padding the tail to a
/// multiple of six. Returns the symbols and the number of pad bits.
pub fn qam64_map(bits: &[u8]) -> (Vec<Complex64>, usize) {
    let pad = (BITS_PER_SYMBOL - bits.len() % BITS_PER_SYMBOL) % BITS_PER_SYMBOL;
    let scale = qam64_scale();
    let symbols = bits
        .chunks(BITS_PER_SYMBOL)
        .map(|chunk| {
            let mut g = [0u8; BITS_PER_SYMBOL];
            g[..chunk.len()].copy_from_slice(chunk);
            let i = (g[0] << 2 | g[1] << 1 | g[2]) as usize;
            let q = (g[3] << 2 | g[4] << 1 | g[5]) as usize;
            Complex64::new(
                GRAY_TO_LEVEL[i] as f64 * scale,
                GRAY_TO_LEVEL[q] as f64 * scale,
            )
        })
        .collect();
    (symbols, pad)
}

/// Nearest level index (0..8) on one axis, in units of the unscaled grid.
/// A value exactly midway between two levels takes the one closer to zero;
/// at zero itself the positive level (+1) is chosen.
fn decide_axis(v: f64) -> usize {
    let t = (v + 7.0) / 2.0;
    let lo = t.floor();
    let frac = t - lo;
    let k = if (frac - 0.5).abs() <= 1e-9 {
        if v > 1e-9 {
            lo
        } else {
            lo + 1.0
        }
    } else {
        t.round()
    };
    k.clamp(0.0, 7.0) as usize
}

/// Hard per-axis nearest-level demapping; drops `pad` trailing bits.
pub fn qam64_demap(symbols: &[Complex64], pad: usize) -> Vec<u8> {
    let inv = 42f64.sqrt();
    let mut bits = Vec::with_capacity(symbols.len() * BITS_PER_SYMBOL);
    for s in symbols {
        let gi = LEVEL_TO_GRAY[decide_axis(s.re * inv)];
        let gq = LEVEL_TO_GRAY[decide_axis(s.im * inv)];
        bits.extend_from_slice(&[
            gi >> 2 & 1,
            gi >> 1 & 1,
            gi & 1,
            gq >> 2 & 1,
            gq >> 1 & 1,
            gq & 1,
        ]);
    }
    bits.truncate(bits.len().saturating_sub(pad));
    bits
}

/// Noise spectral density for unit symbol energy.
pub fn noise_power(snr_db: f64) -> f64 {
    10f64.powf(-snr_db / 10.0)
}

/// Adds circularly-symmetric Gaussian noise with per-component variance
/// `N0/2`, `N0 = 10^(−snr_db/10)`. One Box–Muller pair per symbol.
pub fn awgn(symbols: &mut [Complex64], snr_db: f64, seed: u64) {
    if snr_db == f64::INFINITY {
        return;
    }
    let sigma = (noise_power(snr_db) / 2.0).sqrt();
    let mut rng = SplitMix64::new(seed);
    for s in symbols {
        let (a, b) = rng.normal_pair();
        s.re += sigma * a;
        s.im += sigma * b;
    }
}

/// Flips each bit independently with probability `p`.
pub fn bsc(bits: &mut [u8], p: f64, seed: u64) {
    if p <= 0.0 {
        return;
    }
    let mut rng = SplitMix64::new(seed);
    for b in bits {
        if rng.next_f64() < p {
            *b ^= 1;
        }
    }
}

/// Bits in, bits out over the configured channel.
pub fn transmit_bits(bits: &[u8], cfg: &LinkConfig) -> Vec<u8> {
    match cfg.channel {
        ChannelKind::Awgn64Qam => {
            let (mut symbols, pad) = qam64_map(bits);
            awgn(&mut symbols, cfg.snr_db, cfg.seed);
            qam64_demap(&symbols, pad)
        }
        ChannelKind::Bsc => {
            let mut out = bits.to_vec();
            bsc(&mut out, cfg.bsc_flip_prob, cfg.seed);
            out
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Transmission {
    pub received: Vec<u8>,
    pub bit_errors: u64,
    /// Payload bits compared (`8·len`).
    pub bits: u64,
}

impl Transmission {
    pub fn ber(&self) -> f64 {
        if self.bits == 0 {
            0.0
        } else {
            self.bit_errors as f64 / self.bits as f64
        }
    }
}

/// Sends a payload across the link. With header protection the first
/// `HEADER_LEN` octets bypass the channel.
pub fn transmit(payload: &[u8], cfg: &LinkConfig) -> Result<Transmission> {
    cfg.validate()?;
    let skip = match cfg.header_protection {
        HeaderProtection::Protected => HEADER_LEN.min(payload.len()),
        HeaderProtection::Unprotected => 0,
    };
    let (head, body) = payload.split_at(skip);
    let rx_body = bits_to_bytes(&transmit_bits(&bytes_to_bits(body), cfg));
    let mut received = head.to_vec();
    received.extend_from_slice(&rx_body);
    let bit_errors = payload
        .iter()
        .zip(&received)
        .map(|(a, b)| (a ^ b).count_ones() as u64)
        .sum();
    Ok(Transmission {
        received,
        bit_errors,
        bits: payload.len() as u64 * 8,
    })
}

/// OFDM resource grid used for capacity accounting.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FrameGrid {
    pub subcarriers: usize,
    pub symbols_per_frame: usize,
    pub bits_per_symbol: usize,
    pub streams: usize,
}

impl Default for FrameGrid {
    fn default() -> Self {
        Self {
            subcarriers: 132,
            symbols_per_frame: 14,
            bits_per_symbol: BITS_PER_SYMBOL,
            streams: 1,
        }
    }
}

impl FrameGrid {
    /// Uncoded bits per fully loaded frame.
    pub fn capacity_bits(&self) -> usize {
        self.subcarriers * self.symbols_per_frame * self.bits_per_symbol * self.streams
    }

    pub fn validate(&self) -> Result<()> {
        if self.capacity_bits() == 0 {
            return Err(Error::Config(
                "frame grid dimensions must be positive".into(),
            ));
        }
        Ok(())
    }
}

pub fn frames_required(payload_octets: usize, grid: &FrameGrid) -> usize {
    (payload_octets * 8).div_ceil(grid.capacity_bits())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn group(v: u8) -> Vec<u8> {
        (0..6).rev().map(|k| (v >> k) & 1).collect()
    }

    #[test]
    fn corner_symbol() {
        let (s, pad) = qam64_map(&[0, 0, 0, 0, 0, 0]);
        assert_eq!(pad, 0);
        let c = -7.0 / 42f64.sqrt();
        assert!((s[0].re - c).abs() < 1e-15 && (s[0].im - c).abs() < 1e-15);
    }

    #[test]
    fn unit_average_energy() {
        let bits: Vec<u8> = (0..64u8).flat_map(group).collect();
        let (s, _) = qam64_map(&bits);
        let e: f64 = s.iter().map(|z| z.norm_sqr()).sum::<f64>() / 64.0;
        assert!((e - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gray_neighbours_differ_in_one_bit() {
        let bits: Vec<u8> = (0..64u8).flat_map(group).collect();
        let (s, _) = qam64_map(&bits);
        let step = 2.0 * qam64_scale();
        let mut pairs = 0;
        for a in 0..64 {
            for b in 0..64 {
                let d = s[a] - s[b];
                let axis_adjacent = ((d.re.abs() - step).abs() < 1e-12 && d.im.abs() < 1e-12)
                    || ((d.im.abs() - step).abs() < 1e-12 && d.re.abs() < 1e-12);
                if axis_adjacent {
                    assert_eq!((a ^ b).count_ones(), 1, "{a:06b} vs {b:06b}");
                    pairs += 1;
                }
            }
        }
        // 8 rows × 7 adjacencies × 2 axes, counted in both directions.
        assert_eq!(pairs, 224);
    }

    #[test]
    fn demap_inverts_map() {
        let bits: Vec<u8> = (0..64u8).flat_map(group).collect();
        let (s, pad) = qam64_map(&bits);
        assert_eq!(qam64_demap(&s, pad), bits);
        let odd = vec![1, 0, 1, 1, 0, 1, 1, 1];
        let (s, pad) = qam64_map(&odd);
        assert_eq!(pad, 4);
        assert_eq!(qam64_demap(&s, pad), odd);
    }

    #[test]
    fn midpoint_tie_prefers_smaller_magnitude() {
        let sc = qam64_scale();
        for (mid, expect) in [(2.0, 1), (-2.0, -1), (4.0, 3), (-6.0, -5), (0.0, 1)] {
            let s = [Complex64::new(mid * sc, 7.0 * sc)];
            let bits = qam64_demap(&s, 0);
            let label = (bits[0] << 2 | bits[1] << 1 | bits[2]) as usize;
            assert_eq!(GRAY_TO_LEVEL[label], expect, "midpoint {mid}");
        }
        // Beyond the outer levels clamps.
        assert_eq!(decide_axis(11.3), 7);
        assert_eq!(decide_axis(-40.0), 0);
    }

    #[test]
    fn noiseless_is_identity() {
        let payload: Vec<u8> = (0..=255).collect();
        for protection in [HeaderProtection::Protected, HeaderProtection::Unprotected] {
            let cfg = LinkConfig {
                header_protection: protection,
                ..LinkConfig::default()
            };
            let t = transmit(&payload, &cfg).unwrap();
            assert_eq!(t.received, payload);
            assert_eq!(t.bit_errors, 0);
        }
    }

    #[test]
    fn seeded_noise_is_reproducible() {
        let payload: Vec<u8> = (0..500).map(|i| (i * 7) as u8).collect();
        let cfg = LinkConfig {
            snr_db: 8.0,
            seed: 99,
            ..LinkConfig::default()
        };
        let a = transmit(&payload, &cfg).unwrap();
        let b = transmit(&payload, &cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.bit_errors > 0);
        let c = transmit(&payload, &LinkConfig { seed: 100, ..cfg }).unwrap();
        assert_ne!(a.received, c.received);
    }

    #[test]
    fn protected_header_survives() {
        let payload: Vec<u8> = (0..200).map(|i| i as u8).collect();
        for snr in [-5.0, 0.0, 5.0] {
            let cfg = LinkConfig {
                snr_db: snr,
                seed: 3,
                ..LinkConfig::default()
            };
            let t = transmit(&payload, &cfg).unwrap();
            assert_eq!(&t.received[..HEADER_LEN], &payload[..HEADER_LEN]);
            assert_eq!(t.received.len(), payload.len());
        }
    }

    #[test]
    fn noise_variance_at_10db() {
        let n = 1_000_000;
        let mut s = vec![Complex64::new(0.0, 0.0); n];
        awgn(&mut s, 10.0, 2024);
        let var = s.iter().map(|z| z.norm_sqr()).sum::<f64>() / n as f64;
        assert!((var - 0.1).abs() / 0.1 < 0.01, "variance {var}");
    }

    #[test]
    fn bsc_half_flips_half() {
        let bits = vec![0u8; 1_000_000];
        let cfg = LinkConfig {
            channel: ChannelKind::Bsc,
            bsc_flip_prob: 0.5,
            seed: 11,
            ..LinkConfig::default()
        };
        let out = transmit_bits(&bits, &cfg);
        let rate = out.iter().map(|&b| b as f64).sum::<f64>() / bits.len() as f64;
        assert!((rate - 0.5).abs() <= 0.002, "rate {rate}");
    }

    #[test]
    fn config_validation() {
        let bad = LinkConfig {
            bsc_flip_prob: 0.7,
            ..LinkConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = LinkConfig {
            snr_db: f64::NAN,
            ..LinkConfig::default()
        };
        assert!(transmit(&[1, 2, 3], &bad).is_err());
    }

    #[test]
    fn frame_capacity() {
        let g = FrameGrid::default();
        assert_eq!(g.capacity_bits(), 11_088);
        assert_eq!(frames_required(1386, &g), 1);
        assert_eq!(frames_required(1387, &g), 2);
        let two = FrameGrid { streams: 2, ..g };
        assert_eq!(frames_required(2772, &two), 1);
        assert_eq!(frames_required(2773, &two), 2);
    }

    #[test]
    fn bit_packing() {
        let bytes = [0b1010_0001, 0xff, 0x00];
        let bits = bytes_to_bits(&bytes);
        assert_eq!(&bits[..8], &[1, 0, 1, 0, 0, 0, 0, 1]);
        assert_eq!(bits_to_bytes(&bits), bytes);
    }

    fn random_bits(n: usize, seed: u64) -> Vec<u8> {
        let mut rng = SplitMix64::new(seed);
        (0..n).map(|_| (rng.next_u64() >> 63) as u8).collect()
    }

    fn measured_ber(bits: &[u8], cfg: &LinkConfig) -> f64 {
        let rx = transmit_bits(bits, cfg);
        bits.iter().zip(&rx).filter(|(a, b)| a != b).count() as f64 / bits.len() as f64
    }

    /// Exact bit error rate of Gray-labelled 8-PAM per axis: sums, over sent
    /// and decided levels, the decision-region probability times the Hamming
    /// distance between labels.
    fn exact_gray_ber(snr_db: f64) -> f64 {
        let q = |x: f64| 0.5 * statrs::function::erf::erfc(x / std::f64::consts::SQRT_2);
        let sigma = (noise_power(snr_db) / 2.0).sqrt();
        let a = qam64_scale();
        let mut total = 0.0;
        for (gi, &li) in GRAY_TO_LEVEL.iter().enumerate() {
            for (gj, &lj) in GRAY_TO_LEVEL.iter().enumerate() {
                let lo = if lj == -7 {
                    f64::NEG_INFINITY
                } else {
                    (lj as f64 - 1.0) * a
                };
                let hi = if lj == 7 {
                    f64::INFINITY
                } else {
                    (lj as f64 + 1.0) * a
                };
                let x = li as f64 * a;
                let p = q((lo - x) / sigma) - q((hi - x) / sigma);
                total += p * (gi ^ gj).count_ones() as f64;
            }
        }
        total / (8.0 * 3.0)
    }

    #[test]
    fn ber_matches_exact_gray_pam() {
        let bits = random_bits(2_000_004, 11);
        for (k, snr) in [0.0, 4.0, 8.0, 12.0, 16.0].into_iter().enumerate() {
            let cfg = LinkConfig {
                snr_db: snr,
                seed: 40 + k as u64,
                ..Default::default()
            };
            let got = measured_ber(&bits, &cfg);
            let want = exact_gray_ber(snr);
            assert!((got / want - 1.0).abs() < 0.03, "{snr} dB: {got} vs {want}");
        }
    }

    #[test]
    fn ber_non_increasing_in_snr() {
        let bits = random_bits(1_000_002, 12);
        let bers: Vec<f64> = (0..=10)
            .map(|k| {
                let cfg = LinkConfig {
                    snr_db: 2.0 * k as f64,
                    seed: 60 + k,
                    ..Default::default()
                };
                measured_ber(&bits, &cfg)
            })
            .collect();
        assert!(bers.windows(2).all(|w| w[1] <= w[0]), "{bers:?}");
    }

    #[test]
    fn bsc_within_three_sigma() {
        let bits = random_bits(1_000_000, 13);
        for p in [0.001, 0.01, 0.1, 0.2, 0.5] {
            let cfg = LinkConfig {
                channel: ChannelKind::Bsc,
                bsc_flip_prob: p,
                seed: 7,
                ..Default::default()
            };
            let got = measured_ber(&bits, &cfg);
            let sigma = (p * (1.0 - p) / bits.len() as f64).sqrt();
            assert!((got - p).abs() <= 3.0 * sigma, "p {p}: {got}");
        }
    }

    proptest::proptest! {
        #[test]
        fn noiseless_transmit_is_identity(payload in proptest::collection::vec(proptest::num::u8::ANY, 0..600), seed: u64, protected: bool) {
            let cfg = LinkConfig {
                seed,
                header_protection: if protected { HeaderProtection::Protected } else { HeaderProtection::Unprotected },
                ..Default::default()
            };
            let tx = transmit(&payload, &cfg).unwrap();
            proptest::prop_assert_eq!(tx.received, payload);
            proptest::prop_assert_eq!(tx.bit_errors, 0);
        }

        #[test]
        fn map_demap_round_trip(bits in proptest::collection::vec(0u8..2, 0..200)) {
            let (symbols, pad) = qam64_map(&bits);
            proptest::prop_assert_eq!(qam64_demap(&symbols, pad), bits);
        }
    }
}
