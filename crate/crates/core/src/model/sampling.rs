//! Seeded multinomial sampling.
//!
//! Each setting draws from its own ChaCha8 stream seeded with
//! `seed XOR fnv1a64(setting name)`, so per-setting results do not depend on
//! the order (or concurrency) in which settings are sampled. Multinomial
//! vectors are drawn as a chain of conditional binomials, each by exact
//! inverse-CDF search outward from the mode.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::function::gamma::ln_gamma;

/// 64-bit FNV-1a hash.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Stream for a named substream of `seed`.
pub fn substream(seed: u64, name: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ fnv1a64(name.as_bytes()))
}

/// Derived seed for repetition `index` of a Monte-Carlo loop.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng.gen()
}

/// Draws `Bin(n, p)` by inverse CDF.
pub fn binomial<R: Rng + ?Sized>(rng: &mut R, n: u64, p: f64) -> u64 {
    if n == 0 || p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return n;
    }
    let u: f64 = rng.gen();
    binomial_quantile(n, p, u)
}

/// Smallest `k` with `CDF(k) > u`.
pub fn binomial_quantile(n: u64, p: f64, u: f64) -> u64 {
    let q = 1.0 - p;
    let nf = n as f64;
    let mode = (((nf + 1.0) * p).floor() as u64).min(n);
    let ln_pmf = |k: u64| {
        let kf = k as f64;
        ln_gamma(nf + 1.0) - ln_gamma(kf + 1.0) - ln_gamma(nf - kf + 1.0)
            + kf * p.ln()
            + (nf - kf) * q.ln()
    };
    let p_mode = ln_pmf(mode).exp();
    let ratio = p / q;

    // Lower tail below the mode, most significant terms first.
    let mut lower = Vec::new();
    let mut term = p_mode;
    let mut k = mode;
    while k > 0 {
        term *= k as f64 / ((n - k + 1) as f64 * ratio);
        k -= 1;
        if term < p_mode * 1e-18 {
            break;
        }
        lower.push(term);
    }
    let lower_sum: f64 = lower.iter().rev().sum();

    if u < lower_sum {
        // Walk down: cdf(mode-1) = lower_sum.
        let mut cdf = lower_sum;
        let mut k = mode - 1;
        for &t in &lower {
            if u >= cdf - t {
                return k;
            }
            cdf -= t;
            if k == 0 {
                return 0;
            }
            k -= 1;
        }
        return k;
    }

    let mut cdf = lower_sum + p_mode;
    let mut k = mode;
    let mut term = p_mode;
    while u >= cdf && k < n {
        k += 1;
        term *= (n - k + 1) as f64 / k as f64 * ratio;
        if term == 0.0 {
            break;
        }
        cdf += term;
    }
    k
}

/// Multinomial counts for `shots` draws from `probs` (need not be exactly normalised).
pub fn multinomial<R: Rng + ?Sized>(rng: &mut R, shots: u64, probs: &[f64]) -> Vec<u64> {
    let mut out = vec![0u64; probs.len()];
    let mut remaining = shots;
    let mut mass: f64 = probs.iter().map(|p| p.max(0.0)).sum();
    for (i, &p) in probs.iter().enumerate() {
        if remaining == 0 {
            break;
        }
        if i + 1 == probs.len() {
            out[i] = remaining;
            break;
        }
        let p = p.max(0.0);
        let cond = if mass > 0.0 { (p / mass).min(1.0) } else { 0.0 };
        let draw = binomial(rng, remaining, cond);
        out[i] = draw;
        remaining -= draw;
        mass -= p;
    }
    out
}
