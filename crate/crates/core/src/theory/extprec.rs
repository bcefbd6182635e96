//! Argument reduction for `cos/sin(2π·λ·θ0^{2d/D})` when `λθ_d` is too large
//! for its fractional part to survive in double precision.
//!
//! `θ_d` is evaluated once per `(θ0, D)` as a fixed-point integer
//! `round(θ_d·2^bits)` from a series for `ln θ0` and `exp`. The product with the
//! exact binary value of `λ` is formed in integer arithmetic, so its fractional
//! part is exact up to the representation error of `θ_d`.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use num_bigint::BigUint;

/// `|λθ_d|` above which the extended path is used.
pub const FAST_PATH_LIMIT: f64 = 65536.0;

/// Fractional bits of the cached tables. Products stay exact to about
/// `2^-64` turns for `|λ| < 2^(BASE_BITS - 128)`.
const BASE_BITS: u32 = 256;
const GUARD_BITS: u32 = 64;
const EXP_HALVINGS: u32 = 8;

#[derive(Debug)]
pub struct ThetaTable {
    bits: u32,
    values: Vec<BigUint>,
}

impl ThetaTable {
    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `(sin, cos)` of `2π·λ·θ_d`.
    pub fn sin_cos(&self, lambda: f64, d: usize) -> (f64, f64) {
        let t = frac_turns(lambda.abs(), &self.values[d], self.bits);
        let (s, c) = (std::f64::consts::TAU * t).sin_cos();
        if lambda < 0.0 {
            (-s, c)
        } else {
            (s, c)
        }
    }
}

type CacheKey = (u64, usize, u32);

fn cache() -> &'static Mutex<HashMap<CacheKey, Arc<ThetaTable>>> {
    static CACHE: OnceLock<Mutex<HashMap<CacheKey, Arc<ThetaTable>>>> = OnceLock::new();
    CACHE.get_or_init(Default::default)
}

/// Fractional bits needed for `|λ|` to keep 64 correct bits of turns.
pub fn bits_for(lambda: f64) -> u32 {
    let exp = lambda.abs().log2().ceil().max(0.0) as u32;
    let need = (exp + 128).max(BASE_BITS);
    need.div_ceil(64) * 64
}

/// Extended-precision `θ_d = θ0^{2d/D}` for `d = 0..D/2`, cached per `(θ0, D, bits)`.
pub fn theta_table(theta0: f64, dim: usize, bits: u32) -> Arc<ThetaTable> {
    let key = (theta0.to_bits(), dim, bits);
    if let Some(t) = cache().lock().expect("cache poisoned").get(&key) {
        return t.clone();
    }
    let table = Arc::new(build_table(theta0, dim, bits));
    cache()
        .lock()
        .expect("cache poisoned")
        .entry(key)
        .or_insert(table)
        .clone()
}

fn one(w: u32) -> BigUint {
    BigUint::from(1u32) << w
}

fn mul(a: &BigUint, b: &BigUint, w: u32) -> BigUint {
    (a * b) >> w
}

/// `atanh(p/q)` for `0 <= p < q`.
fn atanh_ratio(p: &BigUint, q: &BigUint, w: u32) -> BigUint {
    let y = (p << w) / q;
    let y2 = mul(&y, &y, w);
    let mut pow = y;
    let mut sum = BigUint::default();
    let mut k = 1u32;
    while pow.bits() > 0 {
        sum += &pow / k;
        pow = mul(&pow, &y2, w);
        k += 2;
    }
    sum
}

fn ln2(w: u32) -> BigUint {
    atanh_ratio(&BigUint::from(1u32), &BigUint::from(3u32), w) << 1
}

/// `exp(x)` for `0 <= x <= 1`.
fn exp_small(x: &BigUint, w: u32) -> BigUint {
    let r = x >> EXP_HALVINGS;
    let mut sum = one(w);
    let mut term = one(w);
    let mut i = 1u32;
    loop {
        term = mul(&term, &r, w) / i;
        if term.bits() == 0 {
            break;
        }
        sum += &term;
        i += 1;
    }
    for _ in 0..EXP_HALVINGS {
        sum = mul(&sum, &sum, w);
    }
    sum
}

/// `(M, E)` with `x = M·2^E` exactly.
fn decompose(x: f64) -> (u64, i32) {
    let bits = x.to_bits();
    let exp = ((bits >> 52) & 0x7ff) as i32;
    let frac = bits & ((1u64 << 52) - 1);
    if exp == 0 {
        (frac, -1074)
    } else {
        (frac | (1u64 << 52), exp - 1075)
    }
}

fn build_table(theta0: f64, dim: usize, bits: u32) -> ThetaTable {
    assert!(theta0 > 0.0 && theta0 < 1.0, "theta0 must lie in (0, 1)");
    let w = bits + GUARD_BITS;
    let l2 = ln2(w);
    // θ0 = m'·2^e with m' in [1, 2); -ln θ0 = |e|·ln 2 - ln m'
    let (m, e) = decompose(theta0);
    let nb = 64 - m.leading_zeros() as i32;
    let top = BigUint::from(1u64 << (nb - 1));
    let mb = BigUint::from(m);
    let ln_mant = atanh_ratio(&(&mb - &top), &(&mb + &top), w) << 1;
    let exp2 = -(e + nb - 1);
    debug_assert!(exp2 >= 1);
    let neg_ln = &l2 * BigUint::from(exp2 as u64) - ln_mant;

    let values = (0..dim / 2)
        .map(|d| {
            // y = -ln θ_d = (2d/D)·(-ln θ0) = k·ln2 + r, θ_d = 2^{-k-1}·exp(ln2 - r)
            let y: BigUint = &neg_ln * BigUint::from(2 * d as u64) / BigUint::from(dim as u64);
            let k: BigUint = &y / &l2;
            let r = &y - &k * &l2;
            let k: u64 = k.iter_u64_digits().next().unwrap_or(0);
            let e = exp_small(&(&l2 - &r), w);
            e >> (k + 1 + GUARD_BITS as u64)
        })
        .collect();
    ThetaTable { bits, values }
}

/// Fractional part of `λ·Θ/2^bits` in `[-1/2, 1/2)` for `λ >= 0`.
fn frac_turns(lambda: f64, theta: &BigUint, bits: u32) -> f64 {
    if lambda == 0.0 {
        return 0.0;
    }
    let (m, e) = decompose(lambda);
    let product = theta * BigUint::from(m);
    let frac_bits = bits as i64 - e as i64;
    if frac_bits <= 0 {
        return 0.0;
    }
    let frac_bits = frac_bits as u64;
    let frac = if product.bits() > frac_bits {
        let mask: BigUint = (BigUint::from(1u32) << frac_bits) - 1u32;
        &product & mask
    } else {
        product
    };
    let t = if frac_bits > 64 {
        let top = frac >> (frac_bits - 64);
        top.iter_u64_digits().next().unwrap_or(0) as f64 * 2f64.powi(-64)
    } else {
        frac.iter_u64_digits().next().unwrap_or(0) as f64 * 2f64.powi(-(frac_bits as i32))
    };
    if t >= 0.5 {
        t - 1.0
    } else {
        t
    }
}
