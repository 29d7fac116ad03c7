//! Exact natural numbers and the evaluation budget shared by every bound
//! computation.
//!
//! All ℕ-valued quantities (error indices, counter values, bounds) are
//! [`Nat`] = [`BigUint`]. Real parameters enter only through [`Real`], which
//! is converted to an exact rational before any ceiling is taken, so
//! `⌈·⌉` never loses a unit to float rounding of the intermediate product.

use std::cell::Cell;

use num_bigint::BigUint;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

use crate::error::{Error, Result};

/// Arbitrary-precision natural number.
pub type Nat = BigUint;

/// A real-valued parameter as it appears in configuration files.
pub type Real = f64;

pub fn nat(v: u64) -> Nat {
    Nat::from(v)
}

/// Truncated subtraction `a ∸ b`.
pub fn monus(a: &Nat, b: &Nat) -> Nat {
    if a > b {
        a - b
    } else {
        Nat::zero()
    }
}

/// Exact rational value of a finite, nonnegative double.
pub fn ratio_of(x: Real) -> Result<BigRational> {
    if !x.is_finite() {
        return Err(Error::Range {
            field: "real".into(),
            msg: format!("{x} is not finite"),
        });
    }
    BigRational::from_float(x).ok_or_else(|| Error::Range {
        field: "real".into(),
        msg: format!("cannot represent {x} exactly"),
    })
}

/// `⌈r⌉` for a nonnegative rational.
pub fn ceil_ratio(r: &BigRational) -> Result<Nat> {
    if r.is_negative_value() {
        return Err(Error::Domain(format!("ceiling of negative value {r}")));
    }
    let c = r.ceil().to_integer();
    Ok(c.to_biguint().expect("nonnegative"))
}

trait NegCheck {
    fn is_negative_value(&self) -> bool;
}

impl NegCheck for BigRational {
    fn is_negative_value(&self) -> bool {
        self.numer().sign() == num_bigint::Sign::Minus
    }
}

pub fn ratio_nat(n: &Nat) -> BigRational {
    BigRational::from_integer(n.clone().into())
}

/// `⌈√n⌉`.
pub fn ceil_sqrt(n: &Nat) -> Nat {
    let s = n.sqrt();
    if &(&s * &s) == n {
        s
    } else {
        s + 1u32
    }
}

/// `⌈√r⌉` for a nonnegative rational: the least `m` with `m² ≥ r`, which is
/// the least `m` with `m² ≥ ⌈r⌉`.
pub fn ceil_sqrt_ratio(r: &BigRational) -> Result<Nat> {
    Ok(ceil_sqrt(&ceil_ratio(r)?))
}

/// `⌈log₂ n⌉`, with `⌈log₂ 0⌉ = ⌈log₂ 1⌉ = 0`.
pub fn ceil_log2(n: &Nat) -> Nat {
    if n <= &Nat::one() {
        return Nat::zero();
    }
    let m = n - 1u32;
    nat(m.bits())
}

/// `⌈a / b⌉` on naturals, `b > 0`.
pub fn ceil_div(a: &Nat, b: &Nat) -> Nat {
    let (q, r) = a.div_rem(b);
    if r.is_zero() {
        q
    } else {
        q + 1u32
    }
}

/// Converts a natural to `u64`, reporting what was being sized on failure.
pub fn to_u64(n: &Nat, what: &str) -> Result<u64> {
    n.to_u64().ok_or_else(|| Error::CapExceeded {
        what: format!("{what} = {} bits does not fit a machine word", n.bits()),
        lower_bound: None,
    })
}

/// Limits on a single bound computation.
///
/// `max_steps` counts recursion-internal evaluations (iterates, scans,
/// counter-function calls); `max_bits` limits the size of any single
/// intermediate natural. Exceeding either yields [`Error::CapExceeded`].
#[derive(Debug)]
pub struct Budget {
    pub max_steps: u64,
    pub max_bits: u64,
    /// Largest argument for which a non-monotone function is majorized by
    /// an explicit scan.
    pub scan_cap: u64,
    steps: Cell<u64>,
}

impl Default for Budget {
    fn default() -> Self {
        Budget::new(1_000_000, 1 << 16)
    }
}

impl Budget {
    pub fn new(max_steps: u64, max_bits: u64) -> Self {
        Budget {
            max_steps,
            max_bits,
            scan_cap: 100_000,
            steps: Cell::new(0),
        }
    }

    pub fn with_scan_cap(mut self, cap: u64) -> Self {
        self.scan_cap = cap;
        self
    }

    pub fn steps_used(&self) -> u64 {
        self.steps.get()
    }

    pub fn tick(&self) -> Result<()> {
        let s = self.steps.get() + 1;
        self.steps.set(s);
        if s > self.max_steps {
            return Err(Error::CapExceeded {
                what: format!("evaluation budget of {} steps", self.max_steps),
                lower_bound: None,
            });
        }
        Ok(())
    }

    /// Rejects values larger than the configured bit budget.
    pub fn check(&self, v: Nat) -> Result<Nat> {
        if v.bits() > self.max_bits {
            return Err(Error::CapExceeded {
                what: format!("intermediate value of {} bits (limit {})", v.bits(), self.max_bits),
                lower_bound: None,
            });
        }
        Ok(v)
    }

    /// `base^exp`, refusing results that would exceed the bit budget.
    pub fn pow(&self, base: &Nat, exp: &Nat) -> Result<Nat> {
        if base.is_zero() {
            return Ok(if exp.is_zero() { Nat::one() } else { Nat::zero() });
        }
        if base.is_one() {
            return Ok(Nat::one());
        }
        let e = exp.to_u64().filter(|e| e.saturating_mul(base.bits() - 1) <= self.max_bits);
        match e {
            Some(e) => self.check(num_traits::pow(base.clone(), e as usize)),
            None => Err(Error::CapExceeded {
                what: format!("power with {}-bit base and exponent {exp}", base.bits()),
                lower_bound: None,
            }),
        }
    }
}

/// Serde adapters writing naturals as exact decimal strings; readers accept
/// either strings or JSON integers.
pub mod dec {
    use super::Nat;
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(n: &Nat, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&n.to_str_radix(10))
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Int(u64),
        Str(String),
    }

    pub(crate) fn from_raw<E: de::Error>(raw: RawNat) -> Result<Nat, E> {
        match raw.0 {
            Raw::Int(v) => Ok(Nat::from(v)),
            Raw::Str(s) => s
                .trim()
                .parse::<Nat>()
                .map_err(|_| E::custom(format!("`{s}` is not a natural number"))),
        }
    }

    #[derive(Deserialize)]
    #[serde(transparent)]
    pub(crate) struct RawNat(Raw);

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Nat, D::Error> {
        from_raw(RawNat::deserialize(d)?)
    }

    pub mod vec {
        use super::{from_raw, Nat, RawNat};
        use serde::{ser::SerializeSeq, Deserialize, Deserializer, Serializer};

        pub fn serialize<S: Serializer>(v: &[Nat], s: S) -> Result<S::Ok, S::Error> {
            let mut seq = s.serialize_seq(Some(v.len()))?;
            for n in v {
                seq.serialize_element(&n.to_str_radix(10))?;
            }
            seq.end()
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Nat>, D::Error> {
            Vec::<RawNat>::deserialize(d)?
                .into_iter()
                .map(from_raw)
                .collect()
        }
    }

    pub mod opt {
        use super::{from_raw, Nat, RawNat};
        use serde::{Deserialize, Deserializer, Serializer};

        pub fn serialize<S: Serializer>(v: &Option<Nat>, s: S) -> Result<S::Ok, S::Error> {
            match v {
                Some(n) => s.serialize_str(&n.to_str_radix(10)),
                None => s.serialize_none(),
            }
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Nat>, D::Error> {
            Option::<RawNat>::deserialize(d)?.map(from_raw).transpose()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ceilings_are_exact() {
        let r = ratio_of(0.5).unwrap() * ratio_nat(&nat(3));
        assert_eq!(ceil_ratio(&r).unwrap(), nat(2));
        assert_eq!(ceil_ratio(&ratio_nat(&nat(7))).unwrap(), nat(7));
        assert_eq!(ceil_sqrt(&nat(8)), nat(3));
        assert_eq!(ceil_sqrt(&nat(9)), nat(3));
        assert_eq!(ceil_sqrt(&nat(0)), nat(0));
        // ⌈2√2⌉ = 3
        assert_eq!(ceil_sqrt_ratio(&ratio_nat(&nat(8))).unwrap(), nat(3));
    }

    #[test]
    fn log2_and_monus() {
        assert_eq!(ceil_log2(&nat(1)), nat(0));
        assert_eq!(ceil_log2(&nat(2)), nat(1));
        assert_eq!(ceil_log2(&nat(3)), nat(2));
        assert_eq!(ceil_log2(&nat(4)), nat(2));
        assert_eq!(ceil_log2(&nat(5)), nat(3));
        assert_eq!(monus(&nat(3), &nat(5)), nat(0));
        assert_eq!(monus(&nat(5), &nat(3)), nat(2));
        assert_eq!(ceil_div(&nat(7), &nat(2)), nat(4));
    }

    #[test]
    fn budget_caps_bits_and_steps() {
        let b = Budget::new(2, 64);
        b.tick().unwrap();
        b.tick().unwrap();
        assert!(matches!(b.tick(), Err(Error::CapExceeded { .. })));
        assert!(b.pow(&nat(2), &nat(63)).is_ok());
        assert!(b.pow(&nat(2), &nat(200)).is_err());
        assert_eq!(b.pow(&nat(1), &nat(1u64 << 40)).unwrap(), nat(1));
    }

    #[test]
    fn decimal_serde_accepts_numbers_and_strings() {
        #[derive(serde::Deserialize, serde::Serialize)]
        struct W {
            #[serde(with = "dec")]
            v: Nat,
        }
        let w: W = serde_json::from_str(r#"{"v": 12}"#).unwrap();
        assert_eq!(w.v, nat(12));
        let w: W = serde_json::from_str(r#"{"v": "123456789012345678901234567890"}"#).unwrap();
        assert_eq!(serde_json::to_string(&w).unwrap(), r#"{"v":"123456789012345678901234567890"}"#);
        assert!(serde_json::from_str::<W>(r#"{"v": "-3"}"#).is_err());
    }
}
