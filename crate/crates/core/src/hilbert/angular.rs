//! Clebsch–Gordan coefficients from the Racah closed form.
//!
//! Angular momenta are passed either as reals (`3.0`, `0.5`) or doubled
//! integers (`two_j = 2j`). Factorials are exact in `i128`.

use crate::error::{Error, Result};

fn factorial(n: i32) -> Result<i128> {
    if n < 0 {
        return Err(Error::Domain(format!("negative factorial argument {n}")));
    }
    let mut acc: i128 = 1;
    for k in 2..=n as i128 {
        acc = acc
            .checked_mul(k)
            .ok_or_else(|| Error::Domain(format!("factorial {n}! overflows i128")))?;
    }
    Ok(acc)
}

fn gcd(mut a: i128, mut b: i128) -> i128 {
    a = a.abs();
    b = b.abs();
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

fn overflow() -> Error {
    Error::Domain("angular momenta too large for exact evaluation".into())
}

/// Exact rational p/q with q > 0.
#[derive(Clone, Copy)]
struct Ratio(i128, i128);

impl Ratio {
    fn reduce(self) -> Self {
        let g = gcd(self.0, self.1).max(1);
        Ratio(self.0 / g, self.1 / g)
    }

    fn add(self, o: Ratio) -> Result<Ratio> {
        let g = gcd(self.1, o.1).max(1);
        let l = (self.1 / g).checked_mul(o.1).ok_or_else(overflow)?;
        let a = self.0.checked_mul(l / self.1).ok_or_else(overflow)?;
        let b = o.0.checked_mul(l / o.1).ok_or_else(overflow)?;
        Ok(Ratio(a.checked_add(b).ok_or_else(overflow)?, l).reduce())
    }

    fn to_f64(self) -> f64 {
        self.0 as f64 / self.1 as f64
    }
}

fn check_momentum(two_j: i32, two_m: i32) -> Result<()> {
    if two_j < 0 {
        return Err(Error::Domain(format!("negative angular momentum j = {}/2", two_j)));
    }
    if two_m.abs() > two_j {
        return Err(Error::Domain(format!("|m| = {}/2 exceeds j = {}/2", two_m.abs(), two_j)));
    }
    if (two_j - two_m) % 2 != 0 {
        return Err(Error::Domain(format!(
            "j = {}/2 and m = {}/2 mix integer and half-integer values",
            two_j, two_m
        )));
    }
    Ok(())
}

/// ⟨j1 m1; j2 m2 | J M⟩ with all arguments doubled.
pub fn clebsch_gordan2(two_j1: i32, two_m1: i32, two_j2: i32, two_m2: i32, two_j: i32, two_m: i32) -> Result<f64> {
    check_momentum(two_j1, two_m1)?;
    check_momentum(two_j2, two_m2)?;
    check_momentum(two_j, two_m)?;
    if two_m != two_m1 + two_m2 {
        return Ok(0.0);
    }
    if two_j < (two_j1 - two_j2).abs() || two_j > two_j1 + two_j2 || (two_j1 + two_j2 + two_j) % 2 != 0 {
        return Ok(0.0);
    }
    // integer arguments of the Racah formula
    let h = |x: i32| x / 2;
    let a = h(two_j1 + two_j2 - two_j);
    let b = h(two_j1 - two_m1);
    let c = h(two_j2 + two_m2);
    let d = h(two_j - two_j2 + two_m1);
    let e = h(two_j - two_j1 - two_m2);

    let num = (two_j as i128 + 1)
        .checked_mul(factorial(h(two_j + two_j1 - two_j2))?)
        .and_then(|x| x.checked_mul(factorial(h(two_j - two_j1 + two_j2)).ok()?))
        .and_then(|x| x.checked_mul(factorial(a).ok()?))
        .ok_or_else(overflow)?;
    let den = factorial(h(two_j1 + two_j2 + two_j) + 1)?;
    let mut prod: i128 = 1;
    for arg in [
        h(two_j + two_m),
        h(two_j - two_m),
        h(two_j1 - two_m1),
        h(two_j1 + two_m1),
        h(two_j2 - two_m2),
        h(two_j2 + two_m2),
    ] {
        prod = prod.checked_mul(factorial(arg)?).ok_or_else(overflow)?;
    }
    let pref = Ratio(num, den).reduce();

    let k_min = 0.max(-d).max(-e);
    let k_max = a.min(b).min(c);
    let mut sum = Ratio(0, 1);
    for k in k_min..=k_max {
        let mut denom: i128 = 1;
        for arg in [k, a - k, b - k, c - k, d + k, e + k] {
            denom = denom.checked_mul(factorial(arg)?).ok_or_else(overflow)?;
        }
        let sign = if k % 2 == 0 { 1 } else { -1 };
        sum = sum.add(Ratio(sign, denom))?;
    }
    Ok((pref.to_f64() * prod as f64).sqrt() * sum.to_f64())
}

fn doubled(x: f64, what: &str) -> Result<i32> {
    let t = 2.0 * x;
    if (t - t.round()).abs() > 1e-9 || t.abs() > 1e4 {
        return Err(Error::Domain(format!("{what} = {x} is not a multiple of 1/2")));
    }
    Ok(t.round() as i32)
}

/// Condon–Shortley ⟨j1 m1; j2 m2 | J M⟩ for integer or half-integer arguments.
pub fn clebsch_gordan(j1: f64, m1: f64, j2: f64, m2: f64, j: f64, m: f64) -> Result<f64> {
    clebsch_gordan2(
        doubled(j1, "j1")?,
        doubled(m1, "m1")?,
        doubled(j2, "j2")?,
        doubled(m2, "m2")?,
        doubled(j, "J")?,
        doubled(m, "M")?,
    )
}
