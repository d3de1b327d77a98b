//! Summation with an extended exponent.
//!
//! Plain f64 addition is used until a summand or the running sum exceeds
//! 1e300; from then on the sum is kept as mantissa·2^exponent.

const PLAIN_LIMIT: f64 = 1e300;

/// Splits a finite nonzero x into (m, e) with x = m·2^e and 0.5 ≤ |m| < 1.
pub fn frexp(x: f64) -> (f64, i32) {
    if x == 0.0 || !x.is_finite() {
        return (x, 0);
    }
    let bits = x.to_bits();
    let biased = ((bits >> 52) & 0x7ff) as i32;
    if biased == 0 {
        let (m, e) = frexp(x * 2f64.powi(54));
        return (m, e - 54);
    }
    let m = f64::from_bits((bits & !(0x7ffu64 << 52)) | (1022u64 << 52));
    (m, biased - 1022)
}

/// m·2^e, saturating to ±inf or 0.
pub fn ldexp(m: f64, e: i32) -> f64 {
    let mut out = m;
    let mut e = e;
    while e > 1000 {
        out *= 2f64.powi(1000);
        e -= 1000;
    }
    while e < -1000 {
        out *= 2f64.powi(-1000);
        e += 1000;
    }
    out * 2f64.powi(e)
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ExtSum {
    plain: f64,
    /// Some((m, e)) once the sum left the plain range.
    ext: Option<(f64, i64)>,
}

impl ExtSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_extended(&self) -> bool {
        self.ext.is_some()
    }

    /// Adds a finite value.
    pub fn add(&mut self, x: f64) {
        if self.ext.is_none() && x.abs() < PLAIN_LIMIT {
            let s = self.plain + x;
            if s.abs() < PLAIN_LIMIT {
                self.plain = s;
                return;
            }
        }
        let (m, e) = frexp(x);
        self.add_parts(m, e as i64);
    }

    /// Adds x², which may exceed the f64 range even when x does not.
    pub fn add_square(&mut self, x: f64) {
        if self.ext.is_none() && x.abs() < 1e150 {
            self.add(x * x);
            return;
        }
        let (m, e) = frexp(x);
        self.add_parts(m * m, 2 * e as i64);
    }

    /// Adds m·2^e.
    pub fn add_parts(&mut self, m: f64, e: i64) {
        if m == 0.0 {
            return;
        }
        let (sm, se) = match self.ext {
            Some(v) => v,
            None => {
                let (a, b) = frexp(self.plain);
                (a, b as i64)
            }
        };
        let (big_m, big_e, small_m, small_e) = if sm == 0.0 || (e > se) { (m, e, sm, se) } else { (sm, se, m, e) };
        let diff = big_e - small_e;
        let total = if small_m == 0.0 || diff > 1100 { big_m } else { big_m + ldexp(small_m, -(diff as i32)) };
        let (nm, ne) = frexp(total);
        self.ext = Some((nm, big_e + ne as i64));
    }

    /// (m, e) with value m·2^e.
    pub fn parts(&self) -> (f64, i64) {
        match self.ext {
            Some(v) => v,
            None => {
                let (m, e) = frexp(self.plain);
                (m, e as i64)
            }
        }
    }

    /// The sum divided by g^power, or None if the quotient is not
    /// representable as a finite f64.
    pub fn normalized(&self, g: f64, power: i32) -> Option<f64> {
        if self.ext.is_none() {
            let v = self.plain / g.powi(power);
            if v.is_finite() {
                return Some(v);
            }
        }
        let (m, e) = self.parts();
        if m == 0.0 {
            return Some(0.0);
        }
        let (gm, ge) = frexp(g);
        let e = e - power as i64 * ge as i64;
        let e = e.clamp(-5000, 5000) as i32;
        let v = ldexp(m / gm.powi(power), e);
        v.is_finite().then_some(v)
    }

    pub fn to_f64(&self) -> Option<f64> {
        self.normalized(1.0, 0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frexp_round_trip() {
        for x in [1.0, -3.5, 1e-310, 6.02e23, -1e300] {
            let (m, e) = frexp(x);
            assert!((0.5..1.0).contains(&m.abs()));
            assert_eq!(ldexp(m, e), x);
        }
    }

    #[test]
    fn plain_and_extended_agree() {
        let mut s = ExtSum::new();
        for x in [1.0, 2.5, -0.75] {
            s.add(x);
        }
        assert_eq!(s.to_f64(), Some(2.75));
        assert!(!s.is_extended());

        let mut big = ExtSum::new();
        big.add_square(1e200);
        big.add_square(1e200);
        assert!(big.is_extended());
        assert_eq!(big.to_f64(), None);
        // 2e400 / (1e100)^2 = 2e200
        let v = big.normalized(1e100, 2).unwrap();
        assert!((v / 2e200 - 1.0).abs() < 1e-12);
        big.add(-1e300);
        let v = big.normalized(1e100, 2).unwrap();
        assert!((v / 2e200 - 1.0).abs() < 1e-12);
    }
}
