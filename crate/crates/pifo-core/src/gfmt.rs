//! Float formatting that mirrors C's `printf("%.17g", x)`.
//!
//! Metrics and config files pin this format so that files round-trip exactly
//! (17 significant digits uniquely identify an `f64`) and so that independent
//! tooling can regenerate them byte for byte.
//!
//! The implementation expands the binary float to its exact decimal digit
//! sequence with digit-vector doubling/halving (every `f64` is a terminating
//! decimal), rounds half-to-even at 17 significant digits, then applies the
//! `%g` style rules: fixed notation when the decimal exponent `X` satisfies
//! `-4 <= X < 17`, scientific otherwise, trailing zeros trimmed.

use alloc::string::String;
use alloc::vec::Vec;

const SIG_DIGITS: usize = 17;

/// Formats `x` exactly as `printf("%.17g", x)` does.
pub fn format_g17(x: f64) -> String {
    if x.is_nan() {
        return String::from("nan");
    }
    let neg = x.is_sign_negative();
    let sign = if neg { "-" } else { "" };
    if x.is_infinite() {
        let mut s = String::from(sign);
        s.push_str("inf");
        return s;
    }
    if x == 0.0 {
        let mut s = String::from(sign);
        s.push('0');
        return s;
    }

    let (digits, exp10) = significant_digits(x.abs());
    let mut s = String::from(sign);
    if exp10 < -4 || exp10 >= SIG_DIGITS as i32 {
        s.push_str(&scientific(&digits, exp10));
    } else {
        s.push_str(&fixed(&digits, exp10));
    }
    s
}

/// The first 17 significant decimal digits of a positive finite float,
/// correctly rounded (ties to even), and the decimal exponent `X` such that
/// the value is `d.ddd... * 10^X`.
fn significant_digits(x: f64) -> (Vec<u8>, i32) {
    let bits = x.to_bits();
    let raw_exp = ((bits >> 52) & 0x7ff) as i64;
    let frac = bits & 0xf_ffff_ffff_ffff;
    // x = mantissa * 2^exp2 exactly.
    let (mantissa, exp2) = if raw_exp == 0 {
        (frac, -1074i64)
    } else {
        (frac | (1 << 52), raw_exp - 1075)
    };

    // Exact decimal expansion: integer digits (most significant first) plus
    // fraction digits. Doubling/halving keep the digit vectors exact.
    let mut int_digits = decimal_digits_u64(mantissa);
    let mut frac_digits: Vec<u8> = Vec::new();
    if exp2 >= 0 {
        for _ in 0..exp2 {
            double_digits(&mut int_digits);
        }
    } else {
        for _ in 0..(-exp2) {
            halve_digits(&mut int_digits, &mut frac_digits);
        }
    }

    // Locate the first significant digit in [int | frac].
    let int_len = int_digits.len() as i32;
    let mut all: Vec<u8> = int_digits;
    all.extend_from_slice(&frac_digits);
    let first = all
        .iter()
        .position(|&d| d != 0)
        .expect("nonzero float has a nonzero digit");
    let mut exp10 = int_len - first as i32 - 1;

    let mut digits: Vec<u8> = Vec::with_capacity(SIG_DIGITS);
    for i in 0..SIG_DIGITS {
        digits.push(*all.get(first + i).unwrap_or(&0));
    }
    // Round half to even on the exact tail.
    let tail = &all[(first + SIG_DIGITS).min(all.len())..];
    let round_up = match tail.first() {
        None => false,
        Some(&d) if d > 5 => true,
        Some(&d) if d < 5 => false,
        _ => tail[1..].iter().any(|&d| d != 0) || digits[SIG_DIGITS - 1] % 2 == 1,
    };
    if round_up {
        let mut i = SIG_DIGITS;
        loop {
            if i == 0 {
                // 999... rolled over to 1000...: one extra order of magnitude.
                digits.insert(0, 1);
                digits.pop();
                exp10 += 1;
                break;
            }
            i -= 1;
            if digits[i] == 9 {
                digits[i] = 0;
            } else {
                digits[i] += 1;
                break;
            }
        }
    }
    (digits, exp10)
}

fn decimal_digits_u64(mut v: u64) -> Vec<u8> {
    let mut rev: Vec<u8> = Vec::new();
    loop {
        rev.push((v % 10) as u8);
        v /= 10;
        if v == 0 {
            break;
        }
    }
    rev.reverse();
    rev
}

/// Doubles an integer digit vector (most significant digit first).
fn double_digits(digits: &mut Vec<u8>) {
    let mut carry = 0u8;
    for d in digits.iter_mut().rev() {
        let v = *d * 2 + carry;
        *d = v % 10;
        carry = v / 10;
    }
    if carry > 0 {
        digits.insert(0, carry);
    }
}

/// Halves an exact decimal `int.frac`, extending the fraction as needed.
fn halve_digits(int_digits: &mut Vec<u8>, frac_digits: &mut Vec<u8>) {
    let mut rem = 0u8;
    for d in int_digits.iter_mut() {
        let v = rem * 10 + *d;
        *d = v / 2;
        rem = v % 2;
    }
    while int_digits.len() > 1 && int_digits[0] == 0 {
        int_digits.remove(0);
    }
    for d in frac_digits.iter_mut() {
        let v = rem * 10 + *d;
        *d = v / 2;
        rem = v % 2;
    }
    if rem > 0 {
        frac_digits.push(5);
    }
}

fn push_digits(out: &mut String, digits: &[u8]) {
    for &d in digits {
        out.push((b'0' + d) as char);
    }
}

/// `%g` fixed notation for -4 <= exp10 < 17, trailing zeros trimmed.
fn fixed(digits: &[u8], exp10: i32) -> String {
    let mut out = String::new();
    if exp10 >= 0 {
        let int_len = (exp10 + 1) as usize;
        push_digits(&mut out, &digits[..int_len]);
        let frac = trim_zeros(&digits[int_len..]);
        if !frac.is_empty() {
            out.push('.');
            push_digits(&mut out, frac);
        }
    } else {
        out.push_str("0.");
        for _ in 0..(-exp10 - 1) {
            out.push('0');
        }
        push_digits(&mut out, trim_zeros(digits));
    }
    out
}

/// `%g` scientific notation: `d.dddd...e[+-]XX`, trailing zeros trimmed,
/// exponent printed with at least two digits.
fn scientific(digits: &[u8], exp10: i32) -> String {
    let mut out = String::new();
    out.push((b'0' + digits[0]) as char);
    let frac = trim_zeros(&digits[1..]);
    if !frac.is_empty() {
        out.push('.');
        push_digits(&mut out, frac);
    }
    out.push('e');
    out.push(if exp10 < 0 { '-' } else { '+' });
    let abs = exp10.unsigned_abs();
    if abs < 10 {
        out.push('0');
    }
    let mut buf = Vec::new();
    let mut v = abs;
    loop {
        buf.push((b'0' + (v % 10) as u8) as char);
        v /= 10;
        if v == 0 {
            break;
        }
    }
    while let Some(c) = buf.pop() {
        out.push(c);
    }
    out
}

fn trim_zeros(digits: &[u8]) -> &[u8] {
    let mut end = digits.len();
    while end > 0 && digits[end - 1] == 0 {
        end -= 1;
    }
    &digits[..end]
}
