//! Signed power maps `x ↦ |x|^{n-1} x` and their inverses.

/// `|x|^{n-1} x`. For odd `n` this is `x^n`.
#[inline]
pub fn signed_pow(x: f64, n: u32) -> f64 {
    let a = x.abs();
    let mut p = a;
    for _ in 1..n {
        p *= a;
    }
    if x < 0.0 {
        -p
    } else {
        p
    }
}

/// Inverse of [`signed_pow`]: `sign(x) |x|^{1/n}`.
#[inline]
pub fn signed_root(x: f64, n: u32) -> f64 {
    if n == 1 || x == 0.0 {
        return x;
    }
    let a = x.abs();
    let r = match n {
        2 => a.sqrt(),
        3 => a.cbrt(),
        _ => a.powf(1.0 / n as f64),
    };
    if x < 0.0 {
        -r
    } else {
        r
    }
}

/// Odd root `sign(x)|x|^{1/n}`; alias of [`signed_root`] kept for the odd-power pipelines.
#[inline]
pub fn odd_root(x: f64, n: u32) -> f64 {
    signed_root(x, n)
}
