/// Exact binomial coefficient `C(n, k)`, zero when `k > n`; `None` on `u128` overflow.
pub fn binomial(n: u64, k: u64) -> Option<u128> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut c: u128 = 1;
    for i in 0..k {
        // C(n, i) * (n - i) = C(n, i + 1) * (i + 1), so the division is exact.
        c = c.checked_mul(u128::from(n - i))? / u128::from(i + 1);
    }
    Some(c)
}

/// `C(n, k)` as a float; panics only if the exact value overflows `u128`.
pub fn binomial_f64(n: u64, k: u64) -> f64 {
    binomial(n, k).expect("binomial coefficient overflows u128") as f64
}
