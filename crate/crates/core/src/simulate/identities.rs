//! Exact identities between weighted sums of `f(0), f(1), ...` and integrals
//! of the step functions `s -> f(floor(n s))`.
//!
//! The integral sides are evaluated as exact rational panel sums, so both
//! sides of each identity compare with `==`.

use num_rational::Ratio;
use num_traits::Zero;

type Q = Ratio<i128>;

/// `int_0^upper g(floor(n s)) ds` as a sum over the panels `[j/n, (j+1)/n)`.
pub fn step_integral(g: impl Fn(u64) -> Q, n: u64, upper: Q) -> Q {
    assert!(n >= 1, "scale n must be positive");
    let mut total = Q::zero();
    let mut j: u64 = 0;
    loop {
        let left = Q::new(j as i128, n as i128);
        if left >= upper {
            return total;
        }
        let right = Q::new(j as i128 + 1, n as i128).min(upper);
        total += g(j) * (right - left);
        j += 1;
    }
}

/// `F(j) = sum_{l=1}^{j} f(l)`, with `F(0) = 0`.
fn partial_sums(f: &impl Fn(u64) -> Q, k: u64) -> Vec<Q> {
    let mut out = Vec::with_capacity(k as usize + 1);
    out.push(Q::zero());
    for l in 1..=k {
        let prev = out[l as usize - 1];
        out.push(prev + f(l));
    }
    out
}

/// `(sum_{l=0}^{k} f(l), n int_0^{(k+1)/n} f(floor(n s)) ds)`.
pub fn weighted_sum_identity_1(f: impl Fn(u64) -> Q, k: u64, n: u64) -> (Q, Q) {
    let lhs = (0..=k).map(&f).fold(Q::zero(), |a, b| a + b);
    let rhs = Q::from_integer(n as i128) * step_integral(&f, n, Q::new(k as i128 + 1, n as i128));
    (lhs, rhs)
}

/// `(sum_{l=1}^{k} (k-l) f(l), n int_0^{k/n} F(floor(n s)) ds)`.
pub fn weighted_sum_identity_2(f: impl Fn(u64) -> Q, k: u64, n: u64) -> (Q, Q) {
    let lhs = (1..=k).map(|l| Q::from_integer((k - l) as i128) * f(l)).fold(Q::zero(), |a, b| a + b);
    let big_f = partial_sums(&f, k);
    let rhs = Q::from_integer(n as i128) * step_integral(|j| big_f[j as usize], n, Q::new(k as i128, n as i128));
    (lhs, rhs)
}

/// `(sum_{l=1}^{k} C(k-l, 2) f(l), n^2 int_0^{k/n} int_0^{floor(n r)/n} F(floor(n s)) ds dr)`.
pub fn weighted_sum_identity_3(f: impl Fn(u64) -> Q, k: u64, n: u64) -> (Q, Q) {
    let choose2 = |m: u64| Q::from_integer((m as i128 * (m as i128 - 1)) / 2);
    let lhs = (1..=k).map(|l| choose2(k - l) * f(l)).fold(Q::zero(), |a, b| a + b);
    let big_f = partial_sums(&f, k);
    // Inner integral up to floor(n r)/n, for each possible value of floor(n r).
    let inner: Vec<Q> =
        (0..k).map(|j| step_integral(|h| big_f[h as usize], n, Q::new(j as i128, n as i128))).collect();
    let n_q = Q::from_integer(n as i128);
    let rhs = n_q * n_q * step_integral(|j| inner[j as usize], n, Q::new(k as i128, n as i128));
    (lhs, rhs)
}
