//! Triangle/tetrahedron indexing of multi-indices bounded by total order.
//!
//! Order-`n` indices are stored contiguously, orders ascending. Within an
//! order the first exponent runs from `n` down to `0`.

/// Number of 2D multi-indices `(i, j)` with `i + j <= order`.
pub const fn len2(order: usize) -> usize {
    (order + 1) * (order + 2) / 2
}

/// Number of 3D multi-indices with total order `<= order`.
pub const fn len3(order: usize) -> usize {
    (order + 1) * (order + 2) * (order + 3) / 6
}

#[inline]
pub const fn idx2(i: usize, j: usize) -> usize {
    let n = i + j;
    n * (n + 1) / 2 + j
}

#[inline]
pub const fn idx3(i: usize, j: usize, k: usize) -> usize {
    let n = i + j + k;
    let rest = n - i;
    n * (n + 1) * (n + 2) / 6 + rest * (rest + 1) / 2 + k
}

/// All `(i, j)` with `i + j == n`, in storage order.
pub fn order2(n: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..=n).map(move |j| (n - j, j))
}

/// All `(i, j)` with `i + j <= order`, in storage order.
pub fn all2(order: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..=order).flat_map(order2)
}

/// All `(i, j, k)` with `i + j + k == n`, in storage order.
pub fn order3(n: usize) -> impl Iterator<Item = (usize, usize, usize)> {
    (0..=n)
        .rev()
        .flat_map(move |i| (0..=(n - i)).map(move |k| (i, n - i - k, k)))
}

/// All `(i, j, k)` with `i + j + k <= order`, in storage order.
pub fn all3(order: usize) -> impl Iterator<Item = (usize, usize, usize)> {
    (0..=order).flat_map(order3)
}

pub fn factorial(n: usize) -> f64 {
    (1..=n).fold(1.0, |acc, v| acc * v as f64)
}

pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, t| acc * (n - t) as f64 / (t + 1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn storage_order_is_dense_and_consistent() {
        for order in 0..10 {
            let v: Vec<_> = all2(order).map(|(i, j)| idx2(i, j)).collect();
            assert_eq!(v, (0..len2(order)).collect::<Vec<_>>());
            let w: Vec<_> = all3(order).map(|(i, j, k)| idx3(i, j, k)).collect();
            assert_eq!(w, (0..len3(order)).collect::<Vec<_>>());
        }
    }

    #[test]
    fn small_binomials() {
        assert_eq!(binomial(5, 2), 10.0);
        assert_eq!(binomial(7, 0), 1.0);
        assert_eq!(binomial(3, 4), 0.0);
        assert_eq!(factorial(5), 120.0);
    }
}
