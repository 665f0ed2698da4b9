//! Small dense-vector helpers. Products accumulate in `f64`.

/// Inner product of two equally sized rows.
#[inline]
pub fn dot(a: &[f32], b: &[f32]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(&x, &y)| f64::from(x) * f64::from(y))
        .sum()
}

#[inline]
pub fn norm(a: &[f32]) -> f64 {
    libm::sqrt(dot(a, a))
}

/// Cosine similarity. Bitwise-identical rows give exactly `1.0`; a zero row
/// gives `0.0`.
pub fn cosine(a: &[f32], b: &[f32]) -> f64 {
    if a == b && a.iter().any(|&x| x != 0.0) {
        return 1.0;
    }
    let denom = norm(a) * norm(b);
    if denom == 0.0 {
        return 0.0;
    }
    (dot(a, b) / denom).clamp(-1.0, 1.0)
}

/// L2-normalizes `v` in place. Returns `false` (leaving `v` untouched) when the
/// norm is zero or not finite.
pub fn normalize_f64(v: &mut [f64]) -> bool {
    let n = libm::sqrt(v.iter().map(|x| x * x).sum::<f64>());
    if n == 0.0 || !n.is_finite() {
        return false;
    }
    v.iter_mut().for_each(|x| *x /= n);
    true
}
