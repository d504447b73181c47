//! Pearson, Spearman and Kendall tau-b with two-tailed p-values.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::special;
use crate::error::{Error, Result};
use crate::num::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationResult<T> {
    pub coefficient: T,
    pub p_value: T,
    pub n: usize,
}

impl<T: Scalar> CorrelationResult<T> {
    pub fn marker(&self) -> &'static str {
        significance_marker(self.p_value)
    }
}

/// `**` for p < 0.001, `*` for p < 0.05, empty otherwise.
pub fn significance_marker<T: Scalar>(p: T) -> &'static str {
    if p < T::lit(0.001) {
        "**"
    } else if p < T::lit(0.05) {
        "*"
    } else {
        ""
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrelationKind {
    Pearson,
    Spearman,
    Kendall,
}

impl CorrelationKind {
    pub const ALL: [CorrelationKind; 3] = [
        CorrelationKind::Pearson,
        CorrelationKind::Spearman,
        CorrelationKind::Kendall,
    ];

    pub fn min_n(self) -> usize {
        match self {
            CorrelationKind::Kendall => 2,
            _ => 3,
        }
    }
}

impl fmt::Display for CorrelationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CorrelationKind::Pearson => "pearson",
            CorrelationKind::Spearman => "spearman",
            CorrelationKind::Kendall => "kendall",
        })
    }
}

pub fn correlate<T: Scalar>(kind: CorrelationKind, xs: &[T], ys: &[T]) -> Result<CorrelationResult<T>> {
    match kind {
        CorrelationKind::Pearson => pearson(xs, ys),
        CorrelationKind::Spearman => spearman(xs, ys),
        CorrelationKind::Kendall => kendall(xs, ys),
    }
}

/// A correlation that may be undefined for the data at hand (too few points,
/// zero variance). Reports carry these instead of failing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum CorrelationCell<T> {
    Defined(CorrelationResult<T>),
    Undefined { reason: String },
}

impl<T: Scalar> CorrelationCell<T> {
    pub fn compute(kind: CorrelationKind, xs: &[T], ys: &[T]) -> Self {
        if xs.len() < kind.min_n() {
            return CorrelationCell::Undefined {
                reason: format!("n={} below {}", xs.len(), kind.min_n()),
            };
        }
        match correlate(kind, xs, ys) {
            Ok(r) => CorrelationCell::Defined(r),
            Err(e) => CorrelationCell::Undefined { reason: e.to_string() },
        }
    }

    pub fn defined(&self) -> Option<&CorrelationResult<T>> {
        match self {
            CorrelationCell::Defined(r) => Some(r),
            CorrelationCell::Undefined { .. } => None,
        }
    }

    /// `0.470**` style, `-` when undefined.
    pub fn render(&self) -> String {
        match self {
            CorrelationCell::Defined(r) => format!("{:.3}{}", r.coefficient, r.marker()),
            CorrelationCell::Undefined { .. } => "-".to_string(),
        }
    }
}

fn check_inputs<T: Scalar>(xs: &[T], ys: &[T], min_n: usize) -> Result<()> {
    if xs.len() != ys.len() {
        return Err(Error::Contract(format!(
            "samples differ in length: {} vs {}",
            xs.len(),
            ys.len()
        )));
    }
    if xs.len() < min_n {
        return Err(Error::Contract(format!(
            "need at least {min_n} observations, got {}",
            xs.len()
        )));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(Error::Contract("non-finite observation".into()));
    }
    Ok(())
}

fn is_constant<T: Scalar>(v: &[T]) -> bool {
    v.iter().all(|&x| x == v[0])
}

/// p-values are reported in (0, 1]; an exact-zero tail is floored to the
/// smallest positive normal value.
fn clamp_p<T: Scalar>(p: T) -> T {
    p.max(T::min_positive_value()).min(T::one())
}

/// Sample Pearson coefficient with a t-test p-value on n − 2 degrees of
/// freedom.
pub fn pearson<T: Scalar>(xs: &[T], ys: &[T]) -> Result<CorrelationResult<T>> {
    check_inputs(xs, ys, 3)?;
    if is_constant(xs) || is_constant(ys) {
        return Err(Error::DegenerateInput("zero variance".into()));
    }
    let n = xs.len();
    let nt = T::from_count(n);
    let mx = xs.iter().fold(T::zero(), |a, &v| a + v) / nt;
    let my = ys.iter().fold(T::zero(), |a, &v| a + v) / nt;
    let (mut sxx, mut syy, mut sxy) = (T::zero(), T::zero(), T::zero());
    for (&x, &y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxx = sxx + dx * dx;
        syy = syy + dy * dy;
        sxy = sxy + dx * dy;
    }
    if sxx <= T::zero() || syy <= T::zero() {
        return Err(Error::DegenerateInput("zero variance".into()));
    }
    let r = (sxy / (sxx * syy).sqrt()).max(-T::one()).min(T::one());
    Ok(CorrelationResult {
        coefficient: r,
        p_value: r_p_value(r, n),
        n,
    })
}

fn r_p_value<T: Scalar>(r: T, n: usize) -> T {
    let df = T::from_count(n - 2);
    let one_minus = (T::one() - r) * (T::one() + r);
    let t = if one_minus <= T::zero() {
        T::infinity()
    } else {
        r * (df / one_minus).sqrt()
    };
    clamp_p(special::student_t_two_tailed(t, df))
}

/// Fractional ranks (1-based, ties share their average rank).
pub fn fractional_ranks<T: Scalar>(v: &[T]) -> Vec<T> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].partial_cmp(&v[b]).unwrap_or(Ordering::Equal));
    let mut ranks = vec![T::zero(); v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i + 1;
        while j < idx.len() && v[idx[j]] == v[idx[i]] {
            j += 1;
        }
        // ranks i+1 ..= j averaged
        let avg = T::from_count(i + 1 + j) / T::lit(2.0);
        for &k in &idx[i..j] {
            ranks[k] = avg;
        }
        i = j;
    }
    ranks
}

/// Pearson on fractional ranks; p-value as for [`pearson`].
pub fn spearman<T: Scalar>(xs: &[T], ys: &[T]) -> Result<CorrelationResult<T>> {
    check_inputs(xs, ys, 3)?;
    pearson(&fractional_ranks(xs), &fractional_ranks(ys))
}

/// Kendall tau-b, `(C − D) / sqrt((n0 − n1)(n0 − n2))`, with the p-value
/// from the normal approximation of C − D under independence (tie-corrected
/// variance).
///
/// Counts pairs in O(n log n): sort by (x, y), then count the discordant
/// pairs as merge-sort exchanges on y.
pub fn kendall<T: Scalar>(xs: &[T], ys: &[T]) -> Result<CorrelationResult<T>> {
    check_inputs(xs, ys, 2)?;
    let n = xs.len();
    let mut pairs: Vec<(T, T)> = xs.iter().copied().zip(ys.iter().copied()).collect();
    pairs.sort_by(|a, b| {
        a.0.partial_cmp(&b.0)
            .unwrap_or(Ordering::Equal)
            .then(a.1.partial_cmp(&b.1).unwrap_or(Ordering::Equal))
    });

    let x_ties = tie_groups(pairs.iter().map(|p| p.0));
    let xy_ties = tie_groups_by(&pairs, |a, b| a == b);

    let mut ys_sorted: Vec<T> = pairs.iter().map(|p| p.1).collect();
    let mut buf = ys_sorted.clone();
    let swaps = merge_count(&mut ys_sorted, &mut buf);
    let y_ties = tie_groups(ys_sorted.iter().copied());

    let n0 = pair_count(n as u64);
    let n1: u64 = x_ties.iter().map(|&t| pair_count(t)).sum();
    let n2: u64 = y_ties.iter().map(|&t| pair_count(t)).sum();
    let n3: u64 = xy_ties.iter().map(|&t| pair_count(t)).sum();

    if n1 == n0 || n2 == n0 {
        return Err(Error::DegenerateInput("all values tied".into()));
    }
    // C - D over pairs tied in neither variable
    let s = n0 as i128 - n1 as i128 - n2 as i128 + n3 as i128 - 2 * swaps as i128;
    let s_t = T::from_i128(s).expect("pair count fits scalar");
    let denom = (T::from_u64(n0 - n1).unwrap() * T::from_u64(n0 - n2).unwrap()).sqrt();
    let tau = (s_t / denom).max(-T::one()).min(T::one());

    let var = kendall_variance::<T>(n as u64, &x_ties, &y_ties);
    let z = s_t / var.sqrt();
    Ok(CorrelationResult {
        coefficient: tau,
        p_value: clamp_p(special::normal_two_tailed(z)),
        n,
    })
}

fn pair_count(t: u64) -> u64 {
    t * t.saturating_sub(1) / 2
}

fn tie_groups<T: Scalar>(sorted: impl Iterator<Item = T>) -> Vec<u64> {
    let mut out = Vec::new();
    let mut prev: Option<T> = None;
    let mut run = 0u64;
    for v in sorted {
        if prev == Some(v) {
            run += 1;
        } else {
            if run > 1 {
                out.push(run);
            }
            run = 1;
            prev = Some(v);
        }
    }
    if run > 1 {
        out.push(run);
    }
    out
}

fn tie_groups_by<P>(sorted: &[P], eq: impl Fn(&P, &P) -> bool) -> Vec<u64> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i + 1;
        while j < sorted.len() && eq(&sorted[i], &sorted[j]) {
            j += 1;
        }
        if j - i > 1 {
            out.push((j - i) as u64);
        }
        i = j;
    }
    out
}

/// Stable merge sort of `v`, returning the number of exchanges (strict
/// inversions).
fn merge_count<T: Scalar>(v: &mut [T], buf: &mut [T]) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = {
        let (l, r) = v.split_at_mut(mid);
        let (bl, br) = buf.split_at_mut(mid);
        merge_count(l, bl) + merge_count(r, br)
    };
    let (mut i, mut j, mut k) = (0, mid, 0);
    while i < mid && j < n {
        if v[j] < v[i] {
            buf[k] = v[j];
            swaps += (mid - i) as u64;
            j += 1;
        } else {
            buf[k] = v[i];
            i += 1;
        }
        k += 1;
    }
    buf[k..k + (mid - i)].copy_from_slice(&v[i..mid]);
    k += mid - i;
    buf[k..k + (n - j)].copy_from_slice(&v[j..n]);
    v.copy_from_slice(&buf[..n]);
    swaps
}

/// Variance of C − D under independence with ties in both variables.
fn kendall_variance<T: Scalar>(n: u64, x_ties: &[u64], y_ties: &[u64]) -> T {
    let f = |v: u64| T::from_u64(v).expect("count fits scalar");
    let sum_t = |ties: &[u64], g: &dyn Fn(u64) -> u64| ties.iter().map(|&t| f(g(t))).fold(T::zero(), |a, b| a + b);
    let nt = f(n);
    let v0 = nt * (nt - T::one()) * (T::lit(2.0) * nt + T::lit(5.0));
    let w = |t: u64| t * (t - 1) * (2 * t + 5);
    let vt = sum_t(x_ties, &w);
    let vu = sum_t(y_ties, &w);
    let p2 = |t: u64| t * (t - 1);
    let p3 = |t: u64| t * (t - 1) * t.saturating_sub(2);
    let v1 = sum_t(x_ties, &p2) * sum_t(y_ties, &p2) / (T::lit(2.0) * nt * (nt - T::one()));
    let v2 = if n > 2 {
        sum_t(x_ties, &p3) * sum_t(y_ties, &p3) / (T::lit(9.0) * nt * (nt - T::one()) * (nt - T::lit(2.0)))
    } else {
        T::zero()
    };
    (v0 - vt - vu) / T::lit(18.0) + v1 + v2
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pearson_closed_forms() {
        let r = pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap();
        assert_eq!(r.coefficient, 1.0);
        assert_eq!(r.n, 3);
        assert!(r.p_value > 0.0 && r.p_value < 1e-300);
        assert_eq!(pearson(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap().coefficient, -1.0);
    }

    #[test]
    fn pearson_regression_value() {
        // 0.8 = 4 / sqrt(5 * 5), oracle by hand; p from scipy.stats.pearsonr
        let r = pearson(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap();
        assert!((r.coefficient - 0.8f64).abs() < 1e-15);
        assert!((r.p_value - 0.200_000_000_000_000_18f64).abs() < 1e-12);
    }

    #[test]
    fn pearson_errors() {
        assert!(matches!(
            pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]),
            Err(Error::DegenerateInput(_))
        ));
        assert!(matches!(pearson(&[1.0, 2.0], &[1.0, 2.0]), Err(Error::Contract(_))));
        assert!(matches!(
            pearson(&[1.0, 2.0, 3.0], &[1.0, 2.0]),
            Err(Error::Contract(_))
        ));
        assert!(pearson(&[1.0, f64::NAN, 3.0], &[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn ranks_with_ties() {
        assert_eq!(fractional_ranks(&[10.0, 20.0, 20.0, 5.0]), vec![2.0, 3.5, 3.5, 1.0]);
    }

    #[test]
    fn spearman_monotone() {
        let xs = [1.0, 2.0, 3.0, 4.0, 5.0];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| x.powi(3) + 7.0).collect();
        assert_eq!(spearman(&xs, &ys).unwrap().coefficient, 1.0);
        let rev: Vec<f64> = ys.iter().rev().copied().collect();
        assert_eq!(spearman(&xs, &rev).unwrap().coefficient, -1.0);
    }

    #[test]
    fn kendall_examples() {
        let k = kendall(&[1.0, 2.0, 3.0], &[1.0, 3.0, 2.0]).unwrap();
        assert!((k.coefficient - 1.0f64 / 3.0).abs() < 1e-15);
        assert_eq!(
            kendall(&[1.0, 2.0, 3.0, 4.0], &[2.0, 3.0, 5.0, 9.0])
                .unwrap()
                .coefficient,
            1.0
        );
        assert!(matches!(
            kendall(&[1.0, 1.0], &[1.0, 2.0]),
            Err(Error::DegenerateInput(_))
        ));
        let two = kendall(&[1.0, 2.0], &[2.0, 1.0]).unwrap();
        assert_eq!(two.coefficient, -1.0);
    }

    #[test]
    fn kendall_with_ties_matches_scipy() {
        // scipy.stats.kendalltau(x, y, method="asymptotic")
        let x = [1.0, 2.0, 2.0, 3.0, 4.0, 4.0, 5.0];
        let y = [2.0, 1.0, 3.0, 3.0, 5.0, 4.0, 4.0];
        let k = kendall(&x, &y).unwrap();
        assert!((k.coefficient - KENDALL_TIES_TAU).abs() < 1e-12);
        assert!((k.p_value - KENDALL_TIES_P).abs() < 1e-12);
    }

    const KENDALL_TIES_TAU: f64 = 0.684_210_526_315_789_4;
    const KENDALL_TIES_P: f64 = 0.041_136_383_569_940_586;

    #[test]
    fn markers() {
        assert_eq!(significance_marker(0.0005f64), "**");
        assert_eq!(significance_marker(0.001f64), "*");
        assert_eq!(significance_marker(0.049f64), "*");
        assert_eq!(significance_marker(0.05f64), "");
    }

    #[test]
    fn cells() {
        let c = CorrelationCell::compute(CorrelationKind::Pearson, &[1.0f64, 2.0], &[1.0, 2.0]);
        assert!(c.defined().is_none());
        assert_eq!(c.render(), "-");
    }

    #[test]
    fn f32_path() {
        let r = pearson(&[1.0f32, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap();
        assert!((r.coefficient - 0.8).abs() < 1e-6);
    }
}
