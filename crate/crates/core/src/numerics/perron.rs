use super::{RMat, RVec};
use crate::{Error, Result};

/// Dominant eigenpair of an entrywise nonnegative matrix.
///
/// The eigenvalue is the largest-modulus root reported by a Schur
/// decomposition. The eigenvector is the projection of the all-ones vector
/// onto the numerical null space of `A - λI`, so repeated dominant
/// eigenvalues (e.g. the identity) yield a strictly positive vector when one
/// exists. The vector is normalized so its last entry is 1.
pub fn dominant_eig_nonneg(a: &RMat) -> Result<(f64, RVec)> {
    let n = a.nrows();
    if n == 0 || !a.is_square() {
        return Err(Error::DimensionMismatch("Perron matrix must be square and non-empty".into()));
    }
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("Perron matrix".into()));
    }
    if let Some(neg) = a.iter().find(|&&x| x < 0.0) {
        return Err(Error::Precondition(format!("matrix has negative entry {neg:e}")));
    }
    let eig = a.clone().complex_eigenvalues();
    let lambda = eig
        .iter()
        .max_by(|x, y| x.norm().total_cmp(&y.norm()))
        .map(|z| z.re)
        .unwrap_or(0.0);

    let shifted = a - RMat::identity(n, n) * lambda;
    let svd = shifted.svd(false, true);
    let vt = svd.v_t.expect("requested V^T");
    let sv = &svd.singular_values;
    let scale = a.norm().max(1.0);
    let tol = 1e-9 * scale;
    let mut null: Vec<usize> = (0..sv.len()).filter(|&i| sv[i] <= tol).collect();
    if null.is_empty() {
        let smallest = (0..sv.len()).min_by(|&i, &j| sv[i].total_cmp(&sv[j])).unwrap();
        null.push(smallest);
    }
    let ones = RVec::from_element(n, 1.0);
    let mut x = RVec::zeros(n);
    for &i in &null {
        let v = vt.row(i).transpose();
        x += &v * v.dot(&ones);
    }
    if x.norm() < 1e-12 {
        x = vt.row(null[0]).transpose();
    }
    let last = x[n - 1];
    if last.abs() < 1e-300 {
        return Err(Error::DegenerateEigenvector(0.0));
    }
    x /= last;
    let min = x.iter().cloned().fold(f64::INFINITY, f64::min);
    if min <= 1e-12 {
        return Err(Error::DegenerateEigenvector(min));
    }
    Ok((lambda, x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::SplitMix64;

    #[test]
    fn identity_has_positive_vector() {
        let (l, v) = dominant_eig_nonneg(&RMat::identity(2, 2)).unwrap();
        assert!((l - 1.0).abs() < 1e-14);
        assert!((v[0] - 1.0).abs() < 1e-12 && (v[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn two_by_two_fixture() {
        let a = RMat::from_row_slice(2, 2, &[0.5, 1.0, 1.0 / 3.0, 1.0 / 3.0]);
        let (l, v) = dominant_eig_nonneg(&a).unwrap();
        assert!((l - 1.0).abs() < 1e-13);
        assert!((v[0] - 2.0).abs() < 1e-12);
        assert_eq!(v[1], 1.0);
    }

    #[test]
    fn jordan_block_is_degenerate() {
        let a = RMat::from_row_slice(2, 2, &[1.0, 0.0, 1.0, 1.0]);
        assert!(matches!(dominant_eig_nonneg(&a), Err(Error::DegenerateEigenvector(_))));
    }

    #[test]
    fn matches_power_iteration() {
        let mut rng = SplitMix64::new(19);
        for n in 1..6 {
            let a = RMat::from_fn(n, n, |_, _| rng.next_f64() + 0.01);
            let (l, v) = dominant_eig_nonneg(&a).unwrap();
            let mut x = RVec::from_element(n, 1.0);
            let mut lp = 0.0;
            for _ in 0..2000 {
                let y = &a * &x;
                lp = y[n - 1] / x[n - 1];
                x = &y / y[n - 1];
            }
            assert!((l - lp).abs() < 1e-10 * lp.max(1.0));
            assert!((&v - &x).norm() < 1e-8 * x.norm());
        }
    }
}
