use super::{RMat, RVec};
use crate::{Error, Result};

/// Minimize `zᵀg + ½ zᵀJz` subject to `λ + z ≥ 0` for symmetric positive
/// definite `J`.
///
/// Substituting `y = λ + z` gives a bound-constrained QP in `y ≥ 0`, solved
/// with a Lawson–Hanson style active-set method.
pub fn solve_qp_nonneg(g: &RVec, j: &RMat, lambda: &RVec) -> Result<RVec> {
    let n = g.len();
    check_shapes(g, j, lambda)?;
    let c = g - j * lambda;
    let scale = c.amax().max(j.amax()).max(1.0);
    let tol = 1e-13 * scale;

    let mut y = RVec::zeros(n);
    let mut passive = vec![false; n];
    for _outer in 0..(10 * n + 20) {
        let w = -(j * &y + &c);
        let pick = (0..n)
            .filter(|&i| !passive[i] && w[i] > tol)
            .max_by(|&a, &b| w[a].total_cmp(&w[b]));
        let Some(i) = pick else {
            return Ok(y - lambda);
        };
        passive[i] = true;
        for _inner in 0..(n + 5) {
            let s = subspace_solve(j, &c, &passive)?;
            if (0..n).all(|k| !passive[k] || s[k] > 0.0) {
                y = s;
                break;
            }
            let mut alpha = f64::INFINITY;
            for k in 0..n {
                if passive[k] && s[k] <= 0.0 {
                    let denom = y[k] - s[k];
                    let a = if denom > 0.0 { y[k] / denom } else { 0.0 };
                    alpha = alpha.min(a);
                }
            }
            y += (&s - &y) * alpha;
            for k in 0..n {
                if passive[k] && y[k] <= tol {
                    passive[k] = false;
                    y[k] = 0.0;
                }
            }
        }
    }
    Err(Error::Subproblem("active-set QP did not terminate".into()))
}

/// Exhaustive reference solver: tries every free set and keeps the KKT point.
pub fn solve_qp_nonneg_enumerate(g: &RVec, j: &RMat, lambda: &RVec) -> Result<RVec> {
    let n = g.len();
    check_shapes(g, j, lambda)?;
    if n > 16 {
        return Err(Error::Precondition("enumeration limited to 16 variables".into()));
    }
    let c = g - j * lambda;
    let tol = 1e-10 * c.amax().max(j.amax()).max(1.0);
    let mut best: Option<(f64, RVec)> = None;
    for mask in 0u32..(1 << n) {
        let free: Vec<bool> = (0..n).map(|i| mask & (1 << i) != 0).collect();
        let Ok(y) = subspace_solve(j, &c, &free) else { continue };
        if y.iter().any(|&v| v < -tol) {
            continue;
        }
        let grad = j * &y + &c;
        if (0..n).any(|i| !free[i] && grad[i] < -tol) {
            continue;
        }
        let obj = c.dot(&y) + 0.5 * y.dot(&(j * &y));
        if best.as_ref().map_or(true, |(b, _)| obj < *b) {
            best = Some((obj, y));
        }
    }
    best.map(|(_, y)| y - lambda)
        .ok_or_else(|| Error::Subproblem("no KKT point found".into()))
}

fn check_shapes(g: &RVec, j: &RMat, lambda: &RVec) -> Result<()> {
    let n = g.len();
    if j.shape() != (n, n) || lambda.len() != n {
        return Err(Error::DimensionMismatch("QP dimensions disagree".into()));
    }
    Ok(())
}

/// Solve J_PP y_P = -c_P with zeros off the free set.
fn subspace_solve(j: &RMat, c: &RVec, free: &[bool]) -> Result<RVec> {
    let idx: Vec<usize> = (0..free.len()).filter(|&i| free[i]).collect();
    let mut y = RVec::zeros(free.len());
    if idx.is_empty() {
        return Ok(y);
    }
    let sub = RMat::from_fn(idx.len(), idx.len(), |a, b| j[(idx[a], idx[b])]);
    let rhs = RVec::from_fn(idx.len(), |a, _| -c[idx[a]]);
    let sol = sub
        .cholesky()
        .ok_or(Error::Subproblem("QP Hessian block not positive definite".into()))?
        .solve(&rhs);
    for (a, &i) in idx.iter().enumerate() {
        y[i] = sol[a];
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::SplitMix64;

    #[test]
    fn unconstrained_interior() {
        let j = RMat::identity(2, 2);
        let g = RVec::from_vec(vec![1.0, -1.0]);
        let lam = RVec::from_vec(vec![5.0, 5.0]);
        let z = solve_qp_nonneg(&g, &j, &lam).unwrap();
        assert!((z[0] + 1.0).abs() < 1e-14 && (z[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn bound_becomes_active() {
        let j = RMat::identity(1, 1);
        let z = solve_qp_nonneg(&RVec::from_vec(vec![3.0]), &j, &RVec::from_vec(vec![1.0])).unwrap();
        assert!((z[0] + 1.0).abs() < 1e-14);
    }

    #[test]
    fn agrees_with_enumeration() {
        let mut rng = SplitMix64::new(23);
        for n in 1..=3 {
            for _ in 0..200 {
                let a = RMat::from_fn(n, n, |_, _| rng.next_f64() - 0.5);
                let j = &a * a.transpose() + RMat::identity(n, n) * 0.1;
                let g = RVec::from_fn(n, |_, _| 4.0 * rng.next_f64() - 2.0);
                let lam = RVec::from_fn(n, |_, _| rng.next_f64());
                let z1 = solve_qp_nonneg(&g, &j, &lam).unwrap();
                let z2 = solve_qp_nonneg_enumerate(&g, &j, &lam).unwrap();
                assert!((&z1 - &z2).norm() < 1e-9, "{z1} vs {z2}");
            }
        }
    }
}
