//! The PASM update equations as free functions over [`ParamVector`]s.

use crate::nn::ParamVector;
use crate::{Error, Result};

fn same_len(a: &ParamVector, b: &ParamVector, what: &str) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::dim(format!("{what}: lengths {} and {} differ", a.len(), b.len())));
    }
    Ok(())
}

/// Inexact primal step: `theta_k = theta_c - (lambda_k + g_k) / (rho + r_k)`.
pub fn pasm_local_update(
    theta_c: &ParamVector,
    lambda: &ParamVector,
    g: &ParamVector,
    rho: f64,
    r_k: f64,
) -> Result<ParamVector> {
    same_len(theta_c, lambda, "local update")?;
    same_len(theta_c, g, "local update")?;
    let denom = rho + r_k;
    if denom == 0.0 || !denom.is_finite() {
        return Err(Error::invalid(format!("rho + r_k must be nonzero and finite, got {denom}")));
    }
    Ok(ParamVector::from(
        theta_c.iter().zip(lambda.iter()).zip(g.iter()).map(|((t, l), g)| t - (l + g) / denom).collect::<Vec<_>>(),
    ))
}

/// Dual ascent: `lambda' = lambda + rho (theta_k - theta_c)`.
pub fn pasm_dual_update(
    lambda: &ParamVector,
    theta_k: &ParamVector,
    theta_c: &ParamVector,
    rho: f64,
) -> Result<ParamVector> {
    same_len(lambda, theta_k, "dual update")?;
    same_len(lambda, theta_c, "dual update")?;
    Ok(ParamVector::from(
        lambda.iter().zip(theta_k.iter()).zip(theta_c.iter()).map(|((l, t), c)| l + rho * (t - c)).collect::<Vec<_>>(),
    ))
}

/// Second-moment estimate: `v' = beta v + (1/K) sum_k (1 - beta) lambda_k ⊙ lambda_k`.
pub fn pasm_second_moment(v: &ParamVector, lambdas: &[ParamVector], beta: f64) -> Result<ParamVector> {
    if lambdas.is_empty() {
        return Err(Error::invalid("second moment needs at least one dual vector"));
    }
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::invalid(format!("beta must lie in (0, 1), got {beta}")));
    }
    for l in lambdas {
        same_len(v, l, "second moment")?;
    }
    let k = lambdas.len() as f64;
    let mut out = v.clone();
    out.scale(beta);
    for l in lambdas {
        for (o, x) in out.iter_mut().zip(l.iter()) {
            *o += (1.0 - beta) * x * x / k;
        }
    }
    Ok(out)
}

/// Upload: `u_k = theta_k + lambda_k ⊘ (rho (sqrt(v) + eps))`, elementwise.
pub fn pasm_upload(
    theta_k: &ParamVector,
    lambda: &ParamVector,
    v: &ParamVector,
    rho: f64,
    eps: f64,
) -> Result<ParamVector> {
    same_len(theta_k, lambda, "upload")?;
    same_len(theta_k, v, "upload")?;
    if !(eps > 0.0) {
        return Err(Error::invalid("epsilon must be positive"));
    }
    Ok(ParamVector::from(
        theta_k
            .iter()
            .zip(lambda.iter())
            .zip(v.iter())
            .map(|((t, l), v)| t + l / (rho * (v.sqrt() + eps)))
            .collect::<Vec<_>>(),
    ))
}

/// Elementwise mean of the uploads.
pub fn aggregate(uploads: &[ParamVector]) -> Result<ParamVector> {
    let first = uploads.first().ok_or_else(|| Error::invalid("cannot aggregate an empty set"))?;
    let mut sum = ParamVector::zeros(first.len());
    for u in uploads {
        same_len(first, u, "aggregate")?;
        sum.axpy(1.0, u);
    }
    sum.scale(1.0 / uploads.len() as f64);
    Ok(sum)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pv(v: &[f64]) -> ParamVector {
        ParamVector::from(v.to_vec())
    }

    #[test]
    fn local_update_cases() {
        let c = pv(&[0.3, -1.0]);
        assert_eq!(pasm_local_update(&c, &pv(&[0.0, 0.0]), &pv(&[0.0, 0.0]), 1000.0, 1.0).unwrap(), c);
        let t = pasm_local_update(&pv(&[0.0; 3]), &pv(&[0.0; 3]), &pv(&[0.5; 3]), 1000.0, 1.0).unwrap();
        for x in t.iter() {
            assert!((x + 4.995e-4).abs() < 1e-7);
            assert_eq!(*x, -0.5 / 1001.0);
        }
        let a = pasm_local_update(&c, &pv(&[0.2, 0.1]), &pv(&[0.4, -0.3]), 10.0, 1.0).unwrap();
        let b = pasm_local_update(&c, &pv(&[0.4, 0.2]), &pv(&[0.8, -0.6]), 10.0, 1.0).unwrap();
        for i in 0..2 {
            assert!(((b[i] - c[i]) - 2.0 * (a[i] - c[i])).abs() < 1e-15);
        }
        assert!(pasm_local_update(&c, &c, &c, 1.0, -1.0).is_err());
        assert!(pasm_local_update(&c, &pv(&[0.0]), &c, 1.0, 1.0).is_err());
    }

    #[test]
    fn dual_update_cases() {
        let l = pasm_dual_update(&pv(&[0.0]), &pv(&[-0.5 / 1001.0]), &pv(&[0.0]), 1000.0).unwrap();
        assert!((l[0] + 0.4995).abs() < 1e-4);
        assert_eq!(l[0], 1000.0 * (-0.5 / 1001.0));
        let same = pasm_dual_update(&pv(&[0.7, 1.0]), &pv(&[2.0, 3.0]), &pv(&[2.0, 3.0]), 50.0).unwrap();
        assert_eq!(same, pv(&[0.7, 1.0]));
    }

    #[test]
    fn dual_composition_identity() {
        // lambda' = alpha lambda - (1 - alpha) g with alpha = r / (rho + r)
        let (rho, r) = (37.0, 1.5);
        let alpha = r / (rho + r);
        let c = pv(&[0.1, -0.2, 0.3]);
        let l = pv(&[0.05, 0.4, -0.7]);
        let g = pv(&[-0.3, 0.9, 0.2]);
        let t = pasm_local_update(&c, &l, &g, rho, r).unwrap();
        let l2 = pasm_dual_update(&l, &t, &c, rho).unwrap();
        for i in 0..3 {
            assert!((l2[i] - (alpha * l[i] - (1.0 - alpha) * g[i])).abs() < 1e-12);
        }
    }

    #[test]
    fn second_moment_cases() {
        let v = pasm_second_moment(&pv(&[0.0]), &[pv(&[-0.4995])], 0.999).unwrap();
        assert!((v[0] - 2.4950e-4).abs() < 1e-8);
        let decay = pasm_second_moment(&pv(&[2.0, 4.0]), &[pv(&[0.0, 0.0]), pv(&[0.0, 0.0])], 0.9).unwrap();
        assert_eq!(decay, pv(&[1.8, 3.6]));
        assert!(pasm_second_moment(&pv(&[0.0]), &[], 0.9).is_err());
        assert!(pasm_second_moment(&pv(&[0.0]), &[pv(&[1.0])], 1.0).is_err());
    }

    #[test]
    fn upload_cases() {
        let u = pasm_upload(&pv(&[-4.995e-4]), &pv(&[-0.4995]), &pv(&[2.4950e-4]), 1000.0, 0.01).unwrap();
        assert!((u[0] + 1.9863e-2).abs() < 1e-5);
        let t = pv(&[0.3, -0.1]);
        assert_eq!(pasm_upload(&t, &pv(&[0.0, 0.0]), &pv(&[0.5, 0.5]), 10.0, 0.1).unwrap(), t);
        let mut last = f64::INFINITY;
        for v in [0.0, 0.01, 0.1, 1.0, 10.0] {
            let u = pasm_upload(&pv(&[0.0]), &pv(&[0.8]), &pv(&[v]), 10.0, 0.1).unwrap();
            assert!(u[0].abs() < last);
            last = u[0].abs();
        }
    }

    #[test]
    fn aggregate_cases() {
        let u = pv(&[1.5, -2.0]);
        assert_eq!(aggregate(std::slice::from_ref(&u)).unwrap(), u);
        assert_eq!(aggregate(&[pv(&[1.0, 1.0]), pv(&[3.0, 3.0])]).unwrap(), pv(&[2.0, 2.0]));
        let a = aggregate(&[pv(&[0.1, 0.7]), pv(&[0.2, -0.3]), pv(&[0.9, 0.4])]).unwrap();
        let b = aggregate(&[pv(&[0.9, 0.4]), pv(&[0.1, 0.7]), pv(&[0.2, -0.3])]).unwrap();
        for i in 0..2 {
            assert!((a[i] - b[i]).abs() < 1e-15);
        }
        assert!(aggregate(&[]).is_err());
        let same = aggregate(&vec![pv(&[0.25, 3.0]); 4]).unwrap();
        assert_eq!(same, pv(&[0.25, 3.0]));
    }
}
