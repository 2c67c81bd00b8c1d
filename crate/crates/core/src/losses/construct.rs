//! Moving between losses, uncertainty functions and generators.
//!
//! - U ↦ ℓ: ℓ_i(α) = −α_i + (−U)*(α).
//! - (ℓ, π) ↦ f: f(t) = sup_α { U_ℓ(π) − Σ_{i<k} π_i t_i ℓ_i(α) − π_k ℓ_k(α) }.
//!   The supremum is U_ℓ(π) − W·U_ℓ(w/W) with w = (π₁t₁, …, π_{k−1}t_{k−1}, π_k)
//!   and W = Σ w, so every evaluation is one pointwise Bayes solve.
//! - f ↦ (U, ℓ): U(t) = −k·t_k·f(t₁/t_k, …), then U ↦ ℓ.

use std::sync::Arc;

use super::{make_loss, pointwise_bayes, LossFamily};
use crate::divergences::Generator;
use crate::error::{Error, Result};
use crate::uncertainty::{UncertaintyFn, UncertaintyKind};

/// The loss whose pointwise Bayes risk is U. Zero-one and entropy map to the
/// family-wise and logistic losses.
pub fn loss_from_uncertainty(u: UncertaintyFn) -> LossFamily {
    let k = u.k();
    match u.kind() {
        UncertaintyKind::ZeroOne => return make_loss("family-wise", k, None).expect("k ≥ 2"),
        UncertaintyKind::Entropy => return make_loss("logistic", k, None).expect("k ≥ 2"),
        _ => {}
    }
    // ℓ_i(α) ≥ −α_i + α_i + U(e_i).
    let lower = (0..k)
        .map(|i| {
            let mut e = vec![0.0; k];
            e[i] = 1.0;
            u.eval(&e)
        })
        .fold(f64::INFINITY, f64::min);
    LossFamily::conjugate_of(u, lower)
}

/// inf_α Σ w_i ℓ_i(α) for a nonnegative weight vector.
fn weighted_bayes(loss: &LossFamily, w: &[f64]) -> f64 {
    let total: f64 = w.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    let p: Vec<f64> = w.iter().map(|v| v / total).collect();
    total * pointwise_bayes(loss, &p).value
}

/// The generator of the gap between prior and posterior ℓ-risk at prior π.
pub fn generator_from_loss(loss: &LossFamily, pi: &[f64]) -> Result<Generator> {
    let k = loss.k();
    if pi.len() != k {
        return Err(Error::Dimension(format!("prior has {} entries, loss has k = {k}", pi.len())));
    }
    if pi.iter().any(|&p| !(p > 0.0)) {
        return Err(Error::InvalidArgument("prior must be strictly positive".into()));
    }
    if !loss.lower_bound().is_finite() {
        return Err(Error::UnboundedLoss);
    }
    let pi: Vec<f64> = pi.to_vec();
    let base = pointwise_bayes(loss, &pi).value;
    let l1 = Arc::new(loss.clone());
    let l2 = l1.clone();
    let p1 = Arc::new(pi);
    let p2 = p1.clone();
    let eval = move |t: &[f64]| {
        let mut w: Vec<f64> = t.iter().zip(p1.iter()).map(|(t, p)| t * p).collect();
        w.push(p1[k - 1]);
        base - weighted_bayes(&l1, &w)
    };
    let recession = move |d: &[f64]| {
        let mut w: Vec<f64> = d.iter().zip(p2.iter()).map(|(t, p)| t * p).collect();
        w.push(0.0);
        -weighted_bayes(&l2, &w)
    };
    Ok(Generator::custom(format!("from-{}", loss.tag()), k - 1, Arc::new(eval), Some(Arc::new(recession))))
}

/// U(t) = −k·t_k·f(t₁/t_k, …) and the loss built from it.
pub fn loss_from_generator(g: Generator) -> (UncertaintyFn, LossFamily) {
    let u = UncertaintyFn::from_generator(g);
    let loss = loss_from_uncertainty(u.clone());
    (u, loss)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::divergences::make_generator;

    #[test]
    fn zero_one_generator_examples() {
        let l = make_loss("zero-one", 2, None).unwrap();
        let g = generator_from_loss(&l, &[0.5, 0.5]).unwrap();
        assert_eq!(g.eval(&[1.0]), 0.0);
        assert_eq!(g.eval(&[0.0]), 0.5);
        assert_eq!(g.eval(&[3.0]), 0.0);
        // max{0, (1 − t)/2}
        for t in [0.2, 0.7, 1.5] {
            assert!((g.eval(&[t]) - ((1.0 - t) / 2.0).max(0.0)).abs() < 1e-15);
        }
    }

    #[test]
    fn logistic_generator_is_normalized_and_convex() {
        let l = make_loss("logistic", 2, None).unwrap();
        let g = generator_from_loss(&l, &[0.5, 0.5]).unwrap();
        assert!(g.eval(&[1.0]).abs() < 1e-12);
        for i in 0..40 {
            let (a, b) = (i as f64 * 0.1, i as f64 * 0.07 + 0.3);
            assert!(g.eval(&[(a + b) / 2.0]) <= (g.eval(&[a]) + g.eval(&[b])) / 2.0 + 1e-12);
        }
    }

    #[test]
    fn rejects_zero_prior_entry() {
        let l = make_loss("zero-one", 2, None).unwrap();
        assert!(generator_from_loss(&l, &[1.0, 0.0]).is_err());
    }

    #[test]
    fn tv_like_uncertainty_examples() {
        let g = Generator::custom("half-hinge", 1, Arc::new(|t: &[f64]| 0.5 * (1.0 - t[0]).max(0.0)), Some(Arc::new(|_: &[f64]| 0.0)));
        let (u, _) = loss_from_generator(g);
        assert!((u.eval(&[0.3, 0.7]) + 0.4).abs() < 1e-15);
        assert_eq!(u.eval(&[0.7, 0.3]), 0.0);
        let (u, _) = loss_from_generator(make_generator("kl", 3).unwrap());
        assert!(u.eval(&[1.0 / 3.0; 3]).abs() < 1e-15);
    }

    #[test]
    fn family_wise_from_zero_one_uncertainty() {
        let l = loss_from_uncertainty(UncertaintyFn::zero_one(3));
        assert_eq!(l.values(&[1.0, 0.0, 0.0]), vec![0.0, 1.0, 1.0]);
    }
}
