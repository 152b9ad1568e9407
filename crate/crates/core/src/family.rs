//! Built-in reference families with closed-form projections p̃, the
//! divergence Λ from the family, and the latent divergence D(κ·p‖κ·p̃).

use crate::error::{Error, Result};
use crate::prob::{
    kl_divergence, product_labels, pushforward, tensor_dists, Channel, Distribution, Joint,
    MassVector,
};

/// Reference family with a closed-form projection.
///
/// `Ce` and `Iib` require p to live on the flattened product alphabet of the
/// given factor alphabets (x-major). `Custom` carries a precomputed
/// reference distribution; iterative-scaling projections are out of scope.
#[derive(Clone, Debug, PartialEq)]
pub enum HierarchicalModel {
    /// Conditional-entropy family {r(X) ⊗ U(Y)}: p̃ = p(X) ⊗ U(Y).
    Ce {
        x_labels: Vec<String>,
        y_labels: Vec<String>,
    },
    /// Single uniform distribution: p̃ = U(A).
    Di,
    /// Independence family {r(X) ⊗ s(Y)}: p̃ = p(X) ⊗ p(Y).
    Iib {
        x_labels: Vec<String>,
        y_labels: Vec<String>,
    },
    /// User-supplied reference distribution.
    Custom(Distribution),
}

/// Reassemble a joint from a distribution on a flattened product alphabet.
pub fn joint_from_flat(p: &Distribution, x_labels: &[String], y_labels: &[String]) -> Result<Joint> {
    let expected = product_labels(x_labels, y_labels);
    if p.labels() != expected.as_slice() {
        return Err(Error::IncompatibleAlphabet(
            "distribution labels are not the x-major product of the factor alphabets".into(),
        ));
    }
    let ny = y_labels.len();
    let rows = p
        .probs()
        .chunks(ny)
        .map(|c| c.to_vec())
        .collect::<Vec<_>>();
    Joint::new(x_labels.to_vec(), y_labels.to_vec(), rows)
}

/// Closed-form projection of p onto the family.
pub fn project_to_family(model: &HierarchicalModel, p: &Distribution) -> Result<Distribution> {
    let ptilde = match model {
        HierarchicalModel::Ce { x_labels, y_labels } => {
            let j = joint_from_flat(p, x_labels, y_labels)?;
            let uy = Distribution::uniform(y_labels.clone())?;
            tensor_dists(&j.x_marginal(), &uy)
        }
        HierarchicalModel::Di => Distribution::uniform(p.labels().to_vec())?,
        HierarchicalModel::Iib { x_labels, y_labels } => {
            let j = joint_from_flat(p, x_labels, y_labels)?;
            tensor_dists(&j.x_marginal(), &j.y_marginal())
        }
        HierarchicalModel::Custom(ptilde) => {
            if ptilde.labels() != p.labels() {
                return Err(Error::IncompatibleAlphabet(
                    "custom reference lives on a different alphabet".into(),
                ));
            }
            ptilde.clone()
        }
    };
    for i in 0..p.len() {
        if p.probs()[i] > 0.0 && ptilde.probs()[i] <= 0.0 {
            return Err(Error::CustomSupportViolation(p.labels()[i].clone()));
        }
    }
    Ok(ptilde)
}

/// Λ = D(p ‖ p̃): the maximum preservable divergence.
pub fn divergence_from_family(p: &Distribution, model: &HierarchicalModel) -> Result<f64> {
    let ptilde = project_to_family(model, p)?;
    kl_divergence(p, &ptilde)
}

/// D(κ·p ‖ κ·p̃): divergence surviving compression through κ.
pub fn latent_divergence<Q: MassVector>(kappa: &Channel, p: &Distribution, ptilde: &Q) -> Result<f64> {
    if ptilde.labels() != p.labels() {
        return Err(Error::LabelMismatch(
            "latent divergence: p and p̃ on different alphabets".into(),
        ));
    }
    let qp = pushforward(kappa, p)?;
    let qt = crate::prob::push_mass(kappa, ptilde.mass());
    crate::prob::kl_mass(qp.probs(), &qt)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labs(names: &[&str]) -> Vec<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    fn dist(names: &[&str], p: &[f64]) -> Distribution {
        Distribution::new(labs(names), p.to_vec()).unwrap()
    }

    fn ce_joint() -> Joint {
        Joint::new(
            labs(&["x0", "x1"]),
            labs(&["y0", "y1"]),
            vec![vec![0.35, 0.15], vec![0.15, 0.35]],
        )
        .unwrap()
    }

    #[test]
    fn di_projection_is_uniform() {
        let p = dist(&["a", "b", "c", "d"], &[0.4, 0.4, 0.1, 0.1]);
        let pt = project_to_family(&HierarchicalModel::Di, &p).unwrap();
        assert_eq!(pt.probs(), &[0.25, 0.25, 0.25, 0.25]);
        let lam = divergence_from_family(&p, &HierarchicalModel::Di).unwrap();
        assert!((lam - 0.1927448).abs() < 1e-7);
        let u = Distribution::uniform(labs(&["a", "b"])).unwrap();
        assert_eq!(divergence_from_family(&u, &HierarchicalModel::Di).unwrap(), 0.0);
    }

    #[test]
    fn ce_projection_of_symmetric_joint_is_uniform() {
        let j = ce_joint();
        let model = HierarchicalModel::Ce {
            x_labels: labs(&["x0", "x1"]),
            y_labels: labs(&["y0", "y1"]),
        };
        let pt = project_to_family(&model, &j.flatten()).unwrap();
        for &v in pt.probs() {
            assert!((v - 0.25).abs() < 1e-15);
        }
        // Λ_ce = I(X;Y) here since p(Y) is uniform
        let lam = divergence_from_family(&j.flatten(), &model).unwrap();
        assert!((lam - 0.0822829).abs() < 1e-7, "got {lam}");
    }

    #[test]
    fn iib_projection_of_product_joint_is_itself() {
        let px = dist(&["x0", "x1"], &[0.3, 0.7]);
        let py = dist(&["y0", "y1", "y2"], &[0.2, 0.5, 0.3]);
        let p = tensor_dists(&px, &py);
        let model = HierarchicalModel::Iib {
            x_labels: labs(&["x0", "x1"]),
            y_labels: labs(&["y0", "y1", "y2"]),
        };
        let pt = project_to_family(&model, &p).unwrap();
        for (a, b) in pt.probs().iter().zip(p.probs()) {
            assert!((a - b).abs() < 1e-14);
        }
        assert!(divergence_from_family(&p, &model).unwrap().abs() < 1e-12);
    }

    #[test]
    fn wrong_alphabet_rejected() {
        let p = dist(&["a", "b", "c"], &[0.5, 0.3, 0.2]);
        let model = HierarchicalModel::Ce {
            x_labels: labs(&["x0", "x1"]),
            y_labels: labs(&["y0", "y1"]),
        };
        assert!(matches!(
            project_to_family(&model, &p),
            Err(Error::IncompatibleAlphabet(_))
        ));
    }

    #[test]
    fn custom_support_violation() {
        let p = dist(&["a", "b"], &[0.5, 0.5]);
        let bad = dist(&["a", "b"], &[1.0, 0.0]);
        assert!(matches!(
            project_to_family(&HierarchicalModel::Custom(bad), &p),
            Err(Error::CustomSupportViolation(_))
        ));
    }

    #[test]
    fn latent_divergence_examples() {
        let p = dist(&["a", "b", "c", "d"], &[0.4, 0.4, 0.1, 0.1]);
        let u = Distribution::uniform(labs(&["a", "b", "c", "d"])).unwrap();

        // constant encoder destroys everything
        let constant = Channel::constant(
            labs(&["a", "b", "c", "d"]),
            &dist(&["t0", "t1"], &[0.5, 0.5]),
        )
        .unwrap();
        assert!(latent_divergence(&constant, &p, &u).unwrap().abs() < 1e-15);

        // identity preserves Λ
        let id = Channel::identity(labs(&["a", "b", "c", "d"])).unwrap();
        let d = latent_divergence(&id, &p, &u).unwrap();
        assert!((d - 0.1927448).abs() < 1e-7);

        // projection onto the ratio cells preserves Λ as well
        let part = crate::partition::Partition::new(
            labs(&["a", "b", "c", "d"]),
            vec![vec![0, 1], vec![2, 3]],
        )
        .unwrap();
        let proj = crate::partition::projection_channel(&part);
        let d = latent_divergence(&proj, &p, &u).unwrap();
        assert!((d - 0.1927448).abs() < 1e-7, "got {d}");
    }
}
