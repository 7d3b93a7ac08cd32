//! Per-example gradients of `E_ijk = ℓ(θ_ijk) + λ_A‖a_i‖² + λ_B‖b_j‖² + λ_C‖c_k‖²`
//! and the fused in-place SGD step used by the trainer.
//!
//! In binarized mode the loss term sees `Q_Δ` of each row and the quantizer's
//! derivative is taken as the identity (straight-through), so the loss part
//! of the gradient uses the binarized companion rows while the regularizer
//! acts on the real rows.

use crate::dense::{dot3, DenseFactors};
use crate::error::Result;
use crate::kg::Triple;
use crate::quantize::quantized_bit;
use crate::train::loss::{logistic_loss, loss_slope};

/// L2 weights for the subject, object and relation rows.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Lambdas {
    pub subject: f64,
    pub object: f64,
    pub relation: f64,
}

impl Lambdas {
    pub const fn uniform(l: f64) -> Self {
        Lambdas {
            subject: l,
            object: l,
            relation: l,
        }
    }
}

/// Gradients with respect to `a_i:`, `b_j:` and `c_k:`.
#[derive(Debug, Clone, PartialEq)]
pub struct RowGradients {
    pub subject: Vec<f64>,
    pub object: Vec<f64>,
    pub relation: Vec<f64>,
}

/// Gradient of the dense objective for one labeled example.
pub fn grad_rows_dense(
    factors: &DenseFactors,
    t: Triple,
    label: f64,
    lambdas: Lambdas,
) -> Result<RowGradients> {
    factors.check_triple(t)?;
    let (a, b, c) = rows(factors, t);
    let slope = loss_slope(dot3(a, b, c), label);
    Ok(assemble(slope, a, b, c, a, b, c, lambdas))
}

/// Straight-through gradient of the binarized objective for one example.
pub fn grad_rows_bcp(
    factors: &DenseFactors,
    t: Triple,
    label: f64,
    delta: f64,
    lambdas: Lambdas,
) -> Result<RowGradients> {
    factors.check_triple(t)?;
    crate::packed::check_delta(delta)?;
    let (a, b, c) = rows(factors, t);
    let q = |row: &[f32]| -> Vec<f32> {
        let d = delta as f32;
        row.iter()
            .map(|&x| if quantized_bit(x) { d } else { -d })
            .collect()
    };
    let (qa, qb, qc) = (q(a), q(b), q(c));
    let slope = loss_slope(binarized_theta(a, b, c, delta), label);
    Ok(assemble(slope, &qa, &qb, &qc, a, b, c, lambdas))
}

/// `θ^(b) = Δ³ Σ_d sign(a_d) sign(b_d) sign(c_d)` with `sign(0) = +1`.
#[inline]
pub fn binarized_theta(a: &[f32], b: &[f32], c: &[f32], delta: f64) -> f64 {
    let agree = a
        .iter()
        .zip(b)
        .zip(c)
        .filter(|((&x, &y), &z)| quantized_bit(x) ^ quantized_bit(y) ^ quantized_bit(z))
        .count();
    // product sign is + iff an odd number of the three bits are set
    let dim = a.len() as f64;
    delta * delta * delta * (2.0 * agree as f64 - dim)
}

fn rows(f: &DenseFactors, t: Triple) -> (&[f32], &[f32], &[f32]) {
    (
        f.subjects.row(t.subject as usize),
        f.objects.row(t.object as usize),
        f.relations.row(t.relation as usize),
    )
}

#[allow(clippy::too_many_arguments)]
fn assemble(
    slope: f64,
    la: &[f32],
    lb: &[f32],
    lc: &[f32],
    a: &[f32],
    b: &[f32],
    c: &[f32],
    lambdas: Lambdas,
) -> RowGradients {
    let f = |x: f32| x as f64;
    let dim = a.len();
    let mut g = RowGradients {
        subject: Vec::with_capacity(dim),
        object: Vec::with_capacity(dim),
        relation: Vec::with_capacity(dim),
    };
    for d in 0..dim {
        g.subject
            .push(slope * f(lb[d]) * f(lc[d]) + 2.0 * lambdas.subject * f(a[d]));
        g.object
            .push(slope * f(la[d]) * f(lc[d]) + 2.0 * lambdas.object * f(b[d]));
        g.relation
            .push(slope * f(la[d]) * f(lb[d]) + 2.0 * lambdas.relation * f(c[d]));
    }
    g
}

/// `E_ijk` before any update: logistic loss plus the three row penalties.
pub fn example_objective(
    theta: f64,
    label: f64,
    a: &[f32],
    b: &[f32],
    c: &[f32],
    lambdas: Lambdas,
) -> f64 {
    let sq = |r: &[f32]| r.iter().map(|&x| (x as f64) * (x as f64)).sum::<f64>();
    logistic_loss(theta, label)
        + lambdas.subject * sq(a)
        + lambdas.object * sq(b)
        + lambdas.relation * sq(c)
}

/// One SGD step `row ← row - η ∂E_ijk/∂row` on the three touched rows,
/// all gradients taken at the pre-update point. Returns the pre-update `E_ijk`.
///
/// `delta = None` trains dense CP, `Some(Δ)` binarized CP.
pub(crate) fn sgd_step(
    factors: &mut DenseFactors,
    t: Triple,
    label: f64,
    learning_rate: f64,
    lambdas: Lambdas,
    delta: Option<f64>,
) -> f64 {
    let DenseFactors {
        subjects,
        objects,
        relations,
    } = factors;
    let a = subjects.row_mut(t.subject as usize);
    let b = objects.row_mut(t.object as usize);
    let c = relations.row_mut(t.relation as usize);

    let theta = match delta {
        None => dot3(a, b, c),
        Some(d) => binarized_theta(a, b, c, d),
    };
    let objective = example_objective(theta, label, a, b, c, lambdas);
    let slope = loss_slope(theta, label) as f32;

    let eta = learning_rate as f32;
    let (ra, rb, rc) = (
        2.0 * lambdas.subject as f32,
        2.0 * lambdas.object as f32,
        2.0 * lambdas.relation as f32,
    );
    match delta {
        None => {
            for d in 0..a.len() {
                let (x, y, z) = (a[d], b[d], c[d]);
                a[d] = x - eta * (slope * y * z + ra * x);
                b[d] = y - eta * (slope * x * z + rb * y);
                c[d] = z - eta * (slope * x * y + rc * z);
            }
        }
        Some(delta) => {
            let q = delta as f32;
            let sgn = |v: f32| if quantized_bit(v) { q } else { -q };
            for d in 0..a.len() {
                let (x, y, z) = (a[d], b[d], c[d]);
                let (qx, qy, qz) = (sgn(x), sgn(y), sgn(z));
                a[d] = x - eta * (slope * qy * qz + ra * x);
                b[d] = y - eta * (slope * qx * qz + rb * y);
                c[d] = z - eta * (slope * qx * qy + rc * z);
            }
        }
    }
    objective
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dense::DenseMatrix;
    use crate::train::loss::sigmoid;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_factors(seed: u64, dim: usize) -> DenseFactors {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut gen = |rows| DenseMatrix::from_fn(rows, dim, |_, _| rng.random_range(-0.8f32..0.8));
        let a = gen(3);
        let b = gen(3);
        let c = gen(4);
        DenseFactors::new(a, b, c).unwrap()
    }

    /// `E_ijk` in f64 from f64 copies of the rows.
    fn objective_f64(a: &[f64], b: &[f64], c: &[f64], label: f64, l: Lambdas) -> f64 {
        let theta: f64 = (0..a.len()).map(|d| a[d] * b[d] * c[d]).sum();
        let sq = |r: &[f64]| r.iter().map(|x| x * x).sum::<f64>();
        logistic_loss(theta, label) + l.subject * sq(a) + l.object * sq(b) + l.relation * sq(c)
    }

    fn central_differences(f: &DenseFactors, t: Triple, label: f64, l: Lambdas) -> RowGradients {
        let h = 1e-5;
        let to64 = |r: &[f32]| r.iter().map(|&x| x as f64).collect::<Vec<_>>();
        let (a, b, c) = rows(f, t);
        let (a, b, c) = (to64(a), to64(b), to64(c));
        let fd = |which: usize| -> Vec<f64> {
            (0..a.len())
                .map(|d| {
                    let (mut ap, mut bp, mut cp) = (a.clone(), b.clone(), c.clone());
                    let (mut am, mut bm, mut cm) = (a.clone(), b.clone(), c.clone());
                    match which {
                        0 => {
                            ap[d] += h;
                            am[d] -= h;
                        }
                        1 => {
                            bp[d] += h;
                            bm[d] -= h;
                        }
                        _ => {
                            cp[d] += h;
                            cm[d] -= h;
                        }
                    }
                    (objective_f64(&ap, &bp, &cp, label, l)
                        - objective_f64(&am, &bm, &cm, label, l))
                        / (2.0 * h)
                })
                .collect()
        };
        RowGradients {
            subject: fd(0),
            object: fd(1),
            relation: fd(2),
        }
    }

    fn rel_err(x: &[f64], y: &[f64]) -> f64 {
        let diff: f64 = x
            .iter()
            .zip(y)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        let norm = x
            .iter()
            .map(|a| a * a)
            .sum::<f64>()
            .sqrt()
            .max(y.iter().map(|a| a * a).sum::<f64>().sqrt());
        if norm < 1e-12 {
            diff
        } else {
            diff / norm
        }
    }

    #[test]
    fn zero_theta_positive_label() {
        let f = DenseFactors::zeros(2, 1, 4);
        let mut f = f;
        f.objects.row_mut(1).copy_from_slice(&[1.0, 2.0, 3.0, 4.0]);
        f.relations
            .row_mut(0)
            .copy_from_slice(&[1.0, 1.0, -1.0, 0.5]);
        f.subjects.row_mut(0).copy_from_slice(&[0.0, 0.0, 0.0, 0.0]);
        f.subjects.row_mut(0)[0] = 0.0;
        let l = Lambdas::uniform(0.1);
        let g = grad_rows_dense(&f, Triple::new(0, 1, 0), 1.0, l).unwrap();
        // θ = 0 since a = 0; coefficient σ(0) - 1 = -0.5
        assert_eq!(g.subject, vec![-0.5, -1.0, 1.5, -1.0]);
    }

    #[test]
    fn stationary_point_has_zero_gradient() {
        let mut f = DenseFactors::zeros(1, 1, 3);
        f.subjects.row_mut(0).copy_from_slice(&[0.5, 1.0, -1.0]);
        f.objects.row_mut(0).copy_from_slice(&[1.0, 0.5, 0.25]);
        f.relations.row_mut(0).copy_from_slice(&[2.0, 1.0, 1.0]);
        let t = Triple::new(0, 0, 0);
        let theta = f.score(t).unwrap();
        let g = grad_rows_dense(&f, t, sigmoid(theta), Lambdas::default()).unwrap();
        assert!(g
            .subject
            .iter()
            .chain(&g.object)
            .chain(&g.relation)
            .all(|&x| x == 0.0));
    }

    #[test]
    fn out_of_range() {
        let f = DenseFactors::zeros(2, 1, 3);
        assert!(grad_rows_dense(&f, Triple::new(0, 2, 0), 1.0, Lambdas::default()).is_err());
        assert!(grad_rows_bcp(&f, Triple::new(0, 0, 2), 1.0, 0.5, Lambdas::default()).is_err());
        assert!(grad_rows_bcp(&f, Triple::new(0, 0, 0), 1.0, 0.0, Lambdas::default()).is_err());
    }

    #[test]
    fn bcp_all_positive_rows() {
        let dim = 6;
        let mut f = DenseFactors::zeros(1, 1, dim);
        f.subjects
            .row_mut(0)
            .copy_from_slice(&[0.1, 0.2, 0.3, 0.4, 0.5, 0.6]);
        f.objects.row_mut(0).copy_from_slice(&[0.9; 6]);
        f.relations.row_mut(0).copy_from_slice(&[0.01; 6]);
        let t = Triple::new(0, 0, 0);
        let g = grad_rows_bcp(&f, t, 1.0, 0.5, Lambdas::default()).unwrap();
        let theta = 0.125 * dim as f64;
        let slope = sigmoid(theta) - 1.0;
        for d in 0..dim {
            assert_eq!(g.subject[d], slope * 0.25);
            assert_eq!(g.object[d], slope * 0.25);
            assert_eq!(g.relation[d], slope * 0.25);
        }
        let g = grad_rows_bcp(&f, t, sigmoid(theta), 0.5, Lambdas::default()).unwrap();
        assert!(g.subject.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn regularizer_contracts_rows() {
        // Zero loss term: σ(θ) = x exactly at θ = 0, x = 0.5.
        let mut f = DenseFactors::zeros(1, 1, 4);
        f.subjects
            .row_mut(0)
            .copy_from_slice(&[1.0, -2.0, 0.5, 0.0]);
        f.objects.row_mut(0).copy_from_slice(&[0.0, 0.0, 0.0, 0.0]);
        f.relations
            .row_mut(0)
            .copy_from_slice(&[3.0, 1.0, -1.0, 2.0]);
        let (eta, lambda) = (0.1, 0.25);
        let before = f.clone();
        sgd_step(
            &mut f,
            Triple::new(0, 0, 0),
            0.5,
            eta,
            Lambdas::uniform(lambda),
            None,
        );
        let factor = (1.0 - 2.0 * eta * lambda) as f32;
        for (x, y) in before.subjects.row(0).iter().zip(f.subjects.row(0)) {
            assert!((x * factor - y).abs() < 1e-6);
        }
        for (x, y) in before.relations.row(0).iter().zip(f.relations.row(0)) {
            assert!((x * factor - y).abs() < 1e-6);
        }
    }

    #[test]
    fn fused_step_matches_gradients() {
        for (seed, delta) in [(1u64, None), (2, Some(0.3)), (3, Some(0.5))] {
            let f = random_factors(seed, 37);
            let t = Triple::new(1, 2, 3);
            let l = Lambdas {
                subject: 0.01,
                object: 0.02,
                relation: 0.03,
            };
            let eta = 0.05;
            let g = match delta {
                None => grad_rows_dense(&f, t, 0.0, l).unwrap(),
                Some(d) => grad_rows_bcp(&f, t, 0.0, d, l).unwrap(),
            };
            let mut stepped = f.clone();
            sgd_step(&mut stepped, t, 0.0, eta, l, delta);
            for d in 0..37 {
                let want = f.subjects.row(1)[d] as f64 - eta * g.subject[d];
                assert!((stepped.subjects.row(1)[d] as f64 - want).abs() < 1e-6);
                let want = f.objects.row(2)[d] as f64 - eta * g.object[d];
                assert!((stepped.objects.row(2)[d] as f64 - want).abs() < 1e-6);
                let want = f.relations.row(3)[d] as f64 - eta * g.relation[d];
                assert!((stepped.relations.row(3)[d] as f64 - want).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn binarized_theta_matches_unpacked_dot() {
        let f = random_factors(9, 50);
        let t = Triple::new(0, 1, 2);
        let (a, b, c) = rows(&f, t);
        let p = crate::packed::binarize_factors(&f, 0.5).unwrap();
        assert_eq!(binarized_theta(a, b, c, 0.5), p.score(t).unwrap());
    }

    proptest! {
        #[test]
        fn dense_gradient_matches_finite_differences(seed in any::<u64>(), dim in 1usize..24, positive in any::<bool>()) {
            let f = random_factors(seed, dim);
            let t = Triple::new((seed % 3) as u32, ((seed >> 8) % 3) as u32, ((seed >> 16) % 4) as u32);
            let label = if positive { 1.0 } else { 0.0 };
            let l = Lambdas { subject: 1e-3, object: 0.0, relation: 1e-4 };
            let g = grad_rows_dense(&f, t, label, l).unwrap();
            let fd = central_differences(&f, t, label, l);
            prop_assert!(rel_err(&g.subject, &fd.subject) < 1e-4);
            prop_assert!(rel_err(&g.object, &fd.object) < 1e-4);
            prop_assert!(rel_err(&g.relation, &fd.relation) < 1e-4);
        }

        #[test]
        fn ste_loss_term_ignores_sign_preserving_perturbations(seed in any::<u64>(), scale in 0.1f32..3.0) {
            let f = random_factors(seed, 29);
            let t = Triple::new(2, 0, 1);
            let mut g = f.clone();
            for x in g.subjects.row_mut(2) {
                *x *= scale;
            }
            let l = Lambdas::default();
            let before = grad_rows_bcp(&f, t, 1.0, 0.3, l).unwrap();
            let after = grad_rows_bcp(&g, t, 1.0, 0.3, l).unwrap();
            prop_assert_eq!(before, after);
        }
    }
}
