//! Mutual refinement of the price and interest preferences.
//!
//! The two raw preferences first produce a *product coupling* and a
//! *sum coupling* (tanh layers over their elementwise product and
//! sum). Two sigmoid gates derived from the couplings then decide how
//! much of each preference feeds the other's *mix*, and the final
//! preferences are each preference amplified by its own mix plus the
//! other's.

use crate::error::NumericError;
use crate::tape::{Tape, Var};

use super::{CoGuideVars, ForwardTrace};

/// Run the co-guided refinement; returns the fused
/// `(price_preference, interest_preference)` pair.
pub fn co_guide(
    tape: &Tape,
    price_pref: Var,
    interest_pref: Var,
    vars: &CoGuideVars,
    mut trace: Option<&mut ForwardTrace>,
) -> Result<(Var, Var), NumericError> {
    let linear = |x: Var, w: Var| -> Result<Var, NumericError> {
        tape.matmul(x, tape.transpose(w)?)
    };

    let product = tape.mul(price_pref, interest_pref)?;
    let product_coupling =
        tape.tanh(tape.add(linear(product, vars.product_w)?, vars.product_b)?)?;
    let sum = tape.add(price_pref, interest_pref)?;
    let sum_coupling = tape.tanh(tape.add(linear(sum, vars.sum_w)?, vars.sum_b)?)?;

    let price_gate = tape.sigmoid(tape.add(
        linear(product_coupling, vars.price_gate_w)?,
        linear(sum_coupling, vars.price_gate_u)?,
    )?)?;
    let interest_gate = tape.sigmoid(tape.add(
        linear(product_coupling, vars.interest_gate_w)?,
        linear(sum_coupling, vars.interest_gate_u)?,
    )?)?;

    // Each mix keeps the gated share of its own preference and the
    // *complement*-gated share of the other one.
    let price_mix = tape.tanh(tape.add(
        linear(tape.mul(price_gate, price_pref)?, vars.price_mix_w)?,
        linear(
            tape.mul(tape.one_minus(interest_gate)?, interest_pref)?,
            vars.price_mix_u,
        )?,
    )?)?;
    let interest_mix = tape.tanh(tape.add(
        linear(tape.mul(interest_gate, interest_pref)?, vars.interest_mix_w)?,
        linear(
            tape.mul(tape.one_minus(price_gate)?, price_pref)?,
            vars.interest_mix_u,
        )?,
    )?)?;

    let fused_price = tape.mul(price_mix, tape.add(price_pref, interest_mix)?)?;
    let fused_interest = tape.mul(interest_mix, tape.add(interest_pref, price_mix)?)?;

    if let Some(t) = trace.as_deref_mut() {
        t.product_coupling = tape.value(product_coupling).data().to_vec();
        t.sum_coupling = tape.value(sum_coupling).data().to_vec();
        t.price_gate = tape.value(price_gate).data().to_vec();
        t.interest_gate = tape.value(interest_gate).data().to_vec();
        t.price_mix = tape.value(price_mix).data().to_vec();
        t.interest_mix = tape.value(interest_mix).data().to_vec();
        t.price_pref = tape.value(fused_price).data().to_vec();
        t.interest_pref = tape.value(fused_interest).data().to_vec();
    }
    Ok((fused_price, fused_interest))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optim::{seeded_rng, uniform_init};
    use crate::tensor::Tensor;

    fn zero_vars(tape: &Tape, d: usize) -> CoGuideVars {
        let z = || tape.constant(Tensor::zeros(d, d));
        let zb = || tape.constant(Tensor::zeros(1, d));
        CoGuideVars {
            product_w: z(),
            product_b: zb(),
            sum_w: z(),
            sum_b: zb(),
            price_gate_w: z(),
            price_gate_u: z(),
            interest_gate_w: z(),
            interest_gate_u: z(),
            price_mix_w: z(),
            price_mix_u: z(),
            interest_mix_w: z(),
            interest_mix_u: z(),
        }
    }

    fn random_vars(tape: &Tape, rng: &mut rand_chacha::ChaCha20Rng, d: usize) -> CoGuideVars {
        let mut m = || tape.constant(uniform_init(rng, d, d));
        CoGuideVars {
            product_w: m(),
            sum_w: m(),
            price_gate_w: m(),
            price_gate_u: m(),
            interest_gate_w: m(),
            interest_gate_u: m(),
            price_mix_w: m(),
            price_mix_u: m(),
            interest_mix_w: m(),
            interest_mix_u: m(),
            product_b: tape.constant(uniform_init(rng, 1, d)),
            sum_b: tape.constant(uniform_init(rng, 1, d)),
        }
    }

    #[test]
    fn zero_parameters_collapse_both_outputs_to_zero() {
        let tape = Tape::new();
        let d = 3;
        let vars = zero_vars(&tape, d);
        let p = tape.constant(Tensor::row(&[1.0, -2.0, 0.5]));
        let i = tape.constant(Tensor::row(&[0.3, 0.3, -4.0]));
        let mut trace = ForwardTrace::default();
        let (fp, fi) = co_guide(&tape, p, i, &vars, Some(&mut trace)).unwrap();
        // Zero couplings ⇒ gates ½ ⇒ zero mixes ⇒ zero outputs.
        assert_eq!(tape.value(fp).data(), &[0.0; 3]);
        assert_eq!(tape.value(fi).data(), &[0.0; 3]);
        assert_eq!(trace.price_gate, vec![0.5; 3]);
        assert_eq!(trace.interest_gate, vec![0.5; 3]);
        assert!(trace.check_invariants().is_ok());
    }

    #[test]
    fn outputs_stay_within_tanh_envelope() {
        let mut rng = seeded_rng(41);
        for round in 0..20 {
            let tape = Tape::new();
            let d = 4;
            let vars = random_vars(&tape, &mut rng, d);
            let scale = (round + 1) as f64;
            let p_vals = uniform_init(&mut rng, 1, d).map(|x| x * scale);
            let i_vals = uniform_init(&mut rng, 1, d).map(|x| x * scale);
            let p = tape.constant(p_vals.clone());
            let i = tape.constant(i_vals.clone());
            let mut trace = ForwardTrace::default();
            let (fp, fi) = co_guide(&tape, p, i, &vars, Some(&mut trace)).unwrap();
            trace.check_invariants().unwrap();
            // |mix| ≤ 1 bounds each output by the raw magnitude + 1.
            let fp = tape.value(fp);
            let fi = tape.value(fi);
            for k in 0..d {
                assert!(fp.at(0, k).abs() <= p_vals.at(0, k).abs() + 1.0 + 1e-12);
                assert!(fi.at(0, k).abs() <= i_vals.at(0, k).abs() + 1.0 + 1e-12);
            }
        }
    }

    #[test]
    fn random_instance_matches_scalar_cascade() {
        let d = 4;
        let mut rng = seeded_rng(99);
        let p_vals = uniform_init(&mut rng, 1, d);
        let i_vals = uniform_init(&mut rng, 1, d);
        let tape = Tape::new();
        let vars = random_vars(&tape, &mut rng, d);
        let (fp, fi) = co_guide(
            &tape,
            tape.constant(p_vals.clone()),
            tape.constant(i_vals.clone()),
            &vars,
            None,
        )
        .unwrap();

        // Scalar re-computation with plain loops.
        let mat = |v: Var| tape.value(v);
        let apply = |w: &Tensor, x: &[f64]| -> Vec<f64> {
            (0..d)
                .map(|k| (0..d).map(|j| w.at(k, j) * x[j]).sum())
                .collect()
        };
        let addv = |a: &[f64], b: &[f64]| -> Vec<f64> {
            a.iter().zip(b).map(|(x, y)| x + y).collect()
        };
        let p: Vec<f64> = p_vals.data().to_vec();
        let i: Vec<f64> = i_vals.data().to_vec();
        let prod: Vec<f64> = p.iter().zip(&i).map(|(a, b)| a * b).collect();
        let sum = addv(&p, &i);
        let tanhv = |v: Vec<f64>| -> Vec<f64> { v.into_iter().map(f64::tanh).collect() };
        let sigv = |v: Vec<f64>| -> Vec<f64> {
            v.into_iter().map(|x| 1.0 / (1.0 + (-x).exp())).collect()
        };
        let m_c = tanhv(addv(
            &apply(&mat(vars.product_w), &prod),
            mat(vars.product_b).data(),
        ));
        let m_j = tanhv(addv(
            &apply(&mat(vars.sum_w), &sum),
            mat(vars.sum_b).data(),
        ));
        let r_p = sigv(addv(
            &apply(&mat(vars.price_gate_w), &m_c),
            &apply(&mat(vars.price_gate_u), &m_j),
        ));
        let r_i = sigv(addv(
            &apply(&mat(vars.interest_gate_w), &m_c),
            &apply(&mat(vars.interest_gate_u), &m_j),
        ));
        let gp: Vec<f64> = r_p.iter().zip(&p).map(|(g, x)| g * x).collect();
        let gi_c: Vec<f64> = r_i.iter().zip(&i).map(|(g, x)| (1.0 - g) * x).collect();
        let m_p = tanhv(addv(
            &apply(&mat(vars.price_mix_w), &gp),
            &apply(&mat(vars.price_mix_u), &gi_c),
        ));
        let gi: Vec<f64> = r_i.iter().zip(&i).map(|(g, x)| g * x).collect();
        let gp_c: Vec<f64> = r_p.iter().zip(&p).map(|(g, x)| (1.0 - g) * x).collect();
        let m_i = tanhv(addv(
            &apply(&mat(vars.interest_mix_w), &gi),
            &apply(&mat(vars.interest_mix_u), &gp_c),
        ));

        let got_p = tape.value(fp);
        let got_i = tape.value(fi);
        for k in 0..d {
            let want_p = m_p[k] * (p[k] + m_i[k]);
            let want_i = m_i[k] * (i[k] + m_p[k]);
            assert!((got_p.at(0, k) - want_p).abs() < 1e-12);
            assert!((got_i.at(0, k) - want_i).abs() < 1e-12);
        }
    }
}
