mod common;

use common::setup;
use morse_core::critical::Orientations;
use morse_core::derham::{build_fibers, random_form, Bridge, QuadratureConfig, Verdict};
use morse_core::scenario::{builtin_names, DifferentialForm, Scenario};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn form<'a>(s: &'a Scenario, name: &str) -> &'a DifferentialForm {
    s.form(name).unwrap_or_else(|| panic!("no form {name}"))
}

#[test]
fn torus_unstable_integrals() {
    let st = setup("flat_torus");
    let b = st.bridge();
    let (max, sa, sb) = (st.at(&[0.0, 0.0]), st.at(&[0.5, 0.0]), st.at(&[0.0, 0.5]));
    assert!((b.int(form(&st.s, "dt1^dt2"), max).unwrap() - 1.0).abs() < 1e-7);
    assert!((b.int(form(&st.s, "dt2"), sa).unwrap().abs() - 1.0).abs() < 1e-7);
    assert!(b.int(form(&st.s, "dt2"), sb).unwrap().abs() < 1e-9);
}

#[test]
fn torus_moduli_integrals_and_e_map() {
    let st = setup("flat_torus");
    let b = st.bridge();
    let (max, sa, sb) = (st.at(&[0.0, 0.0]), st.at(&[0.5, 0.0]), st.at(&[0.0, 0.5]));
    let dt1 = form(&st.s, "dt1");
    assert!((b.ent(dt1, sa, max).unwrap().abs() - 1.0).abs() < 1e-7);
    assert!(b.ent(dt1, sb, max).unwrap().abs() < 1e-9);
    // the two instantons carry +1/2 and -1/2 with opposite signs
    let parts: Vec<f64> = st.sk.between(max, sa).map(|i| i.line.integral(&st.s, dt1, 8).unwrap()).collect();
    assert_eq!(parts.len(), 2);
    assert!(parts.iter().all(|p| (p.abs() - 0.5).abs() < 1e-7));
    let int2 = b.int_cochain(form(&st.s, "dt2")).unwrap();
    let e = b.e_map(dt1, &int2, 1).unwrap();
    assert!((e[0].abs() - 1.0).abs() < 1e-6);
    assert!(b.e_map(dt1, &[0.0, 0.0], 1).unwrap().iter().all(|v| *v == 0.0));
}

#[test]
fn sphere_moduli_area() {
    let st = setup("round_sphere_height");
    let b = st.bridge();
    let (s_pole, n_pole) = (st.of_index(0)[0], st.of_index(2)[0]);
    let area = form(&st.s, "area");
    assert!((b.ent(area, s_pole, n_pole).unwrap().abs() - 1.0).abs() < 1e-7);
    let e = b.e_map(area, &[1.0], 0).unwrap();
    assert!((e[0].abs() - 1.0).abs() < 1e-7);
}

#[test]
fn degree_mismatch_is_an_error() {
    let st = setup("flat_torus");
    let b = st.bridge();
    assert!(b.int(form(&st.s, "dt1"), st.at(&[0.0, 0.0])).is_err());
    assert!(b.ent(form(&st.s, "dt1^dt2"), st.at(&[0.5, 0.0]), st.at(&[0.0, 0.0])).is_err());
}

#[test]
fn empty_moduli_give_zero() {
    // saddle to saddle on the torus: same index, distinct points
    let st = setup("flat_torus");
    let b = st.bridge();
    let one = form(&st.s, "one");
    assert_eq!(b.ent(one, st.at(&[0.5, 0.0]), st.at(&[0.0, 0.5])).unwrap(), 0.0);
}

#[test]
fn double_well_chain_map_example() {
    let st = setup("double_well_circle");
    let b = st.bridge();
    let g = form(&st.s, "sin_2pi_t1");
    let check = b.verify_chain_map(g, 1e-7).unwrap();
    let max0 = st.at(&[0.0]);
    let k = b.complex.position(max0).unwrap().1;
    assert!((check.left[k] - 2.0).abs() < 1e-12);
    assert!((check.right[k] - 2.0).abs() < 1e-7);
    assert_eq!(check.verdict, Verdict::Pass);
}

#[test]
fn torus_chain_map_example() {
    let st = setup("flat_torus");
    let check = st.bridge().verify_chain_map(form(&st.s, "sin_2pi_t2_dt1"), 1e-7).unwrap();
    assert!(check.left.iter().chain(&check.right).all(|v| v.abs() < 1e-7));
}

#[test]
fn chain_map_on_random_forms() {
    for name in builtin_names() {
        let st = setup(name);
        let b = st.bridge();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for k in 0..10 {
            let deg = rng.gen_range(0..st.s.dim);
            let w = random_form(&st.s, deg, &mut rng, &format!("w{k}")).unwrap();
            let c = b.verify_chain_map(&w, 1e-6).unwrap();
            assert_eq!(c.verdict, Verdict::Pass, "{name} degree {deg}: residual {:e}", c.residual);
        }
    }
}

#[test]
fn torus_leibniz_example_and_random_pairs() {
    let st = setup("flat_torus");
    let b = st.bridge();
    let min = st.at(&[0.5, 0.5]);
    let w = form(&st.s, "sin_2pi_t1_dt2");
    let f: Vec<f64> = b.complex.bases[0].iter().map(|&y| if y == min { 1.0 } else { 0.0 }).collect();
    assert_eq!(b.verify_leibniz(w, &f, 0, 1e-6).unwrap().verdict, Verdict::Pass);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for k in 0..10 {
        let r = rng.gen_range(0..2usize);
        let p = rng.gen_range(0..2 - r);
        let w = random_form(&st.s, r, &mut rng, &format!("w{k}")).unwrap();
        let f: Vec<f64> = (0..b.complex.bases[p].len()).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let c = b.verify_leibniz(&w, &f, p, 1e-6).unwrap();
        assert_eq!(c.verdict, Verdict::Pass, "r={r} p={p}: residual {:e}", c.residual);
    }
}

#[test]
fn leibniz_on_all_scenarios_with_random_forms() {
    for name in builtin_names() {
        let st = setup(name);
        let b = st.bridge();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for k in 0..4 {
            let r = rng.gen_range(0..st.s.dim);
            let p = rng.gen_range(0..st.s.dim - r);
            let w = random_form(&st.s, r, &mut rng, &format!("w{k}")).unwrap();
            let f: Vec<f64> = (0..b.complex.bases[p].len()).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let c = b.verify_leibniz(&w, &f, p, 1e-6).unwrap();
            assert_eq!(c.verdict, Verdict::Pass, "{name} r={r} p={p}: residual {:e}", c.residual);
        }
    }
}

#[test]
fn cup_diagrams() {
    let st = setup("flat_torus");
    let b = st.bridge();
    let c = b.verify_cup_diagram(form(&st.s, "dt1"), form(&st.s, "dt2"), 1e-4).unwrap();
    assert!((c.values.left[0].abs() - 1.0).abs() < 1e-4 && c.values.residual < 1e-4);
    assert_eq!(c.verdict, Verdict::Pass);
    assert_eq!(c.product_nontrivial, Some(true));
    let st = setup("round_sphere_height");
    let b = st.bridge();
    let c = b.verify_cup_diagram(form(&st.s, "area"), form(&st.s, "one"), 1e-6).unwrap();
    assert!((c.values.left[0].abs() - 1.0).abs() < 1e-6 && c.values.residual < 1e-6);
    assert_eq!(c.verdict, Verdict::Pass);
    let zero = DifferentialForm::linear_combination("zero", &[(0.0, form(&st.s, "area"))]).unwrap();
    let c = b.verify_cup_diagram(&zero, form(&st.s, "one"), 1e-6).unwrap();
    assert!(c.values.left.iter().chain(&c.values.right).all(|v| *v == 0.0));
}

#[test]
fn orientation_covariance() {
    let st = setup("flat_torus");
    let (max, sa) = (st.at(&[0.0, 0.0]), st.at(&[0.5, 0.0]));
    let b = st.bridge();
    let flipped = st.sk.reoriented(&st.s, st.sk.orientations.flipped(max)).unwrap();
    let fb = Bridge::new(&st.s, &flipped, &st.fibers, QuadratureConfig::default()).unwrap();
    let area = form(&st.s, "dt1^dt2");
    assert!((b.int(area, max).unwrap() + fb.int(area, max).unwrap()).abs() < 1e-12);
    let dt1 = form(&st.s, "dt1");
    assert!((b.ent(dt1, sa, max).unwrap() + fb.ent(dt1, sa, max).unwrap()).abs() < 1e-12);
    for seed in 0..5 {
        let o = Orientations::random(st.sk.rest.len(), seed);
        let re = st.sk.reoriented(&st.s, o).unwrap();
        let rb = Bridge::new(&st.s, &re, &st.fibers, QuadratureConfig::default()).unwrap();
        let c = rb.verify_cup_diagram(dt1, form(&st.s, "dt2"), 1e-4).unwrap();
        assert_eq!(c.verdict, Verdict::Pass);
        assert_eq!(c.product_nontrivial, Some(true));
    }
}

#[test]
fn linearity_in_form_and_cochain() {
    let st = setup("flat_torus");
    let b = st.bridge();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (u, v) = (random_form(&st.s, 1, &mut rng, "u").unwrap(), random_form(&st.s, 1, &mut rng, "v").unwrap());
    let (a, c) = (rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
    let w = DifferentialForm::linear_combination("w", &[(a, &u), (c, &v)]).unwrap();
    let (iu, iv, iw) = (b.int_cochain(&u).unwrap(), b.int_cochain(&v).unwrap(), b.int_cochain(&w).unwrap());
    for k in 0..iw.len() {
        assert!((iw[k] - a * iu[k] - c * iv[k]).abs() < 1e-9);
    }
    let f = [0.3, -1.2];
    let g = [2.0, 0.7];
    let fg: Vec<f64> = f.iter().zip(&g).map(|(x, y)| a * x + c * y).collect();
    let (ef, eg, efg) = (b.e_map(&w, &f, 1).unwrap(), b.e_map(&w, &g, 1).unwrap(), b.e_map(&w, &fg, 1).unwrap());
    assert!((efg[0] - a * ef[0] - c * eg[0]).abs() < 1e-9);
}

#[test]
fn int_rank_matches_betti() {
    for name in builtin_names() {
        let st = setup(name);
        let b = st.bridge();
        let betti = &st.s.ground_truth.as_ref().unwrap().betti;
        for (r, &br) in betti.iter().enumerate() {
            let c = b.int_rank(r, br, 1e-6).unwrap();
            assert_eq!(c.verdict, Verdict::Pass, "{name} degree {r}: {c:?}");
        }
    }
}

#[test]
fn detection_witnesses() {
    let expect: [(&str, &[usize]); 3] = [("flat_torus", &[1, 2]), ("round_sphere_height", &[2]), ("circle_cos", &[1])];
    for (name, gaps) in expect {
        let st = setup(name);
        let b = st.bridge();
        let gens: Vec<&DifferentialForm> = st.s.forms.iter().filter(|f| f.generator).collect();
        let mut cups = Vec::new();
        let mut lefts = Vec::new();
        for w1 in &gens {
            for w2 in &gens {
                if w1.degree + w2.degree <= st.s.dim {
                    cups.push(b.verify_cup_diagram(w1, w2, 1e-4).unwrap());
                    lefts.push(*w1);
                }
            }
        }
        let det = b.detect(&cups, &lefts, 1e-4).unwrap();
        for g in gaps {
            let d = det.iter().find(|d| d.gap == *g).unwrap_or_else(|| panic!("{name}: no product at gap {g}"));
            assert_eq!(d.verdict, Verdict::Pass);
            let (x, y) = d.witness.unwrap();
            assert_eq!(st.sk.rest[x].index - st.sk.rest[y].index, *g);
        }
        assert!(det.iter().all(|d| d.verdict == Verdict::Pass));
    }
}

#[test]
fn quadrature_doubling_converges() {
    for name in builtin_names() {
        let st = setup(name);
        let b = st.bridge();
        let q2 = QuadratureConfig::default().doubled();
        let fibers2 = build_fibers(&st.s, &st.sk, &q2).unwrap();
        let b2 = Bridge::new(&st.s, &st.sk, &fibers2, q2).unwrap();
        let forms: Vec<&DifferentialForm> = st.s.forms.iter().collect();
        let t1 = b.integral_table(&forms).unwrap();
        let t2 = b2.integral_table(&forms).unwrap();
        for ((label, v1), (_, v2)) in t1.iter().zip(&t2) {
            assert!((v1 - v2).abs() < 1e-7, "{name} {label}: {v1} vs {v2}");
        }
    }
}
