use morse_core::complex::{build_complex, cohomology_report, verify_delta_squared};
use morse_core::critical::{choose_orientations, find_rest_points, Orientations, SearchConfig};
use morse_core::moduli::{ModuliConfig, Skeleton};
use morse_core::scenario::{builtin, builtin_names, Scenario};

fn skeleton(name: &str) -> (Scenario, Skeleton) {
    let s = builtin(name).unwrap();
    let rest = find_rest_points(&s, &SearchConfig::default()).unwrap();
    let o = choose_orientations(&rest);
    let sk = Skeleton::build(&s, rest, o, ModuliConfig::default()).unwrap();
    (s, sk)
}

#[test]
fn betti_numbers_match_oracle_and_ground_truth() {
    for name in builtin_names() {
        let (s, sk) = skeleton(name);
        let c = build_complex(&sk).unwrap();
        let rep = cohomology_report(&s, &sk, &c).unwrap();
        assert_eq!(rep.oracle_match, Some(true), "{name}: {:?} vs {:?}", rep.betti, rep.oracle);
        assert_eq!(rep.betti, s.ground_truth.as_ref().unwrap().betti, "{name}");
        assert!(rep.inequalities.all_hold(), "{name}");
        assert!(verify_delta_squared(&c).holds, "{name}");
    }
}

#[test]
fn delta_squared_under_random_orientations() {
    for name in builtin_names() {
        let (s, sk) = skeleton(name);
        let base = morse_core::complex::betti_numbers(&build_complex(&sk).unwrap()).0;
        for seed in 0..20 {
            let o = Orientations::random(sk.rest.len(), seed);
            let re = sk.reoriented(&s, o.clone()).unwrap();
            let c = build_complex(&re).unwrap();
            assert!(verify_delta_squared(&c).holds, "{name} seed {seed}");
            assert_eq!(morse_core::complex::betti_numbers(&c).0, base, "{name} seed {seed}");
            // conjugation by the diagonal orientation signs
            let c0 = build_complex(&sk).unwrap();
            for x in &sk.rest {
                for y in &sk.rest {
                    let flip = (o.sign(x.id) * o.sign(y.id)) as i64;
                    assert_eq!(c.incidence_of(x.id, y.id), flip * c0.incidence_of(x.id, y.id), "{name} ({}, {})", x.id, y.id);
                }
            }
        }
    }
}

#[test]
fn ellipsoid_has_two_chain_cancellation() {
    let (_, sk) = skeleton("ellipsoid_sphere");
    let rep = verify_delta_squared(&build_complex(&sk).unwrap());
    assert!(rep.holds);
    assert!(!rep.cancellations.is_empty());
    assert!(rep.cancellations.iter().all(|w| w.chains.len() == 2));
}

#[test]
fn torus_differential_vanishes_and_double_well_incidences() {
    let (_, sk) = skeleton("flat_torus");
    let c = build_complex(&sk).unwrap();
    assert!(c.incidence.iter().all(|m| m.is_zero()));
    let (_, sk) = skeleton("double_well_circle");
    let c = build_complex(&sk).unwrap();
    let mut row = c.incidence[0].rows_vec();
    row.iter_mut().for_each(|r| r.sort());
    assert!(row.iter().all(|r| r == &vec![-1, 1]));
}
