use erz_core::cts::{cts_oracle, randomized_zero_test_rng, trial_rng, CtsPlan, Verdict, ZeroTestTarget};
use erz_core::divfree::{compile_divfree, gadget_network};
use erz_core::geometry::{cells_enumerate, growth_measure, CellExperiment, ClassifierFamily, ConstructibleDesc, SetExpr};
use erz_core::network::{
    net_eval, net_expand, random_network, random_rational_activation, Activation, NodeValue, Instantiation, NetworkSpec, NodeId, RandomShape,
};
use erz_core::polynomial::UniPoly;
use erz_core::{Field, FieldElement, GridSpec, SparsePoly};
use proptest::prelude::*;

const PRIMES: [u64; 5] = [3, 5, 7, 31, 2147483647];

fn field() -> impl Strategy<Value = Field> {
    prop::sample::select(PRIMES.to_vec()).prop_map(|p| Field::prime(p).unwrap())
}

fn poly_in(k: Field, n: usize) -> impl Strategy<Value = SparsePoly> {
    prop::collection::vec((prop::collection::vec(0u32..3, n), -20i64..20), 0..6).prop_map(move |ts| {
        SparsePoly::from_terms(k, n, ts.into_iter().map(|(e, c)| (e, k.from_i64(c)))).unwrap()
    })
}

fn elems(k: Field, n: usize) -> impl Strategy<Value = Vec<FieldElement>> {
    prop::collection::vec(any::<u64>(), n).prop_map(move |v| v.into_iter().map(|x| k.from_u64(x)).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn field_axioms((k, v) in field().prop_flat_map(|k| (Just(k), elems(k, 3)))) {
        let (a, b, c) = (&v[0], &v[1], &v[2]);
        prop_assert_eq!(&(a + b) + c, a + &(b + c));
        prop_assert_eq!(&(a * b) * c, a * &(b * c));
        prop_assert_eq!(a * &(b + c), &(a * b) + &(a * c));
        prop_assert_eq!(a - a, k.zero());
        if !a.is_zero() {
            prop_assert_eq!(a * &a.inv().unwrap(), k.one());
        }
        let p = k.characteristic();
        prop_assert_eq!(a.pow(p), a.clone());
    }

    #[test]
    fn rational_field_axioms(v in prop::collection::vec((-50i64..50, 1i64..20), 3)) {
        let q = Field::rationals();
        let xs: Vec<FieldElement> = v.iter().map(|(n, d)| &q.from_i64(*n) / &q.from_i64(*d)).collect();
        let (a, b, c) = (&xs[0], &xs[1], &xs[2]);
        prop_assert_eq!(a * &(b + c), &(a * b) + &(a * c));
        prop_assert_eq!(q.parse(&a.to_string()).unwrap(), a.clone());
    }

    #[test]
    fn ring_laws_and_eval((k, f, g, h, x) in field().prop_flat_map(|k| (Just(k), poly_in(k, 2), poly_in(k, 2), poly_in(k, 2), elems(k, 2)))) {
        prop_assert_eq!(&(&f + &g) * &h, &(&f * &h) + &(&g * &h));
        prop_assert_eq!(&f * &g, &g * &f);
        let fx = f.eval(&x).unwrap();
        let gx = g.eval(&x).unwrap();
        prop_assert_eq!((&f * &g).eval(&x).unwrap(), &fx * &gx);
        prop_assert_eq!((&f - &g).eval(&x).unwrap(), &fx - &gx);
        prop_assert_eq!(f.pow(3).eval(&x).unwrap(), fx.pow(3));
        prop_assert_eq!(SparsePoly::parse(k, 2, &f.to_string()).unwrap(), f.clone());
        if !f.is_zero() && !g.is_zero() {
            prop_assert_eq!((&f * &g).total_degree(), f.total_degree() + g.total_degree());
        }
    }

    #[test]
    fn gadget_multiplies(p in prop::sample::select(vec![3u64, 5, 7, 11, 13]), a in any::<u64>(), b in any::<u64>()) {
        let k = Field::prime(p).unwrap();
        let (spec, inst) = gadget_network(k, 2, NodeId::input(1), NodeId::input(2)).unwrap();
        let (x, y) = (k.from_u64(a), k.from_u64(b));
        let out = net_eval(&spec, &inst, &[x.clone(), y.clone()]).unwrap().output_values().unwrap();
        prop_assert_eq!(&out[0], &(&x * &y));
    }

    #[test]
    fn expansion_matches_evaluation(seed in any::<u64>()) {
        let k = Field::prime(101).unwrap();
        let mut rng = trial_rng(seed, 0);
        let act = Activation::polynomial(UniPoly::new(k, vec![k.from_u64(3), k.from_u64(1), k.from_u64(2)]).unwrap()).unwrap();
        let shape = RandomShape { num_inputs: 2, depth: 2, max_width: 2, max_fan_in: 3 };
        let spec = random_network(k, act, shape, &mut rng).unwrap();
        let inst = Instantiation::random(&spec, &mut rng);
        let polys = net_expand(&spec, &inst).unwrap();
        for _ in 0..5 {
            let x = vec![k.sample(&mut rng), k.sample(&mut rng)];
            let direct = net_eval(&spec, &inst, &x).unwrap().output_values().unwrap();
            let via: Vec<FieldElement> = polys.iter().map(|p| p.eval(&x).unwrap()).collect();
            prop_assert_eq!(direct, via);
        }
    }

    #[test]
    fn compiled_pairs_match_direct_evaluation(seed in any::<u64>()) {
        let k = Field::prime(1_000_003).unwrap();
        let mut rng = trial_rng(seed, 1);
        let act = random_rational_activation(k, 3, &mut rng);
        let shape = RandomShape { num_inputs: 2, depth: 3, max_width: 3, max_fan_in: 3 };
        let spec = random_network(k, act, shape, &mut rng).unwrap();
        let r = compile_divfree(&spec).unwrap();
        let inst = Instantiation::random(&spec, &mut rng);
        let ci = r.instantiate(&inst);
        for _ in 0..5 {
            let x = vec![k.sample(&mut rng), k.sample(&mut rng)];
            let t = net_eval(&spec, &inst, &x).unwrap();
            let c = net_eval(&r.compiled, &ci, &x).unwrap();
            prop_assert!(c.all_defined());
            let den_at = |node: &NodeId| c.value(r.pairing[node].1).defined().unwrap().clone();
            for o in spec.outputs() {
                let (num, den) = r.pairing[o];
                let (n, d) = (c.value(num).defined().unwrap(), c.value(den).defined().unwrap());
                match t.value(*o) {
                    NodeValue::Defined(v) => prop_assert_eq!(&(n / d), v),
                    // the chain vanishes where the pole first appears, not necessarily at the output
                    NodeValue::Undefined(culprit) => prop_assert!(den_at(culprit).is_zero()),
                }
            }
        }
    }

    #[test]
    fn network_json_round_trip(seed in any::<u64>()) {
        let k = Field::prime(13).unwrap();
        let mut rng = trial_rng(seed, 2);
        let act = random_rational_activation(k, 2, &mut rng);
        let shape = RandomShape { num_inputs: 2, depth: 3, max_width: 3, max_fan_in: 3 };
        let spec = random_network(k, act, shape, &mut rng).unwrap();
        let text = spec.to_json();
        let back = NetworkSpec::from_json(&text).unwrap();
        prop_assert_eq!(&back, &spec);
        prop_assert_eq!(back.to_json(), text);
        let inst = Instantiation::random(&spec, &mut rng);
        prop_assert_eq!(Instantiation::from_json(&spec, &inst.to_json()).unwrap(), inst);
    }

    #[test]
    fn oracle_agrees_with_definition((k, fam, seq) in Just(Field::prime(5).unwrap()).prop_flat_map(|k| (
        Just(k),
        prop::collection::vec(poly_in(k, 1), 0..5),
        prop::collection::vec(elems(k, 1), 0..4),
    ))) {
        let sigma = vec![SparsePoly::zero(k, 1)];
        let expect = fam.iter().all(|f| f.is_zero() || seq.iter().any(|x| !f.eval(x).unwrap().is_zero()));
        prop_assert_eq!(cts_oracle(&seq, &fam, &sigma), expect);
    }

    #[test]
    fn certified_witness_is_nonzero((f, seed) in (poly_in(Field::prime(7).unwrap(), 2), any::<u64>())) {
        let k = Field::prime(7).unwrap();
        let plan = CtsPlan { grid: GridSpec::new(k, 2, 7).unwrap(), length: 3 };
        let r = randomized_zero_test_rng(ZeroTestTarget::Poly(&f), &plan, &mut trial_rng(seed, 0)).unwrap();
        match r.verdict {
            Verdict::CertifiedNonzero(w) => prop_assert!(!f.eval(&w).unwrap().is_zero()),
            Verdict::AllZero => prop_assert_eq!(r.points_used, 3),
        }
    }

    #[test]
    fn refinement_never_loses_cells(hs in prop::collection::vec(poly_in(Field::prime(5).unwrap(), 2), 1..4)) {
        let k = Field::prime(5).unwrap();
        let h: Vec<SetExpr> = hs.into_iter().map(SetExpr::Zero).collect();
        let mut prev = 0;
        for j in 0..=h.len() {
            let exp = CellExperiment::new(ConstructibleDesc::affine_space(k, 2), h[..j].to_vec(), 0).unwrap();
            let r = cells_enumerate(&exp, 1000).unwrap();
            prop_assert!(r.partition_ok);
            prop_assert!(r.nonempty_cell_count >= prev);
            prev = r.nonempty_cell_count;
        }
    }

    #[test]
    fn growth_monotone_under_inclusion(pts in prop::collection::vec(0u64..11, 0..8)) {
        let k = Field::prime(11).unwrap();
        let fam = ClassifierFamily::coefficient_box(k, 1, 1, 11, 1000).unwrap();
        let xs: Vec<Vec<FieldElement>> = pts.iter().map(|&p| vec![k.from_u64(p)]).collect();
        let mut prev = 0;
        for j in 0..=xs.len() {
            let g = growth_measure(&fam, &xs[..j]).unwrap();
            prop_assert!(g.count >= prev && g.within_bound);
            prev = g.count;
        }
    }
}
