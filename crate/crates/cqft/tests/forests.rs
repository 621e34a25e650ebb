use cqft::forests::*;
use cqft::poly::{rat, Poly, Rat};
use num_traits::One;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};

fn brute_force_count(n: usize) -> usize {
    let o = ObjectSet::uniform(n).unwrap();
    let e = o.num_links();
    (0u32..(1 << e))
        .filter(|mask| {
            let links: Vec<usize> = (0..e).filter(|l| mask >> l & 1 == 1).collect();
            Forest::from_links(&o, &links).is_some()
        })
        .count()
}

#[test]
fn counts_match_acyclic_subsets() {
    for n in 1..=6 {
        let o = ObjectSet::uniform(n).unwrap();
        let got = enumerate_forests(&o).unwrap().count();
        assert_eq!(got, brute_force_count(n), "n={n}");
    }
}

#[test]
fn every_forest_is_distinct_and_acyclic() {
    let o = ObjectSet::uniform(5).unwrap();
    let mut seen = std::collections::HashSet::new();
    for f in enumerate_forests(&o).unwrap() {
        assert!(Forest::from_links(&o, f.edges()).is_some());
        assert!(seen.insert(f.edges().to_vec()));
    }
}

#[test]
fn restricted_forests_obey_the_root_rule() {
    use ObjectType::*;
    let types = vec![One, Two, One, Two, One];
    let o = ObjectSet::with_types(types).unwrap();
    let e = o.num_links();
    let expected = (0u32..(1 << e))
        .filter(|mask| {
            let links: Vec<usize> = (0..e).filter(|l| mask >> l & 1 == 1).collect();
            Forest::from_links(&o, &links).is_some_and(|f| f.is_restricted(&o))
        })
        .count();
    let got: Vec<Forest> = enumerate_restricted_forests(&o).unwrap().collect();
    assert_eq!(got.len(), expected);
    for f in &got {
        for &l in f.edges() {
            let (a, b) = o.link(l);
            assert!(!(o.is_root(a) && o.is_root(b)));
        }
    }
}

fn random_rational(rng: &mut impl Rng) -> Rat {
    let p: i64 = rng.gen_range(-9..=9);
    let q: i64 = rng.gen_range(1..=7);
    rat(p, q)
}

/// Sparse polynomial with per-variable degree ≤ `deg`, constant term included.
fn random_poly(nvars: usize, deg: u32, terms: usize, rng: &mut impl Rng) -> Poly {
    let mut p = Poly::constant(nvars, random_rational(rng));
    for _ in 0..terms {
        let e: Vec<u32> = (0..nvars).map(|_| if rng.gen_bool(0.35) { rng.gen_range(1..=deg) } else { 0 }).collect();
        p.add_term(e, random_rational(rng));
    }
    p
}

#[test]
fn product_functional_three_objects() {
    let o = ObjectSet::uniform(3).unwrap();
    let a = [rat(1, 2), rat(-2, 3), rat(5, 4)];
    let mut z = Poly::one(3);
    let mut direct = Rat::one();
    for (l, al) in a.iter().enumerate() {
        z = z.mul(&Poly::one(3).add(&Poly::var(3, l).scale(al)));
        direct *= Rat::one() + al;
    }
    let f = PolyFunctional::new(&o, z).unwrap();
    assert_eq!(bkar_evaluate(&o, &f, Variant::Bkar1).unwrap(), direct);
}

#[test]
fn dense_degree_two_on_three_objects() {
    // all 27 monomials of per-variable degree ≤ 2
    let o = ObjectSet::uniform(3).unwrap();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
    let mut z = Poly::zero(3);
    for a in 0..3 {
        for b in 0..3 {
            for c in 0..3 {
                z.add_term(vec![a, b, c], random_rational(&mut rng));
            }
        }
    }
    let direct = z.eval(&[Rat::one(), Rat::one(), Rat::one()]);
    let f = PolyFunctional::new(&o, z).unwrap();
    assert_eq!(bkar_evaluate(&o, &f, Variant::Bkar1).unwrap(), direct);
}

#[test]
fn random_degree_two_on_four_objects() {
    let o = ObjectSet::uniform(4).unwrap();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
    for _ in 0..10 {
        let z = random_poly(6, 2, 12, &mut rng);
        let direct = z.eval(&vec![Rat::one(); 6]);
        let f = PolyFunctional::new(&o, z).unwrap();
        assert_eq!(bkar_evaluate(&o, &f, Variant::Bkar1).unwrap(), direct);
    }
}

#[test]
fn restricted_identity_on_mixed_types() {
    use ObjectType::*;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
    for types in [vec![One, Two], vec![One, One, Two], vec![Two, One, Two, One], vec![One, Two, One, Two, Two]] {
        let o = ObjectSet::with_types(types).unwrap();
        let nl = o.num_links();
        for _ in 0..5 {
            let mut z = random_poly(nl, 2, 10, &mut rng);
            // drop root-root dependence
            let roots: Vec<usize> = o.links().enumerate().filter(|(_, (a, b))| o.is_root(*a) && o.is_root(*b)).map(|(l, _)| l).collect();
            let subs: Vec<(usize, Rat)> = roots.iter().map(|&l| (l, Rat::one())).collect();
            z = z.substitute(&subs);
            let direct = z.eval(&vec![Rat::one(); nl]);
            let f = PolyFunctional::new(&o, z).unwrap();
            assert_eq!(bkar_evaluate(&o, &f, Variant::Bkar2).unwrap(), direct);
        }
    }
}

#[test]
fn factorization_over_disjoint_subsets() {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(6);
    for (na, nb) in [(1, 2), (2, 2), (2, 3), (3, 3)] {
        let n = na + nb;
        let o = ObjectSet::uniform(n).unwrap();
        let oa = ObjectSet::uniform(na).unwrap();
        let ob = ObjectSet::uniform(nb).unwrap();
        let za = random_poly(oa.num_links(), 2, 5, &mut rng);
        let zb = random_poly(ob.num_links(), 2, 5, &mut rng);
        let map_a: Vec<usize> = oa.links().map(|(x, y)| o.link_index(x, y)).collect();
        let map_b: Vec<usize> = ob.links().map(|(x, y)| o.link_index(x + na, y + na)).collect();
        let z = za.embed(o.num_links(), &map_a).mul(&zb.embed(o.num_links(), &map_b));
        let whole = bkar_evaluate(&o, &PolyFunctional::new(&o, z).unwrap(), Variant::Bkar1).unwrap();
        let fa = if oa.num_links() == 0 {
            za.constant_term()
        } else {
            bkar_evaluate(&oa, &PolyFunctional::new(&oa, za).unwrap(), Variant::Bkar1).unwrap()
        };
        let fb = bkar_evaluate(&ob, &PolyFunctional::new(&ob, zb).unwrap(), Variant::Bkar1).unwrap();
        assert_eq!(whole, fa * fb);
    }
}

#[test]
fn mayer_lemma_on_random_placements() {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
    let overlap = |p: &Vec<u32>, q: &Vec<u32>| p.iter().any(|c| q.contains(c));
    for _ in 0..100 {
        let k = rng.gen_range(1..=4);
        let polymers: Vec<Vec<u32>> = (0..k)
            .map(|_| {
                let start = rng.gen_range(0..6u32);
                let len = rng.gen_range(1..=(6 - start).min(3));
                (start..start + len).collect()
            })
            .collect();
        let m = mayer_expand_nonoverlap(&polymers, overlap).unwrap();
        let mut direct = Rat::one();
        for i in 0..k {
            for j in i + 1..k {
                if overlap(&polymers[i], &polymers[j]) {
                    direct = rat(0, 1);
                }
            }
        }
        assert_eq!(m.forest_sum, direct);
        assert_eq!(m.direct, direct);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn bkar_identity_holds(n in 2usize..=5, seed in any::<u64>()) {
        let o = ObjectSet::uniform(n).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let z = random_poly(o.num_links(), 2, 8, &mut rng);
        let direct = z.eval(&vec![Rat::one(); o.num_links()]);
        let f = PolyFunctional::new(&o, z).unwrap();
        prop_assert_eq!(bkar_evaluate(&o, &f, Variant::Bkar1).unwrap(), direct);
    }

    #[test]
    fn z_of_w_is_a_path_minimum(seed in any::<u64>()) {
        let o = ObjectSet::uniform(5).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let forests: Vec<Forest> = enumerate_forests(&o).unwrap().collect();
        let f = &forests[rng.gen_range(0..forests.len())];
        let w: Vec<f64> = (0..f.len()).map(|_| rng.gen()).collect();
        for (l, (a, b)) in o.links().enumerate() {
            let z = z_of_w(&o, f, l, &w, Variant::Bkar1);
            if f.same_component(a, b) {
                prop_assert!(z > 0.0 && z <= 1.0);
                if f.edges().contains(&l) {
                    let pos = f.edges().iter().position(|&e| e == l).unwrap();
                    prop_assert_eq!(z, w[pos]);
                }
            } else {
                prop_assert_eq!(z, 0.0);
            }
        }
    }
}
