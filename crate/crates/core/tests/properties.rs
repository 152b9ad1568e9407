//! Randomized invariants for the probability kernel, the solver step, and
//! the symmetry tooling.

use proptest::prelude::*;

use dib_core::*;

fn labels(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

fn dist_strategy(n: usize) -> impl Strategy<Value = Distribution> {
    proptest::collection::vec(0.05f64..1.0, n).prop_map(move |w| {
        let z: f64 = w.iter().sum();
        Distribution::new(labels("a", n), w.iter().map(|v| v / z).collect()).unwrap()
    })
}

fn channel_between(
    inp: &'static str,
    out: &'static str,
    n: usize,
    m: usize,
) -> impl Strategy<Value = Channel> {
    proptest::collection::vec(proptest::collection::vec(0.05f64..1.0, m), n).prop_map(move |rows| {
        let rows = rows
            .into_iter()
            .map(|r| {
                let z: f64 = r.iter().sum();
                r.iter().map(|v| v / z).collect()
            })
            .collect();
        Channel::new(labels(inp, n), labels(out, m), rows).unwrap()
    })
}

fn channel_strategy(n: usize, m: usize) -> impl Strategy<Value = Channel> {
    channel_between("a", "t", n, m)
}

fn joint_strategy(nx: usize, ny: usize) -> impl Strategy<Value = Joint> {
    proptest::collection::vec(proptest::collection::vec(0.05f64..1.0, ny), nx).prop_map(
        move |rows| {
            let z: f64 = rows.iter().flatten().sum();
            let rows = rows
                .iter()
                .map(|r| r.iter().map(|v| v / z).collect())
                .collect();
            Joint::new(labels("x", nx), labels("y", ny), rows).unwrap()
        },
    )
}

fn perm_strategy(n: usize) -> impl Strategy<Value = Permutation> {
    Just(()).prop_perturb(move |_, mut rng| {
        let mut images: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = (rng.next_u64() % (i as u64 + 1)) as usize;
            images.swap(i, j);
        }
        Permutation::new(images).unwrap()
    })
}

proptest! {
    #[test]
    fn kl_nonnegative_and_zero_on_self(p in dist_strategy(5), q in dist_strategy(5)) {
        let d = kl_divergence(&p, &q).unwrap();
        prop_assert!(d >= -1e-14);
        prop_assert!(kl_divergence(&p, &p).unwrap().abs() <= 1e-14);
    }

    #[test]
    fn mutual_information_is_kl_from_product(j in joint_strategy(3, 4)) {
        let prod = tensor_dists(&j.x_marginal(), &j.y_marginal());
        let d = kl_divergence(&j.flatten(), &prod).unwrap();
        prop_assert!((mutual_information(&j) - d).abs() <= 1e-12);
    }

    #[test]
    fn pushforward_is_a_distribution(p in dist_strategy(4), k in channel_strategy(4, 3)) {
        let q = pushforward(&k, &p).unwrap();
        let total: f64 = q.probs().iter().sum();
        prop_assert!((total - 1.0).abs() <= 1e-12);
        prop_assert!(q.probs().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn composition_is_associative(
        k1 in channel_between("a", "b", 3, 4),
        k2 in channel_between("b", "c", 4, 3),
        k3 in channel_between("c", "d", 3, 2),
    ) {
        let left = compose_channels(&k3, &compose_channels(&k2, &k1).unwrap()).unwrap();
        let right = compose_channels(&compose_channels(&k3, &k2).unwrap(), &k1).unwrap();
        for (a, b) in left.rows().iter().flatten().zip(right.rows().iter().flatten()) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn data_processing_for_latent_divergence(
        p in dist_strategy(5),
        q in dist_strategy(5),
        k in channel_strategy(5, 3),
    ) {
        let latent = latent_divergence(&k, &p, &q).unwrap();
        let full = kl_divergence(&p, &q).unwrap();
        prop_assert!(latent <= full + 1e-12);
        prop_assert!(latent >= -1e-14);
    }

    #[test]
    fn projection_preserves_family_divergence(p in dist_strategy(6)) {
        // cell-constant reference ⇒ the cell projection loses no divergence
        let u = Distribution::uniform(p.labels().to_vec()).unwrap();
        let part = partition_from_dib_relation(&p, &u, 1e-9).unwrap();
        let proj = projection_channel(&part);
        let d = latent_divergence(&proj, &p, &u).unwrap();
        let lambda = kl_divergence(&p, &u).unwrap();
        prop_assert!((d - lambda).abs() <= 1e-12);
    }

    #[test]
    fn ba_step_is_stochastic_and_descends(
        p in dist_strategy(4),
        q in channel_strategy(4, 5),
        beta in 0.0f64..50.0,
    ) {
        let u = Distribution::uniform(p.labels().to_vec()).unwrap();
        let next = ba_step(&q, &p, &u, beta).unwrap();
        for row in next.rows() {
            let z: f64 = row.iter().sum();
            prop_assert!((z - 1.0).abs() <= 1e-12);
            prop_assert!(row.iter().all(|&v| v >= 0.0));
        }
        let before = lagrangian(&q, &p, &u, beta).unwrap();
        let after = lagrangian(&next, &p, &u, beta).unwrap();
        prop_assert!(after <= before + 1e-10, "{after} > {before}");
    }

    #[test]
    fn quotient_roundtrip_is_congruent(
        p in dist_strategy(6),
        q in channel_strategy(6, 4),
    ) {
        let u = Distribution::uniform(p.labels().to_vec()).unwrap();
        let part = partition_from_dib_relation(&p, &u, 1e-9).unwrap();
        let factored = enforce_factorization(&q, &p, &part).unwrap();
        // factored rows are constant on cells, hence factor through the projection
        for cell in part.cells() {
            for &a in cell {
                for (x, y) in factored.row(a).iter().zip(factored.row(cell[0])) {
                    prop_assert!((x - y).abs() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn group_closure_is_closed(g1 in perm_strategy(5), g2 in perm_strategy(5)) {
        let g = group_closure(Permutation::identity(5), &[g1, g2], 200).unwrap();
        for a in g.elements() {
            prop_assert!(g.elements().contains(&a.inverse()));
            for b in g.elements() {
                prop_assert!(g.elements().contains(&a.compose(b)));
            }
        }
    }

    #[test]
    fn orbit_average_is_idempotent_and_symmetric(
        p in dist_strategy(6),
        k in channel_strategy(6, 3),
        g1 in perm_strategy(6),
    ) {
        let g = group_closure(Permutation::identity(6), &[g1], 1000).unwrap();
        let avg = group_average_channel(&k, &p, &g).unwrap();
        let twice = group_average_channel(&avg, &p, &g).unwrap();
        for (a, b) in avg.rows().iter().flatten().zip(twice.rows().iter().flatten()) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
        prop_assert!(divergence_from_symmetric(&avg, &p, &g).unwrap() <= 1e-12);
    }

    #[test]
    fn entropy_is_permutation_invariant(p in dist_strategy(6), phi in perm_strategy(6)) {
        let moved: Vec<f64> = {
            let mut v = vec![0.0; 6];
            for i in 0..6 {
                v[phi.apply(i)] = p.probs()[i];
            }
            v
        };
        let q = Distribution::new(p.labels().to_vec(), moved).unwrap();
        prop_assert!((p.entropy() - q.entropy()).abs() <= 1e-12);
    }

    #[test]
    fn schedule_is_strictly_decreasing(
        max in 1.0f64..1e6,
        ratio in 1e-6f64..0.5,
        count in 2usize..200,
    ) {
        let min = max * ratio;
        let s = geometric_schedule(max, min, count).unwrap();
        prop_assert_eq!(s.len(), count);
        prop_assert!((s[0] - max).abs() <= 1e-9 * max);
        prop_assert!((s[count - 1] - min).abs() <= 1e-9 * max);
        prop_assert!(s.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn effective_cardinality_bounds(
        p in dist_strategy(5),
        q in channel_strategy(5, 4),
    ) {
        let u = Distribution::uniform(p.labels().to_vec()).unwrap();
        let card = effective_cardinality(&q, &p, &u, EFF_CARD_THRESHOLD);
        prop_assert!(card >= 1 && card <= 4);
    }
}
