//! Randomized invariants of the discretization and the time stepper.

use std::path::Path;
use std::sync::Arc;

use penfem::analysis::{convergence_rates, velocity_l2_error};
use penfem::assembly::{apply_convection, assemble_convection};
use penfem::solver::{BoundaryKind, Convection, Discretization, Parameters, PicardConfig, SystemForm};
use penfem::stepper::{Checkpoint, Forcing, State, Stepper};
use penfem::{ElementPair, Mesh};
use proptest::prelude::*;

fn pair_strategy() -> impl Strategy<Value = ElementPair> {
    prop_oneof![Just(ElementPair::P2P1), Just(ElementPair::P3P2), Just(ElementPair::CrP0)]
}

fn discretization(level: u32, pair: ElementPair) -> Discretization {
    Discretization::new(level, pair, BoundaryKind::NoSlip).unwrap()
}

/// Deterministic pseudo-random vector driven by a proptest seed.
fn vector(seed: u64, n: usize) -> Vec<f64> {
    let mut x = seed | 1;
    (0..n)
        .map(|_| {
            x ^= x << 13;
            x ^= x >> 7;
            x ^= x << 17;
            (x >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn convection_conserves_energy(pair in pair_strategy(), level in 1u32..=2, seed in any::<u64>(), scale in 1e-3f64..1e3) {
        let d = discretization(level, pair);
        let n = d.velocity_dim();
        let w: Vec<f64> = vector(seed, n).iter().map(|v| v * scale).collect();
        let u = vector(seed.wrapping_add(1), n);
        let nw = assemble_convection(&d.velocity, &w).unwrap();
        let uu: f64 = u.iter().map(|v| v * v).sum();
        prop_assert!(nw.quad_form(&u).abs() <= 1e-12 * uu * scale.max(1.0));
        prop_assert_eq!(nw.add_scaled(1.0, &nw.transpose(), 1.0).unwrap().max_abs(), 0.0);

        // matrix-free action agrees with the assembled matrix
        let a = nw.mul_vec(&u);
        let b = apply_convection(&d.velocity, &w, &u).unwrap();
        let top = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() <= 1e-12 * top.max(1e-300));
        }
    }

    #[test]
    fn interpolation_reproduces_velocity_polynomials(pair in pair_strategy(), level in 1u32..=3, c in prop::array::uniform6(-2.0f64..2.0)) {
        let d = discretization(level, pair);
        let m = pair.degree() as i32;
        // a polynomial of total degree m in each component
        let f = move |x: f64, y: f64| {
            [
                c[0] + c[1] * x.powi(m) + c[2] * y.powi(m),
                c[3] + c[4] * (x * y.powi(m - 1)) + c[5] * x,
            ]
        };
        let u = d.velocity.interpolate_vector(f).unwrap();
        prop_assert!(velocity_l2_error(&d.velocity, &u, f).unwrap() < 1e-12);
    }

    #[test]
    fn rates_recover_power_laws(p in 0.5f64..5.0, c in 1e-6f64..1e3, n in 2usize..7) {
        let hs: Vec<f64> = (1..=n).map(|i| 0.5f64.powi(i as i32)).collect();
        let es: Vec<f64> = hs.iter().map(|h| c * h.powf(p)).collect();
        for r in convergence_rates(&es, &hs).unwrap() {
            prop_assert!((r - p).abs() < 1e-9);
        }
    }

    #[test]
    fn checkpoint_text_round_trip_is_exact(seed in any::<u64>(), len in 0usize..40, n in 1usize..1000, t in 0.0f64..1e4) {
        let u = vector(seed, len).iter().map(|v| v * 10f64.powi((seed % 600) as i32 - 300)).collect();
        let cp = Checkpoint {
            state: State { u, p: vector(seed ^ 7, len / 2), t, n },
            previous: (seed % 2 == 0).then(|| State { u: vector(seed ^ 9, len), p: vector(seed ^ 11, len / 2), t: t / 2.0, n: n - 1 }),
            anchor: (seed % 3 == 0).then(|| vector(seed ^ 3, len + 1)),
        };
        let mut buf = Vec::new();
        cp.write_to(&mut buf).unwrap();
        let back = Checkpoint::read_from(buf.as_slice(), Path::new("mem")).unwrap();
        prop_assert_eq!(back, cp);
    }

    #[test]
    fn mesh_cells_tile_the_square(level in 1u32..=6) {
        let mesh = Mesh::unit_square(level).unwrap();
        let area: f64 = (0..mesh.num_triangles()).map(|t| mesh.signed_area(t)).sum();
        prop_assert!((area - 1.0).abs() < 1e-12);
        prop_assert!((0..mesh.num_triangles()).all(|t| mesh.signed_area(t) > 0.0));
        let n = mesh.divisions();
        // Euler characteristic of a disc: V - E + F = 1
        prop_assert_eq!(mesh.num_nodes() + mesh.num_triangles(), mesh.num_edges() + 1);
        prop_assert_eq!(mesh.num_triangles(), 2 * n * n);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    /// Without forcing the kinetic energy never grows, for any initial
    /// field, viscosity and step.
    #[test]
    fn unforced_energy_is_nonincreasing(pair in pair_strategy(), seed in any::<u64>(), nu in 1e-3f64..1.0, dt in 1e-3f64..0.5) {
        let d = Arc::new(discretization(2, pair));
        let params = Parameters::new(nu, 1e-6, dt).unwrap();
        let form = if pair == ElementPair::CrP0 { SystemForm::Eliminated } else { SystemForm::Coupled };
        let mut st = Stepper::new(d.clone(), params, Convection::Skew, form, PicardConfig::default(), Forcing::Zero).unwrap();
        let mut u = vector(seed, d.velocity_dim());
        d.ops.bc.impose(&mut u);
        let mut energies = vec![d.mass_norm(&u)];
        st.march(State { u, ..State::zero(&d) }, 5, |_, s| {
            energies.push(d.mass_norm(&s.u));
            Ok(())
        }).unwrap();
        for w in energies.windows(2) {
            prop_assert!(w[1] <= w[0], "{energies:?}");
        }
    }
}
