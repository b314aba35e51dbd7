//! Property tests over random layers, cones, points and weight values.

use nalgebra::DMatrix;
use proptest::prelude::*;

use rsf_core::analysis::decision_height;
use rsf_core::construction::BuildConfig;
use rsf_core::geometry::Cone;
use rsf_core::layers::{apply_projection_layer, realize_cone, ProjectionLayer};
use rsf_core::network::ModifiedNetwork;
use rsf_core::surfaces::SurfaceSpec;
use rsf_core::weights::{f2s, s2f};

fn unit(v: &[f64]) -> Option<Vec<f64>> {
    let n = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    (n > 1e-3).then(|| v.iter().map(|a| a / n).collect())
}

fn layer_strategy() -> impl Strategy<Value = ProjectionLayer> {
    (
        prop::collection::vec(-1.0..1.0f64, 2..=4),
        0.05..2.0f64,
        -3.0..3.0f64,
    )
        .prop_filter_map("degenerate direction", |(v, offset, g)| {
            let beta = unit(&v)?;
            let d = beta.len();
            ProjectionLayer::new(beta, offset, g, vec![0.0; d]).ok()
        })
}

fn point(d: usize) -> impl Strategy<Value = (Vec<f64>, f64)> {
    (prop::collection::vec(-2.0..2.0f64, d), -2.0..2.0f64)
}

fn well_conditioned_cone(n: usize) -> impl Strategy<Value = Cone> {
    (prop::collection::vec(-0.4..0.4f64, n * n), prop::collection::vec(-1.0..1.0f64, n)).prop_map(
        move |(noise, b)| {
            let a = DMatrix::from_fn(n, n, |i, j| noise[i * n + j] + if i == j { 1.0 } else { 0.0 });
            Cone::new(a, b).unwrap()
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 256, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn projection_lands_in_closed_halfspace_and_is_idempotent(
        (layer, (x, y)) in layer_strategy().prop_flat_map(|l| { let d = l.dim(); (Just(l), point(d)) })
    ) {
        let (x1, y1) = apply_projection_layer(&layer, &x, y);
        let value = layer.halfspace().value(&x1);
        prop_assert!(value >= -1e-12);
        // Idempotent up to rounding: x1 may sit an ulp outside the half-space.
        let (x2, y2) = apply_projection_layer(&layer, &x1, y1);
        for (a, b) in x1.iter().zip(&x2) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
        prop_assert!((y1 - y2).abs() <= 1e-12);
        if layer.halfspace().value(&x) < 0.0 {
            prop_assert!(value.abs() <= 1e-12);
        } else {
            prop_assert_eq!(&x1, &x);
        }
    }

    #[test]
    fn realized_cone_matches_layer_on_its_ball(
        (layer, (x, y)) in layer_strategy().prop_flat_map(|l| { let d = l.dim(); (Just(l), point(d)) })
    ) {
        let cone = realize_cone(&layer, 8.0, 1.0).unwrap();
        let mut z = x.clone();
        z.push(y);
        let p = cone.project(&z);
        let (x1, y1) = apply_projection_layer(&layer, &x, y);
        for (a, b) in p.iter().zip(x1.iter().chain(std::iter::once(&y1))) {
            prop_assert!((a - b).abs() <= 1e-9 * (1.0 + b.abs()), "{:?} vs {:?}", p, (x1.clone(), y1));
        }
    }

    #[test]
    fn cone_projection_is_idempotent_and_coords_invert(
        (cone, z) in (2usize..=4).prop_flat_map(|n| (well_conditioned_cone(n), prop::collection::vec(-3.0..3.0f64, n)))
    ) {
        let p = cone.project(&z);
        prop_assert!(cone.contains(&p, 1e-9));
        let q = cone.project(&p);
        for (a, b) in p.iter().zip(&q) {
            prop_assert!((a - b).abs() <= 1e-9);
        }
        let back = cone.reconstruct(&cone.coords(&z));
        for (a, b) in back.iter().zip(&z) {
            prop_assert!((a - b).abs() <= 1e-9 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn float_strings_round_trip(bits in any::<u64>()) {
        let v = f64::from_bits(bits);
        prop_assume!(v.is_finite());
        prop_assert_eq!(s2f(&f2s(v)).unwrap().to_bits(), v.to_bits());
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 32, failure_persistence: None, ..ProptestConfig::default() })]

    // The zero contour is a graph: F(x, y) + y does not depend on y.
    #[test]
    fn decision_function_has_slope_minus_one(
        seed in any::<u64>(),
        delta in 0.1..0.29f64,
        x in prop::collection::vec(-0.7..0.7f64, 2),
        ys in prop::collection::vec(-3.0..3.0f64, 4),
    ) {
        let config = BuildConfig {
            d: 2,
            radius: 1.0,
            delta,
            surface: SurfaceSpec { name: "sinusoid".into(), params: Default::default() },
            seed,
            margin: 1.0,
        };
        let (net, phi) = ModifiedNetwork::build(&config).unwrap();
        let h = decision_height(&net, &x).unwrap();
        for y in ys {
            let f = net.eval(&x, y);
            prop_assert!((f + y - h).abs() <= 1e-9, "F + y = {} but height {}", f + y, h);
        }
        let bound = rsf_core::construction::error_bound(2, 1.0, delta, phi.second_derivative_bound()).unwrap();
        prop_assert!((h - phi.value(&x)).abs() <= bound);
    }
}
