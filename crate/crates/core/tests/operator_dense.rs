mod common;

use common::{dense_helmholtz, lens_velocity, norm, random_vec, rel_diff, rng, Dense};
use helmsweep::direct::ExactFactorization;
use helmsweep::media::{
    make_velocity, FaceFlags, Grid3D, PmlProfile, VelocityKind, VelocityParams, DEFAULT_PML_CONSTANT,
};
use helmsweep::operator::{assemble, gather_layers, Padding, StencilCoefficients, SubproblemSpec, X1, X2, X3};
use helmsweep::C64;
use proptest::prelude::*;

fn lens_problem(n: usize, omega: f64, layers: usize, faces: FaceFlags) -> (StencilCoefficients, Dense) {
    let grid = Grid3D::new(n, omega).unwrap();
    let vel = make_velocity(VelocityKind::Lens, &grid, &VelocityParams::default()).unwrap();
    let pml = if layers == 0 {
        PmlProfile::none(&grid)
    } else {
        PmlProfile::new(DEFAULT_PML_CONSTANT, layers, &grid, faces).unwrap()
    };
    let a = assemble(&grid, &vel, &pml).unwrap();
    let dense = dense_helmholtz(n, omega, &lens_velocity(&grid), layers, DEFAULT_PML_CONSTANT, faces);
    (a, dense)
}

fn layer_nodes(dims: [usize; 3], axis: usize, layers: std::ops::Range<usize>) -> Vec<usize> {
    let mut out = Vec::new();
    for k in 0..dims[2] {
        for j in 0..dims[1] {
            for i in 0..dims[0] {
                if layers.contains(&[i, j, k][axis]) {
                    out.push(i + dims[0] * (j + dims[1] * k));
                }
            }
        }
    }
    out
}

#[test]
fn matrix_free_apply_matches_dense_assembly() {
    let omega = 2.0 * std::f64::consts::PI * 1.5;
    let cases = [(2, FaceFlags::two_faces()), (2, FaceFlags::all_pml()), (0, FaceFlags::all_dirichlet())];
    let mut r = rng(11);
    for (layers, faces) in cases {
        let (a, dense) = lens_problem(5, omega, layers, faces);
        for _ in 0..125 {
            let v = random_vec(125, &mut r);
            let err = rel_diff(&a.apply(&v).unwrap(), &dense.matvec(&v));
            assert!(err <= 1e-13, "layers {layers}: rel err {err:e}");
        }
    }
}

#[test]
fn visited_entries_reproduce_dense_matrix() {
    let (a, dense) = lens_problem(5, 7.0, 2, FaceFlags::all_pml());
    let mut rebuilt = vec![C64::new(0.0, 0.0); dense.size * dense.size];
    a.visit_entries(|row, col, val| rebuilt[row * dense.size + col] += val);
    assert!(rel_diff(&rebuilt, &dense.data) <= 1e-14);
}

#[test]
fn couple_matches_dense_off_diagonal_block() {
    let (a, dense) = lens_problem(5, 6.0, 2, FaceFlags::all_pml());
    let dims = a.dims();
    let mut r = rng(3);
    for axis in [X1, X2, X3] {
        for (from, to) in [(0..2, 2..4), (3..5, 1..3)] {
            let u = random_vec(25 * from.len(), &mut r);
            let got = a.couple(axis, from.clone(), to.clone(), &u).unwrap();
            let cols = layer_nodes(dims, axis, from.clone());
            let rows = layer_nodes(dims, axis, to.clone());
            let want: Vec<C64> = rows
                .iter()
                .map(|&row| cols.iter().zip(&u).map(|(&c, x)| dense.at(row, c) * x).sum())
                .collect();
            assert!(rel_diff(&got, &want) <= 1e-13, "axis {axis}");
        }
        assert!(a.couple(axis, 0..1, 2..3, &random_vec(25, &mut r)).is_err());
    }
}

#[test]
fn restriction_is_principal_block() {
    let (a, dense) = lens_problem(5, 6.0, 2, FaceFlags::all_pml());
    for axis in [X2, X3] {
        let spec = SubproblemSpec {
            axis,
            owned: 1..4,
            padding: Padding::None,
            aux_layers: 0,
            exact: true,
        };
        let sub = a.extract(&spec, DEFAULT_PML_CONSTANT).unwrap();
        let nodes = layer_nodes(a.dims(), axis, 1..4);
        let mut block = vec![C64::new(0.0, 0.0); nodes.len() * nodes.len()];
        sub.visit_entries(|row, col, val| block[row * nodes.len() + col] += val);
        let want: Vec<C64> = nodes
            .iter()
            .flat_map(|&r| nodes.iter().map(move |&c| (r, c)))
            .map(|(r, c)| dense.at(r, c))
            .collect();
        assert!(rel_diff(&block, &want) <= 1e-14);
    }
}

#[test]
fn moving_pml_against_the_domain_face_equals_the_exact_extension() {
    // A moving PML whose ghost plane is the domain face coincides with the original PML.
    let (a, _) = lens_problem(7, 8.0, 3, FaceFlags::two_faces());
    let spec = |exact| SubproblemSpec {
        axis: X3,
        owned: 3..5,
        padding: Padding::Low,
        aux_layers: 3,
        exact,
    };
    let moving = a.extract(&spec(false), DEFAULT_PML_CONSTANT).unwrap();
    let exact = a.extract(&spec(true), DEFAULT_PML_CONSTANT).unwrap();
    assert_eq!(moving.dims(), exact.dims());
    let mut r = rng(8);
    let f = random_vec(moving.len(), &mut r);
    let u_moving = ExactFactorization::new(&moving).unwrap().solve(&f).unwrap();
    let u_exact = ExactFactorization::new(&exact).unwrap().solve(&f).unwrap();
    assert!(rel_diff(&u_moving, &u_exact) <= 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn coupling_reaches_only_adjacent_layers(axis in 0usize..3, layer in 0usize..6, seed in any::<u64>()) {
        let grid = Grid3D::new(6, 9.0).unwrap();
        let vel = make_velocity(VelocityKind::Waveguide, &grid, &VelocityParams::default()).unwrap();
        let pml = PmlProfile::new(DEFAULT_PML_CONSTANT, 2, &grid, FaceFlags::all_pml()).unwrap();
        let a = assemble(&grid, &vel, &pml).unwrap();
        let dims = a.dims();
        let mut r = rng(seed);
        let mut v = vec![C64::new(0.0, 0.0); a.len()];
        let block = random_vec(36, &mut r);
        a.scatter_layers(axis, layer..layer + 1, &block, &mut v);
        let av = a.apply(&v).unwrap();
        for t in 0..6 {
            let slice = gather_layers(dims, axis, t..t + 1, &av);
            let touched = norm(&slice) > 0.0;
            prop_assert_eq!(touched, t.abs_diff(layer) <= 1, "layer {} from {}", t, layer);
        }
    }
}
