use nalgebra::DMatrix;

use sgf::factor::{factorize, CompressionMode, Degree, FactorOptions, Scheme};
use sgf::krylov::{estimate_extreme_eigs, InverseOf};
use sgf::problems::{
    darcy_tpfa, elasticity_hex_beam, elasticity_hex_beam_free, poisson7, poisson7_unit, rigid_body_modes,
    synth_perm_field, tile_field, Face, Lame, ProblemInstance, ScalarField,
};
use sgf::sparse::CsrMatrix;

fn dense(a: &CsrMatrix) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(a.dim(), a.dim());
    for (i, j, v) in a.iter() {
        m[(i, j)] = v;
    }
    m
}

fn min_eig(a: &CsrMatrix) -> f64 {
    dense(a).symmetric_eigenvalues().min()
}

fn assert_spd(p: &ProblemInstance) {
    p.validate().unwrap();
    let l = min_eig(&p.matrix);
    assert!(l > 0.0, "{}: smallest eigenvalue {l:e}", p.label);
}

#[test]
fn poisson_three_cubed_smallest_eigenvalue() {
    let p = poisson7_unit(3).unwrap();
    assert_eq!(p.dim(), 27);
    let h = 0.25f64;
    let expect = 3.0 * (2.0 - 2.0 * (std::f64::consts::PI / 4.0).cos()) / (h * h);
    assert!((min_eig(&p.matrix) - expect).abs() <= 1e-10 * expect);
}

#[test]
fn generators_are_spd_at_small_sizes() {
    assert_spd(&poisson7(5, 4, 3, [0.2, 0.3, 0.5]).unwrap());
    assert_spd(&poisson7_unit(8).unwrap());
    for contrast in [1.0, 1e3, 1e6] {
        let f = synth_perm_field([7, 6, 5], 3, contrast, 4).unwrap();
        for face in [Face::XMin, Face::ZMax] {
            assert_spd(&darcy_tpfa(&f, [0.1, 0.2, 0.3], face).unwrap());
        }
    }
    for r in [1, 2] {
        assert_spd(&elasticity_hex_beam(r, Lame::new(1.0, 1.0), Lame::new(50.0, 50.0)).unwrap());
    }
}

#[test]
fn tiled_darcy_is_spd_and_periodic() {
    let base = synth_perm_field([3, 3, 3], 2, 1e4, 7).unwrap();
    let tiled = tile_field(&base, [2, 2, 2]).unwrap();
    let p = darcy_tpfa(&tiled, [1.0 / 6.0; 3], Face::XMin).unwrap();
    assert_spd(&p);
    let id = |i: usize, j: usize, k: usize| i + 6 * (j + 6 * k);
    let row = |c: usize| -> Vec<(i64, f64)> {
        let mut r: Vec<(i64, f64)> = p.matrix.row(c).map(|(j, v)| (j as i64 - c as i64, v)).collect();
        r.sort_by_key(|e| e.0);
        r
    };
    let a = row(id(1, 1, 1));
    let b = row(id(4, 4, 4));
    assert_eq!(a.len(), 7);
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.0, y.0);
        assert!((x.1 - y.1).abs() <= 1e-12 * x.1.abs().max(1.0));
    }
}

#[test]
fn high_contrast_conditioning() {
    let n = 24;
    let uniform = darcy_tpfa(&ScalarField::constant([n; 3], 1.0).unwrap(), [1.0 / n as f64; 3], Face::XMin).unwrap();
    let rough = darcy_tpfa(&synth_perm_field([n; 3], 4, 1e6, 0).unwrap(), [1.0 / n as f64; 3], Face::XMin).unwrap();
    // λ_min from Lanczos on the inverse, applied through an exact factorization
    let kappa = |p: &ProblemInstance| {
        let (hi, _) = estimate_extreme_eigs(&p.matrix, 100).unwrap();
        let exact = FactorOptions::new(Scheme::NestAllAll, Degree::Constant).with_mode(CompressionMode::Exact);
        let pc = factorize(p, exact).unwrap();
        let (inv_hi, _) = estimate_extreme_eigs(&InverseOf(&pc), 100).unwrap();
        hi * inv_hi
    };
    let (ku, kr) = (kappa(&uniform), kappa(&rough));
    assert!(kr >= 1e4 * ku, "κ uniform {ku:e}, κ contrast {kr:e}");
}

#[test]
fn free_beam_annihilates_rigid_modes() {
    let p = elasticity_hex_beam_free(3, Lame::new(1.0, 1.0), Lame::new(50.0, 50.0)).unwrap();
    let scale = p.matrix.norm_1();
    for m in rigid_body_modes(&p.coords) {
        let r = p.matrix.matvec(&m);
        let rn = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mn = m.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(rn <= 1e-9 * scale * mn);
    }
}

#[test]
fn clamped_beam_is_positive_at_refinement_one() {
    let p = elasticity_hex_beam(1, Lame::new(1.0, 1.0), Lame::new(50.0, 50.0)).unwrap();
    assert!(min_eig(&p.matrix) > 0.0);
    // component-major layout: the first third of the unknowns are x displacements
    let nv = p.coords.len();
    assert_eq!(p.dim(), 3 * nv);
    assert_eq!(p.grid.components, 3);
}

#[test]
fn generators_are_deterministic() {
    let a = synth_perm_field([6, 5, 4], 3, 1e5, 42).unwrap();
    let b = synth_perm_field([6, 5, 4], 3, 1e5, 42).unwrap();
    assert_eq!(a.values, b.values);
    let pa = darcy_tpfa(&a, [0.1; 3], Face::YMin).unwrap();
    let pb = darcy_tpfa(&b, [0.1; 3], Face::YMin).unwrap();
    assert_eq!(pa.matrix, pb.matrix);
    let ea = elasticity_hex_beam(2, Lame::new(1.0, 1.0), Lame::new(50.0, 50.0)).unwrap();
    let eb = elasticity_hex_beam(2, Lame::new(1.0, 1.0), Lame::new(50.0, 50.0)).unwrap();
    assert_eq!(ea.matrix, eb.matrix);
    assert_eq!(ea.rhs, eb.rhs);
}
