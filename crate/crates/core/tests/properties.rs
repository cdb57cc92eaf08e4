//! Randomized invariants over geometry, kernels, Gram assembly, solves and
//! reconstructions.

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use rkct::analysis::Eigen;
use rkct::data::{make_mesh, simulate_sinogram, AngleGrid, Ellipse, GridKind, Phantom};
use rkct::fbp::{fbp_reconstruct, FbpConfig};
use rkct::geometry::{
    direct_dist2, euclidean_backproject, euclidean_project, euler_matrix, half_chord,
    random_rotation, relative_angle_data, Orientation,
};
use rkct::gram::{assemble_dense, GramMatrix};
use rkct::kernels::{
    bivariate_normal_cdf, erf, induced_kernel, normal_cdf, phi_antiderivative, GaussianKernelParams,
};
use rkct::recon::{evaluate_reconstruction, interpolate_sinogram, RasterSpec, SinogramInterpolant};
use rkct::solve::CoefficientField;

const GAMMAS: [f64; 3] = [1.0, 32.0, 2048.0];

fn params(gamma: f64) -> GaussianKernelParams {
    GaussianKernelParams::new(gamma, 2).unwrap()
}

fn unit_vector(raw: &[f64]) -> Vec<f64> {
    let n = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
    raw.iter().map(|v| v / n).collect()
}

fn orthogonality_error(o: &Orientation) -> f64 {
    let m = o.matrix();
    let n = m.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let dot: f64 = (0..n).map(|k| m[(i, k)] * m[(j, k)]).sum();
            worst = worst.max((dot - if i == j { 1.0 } else { 0.0 }).abs());
        }
    }
    worst
}

fn det3(o: &Orientation) -> f64 {
    let m = o.matrix();
    m[(0, 0)] * (m[(1, 1)] * m[(2, 2)] - m[(1, 2)] * m[(2, 1)])
        - m[(0, 1)] * (m[(1, 0)] * m[(2, 2)] - m[(1, 2)] * m[(2, 0)])
        + m[(0, 2)] * (m[(1, 0)] * m[(2, 1)] - m[(1, 1)] * m[(2, 0)])
}

/// A point of the open ball of radius `r` from raw coordinates in [-1, 1].
fn shrink(raw: &[f64], r: f64) -> Vec<f64> {
    let n = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
    let s = if n > 1.0 { r / n } else { r };
    raw.iter().map(|v| v * s).collect()
}

fn coords(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, n)
}

fn grid(angles: Vec<f64>) -> AngleGrid {
    AngleGrid::from_angles(angles, GridKind::Custom, None, 0).unwrap()
}

fn gram_matrix(angles: Vec<f64>, m: usize, gamma: f64) -> GramMatrix {
    assemble_dense(&params(gamma), &grid(angles), &make_mesh(m).unwrap()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn euler_matrices_are_rotations(raw in coords(3).prop_filter("nonzero", |v| v.iter().any(|x| x.abs() > 1e-3))) {
        let theta = unit_vector(&raw);
        let e = euler_matrix(&theta).unwrap();
        prop_assert!(orthogonality_error(&e) <= 1e-12);
        prop_assert!((det3(&e) - 1.0).abs() <= 1e-12);
        let back = e.apply_transpose(&[0.0, 0.0, 1.0]);
        for (a, b) in back.iter().zip(&theta) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn projection_contracts_and_inverts_backprojection(seed in any::<u64>(), raw in coords(3), x in coords(2)) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r = random_rotation(&mut rng, 3);
        let z = shrink(&raw, 0.99);
        let p = euclidean_project(&r, &z).unwrap();
        let (np, nz) = (p.iter().map(|v| v * v).sum::<f64>(), z.iter().map(|v| v * v).sum::<f64>());
        prop_assert!(np <= nz + 1e-14);
        let x = shrink(&x, 0.9);
        let round = euclidean_project(&r, &euclidean_backproject(&r, &x).unwrap()).unwrap();
        for (a, b) in round.iter().zip(&x) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn distance_decomposition_matches_direct_norm(
        seed in any::<u64>(),
        x1 in coords(2),
        x2 in coords(2),
        t in prop::collection::vec(-1.0f64..1.0, 2),
        planar in any::<bool>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = if planar { 2 } else { 3 };
        let (x1, x2) = (shrink(&x1[..n - 1], 0.95), shrink(&x2[..n - 1], 0.95));
        let r1 = random_rotation(&mut rng, n);
        // half the draws share an orientation to exercise the parallel branch
        let r2 = if seed % 2 == 0 { r1.clone() } else { random_rotation(&mut rng, n) };
        let rad = relative_angle_data(&r1, &r2, &x1, &x2).unwrap();
        let (z1, z2) = (t[0] * half_chord(&x1), t[1] * half_chord(&x2));
        let direct = direct_dist2(&r1, &r2, &x1, z1, &x2, z2);
        prop_assert!((rad.decomposed_dist2(z1, z2) - direct).abs() <= 1e-10, "{} vs {}", rad.decomposed_dist2(z1, z2), direct);
    }

    #[test]
    fn special_function_symmetries(z in -6.0f64..6.0, a in -4.0f64..4.0, b in -4.0f64..4.0, rho in -0.95f64..0.95) {
        prop_assert!((erf(z) + erf(-z)).abs() <= 1e-15);
        prop_assert!((phi_antiderivative(z) - phi_antiderivative(-z)).abs() <= 1e-12 * (1.0 + z * z));
        let p = bivariate_normal_cdf(a, b, rho).unwrap();
        prop_assert!((p - bivariate_normal_cdf(b, a, rho).unwrap()).abs() <= 1e-14);
        // P(Z₁ ≤ a, Z₂ ≤ b) + P(Z₁ ≤ a, Z₂ > b) = Φ(a)
        let q = bivariate_normal_cdf(a, -b, -rho).unwrap();
        prop_assert!((p + q - normal_cdf(a)).abs() <= 1e-12);
        prop_assert!((0.0..=1.0).contains(&p));
    }

    #[test]
    fn induced_kernel_is_symmetric_and_vanishes_on_the_boundary(x1 in -0.99f64..0.99, x2 in -0.99f64..0.99, g in 0usize..3) {
        let p = params(GAMMAS[g]);
        let k12 = induced_kernel(&p, &[x1], &[x2]).unwrap();
        prop_assert!((k12 - induced_kernel(&p, &[x2], &[x1]).unwrap()).abs() <= 1e-14 * k12.abs().max(1e-300));
        prop_assert_eq!(induced_kernel(&p, &[1.0], &[x2]).unwrap(), 0.0);
        prop_assert_eq!(induced_kernel(&p, &[x1], &[-1.0]).unwrap(), 0.0);
    }

    #[test]
    fn induced_kernel_matrix_is_psd(xs in prop::collection::vec(-0.98f64..0.98, 10), g in 0usize..3) {
        let p = params(GAMMAS[g]);
        let k: Vec<Vec<f64>> = xs.iter().map(|&a| xs.iter().map(|&b| induced_kernel(&p, &[a], &[b]).unwrap()).collect()).collect();
        let w = faer::Mat::<f64>::from_fn(10, 10, |i, j| k[i][j]);
        let eig = w.self_adjoint_eigen(faer::Side::Lower).unwrap();
        let min = (0..10).map(|i| eig.S()[i]).fold(f64::INFINITY, f64::min);
        prop_assert!(min >= -1e-10, "min eigenvalue {min}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn gram_is_symmetric_and_psd(
        angles in prop::collection::vec(0.0f64..std::f64::consts::PI, 1..5),
        m in 2usize..7,
        g in 0usize..3,
        alpha_seed in any::<u64>(),
    ) {
        let w = gram_matrix(angles, m, GAMMAS[g]);
        let d = w.to_dense();
        let size = d.nrows();
        for i in 0..size {
            for j in 0..size {
                prop_assert!((d[(i, j)] - d[(j, i)]).abs() <= 1e-12);
            }
        }
        let eig = Eigen::of(&w).unwrap();
        let lmax = eig.lambda_max();
        prop_assert!(eig.values[0] >= -1e-8 * lmax);
        let mut rng = ChaCha8Rng::seed_from_u64(alpha_seed);
        use rand::Rng;
        let alpha: Vec<f64> = (0..size).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let n2: f64 = alpha.iter().map(|v| v * v).sum();
        prop_assert!(w.quadratic_form(&alpha) >= -1e-8 * n2 * lmax);
    }

    #[test]
    fn gram_depends_only_on_relative_angles(
        angles in prop::collection::vec(0.0f64..std::f64::consts::PI, 2..5),
        shift in -3.0f64..3.0,
        m in 2usize..6,
        g in 0usize..3,
    ) {
        let shifted: Vec<f64> = angles.iter().map(|a| a + shift).collect();
        let a = gram_matrix(angles, m, GAMMAS[g]).to_dense();
        let b = gram_matrix(shifted, m, GAMMAS[g]).to_dense();
        for i in 0..a.nrows() {
            for j in 0..a.ncols() {
                prop_assert!((a[(i, j)] - b[(i, j)]).abs() <= 1e-12, "entry ({i},{j}): {} vs {}", a[(i, j)], b[(i, j)]);
            }
        }
    }

    #[test]
    fn interpolants_vanish_on_the_boundary_and_reproduce_w_alpha(
        angles in prop::collection::vec(0.0f64..std::f64::consts::PI, 1..4),
        m in 2usize..6,
        g in 0usize..3,
        seed in any::<u64>(),
        probe in 0.0f64..std::f64::consts::TAU,
    ) {
        use rand::Rng;
        let w = gram_matrix(angles.clone(), m, GAMMAS[g]);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let alpha: Vec<f64> = (0..w.size()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let wa = w.apply(&alpha);
        let scale = wa.iter().fold(0.0f64, |s, v| s.max(v.abs())).max(1e-300);
        let coeffs = CoefficientField::on_gram(&w, alpha).unwrap();
        let probe = Orientation::planar(probe);
        let interp = SinogramInterpolant::new(&coeffs, &probe).unwrap();
        prop_assert_eq!(interp.value(&[1.0]).unwrap(), 0.0);
        prop_assert_eq!(interp.value(&[-1.0]).unwrap(), 0.0);
        for (i, &phi) in angles.iter().enumerate() {
            for (j, x) in w.mesh.points().iter().enumerate() {
                let v = interpolate_sinogram(&coeffs, &Orientation::planar(phi), x).unwrap();
                prop_assert!((v - wa[i * m + j]).abs() <= 1e-10 * scale);
            }
        }
    }

    #[test]
    fn reconstruction_is_linear_in_the_coefficients(
        angles in prop::collection::vec(0.0f64..std::f64::consts::PI, 1..4),
        m in 2usize..5,
        seed in any::<u64>(),
        a in -2.0f64..2.0,
        b in -2.0f64..2.0,
    ) {
        use rand::Rng;
        let w = gram_matrix(angles, m, 32.0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = || -> Vec<f64> { (0..w.size()).map(|_| rng.gen_range(-1.0..1.0)).collect() };
        let (u, v) = (draw(), draw());
        let mix: Vec<f64> = u.iter().zip(&v).map(|(p, q)| a * p + b * q).collect();
        let spec = RasterSpec::new(12).unwrap();
        let eval = |al: Vec<f64>| evaluate_reconstruction(&CoefficientField::on_gram(&w, al).unwrap(), spec).unwrap();
        let (fu, fv, fm) = (eval(u), eval(v), eval(mix));
        for k in 0..fm.values.len() {
            prop_assert!((fm.values[k] - (a * fu.values[k] + b * fv.values[k])).abs() <= 1e-12 * (1.0 + fm.values[k].abs()));
        }
    }

    #[test]
    fn sinogram_of_a_superposition(
        c1 in coords(2), c2 in coords(2),
        ax in prop::collection::vec(0.05f64..0.4, 4),
        rot in prop::collection::vec(0.0f64..3.0, 2),
        n in 1usize..6,
    ) {
        let ellipse = |c: &[f64], a: f64, b: f64, r: f64, i: f64| Ellipse {
            // |centre| ≤ 0.4√2 and semi-axes ≤ 0.4 keep every ellipse inside the disk
            center: [c[0] * 0.4, c[1] * 0.4],
            semi_axes: [a, b],
            rotation: r,
            intensity: i,
        };
        let e1 = ellipse(&c1, ax[0], ax[1], rot[0], 1.5);
        let e2 = ellipse(&c2, ax[2], ax[3], rot[1], -0.7);
        let p1 = Phantom::new(vec![e1.clone()], 1.0).unwrap();
        let p2 = Phantom::new(vec![e2.clone()], 1.0).unwrap();
        let both = Phantom::new(vec![e1, e2], 1.0).unwrap();
        let g = grid((0..n).map(|i| 0.7 * i as f64).collect());
        let mesh = make_mesh(11).unwrap();
        let s1 = simulate_sinogram(&p1, &g, &mesh, 0.0, 0).unwrap();
        let s2 = simulate_sinogram(&p2, &g, &mesh, 0.0, 0).unwrap();
        let s = simulate_sinogram(&both, &g, &mesh, 0.0, 0).unwrap();
        for k in 0..s.values.len() {
            prop_assert!((s.values[k] - s1.values[k] - s2.values[k]).abs() <= 1e-12);
        }
        // FBP of the superposition is the superposition of the FBPs
        if n >= 2 {
            let spec = RasterSpec::new(10).unwrap();
            let cfg = FbpConfig::default();
            let (f1, f2, f) = (
                fbp_reconstruct(&s1, spec, &cfg).unwrap(),
                fbp_reconstruct(&s2, spec, &cfg).unwrap(),
                fbp_reconstruct(&s, spec, &cfg).unwrap(),
            );
            for k in 0..f.values.len() {
                prop_assert!((f.values[k] - f1.values[k] - f2.values[k]).abs() <= 1e-10);
            }
        }
    }
}

#[test]
fn noiseless_sinograms_vanish_towards_the_detector_edge() {
    let p = rkct::data::shepp_logan();
    let g = grid(vec![0.0, 0.9, 2.1]);
    for m in [50, 200, 800] {
        let s = simulate_sinogram(&p, &g, &make_mesh(m).unwrap(), 0.0, 0).unwrap();
        for i in 0..3 {
            let row = s.row(i);
            let edge = row[0].abs().max(row[m - 1].abs());
            // chords shrink like sqrt(1 - x²) at the outermost cell centre
            let w = half_chord(&[1.0 - 1.0 / m as f64]);
            assert!(edge <= 20.0 * w + 1e-12, "m={m} edge value {edge}");
        }
    }
}
