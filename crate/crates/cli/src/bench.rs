//! Monte-Carlo sweep over noise level, angle regularity and kernel
//! parameters. Each `(λ, repetition)` pair fixes one random grid; its Gram
//! matrices are shared by every noise level.

use std::fmt::Write as _;
use std::time::Instant;

use anyhow::Context;
use rayon::prelude::*;

use rkct::analysis::rmse;
use rkct::data::{
    make_angle_grid, pixel_unit_scale, shepp_logan, simulate_scaled_sinogram, GridKind,
};
use rkct::fbp::{fbp_reconstruct, FbpConfig};
use rkct::gram::assemble_dense;
use rkct::kernels::GaussianKernelParams;
use rkct::recon::evaluate_reconstruction;
use rkct::solve::solve_tikhonov;

use crate::commands::{build_mesh, raster_spec};
use crate::output::{write_file, RunConfig};
use crate::values::show;
use crate::{usage, BenchmarkArgs, Failure};

pub const CSV_HEADER: &str = "sigma,lambda,rep,method,gamma,best_nu,rmse";

#[derive(Clone, Debug)]
struct Row {
    sigma: usize,
    lambda: usize,
    rep: usize,
    /// `None` for FBP, else the γ index.
    gamma: Option<usize>,
    best_nu: Option<f64>,
    rmse: f64,
}

/// SplitMix64 finalizer over the parts, so neighbouring cells get unrelated seeds.
fn derive_seed(parts: &[u64]) -> u64 {
    let mut h = 0x9E37_79B9_7F4A_7C15u64;
    for &p in parts {
        h ^= p
            .wrapping_add(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(h << 6)
            .wrapping_add(h >> 2);
        let mut z = h;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        h = z ^ (z >> 31);
    }
    h
}

pub fn benchmark(a: &BenchmarkArgs) -> Result<(), Failure> {
    if a.mc == 0 {
        return Err(usage("--mc must be at least 1"));
    }
    if a.sigmas.iter().any(|&s| !(s >= 0.0)) {
        return Err(usage("--sigmas must be non-negative"));
    }
    if a.lambdas.iter().any(|l| !(0.0..=1.0).contains(l)) {
        return Err(usage("--lambdas must lie in [0, 1]"));
    }
    if a.nus.iter().any(|&v| !(v > 0.0)) {
        return Err(usage("--nus must be positive"));
    }
    let params: Vec<GaussianKernelParams> = a
        .gammas
        .iter()
        .map(|&g| GaussianKernelParams::new(g, 2))
        .collect::<Result<_, _>>()
        .map_err(|e| usage(format!("--gammas: {e}")))?;
    if a.n == 0 {
        return Err(usage("--n must be at least 1"));
    }
    let spec = raster_spec(a.size)?;
    let mesh = build_mesh(a.m)?;
    let join = |v: &[f64]| v.iter().map(|&x| show(x)).collect::<Vec<_>>().join(",");
    let cfg = RunConfig::new("benchmark")
        .with("mc", a.mc)
        .with("sigmas", join(&a.sigmas))
        .with("lambdas", join(&a.lambdas))
        .with("gammas", join(&a.gammas))
        .with("nus", join(&a.nus))
        .with("n", a.n)
        .with("m", a.m)
        .with("size", a.size)
        .with("seed", a.seed)
        .with("units", "pixel");
    let truth = shepp_logan().rasterize(spec);
    let phantom = shepp_logan();
    let scale = pixel_unit_scale(a.m);
    let start = Instant::now();

    let cells: Vec<(usize, usize)> = (0..a.lambdas.len())
        .flat_map(|l| (0..a.mc).map(move |r| (l, r)))
        .collect();
    let per_cell: Vec<Vec<Row>> = cells
        .par_iter()
        .map(|&(li, rep)| -> anyhow::Result<Vec<Row>> {
            let grid_seed = derive_seed(&[a.seed, 1, li as u64, rep as u64]);
            let grid = make_angle_grid(GridKind::LambdaMix, a.n, Some(a.lambdas[li]), grid_seed)?;
            let sinos: Vec<_> = a
                .sigmas
                .iter()
                .enumerate()
                .map(|(si, &sigma)| {
                    let seed = derive_seed(&[a.seed, 2, si as u64, li as u64, rep as u64]);
                    simulate_scaled_sinogram(&phantom, &grid, &mesh, scale, sigma, seed)
                        .map(|s| s.to_unit_scale())
                })
                .collect::<Result<_, _>>()?;
            let mut rows = Vec::new();
            for (si, y) in sinos.iter().enumerate() {
                let rec = fbp_reconstruct(y, spec, &FbpConfig::default())?;
                rows.push(Row {
                    sigma: si,
                    lambda: li,
                    rep,
                    gamma: None,
                    best_nu: None,
                    rmse: rmse(&rec, &truth)?,
                });
            }
            for (gi, p) in params.iter().enumerate() {
                let w = assemble_dense(p, &grid, &mesh)?;
                for (si, y) in sinos.iter().enumerate() {
                    let mut best = (f64::INFINITY, f64::NAN);
                    for &nu in &a.nus {
                        let coeffs = solve_tikhonov(&w, y, nu)?;
                        let e = rmse(&evaluate_reconstruction(&coeffs, spec)?, &truth)?;
                        if e < best.0 {
                            best = (e, nu);
                        }
                    }
                    rows.push(Row {
                        sigma: si,
                        lambda: li,
                        rep,
                        gamma: Some(gi),
                        best_nu: Some(best.1),
                        rmse: best.0,
                    });
                }
            }
            log::info!("lambda {} rep {rep} done", show(a.lambdas[li]));
            Ok(rows)
        })
        .collect::<anyhow::Result<_>>()
        .context("benchmark repetition failed")?;

    let mut rows: Vec<Row> = per_cell.into_iter().flatten().collect();
    rows.sort_by_key(|r| (r.sigma, r.lambda, r.rep, r.gamma.map_or(0, |g| g + 1)));

    let mut out = String::new();
    for c in cfg.comments() {
        let _ = writeln!(out, "# {c}");
    }
    let _ = writeln!(out, "{CSV_HEADER}");
    for r in &rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{:?}",
            show(a.sigmas[r.sigma]),
            show(a.lambdas[r.lambda]),
            r.rep,
            if r.gamma.is_some() { "kr" } else { "fbp" },
            r.gamma.map(|g| show(a.gammas[g])).unwrap_or_default(),
            r.best_nu.map(show).unwrap_or_default(),
            r.rmse
        );
    }
    write_file(&a.out, out.as_bytes())?;
    println!(
        "wrote {} ({} rows, {:.1}s on {} thread(s), config {})",
        a.out.display(),
        rows.len(),
        start.elapsed().as_secs_f64(),
        rayon::current_num_threads(),
        cfg.hash()
    );
    Ok(())
}
