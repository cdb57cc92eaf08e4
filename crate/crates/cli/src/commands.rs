use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use anyhow::{anyhow, Context};
use sha2::{Digest, Sha256};

use rkct::data::{
    make_angle_grid, make_mesh, pixel_unit_scale, shepp_logan, simulate_scaled_sinogram, AngleGrid,
    DetectorMesh, Phantom, Sinogram,
};
use rkct::fbp::{fbp_reconstruct, FbpConfig};
use rkct::gram::cache::{read_cache, write_cache, GramCache};
use rkct::gram::{assemble_circulant, assemble_dense, GramMatrix, Layout};
use rkct::kernels::GaussianKernelParams;
use rkct::recon::{evaluate_reconstruction, ImageRaster, RasterSpec};
use rkct::solve::{solve_circulant, solve_circulant_with, solve_tikhonov, CirculantFactorization};
use rkct::verify::run_suite;

use crate::output::{image_paths, write_file, write_image, RunConfig};
use crate::values::show;
use crate::{
    usage, Failure, FbpArgs, GramArgs, GridArg, KrArgs, LayoutArg, PhantomArgs, SinogramArgs,
    Units, VerifyArgs,
};

type Outcome = Result<(), Failure>;

pub const BUILTIN_PHANTOM: &str = "shepp_logan";

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn read(path: &Path) -> Result<Vec<u8>, Failure> {
    fs::read(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(Failure::Data)
}

/// The built-in phantom, or one parsed from an ellipse table, with a name
/// recorded in output headers.
fn load_phantom(table: Option<&Path>) -> Result<(Phantom, String), Failure> {
    match table {
        None => Ok((shepp_logan(), BUILTIN_PHANTOM.to_string())),
        Some(p) => {
            let bytes = read(p)?;
            let text = String::from_utf8(bytes.clone())
                .map_err(|_| anyhow!("{} is not UTF-8", p.display()))?;
            let ph =
                Phantom::from_table(&text).with_context(|| format!("parsing {}", p.display()))?;
            Ok((ph, format!("table:{}", &sha256_hex(&bytes)[..16])))
        }
    }
}

pub fn build_grid(
    kind: GridArg,
    n: usize,
    lambda: Option<f64>,
    seed: u64,
) -> Result<AngleGrid, Failure> {
    match (kind, lambda) {
        (GridArg::Lambda, None) => return Err(usage("--grid lambda needs --lambda")),
        (GridArg::Lambda, Some(l)) if !(0.0..=1.0).contains(&l) => {
            return Err(usage(format!("--lambda must lie in [0, 1], got {l}")))
        }
        (k, Some(_)) if k != GridArg::Lambda => {
            return Err(usage("--lambda only applies to --grid lambda"))
        }
        _ => {}
    }
    if n == 0 {
        return Err(usage("--n must be at least 1"));
    }
    Ok(make_angle_grid(kind.kind(), n, lambda, seed)?)
}

pub fn build_mesh(m: usize) -> Result<DetectorMesh, Failure> {
    if m == 0 {
        return Err(usage("--m must be at least 1"));
    }
    Ok(make_mesh(m)?)
}

pub fn raster_spec(size: usize) -> Result<RasterSpec, Failure> {
    RasterSpec::new(size).map_err(|e| usage(format!("--size: {e}")))
}

fn read_sinogram(path: &Path) -> Result<(Sinogram, Vec<(String, String)>, String), Failure> {
    let bytes = read(path)?;
    let text =
        String::from_utf8(bytes.clone()).map_err(|_| anyhow!("{} is not UTF-8", path.display()))?;
    let (s, extra) =
        Sinogram::from_csv(&text).with_context(|| format!("parsing {}", path.display()))?;
    Ok((s, extra, sha256_hex(&bytes)))
}

fn header<'a>(extra: &'a [(String, String)], key: &str) -> Option<&'a str> {
    extra
        .iter()
        .find(|(k, _)| k == key)
        .map(|(_, v)| v.as_str())
}

/// Reference image for the printed RMSE.
fn truth_image(
    truth: Option<&Path>,
    extra: &[(String, String)],
    spec: RasterSpec,
) -> Result<Option<ImageRaster>, Failure> {
    if let Some(p) = truth {
        let bytes = read(p)?;
        let text = String::from_utf8(bytes).map_err(|_| anyhow!("{} is not UTF-8", p.display()))?;
        let img =
            ImageRaster::from_csv(&text).with_context(|| format!("parsing {}", p.display()))?;
        if img.spec().side != spec.side {
            return Err(usage(format!(
                "--truth image is {0}x{0}, reconstruction is {1}x{1}",
                img.spec().side,
                spec.side
            )));
        }
        return Ok(Some(img));
    }
    Ok((header(extra, "phantom") == Some(BUILTIN_PHANTOM)).then(|| shepp_logan().rasterize(spec)))
}

pub fn phantom(a: &PhantomArgs) -> Outcome {
    let spec = raster_spec(a.size)?;
    let (pgm, csv) = image_paths(&a.out).map_err(usage)?;
    let (ph, name) = load_phantom(a.table.as_deref())?;
    let cfg = RunConfig::new("phantom")
        .with("size", a.size)
        .with("phantom", &name);
    write_image(&ph.rasterize(spec), &pgm, &csv, &cfg.comments())?;
    println!(
        "wrote {} and {} (config {})",
        pgm.display(),
        csv.display(),
        cfg.hash()
    );
    Ok(())
}

pub fn sinogram(a: &SinogramArgs) -> Outcome {
    let g = &a.grid;
    if !(a.sigma >= 0.0) {
        return Err(usage("--sigma must be non-negative"));
    }
    let grid = build_grid(g.grid, g.n, g.lambda, g.seed)?;
    let mesh = build_mesh(g.m)?;
    let (ph, name) = load_phantom(a.table.as_deref())?;
    let scale = match a.units {
        Units::Pixel => pixel_unit_scale(g.m),
        Units::Unit => 1.0,
    };
    let units = format!("{:?}", a.units).to_lowercase();
    let cfg = RunConfig::new("sinogram")
        .with("n", g.n)
        .with("m", g.m)
        .with("grid", grid.kind)
        .with(
            "lambda",
            g.lambda.map(show).unwrap_or_else(|| "none".into()),
        )
        .with("sigma", show(a.sigma))
        .with("units", &units)
        .with("seed", g.seed)
        .with("phantom", &name);
    let s = simulate_scaled_sinogram(&ph, &grid, &mesh, scale, a.sigma, g.seed)?;
    let extra = vec![
        ("command".to_string(), "sinogram".to_string()),
        ("config_hash".to_string(), cfg.hash()),
        ("phantom".to_string(), name),
        ("units".to_string(), units),
    ];
    write_file(&a.out, s.to_csv(&extra)?.as_bytes())?;
    println!(
        "wrote {} ({}x{}, config {})",
        a.out.display(),
        g.n,
        g.m,
        cfg.hash()
    );
    Ok(())
}

pub fn gram(a: &GramArgs) -> Outcome {
    let params =
        GaussianKernelParams::new(a.gamma, 2).map_err(|e| usage(format!("--gamma: {e}")))?;
    let mut cfg = RunConfig::new("gram")
        .with("gamma", show(a.gamma))
        .with("layout", format!("{:?}", a.layout).to_lowercase());
    let (grid, mesh) = match &a.sino {
        Some(p) => {
            let (s, _, sha) = read_sinogram(p)?;
            cfg = cfg.with("sinogram_sha256", sha);
            (s.angles, s.mesh)
        }
        None => {
            let kind = a.grid.unwrap_or(match a.layout {
                LayoutArg::Circulant => GridArg::Full,
                LayoutArg::Dense => GridArg::Random,
            });
            let (n, m, seed) = (a.n.unwrap_or(0), a.m.unwrap_or(0), a.seed.unwrap_or(0));
            cfg = cfg
                .with("n", n)
                .with("m", m)
                .with("grid", kind.kind())
                .with(
                    "lambda",
                    a.lambda.map(show).unwrap_or_else(|| "none".into()),
                )
                .with("seed", seed);
            (build_grid(kind, n, a.lambda, seed)?, build_mesh(m)?)
        }
    };
    if let Some(nu) = a.nu {
        cfg = cfg.with("nu", show(nu));
    }
    let t = Instant::now();
    let (w, fact) = match a.layout {
        LayoutArg::Dense => {
            if a.nu.is_some() {
                return Err(usage(
                    "--nu (stored factorization) needs --layout circulant",
                ));
            }
            (assemble_dense(&params, &grid, &mesh)?, None)
        }
        LayoutArg::Circulant => {
            if !grid.is_full_circle_equiangular() {
                return Err(usage(
                    "the circulant layout needs the full-circle grid (--grid full)",
                ));
            }
            let w = assemble_circulant(&params, grid.len(), &mesh)?;
            let f =
                a.nu.map(|nu| CirculantFactorization::new(&w, nu))
                    .transpose()?;
            (w, f)
        }
    };
    let secs = t.elapsed().as_secs_f64();
    let mut buf = Vec::new();
    write_cache(&mut buf, &w, &cfg.hash(), fact.as_ref())?;
    write_file(&a.out, &buf)?;
    println!(
        "wrote {} ({} layout, {}x{} unknowns, assembled in {secs:.2}s on {} thread(s), config {})",
        a.out.display(),
        w.layout().name(),
        w.n_angles(),
        w.n_mesh(),
        rayon::current_num_threads(),
        cfg.hash()
    );
    Ok(())
}

fn load_gram(path: &Path) -> Result<(GramCache, String), Failure> {
    let bytes = read(path)?;
    let cache =
        read_cache(&mut bytes.as_slice()).with_context(|| format!("reading {}", path.display()))?;
    Ok((cache, sha256_hex(&bytes)))
}

fn report_rmse(rec: &ImageRaster, truth: Option<ImageRaster>) -> Result<(), Failure> {
    if let Some(t) = truth {
        println!("rmse: {:.6}", rkct::analysis::rmse(rec, &t)?);
    }
    Ok(())
}

pub fn reconstruct_kr(a: &KrArgs) -> Outcome {
    let spec = raster_spec(a.size)?;
    let (pgm, csv) = image_paths(&a.out).map_err(usage)?;
    if !(a.nu > 0.0) {
        return Err(usage("--nu must be positive"));
    }
    let (raw, extra, sino_sha) = read_sinogram(&a.sino)?;
    let y = raw.to_unit_scale();
    let mut cfg = RunConfig::new("reconstruct kr")
        .with("sinogram_sha256", &sino_sha)
        .with("nu", show(a.nu))
        .with("size", a.size);

    let t_asm = Instant::now();
    let (w, stored): (GramMatrix, Option<CirculantFactorization>) = match &a.gram {
        Some(p) => {
            let (cache, sha) = load_gram(p)?;
            if let Some(g) = a.gamma {
                if g != cache.gram.params.gamma {
                    return Err(usage(format!(
                        "--gamma {} differs from the cached Gram's {}",
                        show(g),
                        show(cache.gram.params.gamma)
                    )));
                }
            }
            if a.circulant && cache.gram.layout() != Layout::BlockCirculant {
                return Err(usage("--circulant given but the cached Gram is dense"));
            }
            cfg = cfg.with("gram_sha256", sha);
            (cache.gram, cache.factorization)
        }
        None => {
            let gamma = a
                .gamma
                .ok_or_else(|| usage("--gamma is required without --gram"))?;
            let params =
                GaussianKernelParams::new(gamma, 2).map_err(|e| usage(format!("--gamma: {e}")))?;
            let w = if a.circulant {
                if !y.angles.is_full_circle_equiangular() {
                    return Err(Failure::Data(anyhow!(
                        "--circulant needs a sinogram on the full-circle equiangular grid"
                    )));
                }
                assemble_circulant(&params, y.n_angles(), &y.mesh)?
            } else {
                assemble_dense(&params, &y.angles, &y.mesh)?
            };
            (w, None)
        }
    };
    let asm_secs = t_asm.elapsed().as_secs_f64();
    cfg = cfg
        .with("gamma", show(w.params.gamma))
        .with("layout", w.layout().name());

    let t = Instant::now();
    let coeffs = match (w.layout(), stored) {
        (Layout::BlockCirculant, Some(f)) if f.nu() == a.nu => solve_circulant_with(&f, &w, &y)?,
        (Layout::BlockCirculant, _) => solve_circulant(&w, &y, a.nu)?,
        (Layout::Dense, _) => solve_tikhonov(&w, &y, a.nu)?,
    };
    let rec = evaluate_reconstruction(&coeffs, spec)?;
    let run_secs = t.elapsed().as_secs_f64();

    write_image(&rec, &pgm, &csv, &cfg.comments())?;
    println!(
        "kr: gram {asm_secs:.2}s, solve+evaluate {run_secs:.2}s on {} thread(s); residual {:.2e}",
        rayon::current_num_threads(),
        coeffs.residual
    );
    report_rmse(&rec, truth_image(a.truth.as_deref(), &extra, spec)?)?;
    println!(
        "wrote {} and {} (config {})",
        pgm.display(),
        csv.display(),
        cfg.hash()
    );
    Ok(())
}

pub fn reconstruct_fbp(a: &FbpArgs) -> Outcome {
    let spec = raster_spec(a.size)?;
    let (pgm, csv) = image_paths(&a.out).map_err(usage)?;
    if a.padding < 2 {
        return Err(usage("--padding must be at least 2"));
    }
    let (raw, extra, sino_sha) = read_sinogram(&a.sino)?;
    let cfg = RunConfig::new("reconstruct fbp")
        .with("sinogram_sha256", &sino_sha)
        .with("filter", "ramp")
        .with("padding", a.padding)
        .with("size", a.size);
    let fbp = FbpConfig {
        padding: a.padding,
        ..FbpConfig::default()
    };
    let t = Instant::now();
    let rec = fbp_reconstruct(&raw.to_unit_scale(), spec, &fbp)?;
    let secs = t.elapsed().as_secs_f64();
    write_image(&rec, &pgm, &csv, &cfg.comments())?;
    println!(
        "fbp: {secs:.2}s on {} thread(s)",
        rayon::current_num_threads()
    );
    report_rmse(&rec, truth_image(a.truth.as_deref(), &extra, spec)?)?;
    println!(
        "wrote {} and {} (config {})",
        pgm.display(),
        csv.display(),
        cfg.hash()
    );
    Ok(())
}

pub fn verify(a: &VerifyArgs) -> Outcome {
    let outcomes = run_suite(!a.quick, a.seed)?;
    let mut out = std::io::stdout().lock();
    for o in &outcomes {
        let _ = writeln!(out, "{o}");
    }
    let failed: Vec<&str> = outcomes
        .iter()
        .filter(|o| !o.passed)
        .map(|o| o.name)
        .collect();
    if failed.is_empty() {
        let _ = writeln!(out, "all {} checks passed", outcomes.len());
        Ok(())
    } else {
        Err(Failure::Verify(failed.join(", ")))
    }
}
