//! Error function, its antiderivative, and normal distribution functions.

use std::f64::consts::{PI, SQRT_2};

use crate::error::{invalid, Error, Result};
use crate::geometry::PARALLEL_TOLERANCE;

const SQRT_PI: f64 = 1.772_453_850_905_516;
const TWO_PI: f64 = 2.0 * PI;

pub fn erf(z: f64) -> f64 {
    libm::erf(z)
}

pub fn erfc(z: f64) -> f64 {
    libm::erfc(z)
}

/// `Φ(z) = √π z erf(z) + e^{-z²} - 1`, the even antiderivative of `√π erf`
/// with `Φ(0) = 0`.
pub fn phi_antiderivative(z: f64) -> f64 {
    SQRT_PI * z * erf(z) + (-z * z).exp_m1()
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

/// `P(Z₁ ≤ a, Z₂ ≤ b)` for a standard bivariate normal with correlation `rho`.
pub fn bivariate_normal_cdf(a: f64, b: f64, rho: f64) -> Result<f64> {
    if !(-1.0..=1.0).contains(&rho) || rho.is_nan() {
        return Err(invalid(format!(
            "correlation must lie in [-1, 1], got {rho}"
        )));
    }
    let w = ((1.0 - rho) * (1.0 + rho)).sqrt();
    if w < PARALLEL_TOLERANCE {
        return Err(Error::DegenerateCorrelation(rho));
    }
    Ok(bvn_lower(a, b, rho, w))
}

/// Lower-orthant probability with `w = sqrt(1 - rho²)` supplied by the
/// caller, who usually knows it more accurately than `1 - rho²` would give.
pub(crate) fn bvn_lower(a: f64, b: f64, rho: f64, w: f64) -> f64 {
    bvnd(-a, -b, rho, w)
}

const FULL_AXIS: f64 = 8.5;

/// `P(Z₁ ∈ (a0, a1], Z₂ ∈ (b0, b1])`. Each axis is reflected so its interval
/// sits in the lower half, where orthant values are small and the
/// inclusion–exclusion sum loses little to cancellation.

pub(crate) fn bvn_rectangle(
    mut a0: f64,
    mut a1: f64,
    mut b0: f64,
    mut b1: f64,
    rho: f64,
    w: f64,
) -> f64 {
    let mut r = rho;
    if a0 + a1 > 0.0 {
        (a0, a1) = (-a1, -a0);
        r = -r;
    }
    if b0 + b1 > 0.0 {
        (b0, b1) = (-b1, -b0);
        r = -r;
    }
    // after reflection a1 ≥ FULL_AXIS implies a0 ≤ -FULL_AXIS, so the axis
    // holds all but ~1e-17 of its marginal mass
    match (a1 >= FULL_AXIS, b1 >= FULL_AXIS) {
        (true, true) => return 1.0,
        (true, false) => return (normal_cdf(b1) - normal_cdf(b0)).max(0.0),
        (false, true) => return (normal_cdf(a1) - normal_cdf(a0)).max(0.0),
        _ => {}
    }
    let p = bvn_lower(a1, b1, r, w) - bvn_lower(a1, b0, r, w) - bvn_lower(a0, b1, r, w)
        + bvn_lower(a0, b0, r, w);
    p.max(0.0)
}

const GL_X: [[f64; 10]; 3] = [
    [
        -0.932_469_514_203_152_2,
        -0.661_209_386_466_264_7,
        -0.238_619_186_083_197,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
    ],
    [
        -0.981_560_634_246_719_1,
        -0.904_117_256_370_475,
        -0.769_902_674_194_305,
        -0.587_317_954_286_617_1,
        -0.367_831_498_998_180_2,
        -0.125_233_408_511_469_2,
        0.0,
        0.0,
        0.0,
        0.0,
    ],
    [
        -0.993_128_599_185_094_9,
        -0.963_971_927_277_913_8,
        -0.912_234_428_251_325_9,
        -0.839_116_971_822_218_8,
        -0.746_331_906_460_150_8,
        -0.636_053_680_726_515,
        -0.510_867_001_950_827_1,
        -0.373_706_088_715_419_6,
        -0.227_785_851_141_645_1,
        -0.076_526_521_133_497_33,
    ],
];

const GL_W: [[f64; 10]; 3] = [
    [
        0.171_324_492_379_170_5,
        0.360_761_573_048_138_4,
        0.467_913_934_572_690_4,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
    ],
    [
        0.047_175_336_386_511_77,
        0.106_939_325_995_318_3,
        0.160_078_328_543_346_4,
        0.203_167_426_723_065_9,
        0.233_492_536_538_354_7,
        0.249_147_045_813_402_9,
        0.0,
        0.0,
        0.0,
        0.0,
    ],
    [
        0.017_614_007_139_152_12,
        0.040_601_429_800_386_94,
        0.062_672_048_334_109_06,
        0.083_276_741_576_704_75,
        0.101_930_119_817_240_4,
        0.118_194_531_961_518_4,
        0.131_688_638_449_176_6,
        0.142_096_109_318_382_1,
        0.149_172_986_472_603_7,
        0.152_753_387_130_725_9,
    ],
];

/// Upper-orthant probability `P(Z₁ > h, Z₂ > k)`, after Drezner–Wesolowsky
/// with Genz's refinements (TVPACK `BVND`).
fn bvnd(h: f64, k: f64, r: f64, w: f64) -> f64 {
    let (ng, lg) = if r.abs() < 0.3 {
        (0, 3)
    } else if r.abs() < 0.75 {
        (1, 6)
    } else {
        (2, 10)
    };
    let xs_tab = &GL_X[ng];
    let ws_tab = &GL_W[ng];
    let mut hk = h * k;
    let mut bvn = 0.0;
    if r.abs() < 0.925 {
        let hs = 0.5 * (h * h + k * k);
        let asr = r.asin();
        for i in 0..lg {
            for x in [xs_tab[i], -xs_tab[i]] {
                let sn = (asr * (x + 1.0) * 0.5).sin();
                bvn += ws_tab[i] * ((sn * hk - hs) / (1.0 - sn * sn)).exp();
            }
        }
        return (bvn * asr / (2.0 * TWO_PI) + normal_cdf(-h) * normal_cdf(-k)).clamp(0.0, 1.0);
    }
    let mut k = k;
    if r < 0.0 {
        k = -k;
        hk = -hk;
    }
    let as_ = w * w;
    let mut a = w;
    let bs = (h - k) * (h - k);
    let c = (4.0 - hk) / 8.0;
    let d = (12.0 - hk) / 16.0;
    bvn = a
        * (-0.5 * (bs / as_ + hk)).exp()
        * (1.0 - c * (bs - as_) * (1.0 - d * bs / 5.0) / 3.0 + c * d * as_ * as_ / 5.0);
    if hk > -160.0 {
        let b = bs.sqrt();
        bvn -= (-hk / 2.0).exp()
            * TWO_PI.sqrt()
            * normal_cdf(-b / a)
            * b
            * (1.0 - c * bs * (1.0 - d * bs / 5.0) / 3.0);
    }
    a *= 0.5;
    for i in 0..lg {
        for x in [xs_tab[i], -xs_tab[i]] {
            let xs = (a * (x + 1.0)).powi(2);
            let rs = (1.0 - xs).sqrt();
            let e = (-0.5 * (bs / xs + hk)).exp();
            if e == 0.0 {
                continue;
            }
            bvn += a
                * ws_tab[i]
                * e
                * ((-hk * xs / (2.0 * (1.0 + rs).powi(2))).exp() / rs
                    - (1.0 + c * xs * (1.0 + d * xs)));
        }
    }
    bvn = -bvn / TWO_PI;
    // both branches can undershoot a vanishing orthant by roundoff
    let p = if r > 0.0 {
        bvn + normal_cdf(-h.max(k))
    } else {
        -bvn + (normal_cdf(-h) - normal_cdf(-k)).max(0.0)
    };
    p.clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::quadrature::QuadratureRule;
    use proptest::prelude::*;

    fn erf_by_quadrature(z: f64) -> f64 {
        let rule = QuadratureRule::composite(16, 20).unwrap();
        2.0 / SQRT_PI * rule.integrate(0.0, z, |t| (-t * t).exp())
    }

    #[test]
    fn erf_reference_values() {
        assert_eq!(erf(0.0), 0.0);
        assert!((erf(1.0) - 0.842_700_792_949_715).abs() < 1e-12);
        for z in [-3.0, -1.3, -0.2, 0.05, 0.7, 1.9, 2.5, 4.0] {
            let q = erf_by_quadrature(z);
            assert!((erf(z) - q).abs() < 1e-15, "{z}: {} vs {q}", erf(z));
        }
    }

    #[test]
    fn phi_matches_integral_of_erf() {
        assert_eq!(phi_antiderivative(0.0), 0.0);
        let rule = QuadratureRule::composite(16, 20).unwrap();
        let q = SQRT_PI * rule.integrate(0.0, 2.0, erf);
        assert!((phi_antiderivative(2.0) - q).abs() < 1e-10);
    }

    proptest! {
        #[test]
        fn erf_is_odd_and_bounded(z in -30.0f64..30.0) {
            prop_assert_eq!(erf(z), -erf(-z));
            prop_assert!(erf(z).abs() <= 1.0);
        }

        #[test]
        fn phi_is_even_and_nonnegative(z in -40.0f64..40.0) {
            prop_assert_eq!(phi_antiderivative(z), phi_antiderivative(-z));
            prop_assert!(phi_antiderivative(z) >= 0.0);
        }

        #[test]
        fn bvn_monotone(a in -6.0f64..6.0, b in -6.0f64..6.0, da in 0.0f64..1.0, rho in -0.999f64..0.999) {
            let p = bivariate_normal_cdf(a, b, rho).unwrap();
            let pa = bivariate_normal_cdf(a + da, b, rho).unwrap();
            let pb = bivariate_normal_cdf(a, b + da, rho).unwrap();
            prop_assert!(pa >= p - 1e-15);
            prop_assert!(pb >= p - 1e-15);
        }

        #[test]
        fn bvn_independent_is_product(a in -8.0f64..8.0, b in -8.0f64..8.0) {
            let p = bivariate_normal_cdf(a, b, 0.0).unwrap();
            prop_assert!((p - normal_cdf(a) * normal_cdf(b)).abs() < 1e-12);
        }
    }

    fn adaptive(
        rule: &QuadratureRule,
        lo: f64,
        hi: f64,
        f: &dyn Fn(f64) -> f64,
        depth: u32,
    ) -> f64 {
        let whole = rule.integrate(lo, hi, f);
        let mid = 0.5 * (lo + hi);
        let halves = rule.integrate(lo, mid, f) + rule.integrate(mid, hi, f);
        if (whole - halves).abs() < 1e-16 || depth == 0 {
            return halves;
        }
        adaptive(rule, lo, mid, f, depth - 1) + adaptive(rule, mid, hi, f, depth - 1)
    }

    /// `∫_{-∞}^a ∫_{-∞}^b` of the bivariate density by conditioning on `Z₁`:
    /// adaptive quadrature of `∫ φ(t) Φ((b - ρt)/w) dt` over `[-12, a]`.
    fn bvn_by_quadrature(a: f64, b: f64, rho: f64) -> f64 {
        let w = (1.0 - rho * rho).sqrt();
        let rule = QuadratureRule::gauss_legendre(20).unwrap();
        let lo = -12.0f64;
        if a <= lo {
            return 0.0;
        }
        let f = |t: f64| (-0.5 * t * t).exp() / TWO_PI.sqrt() * normal_cdf((b - rho * t) / w);
        adaptive(&rule, lo, a, &f, 40)
    }

    #[test]
    fn bvn_against_quadrature() {
        let q = bvn_by_quadrature(0.0, 0.0, 0.5);
        let exact = 0.25 + 0.5f64.asin() / TWO_PI;
        assert!((q - exact).abs() < 1e-12);
        assert!((bivariate_normal_cdf(0.0, 0.0, 0.5).unwrap() - q).abs() < 1e-10);
        let mut worst = 0.0f64;
        for &rho in &[
            -0.99999, -0.97, -0.9, -0.6, -0.2, 0.1, 0.4, 0.8, 0.93, 0.995, 0.999999,
        ] {
            for &a in &[-5.0, -2.2, -0.7, 0.0, 0.3, 1.5, 3.1] {
                for &b in &[-4.1, -1.0, 0.0, 0.6, 2.4, 6.0] {
                    let v = bivariate_normal_cdf(a, b, rho).unwrap();
                    let q = bvn_by_quadrature(a, b, rho);
                    worst = worst.max((v - q).abs());
                }
            }
        }
        assert!(worst < 1e-12, "worst abs error {worst:e}");
    }

    #[test]
    fn bvn_closed_forms_at_origin() {
        for rho in [-0.95, -0.5, 0.0, 0.3, 0.93, 0.999] {
            let p = bivariate_normal_cdf(0.0, 0.0, rho).unwrap();
            let exact = 0.25 + f64::asin(rho) / TWO_PI;
            assert!((p - exact).abs() < 1e-14, "rho {rho}: {p} vs {exact}");
        }
        for rho in [-0.9, 0.0, 0.99] {
            assert!((bivariate_normal_cdf(8.0, 8.0, rho).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn bvn_rejects_bad_correlation() {
        assert!(matches!(
            bivariate_normal_cdf(0.0, 0.0, 1.5),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            bivariate_normal_cdf(0.0, 0.0, 1.0),
            Err(Error::DegenerateCorrelation(_))
        ));
        assert!(matches!(
            bivariate_normal_cdf(0.0, 0.0, -1.0),
            Err(Error::DegenerateCorrelation(_))
        ));
    }

    #[test]
    fn rectangle_matches_inclusion_exclusion() {
        for &(a0, a1, b0, b1, rho) in &[
            (-0.3, 0.8, -1.0, 0.2, 0.4),
            (1.0, 2.5, 0.5, 3.0, -0.7),
            (2.0, 2.1, -3.0, -2.5, 0.95),
        ] {
            let w = (1.0f64 - rho * rho).sqrt();
            let direct =
                bvn_lower(a1, b1, rho, w) - bvn_lower(a1, b0, rho, w) - bvn_lower(a0, b1, rho, w)
                    + bvn_lower(a0, b0, rho, w);
            let rect = bvn_rectangle(a0, a1, b0, b1, rho, w);
            assert!((rect - direct).abs() < 1e-15);
        }
    }
}
