//! Adaptive Gauss–Kronrod (G10/K21) quadrature on finite and half-infinite
//! intervals.

use crate::error::{Error, Result};

#[allow(clippy::excessive_precision)]
const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.0,
];

#[allow(clippy::excessive_precision)]
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];

#[allow(clippy::excessive_precision)]
const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_958_109_831_074,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];

#[derive(Debug, Clone, Copy)]
pub struct QuadOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        QuadOptions { abs_tol: 1e-12, rel_tol: 1e-10, max_intervals: 2000 }
    }
}

impl QuadOptions {
    /// Tight settings for callers that need close to full double precision.
    pub fn precise() -> Self {
        QuadOptions { abs_tol: 1e-15, rel_tol: 1e-14, max_intervals: 4000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: f64,
    pub error: f64,
}

struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
    roundoff: f64,
}

fn kronrod21<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Segment {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut gauss = 0.0;
    let mut kronrod = WGK[10] * fc;
    let mut abs_sum = kronrod.abs();
    for j in 0..10 {
        let dx = half * XGK[j];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        kronrod += WGK[j] * (f1 + f2);
        abs_sum += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            gauss += WG[j / 2] * (f1 + f2);
        }
    }
    let value = kronrod * half;
    let resabs = abs_sum * half.abs();
    let roundoff = 50.0 * f64::EPSILON * resabs;
    let error = ((kronrod - gauss) * half).abs().max(roundoff);
    Segment { a, b, value, error, roundoff }
}

/// Integrate `f` over `[a, b]` by globally adaptive bisection.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, opts: QuadOptions) -> Result<Integral> {
    if a == b {
        return Ok(Integral { value: 0.0, error: 0.0 });
    }
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::Domain(format!("integration bounds must be finite, got [{a}, {b}]")));
    }
    let mut segments = vec![kronrod21(&f, a, b)];
    loop {
        let (value, error) = segments.iter().fold((0.0, 0.0), |(v, e), s| (v + s.value, e + s.error));
        if !value.is_finite() {
            return Err(Error::QuadratureFailure(format!("non-finite integrand on [{a}, {b}]")));
        }
        let target = opts.abs_tol.max(opts.rel_tol * value.abs());
        if error <= target {
            return Ok(Integral { value, error });
        }
        if segments.len() >= opts.max_intervals {
            // Accept if only roundoff remains.
            let floor: f64 = segments.iter().map(|s| 50.0 * f64::EPSILON * s.value.abs()).sum();
            if error <= 10.0 * floor + target {
                return Ok(Integral { value, error });
            }
            return Err(Error::QuadratureFailure(format!(
                "interval limit reached on [{a}, {b}]: estimate {value:e} ± {error:e}"
            )));
        }
        let (worst, _) = segments.iter().enumerate().max_by(|x, y| x.1.error.total_cmp(&y.1.error)).expect("non-empty");
        if segments[worst].error <= segments[worst].roundoff {
            // Every segment is down to its rounding floor; bisecting further
            // cannot improve the estimate.
            return Ok(Integral { value, error });
        }
        let seg = segments.swap_remove(worst);
        let mid = 0.5 * (seg.a + seg.b);
        if mid <= seg.a.min(seg.b) || mid >= seg.a.max(seg.b) {
            // Interval cannot be split further in floating point.
            segments.push(seg);
            let value: f64 = segments.iter().map(|s| s.value).sum();
            let error: f64 = segments.iter().map(|s| s.error).sum();
            return Ok(Integral { value, error });
        }
        segments.push(kronrod21(&f, seg.a, mid));
        segments.push(kronrod21(&f, mid, seg.b));
    }
}

/// Integrate `f` over `[a, ∞)`.
///
/// The range is covered by consecutive panels of doubling width starting at
/// `initial_width`; marching stops once two consecutive panels contribute
/// less than `1e-17` of the running total (or are exactly zero). The
/// integrand must decay monotonically in the far tail.
pub fn integrate_to_inf<F: Fn(f64) -> f64>(f: F, a: f64, initial_width: f64, opts: QuadOptions) -> Result<Integral> {
    let mut total = 0.0;
    let mut error = 0.0;
    let mut left = a;
    let mut width = initial_width;
    let mut quiet = 0;
    for _ in 0..200 {
        let piece = integrate(&f, left, left + width, opts)?;
        total += piece.value;
        error += piece.error;
        if piece.value.abs() <= 1e-17 * total.abs() || piece.value == 0.0 {
            quiet += 1;
            if quiet >= 2 {
                return Ok(Integral { value: total, error });
            }
        } else {
            quiet = 0;
        }
        left += width;
        width *= 2.0;
    }
    Err(Error::QuadratureFailure(format!("tail of integrand on [{a}, ∞) does not vanish")))
}
