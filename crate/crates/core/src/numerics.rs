//! Special functions, adaptive quadrature and monotone root finding.
//!
//! Everything here works in log space where underflow is a concern. The
//! routines are deterministic and allocation-light so they can sit in the
//! inner loops of the staffing solver.

use crate::error::{Error, Result};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

// Coefficients B_{2j} / (2j (2j - 1)) of the Stirling series.
const STIRLING: [f64; 6] = [
    1.0 / 12.0,
    -1.0 / 360.0,
    1.0 / 1260.0,
    -1.0 / 1680.0,
    1.0 / 1188.0,
    -691.0 / 360_360.0,
];

const STIRLING_CUTOFF: f64 = 10.0;

fn stirling_correction(x: f64) -> f64 {
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    let mut acc = 0.0;
    for c in STIRLING.iter().rev() {
        acc = acc * inv2 + c;
    }
    acc * inv
}

fn ln_gamma_unchecked(x: f64) -> f64 {
    if x < 0.5 {
        // Reflection keeps full relative accuracy near the pole at zero.
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma_unchecked(1.0 - x);
    }
    if x >= STIRLING_CUTOFF {
        return (x - 0.5) * x.ln() - x + LN_SQRT_2PI + stirling_correction(x);
    }
    let z = x - 1.0;
    let mut acc = LANCZOS[0];
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        acc += c / (z + i as f64);
    }
    let t = z + LANCZOS_G + 0.5;
    LN_SQRT_2PI + (z + 0.5) * t.ln() - t + acc.ln()
}

/// Natural log of the gamma function for `x > 0`.
///
/// Relative accuracy is about `1e-14` away from the zeros at 1 and 2.
pub fn ln_gamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::param(
            "x",
            x,
            "ln_gamma needs a positive finite argument",
        ));
    }
    Ok(ln_gamma_unchecked(x))
}

/// `ln Γ(x + k) - ln Γ(x)` without cancellation for large `x`.
pub fn ln_gamma_ratio(x: f64, k: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::param("x", x, "must be positive and finite"));
    }
    if !(k >= 0.0) || !k.is_finite() {
        return Err(Error::param("k", k, "must be non-negative and finite"));
    }
    Ok(ln_gamma_ratio_unchecked(x, k))
}

pub(crate) fn ln_gamma_ratio_unchecked(x: f64, k: f64) -> f64 {
    if k == 0.0 {
        return 0.0;
    }
    if x >= STIRLING_CUTOFF {
        let y = x + k;
        return (x - 0.5) * (k / x).ln_1p() + k * y.ln() - k + stirling_correction(y)
            - stirling_correction(x);
    }
    if k.fract() == 0.0 && k <= 64.0 {
        let mut prod = 1.0;
        for j in 0..k as u32 {
            prod *= x + j as f64;
        }
        return prod.ln();
    }
    ln_gamma_unchecked(x + k) - ln_gamma_unchecked(x)
}

/// `ln C(n, k)` for real `0 <= k <= n`.
pub fn log_binomial(n: f64, k: f64) -> Result<f64> {
    if !n.is_finite() || !k.is_finite() || k < 0.0 || k > n {
        return Err(Error::param(
            "k",
            k,
            format!("need 0 <= k <= n with n = {n}"),
        ));
    }
    // Work from the smaller of k and n - k so that C(n, k) and C(n, n - k)
    // follow identical arithmetic.
    let j = k.min(n - k);
    Ok(ln_gamma_ratio_unchecked(n - j + 1.0, j) - ln_gamma_unchecked(j + 1.0))
}

fn gamma_iteration_cap(s: f64, x: f64) -> usize {
    1000 + (20.0 * (s.max(x)).sqrt()) as usize
}

// Series for ln P(s, x); efficient for x < s + 1.
fn ln_lower_gamma_series(s: f64, x: f64) -> Result<f64> {
    let mut term = 1.0 / s;
    let mut sum = term;
    let cap = gamma_iteration_cap(s, x);
    for n in 1..cap {
        term *= x / (s + n as f64);
        sum += term;
        if term.abs() < sum.abs() * 1e-17 {
            return Ok(sum.ln() - x + s * x.ln() - ln_gamma_unchecked(s));
        }
    }
    Err(Error::no_convergence(
        "incomplete gamma series",
        format!("s = {s}, x = {x} after {cap} terms"),
    ))
}

// Modified Lentz continued fraction for ln Q(s, x); efficient for x >= s + 1.
fn ln_upper_gamma_fraction(s: f64, x: f64) -> Result<f64> {
    let tiny = 1e-300;
    let mut b = x + 1.0 - s;
    let mut c = 1.0 / tiny;
    let mut d = 1.0 / b;
    let mut h = d;
    let cap = gamma_iteration_cap(s, x);
    for i in 1..cap {
        let an = -(i as f64) * (i as f64 - s);
        b += 2.0;
        d = an * d + b;
        if d.abs() < tiny {
            d = tiny;
        }
        c = b + an / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            return Ok(h.ln() - x + s * x.ln() - ln_gamma_unchecked(s));
        }
    }
    Err(Error::no_convergence(
        "incomplete gamma continued fraction",
        format!("s = {s}, x = {x} after {cap} terms"),
    ))
}

fn check_gamma_args(s: f64, x: f64) -> Result<()> {
    if !(s > 0.0) || !s.is_finite() {
        return Err(Error::param("s", s, "shape must be positive and finite"));
    }
    if !(x >= 0.0) || !x.is_finite() {
        return Err(Error::param("x", x, "must be non-negative and finite"));
    }
    Ok(())
}

/// `ln P(s, x)`, the log of the regularized lower incomplete gamma function.
pub fn ln_regularized_lower_gamma(s: f64, x: f64) -> Result<f64> {
    check_gamma_args(s, x)?;
    if x == 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    if x < s + 1.0 {
        ln_lower_gamma_series(s, x)
    } else {
        Ok(ln_1m_exp(ln_upper_gamma_fraction(s, x)?))
    }
}

/// `ln Q(s, x) = ln(1 - P(s, x))`.
pub fn ln_regularized_upper_gamma(s: f64, x: f64) -> Result<f64> {
    check_gamma_args(s, x)?;
    if x == 0.0 {
        return Ok(0.0);
    }
    if x < s + 1.0 {
        Ok(ln_1m_exp(ln_lower_gamma_series(s, x)?))
    } else {
        ln_upper_gamma_fraction(s, x)
    }
}

/// Regularized lower incomplete gamma `P(s, x) = γ(s, x) / Γ(s)`.
///
/// For integer `s = k`, `P(k, m)` is the probability that a Poisson variable
/// with mean `m` is at least `k`.
pub fn regularized_lower_gamma(s: f64, x: f64) -> Result<f64> {
    Ok(ln_regularized_lower_gamma(s, x)?.exp())
}

/// Regularized upper incomplete gamma `Q(s, x) = 1 - P(s, x)`.
pub fn regularized_upper_gamma(s: f64, x: f64) -> Result<f64> {
    Ok(ln_regularized_upper_gamma(s, x)?.exp())
}

/// `ln(1 - e^x)` for `x <= 0`.
pub fn ln_1m_exp(x: f64) -> f64 {
    if x > -std::f64::consts::LN_2 {
        (-x.exp_m1()).ln()
    } else {
        (-x.exp()).ln_1p()
    }
}

/// Running `ln Σ exp(t_i)` that never overflows.
#[derive(Debug, Clone, Copy)]
pub struct LogSumExp {
    max: f64,
    scaled: f64,
}

impl Default for LogSumExp {
    fn default() -> Self {
        Self::new()
    }
}

impl LogSumExp {
    pub fn new() -> Self {
        LogSumExp {
            max: f64::NEG_INFINITY,
            scaled: 0.0,
        }
    }

    pub fn add(&mut self, log_term: f64) {
        if log_term == f64::NEG_INFINITY {
            return;
        }
        if log_term > self.max {
            self.scaled = self.scaled * (self.max - log_term).exp() + 1.0;
            self.max = log_term;
        } else {
            self.scaled += (log_term - self.max).exp();
        }
    }

    pub fn value(&self) -> f64 {
        if self.max == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            self.max + self.scaled.ln()
        }
    }
}

/// A closed interval `[lo, hi]`; endpoints may be infinite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if lo.is_nan() || hi.is_nan() || lo >= hi {
            return Err(Error::param(
                "interval",
                hi,
                format!("need lo < hi, got [{lo}, {hi}]"),
            ));
        }
        Ok(Interval { lo, hi })
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }
}

/// Controls for [`integrate`].
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureSpec {
    /// Points where the integrand may jump or kink. Each panel between
    /// consecutive breakpoints is integrated separately and the integrand is
    /// only evaluated strictly inside a panel.
    pub breakpoints: Vec<f64>,
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_subdivisions: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec {
            breakpoints: Vec::new(),
            abs_tol: 1e-12,
            rel_tol: 1e-10,
            max_subdivisions: 4000,
        }
    }
}

impl QuadratureSpec {
    pub fn with_breakpoints(breakpoints: Vec<f64>) -> Self {
        QuadratureSpec {
            breakpoints,
            ..Self::default()
        }
    }
}

const GK_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const GK_WEIGHTS: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
const GAUSS7_WEIGHTS: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

struct Segment {
    lo: f64,
    hi: f64,
    value: f64,
    error: f64,
}

fn kronrod15<F: FnMut(f64) -> f64>(f: &mut F, lo: f64, hi: f64) -> Segment {
    let center = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    let fc = f(center);
    let mut kronrod = fc * GK_WEIGHTS[7];
    let mut gauss = fc * GAUSS7_WEIGHTS[3];
    for j in 0..7 {
        let dx = half * GK_NODES[j];
        let pair = f(center - dx) + f(center + dx);
        kronrod += GK_WEIGHTS[j] * pair;
        if j % 2 == 1 {
            gauss += GAUSS7_WEIGHTS[j / 2] * pair;
        }
    }
    Segment {
        lo,
        hi,
        value: kronrod * half,
        error: ((kronrod - gauss) * half).abs(),
    }
}

/// Adaptive Gauss-Kronrod (7/15) integration of `f` over a finite interval.
///
/// The interval is first cut at every declared breakpoint inside it; each
/// panel is refined by bisecting the segment with the largest error
/// estimate until the summed estimate meets `max(abs_tol, rel_tol * |I|)`.
pub fn integrate<F: FnMut(f64) -> f64>(
    mut f: F,
    interval: Interval,
    spec: &QuadratureSpec,
) -> Result<f64> {
    if !interval.lo.is_finite() || !interval.hi.is_finite() {
        return Err(Error::param(
            "interval",
            interval.hi,
            "integration limits must be finite",
        ));
    }
    let mut cuts = vec![interval.lo];
    let mut inner: Vec<f64> = spec
        .breakpoints
        .iter()
        .copied()
        .filter(|b| *b > interval.lo && *b < interval.hi)
        .collect();
    inner.sort_by(f64::total_cmp);
    inner.dedup();
    cuts.extend(inner);
    cuts.push(interval.hi);

    let mut segments: Vec<Segment> = cuts
        .windows(2)
        .map(|w| kronrod15(&mut f, w[0], w[1]))
        .collect();
    let mut subdivisions = 0;
    loop {
        let total: f64 = segments.iter().map(|s| s.value).sum();
        let error: f64 = segments.iter().map(|s| s.error).sum();
        if !total.is_finite() {
            return Err(Error::no_convergence(
                "integrate",
                "integrand produced a non-finite value",
            ));
        }
        let target = spec.abs_tol.max(spec.rel_tol * total.abs());
        if error <= target {
            return Ok(total);
        }
        let (worst, _) = segments
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.error.total_cmp(&b.1.error))
            .expect("at least one segment");
        let seg = segments.swap_remove(worst);
        let mid = 0.5 * (seg.lo + seg.hi);
        if subdivisions >= spec.max_subdivisions || mid <= seg.lo || mid >= seg.hi {
            return Err(Error::no_convergence(
                "integrate",
                format!("error estimate {error:.3e} above target {target:.3e}"),
            ));
        }
        segments.push(kronrod15(&mut f, seg.lo, mid));
        segments.push(kronrod15(&mut f, mid, seg.hi));
        subdivisions += 1;
    }
}

/// Outcome of a bracketed root search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RootBracket {
    pub root: f64,
    pub lo: f64,
    pub hi: f64,
    pub iterations: usize,
}

/// Tolerances for [`find_root_increasing_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RootOptions {
    /// Stop once the bracket half-width is below this.
    pub xtol: f64,
    /// Stop once `|g(x)|` is below this.
    pub ftol: f64,
    pub max_iter: usize,
}

impl Default for RootOptions {
    fn default() -> Self {
        RootOptions {
            xtol: 1e-14,
            ftol: 0.0,
            max_iter: 500,
        }
    }
}

/// Root of an increasing function, see [`find_root_increasing_with`].
pub fn find_root_increasing<F: FnMut(f64) -> f64>(
    g: F,
    hint: Interval,
    domain: Interval,
    tol: f64,
) -> Result<f64> {
    let opts = RootOptions {
        xtol: tol,
        ..RootOptions::default()
    };
    find_root_increasing_with(g, hint, domain, opts).map(|r| r.root)
}

/// Finds `x` with `g(x) = 0` for `g` increasing on `domain`.
///
/// The hint bracket is widened geometrically (doubling towards an infinite
/// side, halving the gap towards a finite one) until `g` changes sign, then
/// Brent's method takes over. Fails if a domain boundary is reached without a
/// sign change.
pub fn find_root_increasing_with<F: FnMut(f64) -> f64>(
    mut g: F,
    hint: Interval,
    domain: Interval,
    opts: RootOptions,
) -> Result<RootBracket> {
    if !(domain.contains(hint.lo) && domain.contains(hint.hi)) {
        return Err(Error::param(
            "hint",
            hint.lo,
            "hint bracket must lie inside the domain",
        ));
    }
    let mut eval = |x: f64| -> Result<f64> {
        let v = g(x);
        if v.is_nan() {
            Err(Error::no_convergence(
                "find_root_increasing",
                format!("g({x}) is NaN"),
            ))
        } else {
            Ok(v)
        }
    };
    let (mut lo, mut hi) = (hint.lo, hint.hi);
    let mut glo = eval(lo)?;
    let mut ghi = eval(hi)?;
    let mut step = hi - lo;
    let mut guard = 0;
    while glo > 0.0 {
        guard += 1;
        let next = if lo - step > domain.lo {
            lo - step
        } else {
            0.5 * (lo + domain.lo)
        };
        if next >= lo || guard > 2000 {
            return Err(Error::no_convergence(
                "find_root_increasing",
                format!("no sign change before lower domain boundary {}", domain.lo),
            ));
        }
        hi = lo;
        ghi = glo;
        lo = next;
        glo = eval(lo)?;
        step *= 2.0;
    }
    step = hi - lo;
    while ghi < 0.0 {
        guard += 1;
        let next = if hi + step < domain.hi {
            hi + step
        } else {
            0.5 * (hi + domain.hi)
        };
        if next <= hi || guard > 2000 {
            return Err(Error::no_convergence(
                "find_root_increasing",
                format!("no sign change before upper domain boundary {}", domain.hi),
            ));
        }
        lo = hi;
        glo = ghi;
        hi = next;
        ghi = eval(hi)?;
        step *= 2.0;
    }
    if glo == 0.0 {
        return Ok(RootBracket {
            root: lo,
            lo,
            hi: lo,
            iterations: 0,
        });
    }
    if ghi == 0.0 {
        return Ok(RootBracket {
            root: hi,
            lo: hi,
            hi,
            iterations: 0,
        });
    }
    brent(&mut eval, lo, hi, glo, ghi, opts)
}

fn brent<F: FnMut(f64) -> Result<f64>>(
    f: &mut F,
    mut a: f64,
    mut b: f64,
    mut fa: f64,
    mut fb: f64,
    opts: RootOptions,
) -> Result<RootBracket> {
    let mut c = b;
    let mut fc = fb;
    let mut d = b - a;
    let mut e = d;
    for iter in 0..opts.max_iter {
        if (fb > 0.0 && fc > 0.0) || (fb < 0.0 && fc < 0.0) {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol1 = 2.0 * f64::EPSILON * b.abs() + 0.5 * opts.xtol;
        let xm = 0.5 * (c - b);
        if xm.abs() <= tol1 || fb == 0.0 || fb.abs() <= opts.ftol {
            return Ok(RootBracket {
                root: b,
                lo: b.min(c),
                hi: b.max(c),
                iterations: iter,
            });
        }
        if e.abs() >= tol1 && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * xm * s;
                q = 1.0 - s;
            } else {
                let qq = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * xm * qq * (qq - r) - (b - a) * (r - 1.0));
                q = (qq - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            }
            p = p.abs();
            let min1 = 3.0 * xm * q - (tol1 * q).abs();
            let min2 = (e * q).abs();
            if 2.0 * p < min1.min(min2) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol1 { d } else { tol1.copysign(xm) };
        fb = f(b)?;
    }
    Err(Error::no_convergence(
        "find_root_increasing",
        format!(
            "bracket [{}, {}] after {} iterations",
            b.min(c),
            b.max(c),
            opts.max_iter
        ),
    ))
}
