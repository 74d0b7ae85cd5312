//! Standard normal CDF and quantile used throughout the crate.
//!
//! `normal_cdf` evaluates Phi(x) = erfc(-x / sqrt(2)) / 2 with W. J. Cody's
//! three-region rational Chebyshev approximation to erfc (SPECFUN `calerf`),
//! whose relative error stays near machine precision. Absolute error of
//! `normal_cdf` is below 1e-15 on [-8, 8], well inside the 1e-9 budget the
//! rest of the crate assumes.
//!
//! `normal_inv_cdf` seeds with Acklam's rational approximation (absolute
//! error about 1.15e-9) and applies one Halley refinement step against
//! `normal_cdf`, which pushes the absolute error below 1e-13 on the quantile
//! range corresponding to [-8, 8].

/// Normal density at `x` for the standard normal.
pub fn normal_pdf(x: f64) -> f64 {
    const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal quantile.
///
/// Follows the usual quantile conventions: `p = 0` gives `-inf`, `p = 1`
/// gives `+inf`, anything outside `[0, 1]` (or NaN) gives NaN.
pub fn normal_inv_cdf(p: f64) -> f64 {
    if p.is_nan() || p < 0.0 || p > 1.0 {
        return f64::NAN;
    }
    if p == 0.0 {
        return f64::NEG_INFINITY;
    }
    if p == 1.0 {
        return f64::INFINITY;
    }

    let x = acklam_estimate(p);

    // One Halley step: with the CDF error near machine epsilon this takes the
    // seed estimate from ~1e-9 to below 1e-13 absolute.
    let err = normal_cdf(x) - p;
    let u = err / normal_pdf(x);
    x - u / (1.0 + 0.5 * x * u)
}

/// Acklam's rational approximation to the normal quantile.
fn acklam_estimate(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const P_LOW: f64 = 0.02425;

    if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    }
}

// Cody's erfc. Three regions: a direct rational form for |x| <= 0.46875,
// and exp(-x^2)-scaled rational forms on (0.46875, 4] and (4, inf). The
// exponential is split at a 1/16-aligned point so exp(-x*x) keeps full
// precision for large arguments.
fn erfc(x: f64) -> f64 {
    let y = x.abs();
    if y <= 0.46875 {
        return 1.0 - erf_small(x);
    }
    let r = if y <= 4.0 {
        erfc_mid(y)
    } else {
        erfc_large(y)
    };
    if x < 0.0 {
        2.0 - r
    } else {
        r
    }
}

/// erf on |x| <= 0.46875: x * P(x^2) / Q(x^2).
fn erf_small(x: f64) -> f64 {
    const A: [f64; 5] = [
        3.16112374387056560e+00,
        1.13864154151050156e+02,
        3.77485237685302021e+02,
        3.20937758913846947e+03,
        1.85777706184603153e-01,
    ];
    const B: [f64; 4] = [
        2.36012909523441209e+01,
        2.44024637934444173e+02,
        1.28261652607737228e+03,
        2.84423683343917062e+03,
    ];
    let z = x * x;
    let mut num = A[4] * z;
    let mut den = z;
    for i in 0..3 {
        num = (num + A[i]) * z;
        den = (den + B[i]) * z;
    }
    x * (num + A[3]) / (den + B[3])
}

/// erfc on 0.46875 < x <= 4: exp(-x^2) * P(x) / Q(x).
fn erfc_mid(y: f64) -> f64 {
    const C: [f64; 9] = [
        5.64188496988670089e-01,
        8.88314979438837594e+00,
        6.61191906371416295e+01,
        2.98635138197400131e+02,
        8.81952221241769090e+02,
        1.71204761263407058e+03,
        2.05107837782607147e+03,
        1.23033935479799725e+03,
        2.15311535474403846e-08,
    ];
    const D: [f64; 8] = [
        1.57449261107098347e+01,
        1.17693950891312499e+02,
        5.37181101862009858e+02,
        1.62138957456669019e+03,
        3.29079923573345963e+03,
        4.36261909014324716e+03,
        3.43936767414372164e+03,
        1.23033935480374942e+03,
    ];
    let mut num = C[8] * y;
    let mut den = y;
    for i in 0..7 {
        num = (num + C[i]) * y;
        den = (den + D[i]) * y;
    }
    scaled_exp(y) * (num + C[7]) / (den + D[7])
}

/// erfc on x > 4: exp(-x^2)/x * (1/sqrt(pi) - P(1/x^2) / (x^2 Q(1/x^2))).
fn erfc_large(y: f64) -> f64 {
    const P: [f64; 6] = [
        3.05326634961232344e-01,
        3.60344899949804439e-01,
        1.25781726111229246e-01,
        1.60837851487422766e-02,
        6.58749161529837803e-04,
        1.63153871373020978e-02,
    ];
    const Q: [f64; 5] = [
        2.56852019228982242e+00,
        1.87295284992346047e+00,
        5.27905102951428412e-01,
        6.05183413124413191e-02,
        2.33520497626869185e-03,
    ];
    const INV_SQRT_PI: f64 = 5.641_895_835_477_562_9e-1;
    if y >= 26.6 {
        // erfc underflows to zero well before f64 exp does anything odd.
        return 0.0;
    }
    let z = 1.0 / (y * y);
    let mut num = P[5] * z;
    let mut den = z;
    for i in 0..4 {
        num = (num + P[i]) * z;
        den = (den + Q[i]) * z;
    }
    let tail = z * (num + P[4]) / (den + Q[4]);
    scaled_exp(y) * (INV_SQRT_PI - tail) / y
}

/// exp(-y^2) computed as exp(-hi^2) * exp(-(y-hi)(y+hi)) with hi a multiple
/// of 1/16, which keeps the argument reduction exact.
fn scaled_exp(y: f64) -> f64 {
    let hi = (y * 16.0).trunc() / 16.0;
    let del = (y - hi) * (y + hi);
    (-hi * hi).exp() * (-del).exp()
}
