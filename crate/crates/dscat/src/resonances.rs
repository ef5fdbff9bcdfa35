//! Half-line radial resonance analysis: regular/outgoing solutions of
//! −φ″ + (V − iW)φ = z²φ, the Jost function F(z) = φ′(R) − izφ(R), zero
//! search in the lower half-plane by argument principle + Newton, real
//! resonance tuning, and the resonance ↔ spectral-singularity report.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::models::{RadialPotential, RadialSystem};
use crate::resolvent::SingularityScan;

/// Jost function value with its solver certificates.
#[derive(Debug, Clone)]
pub struct JostEvaluation {
    pub z: Complex64,
    pub value: Complex64,
    /// (φ(R), φ′(R)).
    pub regular_solution_at_r: (Complex64, Complex64),
    pub ode_error_estimate: f64,
}

/// Zeros of F in a rectangle, certified by the argument principle.
#[derive(Debug, Clone)]
pub struct ResonanceSet {
    /// (z, multiplicity, |F(z)| residual).
    pub zeros: Vec<(Complex64, usize, f64)>,
    /// (re_lo, re_hi, im_lo, im_hi).
    pub search_region: (f64, f64, f64, f64),
    pub argument_principle_count: i64,
}

// ---------------------------------------------------------------------------
// Adaptive Dormand–Prince RK45 for the 2-component complex system
// y' = (y[1], q(r) y[0]) with q = V − iW − z².

const DP_C: [f64; 6] = [1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const DP_A: [[f64; 6]; 6] = [
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const DP_B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const DP_B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

type State = [Complex64; 2];

fn axpy(y: &State, ks: &[State], coeffs: &[f64], h: f64) -> State {
    let mut out = *y;
    for (k, &c) in ks.iter().zip(coeffs) {
        if c != 0.0 {
            out[0] += k[0] * Complex64::new(c * h, 0.0);
            out[1] += k[1] * Complex64::new(c * h, 0.0);
        }
    }
    out
}

/// Integrate y' = f(r, y) from `a` to `b` (either direction), returning the
/// final state and an accumulated local-error estimate.
fn rk45<F: Fn(f64, &State) -> State>(
    f: &F,
    a: f64,
    b: f64,
    y0: State,
    rtol: f64,
) -> Result<(State, f64)> {
    if a == b {
        return Ok((y0, 0.0));
    }
    let dir = (b - a).signum();
    let span = (b - a).abs();
    let mut h = dir * (span / 50.0).min(0.1);
    let mut r = a;
    let mut y = y0;
    let mut err_acc = 0.0;
    let mut steps = 0usize;
    while (b - r) * dir > 1e-14 * span.max(1.0) {
        if (r + h - b) * dir > 0.0 {
            h = b - r;
        }
        let mut k: Vec<State> = Vec::with_capacity(7);
        k.push(f(r, &y));
        for i in 0..6 {
            let yi = axpy(&y, &k, &DP_A[i][..=i.min(5)], h);
            k.push(f(r + DP_C[i] * h, &yi));
        }
        let y5 = axpy(&y, &k, &DP_B5, h);
        let y4 = axpy(&y, &k, &DP_B4, h);
        let scale = y5[0].norm().max(y5[1].norm()).max(1e-8);
        let err = ((y5[0] - y4[0]).norm().powi(2) + (y5[1] - y4[1]).norm().powi(2)).sqrt()
            / scale;
        if err <= rtol {
            r += h;
            y = y5;
            err_acc += err;
        }
        let factor = if err > 0.0 {
            (0.9 * (rtol / err).powf(0.2)).clamp(0.2, 5.0)
        } else {
            5.0
        };
        h *= factor;
        steps += 1;
        if steps > 2_000_000 {
            return Err(Error::OdeFailure(format!(
                "step limit exceeded at r = {r} (h = {h:.3e})"
            )));
        }
        if h.abs() < 1e-15 * span.max(1.0) {
            return Err(Error::OdeFailure(format!("step underflow at r = {r}")));
        }
    }
    Ok((y, err_acc))
}

fn rhs(pot: &RadialPotential, z2: Complex64) -> impl Fn(f64, &State) -> State + '_ {
    move |r: f64, y: &State| {
        let q = Complex64::new(pot.v(r), -pot.w(r)) - z2;
        [y[1], q * y[0]]
    }
}

/// Integrate across [a, b] splitting at potential discontinuities.
fn integrate_piecewise(
    pot: &RadialPotential,
    z2: Complex64,
    a: f64,
    b: f64,
    y0: State,
    rtol: f64,
) -> Result<(State, f64)> {
    let mut cuts: Vec<f64> = pot
        .breakpoints()
        .into_iter()
        .filter(|&c| (c - a.min(b)) > 1e-14 && (a.max(b) - c) > 1e-14)
        .collect();
    if a > b {
        cuts.reverse();
    }
    let f = rhs(pot, z2);
    let mut y = y0;
    let mut err = 0.0;
    let mut from = a;
    for c in cuts.into_iter().chain(std::iter::once(b)) {
        let (ynew, e) = rk45(&f, from, c, y, rtol)?;
        y = ynew;
        err += e;
        from = c;
    }
    Ok((y, err))
}

/// Regular and outgoing solutions sampled on the model grid plus at R.
#[derive(Debug, Clone)]
pub struct RadialSolution {
    pub z: Complex64,
    pub grid: Vec<f64>,
    pub phi: Vec<Complex64>,
    pub f_out: Vec<Complex64>,
    pub phi_at_r: Complex64,
    pub dphi_at_r: Complex64,
    /// Wronskian W(φ, f) = φ f′ − φ′ f (constant in r) = −e^{izR} F(z).
    pub wronskian: Complex64,
    pub ode_error_estimate: f64,
}

fn stiffness_guard(radial: &RadialSystem, z: Complex64) -> Result<()> {
    let zr = z.norm() * radial.potential.support_radius;
    if zr > 200.0 {
        return Err(Error::OdeFailure(format!(
            "|z|·R = {zr:.1} beyond the stiffness guard 200"
        )));
    }
    Ok(())
}

/// Solve for φ (forward from 0) and the outgoing f (backward from R) at all
/// grid nodes.
pub fn solve_radial(radial: &RadialSystem, z: Complex64) -> Result<RadialSolution> {
    stiffness_guard(radial, z)?;
    let pot = &radial.potential;
    let z2 = z * z;
    let rtol = radial.ode_rtol;
    let big_r = pot.support_radius;

    // φ forward through the grid nodes.
    let mut phi = Vec::with_capacity(radial.grid.len());
    let mut y: State = [Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)];
    let mut err = 0.0;
    let mut from = 0.0;
    for &node in &radial.grid {
        let (ynew, e) = integrate_piecewise(pot, z2, from, node, y, rtol)?;
        y = ynew;
        err += e;
        from = node;
        phi.push(y[0]);
    }
    let (y_r, e_r) = integrate_piecewise(pot, z2, from, big_r, y, rtol)?;
    err += e_r;
    let (phi_at_r, dphi_at_r) = (y_r[0], y_r[1]);

    // f backward from R where f = e^{izr}.
    let iz = Complex64::new(0.0, 1.0) * z;
    let f_at_r = (iz * big_r).exp();
    let mut yf: State = [f_at_r, iz * f_at_r];
    let mut f_out_rev = Vec::with_capacity(radial.grid.len());
    let mut from = big_r;
    for &node in radial.grid.iter().rev() {
        let (ynew, e) = integrate_piecewise(pot, z2, from, node, yf, rtol)?;
        yf = ynew;
        err += e;
        from = node;
        f_out_rev.push(yf[0]);
    }
    f_out_rev.reverse();

    let wronskian = phi_at_r * iz * f_at_r - dphi_at_r * f_at_r;
    Ok(RadialSolution {
        z,
        grid: radial.grid.clone(),
        phi,
        f_out: f_out_rev,
        phi_at_r,
        dphi_at_r,
        wronskian,
        ode_error_estimate: err,
    })
}

/// F(z) = φ′(R) − izφ(R). Free model: F(z) = e^{−izR}.
pub fn jost_function(radial: &RadialSystem, z: Complex64) -> Result<JostEvaluation> {
    stiffness_guard(radial, z)?;
    let pot = &radial.potential;
    let big_r = pot.support_radius;
    let y0: State = [Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)];
    let (y, err) = integrate_piecewise(pot, z * z, 0.0, big_r, y0, radial.ode_rtol)?;
    let value = y[1] - Complex64::new(0.0, 1.0) * z * y[0];
    if err > 1e-9 * (1.0 + value.norm()) {
        return Err(Error::OdeFailure(format!(
            "accumulated ODE error {err:.3e} exceeds the certificate bound at z = {z}"
        )));
    }
    Ok(JostEvaluation {
        z,
        value,
        regular_solution_at_r: (y[0], y[1]),
        ode_error_estimate: err,
    })
}

// ---------------------------------------------------------------------------
// Zero search.

fn boundary_samples(rect: (f64, f64, f64, f64), per_side: usize) -> Vec<Complex64> {
    let (a, b, c, d) = rect;
    let mut pts = Vec::with_capacity(4 * per_side);
    for k in 0..per_side {
        let t = k as f64 / per_side as f64;
        pts.push(Complex64::new(a + (b - a) * t, c));
    }
    for k in 0..per_side {
        let t = k as f64 / per_side as f64;
        pts.push(Complex64::new(b, c + (d - c) * t));
    }
    for k in 0..per_side {
        let t = k as f64 / per_side as f64;
        pts.push(Complex64::new(b - (b - a) * t, d));
    }
    for k in 0..per_side {
        let t = k as f64 / per_side as f64;
        pts.push(Complex64::new(a, d - (d - c) * t));
    }
    pts
}

/// Winding number of F around the rectangle boundary by phase unwrapping,
/// adaptively doubling the sampling until stable. Returns the count and the
/// minimum |F| seen on the boundary.
fn winding_number(radial: &RadialSystem, rect: (f64, f64, f64, f64)) -> Result<(i64, f64)> {
    let mut per_side = 32;
    let mut prev: Option<i64> = None;
    loop {
        let pts = boundary_samples(rect, per_side);
        let mut min_abs = f64::INFINITY;
        let mut total = 0.0;
        let mut last_arg: Option<f64> = None;
        let mut first_arg = 0.0;
        let mut max_jump: f64 = 0.0;
        for p in &pts {
            let f = jost_function(radial, *p)?.value;
            min_abs = min_abs.min(f.norm());
            let arg = f.arg();
            if let Some(la) = last_arg {
                let mut d = arg - la;
                while d > std::f64::consts::PI {
                    d -= 2.0 * std::f64::consts::PI;
                }
                while d < -std::f64::consts::PI {
                    d += 2.0 * std::f64::consts::PI;
                }
                max_jump = max_jump.max(d.abs());
                total += d;
            } else {
                first_arg = arg;
            }
            last_arg = Some(arg);
        }
        // close the loop
        if let Some(la) = last_arg {
            let mut d = first_arg - la;
            while d > std::f64::consts::PI {
                d -= 2.0 * std::f64::consts::PI;
            }
            while d < -std::f64::consts::PI {
                d += 2.0 * std::f64::consts::PI;
            }
            max_jump = max_jump.max(d.abs());
            total += d;
        }
        let count = (total / (2.0 * std::f64::consts::PI)).round() as i64;
        // Large per-step phase jumps mean undersampling; require two
        // consecutive agreements with modest jumps.
        if max_jump < 1.5 && prev == Some(count) {
            return Ok((count, min_abs));
        }
        prev = Some(count);
        per_side *= 2;
        if per_side > 4096 {
            return Err(Error::QuadratureNonConvergence(
                "winding number did not stabilize".into(),
            ));
        }
    }
}

fn newton_polish(
    radial: &RadialSystem,
    mut z: Complex64,
    scale: f64,
) -> Option<(Complex64, f64)> {
    let h = 1e-6 * scale.max(1e-3);
    for _ in 0..60 {
        let f = jost_function(radial, z).ok()?.value;
        if f.norm() < 1e-12 * scale.max(1.0) {
            return Some((z, f.norm()));
        }
        let fp = (jost_function(radial, z + Complex64::new(h, 0.0)).ok()?.value
            - jost_function(radial, z - Complex64::new(h, 0.0)).ok()?.value)
            / Complex64::new(2.0 * h, 0.0);
        if fp.norm() < 1e-30 {
            return None;
        }
        let step = f / fp;
        z -= step;
        if step.norm() < 1e-14 * (1.0 + z.norm()) {
            let f = jost_function(radial, z).ok()?.value;
            return Some((z, f.norm()));
        }
    }
    let f = jost_function(radial, z).ok()?.value;
    if f.norm() < 1e-10 * scale.max(1.0) {
        Some((z, f.norm()))
    } else {
        None
    }
}

fn collect_zeros(
    radial: &RadialSystem,
    rect: (f64, f64, f64, f64),
    scale: f64,
    depth: usize,
    out: &mut Vec<Complex64>,
) -> Result<()> {
    let (count, _) = winding_number(radial, rect)?;
    if count == 0 {
        return Ok(());
    }
    let (a, b, c, d) = rect;
    let mid = Complex64::new(0.5 * (a + b), 0.5 * (c + d));
    let diag = ((b - a).powi(2) + (d - c).powi(2)).sqrt();
    if diag < 0.02 || depth == 0 {
        if let Some((z, _)) = newton_polish(radial, mid, scale) {
            if z.re >= a - 0.05 && z.re <= b + 0.05 && z.im >= c - 0.05 && z.im <= d + 0.05 {
                if !out.iter().any(|&w| (w - z).norm() < 1e-6) {
                    out.push(z);
                }
            }
        }
        if depth == 0 && diag >= 0.02 {
            return Err(Error::QuadratureNonConvergence(
                "max subdivision depth reached with unresolved zeros".into(),
            ));
        }
        return Ok(());
    }
    // bisect the longer side, offsetting the cut slightly if it lands on a zero
    let (r1, r2) = if b - a >= d - c {
        let mut m = 0.5 * (a + b);
        for _ in 0..3 {
            let edge_ok = winding_number(radial, (a, m, c, d))
                .map(|(_, minf)| minf > 1e-6 * scale)
                .unwrap_or(false);
            if edge_ok {
                break;
            }
            m += 0.013 * (b - a);
        }
        ((a, m, c, d), (m, b, c, d))
    } else {
        let mut m = 0.5 * (c + d);
        for _ in 0..3 {
            let edge_ok = winding_number(radial, (a, b, c, m))
                .map(|(_, minf)| minf > 1e-6 * scale)
                .unwrap_or(false);
            if edge_ok {
                break;
            }
            m += 0.013 * (d - c);
        }
        ((a, b, c, m), (a, b, m, d))
    };
    collect_zeros(radial, r1, scale, depth - 1, out)?;
    collect_zeros(radial, r2, scale, depth - 1, out)
}

fn multiplicity(radial: &RadialSystem, z: Complex64, scale: f64) -> Result<usize> {
    for &radius in &[1e-3, 3e-3, 1e-2] {
        let rect = (z.re - radius, z.re + radius, z.im - radius, z.im + radius);
        match winding_number(radial, rect) {
            Ok((w, min_abs)) if min_abs > 1e-10 * scale && w >= 1 => return Ok(w as usize),
            _ => continue,
        }
    }
    Err(Error::IndeterminateRank(format!(
        "could not certify multiplicity of the zero at {z}"
    )))
}

/// Search a rectangle (re_lo, re_hi, im_lo, im_hi) for zeros of F.
pub fn resonance_search(
    radial: &RadialSystem,
    region: (f64, f64, f64, f64),
) -> Result<ResonanceSet> {
    let (a, b, c, d) = region;
    if !(a < b && c < d) {
        return Err(Error::InvalidModel(format!("empty search region {region:?}")));
    }
    // local F scale: median |F| on the boundary
    let mut mags: Vec<f64> = boundary_samples(region, 64)
        .iter()
        .map(|&p| jost_function(radial, p).map(|j| j.value.norm()))
        .collect::<Result<_>>()?;
    mags.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let scale = mags[mags.len() / 2].max(1e-6);

    let mut rect = region;
    let (count, min_abs) = winding_number(radial, rect)?;
    let mut total = count;
    if min_abs < 1e-8 * scale {
        // boundary zero: nudge once and retry
        let pad = 0.013 * (b - a).max(d - c);
        rect = (a - pad, b + pad, c - pad, d + pad);
        let (count2, min2) = winding_number(radial, rect)?;
        if min2 < 1e-8 * scale {
            return Err(Error::NearSpectrum(format!(
                "a zero of F lies on the search boundary even after nudging (min |F| = {min2:.3e})"
            )));
        }
        total = count2;
    }

    let mut zeros_raw = Vec::new();
    if total != 0 {
        collect_zeros(radial, rect, scale, 24, &mut zeros_raw)?;
    }
    let mut zeros = Vec::new();
    let mut mult_sum = 0i64;
    for z in zeros_raw {
        let m = multiplicity(radial, z, scale)?;
        let residual = jost_function(radial, z)?.value.norm();
        if residual > 1e-8 * scale {
            return Err(Error::AccuracyUnreachable(format!(
                "zero candidate at {z} has residual {residual:.3e} above 1e-8·scale"
            )));
        }
        mult_sum += m as i64;
        zeros.push((z, m, residual));
    }
    if mult_sum != total {
        return Err(Error::QuadratureNonConvergence(format!(
            "argument-principle count {total} vs zeros with multiplicity {mult_sum}"
        )));
    }
    zeros.sort_by(|x, y| (x.0.re, x.0.im).partial_cmp(&(y.0.re, y.0.im)).unwrap());
    Ok(ResonanceSet {
        zeros,
        search_region: rect,
        argument_principle_count: total,
    })
}

// ---------------------------------------------------------------------------
// Real-resonance tuning.

/// Track the zero starting from `z_start` as the family parameter moves, and
/// find the parameter where Im z crosses 0. Returns (param, zero, |Im z|).
pub fn tune_real_resonance(
    family: &dyn Fn(f64) -> RadialPotential,
    z_start: Complex64,
    param_range: (f64, f64),
    steps: usize,
) -> Result<(f64, Complex64, f64)> {
    let (p_lo, p_hi) = param_range;
    if p_lo == p_hi || steps < 2 {
        return Err(Error::InvalidModel(
            "tune_real_resonance needs a nondegenerate parameter range and >= 2 scan steps"
                .into(),
        ));
    }
    let model = |p: f64| -> Result<RadialSystem> {
        crate::models::build_radial_model(&family(p), 64)
    };
    let track = |p: f64, guess: Complex64| -> Result<Complex64> {
        let radial = model(p)?;
        newton_polish(&radial, guess, 1.0)
            .map(|(z, _)| z)
            .ok_or_else(|| {
                Error::AccuracyUnreachable(format!(
                    "zero tracking lost at parameter {p} (guess {guess})"
                ))
            })
    };

    let mut guess = z_start;
    let mut prev: Option<(f64, Complex64)> = None;
    let mut bracket: Option<((f64, Complex64), (f64, Complex64))> = None;
    for k in 0..=steps {
        let p = p_lo + (p_hi - p_lo) * k as f64 / steps as f64;
        let z = track(p, guess)?;
        if (z - guess).norm() > 1.0 {
            return Err(Error::AccuracyUnreachable(format!(
                "tracked zero jumped from {guess} to {z}; outside the tracking window"
            )));
        }
        if let Some((_, zp)) = prev {
            if zp.im.signum() != z.im.signum() && zp.im != 0.0 {
                bracket = Some((prev.unwrap(), (p, z)));
                break;
            }
        }
        prev = Some((p, z));
        guess = z;
    }
    let ((mut pa, mut za), (mut pb, mut zb)) = bracket.ok_or_else(|| {
        Error::Precondition(format!(
            "Im z(param) has no sign change on [{p_lo}, {p_hi}]"
        ))
    })?;
    for _ in 0..80 {
        let denom = zb.im - za.im;
        let p = if denom.abs() > 1e-300 {
            pb - zb.im * (pb - pa) / denom
        } else {
            0.5 * (pa + pb)
        };
        let z = track(p, zb)?;
        if z.im.abs() <= 1e-8 {
            return Ok((p, z, z.im.abs()));
        }
        if z.im.signum() == za.im.signum() {
            pa = p;
            za = z;
        } else {
            pb = p;
            zb = z;
        }
    }
    Err(Error::AccuracyUnreachable(
        "secant iteration on Im z(param) did not reach 1e-8".into(),
    ))
}

// ---------------------------------------------------------------------------
// Correspondence with the singularity scan.

#[derive(Debug, Clone, serde::Serialize)]
pub struct CorrespondenceReport {
    /// (resonance z₀ on the real axis, matched singularity λ = z₀²).
    pub matches: Vec<(f64, f64)>,
    pub unmatched_resonances: Vec<f64>,
    pub unmatched_singularities: Vec<f64>,
    pub lambda_grid_step: f64,
}

/// Match real zeros −z₀ of F with singularities at λ = z₀² within one λ-grid
/// step. Mismatches are findings, not errors.
pub fn correspondence_report(
    _radial: &RadialSystem,
    resonances: &ResonanceSet,
    scan: &SingularityScan,
) -> CorrespondenceReport {
    let grid_step = if scan.lambda_grid.len() > 1 {
        let mut step = f64::INFINITY;
        for w in scan.lambda_grid.windows(2) {
            step = step.min((w[1] - w[0]).abs());
        }
        step
    } else {
        f64::INFINITY
    };
    let real_zeros: Vec<f64> = resonances
        .zeros
        .iter()
        .filter(|(z, _, _)| z.im.abs() <= 1e-6)
        .map(|(z, _, _)| z.re)
        .collect();
    let mut matches = Vec::new();
    let mut unmatched_resonances = Vec::new();
    let mut used = vec![false; scan.singularities.len()];
    for &z0 in &real_zeros {
        let lam = z0 * z0;
        let mut hit = None;
        for (i, s) in scan.singularities.iter().enumerate() {
            if !used[i] && (s.lambda - lam).abs() <= grid_step.max(1e-9) {
                hit = Some(i);
                break;
            }
        }
        match hit {
            Some(i) => {
                used[i] = true;
                matches.push((z0, scan.singularities[i].lambda));
            }
            None => unmatched_resonances.push(z0),
        }
    }
    let unmatched_singularities = scan
        .singularities
        .iter()
        .zip(&used)
        .filter(|(_, &u)| !u)
        .map(|(s, _)| s.lambda)
        .collect();
    CorrespondenceReport {
        matches,
        unmatched_resonances,
        unmatched_singularities,
        lambda_grid_step: grid_step,
    }
}
