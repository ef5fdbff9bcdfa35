//! Stone-type spectral projections E_H(I), their algebra, the regularized
//! projector Ẽ_H(I), the Γ_ε contour oracle, and the spectral decomposition
//! residual.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{self, CMat};
use crate::models::DissipativeSystem;
use crate::resolvent::{sandwiched_resolvent, SandwichTarget};
use crate::spectra;

/// E_H(I) with its extrapolation trace and adjoint-law certificate.
#[derive(Debug, Clone)]
pub struct IntervalProjection {
    pub interval: (f64, f64),
    pub matrix: CMat,
    /// (ε, ‖E_ε‖) along the schedule.
    pub eps_trace: Vec<(f64, f64)>,
    /// ‖E* − E_{H*}(I)‖ with E_{H*}(I) from an independent quadrature.
    pub adjoint_defect: f64,
    pub idempotency_defect: f64,
}

/// Ẽ_H(I) built with the regularizing factor of the singularity list.
#[derive(Debug, Clone)]
pub struct RegularizedProjection {
    pub interval: (f64, f64),
    /// (λ_j, ν_j).
    pub singularities: Vec<(f64, usize)>,
    /// μ_j = (λ_j − i)⁻¹.
    pub mu: Vec<Complex64>,
    pub matrix: CMat,
    pub eps_trace: Vec<(f64, f64)>,
}

pub fn default_eps_schedule() -> Vec<f64> {
    vec![0.1, 0.05, 0.025, 0.0125, 0.00625]
}

// ---------------------------------------------------------------------------
// Matrix-valued adaptive Simpson.

fn mat_simpson(
    f: &mut dyn FnMut(f64) -> CMat,
    a: f64,
    b: f64,
    tol: f64,
    max_depth: usize,
) -> CMat {
    fn simpson(fa: &CMat, fm: &CMat, fb: &CMat, a: f64, b: f64) -> CMat {
        (fa + fm * Complex64::new(4.0, 0.0) + fb) * Complex64::new((b - a) / 6.0, 0.0)
    }
    #[allow(clippy::too_many_arguments)]
    fn rec(
        f: &mut dyn FnMut(f64) -> CMat,
        a: f64,
        b: f64,
        fa: &CMat,
        fm: &CMat,
        fb: &CMat,
        whole: &CMat,
        tol: f64,
        depth: usize,
    ) -> CMat {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = simpson(fa, &flm, fm, a, m);
        let right = simpson(fm, &frm, fb, m, b);
        let delta = &left + &right - whole;
        if depth == 0 || delta.norm() <= 15.0 * tol {
            left + right + delta * Complex64::new(1.0 / 15.0, 0.0)
        } else {
            rec(f, a, m, fa, &flm, fm, &left, tol / 2.0, depth - 1)
                + rec(f, m, b, fm, &frm, fb, &right, tol / 2.0, depth - 1)
        }
    }
    let m = 0.5 * (a + b);
    let fa = f(a);
    let fm = f(m);
    let fb = f(b);
    let whole = simpson(&fa, &fm, &fb, a, b);
    rec(f, a, b, &fa, &fm, &fb, &whole, tol, max_depth)
}

// ---------------------------------------------------------------------------
// Stone quadrature and Richardson extrapolation.

/// (1/2iπ) ∫_I w(λ) [(H−(λ+iε))⁻¹ − (H−(λ−iε))⁻¹] dλ.
fn stone_integral(
    h: &CMat,
    interval: (f64, f64),
    eps: f64,
    weight: &dyn Fn(f64) -> Complex64,
    tol: f64,
) -> CMat {
    let n = h.nrows();
    let id = CMat::identity(n, n);
    let two_i_pi = Complex64::new(0.0, 2.0 * std::f64::consts::PI);
    let mut f = |lam: f64| -> CMat {
        let rp = linalg::solve_mat(&(h - &id * Complex64::new(lam, eps)), &id)
            .expect("resolvent solve off the real axis");
        let rm = linalg::solve_mat(&(h - &id * Complex64::new(lam, -eps)), &id)
            .expect("resolvent solve off the real axis");
        (rp - rm) * (weight(lam) / two_i_pi)
    };
    mat_simpson(&mut f, interval.0, interval.1, tol, 40)
}

/// Multi-stage Richardson for a geometric ε schedule (ratio r), assuming an
/// error expansion in odd powers of ε (exact for Stone integrals of finite
/// matrices). Returns the extrapolant and the stagewise tail differences.
fn richardson_odd(mats: &[CMat], eps: &[f64]) -> Result<(CMat, Vec<f64>)> {
    if mats.len() < 2 || mats.len() != eps.len() {
        return Err(Error::InvalidModel(
            "richardson needs >= 2 matched (ε, matrix) samples".into(),
        ));
    }
    let r = eps[1] / eps[0];
    for w in eps.windows(2) {
        if (w[1] / w[0] - r).abs() > 1e-9 {
            return Err(Error::InvalidModel(
                "ε schedule must be geometric for the extrapolation".into(),
            ));
        }
    }
    let mut level: Vec<CMat> = mats.to_vec();
    let mut diffs = Vec::new();
    for (stage, &p) in [1.0f64, 3.0, 5.0, 7.0].iter().enumerate() {
        if level.len() < 2 {
            break;
        }
        let rp = r.powf(p);
        let mut next = Vec::with_capacity(level.len() - 1);
        for k in 0..level.len() - 1 {
            let x = (&level[k + 1] - &level[k] * Complex64::new(rp, 0.0))
                * Complex64::new(1.0 / (1.0 - rp), 0.0);
            next.push(x);
        }
        if next.len() >= 2 {
            let d = (&next[next.len() - 1] - &next[next.len() - 2]).norm();
            diffs.push(d);
        }
        let _ = stage;
        level = next;
    }
    // Cauchy check on the first-stage tail: successive extrapolants must
    // approach each other.
    if diffs.len() >= 2 && diffs[diffs.len() - 1] > diffs[0] * 4.0 && diffs[0] > 1e-12 {
        return Err(Error::QuadratureNonConvergence(format!(
            "extrapolation stages diverge: diffs {diffs:?}"
        )));
    }
    Ok((level.pop().unwrap(), diffs))
}

fn check_interval(interval: (f64, f64)) -> Result<()> {
    let (a, b) = interval;
    if !(a >= 0.0 && b > a && b.is_finite()) {
        return Err(Error::InvalidModel(format!(
            "interval must satisfy 0 <= a < b < ∞, got [{a}, {b}]"
        )));
    }
    Ok(())
}

/// Cheap growth probe: does the sandwiched-resolvent norm grow like ε^{−p},
/// p ≥ 0.5, anywhere on I? Used as the singularity precondition.
fn interval_contains_singularity(system: &DissipativeSystem, interval: (f64, f64)) -> Result<bool> {
    if linalg::op_norm(&system.c) == 0.0 {
        return Ok(false);
    }
    let eps_probe = [0.1, 0.01, 0.001, 1e-4, 1e-5];
    let m = 9;
    let mut sup: Vec<f64> = vec![0.0; eps_probe.len()];
    for i in 0..m {
        let lam = interval.0 + (interval.1 - interval.0) * (i as f64 + 0.5) / m as f64;
        for (j, &eps) in eps_probe.iter().enumerate() {
            let s = sandwiched_resolvent(SandwichTarget::Matrix(system), lam, eps)?;
            sup[j] = sup[j].max(s.norm);
        }
    }
    // slope of log sup-norm against log(1/ε) over the last decade
    let k = eps_probe.len();
    let slope = (sup[k - 1].max(1e-300).ln() - sup[k - 2].max(1e-300).ln())
        / ((1.0 / eps_probe[k - 1]).ln() - (1.0 / eps_probe[k - 2]).ln());
    Ok(slope >= 0.5)
}

fn build_stone(
    h: &CMat,
    interval: (f64, f64),
    eps_schedule: &[f64],
    weight: &dyn Fn(f64) -> Complex64,
) -> Result<(CMat, Vec<(f64, f64)>, Vec<f64>)> {
    let mut mats = Vec::with_capacity(eps_schedule.len());
    let mut trace = Vec::new();
    for &eps in eps_schedule {
        let tol = 1e-9 * (interval.1 - interval.0).max(1.0);
        let e = stone_integral(h, interval, eps, weight, tol);
        trace.push((eps, linalg::op_norm(&e)));
        mats.push(e);
    }
    let (ex, diffs) = richardson_odd(&mats, eps_schedule)?;
    Ok((ex, trace, diffs))
}

/// E_H(I) by Stone quadrature with Richardson extrapolation in ε.
pub fn spectral_projection(
    system: &DissipativeSystem,
    interval: (f64, f64),
    eps_schedule: &[f64],
) -> Result<IntervalProjection> {
    check_interval(interval)?;
    if interval_contains_singularity(system, interval)? {
        return Err(Error::Precondition(format!(
            "interval [{}, {}] shows ε-growth of the sandwiched resolvent: \
             suspected spectral singularity; use regularized_projection",
            interval.0, interval.1
        )));
    }
    let unit = |_: f64| Complex64::new(1.0, 0.0);
    let (e, eps_trace, _) = build_stone(&system.h, interval, eps_schedule, &unit)?;
    let (e_adj, _, _) = build_stone(&system.h_adj, interval, eps_schedule, &unit)?;
    let adjoint_defect = linalg::op_norm(&(e.adjoint() - &e_adj));
    let idempotency_defect = linalg::op_norm(&(&e * &e - &e));
    Ok(IntervalProjection {
        interval,
        matrix: e,
        eps_trace,
        adjoint_defect,
        idempotency_defect,
    })
}

/// ‖E₁E₂ − E(I₁∩I₂)‖ with E(∅) = 0 and the intersection projection built
/// independently.
pub fn projection_product_defect(
    system: &DissipativeSystem,
    e1: &IntervalProjection,
    e2: &IntervalProjection,
    eps_schedule: &[f64],
) -> Result<f64> {
    let lo = e1.interval.0.max(e2.interval.0);
    let hi = e1.interval.1.min(e2.interval.1);
    let product = &e1.matrix * &e2.matrix;
    if lo >= hi {
        return Ok(linalg::op_norm(&product));
    }
    let e_cap = spectral_projection(system, (lo, hi), eps_schedule)?;
    Ok(linalg::op_norm(&(product - &e_cap.matrix)))
}

fn regularizing_weight(singularities: &[(f64, usize)]) -> impl Fn(f64) -> Complex64 + '_ {
    let i = Complex64::new(0.0, 1.0);
    move |lam: f64| {
        let base = (Complex64::new(lam, 0.0) - i).powi(-4);
        let mut w = base;
        for &(lam_j, nu_j) in singularities {
            let mu_j = (Complex64::new(lam_j, 0.0) - i).inv();
            let factor = (Complex64::new(lam, 0.0) - i).inv() - mu_j;
            w *= factor.powi(nu_j as i32);
        }
        w
    }
}

/// Ẽ_H(I) with the regularizing factor (λ−i)⁻⁴ ∏((λ−i)⁻¹ − μ_j)^{ν_j}.
pub fn regularized_projection(
    system: &DissipativeSystem,
    interval: (f64, f64),
    singularities: &[(f64, usize)],
) -> Result<RegularizedProjection> {
    check_interval(interval)?;
    let weight = regularizing_weight(singularities);
    let schedule = default_eps_schedule();
    match build_stone(&system.h, interval, &schedule, &weight) {
        Ok((m, eps_trace, _)) => Ok(RegularizedProjection {
            interval,
            singularities: singularities.to_vec(),
            mu: singularities
                .iter()
                .map(|&(l, _)| (Complex64::new(l, 0.0) - Complex64::new(0.0, 1.0)).inv())
                .collect(),
            matrix: m,
            eps_trace,
        }),
        Err(Error::QuadratureNonConvergence(_)) => Err(Error::OrderUnderestimated),
        Err(e) => Err(e),
    }
}

/// Plain or interval-valued decomposition residual ‖Id − Π_pp − Σ E(I_k)‖.
#[derive(Debug, Clone, PartialEq)]
pub enum Residual {
    Value(f64),
    /// (residual, residual + uncertified tail).
    Interval(f64, f64),
}

pub fn decomposition_residual(
    system: &DissipativeSystem,
    pi_pp: &CMat,
    projections: &[IntervalProjection],
    tail_bound: f64,
) -> Result<Residual> {
    if linalg::op_norm(&system.c) > 0.0 {
        let sd = spectra::eigendecompose(system)?;
        let axis_tol = 1e-8 * (1.0 + sd.h_norm);
        if let Some(bad) = sd
            .eigenvalues
            .iter()
            .find(|z| z.im.abs() <= axis_tol && z.re >= -axis_tol)
        {
            return Err(Error::Precondition(format!(
                "dissipative system has a real eigenvalue {bad} in [0,∞), \
                 excluded by hypothesis; residual skipped"
            )));
        }
    }
    // partition must be contiguous from 0
    let mut ivs: Vec<(f64, f64)> = projections.iter().map(|p| p.interval).collect();
    ivs.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let mut cursor = 0.0;
    for (a, b) in &ivs {
        if (a - cursor).abs() > 1e-9 {
            return Err(Error::Precondition(format!(
                "projection intervals do not partition [0, Λ]: gap at {cursor} vs {a}"
            )));
        }
        cursor = *b;
    }
    let n = system.dim;
    let mut total = CMat::identity(n, n) - pi_pp;
    for p in projections {
        total -= &p.matrix;
    }
    let value = linalg::op_norm(&total);
    if tail_bound > 1e-3 {
        Ok(Residual::Interval(value, value + tail_bound))
    } else {
        Ok(Residual::Value(value))
    }
}

// ---------------------------------------------------------------------------
// Γ_ε contour oracle.

#[derive(Debug, Clone)]
pub struct GammaContour {
    /// (1/2iπ) ∮_{Γ_ε} μ⁴ ∏(μ−μ_j)^{ν_j} (R−μ)⁻¹ dμ, counterclockwise.
    pub total: CMat,
    /// Contribution norms of Γ₁..Γ₄.
    pub piece_norms: [f64; 4],
    pub eps: f64,
}

/// Quadrature over the four pieces of Γ_ε around Σ_e = {(λ−i)⁻¹, λ ≥ 0}.
/// The orientation is certified at runtime by the winding number around a
/// point of the essential arc.
pub fn contour_gamma_integral(
    system: &DissipativeSystem,
    eps: f64,
    singularities: &[(f64, usize)],
) -> Result<GammaContour> {
    if !(eps > 0.0 && eps < 0.5) {
        return Err(Error::InvalidModel(format!("need 0 < ε < 1/2, got {eps}")));
    }
    let n = system.dim;
    let id = CMat::identity(n, n);
    let i = Complex64::new(0.0, 1.0);
    let r_mat = linalg::solve_mat(&(&system.h - &id * i), &id)?;

    let sd = spectra::eigendecompose(system)?;
    let axis_tol = 1e-8 * (1.0 + sd.h_norm);
    // −e₀: the largest real eigenvalue, when one exists
    let e0 = sd
        .eigenvalues
        .iter()
        .filter(|z| z.im.abs() <= axis_tol && z.re < 0.0)
        .map(|z| -z.re)
        .fold(f64::INFINITY, f64::min);
    let e0 = if e0.is_finite() { e0 } else { 1.0 };

    // Contour separation: eigenvalues of H must avoid the lines Im = ±ε
    // within the covered λ range, the circle |z−i| = 1/ε, and Re = −e₀/2.
    let gamma1 = (eps.powi(-2) - (1.0 + eps).powi(2)).sqrt();
    let gamma3 = (eps.powi(-2) - (1.0 - eps).powi(2)).sqrt();
    for &z in &sd.eigenvalues {
        let in_band = z.re >= -0.5 * e0 && z.re <= gamma3;
        if in_band && ((-z.im - eps).abs() < 0.05 * eps) {
            return Err(Error::ContourTooClose {
                min_dist: (-z.im - eps).abs(),
                radius: eps,
            });
        }
        if z.re > 0.0 && ((z - i).norm() - 1.0 / eps).abs() < 0.05 / eps {
            return Err(Error::ContourTooClose {
                min_dist: ((z - i).norm() - 1.0 / eps).abs(),
                radius: 1.0 / eps,
            });
        }
        if (z.re + 0.5 * e0).abs() < 0.05 * e0.min(1.0) && z.im.abs() < 2.0 * eps {
            return Err(Error::ContourTooClose {
                min_dist: (z.re + 0.5 * e0).abs(),
                radius: 0.5 * e0,
            });
        }
    }

    let weight = move |mu: Complex64| -> Complex64 {
        let mut w = mu.powi(4);
        for &(lam_j, nu_j) in singularities {
            let mu_j = (Complex64::new(lam_j, 0.0) - i).inv();
            w *= (mu - mu_j).powi(nu_j as i32);
        }
        w
    };
    let resolvent = |mu: Complex64| -> CMat {
        linalg::solve_mat(&(&r_mat - &id * mu), &id).expect("(R−μ)⁻¹ on the contour")
    };

    let tol = 1e-9;
    // Γ₁: μ = (λ − i(1+ε))⁻¹, λ: −e₀/2 → γ₁; dμ = −μ² dλ.
    let mut f1 = |lam: f64| -> CMat {
        let mu = (Complex64::new(lam, -(1.0 + eps)) - Complex64::new(0.0, 0.0)).inv();
        resolvent(mu) * (weight(mu) * (-mu * mu))
    };
    let g1 = mat_simpson(&mut f1, -0.5 * e0, gamma1, tol, 44);

    // Γ₂: μ = ε e^{iθ}, θ: θ₁ → θ₃ + 2π (the long way around 0, enclosing it).
    let mu1_end = Complex64::new(gamma1, -(1.0 + eps)).inv();
    let mu3_end = Complex64::new(gamma3, -(1.0 - eps)).inv();
    let theta1 = mu1_end.arg();
    let theta3 = mu3_end.arg() + 2.0 * std::f64::consts::PI;
    let mut f2 = |theta: f64| -> CMat {
        let mu = Complex64::new(0.0, theta).exp() * eps;
        resolvent(mu) * (weight(mu) * Complex64::new(0.0, 1.0) * mu)
    };
    let g2 = mat_simpson(&mut f2, theta1, theta3, tol, 20);

    // Γ₃: μ = (λ − i(1−ε))⁻¹, λ: γ₃ → −e₀/2 (reverse traversal).
    let mut f3 = |lam: f64| -> CMat {
        let mu = Complex64::new(lam, -(1.0 - eps)).inv();
        resolvent(mu) * (weight(mu) * (-mu * mu))
    };
    let g3 = mat_simpson(&mut f3, -0.5 * e0, gamma3, tol, 44) * Complex64::new(-1.0, 0.0);

    // Γ₄: μ = (−e₀/2 − i + ix)⁻¹, x: ε → −ε; dμ = −μ²·i dx.
    let mut f4 = |x: f64| -> CMat {
        let mu = Complex64::new(-0.5 * e0, x - 1.0).inv();
        resolvent(mu) * (weight(mu) * (-mu * mu) * Complex64::new(0.0, 1.0))
    };
    let g4 = mat_simpson(&mut f4, eps, -eps, tol, 16);

    // Orientation certificate: winding of the sampled contour around a point
    // of the essential arc must be +1 (counterclockwise).
    let mu_ref = (Complex64::new(1.0f64.min(0.5 * gamma1), -1.0)).inv();
    let mut pts: Vec<Complex64> = Vec::new();
    let m = 400;
    for k in 0..=m {
        let lam = -0.5 * e0 + (gamma1 + 0.5 * e0) * k as f64 / m as f64;
        pts.push(Complex64::new(lam, -(1.0 + eps)).inv());
    }
    for k in 0..=m {
        let th = theta1 + (theta3 - theta1) * k as f64 / m as f64;
        pts.push(Complex64::new(0.0, th).exp() * eps);
    }
    for k in 0..=m {
        let lam = gamma3 - (gamma3 + 0.5 * e0) * k as f64 / m as f64;
        pts.push(Complex64::new(lam, -(1.0 - eps)).inv());
    }
    for k in 0..=m {
        let x = eps - 2.0 * eps * k as f64 / m as f64;
        pts.push(Complex64::new(-0.5 * e0, x - 1.0).inv());
    }
    let mut winding = 0.0;
    for w in pts.windows(2) {
        let d = ((w[1] - mu_ref) / (w[0] - mu_ref)).arg();
        winding += d;
    }
    let winding = (winding / (2.0 * std::f64::consts::PI)).round() as i64;
    if winding.abs() != 1 {
        return Err(Error::QuadratureNonConvergence(format!(
            "contour winding {winding} around the essential arc; expected ±1"
        )));
    }
    let sign = Complex64::new(winding as f64, 0.0);

    let two_i_pi = Complex64::new(0.0, 2.0 * std::f64::consts::PI);
    let scale = sign / two_i_pi;
    let pieces = [g1, g2, g3, g4];
    let piece_norms = [
        linalg::op_norm(&(&pieces[0] * scale)),
        linalg::op_norm(&(&pieces[1] * scale)),
        linalg::op_norm(&(&pieces[2] * scale)),
        linalg::op_norm(&(&pieces[3] * scale)),
    ];
    let total = (&pieces[0] + &pieces[1] + &pieces[2] + &pieces[3]) * scale;
    Ok(GammaContour {
        total,
        piece_norms,
        eps,
    })
}

/// Functional-calculus oracle: the orthogonal projector 1_I(A) for a
/// Hermitian matrix.
pub fn hermitian_interval_projector(a: &CMat, interval: (f64, f64)) -> Result<CMat> {
    let (vals, vecs) = linalg::eig_hermitian(a)?;
    let n = a.nrows();
    let mut p = CMat::zeros(n, n);
    for (k, &lam) in vals.iter().enumerate() {
        if lam >= interval.0 && lam <= interval.1 {
            let v = vecs.column(k);
            for ii in 0..n {
                for jj in 0..n {
                    p[(ii, jj)] += v[ii] * v[jj].conj();
                }
            }
        }
    }
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{build_lattice_system, build_matrix_system, BoundaryCondition};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    /// Small Hermitian lattice with a constant shift so the spectrum sits
    /// well inside (0, ∞) with workable gaps.
    fn hermitian_lattice(n: usize) -> DissipativeSystem {
        build_lattice_system(n, 1.0, &vec![1.0; n], &vec![0.0; n], BoundaryCondition::Dirichlet)
            .unwrap()
    }

    /// Same geometry with a uniform weak absorber: every eigenvalue moves to
    /// λ_k − i w₀ exactly, which keeps the model singularity-free.
    fn dissipative_lattice(n: usize, w0: f64) -> DissipativeSystem {
        build_lattice_system(n, 1.0, &vec![1.0; n], &vec![w0; n], BoundaryCondition::Dirichlet)
            .unwrap()
    }

    /// Interval endpoints placed mid-gap around the eigenvalue window
    /// [lo_idx, hi_idx] (inclusive) of a real spectrum.
    fn midgap_interval(vals: &[f64], lo_idx: usize, hi_idx: usize) -> (f64, f64) {
        let a = if lo_idx == 0 {
            0.5 * vals[0]
        } else {
            0.5 * (vals[lo_idx - 1] + vals[lo_idx])
        };
        let b = if hi_idx + 1 == vals.len() {
            vals[hi_idx] + 1.0
        } else {
            0.5 * (vals[hi_idx] + vals[hi_idx + 1])
        };
        (a, b)
    }

    #[test]
    fn hermitian_matches_functional_calculus() {
        let sys = hermitian_lattice(16);
        let (vals, _) = linalg::eig_hermitian(&sys.h0).unwrap();
        let mut evs: Vec<f64> = vals.iter().map(|v| v + 1.0).collect();
        evs.sort_by(|x, y| x.partial_cmp(y).unwrap());
        let interval = midgap_interval(&evs, 3, 6);
        let e = spectral_projection(&sys, interval, &default_eps_schedule()).unwrap();
        let oracle = hermitian_interval_projector(&sys.h_v(), interval).unwrap();
        let defect = linalg::op_norm(&(&e.matrix - &oracle));
        assert!(defect <= 1e-6, "Stone vs 1_I(H) defect {defect:.3e}");
        assert!(e.idempotency_defect <= 5e-6);
        assert!(e.adjoint_defect <= 5e-6);
    }

    #[test]
    fn empty_interval_below_spectrum() {
        let sys = hermitian_lattice(16);
        // spectrum starts above 1; [0.01, 0.5] is empty
        let e = spectral_projection(&sys, (0.01, 0.5), &default_eps_schedule()).unwrap();
        assert!(linalg::op_norm(&e.matrix) <= 1e-6);
    }

    #[test]
    fn dissipative_lattice_projection_counts_modes() {
        let sys = dissipative_lattice(16, 0.004);
        let sd = spectra::eigendecompose(&sys).unwrap();
        let evs: Vec<f64> = sd.eigenvalues.iter().map(|z| z.re).collect();
        let interval = midgap_interval(&evs, 4, 7);
        let e = spectral_projection(&sys, interval, &default_eps_schedule()).unwrap();
        assert!(
            e.idempotency_defect <= 5e-6,
            "idempotency {:.3e}",
            e.idempotency_defect
        );
        let tr = e.matrix.trace();
        assert!((tr.re - 4.0).abs() < 1e-4, "trace {tr}");
        assert!(e.adjoint_defect <= 5e-6);
    }

    #[test]
    fn product_law_disjoint_nested_equal() {
        let sys = dissipative_lattice(16, 0.004);
        let sd = spectra::eigendecompose(&sys).unwrap();
        let evs: Vec<f64> = sd.eigenvalues.iter().map(|z| z.re).collect();
        let sched = default_eps_schedule();
        let i1 = midgap_interval(&evs, 2, 8);
        let i2 = midgap_interval(&evs, 4, 6); // nested in i1
        let i3 = midgap_interval(&evs, 10, 12); // disjoint from i2
        let e1 = spectral_projection(&sys, i1, &sched).unwrap();
        let e2 = spectral_projection(&sys, i2, &sched).unwrap();
        let e3 = spectral_projection(&sys, i3, &sched).unwrap();
        let nested = projection_product_defect(&sys, &e1, &e2, &sched).unwrap();
        assert!(nested <= 5e-6, "nested defect {nested:.3e}");
        let disjoint = projection_product_defect(&sys, &e2, &e3, &sched).unwrap();
        assert!(disjoint <= 5e-6, "disjoint defect {disjoint:.3e}");
        let same = projection_product_defect(&sys, &e2, &e2, &sched).unwrap();
        assert!((same - e2.idempotency_defect).abs() <= 5e-6);
    }

    #[test]
    fn regularized_empty_list_matches_plain() {
        let sys = dissipative_lattice(16, 0.004);
        let sd = spectra::eigendecompose(&sys).unwrap();
        let evs: Vec<f64> = sd.eigenvalues.iter().map(|z| z.re).collect();
        let interval = midgap_interval(&evs, 3, 6);
        let e = spectral_projection(&sys, interval, &default_eps_schedule()).unwrap();
        let et = regularized_projection(&sys, interval, &[]).unwrap();
        // Ẽ = (H−i)⁻⁴ E
        let n = sys.dim;
        let id = CMat::identity(n, n);
        let r = linalg::solve_mat(&(&sys.h - &id * c(0.0, 1.0)), &id).unwrap();
        let r4 = &r * &r * &r * &r;
        let defect = linalg::op_norm(&(&et.matrix - r4 * &e.matrix));
        assert!(defect <= 3e-5, "Ẽ vs R⁴E defect {defect:.3e}");
    }

    #[test]
    fn decomposition_residual_lattice() {
        let sys = dissipative_lattice(16, 0.004);
        let sd = spectra::eigendecompose(&sys).unwrap();
        let evs: Vec<f64> = sd.eigenvalues.iter().map(|z| z.re).collect();
        let sched = default_eps_schedule();
        // partition [0, beyond band] with interior endpoints mid-gap
        let cuts = vec![
            0.0,
            0.5 * (evs[4] + evs[5]),
            0.5 * (evs[9] + evs[10]),
            evs[15] + 1.0,
        ];
        let mut projections = Vec::new();
        for w in cuts.windows(2) {
            projections.push(spectral_projection(&sys, (w[0], w[1]), &sched).unwrap());
        }
        // uniform absorber: every mode is a continuum surrogate, Π_pp = 0
        let pi_pp = CMat::zeros(16, 16);
        match decomposition_residual(&sys, &pi_pp, &projections, 1e-5).unwrap() {
            Residual::Value(v) => assert!(v <= 1e-3, "residual {v:.3e}"),
            other => panic!("expected a plain residual, got {other:?}"),
        }
    }

    #[test]
    fn decomposition_rejects_embedded_real_eigenvalue() {
        // diag(1, 2−i): real eigenvalue 1 in [0,∞) with C ≠ 0
        let h0 = CMat::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(2.0, 0.0)]);
        let cc = CMat::from_row_slice(2, 2, &[c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)]);
        let sys = build_matrix_system(&h0, &CMat::zeros(2, 2), &cc).unwrap();
        let err = decomposition_residual(&sys, &CMat::zeros(2, 2), &[], 0.0);
        assert!(matches!(err, Err(Error::Precondition(_))));
    }

    #[test]
    fn gamma_contour_cauchy_oracle() {
        // C = 0, spectrum strictly positive: (1/2iπ)∮ μ⁴ (R−μ)⁻¹ dμ = −R⁴
        let sys = hermitian_lattice(16);
        let g = contour_gamma_integral(&sys, 0.05, &[]).unwrap();
        let n = sys.dim;
        let id = CMat::identity(n, n);
        let r = linalg::solve_mat(&(&sys.h - &id * c(0.0, 1.0)), &id).unwrap();
        let r4 = &r * &r * &r * &r;
        let defect = linalg::op_norm(&(&g.total + &r4));
        assert!(defect <= 1e-4, "Cauchy-formula defect {defect:.3e}");
    }

    #[test]
    fn gamma_pieces_vanish_linearly() {
        let sys = hermitian_lattice(16);
        let g_big = contour_gamma_integral(&sys, 0.1, &[]).unwrap();
        let g_small = contour_gamma_integral(&sys, 0.01, &[]).unwrap();
        for idx in [1usize, 3] {
            let (big, small) = (g_big.piece_norms[idx], g_small.piece_norms[idx]);
            assert!(
                small <= big / 8.0 + 1e-14,
                "piece {idx}: {big:.3e} -> {small:.3e} not at least linear in ε"
            );
        }
    }

    #[test]
    fn gamma_matches_weak_line_integral() {
        // eq:cauchy-3: (1/2iπ)∮ = −Ẽ_H([0,Λ]) for singularity-free models
        for sys in [hermitian_lattice(16), dissipative_lattice(16, 0.004)] {
            let g = contour_gamma_integral(&sys, 0.0125, &[]).unwrap();
            let sd = spectra::eigendecompose(&sys).unwrap();
            let top = sd.eigenvalues.iter().map(|z| z.re).fold(0.0, f64::max);
            let et = regularized_projection(&sys, (0.0, 4.0 * top), &[]).unwrap();
            let defect = linalg::op_norm(&(&g.total + &et.matrix));
            assert!(defect <= 1e-4, "contour vs line integral defect {defect:.3e}");
        }
    }

    #[test]
    fn interval_validation() {
        let sys = hermitian_lattice(16);
        assert!(spectral_projection(&sys, (-0.5, 1.0), &default_eps_schedule()).is_err());
        assert!(spectral_projection(&sys, (2.0, 1.0), &default_eps_schedule()).is_err());
    }
}
