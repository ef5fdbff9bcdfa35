//! Contraction-semigroup propagation e^{−itH} and the dynamical functionals:
//! absorption probability, Kato smoothing integral, M(H) constant, S(H)
//! membership, backward bounds, and the decaying-subspace identification.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{self, CMat, CVec};
use crate::models::DissipativeSystem;
use crate::spectra::SubspaceDecomposition;

/// How states are pushed through time, and how far.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PropagationMethod {
    EigDiagonalization,
    ScaledSquaring,
}

#[derive(Debug, Clone, Copy)]
pub struct PropagationPlan {
    pub horizon: f64,
    pub dt: f64,
    pub accuracy_target: f64,
}

impl PropagationPlan {
    pub fn new(horizon: f64, dt: f64) -> Result<Self> {
        if !(dt > 0.0 && dt <= horizon) {
            return Err(Error::InvalidModel(format!(
                "plan needs 0 < dt <= horizon, got dt={dt}, horizon={horizon}"
            )));
        }
        Ok(PropagationPlan {
            horizon,
            dt,
            accuracy_target: 1e-12,
        })
    }
}

/// Absorption-probability estimate with its tail fit.
#[derive(Debug, Clone)]
pub struct DecayEstimate {
    pub p_abs: f64,
    /// (rate γ, amplitude b) of the fitted tail ‖u_t‖ ≈ a + b e^{−γt}.
    pub tail_fit: (f64, f64),
    pub horizon_used: f64,
    pub converged: bool,
}

/// Cached propagator for one system. Diagonalization is used when the
/// eigenvector basis is well conditioned, otherwise scaling-and-squaring
/// on −itH; the accuracy contract is the same either way.
pub struct Propagator {
    h: CMat,
    pub c: CMat,
    pub cc_norm: f64,
    pub method: PropagationMethod,
    diag: Option<(Vec<Complex64>, CMat, CMat)>,
}

impl Propagator {
    pub fn new(system: &DissipativeSystem) -> Self {
        Self::build(&system.h, &system.c)
    }

    /// Propagator for a bare generator (e.g. H₀ or H_V) without an absorber.
    pub fn from_matrix(h: &CMat) -> Self {
        Self::build(h, &CMat::zeros(h.nrows(), h.ncols()))
    }

    fn build(h: &CMat, c: &CMat) -> Self {
        let cc_norm = linalg::op_norm(&(c.adjoint() * c));
        let diag = match linalg::eig(h) {
            Ok((vals, vecs)) => match linalg::inverse(&vecs) {
                Ok(vinv) => {
                    let cond = linalg::op_norm(&vecs) * linalg::op_norm(&vinv);
                    if cond < 1e6 {
                        Some((vals, vecs, vinv))
                    } else {
                        None
                    }
                }
                Err(_) => None,
            },
            Err(_) => None,
        };
        Propagator {
            h: h.clone(),
            c: c.clone(),
            cc_norm,
            method: if diag.is_some() {
                PropagationMethod::EigDiagonalization
            } else {
                PropagationMethod::ScaledSquaring
            },
            diag,
        }
    }

    /// e^{−itH} u.
    pub fn apply(&self, u: &CVec, t: f64) -> CVec {
        if t == 0.0 {
            return u.clone();
        }
        match &self.diag {
            Some((vals, vecs, vinv)) => {
                let mut y = vinv * u;
                for (i, &lam) in vals.iter().enumerate() {
                    y[i] *= (Complex64::new(0.0, -t) * lam).exp();
                }
                vecs * y
            }
            None => &self.matrix(t) * u,
        }
    }

    /// The full matrix e^{−itH}.
    pub fn matrix(&self, t: f64) -> CMat {
        match &self.diag {
            Some((vals, vecs, vinv)) => {
                let n = self.h.nrows();
                let mut d = CMat::zeros(n, n);
                for (i, &lam) in vals.iter().enumerate() {
                    d[(i, i)] = (Complex64::new(0.0, -t) * lam).exp();
                }
                vecs * d * vinv
            }
            None => linalg::expm(&(&self.h * Complex64::new(0.0, -t))),
        }
    }

    /// ‖C e^{−itH} u‖².
    pub fn absorber_integrand(&self, u: &CVec, t: f64) -> f64 {
        (&self.c * self.apply(u, t)).norm_squared()
    }
}

/// e^{−itH} u, checked against the contraction / backward-growth bounds.
pub fn propagate(system: &DissipativeSystem, u: &CVec, t: f64) -> Result<CVec> {
    if !t.is_finite() {
        return Err(Error::InvalidModel(format!("non-finite time {t}")));
    }
    let prop = Propagator::new(system);
    let out = prop.apply(u, t);
    let bound = if t >= 0.0 {
        (1.0 + 1e-10) * u.norm()
    } else {
        (prop.cc_norm * t.abs()).exp() * (1.0 + 1e-8) * u.norm()
    };
    if out.norm() > bound {
        return Err(Error::AccuracyUnreachable(format!(
            "propagated norm {} exceeds the semigroup bound {} at t = {t}",
            out.norm(),
            bound
        )));
    }
    Ok(out)
}

/// Default horizon: T = 50/γ_min with γ_min the smallest decay rate among
/// decaying modes, floored at 200 time units.
pub fn default_horizon(system: &DissipativeSystem) -> f64 {
    let gamma_min = linalg::eig(&system.h)
        .map(|(vals, _)| {
            vals.iter()
                .map(|z| -z.im)
                .filter(|&g| g > 1e-12)
                .fold(f64::INFINITY, f64::min)
        })
        .unwrap_or(f64::INFINITY);
    if gamma_min.is_finite() {
        (50.0 / gamma_min).max(200.0)
    } else {
        200.0
    }
}

/// Least-squares fit of y ≈ a + b e^{−γ t} on (t, y) samples.
/// Returns (a, b, γ); γ = 0 signals "no decaying component resolved".
fn fit_exponential_tail(ts: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = ts.len();
    if n < 4 {
        return (*ys.last().unwrap_or(&0.0), 0.0, 0.0);
    }
    // Successive differences d_k = y_k − y_{k+1} ≈ b(1−e^{−γΔ})e^{−γ t_k}:
    // a cancels, so log d_k is linear in t_k.
    let mut ts_fit = Vec::new();
    let mut logd = Vec::new();
    for k in 0..n - 1 {
        let d = ys[k] - ys[k + 1];
        if d > 1e-15 {
            ts_fit.push(ts[k]);
            logd.push(d.ln());
        }
    }
    if ts_fit.len() < 3 {
        return (*ys.last().unwrap(), 0.0, 0.0);
    }
    let m = ts_fit.len() as f64;
    let tm = ts_fit.iter().sum::<f64>() / m;
    let lm = logd.iter().sum::<f64>() / m;
    let mut num = 0.0;
    let mut den = 0.0;
    for (t, l) in ts_fit.iter().zip(&logd) {
        num += (t - tm) * (l - lm);
        den += (t - tm) * (t - tm);
    }
    if den == 0.0 {
        return (*ys.last().unwrap(), 0.0, 0.0);
    }
    let gamma = -(num / den);
    if gamma <= 0.0 || !gamma.is_finite() {
        return (*ys.last().unwrap(), 0.0, 0.0);
    }
    // Linear LSQ for (a, b) with the basis {1, e^{−γt}}.
    let mut s11 = 0.0;
    let mut s12 = 0.0;
    let mut s22 = 0.0;
    let mut r1 = 0.0;
    let mut r2 = 0.0;
    for (t, y) in ts.iter().zip(ys) {
        let e = (-gamma * t).exp();
        s11 += 1.0;
        s12 += e;
        s22 += e * e;
        r1 += y;
        r2 += y * e;
    }
    let det = s11 * s22 - s12 * s12;
    if det.abs() < 1e-30 {
        return (*ys.last().unwrap(), 0.0, 0.0);
    }
    let a = (r1 * s22 - r2 * s12) / det;
    let b = (s11 * r2 - s12 * r1) / det;
    (a, b, gamma)
}

fn plateau_estimate(prop: &Propagator, u: &CVec, horizon: f64, dt: f64) -> (f64, f64, f64) {
    let n_steps = ((horizon / dt).ceil() as usize).max(12);
    let t0 = 2.0 * horizon / 3.0;
    let mut ts = Vec::new();
    let mut ys = Vec::new();
    for k in 0..=n_steps {
        let t = horizon * k as f64 / n_steps as f64;
        if t >= t0 {
            ts.push(t);
            ys.push(prop.apply(u, t).norm());
        }
    }
    fit_exponential_tail(&ts, &ys)
}

/// p_abs = 1 − lim ‖e^{−itH}u‖, estimated from the tail fit a + b e^{−γt}
/// on the final third of the horizon.
pub fn absorption_probability(
    system: &DissipativeSystem,
    u: &CVec,
    plan: &PropagationPlan,
) -> Result<DecayEstimate> {
    if (u.norm() - 1.0).abs() > 1e-8 {
        return Err(Error::Precondition(format!(
            "absorption_probability needs a unit state, got ‖u‖ = {}",
            u.norm()
        )));
    }
    let prop = Propagator::new(system);
    let (a, b, gamma) = plateau_estimate(&prop, u, plan.horizon, plan.dt);
    let (a_half, _, _) = plateau_estimate(&prop, u, plan.horizon / 2.0, plan.dt);
    let converged = (a - a_half).abs() <= 1e-6;
    let p_abs = (1.0 - a).clamp(0.0, 1.0);
    Ok(DecayEstimate {
        p_abs,
        tail_fit: (gamma, b),
        horizon_used: plan.horizon,
        converged,
    })
}

/// Adaptive Simpson quadrature.
pub fn simpson_adaptive(f: &mut dyn FnMut(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(fa: f64, fm: f64, fb: f64, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
    fn rec(
        f: &mut dyn FnMut(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: usize,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = simpson(fa, flm, fm, a, m);
        let right = simpson(fm, frm, fb, m, b);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
                + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
        }
    }
    let m = 0.5 * (a + b);
    let fa = f(a);
    let fm = f(m);
    let fb = f(b);
    let whole = simpson(fa, fm, fb, a, b);
    rec(f, a, b, fa, fm, fb, whole, tol, 30)
}

/// ∫₀^T ‖C e^{−itH}u‖² dt plus a certified exponential tail bound; the paper
/// bound caps the total at ½‖u‖².
pub fn smoothing_integral(system: &DissipativeSystem, u: &CVec, horizon: f64) -> Result<f64> {
    if (u.norm() - 1.0).abs() > 1e-8 {
        return Err(Error::Precondition(format!(
            "smoothing_integral needs a unit state, got ‖u‖ = {}",
            u.norm()
        )));
    }
    let prop = Propagator::new(system);
    if prop.cc_norm == 0.0 {
        return Ok(0.0);
    }
    let mut f = |t: f64| prop.absorber_integrand(u, t);
    let bulk = simpson_adaptive(&mut f, 0.0, horizon, 1e-11);

    // Tail: the integrand beyond T is bounded by g(T) e^{−γ(t−T)} when the
    // tail decays exponentially (fit over the last decade).
    let mut ts = Vec::new();
    let mut ys = Vec::new();
    for k in 0..=20 {
        let t = horizon * (0.9 + 0.005 * k as f64);
        ts.push(t);
        ys.push(prop.absorber_integrand(u, t));
    }
    let g_end = *ys.last().unwrap();
    let tail = if g_end < 1e-14 {
        0.0
    } else {
        let (_, _, gamma) = fit_exponential_tail(&ts, &ys);
        if gamma > 0.0 {
            g_end / gamma
        } else {
            return Err(Error::AccuracyUnreachable(format!(
                "integrand tail not exponentially decaying within horizon {horizon}: \
                 value {bulk:.6e} is a lower bound, last integrand {g_end:.3e}"
            )));
        }
    };
    let total = bulk + tail;
    if total > 0.5 + 1e-6 {
        return Err(Error::AccuracyUnreachable(format!(
            "smoothing integral {total} exceeds the ½‖u‖² bound beyond tolerance"
        )));
    }
    Ok(total)
}

/// The M(H) constant: largest eigenvalue of K = ∫₀^T Φ(t)Φ(t)* dt.
#[derive(Debug, Clone)]
pub struct MEstimate {
    pub c_u: f64,
    pub horizon: f64,
    /// True when c_u still grows ∝ T, i.e. u is not in M(H).
    pub linear_growth: bool,
}

pub fn m_constant(system: &DissipativeSystem, u: &CVec, horizon: f64) -> Result<MEstimate> {
    if (u.norm() - 1.0).abs() > 1e-8 {
        return Err(Error::Precondition(format!(
            "m_constant needs a unit state, got ‖u‖ = {}",
            u.norm()
        )));
    }
    let prop = Propagator::new(system);
    let gram = |t_max: f64| -> f64 {
        // Simpson on a fixed fine grid; K is d×d Hermitian PSD.
        let n = system.dim;
        let steps = 2000;
        let h = t_max / steps as f64;
        let mut k = CMat::zeros(n, n);
        for j in 0..=steps {
            let t = j as f64 * h;
            let phi = prop.apply(u, t);
            let w = if j == 0 || j == steps {
                1.0
            } else if j % 2 == 1 {
                4.0
            } else {
                2.0
            };
            let outer = CMat::from_fn(n, n, |r, s| phi[r] * phi[s].conj());
            k += outer * Complex64::new(w * h / 3.0, 0.0);
        }
        let (vals, _) = linalg::eig_hermitian(&k).unwrap_or((vec![0.0], CMat::zeros(0, 0)));
        vals.last().copied().unwrap_or(0.0)
    };
    let c_full = gram(horizon);
    let c_half = gram(horizon / 2.0);
    // Linear growth ⇒ doubling T doubles λ_max; saturation ⇒ ratio → 1.
    let linear_growth = c_half > 0.0 && c_full / c_half > 1.5;
    Ok(MEstimate {
        c_u: c_full,
        horizon,
        linear_growth,
    })
}

/// S(H) membership: plateau test on ∫₀^T ‖C e^{itH}u‖² dt.
pub fn s_membership(
    system: &DissipativeSystem,
    u: &CVec,
    horizon: f64,
    threshold: f64,
) -> Result<(bool, f64)> {
    if (u.norm() - 1.0).abs() > 1e-8 {
        return Err(Error::Precondition(format!(
            "s_membership needs a unit state, got ‖u‖ = {}",
            u.norm()
        )));
    }
    let prop = Propagator::new(system);
    if prop.cc_norm == 0.0 {
        return Ok((true, 0.0));
    }
    // e^{itH} = e^{−i(−t)H}.
    let mut f = |t: f64| prop.absorber_integrand(u, -t);
    let full = simpson_adaptive(&mut f, 0.0, horizon, 1e-11);
    let early = simpson_adaptive(&mut f, 0.0, horizon / 10.0, 1e-11);
    let rel_increase = if full > 1e-14 {
        (full - early) / full
    } else {
        0.0
    };
    Ok((rel_increase < threshold, full))
}

/// Bounds of Theorem-2 type: extremes of ‖e^{−itH}Qu‖ over t ∈ [−T, T],
/// with Q the orthogonal projection onto H_p(H*)^⊥.
#[derive(Debug, Clone)]
pub struct BackwardBounds {
    pub m1_hat: f64,
    pub m2_hat: f64,
    /// ‖u − Qu‖: how much the precondition projection removed.
    pub projection_change: f64,
}

pub fn backward_bounds(
    system: &DissipativeSystem,
    decomposition: &SubspaceDecomposition,
    u: &CVec,
    horizon: f64,
) -> Result<BackwardBounds> {
    let z = linalg::column_span(&decomposition.basis_hp_star, 1e-10);
    let mut uq = u.clone();
    if z.ncols() > 0 {
        uq -= &z * (z.adjoint() * u);
    }
    let projection_change = (u - &uq).norm();
    let norm_q = uq.norm();
    if norm_q < 1e-12 {
        return Err(Error::Precondition(
            "state lies entirely in H_p(H*); backward bounds are vacuous".into(),
        ));
    }
    let uq = uq / Complex64::new(norm_q, 0.0);
    let prop = Propagator::new(system);
    let steps = 200;
    let mut m1 = f64::INFINITY;
    let mut m2: f64 = 0.0;
    for k in 0..=steps {
        let t = -horizon + 2.0 * horizon * k as f64 / steps as f64;
        let nrm = prop.apply(&uq, t).norm();
        m1 = m1.min(nrm);
        m2 = m2.max(nrm);
    }
    Ok(BackwardBounds {
        m1_hat: m1,
        m2_hat: m2,
        projection_change,
    })
}

/// Outcome of the dynamical identification of H_d.
#[derive(Debug, Clone, PartialEq)]
pub enum DissipativeVerdict {
    Match,
    Mismatch { principal_angle: f64 },
}

/// Identify H_d = {u : ‖e^{−itH}u‖ → 0} from the SVD of e^{−iTH} and compare
/// with span(basis_Hp) (Theorem-1 statement H_d = H_p).
pub fn dissipative_space(
    system: &DissipativeSystem,
    decomposition: &SubspaceDecomposition,
    horizon: f64,
    tol: f64,
) -> Result<(CMat, DissipativeVerdict, usize)> {
    let prop = Propagator::new(system);
    let u_t = prop.matrix(horizon);
    let svd = u_t.svd(false, true);
    let vt = svd.v_t.expect("requested V^T");
    let n = system.dim;
    let mut cols = Vec::new();
    let mut ambiguous = 0;
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s <= tol {
            cols.push(vt.row(i).adjoint());
        } else if s <= 10.0 * tol {
            ambiguous += 1;
        }
    }
    let mut basis = CMat::zeros(n, cols.len());
    for (j, col) in cols.iter().enumerate() {
        basis.set_column(j, col);
    }
    let hp = linalg::column_span(&decomposition.basis_hp, 1e-10);
    let verdict = if basis.ncols() != hp.ncols() {
        DissipativeVerdict::Mismatch {
            principal_angle: std::f64::consts::FRAC_PI_2,
        }
    } else {
        let angle = linalg::max_principal_angle(&basis, &hp);
        if angle <= tol.max(1e-6) {
            DissipativeVerdict::Match
        } else {
            DissipativeVerdict::Mismatch {
                principal_angle: angle,
            }
        }
    };
    Ok((basis, verdict, ambiguous))
}
