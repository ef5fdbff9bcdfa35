//! Non-self-adjoint eigenanalysis: eigenvalues with certificates, Riesz
//! projections by contour quadrature, Jordan structure, and the subspace
//! decomposition H_b ⊕ H_p (and the analogue for H*).

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{self, CMat};
use crate::models::DissipativeSystem;

/// Eigenvalues with residual and conditioning certificates, sorted by
/// (Re λ, Im λ).
#[derive(Debug, Clone)]
pub struct SpectralData {
    pub eigenvalues: Vec<Complex64>,
    /// Right eigenvectors as unit-norm columns, same order as `eigenvalues`.
    pub right_vectors: CMat,
    /// 1/|y* x| per eigenpair (left/right eigenvector overlap).
    pub condition_numbers: Vec<f64>,
    /// ‖Hv − λv‖ / ‖H‖ per eigenpair.
    pub residuals: Vec<f64>,
    pub h_norm: f64,
}

impl SpectralData {
    pub fn spectral_diameter(&self) -> f64 {
        let mut d: f64 = 0.0;
        for (i, a) in self.eigenvalues.iter().enumerate() {
            for b in &self.eigenvalues[i + 1..] {
                d = d.max((a - b).norm());
            }
        }
        d
    }

    /// Distance from λ to the nearest eigenvalue outside λ's own cluster
    /// (cluster = eigenvalues within `cluster_gap` of λ).
    pub fn nearest_foreign_distance(&self, lambda: Complex64, cluster_gap: f64) -> Option<f64> {
        self.eigenvalues
            .iter()
            .map(|&mu| (mu - lambda).norm())
            .filter(|&d| d > cluster_gap)
            .fold(None, |acc, d| Some(acc.map_or(d, |a: f64| a.min(d))))
    }
}

/// A (generally oblique) projector with its quality certificates.
#[derive(Debug, Clone)]
pub struct Projector {
    pub matrix: CMat,
    pub label: String,
    pub idempotency_defect: f64,
}

impl Projector {
    pub fn new(matrix: CMat, label: impl Into<String>) -> Self {
        let idempotency_defect = linalg::op_norm(&(&matrix * &matrix - &matrix));
        Projector {
            matrix,
            label: label.into(),
            idempotency_defect,
        }
    }

    pub fn commutation_defect(&self, h: &CMat) -> f64 {
        linalg::op_norm(&(&self.matrix * h - h * &self.matrix))
    }

    pub fn trace(&self) -> Complex64 {
        self.matrix.trace()
    }
}

/// The decomposition into bound (H_b), decaying-point (H_p) subspaces and the
/// point-spectral projector Π_pp = sum of Riesz projections.
#[derive(Debug, Clone)]
pub struct SubspaceDecomposition {
    /// Orthonormal basis of H_b (eigenvectors with real eigenvalue).
    pub basis_hb: CMat,
    /// Basis of H_p(H): generalized eigenvectors with Im λ < −tol_real.
    pub basis_hp: CMat,
    /// Basis of H_p(H*).
    pub basis_hp_star: CMat,
    pub pi_pp: Projector,
    pub pi_pp_perp: Projector,
    /// Real eigenvalues (those classified into H_b).
    pub real_eigenvalues: Vec<f64>,
    pub notes: Vec<String>,
}

/// General eigendecomposition with certificates.
pub fn eigendecompose(system: &DissipativeSystem) -> Result<SpectralData> {
    let h = &system.h;
    let n = system.dim;
    if n > 4096 {
        return Err(Error::InvalidModel(format!(
            "dimension {n} above the configured eigendecomposition cap 4096"
        )));
    }
    let h_norm = linalg::op_norm(h);
    let (vals, vecs) = linalg::eig(h)?;
    let (adj_vals, adj_vecs) = linalg::eig(&system.h_adj)?;

    // Sort primal pairs by (Re, Im).
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        (vals[a].re, vals[a].im)
            .partial_cmp(&(vals[b].re, vals[b].im))
            .unwrap()
    });
    let eigenvalues: Vec<Complex64> = order.iter().map(|&i| vals[i]).collect();
    let mut right_vectors = CMat::zeros(n, n);
    for (j, &i) in order.iter().enumerate() {
        right_vectors.set_column(j, &vecs.column(i));
    }

    // Residuals and eigenvalue condition numbers. Left eigenvectors are the
    // eigenvectors of H* matched by conjugate eigenvalue (greedy nearest).
    let mut residuals = Vec::with_capacity(n);
    let mut condition_numbers = Vec::with_capacity(n);
    let mut used = vec![false; n];
    for (j, &lam) in eigenvalues.iter().enumerate() {
        let v = right_vectors.column(j).into_owned();
        let r = (h * &v - &v * lam).norm() / h_norm.max(1e-300);
        residuals.push(r);

        let target = lam.conj();
        let mut best = usize::MAX;
        let mut best_d = f64::INFINITY;
        for (k, &mu) in adj_vals.iter().enumerate() {
            let d = (mu - target).norm();
            if !used[k] && d < best_d {
                best_d = d;
                best = k;
            }
        }
        if best == usize::MAX {
            condition_numbers.push(f64::INFINITY);
            continue;
        }
        used[best] = true;
        let y = adj_vecs.column(best).into_owned();
        let overlap = y.dotc(&v).norm();
        condition_numbers.push(if overlap > 0.0 { 1.0 / overlap } else { f64::INFINITY });
    }

    // Spectrum must lie in one closed half-plane: the lower one for a
    // dissipative H, the upper one for its adjoint (which this function also
    // serves, via `adjoint_system`). Eigenvalues on both sides mean neither.
    let axis_tol = 1e-8 * (1.0 + h_norm);
    let above = eigenvalues.iter().any(|z| z.im > axis_tol);
    let below = eigenvalues.iter().any(|z| z.im < -axis_tol);
    if above && below {
        return Err(Error::Eigensolver(
            "spectrum straddles the real axis beyond tolerance; \
             neither a dissipative spectrum nor its adjoint"
                .into(),
        ));
    }
    if let Some((j, _)) = residuals.iter().enumerate().find(|(_, &r)| r > 1e-8) {
        return Err(Error::Eigensolver(format!(
            "eigenpair {} (λ = {}) has residual {:.3e} > 1e-8",
            j, eigenvalues[j], residuals[j]
        )));
    }

    Ok(SpectralData {
        eigenvalues,
        right_vectors,
        condition_numbers,
        residuals,
        h_norm,
    })
}

/// Riesz projection Π_λ = (1/2πi)∮ (z − H)⁻¹ dz over the circle of the given
/// radius, by trapezoid quadrature with node doubling from 32 points.
pub fn riesz_projection(
    system: &DissipativeSystem,
    lambda: Complex64,
    radius: f64,
) -> Result<Projector> {
    let sd = eigendecompose(system)?;
    riesz_projection_with(system, &sd, lambda, radius)
}

/// Variant reusing an existing eigendecomposition (for repeated calls).
pub fn riesz_projection_with(
    system: &DissipativeSystem,
    sd: &SpectralData,
    lambda: Complex64,
    radius: f64,
) -> Result<Projector> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::InvalidModel(format!("invalid contour radius {radius}")));
    }
    let min_dist = sd
        .eigenvalues
        .iter()
        .map(|&mu| ((mu - lambda).norm() - radius).abs())
        .fold(f64::INFINITY, f64::min);
    if min_dist < 2.0 * radius * 1e-3 {
        return Err(Error::ContourTooClose { min_dist, radius });
    }

    let n = system.dim;
    let quad = |nodes: usize| -> Result<CMat> {
        let mut p = CMat::zeros(n, n);
        let id = CMat::identity(n, n);
        for k in 0..nodes {
            let theta = 2.0 * std::f64::consts::PI * k as f64 / nodes as f64;
            let w = Complex64::new(theta.cos(), theta.sin());
            let z = lambda + w * radius;
            let rz = linalg::solve_mat(&(&id * z - &system.h), &id)?;
            p += rz * (w * radius);
        }
        Ok(p / Complex64::new(nodes as f64, 0.0))
    };

    let mut nodes = 32;
    let mut p = quad(nodes)?;
    loop {
        nodes *= 2;
        if nodes > 4096 {
            return Err(Error::QuadratureNonConvergence(format!(
                "Riesz contour at λ = {lambda}, radius {radius}: no convergence by {nodes} nodes"
            )));
        }
        let p2 = quad(nodes)?;
        let delta = linalg::op_norm(&(&p2 - &p));
        p = p2;
        if delta <= 1e-10 {
            break;
        }
    }

    let tr = p.trace();
    if (tr.re - tr.re.round()).abs() > 1e-6 || tr.im.abs() > 1e-6 {
        return Err(Error::QuadratureNonConvergence(format!(
            "Riesz projection trace {tr} not an integer to 1e-6"
        )));
    }
    Ok(Projector::new(p, format!("Pi({lambda})")))
}

fn default_riesz_radius(sd: &SpectralData, lambda: Complex64, cluster_gap: f64) -> f64 {
    let diam = sd.spectral_diameter();
    // diam below the cluster gap means the whole spectrum is one cluster;
    // any moderate radius separates it from nothing.
    let cap = if diam > cluster_gap { 0.25 * diam } else { 0.5 };
    match sd.nearest_foreign_distance(lambda, cluster_gap) {
        Some(d) => (0.5 * d).min(cap),
        None => cap,
    }
}

/// Smallest k with (H−λ)^k Π_λ = 0 (rank judged at 1e−7·‖H‖).
pub fn jordan_order(system: &DissipativeSystem, lambda: Complex64) -> Result<usize> {
    let sd = eigendecompose(system)?;
    let cluster_gap = 1e-6 * (1.0 + sd.h_norm);
    if !sd
        .eigenvalues
        .iter()
        .any(|&mu| (mu - lambda).norm() <= cluster_gap)
    {
        return Err(Error::Precondition(format!(
            "{lambda} is not an accepted eigenvalue"
        )));
    }
    let radius = default_riesz_radius(&sd, lambda, cluster_gap);
    let proj = riesz_projection_with(system, &sd, lambda, radius)?;
    let mult = proj.trace().re.round() as usize;

    let thr = 1e-7 * sd.h_norm.max(1e-300);
    let shifted = &system.h - CMat::identity(system.dim, system.dim) * lambda;
    let mut power = proj.matrix.clone();
    for k in 1..=mult.max(1) {
        power = &shifted * power;
        let sv = linalg::singular_values(&power);
        let rank = sv.iter().filter(|&&s| s >= thr).count();
        // Rank decisions need a clear plateau: a 10x gap across the threshold.
        let above = if rank > 0 { Some(sv[rank - 1]) } else { None };
        let below = sv.get(rank).copied();
        if let (Some(a), Some(b)) = (above, below) {
            if b > 0.0 && a / b < 10.0 {
                return Err(Error::IndeterminateRank(format!(
                    "singular values straddle the rank threshold without a 10x gap \
                     at k={k}: {a:.3e} vs {b:.3e}"
                )));
            }
        }
        if rank == 0 {
            if let Some(b) = sv.first() {
                if *b > thr / 10.0 {
                    return Err(Error::IndeterminateRank(format!(
                        "largest singular value {b:.3e} within 10x of threshold {thr:.3e} at k={k}"
                    )));
                }
            }
            return Ok(k);
        }
    }
    Err(Error::IndeterminateRank(format!(
        "rank of (H-λ)^k Π_λ did not vanish by k = {mult} (algebraic multiplicity)"
    )))
}

/// Cluster eigenvalue indices by single linkage at gap `cluster_gap`.
fn cluster_indices(eigs: &[Complex64], cluster_gap: f64) -> Vec<Vec<usize>> {
    let n = eigs.len();
    let mut assigned = vec![false; n];
    let mut clusters = Vec::new();
    for i in 0..n {
        if assigned[i] {
            continue;
        }
        let mut stack = vec![i];
        let mut cl = Vec::new();
        assigned[i] = true;
        while let Some(j) = stack.pop() {
            cl.push(j);
            for k in 0..n {
                if !assigned[k] && (eigs[j] - eigs[k]).norm() <= cluster_gap {
                    assigned[k] = true;
                    stack.push(k);
                }
            }
        }
        cl.sort_unstable();
        clusters.push(cl);
    }
    clusters
}

/// Basis for the span of generalized eigenvectors attached to the given
/// eigenvalue clusters. Simple well-conditioned eigenvalues contribute their
/// eigenvector directly; defective or crowded clusters go through Ran(Π_λ)
/// from a contour, which is robust where the raw eigenvectors are not.
fn generalized_basis(
    system: &DissipativeSystem,
    sd: &SpectralData,
    clusters: &[Vec<usize>],
    cluster_gap: f64,
) -> Result<CMat> {
    let n = system.dim;
    let mut cols: Vec<CMat> = Vec::new();
    for cl in clusters {
        let simple = cl.len() == 1 && sd.condition_numbers[cl[0]] < 1e6;
        if simple {
            cols.push(sd.right_vectors.column(cl[0]).into_owned().reshape_generic(
                nalgebra::Dyn(n),
                nalgebra::Dyn(1),
            ));
        } else {
            let center = cl.iter().map(|&i| sd.eigenvalues[i]).sum::<Complex64>()
                / Complex64::new(cl.len() as f64, 0.0);
            let radius = default_riesz_radius(sd, center, cluster_gap * (cl.len() as f64 + 1.0));
            let proj = riesz_projection_with(system, sd, center, radius)?;
            cols.push(linalg::column_span(&proj.matrix, 1e-8));
        }
    }
    let total: usize = cols.iter().map(|m| m.ncols()).sum();
    let mut out = CMat::zeros(n, total);
    let mut at = 0;
    for m in cols {
        out.columns_mut(at, m.ncols()).copy_from(&m);
        at += m.ncols();
    }
    Ok(out)
}

/// Classify the spectrum into H_b and H_p at tolerance `tol_real` and build
/// Π_pp as the oblique projector with range H_b ⊕ H_p(H) and kernel
/// (H_b ⊕ H_p(H*))^⊥.
pub fn classify_subspaces(
    system: &DissipativeSystem,
    tol_real: f64,
) -> Result<SubspaceDecomposition> {
    let sd = eigendecompose(system)?;
    let sd_adj = eigendecompose(&adjoint_system(system))?;
    let mut notes = Vec::new();

    for &lam in &sd.eigenvalues {
        let a = lam.im.abs();
        if a > tol_real && a < 10.0 * tol_real {
            return Err(Error::AmbiguousClassification(format!(
                "eigenvalue {lam} has |Im| in the ambiguity band ({:.3e}, {:.3e})",
                tol_real,
                10.0 * tol_real
            )));
        }
    }

    let cluster_gap = 1e-6 * (1.0 + sd.h_norm);
    // Decaying modes sit below the axis for a dissipative H and above it for
    // an adjoint (accretive) one; pick the side the spectrum actually uses.
    let decaying = |z: Complex64, accretive: bool| {
        if accretive {
            z.im > tol_real
        } else {
            z.im < -tol_real
        }
    };
    let acc = sd.eigenvalues.iter().any(|z| z.im > tol_real);
    let real_idx: Vec<usize> = (0..system.dim)
        .filter(|&i| sd.eigenvalues[i].im.abs() <= tol_real)
        .collect();
    let complex_idx: Vec<usize> = (0..system.dim)
        .filter(|&i| decaying(sd.eigenvalues[i], acc))
        .collect();

    // H_b: eigenvectors of real eigenvalues; Ker C membership and the H_V
    // eigenvector property are certified, not assumed.
    let hv = system.h_v();
    let hv_norm = linalg::op_norm(&hv);
    let mut hb_cols = CMat::zeros(system.dim, real_idx.len());
    let mut real_eigenvalues = Vec::new();
    for (j, &i) in real_idx.iter().enumerate() {
        let u = sd.right_vectors.column(i).into_owned();
        let cu = (&system.c * &u).norm();
        if cu > 1e-8 {
            return Err(Error::AmbiguousClassification(format!(
                "eigenvector at real eigenvalue {} fails the Ker(C) test: ‖Cu‖ = {cu:.3e}",
                sd.eigenvalues[i]
            )));
        }
        let lam = Complex64::new(sd.eigenvalues[i].re, 0.0);
        let hv_res = (&hv * &u - &u * lam).norm();
        if hv_res > 1e-8 * hv_norm.max(1.0) {
            return Err(Error::AmbiguousClassification(format!(
                "real-eigenvalue eigenvector is not an H_V eigenvector (residual {hv_res:.3e})"
            )));
        }
        hb_cols.set_column(j, &u);
        real_eigenvalues.push(sd.eigenvalues[i].re);
    }
    let basis_hb = linalg::column_span(&hb_cols, 1e-10);

    let complex_eigs: Vec<Complex64> = complex_idx.iter().map(|&i| sd.eigenvalues[i]).collect();
    let clusters: Vec<Vec<usize>> = cluster_indices(&complex_eigs, cluster_gap)
        .into_iter()
        .map(|cl| cl.into_iter().map(|k| complex_idx[k]).collect())
        .collect();
    let basis_hp = generalized_basis(system, &sd, &clusters, cluster_gap)?;

    let adj_acc = sd_adj.eigenvalues.iter().any(|z| z.im > tol_real);
    let adj_complex_idx: Vec<usize> = (0..system.dim)
        .filter(|&i| decaying(sd_adj.eigenvalues[i], adj_acc))
        .collect();
    let adj_complex_eigs: Vec<Complex64> =
        adj_complex_idx.iter().map(|&i| sd_adj.eigenvalues[i]).collect();
    let adj_clusters: Vec<Vec<usize>> = cluster_indices(&adj_complex_eigs, cluster_gap)
        .into_iter()
        .map(|cl| cl.into_iter().map(|k| adj_complex_idx[k]).collect())
        .collect();
    let basis_hp_star =
        generalized_basis(&adjoint_system(system), &sd_adj, &adj_clusters, cluster_gap)?;

    if basis_hb.ncols() + basis_hp.ncols() != system.dim {
        notes.push(format!(
            "H_b ({}) ⊕ H_p ({}) does not exhaust dimension {}; classification tolerance \
             is a modeling choice for near-axis spectra",
            basis_hb.ncols(),
            basis_hp.ncols(),
            system.dim
        ));
    }

    // Π_pp = X (Y*X)^{-1} Y*, X spanning Ran = H_b ⊕ H_p(H),
    // Y spanning Ran(Π_pp*) = H_b ⊕ H_p(H*) (H_b(H*) = H_b(H)).
    let pi_pp_mat = oblique_projector(&basis_hb, &basis_hp, &basis_hp_star)?;
    let pi_pp = Projector::new(pi_pp_mat.clone(), "Pi_pp");
    let pi_pp_perp = Projector::new(
        CMat::identity(system.dim, system.dim) - pi_pp_mat,
        "Pi_pp_perp",
    );

    Ok(SubspaceDecomposition {
        basis_hb,
        basis_hp,
        basis_hp_star,
        pi_pp,
        pi_pp_perp,
        real_eigenvalues,
        notes,
    })
}

fn hstack(a: &CMat, b: &CMat) -> CMat {
    let n = a.nrows();
    let mut out = CMat::zeros(n, a.ncols() + b.ncols());
    out.columns_mut(0, a.ncols()).copy_from(a);
    out.columns_mut(a.ncols(), b.ncols()).copy_from(b);
    out
}

fn oblique_projector(basis_hb: &CMat, basis_hp: &CMat, basis_hp_star: &CMat) -> Result<CMat> {
    let n = basis_hb.nrows();
    let x = hstack(basis_hb, basis_hp);
    let y = hstack(basis_hb, basis_hp_star);
    if x.ncols() == 0 {
        return Ok(CMat::zeros(n, n));
    }
    if x.ncols() != y.ncols() {
        return Err(Error::AmbiguousClassification(format!(
            "H_p(H) and H_p(H*) have mismatched dimensions ({} vs {})",
            x.ncols(),
            y.ncols()
        )));
    }
    let gram = y.adjoint() * &x;
    let sv = linalg::singular_values(&gram);
    let smin = sv.last().copied().unwrap_or(0.0);
    let smax = sv.first().copied().unwrap_or(0.0);
    if smin <= 0.0 || smax / smin > 1e12 {
        return Err(Error::IllConditioned(if smin > 0.0 {
            smax / smin
        } else {
            f64::INFINITY
        }));
    }
    let ginv_yh = linalg::solve_mat(&gram, &y.adjoint().into_owned())?;
    Ok(&x * ginv_yh)
}

/// Oblique projector onto the span of modes selected by `keep` (applied to
/// each eigenvalue), built from right and left eigenvectors. For lattice
/// models this isolates genuinely discrete modes (bound states, deep decaying
/// resonant modes) from the near-axis continuum surrogates, which the
/// classification above cannot distinguish by |Im λ| alone.
pub fn point_projector(
    system: &DissipativeSystem,
    keep: impl Fn(Complex64) -> bool,
) -> Result<Projector> {
    let sd = eigendecompose(system)?;
    let sd_adj = eigendecompose(&adjoint_system(system))?;
    let n = system.dim;
    let idx: Vec<usize> = (0..n).filter(|&i| keep(sd.eigenvalues[i])).collect();
    let adj_idx: Vec<usize> = (0..n)
        .filter(|&i| keep(sd_adj.eigenvalues[i].conj()))
        .collect();
    if idx.len() != adj_idx.len() {
        return Err(Error::AmbiguousClassification(format!(
            "mode selection differs between H ({}) and H* ({})",
            idx.len(),
            adj_idx.len()
        )));
    }
    if idx.is_empty() {
        return Ok(Projector::new(CMat::zeros(n, n), "Pi_point"));
    }
    let mut x = CMat::zeros(n, idx.len());
    for (j, &i) in idx.iter().enumerate() {
        x.set_column(j, &sd.right_vectors.column(i));
    }
    let mut y = CMat::zeros(n, adj_idx.len());
    for (j, &i) in adj_idx.iter().enumerate() {
        y.set_column(j, &sd_adj.right_vectors.column(i));
    }
    let gram = y.adjoint() * &x;
    let sv = linalg::singular_values(&gram);
    let smin = sv.last().copied().unwrap_or(0.0);
    if smin <= 1e-12 * sv.first().copied().unwrap_or(1.0) {
        return Err(Error::IllConditioned(f64::INFINITY));
    }
    let ginv_yh = linalg::solve_mat(&gram, &y.adjoint().into_owned())?;
    Ok(Projector::new(&x * ginv_yh, "Pi_point"))
}

/// View the adjoint H* = H0 + V + iC*C as a system of the same class (its
/// "absorber" gains states; only `h`/`h_adj` swap matters downstream).
pub fn adjoint_system(system: &DissipativeSystem) -> DissipativeSystem {
    DissipativeSystem {
        dim: system.dim,
        h0: system.h0.clone(),
        v: system.v.clone(),
        c: system.c.clone(),
        h: system.h_adj.clone(),
        h_adj: system.h.clone(),
        model_tag: system.model_tag,
    }
}
