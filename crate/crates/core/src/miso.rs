//! Exact beamformers for a single-antenna secondary receiver.
//!
//! With one receive antenna the optimal covariance is rank one, so the problem
//! reduces to choosing a vector `v`. One primary receiver admits a closed form;
//! several are handled through the semidefinite dual in `K + 1` variables.

use nalgebra::DVector;
use num_complex::Complex64;

use crate::ellipsoid::{Cut, Ellipsoid};
use crate::error::{Error, Result};
use crate::matkernel::{self, c, CMatrix, CVector};
use crate::model::{ChannelSet, Covariance, Method, PrecoderResult};

/// `h^H = alpha_h g_hat + beta_h h_perp_hat` with `g_hat = g^H / |g|`.
#[derive(Debug, Clone)]
pub struct MisoDecomposition {
    pub alpha_h: Complex64,
    pub beta_h: Complex64,
    pub g_hat: CVector,
    pub h_perp_hat: CVector,
}

/// Multipliers of the power budget and of each interference cap.
/// A zero cap is enforced exactly and reported with `mu = INFINITY`.
#[derive(Debug, Clone, PartialEq)]
pub struct DualPoint {
    pub nu: f64,
    pub mu: Vec<f64>,
}

fn row_vector(name: &str, x: &CMatrix) -> Result<CVector> {
    if x.nrows() != 1 {
        return Err(Error::DimensionMismatch(format!("{name} must be a row vector, got {}x{}", x.nrows(), x.ncols())));
    }
    if matkernel::max_abs(x) == 0.0 {
        return Err(Error::ZeroMatrix);
    }
    Ok(x.row(0).adjoint())
}

/// A unit vector orthogonal to the unit vector `u`.
fn orthogonal_unit(u: &CVector) -> CVector {
    let j = (0..u.len())
        .min_by(|&a, &b| u[a].norm().total_cmp(&u[b].norm()))
        .unwrap_or(0);
    let mut e = CVector::zeros(u.len());
    e[j] = c(1.0, 0.0);
    let p = u.dotc(&e);
    let w = e - u * p;
    let n = w.norm();
    w / c(n, 0.0)
}

pub fn decompose(h: &CMatrix, g: &CMatrix) -> Result<MisoDecomposition> {
    let hh = row_vector("h", h)?;
    let gh = row_vector("g", g)?;
    if hh.len() != gh.len() {
        return Err(Error::DimensionMismatch(format!("h has {} entries, g has {}", hh.len(), gh.len())));
    }
    if hh.len() < 2 {
        return Err(Error::InvalidArgument("a single transmit antenna has no direction orthogonal to g".into()));
    }
    let g_hat = &gh / c(gh.norm(), 0.0);
    let alpha_h = g_hat.dotc(&hh);
    let h_perp = &hh - &g_hat * alpha_h;
    let beta = h_perp.norm();
    if beta <= 1e-14 * hh.norm() {
        return Ok(MisoDecomposition { alpha_h, beta_h: c(0.0, 0.0), h_perp_hat: orthogonal_unit(&g_hat), g_hat });
    }
    Ok(MisoDecomposition { alpha_h, beta_h: c(beta, 0.0), h_perp_hat: h_perp / c(beta, 0.0), g_hat })
}

fn rank_one(v: &CVector, cs: &ChannelSet, method: Method) -> PrecoderResult {
    let p = v.norm_squared();
    let cov = if p > 0.0 {
        let dir = CMatrix::from_column_slice(v.len(), 1, (v / c(p.sqrt(), 0.0)).as_slice());
        Covariance::from_factors(dir, vec![p]).expect("unit direction")
    } else {
        Covariance::zero(v.len())
    };
    PrecoderResult::evaluate(cov, cs, method)
}

/// Optimal beamformer for one single-antenna primary receiver.
pub fn closed_form_beamformer(h: &CMatrix, g: &CMatrix, pt: f64, gamma: f64) -> Result<PrecoderResult> {
    let hh = row_vector("h", h)?;
    let gh = row_vector("g", g)?;
    if hh.len() != gh.len() {
        return Err(Error::DimensionMismatch(format!("h has {} entries, g has {}", hh.len(), gh.len())));
    }
    if !(pt >= 0.0) || !(gamma >= 0.0) {
        return Err(Error::InvalidArgument(format!("need pt >= 0 and gamma >= 0, got {pt} and {gamma}")));
    }
    let cs = ChannelSet::from_parts_unchecked(h.clone(), vec![g.clone()], pt, vec![gamma]);
    let g2 = gh.norm_squared();
    let mrc = &hh / c(hh.norm(), 0.0);
    if hh.len() == 1 {
        let p = pt.min(gamma / g2);
        return Ok(rank_one(&(mrc * c(p.sqrt(), 0.0)), &cs, Method::MisoClosedForm));
    }
    let d = decompose(h, g)?;
    let (a2, b2) = (d.alpha_h.norm_sqr(), d.beta_h.norm_sqr());
    let v = if d.beta_h.norm() == 0.0 {
        let p = pt.min(gamma / g2);
        mrc * c(p.sqrt(), 0.0)
    } else if a2 == 0.0 || gamma >= g2 * a2 / (a2 + b2) * pt {
        mrc * c(pt.sqrt(), 0.0)
    } else {
        let av = d.alpha_h / d.alpha_h.norm() * (gamma.sqrt() / g2.sqrt());
        let bv = d.beta_h / d.beta_h.norm() * (pt - gamma / g2).max(0.0).sqrt();
        &d.g_hat * av + &d.h_perp_hat * bv
    };
    Ok(rank_one(&v, &cs, Method::MisoClosedForm))
}

/// `nu I + sum_k mu_k G_k^H G_k - h^H h`.
fn dual_matrix(hh: &CVector, grams: &[CMatrix], nu: f64, mu: &[f64]) -> CMatrix {
    let n = hh.len();
    let mut f = matkernel::identity(n).scale(nu) - hh * hh.adjoint();
    for (gk, m) in grams.iter().zip(mu) {
        f += gk.scale(*m);
    }
    matkernel::hermitian_part(&f)
}

fn unit(n: usize, i: usize) -> DVector<f64> {
    let mut e = DVector::zeros(n);
    e[i] = 1.0;
    e
}

struct DualSearch {
    nu: f64,
    mu: Vec<f64>,
    value: f64,
    converged: bool,
}

fn search_dual(hh: &CVector, grams: &[CMatrix], pt: f64, gamma: &[f64], lo: &[f64], hi: &[f64]) -> Option<DualSearch> {
    let n = 1 + grams.len();
    let objective = DVector::from_iterator(n, std::iter::once(pt).chain(gamma.iter().copied()));
    let mut ell = Ellipsoid::around_box(lo, hi);
    let mut best: Option<DualSearch> = None;
    let max_iter = (2000 * n * n).max(3000);
    for _ in 0..max_iter {
        if let Some(cut) = ell.box_cut(lo, hi) {
            if cut == Cut::Empty {
                break;
            }
            continue;
        }
        let nu = ell.c[0];
        let mu: Vec<f64> = ell.c.iter().skip(1).copied().collect();
        let f = dual_matrix(hh, grams, nu, &mu);
        let (v, d) = matkernel::herm_eig_unchecked(&f);
        let lmin = d[d.len() - 1];
        if lmin < 0.0 {
            let x = v.column(d.len() - 1).into_owned();
            let g = DVector::from_iterator(
                n,
                std::iter::once(-1.0).chain(grams.iter().map(|gk| -(x.adjoint() * gk * &x)[(0, 0)].re)),
            );
            if ell.cut(&g, -lmin) == Cut::Empty {
                break;
            }
            continue;
        }
        let value = objective.dot(&ell.c);
        let best_value = best.as_ref().map_or(f64::INFINITY, |b| b.value);
        if value < best_value {
            best = Some(DualSearch { nu, mu, value, converged: false });
        }
        let best_value = best.as_ref().map_or(value, |b| b.value);
        let spread = (0..n).all(|i| ell.width(&unit(n, i)) <= 1e-13 * (hi[i] - lo[i]));
        if spread && ell.width(&objective) <= 1e-13 * best_value {
            if let Some(b) = best.as_mut() {
                b.converged = true;
            }
            break;
        }
        if ell.cut(&objective, value - best_value) == Cut::Empty {
            if let Some(b) = best.as_mut() {
                b.converged = true;
            }
            break;
        }
    }
    best
}

/// Beamformer for several primary receivers from the semidefinite dual:
/// minimize `nu pt + sum mu_k gamma_k` subject to
/// `nu I + sum mu_k G_k^H G_k - h^H h >= 0`, then recover `v` from the null
/// space of that matrix.
pub fn miso_dual_beamformer(h: &CMatrix, g: &[CMatrix], pt: f64, gamma: &[f64]) -> Result<(DualPoint, PrecoderResult)> {
    let hh = row_vector("h", h)?;
    if g.is_empty() || g.len() != gamma.len() {
        return Err(Error::DimensionMismatch(format!("{} cross channels, {} caps", g.len(), gamma.len())));
    }
    let cs = ChannelSet::new(h.clone(), g.to_vec(), pt, gamma.to_vec())?;
    let m = hh.len();

    // Zero caps: confine v to the common null space of those receivers.
    let zero: Vec<usize> = (0..g.len()).filter(|&k| gamma[k] == 0.0).collect();
    let basis = if zero.is_empty() {
        matkernel::identity(m)
    } else {
        let rows: usize = zero.iter().map(|&k| g[k].nrows()).sum();
        let mut z = CMatrix::zeros(rows, m);
        let mut r = 0;
        for &k in &zero {
            z.rows_mut(r, g[k].nrows()).copy_from(&g[k]);
            r += g[k].nrows();
        }
        matkernel::kernel_basis(&z)
    };
    let mut point = DualPoint { nu: 0.0, mu: vec![0.0; g.len()] };
    for &k in &zero {
        point.mu[k] = f64::INFINITY;
    }
    let hr = basis.adjoint() * &hh;
    if basis.ncols() == 0 || hr.norm() <= 1e-14 * hh.norm() {
        let mut res = rank_one(&CVector::zeros(m), &cs, Method::Optimal);
        res.duality_gap = Some(0.0);
        return Ok((point, res));
    }
    let active: Vec<usize> = (0..g.len()).filter(|&k| gamma[k] > 0.0).collect();
    let grams: Vec<CMatrix> = active
        .iter()
        .map(|&k| {
            let gk = &g[k] * &basis;
            matkernel::hermitian_part(&(gk.adjoint() * gk))
        })
        .collect();
    let caps: Vec<f64> = active.iter().map(|&k| gamma[k]).collect();
    let h2 = hr.norm_squared();

    // Matched filter first: optimal whenever every cap is slack there.
    let mrc = &hr * c((pt / h2).sqrt(), 0.0);
    let slack = grams.iter().zip(&caps).all(|(gk, cap)| (mrc.adjoint() * gk * &mrc)[(0, 0)].re <= *cap);
    if slack {
        point.nu = h2;
        let mut res = rank_one(&(&basis * mrc), &cs, Method::Optimal);
        res.duality_gap = Some(0.0);
        return Ok((point, res));
    }

    let lo = vec![0.0; 1 + active.len()];
    let mut hi: Vec<f64> = std::iter::once(h2)
        .chain(caps.iter().map(|cap| pt * h2 / cap))
        .map(|x| x * (1.0 + 1e-9))
        .collect();
    let mut found = None;
    for _ in 0..4 {
        let Some(mut s) = search_dual(&hr, &grams, pt, &caps, &lo, &hi) else { break };
        // Slide nu down until the dual matrix is singular.
        let (_, d) = matkernel::herm_eig_unchecked(&dual_matrix(&hr, &grams, s.nu, &s.mu));
        let lmin = d[d.len() - 1].max(0.0);
        if s.nu >= lmin {
            s.nu -= lmin;
            s.value -= lmin * pt;
        }
        let f = dual_matrix(&hr, &grams, s.nu, &s.mu);
        let (_, d) = matkernel::herm_eig_unchecked(&f);
        let scale = d.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        if d[d.len() - 1] <= 1e-6 * scale {
            found = Some(s);
            break;
        }
        // Not on the boundary yet: search again inside the box below the best point.
        hi = std::iter::once(s.nu).chain(s.mu.iter().copied()).map(|x| x * (1.0 + 1e-6) + 1e-300).collect();
    }
    let s = match found {
        Some(s) => s,
        None => {
            return Err(Error::EmptyNullSpace(f64::NAN));
        }
    };

    let f = dual_matrix(&hr, &grams, s.nu, &s.mu);
    let (vecs, d) = matkernel::herm_eig_unchecked(&f);
    let scale = d.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    let lmin = d[d.len() - 1];
    let cols: Vec<usize> = (0..d.len()).filter(|&i| d[i] <= lmin + 1e-7 * scale).collect();
    let mut null = CMatrix::zeros(vecs.nrows(), cols.len());
    for (j, &i) in cols.iter().enumerate() {
        null.set_column(j, &vecs.column(i));
    }
    let mut dir = &null * (null.adjoint() * &hr);
    if dir.norm() <= 1e-12 * hr.norm() {
        dir = vecs.column(d.len() - 1).into_owned();
    }
    let dir = &dir / c(dir.norm(), 0.0);
    let mut p = pt;
    for (gk, cap) in grams.iter().zip(&caps) {
        let gain = (dir.adjoint() * gk * &dir)[(0, 0)].re;
        if gain > 0.0 {
            p = p.min(cap / gain);
        }
    }
    let v = &basis * (dir * c(p.sqrt(), 0.0));
    let mut res = rank_one(&v, &cs, Method::Optimal);
    res.converged = s.converged;
    let bound = (1.0 + s.value).log2();
    res.duality_gap = Some(((bound - res.rate) / res.rate.max(1e-300)).max(0.0));
    point.nu = s.nu;
    for (j, &k) in active.iter().enumerate() {
        point.mu[k] = s.mu[j];
    }
    Ok((point, res))
}
