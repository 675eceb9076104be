//! The exact capacity-achieving covariance under power and interference caps,
//! and the SVD-based structured precoders that trade rate for simplicity.

use nalgebra::DVector;

use crate::ellipsoid::{Cut, Ellipsoid};
use crate::error::{Error, Result};
use crate::matkernel::{self, hermitian_part, CMatrix};
use crate::model::{interference_unchecked, ChannelSet, Covariance, Method, PrecoderResult};
use crate::waterfill::{self, WfAllocation};

/// Number of dominant directions of the cap-normalized cross channel that the
/// hybrid precoder projects out.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HybridConfig {
    pub b: usize,
}

/// Rows of every cross channel weighted by `1/sqrt(gamma_k)`.
fn normalized_cross(cs: &ChannelSet) -> CMatrix {
    let gmax = cs.gamma().iter().cloned().fold(0.0, f64::max);
    let floor = 1e-12 * gmax.max(1.0);
    let mut out = cs.stacked_g();
    let mut r = 0;
    for (gk, cap) in cs.g().iter().zip(cs.gamma()) {
        let w = 1.0 / cap.max(floor).sqrt();
        for i in r..r + gk.nrows() {
            out.row_mut(i).scale_mut(w);
        }
        r += gk.nrows();
    }
    out
}

/// `alpha[k][i] = |G_k u_i|^2`, with numerically-zero coupling clipped to zero.
fn couplings(cs: &ChannelSet, u: &CMatrix) -> Vec<Vec<f64>> {
    cs.g()
        .iter()
        .map(|gk| {
            let floor = 1e-20 * matkernel::frobenius(gk).powi(2);
            let gu = gk * u;
            (0..u.ncols())
                .map(|i| {
                    let a = gu.column(i).norm_squared();
                    if a <= floor { 0.0 } else { a }
                })
                .collect()
        })
        .collect()
}

fn allocate(lambda: &[f64], alpha: &[Vec<f64>], cs: &ChannelSet) -> Result<WfAllocation> {
    match alpha.len() {
        0 => waterfill::standard_wf(lambda, cs.pt()),
        1 => waterfill::single_cap_wf(lambda, &alpha[0], cs.pt(), cs.gamma()[0]),
        _ => waterfill::multi_cap_wf(lambda, alpha, cs.pt(), cs.gamma()),
    }
}

/// Precode along the right singular vectors of `h_eff` with cap-aware power loading.
fn svd_precoder(h_eff: &CMatrix, cs: &ChannelSet, method: Method) -> Result<PrecoderResult> {
    let f = match matkernel::svd(h_eff) {
        Ok(f) => f,
        Err(Error::ZeroMatrix) => return Ok(PrecoderResult::evaluate(Covariance::zero(cs.mts()), cs, method)),
        Err(e) => return Err(e),
    };
    let alpha = couplings(cs, &f.u);
    let alloc = allocate(&f.lambda, &alpha, cs)?;
    let cov = Covariance::from_factors(f.u, alloc.sigma)?;
    let mut res = PrecoderResult::evaluate(cov, cs, method);
    res.converged = alloc.converged;
    Ok(res)
}

/// Water-filling over the channel itself, ignoring every cap.
pub fn unconstrained_capacity(cs: &ChannelSet) -> Result<PrecoderResult> {
    let free = cs.without_primaries();
    let mut res = svd_precoder(cs.h(), &free, Method::Optimal)?;
    let full = PrecoderResult::evaluate(res.cov.clone(), cs, Method::Optimal);
    res.interference = full.interference;
    Ok(res)
}

/// Precoding on the right singular vectors of `H` itself.
pub fn dsvd(cs: &ChannelSet) -> Result<PrecoderResult> {
    svd_precoder(cs.h(), cs, Method::DSvd)
}

/// Precoding on `H` projected onto the null space of every cross channel;
/// no interference reaches any primary receiver.
pub fn psvd(cs: &ChannelSet) -> Result<PrecoderResult> {
    if cs.k() > 0 && cs.mts() <= cs.mrp() {
        return Err(Error::NotImplementable { mts: cs.mts(), mrp: cs.mrp() });
    }
    let h_perp = project_out(cs.h(), &cs.stacked_g(), usize::MAX)?;
    let free = ChannelSet::from_parts_unchecked(cs.h().clone(), Vec::new(), cs.pt(), Vec::new());
    let mut res = svd_precoder(&h_perp, &free, Method::PSvd)?;
    let full = PrecoderResult::evaluate(res.cov.clone(), cs, Method::PSvd);
    res.interference = full.interference;
    Ok(res)
}

/// `H (I - U_b U_b^H)` where `U_b` holds the top `b` right singular vectors of `m`.
fn project_out(h: &CMatrix, m: &CMatrix, b: usize) -> Result<CMatrix> {
    if b == 0 || m.nrows() == 0 {
        return Ok(h.clone());
    }
    let f = matkernel::svd(m)?;
    let take = b.min(f.rank());
    let ub = f.u.columns(0, take).into_owned();
    Ok(h * matkernel::null_projector(&ub)?)
}

/// Projects out the `b` strongest directions of the cap-normalized cross
/// channel, then loads power under the remaining interference caps.
pub fn hybrid(cs: &ChannelSet, cfg: HybridConfig) -> Result<PrecoderResult> {
    let b = cfg.b;
    if b > cs.mts().min(cs.mrp()) || b >= cs.mts() {
        return Err(Error::InvalidArgument(format!(
            "b = {b} outside 0..={} for {} transmit and {} primary antennas",
            (cs.mts() - 1).min(cs.mrp()),
            cs.mts(),
            cs.mrp()
        )));
    }
    let h_b = project_out(cs.h(), &normalized_cross(cs), b)?;
    svd_precoder(&h_b, cs, Method::Hybrid(b))
}

/// Tries every admissible `b` and keeps the best rate; ties go to the smaller `b`.
pub fn best_hybrid(cs: &ChannelSet) -> Result<(HybridConfig, PrecoderResult)> {
    let bmax = (cs.mts() - 1).min(cs.mrp());
    let mut best = (HybridConfig { b: 0 }, hybrid(cs, HybridConfig { b: 0 })?);
    for b in 1..=bmax {
        let r = hybrid(cs, HybridConfig { b })?;
        if r.rate > best.1.rate + 1e-12 {
            best = (HybridConfig { b }, r);
        }
    }
    Ok(best)
}

/// Equal power on every antenna, backed off until every cap holds.
pub fn white_spectrum(cs: &ChannelSet) -> Result<PrecoderResult> {
    let m = cs.mts() as f64;
    let mut p = cs.pt();
    for (gk, cap) in cs.g().iter().zip(cs.gamma()) {
        let f2 = matkernel::frobenius(gk).powi(2);
        if f2 > 0.0 {
            p = p.min(m * cap / f2);
        }
    }
    let cov = Covariance::from_factors(matkernel::identity(cs.mts()), vec![p / m; cs.mts()])?;
    Ok(PrecoderResult::evaluate(cov, cs, Method::White))
}

/// Maximizer of `ln det(I + H S H^H) - tr(A S)` for `A = B^{-2}`, returned as
/// `(S, value)`; whitening by `B` turns it into plain water-filling at level one.
fn whitened_wf(h: &CMatrix, b: &CMatrix) -> (CMatrix, f64) {
    let hb = h * b;
    let m = hermitian_part(&(hb.adjoint() * &hb));
    let (w, lam) = matkernel::herm_eig_unchecked(&m);
    let mut t = CMatrix::zeros(w.nrows(), w.nrows());
    let mut value = 0.0;
    for (i, &l) in lam.iter().enumerate() {
        if l > 1.0 {
            let p = 1.0 - 1.0 / l;
            let col = w.column(i);
            t += (col * col.adjoint()).scale(p);
            value += l.ln() - 1.0 + 1.0 / l;
        }
    }
    (hermitian_part(&(b * t * b)), value)
}

/// `(nu I + sum_k mu_k G_k^H G_k + eps I)^{-1/2}`.
fn whitener(n: usize, grams: &[CMatrix], nu: f64, mu: &[f64]) -> CMatrix {
    let mut a = matkernel::identity(n).scale(nu + 1e-12);
    for (g, m) in grams.iter().zip(mu) {
        a += g.scale(*m);
    }
    let (v, d) = matkernel::herm_eig_unchecked(&hermitian_part(&a));
    let w: Vec<f64> = d.iter().map(|x| 1.0 / x.max(1e-300).sqrt()).collect();
    hermitian_part(&(&v * matkernel::real_diag(&w) * v.adjoint()))
}

struct DualOutcome {
    s: CMatrix,
    converged: bool,
    /// Relative gap between the best dual bound and the best primal rate.
    gap: f64,
}

/// Lagrange dual over `(nu, mu)` by the ellipsoid method; the inner problem is
/// whitened water-filling. Caps are all positive here.
fn dual_solve(h: &CMatrix, g: &[CMatrix], pt: f64, gamma: &[f64], c0: f64) -> DualOutcome {
    let n = h.ncols();
    let kk = g.len();
    let dim = kk + 1;
    let grams: Vec<CMatrix> = g.iter().map(|gk| hermitian_part(&(gk.adjoint() * gk))).collect();
    let lmax = matkernel::herm_eig_unchecked(&hermitian_part(&(h.adjoint() * h))).1[0];

    let lo = vec![0.0; dim];
    let hi: Vec<f64> = std::iter::once(lmax.min(c0 / pt))
        .chain(gamma.iter().map(|cap| c0 / cap))
        .map(|x| x * (1.0 + 1e-6) + 1e-300)
        .collect();
    let mut ell = Ellipsoid::around_box(&lo, &hi);
    let mut best_dual = f64::INFINITY;
    let mut best_primal = -1.0f64;
    let mut best_s = CMatrix::zeros(n, n);
    let max_iter = (1000 * dim * dim).max(2000);
    for _ in 0..max_iter {
        if let Some(cut) = ell.box_cut(&lo, &hi) {
            if cut == Cut::Empty {
                break;
            }
            continue;
        }
        let nu = ell.c[0];
        let mu: Vec<f64> = ell.c.iter().skip(1).copied().collect();
        let b = whitener(n, &grams, nu, &mu);
        let (s, inner) = whitened_wf(h, &b);
        let power = matkernel::trace_re(&s);
        let interference: Vec<f64> = g.iter().map(|gk| interference_unchecked(&s, gk)).collect();
        let dual = inner + nu * pt + mu.iter().zip(gamma).map(|(m, c)| m * c).sum::<f64>();

        let mut t: f64 = 1.0;
        if power > pt {
            t = t.min(pt / power);
        }
        for (ik, cap) in interference.iter().zip(gamma) {
            if *ik > *cap {
                t = t.min(cap / ik);
            }
        }
        let primal = matkernel::ln_det_hpd(&(matkernel::identity(h.nrows()) + h * s.scale(t) * h.adjoint()));
        if primal > best_primal {
            best_primal = primal;
            best_s = s.scale(t);
        }
        best_dual = best_dual.min(dual);
        if best_dual - best_primal <= 1e-10 * best_primal {
            break;
        }
        let g_vec = DVector::from_iterator(
            dim,
            std::iter::once(pt - power).chain(interference.iter().zip(gamma).map(|(ik, cap)| cap - ik)),
        );
        // An empty cut pins the dual to rounding; what is left is primal recovery error.
        if ell.cut(&g_vec, dual - best_dual) == Cut::Empty {
            break;
        }
    }
    let gap = ((best_dual - best_primal) / best_primal.max(1e-300)).max(0.0);
    // Stopping aims far tighter than this; the flag only reports a usable answer.
    let converged = gap <= 1e-6;
    if !converged {
        log::warn!("dual search stopped with relative gap {gap:e}");
    }
    DualOutcome { s: best_s, converged, gap }
}

/// The capacity-achieving covariance under the power budget and every cap.
pub fn optimal_covariance(cs: &ChannelSet) -> Result<PrecoderResult> {
    let n = cs.mts();
    if cs.pt() == 0.0 {
        let mut r = PrecoderResult::evaluate(Covariance::zero(n), cs, Method::Optimal);
        r.duality_gap = Some(0.0);
        return Ok(r);
    }
    // Zero caps are met exactly by staying in the null space of those receivers.
    let zero: Vec<usize> = (0..cs.k()).filter(|&k| cs.gamma()[k] == 0.0).collect();
    let basis = if zero.is_empty() {
        matkernel::identity(n)
    } else {
        let rows: usize = zero.iter().map(|&k| cs.g()[k].nrows()).sum();
        let mut z = CMatrix::zeros(rows, n);
        let mut r = 0;
        for &k in &zero {
            z.rows_mut(r, cs.g()[k].nrows()).copy_from(&cs.g()[k]);
            r += cs.g()[k].nrows();
        }
        matkernel::kernel_basis(&z)
    };
    let zero_result = || {
        let mut r = PrecoderResult::evaluate(Covariance::zero(n), cs, Method::Optimal);
        r.duality_gap = Some(0.0);
        r
    };
    if basis.ncols() == 0 {
        return Ok(zero_result());
    }
    let h = cs.h() * &basis;
    let mut g = Vec::new();
    let mut gamma = Vec::new();
    for k in (0..cs.k()).filter(|&k| cs.gamma()[k] > 0.0) {
        let gk = &cs.g()[k] * &basis;
        if matkernel::frobenius(&gk) > 1e-14 * matkernel::frobenius(&cs.g()[k]) {
            g.push(gk);
            gamma.push(cs.gamma()[k]);
        }
    }
    let lift = |s: &CMatrix| hermitian_part(&(&basis * s * basis.adjoint()));

    let free = ChannelSet::from_parts_unchecked(h.clone(), Vec::new(), cs.pt(), Vec::new());
    let wf = match matkernel::svd(&h) {
        Ok(_) => svd_precoder(&h, &free, Method::Optimal)?,
        Err(Error::ZeroMatrix) => return Ok(zero_result()),
        Err(e) => return Err(e),
    };
    let slack = g
        .iter()
        .zip(&gamma)
        .all(|(gk, cap)| interference_unchecked(wf.cov.s(), gk) <= *cap);
    if slack {
        let mut r = PrecoderResult::evaluate(Covariance::from_hermitian_clipped(&lift(wf.cov.s())), cs, Method::Optimal);
        r.duality_gap = Some(0.0);
        return Ok(r);
    }
    let c0 = wf.rate * std::f64::consts::LN_2;
    let out = dual_solve(&h, &g, cs.pt(), &gamma, c0);
    let cov = Covariance::from_hermitian_clipped(&lift(&out.s));
    let mut r = PrecoderResult::evaluate(cov, cs, Method::Optimal);
    r.converged = out.converged;
    r.duality_gap = Some(out.gap);
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel_rng::{cscg_matrix, Role};
    use crate::matkernel::{from_real, identity};
    use crate::miso::closed_form_beamformer;

    fn draw(mts: usize, mrs: usize, k: usize, pt: f64, gamma: f64, seed: u64) -> ChannelSet {
        let h = cscg_matrix(mrs, mts, 1.0, seed, 0, Role::H);
        let g = (0..k).map(|j| cscg_matrix(1, mts, 0.1, seed, 0, Role::G(j))).collect();
        ChannelSet::new(h, g, pt, vec![gamma; k]).unwrap()
    }

    #[test]
    fn no_primary_is_water_filling() {
        let cs = draw(3, 2, 0, 5.0, 0.0, 1);
        let r = optimal_covariance(&cs).unwrap();
        let f = matkernel::svd(cs.h()).unwrap();
        let wf = waterfill::standard_wf(&f.lambda, 5.0).unwrap();
        assert!((r.rate - wf.bits(&f.lambda)).abs() < 1e-12);
    }

    #[test]
    fn miso_matches_closed_form() {
        for seed in 0..20 {
            let cs = draw(4, 1, 1, [1.0, 10.0, 100.0][seed as usize % 3], 0.1, 100 + seed);
            let r = optimal_covariance(&cs).unwrap();
            let cf = closed_form_beamformer(cs.h(), &cs.g()[0], cs.pt(), 0.1).unwrap();
            assert!((r.rate - cf.rate).abs() < 1e-6, "{seed}: {} vs {}", r.rate, cf.rate);
            let ev = r.cov.eigenvalues();
            assert!(ev[1] <= 1e-6 * ev[0]);
        }
    }

    #[test]
    fn zero_cap_matches_projection() {
        for seed in 0..10 {
            let cs = draw(4, 2, 1, 10.0, 0.0, 200 + seed);
            let opt = optimal_covariance(&cs).unwrap();
            let p = psvd(&cs).unwrap();
            assert!((opt.rate - p.rate).abs() < 1e-6);
            assert!(p.interference[0] <= 1e-12);
        }
    }

    #[test]
    fn optimal_is_feasible_with_small_gap() {
        for seed in 0..10 {
            let cs = draw(4, 4, 2, 10.0, 0.1, 300 + seed);
            let r = optimal_covariance(&cs).unwrap();
            assert!(r.violation(&cs) <= 1e-7, "{}", r.violation(&cs));
            assert!(r.duality_gap.unwrap() <= 1e-4);
            assert!(r.converged);
        }
    }

    #[test]
    fn projection_example() {
        let cs = ChannelSet::new(identity(2), vec![from_real(1, 2, &[1.0, 0.0])], 1.0, vec![0.1]).unwrap();
        let r = psvd(&cs).unwrap();
        assert!((r.rate - 1.0).abs() < 1e-12);
        assert!(r.interference[0] < 1e-30);
        assert!((r.cov.s()[(1, 1)].re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn projection_degenerate_cases() {
        let cs = ChannelSet::new(from_real(1, 2, &[2.0, 4.0]), vec![from_real(1, 2, &[1.0, 2.0])], 1.0, vec![0.1]).unwrap();
        assert!(psvd(&cs).unwrap().rate < 1e-12);
        let crowded = draw(2, 2, 2, 1.0, 0.1, 9);
        assert!(matches!(psvd(&crowded), Err(Error::NotImplementable { mts: 2, mrp: 2 })));
    }

    #[test]
    fn dsvd_slack_caps_is_capacity() {
        let cs = draw(3, 3, 2, 10.0, 1e6, 4);
        let d = dsvd(&cs).unwrap();
        let u = unconstrained_capacity(&cs).unwrap();
        assert!((d.rate - u.rate).abs() < 1e-12);
    }

    #[test]
    fn dsvd_miso_power_is_min_of_budget_and_cap() {
        let cs = draw(3, 1, 1, 10.0, 0.05, 5);
        let d = dsvd(&cs).unwrap();
        let hv = cs.h().row(0).adjoint();
        let a = (&cs.g()[0] * &hv)[(0, 0)].norm_sqr() / hv.norm_squared();
        let p = cs.pt().min(0.05 / a);
        assert!((d.tx_power - p).abs() < 1e-9 * p);
    }

    #[test]
    fn dsvd_power_saturates() {
        let cs = draw(2, 2, 1, 1e4, 0.1, 6);
        let d = dsvd(&cs).unwrap();
        let f = matkernel::svd(cs.h()).unwrap();
        let amin = (0..2).map(|i| (&cs.g()[0] * f.u.column(i)).norm_squared()).fold(f64::INFINITY, f64::min);
        assert!(d.tx_power <= 0.1 / amin * (1.0 + 1e-9));
    }

    #[test]
    fn hybrid_endpoints() {
        let cs = draw(4, 4, 2, 10.0, 0.1, 7);
        let h0 = hybrid(&cs, HybridConfig { b: 0 }).unwrap();
        assert!((h0.rate - dsvd(&cs).unwrap().rate).abs() < 1e-12);
        let h2 = hybrid(&cs, HybridConfig { b: 2 }).unwrap();
        assert!((h2.rate - psvd(&cs).unwrap().rate).abs() < 1e-9);
        let h1 = hybrid(&cs, HybridConfig { b: 1 }).unwrap();
        assert!(h1.violation(&cs) <= 1e-6);
        assert!(hybrid(&cs, HybridConfig { b: 3 }).is_err());
    }

    #[test]
    fn best_hybrid_extremes() {
        let slack = draw(4, 4, 2, 10.0, 1e6, 8);
        assert_eq!(best_hybrid(&slack).unwrap().0.b, 0);
        let tight = draw(4, 4, 2, 10.0, 0.0, 8);
        assert_eq!(best_hybrid(&tight).unwrap().0.b, 2);
    }

    #[test]
    fn white_examples() {
        let free = draw(3, 2, 0, 6.0, 0.0, 1);
        assert!((white_spectrum(&free).unwrap().tx_power - 6.0).abs() < 1e-12);
        let one = draw(3, 2, 1, 6.0, 0.01, 1);
        let f2 = matkernel::frobenius(&one.g()[0]).powi(2);
        let p = 6.0f64.min(3.0 * 0.01 / f2);
        assert!((white_spectrum(&one).unwrap().tx_power - p).abs() < 1e-12);
        let zero = draw(3, 2, 1, 6.0, 0.0, 1);
        assert_eq!(white_spectrum(&zero).unwrap().rate, 0.0);
    }

    #[test]
    fn ordering_of_methods() {
        for seed in 0..10 {
            let cs = draw(3, 3, 2, 10.0, 0.05, 400 + seed);
            let opt = optimal_covariance(&cs).unwrap().rate;
            let (_, best) = best_hybrid(&cs).unwrap();
            let white = white_spectrum(&cs).unwrap().rate;
            let free = unconstrained_capacity(&cs).unwrap().rate;
            assert!(white <= best.rate.max(dsvd(&cs).unwrap().rate) + 1e-6);
            assert!(best.rate <= opt + 1e-6, "{seed}: {} > {opt}", best.rate);
            assert!(opt <= free + 1e-9);
        }
    }
}
