//! Joint optimization over parallel tones coupled by one power budget.
//!
//! The budget is dualized with a single price `nu` (bits per unit power);
//! each tone then solves its own capped problem independently and `nu` is
//! found by bisection on the total power.

use std::f64::consts::LN_2;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::channel_rng::{cscg_matrix, Role};
use crate::error::{Error, Result};
use crate::matkernel::{self, c, hermitian_part, CMatrix};
use crate::model::{interference_unchecked, Covariance, Method};

#[derive(Debug, Clone)]
pub struct Tone {
    pub h: CMatrix,
    /// Row vector towards the single-antenna primary receiver.
    pub g: CMatrix,
}

#[derive(Debug, Clone)]
pub struct ToneSet {
    tones: Vec<Tone>,
    pt: f64,
    gamma: f64,
}

impl ToneSet {
    pub fn new(tones: Vec<Tone>, pt: f64, gamma: f64) -> Result<Self> {
        let first = tones.first().ok_or_else(|| Error::InvalidArgument("no tones".into()))?;
        let (mrs, mts) = first.h.shape();
        for (j, t) in tones.iter().enumerate() {
            if t.h.shape() != (mrs, mts) || t.g.shape() != (1, mts) {
                return Err(Error::DimensionMismatch(format!(
                    "tone {j}: H is {:?}, g is {:?}, expected ({mrs}, {mts}) and (1, {mts})",
                    t.h.shape(),
                    t.g.shape()
                )));
            }
        }
        if !(pt >= 0.0) || !(gamma >= 0.0) {
            return Err(Error::InvalidArgument(format!("need pt >= 0 and gamma >= 0, got {pt} and {gamma}")));
        }
        Ok(ToneSet { tones, pt, gamma })
    }

    pub fn tones(&self) -> &[Tone] {
        &self.tones
    }

    pub fn pt(&self) -> f64 {
        self.pt
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn n(&self) -> usize {
        self.tones.len()
    }

    pub fn mts(&self) -> usize {
        self.tones[0].h.ncols()
    }
}

#[derive(Debug, Clone)]
pub struct MultiAllocation {
    pub s: Vec<Covariance>,
    pub nu: f64,
    pub total_power: f64,
    pub rates: Vec<f64>,
    /// Per-tone precoder family.
    pub methods: Vec<Method>,
    pub duality_gap: Option<f64>,
}

impl MultiAllocation {
    pub fn rate(&self) -> f64 {
        self.rates.iter().sum()
    }
}

/// Result of one tone at a fixed price.
#[derive(Debug, Clone)]
struct ToneSolution {
    s: CMatrix,
    rate: f64,
    power: f64,
    method: Method,
}

impl ToneSolution {
    fn new(tone: &Tone, s: CMatrix, method: Method) -> Self {
        let rate = matkernel::log2_det_i_plus(&tone.h, &s);
        let power = matkernel::trace_re(&s);
        ToneSolution { s, rate, power, method }
    }

    fn lagrangian(&self, nu: f64) -> f64 {
        self.rate - nu * self.power
    }
}

/// Rank-one `g^H g / |g|^2` and `|g|^2`.
fn g_projector(g: &CMatrix) -> (CMatrix, f64) {
    let gh = g.adjoint();
    let g2 = gh.norm_squared();
    (&gh * gh.adjoint() / c(g2, 0.0), g2)
}

/// Water-filling at level `1/price` over the eigenmodes of `h`.
fn wf_at_price(h: &CMatrix, price: f64) -> CMatrix {
    let n = h.ncols();
    let Ok(f) = matkernel::svd(h) else { return CMatrix::zeros(n, n) };
    let mut s = CMatrix::zeros(n, n);
    for (i, l) in f.lambda.iter().enumerate() {
        let p = 1.0 / price - 1.0 / l;
        if p > 0.0 {
            let u = f.u.column(i);
            s += (u * u.adjoint()).scale(p);
        }
    }
    hermitian_part(&s)
}

/// Maximizer of `ln det(I + H S H^H) - nu' tr S - mu |g|^2 tr(P_g S)`,
/// via the closed-form whitener of `nu' I + mu g^H g`.
fn tone_at(h: &CMatrix, pg: &CMatrix, g2: f64, nu_nat: f64, mu: f64) -> CMatrix {
    let n = h.ncols();
    let id = matkernel::identity(n);
    let b = (&id - pg).scale(1.0 / nu_nat.sqrt()) + pg.scale(1.0 / (nu_nat + mu * g2).sqrt());
    let hb = h * &b;
    let (w, lam) = matkernel::herm_eig_unchecked(&hermitian_part(&(hb.adjoint() * &hb)));
    let mut t = CMatrix::zeros(n, n);
    for (i, &l) in lam.iter().enumerate() {
        if l > 1.0 {
            let col = w.column(i);
            t += (col * col.adjoint()).scale(1.0 - 1.0 / l);
        }
    }
    hermitian_part(&(&b * t * &b))
}

fn solve_tone(tone: &Tone, nu: f64, gamma: f64) -> ToneSolution {
    let nu_nat = nu * LN_2;
    let n = tone.h.ncols();
    let (pg, g2) = g_projector(&tone.g);
    let interference = |s: &CMatrix| interference_unchecked(s, &tone.g);
    let free = tone_at(&tone.h, &pg, g2, nu_nat, 0.0);
    if interference(&free) <= gamma {
        return ToneSolution::new(tone, free, Method::Optimal);
    }
    if gamma == 0.0 {
        let basis = matkernel::kernel_basis(&tone.g);
        let s = if basis.ncols() == 0 {
            CMatrix::zeros(n, n)
        } else {
            let inner = wf_at_price(&(&tone.h * &basis), nu_nat);
            hermitian_part(&(&basis * inner * basis.adjoint()))
        };
        return ToneSolution::new(tone, s, Method::Optimal);
    }
    let (mut lo, mut hi) = (0.0, nu_nat / g2);
    let mut s_hi = tone_at(&tone.h, &pg, g2, nu_nat, hi);
    for _ in 0..200 {
        if interference(&s_hi) <= gamma {
            break;
        }
        lo = hi;
        hi *= 2.0;
        s_hi = tone_at(&tone.h, &pg, g2, nu_nat, hi);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi || hi - lo <= 1e-14 * hi {
            break;
        }
        let s = tone_at(&tone.h, &pg, g2, nu_nat, mid);
        if interference(&s) > gamma {
            lo = mid;
        } else {
            hi = mid;
            s_hi = s;
        }
    }
    ToneSolution::new(tone, s_hi, Method::Optimal)
}

/// Maximizer of `log2 det(I + H S H^H) - nu tr S` subject to `g S g^H <= gamma`.
/// `nu` is in bits per unit power.
pub fn tone_subproblem(h: &CMatrix, g: &CMatrix, nu: f64, gamma: f64) -> Result<Covariance> {
    if g.nrows() != 1 || g.ncols() != h.ncols() {
        return Err(Error::DimensionMismatch(format!("g is {:?} for H {:?}", g.shape(), h.shape())));
    }
    if !(nu > 0.0) || !(gamma >= 0.0) {
        return Err(Error::InvalidArgument(format!("need nu > 0 and gamma >= 0, got {nu} and {gamma}")));
    }
    if matkernel::max_abs(g) == 0.0 {
        return Ok(Covariance::from_hermitian_clipped(&wf_at_price(h, nu * LN_2)));
    }
    let tone = Tone { h: h.clone(), g: g.clone() };
    Ok(Covariance::from_hermitian_clipped(&solve_tone(&tone, nu, gamma).s))
}

/// Per-tone eigen-structure used by the structured selection.
struct ToneModes {
    d_lambda: Vec<f64>,
    d_u: CMatrix,
    d_alpha: Vec<f64>,
    p_lambda: Vec<f64>,
    p_u: CMatrix,
}

impl ToneModes {
    fn new(tone: &Tone) -> Self {
        let n = tone.h.ncols();
        let (d_lambda, d_u) = match matkernel::svd(&tone.h) {
            Ok(f) => (f.lambda, f.u),
            Err(_) => (Vec::new(), CMatrix::zeros(n, 0)),
        };
        let d_alpha = (0..d_u.ncols()).map(|i| (&tone.g * d_u.column(i)).norm_squared()).collect();
        let (pg, _) = g_projector(&tone.g);
        let h_perp = &tone.h * (matkernel::identity(n) - pg);
        let (p_lambda, p_u) = match matkernel::svd(&h_perp) {
            Ok(f) if matkernel::frobenius(&h_perp) > 1e-12 * matkernel::frobenius(&tone.h) => (f.lambda, f.u),
            _ => (Vec::new(), CMatrix::zeros(n, 0)),
        };
        ToneModes { d_lambda, d_u, d_alpha, p_lambda, p_u }
    }
}

fn covariance_of(u: &CMatrix, sigma: &[f64]) -> CMatrix {
    let mut s = CMatrix::zeros(u.nrows(), u.nrows());
    for (i, p) in sigma.iter().enumerate() {
        if *p > 0.0 {
            let col = u.column(i);
            s += (col * col.adjoint()).scale(*p);
        }
    }
    hermitian_part(&s)
}

fn levels(lambda: &[f64], alpha: &[f64], nu_nat: f64, mu: f64) -> Vec<f64> {
    lambda
        .iter()
        .zip(alpha)
        .map(|(l, a)| (1.0 / (nu_nat + a * mu) - 1.0 / l).max(0.0))
        .collect()
}

/// Better of the direct-SVD and projected-SVD loadings at price `nu`.
fn select_tone(tone: &Tone, modes: &ToneModes, nu: f64, gamma: f64) -> ToneSolution {
    let nu_nat = nu * LN_2;
    let cap = |s: &[f64]| s.iter().zip(&modes.d_alpha).map(|(s, a)| s * a).sum::<f64>();
    let mut sigma = levels(&modes.d_lambda, &modes.d_alpha, nu_nat, 0.0);
    if cap(&sigma) > gamma {
        let mut hi = modes
            .d_lambda
            .iter()
            .zip(&modes.d_alpha)
            .filter(|(_, &a)| a > 0.0)
            .map(|(l, a)| l / a)
            .fold(0.0, f64::max);
        let mut lo = 0.0;
        sigma = levels(&modes.d_lambda, &modes.d_alpha, nu_nat, hi);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi || hi - lo <= 1e-14 * hi {
                break;
            }
            let s = levels(&modes.d_lambda, &modes.d_alpha, nu_nat, mid);
            if cap(&s) > gamma {
                lo = mid;
            } else {
                hi = mid;
                sigma = s;
            }
        }
    }
    let d = ToneSolution::new(tone, covariance_of(&modes.d_u, &sigma), Method::DSvd);
    let zeros = vec![0.0; modes.p_lambda.len()];
    let p_sigma = levels(&modes.p_lambda, &zeros, nu_nat, 0.0);
    let p = ToneSolution::new(tone, covariance_of(&modes.p_u, &p_sigma), Method::PSvd);
    if p.lagrangian(nu) > d.lagrangian(nu) {
        p
    } else {
        d
    }
}

/// Outer bisection on the power price. Returns the allocations at the low and
/// high ends of the final bracket and the prices themselves.
fn bisect_price<F>(ts: &ToneSet, solve: F) -> (Vec<ToneSolution>, Vec<ToneSolution>, f64, f64)
where
    F: Fn(usize, f64) -> ToneSolution + Sync,
{
    let at = |nu: f64| -> Vec<ToneSolution> { (0..ts.n()).into_par_iter().map(|j| solve(j, nu)).collect() };
    let power = |v: &[ToneSolution]| v.iter().map(|t| t.power).sum::<f64>();
    let nu_hat = ts
        .tones
        .iter()
        .map(|t| matkernel::herm_eig_unchecked(&hermitian_part(&(t.h.adjoint() * &t.h))).1[0])
        .fold(0.0, f64::max)
        / LN_2;
    let mut hi = nu_hat;
    let mut sol_hi = at(hi);
    if ts.pt == 0.0 {
        return (sol_hi.clone(), sol_hi, hi, hi);
    }
    let mut lo = nu_hat * 1e-12;
    let mut sol_lo = at(lo);
    if power(&sol_lo) <= ts.pt {
        // The budget never binds: the caps alone limit every tone.
        return (sol_lo.clone(), sol_lo, lo, lo);
    }
    for _ in 0..200 {
        if hi - lo <= 1e-8 * hi {
            break;
        }
        // Bisect geometrically while the bracket spans decades.
        let mid = if hi > 4.0 * lo { (lo * hi).sqrt() } else { 0.5 * (lo + hi) };
        let sol = at(mid);
        if power(&sol) > ts.pt {
            lo = mid;
            sol_lo = sol;
        } else {
            hi = mid;
            sol_hi = sol;
        }
    }
    (sol_lo, sol_hi, lo, hi)
}

fn finish(sol: Vec<ToneSolution>, nu: f64, gap: Option<f64>) -> MultiAllocation {
    let total_power = sol.iter().map(|t| t.power).sum();
    MultiAllocation {
        rates: sol.iter().map(|t| t.rate).collect(),
        methods: sol.iter().map(|t| t.method).collect(),
        s: sol.iter().map(|t| Covariance::from_hermitian_clipped(&t.s)).collect(),
        nu,
        total_power,
        duality_gap: gap,
    }
}

/// Capacity over all tones under the shared budget and a per-tone cap.
pub fn multitone_optimal(ts: &ToneSet) -> Result<MultiAllocation> {
    let gamma = ts.gamma;
    let (lo_sol, hi_sol, _lo, hi) = bisect_price(ts, |j, nu| solve_tone(&ts.tones[j], nu, gamma));
    let p_lo: f64 = lo_sol.iter().map(|t| t.power).sum();
    let p_hi: f64 = hi_sol.iter().map(|t| t.power).sum();
    let dual = hi_sol.iter().map(|t| t.lagrangian(hi)).sum::<f64>() + hi * ts.pt;
    // Mix the bracket ends so the budget is met exactly; every cap still holds.
    let theta = if p_lo > p_hi && p_hi < ts.pt { ((ts.pt - p_hi) / (p_lo - p_hi)).clamp(0.0, 1.0) } else { 0.0 };
    let mixed: Vec<ToneSolution> = ts
        .tones
        .iter()
        .zip(lo_sol.iter().zip(&hi_sol))
        .map(|(tone, (a, b))| {
            let s = hermitian_part(&(a.s.scale(theta) + b.s.scale(1.0 - theta)));
            ToneSolution::new(tone, s, Method::Optimal)
        })
        .collect();
    let rate: f64 = mixed.iter().map(|t| t.rate).sum();
    let gap = if rate > 0.0 { ((dual - rate) / rate).max(0.0) } else { 0.0 };
    Ok(finish(mixed, hi, Some(gap)))
}

/// Per tone, the better of direct-SVD and projected-SVD precoding under the
/// shared budget.
pub fn multitone_svd_select(ts: &ToneSet) -> Result<MultiAllocation> {
    if ts.mts() < 2 {
        return Err(Error::InvalidArgument("per-tone selection needs at least two transmit antennas".into()));
    }
    let modes: Vec<ToneModes> = ts.tones.par_iter().map(ToneModes::new).collect();
    let gamma = ts.gamma;
    let (_, hi_sol, _, hi) = bisect_price(ts, |j, nu| select_tone(&ts.tones[j], &modes[j], nu, gamma));
    Ok(finish(hi_sol, hi, None))
}

/// Frequency response of tapped delay lines on `n` tones.
pub fn tones_from_taps(h_taps: &[CMatrix], g_taps: &[CMatrix], n: usize) -> Result<Vec<Tone>> {
    if h_taps.is_empty() || h_taps.len() != g_taps.len() {
        return Err(Error::DimensionMismatch(format!("{} H taps, {} g taps", h_taps.len(), g_taps.len())));
    }
    if h_taps.len() > n {
        return Err(Error::InvalidArgument(format!("{} taps exceed {n} tones", h_taps.len())));
    }
    let tones = (0..n)
        .map(|j| {
            let mut h = CMatrix::zeros(h_taps[0].nrows(), h_taps[0].ncols());
            let mut g = CMatrix::zeros(g_taps[0].nrows(), g_taps[0].ncols());
            for (l, (ht, gt)) in h_taps.iter().zip(g_taps).enumerate() {
                let w = Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * (j * l) as f64 / n as f64);
                h += ht * w;
                g += gt * w;
            }
            Tone { h, g }
        })
        .collect();
    Ok(tones)
}

/// Channel and cross-channel draw for one trial: `taps` independent
/// equal-energy CSCG taps whose variances sum to `var_h` and `var_g`.
#[allow(clippy::too_many_arguments)]
pub fn gen_ofdm_channels(
    mts: usize,
    mrs: usize,
    taps: usize,
    n: usize,
    var_h: f64,
    var_g: f64,
    seed: u64,
    trial: u64,
) -> Result<Vec<Tone>> {
    if taps == 0 || taps > n {
        return Err(Error::InvalidArgument(format!("need 1 <= taps <= tones, got {taps} and {n}")));
    }
    let h_taps: Vec<CMatrix> = (0..taps)
        .map(|l| cscg_matrix(mrs, mts, var_h / taps as f64, seed, trial, Role::HTap(l)))
        .collect();
    let g_taps: Vec<CMatrix> = (0..taps)
        .map(|l| cscg_matrix(1, mts, var_g / taps as f64, seed, trial, Role::GTap(l)))
        .collect();
    tones_from_taps(&h_taps, &g_taps, n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matkernel::from_real;
    use crate::mimo::optimal_covariance;
    use crate::model::ChannelSet;

    fn tones(n: usize, seed: u64) -> Vec<Tone> {
        gen_ofdm_channels(2, 2, n.min(4), n, 1.0, 0.1, seed, 0).unwrap()
    }

    #[test]
    fn slack_tone_is_fixed_level_water_filling() {
        let h = from_real(2, 2, &[1.0, 0.2, 0.0, 0.5]);
        let g = from_real(1, 2, &[0.1, 0.1]);
        let s = tone_subproblem(&h, &g, 0.5, 1e9).unwrap();
        let expect = wf_at_price(&h, 0.5 * LN_2);
        assert!(matkernel::max_abs(&(s.s() - expect)) < 1e-12);
    }

    #[test]
    fn expensive_power_gives_nothing() {
        let h = from_real(2, 2, &[1.0, 0.2, 0.0, 0.5]);
        let g = from_real(1, 2, &[0.1, 0.1]);
        let lmax = matkernel::herm_eig(&(h.adjoint() * &h)).unwrap().1[0];
        let s = tone_subproblem(&h, &g, lmax / LN_2, 0.01).unwrap();
        assert!(s.trace() < 1e-12);
    }

    #[test]
    fn tone_respects_cap() {
        let t = &tones(8, 1)[3];
        for &gamma in &[0.0, 0.01, 0.1] {
            let s = tone_subproblem(&t.h, &t.g, 0.05, gamma).unwrap();
            assert!(interference_unchecked(s.s(), &t.g) <= gamma * (1.0 + 1e-9) + 1e-15);
        }
    }

    #[test]
    fn single_tone_matches_general_solver() {
        for seed in 0..5 {
            let t = tones(1, 50 + seed);
            let ts = ToneSet::new(t.clone(), 10.0, 0.1).unwrap();
            let m = multitone_optimal(&ts).unwrap();
            let cs = ChannelSet::new(t[0].h.clone(), vec![t[0].g.clone()], 10.0, vec![0.1]).unwrap();
            let r = optimal_covariance(&cs).unwrap();
            assert!((m.rate() - r.rate).abs() <= 1e-4 * r.rate, "{} vs {}", m.rate(), r.rate);
        }
    }

    #[test]
    fn identical_tones_share_power() {
        let t = tones(1, 3);
        let ts = ToneSet::new(vec![t[0].clone(); 4], 8.0, 0.1).unwrap();
        let m = multitone_optimal(&ts).unwrap();
        for s in &m.s {
            assert!((s.trace() - 2.0).abs() < 1e-6);
        }
        assert!((m.total_power - 8.0).abs() < 1e-9);
    }

    #[test]
    fn beats_equal_split() {
        let t = tones(4, 4);
        let ts = ToneSet::new(t.clone(), 20.0, 0.1).unwrap();
        let m = multitone_optimal(&ts).unwrap();
        let split: f64 = t
            .iter()
            .map(|x| {
                let cs = ChannelSet::new(x.h.clone(), vec![x.g.clone()], 5.0, vec![0.1]).unwrap();
                optimal_covariance(&cs).unwrap().rate
            })
            .sum();
        assert!(m.rate() >= split - 1e-6);
        assert!(m.duality_gap.unwrap() <= 1e-4);
    }

    #[test]
    fn selection_limits() {
        let t = tones(8, 5);
        let free = multitone_svd_select(&ToneSet::new(t.clone(), 8.0, 1e9).unwrap()).unwrap();
        assert!(free.methods.iter().all(|m| *m == Method::DSvd));
        let zero = multitone_svd_select(&ToneSet::new(t.clone(), 8.0, 0.0).unwrap()).unwrap();
        assert!(zero.methods.iter().all(|m| *m == Method::PSvd));
        let opt = multitone_optimal(&ToneSet::new(t.clone(), 8.0, 0.1).unwrap()).unwrap();
        let sel = multitone_svd_select(&ToneSet::new(t, 8.0, 0.1).unwrap()).unwrap();
        assert!(sel.rate() <= opt.rate() + 1e-9);
        assert!(sel.total_power <= 8.0 * (1.0 + 1e-9));
    }

    #[test]
    fn permuting_tones_permutes_solution() {
        let t = tones(4, 6);
        let mut p = t.clone();
        p.swap(0, 3);
        let a = multitone_optimal(&ToneSet::new(t, 6.0, 0.1).unwrap()).unwrap();
        let b = multitone_optimal(&ToneSet::new(p, 6.0, 0.1).unwrap()).unwrap();
        assert!(matkernel::max_abs(&(a.s[0].s() - b.s[3].s())) < 1e-12);
        assert!(matkernel::max_abs(&(a.s[1].s() - b.s[1].s())) < 1e-12);
    }

    #[test]
    fn flat_channel_cases() {
        let h = vec![from_real(2, 2, &[1.0, 0.0, 0.5, 1.0])];
        let g = vec![from_real(1, 2, &[0.3, 0.2])];
        let t = tones_from_taps(&h, &g, 5).unwrap();
        assert!(t.iter().all(|x| x.h == h[0] && x.g == g[0]));
        let zero = CMatrix::zeros(2, 2);
        let hz: Vec<CMatrix> = std::iter::once(h[0].clone()).chain(std::iter::repeat_n(zero, 3)).collect();
        let gz: Vec<CMatrix> = std::iter::once(g[0].clone()).chain(std::iter::repeat_n(CMatrix::zeros(1, 2), 3)).collect();
        let t = tones_from_taps(&hz, &gz, 4).unwrap();
        assert!(t.iter().all(|x| matkernel::max_abs(&(&x.h - &h[0])) < 1e-15));
        assert!(tones_from_taps(&hz, &gz, 3).is_err());
    }

    #[test]
    fn tone_power_matches_total_variance() {
        let mut acc = 0.0;
        let seeds = 1000;
        for s in 0..seeds {
            let t = gen_ofdm_channels(2, 2, 4, 64, 1.0, 0.1, 77, s).unwrap();
            acc += t.iter().map(|x| x.h.norm_squared() / 4.0).sum::<f64>() / 64.0;
        }
        assert!((acc / seeds as f64 - 1.0).abs() < 0.05);
    }
}
