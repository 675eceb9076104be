//! Water-filling over parallel sub-channels, with and without interference caps.
//!
//! Multipliers are in natural-log units: sub-channel `i` gets
//! `sigma_i = (1 / (nu + sum_k alpha_ki mu_k) - 1 / lambda_i)^+`.

use nalgebra::DVector;

use crate::ellipsoid::{Cut, Ellipsoid};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct WfAllocation {
    pub sigma: Vec<f64>,
    pub nu: f64,
    pub mu: Vec<f64>,
    pub converged: bool,
}

impl WfAllocation {
    /// `sum_i ln(1 + lambda_i sigma_i)`.
    pub fn nats(&self, lambda: &[f64]) -> f64 {
        lambda.iter().zip(&self.sigma).map(|(l, s)| (l * s).ln_1p()).sum()
    }

    pub fn bits(&self, lambda: &[f64]) -> f64 {
        self.nats(lambda) / std::f64::consts::LN_2
    }

    pub fn power(&self) -> f64 {
        self.sigma.iter().sum()
    }
}

fn check_lambda(lambda: &[f64]) -> Result<()> {
    if lambda.is_empty() {
        return Err(Error::InvalidArgument("no sub-channels".into()));
    }
    if let Some(bad) = lambda.iter().find(|&&l| !(l > 0.0) || !l.is_finite()) {
        return Err(Error::InvalidArgument(format!("sub-channel gains must be positive, got {bad}")));
    }
    Ok(())
}

fn check_budget(name: &str, x: f64) -> Result<()> {
    if !(x >= 0.0) {
        return Err(Error::InvalidArgument(format!("{name} must be >= 0, got {x}")));
    }
    Ok(())
}

/// Water-filling with a single water level; the level is found exactly.
pub fn standard_wf(lambda: &[f64], p: f64) -> Result<WfAllocation> {
    check_lambda(lambda)?;
    check_budget("power budget", p)?;
    let lmax = lambda.iter().cloned().fold(0.0, f64::max);
    if p == 0.0 {
        return Ok(WfAllocation { sigma: vec![0.0; lambda.len()], nu: lmax, mu: Vec::new(), converged: true });
    }
    let mut floors: Vec<f64> = lambda.iter().map(|l| 1.0 / l).collect();
    floors.sort_by(f64::total_cmp);
    let mut level = p + floors[0];
    let mut acc = 0.0;
    for (k, f) in floors.iter().enumerate() {
        acc += f;
        let w = (p + acc) / (k + 1) as f64;
        if w > *f {
            level = w;
        } else {
            break;
        }
    }
    let sigma = lambda.iter().map(|l| (level - 1.0 / l).max(0.0)).collect();
    Ok(WfAllocation { sigma, nu: 1.0 / level, mu: Vec::new(), converged: true })
}

/// Pointwise multi-level water-filling at fixed multipliers.
pub fn multilevel_wf(lambda: &[f64], alpha: &[f64], nu: f64, mu: f64) -> Result<Vec<f64>> {
    if alpha.len() != lambda.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} gains but {} interference weights",
            lambda.len(),
            alpha.len()
        )));
    }
    lambda
        .iter()
        .zip(alpha)
        .map(|(l, a)| {
            let price = nu + a * mu;
            if !(price > 0.0) {
                return Err(Error::InvalidArgument(format!("water level undefined: nu + alpha*mu = {price}")));
            }
            Ok((1.0 / price - 1.0 / l).max(0.0))
        })
        .collect()
}

fn levels(lambda: &[f64], base: &[f64], nu: f64) -> Vec<f64> {
    lambda
        .iter()
        .zip(base)
        .map(|(l, b)| {
            let price = nu + b;
            if price <= 0.0 {
                f64::INFINITY
            } else {
                (1.0 / price - 1.0 / l).max(0.0)
            }
        })
        .collect()
}

/// Smallest `nu >= 0` whose allocation fits the power budget, given the
/// interference part `base_i` of every sub-channel's price.
fn min_nu(lambda: &[f64], base: &[f64], p: f64) -> f64 {
    let power = |nu: f64| levels(lambda, base, nu).iter().sum::<f64>();
    if power(0.0) <= p {
        return 0.0;
    }
    let mut lo = 0.0;
    let mut hi = lambda.iter().cloned().fold(0.0, f64::max);
    for _ in 0..300 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if power(mid) > p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

/// Maximizes `sum_i log2(1 + lambda_i sigma_i)` subject to `sum sigma_i <= pt`
/// and `sum alpha_i sigma_i <= gamma` by bisection on the cap multiplier.
pub fn single_cap_wf(lambda: &[f64], alpha: &[f64], pt: f64, gamma: f64) -> Result<WfAllocation> {
    check_lambda(lambda)?;
    check_budget("power budget", pt)?;
    check_budget("interference cap", gamma)?;
    if alpha.len() != lambda.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} gains but {} interference weights",
            lambda.len(),
            alpha.len()
        )));
    }
    if let Some(bad) = alpha.iter().find(|&&a| !(a >= 0.0)) {
        return Err(Error::InvalidArgument(format!("interference weights must be >= 0, got {bad}")));
    }
    let mut free = standard_wf(lambda, pt)?;
    let interference = |s: &[f64]| s.iter().zip(alpha).map(|(s, a)| s * a).sum::<f64>();
    if interference(&free.sigma) <= gamma {
        free.mu = vec![0.0];
        return Ok(free);
    }
    // Every sub-channel the cap can see is switched off at mu_hat.
    let mu_hat = lambda
        .iter()
        .zip(alpha)
        .filter(|(_, &a)| a > 0.0)
        .map(|(l, a)| l / a)
        .fold(0.0, f64::max);
    let eval = |mu: f64| {
        let base: Vec<f64> = alpha.iter().map(|a| a * mu).collect();
        let nu = min_nu(lambda, &base, pt);
        (nu, levels(lambda, &base, nu))
    };
    let (mut lo, mut hi) = (0.0, mu_hat);
    let mut best = eval(hi);
    let mut converged = false;
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi || hi - lo <= 1e-15 * hi {
            converged = true;
            break;
        }
        let (nu, sigma) = eval(mid);
        if interference(&sigma) > gamma {
            lo = mid;
        } else {
            hi = mid;
            best = (nu, sigma);
        }
    }
    Ok(WfAllocation { sigma: best.1, nu: best.0, mu: vec![hi], converged })
}

/// Water-filling under `K` interference caps; the cap multipliers are found by
/// the ellipsoid method and the power multiplier by an inner search.
/// `alpha[k][i]` is the interference sub-channel `i` causes per unit power at receiver `k`.
pub fn multi_cap_wf(lambda: &[f64], alpha: &[Vec<f64>], pt: f64, gamma: &[f64]) -> Result<WfAllocation> {
    check_lambda(lambda)?;
    check_budget("power budget", pt)?;
    let kk = alpha.len();
    if kk == 0 || gamma.len() != kk {
        return Err(Error::DimensionMismatch(format!("{} weight rows but {} caps", kk, gamma.len())));
    }
    for (row, &g) in alpha.iter().zip(gamma) {
        check_budget("interference cap", g)?;
        if row.len() != lambda.len() {
            return Err(Error::DimensionMismatch(format!(
                "weight row has {} entries for {} sub-channels",
                row.len(),
                lambda.len()
            )));
        }
        if let Some(bad) = row.iter().find(|&&a| !(a >= 0.0)) {
            return Err(Error::InvalidArgument(format!("interference weights must be >= 0, got {bad}")));
        }
    }
    let m = lambda.len();
    // A zero cap forbids every sub-channel that receiver can see.
    let open: Vec<usize> = (0..m)
        .filter(|&i| (0..kk).all(|k| gamma[k] > 0.0 || alpha[k][i] == 0.0))
        .collect();
    let mut out = WfAllocation { sigma: vec![0.0; m], nu: 0.0, mu: vec![0.0; kk], converged: true };
    if open.is_empty() {
        out.nu = lambda.iter().cloned().fold(0.0, f64::max);
        return Ok(out);
    }
    let lam: Vec<f64> = open.iter().map(|&i| lambda[i]).collect();
    let scatter = |out: &mut WfAllocation, sigma: &[f64]| {
        for (j, &i) in open.iter().enumerate() {
            out.sigma[i] = sigma[j];
        }
    };

    let free = standard_wf(&lam, pt)?;
    let interference =
        |k: usize, s: &[f64]| open.iter().zip(s).map(|(&i, s)| alpha[k][i] * s).sum::<f64>();
    // Caps that see no open sub-channel can never bind and keep mu = 0.
    let dual: Vec<usize> = (0..kk)
        .filter(|&k| gamma[k] > 0.0 && open.iter().any(|&i| alpha[k][i] > 0.0))
        .collect();
    if dual.iter().all(|&k| interference(k, &free.sigma) <= gamma[k]) {
        scatter(&mut out, &free.sigma);
        out.nu = free.nu;
        return Ok(out);
    }

    let c0 = free.nats(&lam);
    let lo = vec![0.0; dual.len()];
    let hi: Vec<f64> = dual
        .iter()
        .map(|&k| {
            let switch_off = open
                .iter()
                .filter(|&&i| alpha[k][i] > 0.0)
                .map(|&i| lambda[i] / alpha[k][i])
                .fold(0.0, f64::max);
            (c0 / gamma[k]).min(switch_off) * (1.0 + 1e-9) + 1e-300
        })
        .collect();

    // (dual value, nu, sigma) at a multiplier vector.
    let eval = |mu: &[f64]| {
        let base: Vec<f64> = open
            .iter()
            .map(|&i| dual.iter().zip(mu).map(|(&k, m)| alpha[k][i] * m).sum())
            .collect();
        let nu = min_nu(&lam, &base, pt);
        let sigma = levels(&lam, &base, nu);
        let lagr: f64 = lam
            .iter()
            .zip(&sigma)
            .zip(&base)
            .map(|((l, s), b)| (l * s).ln_1p() - (nu + b) * s)
            .sum();
        let caps: f64 = dual.iter().zip(mu).map(|(&k, m)| m * gamma[k]).sum();
        (lagr + nu * pt + caps, nu, sigma)
    };

    let mut ell = Ellipsoid::around_box(&lo, &hi);
    let mut best_dual = f64::INFINITY;
    let mut best_mu = vec![0.0; dual.len()];
    let mut best_nu = free.nu;
    let mut best_primal = -1.0;
    let mut best_sigma = vec![0.0; lam.len()];
    let max_iter = (500 * kk * kk).max(2000);
    for _ in 0..max_iter {
        if let Some(cut) = ell.box_cut(&lo, &hi) {
            if cut == Cut::Empty {
                break;
            }
            continue;
        }
        let mu: Vec<f64> = ell.c.iter().copied().collect();
        let (d, nu, sigma) = eval(&mu);
        let mut t: f64 = 1.0;
        for &k in &dual {
            let ik = interference(k, &sigma);
            if ik > gamma[k] {
                t = t.min(gamma[k] / ik);
            }
        }
        let scaled: Vec<f64> = sigma.iter().map(|s| s * t).collect();
        let primal: f64 = lam.iter().zip(&scaled).map(|(l, s)| (l * s).ln_1p()).sum();
        if primal > best_primal {
            best_primal = primal;
            best_sigma = scaled;
        }
        if d < best_dual {
            best_dual = d;
            best_mu = mu.clone();
            best_nu = nu;
        }
        if best_dual - best_primal <= 1e-11 * best_primal.abs() {
            break;
        }
        let g = DVector::from_iterator(
            dual.len(),
            dual.iter().map(|&k| gamma[k] - interference(k, &sigma)),
        );
        if ell.width(&g) <= 1e-300 || ell.cut(&g, d - best_dual) == Cut::Empty {
            break;
        }
    }
    // Stopping aims far tighter than this; the flag only reports a usable answer.
    let converged = best_dual - best_primal <= 1e-6 * best_primal.abs();
    if !converged {
        log::warn!(
            "multi-cap water-filling stopped with dual gap {:e} nats",
            best_dual - best_primal
        );
    }
    scatter(&mut out, &best_sigma);
    out.nu = best_nu;
    for (j, &k) in dual.iter().enumerate() {
        out.mu[k] = best_mu[j];
    }
    out.converged = converged;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bits(lambda: &[f64], sigma: &[f64]) -> f64 {
        lambda.iter().zip(sigma).map(|(l, s)| (1.0 + l * s).log2()).sum()
    }

    // Independent oracle: sweep the first power, give the rest to the second
    // sub-channel as far as both constraints allow, then refine around the best.
    fn two_channel_oracle(lambda: [f64; 2], alpha: [f64; 2], pt: f64, gamma: f64) -> f64 {
        let best_at = |s1: f64| {
            if s1 < 0.0 || s1 > pt || alpha[0] * s1 > gamma {
                return f64::NEG_INFINITY;
            }
            let mut s2 = pt - s1;
            if alpha[1] > 0.0 {
                s2 = s2.min((gamma - alpha[0] * s1) / alpha[1]);
            }
            bits(&lambda, &[s1, s2.max(0.0)])
        };
        let (mut lo, mut hi) = (0.0, pt);
        let mut best = f64::NEG_INFINITY;
        for _ in 0..8 {
            let step = (hi - lo) / 2000.0;
            let mut arg = lo;
            for j in 0..=2000 {
                let s1 = lo + step * j as f64;
                let v = best_at(s1);
                if v > best {
                    best = v;
                    arg = s1;
                }
            }
            lo = (arg - 2.0 * step).max(0.0);
            hi = (arg + 2.0 * step).min(pt);
        }
        best
    }

    #[test]
    fn standard_examples() {
        let a = standard_wf(&[1.0, 1.0], 2.0).unwrap();
        assert_eq!(a.sigma, vec![1.0, 1.0]);
        assert!((1.0 / a.nu - 2.0).abs() < 1e-15);
        let a = standard_wf(&[4.0, 1.0], 0.5).unwrap();
        assert!((a.sigma[0] - 0.5).abs() < 1e-15 && a.sigma[1] == 0.0);
        assert!((1.0 / a.nu - 0.75).abs() < 1e-15);
        assert_eq!(standard_wf(&[3.0], 0.0).unwrap().sigma, vec![0.0]);
        assert!(standard_wf(&[], 1.0).is_err());
    }

    #[test]
    fn standard_level_matches_bisection() {
        let lambda = [2.5, 0.7, 0.1, 1.3];
        for &p in &[0.01, 0.3, 1.0, 7.0, 100.0] {
            let a = standard_wf(&lambda, p).unwrap();
            let power = |w: f64| lambda.iter().map(|l| (w - 1.0 / l).max(0.0)).sum::<f64>();
            let (mut lo, mut hi) = (0.0, p + 100.0);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if power(mid) > p { hi = mid } else { lo = mid }
            }
            assert!((1.0 / a.nu - lo).abs() < 1e-9 * lo.max(1.0));
            assert!((a.power() - p).abs() <= 1e-9 * p.max(1.0));
        }
    }

    #[test]
    fn multilevel_examples() {
        assert_eq!(multilevel_wf(&[1.0, 1.0], &[0.0, 0.0], 0.5, 0.0).unwrap(), vec![1.0, 1.0]);
        let s = multilevel_wf(&[4.0, 1.0], &[1.0, 0.0], 0.4, 0.6).unwrap();
        assert!((s[0] - 0.75).abs() < 1e-15 && (s[1] - 1.5).abs() < 1e-15);
        assert_eq!(multilevel_wf(&[4.0, 1.0], &[1.0, 0.0], 5.0, 0.0).unwrap(), vec![0.0, 0.0]);
        assert!(multilevel_wf(&[1.0], &[0.0], 0.0, 1.0).is_err());
    }

    #[test]
    fn single_cap_slack_cap_is_standard() {
        let a = single_cap_wf(&[4.0, 1.0], &[0.2, 0.1], 2.0, 2.0 * 0.2).unwrap();
        assert_eq!(a.mu, vec![0.0]);
        assert_eq!(a.sigma, standard_wf(&[4.0, 1.0], 2.0).unwrap().sigma);
    }

    #[test]
    fn single_cap_zero_cap_switches_off() {
        let a = single_cap_wf(&[4.0, 1.0], &[1.0, 0.1], 2.0, 0.0).unwrap();
        assert!(a.sigma.iter().all(|&s| s == 0.0));
        let b = single_cap_wf(&[4.0, 1.0], &[1.0, 0.0], 2.0, 0.0).unwrap();
        assert_eq!(b.sigma[0], 0.0);
        assert!((b.sigma[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn single_cap_matches_oracle() {
        let a = single_cap_wf(&[4.0, 1.0], &[1.0, 0.1], 2.0, 0.3).unwrap();
        let oracle = two_channel_oracle([4.0, 1.0], [1.0, 0.1], 2.0, 0.3);
        assert!((a.bits(&[4.0, 1.0]) - oracle).abs() < 1e-4, "{} vs {oracle}", a.bits(&[4.0, 1.0]));
        assert!(a.power() <= 2.0 * (1.0 + 1e-7));
        assert!(a.sigma[0] + 0.1 * a.sigma[1] <= 0.3 * (1.0 + 1e-7));
    }

    #[test]
    fn single_cap_interference_falls_with_mu() {
        let lambda = [3.0, 1.2, 0.4];
        let alpha = [0.5, 0.05, 0.3];
        let mut last = f64::INFINITY;
        for j in 0..50 {
            let mu = 0.2 * j as f64;
            let base: Vec<f64> = alpha.iter().map(|a| a * mu).collect();
            let nu = min_nu(&lambda, &base, 4.0);
            let s = levels(&lambda, &base, nu);
            let i: f64 = s.iter().zip(&alpha).map(|(s, a)| s * a).sum();
            assert!(i <= last + 1e-12);
            last = i;
        }
    }

    #[test]
    fn multi_with_one_cap_matches_single() {
        let lambda = [3.1, 0.9, 0.2];
        let alpha = vec![0.4, 0.2, 0.05];
        for &(pt, gamma) in &[(1.0, 0.1), (10.0, 0.1), (100.0, 0.5), (0.1, 0.01)] {
            let a = single_cap_wf(&lambda, &alpha, pt, gamma).unwrap();
            let m = multi_cap_wf(&lambda, std::slice::from_ref(&alpha), pt, &[gamma]).unwrap();
            assert!((a.bits(&lambda) - m.bits(&lambda)).abs() < 1e-6, "{pt} {gamma}");
            assert!(m.converged);
        }
    }

    #[test]
    fn multi_huge_caps_and_zero_caps() {
        let lambda = [2.0, 1.0];
        let alpha = vec![vec![0.3, 0.1], vec![0.2, 0.4]];
        let m = multi_cap_wf(&lambda, &alpha, 3.0, &[1e9, 1e9]).unwrap();
        assert_eq!(m.sigma, standard_wf(&lambda, 3.0).unwrap().sigma);
        let z = multi_cap_wf(&lambda, &alpha, 3.0, &[0.0, 0.0]).unwrap();
        assert!(z.sigma.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn multi_is_feasible_and_slack_complementary() {
        let lambda = [2.7, 1.4, 0.6, 0.1];
        let alpha = vec![vec![0.3, 0.1, 0.05, 0.2], vec![0.02, 0.4, 0.3, 0.1], vec![0.1, 0.1, 0.1, 0.1]];
        let gamma = [0.2, 0.15, 1.0];
        let m = multi_cap_wf(&lambda, &alpha, 5.0, &gamma).unwrap();
        assert!(m.power() <= 5.0 * (1.0 + 1e-9));
        for k in 0..3 {
            let ik: f64 = m.sigma.iter().zip(&alpha[k]).map(|(s, a)| s * a).sum();
            assert!(ik <= gamma[k] * (1.0 + 1e-6));
            assert!(m.mu[k] * (gamma[k] - ik) <= 1e-6);
        }
        assert!(m.converged);
    }
}
