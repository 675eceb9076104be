//! Analytical yardsticks: how much a primary link can lose to secondary
//! interference, and the high-power growth rate of a rate curve.

use crate::error::{Error, Result};
use crate::matkernel::{self, c, hermitian_part, CMatrix};
use crate::model::Covariance;

/// A primary link receiving interference from the secondary transmitter.
#[derive(Debug, Clone)]
pub struct PrimaryLink {
    /// `M_k x N_k` primary channel.
    h_k: CMatrix,
    /// `N_k x N_k` primary transmit covariance.
    s_k: Covariance,
    phi: f64,
    /// `M_k x M_ts` cross channel from the secondary transmitter.
    g_k: CMatrix,
    s: Covariance,
}

impl PrimaryLink {
    pub fn new(h_k: CMatrix, s_k: Covariance, phi: f64, g_k: CMatrix, s: Covariance) -> Result<Self> {
        if s_k.dim() != h_k.ncols() || g_k.nrows() != h_k.nrows() || s.dim() != g_k.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "H_k {:?}, S_k {}x{}, G_k {:?}, S {}x{}",
                h_k.shape(),
                s_k.dim(),
                s_k.dim(),
                g_k.shape(),
                s.dim(),
                s.dim()
            )));
        }
        if !(phi > 0.0) || !phi.is_finite() {
            return Err(Error::InvalidArgument(format!("noise power must be positive, got {phi}")));
        }
        Ok(PrimaryLink { h_k, s_k, phi, g_k, s })
    }

    /// Interference power at the primary receiver, `tr(G_k S G_k^H)`.
    pub fn interference(&self) -> f64 {
        matkernel::trace_re(&(&self.g_k * self.s.s() * self.g_k.adjoint()))
    }

    pub fn m_k(&self) -> usize {
        self.h_k.nrows()
    }

    pub fn n_k(&self) -> usize {
        self.h_k.ncols()
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }
}

/// Worst-case primary capacity loss when the received interference power is
/// at most `gamma`: `min(M_k, N_k) log2(1 + gamma/phi)`.
pub fn capacity_loss_bound(m_k: usize, n_k: usize, gamma: f64, phi: f64) -> f64 {
    m_k.min(n_k) as f64 * (gamma / phi).ln_1p() / std::f64::consts::LN_2
}

/// Primary rate without interference minus the rate with it, treating the
/// interference as Gaussian noise.
pub fn capacity_loss_actual(p: &PrimaryLink) -> Result<f64> {
    let m = p.m_k();
    let q = hermitian_part(&(&p.g_k * p.s.s() * p.g_k.adjoint()));
    let noise = q + matkernel::identity(m) * c(p.phi, 0.0);
    let w = matkernel::inv_sqrt_psd(&noise)?;
    let clean = p.h_k.scale(1.0 / p.phi.sqrt());
    let c2 = matkernel::log2_det_i_plus(&clean, p.s_k.s());
    let c1 = matkernel::log2_det_i_plus(&(w * &p.h_k), p.s_k.s());
    Ok((c2 - c1).max(0.0))
}

/// Least-squares slope of `rate` against `log2 P` over the top decade of
/// `grid`; the last two points are used when the top decade holds only one.
pub fn slope_from_samples(grid: &[f64], rates: &[f64]) -> Result<f64> {
    if grid.len() != rates.len() {
        return Err(Error::DimensionMismatch(format!("{} grid points, {} rates", grid.len(), rates.len())));
    }
    if grid.len() < 2 || grid.iter().any(|p| !(*p > 0.0)) || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("grid must hold at least two increasing positive powers".into()));
    }
    let (first, last) = (grid[0], grid[grid.len() - 1]);
    if last < 100.0 * first * (1.0 - 1e-12) {
        return Err(Error::InvalidArgument(format!("grid [{first}, {last}] spans less than two decades")));
    }
    let mut start = grid.iter().position(|p| *p >= last / 10.0 * (1.0 - 1e-12)).unwrap_or(0);
    if grid.len() - start < 2 {
        start = grid.len() - 2;
    }
    let x: Vec<f64> = grid[start..].iter().map(|p| p.log2()).collect();
    let y = &rates[start..];
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    Ok(sxy / sxx)
}

pub fn multiplexing_slope<F>(rate_fn: F, grid: &[f64]) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
{
    let rates = grid.iter().map(|&p| rate_fn(p)).collect::<Result<Vec<_>>>()?;
    slope_from_samples(grid, &rates)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel_rng::{cscg_matrix, Role};
    use crate::matkernel::from_real;

    fn scalar_link(q: f64) -> PrimaryLink {
        let one = from_real(1, 1, &[1.0]);
        let s = Covariance::new(from_real(1, 1, &[q])).unwrap();
        PrimaryLink::new(one.clone(), Covariance::new(one.clone()).unwrap(), 1.0, one, s).unwrap()
    }

    #[test]
    fn bound_values() {
        assert_eq!(capacity_loss_bound(3, 3, 0.0, 1.0), 0.0);
        assert!((capacity_loss_bound(1, 1, 2.0, 2.0) - 1.0).abs() < 1e-15);
        assert!((capacity_loss_bound(2, 3, 3.0, 1.0) - 4.0).abs() < 1e-14);
    }

    #[test]
    fn scalar_loss() {
        assert_eq!(capacity_loss_actual(&scalar_link(0.0)).unwrap(), 0.0);
        let expect = 1.0 - 1.5f64.log2();
        assert!((capacity_loss_actual(&scalar_link(1.0)).unwrap() - expect).abs() < 1e-14);
    }

    #[test]
    fn loss_grows_with_interference() {
        let mut prev = -1.0;
        for t in [0.0, 0.5, 1.0, 2.0] {
            let l = capacity_loss_actual(&scalar_link(t)).unwrap();
            assert!(l >= prev);
            prev = l;
        }
    }

    #[test]
    fn random_links_obey_bound() {
        for trial in 0..200 {
            let (mk, nk, mts) = (1 + trial as usize % 3, 1 + (trial as usize / 3) % 3, 3);
            let h_k = cscg_matrix(mk, nk, 1.0, 11, trial, Role::Primary(0));
            let a = cscg_matrix(nk, nk, 1.0, 11, trial, Role::Primary(1));
            let s_k = Covariance::new(hermitian_part(&(&a * a.adjoint()))).unwrap();
            let g_k = cscg_matrix(mk, mts, 0.1, 11, trial, Role::Primary(2));
            let b = cscg_matrix(mts, mts, 1.0, 11, trial, Role::Primary(3));
            let s = Covariance::new(hermitian_part(&(&b * b.adjoint()))).unwrap();
            let link = PrimaryLink::new(h_k, s_k, 0.5, g_k, s).unwrap();
            let loss = capacity_loss_actual(&link).unwrap();
            assert!(loss <= capacity_loss_bound(mk, nk, link.interference(), 0.5) + 1e-12);
        }
    }

    #[test]
    fn slope_of_known_curves() {
        let grid = [1.0, 10.0, 100.0, 1000.0];
        let s = multiplexing_slope(|p| Ok(2.5 * p.log2()), &grid).unwrap();
        assert!((s - 2.5).abs() < 1e-12);
        let s = multiplexing_slope(|_| Ok(3.0), &grid).unwrap();
        assert!(s.abs() < 1e-12);
        assert!(slope_from_samples(&[1.0, 10.0], &[0.0, 1.0]).is_err());
        assert!(slope_from_samples(&[1.0, 100.0], &[0.0, 1.0]).is_ok());
    }

    #[test]
    fn slope_ignores_low_power_curvature() {
        let grid = [1.0, 10.0, 100.0, 300.0, 1000.0];
        let rates: Vec<f64> = grid.iter().map(|p: &f64| if *p < 100.0 { 0.0 } else { p.log2() }).collect();
        assert!((slope_from_samples(&grid, &rates).unwrap() - 1.0).abs() < 1e-12);
    }
}
