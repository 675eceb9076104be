//! Channel sets, transmit covariances and the physical quantities every
//! precoder is scored by.

use std::fmt;

use crate::error::{Error, Result};
use crate::matkernel::{self, hermitian_part, trace_re, CMatrix};

/// Secondary channel `H`, cross channels `G_k`, power budget and interference caps.
#[derive(Debug, Clone)]
pub struct ChannelSet {
    h: CMatrix,
    g: Vec<CMatrix>,
    pt: f64,
    gamma: Vec<f64>,
}

fn full_rank(m: &CMatrix) -> bool {
    matkernel::svd(m).map(|f| f.rank() == m.nrows().min(m.ncols())).unwrap_or(false)
}

impl ChannelSet {
    pub fn new(h: CMatrix, g: Vec<CMatrix>, pt: f64, gamma: Vec<f64>) -> Result<Self> {
        if h.ncols() == 0 || h.nrows() == 0 {
            return Err(Error::DimensionMismatch("H must have at least one row and column".into()));
        }
        if g.len() != gamma.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} cross channels but {} interference caps",
                g.len(),
                gamma.len()
            )));
        }
        for (k, gk) in g.iter().enumerate() {
            if gk.ncols() != h.ncols() || gk.nrows() == 0 {
                return Err(Error::DimensionMismatch(format!(
                    "G_{k} is {}x{} but H has {} columns",
                    gk.nrows(),
                    gk.ncols(),
                    h.ncols()
                )));
            }
        }
        if !(pt >= 0.0) || !pt.is_finite() {
            return Err(Error::InvalidArgument(format!("power budget must be finite and >= 0, got {pt}")));
        }
        if let Some(bad) = gamma.iter().find(|&&x| !(x >= 0.0)) {
            return Err(Error::InvalidArgument(format!("interference caps must be >= 0, got {bad}")));
        }
        if !full_rank(&h) {
            return Err(Error::RankDeficient("secondary channel H".into()));
        }
        if let Some(k) = g.iter().position(|gk| !full_rank(gk)) {
            return Err(Error::RankDeficient(format!("cross channel G_{k}")));
        }
        Ok(ChannelSet { h, g, pt, gamma })
    }

    pub fn h(&self) -> &CMatrix {
        &self.h
    }

    pub fn g(&self) -> &[CMatrix] {
        &self.g
    }

    pub fn pt(&self) -> f64 {
        self.pt
    }

    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }

    pub fn mts(&self) -> usize {
        self.h.ncols()
    }

    pub fn mrs(&self) -> usize {
        self.h.nrows()
    }

    pub fn k(&self) -> usize {
        self.g.len()
    }

    /// Total number of primary receive antennas.
    pub fn mrp(&self) -> usize {
        self.g.iter().map(|gk| gk.nrows()).sum()
    }

    /// All cross channels stacked row-wise, in receiver order.
    pub fn stacked_g(&self) -> CMatrix {
        let mut out = CMatrix::zeros(self.mrp(), self.mts());
        let mut r = 0;
        for gk in &self.g {
            out.rows_mut(r, gk.nrows()).copy_from(gk);
            r += gk.nrows();
        }
        out
    }

    pub fn with_power_budget(&self, pt: f64) -> Self {
        ChannelSet { pt: pt.max(0.0), ..self.clone() }
    }

    pub fn with_caps(&self, gamma: Vec<f64>) -> Result<Self> {
        ChannelSet::new(self.h.clone(), self.g.clone(), self.pt, gamma)
    }

    /// The same link with every primary receiver removed.
    pub fn without_primaries(&self) -> Self {
        ChannelSet { g: Vec::new(), gamma: Vec::new(), ..self.clone() }
    }

    pub(crate) fn from_parts_unchecked(h: CMatrix, g: Vec<CMatrix>, pt: f64, gamma: Vec<f64>) -> Self {
        ChannelSet { h, g, pt, gamma }
    }
}

/// Eigen-factors `S = V diag(sigma) V^H` with `sigma > 0`.
#[derive(Debug, Clone)]
pub struct EigenFactors {
    pub v: CMatrix,
    pub sigma: Vec<f64>,
}

/// Hermitian positive semidefinite transmit covariance.
#[derive(Debug, Clone)]
pub struct Covariance {
    s: CMatrix,
    eig: Option<EigenFactors>,
}

impl Covariance {
    /// Validates `S` and stores its Hermitian part.
    pub fn new(s: CMatrix) -> Result<Self> {
        if s.nrows() != s.ncols() {
            return Err(Error::DimensionMismatch(format!("covariance is {}x{}", s.nrows(), s.ncols())));
        }
        let (_, d) = matkernel::herm_eig(&s)?;
        let tr = trace_re(&s);
        let min_eig = d.last().copied().unwrap_or(0.0);
        if min_eig < -1e-9 * tr.abs().max(f64::MIN_POSITIVE) && min_eig < -1e-300 {
            return Err(Error::NotPsd { min_eig });
        }
        Ok(Covariance { s: hermitian_part(&s), eig: None })
    }

    /// Builds `V diag(sigma) V^H`, dropping zero-power directions.
    pub fn from_factors(v: CMatrix, sigma: Vec<f64>) -> Result<Self> {
        if v.ncols() != sigma.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} directions but {} powers",
                v.ncols(),
                sigma.len()
            )));
        }
        if let Some(bad) = sigma.iter().find(|&&x| !(x >= 0.0)) {
            return Err(Error::NotPsd { min_eig: *bad });
        }
        let keep: Vec<usize> = (0..sigma.len()).filter(|&i| sigma[i] > 0.0).collect();
        let mut vk = CMatrix::zeros(v.nrows(), keep.len());
        for (j, &i) in keep.iter().enumerate() {
            vk.set_column(j, &v.column(i));
        }
        let sk: Vec<f64> = keep.iter().map(|&i| sigma[i]).collect();
        let dev = matkernel::max_abs(&(vk.adjoint() * &vk - matkernel::identity(keep.len())));
        if dev > 1e-10 {
            return Err(Error::NotOrthonormal(dev));
        }
        let s = hermitian_part(&(&vk * matkernel::real_diag(&sk) * vk.adjoint()));
        Ok(Covariance { s, eig: Some(EigenFactors { v: vk, sigma: sk }) })
    }

    pub fn zero(n: usize) -> Self {
        Covariance {
            s: CMatrix::zeros(n, n),
            eig: Some(EigenFactors { v: CMatrix::zeros(n, 0), sigma: Vec::new() }),
        }
    }

    /// Projects a nearly PSD Hermitian matrix onto the PSD cone and factors it.
    pub(crate) fn from_hermitian_clipped(s: &CMatrix) -> Self {
        let (v, d) = matkernel::herm_eig_unchecked(&hermitian_part(s));
        let dmax = d.first().copied().unwrap_or(0.0).max(0.0);
        let keep: Vec<usize> = (0..d.len()).filter(|&i| d[i] > 1e-14 * dmax && d[i] > 0.0).collect();
        let mut vk = CMatrix::zeros(v.nrows(), keep.len());
        for (j, &i) in keep.iter().enumerate() {
            vk.set_column(j, &v.column(i));
        }
        let sigma: Vec<f64> = keep.iter().map(|&i| d[i]).collect();
        let s = hermitian_part(&(&vk * matkernel::real_diag(&sigma) * vk.adjoint()));
        Covariance { s, eig: Some(EigenFactors { v: vk, sigma }) }
    }

    pub fn s(&self) -> &CMatrix {
        &self.s
    }

    pub fn eig(&self) -> Option<&EigenFactors> {
        self.eig.as_ref()
    }

    pub fn dim(&self) -> usize {
        self.s.nrows()
    }

    pub fn trace(&self) -> f64 {
        trace_re(&self.s)
    }

    /// Eigen-factors, computed on demand when not stored.
    pub fn factors(&self) -> EigenFactors {
        match &self.eig {
            Some(f) => f.clone(),
            None => Covariance::from_hermitian_clipped(&self.s).eig.expect("clipped covariance is factored"),
        }
    }

    /// Eigenvalues in nonincreasing order, zeros included.
    pub fn eigenvalues(&self) -> Vec<f64> {
        matkernel::herm_eig_unchecked(&self.s).1
    }

    pub fn scaled(&self, t: f64) -> Self {
        Covariance {
            s: self.s.scale(t),
            eig: self.eig.as_ref().map(|f| EigenFactors {
                v: f.v.clone(),
                sigma: f.sigma.iter().map(|x| x * t).collect(),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Optimal,
    MisoClosedForm,
    DSvd,
    PSvd,
    Hybrid(usize),
    White,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Optimal => write!(f, "optimal"),
            Method::MisoClosedForm => write!(f, "miso-closed-form"),
            Method::DSvd => write!(f, "d-svd"),
            Method::PSvd => write!(f, "p-svd"),
            Method::Hybrid(b) => write!(f, "hybrid({b})"),
            Method::White => write!(f, "white"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PrecoderResult {
    pub cov: Covariance,
    /// Bits per complex dimension.
    pub rate: f64,
    pub tx_power: f64,
    pub interference: Vec<f64>,
    pub method: Method,
    /// False when an iterative solver hit its iteration cap.
    pub converged: bool,
    /// Relative gap between the dual bound and the achieved rate, for dual solvers.
    pub duality_gap: Option<f64>,
}

impl PrecoderResult {
    pub fn evaluate(cov: Covariance, cs: &ChannelSet, method: Method) -> Self {
        let rate = matkernel::log2_det_i_plus(cs.h(), cov.s());
        let interference = cs.g().iter().map(|gk| interference_unchecked(cov.s(), gk)).collect();
        PrecoderResult {
            tx_power: cov.trace(),
            cov,
            rate,
            interference,
            method,
            converged: true,
            duality_gap: None,
        }
    }

    /// Largest relative violation of the power budget or of any cap (0 when feasible).
    pub fn violation(&self, cs: &ChannelSet) -> f64 {
        let mut v = (self.tx_power - cs.pt()).max(0.0) / cs.pt().max(1e-300);
        for (ik, gk) in self.interference.iter().zip(cs.gamma()) {
            v = v.max((ik - gk).max(0.0) / gk.max(1e-300));
        }
        v
    }
}

pub(crate) fn interference_unchecked(s: &CMatrix, gk: &CMatrix) -> f64 {
    trace_re(&(gk * s * gk.adjoint())).max(0.0)
}

/// `log2 det(I + H S H^H)` in bits.
pub fn achievable_rate(s: &Covariance, h: &CMatrix) -> Result<f64> {
    if h.ncols() != s.dim() {
        return Err(Error::DimensionMismatch(format!(
            "H has {} columns but S is {}x{}",
            h.ncols(),
            s.dim(),
            s.dim()
        )));
    }
    Ok(matkernel::log2_det_i_plus(h, s.s()))
}

/// `Tr(G_k S G_k^H)`.
pub fn interference_power(s: &Covariance, gk: &CMatrix) -> Result<f64> {
    if gk.ncols() != s.dim() {
        return Err(Error::DimensionMismatch(format!(
            "G_k has {} columns but S is {}x{}",
            gk.ncols(),
            s.dim(),
            s.dim()
        )));
    }
    Ok(interference_unchecked(s.s(), gk))
}

/// Splits every receiver into its single-antenna rows, each inheriting the
/// receiver's per-antenna cap.
pub fn expand_per_antenna(cs: &ChannelSet, gamma_per_antenna: &[f64]) -> Result<ChannelSet> {
    if gamma_per_antenna.len() != cs.k() {
        return Err(Error::DimensionMismatch(format!(
            "{} per-antenna caps for {} receivers",
            gamma_per_antenna.len(),
            cs.k()
        )));
    }
    let mut g = Vec::with_capacity(cs.mrp());
    let mut gamma = Vec::with_capacity(cs.mrp());
    for (gk, &cap) in cs.g().iter().zip(gamma_per_antenna) {
        for r in 0..gk.nrows() {
            g.push(gk.rows(r, 1).into_owned());
            gamma.push(cap);
        }
    }
    ChannelSet::new(cs.h().clone(), g, cs.pt(), gamma)
}
