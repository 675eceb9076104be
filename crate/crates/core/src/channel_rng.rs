//! Reproducible circularly-symmetric complex Gaussian channel draws.
//!
//! Every matrix comes from its own ChaCha8 stream keyed by
//! `(seed, trial, role)`, so trials can be generated in any order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::matkernel::{c, CMatrix};

/// Stream slot of a matrix inside one trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    H,
    /// Cross channel of primary receiver `k`.
    G(usize),
    /// Time-domain tap `l` of the secondary channel.
    HTap(usize),
    /// Time-domain tap `l` of the cross channel.
    GTap(usize),
    /// Primary link matrices used by the capacity-loss checks.
    Primary(usize),
}

impl Role {
    fn slot(self) -> u64 {
        match self {
            Role::H => 0,
            Role::G(k) => 1 + k as u64,
            Role::HTap(l) => 0x1000 + l as u64,
            Role::GTap(l) => 0x2000 + l as u64,
            Role::Primary(i) => 0x3000 + i as u64,
        }
    }
}

pub fn stream(seed: u64, trial: u64, role: Role) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((trial << 16) | role.slot());
    rng
}

/// Entries i.i.d. CN(0, var): real and imaginary parts each have variance var/2.
pub fn cscg_matrix(rows: usize, cols: usize, var: f64, seed: u64, trial: u64, role: Role) -> CMatrix {
    let mut rng = stream(seed, trial, role);
    cscg_from(&mut rng, rows, cols, var)
}

pub fn cscg_from<R: rand::Rng>(rng: &mut R, rows: usize, cols: usize, var: f64) -> CMatrix {
    let sd = (0.5 * var).sqrt();
    let mut m = CMatrix::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            m[(i, j)] = c(sd * re, sd * im);
        }
    }
    m
}
