use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{Scenario, ScenarioConfig};
use crate::channel_rng::{cscg_matrix, Role};
use crate::error::{Error, Result};
use crate::mimo::{self, HybridConfig};
use crate::model::{ChannelSet, PrecoderResult};
use crate::multichannel::{gen_ofdm_channels, multitone_optimal, multitone_svd_select, Tone, ToneSet};

/// One aggregated point of a rate curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub scenario: String,
    pub method: String,
    pub pt: f64,
    pub snr_db: f64,
    pub rate_mean: f64,
    pub rate_sem: f64,
    pub trials: usize,
    pub seed: u64,
}

/// Rate of one method on one draw at one power budget.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub method: String,
    pub pt: f64,
    pub rate: f64,
    /// Set when the method could not be applied and the rate was recorded as zero.
    pub flag: Option<String>,
}

#[derive(Debug, Clone, Default)]
pub struct ScenarioReport {
    pub rows: Vec<ResultRow>,
    pub warnings: Vec<String>,
}

/// Draw `trial` with `k` primary receivers; power budget is the first grid point.
pub fn gen_channels_with_k(cfg: &ScenarioConfig, k: usize, trial: u64) -> Result<ChannelSet> {
    let h = cscg_matrix(cfg.mrs, cfg.mts, cfg.var_h, cfg.seed, trial, Role::H);
    let g = (0..k).map(|i| cscg_matrix(cfg.mk, cfg.mts, cfg.var_g, cfg.seed, trial, Role::G(i))).collect();
    ChannelSet::new(h, g, cfg.pt_grid[0], vec![cfg.gamma; k])
}

pub fn gen_channels(cfg: &ScenarioConfig, trial: u64) -> Result<ChannelSet> {
    gen_channels_with_k(cfg, cfg.k, trial)
}

struct Collector {
    out: Vec<Sample>,
    pt: f64,
}

impl Collector {
    fn push(&mut self, method: impl Into<String>, rate: f64) {
        self.out.push(Sample { method: method.into(), pt: self.pt, rate, flag: None });
    }

    /// Records an unimplementable method as rate zero with a flag.
    fn push_result(&mut self, method: impl Into<String>, r: Result<PrecoderResult>) -> Result<()> {
        let method = method.into();
        match r {
            Ok(r) => self.push(method, r.rate),
            Err(e @ Error::NotImplementable { .. }) => {
                self.out.push(Sample { method, pt: self.pt, rate: 0.0, flag: Some(e.to_string()) })
            }
            Err(e) => return Err(e),
        }
        Ok(())
    }
}

fn first_column(cs: &ChannelSet) -> Result<ChannelSet> {
    let g = cs.g().iter().map(|gk| gk.columns(0, 1).into_owned()).collect();
    ChannelSet::new(cs.h().columns(0, 1).into_owned(), g, cs.pt(), cs.gamma().to_vec())
}

fn per_tone_rate(tones: &[Tone], pt: f64, gamma: f64, select: bool) -> Result<f64> {
    let n = tones.len() as f64;
    let ts = ToneSet::new(tones.to_vec(), pt * n, gamma)?;
    let alloc = if select { multitone_svd_select(&ts)? } else { multitone_optimal(&ts)? };
    Ok(alloc.rate() / n)
}

/// Every method's rate on draw `trial`, in the scenario's canonical order.
pub fn trial_samples(cfg: &ScenarioConfig, trial: u64) -> Result<Vec<Sample>> {
    let mut c = Collector { out: Vec::new(), pt: 0.0 };
    match cfg.scenario {
        Scenario::Multitone => {
            let tones = gen_ofdm_channels(cfg.mts, cfg.mrs, cfg.taps, cfg.tones, cfg.var_h, cfg.var_g, cfg.seed, trial)?;
            let flat = gen_ofdm_channels(cfg.mts, cfg.mrs, 1, 1, cfg.var_h, cfg.var_g, cfg.seed, trial)?;
            for &pt in &cfg.pt_grid {
                c.pt = pt;
                c.push("multitone-unconstrained", per_tone_rate(&tones, pt, f64::INFINITY, false)?);
                c.push("multitone-capacity", per_tone_rate(&tones, pt, cfg.gamma, false)?);
                c.push("multitone-select", per_tone_rate(&tones, pt, cfg.gamma, true)?);
                c.push("single-unconstrained", per_tone_rate(&flat, pt, f64::INFINITY, false)?);
                c.push("single-capacity", per_tone_rate(&flat, pt, cfg.gamma, false)?);
                c.push("single-select", per_tone_rate(&flat, pt, cfg.gamma, true)?);
            }
        }
        Scenario::VersusK => {
            for &pt in &cfg.pt_grid {
                c.pt = pt;
                for &k in &cfg.k_values {
                    let cs = gen_channels_with_k(cfg, k, trial)?.with_power_budget(pt);
                    c.push_result(format!("d-svd/k={k}"), mimo::dsvd(&cs))?;
                    c.push_result(format!("p-svd/k={k}"), mimo::psvd(&cs))?;
                    c.push_result(format!("best-hybrid/k={k}"), mimo::best_hybrid(&cs).map(|(_, r)| r))?;
                }
            }
        }
        _ => {
            let base = gen_channels(cfg, trial)?;
            for &pt in &cfg.pt_grid {
                c.pt = pt;
                let cs = base.with_power_budget(pt);
                match cfg.scenario {
                    Scenario::Capacity => {
                        let siso = first_column(&cs)?;
                        c.push_result("siso-unconstrained", mimo::unconstrained_capacity(&siso))?;
                        c.push_result("siso-capacity", mimo::optimal_covariance(&siso))?;
                        c.push_result("miso-unconstrained", mimo::unconstrained_capacity(&cs))?;
                        c.push_result("miso-capacity", mimo::optimal_covariance(&cs))?;
                    }
                    Scenario::Svd => {
                        c.push_result("capacity-unconstrained", mimo::unconstrained_capacity(&cs))?;
                        c.push_result("capacity", mimo::optimal_covariance(&cs))?;
                        c.push_result("d-svd", mimo::dsvd(&cs))?;
                        c.push_result("p-svd", mimo::psvd(&cs))?;
                        c.push_result("white", mimo::white_spectrum(&cs))?;
                    }
                    Scenario::HybridB => {
                        c.push_result("capacity-unconstrained", mimo::unconstrained_capacity(&cs))?;
                        c.push_result("capacity", mimo::optimal_covariance(&cs))?;
                        let bmax = (cs.mts() - 1).min(cs.mrp());
                        for b in 0..=bmax {
                            c.push_result(format!("hybrid-b{b}"), mimo::hybrid(&cs, HybridConfig { b }))?;
                        }
                        c.push_result("best-hybrid", mimo::best_hybrid(&cs).map(|(_, r)| r))?;
                    }
                    _ => {
                        c.push_result("capacity-unconstrained", mimo::unconstrained_capacity(&cs))?;
                        c.push_result("capacity", mimo::optimal_covariance(&cs))?;
                        c.push_result("d-svd", mimo::dsvd(&cs))?;
                        c.push_result("p-svd", mimo::psvd(&cs))?;
                        c.push_result("best-hybrid", mimo::best_hybrid(&cs).map(|(_, r)| r))?;
                        c.push_result("white", mimo::white_spectrum(&cs))?;
                    }
                }
            }
        }
    }
    Ok(c.out)
}

/// Mean and standard error of the mean (zero for a single sample).
pub fn mean_sem(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    if x.len() < 2 {
        return (mean, 0.0);
    }
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Monte-Carlo average of every method over `cfg.trials` draws. Rows are
/// ordered by method (in the scenario's canonical order) and then by power.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<ScenarioReport> {
    cfg.validate()?;
    let per_trial: Vec<Vec<Sample>> =
        (0..cfg.trials as u64).into_par_iter().map(|t| trial_samples(cfg, t)).collect::<Result<_>>()?;
    let layout = &per_trial[0];
    let mut order: Vec<&str> = Vec::new();
    for s in layout {
        if !order.contains(&s.method.as_str()) {
            order.push(&s.method);
        }
    }
    let mut report = ScenarioReport::default();
    let mut keyed = Vec::with_capacity(layout.len());
    for (i, s) in layout.iter().enumerate() {
        let rates: Vec<f64> = per_trial.iter().map(|t| t[i].rate).collect();
        let flagged = per_trial.iter().filter(|t| t[i].flag.is_some()).count();
        if flagged > 0 {
            report.warnings.push(format!(
                "{} at pt={}: {flagged} of {} draws recorded as rate 0 ({})",
                s.method,
                s.pt,
                cfg.trials,
                per_trial.iter().find_map(|t| t[i].flag.clone()).unwrap_or_default()
            ));
        }
        let (rate_mean, rate_sem) = mean_sem(&rates);
        let rank = order.iter().position(|m| *m == s.method).unwrap_or(usize::MAX);
        keyed.push((
            rank,
            ResultRow {
                scenario: cfg.scenario.id().to_string(),
                method: s.method.clone(),
                pt: s.pt,
                snr_db: 10.0 * s.pt.log10(),
                rate_mean,
                rate_sem,
                trials: cfg.trials,
                seed: cfg.seed,
            },
        ));
    }
    keyed.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.pt.total_cmp(&b.1.pt)));
    report.rows = keyed.into_iter().map(|(_, r)| r).collect();
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(scenario: Scenario, trials: usize) -> ScenarioConfig {
        let mut c = ScenarioConfig::preset(scenario);
        c.trials = trials;
        c
    }

    #[test]
    fn draws_are_reproducible() {
        let c = small(Scenario::HybridB, 1);
        let a = gen_channels(&c, 5).unwrap();
        let b = gen_channels(&c, 5).unwrap();
        assert_eq!(a.h(), b.h());
        assert_eq!(a.g(), b.g());
    }

    #[test]
    fn draw_moments() {
        let mut c = small(Scenario::Custom, 1);
        c.mts = 10;
        c.mrs = 10;
        let (mut h2, mut g2) = (0.0, 0.0);
        for t in 0..1000 {
            let cs = gen_channels(&c, t).unwrap();
            h2 += cs.h().norm_squared();
            g2 += cs.g()[0].norm_squared() * 10.0;
        }
        assert!((h2 / 1e5 - 1.0).abs() < 0.02, "{}", h2 / 1e5);
        assert!((g2 / 1e5 / 0.1 - 1.0).abs() < 0.02, "{}", g2 / 1e5);
    }

    #[test]
    fn rows_sorted_and_snr_consistent() {
        let r = run_scenario(&small(Scenario::Svd, 3)).unwrap();
        assert_eq!(r.rows.len(), 5 * 5);
        for w in r.rows.windows(2) {
            if w[0].method == w[1].method {
                assert!(w[0].pt < w[1].pt);
            }
        }
        for row in &r.rows {
            assert!((row.snr_db - 10.0 * row.pt.log10()).abs() < 1e-12);
        }
        assert!(r.warnings.is_empty());
    }

    #[test]
    fn method_ordering_per_draw() {
        for sc in [Scenario::Svd, Scenario::HybridB, Scenario::Custom] {
            let c = small(sc, 4);
            for t in 0..4 {
                let s = trial_samples(&c, t).unwrap();
                for pt in &c.pt_grid {
                    let at = |m: &str| s.iter().find(|x| x.method == m && x.pt == *pt).unwrap().rate;
                    let (free, cap) = (at("capacity-unconstrained"), at("capacity"));
                    assert!(free >= cap - 1e-6);
                    for x in s.iter().filter(|x| x.pt == *pt && !x.method.starts_with("capacity")) {
                        assert!(cap >= x.rate - 1e-6, "{sc:?} {} {} > {cap}", x.method, x.rate);
                    }
                }
            }
        }
    }

    #[test]
    fn miso_beats_siso_at_high_power() {
        let r = run_scenario(&small(Scenario::Capacity, 20)).unwrap();
        let at = |m: &str| r.rows.iter().rfind(|x| x.method == m).unwrap().rate_mean;
        assert!(at("miso-capacity") > at("siso-capacity") + 1.0);
    }

    #[test]
    fn unimplementable_projection_is_flagged() {
        let mut c = small(Scenario::VersusK, 2);
        c.k_values = vec![2, 4];
        let r = run_scenario(&c).unwrap();
        let row = r.rows.iter().find(|x| x.method == "p-svd/k=4").unwrap();
        assert_eq!(row.rate_mean, 0.0);
        assert_eq!(r.warnings.len(), 1);
        assert!(r.rows.iter().find(|x| x.method == "p-svd/k=2").unwrap().rate_mean > 0.0);
    }

    #[test]
    fn sem_shrinks_with_more_trials() {
        // Fixed-variance synthetic samples: alternating +-1.
        let x: Vec<f64> = (0..400).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let (_, s1) = mean_sem(&x[..200]);
        let (_, s2) = mean_sem(&x);
        assert!((s1 / s2 - 2f64.sqrt()).abs() < 0.01);
        assert_eq!(mean_sem(&[3.0]), (3.0, 0.0));
    }

    #[test]
    fn multitone_rows() {
        let mut c = small(Scenario::Multitone, 2);
        c.tones = 8;
        c.pt_grid = vec![10.0];
        let r = run_scenario(&c).unwrap();
        let at = |m: &str| r.rows.iter().find(|x| x.method == m).unwrap().rate_mean;
        assert!(at("multitone-unconstrained") >= at("multitone-capacity") - 1e-9);
        assert!(at("multitone-capacity") >= at("multitone-select") - 1e-9);
        assert!(at("single-capacity") >= at("single-select") - 1e-9);
    }
}
