//! Monte Carlo studies over replicates, run in parallel.
//!
//! Every replicate draws from its own keyed streams, so results do not depend
//! on the number of threads.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::d2d::{evaluate_awd_detailed, fit_d2d};
use crate::d2s::{average_prediction_error, fit_d2s};
use crate::error::{Error, Result};
use crate::truncation::TruncationChoice;

use super::config::{Case, CoefMode, SimConfig};
use super::generate::{generate_d2s, generate_gaussian_pairs, FeasibilityAudit, Framework};

/// Outcome of one distribution-response replicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AwdRecord {
    pub replicate: u64,
    pub awd: f64,
    /// New predictions that needed boundary projection.
    pub eta_events: usize,
    pub j: usize,
    pub k: usize,
}

/// Outcome of one scalar-response replicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApeRecord {
    pub replicate: u64,
    pub ape: f64,
    pub j: usize,
}

#[derive(Debug, Clone)]
pub struct AwdStudy {
    pub records: Vec<AwdRecord>,
    pub audit: FeasibilityAudit,
}

impl AwdStudy {
    pub fn awds(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.awd).collect()
    }

    /// Fraction of replicates with at least one projected prediction.
    pub fn eta_event_rate(&self) -> f64 {
        let hits = self.records.iter().filter(|r| r.eta_events > 0).count();
        hits as f64 / self.records.len().max(1) as f64
    }
}

/// Out-of-sample AWD of every replicate of a distribution-response case.
pub fn awd_study(cfg: &SimConfig) -> Result<AwdStudy> {
    cfg.validate()?;
    let fw = if cfg.case.is_framework() {
        Some(Framework::new(cfg)?)
    } else if matches!(cfg.case, Case::GaussLinear | Case::GaussQuadratic) {
        None
    } else {
        return Err(Error::InvalidInput(format!(
            "case {} has scalar responses; use the APE study",
            cfg.case
        )));
    };
    let out: Vec<(AwdRecord, FeasibilityAudit)> = (0..cfg.replicates as u64)
        .into_par_iter()
        .map(|rep| {
            let ds = match &fw {
                Some(fw) => fw.generate(cfg, rep)?,
                None => generate_gaussian_pairs(cfg, rep)?,
            };
            let fit = fit_d2d(&ds.train_x, &ds.train_y, &cfg.trunc)?;
            let ev = evaluate_awd_detailed(&fit, &ds.new_x, &ds.targets)?;
            Ok((
                AwdRecord {
                    replicate: rep,
                    awd: ev.awd,
                    eta_events: ev.eta_events(),
                    j: fit.j(),
                    k: fit.k(),
                },
                ds.audit,
            ))
        })
        .collect::<Result<_>>()?;
    let mut audit = FeasibilityAudit::default();
    let records = out
        .into_iter()
        .map(|(r, a)| {
            audit.merge(&a);
            r
        })
        .collect();
    Ok(AwdStudy { records, audit })
}

/// Out-of-sample APE of every replicate of a scalar-response case.
pub fn ape_study(cfg: &SimConfig) -> Result<Vec<ApeRecord>> {
    cfg.validate()?;
    if !cfg.case.is_scalar() {
        return Err(Error::InvalidInput(format!(
            "case {} has distribution responses; use the AWD study",
            cfg.case
        )));
    }
    (0..cfg.replicates as u64)
        .into_par_iter()
        .map(|rep| {
            let ds = generate_d2s(cfg, rep)?;
            let fit = fit_d2s(&ds.train_x, &ds.train_y, &cfg.trunc)?;
            let pred = ds
                .new_x
                .iter()
                .map(|x| fit.predict(x))
                .collect::<Result<Vec<_>>>()?;
            Ok(ApeRecord {
                replicate: rep,
                ape: average_prediction_error(&ds.oracle, &pred)?,
                j: fit.j(),
            })
        })
        .collect()
}

/// Mean squared operator error at one sample size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub n: usize,
    pub mse: f64,
    /// Standard error of `mse` over replicates.
    pub std_err: f64,
    pub replicates: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceStudy {
    pub rows: Vec<ConvergenceRow>,
    /// Least-squares slope of `ln mse` on `ln n`.
    pub slope: f64,
    /// Truncation used for both sides.
    pub j: usize,
}

/// Default sample sizes of the convergence study.
pub const CONVERGENCE_NS: [usize; 3] = [20, 100, 500];

/// Default truncation of the convergence study, fixed on both sides.
pub const CONVERGENCE_J: usize = 3;

/// Configuration of the convergence study: power-law coefficients, exact
/// quantiles, truncated normal means.
pub fn convergence_config(replicates: usize, seed: u64) -> SimConfig {
    SimConfig {
        case: Case::Tgauss,
        m: None,
        replicates,
        seed,
        coef: CoefMode::powerlaw_default(),
        distortion: false,
        trunc: TruncationChoice::fixed(CONVERGENCE_J, CONVERGENCE_J),
        ..SimConfig::default()
    }
}

/// Squared HS distance between the transported estimate and the generating
/// operator truncated at the fitted counts, averaged over replicates, for
/// each sample size in `ns`.
pub fn convergence_study(cfg: &SimConfig, ns: &[usize]) -> Result<ConvergenceStudy> {
    if ns.len() < 2 {
        return Err(Error::InvalidInput("need at least two sample sizes".into()));
    }
    let j = match cfg.trunc.method {
        crate::truncation::TruncMethod::Fixed { j, .. } => j,
        _ => {
            return Err(Error::InvalidInput(
                "the convergence study needs a fixed truncation".into(),
            ))
        }
    };
    let mut rows = Vec::with_capacity(ns.len());
    for &n in ns {
        let cfg_n = SimConfig { n, ..cfg.clone() };
        let fw = Framework::new(&cfg_n)?;
        let se: Vec<f64> = (0..cfg.replicates as u64)
            .into_par_iter()
            .map(|rep| {
                let (xs, ys, _) = fw.training(&cfg_n, rep)?;
                let fit = fit_d2d(&xs, &ys, &cfg_n.trunc)?;
                let est = fit.kernel().transport(fw.predictor_mean(), fw.response_mean())?;
                let truth = fw.truncated_kernel(fit.j(), fit.k())?;
                Ok(est.hs_distance(&truth)?.powi(2))
            })
            .collect::<Result<_>>()?;
        let r = se.len() as f64;
        let mse = se.iter().sum::<f64>() / r;
        let var = se.iter().map(|s| (s - mse).powi(2)).sum::<f64>() / (r - 1.0).max(1.0);
        rows.push(ConvergenceRow {
            n,
            mse,
            std_err: (var / r).sqrt(),
            replicates: se.len(),
        });
    }
    let pts: Vec<(f64, f64)> = rows.iter().map(|r| ((r.n as f64).ln(), r.mse.ln())).collect();
    Ok(ConvergenceStudy {
        slope: ls_slope(&pts),
        rows,
        j,
    })
}

fn ls_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// Linear-interpolation quantile (type 7) of a sample.
pub fn sample_quantile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    if v.is_empty() {
        return f64::NAN;
    }
    let h = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

pub fn median(values: &[f64]) -> f64 {
    sample_quantile(values, 0.5)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantiles() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert_eq!(sample_quantile(&[0.0, 10.0], 0.25), 2.5);
        assert!(median(&[]).is_nan());
    }

    #[test]
    fn slope_of_exact_power_law() {
        let pts: Vec<(f64, f64)> = [10.0f64, 100.0, 1000.0].iter().map(|n| (n.ln(), (3.0 / n).ln())).collect();
        assert!((ls_slope(&pts) + 1.0).abs() < 1e-12);
    }

    #[test]
    fn small_studies_run_and_are_reproducible() {
        let cfg = SimConfig {
            n: 20,
            m: Some(30),
            n_new: 5,
            replicates: 3,
            grid_m: 100,
            ..SimConfig::default()
        };
        let a = awd_study(&cfg).unwrap();
        let b = awd_study(&cfg).unwrap();
        assert_eq!(a.records, b.records);
        assert_eq!(a.audit.violations, 0);
        assert!(a.awds().iter().all(|&x| x > 0.0 && x < 1.0));

        let g = SimConfig { case: Case::GaussQuadratic, ..cfg.clone() };
        assert_eq!(awd_study(&g).unwrap().records.len(), 3);

        let s = SimConfig { case: Case::D2sGauss, trunc: TruncationChoice::cv(None), ..cfg.clone() };
        let r = ape_study(&s).unwrap();
        assert_eq!(r.len(), 3);
        assert!(awd_study(&s).is_err());
        assert!(ape_study(&cfg).is_err());
    }

    #[test]
    fn convergence_decreases() {
        let cfg = SimConfig { grid_m: 100, ..convergence_config(20, 1) };
        let st = convergence_study(&cfg, &[20, 200]).unwrap();
        assert!(st.rows[1].mse < st.rows[0].mse);
        assert!(st.slope < 0.0);
    }
}
