//! Click/no-click detectors illuminated by a two-mode squeezed vacuum.
//!
//! The no-click element is `(1 − p_d) Σ_n (1 − η)^n |n⟩⟨n|`, and the source
//! puts weight `(1 − ξ²) ξ^{2n}` on `|n⟩|n⟩`. Joint click statistics have a
//! closed form in `n̄ = 2ξ²/(1 − ξ²)`; the Fock-sum oracle evaluates the same
//! expectation term by term.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::protocol::{sample_counts, JointProbTable, ShotRecord};

/// Default cap on the number of Fock terms the oracle may sum.
pub const ORACLE_TERM_CAP: u64 = 1_000_000;

/// Slack used when validating probabilities and candidate roots.
const RANGE_SLACK: f64 = 1e-9;

/// Quantum efficiency and dark-count probability of an on/off detector.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OnOffParams {
    pub eta: f64,
    pub p_dark: f64,
}

impl OnOffParams {
    pub fn new(eta: f64, p_dark: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&eta) {
            return Err(Error::param("eta", format!("{eta} outside [0, 1]")));
        }
        if !(0.0..1.0).contains(&p_dark) {
            return Err(Error::param("p_dark", format!("{p_dark} outside [0, 1)")));
        }
        Ok(OnOffParams { eta, p_dark })
    }

    /// `⟨n|Δ(−)|n⟩`.
    pub fn no_click_probability(&self, n: u64) -> f64 {
        (1.0 - self.p_dark) * (1.0 - self.eta).powf(n as f64)
    }
}

/// Two-mode squeezed vacuum, parameterized by `ξ ∈ [0, 1)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SqueezedVacuumParams {
    pub xi: f64,
    pub nbar: f64,
}

impl SqueezedVacuumParams {
    pub fn from_xi(xi: f64) -> Result<Self> {
        Ok(SqueezedVacuumParams {
            xi,
            nbar: squeezed_mean_photons(xi)?,
        })
    }

    /// Inverts `n̄ = 2ξ²/(1 − ξ²)`.
    pub fn from_nbar(nbar: f64) -> Result<Self> {
        if !(nbar >= 0.0 && nbar.is_finite()) {
            return Err(Error::param(
                "nbar",
                format!("{nbar} must be finite and nonnegative"),
            ));
        }
        let xi = (nbar / (2.0 + nbar)).sqrt();
        Ok(SqueezedVacuumParams { xi, nbar })
    }

    pub fn xi_squared(&self) -> f64 {
        self.xi * self.xi
    }
}

/// Mean total photon number `2ξ²/(1 − ξ²)` of the two-mode squeezed vacuum.
pub fn squeezed_mean_photons(xi: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&xi) {
        return Err(Error::param("xi", format!("{xi} outside [0, 1)")));
    }
    let x = xi * xi;
    Ok(2.0 * x / (1.0 - x))
}

/// Joint click table; `+` is a click, `−` no click.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClickTable {
    pub mm: f64,
    pub pm: f64,
    pub mp: f64,
    pub pp: f64,
}

impl ClickTable {
    pub fn total(&self) -> f64 {
        self.mm + self.pm + self.mp + self.pp
    }

    pub fn to_joint(&self) -> JointProbTable {
        JointProbTable {
            pp: self.pp,
            pm: self.pm,
            mp: self.mp,
            mm: self.mm,
        }
    }

    pub fn from_joint(t: &JointProbTable) -> Self {
        ClickTable {
            mm: t.mm,
            pm: t.pm,
            mp: t.mp,
            pp: t.pp,
        }
    }

    pub fn max_abs_diff(&self, other: &ClickTable) -> f64 {
        [
            self.mm - other.mm,
            self.pm - other.pm,
            self.mp - other.mp,
            self.pp - other.pp,
        ]
        .into_iter()
        .map(f64::abs)
        .fold(0.0, f64::max)
    }
}

/// Closed-form click statistics.
pub fn click_probabilities_closed(d: &OnOffParams, s: &SqueezedVacuumParams) -> ClickTable {
    let keep = 1.0 - d.p_dark;
    let mm = keep * keep / (1.0 + s.nbar * d.eta * (1.0 - 0.5 * d.eta));
    let pm = keep / (1.0 + 0.5 * s.nbar * d.eta) - mm;
    ClickTable {
        mm,
        pm,
        mp: pm,
        pp: 1.0 - 2.0 * pm - mm,
    }
}

/// Photon-number cutoff and the exact weight of the discarded tail.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FockTruncation {
    pub n_max: u64,
    /// `Σ_{n > n_max} (1 − ξ²) ξ^{2n} = ξ^{2(n_max + 1)}`.
    pub tail_bound: f64,
}

impl FockTruncation {
    /// Smallest `n_max = ceil(ln(tol) / ln(ξ²))` whose tail is at most `tol`.
    pub fn for_tolerance(s: &SqueezedVacuumParams, tol: f64, cap: u64) -> Result<Self> {
        if tol.is_nan() || tol <= 0.0 {
            return Err(Error::param("tol", format!("{tol} must be positive")));
        }
        let x = s.xi_squared();
        if x == 0.0 {
            return Ok(FockTruncation {
                n_max: 0,
                tail_bound: 0.0,
            });
        }
        let raw = (tol.ln() / x.ln()).ceil();
        if raw.is_nan() || raw >= cap as f64 {
            return Err(Error::TruncationInfeasible {
                required: raw.min(u64::MAX as f64) as u64 + 1,
                cap,
            });
        }
        let n_max = raw.max(0.0) as u64;
        Ok(FockTruncation {
            n_max,
            tail_bound: x.powf((n_max + 1) as f64),
        })
    }
}

/// Term-by-term Fock sum of `⟨ξ|Δ(j) ⊗ Δ(k)|ξ⟩`, truncated so the omitted
/// weight is at most `tol`.
pub fn click_probabilities_oracle(
    d: &OnOffParams,
    s: &SqueezedVacuumParams,
    tol: f64,
) -> Result<ClickTable> {
    click_probabilities_oracle_with_cap(d, s, tol, ORACLE_TERM_CAP)
}

pub fn click_probabilities_oracle_with_cap(
    d: &OnOffParams,
    s: &SqueezedVacuumParams,
    tol: f64,
    cap: u64,
) -> Result<ClickTable> {
    let trunc = FockTruncation::for_tolerance(s, tol, cap)?;
    let x = s.xi_squared();
    let (mut mm, mut pm, mut pp) = (0.0, 0.0, 0.0);
    let mut weight = 1.0 - x;
    for n in 0..=trunc.n_max {
        let none = d.no_click_probability(n);
        let click = 1.0 - none;
        mm += weight * none * none;
        pm += weight * click * none;
        pp += weight * click * click;
        weight *= x;
    }
    Ok(ClickTable { mm, pm, mp: pm, pp })
}

/// Result of extracting `(η, p_d)` from a click table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OnOffFit {
    pub params: OnOffParams,
    /// Max entrywise difference between the fitted model and the input table.
    pub residual: f64,
    /// Real roots of the efficiency quadratic, before range selection.
    pub roots: Vec<f64>,
    /// First-order standard errors of `(η, p_d)` (finite-shot path only).
    pub statistical_sigma: Option<[f64; 2]>,
}

/// Recovers `(η, p_d)` from a click table at known `n̄`.
///
/// With `A = p(−,−)` and `B = p(−,−) + p(+,−)`, eliminating `p_d` leaves
/// `A(1 + n̄η − n̄η²/2) = B²(1 + n̄η/2)²`, a quadratic in `η`; then
/// `p_d = 1 − B(1 + n̄η/2)`.
pub fn fit_onoff(t: &ClickTable, nbar: f64) -> Result<OnOffFit> {
    validate_click_table(t)?;
    let (a, b) = fit_inputs(t);
    if !(nbar >= 0.0 && nbar.is_finite()) {
        return Err(Error::param(
            "nbar",
            format!("{nbar} must be finite and nonnegative"),
        ));
    }
    if nbar == 0.0 {
        return Err(Error::EtaUnidentifiable { p_dark: 1.0 - b });
    }
    if b <= 0.0 {
        return Err(Error::InconsistentTable {
            reason: "no-click marginal vanishes".into(),
        });
    }

    let roots = efficiency_roots(a, b, nbar);
    let mut best: Option<(OnOffParams, f64)> = None;
    for &root in &roots {
        if !(-RANGE_SLACK..=1.0 + RANGE_SLACK).contains(&root) {
            continue;
        }
        let eta = root.clamp(0.0, 1.0);
        let p_dark = 1.0 - b * (1.0 + 0.5 * nbar * eta);
        if !(-RANGE_SLACK..1.0).contains(&p_dark) {
            continue;
        }
        let params = OnOffParams {
            eta,
            p_dark: p_dark.max(0.0),
        };
        let source = SqueezedVacuumParams::from_nbar(nbar)?;
        let residual = click_probabilities_closed(&params, &source).max_abs_diff(t);
        if best.as_ref().is_none_or(|(_, r)| residual < *r) {
            best = Some((params, residual));
        }
    }
    let (params, residual) = best.ok_or_else(|| Error::InconsistentTable {
        reason: format!("no efficiency root in [0, 1] (roots {roots:?})"),
    })?;
    Ok(OnOffFit {
        params,
        residual,
        roots,
        statistical_sigma: None,
    })
}

fn validate_click_table(t: &ClickTable) -> Result<()> {
    for (name, v) in [
        ("p(-,-)", t.mm),
        ("p(+,-)", t.pm),
        ("p(-,+)", t.mp),
        ("p(+,+)", t.pp),
    ] {
        if !(-RANGE_SLACK..=1.0 + RANGE_SLACK).contains(&v) {
            return Err(Error::InconsistentTable {
                reason: format!("{name} = {v} outside [0, 1]"),
            });
        }
    }
    if (t.total() - 1.0).abs() > RANGE_SLACK {
        return Err(Error::InconsistentTable {
            reason: format!("entries sum to {}", t.total()),
        });
    }
    Ok(())
}

/// `(A, B)` with the two one-click entries averaged.
fn fit_inputs(t: &ClickTable) -> (f64, f64) {
    (t.mm, t.mm + 0.5 * (t.pm + t.mp))
}

fn efficiency_roots(a: f64, b: f64, nbar: f64) -> Vec<f64> {
    let b2 = b * b;
    let qa = 0.5 * a * nbar + 0.25 * b2 * nbar * nbar;
    let qb = nbar * (b2 - a);
    let qc = b2 - a;
    let disc = qb * qb - 4.0 * qa * qc;
    if disc < 0.0 {
        return Vec::new();
    }
    let sq = disc.sqrt();
    let q = -0.5 * (qb + if qb >= 0.0 { sq } else { -sq });
    if q == 0.0 {
        // qb = qc = 0: double root at η = 0
        return vec![0.0, 0.0];
    }
    let mut roots = vec![q / qa, qc / q];
    roots.sort_by(f64::total_cmp);
    roots
}

/// Samples a click table with the protocol sampler.
pub fn sample_click_counts(t: &ClickTable, shots: u64, seed: u64) -> ShotRecord {
    sample_counts(&t.to_joint(), shots, seed)
}

/// Fits click counts and attaches first-order standard errors.
pub fn fit_onoff_counts(record: &ShotRecord, nbar: f64) -> Result<OnOffFit> {
    let freq = ClickTable::from_joint(&record.frequencies()?);
    let mut fit = fit_onoff(&freq, nbar)?;
    fit.statistical_sigma = fit_sigma(&freq, &fit.params, nbar, record.shots as f64);
    Ok(fit)
}

/// Propagates multinomial covariance of `(A, B)` through the implicit
/// solution of the efficiency equation.
fn fit_sigma(t: &ClickTable, params: &OnOffParams, nbar: f64, shots: f64) -> Option<[f64; 2]> {
    let (a, b) = fit_inputs(t);
    let probs = [t.mm, t.pm, t.mp, t.pp];
    let u = [1.0, 0.0, 0.0, 0.0];
    let v = [1.0, 0.5, 0.5, 0.0];
    let cov = |x: &[f64; 4], y: &[f64; 4]| -> f64 {
        let exy: f64 = (0..4).map(|i| x[i] * y[i] * probs[i]).sum();
        let ex: f64 = (0..4).map(|i| x[i] * probs[i]).sum();
        let ey: f64 = (0..4).map(|i| y[i] * probs[i]).sum();
        (exy - ex * ey) / shots
    };
    let (vaa, vbb, vab) = (cov(&u, &u), cov(&v, &v), cov(&u, &v));

    let eta = params.eta;
    let lin = 1.0 + 0.5 * nbar * eta;
    let g_a = 1.0 + nbar * eta - 0.5 * nbar * eta * eta;
    let g_b = -2.0 * b * lin * lin;
    let g_eta = a * nbar * (1.0 - eta) - b * b * nbar * lin;
    if g_eta.abs() < 1e-14 {
        return None;
    }
    let deta_da = -g_a / g_eta;
    let deta_db = -g_b / g_eta;
    let dpd_da = -0.5 * b * nbar * deta_da;
    let dpd_db = -lin - 0.5 * b * nbar * deta_db;
    let var = |ga: f64, gb: f64| ga * ga * vaa + gb * gb * vbb + 2.0 * ga * gb * vab;
    Some([
        var(deta_da, deta_db).max(0.0).sqrt(),
        var(dpd_da, dpd_db).max(0.0).sqrt(),
    ])
}
