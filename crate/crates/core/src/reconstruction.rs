//! Detector-vector reconstruction from the six calibration probabilities.
//!
//! With the identity and cyclic rotations, the identical-pair statistics are
//! quadratic in `S`: the identity block gives the three squares `S_i²` and
//! the cyclic block gives the three pairwise products `S_i S_j`. Inversion
//! pivots on the largest square and divides the products through by it.

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::protocol::{
    calibration_settings, joint_statistics_closed, reduce_table, ProtocolSetting, ShotRecord,
    SYMMETRY_TOL,
};
use crate::quantum::{BlochVector, MeasurementBasis};

/// Robustness constant `K` in the bound `max error ≤ (K / pivot) · δ`.
///
/// Calibrated by a brute-force sweep over detectors with pivot ≥ 0.3 and
/// δ ≤ 1e-2, where the worst observed `error · pivot / δ` is about 0.9
/// (see `robustness_constant_covers_sweep`).
pub const ROBUSTNESS_CONSTANT: f64 = 2.0;

// Indices into the six probabilities, ordered x0, y0, z0, x1, y1, z1.
const SQUARE_PAIRS: [(usize, usize); 3] = [(0, 2), (0, 1), (1, 2)];

fn cross_pair(i: usize, j: usize) -> (usize, usize) {
    match (i.min(j), i.max(j)) {
        (0, 2) => (3, 5),
        (1, 2) => (4, 5),
        (0, 1) => (3, 4),
        _ => unreachable!("cross pair needs distinct axes"),
    }
}

/// The six reduced probabilities `p_{b,r}` = `p(+,+)` for basis `b` and rotation `R_r`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SettingProbabilities {
    /// Identity rotation, indexed x, y, z.
    pub r0: [f64; 3],
    /// Cyclic rotation, indexed x, y, z.
    pub r1: [f64; 3],
}

impl SettingProbabilities {
    /// Values in calibration order x0, y0, z0, x1, y1, z1.
    pub fn to_array(&self) -> [f64; 6] {
        [
            self.r0[0], self.r0[1], self.r0[2], self.r1[0], self.r1[1], self.r1[2],
        ]
    }

    pub fn from_array(a: [f64; 6]) -> Self {
        SettingProbabilities {
            r0: [a[0], a[1], a[2]],
            r1: [a[3], a[4], a[5]],
        }
    }

    pub fn get(&self, b: MeasurementBasis, r: usize) -> f64 {
        let block = if r == 0 { &self.r0 } else { &self.r1 };
        block[b as usize]
    }

    /// `S_i²` from the identity block.
    pub fn squares(&self) -> [f64; 3] {
        let p = self.to_array();
        SQUARE_PAIRS.map(|(a, b)| 2.0 * (p[a] + p[b]) - 1.0)
    }

    /// `S_i S_j` from the cyclic block, as `[S1S2, S1S3, S2S3]`.
    pub fn cross_products(&self) -> [f64; 3] {
        let p = self.to_array();
        [(0, 1), (0, 2), (1, 2)].map(|(i, j)| {
            let (a, b) = cross_pair(i, j);
            2.0 * (p[a] + p[b]) - 1.0
        })
    }

    fn cross(&self, i: usize, j: usize) -> f64 {
        let p = self.to_array();
        let (a, b) = cross_pair(i, j);
        2.0 * (p[a] + p[b]) - 1.0
    }

    pub fn max_abs_diff(&self, other: &SettingProbabilities) -> f64 {
        self.to_array()
            .iter()
            .zip(other.to_array().iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Six identical-pair probabilities for detector vector `s`.
pub fn forward_probabilities(s: &BlochVector) -> SettingProbabilities {
    let [s1, s2, s3] = s.0;
    let (q1, q2, q3) = (s1 * s1, s2 * s2, s3 * s3);
    let (s12, s23, s13) = (s1 * s2, s2 * s3, s1 * s3);
    SettingProbabilities {
        r0: [
            0.25 * (1.0 + q1 + q2 - q3),
            0.25 * (1.0 - q1 + q2 + q3),
            0.25 * (1.0 + q1 - q2 + q3),
        ],
        r1: [
            0.25 * (1.0 + s12 - s23 + s13),
            0.25 * (1.0 + s12 + s23 - s13),
            0.25 * (1.0 - s12 + s23 + s13),
        ],
    }
}

/// Jacobian of [`forward_probabilities`], rows in calibration order.
fn forward_jacobian(s: &BlochVector) -> [[f64; 3]; 6] {
    let [s1, s2, s3] = s.0;
    [
        [0.5 * s1, 0.5 * s2, -0.5 * s3],
        [-0.5 * s1, 0.5 * s2, 0.5 * s3],
        [0.5 * s1, -0.5 * s2, 0.5 * s3],
        [0.25 * (s2 + s3), 0.25 * (s1 - s3), 0.25 * (s1 - s2)],
        [0.25 * (s2 - s3), 0.25 * (s1 + s3), 0.25 * (s2 - s1)],
        [0.25 * (s3 - s2), 0.25 * (s3 - s1), 0.25 * (s2 + s1)],
    ]
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionOptions {
    /// Squared components in `[-epsilon, 0)` are clamped to zero; below is an error.
    pub epsilon: f64,
    /// Slack on the `[0, 1/2]` range of each input probability.
    pub probability_slack: f64,
}

impl Default for ReconstructionOptions {
    fn default() -> Self {
        ReconstructionOptions {
            epsilon: 1e-6,
            probability_slack: 1e-9,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Refinement {
    /// Whether the least-squares estimate replaced the closed-form one.
    pub accepted: bool,
    /// Largest per-component shift in units of the statistical sigma.
    pub shift_sigmas: f64,
    pub iterations: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionReport {
    /// Canonical representative of `±S`: the pivot component is nonnegative.
    pub estimate: BlochVector,
    /// 1-based index of the component used as divisor.
    pub pivot_axis: usize,
    /// Set when a negative square was raised to zero or the zero vector was returned.
    pub clamped: bool,
    /// `max |forward(estimate) − input|` over the six settings.
    pub residual: f64,
    /// First-order standard errors per component (finite-shot path only).
    pub statistical_sigma: Option<[f64; 3]>,
    pub refinement: Option<Refinement>,
}

/// Closed-form inversion of the six calibration probabilities.
pub fn reconstruct_bloch(
    p: &SettingProbabilities,
    options: &ReconstructionOptions,
) -> Result<ReconstructionReport> {
    let slack = options.probability_slack;
    for (i, v) in p.to_array().into_iter().enumerate() {
        if !(v >= -slack && v <= 0.5 + slack) {
            return Err(Error::param(
                "probabilities",
                format!("entry {i} = {v} outside [0, 1/2]"),
            ));
        }
    }

    let mut clamped = false;
    let mut squares = p.squares();
    for (axis, sq) in squares.iter_mut().enumerate() {
        if *sq < 0.0 {
            if *sq < -options.epsilon {
                return Err(Error::InconsistentStatistics {
                    axis: axis + 1,
                    value: *sq,
                    epsilon: options.epsilon,
                });
            }
            *sq = 0.0;
            clamped = true;
        }
    }

    let pivot = (0..3)
        .max_by(|&a, &b| squares[a].total_cmp(&squares[b]))
        .unwrap_or(2);
    let largest = squares[pivot];
    if largest < options.epsilon {
        if let Some(&cross) = p
            .cross_products()
            .iter()
            .find(|c| c.abs() > options.epsilon)
        {
            return Err(Error::DegenerateStatistics { cross });
        }
    }

    let estimate = if largest == 0.0 {
        clamped = true;
        BlochVector::ZERO
    } else {
        let sk = largest.sqrt();
        let mut s = [0.0; 3];
        for (i, c) in s.iter_mut().enumerate() {
            *c = if i == pivot {
                sk
            } else {
                p.cross(i, pivot) / sk
            };
        }
        BlochVector(s)
    };

    let residual = forward_probabilities(&estimate).max_abs_diff(p);
    Ok(ReconstructionReport {
        estimate,
        pivot_axis: pivot + 1,
        clamped,
        residual,
        statistical_sigma: None,
        refinement: None,
    })
}

/// Options for the finite-shot front end.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CountOptions {
    pub reconstruction: ReconstructionOptions,
    /// Allowed table asymmetry in units of `1/sqrt(shots)`, on top of [`SYMMETRY_TOL`].
    pub symmetry_sigmas: f64,
    /// Run the least-squares polish after the closed form.
    pub refine: bool,
    /// Largest accepted refinement shift, in statistical sigmas.
    pub max_refinement_sigmas: f64,
}

impl Default for CountOptions {
    fn default() -> Self {
        CountOptions {
            reconstruction: ReconstructionOptions::default(),
            symmetry_sigmas: 6.0,
            refine: false,
            max_refinement_sigmas: 5.0,
        }
    }
}

/// Symmetry-projected estimate `p̂ = (n(+,+) + n(−,−)) / 2N` and its variance.
pub fn estimate_probability(
    record: &ShotRecord,
    symmetry_sigmas: f64,
    label: &str,
) -> Result<(f64, f64)> {
    if record.shots == 0 {
        return Err(Error::ZeroShots {
            setting: label.to_string(),
        });
    }
    let n = record.shots as f64;
    let freq = record.frequencies()?;
    let q = reduce_table(&freq, SYMMETRY_TOL + symmetry_sigmas / n.sqrt())?;
    // 2q is a binomial fraction
    let var = (q * (1.0 - 2.0 * q)).max(0.0) / (2.0 * n);
    Ok((q, var))
}

/// Reconstruction from six shot records in calibration order
/// (x,R0), (y,R0), (z,R0), (x,R1), (y,R1), (z,R1).
pub fn reconstruct_from_counts(
    records: &[ShotRecord; 6],
    options: &CountOptions,
) -> Result<ReconstructionReport> {
    let mut q = [0.0; 6];
    let mut var = [0.0; 6];
    for (i, ((b, r), rec)) in calibration_settings()
        .iter()
        .zip(records.iter())
        .enumerate()
    {
        let label = format!("{b},{r:?}");
        let (qi, vi) = estimate_probability(rec, options.symmetry_sigmas, &label)?;
        q[i] = qi;
        var[i] = vi;
    }
    let p = SettingProbabilities::from_array(q);
    let mut report = reconstruct_bloch(&p, &options.reconstruction)?;
    let sigma = propagate_sigma(&p, &report, &var);
    report.statistical_sigma = sigma;

    if options.refine {
        let (refined, iterations) = refine_least_squares(&p, &report.estimate);
        let shift_sigmas = match sigma {
            Some(sig) => (0..3)
                .map(|i| {
                    let d = (refined[i] - report.estimate[i]).abs();
                    if sig[i] > 0.0 {
                        d / sig[i]
                    } else if d == 0.0 {
                        0.0
                    } else {
                        f64::INFINITY
                    }
                })
                .fold(0.0, f64::max),
            None => f64::INFINITY,
        };
        let accepted = shift_sigmas <= options.max_refinement_sigmas;
        if accepted {
            report.estimate = canonicalize(refined, report.pivot_axis - 1);
            report.residual = forward_probabilities(&report.estimate).max_abs_diff(&p);
        }
        report.refinement = Some(Refinement {
            accepted,
            shift_sigmas,
            iterations,
        });
    }
    Ok(report)
}

fn canonicalize(s: BlochVector, pivot: usize) -> BlochVector {
    if s[pivot] < 0.0 {
        -s
    } else {
        s
    }
}

/// First-order error propagation through the pivoted closed form.
fn propagate_sigma(
    p: &SettingProbabilities,
    report: &ReconstructionReport,
    var: &[f64; 6],
) -> Option<[f64; 3]> {
    let k = report.pivot_axis - 1;
    let sk = report.estimate[k];
    if sk <= 0.0 {
        return None;
    }
    let mut jac = [[0.0; 6]; 3];
    let (a, b) = SQUARE_PAIRS[k];
    jac[k][a] = 1.0 / sk;
    jac[k][b] = 1.0 / sk;
    for i in (0..3).filter(|&i| i != k) {
        let (c, d) = cross_pair(i, k);
        jac[i][c] = 2.0 / sk;
        jac[i][d] = 2.0 / sk;
        let dsk = -p.cross(i, k) / (sk * sk);
        jac[i][a] += dsk / sk;
        jac[i][b] += dsk / sk;
    }
    Some(jac.map(|row| {
        row.iter()
            .zip(var.iter())
            .map(|(j, v)| j * j * v)
            .sum::<f64>()
            .sqrt()
    }))
}

/// Levenberg–Marquardt on the six forward equations, constrained to `|S| ≤ 1`.
fn refine_least_squares(p: &SettingProbabilities, start: &BlochVector) -> (BlochVector, u32) {
    let target = p.to_array();
    let cost = |s: &BlochVector| -> f64 {
        let f = forward_probabilities(s).to_array();
        f.iter()
            .zip(target.iter())
            .map(|(a, b)| (a - b).powi(2))
            .sum()
    };
    let project = |s: BlochVector| -> BlochVector {
        let n = s.norm();
        if n > 1.0 {
            s.scale(1.0 / n)
        } else {
            s
        }
    };

    let mut s = *start;
    let mut current = cost(&s);
    let mut lambda = 1e-3;
    let mut iterations = 0;
    while iterations < 200 {
        iterations += 1;
        let f = forward_probabilities(&s).to_array();
        let jac = forward_jacobian(&s);
        let mut jtj = Matrix3::<f64>::zeros();
        let mut jtr = Vector3::<f64>::zeros();
        for (row, (fi, ti)) in jac.iter().zip(f.iter().zip(target.iter())) {
            let r = fi - ti;
            for a in 0..3 {
                jtr[a] += row[a] * r;
                for b in 0..3 {
                    jtj[(a, b)] += row[a] * row[b];
                }
            }
        }
        let mut improved = false;
        while lambda < 1e12 {
            let mut damped = jtj;
            for a in 0..3 {
                damped[(a, a)] += lambda * jtj[(a, a)].max(1e-12);
            }
            let Some(step) = damped.lu().solve(&(-jtr)) else {
                lambda *= 10.0;
                continue;
            };
            let candidate = project(BlochVector::new(
                s[0] + step[0],
                s[1] + step[1],
                s[2] + step[2],
            ));
            let c = cost(&candidate);
            if c < current {
                let moved = (candidate - s).norm();
                s = candidate;
                current = c;
                lambda = (lambda * 0.1).max(1e-12);
                improved = moved > 1e-15;
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    (s, iterations)
}

/// Error statistics of the identical-detector inversion applied to mismatched pairs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobustnessSummary {
    pub delta: f64,
    pub trials: usize,
    pub seed: u64,
    /// Sign-resolved `‖Ŝ ∓ S‖` per trial.
    pub errors: Vec<f64>,
    pub max_error: f64,
    pub mean_error: f64,
    pub median_error: f64,
    /// `C = ROBUSTNESS_CONSTANT / pivot`.
    pub constant: f64,
    pub within_bound: bool,
}

/// For each trial the second detector is `S + δS`, with `δS` uniform in the
/// ball of radius `delta`; the pair's exact statistics are then inverted as if
/// the detectors were identical. Trial `t` is seeded with `seed + t`.
pub fn perturbation_robustness(
    s: &BlochVector,
    delta: f64,
    trials: usize,
    seed: u64,
) -> Result<RobustnessSummary> {
    if !(0.0..=0.1).contains(&delta) {
        return Err(Error::param("delta", format!("{delta} outside [0, 0.1]")));
    }
    if s.norm() + delta > 1.0 + 1e-12 {
        return Err(Error::param(
            "delta",
            format!("|S| + delta = {} exceeds 1", s.norm() + delta),
        ));
    }
    if trials == 0 {
        return Err(Error::param("trials", "need at least one trial"));
    }

    let settings = calibration_settings().map(|(b, r)| ProtocolSetting::new(b, r.rotation()));
    // A mismatch δ moves each square by S_i δ_i, so vanishing components can
    // dip to −δ without the data being inconsistent.
    let options = ReconstructionOptions {
        epsilon: ReconstructionOptions::default().epsilon + delta,
        ..ReconstructionOptions::default()
    };
    let mut errors = Vec::with_capacity(trials);
    for t in 0..trials {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(t as u64));
        let offset = uniform_in_ball(&mut rng).scale(delta);
        let other = *s + offset;
        let mut q = [0.0; 6];
        for (qi, setting) in q.iter_mut().zip(settings.iter()) {
            let table = joint_statistics_closed(s, &other, setting)?;
            *qi = reduce_table(&table, SYMMETRY_TOL)?;
        }
        let report = reconstruct_bloch(&SettingProbabilities::from_array(q), &options)?;
        errors.push(report.estimate.sign_resolved_distance(s));
    }

    let max_error = errors.iter().copied().fold(0.0, f64::max);
    let mean_error = errors.iter().sum::<f64>() / trials as f64;
    let median_error = median(&errors);
    let pivot = s.0.iter().map(|c| c.abs()).fold(0.0, f64::max);
    let constant = if pivot > 0.0 {
        ROBUSTNESS_CONSTANT / pivot
    } else {
        f64::INFINITY
    };
    Ok(RobustnessSummary {
        delta,
        trials,
        seed,
        within_bound: max_error <= constant * delta + 1e-12,
        errors,
        max_error,
        mean_error,
        median_error,
        constant,
    })
}

fn uniform_in_ball(rng: &mut impl Rng) -> BlochVector {
    loop {
        let v = BlochVector::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        if v.norm() <= 1.0 {
            return v;
        }
    }
}

pub(crate) fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::{joint_statistics_oracle, sample_counts};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    const EXAMPLE: BlochVector = BlochVector::new(0.3, -0.4, 0.5);

    #[test]
    fn forward_uninformative() {
        let p = forward_probabilities(&BlochVector::ZERO);
        assert_eq!(p.to_array(), [0.25; 6]);
    }

    #[test]
    fn forward_worked_example() {
        let p = forward_probabilities(&EXAMPLE).to_array();
        let expected = [0.25, 0.33, 0.295, 0.3075, 0.1325, 0.2675];
        for (a, b) in p.iter().zip(expected.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn forward_projective_z() {
        let p = forward_probabilities(&BlochVector::new(0.0, 0.0, 1.0));
        assert_eq!(p.r0, [0.0, 0.5, 0.5]);
    }

    #[test]
    fn forward_matches_protocol_tables() {
        for s in [
            EXAMPLE,
            BlochVector::new(-0.7, 0.1, 0.6),
            BlochVector::new(0.0, 1.0, 0.0),
        ] {
            let p = forward_probabilities(&s).to_array();
            for (i, (b, r)) in calibration_settings().iter().enumerate() {
                let st = ProtocolSetting::new(*b, r.rotation());
                let closed =
                    reduce_table(&joint_statistics_closed(&s, &s, &st).unwrap(), SYMMETRY_TOL)
                        .unwrap();
                let oracle =
                    reduce_table(&joint_statistics_oracle(&s, &s, &st).unwrap(), SYMMETRY_TOL)
                        .unwrap();
                assert_abs_diff_eq!(p[i], closed, epsilon = 1e-12);
                assert_abs_diff_eq!(p[i], oracle, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn reconstruct_worked_example() {
        let p = forward_probabilities(&EXAMPLE);
        // S3 = sqrt(2(p_y0 + p_z0) − 1), S1 = (2(p_x1 + p_z1) − 1)/S3, S2 = (2(p_y1 + p_z1) − 1)/S3
        let s3 = (2.0 * (0.33 + 0.295) - 1.0f64).sqrt();
        assert_abs_diff_eq!(s3, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!((2.0 * (0.3075 + 0.2675) - 1.0) / s3, 0.3, epsilon = 1e-12);
        assert_abs_diff_eq!((2.0 * (0.1325 + 0.2675) - 1.0) / s3, -0.4, epsilon = 1e-12);

        let report = reconstruct_bloch(&p, &ReconstructionOptions::default()).unwrap();
        assert_eq!(report.pivot_axis, 3);
        assert!(!report.clamped);
        assert!(report.residual < 1e-12);
        for i in 0..3 {
            assert_abs_diff_eq!(report.estimate[i], EXAMPLE[i], epsilon = 1e-12);
        }
    }

    #[test]
    fn reconstruct_pivot_fallback() {
        let p = forward_probabilities(&BlochVector::new(1.0, 0.0, 0.0));
        assert_eq!(p.r0[1], 0.0);
        let report = reconstruct_bloch(&p, &ReconstructionOptions::default()).unwrap();
        assert_eq!(report.pivot_axis, 1);
        assert_eq!(report.estimate, BlochVector::new(1.0, 0.0, 0.0));
    }

    #[test]
    fn reconstruct_uninformative() {
        let p = SettingProbabilities::from_array([0.25; 6]);
        let report = reconstruct_bloch(&p, &ReconstructionOptions::default()).unwrap();
        assert_eq!(report.estimate, BlochVector::ZERO);
        assert!(report.clamped);
        let (plus, minus) = crate::quantum::povm_from_bloch(&report.estimate).unwrap();
        assert_eq!(plus, minus);
    }

    #[test]
    fn reconstruct_small_negative_square_is_clamped() {
        let mut a = forward_probabilities(&BlochVector::new(0.0, 0.6, 0.8)).to_array();
        // S1² = 2(p_x0 + p_z0) − 1 pushed to −2e-7
        a[0] -= 1e-7;
        let report = reconstruct_bloch(
            &SettingProbabilities::from_array(a),
            &ReconstructionOptions::default(),
        )
        .unwrap();
        assert!(report.clamped);
        assert!(
            report
                .estimate
                .sign_resolved_distance(&BlochVector::new(0.0, 0.6, 0.8))
                < 1e-6
        );
    }

    #[test]
    fn reconstruct_rejects_large_negative_square() {
        let mut a = forward_probabilities(&BlochVector::new(0.0, 0.6, 0.8)).to_array();
        a[0] -= 1e-3;
        let err = reconstruct_bloch(
            &SettingProbabilities::from_array(a),
            &ReconstructionOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::InconsistentStatistics { axis: 1, .. }));
    }

    #[test]
    fn reconstruct_rejects_degenerate_statistics() {
        let mut a = [0.25; 6];
        a[3] += 0.05;
        let err = reconstruct_bloch(
            &SettingProbabilities::from_array(a),
            &ReconstructionOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::DegenerateStatistics { .. }));
    }

    #[test]
    fn reconstruct_rejects_out_of_range_probability() {
        let mut a = [0.25; 6];
        a[2] = 0.6;
        assert!(reconstruct_bloch(
            &SettingProbabilities::from_array(a),
            &ReconstructionOptions::default()
        )
        .is_err());
    }

    fn exact_records(s: &BlochVector, shots: u64) -> [ShotRecord; 6] {
        calibration_settings().map(|(b, r)| {
            let t = joint_statistics_closed(s, s, &ProtocolSetting::new(b, r.rotation())).unwrap();
            let counts = t.entries().map(|p| (p * shots as f64).round() as u64);
            ShotRecord {
                counts,
                shots: counts.iter().sum(),
                seed: 0,
            }
        })
    }

    #[test]
    fn counts_near_exact_limit() {
        let report = reconstruct_from_counts(
            &exact_records(&EXAMPLE, 1_000_000_000),
            &CountOptions::default(),
        )
        .unwrap();
        assert!(report.estimate.sign_resolved_distance(&EXAMPLE) < 1e-4);
        let sigma = report.statistical_sigma.unwrap();
        assert!(sigma.iter().all(|s| *s > 0.0 && *s < 1e-4));
    }

    #[test]
    fn counts_reject_zero_shots() {
        let mut records = exact_records(&EXAMPLE, 1000);
        records[4] = ShotRecord {
            counts: [0; 4],
            shots: 0,
            seed: 0,
        };
        assert!(matches!(
            reconstruct_from_counts(&records, &CountOptions::default()),
            Err(Error::ZeroShots { .. })
        ));
    }

    #[test]
    fn sigma_matches_monte_carlo_spread() {
        // Propagated sigma should track the empirical spread within a factor ~1.5.
        let shots = 100_000;
        let mut estimates = Vec::new();
        let mut sigma = [0.0; 3];
        for seed in 0..200u64 {
            let records = calibration_settings().map(|(b, r)| {
                let st = ProtocolSetting::new(b, r.rotation());
                let t = joint_statistics_closed(&EXAMPLE, &EXAMPLE, &st).unwrap();
                sample_counts(
                    &t,
                    shots,
                    crate::protocol::derive_seed(seed, r.index() as u64 * 3 + b as u64),
                )
            });
            let rep = reconstruct_from_counts(&records, &CountOptions::default()).unwrap();
            sigma = rep.statistical_sigma.unwrap();
            estimates.push(rep.estimate);
        }
        for i in 0..3 {
            let mean = estimates.iter().map(|e| e[i]).sum::<f64>() / estimates.len() as f64;
            let sd = (estimates.iter().map(|e| (e[i] - mean).powi(2)).sum::<f64>()
                / (estimates.len() - 1) as f64)
                .sqrt();
            let ratio = sd / sigma[i];
            assert!(
                (0.67..1.5).contains(&ratio),
                "component {i}: empirical {sd} vs propagated {}",
                sigma[i]
            );
        }
    }

    #[test]
    fn refinement_stays_within_guard() {
        let shots = 10_000;
        let records = calibration_settings().map(|(b, r)| {
            let st = ProtocolSetting::new(b, r.rotation());
            let t = joint_statistics_closed(&EXAMPLE, &EXAMPLE, &st).unwrap();
            sample_counts(&t, shots, 17 + r.index() as u64 * 3 + b as u64)
        });
        let options = CountOptions {
            refine: true,
            ..CountOptions::default()
        };
        let closed = reconstruct_from_counts(&records, &CountOptions::default()).unwrap();
        let refined = reconstruct_from_counts(&records, &options).unwrap();
        let r = refined.refinement.unwrap();
        assert!(r.accepted);
        assert!(r.shift_sigmas <= 5.0);
        // least squares cannot do worse on its own objective
        let p = SettingProbabilities::from_array(
            records.map(|rec| estimate_probability(&rec, 6.0, "").unwrap().0),
        );
        let cost = |s: &BlochVector| -> f64 {
            forward_probabilities(s)
                .to_array()
                .iter()
                .zip(p.to_array().iter())
                .map(|(a, b)| (a - b).powi(2))
                .sum()
        };
        assert!(cost(&refined.estimate) <= cost(&closed.estimate) + 1e-18);
    }

    #[test]
    fn refinement_is_idle_on_exact_data() {
        let options = CountOptions {
            refine: true,
            ..CountOptions::default()
        };
        let report = reconstruct_from_counts(&exact_records(&EXAMPLE, 1 << 40), &options).unwrap();
        assert!(report.refinement.unwrap().accepted);
        assert!(report.estimate.sign_resolved_distance(&EXAMPLE) < 1e-6);
    }

    #[test]
    fn robustness_identical_detectors() {
        let summary = perturbation_robustness(&EXAMPLE, 0.0, 10, 3).unwrap();
        assert!(summary.max_error < 1e-12);
    }

    #[test]
    fn robustness_preconditions() {
        assert!(perturbation_robustness(&EXAMPLE, 0.2, 10, 0).is_err());
        assert!(perturbation_robustness(&BlochVector::new(0.0, 0.0, 0.95), 0.1, 10, 0).is_err());
        assert!(perturbation_robustness(&EXAMPLE, 1e-3, 0, 0).is_err());
    }

    #[test]
    fn robustness_scales_with_delta() {
        let big = perturbation_robustness(&EXAMPLE, 1e-3, 100, 11).unwrap();
        let small = perturbation_robustness(&EXAMPLE, 1e-4, 100, 11).unwrap();
        assert!(big.within_bound && small.within_bound);
        assert!(big.max_error <= 10.0 * 1e-3);
        let ratio = big.max_error / small.max_error;
        assert!((5.0..20.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn robustness_constant_covers_sweep() {
        // Brute-force sweep behind ROBUSTNESS_CONSTANT: worst observed
        // error·pivot/δ over random detectors with pivot ≥ 0.3.
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut worst: f64 = 0.0;
        for i in 0..1000 {
            let s = loop {
                let v = uniform_in_ball(&mut rng).scale(0.95);
                if v.0.iter().map(|c| c.abs()).fold(0.0, f64::max) >= 0.3 {
                    break v;
                }
            };
            let pivot = s.0.iter().map(|c| c.abs()).fold(0.0, f64::max);
            for delta in [1e-2, 1e-3, 1e-4] {
                if s.norm() + delta > 1.0 {
                    continue;
                }
                let summary = perturbation_robustness(&s, delta, 20, i).unwrap();
                worst = worst.max(summary.max_error * pivot / delta);
            }
        }
        assert!(
            worst <= ROBUSTNESS_CONSTANT,
            "worst normalized error {worst}"
        );
    }

    fn ball_vector(radius: f64) -> impl Strategy<Value = BlochVector> {
        (
            0.0..(2.0 * std::f64::consts::PI),
            -1.0f64..1.0,
            0.0f64..=1.0,
        )
            .prop_map(move |(phi, z, r)| {
                let rho = (1.0 - z * z).sqrt();
                BlochVector::new(rho * phi.cos(), rho * phi.sin(), z).scale(radius * r.cbrt())
            })
    }

    proptest! {
        #[test]
        fn sign_invariance(s in ball_vector(1.0)) {
            prop_assert_eq!(forward_probabilities(&s), forward_probabilities(&-s));
        }

        #[test]
        fn pivot_identities(s in ball_vector(1.0)) {
            let p = forward_probabilities(&s);
            let [c12, c13, c23] = p.cross_products();
            prop_assert!((c13 - s[0] * s[2]).abs() < 1e-12);
            prop_assert!((c23 - s[1] * s[2]).abs() < 1e-12);
            prop_assert!((c12 - s[0] * s[1]).abs() < 1e-12);
            let sq = p.squares();
            for i in 0..3 {
                prop_assert!((sq[i] - s[i] * s[i]).abs() < 1e-12);
            }
        }

        #[test]
        fn exact_round_trip(s in ball_vector(0.99)) {
            let report = reconstruct_bloch(&forward_probabilities(&s), &ReconstructionOptions::default()).unwrap();
            prop_assert!(report.estimate.sign_resolved_distance(&s) < 1e-9);
            prop_assert!(report.estimate[report.pivot_axis - 1] >= 0.0);
        }
    }
}
