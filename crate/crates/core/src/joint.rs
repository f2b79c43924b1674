//! Fuzzy joint measurement of two dichotomic observables `X`, `Y` on a qubit,
//! its self-tomography over the calibration settings, and the inversion to a
//! sharp-marginal quasi-POVM whose inferred statistics may be negative.
//!
//! Outcomes `(x, y) ∈ {±1}²` are stored in the order `(+,+), (+,−), (−,+), (−,−)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::protocol::{
    calibration_settings, entangled_state, sample_categorical, ProtocolSetting, Sign,
};
use crate::quantum::{
    reflect, rotation_to_unitary, tensor, BlochVector, QubitOperator, VALIDATION_TOL,
};
use crate::reconstruction::{reconstruct_bloch, ReconstructionOptions, SettingProbabilities};

/// Quasi-POVM elements with minimum eigenvalue below `-NEGATIVITY_TOL` are nonclassical.
pub const NEGATIVITY_TOL: f64 = 1e-12;

/// Directions whose `γ` falls below this are reported unset by [`decompose`].
pub const DEGENERATE_GAMMA: f64 = 1e-12;

/// The four joint outcomes in storage order.
pub const OUTCOMES: [(Sign, Sign); 4] = [
    (Sign::Plus, Sign::Plus),
    (Sign::Plus, Sign::Minus),
    (Sign::Minus, Sign::Plus),
    (Sign::Minus, Sign::Minus),
];

pub fn outcome_index(x: Sign, y: Sign) -> usize {
    2 * (x == Sign::Minus) as usize + (y == Sign::Minus) as usize
}

/// `Δ̃(x,y) = (σ0 + S̃(x,y)·σ)/4` with
/// `S̃(x,y) = x γ_X S_X + y γ_Y S_Y + x y γ_XY S_XY`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointPovm {
    pub s_x: BlochVector,
    pub s_y: BlochVector,
    pub s_xy: BlochVector,
    pub gamma_x: f64,
    pub gamma_y: f64,
    pub gamma_xy: f64,
}

impl JointPovm {
    pub fn new(
        s_x: BlochVector,
        s_y: BlochVector,
        s_xy: BlochVector,
        gamma_x: f64,
        gamma_y: f64,
        gamma_xy: f64,
    ) -> Result<Self> {
        let j = JointPovm {
            s_x,
            s_y,
            s_xy,
            gamma_x,
            gamma_y,
            gamma_xy,
        };
        j.validate()?;
        Ok(j)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("s_x", self.s_x), ("s_y", self.s_y), ("s_xy", self.s_xy)] {
            if !v.is_finite() || (v.norm() - 1.0).abs() > VALIDATION_TOL {
                return Err(Error::param(name, format!("norm {} is not 1", v.norm())));
            }
        }
        for (name, g) in [
            ("gamma_x", self.gamma_x),
            ("gamma_y", self.gamma_y),
            ("gamma_xy", self.gamma_xy),
        ] {
            if !(g >= 0.0 && g.is_finite()) {
                return Err(Error::param(
                    name,
                    format!("{g} must be finite and nonnegative"),
                ));
            }
        }
        for v in outcome_vectors(self).vectors {
            if v.norm() > 1.0 + VALIDATION_TOL {
                return Err(Error::InvalidPovm { norm: v.norm() });
            }
        }
        Ok(())
    }

    /// The equivalent POVM under `S̃ → −S̃`, which the calibration cannot distinguish.
    pub fn flipped(&self) -> JointPovm {
        JointPovm {
            s_x: -self.s_x,
            s_y: -self.s_y,
            s_xy: -self.s_xy,
            ..*self
        }
    }

    /// Largest parameter difference to `other`, minimized over the global flip.
    pub fn flip_resolved_distance(&self, other: &JointPovm) -> f64 {
        let dist = |a: &JointPovm| {
            [
                (a.s_x - other.s_x).norm(),
                (a.s_y - other.s_y).norm(),
                (a.s_xy - other.s_xy).norm(),
                (a.gamma_x - other.gamma_x).abs(),
                (a.gamma_y - other.gamma_y).abs(),
                (a.gamma_xy - other.gamma_xy).abs(),
            ]
            .into_iter()
            .fold(0.0, f64::max)
        };
        dist(self).min(dist(&self.flipped()))
    }
}

/// One vector per outcome; a genuine POVM has norms at most 1.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutcomeVectorSet {
    pub vectors: [BlochVector; 4],
}

impl OutcomeVectorSet {
    pub fn get(&self, x: Sign, y: Sign) -> BlochVector {
        self.vectors[outcome_index(x, y)]
    }

    /// `‖Σ S̃(x,y)‖`, zero for a complete POVM.
    pub fn completeness_residual(&self) -> f64 {
        self.vectors
            .iter()
            .fold(BlochVector::ZERO, |acc, v| acc + *v)
            .norm()
    }

    pub fn max_norm(&self) -> f64 {
        self.vectors
            .iter()
            .map(BlochVector::norm)
            .fold(0.0, f64::max)
    }

    pub fn negated(&self) -> OutcomeVectorSet {
        OutcomeVectorSet {
            vectors: self.vectors.map(|v| -v),
        }
    }

    /// Largest per-outcome difference, minimized over the global flip.
    pub fn flip_resolved_distance(&self, other: &OutcomeVectorSet) -> f64 {
        let dist = |a: &OutcomeVectorSet| {
            (0..4)
                .map(|i| (a.vectors[i] - other.vectors[i]).norm())
                .fold(0.0, f64::max)
        };
        dist(self).min(dist(&self.negated()))
    }
}

/// Sharp-marginal quasi-POVM `(σ0 + S(x,y)·σ)/4`; norms may exceed 1.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuasiPovm {
    pub vectors: [BlochVector; 4],
}

impl QuasiPovm {
    pub fn get(&self, x: Sign, y: Sign) -> BlochVector {
        self.vectors[outcome_index(x, y)]
    }

    pub fn elements(&self) -> [QubitOperator; 4] {
        self.vectors.map(|v| QubitOperator::from_bloch(0.25, &v))
    }

    /// `(1 − max ‖S(x,y)‖)/4`.
    pub fn min_element_eigenvalue(&self) -> f64 {
        let max = self
            .vectors
            .iter()
            .map(BlochVector::norm)
            .fold(0.0, f64::max);
        0.25 * (1.0 - max)
    }

    pub fn is_nonclassical(&self) -> bool {
        self.min_element_eigenvalue() < -NEGATIVITY_TOL
    }
}

/// Sixteen entries `p(x1,y1,x2,y2)` for one setting, indexed by
/// `4 · outcome_index(x1,y1) + outcome_index(x2,y2)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointOutcomeTable {
    pub setting: ProtocolSetting,
    pub entries: [f64; 16],
}

/// Statistics of a genuine fuzzy joint POVM; entries are nonnegative.
pub type FuzzyJointTable = JointOutcomeTable;
/// Inferred statistics of a quasi-POVM; entries may be negative.
pub type SignedJointTable = JointOutcomeTable;

impl JointOutcomeTable {
    pub fn get(&self, x1: Sign, y1: Sign, x2: Sign, y2: Sign) -> f64 {
        self.entries[4 * outcome_index(x1, y1) + outcome_index(x2, y2)]
    }

    pub fn total(&self) -> f64 {
        self.entries.iter().sum()
    }

    pub fn min_entry(&self) -> (f64, [Sign; 4]) {
        let (i, v) =
            self.entries
                .iter()
                .enumerate()
                .fold(
                    (0, f64::INFINITY),
                    |(bi, bv), (i, &v)| if v < bv { (i, v) } else { (bi, bv) },
                );
        let (x1, y1) = OUTCOMES[i / 4];
        let (x2, y2) = OUTCOMES[i % 4];
        (v, [x1, y1, x2, y2])
    }

    /// `Σ_{y1,y2} p(x1,y1,x2,y2)` in the order `(+,+), (+,−), (−,+), (−,−)` of `(x1, x2)`.
    pub fn x_marginal(&self) -> [f64; 4] {
        self.marginal(|(x, _)| x)
    }

    /// `Σ_{x1,x2} p(x1,y1,x2,y2)` in the order of `(y1, y2)`.
    pub fn y_marginal(&self) -> [f64; 4] {
        self.marginal(|(_, y)| y)
    }

    fn marginal(&self, pick: impl Fn((Sign, Sign)) -> Sign) -> [f64; 4] {
        let mut out = [0.0; 4];
        for (i, &o1) in OUTCOMES.iter().enumerate() {
            for (k, &o2) in OUTCOMES.iter().enumerate() {
                let a = (pick(o1) == Sign::Minus) as usize;
                let b = (pick(o2) == Sign::Minus) as usize;
                out[2 * a + b] += self.entries[4 * i + k];
            }
        }
        out
    }

    pub fn max_abs_diff(&self, other: &JointOutcomeTable) -> f64 {
        (0..16)
            .map(|i| (self.entries[i] - other.entries[i]).abs())
            .fold(0.0, f64::max)
    }
}

pub fn outcome_vectors(j: &JointPovm) -> OutcomeVectorSet {
    OutcomeVectorSet {
        vectors: OUTCOMES.map(|(x, y)| {
            let (x, y) = (x.value(), y.value());
            j.s_x.scale(x * j.gamma_x)
                + j.s_y.scale(y * j.gamma_y)
                + j.s_xy.scale(x * y * j.gamma_xy)
        }),
    }
}

pub fn joint_povm_elements(j: &JointPovm) -> [QubitOperator; 4] {
    outcome_vectors(j)
        .vectors
        .map(|v| QubitOperator::from_bloch(0.25, &v))
}

/// `(1 + V1ᵀ R reflect(V2, b))/16` over all outcome pairs.
fn bilinear_table(vectors: &[BlochVector; 4], setting: &ProtocolSetting) -> JointOutcomeTable {
    let mut entries = [0.0; 16];
    for (i, v1) in vectors.iter().enumerate() {
        for (k, v2) in vectors.iter().enumerate() {
            let c = setting.rotation.bilinear(v1, &reflect(*v2, setting.basis));
            entries[4 * i + k] = (1.0 + c) / 16.0;
        }
    }
    JointOutcomeTable {
        setting: *setting,
        entries,
    }
}

pub fn fuzzy_joint_statistics(j: &JointPovm, setting: &ProtocolSetting) -> FuzzyJointTable {
    bilinear_table(&outcome_vectors(j).vectors, setting)
}

/// Born-rule evaluation on the two-qubit source with the rotation lifted to mode 1.
pub fn fuzzy_joint_statistics_oracle(
    j: &JointPovm,
    setting: &ProtocolSetting,
) -> Result<FuzzyJointTable> {
    let elements = joint_povm_elements(j);
    let u = rotation_to_unitary(&setting.rotation)?;
    let psi = entangled_state(setting.basis);
    let mut entries = [0.0; 16];
    for (i, e1) in elements.iter().enumerate() {
        let rotated = u.adjoint() * *e1 * u;
        for (k, e2) in elements.iter().enumerate() {
            entries[4 * i + k] = tensor(&rotated, e2).expectation(&psi).re;
        }
    }
    Ok(JointOutcomeTable {
        setting: *setting,
        entries,
    })
}

/// Tables for the six calibration settings, in calibration order.
pub fn calibration_tables(j: &JointPovm) -> [FuzzyJointTable; 6] {
    calibration_settings()
        .map(|(b, r)| fuzzy_joint_statistics(j, &ProtocolSetting::new(b, r.rotation())))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointTomographyOptions {
    pub reconstruction: ReconstructionOptions,
    /// Largest accepted `‖Σ S̃‖` after sign resolution.
    pub completeness_tolerance: f64,
}

impl Default for JointTomographyOptions {
    fn default() -> Self {
        JointTomographyOptions {
            reconstruction: ReconstructionOptions::default(),
            completeness_tolerance: 1e-9,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointTomographyReport {
    pub vectors: OutcomeVectorSet,
    pub completeness_residual: f64,
    /// Max difference between all sixteen entries of every input table and the
    /// tables predicted by `vectors`.
    pub table_residual: f64,
}

/// Reconstructs the four outcome vectors from the six calibration tables.
///
/// Each `S̃(x,y)` is recovered up to sign from the diagonal entries
/// `p̃(x,y,x,y)`; the relative signs are chosen to minimize the completeness
/// residual, with ties broken by agreement with the off-diagonal entries. The
/// remaining global flip is fixed by making the first nonzero component of
/// `S̃(+,+)` positive.
pub fn reconstruct_outcome_vectors(
    tables: &[FuzzyJointTable; 6],
    options: &JointTomographyOptions,
) -> Result<JointTomographyReport> {
    for (t, (b, r)) in tables.iter().zip(calibration_settings()) {
        if t.setting != ProtocolSetting::new(b, r.rotation()) {
            return Err(Error::param(
                "tables",
                "tables must follow the calibration setting order",
            ));
        }
    }

    let mut magnitudes = [BlochVector::ZERO; 4];
    for (o, slot) in magnitudes.iter_mut().enumerate() {
        let diag = |i: usize| 4.0 * tables[i].entries[5 * o];
        let p = SettingProbabilities::from_array(std::array::from_fn(diag));
        *slot = reconstruct_bloch(&p, &options.reconstruction)?.estimate;
    }

    const TIE: f64 = 1e-9;
    let mut best: Option<(OutcomeVectorSet, f64, f64)> = None;
    for mask in 0..8u8 {
        // outcome (+,+) keeps its sign; the global flip is handled below
        let signs = [1.0, sign_bit(mask, 0), sign_bit(mask, 1), sign_bit(mask, 2)];
        let candidate = OutcomeVectorSet {
            vectors: std::array::from_fn(|i| magnitudes[i].scale(signs[i])),
        };
        let completeness = candidate.completeness_residual();
        let off_diagonal = table_residual(&candidate, tables);
        let better = match &best {
            None => true,
            Some((_, c, o)) => {
                completeness < c - TIE || (completeness <= c + TIE && off_diagonal < *o)
            }
        };
        if better {
            best = Some((candidate, completeness, off_diagonal));
        }
    }
    let (vectors, completeness, table_residual) = best.expect("eight candidates");
    if completeness > options.completeness_tolerance {
        return Err(Error::InconsistentTomography {
            residual: completeness,
            tolerance: options.completeness_tolerance,
        });
    }
    Ok(JointTomographyReport {
        vectors: canonical_flip(vectors),
        completeness_residual: completeness,
        table_residual,
    })
}

fn sign_bit(mask: u8, bit: u8) -> f64 {
    if mask >> bit & 1 == 1 {
        -1.0
    } else {
        1.0
    }
}

fn table_residual(v: &OutcomeVectorSet, tables: &[FuzzyJointTable; 6]) -> f64 {
    tables
        .iter()
        .map(|t| bilinear_table(&v.vectors, &t.setting).max_abs_diff(t))
        .fold(0.0, f64::max)
}

fn canonical_flip(v: OutcomeVectorSet) -> OutcomeVectorSet {
    let lead = v.vectors[0]
        .0
        .into_iter()
        .find(|c| *c != 0.0)
        .unwrap_or(0.0);
    if lead < 0.0 {
        v.negated()
    } else {
        v
    }
}

/// A [`JointPovm`] recovered from outcome vectors. Directions whose `γ` vanishes
/// are unidentifiable; they are set to `(1, 0, 0)` and flagged.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub povm: JointPovm,
    /// Unset flags for `S_X`, `S_Y`, `S_XY`.
    pub unset: [bool; 3],
}

pub fn decompose(v: &OutcomeVectorSet) -> Decomposition {
    let pp = v.get(Sign::Plus, Sign::Plus);
    let split = |w: BlochVector| {
        let gamma = 0.5 * w.norm();
        if gamma < DEGENERATE_GAMMA {
            (BlochVector::new(1.0, 0.0, 0.0), 0.0, true)
        } else {
            (w.scale(0.5 / gamma), gamma, false)
        }
    };
    let (s_x, gamma_x, ux) = split(pp + v.get(Sign::Plus, Sign::Minus));
    let (s_y, gamma_y, uy) = split(pp + v.get(Sign::Minus, Sign::Plus));
    let (s_xy, gamma_xy, uxy) = split(pp + v.get(Sign::Minus, Sign::Minus));
    Decomposition {
        povm: JointPovm {
            s_x,
            s_y,
            s_xy,
            gamma_x,
            gamma_y,
            gamma_xy,
        },
        unset: [ux, uy, uxy],
    }
}

/// `S(x,y) = x S_X + y S_Y + x y (γ_XY / (γ_X γ_Y)) S_XY`.
pub fn invert(j: &JointPovm) -> Result<QuasiPovm> {
    if !(j.gamma_x > 0.0 && j.gamma_y > 0.0) {
        return Err(Error::InversionUndefined {
            gamma_x: j.gamma_x,
            gamma_y: j.gamma_y,
        });
    }
    let k = j.gamma_xy / (j.gamma_x * j.gamma_y);
    Ok(QuasiPovm {
        vectors: OUTCOMES.map(|(x, y)| {
            let (x, y) = (x.value(), y.value());
            j.s_x.scale(x) + j.s_y.scale(y) + j.s_xy.scale(x * y * k)
        }),
    })
}

pub fn inferred_distribution(q: &QuasiPovm, setting: &ProtocolSetting) -> SignedJointTable {
    bilinear_table(&q.vectors, setting)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableMinimum {
    pub value: f64,
    pub setting: ProtocolSetting,
    /// `(x1, y1, x2, y2)`.
    pub outcome: [Sign; 4],
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NegativityCertificate {
    /// Smallest inferred entry over the probed settings; `None` if none were given.
    pub min_entry: Option<TableMinimum>,
    pub min_eigenvalue: f64,
    pub nonclassical: bool,
}

pub fn negativity_report(q: &QuasiPovm, settings: &[ProtocolSetting]) -> NegativityCertificate {
    let min_entry = settings
        .iter()
        .map(|s| {
            let (value, outcome) = inferred_distribution(q, s).min_entry();
            TableMinimum {
                value,
                setting: *s,
                outcome,
            }
        })
        .fold(None, |best: Option<TableMinimum>, m| match best {
            Some(b) if b.value <= m.value => Some(b),
            _ => Some(m),
        });
    let min_eigenvalue = q.min_element_eigenvalue();
    NegativityCertificate {
        min_entry,
        min_eigenvalue,
        nonclassical: min_eigenvalue < -NEGATIVITY_TOL,
    }
}

/// Draws `shots` samples from a 16-outcome table and returns the counts.
pub fn sample_joint_counts(t: &FuzzyJointTable, shots: u64, seed: u64) -> [u64; 16] {
    let c = sample_categorical(&t.entries, shots, seed);
    std::array::from_fn(|i| c[i])
}

/// Relative frequencies with the identical-detector symmetry averaged in.
pub fn frequencies_from_counts(
    counts: &[u64; 16],
    setting: &ProtocolSetting,
) -> Result<FuzzyJointTable> {
    let shots: u64 = counts.iter().sum();
    if shots == 0 {
        return Err(Error::ZeroShots {
            setting: format!("{:?}", setting.basis),
        });
    }
    let f = |i: usize| counts[i] as f64 / shots as f64;
    let entries = std::array::from_fn(|i| {
        let (a, b) = (i / 4, i % 4);
        0.5 * (f(4 * a + b) + f(4 * b + a))
    });
    Ok(JointOutcomeTable {
        setting: *setting,
        entries,
    })
}
