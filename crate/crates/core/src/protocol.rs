//! Entangled-source calibration protocol: source states, joint statistics of
//! two detector copies, table reduction and finite-shot sampling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quantum::{
    povm_from_bloch, reflect, rotation_to_unitary, tensor, BlochVector, MeasurementBasis,
    Rotation3, TwoQubitState,
};

/// Default tolerance for the identical-detector symmetry check in [`reduce_table`].
pub const SYMMETRY_TOL: f64 = 1e-9;

/// Dichotomic outcome label.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sign {
    #[serde(rename = "+")]
    Plus,
    #[serde(rename = "-")]
    Minus,
}

impl Sign {
    pub const ALL: [Sign; 2] = [Sign::Plus, Sign::Minus];

    pub fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Sign::Plus => "+",
            Sign::Minus => "-",
        }
    }
}

/// Source basis plus the calibration rotation inserted in mode 1.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtocolSetting {
    pub basis: MeasurementBasis,
    pub rotation: Rotation3,
}

impl ProtocolSetting {
    pub fn new(basis: MeasurementBasis, rotation: Rotation3) -> Self {
        ProtocolSetting { basis, rotation }
    }
}

/// Which of the two calibration rotations (identity or cyclic) a setting uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RotationChoice {
    R0,
    R1,
}

impl RotationChoice {
    pub const ALL: [RotationChoice; 2] = [RotationChoice::R0, RotationChoice::R1];

    pub fn rotation(self) -> Rotation3 {
        match self {
            RotationChoice::R0 => Rotation3::identity(),
            RotationChoice::R1 => Rotation3::cyclic(),
        }
    }

    pub fn index(self) -> usize {
        match self {
            RotationChoice::R0 => 0,
            RotationChoice::R1 => 1,
        }
    }
}

/// The six calibration settings in the order (x,R0), (y,R0), (z,R0), (x,R1), (y,R1), (z,R1).
pub fn calibration_settings() -> [(MeasurementBasis, RotationChoice); 6] {
    let mut out = [(MeasurementBasis::X, RotationChoice::R0); 6];
    for (i, r) in RotationChoice::ALL.into_iter().enumerate() {
        for (j, b) in MeasurementBasis::ALL.into_iter().enumerate() {
            out[3 * i + j] = (b, r);
        }
    }
    out
}

/// Joint outcome distribution of the two detectors for one setting.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointProbTable {
    pub pp: f64,
    pub pm: f64,
    pub mp: f64,
    pub mm: f64,
}

impl JointProbTable {
    /// Entries in sampling order (++, +−, −+, −−).
    pub fn entries(&self) -> [f64; 4] {
        [self.pp, self.pm, self.mp, self.mm]
    }

    pub fn from_entries(e: [f64; 4]) -> Self {
        JointProbTable {
            pp: e[0],
            pm: e[1],
            mp: e[2],
            mm: e[3],
        }
    }

    pub fn get(&self, a1: Sign, a2: Sign) -> f64 {
        match (a1, a2) {
            (Sign::Plus, Sign::Plus) => self.pp,
            (Sign::Plus, Sign::Minus) => self.pm,
            (Sign::Minus, Sign::Plus) => self.mp,
            (Sign::Minus, Sign::Minus) => self.mm,
        }
    }

    pub fn total(&self) -> f64 {
        self.entries().iter().sum()
    }

    /// Largest departure from `p(−,−) = p(+,+)`, `p(+,−) = p(−,+) = 1/2 − p(+,+)`.
    pub fn symmetry_violation(&self) -> f64 {
        let half = 0.5 - 0.5 * (self.pp + self.mm);
        [
            (self.pp - self.mm).abs(),
            (self.pm - self.mp).abs(),
            (0.5 * (self.pm + self.mp) - half).abs(),
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }

    fn with_correlation(c: f64) -> Self {
        let same = 0.25 * (1.0 + c);
        let diff = 0.25 * (1.0 - c);
        JointProbTable {
            pp: same,
            pm: diff,
            mp: diff,
            mm: same,
        }
    }
}

/// Maximally entangled source state for basis `b`, in the σz product basis.
///
/// z ↦ Φ+ = (|00⟩+|11⟩)/√2, y ↦ Φ− = (|00⟩−|11⟩)/√2, x ↦ Ψ+ = (|01⟩+|10⟩)/√2.
/// These are the phase choices under which the correlation seen by the two
/// detectors is `S1 · reflect(S2, b)`.
pub fn entangled_state(b: MeasurementBasis) -> TwoQubitState {
    match b {
        MeasurementBasis::Z => TwoQubitState::bell(1.0, 0.0, 0.0, 1.0),
        MeasurementBasis::Y => TwoQubitState::bell(1.0, 0.0, 0.0, -1.0),
        MeasurementBasis::X => TwoQubitState::bell(0.0, 1.0, 1.0, 0.0),
    }
}

/// Correlation `S1ᵀ R reflect(S2, b)` entering every joint table.
pub fn correlation(s1: &BlochVector, s2: &BlochVector, setting: &ProtocolSetting) -> f64 {
    setting.rotation.bilinear(s1, &reflect(*s2, setting.basis))
}

/// Closed-form joint table `p(a1,a2) = (1 + a1 a2 S1ᵀ R S2*_b)/4`.
///
/// `s1` is the detector behind the rotation; `s2 = s1` is the identical-copy case.
pub fn joint_statistics_closed(
    s1: &BlochVector,
    s2: &BlochVector,
    setting: &ProtocolSetting,
) -> Result<JointProbTable> {
    povm_from_bloch(s1)?;
    povm_from_bloch(s2)?;
    Ok(JointProbTable::with_correlation(correlation(
        s1, s2, setting,
    )))
}

/// Explicit Born-rule evaluation `⟨ψ_b| U†Δ1(a1)U ⊗ Δ2(a2) |ψ_b⟩`.
pub fn joint_statistics_oracle(
    s1: &BlochVector,
    s2: &BlochVector,
    setting: &ProtocolSetting,
) -> Result<JointProbTable> {
    let (d1_plus, d1_minus) = povm_from_bloch(s1)?;
    let (d2_plus, d2_minus) = povm_from_bloch(s2)?;
    let u = rotation_to_unitary(&setting.rotation)?;
    let psi = entangled_state(setting.basis);
    let rotated = |d| u.adjoint() * d * u;
    let p = |a, b| tensor(&rotated(a), &b).expectation(&psi).re;
    Ok(JointProbTable {
        pp: p(d1_plus, d2_plus),
        pm: p(d1_plus, d2_minus),
        mp: p(d1_minus, d2_plus),
        mm: p(d1_minus, d2_minus),
    })
}

/// Collapses a symmetric table to `p(+,+)`, using the projection
/// `(p(+,+) + p(−,−))/2` so that noisy tables give the least-squares estimate.
pub fn reduce_table(t: &JointProbTable, tolerance: f64) -> Result<f64> {
    let violation = t.symmetry_violation();
    if violation.is_nan() || violation > tolerance {
        return Err(Error::AsymmetricTable {
            violation,
            tolerance,
        });
    }
    Ok(0.5 * (t.pp + t.mm))
}

/// Finite-shot outcome counts for a four-outcome table.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShotRecord {
    /// Counts in the order (++, +−, −+, −−).
    pub counts: [u64; 4],
    pub shots: u64,
    pub seed: u64,
}

impl ShotRecord {
    pub fn frequencies(&self) -> Result<JointProbTable> {
        if self.shots == 0 {
            return Err(Error::ZeroShots {
                setting: format!("seed {}", self.seed),
            });
        }
        let n = self.shots as f64;
        Ok(JointProbTable::from_entries(
            self.counts.map(|c| c as f64 / n),
        ))
    }
}

/// Draws `shots` i.i.d. category indices by inverse CDF.
///
/// The generator is ChaCha8 seeded through `seed_from_u64`, and each draw
/// consumes one 64-bit word mapped to `[0, 1)` with 53-bit precision. Both are
/// specified bit-for-bit, so counts are identical on every platform.
pub fn sample_categorical(probs: &[f64], shots: u64, seed: u64) -> Vec<u64> {
    let mut counts = vec![0u64; probs.len()];
    if probs.is_empty() || shots == 0 {
        return counts;
    }
    let mut cdf = Vec::with_capacity(probs.len());
    let mut acc = 0.0;
    for p in probs {
        acc += p.max(0.0);
        cdf.push(acc);
    }
    let total = acc;
    let last = probs.len() - 1;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..shots {
        let u = rng.random::<f64>() * total;
        let k = cdf[..last].iter().position(|&c| u < c).unwrap_or(last);
        counts[k] += 1;
    }
    counts
}

/// Samples a joint table; see [`sample_categorical`] for the generator contract.
pub fn sample_counts(t: &JointProbTable, shots: u64, seed: u64) -> ShotRecord {
    let c = sample_categorical(&t.entries(), shots, seed);
    ShotRecord {
        counts: [c[0], c[1], c[2], c[3]],
        shots,
        seed,
    }
}

/// Derives an independent per-stream seed (SplitMix64 finalizer over `base + index·φ`).
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
