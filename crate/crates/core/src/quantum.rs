//! Finite-dimensional operator algebra for one and two qubits.
//!
//! States and dichotomic POVMs are both parameterized by a real 3-vector
//! through `(σ0 + v·σ)/2`. Everything here is a small fixed-size value type;
//! the two-qubit layer exists so that joint statistics can be checked against
//! an explicit Born-rule evaluation.

use std::f64::consts::FRAC_1_SQRT_2;
use std::fmt;
use std::ops::{Add, Index, Mul, Neg, Sub};

use nalgebra::Matrix4;
use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;

/// Validation tolerance for norms, hermiticity and orthogonality.
pub const VALIDATION_TOL: f64 = 1e-12;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);
const I: C64 = C64::new(0.0, 1.0);

/// Real 3-vector describing a qubit state (`s`) or a dichotomic POVM (`S`).
///
/// Any norm is representable; the physical constructors check `|v| ≤ 1`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BlochVector(pub [f64; 3]);

impl BlochVector {
    pub const ZERO: BlochVector = BlochVector([0.0; 3]);

    pub const fn new(s1: f64, s2: f64, s3: f64) -> Self {
        BlochVector([s1, s2, s3])
    }

    pub fn components(&self) -> [f64; 3] {
        self.0
    }

    pub fn dot(&self, other: &BlochVector) -> f64 {
        self.0[0] * other.0[0] + self.0[1] * other.0[1] + self.0[2] * other.0[2]
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn scale(&self, k: f64) -> BlochVector {
        BlochVector(self.0.map(|c| k * c))
    }

    /// Euclidean distance to the nearer of `other` and `-other`.
    pub fn sign_resolved_distance(&self, other: &BlochVector) -> f64 {
        (*self - *other).norm().min((*self + *other).norm())
    }

    /// Mirror image in the coordinate plane associated with the source basis.
    pub fn reflected(&self, basis: MeasurementBasis) -> BlochVector {
        reflect(*self, basis)
    }

    /// Returns the vector unchanged if `|v| ≤ 1` (within tolerance).
    pub fn checked_physical(self) -> Result<Self> {
        let norm = self.norm();
        if norm > 1.0 + VALIDATION_TOL || !norm.is_finite() {
            return Err(Error::InvalidState { norm });
        }
        Ok(self)
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|c| c.is_finite())
    }
}

impl Index<usize> for BlochVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl Add for BlochVector {
    type Output = BlochVector;
    fn add(self, rhs: BlochVector) -> BlochVector {
        BlochVector([
            self.0[0] + rhs.0[0],
            self.0[1] + rhs.0[1],
            self.0[2] + rhs.0[2],
        ])
    }
}

impl Sub for BlochVector {
    type Output = BlochVector;
    fn sub(self, rhs: BlochVector) -> BlochVector {
        BlochVector([
            self.0[0] - rhs.0[0],
            self.0[1] - rhs.0[1],
            self.0[2] - rhs.0[2],
        ])
    }
}

impl Neg for BlochVector {
    type Output = BlochVector;
    fn neg(self) -> BlochVector {
        BlochVector(self.0.map(|c| -c))
    }
}

impl fmt::Display for BlochVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.0[0], self.0[1], self.0[2])
    }
}

/// Which Pauli eigenbasis the entangled source is written in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeasurementBasis {
    X,
    Y,
    Z,
}

impl MeasurementBasis {
    pub const ALL: [MeasurementBasis; 3] = [
        MeasurementBasis::X,
        MeasurementBasis::Y,
        MeasurementBasis::Z,
    ];

    pub fn label(self) -> &'static str {
        match self {
            MeasurementBasis::X => "x",
            MeasurementBasis::Y => "y",
            MeasurementBasis::Z => "z",
        }
    }
}

impl fmt::Display for MeasurementBasis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Identity or one of the three Pauli matrices.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl From<MeasurementBasis> for Pauli {
    fn from(b: MeasurementBasis) -> Self {
        match b {
            MeasurementBasis::X => Pauli::X,
            MeasurementBasis::Y => Pauli::Y,
            MeasurementBasis::Z => Pauli::Z,
        }
    }
}

/// Returns σ0, σx, σy or σz in the σz eigenbasis, with σz = diag(1, −1).
pub fn pauli(axis: Pauli) -> QubitOperator {
    QubitOperator(match axis {
        Pauli::I => [[ONE, ZERO], [ZERO, ONE]],
        Pauli::X => [[ZERO, ONE], [ONE, ZERO]],
        Pauli::Y => [[ZERO, -I], [I, ZERO]],
        Pauli::Z => [[ONE, ZERO], [ZERO, -ONE]],
    })
}

/// A 2×2 complex matrix, row-major.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QubitOperator(pub [[C64; 2]; 2]);

impl QubitOperator {
    pub fn zero() -> Self {
        QubitOperator([[ZERO; 2]; 2])
    }

    pub fn identity() -> Self {
        pauli(Pauli::I)
    }

    /// `scale · (σ0 + v·σ)`.
    pub fn from_bloch(scale: f64, v: &BlochVector) -> Self {
        let [x, y, z] = v.0;
        QubitOperator([
            [
                C64::new(scale * (1.0 + z), 0.0),
                C64::new(scale * x, -scale * y),
            ],
            [
                C64::new(scale * x, scale * y),
                C64::new(scale * (1.0 - z), 0.0),
            ],
        ])
    }

    /// `[tr A, tr(A σx), tr(A σy), tr(A σz)]`, real parts (exact for Hermitian `A`).
    pub fn pauli_coefficients(&self) -> [f64; 4] {
        let m = &self.0;
        [
            (m[0][0] + m[1][1]).re,
            (m[0][1] + m[1][0]).re,
            (m[1][0] - m[0][1]).im,
            (m[0][0] - m[1][1]).re,
        ]
    }

    pub fn entry(&self, row: usize, col: usize) -> C64 {
        self.0[row][col]
    }

    pub fn adjoint(&self) -> Self {
        let m = &self.0;
        QubitOperator([
            [m[0][0].conj(), m[1][0].conj()],
            [m[0][1].conj(), m[1][1].conj()],
        ])
    }

    pub fn trace(&self) -> C64 {
        self.0[0][0] + self.0[1][1]
    }

    pub fn scale(&self, k: C64) -> Self {
        QubitOperator(self.0.map(|row| row.map(|e| e * k)))
    }

    pub fn max_abs_diff(&self, other: &QubitOperator) -> f64 {
        let mut d: f64 = 0.0;
        for r in 0..2 {
            for c in 0..2 {
                d = d.max((self.0[r][c] - other.0[r][c]).norm());
            }
        }
        d
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.max_abs_diff(&self.adjoint()) <= tol
    }

    pub fn is_unitary(&self, tol: f64) -> bool {
        (self.adjoint() * *self).max_abs_diff(&QubitOperator::identity()) <= tol
    }

    /// Smallest eigenvalue of a Hermitian 2×2 matrix, in closed form.
    pub fn min_eigenvalue(&self) -> Result<f64> {
        let deviation = self.max_abs_diff(&self.adjoint());
        if deviation > VALIDATION_TOL {
            return Err(Error::NotHermitian { deviation });
        }
        let a = self.0[0][0].re;
        let d = self.0[1][1].re;
        let b = self.0[0][1];
        let half_gap = ((0.5 * (a - d)).powi(2) + b.norm_sqr()).sqrt();
        Ok(0.5 * (a + d) - half_gap)
    }
}

impl Add for QubitOperator {
    type Output = QubitOperator;
    fn add(self, rhs: QubitOperator) -> QubitOperator {
        let mut out = self.0;
        for (r, row) in out.iter_mut().enumerate() {
            for (c, e) in row.iter_mut().enumerate() {
                *e += rhs.0[r][c];
            }
        }
        QubitOperator(out)
    }
}

impl Mul for QubitOperator {
    type Output = QubitOperator;
    fn mul(self, rhs: QubitOperator) -> QubitOperator {
        let mut out = [[ZERO; 2]; 2];
        for (r, row) in out.iter_mut().enumerate() {
            for (c, e) in row.iter_mut().enumerate() {
                *e = self.0[r][0] * rhs.0[0][c] + self.0[r][1] * rhs.0[1][c];
            }
        }
        QubitOperator(out)
    }
}

/// `(σ0 + s·σ)/2`; fails if `|s| > 1`.
pub fn density_from_bloch(s: &BlochVector) -> Result<QubitOperator> {
    s.checked_physical()?;
    Ok(QubitOperator::from_bloch(0.5, s))
}

/// The two elements `Δ(+)`, `Δ(−)` = `(σ0 ± S·σ)/2` of a dichotomic POVM.
pub fn povm_from_bloch(s: &BlochVector) -> Result<(QubitOperator, QubitOperator)> {
    s.checked_physical()
        .map_err(|_| Error::InvalidPovm { norm: s.norm() })?;
    Ok((
        QubitOperator::from_bloch(0.5, s),
        QubitOperator::from_bloch(0.5, &-*s),
    ))
}

/// `tr(element · rho)`.
pub fn born_probability(rho: &QubitOperator, element: &QubitOperator) -> f64 {
    (*element * *rho).trace().re
}

/// Kronecker product with `a` acting on mode 1 (the high-order index).
pub fn tensor(a: &QubitOperator, b: &QubitOperator) -> FourLevelOperator {
    let mut out = [[ZERO; 4]; 4];
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..2 {
                for l in 0..2 {
                    out[2 * i + k][2 * j + l] = a.0[i][j] * b.0[k][l];
                }
            }
        }
    }
    FourLevelOperator(out)
}

/// A 4×4 complex matrix on the two-qubit space, basis order |00⟩,|01⟩,|10⟩,|11⟩.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FourLevelOperator(pub [[C64; 4]; 4]);

impl FourLevelOperator {
    pub fn identity() -> Self {
        let mut m = [[ZERO; 4]; 4];
        for (i, row) in m.iter_mut().enumerate() {
            row[i] = ONE;
        }
        FourLevelOperator(m)
    }

    pub fn adjoint(&self) -> Self {
        let mut m = [[ZERO; 4]; 4];
        for (r, row) in m.iter_mut().enumerate() {
            for (c, e) in row.iter_mut().enumerate() {
                *e = self.0[c][r].conj();
            }
        }
        FourLevelOperator(m)
    }

    pub fn apply(&self, psi: &TwoQubitState) -> TwoQubitState {
        let mut out = [ZERO; 4];
        for (r, e) in out.iter_mut().enumerate() {
            *e = (0..4).map(|c| self.0[r][c] * psi.0[c]).sum();
        }
        TwoQubitState(out)
    }

    /// `⟨ψ|A|ψ⟩`.
    pub fn expectation(&self, psi: &TwoQubitState) -> C64 {
        psi.inner(&self.apply(psi))
    }

    pub fn max_abs_diff(&self, other: &FourLevelOperator) -> f64 {
        let mut d: f64 = 0.0;
        for r in 0..4 {
            for c in 0..4 {
                d = d.max((self.0[r][c] - other.0[r][c]).norm());
            }
        }
        d
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.max_abs_diff(&self.adjoint()) <= tol
    }

    /// Smallest eigenvalue of a Hermitian 4×4 matrix (numeric eigensolve).
    pub fn min_eigenvalue(&self) -> Result<f64> {
        let deviation = self.max_abs_diff(&self.adjoint());
        if deviation > VALIDATION_TOL {
            return Err(Error::NotHermitian { deviation });
        }
        let m = Matrix4::from_fn(|r, c| self.0[r][c]);
        let eig = m.symmetric_eigenvalues();
        Ok(eig.iter().copied().fold(f64::INFINITY, f64::min))
    }
}

impl Mul for FourLevelOperator {
    type Output = FourLevelOperator;
    fn mul(self, rhs: FourLevelOperator) -> FourLevelOperator {
        let mut out = [[ZERO; 4]; 4];
        for (r, row) in out.iter_mut().enumerate() {
            for (c, e) in row.iter_mut().enumerate() {
                *e = (0..4).map(|k| self.0[r][k] * rhs.0[k][c]).sum();
            }
        }
        FourLevelOperator(out)
    }
}

/// Pure two-qubit state vector, basis order |00⟩,|01⟩,|10⟩,|11⟩.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TwoQubitState(pub [C64; 4]);

impl TwoQubitState {
    /// Normalizes the amplitudes; fails on the zero vector.
    pub fn normalized(amplitudes: [C64; 4]) -> Result<Self> {
        let norm = amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::param(
                "amplitudes",
                "state vector has zero or non-finite norm",
            ));
        }
        Ok(TwoQubitState(amplitudes.map(|a| a / norm)))
    }

    pub(crate) fn bell(a00: f64, a01: f64, a10: f64, a11: f64) -> Self {
        let k = FRAC_1_SQRT_2;
        TwoQubitState([a00, a01, a10, a11].map(|a| C64::new(k * a, 0.0)))
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &TwoQubitState) -> C64 {
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    pub fn norm(&self) -> f64 {
        self.inner(self).re.sqrt()
    }
}

/// Orthogonal 3×3 matrix acting on Bloch vectors.
///
/// Construction only checks orthogonality; [`rotation_to_unitary`] rejects
/// reflections (det = −1).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[[f64; 3]; 3]", into = "[[f64; 3]; 3]")]
pub struct Rotation3([[f64; 3]; 3]);

impl Rotation3 {
    pub fn new(m: [[f64; 3]; 3]) -> Result<Self> {
        if m.iter().flatten().any(|e| !e.is_finite()) {
            return Err(Error::param("rotation", "non-finite entry"));
        }
        let r = Rotation3(m);
        let deviation = r.orthogonality_deviation();
        if deviation > VALIDATION_TOL {
            return Err(Error::NotOrthogonal { deviation });
        }
        Ok(r)
    }

    /// R0: the identity.
    pub fn identity() -> Self {
        Rotation3([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    }

    /// R1: the cyclic permutation `(s1, s2, s3) ↦ (s2, s3, s1)`.
    pub fn cyclic() -> Self {
        Rotation3([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [1.0, 0.0, 0.0]])
    }

    /// Right-handed rotation by `angle` about `axis` (Rodrigues formula).
    pub fn about_axis(axis: &BlochVector, angle: f64) -> Result<Self> {
        let n = axis.norm();
        if n == 0.0 || !n.is_finite() || !angle.is_finite() {
            return Err(Error::param(
                "axis",
                "rotation axis must be a finite nonzero vector",
            ));
        }
        let [x, y, z] = axis.scale(1.0 / n).0;
        let (s, c) = angle.sin_cos();
        let t = 1.0 - c;
        Ok(Rotation3([
            [c + x * x * t, x * y * t - z * s, x * z * t + y * s],
            [y * x * t + z * s, c + y * y * t, y * z * t - x * s],
            [z * x * t - y * s, z * y * t + x * s, c + z * z * t],
        ]))
    }

    pub fn matrix(&self) -> [[f64; 3]; 3] {
        self.0
    }

    pub fn apply(&self, v: &BlochVector) -> BlochVector {
        let m = &self.0;
        BlochVector(std::array::from_fn(|r| {
            m[r][0] * v.0[0] + m[r][1] * v.0[1] + m[r][2] * v.0[2]
        }))
    }

    pub fn transpose(&self) -> Self {
        Rotation3(std::array::from_fn(|r| {
            std::array::from_fn(|c| self.0[c][r])
        }))
    }

    pub fn determinant(&self) -> f64 {
        let m = &self.0;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    pub fn is_proper(&self) -> bool {
        (self.determinant() - 1.0).abs() <= VALIDATION_TOL
    }

    /// Bilinear form `aᵀ R b`.
    pub fn bilinear(&self, a: &BlochVector, b: &BlochVector) -> f64 {
        a.dot(&self.apply(b))
    }

    fn orthogonality_deviation(&self) -> f64 {
        let m = &self.0;
        let mut d: f64 = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                let dot: f64 = (0..3).map(|k| m[k][i] * m[k][j]).sum();
                let target = if i == j { 1.0 } else { 0.0 };
                d = d.max((dot - target).abs());
            }
        }
        d
    }
}

impl TryFrom<[[f64; 3]; 3]> for Rotation3 {
    type Error = Error;
    fn try_from(m: [[f64; 3]; 3]) -> Result<Self> {
        Rotation3::new(m)
    }
}

impl From<Rotation3> for [[f64; 3]; 3] {
    fn from(r: Rotation3) -> Self {
        r.0
    }
}

/// Lifts a proper rotation to the SU(2) element `U = exp(−iθ n·σ/2)` with
/// `θ ∈ [0, π]`, so that `U (s·σ) U† = (R s)·σ`.
pub fn rotation_to_unitary(r: &Rotation3) -> Result<QubitOperator> {
    let det = r.determinant();
    if (det - 1.0).abs() > VALIDATION_TOL {
        return Err(Error::ImproperRotation { det });
    }
    let m = r.matrix();
    let cos_theta = ((m[0][0] + m[1][1] + m[2][2] - 1.0) / 2.0).clamp(-1.0, 1.0);
    // 2 sin(θ) n
    let anti = BlochVector::new(m[2][1] - m[1][2], m[0][2] - m[2][0], m[1][0] - m[0][1]);
    let anti_norm = anti.norm();
    // acos is ill-conditioned near θ = π
    let theta = (0.5 * anti_norm).atan2(cos_theta);

    let axis = if anti_norm <= 1e-300 && cos_theta > 0.0 {
        return Ok(QubitOperator::identity());
    } else if cos_theta > -0.5 {
        anti.scale(1.0 / anti_norm)
    } else {
        // Near θ = π the antisymmetric part vanishes; n nᵀ comes from the
        // symmetric part instead and the sign is fixed by `anti` when it exists.
        let denom = 2.0 * (1.0 - cos_theta);
        let outer: [[f64; 3]; 3] = std::array::from_fn(|i| {
            std::array::from_fn(|j| {
                let delta = if i == j { cos_theta } else { 0.0 };
                (m[i][j] + m[j][i] - 2.0 * delta) / denom
            })
        });
        let k = (0..3)
            .max_by(|&a, &b| outer[a][a].total_cmp(&outer[b][b]))
            .unwrap_or(0);
        let col = BlochVector::new(outer[0][k], outer[1][k], outer[2][k]);
        let mut n = col.scale(1.0 / col.norm());
        if n.dot(&anti) < 0.0 {
            n = -n;
        }
        n
    };

    let (s, c) = (0.5 * theta).sin_cos();
    let [nx, ny, nz] = axis.0;
    Ok(QubitOperator([
        [C64::new(c, -s * nz), C64::new(-s * ny, -s * nx)],
        [C64::new(s * ny, -s * nx), C64::new(c, s * nz)],
    ]))
}

/// Reflection of `s` in the coordinate plane paired with source basis `b`:
/// x ↦ (s1, s2, −s3), y ↦ (−s1, s2, s3), z ↦ (s1, −s2, s3).
pub fn reflect(s: BlochVector, b: MeasurementBasis) -> BlochVector {
    let [s1, s2, s3] = s.0;
    match b {
        MeasurementBasis::X => BlochVector::new(s1, s2, -s3),
        MeasurementBasis::Y => BlochVector::new(-s1, s2, s3),
        MeasurementBasis::Z => BlochVector::new(s1, -s2, s3),
    }
}
