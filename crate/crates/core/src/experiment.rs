//! Configuration, orchestration and result documents for the three experiment
//! modes.
//!
//! A run is a pure function of its [`ExperimentConfig`]: per-setting sampler
//! seeds are derived from the base seed and the setting's position, and result
//! documents contain no timestamps or host data, so repeated runs serialize to
//! identical bytes.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::joint::{
    calibration_tables, decompose, frequencies_from_counts, fuzzy_joint_statistics,
    fuzzy_joint_statistics_oracle, inferred_distribution, invert, negativity_report,
    reconstruct_outcome_vectors, sample_joint_counts, Decomposition, JointOutcomeTable, JointPovm,
    JointTomographyOptions, JointTomographyReport, NegativityCertificate, QuasiPovm, OUTCOMES,
};
use crate::onoff::{
    click_probabilities_closed, click_probabilities_oracle, fit_onoff, fit_onoff_counts,
    sample_click_counts, ClickTable, FockTruncation, OnOffFit, OnOffParams, SqueezedVacuumParams,
    ORACLE_TERM_CAP,
};
use crate::protocol::{
    calibration_settings, derive_seed, joint_statistics_closed, joint_statistics_oracle,
    reduce_table, sample_counts, JointProbTable, ProtocolSetting, RotationChoice, ShotRecord, Sign,
    SYMMETRY_TOL,
};
use crate::quantum::{BlochVector, MeasurementBasis, Rotation3};
use crate::reconstruction::{
    reconstruct_bloch, reconstruct_from_counts, CountOptions, ReconstructionOptions,
    ReconstructionReport, SettingProbabilities,
};

/// Config and result documents carry this format number.
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    /// Samples per setting; 0 evaluates exact probabilities.
    #[serde(default)]
    pub shots: u64,
    #[serde(default)]
    pub seed: u64,
    /// Cross-check closed forms against the Born-rule oracle (exact mode).
    #[serde(default)]
    pub oracle_check: bool,
    #[serde(default)]
    pub tolerances: Tolerances,
    pub experiment: ExperimentSpec,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Allowed closed-form vs oracle deviation.
    pub oracle: f64,
    /// Clamping threshold for squared components; defaults to `1e-6` exact
    /// and `10/√shots` sampled.
    pub epsilon: Option<f64>,
    /// Allowed `p(+,−) − p(−,+)` asymmetry in units of the binomial sigma.
    pub symmetry_sigmas: f64,
    /// Joint tomography completeness tolerance; defaults to `1e-9` exact and
    /// `20/√shots` sampled.
    pub completeness: Option<f64>,
    /// Omitted Fock weight for the on/off oracle.
    pub fock_tail: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            oracle: 1e-12,
            epsilon: None,
            symmetry_sigmas: 6.0,
            completeness: None,
            fock_tail: 1e-12,
        }
    }
}

impl Tolerances {
    fn epsilon(&self, shots: u64) -> f64 {
        self.epsilon.unwrap_or(if shots == 0 {
            1e-6
        } else {
            10.0 / (shots as f64).sqrt()
        })
    }

    fn completeness(&self, shots: u64) -> f64 {
        self.completeness.unwrap_or(if shots == 0 {
            1e-9
        } else {
            20.0 / (shots as f64).sqrt()
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum ExperimentSpec {
    QubitSelftomo(QubitSpec),
    Onoff(OnOffSpec),
    JointBell(JointSpec),
}

impl ExperimentSpec {
    pub fn mode(&self) -> &'static str {
        match self {
            ExperimentSpec::QubitSelftomo(_) => "qubit-selftomo",
            ExperimentSpec::Onoff(_) => "onoff",
            ExperimentSpec::JointBell(_) => "joint-bell",
        }
    }
}

/// Either a named calibration rotation or an explicit proper rotation matrix.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RotationSpec {
    Named(RotationChoice),
    Matrix(Rotation3),
}

impl RotationSpec {
    pub fn rotation(&self) -> Rotation3 {
        match self {
            RotationSpec::Named(c) => c.rotation(),
            RotationSpec::Matrix(m) => *m,
        }
    }

    fn label(&self, index: usize) -> String {
        match self {
            RotationSpec::Named(c) => format!("{c:?}"),
            RotationSpec::Matrix(_) => format!("M{index}"),
        }
    }
}

fn all_bases() -> Vec<MeasurementBasis> {
    MeasurementBasis::ALL.to_vec()
}

fn both_rotations() -> Vec<RotationSpec> {
    vec![
        RotationSpec::Named(RotationChoice::R0),
        RotationSpec::Named(RotationChoice::R1),
    ]
}

fn z_basis() -> Vec<MeasurementBasis> {
    vec![MeasurementBasis::Z]
}

fn identity_rotation() -> Vec<RotationSpec> {
    vec![RotationSpec::Named(RotationChoice::R0)]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QubitSpec {
    pub detector: BlochVector,
    #[serde(default = "all_bases")]
    pub bases: Vec<MeasurementBasis>,
    #[serde(default = "both_rotations")]
    pub rotations: Vec<RotationSpec>,
    /// Constrained least-squares refinement of sampled estimates.
    #[serde(default)]
    pub refine: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceSpec {
    pub xi: Option<f64>,
    pub nbar: Option<f64>,
}

impl SourceSpec {
    pub fn params(&self) -> Result<SqueezedVacuumParams> {
        match (self.xi, self.nbar) {
            (Some(xi), None) => SqueezedVacuumParams::from_xi(xi),
            (None, Some(nbar)) => SqueezedVacuumParams::from_nbar(nbar),
            _ => Err(Error::config(
                "experiment.source",
                "give exactly one of `xi` and `nbar`",
            )),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OnOffSpec {
    pub detector: OnOffParams,
    pub source: SourceSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointSpec {
    pub detector: JointPovm,
    /// Settings probed for negativity.
    #[serde(default = "z_basis")]
    pub bases: Vec<MeasurementBasis>,
    #[serde(default = "identity_rotation")]
    pub rotations: Vec<RotationSpec>,
}

fn probe_settings(
    bases: &[MeasurementBasis],
    rotations: &[RotationSpec],
) -> Vec<(ProtocolSetting, String)> {
    rotations
        .iter()
        .enumerate()
        .flat_map(|(i, r)| {
            bases
                .iter()
                .map(move |b| (ProtocolSetting::new(*b, r.rotation()), r.label(i)))
        })
        .collect()
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.version != FORMAT_VERSION {
            return Err(Error::config(
                "version",
                format!(
                    "unsupported version {}, expected {FORMAT_VERSION}",
                    self.version
                ),
            ));
        }
        let t = &self.tolerances;
        for (field, v) in [
            ("tolerances.oracle", Some(t.oracle)),
            ("tolerances.epsilon", t.epsilon),
            ("tolerances.symmetry_sigmas", Some(t.symmetry_sigmas)),
            ("tolerances.completeness", t.completeness),
            ("tolerances.fock_tail", Some(t.fock_tail)),
        ] {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(Error::config(
                        field,
                        format!("{v} must be positive and finite"),
                    ));
                }
            }
        }
        let check_lists = |bases: &[MeasurementBasis], rotations: &[RotationSpec]| -> Result<()> {
            if bases.is_empty() {
                return Err(Error::config("experiment.bases", "must not be empty"));
            }
            if rotations.is_empty() {
                return Err(Error::config("experiment.rotations", "must not be empty"));
            }
            for (i, r) in rotations.iter().enumerate() {
                if !r.rotation().is_proper() {
                    return Err(Error::config(
                        format!("experiment.rotations[{i}]"),
                        "determinant must be +1",
                    ));
                }
            }
            Ok(())
        };
        match &self.experiment {
            ExperimentSpec::QubitSelftomo(q) => {
                if q.detector.checked_physical().is_err() {
                    return Err(Error::config(
                        "experiment.detector",
                        format!("norm {} exceeds 1", q.detector.norm()),
                    ));
                }
                check_lists(&q.bases, &q.rotations)
            }
            ExperimentSpec::Onoff(o) => {
                OnOffParams::new(o.detector.eta, o.detector.p_dark)
                    .map_err(|e| Error::config("experiment.detector", e.to_string()))?;
                o.source.params().map_err(|e| match e {
                    Error::Config { .. } => e,
                    other => Error::config("experiment.source", other.to_string()),
                })?;
                Ok(())
            }
            ExperimentSpec::JointBell(j) => {
                j.detector
                    .validate()
                    .map_err(|e| Error::config("experiment.detector", e.to_string()))?;
                check_lists(&j.bases, &j.rotations)
            }
        }
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Parse(e.to_string()))
    }

    /// Reads TOML or JSON, chosen by extension (`.json` is JSON, anything else TOML).
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        let parsed = if path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("json"))
        {
            Self::from_json_str(&text)
        } else {
            Self::from_toml_str(&text)
        };
        parsed.map_err(|e| match e {
            Error::Parse(m) => Error::Parse(format!("{}: {m}", path.display())),
            other => other,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultDocument {
    pub format: u32,
    /// Version of the producing library.
    pub generator: String,
    pub config: ExperimentConfig,
    pub result: ExperimentResult,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
#[allow(clippy::large_enum_variant)]
pub enum ExperimentResult {
    QubitSelftomo(QubitResult),
    Onoff(OnOffResult),
    JointBell(JointResult),
    BellNegativity(NegativityResult),
}

/// One setting of the qubit experiment. `probabilities` is always the model
/// table; `counts` is present when sampled.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QubitSettingTable {
    pub basis: MeasurementBasis,
    pub rotation: String,
    pub probabilities: JointProbTable,
    pub counts: Option<ShotRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QubitResult {
    pub tables: Vec<QubitSettingTable>,
    pub oracle_max_deviation: Option<f64>,
    /// Present when all six calibration settings were configured.
    pub reconstruction: Option<QubitReconstruction>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QubitReconstruction {
    /// Reduced calibration probabilities the estimate was computed from
    /// (exact mode only).
    pub probabilities: Option<SettingProbabilities>,
    pub report: ReconstructionReport,
    /// `min ‖estimate ∓ S‖` against the configured detector.
    pub error: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OnOffResult {
    pub source: SqueezedVacuumParams,
    pub table: ClickTable,
    pub counts: Option<ShotRecord>,
    pub fock_truncation: Option<FockTruncation>,
    pub oracle_max_deviation: Option<f64>,
    pub fit: OnOffFit,
    /// `(η̂ − η, p̂_d − p_d)` against the configured detector.
    pub error: Option<[f64; 2]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointSettingTable {
    pub basis: MeasurementBasis,
    pub rotation: String,
    pub table: JointOutcomeTable,
    pub counts: Option<[u64; 16]>,
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointResult {
    pub tables: Vec<JointSettingTable>,
    pub oracle_max_deviation: Option<f64>,
    pub tomography: JointTomographyReport,
    pub decomposition: Decomposition,
    /// Flip-resolved parameter distance to the configured POVM.
    pub error: f64,
    pub quasi_povm: QuasiPovm,
    pub inferred: Vec<JointSettingTable>,
    pub negativity: NegativityCertificate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NegativityResult {
    pub quasi_povm: QuasiPovm,
    pub inferred: Vec<JointSettingTable>,
    pub negativity: NegativityCertificate,
}

impl ResultDocument {
    pub fn new(config: ExperimentConfig, result: ExperimentResult) -> Self {
        ResultDocument {
            format: FORMAT_VERSION,
            generator: env!("CARGO_PKG_VERSION").to_string(),
            config,
            result,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self).map_err(|e| Error::Parse(e.to_string()))?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Parse(e.to_string()))
    }

    /// Probability rows for CSV export.
    pub fn csv_rows(&self) -> Vec<CsvRow> {
        let row = |b: String, r: String, a1: String, a2: String, value: f64| CsvRow {
            b,
            r,
            a1,
            a2,
            value,
        };
        let mut rows = Vec::new();
        match &self.result {
            ExperimentResult::QubitSelftomo(q) => {
                for t in &q.tables {
                    let freq = t.counts.as_ref().and_then(|c| c.frequencies().ok());
                    let values = freq.unwrap_or(t.probabilities);
                    for a1 in Sign::ALL {
                        for a2 in Sign::ALL {
                            rows.push(row(
                                t.basis.label().into(),
                                t.rotation.clone(),
                                a1.symbol().into(),
                                a2.symbol().into(),
                                values.get(a1, a2),
                            ));
                        }
                    }
                }
            }
            ExperimentResult::Onoff(o) => {
                let values = o
                    .counts
                    .as_ref()
                    .and_then(|c| c.frequencies().ok())
                    .map(|f| ClickTable::from_joint(&f));
                let t = values.unwrap_or(o.table);
                for (a1, a2, v) in [
                    ("-", "-", t.mm),
                    ("+", "-", t.pm),
                    ("-", "+", t.mp),
                    ("+", "+", t.pp),
                ] {
                    rows.push(row(String::new(), String::new(), a1.into(), a2.into(), v));
                }
            }
            ExperimentResult::JointBell(j) => push_joint_rows(&mut rows, &j.tables),
            ExperimentResult::BellNegativity(n) => push_joint_rows(&mut rows, &n.inferred),
        }
        rows
    }
}

fn push_joint_rows(rows: &mut Vec<CsvRow>, tables: &[JointSettingTable]) {
    let label = |(x, y): (Sign, Sign)| format!("{}{}", x.symbol(), y.symbol());
    for t in tables {
        let shots = t.counts.map(|c| c.iter().sum::<u64>()).filter(|&n| n > 0);
        for (i, o1) in OUTCOMES.iter().enumerate() {
            for (k, o2) in OUTCOMES.iter().enumerate() {
                let idx = 4 * i + k;
                let value = match (t.counts, shots) {
                    (Some(c), Some(n)) => c[idx] as f64 / n as f64,
                    _ => t.table.entries[idx],
                };
                rows.push(CsvRow {
                    b: t.basis.label().into(),
                    r: t.rotation.clone(),
                    a1: label(*o1),
                    a2: label(*o2),
                    value,
                });
            }
        }
    }
}

/// One CSV line: basis, rotation label, mode-1 outcome, mode-2 outcome, value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub b: String,
    pub r: String,
    pub a1: String,
    pub a2: String,
    pub value: f64,
}

pub const CSV_HEADER: [&str; 5] = ["b", "r", "a1", "a2", "value"];

/// Writes the header and rows; an empty slice yields a header-only file.
pub fn write_csv<W: Write>(rows: &[CsvRow], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(out);
    let csv_err = |e: csv::Error| Error::Io(e.to_string());
    w.write_record(CSV_HEADER).map_err(csv_err)?;
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: std::io::Read>(input: R) -> Result<Vec<CsvRow>> {
    let mut r = csv::Reader::from_reader(input);
    r.deserialize()
        .map(|row| row.map_err(|e| Error::Parse(e.to_string())))
        .collect()
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<ResultDocument> {
    config.validate()?;
    let result = match &config.experiment {
        ExperimentSpec::QubitSelftomo(q) => ExperimentResult::QubitSelftomo(run_qubit(config, q)?),
        ExperimentSpec::Onoff(o) => ExperimentResult::Onoff(run_onoff(config, o)?),
        ExperimentSpec::JointBell(j) => ExperimentResult::JointBell(run_joint(config, j)?),
    };
    Ok(ResultDocument::new(config.clone(), result))
}

/// Inverts the configured joint POVM directly and certifies negativity over
/// the probe settings, skipping tomography.
pub fn run_bell_negativity(config: &ExperimentConfig) -> Result<ResultDocument> {
    config.validate()?;
    let ExperimentSpec::JointBell(j) = &config.experiment else {
        return Err(Error::config(
            "experiment.mode",
            "bell negativity needs mode = \"joint-bell\"",
        ));
    };
    let quasi = invert(&j.detector)?;
    let (inferred, negativity) = certify(&quasi, j);
    Ok(ResultDocument::new(
        config.clone(),
        ExperimentResult::BellNegativity(NegativityResult {
            quasi_povm: quasi,
            inferred,
            negativity,
        }),
    ))
}

fn run_qubit(config: &ExperimentConfig, spec: &QubitSpec) -> Result<QubitResult> {
    let detector = spec.detector;
    let settings = probe_settings(&spec.bases, &spec.rotations);
    let mut tables = Vec::with_capacity(settings.len());
    let mut oracle_dev: Option<f64> = None;
    for (i, (setting, label)) in settings.iter().enumerate() {
        let probabilities = joint_statistics_closed(&detector, &detector, setting)?;
        if config.oracle_check && config.shots == 0 {
            let oracle = joint_statistics_oracle(&detector, &detector, setting)?;
            let dev = (0..4)
                .map(|k| (probabilities.entries()[k] - oracle.entries()[k]).abs())
                .fold(0.0, f64::max);
            oracle_dev = Some(oracle_dev.unwrap_or(0.0).max(dev));
        }
        let counts = (config.shots > 0).then(|| {
            sample_counts(
                &probabilities,
                config.shots,
                derive_seed(config.seed, i as u64),
            )
        });
        tables.push(QubitSettingTable {
            basis: setting.basis,
            rotation: label.clone(),
            probabilities,
            counts,
        });
    }
    check_oracle(oracle_dev, config.tolerances.oracle)?;

    let calibration: Option<Vec<&QubitSettingTable>> = calibration_settings()
        .iter()
        .map(|(b, r)| {
            let target = ProtocolSetting::new(*b, r.rotation());
            settings
                .iter()
                .position(|(s, _)| *s == target)
                .map(|i| &tables[i])
        })
        .collect();

    let reconstruction = match calibration {
        None => None,
        Some(cal) => {
            let epsilon = config.tolerances.epsilon(config.shots);
            let reconstruction = ReconstructionOptions {
                epsilon,
                ..ReconstructionOptions::default()
            };
            let (probabilities, report) = if config.shots == 0 {
                let mut reduced = [0.0; 6];
                for (slot, t) in reduced.iter_mut().zip(&cal) {
                    *slot = reduce_table(&t.probabilities, SYMMETRY_TOL)?;
                }
                let p = SettingProbabilities::from_array(reduced);
                (Some(p), reconstruct_bloch(&p, &reconstruction)?)
            } else {
                let records: [ShotRecord; 6] =
                    std::array::from_fn(|i| cal[i].counts.expect("sampled mode records counts"));
                let options = CountOptions {
                    reconstruction,
                    symmetry_sigmas: config.tolerances.symmetry_sigmas,
                    refine: spec.refine,
                    ..CountOptions::default()
                };
                (None, reconstruct_from_counts(&records, &options)?)
            };
            let error = Some(report.estimate.sign_resolved_distance(&detector));
            Some(QubitReconstruction {
                probabilities,
                report,
                error,
            })
        }
    };
    Ok(QubitResult {
        tables,
        oracle_max_deviation: oracle_dev,
        reconstruction,
    })
}

fn check_oracle(deviation: Option<f64>, tolerance: f64) -> Result<()> {
    match deviation {
        Some(d) if d.is_nan() || d > tolerance => Err(Error::OracleMismatch {
            deviation: d,
            tolerance,
        }),
        _ => Ok(()),
    }
}

fn run_onoff(config: &ExperimentConfig, spec: &OnOffSpec) -> Result<OnOffResult> {
    let source = spec.source.params()?;
    let table = click_probabilities_closed(&spec.detector, &source);
    let (mut fock_truncation, mut oracle_dev) = (None, None);
    if config.oracle_check && config.shots == 0 {
        let tail = config.tolerances.fock_tail;
        fock_truncation = Some(FockTruncation::for_tolerance(
            &source,
            tail,
            ORACLE_TERM_CAP,
        )?);
        let dev = click_probabilities_oracle(&spec.detector, &source, tail)?.max_abs_diff(&table);
        oracle_dev = Some(dev);
        check_oracle(
            oracle_dev,
            config.tolerances.oracle.max(10.0 * tail).max(1e-10),
        )?;
    }
    let (counts, fit) = if config.shots == 0 {
        (None, fit_onoff(&table, source.nbar)?)
    } else {
        let record = sample_click_counts(&table, config.shots, derive_seed(config.seed, 0));
        let fit = fit_onoff_counts(&record, source.nbar)?;
        (Some(record), fit)
    };
    let error = Some([
        fit.params.eta - spec.detector.eta,
        fit.params.p_dark - spec.detector.p_dark,
    ]);
    Ok(OnOffResult {
        source,
        table,
        counts,
        fock_truncation,
        oracle_max_deviation: oracle_dev,
        fit,
        error,
    })
}

fn run_joint(config: &ExperimentConfig, spec: &JointSpec) -> Result<JointResult> {
    let j = &spec.detector;
    let exact = calibration_tables(j);
    let mut oracle_dev: Option<f64> = None;
    if config.oracle_check && config.shots == 0 {
        for t in &exact {
            let dev = fuzzy_joint_statistics_oracle(j, &t.setting)?.max_abs_diff(t);
            oracle_dev = Some(oracle_dev.unwrap_or(0.0).max(dev));
        }
        check_oracle(oracle_dev, config.tolerances.oracle)?;
    }

    let mut tables = Vec::with_capacity(6);
    let mut observed = exact;
    for (i, ((basis, choice), model)) in calibration_settings().into_iter().zip(exact).enumerate() {
        let (counts, seed) = if config.shots > 0 {
            let seed = derive_seed(config.seed, i as u64);
            let counts = sample_joint_counts(&model, config.shots, seed);
            observed[i] = frequencies_from_counts(&counts, &model.setting)?;
            (Some(counts), Some(seed))
        } else {
            (None, None)
        };
        tables.push(JointSettingTable {
            basis,
            rotation: format!("{choice:?}"),
            table: model,
            counts,
            seed,
        });
    }

    let options = JointTomographyOptions {
        reconstruction: ReconstructionOptions {
            epsilon: config.tolerances.epsilon(config.shots),
            ..ReconstructionOptions::default()
        },
        completeness_tolerance: config.tolerances.completeness(config.shots),
    };
    let tomography = reconstruct_outcome_vectors(&observed, &options)?;
    let decomposition = decompose(&tomography.vectors);
    let error = decomposition.povm.flip_resolved_distance(j);
    let quasi = invert(&decomposition.povm)?;
    let (inferred, negativity) = certify(&quasi, spec);
    Ok(JointResult {
        tables,
        oracle_max_deviation: oracle_dev,
        tomography,
        decomposition,
        error,
        quasi_povm: quasi,
        inferred,
        negativity,
    })
}

fn certify(quasi: &QuasiPovm, spec: &JointSpec) -> (Vec<JointSettingTable>, NegativityCertificate) {
    let probes = probe_settings(&spec.bases, &spec.rotations);
    let inferred = probes
        .iter()
        .map(|(s, label)| JointSettingTable {
            basis: s.basis,
            rotation: label.clone(),
            table: inferred_distribution(quasi, s),
            counts: None,
            seed: None,
        })
        .collect();
    let settings: Vec<ProtocolSetting> = probes.iter().map(|(s, _)| *s).collect();
    (inferred, negativity_report(quasi, &settings))
}

/// Fuzzy statistics of the configured POVM at the probe settings.
pub fn joint_probe_tables(spec: &JointSpec) -> Vec<JointOutcomeTable> {
    probe_settings(&spec.bases, &spec.rotations)
        .iter()
        .map(|(s, _)| fuzzy_joint_statistics(&spec.detector, s))
        .collect()
}

/// Input for fitting: a click table or click counts at known `n̄`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClickDataset {
    pub nbar: f64,
    pub table: Option<ClickTable>,
    /// Counts in the order `(−,−), (+,−), (−,+), (+,+)`.
    pub counts: Option<[u64; 4]>,
}

impl ClickDataset {
    pub fn fit(&self) -> Result<OnOffFit> {
        match (&self.table, &self.counts) {
            (Some(t), None) => fit_onoff(t, self.nbar),
            (None, Some(c)) => {
                let shots = c.iter().sum();
                let record = ShotRecord {
                    counts: [c[3], c[1], c[2], c[0]],
                    shots,
                    seed: 0,
                };
                fit_onoff_counts(&record, self.nbar)
            }
            _ => Err(Error::config(
                "data",
                "give exactly one of `table` and `counts`",
            )),
        }
    }
}

/// Input for reconstruction: the six calibration settings, each with either
/// a probability table or counts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QubitDataset {
    pub tables: Vec<QubitSettingTable>,
}

impl QubitDataset {
    /// Reconstructs from counts when every calibration setting has them,
    /// otherwise from the probability tables.
    pub fn reconstruct(
        &self,
        tolerances: &Tolerances,
        refine: bool,
    ) -> Result<QubitReconstruction> {
        let cal: Vec<&QubitSettingTable> = calibration_settings()
            .iter()
            .map(|(b, r)| {
                let label = format!("{r:?}");
                self.tables
                    .iter()
                    .find(|t| t.basis == *b && t.rotation == label)
                    .ok_or_else(|| {
                        Error::config(
                            "data.tables",
                            format!("missing setting ({}, {label})", b.label()),
                        )
                    })
            })
            .collect::<Result<_>>()?;
        if cal.iter().all(|t| t.counts.is_some()) {
            let records: [ShotRecord; 6] = std::array::from_fn(|i| cal[i].counts.expect("checked"));
            let shots = records.iter().map(|r| r.shots).min().unwrap_or(0);
            let options = CountOptions {
                reconstruction: ReconstructionOptions {
                    epsilon: tolerances.epsilon(shots.max(1)),
                    ..ReconstructionOptions::default()
                },
                symmetry_sigmas: tolerances.symmetry_sigmas,
                refine,
                ..CountOptions::default()
            };
            let report = reconstruct_from_counts(&records, &options)?;
            Ok(QubitReconstruction {
                probabilities: None,
                report,
                error: None,
            })
        } else {
            let mut reduced = [0.0; 6];
            for (slot, t) in reduced.iter_mut().zip(&cal) {
                *slot = reduce_table(&t.probabilities, SYMMETRY_TOL)?;
            }
            let p = SettingProbabilities::from_array(reduced);
            let options = ReconstructionOptions {
                epsilon: tolerances.epsilon(0),
                ..ReconstructionOptions::default()
            };
            Ok(QubitReconstruction {
                probabilities: Some(p),
                report: reconstruct_bloch(&p, &options)?,
                error: None,
            })
        }
    }
}
