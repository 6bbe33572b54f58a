//! Config-driven quench sweeps. A sweep is read from a TOML file, every
//! `(τ_Q, r)` point is simulated independently (in parallel), and each
//! point becomes one JSON line in the result file. A separate manifest
//! carries timestamps so that result files are reproducible byte for byte.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::{
    batch_counts, bayesian_intervals, bayesian_intervals_multi, estimate_cumulants_counts, Counts, PosteriorConfig,
    PosteriorSummary, SweepPoint,
};
use crate::backend::Backend;
use crate::error::{Error, ErrorKind, Result};
use crate::mitigation::{
    calibrate_readout, mitigate_counts, renorm_from_counts, run_twirled, ConfusionMatrix, MitigationOptions,
    MitigationReport, RenormFactor, RenormVariant,
};
use crate::model::{CumulantSet, QuenchSchedule};
use crate::mps::{MpsOptions, MpsStats, DEFAULT_TRUNC_TOL};
use crate::rng;
use crate::statevector::{NoiseModel, SampleOptions};
use crate::trotter::{
    build_quench_circuit_with, build_reference_circuit, Circuit, TrotterOptions, TrotterPlan, Variant,
};

pub const RECORD_SCHEMA: u32 = 1;
/// Largest register the dense backend accepts from a config file.
pub const MAX_STATEVECTOR_QUBITS: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    #[default]
    Statevector,
    Mps,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimation {
    /// Sample bitstrings and estimate k-statistics.
    #[default]
    Sampled,
    /// Noiseless cumulants straight from the simulated state.
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Geomspace {
    pub start: f64,
    pub stop: f64,
    pub num: usize,
}

/// How many Trotter steps each sweep point gets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RRule {
    /// `r = index + 1`: one more step per data point.
    Index,
    /// `r = ceil(c · τ_Q)`.
    PerTau(f64),
    Fixed(usize),
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub tau_q: Option<Vec<f64>>,
    pub geomspace: Option<Geomspace>,
    /// Explicit Trotter step counts, one per τ_Q.
    pub r: Option<Vec<usize>>,
    pub r_rule: Option<RRule>,
    /// Explicit `[τ_Q, r]` pairs; excludes every other key.
    pub points: Option<Vec<(f64, usize)>>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    pub two_qubit_depol: f64,
    pub global_depol: f64,
    /// Uniform `[p01, p10]` on every qubit.
    pub readout: Option<(f64, f64)>,
    /// Per-qubit `[p01, p10]`; overrides `readout`.
    pub readout_per_qubit: Option<Vec<(f64, f64)>>,
}

impl NoiseConfig {
    pub fn model(&self, n_qubits: usize) -> NoiseModel {
        let readout_flip = match (&self.readout_per_qubit, self.readout) {
            (Some(v), _) => v.clone(),
            (None, Some(r)) => vec![r; n_qubits],
            (None, None) => Vec::new(),
        };
        NoiseModel {
            two_qubit_depol: self.two_qubit_depol,
            global_depol: self.global_depol,
            readout_flip,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MitigationConfig {
    pub twirl: bool,
    pub readout: bool,
    pub renorm: bool,
    /// `None` uses the main shot count.
    pub calibration_shots: Option<usize>,
    pub reference_shots: Option<usize>,
    pub reference: Variant,
    pub renorm_variant: RenormVariant,
    pub weight_dependent: bool,
    pub renorm_floor: f64,
    pub per_shot_flip: bool,
}

impl Default for MitigationConfig {
    fn default() -> Self {
        Self {
            twirl: false,
            readout: false,
            renorm: false,
            calibration_shots: None,
            reference_shots: None,
            reference: Variant::ZeroField,
            renorm_variant: RenormVariant::MeanKink,
            weight_dependent: false,
            renorm_floor: crate::mitigation::DEFAULT_RENORM_FLOOR,
            per_shot_flip: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MpsConfig {
    pub trunc_tol: f64,
    pub max_bond: Option<usize>,
    pub memory_budget: u64,
}

impl Default for MpsConfig {
    fn default() -> Self {
        Self {
            trunc_tol: DEFAULT_TRUNC_TOL,
            max_bond: None,
            memory_budget: crate::mps::DEFAULT_MEMORY_BUDGET,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BayesConfig {
    pub enabled: bool,
    #[serde(flatten)]
    pub posterior: PosteriorConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n_qubits: usize,
    #[serde(default)]
    pub backend: BackendKind,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_shots")]
    pub shots: usize,
    #[serde(default = "default_twirls")]
    pub n_twirls: usize,
    #[serde(default)]
    pub estimation: Estimation,
    #[serde(default)]
    pub output: Option<PathBuf>,
    /// Parallel sweep points; 0 uses every core.
    #[serde(default)]
    pub workers: usize,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub mitigation: MitigationConfig,
    #[serde(default)]
    pub mps: MpsConfig,
    #[serde(default)]
    pub bayes: BayesConfig,
    #[serde(default)]
    pub trotter: TrotterOptions,
}

fn default_shots() -> usize {
    2000
}

fn default_twirls() -> usize {
    crate::mitigation::DEFAULT_N_TWIRLS
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_qubits < 2 {
            return Err(Error::Config(format!("n_qubits = {} (need at least 2)", self.n_qubits)));
        }
        if self.backend == BackendKind::Statevector && self.n_qubits > MAX_STATEVECTOR_QUBITS {
            return Err(Error::Config(format!(
                "statevector backend supports at most {MAX_STATEVECTOR_QUBITS} qubits, got {}",
                self.n_qubits
            )));
        }
        if self.estimation == Estimation::Sampled && self.shots == 0 {
            return Err(Error::Config("shots must be positive".into()));
        }
        let noise = self.noise_model();
        noise
            .validate(self.n_qubits)
            .map_err(|e| Error::Config(e.to_string()))?;
        if self.estimation == Estimation::Exact && !noise.is_noiseless() {
            return Err(Error::Config(
                "exact estimation ignores noise; drop the [noise] section".into(),
            ));
        }
        let m = &self.mitigation;
        if (m.twirl || m.readout || m.renorm) && self.estimation == Estimation::Exact {
            return Err(Error::Config("mitigation needs sampled estimation".into()));
        }
        if m.twirl && self.n_twirls == 0 {
            return Err(Error::Config("twirling enabled with n_twirls = 0".into()));
        }
        if m.reference == Variant::Quench {
            return Err(Error::Config("reference circuit must be zero_field or pi_field".into()));
        }
        if !(self.mps.trunc_tol >= 0.0 && self.mps.trunc_tol < 1.0) {
            return Err(Error::Config(format!("trunc_tol = {}", self.mps.trunc_tol)));
        }
        self.sweep_points()?;
        Ok(())
    }

    pub fn noise_model(&self) -> NoiseModel {
        self.noise.model(self.n_qubits)
    }

    pub fn backend(&self) -> Backend {
        match self.backend {
            BackendKind::Statevector => Backend::StateVector,
            BackendKind::Mps => Backend::Mps(MpsOptions {
                trunc_tol: self.mps.trunc_tol,
                max_bond: self.mps.max_bond,
                memory_budget: self.mps.memory_budget,
            }),
        }
    }

    pub fn mitigation_options(&self) -> MitigationOptions {
        let m = &self.mitigation;
        MitigationOptions {
            twirled_readout: m.twirl || m.per_shot_flip,
            renorm_variant: m.renorm_variant,
            weight_dependent: m.weight_dependent,
            renorm_floor: m.renorm_floor,
            n_twirls: if m.twirl { self.n_twirls } else { 0 },
            per_shot_flip: m.per_shot_flip,
        }
    }

    /// The `(τ_Q, r)` grid in sweep order.
    pub fn sweep_points(&self) -> Result<Vec<(f64, usize)>> {
        let s = &self.sweep;
        let pts = if let Some(p) = &s.points {
            if s.tau_q.is_some() || s.geomspace.is_some() || s.r.is_some() || s.r_rule.is_some() {
                return Err(Error::Config("sweep.points excludes the other sweep keys".into()));
            }
            p.clone()
        } else {
            let taus = match (&s.tau_q, s.geomspace) {
                (Some(_), Some(_)) => {
                    return Err(Error::Config("give sweep.tau_q or sweep.geomspace, not both".into()))
                }
                (Some(t), None) => t.clone(),
                (None, Some(g)) => geomspace(g.start, g.stop, g.num)?,
                (None, None) => Vec::new(),
            };
            let rs: Vec<usize> = match (&s.r, s.r_rule) {
                (Some(_), Some(_)) => return Err(Error::Config("give sweep.r or sweep.r_rule, not both".into())),
                (Some(r), None) => {
                    if r.len() != taus.len() {
                        return Err(Error::Config(format!(
                            "{} r values for {} tau_q values",
                            r.len(),
                            taus.len()
                        )));
                    }
                    r.clone()
                }
                (None, rule) => taus
                    .iter()
                    .enumerate()
                    .map(|(i, &t)| match rule.unwrap_or(RRule::Index) {
                        RRule::Index => i + 1,
                        RRule::PerTau(c) => (c * t).ceil().max(1.0) as usize,
                        RRule::Fixed(n) => n,
                    })
                    .collect(),
            };
            taus.into_iter().zip(rs).collect()
        };
        for &(t, r) in &pts {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::Config(format!("sweep tau_q = {t} (must be positive)")));
            }
            if r == 0 {
                return Err(Error::Config(format!("sweep point tau_q = {t} has r = 0")));
            }
        }
        Ok(pts)
    }

    /// First 16 hex digits of the SHA-256 of the canonical JSON form,
    /// ignoring the settings that cannot change results (workers, output).
    pub fn hash(&self) -> String {
        let canonical = Self {
            workers: 0,
            output: None,
            ..self.clone()
        };
        let json = serde_json::to_string(&canonical).expect("config serializes");
        hex::encode(&Sha256::digest(json.as_bytes())[..8])
    }
}

/// `num` points log-spaced from `start` to `stop` inclusive.
pub fn geomspace(start: f64, stop: f64, num: usize) -> Result<Vec<f64>> {
    if !(start > 0.0 && stop > 0.0) {
        return Err(Error::Config(format!(
            "geomspace bounds {start}, {stop} must be positive"
        )));
    }
    Ok(match num {
        0 => Vec::new(),
        1 => vec![start],
        _ => {
            let (a, b) = (start.ln(), stop.ln());
            (0..num)
                .map(|i| {
                    if i == num - 1 {
                        stop
                    } else {
                        (a + (b - a) * i as f64 / (num - 1) as f64).exp()
                    }
                })
                .collect()
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    /// Seed of this sweep point.
    pub seed: u64,
    pub circuit_hash: Option<String>,
    pub mitigation_ref: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointError {
    pub kind: String,
    pub message: String,
}

/// One line of a result file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointRecord {
    pub schema: u32,
    pub index: usize,
    pub n_qubits: usize,
    pub tau_q: f64,
    pub r: usize,
    pub backend: String,
    pub estimation: Estimation,
    pub shots: u64,
    pub cumulants: Option<CumulantSet>,
    pub posterior: Option<PosteriorSummary>,
    pub mitigation: Option<MitigationReport>,
    pub mps_stats: Option<MpsStats>,
    pub provenance: Provenance,
    pub error: Option<PointError>,
}

impl PointRecord {
    pub fn sweep_point(&self) -> Option<SweepPoint> {
        Some(SweepPoint {
            tau_q: self.tau_q,
            r: self.r,
            cumulants: self.cumulants?,
            shots: self.shots,
            backend: self.backend.clone(),
            mitigation_ref: self.provenance.mitigation_ref.clone(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema: u32,
    pub crate_version: String,
    pub config_hash: String,
    pub seed: u64,
    pub n_points: usize,
    pub n_failed: usize,
    pub results: PathBuf,
    pub started_unix: u64,
    pub finished_unix: u64,
}

fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Seed of sweep point `index`.
pub fn point_seed(seed: u64, index: usize) -> u64 {
    rng::derive(rng::derive(seed, rng::label::SWEEP_POINT), index as u64)
}

struct Outcome {
    shots: u64,
    cumulants: CumulantSet,
    posterior: Option<PosteriorSummary>,
    mitigation: Option<MitigationReport>,
    mps_stats: Option<MpsStats>,
}

fn run_point(cfg: &ExperimentConfig, circuit: &Circuit, seed: u64) -> Result<Outcome> {
    let backend = cfg.backend();
    let n = cfg.n_qubits;
    if cfg.estimation == Estimation::Exact {
        let ex = backend.exact_kinks(circuit)?;
        let m = ex.moments;
        let mut c = crate::model::cumulants_from_moments(m[0], m[1], m[2])?;
        c.estimator = crate::model::Estimator::Exact;
        return Ok(Outcome {
            shots: 0,
            cumulants: c,
            posterior: None,
            mitigation: None,
            mps_stats: ex.mps_stats,
        });
    }

    let noise = cfg.noise_model();
    let mcfg = &cfg.mitigation;
    let opts = cfg.mitigation_options();
    let sample = SampleOptions {
        per_shot_flip: mcfg.per_shot_flip,
    };
    let main = run_twirled(
        &backend,
        circuit,
        &noise,
        cfg.shots,
        opts.n_twirls,
        rng::derive(seed, rng::label::MAIN_RUN),
        &sample,
    )?;
    let counts = batch_counts(&main);

    if !(mcfg.readout || mcfg.renorm) {
        let mut c = estimate_cumulants_counts(&counts, n)?;
        let posterior = if cfg.bayes.enabled {
            let p = bayesian_intervals(&counts, |d| estimate_cumulants_counts(d, n), &cfg.bayes.posterior, seed)?;
            apply_ci(&mut c, &p);
            Some(p)
        } else {
            None
        };
        return Ok(Outcome {
            shots: main.len() as u64,
            cumulants: c,
            posterior,
            mitigation: None,
            mps_stats: None,
        });
    }

    // calibration sees readout errors only: |0…0⟩ and |1…1⟩ have no gates
    let confusion = if mcfg.readout {
        Some(calibrate_readout(
            &backend,
            n,
            mcfg.calibration_shots.unwrap_or(cfg.shots),
            &noise.readout_only(),
            opts.twirled_readout,
            seed,
        )?)
    } else {
        None
    };
    let reference = if mcfg.renorm {
        let rc = build_reference_circuit(circuit, mcfg.reference)?;
        let batch = run_twirled(
            &backend,
            &rc,
            &noise,
            mcfg.reference_shots.unwrap_or(cfg.shots),
            opts.n_twirls,
            rng::derive(seed, rng::label::REFERENCE_RUN),
            &sample,
        )?;
        Some((rc.hash(), batch_counts(&batch)))
    } else {
        None
    };
    let renorm_of = |ref_counts: Option<&Counts>| -> Result<RenormFactor> {
        match (&reference, ref_counts) {
            (Some((hash, _)), Some(rc)) => renorm_from_counts(n, rc, confusion.as_ref(), &opts, hash),
            _ => Ok(RenormFactor::unit()),
        }
    };
    let renorm = renorm_of(reference.as_ref().map(|r| &r.1))?;
    let mut c = mitigate_counts(n, &counts, confusion.as_ref(), &renorm, &opts)?;
    let posterior = if cfg.bayes.enabled {
        let p = match &reference {
            Some((_, rc)) => bayesian_intervals_multi(
                &[&counts, rc],
                |d| mitigate_counts(n, &d[0], confusion.as_ref(), &renorm_of(Some(&d[1]))?, &opts),
                &cfg.bayes.posterior,
                seed,
            )?,
            None => bayesian_intervals(
                &counts,
                |d| mitigate_counts(n, d, confusion.as_ref(), &renorm, &opts),
                &cfg.bayes.posterior,
                seed,
            )?,
        };
        apply_ci(&mut c, &p);
        Some(p)
    } else {
        None
    };
    Ok(Outcome {
        shots: main.len() as u64,
        cumulants: c,
        posterior,
        mitigation: Some(MitigationReport {
            tau_q: circuit.meta.schedule.tau_q,
            r: circuit.meta.r,
            renorm_value: renorm.value,
            renorm_stderr: renorm.stderr,
            variant: renorm.variant,
            n_twirls: opts.n_twirls,
            shots_total: main.len() as u64,
            confusion_summary: confusion.as_ref().map(ConfusionMatrix::summary),
        }),
        mps_stats: None,
    })
}

fn apply_ci(c: &mut CumulantSet, p: &PosteriorSummary) {
    for m in 1..=3 {
        c.set_ci95(m, p.ci[m - 1]);
    }
}

fn kind_name(k: ErrorKind) -> &'static str {
    match k {
        ErrorKind::Config => "config",
        ErrorKind::Resource => "resource",
        ErrorKind::Numerical => "numerical",
    }
}

/// Simulates one sweep point; failures are recorded in the record.
pub fn sweep_record(cfg: &ExperimentConfig, index: usize, tau_q: f64, r: usize) -> PointRecord {
    let seed = point_seed(cfg.seed, index);
    let mut rec = PointRecord {
        schema: RECORD_SCHEMA,
        index,
        n_qubits: cfg.n_qubits,
        tau_q,
        r,
        backend: cfg.backend().name().to_string(),
        estimation: cfg.estimation,
        shots: 0,
        cumulants: None,
        posterior: None,
        mitigation: None,
        mps_stats: None,
        provenance: Provenance {
            config_hash: cfg.hash(),
            seed,
            circuit_hash: None,
            mitigation_ref: None,
        },
        error: None,
    };
    let result = QuenchSchedule::new(tau_q)
        .and_then(|s| build_quench_circuit_with(cfg.n_qubits, &s, &TrotterPlan::new(r, tau_q)?, &cfg.trotter))
        .and_then(|c| {
            rec.provenance.circuit_hash = Some(c.hash());
            run_point(cfg, &c, seed)
        });
    match result {
        Ok(o) => {
            rec.shots = o.shots;
            rec.cumulants = Some(o.cumulants);
            rec.posterior = o.posterior;
            if o.mitigation.is_some() {
                rec.provenance.mitigation_ref = Some(format!("point-{index}"));
            }
            rec.mitigation = o.mitigation;
            rec.mps_stats = o.mps_stats;
        }
        Err(e) => {
            rec.error = Some(PointError {
                kind: kind_name(e.kind()).into(),
                message: e.to_string(),
            })
        }
    }
    rec
}

/// Runs every sweep point, in parallel over `cfg.workers` threads, and
/// returns the records in sweep order.
pub fn run_sweep_records(cfg: &ExperimentConfig) -> Result<Vec<PointRecord>> {
    cfg.validate()?;
    let points = cfg.sweep_points()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    Ok(pool.install(|| {
        points
            .par_iter()
            .enumerate()
            .map(|(i, &(t, r))| sweep_record(cfg, i, t, r))
            .collect()
    }))
}

/// Path of the manifest written next to `results`.
pub fn manifest_path(results: &Path) -> PathBuf {
    let mut name = results.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    results.with_file_name(name)
}

/// Runs the sweep and writes the JSONL result file plus its manifest.
pub fn run_sweep(cfg: &ExperimentConfig, output: &Path) -> Result<RunManifest> {
    let started = unix_now();
    let records = run_sweep_records(cfg)?;
    if let Some(dir) = output.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    write_records(output, &records)?;
    let manifest = RunManifest {
        schema: RECORD_SCHEMA,
        crate_version: env!("CARGO_PKG_VERSION").into(),
        config_hash: cfg.hash(),
        seed: cfg.seed,
        n_points: records.len(),
        n_failed: records.iter().filter(|r| r.error.is_some()).count(),
        results: output.to_path_buf(),
        started_unix: started,
        finished_unix: unix_now(),
    };
    fs::write(manifest_path(output), serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(manifest)
}

pub fn write_records(path: &Path, records: &[PointRecord]) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_records(path: &Path) -> Result<Vec<PointRecord>> {
    let f = BufReader::new(fs::File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in f.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: PointRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            msg: e.to_string(),
        })?;
        if rec.schema != RECORD_SCHEMA {
            return Err(Error::Parse {
                line: i + 1,
                msg: format!("record schema {} (expected {RECORD_SCHEMA})", rec.schema),
            });
        }
        out.push(rec);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
n_qubits = 4
seed = 11
shots = 400

[sweep]
tau_q = [0.5, 1.0, 2.0]
"#;

    #[test]
    fn defaults_and_index_rule() {
        let cfg = ExperimentConfig::from_toml(BASE).unwrap();
        assert_eq!(cfg.backend, BackendKind::Statevector);
        assert_eq!(cfg.n_twirls, 50);
        assert_eq!(cfg.sweep_points().unwrap(), vec![(0.5, 1), (1.0, 2), (2.0, 3)]);
        assert_eq!(cfg.mps.trunc_tol, 1e-10);
    }

    #[test]
    fn r_rules() {
        let per_tau = BASE.replace("[sweep]", "[sweep]\nr_rule = { per_tau = 3.0 }");
        let cfg = ExperimentConfig::from_toml(&per_tau).unwrap();
        assert_eq!(cfg.sweep_points().unwrap(), vec![(0.5, 2), (1.0, 3), (2.0, 6)]);
        let fixed = BASE.replace("[sweep]", "[sweep]\nr_rule = { fixed = 7 }");
        let cfg = ExperimentConfig::from_toml(&fixed).unwrap();
        assert!(cfg.sweep_points().unwrap().iter().all(|p| p.1 == 7));
        let geo = "n_qubits = 3\n[sweep]\ngeomspace = { start = 1.0, stop = 100.0, num = 3 }\nr_rule = \"index\"";
        let cfg = ExperimentConfig::from_toml(geo).unwrap();
        let pts = cfg.sweep_points().unwrap();
        assert!((pts[1].0 - 10.0).abs() < 1e-12 && pts[2].0 == 100.0);
    }

    #[test]
    fn rejects_bad_configs() {
        for bad in [
            "n_qubits = 30\n",
            "n_qubits = 4\n[sweep]\ntau_q = [-1.0]\n",
            "n_qubits = 4\nshots = 0\n",
            "n_qubits = 4\nbogus = 1\n",
            "n_qubits = 4\n[sweep]\ntau_q = [1.0]\nr = [1, 2]\n",
            "n_qubits = 4\nestimation = \"exact\"\n[noise]\nglobal_depol = 0.1\n",
            "n_qubits = 4\n[noise]\nglobal_depol = 1.5\n",
        ] {
            let e = ExperimentConfig::from_toml(bad).unwrap_err();
            assert_eq!(e.kind(), ErrorKind::Config, "{bad}: {e}");
        }
        assert!(ExperimentConfig::from_toml("n_qubits = 30\nbackend = \"mps\"\n").is_ok());
    }

    #[test]
    fn records_are_reproducible() {
        let cfg = ExperimentConfig::from_toml(BASE).unwrap();
        let a = run_sweep_records(&cfg).unwrap();
        let b = run_sweep_records(&ExperimentConfig {
            workers: 1,
            ..cfg.clone()
        })
        .unwrap();
        let line = |r: &[PointRecord]| r.iter().map(|x| serde_json::to_string(x).unwrap()).collect::<Vec<_>>();
        assert_eq!(line(&a), line(&b));
        assert!(a.iter().all(|r| r.error.is_none() && r.shots == 400));
        assert_ne!(a[0].provenance.seed, a[1].provenance.seed);
    }

    #[test]
    fn exact_mode_matches_backend() {
        let text = BASE.replace("shots = 400", "estimation = \"exact\"");
        let cfg = ExperimentConfig::from_toml(&text).unwrap();
        let recs = run_sweep_records(&cfg).unwrap();
        let c = recs[2].cumulants.unwrap();
        let circuit = build_quench_circuit_with(
            4,
            &QuenchSchedule::new(2.0).unwrap(),
            &TrotterPlan::new(3, 2.0).unwrap(),
            &TrotterOptions::default(),
        )
        .unwrap();
        let want = Backend::StateVector.exact_cumulants(&circuit).unwrap();
        assert_eq!(c.kappa1, want.kappa1);
        let mps = run_sweep_records(&ExperimentConfig {
            backend: BackendKind::Mps,
            ..cfg
        })
        .unwrap();
        assert!((mps[2].cumulants.unwrap().kappa1 - want.kappa1).abs() < 1e-9);
        assert!(mps[2].mps_stats.is_some());
    }

    #[test]
    fn failing_point_is_recorded() {
        let text = "n_qubits = 4\nbackend = \"mps\"\nestimation = \"exact\"\n[mps]\nmax_bond = 1\n[sweep]\npoints = [[0.1, 1], [3.0, 20]]\n";
        let cfg = ExperimentConfig::from_toml(text).unwrap();
        let recs = run_sweep_records(&cfg).unwrap();
        assert_eq!(recs.len(), 2);
        let err = recs[1].error.as_ref().unwrap();
        assert_eq!(err.kind, "numerical");
        assert!(recs[1].cumulants.is_none());
    }

    #[test]
    fn mitigated_sweep_with_posterior() {
        let text = r#"
n_qubits = 4
seed = 3
shots = 2000
n_twirls = 10
[sweep]
points = [[1.0, 2]]
[noise]
global_depol = 0.2
readout = [0.02, 0.04]
[mitigation]
twirl = true
readout = true
renorm = true
[bayes]
enabled = true
n_replicas = 50
"#;
        let cfg = ExperimentConfig::from_toml(text).unwrap();
        let rec = &run_sweep_records(&cfg).unwrap()[0];
        assert!(rec.error.is_none(), "{:?}", rec.error);
        let m = rec.mitigation.as_ref().unwrap();
        assert!(m.renorm_value > 0.6 && m.renorm_value < 1.0);
        let c = rec.cumulants.unwrap();
        assert!(c.ci95_1.is_some());
        assert_eq!(rec.provenance.mitigation_ref.as_deref(), Some("point-0"));
    }

    #[test]
    fn files_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("res.jsonl");
        let cfg = ExperimentConfig::from_toml(BASE).unwrap();
        let m = run_sweep(&cfg, &out).unwrap();
        assert_eq!(m.n_points, 3);
        let back = read_records(&out).unwrap();
        assert_eq!(back, run_sweep_records(&cfg).unwrap());
        assert!(manifest_path(&out).exists());
        let empty = ExperimentConfig::from_toml("n_qubits = 3\n").unwrap();
        let out2 = dir.path().join("empty.jsonl");
        assert_eq!(run_sweep(&empty, &out2).unwrap().n_points, 0);
        assert_eq!(fs::read_to_string(&out2).unwrap(), "");
    }
}
