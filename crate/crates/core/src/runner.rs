//! Experiment configs, batch execution and plot-data output.
//!
//! A config is one JSON document with a `kind` field. Frequencies are given in
//! Hz and durations in μs; everything is converted to rad/s and seconds before
//! reaching the library.

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use std::f64::consts::TAU;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::characterization::{
    fit_populations, ramsey_stark_scan, sample_signal, sideband_signal, FitConfig, PopulationDistribution,
    RateParam, SidebandKind,
};
use crate::fock::{MotionalState, StateSpec, Truncation};
use crate::pulse::TrapConfig;
use crate::qml::{
    standard_dataset, fock_centroids, kmeans, knn_classify, standard_dataset_specs, standard_trial_specs,
    ClusteringState, Dataset, KMeansConfig, KnnResult,
};
use crate::swap_test::{delay_scan, overlap_matrix_csv, revival_peaks, OverlapEngine, OverlapFn, OverlapMode, PairKey};
use crate::synthesis::{compensate_stark, synthesize, verify_schedule, verify_schedule_with, StarkModel};
use crate::wigner::{linspace, wigner_grid};

/// Environment variable naming the default output directory.
pub const OUTPUT_DIR_ENV: &str = "BOSONIC_OUTPUT_DIR";
pub const DEFAULT_OUTPUT_DIR: &str = "bosonic-out";

#[derive(Debug)]
pub enum RunnerError {
    Parse(String),
    Validation(String),
    Runtime(String),
}

impl RunnerError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunnerError::Parse(_) => 2,
            RunnerError::Validation(_) => 3,
            RunnerError::Runtime(_) => 1,
        }
    }
}

impl std::fmt::Display for RunnerError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunnerError::Parse(m) => write!(f, "config parse error: {m}"),
            RunnerError::Validation(m) => write!(f, "invalid config: {m}"),
            RunnerError::Runtime(m) => write!(f, "run failed: {m}"),
        }
    }
}

impl std::error::Error for RunnerError {}

impl From<crate::Error> for RunnerError {
    fn from(e: crate::Error) -> Self {
        RunnerError::Runtime(e.to_string())
    }
}

type RResult<T> = std::result::Result<T, RunnerError>;

/// Trap overrides in Hz; unset fields keep the defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrapOverrides {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode_a_hz: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode_b_hz: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode_c_hz: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coupling_hz: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub carrier_rabi_hz: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rsb_rabi_hz: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stark_shift_hz: Option<f64>,
}

impl TrapOverrides {
    pub fn resolve(&self) -> TrapConfig {
        let mut t = TrapConfig::default();
        let set = |slot: &mut f64, v: Option<f64>| {
            if let Some(hz) = v {
                *slot = TAU * hz;
            }
        };
        set(&mut t.omega_a, self.mode_a_hz);
        set(&mut t.omega_b, self.mode_b_hz);
        set(&mut t.omega_c, self.mode_c_hz);
        set(&mut t.g, self.coupling_hz);
        set(&mut t.omega_carrier, self.carrier_rabi_hz);
        set(&mut t.omega_rsb, self.rsb_rabi_hz);
        set(&mut t.stark_shift, self.stark_shift_hz);
        t
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedState {
    pub id: String,
    pub state: StateSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StatePair {
    pub id: String,
    pub b: StateSpec,
    pub c: StateSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WignerWindow {
    pub half_width: f64,
    pub resolution: usize,
}

impl Default for WignerWindow {
    fn default() -> Self {
        Self {
            half_width: 5.0,
            resolution: 61,
        }
    }
}

fn default_k_clusters() -> usize {
    3
}

fn default_k_neighbors() -> usize {
    7
}

fn default_scan_us() -> f64 {
    30.0
}

fn default_points() -> usize {
    601
}

fn default_ramsey_us() -> f64 {
    400.0
}

fn default_characterize_us() -> f64 {
    400.0
}

fn default_j_max() -> usize {
    6
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Experiment {
    Kmeans {
        /// Defaults to the fifteen-state dataset.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        dataset: Option<Vec<NamedState>>,
        #[serde(default = "default_k_clusters")]
        k: usize,
        /// Defaults to `|0⟩, |1⟩, …, |k-1⟩`.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        init: Option<Vec<StateSpec>>,
        #[serde(default)]
        kmeans: KMeansConfig,
        #[serde(default)]
        wigner: WignerWindow,
    },
    Knn {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        dataset: Option<Vec<NamedState>>,
        /// Defaults to the five standard trial states.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        trials: Option<Vec<NamedState>>,
        #[serde(default = "default_k_neighbors")]
        k: usize,
        #[serde(default)]
        wigner: WignerWindow,
    },
    SwapMatrix {
        rows: Vec<NamedState>,
        cols: Vec<NamedState>,
    },
    DelayScan {
        /// Defaults to the Φ₁/Φ₁ and Φ₁/Φ₂ pairs.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        pairs: Option<Vec<StatePair>>,
        #[serde(default = "default_scan_us")]
        tau_max_us: f64,
        #[serde(default = "default_points")]
        points: usize,
    },
    Synthesize {
        target: StateSpec,
        #[serde(default = "default_true")]
        compensate: bool,
    },
    Characterize {
        populations: Vec<f64>,
        #[serde(default = "default_sideband")]
        sideband: SidebandKind,
        #[serde(default)]
        gamma: f64,
        #[serde(default = "default_characterize_us")]
        tau_max_us: f64,
        #[serde(default = "default_points")]
        points: usize,
        #[serde(default = "default_j_max")]
        j_max: usize,
        #[serde(default)]
        fit_rates: bool,
    },
    RamseyStark {
        #[serde(default = "default_ramsey_us")]
        tau_max_us: f64,
        #[serde(default = "default_points")]
        points: usize,
    },
}

fn default_sideband() -> SidebandKind {
    SidebandKind::Red
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(flatten)]
    pub experiment: Experiment,
    #[serde(default)]
    pub trap: TrapOverrides,
    /// 0 means noiseless (exact) evaluation.
    #[serde(default)]
    pub shots: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn kind(&self) -> &'static str {
        match self.experiment {
            Experiment::Kmeans { .. } => "kmeans",
            Experiment::Knn { .. } => "knn",
            Experiment::SwapMatrix { .. } => "swap_matrix",
            Experiment::DelayScan { .. } => "delay_scan",
            Experiment::Synthesize { .. } => "synthesize",
            Experiment::Characterize { .. } => "characterize",
            Experiment::RamseyStark { .. } => "ramsey_stark",
        }
    }

    fn overlap_mode(&self) -> OverlapMode {
        match (self.shots, self.seed) {
            (0, _) => OverlapMode::Exact,
            (shots, Some(master_seed)) => OverlapMode::Sampled { shots, master_seed },
            (_, None) => unreachable!("validated"),
        }
    }
}

pub fn parse_config(text: &str) -> RResult<ExperimentConfig> {
    serde_json::from_str(text).map_err(|e| RunnerError::Parse(e.to_string()))
}

pub fn load_config(path: &Path) -> RResult<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| RunnerError::Parse(format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text)
}

fn invalid(msg: impl Into<String>) -> RunnerError {
    RunnerError::Validation(msg.into())
}

fn check_grid(tau_max_us: f64, points: usize) -> RResult<()> {
    if tau_max_us.is_nan() || tau_max_us <= 0.0 || !tau_max_us.is_finite() {
        return Err(invalid(format!("field `tau_max_us` must be > 0, got {tau_max_us}")));
    }
    if points < 3 {
        return Err(invalid(format!("field `points` must be at least 3, got {points}")));
    }
    Ok(())
}

fn realize(spec: &StateSpec, what: &str) -> RResult<MotionalState> {
    spec.realize_with(&Truncation::default())
        .map_err(|e| invalid(format!("{what}: {e}")))
}

fn dataset_from(named: &Option<Vec<NamedState>>) -> RResult<Dataset> {
    match named {
        None => Ok(standard_dataset()),
        Some(list) => Dataset::from_specs(
            list.iter().map(|n| (n.id.clone(), n.state.clone(), n.label)).collect(),
            &Truncation::default(),
        )
        .map_err(|e| invalid(format!("field `dataset`: {e}"))),
    }
}

/// Check everything that can be checked without running the experiment.
pub fn validate(config: &ExperimentConfig) -> RResult<()> {
    if config.shots > 0 && config.seed.is_none() {
        return Err(invalid(format!(
            "missing field `seed`: required when shots > 0 (shots = {})",
            config.shots
        )));
    }
    config
        .trap
        .resolve()
        .validate()
        .map_err(|e| invalid(format!("field `trap`: {e}")))?;
    match &config.experiment {
        Experiment::Kmeans { dataset, k, init, kmeans, wigner } => {
            let data = dataset_from(dataset)?;
            if *k == 0 {
                return Err(invalid("field `k` must be at least 1"));
            }
            if let Some(init) = init {
                if init.len() != *k {
                    return Err(invalid(format!("field `init` has {} states, expected k = {k}", init.len())));
                }
                for s in init {
                    realize(s, "field `init`")?;
                }
            }
            if data.is_empty() {
                return Err(invalid("field `dataset` is empty"));
            }
            if kmeans.centroid_dim == 0 || kmeans.max_iter == 0 {
                return Err(invalid("fields `kmeans.centroid_dim` and `kmeans.max_iter` must be >= 1"));
            }
            check_wigner(wigner)?;
        }
        Experiment::Knn { dataset, trials, k, wigner } => {
            let data = dataset_from(dataset)?;
            if *k == 0 || *k > data.len() {
                return Err(invalid(format!("field `k` = {k} out of range 1..={}", data.len())));
            }
            if let Some(e) = data.entries().iter().find(|e| e.label.is_none()) {
                return Err(invalid(format!("field `dataset`: state `{}` has no label", e.id)));
            }
            if let Some(trials) = trials {
                for t in trials {
                    realize(&t.state, &format!("trial `{}`", t.id))?;
                }
            }
            check_wigner(wigner)?;
        }
        Experiment::SwapMatrix { rows, cols } => {
            if rows.is_empty() || cols.is_empty() {
                return Err(invalid("fields `rows` and `cols` must be non-empty"));
            }
            for n in rows.iter().chain(cols) {
                realize(&n.state, &format!("state `{}`", n.id))?;
            }
        }
        Experiment::DelayScan { pairs, tau_max_us, points } => {
            check_grid(*tau_max_us, *points)?;
            if let Some(pairs) = pairs {
                for p in pairs {
                    realize(&p.b, &format!("pair `{}` field `b`", p.id))?;
                    realize(&p.c, &format!("pair `{}` field `c`", p.id))?;
                }
            }
        }
        Experiment::Synthesize { target, .. } => {
            realize(target, "field `target`")?;
        }
        Experiment::Characterize { populations, gamma, tau_max_us, points, j_max, .. } => {
            check_grid(*tau_max_us, *points)?;
            PopulationDistribution::new(populations.clone())
                .map_err(|e| invalid(format!("field `populations`: {e}")))?;
            if populations.len() > j_max + 1 {
                return Err(invalid(format!(
                    "field `populations` has {} levels, more than j_max + 1 = {}",
                    populations.len(),
                    j_max + 1
                )));
            }
            if gamma.is_nan() || *gamma < 0.0 {
                return Err(invalid("field `gamma` must be >= 0"));
            }
        }
        Experiment::RamseyStark { tau_max_us, points } => check_grid(*tau_max_us, *points)?,
    }
    Ok(())
}

fn check_wigner(w: &WignerWindow) -> RResult<()> {
    if w.half_width.is_nan() || w.half_width <= 0.0 || w.resolution < 2 {
        return Err(invalid("field `wigner` needs half_width > 0 and resolution >= 2"));
    }
    Ok(())
}

/// Result files of one run, in write order.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub files: Vec<(String, String)>,
}

impl RunOutput {
    fn push(&mut self, name: &str, contents: String) {
        self.files.push((name.to_string(), contents));
    }

    fn push_json(&mut self, name: &str, value: &impl Serialize) {
        let mut text = serde_json::to_string_pretty(value).expect("results serialize");
        text.push('\n');
        self.push(name, text);
    }

    pub fn get(&self, name: &str) -> Option<&str> {
        self.files.iter().find(|(n, _)| n == name).map(|(_, c)| c.as_str())
    }
}

/// Execute a validated config and return its result files (manifest excluded).
pub fn execute(config: &ExperimentConfig) -> RResult<RunOutput> {
    validate(config)?;
    let trap = config.trap.resolve();
    let mut out = RunOutput { files: Vec::new() };
    match &config.experiment {
        Experiment::Kmeans { dataset, k, init, kmeans: kcfg, wigner } => {
            let data = dataset_from(dataset)?;
            let init = match init {
                Some(list) => list.iter().map(|s| realize(s, "field `init`")).collect::<RResult<Vec<_>>>()?,
                None => fock_centroids(*k),
            };
            let engine = OverlapEngine::new(config.overlap_mode());
            let traj = kmeans(&data, *k, &init, &engine, kcfg)?;
            emit_kmeans(&mut out, &data, &traj, &trap, wigner);
        }
        Experiment::Knn { dataset, trials, k, wigner } => {
            let data = dataset_from(dataset)?;
            let trials = trial_states(trials)?;
            let engine = OverlapEngine::new(config.overlap_mode());
            let results = trials
                .iter()
                .enumerate()
                .map(|(i, (id, s))| knn_classify(id, s, &data, *k, &engine, i))
                .collect::<crate::Result<Vec<_>>>()?;
            emit_knn(&mut out, &trials, &results, wigner);
        }
        Experiment::SwapMatrix { rows, cols } => {
            let engine = OverlapEngine::new(config.overlap_mode());
            let r: Vec<MotionalState> = rows.iter().map(|n| realize(&n.state, &n.id)).collect::<RResult<_>>()?;
            let c: Vec<MotionalState> = cols.iter().map(|n| realize(&n.state, &n.id)).collect::<RResult<_>>()?;
            let cells = r
                .iter()
                .enumerate()
                .map(|(i, a)| {
                    c.iter()
                        .enumerate()
                        .map(|(j, b)| engine.overlap(a, b, PairKey::new(0, i, j)))
                        .collect::<crate::Result<Vec<_>>>()
                })
                .collect::<crate::Result<Vec<_>>>()?;
            let rn: Vec<String> = rows.iter().map(|n| n.id.clone()).collect();
            let cn: Vec<String> = cols.iter().map(|n| n.id.clone()).collect();
            out.push("overlap_matrix.csv", overlap_matrix_csv(&rn, &cn, &cells));
        }
        Experiment::DelayScan { pairs, tau_max_us, points } => {
            let pairs = match pairs {
                Some(p) => p.clone(),
                None => default_delay_pairs(),
            };
            let taus = linspace(0.0, tau_max_us * 1e-6, *points);
            let mut series = Vec::new();
            for p in &pairs {
                let b = realize(&p.b, &p.id)?;
                let c = realize(&p.c, &p.id)?;
                series.push(delay_scan(&b, &c, &trap, &taus)?);
            }
            emit_delay(&mut out, &pairs, &taus, &series, &trap);
        }
        Experiment::Synthesize { target, compensate } => {
            let t = realize(target, "field `target`")?;
            let sched = synthesize(&t)?;
            let model = StarkModel::from_trap(&trap);
            let ideal = verify_schedule(&sched, &t)?;
            let stark = verify_schedule_with(&sched, &t, Some(model))?;
            let fixed_sched = compensate_stark(&sched, &trap);
            let fixed = verify_schedule_with(&fixed_sched, &t, Some(model))?;
            let emitted = if *compensate { &fixed_sched } else { &sched };
            out.push("schedule.json", emitted.to_json() + "\n");
            out.push_json(
                "synthesis_report.json",
                &json!({
                    "dim": t.dim(),
                    "pairs": sched.pairs(),
                    "sideband_time_us": sched.sideband_time(&trap) * 1e6,
                    "ideal": ideal,
                    "with_stark_uncompensated": stark,
                    "with_stark_compensated": fixed,
                }),
            );
        }
        Experiment::Characterize { populations, sideband, gamma, tau_max_us, points, j_max, fit_rates } => {
            let mut p = populations.clone();
            p.resize(j_max + 1, 0.0);
            let p = PopulationDistribution::new(p).map_err(|e| invalid(e.to_string()))?;
            let taus = linspace(0.0, tau_max_us * 1e-6, *points);
            let clean = sideband_signal(&p, trap.omega_rsb, *gamma, &taus, *sideband)?;
            let signal = match (config.shots, config.seed) {
                (0, _) => clean.clone(),
                (shots, Some(seed)) => sample_signal(&clean, shots, seed)?,
                _ => unreachable!("validated"),
            };
            let mut fc = FitConfig::fixed(trap.omega_rsb, *gamma);
            fc.j_max = *j_max;
            if *fit_rates {
                fc.omega = RateParam::Fitted {
                    lo: 0.8 * trap.omega_rsb,
                    hi: 1.2 * trap.omega_rsb,
                };
                fc.gamma = RateParam::Fitted {
                    lo: 0.0,
                    hi: 10.0 * gamma.max(100.0),
                };
            }
            let fit = fit_populations(&signal, &fc)?;
            let model = sideband_signal(&fit.populations, fit.omega_rsb, fit.gamma, &taus, *sideband)?;
            out.push("signal.csv", signal.to_csv());
            out.push_json(
                "fit.json",
                &json!({
                    "true_populations": p,
                    "fit": fit,
                    "sqrt_amplitudes": fit.populations.sqrt_amplitudes(),
                }),
            );
            let mut overlay = String::from("tau_us,data,model\n");
            for ((t, d), m) in taus.iter().zip(&signal.pe).zip(&model.pe) {
                let _ = writeln!(overlay, "{},{d},{m}", t * 1e6);
            }
            out.push("fit_overlay.csv", overlay);
        }
        Experiment::RamseyStark { tau_max_us, points } => {
            let taus = linspace(0.0, tau_max_us * 1e-6, *points);
            let off = ramsey_stark_scan(trap.stark_shift, &taus, false)?;
            let on = ramsey_stark_scan(trap.stark_shift, &taus, true)?;
            let mut csv = String::from("tau_us,pe_uncompensated,pe_compensated\n");
            for ((t, a), (_, b)) in off.iter().zip(&on) {
                let _ = writeln!(csv, "{},{a},{b}", t * 1e6);
            }
            out.push("figS2b_ramsey.csv", csv);
        }
    }
    Ok(out)
}

fn trial_states(trials: &Option<Vec<NamedState>>) -> RResult<Vec<(String, MotionalState)>> {
    match trials {
        Some(list) => list.iter().map(|t| Ok((t.id.clone(), realize(&t.state, &t.id)?))).collect(),
        None => standard_trial_specs()
            .into_iter()
            .map(|(id, spec, _)| Ok((id.clone(), realize(&spec, &id)?)))
            .collect(),
    }
}

/// Φ₁ = ½(|0⟩+|1⟩+|2⟩+|3⟩) against itself and against Φ₂ = ½(|0⟩-|1⟩+|2⟩-|3⟩).
pub fn default_delay_pairs() -> Vec<StatePair> {
    let phi1 = StateSpec::Features { x: vec![1.0; 4] };
    let phi2 = StateSpec::Features {
        x: vec![1.0, -1.0, 1.0, -1.0],
    };
    vec![
        StatePair {
            id: "phi1_phi1".into(),
            b: phi1.clone(),
            c: phi1.clone(),
        },
        StatePair {
            id: "phi1_phi2".into(),
            b: phi1,
            c: phi2,
        },
    ]
}

fn amplitude_columns(d: usize) -> String {
    (1..=d).map(|j| format!(",x{j}")).collect()
}

fn real_parts(s: &MotionalState, d: usize) -> String {
    s.padded(d).iter().map(|c| format!(",{}", c.re)).collect()
}

fn emit_kmeans(out: &mut RunOutput, data: &Dataset, traj: &[ClusteringState], trap: &TrapConfig, w: &WignerWindow) {
    let k = traj[0].centroids.len();
    let records: Vec<Value> = traj
        .iter()
        .map(|s| {
            json!({
                "iteration": s.iteration,
                "converged": s.converged,
                "centroids": s.centroids,
                "assignments": data.entries().iter().zip(&s.assignments)
                    .map(|(e, a)| json!({"id": e.id, "cluster": a})).collect::<Vec<_>>(),
                "overlaps": s.overlaps,
            })
        })
        .collect();
    let last = traj.last().expect("at least one step");
    out.push_json(
        "kmeans_trajectory.json",
        &json!({
            "steps": records,
            "converged": last.converged,
            "assignment_steps": traj.len(),
        }),
    );

    let cluster_cols: String = (1..=k).map(|c| format!(",c{c}")).collect();
    let mut fig2a = format!("step,id{cluster_cols},assigned\n");
    for s in traj {
        for (e, (row, a)) in data.entries().iter().zip(s.overlaps.iter().zip(&s.assignments)) {
            let cells: String = row.iter().map(|o| format!(",{}", o.estimate)).collect();
            let _ = writeln!(fig2a, "{},{}{cells},{a}", s.iteration, e.id);
        }
    }
    out.push("fig2a_overlaps.csv", fig2a);

    let d = 5;
    let mut fig2b = format!("id,true_label,cluster{}\n", amplitude_columns(d));
    for (e, a) in data.entries().iter().zip(&last.assignments) {
        let label = e.label.map(|l| l.to_string()).unwrap_or_default();
        let _ = writeln!(fig2b, "{},{label},{a}{}", e.id, real_parts(&e.state, d));
    }
    out.push("fig2b_scatter.csv", fig2b);

    let mut s3 = format!("step,role,id,cluster{}\n", amplitude_columns(d));
    for s in traj {
        for (c, cent) in s.centroids.iter().enumerate() {
            let _ = writeln!(s3, "{},centroid,c{},{}{}", s.iteration, c + 1, c + 1, real_parts(cent, d));
        }
        for (e, a) in data.entries().iter().zip(&s.assignments) {
            let _ = writeln!(s3, "{},data,{},{a}{}", s.iteration, e.id, real_parts(&e.state, d));
        }
    }
    out.push("figS3_steps.csv", s3);

    // blue-sideband signals of the initial centroids
    let taus = linspace(0.0, 4.0 * TAU / trap.omega_rsb, 201);
    let mut s5 = format!("tau_us{cluster_cols}\n");
    let signals: Vec<Vec<f64>> = traj[0]
        .centroids
        .iter()
        .map(|c| {
            let p = PopulationDistribution::new(c.populations()).expect("unit norm");
            sideband_signal(&p, trap.omega_rsb, 0.0, &taus, SidebandKind::Blue)
                .map(|s| s.pe)
                .unwrap_or_default()
        })
        .collect();
    for (i, t) in taus.iter().enumerate() {
        let cells: String = signals.iter().map(|s| format!(",{}", s[i])).collect();
        let _ = writeln!(s5, "{}{cells}", t * 1e6);
    }
    out.push("figS5_blue_sideband.csv", s5);

    let grids: Vec<Value> = last
        .centroids
        .iter()
        .enumerate()
        .map(|(c, s)| {
            json!({"id": format!("c{}", c + 1),
                   "grid": wigner_grid(s, (-w.half_width, w.half_width), (-w.half_width, w.half_width), w.resolution)})
        })
        .collect();
    out.push_json("wigner_centroids.json", &grids);
}

fn emit_knn(out: &mut RunOutput, trials: &[(String, MotionalState)], results: &[KnnResult], w: &WignerWindow) {
    out.push_json("knn_results.json", &results);
    let clusters = results.iter().map(|r| r.proportions.len()).max().unwrap_or(0);
    let cols: String = (1..=clusters).map(|c| format!(",p{c}")).collect();
    let mut fig3a = format!("trial{cols},winner\n");
    for r in results {
        let mut p = r.proportions.clone();
        p.resize(clusters, 0.0);
        let cells: String = p.iter().map(|x| format!(",{x}")).collect();
        let _ = writeln!(fig3a, "{}{cells},{}", r.trial_id, r.winner);
    }
    out.push("fig3a_proportions.csv", fig3a);
    let mut s4 = String::from("trial,rank,id,label,overlap\n");
    for r in results {
        for (i, n) in r.neighbors.iter().enumerate() {
            let _ = writeln!(s4, "{},{},{},{},{}", r.trial_id, i + 1, n.id, n.label, n.overlap);
        }
    }
    out.push("figS4_knn_overlaps.csv", s4);
    let grids: Vec<Value> = trials
        .iter()
        .map(|(id, s)| {
            json!({"id": id,
                   "grid": wigner_grid(s, (-w.half_width, w.half_width), (-w.half_width, w.half_width), w.resolution)})
        })
        .collect();
    out.push_json("fig3b_wigner.json", &grids);
}

fn emit_delay(out: &mut RunOutput, pairs: &[StatePair], taus: &[f64], series: &[Vec<(f64, f64)>], trap: &TrapConfig) {
    let cols: String = pairs.iter().map(|p| format!(",{}", p.id)).collect();
    let mut csv = format!("tau_us{cols}\n");
    for (i, t) in taus.iter().enumerate() {
        let cells: String = series.iter().map(|s| format!(",{}", s[i].1)).collect();
        let _ = writeln!(csv, "{}{cells}", t * 1e6);
    }
    out.push("figS1_delay_scan.csv", csv);
    let summary: Vec<Value> = pairs
        .iter()
        .zip(series)
        .map(|(p, s)| {
            let peaks = revival_peaks(s);
            let period = if peaks.len() >= 2 {
                Some((peaks[peaks.len() - 1] - peaks[0]) / (peaks.len() - 1) as f64 * 1e6)
            } else {
                None
            };
            json!({"id": p.id, "peaks_us": peaks.iter().map(|t| t * 1e6).collect::<Vec<_>>(), "period_us": period})
        })
        .collect();
    out.push_json(
        "delay_scan_summary.json",
        &json!({"expected_period_us": TAU / trap.beat_bc() * 1e6, "series": summary}),
    );
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    kind: &'a str,
    version: &'a str,
    seed: Option<u64>,
    shots: u64,
    config: &'a ExperimentConfig,
    files: Vec<&'a str>,
    timestamp_unix: u64,
}

/// Directory precedence: explicit argument, config field, environment, default.
pub fn resolve_output_dir(config: &ExperimentConfig, explicit: Option<&Path>) -> PathBuf {
    explicit
        .map(Path::to_path_buf)
        .or_else(|| config.output_dir.clone())
        .or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR))
}

/// Run a config and write its result files plus `manifest.json`.
pub fn run_to_dir(config: &ExperimentConfig, dir: &Path) -> RResult<RunOutput> {
    let out = execute(config)?;
    let io = |e: std::io::Error| RunnerError::Runtime(format!("writing to {}: {e}", dir.display()));
    std::fs::create_dir_all(dir).map_err(io)?;
    for (name, contents) in &out.files {
        std::fs::write(dir.join(name), contents).map_err(io)?;
    }
    let manifest = Manifest {
        kind: config.kind(),
        version: env!("CARGO_PKG_VERSION"),
        seed: config.seed,
        shots: config.shots,
        config,
        files: out.files.iter().map(|(n, _)| n.as_str()).collect(),
        timestamp_unix: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
    };
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    std::fs::write(dir.join("manifest.json"), text).map_err(io)?;
    Ok(out)
}

/// The dataset as printable JSON.
pub fn dataset_json() -> String {
    let data = standard_dataset();
    let rows: Vec<Value> = standard_dataset_specs()
        .iter()
        .zip(data.entries())
        .map(|((_, spec, _), e)| {
            json!({"id": e.id, "label": e.label, "spec": spec, "dim": e.state.dim(),
                   "amplitudes": e.state.amplitudes().iter().map(|c| c.re).collect::<Vec<_>>()})
        })
        .collect();
    serde_json::to_string_pretty(&rows).expect("dataset serializes") + "\n"
}

/// Schedule JSON for a target given as a `StateSpec` document.
pub fn schedule_json(spec_text: &str, trap: &TrapConfig, compensate: bool) -> RResult<String> {
    let spec: StateSpec = serde_json::from_str(spec_text).map_err(|e| RunnerError::Parse(e.to_string()))?;
    let t = realize(&spec, "target")?;
    let s = synthesize(&t)?;
    let s = if compensate { compensate_stark(&s, trap) } else { s };
    Ok(s.to_json() + "\n")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_seed_is_validation_error() {
        let c = parse_config(r#"{"kind":"kmeans","shots":700}"#).unwrap();
        let e = validate(&c).unwrap_err();
        assert_eq!(e.exit_code(), 3);
        assert!(e.to_string().contains("seed"), "{e}");
    }

    #[test]
    fn parse_errors_exit_2() {
        let e = parse_config(r#"{"kind":"nope"}"#).unwrap_err();
        assert_eq!(e.exit_code(), 2);
        let e = parse_config("{").unwrap_err();
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn trap_overrides_in_hz() {
        let c = parse_config(r#"{"kind":"ramsey_stark","trap":{"stark_shift_hz":1000.0}}"#).unwrap();
        assert_eq!(c.trap.resolve().stark_shift, TAU * 1000.0);
        assert!(parse_config(r#"{"kind":"ramsey_stark","trap":{"bogus":1}}"#).is_err());
    }

    #[test]
    fn ramsey_output_shape() {
        let c = parse_config(r#"{"kind":"ramsey_stark","points":11}"#).unwrap();
        let out = execute(&c).unwrap();
        let csv = out.get("figS2b_ramsey.csv").unwrap();
        assert_eq!(csv.lines().count(), 12);
    }
}
