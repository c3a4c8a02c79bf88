//! Command-line front end: run files, subcommands and the files they write.

use std::collections::BTreeMap;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::mor::{
    io::write_reduced, mbar_settling_time, mbar_travel_time, mbar_travel_time_with_initial_state, reduce_bpod, reduce_bt, reduce_pod, reduce_sbpod, reduce_with_initial_state,
    reduce_sbpod_ltv, Method, MorOptions, OrderSelection, ReducedLtv, ReducedModel, SbpodMode, SettlingBound,
    SpectrumReport, TravelBound, DEFAULT_SAFETY,
};
use crate::mpc::{run_mpc, MpcConfig, MpcResult, Predictor};
use crate::netmodel::{load_network, validate_courant, HydraulicScenario, Network};
use crate::sim::{rmse, spectral_radius_sparse, step_experiment, ComparisonReport, REPORT_HEADER};
use crate::wqss::{assemble, simulate, step_input, write_triplets, IoPlacement, LtiSystem, LtvSystem, StateSpace};

#[derive(Debug, Parser)]
#[command(name = "wqmor", version, about = "Water-quality network models, model order reduction and MPC")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Assemble the full-order system and report its layout.
    Build(CommonArgs),
    /// Reduce the system with every method in the run file.
    Reduce(CommonArgs),
    /// Simulate the full-order system for every experiment.
    Simulate(CommonArgs),
    /// Compare every reduced model against the full one.
    Compare(CommonArgs),
    /// Run MPC with the full and the reduced predictor.
    Mpc(CommonArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Run file (JSON).
    #[arg(long)]
    pub run: PathBuf,
    /// Output directory; overrides the run file.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Seed recorded in the manifest; overrides the run file.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads for parallel kernels.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Largest n_x handled with dense n_x × n_x algebra.
    #[arg(long = "dense-threshold")]
    pub dense_threshold: Option<usize>,
    /// Write wall-clock timings into CSV outputs (makes them run-dependent).
    #[arg(long)]
    pub timings: bool,
}

// ---------------------------------------------------------------------------
// run file

/// Initial state: `fill` everywhere except the named nodes and links.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialState {
    #[serde(default)]
    pub fill: f64,
    #[serde(default)]
    pub values: BTreeMap<String, f64>,
}

impl InitialState {
    fn is_zero(&self) -> bool {
        self.fill == 0.0 && self.values.values().all(|&v| v == 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AutoKeyword {
    Auto,
}

/// Snapshot length: a number of samples or `"auto"` for the computed lower bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SnapshotLength {
    Steps(usize),
    Keyword(AutoKeyword),
}

impl Default for SnapshotLength {
    fn default() -> Self {
        SnapshotLength::Keyword(AutoKeyword::Auto)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StabilizationMode {
    Priori,
    Posterior,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodSpec {
    pub method: Method,
    #[serde(default)]
    pub order: OrderSelection,
    #[serde(default)]
    pub m: SnapshotLength,
    /// SBPOD only; defaults to priori.
    #[serde(default)]
    pub mode: Option<StabilizationMode>,
    /// SBPOD priori only.
    #[serde(default)]
    pub safety: Option<f64>,
    /// Initial state folded into the reduction (SBPOD) by `reduce`.
    #[serde(default)]
    pub x0: Option<InitialState>,
}

impl MethodSpec {
    fn label(&self) -> String {
        self.method.to_string().to_lowercase()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Experiment {
    #[serde(default)]
    pub name: Option<String>,
    /// Constant booster inputs in mg per sample.
    pub amplitudes: Vec<f64>,
    #[serde(default)]
    pub steps: Option<usize>,
    #[serde(default)]
    pub horizon_s: Option<f64>,
    #[serde(default)]
    pub x0: Option<InitialState>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PredictorChoice {
    Full,
    Reduced,
    #[default]
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MpcSection {
    pub controller: MpcConfig,
    pub steps: usize,
    #[serde(default)]
    pub predictor: PredictorChoice,
    /// Reduction for the reduced predictor; SBPOD priori by default.
    #[serde(default)]
    pub reduction: Option<MethodSpec>,
    #[serde(default)]
    pub x0: Option<InitialState>,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunFile {
    /// Network file, relative to the run file.
    pub network: PathBuf,
    pub io: IoPlacement,
    pub segments_per_pipe: usize,
    #[serde(default)]
    pub methods: Vec<MethodSpec>,
    #[serde(default)]
    pub experiments: Vec<Experiment>,
    #[serde(default)]
    pub mpc: Option<MpcSection>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub dense_threshold: Option<usize>,
    #[serde(default)]
    pub sdp_max_order: Option<usize>,
}

fn schema_error(e: serde_json::Error) -> Error {
    match e.classify() {
        serde_json::error::Category::Data => Error::Config(format!(
            "run file schema error at line {}, column {}: {e}",
            e.line(),
            e.column()
        )),
        _ => Error::Syntax {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        },
    }
}

impl RunFile {
    pub fn parse(text: &str) -> Result<Self> {
        let run: RunFile = serde_json::from_str(text).map_err(schema_error)?;
        run.validate()?;
        Ok(run)
    }

    /// Checks that need no network.
    pub fn validate(&self) -> Result<()> {
        if self.segments_per_pipe < 2 {
            return Err(Error::Config("segments_per_pipe must be at least 2".into()));
        }
        if self.io.boosters.is_empty() || self.io.sensors.is_empty() {
            return Err(Error::Config("io needs at least one booster and one sensor".into()));
        }
        let methods = self.methods.iter().chain(self.mpc.as_ref().and_then(|m| m.reduction.as_ref()));
        for (i, m) in methods.enumerate() {
            let at = format!("method {} ({})", i + 1, m.label());
            if m.method != Method::Sbpod && (m.mode.is_some() || m.safety.is_some()) {
                return Err(Error::Config(format!("{at}: mode and safety apply to sbpod only")));
            }
            if m.method == Method::Bt && m.m != SnapshotLength::default() {
                return Err(Error::Config(format!("{at}: bt takes no snapshot length")));
            }
            if let SnapshotLength::Steps(0) = m.m {
                return Err(Error::Config(format!("{at}: m must be at least 1")));
            }
            if let Some(s) = m.safety {
                if !(s >= 1.0) {
                    return Err(Error::Config(format!("{at}: safety {s} must be at least 1")));
                }
                if m.mode == Some(StabilizationMode::Posterior) {
                    return Err(Error::Config(format!("{at}: safety applies to priori mode only")));
                }
            }
            if m.mode == Some(StabilizationMode::Posterior) && m.m == SnapshotLength::default() {
                return Err(Error::Config(format!("{at}: posterior mode needs an explicit m")));
            }
        }
        for (i, e) in self.experiments.iter().enumerate() {
            let at = format!("experiment {}", i + 1);
            if e.amplitudes.len() != self.io.boosters.len() {
                return Err(Error::Config(format!(
                    "{at}: {} amplitudes for {} boosters",
                    e.amplitudes.len(),
                    self.io.boosters.len()
                )));
            }
            match (e.steps, e.horizon_s) {
                (Some(0), _) => return Err(Error::Config(format!("{at}: steps must be at least 1"))),
                (Some(_), Some(_)) => return Err(Error::Config(format!("{at}: give steps or horizon_s, not both"))),
                (None, None) => return Err(Error::Config(format!("{at}: needs steps or horizon_s"))),
                (None, Some(h)) if !(h > 0.0) => return Err(Error::Config(format!("{at}: horizon_s must be positive"))),
                _ => {}
            }
        }
        if let Some(m) = &self.mpc {
            if m.steps == 0 {
                return Err(Error::Config("mpc.steps must be at least 1".into()));
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// context

/// Lower bounds on the snapshot length.
#[derive(Debug, Clone, Serialize)]
pub struct MbarInfo {
    pub travel: Option<TravelBound>,
    pub travel_error: Option<String>,
    pub settling: Option<SettlingBound>,
    pub settling_error: Option<String>,
    pub value: usize,
}

/// Everything a subcommand needs after the run file has been resolved.
pub struct Context {
    pub run: RunFile,
    pub out: PathBuf,
    pub net: Network,
    pub scenario: HydraulicScenario,
    pub system: LtvSystem,
    pub opts: MorOptions,
    pub timings: bool,
    pub assemble_s: f64,
    pub warnings: Vec<String>,
    pub manifest: BTreeMap<String, Value>,
    mbar: Option<MbarInfo>,
    travel_with_x0: Option<Option<TravelBound>>,
}

impl Context {
    pub fn load(args: &CommonArgs) -> Result<Self> {
        let text = fs::read_to_string(&args.run)
            .map_err(|e| Error::Config(format!("cannot read run file {}: {e}", args.run.display())))?;
        let mut run = RunFile::parse(&text)?;
        if let Some(seed) = args.seed {
            run.seed = seed;
        }
        if let Some(d) = args.dense_threshold {
            run.dense_threshold = Some(d);
        }
        if let Some(t) = args.threads {
            if t == 0 {
                return Err(Error::Config("--threads must be at least 1".into()));
            }
            // a second call in the same process keeps the first pool
            let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
        }
        let base = args.run.parent().map(Path::to_path_buf).unwrap_or_default();
        let out = match &args.out {
            Some(o) => o.clone(),
            None => base.join(&run.output_dir),
        };
        let net_path = base.join(&run.network);
        let (net, scenario) = load_network(&net_path).map_err(|e| match e {
            Error::Io(io) => Error::Config(format!("cannot read network {}: {io}", net_path.display())),
            e => e,
        })?;
        let courant = validate_courant(&net, &scenario, run.segments_per_pipe);
        if !courant.passes() {
            let worst: Vec<String> = courant
                .violations()
                .map(|c| format!("{} (nu = {:.3} in period {})", c.pipe, c.worst_courant, c.worst_period))
                .collect();
            return Err(Error::Config(format!("Courant condition violated: {}", worst.join(", "))));
        }
        let t0 = Instant::now();
        let system = assemble(&net, &scenario, &run.io, run.segments_per_pipe)?;
        let assemble_s = t0.elapsed().as_secs_f64();
        let mut opts = MorOptions::default();
        if let Some(d) = run.dense_threshold {
            opts.dense_threshold = d;
        }
        if let Some(s) = run.sdp_max_order {
            opts.sdp_max_order = s;
        }
        fs::create_dir_all(&out)?;
        let mut manifest = BTreeMap::new();
        manifest.insert("run".into(), serde_json::to_value(&run).expect("run file serializes"));
        manifest.insert("seed".into(), json!(run.seed));
        manifest.insert("version".into(), json!(env!("CARGO_PKG_VERSION")));
        manifest.insert(
            "system".into(),
            json!({
                "n_x": system.n_x(), "n_u": system.n_u(), "n_y": system.n_y(),
                "dt_s": system.dt(), "periods": system.pieces().len(),
            }),
        );
        Ok(Context {
            run,
            out,
            net,
            scenario,
            system,
            opts,
            timings: args.timings,
            assemble_s,
            warnings: Vec::new(),
            manifest,
            mbar: None,
            travel_with_x0: None,
        })
    }

    fn warn(&mut self, msg: String) {
        self.warnings.push(msg);
    }

    pub fn lti(&self) -> Option<&LtiSystem> {
        (self.system.pieces().len() == 1).then(|| self.system.first())
    }

    /// Travel-time and settling-time bounds, computed once.
    pub fn mbar(&mut self) -> &MbarInfo {
        if self.mbar.is_none() {
            let (travel, travel_error) = match mbar_travel_time(&self.net, &self.scenario, &self.run.io) {
                Ok(t) => (Some(t), None),
                Err(e) => (None, Some(e.to_string())),
            };
            let mut settling: Option<SettlingBound> = None;
            let mut settling_error = None;
            for p in self.system.pieces() {
                match mbar_settling_time(&p.system) {
                    Ok(s) => {
                        if settling.as_ref().is_none_or(|b| s.steps > b.steps) {
                            settling = Some(s);
                        }
                    }
                    Err(e) => settling_error = Some(e.to_string()),
                }
            }
            let value = travel.as_ref().map_or(0, |t| t.steps).max(settling.as_ref().map_or(0, |s| s.steps));
            self.mbar = Some(MbarInfo {
                travel,
                travel_error,
                settling,
                settling_error,
                value,
            });
        }
        self.mbar.as_ref().expect("computed above")
    }

    /// Travel bound for a reduction; with a nonzero initial state every node
    /// acts as a source.
    fn travel_steps(&mut self, with_x0: bool) -> Option<usize> {
        if !with_x0 {
            return self.mbar().travel.as_ref().map(|t| t.steps);
        }
        if self.travel_with_x0.is_none() {
            let t = mbar_travel_time_with_initial_state(&self.net, &self.scenario, &self.run.io).ok();
            self.travel_with_x0 = Some(t);
        }
        self.travel_with_x0.as_ref().and_then(|t| t.as_ref().map(|t| t.steps))
    }

    /// Snapshot length bound for a reduction.
    fn m_bar(&mut self, with_x0: bool) -> usize {
        let settling = self.mbar().settling.as_ref().map_or(0, |s| s.steps);
        self.travel_steps(with_x0).unwrap_or(0).max(settling)
    }

    pub fn initial_state(&self, spec: Option<&InitialState>) -> Result<Option<DVector<f64>>> {
        match spec {
            None => Ok(None),
            Some(s) if s.is_zero() => Ok(None),
            Some(s) => {
                let layout = self
                    .system
                    .layout()
                    .ok_or_else(|| Error::Config("system has no state layout for x0".into()))?;
                Ok(Some(layout.state_from_components(s.fill, s.values.iter().map(|(k, v)| (k.as_str(), *v)))?))
            }
        }
    }

    fn write(&self, name: &str, contents: &str) -> Result<PathBuf> {
        let p = self.out.join(name);
        fs::write(&p, contents)?;
        Ok(p)
    }

    fn finish(&mut self, command: &str, mut outputs: Vec<PathBuf>) -> Result<Outcome> {
        self.manifest.insert("command".into(), json!(command));
        if let Some(m) = &self.mbar {
            self.manifest.insert("m_bar".into(), serde_json::to_value(m).expect("bounds serialize"));
        }
        if let Some(Some(t)) = &self.travel_with_x0 {
            self.manifest.insert("travel_with_initial_state".into(), serde_json::to_value(t).expect("bound serializes"));
        }
        self.manifest.insert("warnings".into(), json!(self.warnings));
        let files: Vec<String> = outputs
            .iter()
            .map(|p| p.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default())
            .collect();
        self.manifest.insert("outputs".into(), json!(files));
        let text = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes");
        outputs.push(self.write("manifest.json", &(text + "\n"))?);
        Ok(Outcome {
            outputs,
            warnings: self.warnings.clone(),
            summary: Vec::new(),
        })
    }
}

/// What a subcommand produced.
#[derive(Debug, Clone, Default)]
pub struct Outcome {
    pub outputs: Vec<PathBuf>,
    pub warnings: Vec<String>,
    /// Human-readable lines for stdout.
    pub summary: Vec<String>,
}

// ---------------------------------------------------------------------------
// reduction

pub enum AnyReduced {
    Lti(ReducedModel),
    Ltv(ReducedLtv),
}

impl AnyReduced {
    pub fn n_r(&self) -> usize {
        match self {
            AnyReduced::Lti(r) => r.n_r(),
            AnyReduced::Ltv(r) => r.n_r(),
        }
    }

    pub fn predictor(&self) -> Predictor<'_> {
        match self {
            AnyReduced::Lti(r) => Predictor::Reduced(r),
            AnyReduced::Ltv(r) => Predictor::ReducedLtv(r),
        }
    }
}

pub struct Reduction {
    pub model: AnyReduced,
    pub spectrum: Option<SpectrumReport>,
    pub m_used: Option<usize>,
    pub reduce_s: f64,
    pub details: Value,
}

fn resolve_m(ctx: &mut Context, spec: &MethodSpec, with_x0: bool) -> usize {
    match spec.m {
        SnapshotLength::Steps(m) => m,
        SnapshotLength::Keyword(AutoKeyword::Auto) => ctx.m_bar(with_x0).max(1),
    }
}

/// Warns when an explicit snapshot length sits below the stability bound.
fn check_m(ctx: &mut Context, spec: &MethodSpec, m: usize) {
    let checked = matches!(spec.method, Method::Bpod)
        || (spec.method == Method::Sbpod && spec.mode == Some(StabilizationMode::Posterior));
    if !checked {
        return;
    }
    let info = ctx.mbar().clone();
    if m < info.value {
        let travel = info
            .travel
            .as_ref()
            .map(|t| t.steps.to_string())
            .unwrap_or_else(|| format!("unavailable: {}", info.travel_error.clone().unwrap_or_default()));
        let settling = info
            .settling
            .as_ref()
            .map(|s| s.steps.to_string())
            .unwrap_or_else(|| format!("unavailable: {}", info.settling_error.clone().unwrap_or_default()));
        ctx.warn(format!(
            "{}: snapshot length m = {m} is below m_bar = {} (travel-time bound {travel}, settling-time bound {settling}); \
             the reduced model may be unstable",
            spec.label(),
            info.value
        ));
    }
}

pub fn reduce_with(ctx: &mut Context, spec: &MethodSpec, x0: Option<&DVector<f64>>) -> Result<Reduction> {
    let opts = ctx.opts;
    let with_x0 = x0.is_some_and(|x| x.iter().any(|&v| v != 0.0));
    let t0 = Instant::now();
    if spec.method == Method::Sbpod {
        let mode = match spec.mode.unwrap_or(StabilizationMode::Priori) {
            StabilizationMode::Priori => SbpodMode::Priori {
                travel_steps: ctx.travel_steps(with_x0),
                safety: spec.safety.unwrap_or(DEFAULT_SAFETY),
            },
            StabilizationMode::Posterior => {
                let m = resolve_m(ctx, spec, with_x0);
                check_m(ctx, spec, m);
                SbpodMode::Posterior { m }
            }
        };
        return match ctx.lti() {
            Some(sys) => {
                let (rm, spectrum, report) = reduce_sbpod(sys, spec.order, mode, x0, &opts)?;
                Ok(Reduction {
                    m_used: Some(report.m_used()),
                    details: serde_json::to_value(&report).expect("report serializes"),
                    model: AnyReduced::Lti(rm),
                    spectrum: Some(spectrum),
                    reduce_s: t0.elapsed().as_secs_f64(),
                })
            }
            None => {
                let (rl, reports) = reduce_sbpod_ltv(&ctx.system, spec.order, mode, x0, &opts)?;
                Ok(Reduction {
                    m_used: reports.iter().map(|r| r.m_used()).max(),
                    details: serde_json::to_value(&reports).expect("report serializes"),
                    model: AnyReduced::Ltv(rl),
                    spectrum: None,
                    reduce_s: t0.elapsed().as_secs_f64(),
                })
            }
        };
    }
    if ctx.lti().is_none() {
        return Err(Error::Config(format!(
            "{} supports single-period scenarios only; use sbpod for {} periods",
            spec.label(),
            ctx.system.pieces().len()
        )));
    }
    let (rm, spectrum, m_used) = match spec.method {
        Method::Bt => {
            let (rm, sp) = reduce_with_initial_state(ctx.system.first(), x0, |s| reduce_bt(s, spec.order, &opts))?;
            (rm, sp, None)
        }
        Method::Pod => {
            let m = resolve_m(ctx, spec, with_x0);
            let (rm, sp) = reduce_with_initial_state(ctx.system.first(), x0, |s| reduce_pod(s, m, spec.order, &opts))?;
            (rm, sp, Some(m))
        }
        Method::Bpod => {
            let m = resolve_m(ctx, spec, with_x0);
            check_m(ctx, spec, m);
            let (rm, sp) = reduce_with_initial_state(ctx.system.first(), x0, |s| reduce_bpod(s, m, spec.order, &opts))?;
            (rm, sp, Some(m))
        }
        Method::Sbpod => unreachable!("handled above"),
    };
    if !(rm.rho < 1.0) {
        ctx.warn(format!("{}: reduced model is unstable, rho(A_r) = {:.9}", spec.label(), rm.rho));
    }
    Ok(Reduction {
        details: json!({ "rho": rm.rho }),
        model: AnyReduced::Lti(rm),
        spectrum: Some(spectrum),
        m_used,
        reduce_s: t0.elapsed().as_secs_f64(),
    })
}

// ---------------------------------------------------------------------------
// subcommands

pub fn cmd_build(ctx: &mut Context) -> Result<Outcome> {
    let mut outputs = Vec::new();
    let pieces = ctx.system.pieces();
    for (i, p) in pieces.iter().enumerate() {
        let name = if pieces.len() == 1 {
            "system.txt".to_string()
        } else {
            format!("system_p{}.txt", i + 1)
        };
        let path = ctx.out.join(&name);
        write_triplets(&p.system, BufWriter::new(fs::File::create(&path)?))?;
        outputs.push(path);
    }
    if let Some(layout) = ctx.system.layout() {
        let mut s = String::from("index,label\n");
        for i in 0..layout.n_x() {
            s.push_str(&format!("{i},{}\n", layout.label(i)));
        }
        outputs.push(ctx.write("layout.csv", &s)?);
    }
    let sys = ctx.system.first();
    let counts = ctx.net.counts();
    let report = json!({
        "network": ctx.net.name,
        "counts": counts,
        "n_x": sys.n_x(), "n_u": sys.n_u(), "n_y": sys.n_y(),
        "nnz_a": sys.a.nnz(),
        "sparsity": sys.a.sparsity(),
        "periods": pieces.len(),
        "dt_s": sys.dt,
        "max_courant": validate_courant(&ctx.net, &ctx.scenario, ctx.run.segments_per_pipe).max_courant(),
    });
    ctx.manifest.insert("build".into(), report.clone());
    outputs.push(ctx.write("build.json", &(serde_json::to_string_pretty(&report).expect("serializes") + "\n"))?);
    let line = format!(
        "{}: n_x={} n_u={} n_y={} nnz(A)={} sparsity={:.6} periods={}",
        ctx.net.name,
        sys.n_x(),
        sys.n_u(),
        sys.n_y(),
        sys.a.nnz(),
        sys.a.sparsity(),
        pieces.len()
    );
    let mut out = ctx.finish("build", outputs)?;
    out.summary.push(line);
    Ok(out)
}

pub fn cmd_reduce(ctx: &mut Context) -> Result<Outcome> {
    if ctx.run.methods.is_empty() {
        return Err(Error::Config("run file lists no methods".into()));
    }
    let mut outputs = Vec::new();
    let mut summary = Vec::new();
    let mut records = Vec::new();
    for (i, spec) in ctx.run.methods.clone().iter().enumerate() {
        let x0 = ctx.initial_state(spec.x0.as_ref())?;
        let red = reduce_with(ctx, spec, x0.as_ref())?;
        let stem = format!("{}_{}", i + 1, spec.label());
        match &red.model {
            AnyReduced::Lti(rm) => {
                let p = ctx.out.join(format!("reduced_{stem}.txt"));
                write_reduced(rm, BufWriter::new(fs::File::create(&p)?))?;
                outputs.push(p);
            }
            AnyReduced::Ltv(rl) => {
                for (j, rm) in rl.pieces.iter().enumerate() {
                    let p = ctx.out.join(format!("reduced_{stem}_p{}.txt", j + 1));
                    write_reduced(rm, BufWriter::new(fs::File::create(&p)?))?;
                    outputs.push(p);
                }
            }
        }
        if let Some(sp) = &red.spectrum {
            outputs.push(ctx.write(&format!("spectrum_{stem}.csv"), &sp.to_csv())?);
        }
        let rho = match &red.model {
            AnyReduced::Lti(r) => r.rho,
            AnyReduced::Ltv(r) => r.pieces.iter().map(|p| p.rho).fold(0.0, f64::max),
        };
        summary.push(format!(
            "{}: n_r={} m={} rho(A_r)={:.9}",
            spec.label(),
            red.model.n_r(),
            red.m_used.map(|m| m.to_string()).unwrap_or_else(|| "-".into()),
            rho
        ));
        let mut rec = json!({
            "method": spec.label(), "n_r": red.model.n_r(), "m": red.m_used, "rho": rho, "details": red.details,
        });
        if ctx.timings {
            rec["reduce_s"] = json!(red.reduce_s);
        }
        records.push(rec);
    }
    ctx.manifest.insert("reductions".into(), json!(records));
    let mut out = ctx.finish("reduce", outputs)?;
    out.summary = summary;
    Ok(out)
}

fn experiment_steps(e: &Experiment, dt: f64) -> usize {
    e.steps.unwrap_or_else(|| (e.horizon_s.unwrap_or(0.0) / dt).round().max(1.0) as usize)
}

fn experiment_name(e: &Experiment, i: usize) -> String {
    e.name.clone().unwrap_or_else(|| format!("exp{}", i + 1))
}

pub fn cmd_simulate(ctx: &mut Context) -> Result<Outcome> {
    if ctx.run.experiments.is_empty() {
        return Err(Error::Config("run file lists no experiments".into()));
    }
    let mut outputs = Vec::new();
    let mut summary = Vec::new();
    for (i, e) in ctx.run.experiments.clone().iter().enumerate() {
        let steps = experiment_steps(e, ctx.system.dt());
        let x0 = ctx.initial_state(e.x0.as_ref())?;
        let res = simulate(&ctx.system, &step_input(&e.amplitudes, steps), x0.as_ref(), steps, false)?;
        let name = experiment_name(e, i);
        outputs.push(ctx.write(&format!("simulate_{name}.csv"), &res.to_csv())?);
        summary.push(format!("{name}: {steps} steps, final y = {:?}", res.y.column(steps - 1).as_slice()));
    }
    let mut out = ctx.finish("simulate", outputs)?;
    out.summary = summary;
    Ok(out)
}

pub fn cmd_compare(ctx: &mut Context) -> Result<Outcome> {
    if ctx.run.methods.is_empty() || ctx.run.experiments.is_empty() {
        return Err(Error::Config("compare needs at least one method and one experiment".into()));
    }
    let mut outputs = Vec::new();
    let mut csv = String::from(REPORT_HEADER);
    csv.push('\n');
    let rho_full = ctx
        .system
        .pieces()
        .iter()
        .map(|p| spectral_radius_sparse(&p.system.a))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    let mut summary = Vec::new();
    let mut shared: BTreeMap<usize, Reduction> = BTreeMap::new();
    for (j, e) in ctx.run.experiments.clone().iter().enumerate() {
        let steps = experiment_steps(e, ctx.system.dt());
        let x0 = ctx.initial_state(e.x0.as_ref())?;
        let ename = experiment_name(e, j);
        let mut full_row_written = false;
        for (i, spec) in ctx.run.methods.clone().iter().enumerate() {
            // a nonzero x0 is folded into the model, so those reductions are per experiment
            let own;
            let red: &Reduction = if x0.is_some() {
                own = reduce_with(ctx, spec, x0.as_ref())?;
                &own
            } else {
                if !shared.contains_key(&i) {
                    let r = reduce_with(ctx, spec, None)?;
                    shared.insert(i, r);
                }
                &shared[&i]
            };
            let mut rep: ComparisonReport = match &red.model {
                AnyReduced::Lti(rm) => step_experiment(&ctx.system, rm, &e.amplitudes, steps, x0.as_ref())?,
                AnyReduced::Ltv(rl) => step_experiment(&ctx.system, rl, &e.amplitudes, steps, x0.as_ref())?,
            };
            rep.network = ctx.net.name.clone();
            rep.method = spec.label().to_uppercase();
            rep.m = red.m_used;
            rep.timings.assemble_s = ctx.assemble_s;
            rep.timings.reduce_s = red.reduce_s;
            if !full_row_written {
                csv.push_str(&rep.full_row(rho_full, ctx.timings));
                csv.push('\n');
                full_row_written = true;
            }
            csv.push_str(&rep.csv_row(ctx.timings));
            csv.push('\n');
            outputs.push(ctx.write(&format!("series_{ename}_{}_{}.csv", i + 1, spec.label()), &rep.series_csv())?);
            summary.push(format!(
                "{ename} {}: n_r={} rmse={:e} max_err={:e} rho(A_r)={:.9}",
                rep.method, rep.n_r, rep.rmse, rep.max_err, rep.rho_ar
            ));
        }
    }
    outputs.insert(0, ctx.write("comparison.csv", &csv)?);
    let mut out = ctx.finish("compare", outputs)?;
    out.summary = summary;
    Ok(out)
}

pub fn cmd_mpc(ctx: &mut Context) -> Result<Outcome> {
    let section = ctx
        .run
        .mpc
        .clone()
        .ok_or_else(|| Error::Config("the mpc command needs an \"mpc\" section in the run file".into()))?;
    let x0 = ctx.initial_state(section.x0.as_ref())?;
    let cfg = &section.controller;
    let mut outputs = Vec::new();
    let mut summary = Vec::new();
    let mut record = serde_json::Map::new();

    let full: Option<MpcResult> = if section.predictor != PredictorChoice::Reduced {
        let pred = match ctx.lti() {
            Some(s) => Predictor::Full(s),
            None => Predictor::FullLtv(&ctx.system),
        };
        Some(run_mpc(&ctx.system, pred, cfg, section.steps, x0.as_ref())?)
    } else {
        None
    };
    let reduced: Option<(MpcResult, usize)> = if section.predictor != PredictorChoice::Full {
        let spec = section.reduction.clone().unwrap_or(MethodSpec {
            method: Method::Sbpod,
            order: OrderSelection::default(),
            m: SnapshotLength::default(),
            mode: None,
            safety: None,
            x0: None,
        });
        let red = reduce_with(ctx, &spec, x0.as_ref())?;
        let res = run_mpc(&ctx.system, red.model.predictor(), cfg, section.steps, x0.as_ref())?;
        record.insert("reduction".into(), json!({ "method": spec.label(), "n_r": red.model.n_r(), "m": red.m_used }));
        Some((res, red.model.n_r()))
    } else {
        None
    };
    for (name, res) in [("full", full.as_ref()), ("reduced", reduced.as_ref().map(|r| &r.0))] {
        let Some(res) = res else { continue };
        outputs.push(ctx.write(&format!("mpc_{name}.csv"), &res.to_csv(ctx.timings))?);
        let mut r = json!({
            "cost": res.cost,
            "inputs_within_bounds": res.inputs_within(cfg),
            "n_variables": res.n_variables,
            "n_constraints": res.n_constraints,
            "qp_iterations": res.qp_iterations.iter().sum::<usize>(),
        });
        if ctx.timings {
            r["qp_time_s"] = json!(res.total_qp_time());
        }
        summary.push(format!(
            "{name} predictor: cost={:e} variables={} constraints={}",
            res.cost, res.n_variables, res.n_constraints
        ));
        record.insert(name.into(), r);
    }
    if let (Some(f), Some((r, _))) = (&full, &reduced) {
        let cmp = json!({
            "cost_ratio": r.cost / f.cost,
            "rmse_u": rmse(&f.u, &r.u)?,
            "rmse_y": rmse(&f.y, &r.y)?,
        });
        summary.push(format!(
            "cost ratio {:.6}, input RMSE {:e}, output RMSE {:e}",
            r.cost / f.cost,
            cmp["rmse_u"].as_f64().unwrap_or(f64::NAN),
            cmp["rmse_y"].as_f64().unwrap_or(f64::NAN)
        ));
        record.insert("comparison".into(), cmp);
    }
    let rec = Value::Object(record);
    outputs.push(ctx.write("mpc_summary.json", &(serde_json::to_string_pretty(&rec).expect("serializes") + "\n"))?);
    ctx.manifest.insert("mpc".into(), rec);
    let mut out = ctx.finish("mpc", outputs)?;
    out.summary = summary;
    Ok(out)
}

/// Runs one parsed command line.
pub fn run(cli: &Cli) -> Result<Outcome> {
    let (name, args) = match &cli.command {
        Command::Build(a) => ("build", a),
        Command::Reduce(a) => ("reduce", a),
        Command::Simulate(a) => ("simulate", a),
        Command::Compare(a) => ("compare", a),
        Command::Mpc(a) => ("mpc", a),
    };
    let mut ctx = Context::load(args)?;
    match name {
        "build" => cmd_build(&mut ctx),
        "reduce" => cmd_reduce(&mut ctx),
        "simulate" => cmd_simulate(&mut ctx),
        "compare" => cmd_compare(&mut ctx),
        _ => cmd_mpc(&mut ctx),
    }
}

/// Process entry point; returns the exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(out) => {
            for line in &out.summary {
                println!("{line}");
            }
            for w in &out.warnings {
                eprintln!("warning: {w}");
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
