use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use groundwork_core::bench::{self, synthetic, BenchError, EvalReport};
use groundwork_core::clients::{
    ClientError, FixtureFile, HttpConfig, HttpLlm, HttpVlm, HumanVlm, LanguageModel, OracleVlm,
    RetryPolicy, ScriptedLlm, ScriptedVlm, VisionModel,
};
use groundwork_core::dsl::{self, ProgramEnv, RobotProgram};
use groundwork_core::pipeline::{Mode, Pipeline, PipelineConfig, PipelineError};
use groundwork_core::world::{load_world, WorldSpec, WorldState};
use groundwork_core::Letter;

use crate::{
    BackendArgs, EvalArgs, ExecArgs, GenBenchArgs, GenSuiteArgs, LlmBackend, RunArgs, ValidateArgs,
    VlmBackend, EXIT_DOMAIN, EXIT_INTERNAL, EXIT_USAGE,
};

#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Domain(String),
    Internal(String),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => EXIT_USAGE,
            Failure::Domain(_) => EXIT_DOMAIN,
            Failure::Internal(_) => EXIT_INTERNAL,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) | Failure::Domain(m) | Failure::Internal(m) => f.write_str(m),
        }
    }
}

impl From<ClientError> for Failure {
    fn from(e: ClientError) -> Self {
        match e {
            ClientError::Config(_) | ClientError::FixtureFile { .. } => {
                Failure::Usage(e.to_string())
            }
            other => Failure::Internal(other.to_string()),
        }
    }
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Client(c) => c.into(),
            e @ PipelineError::Parse { .. } => Failure::Domain(e.to_string()),
            e => Failure::Internal(e.to_string()),
        }
    }
}

impl From<BenchError> for Failure {
    fn from(e: BenchError) -> Self {
        match e {
            BenchError::Client(c) => c.into(),
            BenchError::MissingLabels(_) => Failure::Usage(e.to_string()),
            e => Failure::Domain(e.to_string()),
        }
    }
}

pub type CmdResult = Result<u8, Failure>;

fn internal(context: &str) -> impl Fn(std::io::Error) -> Failure + '_ {
    move |e| Failure::Internal(format!("{context}: {e}"))
}

fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(internal(&parent.display().to_string()))?;
    }
    fs::write(path, contents).map_err(internal(&path.display().to_string()))
}

fn to_json<T: serde::Serialize + ?Sized>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("output serializes");
    s.push('\n');
    s
}

fn read_input(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path)
        .map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))
}

fn load_world_arg(path: &Path) -> Result<WorldSpec, Failure> {
    load_world(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn check_timestamp(ts: &Option<String>) -> Result<(), Failure> {
    if let Some(ts) = ts {
        chrono::DateTime::parse_from_rfc3339(ts)
            .map_err(|e| Failure::Usage(format!("--pin-timestamp `{ts}` is not RFC 3339: {e}")))?;
    }
    Ok(())
}

fn world_stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Scripted fixtures for a world live at `<dir>/<world stem>.json`.
fn load_fixtures(dir: Option<&Path>, world_path: &Path) -> Result<FixtureFile, Failure> {
    let dir = dir.ok_or_else(|| Failure::Usage("scripted backends need --fixtures DIR".into()))?;
    let path = dir.join(format!("{}.json", world_stem(world_path)));
    Ok(FixtureFile::load(&path)?)
}

struct Backends {
    llm: Box<dyn LanguageModel>,
    vlm: Box<dyn VisionModel>,
}

fn build_llm(
    kind: LlmBackend,
    fixtures: &dyn Fn() -> Result<FixtureFile, Failure>,
) -> Result<Box<dyn LanguageModel>, Failure> {
    Ok(match kind {
        LlmBackend::Scripted => Box::new(ScriptedLlm::new(fixtures()?)),
        LlmBackend::Http => Box::new(HttpLlm::new(
            HttpConfig::from_env("LLM", None)?,
            RetryPolicy::default(),
        )?),
    })
}

fn build_backends(args: &BackendArgs, world_path: &Path) -> Result<Backends, Failure> {
    let fixtures = || load_fixtures(args.fixtures.as_deref(), world_path);
    let llm = build_llm(args.llm, &fixtures)?;
    let vlm: Box<dyn VisionModel> = match args.vlm {
        VlmBackend::Scripted => Box::new(ScriptedVlm::new(fixtures()?.vqa)),
        VlmBackend::Http => Box::new(HttpVlm::new(
            HttpConfig::from_env("VLM", None)?,
            RetryPolicy::default(),
        )?),
        VlmBackend::Oracle => Box::new(OracleVlm),
        VlmBackend::Human => Box::new(HumanVlm::stdio()),
    };
    Ok(Backends { llm, vlm })
}

fn load_preferences(path: Option<&Path>) -> Result<BTreeMap<String, String>, Failure> {
    let Some(path) = path else {
        return Ok(BTreeMap::new());
    };
    serde_json::from_str(&read_input(path)?).map_err(|e| {
        Failure::Usage(format!(
            "{}: expected an object of strings: {e}",
            path.display()
        ))
    })
}

pub fn run(args: &RunArgs) -> CmdResult {
    check_timestamp(&args.pin_timestamp)?;
    let world = load_world_arg(&args.world)?;
    let preferences = load_preferences(args.preferences.as_deref())?;
    for name in preferences.keys() {
        if world.object(name).is_err() {
            return Err(Failure::Usage(format!(
                "preference for unknown object `{name}`"
            )));
        }
    }
    let backends = build_backends(&args.backends, &args.world)?;
    let config = PipelineConfig::new(args.mode, args.iterations).with_preferences(preferences);
    let mut pipeline = Pipeline::new(&world, backends.llm.as_ref(), backends.vlm.as_ref(), config)
        .with_pinned_timestamp(args.pin_timestamp.clone());

    let output = pipeline.run()?;
    let mut state = world.initial_state();
    let plan = if args.no_execute {
        None
    } else {
        Some(pipeline.plan_and_execute(&output.decisions, &mut state)?)
    };

    let out = &args.out;
    write_file(
        &out.join("transcript.jsonl"),
        &pipeline.transcript().to_jsonl(),
    )?;
    write_file(&out.join("context.json"), &to_json(&output.context))?;
    write_file(&out.join("decisions.json"), &to_json(&output.decisions))?;
    write_file(&out.join("world_state.json"), &to_json(&state))?;
    if let Some(plan) = &plan {
        write_file(&out.join("plan.json"), &to_json(plan))?;
    }
    if !output.accuracy_curve.is_empty() {
        let report = pipeline.report(&output);
        write_file(&out.join("report.json"), &to_json(&report))?;
        write_file(&out.join("report.txt"), &report.to_table())?;
        println!(
            "{}: final accuracy {:.3}",
            args.mode,
            report.final_accuracy()
        );
    }
    for d in &output.decisions {
        println!(
            "{}: ({}) {}",
            d.object, d.chosen_option.letter, d.action_text
        );
    }

    match plan {
        Some(plan) if !plan.all_executed() => {
            for r in plan.records.iter().filter(|r| !r.executed()) {
                eprintln!(
                    "skipped {}: {}",
                    r.object,
                    r.error.as_deref().unwrap_or_default()
                );
            }
            Ok(EXIT_DOMAIN)
        }
        _ => Ok(0),
    }
}

fn manifest_paths(dir: &Path) -> Result<Vec<PathBuf>, Failure> {
    let entries = fs::read_dir(dir)
        .map_err(|e| Failure::Usage(format!("cannot read {}: {e}", dir.display())))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Failure::Usage(format!(
            "no *.json manifests in {}",
            dir.display()
        )));
    }
    Ok(paths)
}

pub fn eval(args: &EvalArgs) -> CmdResult {
    check_timestamp(&args.pin_timestamp)?;
    let modes: Vec<Mode> = if args.modes.is_empty() {
        Mode::ALL.to_vec()
    } else {
        args.modes.clone()
    };
    let paths = manifest_paths(&args.manifests)?;
    let mut worlds = Vec::with_capacity(paths.len());
    for p in &paths {
        worlds.push((p.clone(), load_world_arg(p)?));
    }

    let mut merged = Vec::with_capacity(modes.len());
    for &mode in &modes {
        let mut reports = Vec::new();
        for (path, world) in &worlds {
            if world.benchmark.iter().all(|q| q.omitted) {
                continue;
            }
            let backends = build_backends(&args.backends, path)?;
            let config = PipelineConfig::new(mode, args.iterations);
            let mut pipeline =
                Pipeline::new(world, backends.llm.as_ref(), backends.vlm.as_ref(), config)
                    .with_pinned_timestamp(args.pin_timestamp.clone());
            let output = pipeline.run().map_err(|e| {
                annotate(Failure::from(e), &format!("{mode} on {}", path.display()))
            })?;
            reports.push(pipeline.report(&output));
        }
        if reports.is_empty() {
            return Err(Failure::Domain(
                "no manifest has a scoreable benchmark question".into(),
            ));
        }
        let report = EvalReport::merge(mode, &reports);
        let dir = args.out.join(mode.as_str());
        write_file(&dir.join("report.json"), &to_json(&report))?;
        write_file(&dir.join("report.txt"), &report.to_table())?;
        merged.push(report);
    }

    let summary = summary_table(&merged);
    write_file(&args.out.join("summary.txt"), &summary)?;
    write_file(&args.out.join("summary.json"), &to_json(&merged))?;
    print!("{summary}");
    Ok(0)
}

fn annotate(f: Failure, context: &str) -> Failure {
    match f {
        Failure::Usage(m) => Failure::Usage(format!("{context}: {m}")),
        Failure::Domain(m) => Failure::Domain(format!("{context}: {m}")),
        Failure::Internal(m) => Failure::Internal(format!("{context}: {m}")),
    }
}

fn summary_table(reports: &[EvalReport]) -> String {
    let header = format!("{} | {:>8}", EvalReport::table_header(), "Accuracy");
    let mut s = format!("{header}\n{}\n", "-".repeat(header.len()));
    for r in reports {
        s.push_str(&format!(
            "{} | {:>8.3}\n",
            r.table_row(),
            r.final_accuracy()
        ));
    }
    s
}

fn load_program(path: &Path) -> Result<RobotProgram, Failure> {
    let src = read_input(path)?;
    dsl::parse_program(&src).map_err(|e| Failure::Domain(format!("{}: {e}", path.display())))
}

pub fn validate_program(args: &ValidateArgs) -> CmdResult {
    let program = load_program(&args.program)?;
    let report = match &args.world {
        Some(w) => dsl::validate(&program, &ProgramEnv::from_world(&load_world_arg(w)?)),
        None => dsl::validate_structure(&program),
    };
    print!("{report}");
    Ok(if report.ok { 0 } else { EXIT_DOMAIN })
}

pub fn exec_program(args: &ExecArgs) -> CmdResult {
    let program = load_program(&args.program)?;
    let world = load_world_arg(&args.world)?;
    let env = ProgramEnv::from_world(&world);
    let report = dsl::validate(&program, &env);
    print!("{report}");
    if !report.ok {
        return Ok(EXIT_DOMAIN);
    }
    let mut state = world.initial_state();
    let trace =
        dsl::run_program(&program, &env, &mut state).map_err(|e| Failure::Domain(e.to_string()))?;
    print!("{}", trace.to_jsonl());
    print!("{}", locations(&state));
    if let Some(out) = &args.out {
        write_file(&out.join("trace.jsonl"), &trace.to_jsonl())?;
        write_file(&out.join("world_state.json"), &to_json(&state))?;
    }
    Ok(0)
}

fn locations(state: &WorldState) -> String {
    state
        .objects
        .iter()
        .map(|o| format!("{}: {}\n", o.name, o.location))
        .collect()
}

pub fn gen_suite(args: &GenSuiteArgs) -> CmdResult {
    if args.objects == 0 {
        return Err(Failure::Usage("--objects must be at least 1".into()));
    }
    for seed in args.seed..args.seed.saturating_add(args.count) {
        let suite = synthetic::generate(seed, args.objects);
        let name = format!("synthetic-{seed}.json");
        write_file(
            &args.out.join("manifests").join(&name),
            &format!("{}\n", suite.world.to_json()),
        )?;
        write_file(
            &args.out.join("fixtures").join(&name),
            &format!("{}\n", suite.fixtures.to_json()),
        )?;
        println!("wrote {name} ({} objects)", suite.world.objects.len());
    }
    Ok(0)
}

pub fn gen_bench(args: &GenBenchArgs) -> CmdResult {
    let world = load_world_arg(&args.world)?;
    let labels: BTreeMap<String, BTreeSet<Letter>> =
        serde_json::from_str(&read_input(&args.labels)?)
            .map_err(|e| Failure::Usage(format!("{}: {e}", args.labels.display())))?;
    let fixtures = || load_fixtures(args.fixtures.as_deref(), &args.world);
    let llm = build_llm(args.llm, &fixtures)?;
    let questions = bench::generate_benchmark(&world, llm.as_ref(), &labels)?;
    let mut updated = world.clone();
    updated.benchmark = questions;
    write_file(&args.out, &format!("{}\n", updated.to_json()))?;
    println!(
        "wrote {} questions to {}",
        updated.benchmark.len(),
        args.out.display()
    );
    Ok(0)
}
