//! Operator and researcher command line.
//!
//! Project commands work directly on the store; do not run them against a
//! store a server is currently serving.

use std::fs;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use crowdscreen_core::aggregation::{self, AggregationMethod, DawidSkeneParams, VoteMatrix};
use crowdscreen_core::config::ProjectConfig;
use crowdscreen_core::crowdsim::{BudgetCap, CrowdModel, SimulatedCrowd};
use crowdscreen_core::domain::ProjectInputs;
use crowdscreen_core::estimator::{self, SimulationTemplate};
use crowdscreen_core::{seed, Phase};
use serde::Serialize;
use serde_json::json;

use crate::api::{self, AppState, CurveRequest};
use crate::engine::ProjectEngine;
use crate::error::ServiceError;
use crate::gateway::HttpGateway;
use crate::store::ProjectStore;

#[derive(Debug, Parser)]
#[command(name = "crowdscreen", version, about = "Adaptive crowd screening of candidate papers")]
pub struct Cli {
    /// Project store directory.
    #[arg(long, global = true, env = "CROWDSCREEN_STORE", default_value = "crowdscreen-data")]
    pub store: PathBuf,
    /// Project id; may be omitted when the store holds exactly one project.
    #[arg(long, global = true, env = "CROWDSCREEN_PROJECT")]
    pub project: Option<String>,
    /// Machine-readable JSON on stdout.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Create a project from input files.
    Init {
        #[arg(long)]
        papers: PathBuf,
        #[arg(long)]
        criteria: PathBuf,
        #[arg(long)]
        tests: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Historical cost estimate.
    Estimate {
        #[arg(long, default_value_t = 10)]
        trials: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Start the initial run.
    InitialRun {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Issue one adaptive step of vote requests.
    Step {
        #[arg(long)]
        votes: u64,
    },
    /// Finish the project now.
    Stop,
    Status,
    /// Simulated cost/quality curves.
    Curves {
        #[arg(long)]
        algorithms: Option<String>,
        #[arg(long, default_value_t = 20)]
        trials: u32,
        /// Comma-separated vote budgets.
        #[arg(long)]
        checkpoints: Option<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output file; `.csv` selects CSV, anything else JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the screening report.
    Export {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a project fully offline against a simulated crowd and print its
    /// export. Inputs come from `--project` or from the input file flags.
    Simulate {
        /// CrowdModel JSON file.
        #[arg(long)]
        crowd: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, requires_all = ["criteria", "tests"])]
        papers: Option<PathBuf>,
        #[arg(long)]
        criteria: Option<PathBuf>,
        #[arg(long)]
        tests: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Aggregate a vote matrix.
    Aggregate {
        /// `majority` or `dawid_skene`.
        #[arg(long)]
        method: String,
        #[arg(long)]
        matrix: PathBuf,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long, env = "CROWDSCREEN_BIND", default_value = "127.0.0.1")]
        bind: String,
        #[arg(long, env = "PORT", default_value_t = 8080)]
        port: u16,
    },
    /// Drive a simulated crowd against a running server over HTTP.
    Crowd {
        #[arg(long, default_value = "http://127.0.0.1:8080")]
        url: String,
        /// CrowdModel JSON file.
        #[arg(long)]
        crowd: PathBuf,
        /// Seed for sampling the simulated ground truth.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also request adaptive steps of this many votes until the project finishes.
        #[arg(long)]
        step_votes: Option<u64>,
    },
}

fn read_file(path: &Path) -> Result<String, ServiceError> {
    fs::read_to_string(path).map_err(|e| ServiceError::Input {
        path: path.display().to_string(),
        reason: e.to_string(),
    })
}

fn write_file(path: &Path, contents: &str) -> Result<(), ServiceError> {
    fs::write(path, contents).map_err(|e| ServiceError::Input {
        path: path.display().to_string(),
        reason: e.to_string(),
    })
}

fn load_inputs(
    papers: &Path,
    criteria: &Path,
    tests: &Path,
    config: Option<&Path>,
) -> Result<(ProjectInputs, ProjectConfig), ServiceError> {
    let inputs = ProjectInputs::parse(&read_file(papers)?, &read_file(criteria)?, &read_file(tests)?)?;
    let config = match config {
        Some(path) => ProjectConfig::from_json(&read_file(path)?)?,
        None => ProjectConfig::default(),
    };
    Ok((inputs, config))
}

fn load_crowd(path: &Path) -> Result<CrowdModel, ServiceError> {
    let model: CrowdModel = serde_json::from_str(&read_file(path)?).map_err(|e| ServiceError::Input {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    model.validate()?;
    Ok(model)
}

impl Cli {
    fn project_id(&self, store: &ProjectStore) -> Result<String, ServiceError> {
        if let Some(id) = &self.project {
            return Ok(id.clone());
        }
        let ids = store.list()?;
        match ids.as_slice() {
            [only] => Ok(only.clone()),
            [] => Err(ServiceError::BadRequest("the store holds no projects".into())),
            _ => Err(ServiceError::BadRequest(format!(
                "--project is required; the store holds {}",
                ids.join(", ")
            ))),
        }
    }

    fn engine(&self) -> Result<ProjectEngine, ServiceError> {
        let store = ProjectStore::open(&self.store)?;
        let id = self.project_id(&store)?;
        let (engine, report) = ProjectEngine::open(store, &id)?;
        if let Some(warning) = report.warning {
            eprintln!("warning: {warning}");
        }
        Ok(engine)
    }
}

/// What a command prints: a JSON value under `--json`, text otherwise.
struct Output {
    json: serde_json::Value,
    text: String,
}

impl Output {
    fn new(json: impl Serialize, text: impl Into<String>) -> Self {
        Self {
            json: serde_json::to_value(json).expect("output serializes"),
            text: text.into(),
        }
    }
}

/// Runs the command and prints its result. Returns the process exit code.
pub fn main_with(cli: Cli) -> i32 {
    let json = cli.json;
    match run(cli) {
        Ok(out) => {
            let mut stdout = std::io::stdout().lock();
            let printed = if json {
                serde_json::to_string_pretty(&out.json).expect("serializes")
            } else {
                out.text
            };
            if !printed.is_empty() {
                let _ = writeln!(stdout, "{printed}");
            }
            0
        }
        Err(e) => {
            if json {
                println!("{}", json!({ "error": e.kind(), "message": e.to_string() }));
            }
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn run(cli: Cli) -> Result<Output, ServiceError> {
    match &cli.command {
        Command::Init {
            papers,
            criteria,
            tests,
            config,
        } => {
            let (inputs, config) = load_inputs(papers, criteria, tests, config.as_deref())?;
            let store = ProjectStore::open(&cli.store)?;
            let id = match &cli.project {
                Some(id) => id.clone(),
                None => store.next_id()?,
            };
            ProjectEngine::create(store, &id, inputs, config)?;
            Ok(Output::new(json!({ "project_id": id }), id))
        }
        Command::Estimate { trials, seed } => {
            let engine = cli.engine()?;
            let e = api::compute_estimate(engine.project(), *trials, *seed)?;
            let text = format!(
                "initial run {} ({} criteria), projected adaptive {}, total {}",
                e.initial_run_cents.dollars_string(),
                e.criteria,
                e.projected_adaptive_cents.dollars_string(),
                e.total
            );
            Ok(Output::new(e, text))
        }
        Command::InitialRun { seed } => {
            let mut engine = cli.engine()?;
            let requests = engine.start_initial_run(*seed)?;
            let n = requests.len();
            Ok(Output::new(
                json!({ "phase": engine.project().phase(), "requests": n }),
                format!("initial run started: {n} vote requests"),
            ))
        }
        Command::Step { votes } => {
            let mut engine = cli.engine()?;
            let requests = engine.step(*votes)?;
            let n = requests.len();
            Ok(Output::new(
                json!({ "phase": engine.project().phase(), "requests": n }),
                format!("{n} vote requests issued; phase {}", engine.project().phase()),
            ))
        }
        Command::Stop => {
            let mut engine = cli.engine()?;
            engine.stop()?;
            Ok(Output::new(json!({ "phase": engine.project().phase() }), "finished"))
        }
        Command::Status => {
            let engine = cli.engine()?;
            let s = engine.project().status();
            let text = format!(
                "{}: {}, spent {} ({} votes), papers: {} undecided, {} screened out, {} included, {} given up",
                s.project_id,
                s.phase,
                s.spent,
                s.billable_votes,
                s.papers.undecided,
                s.papers.screened_out,
                s.papers.included,
                s.papers.given_up
            );
            Ok(Output::new(s, text))
        }
        Command::Curves {
            algorithms,
            trials,
            checkpoints,
            seed,
            out,
        } => {
            let engine = cli.engine()?;
            let project = engine.project();
            let algorithms = match algorithms {
                Some(list) => estimator::parse_algorithms(list)?,
                None => vec![
                    estimator::Algorithm::ShortestRun,
                    estimator::Algorithm::fixed_j(project.config().strategy.baseline_votes),
                ],
            };
            let checkpoints = match checkpoints {
                Some(list) => Some(
                    list.split(',')
                        .map(|c| c.trim().parse::<u64>())
                        .collect::<Result<Vec<_>, _>>()
                        .map_err(|_| ServiceError::BadRequest("checkpoints must be integers".into()))?,
                ),
                None => None,
            };
            let report = api::compute_curves(
                project,
                &CurveRequest {
                    algorithms,
                    trials: *trials,
                    checkpoints,
                    seed: *seed,
                },
            )?;
            let text = estimator::curves_csv(&report.points);
            if let Some(path) = out {
                if path.extension().is_some_and(|e| e == "csv") {
                    write_file(path, &text)?;
                } else {
                    write_file(path, &serde_json::to_string_pretty(&report).expect("serializes"))?;
                }
                let msg = format!("{} curve points written to {}", report.points.len(), path.display());
                return Ok(Output::new(report, msg));
            }
            Ok(Output::new(report, text.trim_end()))
        }
        Command::Export { out } => {
            let engine = cli.engine()?;
            let doc = engine.project().export();
            let text = doc.to_json();
            match out {
                Some(path) => {
                    write_file(path, &text)?;
                    Ok(Output::new(&doc, format!("export written to {}", path.display())))
                }
                None => Ok(Output::new(&doc, text)),
            }
        }
        Command::Simulate {
            crowd,
            seed,
            papers,
            criteria,
            tests,
            config,
            out,
        } => {
            let model = load_crowd(crowd)?;
            let (inputs, config) = match (papers, criteria, tests) {
                (Some(p), Some(c), Some(t)) => load_inputs(p, c, t, config.as_deref())?,
                _ => {
                    let store = ProjectStore::open(&cli.store)?;
                    let id = cli.project_id(&store)?;
                    store.load_inputs(&id)?
                }
            };
            let template = SimulationTemplate::new(inputs, config);
            let truth = template.sample_truth(seed::derive_seed(*seed, "simulate-truth", 0));
            let project = estimator::run_shortest_run(&template.inputs, &template.config, truth, &model, None, *seed)?;
            let doc = project.export();
            let text = doc.to_json();
            match out {
                Some(path) => {
                    write_file(path, &text)?;
                    Ok(Output::new(&doc, format!("export written to {}", path.display())))
                }
                None => Ok(Output::new(&doc, text)),
            }
        }
        Command::Aggregate { method, matrix } => {
            let method: AggregationMethod = method.parse()?;
            let matrix = VoteMatrix::from_json(&read_file(matrix)?)?;
            let labels = aggregation::aggregate(method, &matrix, DawidSkeneParams::default())?;
            let rows: Vec<_> = matrix
                .items
                .iter()
                .zip(&labels)
                .map(|(item, label)| json!({ "paper_id": item.paper_id, "criterion_id": item.criterion_id, "label": label }))
                .collect();
            let text = matrix
                .items
                .iter()
                .zip(&labels)
                .map(|(item, label)| format!("{}\t{}\t{}", item.paper_id, item.criterion_id, serde_json::to_value(label).expect("serializes").as_str().unwrap_or_default()))
                .collect::<Vec<_>>()
                .join("\n");
            Ok(Output::new(json!({ "method": method.to_string(), "labels": rows }), text))
        }
        Command::Serve { bind, port } => {
            let addr: SocketAddr = format!("{bind}:{port}")
                .parse()
                .map_err(|_| ServiceError::BadRequest(format!("bad bind address {bind}:{port}")))?;
            let store = ProjectStore::open(&cli.store)?;
            let (state, warnings) = AppState::open(store)?;
            for w in warnings {
                eprintln!("warning: {w}");
            }
            let runtime = tokio::runtime::Runtime::new().map_err(|e| ServiceError::BadRequest(e.to_string()))?;
            eprintln!("listening on http://{addr}/api/v1");
            runtime
                .block_on(api::serve(state, addr))
                .map_err(|e| ServiceError::BadRequest(format!("server: {e}")))?;
            Ok(Output::new(json!({}), ""))
        }
        Command::Crowd {
            url,
            crowd,
            seed,
            step_votes,
        } => {
            let model = load_crowd(crowd)?;
            let store = ProjectStore::open(&cli.store)?;
            let id = cli.project_id(&store)?;
            let (inputs, config) = store.load_inputs(&id)?;
            let template = SimulationTemplate::new(inputs, config);
            let truth = template.sample_truth(*seed);
            let mut sim = SimulatedCrowd::new(&model, truth)?;
            let mut gateway = HttpGateway::new(url, &id);
            let mut client = Operator::new(url, &id);
            let mut votes = 0;
            loop {
                let done = sim
                    .work(&mut gateway, &mut BudgetCap::unlimited())
                    .map_err(|e| ServiceError::BadRequest(format!("crowd: {e}")))?;
                votes += done.votes;
                let Some(step) = step_votes else { break };
                if client.phase()? != Phase::Adaptive {
                    break;
                }
                if client.step(*step)? == 0 {
                    break;
                }
            }
            let phase = client.phase()?;
            Ok(Output::new(
                json!({ "votes": votes, "phase": phase }),
                format!("{votes} votes cast; phase {}", phase),
            ))
        }
    }
}

/// The author-side calls the `crowd` command needs.
struct Operator {
    agent: ureq::Agent,
    url: String,
}

impl Operator {
    fn new(base: &str, id: &str) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder().http_status_as_error(false).build().into();
        Self {
            agent,
            url: format!("{}/api/v1/projects/{id}", base.trim_end_matches('/')),
        }
    }

    fn fail(e: impl std::fmt::Display) -> ServiceError {
        ServiceError::BadRequest(format!("server: {e}"))
    }

    fn phase(&mut self) -> Result<Phase, ServiceError> {
        let mut resp = self.agent.get(format!("{}/status", self.url)).call().map_err(Self::fail)?;
        let body: serde_json::Value = resp.body_mut().read_json().map_err(Self::fail)?;
        serde_json::from_value(body["phase"].clone()).map_err(Self::fail)
    }

    fn step(&mut self, votes: u64) -> Result<u64, ServiceError> {
        let mut resp = self
            .agent
            .post(format!("{}/step", self.url))
            .send_json(json!({ "vote_budget": votes }))
            .map_err(Self::fail)?;
        let body: serde_json::Value = resp.body_mut().read_json().map_err(Self::fail)?;
        if resp.status() != 202 {
            return Err(Self::fail(body));
        }
        Ok(body["requests"].as_u64().unwrap_or(0))
    }
}
