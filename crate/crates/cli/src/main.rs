use std::collections::HashSet;
use std::fs;
use std::io::Write as _;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rla_core::engine::{AuditConfig, Interpretation, StatusReport};
use rla_core::math::{self, S4Params};
use rla_core::model::{parse_contests, wide_csd_to_long, CardStyleTable, ElectionInput, Manifest};
use rla_core::sampler::{consistent_sample, retrieval_list, with_replacement_draws, Seed, SeededAssignment};
use rla_core::studio::{self, CaseName, Figure, GridParams};
use serde::Serialize;

use rla_cli::server::{self, AppState};
use rla_cli::{ApiError, CreateSession, SessionStore};

#[derive(Parser)]
#[command(name = "rla", version, about = "Risk-limiting audits targeted with card-style data")]
struct Cli {
    /// Output format.
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,
    /// Directory holding session files.
    #[arg(long, global = true, env = "RLA_DATA_DIR", default_value = "rla-data")]
    data_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    Comparison,
    Polling,
}

#[derive(Subcommand)]
enum Command {
    /// Initial sample size for one contest.
    Plan(PlanArgs),
    /// Assign seeded numbers to every card in a manifest.
    Seed {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        seed: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Draw consistent samples and print the retrieval list.
    Sample(SampleArgs),
    /// Run a multi-round audit stored as a session file.
    #[command(subcommand)]
    Audit(AuditCommand),
    /// Workload table for one figure, as CSV.
    Figures {
        /// F3, F4, F5, F6 or UNEQUAL.
        #[arg(long)]
        id: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Inyo or Orange county workloads.
    CaseStudy {
        #[arg(long)]
        name: String,
    },
    /// Convert wide yes/no CSD to the long form.
    CsdConvert {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve the session API over HTTP.
    Serve {
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        /// Require this value in the x-rla-token header.
        #[arg(long, env = "RLA_TOKEN")]
        token: Option<String>,
    },
}

#[derive(Args)]
struct PlanArgs {
    #[arg(long, default_value_t = math::DEFAULT_RISK_LIMIT)]
    alpha: f64,
    /// Anticipated one-vote overstatement rate.
    #[arg(long, default_value_t = math::DEFAULT_OVERSTATEMENT_RATE)]
    rate: f64,
    #[arg(long, default_value_t = math::DEFAULT_GAMMA)]
    gamma: f64,
    /// Diluted margin.
    #[arg(long)]
    margin: f64,
    #[arg(long, value_enum, default_value_t = MethodArg::Comparison)]
    method: MethodArg,
    /// Polling only: Wald's ASN instead of the approximation.
    #[arg(long)]
    exact: bool,
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    csd: PathBuf,
    #[arg(long)]
    seed: String,
    /// CONTEST=SIZE; repeat for several contests.
    #[arg(long = "target", required = true, value_parser = parse_target)]
    targets: Vec<(String, u64)>,
    #[arg(long)]
    with_replacement: bool,
}

#[derive(Subcommand)]
enum AuditCommand {
    /// Create a session from election files.
    Init(InitArgs),
    /// Plan the next round.
    Round {
        #[arg(long)]
        session: String,
    },
    /// Record interpretations (one JSON object per line).
    Enter {
        #[arg(long)]
        session: String,
        #[arg(long)]
        round: usize,
        #[arg(long, conflicts_with = "json", required_unless_present = "json")]
        file: Option<PathBuf>,
        #[arg(long)]
        json: Option<String>,
    },
    /// Close a round and compute measured risks.
    Finalize {
        #[arg(long)]
        session: String,
        #[arg(long)]
        round: usize,
    },
    /// Per-contest status.
    Status {
        #[arg(long)]
        session: String,
    },
}

#[derive(Args)]
struct InitArgs {
    #[arg(long)]
    seed: String,
    /// Contest definitions (JSON).
    #[arg(long)]
    contests: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    /// Long-form card-style data.
    #[arg(long)]
    csd: PathBuf,
    /// Cast vote records, one JSON object per line.
    #[arg(long)]
    cvrs: Option<PathBuf>,
    /// Audit configuration (JSON); overrides --method.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = MethodArg::Comparison)]
    method: MethodArg,
    #[arg(long)]
    cards_per_ballot: Option<u32>,
    #[arg(long)]
    ballots: Option<u64>,
}

fn parse_target(s: &str) -> Result<(String, u64), String> {
    let (k, n) = s.split_once('=').ok_or("expected CONTEST=SIZE")?;
    let n = n.parse().map_err(|_| format!("bad size {n:?}"))?;
    Ok((k.to_string(), n))
}

fn read(path: &Path) -> Result<String, ApiError> {
    fs::read_to_string(path).map_err(|e| ApiError::new(500, "IO_ERROR", format!("{}: {e}", path.display())))
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), ApiError> {
    match out {
        Some(p) => fs::write(p, text).map_err(ApiError::io),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

struct Printer(Format);

impl Printer {
    fn show<T: Serialize>(&self, value: &T, text: impl FnOnce() -> String) {
        match self.0 {
            Format::Json => println!("{}", serde_json::to_string_pretty(value).expect("output serializes")),
            Format::Text => {
                let t = text();
                println!("{}", t.trim_end());
            }
        }
    }
}

fn status_text(s: &StatusReport) -> String {
    let mut out = format!(
        "rounds {} complete {} cards inspected {}\n",
        s.rounds, s.complete, s.cards_inspected
    );
    for c in &s.contests {
        out.push_str(&format!(
            "{} {:?} risk {:.4} draws {}\n",
            c.contest_id, c.status, c.measured_risk, c.draws
        ));
    }
    out
}

fn seed(s: &str) -> Result<Seed, ApiError> {
    Ok(Seed::new(s)?)
}

fn run(cli: Cli) -> Result<(), ApiError> {
    let p = Printer(cli.format);
    match cli.command {
        Command::Plan(a) => {
            let size = match a.method {
                MethodArg::Comparison => {
                    let params = S4Params {
                        alpha: a.alpha,
                        gamma: a.gamma,
                        overstatement_rate: a.rate,
                    };
                    math::s4_sample_size(&params, a.margin)?
                }
                MethodArg::Polling => {
                    if !(a.margin > 0.0 && a.margin < 1.0) {
                        return Err(ApiError::new(422, "INVALID_INPUT", "margin must be in (0, 1)"));
                    }
                    let asn = if a.exact {
                        math::bravo_asn_exact(a.alpha, a.margin)
                    } else {
                        math::bravo_asn(a.alpha, a.margin)
                    };
                    math::ceil_count(asn)
                }
            };
            p.show(&serde_json::json!({ "sample_size": size }), || size.to_string());
        }
        Command::Seed { manifest, seed: s, out } => {
            let manifest = Manifest::parse_csv(&read(&manifest)?)?;
            let a = SeededAssignment::for_manifest(&seed(&s)?, &manifest)?;
            emit(out.as_deref(), &a.to_csv())?;
        }
        Command::Sample(a) => {
            let manifest = Manifest::parse_csv(&read(&a.manifest)?)?;
            let ids: Vec<&str> = a.targets.iter().map(|(k, _)| k.as_str()).collect();
            let csd = CardStyleTable::parse_csv(&read(&a.csd)?, &manifest, ids.iter().copied())?;
            let s = seed(&a.seed)?;
            let samples = if a.with_replacement {
                a.targets
                    .iter()
                    .map(|(k, n)| {
                        let card_ids = with_replacement_draws(&s, &csd, k, *n);
                        rla_core::sampler::ContestSample {
                            contest_id: k.clone(),
                            size: *n,
                            threshold: 0.0,
                            card_ids,
                        }
                    })
                    .collect::<Vec<_>>()
            } else {
                let assignment = SeededAssignment::for_manifest(&s, &manifest)?;
                a.targets
                    .iter()
                    .map(|(k, n)| consistent_sample(&assignment, &csd, k, *n))
                    .collect::<Result<Vec<_>, _>>()?
            };
            let list = retrieval_list(&samples, &manifest, &HashSet::new());
            p.show(&list, || {
                let mut out = String::from("cart,tray,position,card_id\n");
                for c in &list {
                    out.push_str(&format!("{},{},{},{}\n", c.cart, c.tray, c.position, c.card_id));
                }
                out
            });
        }
        Command::Audit(cmd) => {
            let store = SessionStore::open(&cli.data_dir)?;
            audit(&store, cmd, &p)?;
        }
        Command::Figures { id, out } => {
            let figure: Figure = id.parse()?;
            let rows = studio::figure_grid(figure, &GridParams::default_for(figure))?;
            match cli.format {
                Format::Json => emit(out.as_deref(), &(serde_json::to_string_pretty(&rows).expect("rows serialize") + "\n"))?,
                Format::Text => emit(out.as_deref(), &studio::grid_to_csv(&rows))?,
            }
        }
        Command::CaseStudy { name } => {
            let name: CaseName = name.parse()?;
            let r = studio::case_study(name)?;
            p.show(&r, || {
                format!(
                    "{:?}\ncomparison: without CSD {} cards, with CSD {:.1} ({:.1}% fewer)\n\
                     polling: without CSD {:.1} cards, with partial CSD {:.1} ({:.1}% fewer)\n",
                    r.case.name,
                    r.comparison.without_csd,
                    r.comparison.with_csd,
                    r.comparison.reduction_percent,
                    r.polling.without_csd,
                    r.polling.with_partial_csd,
                    r.polling.reduction_percent
                )
            });
        }
        Command::CsdConvert { input, out } => {
            emit(out.as_deref(), &wide_csd_to_long(&read(&input)?)?)?;
        }
        Command::Serve { host, port, token } => {
            let store = SessionStore::open(&cli.data_dir)?;
            let addr: SocketAddr = format!("{host}:{port}")
                .parse()
                .map_err(|e| ApiError::new(422, "INVALID_INPUT", format!("bad address: {e}")))?;
            let state = AppState {
                store: Arc::new(store),
                token,
            };
            let rt = tokio::runtime::Runtime::new().map_err(ApiError::io)?;
            eprintln!("listening on {addr}");
            rt.block_on(server::serve(state, addr)).map_err(ApiError::io)?;
        }
    }
    Ok(())
}

fn audit(store: &SessionStore, cmd: AuditCommand, p: &Printer) -> Result<(), ApiError> {
    match cmd {
        AuditCommand::Init(a) => {
            let config = match (&a.config, a.method) {
                (Some(path), _) => serde_json::from_str::<AuditConfig>(&read(path)?)
                    .map_err(|e| ApiError::new(422, "PARSE_ERROR", format!("config: {e}")))?,
                (None, MethodArg::Comparison) => AuditConfig::comparison(),
                (None, MethodArg::Polling) => AuditConfig::polling(),
            };
            let election = ElectionInput {
                contests: parse_contests(&read(&a.contests)?)?,
                manifest_csv: read(&a.manifest)?,
                csd_csv: read(&a.csd)?,
                cvrs_jsonl: a.cvrs.as_deref().map(read).transpose()?.unwrap_or_default(),
                cards_per_ballot: a.cards_per_ballot,
                ballot_count: a.ballots,
            };
            let env = store.create(CreateSession {
                config,
                seed: seed(&a.seed)?,
                election,
            })?;
            p.show(&env, || format!("session {}", env.session_id));
        }
        AuditCommand::Round { session } => {
            let plan = store.plan(&session)?;
            p.show(&plan, || {
                let mut out = format!("round {}\n", plan.round);
                for c in &plan.cards {
                    out.push_str(&format!("{} {}\n", c.card.card_id, c.contests.join(",")));
                }
                out
            });
        }
        AuditCommand::Enter {
            session,
            round,
            file,
            json,
        } => {
            let text = match (file, json) {
                (Some(f), _) => read(&f)?,
                (None, Some(j)) => j,
                (None, None) => unreachable!("clap requires one"),
            };
            let mut n = 0;
            for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
                let interp: Interpretation = serde_json::from_str(line)
                    .map_err(|e| ApiError::new(422, "PARSE_ERROR", format!("line {}: {e}", i + 1)))?;
                store.record(&session, round, interp)?;
                n += 1;
            }
            p.show(&serde_json::json!({ "recorded": n }), || format!("recorded {n}"));
        }
        AuditCommand::Finalize { session, round } => {
            let result = store.finalize(&session, round)?;
            p.show(&result, || {
                result
                    .contests
                    .iter()
                    .map(|c| format!("{} {:?} risk {:.4}\n", c.contest_id, c.status, c.measured_risk))
                    .collect()
            });
        }
        AuditCommand::Status { session } => {
            let status = store.read(&session, |a| Ok(a.status()))?;
            p.show(&status, || status_text(&status));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let _ = std::io::stdout().flush();
            eprintln!("{}", e.to_json());
            ExitCode::from(if e.error == "IO_ERROR" { 1 } else { 2 })
        }
    }
}
