use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gossipscope::classify::PreorderReport;
use gossipscope::oracle::{oracle_eval, oracle_tables};
use gossipscope::{
    analyze, build_equivalence_index, compare_types, parse_formula, parse_protocol_file, schedule_2n_minus_4,
    verify_preorder, AgentId, CallSequence, CallType, EquivalenceIndex, GossipModel, IndexConfig, Semantics,
    Universe,
};
use serde::Serialize;
use serde_json::json;

const BUDGET_VAR: &str = "GOSSIPSCOPE_PAIR_BUDGET";

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Core(#[from] gossipscope::Error),
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{BUDGET_VAR} must be a positive integer, got `{0}`")]
    Budget(String),
}

type Result<T> = std::result::Result<T, CliError>;

#[derive(Parser)]
#[command(name = "gossipscope", version, about = "Epistemic gossip model checker")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long, default_value_t = 3)]
    agents: usize,
    /// e.g. p2,pushpull,after
    #[arg(long)]
    calltype: CallType,
    /// Longest sequence in the universe; 4 for three agents, 3 otherwise.
    #[arg(long)]
    bound: Option<usize>,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
    /// Answer with the brute-force reference implementation.
    #[arg(long, hide = true)]
    oracle: bool,
}

impl ModelArgs {
    fn bound(&self) -> usize {
        self.bound.unwrap_or(default_bound(self.agents))
    }

    fn index(&self) -> Result<EquivalenceIndex> {
        let u = Arc::new(Universe::new(self.agents, self.bound())?);
        Ok(build_equivalence_index(u, self.calltype, &index_config()?)?)
    }

    fn seq(&self, text: &str) -> Result<CallSequence> {
        Ok(CallSequence::parse(text, self.agents, self.calltype.direction)?)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Truth of a formula after a call sequence.
    Eval {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        seq: String,
        #[arg(long)]
        formula: String,
    },
    /// Indistinguishability classes of one agent.
    Classes {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        agent: char,
        /// Only the class of this sequence.
        #[arg(long)]
        seq: Option<String>,
    },
    /// Whether an agent can tell two sequences apart.
    Indist {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        agent: char,
        #[arg(long = "seqA")]
        seq_a: String,
        #[arg(long = "seqB")]
        seq_b: String,
    },
    /// Inclusion between the relations of two call types.
    Compare {
        #[arg(long, default_value_t = 3)]
        agents: usize,
        #[arg(long)]
        bound: Option<usize>,
        #[arg(long)]
        left: CallType,
        #[arg(long)]
        right: CallType,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// All 153 pairwise comparisons against the expected preorder.
    VerifyPreorder {
        #[arg(long, default_value_t = 3)]
        agents: usize,
        #[arg(long)]
        bound: Option<usize>,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Analyse a protocol file.
    Protocol {
        file: PathBuf,
        #[arg(long, default_value = "naive")]
        semantics: Semantics,
        /// Overrides the file's bound.
        #[arg(long)]
        bound: Option<usize>,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// The fixed schedule of 2n-4 calls.
    Schedule {
        #[arg(long)]
        agents: usize,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
}

fn default_bound(n: usize) -> usize {
    if n == 3 {
        4
    } else {
        3
    }
}

fn index_config() -> Result<IndexConfig> {
    let mut cfg = IndexConfig::default();
    if let Ok(v) = std::env::var(BUDGET_VAR) {
        cfg.pair_budget = v.trim().parse().ok().filter(|b| *b > 0).ok_or(CliError::Budget(v))?;
    }
    Ok(cfg)
}

/// Write errors such as a closed pipe are ignored; the exit status still carries the answer.
fn emit(format: Format, text: impl FnOnce() -> String, record: impl Serialize) {
    let line = match format {
        Format::Text => text(),
        Format::Json => serde_json::to_string(&record).expect("records serialise"),
    };
    let _ = writeln!(std::io::stdout().lock(), "{line}");
}

/// A serialised struct with a leading `command` field.
fn tagged(command: &str, record: &impl Serialize) -> serde_json::Value {
    let mut v = serde_json::to_value(record).expect("records serialise");
    if let serde_json::Value::Object(map) = &mut v {
        map.insert("command".into(), command.into());
    }
    v
}

fn verdict(ok: bool) -> ExitCode {
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Eval { model, seq, formula } => {
            let n = model.agents;
            let f = parse_formula(&formula, n)?;
            let s = model.seq(&seq)?;
            let idx = model.index()?;
            let result = if model.oracle {
                let u = idx.universe();
                let i = u.require(&s, model.calltype.direction)?;
                if f.agent_span() > n {
                    return Err(gossipscope::Error::AgentOutOfRange { agent: formula, n }.into());
                }
                oracle_eval(&f, i, u, model.calltype.direction, &oracle_tables(u, model.calltype))
            } else {
                gossipscope::eval(&f, &s, &GossipModel::from_index(idx))?
            };
            let bound = model.bound();
            emit(model.format, || format!("{result} (bound {bound})"), json!({
                "command": "eval",
                "agents": n,
                "calltype": model.calltype.flag(),
                "bound": bound,
                "sequence": s.display(model.calltype.direction),
                "formula": f.to_string(),
                "result": result,
            }));
            Ok(verdict(result))
        }
        Command::Classes { model, agent, seq } => {
            let a = AgentId::from_letter(agent, model.agents)?;
            let idx = model.index()?;
            let partition = if model.oracle {
                oracle_tables(idx.universe(), model.calltype)[a.index()].to_partition()
            } else {
                idx.partition(a).clone()
            };
            let idx = EquivalenceIndex::from_partitions(
                idx.universe().clone(),
                model.calltype,
                AgentId::all(model.agents)
                    .map(|b| if b == a { partition.clone() } else { idx.partition(b).clone() })
                    .collect(),
            );
            let mut records = idx.class_records(a);
            if let Some(s) = seq {
                let i = idx.universe().require(&model.seq(&s)?, model.calltype.direction)?;
                let id = idx.partition(a).class_id(i);
                records.retain(|r| r.class_id == id);
            }
            let bound = model.bound();
            emit(
                model.format,
                || {
                    let mut out = format!(
                        "{} classes for agent {a} under {} (bound {bound})",
                        records.len(),
                        model.calltype
                    );
                    for r in &records {
                        out.push_str(&format!("\n{}: {}", r.class_id, r.members.join(" | ")));
                    }
                    out
                },
                json!({
                    "command": "classes",
                    "agents": model.agents,
                    "calltype": model.calltype.flag(),
                    "bound": bound,
                    "classes": records,
                }),
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Indist { model, agent, seq_a, seq_b } => {
            let a = AgentId::from_letter(agent, model.agents)?;
            let (c, d) = (model.seq(&seq_a)?, model.seq(&seq_b)?);
            let idx = model.index()?;
            let result = if model.oracle {
                let u = idx.universe();
                let dir = model.calltype.direction;
                let (i, j) = (u.require(&c, dir)?, u.require(&d, dir)?);
                oracle_tables(u, model.calltype)[a.index()].get(i, j)
            } else {
                gossipscope::indistinguishable(&c, &d, a, &idx)?
            };
            let bound = model.bound();
            emit(model.format, || format!("{result} (bound {bound})"), json!({
                "command": "indist",
                "agents": model.agents,
                "calltype": model.calltype.flag(),
                "bound": bound,
                "agent": a.to_string(),
                "seqA": c.display(model.calltype.direction),
                "seqB": d.display(model.calltype.direction),
                "result": result,
            }));
            Ok(verdict(result))
        }
        Command::Compare { agents, bound, left, right, format } => {
            let bound = bound.unwrap_or(default_bound(agents));
            let r = compare_types(left, right, agents, bound, &index_config()?)?;
            emit(
                format,
                || {
                    let mut out = format!("{left} vs {right}: {} (bound {bound})", r.verdict);
                    for w in &r.witnesses {
                        out.push_str(&format!(
                            "\n  {}: agent {} {} ~ {}",
                            w.direction_of_failure, w.agent, w.seq_a, w.seq_b
                        ));
                    }
                    out
                },
                tagged("compare", &r),
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::VerifyPreorder { agents, bound, format } => {
            let bound = bound.unwrap_or(default_bound(agents));
            let r = verify_preorder(agents, bound, &index_config()?)?;
            emit(format, || preorder_text(&r), json!({
                "command": "verify-preorder",
                "agents": agents,
                "bound": bound,
                "matches": r.ok(),
                "deviations": r.deviations().collect::<Vec<_>>(),
                "fixtures_checked": r.fixtures.len(),
                "fixtures_failed": r.failed_fixtures().collect::<Vec<_>>(),
                "pairs": r.pairs,
            }));
            Ok(verdict(r.ok()))
        }
        Command::Protocol { file, semantics, bound, format } => {
            let text = std::fs::read_to_string(&file).map_err(|source| CliError::Io { path: file.clone(), source })?;
            let spec = parse_protocol_file(&text)?;
            let p = spec.protocol()?;
            let bound = bound.or(spec.bound).unwrap_or(default_bound(spec.agents));
            let m = GossipModel::build(spec.agents, bound, spec.calltype, &index_config()?)?;
            let r = analyze(&p, &m, semantics)?;
            emit(
                format,
                || {
                    format!(
                        "{} semantics, bound {}: {} compliant sequences, {} terminal, all terminal sequences expert: {}, \
                         compliant calls beyond the bound: {}",
                        semantics.name(),
                        r.bound,
                        r.size,
                        r.terminal_count,
                        r.all_expert,
                        r.bound_limited
                    )
                },
                tagged("protocol", &r),
            );
            Ok(verdict(r.all_expert))
        }
        Command::Schedule { agents, format } => {
            let s = schedule_2n_minus_4(agents)?;
            let shown = s.display(gossipscope::Direction::PushPull);
            emit(format, || shown.clone(), json!({
                "command": "schedule",
                "agents": agents,
                "length": s.len(),
                "sequence": shown,
            }));
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn preorder_text(r: &PreorderReport) -> String {
    let dev: Vec<_> = r.deviations().collect();
    let mut out = format!(
        "{} agents, bound {}: {} of {} pairs match the expected preorder; {} of {} witness fixtures reproduce",
        r.agents,
        r.bound,
        r.pairs.len() - dev.len(),
        r.pairs.len(),
        r.fixtures.len() - r.failed_fixtures().count(),
        r.fixtures.len()
    );
    for p in dev {
        out.push_str(&format!(
            "\n  {} vs {}: observed {}, expected {}{}",
            p.comparison.pair[0],
            p.comparison.pair[1],
            p.comparison.verdict,
            p.expected,
            if p.bound_artifact { " (may separate at a larger bound)" } else { "" }
        ));
    }
    for f in r.failed_fixtures() {
        let f = &f.fixture;
        out.push_str(&format!(
            "\n  fixture [{}] {} agent {}: {} ~ {} expected {}",
            f.label, f.calltype, f.agent, f.seq_a, f.seq_b, f.expected
        ));
    }
    out
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
