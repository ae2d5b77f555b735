//! Command-line front end: generation, evaluation, verification, rounding,
//! constraint-system export, and equilibrium search, with machine-readable
//! reports for scripting.
//!
//! Exit codes: 0 for a positive verification/search result or successful
//! generation, 1 for a negative verification or an exhausted search, 2 for
//! usage and input errors. Output is byte-identical for identical inputs
//! and seed.

use std::collections::BTreeMap;
use std::fs;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use nashgames::etr_export::{build_etr, emit_smtlib, parse_smtlib};
use nashgames::evaluate::{expected_payoffs, mdp_best_response};
use nashgames::fpnum::round_distribution;
use nashgames::generators::{
    build_gn, build_sat_game, gn_epsilon_ne, gn_exact_ne, parse_dimacs, sat_ne_from_valuation,
};
use nashgames::model::{
    parse_game, parse_profile, serialize_game, serialize_profile, Game, PlayerId, Prob,
    StationaryProfile, VertexId,
};
use nashgames::rational::{decimal_approx, format_rat, parse_rat, parse_rat_or_dyadic, rint, Rat};
use nashgames::search::{search_constrained_ne, SearchConfig, SearchMode, SearchOutcome};
use nashgames::verify::{
    check_etr_constraints, verify_constrained, verify_epsilon_ne, VerificationReport,
};

const DIGITS: usize = 20;

#[derive(Parser)]
#[command(
    name = "nashgames",
    version,
    about = "Stationary equilibria in turn-based stochastic games",
    disable_help_subcommand = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a game file.
    Generate {
        #[command(subcommand)]
        what: GenerateCmd,
    },
    /// Emit a reference equilibrium profile.
    Ne {
        #[command(subcommand)]
        what: NeCmd,
    },
    /// Exact expected payoffs of a full profile.
    Evaluate {
        #[arg(long)]
        game: String,
        #[arg(long)]
        profile: String,
        /// Restrict the output to one player.
        #[arg(long)]
        player: Option<String>,
        /// Include the per-vertex value table.
        #[arg(long)]
        table: bool,
        #[arg(long)]
        json: bool,
    },
    /// Optimal pure response of one player against the others.
    BestResponse {
        #[arg(long)]
        game: String,
        #[arg(long)]
        profile: String,
        #[arg(long)]
        player: String,
        #[arg(long)]
        json: bool,
    },
    /// Verify a profile as an, optionally constrained, epsilon-equilibrium.
    Verify {
        #[arg(long)]
        game: String,
        #[arg(long)]
        profile: String,
        /// Exact rational p/q or dyadic 2^-k; decimals are rejected.
        #[arg(long)]
        epsilon: String,
        #[command(flatten)]
        thresholds: ThresholdArgs,
        #[arg(long)]
        json: bool,
    },
    /// Round every profile row into a D(l) weight row.
    Round {
        #[arg(long)]
        profile: String,
        #[arg(long)]
        ell: u32,
        #[arg(long)]
        out: Option<String>,
    },
    /// Emit the constraint system for a support as SMT-LIB2 (QF_NRA).
    ExportEtr {
        #[arg(long)]
        game: String,
        /// Take the support from this profile's positive rows.
        #[arg(long)]
        profile: Option<String>,
        /// Take the k-th support in the canonical order (increasing total
        /// size, lexicographic within a size), 0-based.
        #[arg(long, conflicts_with = "profile")]
        support_rank: Option<u64>,
        #[command(flatten)]
        thresholds: ThresholdArgs,
        #[arg(long)]
        out: Option<String>,
    },
    /// Evaluate the constraint clauses on a profile, or check an external
    /// model against an emitted system.
    CheckEtr {
        #[arg(long)]
        game: Option<String>,
        #[arg(long)]
        profile: Option<String>,
        /// Emitted SMT-LIB2 file to re-read.
        #[arg(long)]
        system: Option<String>,
        /// JSON object {variable: "p/q"} with a candidate model.
        #[arg(long)]
        assignment: Option<String>,
        #[command(flatten)]
        thresholds: ThresholdArgs,
        #[arg(long)]
        json: bool,
    },
    /// Search for a constrained epsilon-equilibrium.
    Search {
        #[arg(long)]
        game: String,
        /// candidate-file | pure-enumeration | support-newton | random-restart
        #[arg(long)]
        mode: String,
        #[arg(long, default_value_t = 10_000)]
        budget: u64,
        #[arg(long)]
        epsilon: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Candidate profile file(s) for candidate-file mode.
        #[arg(long)]
        candidate: Vec<String>,
        #[command(flatten)]
        thresholds: ThresholdArgs,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Subcommand)]
enum GenerateCmd {
    /// The five-player family needing 2^(-2^n)-small probabilities.
    Gn {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        out: Option<String>,
    },
    /// The 3SAT reduction game of a DIMACS formula.
    Sat {
        #[arg(long)]
        dimacs: String,
        #[arg(long)]
        out: Option<String>,
    },
}

#[derive(Subcommand)]
enum NeCmd {
    /// Exact equilibrium of the n-th hard game.
    GnExact {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        out: Option<String>,
    },
    /// Epsilon-equilibrium of the n-th hard game with cut-off randomization.
    GnEpsilon {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        epsilon: String,
        #[arg(long)]
        out: Option<String>,
    },
    /// Pure equilibrium of a reduction game from a satisfying valuation.
    Sat {
        #[arg(long)]
        dimacs: String,
        /// Space or comma separated signed literals, e.g. "1 -2 3".
        #[arg(long)]
        assign: String,
        #[arg(long)]
        out: Option<String>,
    },
}

#[derive(Args)]
struct ThresholdArgs {
    /// Per-player lower payoff bound, "player=p/q" (repeatable).
    #[arg(long = "lower")]
    lower: Vec<String>,
    /// Per-player upper payoff bound, "player=p/q" (repeatable).
    #[arg(long = "upper")]
    upper: Vec<String>,
}

struct Failure {
    code: u8,
    message: String,
}

fn usage_error(message: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        message: message.into(),
    }
}

trait OrUsage<T> {
    fn or_usage(self, context: &str) -> Result<T, Failure>;
}

impl<T, E: std::fmt::Display> OrUsage<T> for Result<T, E> {
    fn or_usage(self, context: &str) -> Result<T, Failure> {
        self.map_err(|e| usage_error(format!("{context}: {e}")))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn read_file(path: &str) -> Result<String, Failure> {
    fs::read_to_string(path).or_usage(&format!("cannot read `{path}`"))
}

fn load_game(path: &str) -> Result<Game, Failure> {
    parse_game(&read_file(path)?).or_usage(&format!("game file `{path}`"))
}

fn load_profile(path: &str) -> Result<StationaryProfile, Failure> {
    parse_profile(&read_file(path)?).or_usage(&format!("profile file `{path}`"))
}

fn write_out(out: Option<&str>, text: &str) -> Result<(), Failure> {
    match out {
        Some(path) => fs::write(path, text).or_usage(&format!("cannot write `{path}`")),
        None => {
            print!("{text}");
            if !text.ends_with('\n') {
                println!();
            }
            Ok(())
        }
    }
}

fn parse_epsilon(text: &str) -> Result<Rat, Failure> {
    parse_rat_or_dyadic(text).or_usage("--epsilon")
}

/// Range thresholds covering the whole payoff range, used when none given.
fn open_thresholds(g: &Game) -> (BTreeMap<PlayerId, Rat>, BTreeMap<PlayerId, Rat>) {
    let bound = g.max_abs_reward();
    let lo = g
        .players()
        .iter()
        .map(|p| (p.clone(), -bound.clone()))
        .collect();
    let hi = g
        .players()
        .iter()
        .map(|p| (p.clone(), bound.clone()))
        .collect();
    (lo, hi)
}

fn parse_thresholds(
    g: &Game,
    args: &ThresholdArgs,
) -> Result<Option<(BTreeMap<PlayerId, Rat>, BTreeMap<PlayerId, Rat>)>, Failure> {
    if args.lower.is_empty() && args.upper.is_empty() {
        return Ok(None);
    }
    let parse_side = |entries: &[String], flag: &str| -> Result<BTreeMap<PlayerId, Rat>, Failure> {
        let mut out = BTreeMap::new();
        for e in entries {
            let (name, value) = e
                .split_once('=')
                .ok_or_else(|| usage_error(format!("{flag} expects player=p/q, got `{e}`")))?;
            let player = g
                .players()
                .iter()
                .find(|p| p.as_str() == name)
                .cloned()
                .ok_or_else(|| usage_error(format!("{flag}: unknown player `{name}`")))?;
            out.insert(player, parse_rat(value).or_usage(flag)?);
        }
        Ok(out)
    };
    let lower_given = parse_side(&args.lower, "--lower")?;
    let upper_given = parse_side(&args.upper, "--upper")?;
    let (mut lower, mut upper) = open_thresholds(g);
    lower.extend(lower_given);
    upper.extend(upper_given);
    Ok(Some((lower, upper)))
}

fn rat_cell(x: &Rat) -> String {
    format!("{} ({})", format_rat(x), decimal_approx(x, DIGITS))
}

fn rat_json(x: &Rat) -> serde_json::Value {
    serde_json::json!({
        "exact": format_rat(x),
        "decimal": decimal_approx(x, DIGITS),
    })
}

fn report_json(report: &VerificationReport) -> serde_json::Value {
    let players: serde_json::Map<String, serde_json::Value> = report
        .players
        .iter()
        .map(|(p, pv)| {
            (
                p.as_str().to_string(),
                serde_json::json!({
                    "payoff": rat_json(&pv.payoff),
                    "best_response": rat_json(&pv.best_response_value),
                    "margin": rat_json(&pv.deviation_margin),
                    "constraint_ok": pv.constraint_ok,
                }),
            )
        })
        .collect();
    serde_json::json!({
        "epsilon": format_rat(&report.epsilon),
        "is_ne": report.is_ne,
        "accepted": report.accepted,
        "players": players,
    })
}

fn print_report(report: &VerificationReport, json: bool) {
    if json {
        println!(
            "{}",
            serde_json::to_string_pretty(&report_json(report)).unwrap()
        );
        return;
    }
    println!("epsilon: {}", format_rat(&report.epsilon));
    for (p, pv) in &report.players {
        println!(
            "player {p}: payoff {} | best-response {} | margin {} | constraint {}",
            rat_cell(&pv.payoff),
            rat_cell(&pv.best_response_value),
            rat_cell(&pv.deviation_margin),
            if pv.constraint_ok { "ok" } else { "violated" },
        );
    }
    println!("is_ne: {}", report.is_ne);
    println!("accepted: {}", report.accepted);
}

fn parse_assign(text: &str) -> Result<Vec<i64>, Failure> {
    text.split(|c: char| c.is_whitespace() || c == ',')
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<i64>().or_usage("--assign"))
        .collect()
}

fn run(cmd: Command) -> Result<u8, Failure> {
    match cmd {
        Command::Generate { what } => {
            let (game, out) = match what {
                GenerateCmd::Gn { n, out } => (build_gn(n).or_usage("--n")?, out),
                GenerateCmd::Sat { dimacs, out } => {
                    let formula = parse_dimacs(&read_file(&dimacs)?).or_usage("--dimacs")?;
                    (build_sat_game(&formula).or_usage("--dimacs")?, out)
                }
            };
            write_out(out.as_deref(), &serialize_game(&game))?;
            Ok(0)
        }
        Command::Ne { what } => {
            let (profile, out) = match what {
                NeCmd::GnExact { n, out } => (gn_exact_ne(n).or_usage("--n")?, out),
                NeCmd::GnEpsilon { n, epsilon, out } => {
                    let eps = parse_epsilon(&epsilon)?;
                    (gn_epsilon_ne(n, &eps).or_usage("--n/--epsilon")?, out)
                }
                NeCmd::Sat {
                    dimacs,
                    assign,
                    out,
                } => {
                    let formula = parse_dimacs(&read_file(&dimacs)?).or_usage("--dimacs")?;
                    let literals = parse_assign(&assign)?;
                    let mut valuation = vec![false; formula.var_count];
                    for lit in literals {
                        let var = lit.unsigned_abs() as usize;
                        if var == 0 || var > formula.var_count {
                            return Err(usage_error(format!(
                                "--assign: variable {var} out of range"
                            )));
                        }
                        valuation[var - 1] = lit > 0;
                    }
                    (
                        sat_ne_from_valuation(&formula, &valuation).or_usage("--assign")?,
                        out,
                    )
                }
            };
            write_out(out.as_deref(), &serialize_profile(&profile))?;
            Ok(0)
        }
        Command::Evaluate {
            game,
            profile,
            player,
            table,
            json,
        } => {
            let g = load_game(&game)?;
            let sigma = load_profile(&profile)?;
            let values = expected_payoffs(&g, &sigma).or_usage("evaluate")?;
            let selected: Vec<&PlayerId> = match &player {
                None => g.players().iter().collect(),
                Some(name) => vec![g
                    .players()
                    .iter()
                    .find(|p| p.as_str() == name)
                    .ok_or_else(|| usage_error(format!("unknown player `{name}`")))?],
            };
            if json {
                let mut body = serde_json::Map::new();
                for p in &selected {
                    let mut entry = serde_json::Map::new();
                    entry.insert("payoff".into(), rat_json(&values.payoffs[*p]));
                    if table {
                        let t: serde_json::Map<String, serde_json::Value> = values.tables[*p]
                            .iter()
                            .map(|(v, r)| (v.as_str().to_string(), rat_json(r)))
                            .collect();
                        entry.insert("table".into(), t.into());
                    }
                    body.insert(p.as_str().to_string(), entry.into());
                }
                println!(
                    "{}",
                    serde_json::to_string_pretty(&serde_json::Value::from(body)).unwrap()
                );
            } else {
                for p in &selected {
                    println!("player {p}: payoff {}", rat_cell(&values.payoffs[*p]));
                    if table {
                        for (v, r) in &values.tables[*p] {
                            println!("  {v}: {}", rat_cell(r));
                        }
                    }
                }
            }
            Ok(0)
        }
        Command::BestResponse {
            game,
            profile,
            player,
            json,
        } => {
            let g = load_game(&game)?;
            let sigma = load_profile(&profile)?;
            let p = g
                .players()
                .iter()
                .find(|q| q.as_str() == player)
                .cloned()
                .ok_or_else(|| usage_error(format!("unknown player `{player}`")))?;
            let br = mdp_best_response(&g, &sigma, &p).or_usage("best-response")?;
            if json {
                let strategy: serde_json::Map<String, serde_json::Value> = br
                    .strategy
                    .iter()
                    .map(|(v, w)| (v.as_str().to_string(), w.as_str().into()))
                    .collect();
                println!(
                    "{}",
                    serde_json::to_string_pretty(&serde_json::json!({
                        "player": p.as_str(),
                        "value": rat_json(&br.value),
                        "strategy": strategy,
                    }))
                    .unwrap()
                );
            } else {
                println!("player {p}: best-response value {}", rat_cell(&br.value));
                for (v, w) in &br.strategy {
                    println!("  {v} -> {w}");
                }
            }
            Ok(0)
        }
        Command::Verify {
            game,
            profile,
            epsilon,
            thresholds,
            json,
        } => {
            let g = load_game(&game)?;
            let sigma = load_profile(&profile)?;
            let eps = parse_epsilon(&epsilon)?;
            let report = match parse_thresholds(&g, &thresholds)? {
                None => verify_epsilon_ne(&g, &sigma, &eps).or_usage("verify")?,
                Some((lower, upper)) => {
                    verify_constrained(&g, &sigma, &lower, &upper, &eps).or_usage("verify")?
                }
            };
            print_report(&report, json);
            Ok(if report.accepted { 0 } else { 1 })
        }
        Command::Round { profile, ell, out } => {
            let sigma = load_profile(&profile)?;
            let mut rounded = StationaryProfile::new();
            let zero = rint(0);
            for (v, row) in &sigma.rows {
                let positive: Vec<(&VertexId, Rat)> = row
                    .iter()
                    .map(|(w, p)| (w, p.exact()))
                    .filter(|(_, p)| *p > zero)
                    .collect();
                // Weight rows (float entries) are normalized before rounding,
                // so re-rounding an already rounded profile works.
                let total: Rat = positive.iter().map(|(_, p)| p.clone()).sum();
                let mu: Vec<Rat> = positive.iter().map(|(_, p)| p / &total).collect();
                let dist = round_distribution(&mu, ell)
                    .or_usage(&format!("row at `{v}` cannot be rounded"))?;
                let new_row: BTreeMap<VertexId, Prob> = positive
                    .iter()
                    .zip(dist.weights())
                    .map(|((w, _), f)| ((*w).clone(), Prob::Float(f.clone())))
                    .collect();
                rounded.set_row(v.clone(), new_row);
            }
            write_out(out.as_deref(), &serialize_profile(&rounded))?;
            Ok(0)
        }
        Command::ExportEtr {
            game,
            profile,
            support_rank,
            thresholds,
            out,
        } => {
            let g = load_game(&game)?;
            let support = match (&profile, support_rank) {
                (Some(path), None) => {
                    let sigma = load_profile(path)?;
                    sigma.support(&g).or_usage("--profile")?
                }
                (None, Some(rank)) => nashgames::search::supports_in_order(&g)
                    .nth(rank as usize)
                    .ok_or_else(|| {
                        usage_error(format!("--support-rank {rank} is out of range"))
                    })?,
                _ => {
                    return Err(usage_error(
                        "export-etr needs exactly one of --profile or --support-rank",
                    ))
                }
            };
            let (lower, upper) =
                parse_thresholds(&g, &thresholds)?.unwrap_or_else(|| open_thresholds(&g));
            let sys = build_etr(&g, &lower, &upper, &support).or_usage("export-etr")?;
            write_out(out.as_deref(), &emit_smtlib(&sys))?;
            Ok(0)
        }
        Command::CheckEtr {
            game,
            profile,
            system,
            assignment,
            thresholds,
            json,
        } => match (game, profile, system, assignment) {
            (Some(game), Some(profile), None, None) => {
                let g = load_game(&game)?;
                let sigma = load_profile(&profile)?;
                let parsed = parse_thresholds(&g, &thresholds)?;
                let refs = parsed.as_ref().map(|(lo, hi)| (lo, hi));
                let violations = check_etr_constraints(&g, &sigma, refs).or_usage("check-etr")?;
                if json {
                    let list: Vec<String> = violations.iter().map(|c| c.to_string()).collect();
                    println!(
                        "{}",
                        serde_json::to_string_pretty(&serde_json::json!({
                            "violations": list,
                            "satisfied": violations.is_empty(),
                        }))
                        .unwrap()
                    );
                } else if violations.is_empty() {
                    println!("satisfied");
                } else {
                    for v in &violations {
                        println!("violated: {v}");
                    }
                }
                Ok(if violations.is_empty() { 0 } else { 1 })
            }
            (None, None, Some(system), Some(assignment)) => {
                let parsed = parse_smtlib(&read_file(&system)?).or_usage("--system")?;
                let raw: BTreeMap<String, String> =
                    serde_json::from_str(&read_file(&assignment)?).or_usage("--assignment")?;
                let mut model = BTreeMap::new();
                for (k, v) in raw {
                    let val = parse_rat(&v).or_usage(&format!("--assignment {k}"))?;
                    model.insert(k, val);
                }
                let violated = parsed.violated(&model).or_usage("--assignment")?;
                if json {
                    println!(
                        "{}",
                        serde_json::to_string_pretty(&serde_json::json!({
                            "violated_asserts": violated,
                            "satisfied": violated.is_empty(),
                        }))
                        .unwrap()
                    );
                } else if violated.is_empty() {
                    println!("satisfied");
                } else {
                    for ix in &violated {
                        println!("violated assert #{ix}");
                    }
                }
                Ok(if violated.is_empty() { 0 } else { 1 })
            }
            _ => Err(usage_error(
                "check-etr needs either --game and --profile, or --system and --assignment",
            )),
        },
        Command::Search {
            game,
            mode,
            budget,
            epsilon,
            seed,
            candidate,
            thresholds,
            json,
        } => {
            let g = load_game(&game)?;
            let eps = parse_epsilon(&epsilon)?;
            let mode = match mode.as_str() {
                "candidate-file" => {
                    if candidate.is_empty() {
                        return Err(usage_error("candidate-file mode needs --candidate"));
                    }
                    let mut list = Vec::new();
                    for path in &candidate {
                        list.push(load_profile(path)?);
                    }
                    SearchMode::Candidates(list)
                }
                "pure-enumeration" => SearchMode::PureEnumeration,
                "support-newton" => SearchMode::SupportNewton,
                "random-restart" => SearchMode::RandomRestart,
                other => return Err(usage_error(format!("unknown mode `{other}`"))),
            };
            let (lower, upper) =
                parse_thresholds(&g, &thresholds)?.unwrap_or_else(|| open_thresholds(&g));
            let cfg = SearchConfig {
                mode,
                budget,
                epsilon: eps,
                seed,
            };
            match search_constrained_ne(&g, &lower, &upper, &cfg).or_usage("search")? {
                SearchOutcome::Found {
                    candidates_tried,
                    profile,
                    report,
                } => {
                    if json {
                        println!(
                            "{}",
                            serde_json::to_string_pretty(&serde_json::json!({
                                "outcome": "found",
                                "candidates_tried": candidates_tried,
                                "profile": serde_json::from_str::<serde_json::Value>(
                                    &serialize_profile(&profile)
                                )
                                .unwrap(),
                                "report": report_json(&report),
                            }))
                            .unwrap()
                        );
                    } else {
                        println!("found after {candidates_tried} candidate(s)");
                        println!("{}", serialize_profile(&profile));
                        print_report(&report, false);
                    }
                    Ok(0)
                }
                SearchOutcome::Exhausted {
                    candidates_tried,
                    best_margin,
                } => {
                    let margin = best_margin.as_ref().map(format_rat);
                    if json {
                        println!(
                            "{}",
                            serde_json::to_string_pretty(&serde_json::json!({
                                "outcome": "exhausted",
                                "candidates_tried": candidates_tried,
                                "best_margin": margin,
                            }))
                            .unwrap()
                        );
                    } else {
                        println!(
                            "exhausted after {candidates_tried} candidate(s); best margin {}",
                            margin.unwrap_or_else(|| "n/a".into())
                        );
                    }
                    Ok(1)
                }
            }
        }
    }
}
