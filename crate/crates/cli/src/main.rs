use clap::{Args, Parser, Subcommand};
use ergolab_cli::catalog::{self, EXAMPLES};
use ergolab_cli::config::{self, Command, ExperimentConfig};
use ergolab_cli::report::write_outputs;
use ergolab_cli::{exit_code, run, CliError, EXIT_CONFIG, EXIT_PASS};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "ergolab", version, about = "Pressure, decompositions and equilibrium states on symbolic systems")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Two-scale partition sums and pressure
    Pressure(Common),
    /// Check the uniqueness hypotheses for a decomposition
    Certify(Common),
    /// Gibbs ratio bounds for an equilibrium measure
    Gibbs(Common),
    /// Partition entropy, Hamming separation and binomial counting
    Entropy(Common),
    /// Suspension-flow pressure, ball identity and Abramov checks
    FlowPressure(Common),
    /// Large-deviation upper bound
    Ldp(Common),
    /// Specification by gluing orbit segments
    Glue(Common),
    /// Split words into prefix, good core and suffix
    Decompose(Common),
    /// Run the command named in the config
    Run(Common),
    /// List the shipped example configs
    Examples {
        /// Print the config of this example
        #[arg(long)]
        show: Option<String>,
    },
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML)
    config: Option<PathBuf>,
    /// Use a shipped example instead of a config file
    #[arg(long, conflicts_with = "config")]
    example: Option<String>,
    /// Replace the [system] section
    #[arg(long)]
    system: Option<PathBuf>,
    /// Replace the [potential] section
    #[arg(long)]
    potential: Option<PathBuf>,
    /// Replace the [decomposition] section
    #[arg(long)]
    decomposition: Option<PathBuf>,
    /// Replace the [measure] section
    #[arg(long)]
    measure: Option<PathBuf>,
    /// Replace the [[constraint]] list
    #[arg(long)]
    constraint: Option<PathBuf>,
    /// Merge roof values into the [flow] section
    #[arg(long)]
    roof: Option<PathBuf>,
    /// Scale δ, e.g. 2^-7
    #[arg(long)]
    delta: Option<String>,
    /// Scale ε
    #[arg(long)]
    eps: Option<String>,
    #[arg(long)]
    nmax: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Cap on enumerated words (overrides ERGOLAB_BUDGET)
    #[arg(long)]
    budget: Option<u64>,
    /// Report path: a .json or .csv file, or a directory
    #[arg(long)]
    out: Option<PathBuf>,
}

fn scale_m(s: &str, field: &str) -> Result<i64, CliError> {
    ergolab_core::DyadicScale::parse(s).map(|d| d.m as i64).map_err(|e| CliError::config(field, e.to_string()))
}

fn sub_table<'a>(t: &'a mut toml::Table, key: &str) -> Result<&'a mut toml::Table, CliError> {
    t.entry(key.to_string())
        .or_insert_with(|| toml::Value::Table(toml::Table::new()))
        .as_table_mut()
        .ok_or_else(|| CliError::config(key, "expected a table"))
}

fn load(args: &Common, command: Option<Command>) -> Result<ExperimentConfig, CliError> {
    let mut table = match (&args.config, &args.example) {
        (Some(p), _) => config::read_table(p)?,
        (None, Some(name)) => {
            let ex = catalog::find(name).ok_or_else(|| CliError::config("--example", format!("no example named {name:?}")))?;
            config::parse_table(ex.text, name)?
        }
        (None, None) => {
            let mut t = toml::Table::new();
            t.insert("version".into(), toml::Value::Integer(config::SCHEMA_VERSION as i64));
            t
        }
    };
    for (path, key) in [
        (&args.system, "system"),
        (&args.potential, "potential"),
        (&args.decomposition, "decomposition"),
        (&args.measure, "measure"),
        (&args.constraint, "constraint"),
    ] {
        if let Some(p) = path {
            config::merge_section(&mut table, key, config::read_table(p)?);
        }
    }
    if let Some(p) = &args.roof {
        let roof = config::read_table(p)?;
        let flow = sub_table(&mut table, "flow")?;
        let src = roof.get("flow").and_then(|v| v.as_table()).cloned().unwrap_or(roof);
        flow.extend(src);
    }
    let scale_key = match command.or_else(|| table.get("command").and_then(|v| v.as_str()).and_then(parse_command)) {
        Some(Command::Pressure) => Some(("pressure", "delta", "eps")),
        Some(Command::Gibbs) => Some(("gibbs", "rho", "")),
        Some(Command::Entropy) => Some(("entropy", "", "eps")),
        Some(Command::FlowPressure) => Some(("flow", "delta", "")),
        Some(Command::Glue) => Some(("glue", "delta", "")),
        _ => None,
    };
    if command == Some(Command::Certify) || table.get("command").and_then(|v| v.as_str()) == Some("certify") {
        let ladder = sub_table(&mut table, "ladder")?;
        if let Some(d) = &args.delta {
            ladder.insert("m_delta".into(), toml::Value::Integer(scale_m(d, "--delta")?));
        }
        if let Some(e) = &args.eps {
            ladder.insert("m_eps".into(), toml::Value::Integer(scale_m(e, "--eps")?));
        }
    } else if let Some((sec, dkey, ekey)) = scale_key {
        for (val, key) in [(&args.delta, dkey), (&args.eps, ekey)] {
            if let Some(v) = val {
                if key.is_empty() {
                    return Err(CliError::config(sec, "this command does not take that scale"));
                }
                sub_table(&mut table, sec)?.insert(key.into(), toml::Value::String(v.clone()));
            }
        }
    }
    if let Some(n) = args.nmax {
        sub_table(&mut table, "budget")?.insert("n_max".into(), toml::Value::Integer(n as i64));
    }
    if let Some(s) = args.seed {
        table.insert("seed".into(), toml::Value::Integer(s as i64));
    }
    let mut cfg = ExperimentConfig::from_table(table)?;
    cfg.apply_budget_override(args.budget)?;
    Ok(cfg)
}

fn parse_command(s: &str) -> Option<Command> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).ok()
}

fn execute(args: &Common, command: Option<Command>) -> Result<i32, CliError> {
    let cfg = load(args, command)?;
    let (env, tables) = run(&cfg, command)?;
    match &args.out {
        Some(out) => {
            for p in write_outputs(out, &env, &tables)? {
                println!("{}", p.display());
            }
        }
        None => println!("{}", env.to_json()),
    }
    for c in &env.body.checks {
        eprintln!("{:<14} {}{}", format!("{:?}", c.verdict), c.name, if c.asserted { "" } else { " (informational)" });
    }
    Ok(exit_code(env.body.verdict))
}

fn examples(show: Option<String>) -> Result<i32, CliError> {
    if let Some(name) = show {
        let ex = catalog::find(&name).ok_or_else(|| CliError::config("--show", format!("no example named {name:?}")))?;
        print!("{}", ex.text);
        return Ok(EXIT_PASS);
    }
    for ex in EXAMPLES {
        println!("{:<30} {}", ex.name, ex.provenance());
    }
    Ok(EXIT_PASS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Sub::Pressure(a) => execute(&a, Some(Command::Pressure)),
        Sub::Certify(a) => execute(&a, Some(Command::Certify)),
        Sub::Gibbs(a) => execute(&a, Some(Command::Gibbs)),
        Sub::Entropy(a) => execute(&a, Some(Command::Entropy)),
        Sub::FlowPressure(a) => execute(&a, Some(Command::FlowPressure)),
        Sub::Ldp(a) => execute(&a, Some(Command::Ldp)),
        Sub::Glue(a) => execute(&a, Some(Command::Glue)),
        Sub::Decompose(a) => execute(&a, Some(Command::Decompose)),
        Sub::Run(a) => execute(&a, None),
        Sub::Examples { show } => examples(show),
    };
    let code = match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    debug_assert!(code <= EXIT_CONFIG + 1);
    ExitCode::from(code as u8)
}
