use clap::{CommandFactory, Parser, ValueEnum};
use hlcex::encode::CutConfig;
use hlcex::gcl::parse_model;
use hlcex::pipeline::{self, Mode, PipelineConfig, PipelineError};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    Commands,
    Modules,
    Branches,
    States,
    Values,
    Intervals,
    Pipeline,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ReportArg {
    Text,
    Json,
}

/// Smallest critical label sets for probabilistic guarded-command models.
#[derive(Parser, Debug)]
#[command(name = "hlcex", version)]
struct Args {
    /// Model file.
    #[arg(long)]
    model: PathBuf,
    /// Property `P<=λ [ F target ]`, inline or as a file path.
    #[arg(long)]
    prop: String,
    #[arg(long, value_enum, default_value = "pipeline")]
    mode: ModeArg,
    /// none, fwd, bwd, label, sync, all, or a combination such as fwd+label.
    #[arg(long, default_value = "all")]
    cuts: String,
    /// Solver time limit per SCL computation, in seconds.
    #[arg(long)]
    time_limit: Option<f64>,
    /// Write the MILP in LP format and exit without solving.
    #[arg(long)]
    export_lp: Option<PathBuf>,
    /// Decode a solution file from an external solver instead of solving.
    #[arg(long)]
    import_solution: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "text")]
    report: ReportArg,
    /// Write the simplified model here instead of standard output.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Module equivalence classes for `--mode modules`, e.g. `p1,p2;p3`.
    #[arg(long)]
    module_classes: Option<String>,
    /// Margin replacing the strict probability bound.
    #[arg(long, default_value = "0.000001")]
    delta_lambda: String,
    /// Skip the greedy start solution.
    #[arg(long)]
    no_mip_start: bool,
}

fn mode(m: ModeArg) -> Mode {
    match m {
        ModeArg::Commands => Mode::Commands,
        ModeArg::Modules => Mode::Modules,
        ModeArg::Branches => Mode::Branches,
        ModeArg::States => Mode::States,
        ModeArg::Values => Mode::Values,
        ModeArg::Intervals => Mode::Intervals,
        ModeArg::Pipeline => Mode::Pipeline,
    }
}

fn fail(msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(2)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            eprint!("{e}");
            eprintln!("\n{}", Args::command().render_usage());
            return ExitCode::from(2);
        }
    };
    let text = match std::fs::read_to_string(&args.model) {
        Ok(t) => t,
        Err(e) => return fail(format!("{}: {e}", args.model.display())),
    };
    let model = match parse_model(&text) {
        Ok(m) => m,
        Err(e) => return fail(format!("{}: {e}", args.model.display())),
    };
    let prop_text = match std::fs::read_to_string(&args.prop) {
        Ok(t) => t,
        Err(_) => args.prop.clone(),
    };
    let prop = match pipeline::parse_property(&prop_text) {
        Ok(p) => p,
        Err(e) => return fail(e),
    };
    let mut cfg = PipelineConfig::default();
    cfg.scl.cuts = match CutConfig::parse(&args.cuts) {
        Ok(c) => c,
        Err(e) => return fail(e),
    };
    cfg.scl.time_limit = args.time_limit.map(Duration::from_secs_f64);
    cfg.scl.mip_start = !args.no_mip_start;
    cfg.scl.delta_lambda = match hlcex::gcl::parser::parse_decimal_prob(&args.delta_lambda) {
        Some(d) => d,
        None => return fail("malformed --delta-lambda"),
    };
    let mode = mode(args.mode);
    cfg.intervals = matches!(mode, Mode::Intervals);
    if let Some(spec) = &args.module_classes {
        let mut classes = vec![];
        for group in spec.split(';') {
            let mut class = vec![];
            for name in group.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                match model.module_index(name) {
                    Some(i) => class.push(i),
                    None => return fail(format!("unknown module `{name}`")),
                }
            }
            classes.push(class);
        }
        cfg.module_classes = Some(classes);
    }
    // `all` silently drops families that do not apply; explicit requests are checked.
    if args.cuts.trim() == "all" {
        cfg.scl.cuts.sync = !matches!(mode, Mode::States | Mode::Values | Mode::Intervals | Mode::Modules);
    }

    let finish = |res: Result<pipeline::Outcome, PipelineError>, warnings: Vec<String>| -> ExitCode {
        match res {
            Ok(out) => {
                for w in warnings {
                    eprintln!("warning: {w}");
                }
                match args.report {
                    ReportArg::Text => print!("{}", out.report.to_text()),
                    ReportArg::Json => println!("{}", out.report.to_json()),
                }
                match &args.output {
                    Some(path) => {
                        if let Err(e) = std::fs::write(path, &out.text) {
                            return fail(format!("{}: {e}", path.display()));
                        }
                    }
                    None if matches!(args.report, ReportArg::Text) => print!("\n{}", out.text),
                    None => {}
                }
                ExitCode::SUCCESS
            }
            Err(PipelineError::Satisfied { pmax, lambda }) => {
                println!("property holds: p_max = {pmax} <= {lambda}");
                ExitCode::from(1)
            }
            Err(e) => fail(e),
        }
    };

    if let Some(path) = &args.export_lp {
        let stage_mode = if mode == Mode::Pipeline { Mode::Commands } else { mode };
        return match pipeline::encode_mode(&model, &prop, stage_mode, &cfg) {
            Ok((_, _, enc)) => match std::fs::write(path, hlcex_milp::export_lp(&enc.milp)) {
                Ok(()) => {
                    eprintln!(
                        "wrote {} ({} variables, {} constraints)",
                        path.display(),
                        enc.milp.num_vars(),
                        enc.milp.num_constraints()
                    );
                    ExitCode::SUCCESS
                }
                Err(e) => fail(format!("{}: {e}", path.display())),
            },
            Err(PipelineError::Satisfied { pmax, lambda }) => {
                println!("property holds: p_max = {pmax} <= {lambda}");
                ExitCode::from(1)
            }
            Err(e) => fail(e),
        };
    }
    if let Some(path) = &args.import_solution {
        if mode == Mode::Pipeline {
            return fail("--import-solution needs a single-stage --mode");
        }
        let sol = match std::fs::read_to_string(path) {
            Ok(s) => s,
            Err(e) => return fail(format!("{}: {e}", path.display())),
        };
        return match pipeline::import_mode(&model, &prop, mode, &cfg, &sol) {
            Ok((out, warnings)) => finish(Ok(out), warnings),
            Err(e) => finish(Err(e), vec![]),
        };
    }
    finish(pipeline::run_mode(&model, &prop, mode, &cfg), vec![])
}
