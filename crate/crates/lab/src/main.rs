use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use blockmdp::io as files;
use blockmdp::kmedians::ClusterAssignment;
use blockmdp::model::{generate_random_instance, generate_two_cluster_instance, BehaviorPolicy, BlockMdp, RandomInstanceConfig};
use blockmdp::planning::{evaluate, plan, PlanView};
use blockmdp::rate::{OccupancyMode, RateContext};
use blockmdp::refine::{estimate_pq, full_pipeline, improve, PipelineConfig};
use blockmdp::sim::simulate;
use blockmdp::spectral::{spectral_clustering, SpectralConfig};
use blockmdp_lab::checks::{run_concentration_check, run_rate_check};
use blockmdp_lab::experiments::{run_exp1, run_exp2, run_exp3, run_rewardfree};
use blockmdp_lab::{ExperimentConfig, ExperimentKind, LabError};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "bmdp", version, about = "Block MDP decoding, estimation and experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Base seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Repetitions per grid cell.
    #[arg(long)]
    reps: Option<usize>,
    /// Worker threads.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args)]
struct ExpArgs {
    #[command(flatten)]
    common: Common,
    /// JSON config file; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    n: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    u: Option<Vec<u32>>,
    #[arg(long, value_delimiter = ',')]
    th: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    eps: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    episodes: Option<Vec<usize>>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    spikes: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a model: the two-cluster family, or a random instance when --states is given.
    Gen {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 100)]
        n: usize,
        #[arg(long, default_value_t = 0.2)]
        eps: f64,
        #[arg(long, default_value_t = 10)]
        horizon: usize,
        #[arg(long)]
        states: Option<usize>,
        #[arg(long, default_value_t = 2)]
        actions: usize,
        #[arg(long, default_value_t = 4.0)]
        eta: f64,
    },
    /// Simulate episodes under the model's behaviour policy.
    Sim {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        episodes: usize,
    },
    /// Spectral initialization.
    Cluster {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 10)]
        restarts: usize,
        /// Writes the aggregated low-rank matrix as a binary dump.
        #[arg(long)]
        dump_matrix: Option<PathBuf>,
    },
    /// Likelihood improvement from an initial assignment.
    Refine {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        init: PathBuf,
        #[arg(long)]
        iterations: Option<usize>,
    },
    /// Estimate (p, q, f); uses --assignment as the decoder when given, else runs the full pipeline.
    Estimate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        assignment: Option<PathBuf>,
    },
    /// Rate function of every context, or the profile of one context.
    Rate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
        /// 1-based context whose profile is written instead of the table.
        #[arg(long)]
        context: Option<usize>,
        /// Use the nominal occupancy instead of the alternate model's.
        #[arg(long)]
        nominal: bool,
    },
    /// Plan on a model (or an estimate) and evaluate on the model.
    Plan {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        estimated: Option<PathBuf>,
        #[arg(long)]
        reward: PathBuf,
    },
    Exp1(ExpArgs),
    Exp2(ExpArgs),
    Exp3(ExpArgs),
    RateCheck(ExpArgs),
    ConcCheck(ExpArgs),
    Rewardfree(ExpArgs),
}

enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<LabError> for Failure {
    fn from(e: LabError) -> Self {
        match e {
            LabError::Config(m) => Failure::Usage(m),
            other => Failure::Runtime(other.to_string()),
        }
    }
}
impl From<blockmdp::Error> for Failure {
    fn from(e: blockmdp::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}
impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

fn sink(out: &Option<PathBuf>) -> Result<Box<dyn Write>, Failure> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout())),
    })
}

fn open(p: &Path) -> Result<BufReader<File>, Failure> {
    File::open(p).map(BufReader::new).map_err(|e| Failure::Usage(format!("{}: {e}", p.display())))
}

fn load_model(p: &Path) -> Result<(BlockMdp, BehaviorPolicy), Failure> {
    Ok(files::read_model(open(p)?)?)
}

fn set_jobs(jobs: Option<usize>) -> Result<(), Failure> {
    if let Some(j) = jobs {
        rayon::ThreadPoolBuilder::new().num_threads(j).build_global().map_err(|e| Failure::Usage(e.to_string()))?;
    }
    Ok(())
}

fn experiment_config(kind: ExperimentKind, a: &ExpArgs) -> Result<ExperimentConfig, Failure> {
    let mut c = match &a.config {
        Some(p) => ExperimentConfig::from_file(kind, p)?,
        None => ExperimentConfig::defaults(kind),
    };
    macro_rules! set {
        ($($f:ident <- $v:expr),*) => { $(if let Some(v) = $v.clone() { c.$f = v; })* };
    }
    set!(seed <- a.common.seed, reps <- a.common.reps, n <- a.n, u <- a.u, th <- a.th, eps <- a.eps,
         episodes <- a.episodes, horizon <- a.horizon, restarts <- a.restarts, spikes <- a.spikes);
    if a.iterations.is_some() {
        c.iterations = a.iterations;
    }
    c.validate()?;
    Ok(c)
}

fn run(cli: Cli) -> Result<bool, Failure> {
    match cli.command {
        Command::Gen { common, n, eps, horizon, states, actions, eta } => {
            let seed = common.seed.unwrap_or(0);
            let (m, pi) = match states {
                Some(s) => generate_random_instance(&RandomInstanceConfig::new(s, actions, n, horizon, eta), seed)?,
                None => generate_two_cluster_instance(n, eps, horizon, seed)?,
            };
            files::write_model(sink(&common.out)?, &m, Some(&pi))?;
        }
        Command::Sim { common, model, episodes } => {
            set_jobs(common.jobs)?;
            let (m, pi) = load_model(&model)?;
            let batch = simulate(&m, &pi, episodes, common.seed.unwrap_or(0))?;
            files::write_episodes(sink(&common.out)?, &batch)?;
        }
        Command::Cluster { common, model, data, restarts, dump_matrix } => {
            set_jobs(common.jobs)?;
            let (m, _) = load_model(&model)?;
            let batch = files::read_episodes(open(&data)?, m.n_contexts(), m.n_actions())?;
            let mut cfg = SpectralConfig::new(m.n_states(), common.seed.unwrap_or(0));
            cfg.kmedians.restarts = restarts;
            let out = spectral_clustering(&batch, &cfg)?;
            if let Some(p) = dump_matrix {
                files::write_matrix_dump(BufWriter::new(File::create(p)?), &out.aggregated, 2 * m.n_actions())?;
            }
            eprintln!("trimmed {} contexts, k-medians objective {:.6}", out.gamma, out.objective);
            files::write_assignment(sink(&common.out)?, &out.assignment)?;
        }
        Command::Refine { common, model, data, init, iterations } => {
            set_jobs(common.jobs)?;
            let (m, _) = load_model(&model)?;
            let batch = files::read_episodes(open(&data)?, m.n_contexts(), m.n_actions())?;
            let init = files::read_assignment(open(&init)?, m.n_states())?;
            let counts = blockmdp::counts::build_counts(&batch, m.n_contexts(), m.n_actions())?;
            let iters = iterations.unwrap_or_else(|| blockmdp::refine::default_iterations(m.n_contexts(), m.n_actions()));
            let (refined, trace) = improve(&counts, &init, iters)?;
            for w in &trace.warnings {
                eprintln!("warning: {w}");
            }
            files::write_assignment(sink(&common.out)?, &refined)?;
        }
        Command::Estimate { common, model, data, assignment } => {
            set_jobs(common.jobs)?;
            let (m, _) = load_model(&model)?;
            let batch = files::read_episodes(open(&data)?, m.n_contexts(), m.n_actions())?;
            let est = match assignment {
                Some(p) => {
                    let dec: ClusterAssignment = files::read_assignment(open(&p)?, m.n_states())?;
                    estimate_pq(&batch, &dec)?
                }
                None => full_pipeline(&batch, &PipelineConfig::new(m.n_states(), common.seed.unwrap_or(0)))?.model,
            };
            files::write_estimated(sink(&common.out)?, &est)?;
        }
        Command::Rate { common, model, context, nominal } => {
            set_jobs(common.jobs)?;
            let (m, pi) = load_model(&model)?;
            let mode = if nominal { OccupancyMode::Nominal } else { OccupancyMode::Alternate };
            let ctx = RateContext::new(&m, &pi, mode)?;
            let mut w = sink(&common.out)?;
            match context {
                Some(x) if x == 0 || x > m.n_contexts() => {
                    return Err(Failure::Usage(format!("--context {x} not in 1..={}", m.n_contexts())))
                }
                Some(x) => {
                    let e = ctx.rate(x - 1)?;
                    eprintln!("I = {:.6e} at c* = {:.6}, state {}", e.value, e.scale, e.state + 1);
                    files::write_rate_profile(&mut w, &e.profile)?;
                }
                None => {
                    let r = ctx.rate_all()?;
                    writeln!(w, "context,state,c,I")?;
                    for e in &r.entries {
                        writeln!(w, "{},{},{:.12e},{:.12e}", e.context + 1, e.state + 1, e.scale, e.value)?;
                    }
                    eprintln!("I(Phi) = {:.6e}", r.aggregate);
                }
            }
            w.flush()?;
        }
        Command::Plan { common, model, estimated, reward } => {
            let (m, _) = load_model(&model)?;
            let r = files::read_reward(open(&reward)?)?;
            let star = plan(&m, &r)?;
            let out = match estimated {
                Some(p) => {
                    let view = PlanView::new(&files::read_estimated(open(&p)?)?);
                    for w in &view.warnings {
                        eprintln!("warning: {w}");
                    }
                    let hat = plan(&view, &r)?;
                    let v = evaluate(&m, &hat.policy, &r)?;
                    eprintln!("V* = {:.9}, V^pi = {v:.9}, gap per stage = {:.3e}", star.value, (star.value - v) / r.horizon() as f64);
                    hat
                }
                None => {
                    eprintln!("V* = {:.9}", star.value);
                    star
                }
            };
            files::write_policy(sink(&common.out)?, &out.policy)?;
        }
        Command::Exp1(a) => return run_experiment(ExperimentKind::Exp1, a),
        Command::Exp2(a) => return run_experiment(ExperimentKind::Exp2, a),
        Command::Exp3(a) => return run_experiment(ExperimentKind::Exp3, a),
        Command::Rewardfree(a) => return run_experiment(ExperimentKind::Rewardfree, a),
        Command::RateCheck(a) => {
            let c = experiment_config(ExperimentKind::Rate, &a)?;
            let rep = run_rate_check(&c)?;
            let mut w = sink(&a.common.out)?;
            write!(w, "{rep}")?;
            w.flush()?;
            return Ok(rep.passed());
        }
        Command::ConcCheck(a) => {
            let c = experiment_config(ExperimentKind::Concentration, &a)?;
            set_jobs(a.common.jobs)?;
            let (rep, table) = run_concentration_check(&c)?;
            eprint!("{rep}");
            let mut w = sink(&a.common.out)?;
            w.write_all(table.to_csv().as_bytes())?;
            w.flush()?;
            return Ok(rep.passed());
        }
    }
    Ok(true)
}

fn run_experiment(kind: ExperimentKind, a: ExpArgs) -> Result<bool, Failure> {
    let c = experiment_config(kind, &a)?;
    set_jobs(a.common.jobs)?;
    let start = Instant::now();
    let table = match kind {
        ExperimentKind::Exp1 => run_exp1(&c)?.to_table(),
        ExperimentKind::Exp2 => run_exp2(&c)?.to_table(),
        ExperimentKind::Exp3 => run_exp3(&c)?.to_table(),
        _ => run_rewardfree(&c)?.to_table(),
    };
    let mut w = sink(&a.common.out)?;
    w.write_all(table.to_csv().as_bytes())?;
    w.flush()?;
    eprintln!("{} finished in {:.1} s", kind.name(), start.elapsed().as_secs_f64());
    Ok(true)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}
