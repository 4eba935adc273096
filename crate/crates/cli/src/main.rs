//! `takagi`: command-line runner for evaluation, classification and the
//! Monte Carlo verification suites.
//!
//! Exit codes: 0 pass, 1 a verification check failed, 2 usage or parse
//! error, 3 numeric or precision failure.

mod config;

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;
use takagi::asymptotics::{integral_bracket_normalised, tailsum_bracket_normalised};
use takagi::moments::{l2_ratio_error, tail_stats, var_q2};
use takagi::montecarlo::{
    run_appendix, run_clt, run_geometric, run_identities, run_lil, run_lln, run_moments,
    DyadicGrid, PointSource,
};
use takagi::point_eval::{default_bits, eval_f, eval_partial};
use takagi::{BitPoint, CoefficientSeq, Condition, Error, SampleBatch, VerificationReport};

use config::{overlay, set, Format, RunConfig};

const DEFAULT_SEQ: &str = "powerlaw:alpha=2";

#[derive(Parser, Debug)]
#[command(name = "takagi", version, about = "Takagi-class functions: evaluation and limit-theorem checks")]
struct Cli {
    /// TOML config file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output format (default: csv for eval/moments/sample/asymptotics, json otherwise).
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Write output here instead of stdout.
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,
    /// Leave the timestamp out of reports.
    #[arg(long, global = true)]
    no_timestamp: bool,
    /// Print the effective config as TOML and exit.
    #[arg(long, global = true)]
    print_config: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default, Clone)]
struct Common {
    /// Sequence, e.g. `powerlaw:alpha=2`, `stretchexp:K=1,beta=0.5`, `geometric:r=0.5`.
    #[arg(long)]
    seq: Option<String>,
    /// Tail indices, comma separated.
    #[arg(long = "N", value_delimiter = ',')]
    n: Option<Vec<u64>>,
    /// Monte Carlo sample size
    #[arg(long)]
    samples: Option<usize>,
    /// Seed; falls back to the config file, then $TAKAGI_SEED, then 7.
    #[arg(long)]
    seed: Option<u64>,
    /// Binary digits per point.
    #[arg(long)]
    bits: Option<usize>,
    /// Absolute error target for f
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Tabulate f (or a partial sum) on the grid k/M with certified errors.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Grid size M; rows are x = k/M for k < M
        #[arg(long)]
        grid: Option<u64>,
    },
    /// Exact tail means, variances and Var(Q²) bounds.
    Moments {
        #[command(flatten)]
        common: Common,
    },
    /// Tail-condition verdicts and the differentiability class.
    Classify {
        #[command(flatten)]
        common: Common,
    },
    /// Integral and tail-sum brackets for a stretched exponential.
    Asymptotics {
        #[command(flatten)]
        common: Common,
        #[arg(long = "K")]
        k: Option<f64>,
        #[arg(long)]
        beta: Option<f64>,
        /// Lower integration limits, comma separated.
        #[arg(long, value_delimiter = ',')]
        a: Option<Vec<f64>>,
    },
    /// Run a verification suite and write its report.
    Verify {
        #[command(subcommand)]
        suite: Suite,
    },
    /// Emit the seeded sample points.
    Sample {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Subcommand, Debug)]
enum Suite {
    /// Law of large numbers for the ratio, with the closed-form mean square.
    Lln {
        #[command(flatten)]
        common: Common,
        /// Use the dyadic grid k/2^m as the point source.
        #[arg(long)]
        dyadic_grid: Option<u32>,
        #[arg(long)]
        rel_tol: Option<f64>,
    },
    /// Normal limit of the normalised tail, KS against N(0, 1).
    Clt {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        ks_max: Option<f64>,
    },
    /// Iterated-logarithm envelope along sample paths.
    Lil {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        n_min: Option<u64>,
        #[arg(long)]
        n_max: Option<u64>,
        #[arg(long)]
        eps: Option<f64>,
    },
    /// Ratio limit law for geometric coefficients and its Cesàro average.
    Geometric {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        r: Option<f64>,
        #[arg(long)]
        cesaro_r: Option<f64>,
        #[arg(long)]
        cesaro_n: Option<u64>,
        #[arg(long)]
        cesaro_paths: Option<usize>,
    },
    /// Integral and tail-sum brackets for stretched exponentials.
    Appendix {
        #[command(flatten)]
        common: Common,
        #[arg(long = "K")]
        k: Option<f64>,
        #[arg(long)]
        beta: Option<f64>,
    },
    /// Exact identities: the two tent-iterate routes, self-similarity, closed forms.
    Identities {
        #[command(flatten)]
        common: Common,
    },
    /// Monte Carlo moments and squared covariances of the centred iterates.
    Moments {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        cov_samples: Option<usize>,
    },
}

enum Failure {
    Usage(String),
    Numeric(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_numeric() {
            Failure::Numeric(e.to_string())
        } else {
            Failure::Usage(e.to_string())
        }
    }
}

impl From<String> for Failure {
    fn from(e: String) -> Self {
        Failure::Usage(e)
    }
}

type Outcome = Result<bool, Failure>;

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
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Numeric(msg)) => {
            eprintln!("numeric failure: {msg}");
            ExitCode::from(3)
        }
    }
}

fn apply_common(cfg: &mut RunConfig, c: &Common) {
    overlay(&mut cfg.seq, c.seq.clone());
    overlay(&mut cfg.n, c.n.clone());
    overlay(&mut cfg.samples, c.samples);
    overlay(&mut cfg.seed, c.seed);
    overlay(&mut cfg.bits, c.bits);
    overlay(&mut cfg.tol, c.tol);
}

fn run(cli: Cli) -> Outcome {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    overlay(&mut cfg.format, cli.format);
    let out = Output {
        path: cli.output.clone(),
        timestamp: !cli.no_timestamp,
        print_config: cli.print_config,
    };
    match cli.command {
        Command::Eval { common, grid } => {
            apply_common(&mut cfg, &common);
            overlay(&mut cfg.grid, grid);
            cmd_eval(cfg, &out)
        }
        Command::Moments { common } => {
            apply_common(&mut cfg, &common);
            cmd_moments(cfg, &out)
        }
        Command::Classify { common } => {
            apply_common(&mut cfg, &common);
            cmd_classify(cfg, &out)
        }
        Command::Asymptotics { common, k, beta, a } => {
            apply_common(&mut cfg, &common);
            if k.is_some() || beta.is_some() {
                let (k0, b0) = cfg.appendix.params.first().copied().unwrap_or((1.0, 0.5));
                cfg.appendix.params = vec![(k.unwrap_or(k0), beta.unwrap_or(b0))];
            }
            set(&mut cfg.appendix.a_grid, a);
            cmd_asymptotics(cfg, &out)
        }
        Command::Sample { common } => {
            apply_common(&mut cfg, &common);
            cmd_sample(cfg, &out)
        }
        Command::Verify { suite } => cmd_verify(cfg, suite, &out),
    }
}

struct Output {
    path: Option<PathBuf>,
    timestamp: bool,
    print_config: bool,
}

impl Output {
    fn write(&self, text: &str) -> Result<(), Failure> {
        match &self.path {
            Some(p) => std::fs::write(p, text)
                .map_err(|e| Failure::Usage(format!("cannot write `{}`: {e}", p.display()))),
            None => {
                let mut stdout = std::io::stdout().lock();
                stdout
                    .write_all(text.as_bytes())
                    .and_then(|_| stdout.flush())
                    .map_err(|e| Failure::Usage(e.to_string()))
            }
        }
    }

    /// Prints the config instead of running when `--print-config` is set.
    fn config_only(&self, cfg: &RunConfig) -> Result<bool, Failure> {
        if self.print_config {
            self.write(&cfg.to_toml()?)?;
        }
        Ok(self.print_config)
    }
}

fn parse_seq(cfg: &mut RunConfig) -> Result<CoefficientSeq, Failure> {
    let text = cfg.seq.get_or_insert_with(|| DEFAULT_SEQ.to_string());
    text.parse::<CoefficientSeq>()
        .map_err(|e| Failure::Usage(format!("bad --seq `{text}`: {e}")))
}

fn sci(v: f64) -> String {
    format!("{v:.16e}")
}

fn cmd_eval(mut cfg: RunConfig, out: &Output) -> Outcome {
    let seq = parse_seq(&mut cfg)?;
    let grid = *cfg.grid.get_or_insert(1024);
    let tol = *cfg.tol.get_or_insert(1e-10);
    if grid == 0 {
        return Err(Failure::Usage("--grid must be >= 1".into()));
    }
    let partial = cfg.n.as_ref().and_then(|v| v.first().copied());
    let bits = *cfg.bits.get_or_insert(default_bits(partial.unwrap_or(64) as usize));
    let format = *cfg.format.get_or_insert(Format::Csv);
    if out.config_only(&cfg)? {
        return Ok(true);
    }
    let mut rows = Vec::with_capacity(grid as usize);
    for k in 0..grid {
        let x = if grid.is_power_of_two() {
            BitPoint::dyadic(k, grid.trailing_zeros())?
        } else {
            BitPoint::from_rational(&k.into(), &grid.into(), bits)?
        };
        let v = match partial {
            Some(n) => eval_partial(&seq, &x, n)?,
            None => eval_f(&seq, &x, tol)?,
        };
        rows.push((k as f64 / grid as f64, v.value, v.abs_error));
    }
    let text = match format {
        Format::Csv => {
            let mut s = String::from("x,f,abs_error\n");
            for (x, f, e) in &rows {
                let _ = writeln!(s, "{},{},{}", sci(*x), sci(*f), sci(*e));
            }
            s
        }
        Format::Json => {
            let rows: Vec<_> = rows
                .iter()
                .map(|(x, f, e)| json!({"x": x, "f": f, "abs_error": e}))
                .collect();
            pretty(&json!({"seq": seq.to_string(), "config": cfg, "rows": rows}))?
        }
    };
    out.write(&text)?;
    Ok(true)
}

fn pretty(v: &serde_json::Value) -> Result<String, Failure> {
    let mut s = serde_json::to_string_pretty(v).map_err(|e| Failure::Usage(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

fn cmd_moments(mut cfg: RunConfig, out: &Output) -> Outcome {
    let seq = parse_seq(&mut cfg)?;
    let ns = cfg.n.get_or_insert_with(|| vec![1, 10, 100, 1000]).clone();
    let format = *cfg.format.get_or_insert(Format::Csv);
    if out.config_only(&cfg)? {
        return Ok(true);
    }
    let mut rows = Vec::new();
    for &n in &ns {
        let t = tail_stats(&seq, n)?;
        let l2 = l2_ratio_error(&seq, n).ok();
        let v = var_q2(&seq, n)?;
        rows.push((t, l2, v));
    }
    let text = match format {
        Format::Csv => {
            let mut s = String::from(
                "N,m_N,m_error,s2_N,s2_error,l2_ratio_error,var_q2,var_q2_error,off_diagonal_bound,corrected_bound\n",
            );
            for (t, l2, v) in &rows {
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},{},{},{},{},{}",
                    t.n,
                    sci(t.m_n),
                    sci(t.m_error),
                    sci(t.s2_n),
                    sci(t.s2_error),
                    l2.map(sci).unwrap_or_default(),
                    sci(v.exact),
                    sci(v.exact_error),
                    sci(v.off_diagonal_bound),
                    sci(v.corrected_bound)
                );
            }
            s
        }
        Format::Json => {
            let rows: Vec<_> = rows
                .iter()
                .map(|(t, l2, v)| json!({"tail": t, "l2_ratio_error": l2, "var_q2": v}))
                .collect();
            pretty(&json!({"seq": seq.to_string(), "config": cfg, "rows": rows}))?
        }
    };
    out.write(&text)?;
    Ok(true)
}

fn cmd_classify(mut cfg: RunConfig, out: &Output) -> Outcome {
    let seq = parse_seq(&mut cfg)?;
    if out.config_only(&cfg)? {
        return Ok(true);
    }
    let conditions: Vec<_> = Condition::ALL
        .iter()
        .map(|&c| seq.check_condition(c))
        .collect();
    let value = json!({
        "seq": seq.to_string(),
        "hypotheses": seq.standing_hypotheses(),
        "conditions": conditions,
        "differentiability": seq.kono_classify(),
    });
    out.write(&pretty(&value)?)?;
    Ok(true)
}

fn cmd_asymptotics(mut cfg: RunConfig, out: &Output) -> Outcome {
    let ns = cfg.n.get_or_insert_with(|| cfg.appendix.n_grid.clone()).clone();
    if out.config_only(&cfg)? {
        return Ok(true);
    }
    let mut s = String::from("kind,K,beta,at,lower,target,upper,holds\n");
    for &(k, beta) in &cfg.appendix.params {
        for &a in &cfg.appendix.a_grid {
            let b = integral_bracket_normalised(k, beta, a)?;
            let _ = writeln!(
                s,
                "integral,{},{},{},{},{},{},{}",
                sci(k),
                sci(beta),
                sci(a),
                sci(b.lower),
                sci(b.target),
                sci(b.upper),
                b.holds()
            );
        }
        for &n in &ns {
            let b = tailsum_bracket_normalised(k, beta, n)?;
            let _ = writeln!(
                s,
                "tailsum,{},{},{},{},{},{},{}",
                sci(k),
                sci(beta),
                n,
                sci(b.lower),
                sci(b.target),
                sci(b.upper),
                b.holds()
            );
        }
    }
    out.write(&s)?;
    Ok(true)
}

fn cmd_sample(mut cfg: RunConfig, out: &Output) -> Outcome {
    let seed = cfg.resolve_seed()?;
    let count = *cfg.samples.get_or_insert(10);
    let bits = *cfg.bits.get_or_insert(64);
    let format = *cfg.format.get_or_insert(Format::Csv);
    if out.config_only(&cfg)? {
        return Ok(true);
    }
    let batch = SampleBatch::new(seed, count, bits)?;
    let text = match format {
        Format::Csv => {
            let mut s = String::from("i,x,digits\n");
            for (i, p) in batch.points().enumerate() {
                let _ = writeln!(s, "{i},{},{p}", sci(p.to_f64()));
            }
            s
        }
        Format::Json => {
            let rows: Vec<_> = batch
                .points()
                .enumerate()
                .map(|(i, p)| json!({"i": i, "x": p.to_f64(), "digits": p.to_string()}))
                .collect();
            pretty(&json!({"batch": batch, "points": rows}))?
        }
    };
    out.write(&text)?;
    Ok(true)
}

fn cmd_verify(mut cfg: RunConfig, suite: Suite, out: &Output) -> Outcome {
    let common = match &suite {
        Suite::Lln { common, .. }
        | Suite::Clt { common, .. }
        | Suite::Lil { common, .. }
        | Suite::Geometric { common, .. }
        | Suite::Appendix { common, .. }
        | Suite::Identities { common }
        | Suite::Moments { common, .. } => common.clone(),
    };
    apply_common(&mut cfg, &common);
    let seed = cfg.resolve_seed()?;
    let format = *cfg.format.get_or_insert(Format::Json);

    let report = match suite {
        Suite::Lln { dyadic_grid, rel_tol, .. } => {
            let seq = parse_seq(&mut cfg)?;
            let ns = cfg.n.get_or_insert_with(|| vec![10, 100, 1000]).clone();
            let samples = *cfg.samples.get_or_insert(100_000);
            set(&mut cfg.lln.rel_tol, rel_tol);
            if dyadic_grid.is_some() {
                cfg.lln.dyadic_control = true;
            }
            if out.config_only(&cfg)? {
                return Ok(true);
            }
            let source: Box<dyn PointSource> = match dyadic_grid {
                Some(m) => Box::new(DyadicGrid { m }),
                None => Box::new(SampleBatch::new(seed, samples, 64)?),
            };
            let mut r = run_lln(&seq, &ns, source.as_ref(), &cfg.lln)?;
            r.seed = Some(seed);
            r
        }
        Suite::Clt { ks_max, .. } => {
            let seq = parse_seq(&mut cfg)?;
            let n = single_n(&mut cfg, 1000)?;
            let samples = *cfg.samples.get_or_insert(100_000);
            set(&mut cfg.clt.ks_max, ks_max);
            if out.config_only(&cfg)? {
                return Ok(true);
            }
            let batch = SampleBatch::new(seed, samples, 64)?;
            let mut r = run_clt(&seq, n, &batch, &cfg.clt)?;
            r.seed = Some(seed);
            r
        }
        Suite::Lil { n_min, n_max, eps, .. } => {
            let seq = parse_seq(&mut cfg)?;
            let paths = *cfg.samples.get_or_insert(100);
            set(&mut cfg.lil.n_min, n_min);
            set(&mut cfg.lil.n_max, n_max);
            set(&mut cfg.lil.eps, eps);
            if out.config_only(&cfg)? {
                return Ok(true);
            }
            let batch = SampleBatch::new(seed, paths, 64)?;
            let mut r = run_lil(&seq, &batch, &cfg.lil)?;
            r.seed = Some(seed);
            r
        }
        Suite::Geometric { r, cesaro_r, cesaro_n, cesaro_paths, .. } => {
            overlay(&mut cfg.r, r);
            let r = *cfg.r.get_or_insert(0.25);
            cfg.seq = Some(format!("geometric:r={r}"));
            let default_n = cfg.geometric.n;
            let n = single_n(&mut cfg, default_n)?;
            cfg.geometric.n = n;
            let samples = *cfg.samples.get_or_insert(100_000);
            overlay(&mut cfg.geometric.cesaro_r, cesaro_r);
            set(&mut cfg.geometric.cesaro_n, cesaro_n);
            set(&mut cfg.geometric.cesaro_paths, cesaro_paths);
            if out.config_only(&cfg)? {
                return Ok(true);
            }
            let batch = SampleBatch::new(seed, samples, 64)?;
            run_geometric(r, &batch, &cfg.geometric)?
        }
        Suite::Appendix { k, beta, .. } => {
            if k.is_some() || beta.is_some() {
                let (k0, b0) = cfg.appendix.params.first().copied().unwrap_or((1.0, 0.5));
                cfg.appendix.params = vec![(k.unwrap_or(k0), beta.unwrap_or(b0))];
            }
            if let Some(ns) = &cfg.n {
                cfg.appendix.n_grid = ns.clone();
            }
            if out.config_only(&cfg)? {
                return Ok(true);
            }
            run_appendix(&cfg.appendix)?
        }
        Suite::Identities { .. } => {
            set(&mut cfg.identities.points, cfg.samples);
            set(&mut cfg.identities.bits, cfg.bits);
            set(&mut cfg.identities.tol, cfg.tol);
            if out.config_only(&cfg)? {
                return Ok(true);
            }
            run_identities(seed, &cfg.identities)?
        }
        Suite::Moments { cov_samples, .. } => {
            set(&mut cfg.moments.samples, cfg.samples);
            set(&mut cfg.moments.cov_samples, cov_samples);
            if out.config_only(&cfg)? {
                return Ok(true);
            }
            run_moments(seed, &cfg.moments)?
        }
    };
    finish_report(report, &cfg, format, out)
}

fn single_n(cfg: &mut RunConfig, default: u64) -> Result<u64, Failure> {
    let ns = cfg.n.get_or_insert_with(|| vec![default]);
    match ns.as_slice() {
        [n] => Ok(*n),
        _ => Err(Failure::Usage("this suite takes a single --N".into())),
    }
}

fn finish_report(
    mut report: VerificationReport,
    cfg: &RunConfig,
    format: Format,
    out: &Output,
) -> Outcome {
    report.param("config", cfg);
    if out.timestamp {
        let secs = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        report.timestamp = Some(format!("unix:{secs}"));
    }
    let text = match format {
        Format::Json => report.to_json()?,
        Format::Csv => report.to_csv(),
    };
    out.write(&text)?;
    for c in report.failed_checks() {
        eprintln!("FAILED {}: value {:e}", c.name, c.value);
    }
    Ok(report.verdict)
}
