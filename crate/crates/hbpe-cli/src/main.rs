//! `hbpe` — joint head/body pose label completion experiments.
//!
//! Subcommands: `generate` synthetic datasets, `solve` one person/mask pair,
//! `sweep` the full fraction x repeat x method grid, `ablate` the method
//! comparison at one fraction, and `report` plot-ready aggregates from a
//! sweep JSON.
//!
//! Exit codes: 0 success, 1 usage, 2 data error, 3 numerical failure,
//! 4 partial failure (some sweep units failed, results were still written).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use hbpe_core::completion::{CheckpointOptions, SolveOptions};
use hbpe_core::*;

#[derive(Parser)]
#[command(
    name = "hbpe",
    version,
    about = "Transductive head/body pose estimation from sparse labels"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset in the directory-per-person format.
    Generate(GenerateArgs),
    /// Run one joint completion for a single person and mask pair.
    Solve(SolveArgs),
    /// Run the full sweep and emit sweep.csv / sweep.json.
    Sweep(SweepArgs),
    /// Method-comparison sweep at a single annotation fraction.
    Ablate(SweepArgs),
    /// Re-aggregate a sweep.json into a plot-ready CSV.
    Report(ReportArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Output directory (defaults to $HBPE_OUT_DIR or the current directory).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Number of persons to generate.
    #[arg(long, default_value_t = 1)]
    persons: usize,
    #[arg(long, default_value_t = 600)]
    samples: usize,
    #[arg(long, default_value_t = 8)]
    classes: usize,
    #[arg(long, default_value_t = 20)]
    dh: usize,
    #[arg(long, default_value_t = 20)]
    db: usize,
    #[arg(long, default_value_t = 7)]
    turn_events: usize,
    #[arg(long, default_value_t = 70.0)]
    gp_length_scale: f64,
    #[arg(long, default_value_t = 8)]
    feature_rank: usize,
    #[arg(long, default_value_t = 0.3)]
    feature_noise: f64,
    #[arg(long, default_value_t = 10.0)]
    head_offset_deg: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct SolveArgs {
    /// Dataset directory (directory-per-person format).
    #[arg(long)]
    data: PathBuf,
    /// Person id (directory name); defaults to the first person.
    #[arg(long)]
    person: Option<String>,
    #[arg(long, default_value_t = 0.05)]
    fraction: f64,
    #[arg(long, default_value_t = 8)]
    classes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.75)]
    diversity_threshold: f64,
    /// Nuclear-norm weight (both streams).
    #[arg(long, default_value_t = 2.0)]
    nu: f64,
    /// Anchor weight (both streams).
    #[arg(long, default_value_t = 4.0)]
    lambda: f64,
    /// Head/body coupling weight.
    #[arg(long, default_value_t = 4.0)]
    mu: f64,
    /// Augmented-Lagrangian penalty (both streams).
    #[arg(long, default_value_t = 2.0)]
    phi: f64,
    #[arg(long, default_value_t = 30.0)]
    kernel_length_scale: f64,
    #[arg(long, default_value_t = 1.0)]
    kernel_signal: f64,
    #[arg(long, default_value_t = 0.1)]
    kernel_noise: f64,
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
    #[arg(long, default_value_t = 500)]
    max_iter: usize,
    /// Write solver state here during the run (resumable).
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Checkpoint every N iterations (with --checkpoint).
    #[arg(long, default_value_t = 50)]
    checkpoint_every: usize,
    /// Resume from a checkpoint written by a previous run with the same
    /// data and flags.
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Optional JSON report output path.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// Dataset directory; omit to run on a freshly generated synthetic set.
    #[arg(long)]
    data: Option<PathBuf>,
    /// JSON experiment config; flags override file values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (defaults to $HBPE_OUT_DIR or the current directory).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated annotation fractions.
    #[arg(long, value_delimiter = ',')]
    fractions: Option<Vec<f64>>,
    #[arg(long)]
    repeats: Option<usize>,
    /// Comma-separated methods: gpr_mc, laplacian_mc, gpr_only, linear_only.
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<String>>,
    #[arg(long)]
    classes: Option<usize>,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    /// Keep this share of feature variance via PCA before solving.
    #[arg(long)]
    pca: Option<f64>,
    /// Select hyperparameters once per (person, fraction) instead of per repeat.
    #[arg(long)]
    cv_once: bool,
    /// Cap on concurrent work units.
    #[arg(long)]
    jobs: Option<usize>,
    /// Persons to synthesize when --data is not given.
    #[arg(long, default_value_t = 2)]
    synthetic_persons: usize,
}

#[derive(Args)]
struct ReportArgs {
    /// Path to a sweep.json.
    #[arg(long)]
    input: PathBuf,
    /// Output CSV path (defaults to report.csv next to the input).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };

    let outcome = match cli.command {
        Command::Generate(args) => cmd_generate(args),
        Command::Solve(args) => cmd_solve(args),
        Command::Sweep(args) => cmd_sweep(args, false),
        Command::Ablate(args) => cmd_sweep(args, true),
        Command::Report(args) => cmd_report(args),
    };

    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

fn exit_code_for(e: &Error) -> u8 {
    match e {
        Error::Numerical(_) | Error::Divergence { .. } | Error::IllConditionedKernel { .. } => 3,
        _ => 2,
    }
}

fn default_out_dir(flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| std::env::var_os("HBPE_OUT_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."))
}

fn cmd_generate(args: GenerateArgs) -> Result<ExitCode> {
    let out = default_out_dir(args.out);
    let mut persons = Vec::with_capacity(args.persons);
    println!("person        samples  head_entropy  body_entropy");
    for i in 0..args.persons {
        let spec = SyntheticSpec {
            samples: args.samples,
            classes: args.classes,
            d_h: args.dh,
            d_b: args.db,
            n_turn_events: args.turn_events,
            gp_length_scale: args.gp_length_scale,
            feature_rank: args.feature_rank,
            feature_noise: args.feature_noise,
            head_body_offset_deg: args.head_offset_deg,
            seed: derive_seed(args.seed, &[i as u64]),
        };
        let mut person = generate_synthetic(&spec)?;
        person.person_id = format!("person_{i:02}");
        let head = label_entropy(&person.head_truth, args.classes)?.value;
        let body = label_entropy(&person.body_truth, args.classes)?.value;
        println!(
            "{:<12}  {:>7}  {:>12.4}  {:>12.4}",
            person.person_id,
            person.samples(),
            head,
            body
        );
        persons.push(person);
    }
    save_dataset(&out, &persons)?;
    println!("wrote {} person(s) to {}", persons.len(), out.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_solve(args: SolveArgs) -> Result<ExitCode> {
    let persons = load_dataset(&args.data, args.classes)?;
    let person = match &args.person {
        Some(id) => persons
            .iter()
            .find(|p| &p.person_id == id)
            .ok_or_else(|| Error::InvalidInput(format!("person '{id}' not found")))?,
        None => &persons[0],
    };
    let t = person.samples();

    let mask_h = generate_mask(
        t,
        args.fraction,
        &person.head_truth,
        args.diversity_threshold,
        derive_seed(args.seed, &[0]),
        100,
    )?;
    let mask_b = generate_mask(
        t,
        args.fraction,
        &person.body_truth,
        args.diversity_threshold,
        derive_seed(args.seed, &[1]),
        100,
    )?;

    let weights = SolverWeights::symmetric(args.nu, args.lambda, args.mu, args.phi);
    let kernel = RbfKernelParams::new(
        args.kernel_length_scale,
        args.kernel_signal,
        args.kernel_noise,
    )?;

    let labels_h = LabelMatrix::from_masked_classes(&person.head_truth, args.classes, &mask_h)?;
    let labels_b = LabelMatrix::from_masked_classes(&person.body_truth, args.classes, &mask_b)?;
    let anchor_h = interpolate_labels(&labels_h, Method::GprMc, &kernel, 10.0)?;
    let anchor_b = interpolate_labels(&labels_b, Method::GprMc, &kernel, 10.0)?;
    let j_anchor_h = HeterogeneousMatrix::from_blocks(&anchor_h.values, &person.head_features)?;
    let j_anchor_b = HeterogeneousMatrix::from_blocks(&anchor_b.values, &person.body_features)?;

    let opts = SolveOptions {
        tol: args.tol,
        max_iter: args.max_iter,
        checkpoint: args.checkpoint.as_ref().map(|path| CheckpointOptions {
            path: path.clone(),
            every: args.checkpoint_every,
        }),
    };

    let (j_h, j_b, report) = match &args.resume {
        Some(path) => {
            let state = load_checkpoint(path)?;
            println!(
                "resumed from {} at iteration {}",
                path.display(),
                state.iteration()
            );
            solve_from(state, j_anchor_h.data(), j_anchor_b.data(), &weights, &opts)?
        }
        None => {
            let j0_h =
                build_heterogeneous(&labels_h, &person.head_features, person.soft_head.as_ref())?;
            let j0_b =
                build_heterogeneous(&labels_b, &person.body_features, person.soft_body.as_ref())?;
            solve(
                &j0_h,
                &j0_b,
                j_anchor_h.data(),
                j_anchor_b.data(),
                &weights,
                &opts,
            )?
        }
    };

    let head_pred = decode_labels(&j_h.label_block());
    let body_pred = decode_labels(&j_b.label_block());
    let head_acc = accuracy(&head_pred, &person.head_truth, &mask_h.complement(t))?;
    let body_acc = accuracy(&body_pred, &person.body_truth, &mask_b.complement(t))?;

    println!(
        "person {}: head accuracy {:.4}, body accuracy {:.4}",
        person.person_id, head_acc, body_acc
    );
    println!(
        "converged {} after {} iterations (primal residuals {:.2e}/{:.2e}, bias drift {:.2e}/{:.2e})",
        report.converged,
        report.iterations,
        report.final_primal_residuals.0,
        report.final_primal_residuals.1,
        report.bias_row_drift.0,
        report.bias_row_drift.1
    );

    if let Some(out) = &args.out {
        let summary = serde_json::json!({
            "person_id": person.person_id,
            "config": {
                "fraction": args.fraction,
                "classes": args.classes,
                "seed": args.seed,
                "diversity_threshold": args.diversity_threshold,
                "weights": weights,
                "kernel": kernel,
                "tol": args.tol,
                "max_iter": args.max_iter,
            },
            "head_accuracy": head_acc,
            "body_accuracy": body_acc,
            "report": report,
        });
        std::fs::write(
            out,
            serde_json::to_string_pretty(&summary).expect("serializable"),
        )?;
    }

    if !report.converged {
        eprintln!("warning: solver hit the iteration cap before reaching tolerance");
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_sweep(args: SweepArgs, ablate: bool) -> Result<ExitCode> {
    let mut config = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            serde_json::from_str::<ExperimentConfig>(&text)
                .map_err(|e| Error::InvalidInput(format!("config {}: {e}", path.display())))?
        }
        None => ExperimentConfig::default(),
    };
    if ablate && args.fractions.is_none() && args.config.is_none() {
        config.fractions = vec![0.05];
        config.methods = Method::ALL.to_vec();
    }
    if let Some(fractions) = args.fractions {
        config.fractions = fractions;
    }
    if let Some(repeats) = args.repeats {
        config.repeats = repeats;
    }
    if let Some(methods) = args.methods {
        config.methods = methods
            .iter()
            .map(|m| m.parse())
            .collect::<Result<Vec<Method>>>()?;
    }
    if let Some(classes) = args.classes {
        config.classes = classes;
    }
    if let Some(folds) = args.folds {
        config.folds = folds;
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(tol) = args.tol {
        config.tol = tol;
    }
    if let Some(max_iter) = args.max_iter {
        config.max_iter = max_iter;
    }
    if let Some(pca) = args.pca {
        config.pca_variance = Some(pca);
    }
    if args.cv_once {
        config.cv_per_repeat = false;
    }

    let datasets = match &args.data {
        Some(dir) => load_dataset(dir, config.classes)?,
        None => {
            println!(
                "no --data given; generating {} synthetic person(s)",
                args.synthetic_persons
            );
            (0..args.synthetic_persons)
                .map(|i| {
                    let spec = SyntheticSpec {
                        classes: config.classes,
                        seed: derive_seed(config.seed, &[0xD5, i as u64]),
                        ..SyntheticSpec::default()
                    };
                    let mut person = generate_synthetic(&spec)?;
                    person.person_id = format!("person_{i:02}");
                    Ok(person)
                })
                .collect::<Result<Vec<_>>>()?
        }
    };

    let result = match args.jobs {
        Some(jobs) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(jobs.max(1))
                .build()
                .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?;
            pool.install(|| run_sweep(&datasets, &config))?
        }
        None => run_sweep(&datasets, &config)?,
    };

    let out = default_out_dir(args.out);
    std::fs::create_dir_all(&out)?;
    let csv_path = out.join("sweep.csv");
    let json_path = out.join("sweep.json");
    result.write_csv(&csv_path)?;
    result.write_json(&json_path)?;

    print_person_tables(&result);
    println!("wrote {} and {}", csv_path.display(), json_path.display());

    if result.failures > 0 {
        eprintln!(
            "{} unit(s) failed; see the error fields in sweep.json",
            result.failures
        );
        return Ok(ExitCode::from(4));
    }
    Ok(ExitCode::SUCCESS)
}

/// Per-person results table: one row per person, `HPE mean (std)` and
/// `BPE mean (std)` per method, label-entropy columns last.
fn print_person_tables(result: &SweepResult) {
    const CELL: usize = 34;
    for &fraction in &result.config.fractions {
        println!("\n== annotation fraction {fraction} ==");
        let methods: Vec<Method> = result.config.methods.clone();

        let mut title = format!("{:<14}", "");
        let mut header = format!("{:<14}", "person");
        for m in &methods {
            title.push_str(&format!("{:<CELL$}", m.name()));
            header.push_str(&format!("{:<CELL$}", "HPE mean (std)   BPE mean (std)"));
        }
        header.push_str("entropy H/B");
        println!("{title}");
        println!("{header}");

        let persons: Vec<&str> = {
            let mut seen = Vec::new();
            for row in &result.rows {
                if !seen.contains(&row.person_id.as_str()) {
                    seen.push(row.person_id.as_str());
                }
            }
            seen
        };
        for person in persons {
            let mut line = format!("{person:<14}");
            let mut entropy = (0.0, 0.0);
            for m in &methods {
                let cell = result
                    .rows
                    .iter()
                    .find(|r| r.person_id == person && r.fraction == fraction && r.method == *m);
                match cell {
                    Some(r) => {
                        entropy = (r.head_entropy, r.body_entropy);
                        line.push_str(&format!(
                            "{:<CELL$}",
                            format!(
                                "{:.2} ({:.1e})   {:.2} ({:.1e})",
                                r.head_acc_mean, r.head_acc_std, r.body_acc_mean, r.body_acc_std
                            )
                        ));
                    }
                    None => line.push_str(&format!("{:<CELL$}", "-")),
                }
            }
            line.push_str(&format!("{:.2}/{:.2}", entropy.0, entropy.1));
            println!("{line}");
        }
    }
}

fn cmd_report(args: ReportArgs) -> Result<ExitCode> {
    let result = SweepResult::read_json(&args.input)?;
    let rows = result.aggregate_report();
    let out = args
        .out
        .unwrap_or_else(|| args.input.with_file_name("report.csv"));
    hbpe_core::experiment::write_report_csv(&rows, &out)?;
    println!("fraction  method        stream  macro_mean  macro_std  micro_mean");
    for r in &rows {
        println!(
            "{:<8}  {:<12}  {:<6}  {:>10.4}  {:>9.4}  {:>10.4}",
            r.fraction, r.method, r.stream, r.macro_mean, r.macro_std, r.micro_mean
        );
    }
    println!("wrote {}", out.display());
    Ok(ExitCode::SUCCESS)
}
