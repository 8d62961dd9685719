use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use modbench::accounting::delta_table;
use modbench::report::{
    aggregate, cross_scale_table, loss_vs_climb_table, per_task_delta_matrix, rank_table,
    read_scores_csv, MethodScore, ResultsFile, ScaleScores, Table,
};
use modbench::stats::{
    benjamini_hochberg, bonferroni, holm, p_two_sided, NoiseFloor, SeedSet, ALPHA, FAMILY_SIZE,
};
use modbench::train::{pack_corpus, synthetic_corpus, train_run, write_metrics, PackingOptions, SEPARATOR};
use modbench::{Error, MethodSpec, MethodTag, ModelConfig, RunConfig};

#[derive(Parser)]
#[command(name = "modbench", version, about = "Transformer modification laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one method on the synthetic corpus and write its run record.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "runs")]
        out: PathBuf,
        #[arg(long, default_value = "toy")]
        scale: String,
    },
    /// Rank methods against the baseline noise floor.
    Stats {
        #[command(flatten)]
        input: ScoreInput,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Parameter and FLOPs deltas of every method.
    Flops {
        /// Run config whose [model] section is used; overrides --scale.
        #[arg(long)]
        config: Option<PathBuf>,
        /// 1.2B, 3B or toy.
        #[arg(long, default_value = "1.2B")]
        scale: String,
        #[arg(long, default_value_t = 1 << 20)]
        batch_tokens: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Cross-scale, per-task heatmap and loss-vs-CLIMB tables.
    Report {
        #[command(subcommand)]
        kind: ReportKind,
    },
    /// Pack the synthetic corpus and write its packing report.
    Pack {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "runs")]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum ReportKind {
    /// Compare two scales: deltas, rank movement and sign preservation.
    Cross {
        /// Scores CSV or results directory of the smaller scale.
        #[arg(long)]
        small: PathBuf,
        #[arg(long)]
        large: PathBuf,
        #[arg(long, default_value = "1.2B")]
        small_label: String,
        #[arg(long, default_value = "3B")]
        large_label: String,
        #[arg(long, default_value = "baseline")]
        reference: MethodTag,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Methods × tasks accuracy deltas against a reference method.
    Heatmap {
        #[arg(long, required = true, num_args = 1..)]
        results: Vec<PathBuf>,
        #[arg(long)]
        scale: String,
        #[arg(long, default_value = "baseline")]
        reference: MethodTag,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Validation loss next to CLIMB-avg with the relative loss gap.
    Loss {
        #[command(flatten)]
        input: ScoreInput,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct ScoreInput {
    /// Results files or directories of results files.
    #[arg(long, num_args = 1.., conflicts_with = "scores")]
    results: Vec<PathBuf>,
    /// CSV with method,climb_avg[,val_loss] rows.
    #[arg(long)]
    scores: Option<PathBuf>,
    /// Scale tag selecting results files.
    #[arg(long, default_value = "toy")]
    scale: String,
    /// Noise floor as MEAN,STD; defaults to the baseline seeds in --results.
    #[arg(long, value_parser = parse_floor)]
    floor: Option<NoiseFloor>,
}

fn parse_floor(s: &str) -> Result<NoiseFloor, String> {
    let (m, sd) = s.split_once(',').ok_or("expected MEAN,STD")?;
    let mean = m.trim().parse::<f64>().map_err(|e| e.to_string())?;
    let std = sd.trim().parse::<f64>().map_err(|e| e.to_string())?;
    NoiseFloor::new(mean, std).map_err(|e| e.to_string())
}

fn load_results(paths: &[PathBuf]) -> anyhow::Result<Vec<ResultsFile>> {
    let mut files = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut entries: Vec<PathBuf> = std::fs::read_dir(p)
                .with_context(|| format!("reading {}", p.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|e| e.extension().is_some_and(|x| x == "json"))
                .collect();
            entries.sort();
            files.extend(entries);
        } else {
            files.push(p.clone());
        }
    }
    Ok(files
        .iter()
        .map(ResultsFile::load)
        .collect::<Result<Vec<_>, _>>()?)
}

impl ScoreInput {
    fn scores(&self) -> anyhow::Result<(Vec<MethodScore>, Option<NoiseFloor>)> {
        if let Some(csv) = &self.scores {
            return Ok((read_scores_csv(csv)?, self.floor));
        }
        if self.results.is_empty() {
            bail!(Error::Contract("pass --results or --scores".into()));
        }
        let results = load_results(&self.results)?;
        let scores = aggregate(&results, &self.scale)?;
        let floor = match self.floor {
            Some(f) => Some(f),
            None => baseline_floor(&results, &self.scale)?,
        };
        Ok((scores, floor))
    }

    fn floor(&self, found: Option<NoiseFloor>) -> anyhow::Result<NoiseFloor> {
        found.ok_or_else(|| {
            Error::Contract("no noise floor: pass --floor or at least two baseline seeds".into())
                .into()
        })
    }
}

fn baseline_floor(results: &[ResultsFile], scale: &str) -> anyhow::Result<Option<NoiseFloor>> {
    let seeds: Vec<(u64, f64)> = results
        .iter()
        .filter(|r| r.scale == scale && r.method == MethodTag::Baseline)
        .map(|r| Ok((r.seed, r.climb_avg()?)))
        .collect::<modbench::Result<_>>()?;
    if seeds.len() < 2 {
        return Ok(None);
    }
    let set = SeedSet::new(MethodTag::Baseline, seeds)?;
    Ok(Some(NoiseFloor::from_seeds(&set)?))
}

fn emit(table: &Table, out: Option<&Path>, name: &str) -> anyhow::Result<()> {
    print!("{}", table.to_text());
    if let Some(dir) = out {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let path = dir.join(format!("{name}.csv"));
        std::fs::write(&path, table.to_csv()).with_context(|| format!("writing {}", path.display()))?;
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

fn model_for_scale(scale: &str) -> anyhow::Result<ModelConfig> {
    Ok(match scale {
        "1.2B" | "1.2b" => ModelConfig::scale_1_2b(),
        "3B" | "3b" => ModelConfig::scale_3b(),
        "toy" => ModelConfig::toy(),
        other => bail!(Error::Contract(format!("unknown scale `{other}`"))),
    })
}

/// Returns true when the run diverged.
fn train(config: &Path, seed: u64, out: &Path, scale: &str) -> anyhow::Result<bool> {
    let cfg = RunConfig::load(config)?;
    let record = train_run::<f64>(&cfg.model, &cfg.spec(), &cfg.recipe, seed, &cfg.train_options())?;
    let dir = out.join(format!("{}_{scale}_{seed}", cfg.method.tag));
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    write_metrics(dir.join("metrics.jsonl"), &record)?;
    write_json(&dir.join("record.json"), &record)?;
    write_json(&dir.join("packing.json"), &record.packing)?;
    std::fs::write(dir.join("config.toml"), cfg.to_toml())?;
    match record.nan_step {
        Some(step) => println!(
            "{} seed {seed}: diverged at step {step} ({})",
            record.method,
            record.signature.map_or("none", |s| s.as_str())
        ),
        None => println!(
            "{} seed {seed}: loss {:.4} -> {:.4}, val {:.4}",
            record.method,
            record.initial_loss,
            record.logs.last().map_or(f64::NAN, |l| l.loss),
            record.final_val_loss.unwrap_or(f64::NAN)
        ),
    }
    println!("wrote {}", dir.display());
    Ok(record.diverged)
}

fn stats(input: &ScoreInput, out: Option<&Path>) -> anyhow::Result<()> {
    let (scores, found) = input.scores()?;
    let floor = input.floor(found)?;
    let table = rank_table(&scores, &floor)?;
    emit(&table.to_table(), out, "rank")?;
    let others: Vec<_> = table.rows.iter().filter(|r| r.method != MethodTag::Baseline).collect();
    let p: Vec<f64> = others.iter().map(|r| p_two_sided(r.z)).collect();
    let names = |rejected: &[bool]| -> String {
        let v: Vec<&str> = others
            .iter()
            .zip(rejected)
            .filter(|x| *x.1)
            .map(|x| x.0.method.as_str())
            .collect();
        if v.is_empty() { "none".into() } else { v.join(", ") }
    };
    println!();
    println!("floor: mean {:.4}, std {:.5}", floor.mean, floor.std);
    println!("bonferroni (m={FAMILY_SIZE}): {}", names(&bonferroni(&p, FAMILY_SIZE, ALPHA).rejected));
    println!("holm: {}", names(&holm(&p, ALPHA).rejected));
    println!("benjamini-hochberg (q={ALPHA}): {}", names(&benjamini_hochberg(&p, ALPHA).rejected));
    if let Some(dir) = out {
        std::fs::write(dir.join("rank_raw.csv"), table.to_raw_table().to_csv())?;
    }
    Ok(())
}

fn flops(config: Option<&Path>, scale: &str, batch_tokens: u64, out: Option<&Path>) -> anyhow::Result<()> {
    let model = match config {
        Some(p) => RunConfig::load(p)?.model,
        None => model_for_scale(scale)?,
    };
    model.validate()?;
    let specs: Vec<MethodSpec> = MethodSpec::all()
        .into_iter()
        .filter(|s| s.validate(&model).is_ok())
        .collect();
    let table = delta_table(&specs, &model, batch_tokens);
    print!("{}", table.to_table().to_text());
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("flops.csv"), table.to_raw_table().to_csv())?;
        eprintln!("wrote {}", dir.join("flops.csv").display());
    }
    Ok(())
}

fn scores_at(path: &Path, scale: &str) -> anyhow::Result<Vec<MethodScore>> {
    if path.extension().is_some_and(|x| x == "csv") {
        Ok(read_scores_csv(path)?)
    } else {
        Ok(aggregate(&load_results(&[path.to_path_buf()])?, scale)?)
    }
}

/// Seed-averaged accuracy per task of every method at `scale`.
fn per_task_means(results: &[ResultsFile], scale: &str) -> BTreeMap<MethodTag, BTreeMap<String, f64>> {
    let mut sums: BTreeMap<MethodTag, (usize, BTreeMap<String, f64>)> = BTreeMap::new();
    for r in results.iter().filter(|r| r.scale == scale) {
        let entry = sums.entry(r.method).or_default();
        entry.0 += 1;
        for (task, acc) in &r.per_task {
            *entry.1.entry(task.clone()).or_default() += acc;
        }
    }
    sums.into_iter()
        .map(|(m, (n, tasks))| (m, tasks.into_iter().map(|(t, v)| (t, v / n as f64)).collect()))
        .collect()
}

fn report(kind: &ReportKind) -> anyhow::Result<()> {
    match kind {
        ReportKind::Cross {
            small,
            large,
            small_label,
            large_label,
            reference,
            out,
        } => {
            let (s, l) = (scores_at(small, small_label)?, scores_at(large, large_label)?);
            let table = cross_scale_table(
                ScaleScores { label: small_label, scores: &s, reference: *reference },
                ScaleScores { label: large_label, scores: &l, reference: *reference },
            )?;
            emit(&table.to_table(), out.as_deref(), "cross_scale")?;
            println!();
            println!("sign preservation: {}", table.signs);
        }
        ReportKind::Heatmap {
            results,
            scale,
            reference,
            out,
        } => {
            let means = per_task_means(&load_results(results)?, scale);
            let reference_row = means.get(reference).ok_or_else(|| {
                Error::Contract(format!("reference {reference} has no results at scale {scale}"))
            })?;
            let rows: Vec<(String, BTreeMap<String, f64>)> =
                means.iter().map(|(m, t)| (m.to_string(), t.clone())).collect();
            let matrix = per_task_delta_matrix(&rows, reference_row)?;
            emit(&matrix.to_table(), out.as_deref(), "per_task_delta")?;
        }
        ReportKind::Loss { input, out } => {
            let (scores, found) = input.scores()?;
            let floor = input.floor(found)?;
            let table = loss_vs_climb_table(&scores, &floor)?;
            emit(&table.to_table(), out.as_deref(), "loss_vs_climb")?;
        }
    }
    Ok(())
}

fn pack(config: &Path, out: &Path) -> anyhow::Result<()> {
    let cfg = RunConfig::load(config)?;
    let opts = PackingOptions {
        seq_len: cfg.model.context + 1,
        separator: SEPARATOR,
        shuffle_seed: cfg.data.shuffle_seed,
        sequences_per_shard: 256,
    };
    let packed = pack_corpus(&synthetic_corpus(&cfg.data.corpus), &opts, "bytes")?;
    std::fs::create_dir_all(out)?;
    let path = out.join("packing.json");
    write_json(&path, &packed.report)?;
    let r = &packed.report;
    println!(
        "{} sequences of {} tokens in {} shards, {} discarded ({:.3e})",
        r.n_sequences, r.seq_len, r.n_shards, r.n_discarded, r.discard_fraction
    );
    println!("wrote {}", path.display());
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Train {
            config,
            seed,
            out,
            scale,
        } => {
            let diverged = train(&config, seed, &out, &scale)?;
            return Ok(ExitCode::from(if diverged { 2 } else { 0 }));
        }
        Command::Stats { input, out } => stats(&input, out.as_deref())?,
        Command::Flops {
            config,
            scale,
            batch_tokens,
            out,
        } => flops(config.as_deref(), &scale, batch_tokens, out.as_deref())?,
        Command::Report { kind } => report(&kind)?,
        Command::Pack { config, out } => pack(&config, &out)?,
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
