use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::info;
use serde_json::json;

use rule_core::config::{Ablation, ExperimentConfig};
use rule_core::dataset::{generate_synthetic, inject_noise, load_pair, save_pair, MMKGPair};
use rule_core::encoders::EncoderBank;
use rule_core::eval::Direction;
use rule_core::experiment::{
    evaluate, report_markdown, score_pair, stage_seed, summarize, EvalReport, STAGE_INIT, STAGE_NOISE, STAGE_REASONER,
};
use rule_core::train::{train, AnchorReliability};
use rule_core::ttr::{read_jsonl, rerank_pair, write_jsonl};
use rule_core::{Result, RuleError};

/// Reliability-aware multi-modal entity alignment experiments.
///
/// Any config key can be overridden with `--section.key value`.
#[derive(Debug, Parser)]
#[command(name = "rule", version)]
struct Cli {
    /// TOML experiment config.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Ablation preset: full, wo_drl, wo_drf, only_unc, only_cons, baseline.
    #[arg(long, global = true)]
    ablation: Option<Ablation>,

    /// Rank in both directions.
    #[arg(long, global = true)]
    bidirectional: bool,

    /// Run seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic pair of graphs.
    Generate {
        #[arg(long)]
        out: PathBuf,
    },
    /// Inject correspondence noise into a saved pair.
    Inject {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train encoders; writes checkpoint.bin, train.jsonl and reliability.jsonl.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a trained run; writes report.json and report.md.
    Evaluate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        run: PathBuf,
    },
    /// Rerank test queries with a reasoner; writes ttr_report.json and call logs.
    Ttr {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        run: PathBuf,
    },
    /// Aggregate report.json files of several runs.
    Report {
        #[arg(long, num_args = 1.., required = true)]
        runs: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

const CONFIG_FILE: &str = "config.toml";

/// Splits `--a.b value` and `--a.b=value` overrides from the arguments clap sees.
fn split_overrides(args: Vec<String>) -> std::result::Result<(Vec<String>, Vec<(String, String)>), RuleError> {
    let mut rest = Vec::with_capacity(args.len());
    let mut overrides = Vec::new();
    let mut it = args.into_iter();
    while let Some(arg) = it.next() {
        match arg.strip_prefix("--") {
            Some(key) if key.contains('.') && !key.starts_with('.') => {
                if let Some((k, v)) = key.split_once('=') {
                    overrides.push((k.to_string(), v.to_string()));
                } else {
                    let value = it.next().ok_or_else(|| RuleError::Config(format!("--{key} needs a value")))?;
                    overrides.push((key.to_string(), value));
                }
            }
            _ => rest.push(arg),
        }
    }
    Ok((rest, overrides))
}

fn resolve_config(cli: &Cli, fallback: Option<&Path>, overrides: &[(String, String)]) -> Result<ExperimentConfig> {
    let mut cfg = match (&cli.config, fallback) {
        (Some(path), _) => ExperimentConfig::load(path)?,
        (None, Some(path)) if path.exists() => ExperimentConfig::load(path)?,
        _ => ExperimentConfig::default(),
    };
    for (k, v) in overrides {
        cfg.apply_override(k, v)?;
    }
    if let Some(a) = cli.ablation {
        cfg = cfg.with_ablation(a);
    }
    if cli.bidirectional {
        cfg.eval.direction = Direction::Bidirectional;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| RuleError::Io {
        path: dir.to_path_buf(),
        source: e,
    })
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| RuleError::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("report serializes");
    text.push('\n');
    write(path, &text)
}

fn read_json<T: for<'de> serde::Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| RuleError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    serde_json::from_str(&text).map_err(|e| RuleError::Data {
        file: path.display().to_string(),
        line: Some(e.line()),
        message: e.to_string(),
    })
}

fn load_run(data: &Path, run: &Path) -> Result<(MMKGPair, EncoderBank)> {
    let pair = load_pair(data)?;
    let bank = EncoderBank::load(run.join("checkpoint.bin"))?;
    if bank.num_modalities() != pair.modalities().len() {
        return Err(RuleError::DimMismatch(format!(
            "checkpoint has {} encoders, data has {} modalities",
            bank.num_modalities(),
            pair.modalities().len()
        )));
    }
    Ok((pair, bank))
}

fn execute(cli: &Cli, overrides: &[(String, String)]) -> Result<()> {
    match &cli.command {
        Command::Generate { out } => {
            let cfg = resolve_config(cli, None, overrides)?;
            let mut gen = cfg.data.clone();
            gen.seed = cfg.seed;
            let pair = generate_synthetic(&gen)?;
            save_pair(&pair, out)?;
            write(&out.join(CONFIG_FILE), &cfg.to_toml_string())?;
            info!("wrote {} entities per graph to {}", gen.n, out.display());
        }
        Command::Inject { data, out } => {
            let cfg = resolve_config(cli, Some(&data.join(CONFIG_FILE)), overrides)?;
            let pair = load_pair(data)?;
            let noisy = inject_noise(&pair, &cfg.noise, stage_seed(cfg.seed, STAGE_NOISE))?;
            save_pair(&noisy, out)?;
            write(&out.join(CONFIG_FILE), &cfg.to_toml_string())?;
        }
        Command::Train { data, out } => {
            let cfg = resolve_config(cli, Some(&data.join(CONFIG_FILE)), overrides)?;
            let pair = load_pair(data)?;
            let trained = train(&pair, &cfg, stage_seed(cfg.seed, STAGE_INIT))?;
            create_dir(out)?;
            trained.bank.save(out.join("checkpoint.bin"))?;
            write_jsonl(&out.join("train.jsonl"), &trained.epochs)?;
            write_jsonl(&out.join("reliability.jsonl"), &trained.reliability)?;
            write(&out.join(CONFIG_FILE), &cfg.to_toml_string())?;
        }
        Command::Evaluate { data, run } => {
            let cfg = resolve_config(cli, Some(&run.join(CONFIG_FILE)), overrides)?;
            let (pair, bank) = load_run(data, run)?;
            let reliability: Vec<AnchorReliability> = read_jsonl(&run.join("reliability.jsonl"))?;
            let (report, _) = evaluate(&pair, &bank, &reliability, &cfg, cfg.seed)?;
            write_json(&run.join("report.json"), &report)?;
            let md = report_markdown(&report);
            write(&run.join("report.md"), &md)?;
            print!("{md}");
        }
        Command::Ttr { data, run } => {
            let cfg = resolve_config(cli, Some(&run.join(CONFIG_FILE)), overrides)?;
            let (pair, bank) = load_run(data, run)?;
            let scoring = score_pair(&pair, &bank, &cfg)?;
            let outcome = rerank_pair(&pair, &scoring, &cfg, stage_seed(cfg.seed, STAGE_REASONER), None)?;
            outcome.write_logs(run)?;
            write_json(&run.join("ttr_report.json"), &outcome.summary)?;
            let s = &outcome.summary;
            println!(
                "hits@1 {:.4} -> {:.4} ({} calls, {} malformed, {} fallbacks)",
                s.before.hits1,
                s.after.hits1,
                s.calls,
                s.malformed,
                s.fallbacks.len()
            );
        }
        Command::Report { runs, out } => {
            let reports = runs
                .iter()
                .map(|r| read_json::<EvalReport>(&r.join("report.json")))
                .collect::<Result<Vec<_>>>()?;
            let summary = summarize(&reports);
            let mut md = String::from("| seed | hits@1 | hits@10 | MRR | AUC |\n|---|---|---|---|---|\n");
            for r in &reports {
                md.push_str(&format!(
                    "| {} | {:.4} | {:.4} | {:.4} | {} |\n",
                    r.seed,
                    r.ranking.hits1,
                    r.ranking.hits10,
                    r.ranking.mrr,
                    r.noise_detection.auc.map_or("n/a".into(), |a| format!("{a:.4}"))
                ));
            }
            if let Some(h) = summary.hits1 {
                md.push_str(&format!("\nmean hits@1 {:.4} (std {:.4}, {} runs)\n", h.mean, h.std, h.n));
            }
            if let Some(dir) = out {
                create_dir(dir)?;
                write_json(&dir.join("summary.json"), &summary)?;
                write(&dir.join("summary.md"), &md)?;
            }
            print!("{md}");
        }
    }
    Ok(())
}

fn exit_code(err: &RuleError) -> u8 {
    match err {
        RuleError::Config(_) | RuleError::InvalidArgument(_) => 2,
        RuleError::Reasoner(_) => 4,
        _ => 3,
    }
}

fn fail(kind: &str, message: String, code: u8) -> ExitCode {
    eprintln!("{}", json!({ "error": kind, "message": message }));
    ExitCode::from(code)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let (args, overrides) = match split_overrides(std::env::args().collect()) {
        Ok(v) => v,
        Err(e) => return fail(e.kind(), e.to_string(), exit_code(&e)),
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail("usage", e.to_string().trim().to_string(), 2),
    };
    match execute(&cli, &overrides) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(e.kind(), e.to_string(), exit_code(&e)),
    }
}
