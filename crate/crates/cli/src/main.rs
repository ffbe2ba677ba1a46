//! Command-line front end: generate, lock, run, verify, bench, attack, sweep.
//!
//! Every command is deterministic for fixed flags and `--seed`; reports carry
//! the seed they were produced with. Exit code 0 on success, 1 on validation
//! or runtime failure, 2 on usage errors.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use coreguard::attacks::{
    self, collect_traces, differencing_attack, permutation_guess_attack,
    simulate_authorization_unit, sweep_auth_position, Cut,
};
use coreguard::io::{
    load_checkpoint, load_locked_pair, save_keys, save_locked_model, save_model, Checkpoint,
};
use coreguard::linalg::keyspace_bits;
use coreguard::locking::{lock_model, locked_fraction, split_seed, verify_lock, LockKeys};
use coreguard::runtime::{
    bench_report, provision_enclave, run_authorized, run_unauthorized, Scheme,
};
use coreguard::transformer::{random_model_scaled, random_token_sequences, ModelConfig};
use coreguard::Matrix;

#[derive(Parser)]
#[command(name = "coreguard", version, about = "Permutation-locked transformer toolchain")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Master seed for all randomness in this invocation.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Cap on internal parallelism. Execution is currently single-threaded;
    /// values >= 1 are accepted for interface stability.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a random model checkpoint from a config file.
    Gen {
        #[command(flatten)]
        common: Common,
        /// JSON model config.
        #[arg(long)]
        config: PathBuf,
        /// Output checkpoint path.
        #[arg(long)]
        out: PathBuf,
        /// Linear-weight amplitude; defaults to 1/sqrt(d_model).
        #[arg(long)]
        scale: Option<f32>,
    },
    /// Lock a checkpoint at an authorization position.
    Lock {
        #[command(flatten)]
        common: Common,
        /// Input (plain) checkpoint.
        #[arg(long = "in")]
        input: PathBuf,
        /// First permuted layer index.
        #[arg(long)]
        auth_pos: usize,
        /// Output locked checkpoint.
        #[arg(long)]
        out: PathBuf,
        /// Output sealed key file; must not share a directory with --out.
        #[arg(long)]
        key_out: PathBuf,
    },
    /// Run inference on a locked checkpoint: authorized when a key is given,
    /// plain unauthorized forward otherwise.
    Run {
        #[command(flatten)]
        common: Common,
        /// Locked checkpoint.
        #[arg(long)]
        model: PathBuf,
        /// Sealed key file.
        #[arg(long)]
        key: Option<PathBuf>,
        /// Whitespace-separated token ids, exactly seq_len of them.
        #[arg(long)]
        input: PathBuf,
    },
    /// Check every locked-layer identity against the original.
    Verify {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        original: PathBuf,
        #[arg(long)]
        locked: PathBuf,
        #[arg(long)]
        key: PathBuf,
    },
    /// Closed-form overhead comparison across schemes, with a live
    /// downscaled ledger cross-check.
    Bench {
        #[command(flatten)]
        common: Common,
        /// JSON list of {name, config}, or `reference` for the built-in
        /// published shapes.
        #[arg(long)]
        configs: String,
        /// Comma-separated scheme names.
        #[arg(long)]
        schemes: String,
        /// CSV output path.
        #[arg(long)]
        out: PathBuf,
        /// Optional structured (JSON) report path.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Adversary harness front ends.
    Attack {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_parser = ["differencing", "simulate", "guess"])]
        kind: String,
        /// JSON model config for the freshly generated victim.
        #[arg(long)]
        config: PathBuf,
        /// Boundary trace count (differencing, simulate).
        #[arg(long, default_value_t = 100)]
        traces: usize,
        /// Evaluation sequence count (simulate, guess).
        #[arg(long, default_value_t = 100)]
        eval: usize,
        /// Candidate key budget (guess).
        #[arg(long, default_value_t = 1000)]
        budget: usize,
        /// Ablation: disable the one-time mask (differencing).
        #[arg(long)]
        no_otp: bool,
        /// Optional JSON report path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Security proxies per authorization position.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated position list, e.g. 1,2,3.
        #[arg(long)]
        positions: String,
        /// CSV output path.
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn check_threads(common: &Common) -> Result<()> {
    if let Some(t) = common.threads {
        if t == 0 {
            bail!("--threads must be >= 1");
        }
    }
    Ok(())
}

/// Output paths get their parent directories created on demand.
fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)
                .with_context(|| format!("creating {}", parent.display()))?;
        }
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen {
            common,
            config,
            out,
            scale,
        } => {
            check_threads(&common)?;
            let cfg = read_config(&config)?;
            let scale = scale.unwrap_or(1.0 / (cfg.d_model as f32).sqrt());
            let model = random_model_scaled(&cfg, common.seed, scale)?;
            ensure_parent(&out)?;
            save_model(&out, &model)?;
            println!(
                "wrote {} (seed {}, {} layers, d={}, d_ffn={}, vocab={})",
                out.display(),
                common.seed,
                cfg.num_layers,
                cfg.d_model,
                cfg.d_ffn,
                cfg.vocab_size
            );
            Ok(())
        }
        Command::Lock {
            common,
            input,
            auth_pos,
            out,
            key_out,
        } => {
            check_threads(&common)?;
            enforce_key_separation(&out, &key_out)?;
            let model = match load_checkpoint(&input)? {
                Checkpoint::Plain(m) => m,
                Checkpoint::Locked(_) => bail!("{} is already locked", input.display()),
            };
            let cfg = model.config;
            let keys = LockKeys::generate(split_seed(common.seed, 0), cfg.d_model, cfg.d_ffn)?;
            let pad_seed = split_seed(common.seed, 1);
            let locked = lock_model(&model, &keys, auth_pos)?;
            ensure_parent(&out)?;
            ensure_parent(&key_out)?;
            save_locked_model(&out, &locked)?;
            save_keys(&key_out, &keys, pad_seed)?;
            println!(
                "locked {} layers of {} (auth position {})",
                cfg.num_layers - auth_pos,
                cfg.num_layers,
                auth_pos
            );
            println!(
                "locked parameter fraction: {:.4}",
                locked_fraction(&cfg, auth_pos)
            );
            println!("keyspace: {:.1} bits", keyspace_bits(cfg.d_model));
            println!("checkpoint: {}", out.display());
            println!("sealed key: {}", key_out.display());
            Ok(())
        }
        Command::Run {
            common,
            model,
            key,
            input,
        } => {
            check_threads(&common)?;
            let tokens = read_tokens(&input)?;
            match key {
                Some(key_path) => {
                    let (locked, keys, pad_seed) = load_locked_pair(&model, &key_path)?;
                    let (mut enclave, w_n) = provision_enclave(&locked, keys, pad_seed)?;
                    enclave.precompute_pads(1, &w_n)?;
                    let (logits, ledger) = run_authorized(&locked, &mut enclave, &tokens)?;
                    println!("mode: authorized");
                    println!("logits digest: {}", digest(&logits));
                    println!("ledger rounds: {}", ledger.rounds);
                    println!("ledger bytes: {}", ledger.bytes);
                }
                None => {
                    let locked = match load_checkpoint(&model)? {
                        Checkpoint::Locked(m) => m,
                        Checkpoint::Plain(_) => {
                            bail!("{} holds a plain model; `run` expects a locked checkpoint", model.display())
                        }
                    };
                    let logits = run_unauthorized(&locked, &tokens)?;
                    println!("mode: unauthorized");
                    println!("warning: no key supplied; output is scrambled by the lock");
                    println!("logits digest: {}", digest(&logits));
                    println!("ledger rounds: 0");
                    println!("ledger bytes: 0");
                }
            }
            Ok(())
        }
        Command::Verify {
            common,
            original,
            locked,
            key,
        } => {
            check_threads(&common)?;
            let original = match load_checkpoint(&original)? {
                Checkpoint::Plain(m) => m,
                Checkpoint::Locked(_) => bail!("--original must be a plain checkpoint"),
            };
            let (locked, keys, _) = load_locked_pair(&locked, &key)?;
            let report = verify_lock(&original, &locked, &keys, split_seed(common.seed, 3))?;
            for line in &report.lines {
                println!(
                    "layer {:>3}  line {:<4} max relative error {:.3e}",
                    line.layer, line.line, line.max_rel_err
                );
            }
            report.ensure()?;
            println!("verification passed (tolerance {:.0e})", report.tolerance);
            Ok(())
        }
        Command::Bench {
            common,
            configs,
            schemes,
            out,
            json,
        } => {
            check_threads(&common)?;
            let configs = read_bench_configs(&configs)?;
            let schemes = parse_schemes(&schemes)?;
            let report = bench_report(&configs, &schemes, common.seed)?;
            ensure_parent(&out)?;
            fs::write(&out, report.to_csv())?;
            if let Some(json_path) = json {
                ensure_parent(&json_path)?;
                fs::write(&json_path, serde_json::to_string_pretty(&report)?)?;
            }
            print!("{}", report.to_table());
            for check in &report.live_checks {
                if !check.consistent() {
                    bail!("live ledger check diverged from the closed form");
                }
            }
            println!("csv: {}", out.display());
            Ok(())
        }
        Command::Attack {
            common,
            kind,
            config,
            traces,
            eval,
            budget,
            no_otp,
            out,
        } => {
            check_threads(&common)?;
            let cfg = read_config(&config)?;
            let report = run_attack(&kind, &cfg, common.seed, traces, eval, budget, no_otp)?;
            println!("attack: {kind}");
            if let Some(acc) = report.report.key_accuracy {
                println!("key accuracy: {acc:.4} (chance {:.4})", report.report.chance);
            }
            if let Some(agree) = report.report.downstream_agreement {
                println!("downstream agreement: {agree:.4}");
            }
            if let Some(residual) = report.report.fit_residual {
                println!("fit residual: {residual:.4}");
            }
            if let Some(path) = out {
                ensure_parent(&path)?;
                fs::write(&path, serde_json::to_string_pretty(&report)?)?;
                println!("report: {}", path.display());
            }
            Ok(())
        }
        Command::Sweep {
            common,
            config,
            positions,
            out,
        } => {
            check_threads(&common)?;
            let cfg = read_config(&config)?;
            let positions: Vec<usize> = positions
                .split(',')
                .map(|p| p.trim().parse::<usize>().context("bad position list"))
                .collect::<Result<_>>()?;
            let model = coreguard::transformer::random_model(&cfg, split_seed(common.seed, 0))?;
            let keys = LockKeys::generate(split_seed(common.seed, 1), cfg.d_model, cfg.d_ffn)?;
            let report =
                sweep_auth_position(&model, &keys, &positions, 16, 50, split_seed(common.seed, 2))?;
            ensure_parent(&out)?;
            fs::write(&out, report.to_csv())?;
            for row in &report.rows {
                println!(
                    "position {:>2}: locked fraction {:.3}, simulation agreement {:.3}, unauthorized agreement {:.3}",
                    row.position, row.locked_fraction, row.simulation_agreement, row.unauthorized_agreement
                );
            }
            println!("csv: {}", out.display());
            Ok(())
        }
    }
}

#[derive(Serialize)]
struct AttackEnvelope {
    seed: u64,
    kind: String,
    report: attacks::AttackReport,
}

fn run_attack(
    kind: &str,
    cfg: &ModelConfig,
    seed: u64,
    traces: usize,
    eval: usize,
    budget: usize,
    no_otp: bool,
) -> Result<AttackEnvelope> {
    let keys = LockKeys::generate(split_seed(seed, 1), cfg.d_model, cfg.d_ffn)?;
    let report = match kind {
        "differencing" => {
            // masking hides the permutation relative to its own amplitude;
            // the victim is drawn in the低 regime the mask is sized for
            let model = attacks::low_signal_model(cfg, split_seed(seed, 0))?;
            let locked = lock_model(&model, &keys, cfg.auth_position)?;
            let (enclave, w_n) = provision_enclave(&locked, keys.clone(), split_seed(seed, 2))?;
            let mut enclave = if no_otp {
                enclave.with_otp_disabled()
            } else {
                enclave
            };
            enclave.precompute_pads(traces, &w_n)?;
            let seqs =
                random_token_sequences(split_seed(seed, 3), traces, cfg.seq_len, cfg.vocab_size);
            let trace_set = collect_traces(&locked, &mut enclave, &seqs, Cut::EncryptBoundary)?;
            differencing_attack(&trace_set, !no_otp, &keys.pi_enc)?
        }
        "simulate" => {
            let model = coreguard::transformer::random_model(cfg, split_seed(seed, 0))?;
            let locked = lock_model(&model, &keys, cfg.auth_position)?;
            let (mut enclave, w_n) = provision_enclave(&locked, keys, split_seed(seed, 2))?;
            enclave.precompute_pads(traces, &w_n)?;
            let seqs =
                random_token_sequences(split_seed(seed, 3), traces, cfg.seq_len, cfg.vocab_size);
            let trace_set = collect_traces(&locked, &mut enclave, &seqs, Cut::AuthorizationUnit)?;
            let eval_seqs =
                random_token_sequences(split_seed(seed, 4), eval, cfg.seq_len, cfg.vocab_size);
            simulate_authorization_unit(&trace_set, &locked, &model, &eval_seqs)?
        }
        "guess" => {
            let model = coreguard::transformer::random_model(cfg, split_seed(seed, 0))?;
            let locked = lock_model(&model, &keys, cfg.auth_position)?;
            let eval_seqs =
                random_token_sequences(split_seed(seed, 4), eval, cfg.seq_len, cfg.vocab_size);
            permutation_guess_attack(&locked, &model, budget, &eval_seqs, split_seed(seed, 5), &keys)?
        }
        other => bail!("unknown attack kind `{other}`"),
    };
    Ok(AttackEnvelope {
        seed,
        kind: kind.to_string(),
        report,
    })
}

fn read_config(path: &Path) -> Result<ModelConfig> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    let cfg: ModelConfig = serde_json::from_str(&text).context("parsing model config")?;
    cfg.validate()?;
    Ok(cfg)
}

fn read_tokens(path: &Path) -> Result<Vec<usize>> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading token file {}", path.display()))?;
    text.split_whitespace()
        .map(|t| t.parse::<usize>().with_context(|| format!("bad token `{t}`")))
        .collect()
}

fn parse_schemes(list: &str) -> Result<Vec<Scheme>> {
    list.split(',')
        .map(|s| Ok(s.trim().parse::<Scheme>()?))
        .collect()
}

#[derive(serde::Deserialize)]
struct NamedConfig {
    name: String,
    config: ModelConfig,
}

/// The four published model shapes the overhead table is compared against.
fn reference_configs() -> Vec<(String, ModelConfig)> {
    let shape = |name: &str, layers: usize, d: usize, h: usize, f: usize, vocab: usize| {
        (
            name.to_string(),
            ModelConfig {
                num_layers: layers,
                d_model: d,
                num_heads: h,
                d_ffn: f,
                seq_len: 128,
                vocab_size: vocab,
                causal: true,
                auth_position: layers / 2,
            },
        )
    };
    vec![
        shape("qwen2-0.5b", 24, 896, 14, 4864, 151_936),
        shape("gamma2-2b", 26, 2304, 8, 9216, 256_128),
        shape("chatglm3-6b", 28, 4096, 32, 13696, 65_024),
        shape("llama3-8b", 32, 4096, 32, 14336, 128_256),
    ]
}

fn read_bench_configs(arg: &str) -> Result<Vec<(String, ModelConfig)>> {
    if arg == "reference" {
        return Ok(reference_configs());
    }
    let text = fs::read_to_string(arg).with_context(|| format!("reading configs {arg}"))?;
    let named: Vec<NamedConfig> = serde_json::from_str(&text).context("parsing configs")?;
    named
        .into_iter()
        .map(|n| {
            n.config.validate()?;
            Ok((n.name, n.config))
        })
        .collect()
}

/// Sealed keys never sit next to the checkpoint they unlock.
fn enforce_key_separation(ckpt: &Path, key: &Path) -> Result<()> {
    if ckpt == key {
        bail!("--out and --key-out must differ");
    }
    let dir_of = |p: &Path| {
        let parent = p.parent().unwrap_or_else(|| Path::new("."));
        if parent.as_os_str().is_empty() {
            PathBuf::from(".")
        } else {
            parent.to_path_buf()
        }
    };
    let (a, b) = (dir_of(ckpt), dir_of(key));
    let canon = |p: &PathBuf| p.canonicalize().unwrap_or_else(|_| p.clone());
    if canon(&a) == canon(&b) {
        bail!(
            "sealed key must not be written into the checkpoint directory ({})",
            a.display()
        );
    }
    Ok(())
}

/// FNV-1a over the logits bit pattern; stable output fingerprint.
fn digest(m: &Matrix) -> String {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    let mut feed = |bytes: &[u8]| {
        for &b in bytes {
            hash ^= b as u64;
            hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
        }
    };
    feed(&(m.rows() as u64).to_le_bytes());
    feed(&(m.cols() as u64).to_le_bytes());
    for v in m.data() {
        feed(&v.to_bits().to_le_bytes());
    }
    format!("{hash:016x}")
}
