//! Command-line definitions and dispatch.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;
use trine_qkd::net::{feed_source, serve_alice, serve_bob, PeerOutcome, SessionConfig};
use trine_qkd::security::{finite_sweep, log_grid, threshold_qber};
use trine_qkd::sim::ttag_file::{read_timetags, write_timetags, DEFAULT_RESOLUTION_FS};
use trine_qkd::sim::{match_coincidences, sample_coincidences, sample_timetags, tally};
use trine_qkd::source::effective_distribution;

use crate::output::{sig4, write_csv, write_sidecar, Metadata};
use crate::{analyze_counts, read_counts_csv, render_report, simulate, CliError, Result, RunConfig};

#[derive(Parser)]
#[command(name = "trine-qkd", version, about = "Three-state QKD simulator and key-rate analysis")]
pub struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Flat key = value configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one configuration key (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a run and write the histogram, block series and sweep.
    Simulate {
        #[arg(long)]
        events: Option<u64>,
        #[arg(long)]
        duration: Option<f64>,
    },
    /// Analyze a measured 3×3 counts table (rows Bob, columns Alice).
    AnalyzeCounts {
        #[arg(long)]
        counts: PathBuf,
        /// Multiplier applied to every cell, e.g. 1e6 for tables in millions.
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
        #[arg(long)]
        rate_hz: Option<f64>,
        #[arg(long)]
        duration_s: Option<f64>,
    },
    /// Generate or read time-tag streams, match coincidences and analyze them.
    Timetags {
        #[arg(long, requires = "bob")]
        alice: Option<PathBuf>,
        #[arg(long, requires = "alice")]
        bob: Option<PathBuf>,
        /// Seconds to simulate when no files are given.
        #[arg(long, default_value_t = 10.0)]
        duration: f64,
        /// Also write the generated streams as .ttag files.
        #[arg(long)]
        write_tags: bool,
    },
    /// Finite-key sweep over a logarithmic N grid.
    FiniteKey {
        #[arg(long, conflicts_with = "counts")]
        i_fraction: Option<f64>,
        #[arg(long)]
        counts: Option<PathBuf>,
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
    },
    /// Largest QBER with a positive asymptotic rate.
    Threshold {
        #[arg(long)]
        f_ec: Option<f64>,
    },
    /// Run Alice or Bob over TCP.
    Serve {
        #[arg(long, value_enum)]
        role: PeerRole,
        #[arg(long, default_value = "127.0.0.1:7401")]
        listen: String,
        /// Alice's address (Bob only).
        #[arg(long, required_if_eq("role", "bob"))]
        alice: Option<String>,
        /// Write the sifted key as a string of 0/1.
        #[arg(long)]
        key_out: Option<PathBuf>,
        #[arg(long, default_value_t = 60)]
        timeout_s: u64,
    },
    /// Act as the source: simulate events and stream them to both peers.
    Connect {
        #[arg(long)]
        alice: String,
        #[arg(long)]
        bob: String,
        #[arg(long, default_value_t = 1_000_000)]
        events: u64,
        #[arg(long, default_value_t = 60)]
        timeout_s: u64,
    },
    /// Print the resolved configuration, optionally saving it.
    Config {
        #[arg(long)]
        write: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum PeerRole {
    Alice,
    Bob,
}

fn load_config(c: &Common) -> Result<RunConfig> {
    let mut cfg = match &c.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    cfg.apply_overrides(&c.overrides)?;
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(o) = &c.out {
        cfg.out_dir = o.clone();
    }
    Ok(cfg)
}

fn finish(command: &str, cfg: &RunConfig, outputs: &[PathBuf], results: serde_json::Value) -> Result<()> {
    let sidecar = cfg.out_dir.join(format!("{command}.json"));
    write_sidecar(&sidecar, &Metadata::new(command, cfg, outputs, results))?;
    for p in outputs.iter().chain([&sidecar]) {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn session_config(cfg: &RunConfig, timeout_s: u64) -> SessionConfig {
    SessionConfig {
        batch_size: cfg.batch_size,
        bit_seed: cfg.seed,
        timeout: Duration::from_secs(timeout_s),
        ..SessionConfig::default()
    }
}

fn print_outcome(o: &PeerOutcome, key_out: Option<&Path>) -> Result<()> {
    println!("events            {}", o.stats.n_total);
    println!("inconclusive I    {}", sig4(o.stats.i_fraction));
    println!("sifted key bits   {}", o.key.len());
    println!("key digest        {:016x}", o.own_digest);
    println!("peer digest       {:016x}{}", o.peer_digest, if o.digests_match() { " (match)" } else { " (differs)" });
    if let Some(path) = key_out {
        let mut w = BufWriter::new(File::create(path)?);
        for &b in &o.key {
            w.write_all(if b { b"1" } else { b"0" })?;
        }
        w.write_all(b"\n")?;
        w.flush()?;
    }
    Ok(())
}

pub fn run(cli: Cli) -> Result<()> {
    let mut cfg = load_config(&cli.common)?;
    match cli.command {
        Command::Simulate { events, duration } => {
            if let Some(d) = duration {
                cfg.duration_s = d;
            }
            if events.is_some() {
                cfg.n_events = events;
            }
            let s = simulate(&cfg)?;
            print!("{}", render_report(&s.report));
            if let Some(q) = s.q_true {
                println!("true QBER         {}", sig4(q * 100.0) + "%");
            }
            println!("blocks            {}", s.blocks.len());
            let out = &cfg.out_dir;
            let files = [out.join("counts.csv"), out.join("blocks.csv"), out.join("sweep.csv")];
            write_csv(&files[0], &s.histogram)?;
            write_csv(&files[1], &s.blocks)?;
            write_csv(&files[2], &s.sweep)?;
            finish("simulate", &cfg, &files, serde_json::to_value(&s)?)
        }
        Command::AnalyzeCounts { counts, scale, rate_hz, duration_s } => {
            let table = read_counts_csv(File::open(&counts)?, scale)?;
            let r = analyze_counts(&table, rate_hz, duration_s, &cfg.security, cfg.target_eps_gen)?;
            print!("{}", render_report(&r));
            if cli.common.out.is_some() {
                finish("analyze-counts", &cfg, &[], serde_json::to_value(&r)?)?;
            }
            Ok(())
        }
        Command::Timetags { alice, bob, duration, write_tags } => {
            cfg.validate()?;
            let (a, b, span) = match (alice, bob) {
                (Some(pa), Some(pb)) => {
                    let (res_a, a) = read_timetags(BufReader::new(File::open(pa)?))?;
                    let (res_b, b) = read_timetags(BufReader::new(File::open(pb)?))?;
                    if res_a != res_b {
                        return Err(CliError::Usage(format!("tag resolutions differ: {res_a} fs vs {res_b} fs")));
                    }
                    cfg.source.tag_resolution_s = res_a as f64 * 1e-15;
                    let last = a.iter().chain(&b).map(|t| t.ticks).max().unwrap_or(0);
                    (a, b, last as f64 * cfg.source.tag_resolution_s)
                }
                _ => {
                    let run = sample_timetags(&cfg.source, duration, cfg.seed)?;
                    (run.alice, run.bob, duration)
                }
            };
            let events = match_coincidences(&a, &b, cfg.source.window_ticks())?;
            println!("alice tags        {}", a.len());
            println!("bob tags          {}", b.len());
            println!("coincidences      {}", events.len());
            let table = tally(&events);
            let rate = (span > 0.0).then(|| events.len() as f64 / span);
            let r = analyze_counts(&table, rate, None, &cfg.security, cfg.target_eps_gen)?;
            print!("{}", render_report(&r));
            let mut outputs = Vec::new();
            if write_tags {
                fs::create_dir_all(&cfg.out_dir)?;
                let res_fs = (cfg.source.tag_resolution_s * 1e15).round() as u64;
                for (name, tags) in [("alice.ttag", &a), ("bob.ttag", &b)] {
                    let path = cfg.out_dir.join(name);
                    let mut w = BufWriter::new(File::create(&path)?);
                    write_timetags(&mut w, if res_fs == 0 { DEFAULT_RESOLUTION_FS } else { res_fs }, tags)?;
                    w.flush()?;
                    outputs.push(path);
                }
            }
            finish("timetags", &cfg, &outputs, serde_json::to_value(&r)?)
        }
        Command::FiniteKey { i_fraction, counts, scale } => {
            let i = match (i_fraction, counts) {
                (Some(i), _) => i,
                (None, Some(p)) => {
                    let t = read_counts_csv(File::open(p)?, scale)?;
                    if t.total() == 0 {
                        return Err(CliError::Usage("counts table is empty".into()));
                    }
                    t.off_diagonal_total() as f64 / t.total() as f64 / 2.0
                }
                (None, None) => return Err(CliError::Usage("give --i-fraction or --counts".into())),
            };
            let grid = log_grid(cfg.sweep_lo_exp, cfg.sweep_hi_exp, cfg.sweep_per_decade);
            let sweep = finite_sweep(|_| i, &grid, &cfg.security, cfg.target_eps_gen)?;
            println!("{:>14} {:>10} {:>10}", "N", "r_col", "r_gen");
            for p in &sweep {
                println!("{:>14} {:>10} {:>10}", p.n, sig4(p.r_col), p.r_gen.map(sig4).unwrap_or_default());
            }
            let file = cfg.out_dir.join("sweep.csv");
            write_csv(&file, &sweep)?;
            finish("finite-key", &cfg, &[file], json!({ "i_fraction": i, "points": sweep.len() }))
        }
        Command::Threshold { f_ec } => {
            let f = f_ec.unwrap_or(cfg.security.f_ec);
            let q = threshold_qber(f)?;
            println!("threshold QBER at f_EC = {}: {}", sig4(f), sig4(q * 100.0) + "%");
            Ok(())
        }
        Command::Serve { role, listen, alice, key_out, timeout_s } => {
            let listener = TcpListener::bind(&listen)?;
            println!("listening on {}", listener.local_addr()?);
            let sc = session_config(&cfg, timeout_s);
            let outcome = match role {
                PeerRole::Alice => serve_alice(&listener, &sc)?,
                PeerRole::Bob => {
                    let addr = alice.ok_or_else(|| CliError::Usage("bob needs --alice".into()))?;
                    serve_bob(&listener, addr.as_str(), &sc)?
                }
            };
            print_outcome(&outcome, key_out.as_deref())
        }
        Command::Connect { alice, bob, events, timeout_s } => {
            cfg.validate()?;
            let dist = effective_distribution(&cfg.source)?;
            let ev = sample_coincidences(&dist, events as usize, cfg.seed)?;
            let t = feed_source(alice.as_str(), bob.as_str(), &ev, &session_config(&cfg, timeout_s))?;
            println!("sent {} events in {} frames", ev.len(), t.entries.len());
            Ok(())
        }
        Command::Config { write } => {
            cfg.validate()?;
            print!("{}", cfg.to_text());
            if let Some(p) = write {
                cfg.save(&p)?;
            }
            Ok(())
        }
    }
}


#[cfg(test)]
mod tests {
    use super::*;

    fn exec(args: &[&str]) -> Result<()> {
        let argv = std::iter::once("trine-qkd").chain(args.iter().copied());
        run(Cli::try_parse_from(argv).map_err(|e| CliError::Usage(e.to_string()))?)
    }

    fn path(p: &Path) -> &str {
        p.to_str().unwrap()
    }

    fn sidecar(dir: &Path, command: &str) -> serde_json::Value {
        serde_json::from_str(&fs::read_to_string(dir.join(format!("{command}.json"))).unwrap()).unwrap()
    }

    #[test]
    fn analyze_counts_writes_metadata() {
        let dir = tempfile::tempdir().unwrap();
        let counts = dir.path().join("t.csv");
        fs::write(&counts, "0.6,35.8,33.6\n35.1,0.6,32.8\n33.4,33.2,0.4\n").unwrap();
        exec(&["analyze-counts", "--scale", "1e6", "--rate-hz", "29000", "--counts", path(&counts), "--out", path(dir.path())])
            .unwrap();
        let meta = sidecar(dir.path(), "analyze-counts");
        assert_eq!(meta["seed"], 1);
        assert_eq!(meta["generator_id"], "chacha20/stream-per-chunk/v1");
        assert_eq!(meta["config_hash"].as_str().unwrap().len(), 16);
        assert_eq!(meta["results"]["total"], 205_500_000);
    }

    #[test]
    fn errors_carry_categories() {
        assert_eq!(exec(&["--set", "nope=1", "threshold"]).unwrap_err().category(), "config");
        assert_eq!(exec(&["threshold", "--f-ec", "0.5"]).unwrap_err().category(), "domain");
        assert_eq!(exec(&["bogus"]).unwrap_err().exit_code(), 2);
        let dir = tempfile::tempdir().unwrap();
        let counts = dir.path().join("z.csv");
        fs::write(&counts, "0,0,0\n0,0,0\n0,0,0\n").unwrap();
        assert_eq!(exec(&["analyze-counts", "--counts", path(&counts)]).unwrap_err().exit_code(), 3);
        let missing = dir.path().join("missing.csv");
        assert_eq!(exec(&["analyze-counts", "--counts", path(&missing)]).unwrap_err().category(), "io");
    }

    #[test]
    fn simulate_is_reproducible_and_self_describing() {
        let dir = tempfile::tempdir().unwrap();
        for sub in ["a", "b"] {
            let out = dir.path().join(sub);
            exec(&["simulate", "--events", "300000", "--seed", "5", "--set", "block_duration_s=2", "--out", path(&out)])
                .unwrap();
        }
        for f in ["counts.csv", "blocks.csv", "sweep.csv"] {
            let a = fs::read(dir.path().join("a").join(f)).unwrap();
            assert_eq!(a, fs::read(dir.path().join("b").join(f)).unwrap(), "{f}");
        }
        // 300000 events at 29 kHz in 2 s blocks of 58000
        let blocks = fs::read_to_string(dir.path().join("a/blocks.csv")).unwrap();
        assert_eq!(blocks.lines().count(), 1 + 6);
        let meta = sidecar(&dir.path().join("a"), "simulate");
        assert_eq!(meta["seed"], 5);
        assert_eq!(meta["config"]["n_events"], "300000");
        assert_eq!(meta["outputs"], json!(["counts.csv", "blocks.csv", "sweep.csv"]));
    }

    #[test]
    fn written_config_reads_back() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("run.cfg");
        exec(&["--set", "visibility=0.98", "--seed", "9", "config", "--write", path(&file)]).unwrap();
        let cfg = RunConfig::load(&file).unwrap();
        assert_eq!((cfg.seed, cfg.source.visibility), (9, 0.98));
        exec(&["--config", path(&file), "--out", path(dir.path()), "finite-key", "--i-fraction", "0.4961"]).unwrap();
        assert_eq!(sidecar(dir.path(), "finite-key")["seed"], 9);
    }

    #[test]
    fn timetag_files_reanalyze_identically() {
        let dir = tempfile::tempdir().unwrap();
        exec(&["timetags", "--duration", "0.5", "--write-tags", "--out", path(dir.path())]).unwrap();
        let again = dir.path().join("again");
        let (a, b) = (dir.path().join("alice.ttag"), dir.path().join("bob.ttag"));
        exec(&["timetags", "--alice", path(&a), "--bob", path(&b), "--out", path(&again)]).unwrap();
        let first = sidecar(dir.path(), "timetags");
        let second = sidecar(&again, "timetags");
        assert_eq!(first["results"]["total"], second["results"]["total"]);
        assert_eq!(first["results"]["i_fraction"], second["results"]["i_fraction"]);
    }

    #[test]
    fn loopback_over_the_commands() {
        let alice = TcpListener::bind("127.0.0.1:0").unwrap();
        let bob = TcpListener::bind("127.0.0.1:0").unwrap();
        let (aa, ba) = (alice.local_addr().unwrap().to_string(), bob.local_addr().unwrap().to_string());
        drop((alice, bob));
        let dir = tempfile::tempdir().unwrap();
        let (ka, kb) = (dir.path().join("a.key"), dir.path().join("b.key"));
        std::thread::scope(|s| {
            let ta = s.spawn(|| exec(&["serve", "--role", "alice", "--listen", &aa, "--key-out", path(&ka)]));
            let tb = s.spawn(|| {
                std::thread::sleep(Duration::from_millis(100));
                exec(&["serve", "--role", "bob", "--listen", &ba, "--alice", &aa, "--key-out", path(&kb)])
            });
            std::thread::sleep(Duration::from_millis(300));
            exec(&["--set", "visibility=1", "--set", "accidental_fraction=0", "connect", "--alice", &aa, "--bob", &ba, "--events", "5000"])
                .unwrap();
            ta.join().unwrap().unwrap();
            tb.join().unwrap().unwrap();
        });
        let key_a = fs::read_to_string(&ka).unwrap();
        assert!(key_a.trim().len() > 2000);
        assert_eq!(key_a, fs::read_to_string(&kb).unwrap());
    }
}
