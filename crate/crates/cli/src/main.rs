//! `nos`: sweeps, codebook analysis, single-packet decode traces and the
//! artifact gate.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use nos_core::codebook::{apply_channel_to_codebook, empirical_post_channel_report, pre_channel_report, CorrelationReport};
use nos_core::encoder::reshape_space_time;
use nos_core::kbest::{KBest, Phase};
use nos_core::sim::{packet_rng, parse_snr_range, points_to_csv, WORKERS_ENV};
use nos_core::{
    encode, transmit, validate_artifacts, BitString, ChannelRealization, Codebook, DecodeConfig, PacketLayout, SeededRng, SimConfig, Simulation,
    SnrPoint,
};

#[derive(Parser)]
#[command(name = "nos", version, about = "Near-orthogonal superposition coding over block-fading MIMO channels")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte-Carlo PER/BER sweep described by a TOML config.
    Simulate(SimulateArgs),
    /// Fraction of packets whose transmitted codewords miss the final candidate list.
    MissRate(MissRateArgs),
    /// Inter/intra correlation statistics and histograms of a codebook.
    AnalyzeCodebook(AnalyzeArgs),
    /// Encode, transmit and decode one packet, printing the tree search.
    DecodeOne(DecodeOneArgs),
    /// Check a codebook and/or weights file against every loader invariant.
    ValidateArtifacts(ValidateArgs),
}

/// Config overrides shared by the sweep commands.
#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    /// `a:b:step` (inclusive) or a single value; `inf` is noiseless.
    #[arg(long)]
    snr_db: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    iter: Option<usize>,
    #[arg(long)]
    sorting: Option<String>,
    #[arg(long)]
    list_size: Option<usize>,
    #[arg(long)]
    min_errors: Option<u64>,
    #[arg(long)]
    max_packets: Option<u64>,
    #[arg(long)]
    batch: Option<u64>,
    /// Worker threads; defaults to the environment variable, then all cores.
    #[arg(long, env = WORKERS_ENV)]
    workers: Option<usize>,
}

impl SweepArgs {
    fn load(&self) -> Result<SimConfig> {
        let mut cfg = SimConfig::from_file(&self.config).with_context(|| format!("loading {}", self.config.display()))?;
        if let Some(s) = &self.snr_db {
            cfg.snr_db = parse_snr_range(s)?;
        }
        macro_rules! set {
            ($($field:ident),*) => { $( if let Some(v) = self.$field.clone() { cfg.$field = v; } )* };
        }
        set!(seed, k, iter, sorting, list_size, min_errors, max_packets, batch);
        Ok(cfg)
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    sweep: SweepArgs,
    /// CSV destination; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MissRateArgs {
    #[command(flatten)]
    sweep: SweepArgs,
    /// Comma-separated loop counts evaluated on the same packets.
    #[arg(long, value_delimiter = ',', default_value = "0")]
    iters: Vec<usize>,
    #[arg(long, default_value_t = 10_000)]
    packets: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(long)]
    codebook: PathBuf,
    /// Channel draws for the post-channel statistics; 0 skips them.
    #[arg(long, default_value_t = 0)]
    channels: usize,
    #[arg(long, default_value_t = 4)]
    nt: usize,
    #[arg(long, default_value_t = 4)]
    nr: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory for `{pre,post}_{inter,intra}.csv` histograms.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct DecodeOneArgs {
    #[arg(long)]
    codebook: PathBuf,
    #[arg(long, default_value_t = 4)]
    nt: usize,
    #[arg(long, default_value_t = 4)]
    nr: usize,
    /// `inf` is noiseless.
    #[arg(long, default_value = "10")]
    snr_db: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Packet number within the seed's stream (same draws as a sweep's first SNR point).
    #[arg(long, default_value_t = 0)]
    packet: u64,
    #[arg(long, default_value_t = 16)]
    k: usize,
    #[arg(long, default_value_t = 4)]
    iter: usize,
    #[arg(long, default_value = "per_layer")]
    sorting: String,
    /// Survivors printed per layer.
    #[arg(long, default_value_t = 4)]
    show: usize,
    /// Send raw indices without a CRC (needed for tiny alphabets).
    #[arg(long)]
    uncoded: bool,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    codebook: Option<PathBuf>,
    #[arg(long)]
    weights: Option<PathBuf>,
}

fn write_out(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn simulate(a: &SimulateArgs) -> Result<()> {
    let sim = Simulation::from_config(a.sweep.load()?)?;
    let res = sim.run(a.sweep.workers)?;
    for (p, d) in res.points.iter().zip(&res.details) {
        eprintln!("snr {} dB: {} packets, {} errors, PER {:.3e}, {:.1?}", p.snr_db, p.packets, p.pkt_errors, p.per, d.wall_clock);
    }
    write_out(a.out.as_deref(), &points_to_csv(&res.points))
}

fn miss_rate(a: &MissRateArgs) -> Result<()> {
    let sim = Simulation::from_config(a.sweep.load()?)?;
    let pts = sim.candidate_miss_rate(&a.iters, a.packets, a.sweep.workers)?;
    let mut csv = String::from("snr_db,iter,packets,misses,rate,rate_lo,rate_hi\n");
    for p in &pts {
        writeln!(csv, "{},{},{},{},{},{},{}", p.snr_db, p.iter, p.packets, p.misses, p.rate, p.lo, p.hi)?;
    }
    write_out(a.out.as_deref(), &csv)
}

fn print_report(label: &str, r: &CorrelationReport) {
    let db = |x: Option<f64>| x.map_or("n/a".to_string(), |v| format!("{v:.2} dB"));
    println!("{label} inter: max {} over {} entries", db(r.inter.max_db()), r.inter.count);
    println!(
        "{label} intra: max {} over {} positive of {} entries, min {}",
        db(r.intra.max_db()),
        r.intra.count,
        r.intra_total,
        r.intra_min.map_or("n/a".to_string(), |v| format!("{v:.4}"))
    );
}

fn save_histograms(dir: &Path, prefix: &str, r: &CorrelationReport) -> Result<()> {
    r.inter.histogram.save_csv(dir.join(format!("{prefix}_inter.csv")))?;
    r.intra.histogram.save_csv(dir.join(format!("{prefix}_intra.csv")))?;
    Ok(())
}

fn analyze(a: &AnalyzeArgs) -> Result<()> {
    let cb = Codebook::load(&a.codebook)?;
    println!("codebook V={} M={} D={} energy {}", cb.sections(), cb.alphabet(), cb.real_len(), cb.energy());
    if let Some(dir) = &a.out_dir {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let pre = pre_channel_report(&cb);
    print_report("pre-channel", &pre);
    if let Some(dir) = &a.out_dir {
        save_histograms(dir, "pre", &pre)?;
    }
    if a.channels > 0 {
        let post = empirical_post_channel_report(&cb, a.channels, a.nt, a.nr, &mut SeededRng::new(a.seed))?;
        print_report(&format!("post-channel ({} x {}, {} draws)", a.nr, a.nt, a.channels), &post);
        if let Some(dir) = &a.out_dir {
            save_histograms(dir, "post", &post)?;
        }
    }
    Ok(())
}

fn fmt_assignment(a: &[Option<usize>]) -> String {
    let parts: Vec<String> = a.iter().map(|x| x.map_or("-".to_string(), |i| i.to_string())).collect();
    format!("[{}]", parts.join(" "))
}

fn decode_one(a: &DecodeOneArgs) -> Result<()> {
    let cb = Codebook::load(&a.codebook)?;
    let layout = if a.uncoded { PacketLayout::uncoded(cb.sections(), cb.alphabet())? } else { PacketLayout::for_codebook(&cb)? };
    if cb.complex_len() % a.nt != 0 {
        bail!("D/2 = {} symbols do not fill {} antennas", cb.complex_len(), a.nt);
    }
    let slots = cb.complex_len() / a.nt;
    let cfg = DecodeConfig::new(a.k, a.iter, a.sorting.parse()?)?;
    let snr = SnrPoint::from_db(a.snr_db);

    // Same draw order as a sweep packet.
    let mut rng = packet_rng(a.seed, 0, a.packet);
    let msg = BitString::random(layout.info_bits, &mut rng)?;
    let channel = ChannelRealization::draw(a.nr, a.nt, &mut rng);
    let enc = encode(&msg, &cb, &layout)?;
    let block = reshape_space_time(enc.signal.as_slice(), a.nt, slots)?;
    let y = transmit(&block, &channel, snr, &mut rng)?;
    let pccb = apply_channel_to_codebook(&cb, &channel, a.nt, slots)?;
    let kb = KBest::new(&pccb, y.as_slice())?;

    println!(
        "V={} M={} D={} {}x{} snr={} dB K={} iter={} sorting={}",
        cb.sections(),
        cb.alphabet(),
        cb.real_len(),
        a.nr,
        a.nt,
        a.snr_db,
        a.k,
        a.iter,
        cfg.sorting
    );
    println!("sent indices {:?}", enc.indices);
    let res = kb.decode_traced(&cfg, &layout, |t| {
        let phase = match t.phase {
            Phase::Forward => "forward",
            Phase::Loop => "loop",
        };
        let mut layers = t.layers.clone();
        layers.dedup();
        println!("{phase} step {} layers {:?}: {} survivors", t.step, layers, t.survivors.len());
        for s in t.survivors.iter().take(a.show) {
            let hit = s.assignment.iter().zip(&enc.indices).all(|(x, &i)| x.is_none_or(|x| x == i));
            println!("  {:>14.6} {}{}", s.score, fmt_assignment(&s.assignment), if hit { "  *" } else { "" });
        }
    })?;
    println!("candidates {}, crc checks {}, metric evaluations {}", res.candidates.len(), res.stats.crc_checks, res.stats.total_metric_evals());
    println!("transmitted word in final list: {}", res.contains(&enc.indices));
    match &res.bits {
        Some(b) if *b == msg => println!("decoded correctly"),
        Some(b) => println!("accepted wrong message ({} bit errors)", b.hamming(&msg)),
        None => println!("no candidate passed the CRC"),
    }
    Ok(())
}

fn validate(a: &ValidateArgs) -> Result<bool> {
    if a.codebook.is_none() && a.weights.is_none() {
        bail!("pass --codebook and/or --weights");
    }
    let report = validate_artifacts(a.codebook.as_deref(), a.weights.as_deref());
    print!("{report}");
    println!("{}", if report.passed() { "artifacts valid" } else { "artifacts INVALID" });
    Ok(report.passed())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Simulate(a) => simulate(a).map(|_| true),
        Command::MissRate(a) => miss_rate(a).map(|_| true),
        Command::AnalyzeCodebook(a) => analyze(a).map(|_| true),
        Command::DecodeOne(a) => decode_one(a).map(|_| true),
        Command::ValidateArtifacts(a) => validate(a),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
