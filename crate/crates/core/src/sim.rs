//! Monte-Carlo PER/BER sweeps.
//!
//! Packet `i` at SNR index `j` draws its message, channel and noise from RNG
//! substream `(j << 32) | i` of the configured seed. Every decoder
//! configuration therefore sees the same draws (paired comparisons), and the
//! integer counters reduce identically for any worker count. Packets run in
//! fixed-size batches; the stopping rule is checked between batches.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::Deserialize;

use crate::channel::{transmit, ChannelRealization, SnrPoint};
use crate::codebook::{apply_channel_to_codebook, Codebook};
use crate::encoder::{encode, reshape_space_time, PacketLayout};
use crate::error::{Error, Result};
use crate::kbest::{DecodeConfig, KBest, Sorting};
use crate::nn::WeightsFile;
use crate::polar::{qpsk_spectral_pipeline, PolarSpec};
use crate::receiver::{decode_probs, hard_decision, residual_detect, ReceiverWeights};
use crate::types::{BitString, SeededRng};

/// Environment variable holding the worker thread count.
pub const WORKERS_ENV: &str = "NOS_WORKERS";

pub const CSV_HEADER: &str = "snr_db,packets,pkt_errors,per,per_lo,per_hi,ber,metric_evals";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum System {
    Nos,
    Polar,
    NnReceiver,
}

fn default_k() -> usize {
    16
}
fn default_iter() -> usize {
    4
}
fn default_sorting() -> String {
    "per_layer".into()
}
fn default_list() -> usize {
    8
}
fn default_min_errors() -> u64 {
    100
}
fn default_max_packets() -> u64 {
    1_000_000
}
fn default_batch() -> u64 {
    256
}

/// Sweep description; read from a flat TOML file.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub system: System,
    #[serde(default)]
    pub codebook: Option<PathBuf>,
    #[serde(default)]
    pub weights: Option<PathBuf>,
    /// `V`; taken from the codebook when absent.
    #[serde(default)]
    pub sections: Option<usize>,
    /// `M`; taken from the codebook when absent.
    #[serde(default)]
    pub alphabet: Option<usize>,
    /// `D`; taken from the codebook when absent.
    #[serde(default)]
    pub real_len: Option<usize>,
    pub nt: usize,
    pub nr: usize,
    /// `inf` selects a noiseless point.
    #[serde(default)]
    pub snr_db: Vec<f64>,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_iter")]
    pub iter: usize,
    #[serde(default = "default_sorting")]
    pub sorting: String,
    #[serde(default = "default_list")]
    pub list_size: usize,
    #[serde(default = "default_min_errors")]
    pub min_errors: u64,
    #[serde(default = "default_max_packets")]
    pub max_packets: u64,
    #[serde(default = "default_batch")]
    pub batch: u64,
    #[serde(default)]
    pub seed: u64,
}

impl SimConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Parses a config file; relative artifact paths resolve against its directory.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.codebook, &mut cfg.weights].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn sorting(&self) -> Result<Sorting> {
        self.sorting.parse()
    }

    fn check_knobs(&self) -> Result<()> {
        if self.min_errors == 0 || self.max_packets == 0 || self.batch == 0 {
            return Err(Error::Config("min_errors, max_packets and batch must be positive".into()));
        }
        if self.nt == 0 || self.nr == 0 {
            return Err(Error::Config("antenna counts must be positive".into()));
        }
        if self.snr_db.iter().any(|s| s.is_nan()) {
            return Err(Error::Config("SNR points must be numbers".into()));
        }
        DecodeConfig::new(self.k, self.iter, self.sorting()?)?;
        Ok(())
    }
}

/// Parses `a:b:step` (inclusive) or a single value.
pub fn parse_snr_range(text: &str) -> Result<Vec<f64>> {
    let bad = || Error::Config(format!("bad SNR range {text:?}, expected a:b:step"));
    let parts: Vec<f64> = text.split(':').map(|p| p.trim().parse::<f64>().map_err(|_| bad())).collect::<Result<_>>()?;
    match parts.as_slice() {
        [x] => Ok(vec![*x]),
        [a, b, step] if *step > 0.0 && b >= a => {
            let n = ((b - a) / step + 1e-9).floor() as usize;
            Ok((0..=n).map(|i| a + i as f64 * step).collect())
        }
        _ => Err(bad()),
    }
}

/// 95% Wilson score interval for `errors` out of `trials`.
pub fn wilson_interval(errors: u64, trials: u64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let z = 1.959_963_984_540_054;
    let n = trials as f64;
    let p = errors as f64 / n;
    let denom = 1.0 + z * z / n;
    let center = (p + z * z / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z * z / (4.0 * n * n)).sqrt() / denom;
    let lo = if errors == 0 { 0.0 } else { (center - half).max(0.0) };
    let hi = if errors >= trials { 1.0 } else { (center + half).min(1.0) };
    (lo, hi)
}

/// One CSV row.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub snr_db: f64,
    pub packets: u64,
    pub pkt_errors: u64,
    pub per: f64,
    pub per_lo: f64,
    pub per_hi: f64,
    pub ber: f64,
    pub metric_evals: u64,
}

/// Per-point data kept out of the CSV.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointDetail {
    pub bit_errors: u64,
    pub wall_clock: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    pub points: Vec<SweepPoint>,
    pub details: Vec<PointDetail>,
}

impl SimResult {
    pub fn to_csv(&self) -> String {
        points_to_csv(&self.points)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

pub fn points_to_csv(points: &[SweepPoint]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for p in points {
        let _ = writeln!(out, "{},{},{},{},{},{},{},{}", p.snr_db, p.packets, p.pkt_errors, p.per, p.per_lo, p.per_hi, p.ber, p.metric_evals);
    }
    out
}

pub fn parse_csv(text: &str) -> Result<Vec<SweepPoint>> {
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err(Error::Config("CSV header does not match".into()));
    }
    lines
        .filter(|l| !l.is_empty())
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 8 {
                return Err(Error::Config(format!("CSV row {line:?} has {} fields", f.len())));
            }
            let float = |s: &str| s.parse::<f64>().map_err(|_| Error::Config(format!("bad number {s:?}")));
            let int = |s: &str| s.parse::<u64>().map_err(|_| Error::Config(format!("bad count {s:?}")));
            Ok(SweepPoint {
                snr_db: float(f[0])?,
                packets: int(f[1])?,
                pkt_errors: int(f[2])?,
                per: float(f[3])?,
                per_lo: float(f[4])?,
                per_hi: float(f[5])?,
                ber: float(f[6])?,
                metric_evals: int(f[7])?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, Default)]
struct Tally {
    packets: u64,
    pkt_errors: u64,
    bit_errors: u64,
    metric_evals: u64,
}

impl Tally {
    fn merge(self, o: Tally) -> Tally {
        Tally {
            packets: self.packets + o.packets,
            pkt_errors: self.pkt_errors + o.pkt_errors,
            bit_errors: self.bit_errors + o.bit_errors,
            metric_evals: self.metric_evals + o.metric_evals,
        }
    }
}

enum Backend {
    Nos { codebook: Codebook, decoder: DecodeConfig },
    Polar { spec: PolarSpec },
    Nn { codebook: Codebook, receiver: ReceiverWeights },
}

/// A validated sweep, ready to run.
pub struct Simulation {
    cfg: SimConfig,
    layout: PacketLayout,
    slots: usize,
    backend: Backend,
}

fn resolve(cfg_value: Option<usize>, artifact: Option<usize>, name: &str) -> Result<usize> {
    match (cfg_value, artifact) {
        (Some(a), Some(b)) if a != b => Err(Error::Config(format!("config {name}={a} but artifact has {b}"))),
        (Some(a), _) | (None, Some(a)) => Ok(a),
        (None, None) => Err(Error::Config(format!("{name} must be set"))),
    }
}

impl Simulation {
    /// Loads the artifacts named in the config.
    pub fn from_config(cfg: SimConfig) -> Result<Self> {
        let codebook = cfg.codebook.as_ref().map(Codebook::load).transpose()?;
        match cfg.system {
            System::Nos => {
                let cb = codebook.ok_or_else(|| Error::Config("system nos needs a codebook".into()))?;
                Self::nos(cfg, cb)
            }
            System::Polar => Self::polar(cfg),
            System::NnReceiver => {
                let cb = codebook.ok_or_else(|| Error::Config("system nn_receiver needs a codebook".into()))?;
                let path = cfg.weights.as_ref().ok_or_else(|| Error::Config("system nn_receiver needs weights".into()))?;
                let receiver = ReceiverWeights::from_file(&WeightsFile::load(path)?)?;
                Self::nn_receiver(cfg, cb, receiver)
            }
        }
    }

    fn build(mut cfg: SimConfig, cb: Option<&Codebook>, backend: impl FnOnce(&SimConfig, PacketLayout) -> Result<Backend>) -> Result<Self> {
        cfg.check_knobs()?;
        cfg.sections = Some(resolve(cfg.sections, cb.map(|c| c.sections()), "sections")?);
        cfg.alphabet = Some(resolve(cfg.alphabet, cb.map(|c| c.alphabet()), "alphabet")?);
        cfg.real_len = Some(resolve(cfg.real_len, cb.map(|c| c.real_len()), "real_len")?);
        let d = cfg.real_len.unwrap();
        if !d.is_multiple_of(2 * cfg.nt) {
            return Err(Error::Config(format!("D/2 = {} symbols do not fill {} antennas", d / 2, cfg.nt)));
        }
        let layout = PacketLayout::new(cfg.sections.unwrap(), cfg.alphabet.unwrap())?;
        let backend = backend(&cfg, layout)?;
        Ok(Self { slots: d / (2 * cfg.nt), cfg, layout, backend })
    }

    pub fn nos(cfg: SimConfig, codebook: Codebook) -> Result<Self> {
        Self::build(cfg, Some(&codebook.clone()), |cfg, _| {
            let decoder = DecodeConfig::new(cfg.k, cfg.iter, cfg.sorting()?)?;
            Ok(Backend::Nos { codebook, decoder })
        })
    }

    pub fn polar(cfg: SimConfig) -> Result<Self> {
        Self::build(cfg, None, |cfg, layout| {
            let spec = PolarSpec::new(layout.info_bits, layout.crc_bits, cfg.real_len.unwrap(), cfg.list_size)?;
            Ok(Backend::Polar { spec })
        })
    }

    pub fn nn_receiver(cfg: SimConfig, codebook: Codebook, receiver: ReceiverWeights) -> Result<Self> {
        Self::build(cfg, Some(&codebook.clone()), |cfg, _| {
            let d = receiver.dims;
            if (d.sections, d.alphabet, d.real_len, d.nt, d.nr) != (codebook.sections(), codebook.alphabet(), codebook.real_len(), cfg.nt, cfg.nr) {
                return Err(Error::Config(format!("receiver weights {d:?} do not match codebook and {}x{} antennas", cfg.nr, cfg.nt)));
            }
            Ok(Backend::Nn { codebook, receiver })
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn layout(&self) -> &PacketLayout {
        &self.layout
    }

    fn packet(&self, snr: SnrPoint, rng: &mut SeededRng) -> Result<Tally> {
        let msg = BitString::random(self.layout.info_bits, rng)?;
        let channel = ChannelRealization::draw(self.cfg.nr, self.cfg.nt, rng);
        // (decoded info bits, packet accepted, metric evaluations)
        let (bits, ok, evals) = match &self.backend {
            Backend::Nos { codebook, decoder } => {
                let enc = encode(&msg, codebook, &self.layout)?;
                let block = reshape_space_time(enc.signal.as_slice(), self.cfg.nt, self.slots)?;
                let y = transmit(&block, &channel, snr, rng)?;
                let pccb = apply_channel_to_codebook(codebook, &channel, self.cfg.nt, self.slots)?;
                let res = KBest::new(&pccb, y.as_slice())?.decode(decoder, &self.layout)?;
                let evals = res.stats.total_metric_evals();
                let ok = res.bits.as_ref() == Some(&msg);
                let bits = match res.bits {
                    Some(b) => b.into_vec(),
                    None => res.best_guess_bits(&self.layout).unwrap_or_default(),
                };
                (bits, ok, evals)
            }
            Backend::Polar { spec } => {
                let out = qpsk_spectral_pipeline(&msg, &channel, snr, rng, spec)?;
                let ok = out.bits.as_ref() == Some(&msg);
                (out.bits.map(BitString::into_vec).unwrap_or(out.best_guess), ok, 0)
            }
            Backend::Nn { codebook, receiver } => {
                let enc = encode(&msg, codebook, &self.layout)?;
                let block = reshape_space_time(enc.signal.as_slice(), self.cfg.nt, self.slots)?;
                let y = transmit(&block, &channel, snr, rng)?;
                let x = residual_detect(&y, channel.matrix(), receiver, snr.sigma2)?;
                let indices = hard_decision(&decode_probs(&x, receiver)?);
                let mut frame = self.layout.indices_to_frame(&indices);
                frame.truncate(self.layout.info_bits);
                let ok = frame == msg.as_slice();
                (frame, ok, 0)
            }
        };
        Ok(Tally { packets: 1, pkt_errors: u64::from(!ok), bit_errors: hamming(&bits, msg.as_slice()), metric_evals: evals })
    }

    fn run_point(&self, snr_idx: usize, snr: SnrPoint) -> Result<Tally> {
        let mut total = Tally::default();
        while total.pkt_errors < self.cfg.min_errors && total.packets < self.cfg.max_packets {
            let start = total.packets;
            let end = (start + self.cfg.batch).min(self.cfg.max_packets);
            let batch = (start..end)
                .into_par_iter()
                .map(|i| self.packet(snr, &mut packet_rng(self.cfg.seed, snr_idx, i)))
                .try_reduce(Tally::default, |a, b| Ok(a.merge(b)))?;
            total = total.merge(batch);
        }
        Ok(total)
    }

    fn sweep(&self) -> Result<SimResult> {
        let mut points = Vec::new();
        let mut details = Vec::new();
        let info = self.layout.info_bits as f64;
        for (j, &snr_db) in self.cfg.snr_db.iter().enumerate() {
            let started = Instant::now();
            let t = self.run_point(j, SnrPoint::from_db(snr_db))?;
            let (per_lo, per_hi) = wilson_interval(t.pkt_errors, t.packets);
            points.push(SweepPoint {
                snr_db,
                packets: t.packets,
                pkt_errors: t.pkt_errors,
                per: t.pkt_errors as f64 / t.packets as f64,
                per_lo,
                per_hi,
                ber: t.bit_errors as f64 / (t.packets as f64 * info),
                metric_evals: t.metric_evals,
            });
            details.push(PointDetail { bit_errors: t.bit_errors, wall_clock: started.elapsed() });
        }
        Ok(SimResult { points, details })
    }

    /// Runs the sweep on `workers` threads (`None`: [`WORKERS_ENV`], else all cores).
    pub fn run(&self, workers: Option<usize>) -> Result<SimResult> {
        in_pool(workers, || self.sweep())
    }

    /// Fraction of packets whose transmitted index tuple is missing from the
    /// final candidate list, for each `iter` value on the same packets.
    pub fn candidate_miss_rate(&self, iters: &[usize], packets: u64, workers: Option<usize>) -> Result<Vec<MissPoint>> {
        let Backend::Nos { codebook, decoder } = &self.backend else {
            return Err(Error::Config("candidate miss rate needs the nos system".into()));
        };
        in_pool(workers, || {
            let mut out = Vec::new();
            for (j, &snr_db) in self.cfg.snr_db.iter().enumerate() {
                let snr = SnrPoint::from_db(snr_db);
                let misses = (0..packets)
                    .into_par_iter()
                    .map(|i| -> Result<Vec<u64>> {
                        let mut rng = packet_rng(self.cfg.seed, j, i);
                        let msg = BitString::random(self.layout.info_bits, &mut rng)?;
                        let channel = ChannelRealization::draw(self.cfg.nr, self.cfg.nt, &mut rng);
                        let enc = encode(&msg, codebook, &self.layout)?;
                        let block = reshape_space_time(enc.signal.as_slice(), self.cfg.nt, self.slots)?;
                        let y = transmit(&block, &channel, snr, &mut rng)?;
                        let pccb = apply_channel_to_codebook(codebook, &channel, self.cfg.nt, self.slots)?;
                        let kb = KBest::new(&pccb, y.as_slice())?;
                        iters
                            .iter()
                            .map(|&iter| {
                                let res = kb.decode(&DecodeConfig { iter, ..*decoder }, &self.layout)?;
                                Ok(u64::from(!res.contains(&enc.indices)))
                            })
                            .collect()
                    })
                    .try_reduce(|| vec![0; iters.len()], |a, b| Ok(a.iter().zip(&b).map(|(x, y)| x + y).collect()))?;
                for (&iter, &m) in iters.iter().zip(&misses) {
                    let (lo, hi) = wilson_interval(m, packets);
                    out.push(MissPoint { snr_db, iter, packets, misses: m, rate: m as f64 / packets.max(1) as f64, lo, hi });
                }
            }
            Ok(out)
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MissPoint {
    pub snr_db: f64,
    pub iter: usize,
    pub packets: u64,
    pub misses: u64,
    pub rate: f64,
    pub lo: f64,
    pub hi: f64,
}

fn hamming(a: &[u8], b: &[u8]) -> u64 {
    let diff = a.iter().zip(b).filter(|(x, y)| x != y).count();
    (diff + a.len().abs_diff(b.len())) as u64
}

/// RNG for packet `packet` of SNR point `snr_idx`.
pub fn packet_rng(seed: u64, snr_idx: usize, packet: u64) -> SeededRng {
    SeededRng::substream(seed, ((snr_idx as u64) << 32) | packet)
}

/// Worker count from [`WORKERS_ENV`], if set to a positive integer.
pub fn workers_from_env() -> Result<Option<usize>> {
    match std::env::var(WORKERS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(Error::Config(format!("{WORKERS_ENV}={v:?} is not a positive integer"))),
        },
        Err(_) => Ok(None),
    }
}

fn in_pool<T: Send>(workers: Option<usize>, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    let workers = match workers {
        Some(n) => Some(n),
        None => workers_from_env()?,
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| Error::Config(e.to_string()))?;
    pool.install(f)
}

/// Loads artifacts, then runs on [`WORKERS_ENV`] threads.
pub fn run_sweep(cfg: SimConfig) -> Result<SimResult> {
    Simulation::from_config(cfg)?.run(None)
}

pub fn run_candidate_miss_rate(cfg: SimConfig, iters: &[usize], packets: u64) -> Result<Vec<MissPoint>> {
    Simulation::from_config(cfg)?.candidate_miss_rate(iters, packets, None)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nos_cfg() -> SimConfig {
        SimConfig::from_toml(
            r#"
            system = "nos"
            nt = 2
            nr = 2
            snr_db = [4.0]
            k = 4
            iter = 2
            min_errors = 20
            max_packets = 600
            batch = 64
            seed = 11
            "#,
        )
        .unwrap()
    }

    fn small_codebook() -> Codebook {
        Codebook::random_gaussian(4, 32, 16, &mut SeededRng::new(1)).unwrap()
    }

    #[test]
    fn config_defaults_and_errors() {
        let c = nos_cfg();
        assert_eq!((c.list_size, c.sorting.as_str()), (8, "per_layer"));
        assert!(SimConfig::from_toml("system = \"nos\"\nnt = 2\nnr = 2\nbogus = 1").is_err());
        assert!(SimConfig::from_toml("system = \"turbo\"\nnt = 2\nnr = 2").is_err());
        let mut bad = nos_cfg();
        bad.min_errors = 0;
        assert!(Simulation::nos(bad, small_codebook()).is_err());
        let mut bad = nos_cfg();
        bad.nt = 3;
        assert!(Simulation::nos(bad, small_codebook()).is_err());
        let mut bad = nos_cfg();
        bad.alphabet = Some(64);
        assert!(Simulation::nos(bad, small_codebook()).is_err());
    }

    #[test]
    fn snr_ranges() {
        assert_eq!(parse_snr_range("0:10:2").unwrap(), vec![0.0, 2.0, 4.0, 6.0, 8.0, 10.0]);
        assert_eq!(parse_snr_range("3").unwrap(), vec![3.0]);
        assert_eq!(parse_snr_range("0:1:0.25").unwrap().len(), 5);
        assert!(parse_snr_range("5:0:1").is_err());
        assert!(parse_snr_range("a:b").is_err());
    }

    #[test]
    fn wilson_brackets_estimate() {
        for (e, n) in [(0, 10), (5, 10), (10, 10), (100, 100_000)] {
            let (lo, hi) = wilson_interval(e, n);
            let p = e as f64 / n as f64;
            assert!(lo <= p && p <= hi && lo >= 0.0 && hi <= 1.0);
        }
        let (lo, hi) = wilson_interval(50, 100);
        assert!((lo - 0.4038).abs() < 1e-3 && (hi - 0.5962).abs() < 1e-3);
    }

    #[test]
    fn csv_round_trip_and_empty() {
        let empty = SimResult { points: vec![], details: vec![] };
        assert_eq!(empty.to_csv(), format!("{CSV_HEADER}\n"));
        let sim = Simulation::nos(nos_cfg(), small_codebook()).unwrap();
        let res = sim.run(Some(2)).unwrap();
        assert_eq!(parse_csv(&res.to_csv()).unwrap(), res.points);
        assert!(parse_csv("nope\n").is_err());
    }

    #[test]
    fn stopping_rule_and_determinism() {
        let sim = Simulation::nos(nos_cfg(), small_codebook()).unwrap();
        let a = sim.run(Some(1)).unwrap();
        let b = sim.run(Some(3)).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
        let p = &a.points[0];
        assert!(p.pkt_errors >= 20 || p.packets == 600);
        assert!(p.packets.is_multiple_of(64) || p.packets == 600);
        assert!(p.pkt_errors <= p.packets && p.per_lo <= p.per && p.per <= p.per_hi);
    }

    #[test]
    fn noiseless_points_are_error_free() {
        // a scalar channel keeps an orthogonal codebook orthogonal, so every layer is exact
        let mut cfg = SimConfig { nt: 1, nr: 1, ..nos_cfg() };
        cfg.snr_db = vec![f64::INFINITY];
        cfg.max_packets = 200;
        let cb = Codebook::orthogonal(4, 128, 16).unwrap();
        let res = Simulation::nos(cfg.clone(), cb).unwrap().run(Some(2)).unwrap();
        assert_eq!((res.points[0].pkt_errors, res.points[0].packets), (0, 200));
        let mut pc = SimConfig { nt: 2, nr: 2, ..cfg };
        pc.system = System::Polar;
        pc.sections = Some(4);
        pc.alphabet = Some(16);
        pc.real_len = Some(32);
        let res = Simulation::polar(pc).unwrap().run(Some(2)).unwrap();
        assert_eq!(res.points[0].pkt_errors, 0);
        assert!(parse_csv(&res.to_csv()).unwrap()[0].snr_db.is_infinite());
    }

    #[test]
    fn full_list_never_misses() {
        // V=2, M=64: K = M^2 keeps every path
        let cb = Codebook::random_gaussian(2, 8, 64, &mut SeededRng::new(2)).unwrap();
        let cfg = SimConfig { k: 64 * 64, nt: 1, nr: 1, snr_db: vec![0.0], ..nos_cfg() };
        let sim = Simulation::nos(cfg, cb).unwrap();
        let miss = sim.candidate_miss_rate(&[0, 1], 40, Some(2)).unwrap();
        assert!(miss.iter().all(|m| m.misses == 0 && m.packets == 40));
    }
}
