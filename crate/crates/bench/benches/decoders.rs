//! Per-packet cost of the receivers and of codebook analysis.

use std::hint::black_box;
use std::path::PathBuf;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use nos_core::codebook::{apply_channel_to_codebook, pre_channel_report};
use nos_core::encoder::reshape_space_time;
use nos_core::kbest::KBest;
use nos_core::nn::WeightsFile;
use nos_core::polar::{block_llrs, polar_encode, qpsk_map, scl_list, PolarSpec};
use nos_core::receiver::{decode_probs, residual_detect, ReceiverWeights};
use nos_core::{crc_append, encode, transmit, BitString, ChannelRealization, Codebook, DecodeConfig, PacketLayout, SeededRng, SnrPoint, Sorting};

fn desk(file: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../artifacts/desk_v4m64d64").join(file)
}

fn kbest(c: &mut Criterion) {
    let mut rng = SeededRng::new(1);
    let mut group = c.benchmark_group("kbest_decode");
    for (label, cb) in
        [("desk_v4m64", Codebook::load(desk("codebook.nosc")).unwrap()), ("random_v4m256", Codebook::random_gaussian(4, 64, 256, &mut rng).unwrap())]
    {
        let layout = PacketLayout::for_codebook(&cb).unwrap();
        let msg = BitString::random(layout.info_bits, &mut rng).unwrap();
        let channel = ChannelRealization::draw(4, 4, &mut rng);
        let block = reshape_space_time(encode(&msg, &cb, &layout).unwrap().signal.as_slice(), 4, 8).unwrap();
        let y = transmit(&block, &channel, SnrPoint::from_db(0.0), &mut rng).unwrap();
        group.bench_function(BenchmarkId::new("post_channel_codebook", label), |b| {
            b.iter(|| apply_channel_to_codebook(black_box(&cb), &channel, 4, 8).unwrap())
        });
        let pccb = apply_channel_to_codebook(&cb, &channel, 4, 8).unwrap();
        for (k, iter, sorting) in [(16, 0, Sorting::PerLayer), (16, 4, Sorting::PerLayer), (16, 4, Sorting::PerBranch), (64, 4, Sorting::PerLayer)] {
            let cfg = DecodeConfig::new(k, iter, sorting).unwrap();
            group.bench_function(BenchmarkId::new(label, format!("k{k}_iter{iter}_{sorting}")), |b| {
                b.iter(|| KBest::new(&pccb, black_box(y.as_slice())).unwrap().decode(&cfg, &layout).unwrap())
            });
        }
    }
    group.finish();
}

fn polar(c: &mut Criterion) {
    let mut rng = SeededRng::new(2);
    let mut group = c.benchmark_group("polar_baseline");
    let msg = BitString::random(21, &mut rng).unwrap();
    let channel = ChannelRealization::draw(4, 4, &mut rng);
    let spec = PolarSpec::new(21, 11, 64, 8).unwrap();
    let sym = qpsk_map(&polar_encode(&crc_append(&msg).into_vec(), &spec).unwrap()).unwrap();
    let block = reshape_space_time(&sym, 4, 8).unwrap();
    let snr = SnrPoint::from_db(4.0);
    let y = transmit(&block, &channel, snr, &mut rng).unwrap();
    group.bench_function("ml_llr_4x4", |b| b.iter(|| block_llrs(black_box(&y), channel.matrix(), snr.sigma2).unwrap()));
    let llrs = block_llrs(&y, channel.matrix(), snr.sigma2).unwrap();
    for list in [1, 8, 16] {
        let spec = PolarSpec::new(21, 11, 64, list).unwrap();
        group.bench_function(BenchmarkId::new("scl", list), |b| b.iter(|| scl_list(black_box(&llrs), &spec).unwrap()));
    }
    group.finish();
}

fn receiver(c: &mut Criterion) {
    let mut rng = SeededRng::new(3);
    let cb = Codebook::load(desk("codebook.nosc")).unwrap();
    let rx = ReceiverWeights::from_file(&WeightsFile::load(desk("weights.nosw")).unwrap()).unwrap();
    let layout = PacketLayout::for_codebook(&cb).unwrap();
    let msg = BitString::random(layout.info_bits, &mut rng).unwrap();
    let channel = ChannelRealization::draw(2, 2, &mut rng);
    let block = reshape_space_time(encode(&msg, &cb, &layout).unwrap().signal.as_slice(), 2, 16).unwrap();
    let snr = SnrPoint::from_db(8.0);
    let y = transmit(&block, &channel, snr, &mut rng).unwrap();
    c.bench_function("nn_receiver_2x2", |b| {
        b.iter(|| {
            let x = residual_detect(black_box(&y), channel.matrix(), &rx, snr.sigma2).unwrap();
            decode_probs(&x, &rx).unwrap()
        })
    });
}

fn analysis(c: &mut Criterion) {
    let cb = Codebook::random_gaussian(4, 64, 256, &mut SeededRng::new(4)).unwrap();
    c.bench_function("pre_channel_report_v4m256", |b| b.iter(|| pre_channel_report(black_box(&cb))));
}

criterion_group!(benches, kbest, polar, receiver, analysis);
criterion_main!(benches);
