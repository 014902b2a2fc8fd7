//! Acceptance suite. Prints one PASS/FAIL/SKIP line per criterion and exits
//! nonzero if any criterion fails.

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;
use std::time::Instant;

use palette_forge::colorspace::{ciede2000, rgb_to_lab, thresholded_distance, ColorLab, ColorRgb, DistanceParams};
use palette_forge::conditioning::{AugmentationType, ConditionSampler, DropoutTable};
use palette_forge::curation::{rank_bins, rgb_bin_color, scan_corpus, select_rare_images};
use palette_forge::eval::{evaluate, evaluate_paths, load_eval_manifest, make_palette_2d, Downsample, EvalCase};
use palette_forge::histogram::{Dims, HsvHistogram};
use palette_forge::imageio::RgbImage;
use palette_forge::palette::Palette;
use palette_forge::transport::{emd, emd_oracle, quadratic_chi, transport_lp, GroundDistance, SimilarityMatrix};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

fn ground() -> GroundDistance {
    GroundDistance::standard(DistanceParams::default()).unwrap()
}

fn random_sparse(rng: &mut ChaCha8Rng, max_bins: usize) -> HsvHistogram {
    let k = rng.gen_range(1..=max_bins);
    let bins: BTreeMap<usize, f64> = (0..k)
        .map(|_| (rng.gen_range(0..Dims::STANDARD.len()), rng.gen_range(0.01..1.0)))
        .collect();
    HsvHistogram::from_sparse(Dims::STANDARD, &bins)
        .unwrap()
        .normalize()
        .unwrap()
}

fn emd_oracle_equivalence() -> Outcome {
    let g = ground();
    let mut rng = ChaCha8Rng::seed_from_u64(0xE3D);
    let pairs: Vec<_> = (0..200)
        .map(|_| (random_sparse(&mut rng, 12), random_sparse(&mut rng, 12)))
        .collect();
    let start = Instant::now();
    let mut worst = 0.0f64;
    for (p, q) in &pairs {
        let fast = emd(p, q, &g).unwrap().0;
        let lp = emd_oracle(p, q, &g).unwrap();
        worst = worst.max((fast - lp).abs());
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        worst <= 1e-6 && secs < 10.0,
        format!("200 pairs, max |emd - lp| = {worst:.2e}, {secs:.2} s"),
    )
}

fn emd_metric_axioms() -> Outcome {
    let g = ground();
    let mut rng = ChaCha8Rng::seed_from_u64(0x3E7);
    let mut identity_failures = 0;
    let mut asymmetric = 0;
    let mut violations = 0;
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let [p, q, r] = [0; 3].map(|_| random_sparse(&mut rng, 12));
        let d = |a: &HsvHistogram, b: &HsvHistogram| emd(a, b, &g).unwrap().0;
        if d(&p, &p) != 0.0 || (p != q && d(&p, &q) <= 0.0) {
            identity_failures += 1;
        }
        let (pq, qp) = (d(&p, &q), d(&q, &p));
        if pq.to_bits() != qp.to_bits() {
            asymmetric += 1;
        }
        let excess = d(&p, &r) - (pq + d(&q, &r));
        worst = worst.max(excess);
        if excess > 1e-9 {
            violations += 1;
        }
    }
    check(
        identity_failures == 0 && asymmetric == 0 && violations == 0,
        format!(
            "1000 triples: identity failures {identity_failures}, asymmetric {asymmetric}, triangle violations {violations} (max excess {worst:.2e})"
        ),
    )
}

fn ciede2000_conformance() -> Outcome {
    let text = include_str!("data/ciede2000_pairs.csv");
    let mut worst = 0.0f64;
    let mut n = 0;
    for line in text.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty()) {
        let v: Vec<f64> = line.split(',').map(|x| x.trim().parse().unwrap()).collect();
        let x = ColorLab {
            l: v[0],
            a: v[1],
            b: v[2],
        };
        let y = ColorLab {
            l: v[3],
            a: v[4],
            b: v[5],
        };
        worst = worst
            .max((ciede2000(x, y) - v[6]).abs())
            .max((ciede2000(y, x) - v[6]).abs());
        n += 1;
    }
    check(n == 34 && worst <= 1e-4, format!("{n} pairs, max error {worst:.2e}"))
}

fn entropy_analytics() -> Outcome {
    let dims = Dims::STANDARD;
    let delta = HsvHistogram::from_sparse(dims, &BTreeMap::from([(17, 1.0)])).unwrap();
    let uniform = HsvHistogram::from_dense(dims, vec![1.0 / 4080.0; 4080]).unwrap();
    let eight = HsvHistogram::from_sparse(dims, &(0..8).map(|i| (i * 500, 0.125)).collect()).unwrap();
    let h0 = delta.entropy().unwrap().bits;
    let hu = uniform.entropy().unwrap().bits;
    let h8 = eight.entropy().unwrap().bits;
    let analytic = 4080f64.log2();
    let rounds_to_published = format!("{analytic:.4}") == "11.9944";
    check(
        h0 == 0.0 && (hu - analytic).abs() <= 1e-6 && rounds_to_published && h8 == 3.0,
        format!("delta {h0}, uniform {hu:.9} (log2 4080 = {analytic:.9}), eight bins {h8}"),
    )
}

fn qc_reductions() -> Outcome {
    let dims = Dims::STANDARD;
    let g = ground();
    let a = SimilarityMatrix::from_ground(&g);
    let mut rng = ChaCha8Rng::seed_from_u64(0x9C);

    let p = random_sparse(&mut rng, 40);
    let self_zero = quadratic_chi(&p, &p, &a, 0.5).unwrap() == 0.0;

    // dyadic masses keep every intermediate exact
    let h = |m: &[(usize, f64)]| HsvHistogram::from_sparse(dims, &m.iter().copied().collect()).unwrap();
    let x = h(&[(0, 0.5), (1, 0.25), (2, 0.25)]);
    let y = h(&[(1, 0.25), (2, 0.25), (3, 0.5)]);
    let z = h(&[(5, 0.75), (9, 0.125), (4000, 0.125)]);
    let id = SimilarityMatrix::identity(dims.len());
    let euclid = |u: &HsvHistogram, v: &HsvHistogram| {
        (0..dims.len())
            .map(|i| (u.get(i) - v.get(i)).powi(2))
            .sum::<f64>()
            .sqrt()
    };
    let exact = [(&x, &y), (&x, &z), (&y, &z)]
        .iter()
        .all(|(u, v)| quadratic_chi(u, v, &id, 0.0).unwrap().to_bits() == euclid(u, v).to_bits());
    let sqrt_half = quadratic_chi(&x, &y, &id, 0.0).unwrap() == 0.5f64.sqrt();

    let mut asymmetric = 0;
    for _ in 0..1000 {
        let p = random_sparse(&mut rng, 12);
        let q = random_sparse(&mut rng, 12);
        let pq = quadratic_chi(&p, &q, &a, 0.5).unwrap();
        let qp = quadratic_chi(&q, &p, &a, 0.5).unwrap();
        if pq.to_bits() != qp.to_bits() {
            asymmetric += 1;
        }
    }
    check(
        self_zero && exact && sqrt_half && asymmetric == 0,
        format!(
            "P=Q zero: {self_zero}, identity/m=0 exact: {}, asymmetric pairs: {asymmetric}/1000",
            exact && sqrt_half
        ),
    )
}

fn condition_sampler() -> Outcome {
    const N: usize = 1_000_000;
    let table = DropoutTable::default();
    let mut counts = [0usize; 3];
    let mut dropped = 0usize;
    for draw in ConditionSampler::new(table, 2024).unwrap().take(N) {
        let col = match draw.aug {
            AugmentationType::Histogram => 0,
            AugmentationType::Palette => 1,
            AugmentationType::Unconditioned => 2,
        };
        counts[col] += 1;
        dropped += usize::from(draw.entropy_dropped);
    }
    let freqs = counts.map(|c| c as f64 / N as f64);
    let drop_freq = dropped as f64 / N as f64;
    let within = freqs.iter().zip(table.color_probs).all(|(f, p)| (f - p).abs() <= 0.01)
        && (drop_freq - table.entropy_drop_prob).abs() <= 0.01;
    // chi-squared at alpha = 0.001: df 2 -> 13.816, df 1 -> 10.828
    let chi_color: f64 = counts
        .iter()
        .zip(table.color_probs)
        .map(|(&c, p)| (c as f64 - p * N as f64).powi(2) / (p * N as f64))
        .sum();
    let e_drop = table.entropy_drop_prob * N as f64;
    let chi_drop = (dropped as f64 - e_drop).powi(2) / e_drop + (dropped as f64 - e_drop).powi(2) / (N as f64 - e_drop);
    check(
        within && chi_color < 13.816 && chi_drop < 10.828,
        format!(
            "types ({:.4}, {:.4}, {:.4}), entropy drop {drop_freq:.4}, chi2 {chi_color:.2} / {chi_drop:.2}",
            freqs[0], freqs[1], freqs[2]
        ),
    )
}

/// 55 images of 100 x 100 pixels. Every image puts 87 pixels in each of 100
/// designated common bins. Ten rare-color images put 5% of their pixels in
/// 100 rare bins, five decoys put 4% there, the rest spreads over the other
/// 312 bins.
struct PlantedCorpus {
    images: Vec<(String, RgbImage)>,
    counts: Vec<u64>,
    common: Vec<usize>,
    rare: Vec<usize>,
    rare_images: BTreeSet<String>,
}

fn planted_corpus() -> PlantedCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(87);
    let mut bins: Vec<usize> = (0..512).collect();
    bins.shuffle(&mut rng);
    let common = bins[..100].to_vec();
    let rare = bins[100..200].to_vec();
    let mid = bins[200..].to_vec();

    let mut counts = vec![0u64; 512];
    let mut images = Vec::new();
    let mut rare_images = BTreeSet::new();
    let kinds = [("common", 40, 0), ("rare", 10, 5), ("decoy", 5, 4)];
    for (kind, n, per_rare) in kinds {
        for i in 0..n {
            let mut pixels: Vec<usize> = Vec::with_capacity(10_000);
            for &b in &common {
                pixels.extend(std::iter::repeat_n(b, 87));
            }
            for &b in &rare {
                pixels.extend(std::iter::repeat_n(b, per_rare));
            }
            let rest = 10_000 - pixels.len();
            pixels.extend((0..rest).map(|k| mid[k % mid.len()]));
            for &b in &pixels {
                counts[b] += 1;
            }
            pixels.shuffle(&mut rng);
            let img = RgbImage::from_fn(100, 100, |x, y| rgb_bin_color(pixels[y * 100 + x]));
            let id = format!("{kind}-{i:02}");
            if kind == "rare" {
                rare_images.insert(id.clone());
            }
            images.push((id, img));
        }
    }
    images.shuffle(&mut rng);
    PlantedCorpus {
        images,
        counts,
        common,
        rare,
        rare_images,
    }
}

fn curation_round_trip() -> Outcome {
    let corpus = planted_corpus();
    let imgs: Vec<&RgbImage> = corpus.images.iter().map(|(_, i)| i).collect();
    let stats = scan_corpus(imgs).unwrap();
    let total: u64 = corpus.counts.iter().sum();
    let shares = stats.per_bin_share();
    let share_err = shares
        .iter()
        .zip(&corpus.counts)
        .map(|(s, &c)| (s - c as f64 / total as f64).abs())
        .fold(0.0, f64::max);

    let ranking = rank_bins(&stats);
    let top100 = ranking.top_k_share(100);
    let top_set: BTreeSet<usize> = ranking.entries[..100].iter().map(|e| e.0).collect();
    let rare = ranking.rarest(100);
    let rare_set: BTreeSet<usize> = rare.bins.iter().copied().collect();

    let candidates: Vec<(&str, &RgbImage)> = corpus.images.iter().map(|(id, img)| (id.as_str(), img)).collect();
    let selection = select_rare_images(candidates, &rare, 0.05).unwrap();
    let selected: BTreeSet<String> = selection.selected.iter().map(|s| s.id.clone()).collect();

    check(
        share_err <= 1e-9
            && (top100 - 0.87).abs() <= 1e-9
            && top_set == corpus.common.iter().copied().collect()
            && rare_set == corpus.rare.iter().copied().collect()
            && selected == corpus.rare_images,
        format!(
            "share error {share_err:.1e}, top-100 cumulative {top100:.12}, selected {}/{} planted rare images ({} total selected)",
            selected.intersection(&corpus.rare_images).count(),
            corpus.rare_images.len(),
            selected.len()
        ),
    )
}

fn eval_identity() -> Outcome {
    let g = ground();
    let color = [30, 144, 255];
    let solid = RgbImage::solid(32, 32, color);
    let own = Palette::new(vec![ColorRgb::from_u8(color)]).unwrap();
    let case = EvalCase {
        image: "solid.png".into(),
        palette: own,
        caption: "a lake".into(),
        seed: 0,
    };
    let identity = evaluate(&[case], &[Ok(solid)], &g).unwrap();
    let identity_ok = identity.cases[0].emd == Some(0.0) && identity.mean == Some(0.0);

    let mut rng = ChaCha8Rng::seed_from_u64(0xE7A1);
    let mut pairs: Vec<_> = (0..40)
        .map(|i| {
            let img = RgbImage::from_fn(24, 24, |_, _| [rng.gen(), rng.gen(), rng.gen()]);
            let colors = (0..5)
                .map(|_| ColorRgb::from_u8([rng.gen(), rng.gen(), rng.gen()]))
                .collect();
            let case = EvalCase {
                image: format!("{i}.png").into(),
                palette: Palette::new(colors).unwrap(),
                caption: String::new(),
                seed: i,
            };
            (case, Ok(img))
        })
        .collect();
    let run = |pairs: &[(EvalCase, Result<RgbImage, String>)]| {
        let (c, i): (Vec<_>, Vec<_>) = pairs.iter().cloned().unzip();
        evaluate(&c, &i, &g).unwrap()
    };
    let base = run(&pairs);
    let mut invariant = true;
    for _ in 0..5 {
        pairs.shuffle(&mut rng);
        let r = run(&pairs);
        invariant &= r.mean.unwrap().to_bits() == base.mean.unwrap().to_bits()
            && r.std.unwrap().to_bits() == base.std.unwrap().to_bits();
    }
    check(
        identity_ok && invariant,
        format!(
            "solid vs own palette mean {:?}, 40-case mean {:.6} std {:.6} bit-identical under 5 shuffles: {invariant}",
            identity.mean,
            base.mean.unwrap(),
            base.std.unwrap()
        ),
    )
}

/// Exact OT for 64 unit cells against two colors: fill the first color with
/// the cells that gain most by going there.
fn two_color_ot(cost: &[[f64; 2]], demand0: f64) -> f64 {
    let mut order: Vec<usize> = (0..cost.len()).collect();
    order.sort_by(|&i, &j| (cost[i][0] - cost[i][1]).total_cmp(&(cost[j][0] - cost[j][1])));
    let cell = 1.0 / cost.len() as f64;
    let mut left = demand0;
    let mut total = 0.0;
    for i in order {
        let to0 = cell.min(left);
        left -= to0;
        total += to0 * cost[i][0] + (cell - to0) * cost[i][1];
    }
    total
}

fn palette_2d_alignment() -> Outcome {
    let params = DistanceParams::default();
    let (c0, c1) = ([200u8, 40, 40], [40u8, 60, 190]);
    let palette = Palette::new(vec![ColorRgb::from_u8(c0), ColorRgb::from_u8(c1)]).unwrap();
    let board = RgbImage::from_fn(64, 64, |x, y| if (x / 8 + y / 8) % 2 == 0 { c0 } else { c1 });
    let out = make_palette_2d(&board, &palette, &params, Downsample::BoxAverage).unwrap();
    let keeps = (0..64).all(|c| out.assignment[c] == (c / 8 + c % 8) % 2);
    let diagonal = out.cost == 0.0
        && out.plan.len() == 64
        && out
            .plan
            .iter()
            .all(|&(cell, color, f)| color == (cell / 8 + cell % 8) % 2 && f == 1.0 / 64.0);

    // noisy checkerboards against shifted palettes
    let mut rng = ChaCha8Rng::seed_from_u64(0x2D);
    let mut worst = 0.0f64;
    let mut subset = true;
    for _ in 0..20 {
        let jitter = |c: [u8; 3], rng: &mut ChaCha8Rng| c.map(|v| v.saturating_add(rng.gen_range(0..40)));
        let cells: Vec<[u8; 3]> = (0..64)
            .map(|c| jitter(if (c / 8 + c % 8) % 2 == 0 { c0 } else { c1 }, &mut rng))
            .collect();
        let img = RgbImage::from_fn(64, 64, |x, y| cells[(y / 8) * 8 + x / 8]);
        let targets = [jitter(c0, &mut rng), jitter(c1, &mut rng)].map(ColorRgb::from_u8);
        let pal = Palette::new(targets.to_vec()).unwrap();
        let out = make_palette_2d(&img, &pal, &params, Downsample::BoxAverage).unwrap();
        let cost: Vec<[f64; 2]> = cells
            .iter()
            .map(|c| {
                let lab = rgb_to_lab(ColorRgb::from_u8(*c));
                targets.map(|t| thresholded_distance(lab, rgb_to_lab(t), &params))
            })
            .collect();
        let brute = two_color_ot(&cost, 0.5);
        let flat: Vec<f64> = cost.iter().flatten().copied().collect();
        let lp = transport_lp(&[1.0 / 64.0; 64], &[0.5, 0.5], &flat).unwrap();
        worst = worst.max((out.cost - brute).abs()).max((lp - brute).abs());
        subset &= out.grid.iter().all(|c| targets.contains(c));
    }
    for _ in 0..50 {
        let img = RgbImage::from_fn(rng.gen_range(1..80), rng.gen_range(1..80), |_, _| {
            [rng.gen(), rng.gen(), rng.gen()]
        });
        let k = rng.gen_range(1..=8);
        let pal = Palette::new(
            (0..k)
                .map(|_| ColorRgb::from_u8([rng.gen(), rng.gen(), rng.gen()]))
                .collect(),
        )
        .unwrap();
        for method in [Downsample::BoxAverage, Downsample::Nearest] {
            let out = make_palette_2d(&img, &pal, &params, method).unwrap();
            subset &= out.grid.iter().all(|c| pal.colors().contains(c));
        }
    }
    check(
        keeps && diagonal && worst <= 1e-9 && subset,
        format!("checkerboard kept: {keeps}, block-diagonal plan: {diagonal}, max |cost - brute force| {worst:.1e}, grid within palette: {subset}"),
    )
}

fn reference_replication() -> Outcome {
    let Some(dir) = std::env::var_os("PALETTE_FORGE_REFERENCE_DIR").map(PathBuf::from) else {
        return Outcome::Skip("PALETTE_FORGE_REFERENCE_DIR not set".into());
    };
    let manifest = dir.join("cases.jsonl");
    if !manifest.exists() {
        return Outcome::Skip(format!("{} not found", manifest.display()));
    }
    let cases = match load_eval_manifest(&manifest) {
        Ok(c) => c,
        Err(e) => return Outcome::Fail(format!("manifest: {e}")),
    };
    let report = evaluate_paths(&cases, Some(&dir), &ground()).unwrap();
    match (report.mean, report.std) {
        (Some(mean), Some(std)) => check(
            (0.08..=0.26).contains(&mean),
            format!(
                "{} cases ({} failed), mean {mean:.3} ± {std:.3}",
                report.case_count, report.failed_count
            ),
        ),
        _ => Outcome::Fail("no case could be scored".into()),
    }
}

fn performance() -> Outcome {
    let g = ground();
    let mut rng = ChaCha8Rng::seed_from_u64(0x256);
    let mut slowest = 0.0f64;
    for _ in 0..5 {
        let make = |rng: &mut ChaCha8Rng| {
            let mut bins: Vec<usize> = (0..4080).collect();
            bins.shuffle(rng);
            let m: BTreeMap<usize, f64> = bins[..256].iter().map(|&b| (b, rng.gen_range(0.01..1.0))).collect();
            HsvHistogram::from_sparse(Dims::STANDARD, &m)
                .unwrap()
                .normalize()
                .unwrap()
        };
        let (p, q) = (make(&mut rng), make(&mut rng));
        let start = Instant::now();
        emd(&p, &q, &g).unwrap();
        slowest = slowest.max(start.elapsed().as_secs_f64());
    }

    let images: Vec<RgbImage> = (0..200)
        .map(|_| {
            let mut data = vec![0u8; 512 * 512 * 3];
            rng.fill(&mut data[..]);
            RgbImage::new(512, 512, data).unwrap()
        })
        .collect();
    let start = Instant::now();
    scan_corpus(&images).unwrap();
    let rate = images.len() as f64 / start.elapsed().as_secs_f64();
    let threads = rayon::current_num_threads();
    check(
        slowest < 1.0 && rate >= 200.0,
        format!("256-bin EMD slowest {slowest:.3} s; corpus scan {rate:.0} images/s at 512x512 on {threads} thread(s)"),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 11] = [
        ("EMD oracle equivalence", emd_oracle_equivalence),
        ("EMD metric axioms", emd_metric_axioms),
        ("CIEDE2000 conformance", ciede2000_conformance),
        ("Entropy analytics", entropy_analytics),
        ("Quadratic-Chi reductions", qc_reductions),
        ("Condition sampler", condition_sampler),
        ("Curation round-trip", curation_round_trip),
        ("Eval harness identity", eval_identity),
        ("2D palette alignment", palette_2d_alignment),
        ("Reference EMD replication", reference_replication),
        ("Performance", performance),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        match run() {
            Outcome::Pass(d) => println!("PASS  {name}: {d}"),
            Outcome::Skip(d) => println!("SKIP  {name}: {d}"),
            Outcome::Fail(d) => {
                failed += 1;
                println!("FAIL  {name}: {d}");
            }
        }
    }
    println!("acceptance: {} criteria, {failed} failed", criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
