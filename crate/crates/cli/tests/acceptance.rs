//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on failure.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use crossalign::alignment::{self, AlignmentConfig, GammaMode, GammaTriple, PATCH_SUBDIR};
use crossalign::augment::{self, AugmentConfig, SslSchedule};
use crossalign::imgio::{self, encode_code};
use crossalign::losses::{self, DecompFeatures, FeatureMap, GradientOperator, LossBreakdown, LossWeights};
use crossalign::metrics::{self, Aggregation, FusionTriple, QABF_PARAMS};
use crossalign::report;
use crossalign::{Channel, GrayRaster, Patch, RgbRaster};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<Report, String>;

struct Report {
    detail: String,
    /// Overrides wall time when only part of the work is under the limit.
    timed: Option<Duration>,
}

fn done(detail: impl Into<String>) -> Outcome {
    Ok(Report {
        detail: detail.into(),
        timed: None,
    })
}

macro_rules! check {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn fail<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn tempdir() -> Result<tempfile::TempDir, String> {
    tempfile::tempdir().map_err(fail)
}

fn binary() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_crossalign"));
    cmd.env_remove("CROSSALIGN_JOBS");
    cmd
}

fn random_codes(rng: &mut ChaCha8Rng, w: u32, h: u32) -> RgbRaster {
    RgbRaster::from_fn(w, h, |_, _| [0; 3].map(|_: u8| rng.random::<u8>() as f64 / 255.0)).unwrap()
}

fn smooth_noise(rng: &mut ChaCha8Rng, w: u32, h: u32, lo: f64, hi: f64) -> GrayRaster {
    let (fx, fy, ph) = (rng.random_range(0.03..0.3), rng.random_range(0.03..0.3), rng.random_range(0.0..6.0));
    GrayRaster::from_fn(w, h, |x, y| {
        let u = 0.5 + 0.3 * ((x as f64 * fx + ph).sin() * (y as f64 * fy).cos()) + rng.random_range(-0.2..0.2);
        let v = lo + (hi - lo) * u.clamp(0.0, 1.0);
        encode_code(v) as f64 / 255.0
    })
    .unwrap()
}

// 1 -----------------------------------------------------------------------

fn gamma_identity_and_fixed_points() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let tmp = tempdir()?;
    for i in 0..50 {
        let (w, h) = (rng.random_range(1..=64), rng.random_range(1..=64));
        let img = random_codes(&mut rng, w, h);
        let out = alignment::apply_gamma(&img, &GammaTriple::IDENTITY).map_err(fail)?;
        check!(out == img, "image {i}: identity gamma changed pixel values");
        let (a, b) = (tmp.path().join("a.png"), tmp.path().join("b.png"));
        imgio::save_rgb(&img, &a).map_err(fail)?;
        imgio::save_rgb(&out, &b).map_err(fail)?;
        check!(fs::read(&a).map_err(fail)? == fs::read(&b).map_err(fail)?, "image {i}: encoded bytes differ");
    }
    let ramp = RgbRaster::from_fn(256, 1, |x, _| [x as f64 / 255.0; 3]).unwrap();
    for i in 0..20 {
        let g = [0; 3].map(|_: u8| 2f64.powf(rng.random_range(-4.0..4.0)));
        let triple = GammaTriple::new(g[0], g[1], g[2]).map_err(fail)?;
        let out = alignment::apply_gamma(&ramp, &triple).map_err(fail)?;
        let (lo, hi) = (out.pixel(0, 0), out.pixel(255, 0));
        check!(
            lo.iter().all(|&v| encode_code(v) == 0) && hi.iter().all(|&v| encode_code(v) == 255),
            "triple {i} {g:?} moved an endpoint: {lo:?} {hi:?}"
        );
    }
    done("50 identity images byte-identical, endpoints fixed for 20 triples")
}

// 2 and 3 -----------------------------------------------------------------

const GAMMA_TRIPLES: [[f64; 3]; 4] = [[0.4, 0.7, 1.5], [0.7, 1.5, 2.5], [1.5, 2.5, 0.4], [2.5, 0.4, 0.7]];

/// Content range on which `v -> v^gamma` spreads codes apart, so the
/// synthetic external set keeps every distinct target code.
fn expanding_range(gamma: f64) -> (f64, f64) {
    if gamma < 1.0 {
        (0.03, gamma.powf(1.0 / (1.0 - gamma)).min(0.3))
    } else {
        ((1.0 / gamma).powf(1.0 / (gamma - 1.0)).max(0.45), 0.95)
    }
}

struct GammaDataset {
    truth: [f64; 3],
    target: PathBuf,
    external: PathBuf,
    out: PathBuf,
}

fn build_gamma_dataset(root: &Path, index: usize) -> Result<GammaDataset, String> {
    let truth = GAMMA_TRIPLES[index];
    let mut rng = ChaCha8Rng::seed_from_u64(200 + index as u64);
    let ranges = truth.map(expanding_range);
    let inverse = GammaTriple::new(1.0 / truth[0], 1.0 / truth[1], 1.0 / truth[2]).map_err(fail)?;
    let base = root.join(format!("set{index}"));
    let (target, external) = (base.join("target"), base.join("external"));
    fs::create_dir_all(&target).map_err(fail)?;
    fs::create_dir_all(&external).map_err(fail)?;
    for i in 0..4 {
        let planes: Vec<GrayRaster> = ranges.iter().map(|&(lo, hi)| smooth_noise(&mut rng, 128, 128, lo, hi)).collect();
        let img = RgbRaster::new(
            128,
            128,
            [planes[0].data().to_vec(), planes[1].data().to_vec(), planes[2].data().to_vec()],
        )
        .map_err(fail)?;
        imgio::save_rgb(&img, target.join(format!("t{i}.png"))).map_err(fail)?;
        let shifted = alignment::apply_gamma(&img, &inverse).map_err(fail)?;
        imgio::save_rgb(&shifted, external.join(format!("e{i}.png"))).map_err(fail)?;
    }
    Ok(GammaDataset {
        truth,
        target,
        external,
        out: base.join("aligned"),
    })
}

fn align_mean_exact(d: &GammaDataset) -> Result<alignment::AlignmentRun, String> {
    // every patch is kept so the fit sees the whole shifted population
    let mut config = AlignmentConfig::new(16);
    config.gamma_mode = GammaMode::MeanExact;
    alignment::align_dataset(&d.external, &d.target, &d.out, &config).map_err(fail)
}

fn gamma_inversion() -> Outcome {
    let tmp = tempdir()?;
    let mut worst_rel = 0.0f64;
    let mut worst_after = 0.0f64;
    for index in 0..GAMMA_TRIPLES.len() {
        let d = build_gamma_dataset(tmp.path(), index)?;
        let run = align_mean_exact(&d)?;
        for c in Channel::ALL {
            let (got, want) = (run.report.gamma.get(c), d.truth[c.index()]);
            let rel = ((got - want) / want).abs();
            worst_rel = worst_rel.max(rel);
            check!(rel <= 0.02, "set {index} {c:?}: gamma {got} vs {want} ({:.3}%)", rel * 100.0);
            let after = run.report.abs_diff_after(c);
            worst_after = worst_after.max(after);
            check!(after <= 0.5, "set {index} {c:?}: after-diff {after}");
        }
    }
    done(format!(
        "gammas {{0.4,0.7,1.5,2.5}} on every channel; worst error {:.3}%, worst after-diff {:.2e}",
        worst_rel * 100.0,
        worst_after
    ))
}

fn distribution_reproduction() -> Outcome {
    let tmp = tempdir()?;
    let mut worst = 0.0f64;
    for index in 0..GAMMA_TRIPLES.len() {
        let d = build_gamma_dataset(tmp.path(), index)?;
        align_mean_exact(&d)?;
        let cmp = report::distribution_compare(&d.target, &d.external, &d.out.join(PATCH_SUBDIR)).map_err(fail)?;
        for c in Channel::ALL {
            let ch = cmp.channel(c);
            let ratio = ch.distance_after / ch.distance_before;
            worst = worst.max(ratio);
            check!(
                ch.distance_after < 0.25 * ch.distance_before,
                "set {index} {c:?}: after {} vs before {}",
                ch.distance_after,
                ch.distance_before
            );
        }
    }
    done(format!("worst after/before distance ratio {worst:.4}"))
}

// 4 -----------------------------------------------------------------------

fn code_sums(p: &Patch) -> [i64; 3] {
    let planes = p.raster.planes();
    [0, 1, 2].map(|c| planes[c].iter().map(|&v| encode_code(v) as i64).sum())
}

fn top_k_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut tie_sets = 0;
    for set in 0..200 {
        let n: usize = rng.random_range(10..=500);
        let target_codes: [u8; 3] = [0; 3].map(|_: u8| rng.random_range(60..200));
        let targets: Vec<Patch> = (0..rng.random_range(1..4))
            .map(|i| Patch {
                raster: RgbRaster::constant(8, 8, target_codes.map(|c| c as f64 / 255.0)).unwrap(),
                source_id: format!("target{i}"),
                origin: (0, 0),
            })
            .collect();
        let mut patches: Vec<Patch> = Vec::with_capacity(n);
        for i in 0..n {
            let provenance = (format!("src{}", rng.random_range(0..5)), (i as u32 * 8, rng.random_range(0..4u32) * 8));
            let raster = match rng.random_range(0..4) {
                // duplicate content, different provenance
                0 if i > 0 => patches[rng.random_range(0..i)].raster.clone(),
                // same |offset| multiset on permuted channels: equal diffs, different content
                1 => {
                    let mut d = [rng.random_range(0..40i32), rng.random_range(0..40), rng.random_range(0..40)];
                    let r = rng.random_range(0..3);
                    d.rotate_left(r);
                    let codes = [0, 1, 2].map(|c| {
                        let sign = if rng.random_bool(0.5) { 1 } else { -1 };
                        (target_codes[c] as i32 + sign * d[c]) as f64 / 255.0
                    });
                    RgbRaster::constant(8, 8, codes).unwrap()
                }
                _ => {
                    let base: [u8; 3] = [0; 3].map(|_: u8| rng.random_range(20..230));
                    RgbRaster::from_fn(8, 8, |_, _| base.map(|b| (b + rng.random_range(0..16)) as f64 / 255.0)).unwrap()
                }
            };
            patches.push(Patch {
                raster,
                source_id: provenance.0,
                origin: provenance.1,
            });
        }
        let k = rng.random_range(1..=n);

        // scaled by pixel count and target count the diff is an exact integer
        let nt = targets.len() as i64;
        let t_sum = targets.iter().map(code_sums).fold([0i64; 3], |a, s| [a[0] + s[0], a[1] + s[1], a[2] + s[2]]);
        let mut ranked: Vec<(i64, String, (u32, u32))> = patches
            .iter()
            .map(|p| {
                let s = code_sums(p);
                ((0..3).map(|c| (s[c] * nt - t_sum[c]).abs()).sum(), p.source_id.clone(), p.origin)
            })
            .collect();
        ranked.sort();
        if ranked.windows(2).any(|w| w[0].0 == w[1].0) {
            tie_sets += 1;
        }
        let want: Vec<(String, (u32, u32))> = ranked[..k].iter().map(|r| (r.1.clone(), r.2)).collect();

        let stats = alignment::target_stats(&targets).map_err(fail)?;
        let got: Vec<(String, (u32, u32))> = alignment::select_top_k(&patches, &stats, k)
            .map_err(fail)?
            .into_iter()
            .map(|r| (r.patch.source_id, r.patch.origin))
            .collect();
        check!(got == want, "set {set} (n={n}, k={k}): selection differs from the oracle");
    }
    done(format!("200 sets agree exactly; {tie_sets} contained duplicated diffs"))
}

// 5 -----------------------------------------------------------------------

fn metric_identities() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let constant = GrayRaster::constant(48, 40, 0.37).unwrap();
    check!(metrics::entropy(&constant) == 0.0, "EN(constant) != 0");
    let ramp = GrayRaster::from_fn(256, 4, |x, _| x as f64 / 255.0).unwrap();
    let en = metrics::entropy(&ramp);
    check!((en - 8.0).abs() <= 1e-9, "EN(ramp) = {en}");

    for i in 0..5 {
        let c = GrayRaster::constant(40, 40, rng.random_range(0.0..1.0)).unwrap();
        let sd = metrics::std_dev(&c);
        let sf = metrics::spatial_frequency(&c).map_err(fail)?;
        let ag = metrics::average_gradient(&c).map_err(fail)?;
        check!(sd.abs() <= 1e-12 && sf.abs() <= 1e-12 && ag.abs() <= 1e-12, "constant {i}: {sd} {sf} {ag}");

        let x = smooth_noise(&mut rng, 64, 64, 0.0, 1.0);
        let (en, mi) = (metrics::entropy(&x), metrics::mutual_information(&x, &x).map_err(fail)?);
        check!((mi - en).abs() <= 1e-9, "image {i}: MI(X,X) {mi} vs EN {en}");
        let s = metrics::ssim(&x, &x).map_err(fail)?;
        check!((s - 1.0).abs() <= 1e-9, "image {i}: SSIM(X,X) = {s}");

        let a = smooth_noise(&mut rng, 64, 64, 0.0, 0.5);
        let b = smooth_noise(&mut rng, 64, 64, 0.0, 0.5);
        let sum: Vec<f64> = a.data().iter().zip(b.data()).map(|(p, q)| p + q).collect();
        let f = GrayRaster::new(64, 64, sum).map_err(fail)?;
        let scd = metrics::scd(&FusionTriple::new(a, b, f).map_err(fail)?);
        check!((scd - 2.0).abs() <= 1e-9, "image {i}: SCD(F=A+B) = {scd}");

        let same = FusionTriple::new(x.clone(), x.clone(), x.clone()).map_err(fail)?;
        let vif = metrics::vif(&same, Aggregation::Sum).map_err(fail)?;
        check!((vif - 2.0).abs() <= 1e-6, "image {i}: VIF(F=A=B) = {vif}");
        let q = metrics::qabf(&same).map_err(fail)?;
        let perfect = QABF_PARAMS.strength_score(1.0) * QABF_PARAMS.orientation_score(1.0);
        check!((q - perfect).abs() <= 1e-6, "image {i}: Qabf = {q}, expected {perfect}");
    }
    done("EN/SD/SF/AG/MI/SSIM/SCD/VIF/Qabf identities hold on 5 random images")
}

// 6 -----------------------------------------------------------------------

fn random_fmap(rng: &mut ChaCha8Rng) -> FeatureMap {
    FeatureMap::new(3, 5, 4, (0..60).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn recomposes(b: &LossBreakdown) -> bool {
    let sum: f64 = b.terms.iter().map(|t| t.weight * t.value).sum();
    (b.total - sum).abs() <= 1e-12
}

fn loss_identities() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let mut breakdowns = 0;
    for i in 0..5 {
        let x = smooth_noise(&mut rng, 40, 36, 0.0, 1.0);
        let rec = losses::recon_loss(&x, &x, 1.0).map_err(fail)?;
        check!(rec == 0.0, "image {i}: recon_loss(I,I) = {rec}");

        let m = random_fmap(&mut rng);
        let same = DecompFeatures {
            hf_ir: m.clone(),
            hf_vis: m.clone(),
            lf_ir: m.clone(),
            lf_vis: m,
        };
        let dec = losses::decomp_loss(&same, 1.01).map_err(fail)?;
        check!((dec - 1.0 / 2.01).abs() <= 1e-12, "decomp_loss(identical) = {dec}");

        // identical sources, and a zero source under a textured one
        let zero = GrayRaster::constant(40, 36, 0.0).unwrap();
        for op in [GradientOperator::Sobel, GradientOperator::ForwardDiff] {
            let a = losses::sim_loss(&x, &x, &x, 10.0, op).map_err(fail)?;
            let b = losses::sim_loss(&zero, &x, &x, 10.0, op).map_err(fail)?;
            check!(a == 0.0 && b == 0.0, "sim_loss at the max = {a}, {b} ({op})");
        }

        let theta = rng.random_range(0.0..1.0);
        let ssl = augment::ssl_loss(&x, &x, theta).map_err(fail)?;
        check!(ssl == 0.0, "ssl_loss(v,v) = {ssl}");

        let weights = LossWeights {
            alpha1: rng.random_range(0.0..5.0),
            alpha2: rng.random_range(0.0..5.0),
            alpha3: rng.random_range(0.0..5.0),
            alpha4: rng.random_range(0.0..5.0),
            lambda: rng.random_range(0.0..3.0),
            mu: rng.random_range(0.0..20.0),
            zeta: rng.random_range(1.001..3.0),
        };
        let features = DecompFeatures {
            hf_ir: random_fmap(&mut rng),
            hf_vis: random_fmap(&mut rng),
            lf_ir: random_fmap(&mut rng),
            lf_vis: random_fmap(&mut rng),
        };
        let (ir, vis) = (smooth_noise(&mut rng, 40, 36, 0.0, 1.0), smooth_noise(&mut rng, 40, 36, 0.0, 1.0));
        let fused = smooth_noise(&mut rng, 40, 36, 0.0, 1.0);
        let noisy = smooth_noise(&mut rng, 40, 36, 0.0, 1.0);
        let recon = losses::total_recon_loss((&ir, &noisy), (&vis, &fused), &features, &weights).map_err(fail)?;
        let triple = FusionTriple::new(ir, vis, fused).map_err(fail)?;
        let cfg = AugmentConfig {
            crop_size: 24,
            seed: i,
            ..AugmentConfig::default()
        };
        let schedule = SslSchedule::new(0.1, 50).map_err(fail)?;
        let (views, _) = augment::generate_views(triple.fused(), &cfg, &schedule, 10).map_err(fail)?;
        let fusion = losses::total_fusion_loss(&triple, &features, &views, 0.07, &weights, GradientOperator::Sobel)
            .map_err(fail)?;
        check!(recomposes(&recon) && recomposes(&fusion), "breakdown {i} does not recompose");
        breakdowns += 2;
    }
    done(format!("identities hold; {breakdowns} breakdowns recompose within 1e-12"))
}

// 7 -----------------------------------------------------------------------

fn schedule_contract() -> Outcome {
    let theta_init = 0.1;
    for m_total in [1u64, 2, 7, 120] {
        let s = SslSchedule::new(theta_init, m_total).map_err(fail)?;
        let at = |m| augment::theta_at(&s, m).map_err(fail);
        check!(at(0)? == theta_init, "M={m_total}: theta(0) != theta_init");
        check!(at(m_total)?.abs() <= 1e-12, "M={m_total}: theta(M) = {}", at(m_total)?);
        if m_total % 2 == 0 {
            let mid = at(m_total / 2)?;
            check!((mid - theta_init / 2.0).abs() <= 1e-12, "M={m_total}: theta(M/2) = {mid}");
        }
        // cosine symmetry about the midpoint also covers odd M
        for m in 0..=m_total {
            let pair = at(m)? + at(m_total - m)?;
            check!((pair - theta_init).abs() <= 1e-12, "M={m_total}: theta({m}) + theta(M-{m}) = {pair}");
            if m > 0 {
                check!(at(m)? <= at(m - 1)?, "M={m_total}: theta increases at {m}");
            }
        }
    }
    done("endpoints, midpoint and monotonicity hold for M in {1, 2, 7, 120}")
}

// 8 -----------------------------------------------------------------------

fn defaults_honored() -> Outcome {
    let tmp = tempdir()?;
    let out = binary().arg("config").current_dir(tmp.path()).output().map_err(fail)?;
    check!(out.status.success(), "config exited with {:?}", out.status.code());
    let text = String::from_utf8(out.stdout).map_err(fail)?;
    let values: HashMap<&str, &str> = text.lines().filter_map(|l| l.split_once(" = ")).collect();
    let expect = [
        ("alpha1", 2.0),
        ("alpha2", 2.0),
        ("alpha3", 1.0),
        ("alpha4", 1.0),
        ("mu", 10.0),
        ("zeta", 1.01),
        ("theta_init", 0.1),
        ("patch_size", 64.0),
    ];
    for (key, want) in expect {
        let got: f64 = values
            .get(key)
            .ok_or_else(|| format!("{key} missing from config output"))?
            .parse()
            .map_err(fail)?;
        check!(got == want, "{key} = {got}, expected {want}");
    }
    done("alpha=(2,2,1,1), mu=10, zeta=1.01, theta_init=0.1, patch_size=64")
}

// 9 -----------------------------------------------------------------------

fn metrics_determinism_and_throughput() -> Outcome {
    let tmp = tempdir()?;
    let dir = tmp.path().join("triples");
    fs::create_dir_all(&dir).map_err(fail)?;
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    for i in 0..40 {
        let ir = smooth_noise(&mut rng, 640, 480, 0.0, 1.0);
        let vis = smooth_noise(&mut rng, 640, 480, 0.1, 0.9);
        let fused: Vec<f64> = ir.data().iter().zip(vis.data()).map(|(a, b)| 0.5 * (a + b)).collect();
        let fused = GrayRaster::new(640, 480, fused).map_err(fail)?;
        for (role, img) in [("ir", &ir), ("vis", &vis), ("fused", &fused)] {
            imgio::save_gray(img, dir.join(format!("scene{i:02}_{role}.png"))).map_err(fail)?;
        }
    }
    let mut slowest = Duration::ZERO;
    let mut tables = Vec::new();
    for run in 0..2 {
        let csv = tmp.path().join(format!("run{run}.csv"));
        let start = Instant::now();
        let out = binary()
            .args(["metrics", "--jobs", "1", "--dir"])
            .arg(&dir)
            .arg("--out")
            .arg(&csv)
            .output()
            .map_err(fail)?;
        let elapsed = start.elapsed();
        check!(out.status.success(), "metrics run {run} failed: {}", String::from_utf8_lossy(&out.stderr));
        slowest = slowest.max(elapsed);
        tables.push(fs::read(&csv).map_err(fail)?);
    }
    check!(tables[0] == tables[1], "the two metric tables differ");
    let rows = tables[0].iter().filter(|&&b| b == b'\n').count();
    check!(rows == 42, "expected header + 40 rows + MEAN, got {rows} lines");
    check!(slowest < Duration::from_secs(60), "slowest run took {slowest:?}");
    Ok(Report {
        detail: format!("40 triples, byte-identical tables, slowest single-worker run {:.2}s", slowest.as_secs_f64()),
        timed: Some(slowest),
    })
}

// 10 ----------------------------------------------------------------------

fn table(mean: [f64; 9]) -> String {
    let row = |stem: &str| {
        let cells: Vec<String> = mean.iter().map(|v| v.to_string()).collect();
        format!("{stem},{}\n", cells.join(","))
    };
    format!("{}\n{}{}", report::METRIC_HEADER, row("only"), row("MEAN"))
}

fn degradation_arithmetic() -> Outcome {
    let tmp = tempdir()?;
    let (id, ood) = (tmp.path().join("id.csv"), tmp.path().join("ood.csv"));
    fs::write(&id, table([6.5, 2.8, 40.0, 6.13, 2.5, 0.8, 1.6, 0.5, 0.0])).map_err(fail)?;
    fs::write(&ood, table([6.2, 2.1, 35.0, 4.56, 2.0, 0.6, 1.2, 0.45, 0.3])).map_err(fail)?;

    // (ood - id) / id * 100, worked out by hand with exact fractions
    let hand = [
        Some(-4.615384615384615),
        Some(-25.0),
        Some(-12.5),
        Some(-25.611745513866232),
        Some(-20.0),
        Some(-25.0),
        Some(-25.0),
        Some(-10.0),
        None,
    ];
    let rows = report::degradation_report(&id, &ood, "demo").map_err(fail)?;
    check!(rows.len() == 9, "expected 9 rows, got {}", rows.len());
    for (row, want) in rows.iter().zip(hand) {
        match (row.percent_change, want) {
            (Some(got), Some(w)) => check!((got - w).abs() <= 1e-9, "{}: {got} vs {w}", row.metric),
            (None, None) => {}
            (got, w) => return Err(format!("{}: {got:?} vs {w:?}", row.metric)),
        }
    }
    let same = report::degradation_report(&id, &id, "demo").map_err(fail)?;
    check!(
        same.iter().all(|r| r.percent_change.is_none_or(|p| p == 0.0)),
        "identical tables gave a non-zero change"
    );

    let out = binary()
        .args(["report", "degrade", "--id"])
        .arg(&ood)
        .arg("--ood")
        .arg(&ood)
        .output()
        .map_err(fail)?;
    check!(out.status.success(), "report degrade failed");
    let text = String::from_utf8(out.stdout).map_err(fail)?;
    for line in text.lines().skip(1) {
        let last: f64 = line.rsplit(',').next().unwrap_or("").parse().map_err(fail)?;
        check!(last == 0.0, "CLI identical tables: {line}");
    }
    done("8 hand-computed changes match, zero base flagged undefined, identical tables all 0%")
}

// -------------------------------------------------------------------------

struct Criterion {
    number: u8,
    title: &'static str,
    limit: Duration,
    run: fn() -> Outcome,
}

fn main() {
    let secs = Duration::from_secs;
    let criteria = [
        Criterion { number: 1, title: "gamma identity and fixed points", limit: secs(5), run: gamma_identity_and_fixed_points },
        Criterion { number: 2, title: "gamma inversion oracle", limit: secs(30), run: gamma_inversion },
        Criterion { number: 3, title: "distribution alignment on synthetic data", limit: secs(30), run: distribution_reproduction },
        Criterion { number: 4, title: "top-k brute-force oracle", limit: secs(10), run: top_k_oracle },
        Criterion { number: 5, title: "metric identity suite", limit: secs(20), run: metric_identities },
        Criterion { number: 6, title: "loss identities", limit: secs(10), run: loss_identities },
        Criterion { number: 7, title: "schedule contract", limit: secs(1), run: schedule_contract },
        Criterion { number: 8, title: "default configuration", limit: secs(1), run: defaults_honored },
        Criterion { number: 9, title: "metrics determinism and throughput", limit: secs(60), run: metrics_determinism_and_throughput },
        Criterion { number: 10, title: "degradation report arithmetic", limit: secs(10), run: degradation_arithmetic },
    ];

    let mut failures = 0;
    for c in &criteria {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(c.run).unwrap_or_else(|_| Err("panicked".into()));
        let wall = start.elapsed();
        let (verdict, detail, elapsed) = match outcome {
            Ok(r) => {
                let elapsed = r.timed.unwrap_or(wall);
                if elapsed <= c.limit {
                    ("PASS", r.detail, elapsed)
                } else {
                    ("FAIL", format!("too slow ({})", r.detail), elapsed)
                }
            }
            Err(why) => ("FAIL", why, wall),
        };
        if verdict == "FAIL" {
            failures += 1;
        }
        println!(
            "criterion {:>2} {verdict} [{:.2}s / {}s] {}: {detail}",
            c.number,
            elapsed.as_secs_f64(),
            c.limit.as_secs(),
            c.title
        );
    }
    println!("acceptance: {} passed, {failures} failed", criteria.len() - failures);
    if failures > 0 {
        std::process::exit(1);
    }
}
