use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use crossalign::alignment::{self, SkippedFile};
use crossalign::augment::{self, SslSchedule, ViewRecord};
use crossalign::imgio;
use crossalign::losses::{self, DecompFeatures, FeatureMap};
use crossalign::metrics::{self, FusionTriple, MetricReport};
use crossalign::report;
use rayon::prelude::*;
use serde_json::json;

use crate::config::RunConfig;
use crate::{AlignArgs, AugmentArgs, CliError, DegradeArgs, LossArgs, MetricsArgs, StatsArgs};

pub const VIEWS_JSONL: &str = "views.jsonl";
pub const DISTRIBUTION_CSV: &str = "distribution.csv";
pub const DISTRIBUTION_JSON: &str = "distribution_summary.json";

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)
            .map_err(|e| CliError::Io(format!("cannot create {}: {e}", parent.display())))?;
    }
    fs::write(path, contents).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
}

fn warn_skipped(skipped: &[SkippedFile]) {
    for s in skipped {
        eprintln!("warning: skipped {}: {}", s.path.display(), s.reason);
    }
}

pub fn align(args: &AlignArgs, config: &mut RunConfig) -> Result<(), CliError> {
    if let Some(k) = args.k {
        config.k = Some(k);
    }
    if let Some(v) = args.patch_size {
        config.patch_size = v;
    }
    if let Some(v) = args.gamma_mode {
        config.gamma_mode = v;
    }
    if let Some(v) = args.crop_mode {
        config.crop_mode = v;
    }
    if let Some(v) = args.seed {
        config.seed = v;
    }
    let k = config
        .k
        .ok_or_else(|| CliError::Usage("align needs --k (or `k` in the config file)".into()))?;
    config.validate()?;

    let run = alignment::align_dataset(&args.external, &args.target, &args.out, &config.alignment(k))?;
    warn_skipped(&run.skipped);
    let g = run.report.gamma;
    println!(
        "aligned {} of {} candidate patches into {}",
        run.written.len(),
        run.report.candidate_count,
        args.out.display()
    );
    println!("gamma r={} g={} b={}", g.gamma_r, g.gamma_g, g.gamma_b);
    println!("skipped {} file(s)", run.skipped.len());
    Ok(())
}

pub fn augment(args: &AugmentArgs, config: &mut RunConfig) -> Result<(), CliError> {
    if let Some(v) = args.seed {
        config.seed = v;
    }
    if let Some(v) = args.crop_size {
        config.crop_size = v;
    }
    if let Some(v) = args.blur_sigma {
        config.blur_sigma = v;
    }
    if let Some(m) = args.total {
        config.total_steps = Some(m);
    }
    let total = config
        .total_steps
        .ok_or_else(|| CliError::Usage("augment needs --total (or `total_steps` in the config file)".into()))?;
    config.validate()?;
    let schedule = config.schedule(total)?;
    augment::theta_at(&schedule, args.step)?;

    let paths = imgio::list_images(&args.input)?;
    fs::create_dir_all(&args.out)
        .map_err(|e| CliError::Io(format!("cannot create {}: {e}", args.out.display())))?;
    let base = config.augment();
    let results: Vec<crossalign::Result<ViewRecord>> = paths
        .par_iter()
        .enumerate()
        .map(|(i, path)| {
            let fused = imgio::load_gray(path)?;
            let mut cfg = base.clone();
            cfg.seed = augment::batch_seed(base.seed, i);
            let (views, loss) = augment::generate_views(&fused, &cfg, &schedule, args.step)?;
            let stem = imgio::sanitized_stem(path);
            imgio::save_gray(&views.weak, args.out.join(format!("{stem}_weak.png")))?;
            imgio::save_gray(&views.aggressive, args.out.join(format!("{stem}_aggr.png")))?;
            let r = views.crop_rect;
            Ok(ViewRecord {
                stem,
                rect: [r.x, r.y, r.w, r.h],
                sigma: views.blur_sigma,
                m: args.step,
                theta: augment::theta_at(&schedule, args.step)?,
                ssl_loss: loss,
            })
        })
        .collect();

    let mut lines = String::new();
    let mut skipped = Vec::new();
    for (path, result) in paths.iter().zip(results) {
        match result {
            Ok(record) => {
                lines.push_str(&serde_json::to_string(&record).expect("record serializes"));
                lines.push('\n');
            }
            Err(e) if e.is_io() => return Err(e.into()),
            Err(e) => skipped.push(SkippedFile {
                path: path.clone(),
                reason: e.to_string(),
            }),
        }
    }
    warn_skipped(&skipped);
    write(&args.out.join(VIEWS_JSONL), &lines)?;
    println!(
        "wrote {} view pair(s) to {}; {} warning(s)",
        paths.len() - skipped.len(),
        args.out.display(),
        skipped.len()
    );
    Ok(())
}

const ROLES: [&str; 3] = ["ir", "vis", "fused"];

fn valid_stem(stem: &str) -> bool {
    !stem.is_empty() && stem.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

/// Groups `{stem}_{ir,vis,fused}.png` files; everything else is reported.
fn match_triples(dir: &Path) -> Result<(Vec<(String, [PathBuf; 3])>, Vec<String>), CliError> {
    let mut groups: BTreeMap<String, [Option<PathBuf>; 3]> = BTreeMap::new();
    let mut warnings = Vec::new();
    for path in imgio::list_images(dir)? {
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string();
        let matched = name.strip_suffix(".png").and_then(|base| {
            ROLES.iter().enumerate().find_map(|(i, role)| {
                base.strip_suffix(&format!("_{role}"))
                    .filter(|stem| valid_stem(stem))
                    .map(|stem| (stem.to_string(), i))
            })
        });
        match matched {
            Some((stem, role)) => groups.entry(stem).or_default()[role] = Some(path),
            None => warnings.push(format!("ignoring {name}: not a {{stem}}_ir/_vis/_fused.png file")),
        }
    }
    let mut triples = Vec::new();
    for (stem, [ir, vis, fused]) in groups {
        match (ir, vis, fused) {
            (Some(a), Some(b), Some(c)) => triples.push((stem, [a, b, c])),
            (a, b, c) => {
                let missing: Vec<&str> = [a, b, c]
                    .iter()
                    .zip(ROLES)
                    .filter(|(p, _)| p.is_none())
                    .map(|(_, r)| r)
                    .collect();
                warnings.push(format!("ignoring stem {stem}: missing {}", missing.join(", ")));
            }
        }
    }
    Ok((triples, warnings))
}

fn load_triple(paths: &[PathBuf; 3]) -> crossalign::Result<FusionTriple> {
    FusionTriple::new(
        imgio::load_gray(&paths[0])?,
        imgio::load_gray(&paths[1])?,
        imgio::load_gray(&paths[2])?,
    )
}

pub fn metrics(args: &MetricsArgs, config: &RunConfig) -> Result<(), CliError> {
    config.validate()?;
    let (triples, warnings) = match_triples(&args.dir)?;
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    if triples.is_empty() {
        return Err(CliError::Validation(format!(
            "no {{stem}}_ir/_vis/_fused.png triples found in {}",
            args.dir.display()
        )));
    }
    let results: Vec<crossalign::Result<MetricReport>> = triples
        .par_iter()
        .map(|(_, paths)| load_triple(paths).and_then(|t| metrics::evaluate_all(&t, &config.metrics)))
        .collect();

    let mut reports = Vec::new();
    let mut skipped = 0;
    for ((stem, _), result) in triples.iter().zip(results) {
        match result {
            Ok(r) => reports.push((stem.clone(), r)),
            Err(e) if e.is_io() => return Err(e.into()),
            Err(e) => {
                eprintln!("warning: skipped triple {stem}: {e}");
                skipped += 1;
            }
        }
    }
    if reports.is_empty() {
        return Err(CliError::Validation("no triple could be evaluated".into()));
    }
    write(&args.out, &report::metric_table(&reports)?)?;
    println!(
        "evaluated {} triple(s) into {}; {} warning(s)",
        reports.len(),
        args.out.display(),
        warnings.len() + skipped
    );
    Ok(())
}

pub fn loss(args: &LossArgs, config: &mut RunConfig) -> Result<(), CliError> {
    if let Some(op) = args.gradient {
        config.gradient_operator = op;
    }
    if let Some(m) = args.total {
        config.total_steps = Some(m);
    }
    config.validate()?;
    let total = match (config.total_steps, args.step) {
        (Some(m), _) => m,
        // step 0 gives theta_init for every schedule length
        (None, 0) => 1,
        (None, _) => return Err(CliError::Usage("--step needs --total (or `total_steps`)".into())),
    };
    let schedule: SslSchedule = config.schedule(total)?;
    let theta = augment::theta_at(&schedule, args.step)?;

    let stem = &args.triple;
    let image_dir = args.dir.as_deref().unwrap_or(&args.features);
    let image = |suffix: &str| imgio::load_gray(image_dir.join(format!("{stem}_{suffix}.png")));
    let triple = FusionTriple::new(image("ir")?, image("vis")?, image("fused")?)?;
    let fmap = |name: &str| FeatureMap::read(args.features.join(format!("{stem}_{name}.fmap")));
    let features = DecompFeatures {
        hf_ir: fmap("hf_ir")?,
        hf_vis: fmap("hf_vis")?,
        lf_ir: fmap("lf_ir")?,
        lf_vis: fmap("lf_vis")?,
    };

    let (views, _) = augment::generate_views(triple.fused(), &config.augment(), &schedule, args.step)?;
    let fusion = losses::total_fusion_loss(
        &triple,
        &features,
        &views,
        theta,
        &config.weights,
        config.gradient_operator,
    )?;

    let rec_paths = ["ir_rec", "vis_rec"].map(|s| image_dir.join(format!("{stem}_{s}.png")));
    let reconstruction = if rec_paths.iter().all(|p| p.exists()) {
        let (ir_rec, vis_rec) = (imgio::load_gray(&rec_paths[0])?, imgio::load_gray(&rec_paths[1])?);
        Some(losses::total_recon_loss(
            (triple.ir(), &ir_rec),
            (triple.vis(), &vis_rec),
            &features,
            &config.weights,
        )?)
    } else {
        None
    };

    let out = json!({
        "stem": stem,
        "step": args.step,
        "total_steps": total,
        "theta": theta,
        "gradient_operator": config.gradient_operator.to_string(),
        "weights": config.weights,
        "fusion": fusion,
        "reconstruction": reconstruction,
    });
    println!("{out}");
    Ok(())
}

pub fn degrade(args: &DegradeArgs) -> Result<(), CliError> {
    let rows = report::degradation_report(&args.id, &args.ood, &args.method)?;
    let csv = report::degradation_csv(&rows);
    match &args.out {
        Some(path) => write(path, &csv),
        None => {
            print!("{csv}");
            Ok(())
        }
    }
}

pub fn stats(args: &StatsArgs) -> Result<(), CliError> {
    let cmp = report::distribution_compare(&args.target, &args.before, &args.after)?;
    warn_skipped(&cmp.skipped);
    let summary = cmp.summary_json();
    if let Some(dir) = &args.out {
        write(&dir.join(DISTRIBUTION_CSV), &cmp.to_csv())?;
        write(&dir.join(DISTRIBUTION_JSON), &summary)?;
    }
    print!("{summary}");
    Ok(())
}
