use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::Args;
use rayon::prelude::*;

use livqual::classifier::{
    classify, classify_batch, fit_lda, load_model, mask_from_bits, mask_to_bits, save_model, Label,
};
use livqual::config::Config;
use livqual::evaluation::{
    breakdown_report, compute_rates, cross_validate, format_report_line, report_csv,
    DatasetManifest, EvaluationReport, Split,
};
use livqual::features::table::{FeatureRow, FeatureTable};
use livqual::features::{extract_with_diagnostics, QualityVector};
use livqual::image::{block_partition, load_image, save_image, GrayImage};
use livqual::preprocess::{estimate_orientation, segment_foreground};
use livqual::selection::{
    best_by_cardinality, curve_to_csv, exhaustive_select, load_subset, ranking_to_csv, save_subset,
};
use livqual::synth::make_liveness_corpus;
use livqual::textfmt::fmt_sig9;

/// Loads an extraction config from a config JSON or from the config embedded
/// in a model file; the default config when no path is given.
fn load_config(path: Option<&Path>) -> Result<Config> {
    let Some(path) = path else {
        return Ok(Config::default());
    };
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .with_context(|| format!("parsing config {}", path.display()))?;
    if value.get("covariance").is_some() {
        let (_, config) = load_model(path)?;
        Ok(config)
    } else {
        Ok(Config::load(path)?)
    }
}

fn parse_subset(raw: &str) -> Result<u16> {
    // Accept a subset.json path, a bit string, or a mask integer.
    let path = Path::new(raw);
    if path.exists() {
        let (_, score) = load_subset(path)?;
        return Ok(score.subset_mask);
    }
    mask_from_bits(raw)
        .ok_or_else(|| anyhow!("subset {raw:?} is neither a readable file nor a valid mask"))
}

#[derive(Args)]
pub struct ExtractArgs {
    /// Image file or directory of .pgm/.png images.
    #[arg(long, conflicts_with = "manifest")]
    input: Option<PathBuf>,
    /// Dataset manifest CSV (path,label,sensor,split,material,procedure).
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Extraction config JSON, or a model file whose embedded config is used.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output feature CSV.
    #[arg(long)]
    out: PathBuf,
    /// Sensor tag for rows extracted without a manifest.
    #[arg(long, default_value = "")]
    sensor: String,
    /// Dump per-image segmentation mask (PGM) and orientation field (CSV).
    #[arg(long)]
    debug_dir: Option<PathBuf>,
}

struct ExtractItem {
    path: String,
    label: Option<Label>,
    sensor: String,
    split: Option<Split>,
}

fn list_images(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut paths = Vec::new();
    for entry in fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
        let path = entry?.path();
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase());
        if matches!(ext.as_deref(), Some("pgm") | Some("png")) {
            paths.push(path);
        }
    }
    paths.sort();
    Ok(paths)
}

fn dump_debug(image: &GrayImage, config: &Config, dir: &Path, stem: &str) -> Result<()> {
    fs::create_dir_all(dir)?;
    let grid = block_partition(image, config.block_size)?;
    let mask = segment_foreground(image, &grid, &config.gabor)?;
    let debug = GrayImage::new(image.width(), image.height(), image.dpi(), mask.to_debug_image())?;
    save_image(&debug, dir.join(format!("{stem}.mask.pgm")))?;
    let field = estimate_orientation(image, &grid, &mask);
    fs::write(dir.join(format!("{stem}.orientation.csv")), field.to_csv())?;
    Ok(())
}

pub fn run_extract(args: ExtractArgs) -> Result<i32> {
    let config = load_config(args.config.as_deref())?;
    config.validate()?;

    let items: Vec<ExtractItem> = if let Some(manifest_path) = &args.manifest {
        let manifest = DatasetManifest::load(manifest_path)?;
        for (sensor, split, label, count) in manifest.summary() {
            eprintln!("manifest: {sensor} {} {label}: {count}", split.as_str());
        }
        manifest
            .rows
            .into_iter()
            .map(|row| ExtractItem {
                path: row.path,
                label: Some(row.label),
                sensor: row.sensor,
                split: Some(row.split),
            })
            .collect()
    } else if let Some(input) = &args.input {
        let paths = if input.is_dir() {
            list_images(input)?
        } else {
            vec![input.clone()]
        };
        paths
            .into_iter()
            .map(|p| ExtractItem {
                path: p.display().to_string(),
                label: None,
                sensor: args.sensor.clone(),
                split: None,
            })
            .collect()
    } else {
        bail!("one of --input or --manifest is required");
    };
    if items.is_empty() {
        bail!("no input images found");
    }

    let results: Vec<Result<QualityVector, String>> = items
        .par_iter()
        .map(|item| {
            load_image(&item.path)
                .map_err(|e| e.to_string())
                .and_then(|image| {
                    extract_with_diagnostics(&image, &config)
                        .map(|(vector, diag)| {
                            if diag.lcs1_fallback {
                                eprintln!(
                                    "note: {}: no reliable blocks, q_lcs1 fell back to 0.5",
                                    item.path
                                );
                            }
                            vector
                        })
                        .map_err(|e| e.to_string())
                })
        })
        .collect();

    let mut table = FeatureTable::default();
    let mut failures = 0usize;
    for (item, result) in items.iter().zip(results) {
        match result {
            Ok(vector) => {
                table.rows.push(FeatureRow {
                    path: item.path.clone(),
                    label: item.label,
                    sensor: item.sensor.clone(),
                    split: item.split,
                    vector,
                });
                if let Some(debug_dir) = &args.debug_dir {
                    let stem = Path::new(&item.path)
                        .file_stem()
                        .and_then(|s| s.to_str())
                        .unwrap_or("image")
                        .to_string();
                    let image = load_image(&item.path)?;
                    dump_debug(&image, &config, debug_dir, &stem)?;
                }
            }
            Err(message) => {
                failures += 1;
                eprintln!("skip: {}: {message}", item.path);
            }
        }
    }
    if table.rows.is_empty() {
        eprintln!("error: all {failures} images failed extraction");
        return Ok(1);
    }
    table.save(&args.out)?;
    eprintln!(
        "extracted {} images to {} ({failures} skipped)",
        table.rows.len(),
        args.out.display()
    );
    Ok(0)
}

#[derive(Args)]
pub struct SelectArgs {
    /// Development feature CSV (rows tagged split=dev are used when tags
    /// exist; all rows otherwise).
    #[arg(long)]
    dev: PathBuf,
    #[arg(long)]
    sensor: String,
    /// Best-subset JSON output.
    #[arg(long)]
    out: PathBuf,
    /// Full 1,023-row ranking CSV output.
    #[arg(long)]
    ranking: Option<PathBuf>,
    /// Best-ACE-per-cardinality curve CSV output.
    #[arg(long)]
    curve: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

fn dev_samples(table: &FeatureTable, sensor: &str) -> Result<livqual::classifier::LabeledSamples> {
    let filtered = table.filter_sensor(Some(sensor));
    if filtered.rows.is_empty() {
        bail!("no rows for sensor {sensor:?}");
    }
    let split = filtered.has_splits().then_some(Split::Dev);
    Ok(filtered.labeled_samples(split)?)
}

pub fn run_select(args: SelectArgs) -> Result<i32> {
    let config = load_config(args.config.as_deref())?;
    let table = FeatureTable::load(&args.dev)?;
    let samples = dev_samples(&table, &args.sensor)?;
    let result = exhaustive_select(&samples, &args.sensor, config.epsilon_scale)?;
    save_subset(&args.sensor, &result.best, &args.out)?;
    if let Some(path) = &args.ranking {
        fs::write(path, ranking_to_csv(&result.ranking))?;
    }
    if let Some(path) = &args.curve {
        fs::write(path, curve_to_csv(&best_by_cardinality(&result.ranking)))?;
    }
    println!(
        "best subset {} (|S|={}) loo ACE {:.2}% (FLR {:.2}%, FFR {:.2}%)",
        mask_to_bits(result.best.subset_mask),
        result.best.cardinality,
        result.best.loo_ace,
        result.best.loo_flr,
        result.best.loo_ffr
    );
    Ok(0)
}

#[derive(Args)]
pub struct TrainArgs {
    #[arg(long)]
    features: PathBuf,
    #[arg(long)]
    sensor: String,
    /// Subset JSON file, 10-char bit string, or mask integer.
    #[arg(long)]
    subset: String,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Split to train on when the table carries split tags.
    #[arg(long, default_value = "dev")]
    split: String,
}

pub fn run_train(args: TrainArgs) -> Result<i32> {
    let config = load_config(args.config.as_deref())?;
    let mask = parse_subset(&args.subset)?;
    let table = FeatureTable::load(&args.features)?.filter_sensor(Some(&args.sensor));
    if table.rows.is_empty() {
        bail!("no rows for sensor {:?}", args.sensor);
    }
    let split = if table.has_splits() {
        Some(Split::parse(&args.split).ok_or_else(|| anyhow!("bad --split {:?}", args.split))?)
    } else {
        None
    };
    let samples = table.labeled_samples(split)?;
    let model = fit_lda(
        &samples.vectors,
        &samples.labels,
        mask,
        &args.sensor,
        config.epsilon_scale,
    )?;
    save_model(&model, &config, &args.out)?;
    println!(
        "trained {} on {} samples, subset {}",
        args.out.display(),
        samples.len(),
        mask_to_bits(mask)
    );
    Ok(0)
}

#[derive(Args)]
pub struct ClassifyArgs {
    #[arg(long)]
    model: PathBuf,
    /// Single image; prints `path label score` and exits 0=real 1=fake.
    #[arg(long, conflicts_with = "features")]
    input: Option<PathBuf>,
    /// Feature CSV batch mode.
    #[arg(long)]
    features: Option<PathBuf>,
    /// Decisions CSV output (batch mode).
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn run_classify(args: ClassifyArgs) -> Result<i32> {
    let (model, config) = load_model(&args.model)?;
    if let Some(input) = &args.input {
        let image = load_image(input)?;
        let (vector, _) = extract_with_diagnostics(&image, &config)?;
        let decision = classify(&model, &vector)?;
        println!(
            "{} {} {}",
            input.display(),
            decision.label,
            fmt_sig9(decision.score)
        );
        return Ok(match decision.label {
            Label::Real => 0,
            Label::Fake => 1,
        });
    }
    let Some(features) = &args.features else {
        bail!("one of --input or --features is required");
    };
    let table = FeatureTable::load(features)?;
    let vectors: Vec<QualityVector> = table.rows.iter().map(|r| r.vector).collect();
    let decisions = classify_batch(&model, &vectors)?;
    let mut out = String::from("path,label,decision,score\n");
    for (row, decision) in table.rows.iter().zip(&decisions) {
        out.push_str(&format!(
            "{},{},{},{}\n",
            row.path,
            row.label.map(|l| l.as_str()).unwrap_or(""),
            decision.label,
            fmt_sig9(decision.score)
        ));
    }
    match &args.out {
        Some(path) => fs::write(path, out)?,
        None => print!("{out}"),
    }
    Ok(0)
}

#[derive(Args)]
pub struct EvaluateArgs {
    /// Decisions CSV with header `path,label,decision[,score]`.
    #[arg(long, conflicts_with_all = ["model", "features"])]
    decisions: Option<PathBuf>,
    #[arg(long, requires = "features")]
    model: Option<PathBuf>,
    #[arg(long)]
    features: Option<PathBuf>,
    /// Split to evaluate when the table carries split tags.
    #[arg(long, default_value = "test")]
    split: String,
    /// Machine-readable report CSV (`sensor,stage,flr,ffr,ace`).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "")]
    sensor: String,
    /// Per-group breakdown attribute: material or procedure.
    #[arg(long, value_parser = ["material", "procedure"])]
    breakdown: Option<String>,
    /// Manifest supplying the breakdown attributes, joined by path.
    #[arg(long)]
    manifest: Option<PathBuf>,
}

fn parse_decisions_csv(path: &Path) -> Result<Vec<(String, Label, Label)>> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading decisions {}", path.display()))?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| anyhow!("empty decisions file"))?;
    let columns: Vec<&str> = header.split(',').collect();
    if columns.len() < 3 || columns[0] != "path" || columns[1] != "label" || columns[2] != "decision"
    {
        bail!("decisions header must start with path,label,decision");
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() < 3 {
            bail!("decisions line {}: expected at least 3 fields", i + 2);
        }
        let label = Label::parse(fields[1])
            .ok_or_else(|| anyhow!("decisions line {}: bad label {:?}", i + 2, fields[1]))?;
        let decision = Label::parse(fields[2])
            .ok_or_else(|| anyhow!("decisions line {}: bad decision {:?}", i + 2, fields[2]))?;
        rows.push((fields[0].to_string(), label, decision));
    }
    if rows.is_empty() {
        bail!("decisions file has no rows");
    }
    Ok(rows)
}

pub fn run_evaluate(args: EvaluateArgs) -> Result<i32> {
    let (paths, truths, decisions, sensor): (Vec<String>, Vec<Label>, Vec<Label>, String) =
        if let Some(decisions_path) = &args.decisions {
            let rows = parse_decisions_csv(decisions_path)?;
            let sensor = if args.sensor.is_empty() {
                "unknown".to_string()
            } else {
                args.sensor.clone()
            };
            (
                rows.iter().map(|r| r.0.clone()).collect(),
                rows.iter().map(|r| r.1).collect(),
                rows.iter().map(|r| r.2).collect(),
                sensor,
            )
        } else {
            let model_path = args
                .model
                .as_ref()
                .ok_or_else(|| anyhow!("need --decisions or --model with --features"))?;
            let features_path = args.features.as_ref().unwrap();
            let (model, _) = load_model(model_path)?;
            let mut table = FeatureTable::load(features_path)?;
            if !args.sensor.is_empty() {
                table = table.filter_sensor(Some(&args.sensor));
            }
            if table.has_splits() {
                let split = Split::parse(&args.split)
                    .ok_or_else(|| anyhow!("bad --split {:?}", args.split))?;
                table.rows.retain(|r| r.split == Some(split));
            }
            if table.rows.is_empty() {
                bail!("no rows to evaluate");
            }
            let vectors: Vec<QualityVector> = table.rows.iter().map(|r| r.vector).collect();
            let decisions: Vec<Label> = classify_batch(&model, &vectors)?
                .into_iter()
                .map(|d| d.label)
                .collect();
            let truths: Vec<Label> = table
                .rows
                .iter()
                .enumerate()
                .map(|(i, r)| {
                    r.label
                        .ok_or_else(|| anyhow!("row {} ({}) has no label", i, r.path))
                })
                .collect::<Result<_>>()?;
            let sensor = if args.sensor.is_empty() {
                model.sensor.clone()
            } else {
                args.sensor.clone()
            };
            (
                table.rows.iter().map(|r| r.path.clone()).collect(),
                truths,
                decisions,
                sensor,
            )
        };

    let report = compute_rates(&decisions, &truths)?;
    println!("{}", format_report_line(&report));

    let mut csv_rows: Vec<(String, String, EvaluationReport)> =
        vec![(sensor.clone(), "eval".into(), report)];

    if let Some(attribute) = &args.breakdown {
        let manifest_path = args
            .manifest
            .as_ref()
            .ok_or_else(|| anyhow!("--breakdown requires --manifest"))?;
        let manifest = DatasetManifest::load(manifest_path)?;
        let lookup: std::collections::HashMap<&str, &livqual::evaluation::ManifestRow> = manifest
            .rows
            .iter()
            .map(|r| (r.path.as_str(), r))
            .collect();
        let attributes: Vec<Option<String>> = paths
            .iter()
            .map(|p| {
                lookup.get(p.as_str()).and_then(|row| match attribute.as_str() {
                    "material" => row.material.clone(),
                    _ => row.procedure.clone(),
                })
            })
            .collect();
        let breakdown = breakdown_report(&decisions, &truths, &attributes, attribute, None)?;
        for warning in &breakdown.warnings {
            eprintln!("warning: {warning}");
        }
        for group in &breakdown.groups {
            println!("{}={}: {}", attribute, group.group, format_report_line(&group.report));
            csv_rows.push((
                sensor.clone(),
                format!("{}:{}", attribute, group.group),
                group.report,
            ));
        }
    }

    if let Some(path) = &args.out {
        fs::write(path, report_csv(&csv_rows))?;
    }
    Ok(0)
}

#[derive(Args)]
pub struct CrossvalArgs {
    /// Feature CSV carrying both dev and test split tags.
    #[arg(long)]
    features: PathBuf,
    #[arg(long)]
    sensor: String,
    #[arg(long)]
    subset: String,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn run_crossval(args: CrossvalArgs) -> Result<i32> {
    let config = load_config(args.config.as_deref())?;
    let mask = parse_subset(&args.subset)?;
    let table = FeatureTable::load(&args.features)?.filter_sensor(Some(&args.sensor));
    if table.rows.is_empty() {
        bail!("no rows for sensor {:?}", args.sensor);
    }
    let dev = table.labeled_samples(Some(Split::Dev))?;
    let test = table.labeled_samples(Some(Split::Test))?;
    if dev.is_empty() || test.is_empty() {
        bail!("cross-validation needs non-empty dev and test splits");
    }
    let report = cross_validate(&dev, &test, mask, &args.sensor, config.epsilon_scale)?;
    println!("stage 1 (dev->test): {}", format_report_line(&report.stage1));
    println!("stage 2 (test->dev): {}", format_report_line(&report.stage2));
    println!("final ACE {:.2}%", report.final_ace);

    if let Some(path) = &args.out {
        let final_row = EvaluationReport {
            flr: (report.stage1.flr + report.stage2.flr) / 2.0,
            ffr: (report.stage1.ffr + report.stage2.ffr) / 2.0,
            ace: report.final_ace,
            real_as_real: report.stage1.real_as_real + report.stage2.real_as_real,
            real_as_fake: report.stage1.real_as_fake + report.stage2.real_as_fake,
            fake_as_fake: report.stage1.fake_as_fake + report.stage2.fake_as_fake,
            fake_as_real: report.stage1.fake_as_real + report.stage2.fake_as_real,
        };
        let rows = vec![
            (args.sensor.clone(), "1".to_string(), report.stage1),
            (args.sensor.clone(), "2".to_string(), report.stage2),
            (args.sensor.clone(), "final".to_string(), final_row),
        ];
        fs::write(path, report_csv(&rows))?;
    }
    Ok(0)
}

#[derive(Args)]
pub struct SynthArgs {
    /// Output directory for images and manifest.csv.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    n_per_class: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value = "synthetic")]
    sensor: String,
}

pub fn run_synth(args: SynthArgs) -> Result<i32> {
    let manifest = make_liveness_corpus(args.n_per_class, args.seed, &args.sensor, &args.out)?;
    println!(
        "wrote {} images and {} to {}",
        manifest.rows.len(),
        args.out.join("manifest.csv").display(),
        args.out.display()
    );
    Ok(0)
}
