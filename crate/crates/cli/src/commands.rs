use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::mpsc;

use anyhow::{bail, Context, Result};
use seco_inr::io::{
    load_image, phantom_spec_to_toml, save_inrf, save_label_png, save_png16, Checkpoint, Dataset, RunConfig,
};
use seco_inr::metrics::{evaluate, DataRange, MetricReport, Psnr};
use seco_inr::phantom::{standard_suite, PhantomSpec};
use seco_inr::sampling::superresolve;
use seco_inr::training::{train, EpochRecord, TrainConfig, TrainLog};
use seco_inr::{Error, Model, ModelKind};
use serde_json::Value;

use crate::args::{BenchArgs, ConfigArgs, EvalArgs, FitArgs, PhantomArgs, SuperresArgs};
use crate::run_dir::{output_root, RunDir};

/// Sentinel written in place of a time when a threshold is never reached.
pub const NOT_REACHED: &str = "not reached";

pub const ABLATION_HEADER: &str = "model,seed,epochs,rmse,psnr,ssim,data_range,data_range_mode";
pub const BENCH_HEADER: &str = "model,seed,threshold,reached,epoch,seconds";

fn default_root() -> PathBuf {
    RunConfig::default().output_dir
}

/// Loads a config, resolving its relative paths against its own directory.
pub fn load_config(args: &ConfigArgs) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(&args.config)?;
    if let Some(dir) = args.config.parent() {
        cfg.rebase(dir);
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn require_mask(kind: ModelKind, data: &Dataset) -> Result<()> {
    if kind.needs_mask() && data.mask.is_none() {
        return Err(Error::Config(format!(
            "model {kind} needs a segmentation mask; set `mask` in the config or use a phantom"
        ))
        .into());
    }
    Ok(())
}

fn psnr_value(p: Psnr) -> Value {
    match p {
        Psnr::Finite(v) => Value::from(v),
        Psnr::Infinite => Value::from("inf"),
    }
}

fn record_config(run: &mut RunDir, args: &ConfigArgs, cfg: &RunConfig) -> Result<()> {
    run.manifest.seed = Some(cfg.seed);
    run.input("config_file", &args.config)?;
    run.input("config", cfg)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

/// Trains `model`, printing a progress line to stderr every 100 epochs
/// unless `quiet`.
fn train_model(model: &mut Model, data: &Dataset, cfg: &TrainConfig, quiet: bool) -> Result<TrainLog> {
    let mask = data.mask.as_ref().filter(|_| model.kind().needs_mask());
    if quiet {
        return Ok(train(model, &data.image, mask, cfg, None)?);
    }
    let total = cfg.loss.epochs;
    let kind = model.kind();
    let (tx, rx) = mpsc::channel::<EpochRecord>();
    std::thread::scope(|s| {
        s.spawn(move || {
            for r in rx {
                if (r.epoch + 1) % 100 == 0 || r.epoch + 1 == total {
                    eprintln!(
                        "{kind} epoch {:>5}/{total}  loss {:.4e}  psnr {:.2} dB  {:.1} s",
                        r.epoch + 1,
                        r.loss,
                        r.psnr.as_f64(),
                        r.seconds
                    );
                }
            }
        });
        let log = train(model, &data.image, mask, cfg, Some(&tx));
        drop(tx);
        Ok(log?)
    })
}

pub fn fit(out: Option<&Path>, args: &FitArgs) -> Result<PathBuf> {
    let cfg = load_config(&args.run)?;
    let data = Dataset::from_config(&cfg)?;
    require_mask(cfg.model, &data)?;
    let mut model = Model::new(&cfg.architecture(data.classes), cfg.seed)?;

    let mut run = RunDir::create(&output_root(out, &cfg.output_dir), "fit")?;
    record_config(&mut run, &args.run, &cfg)?;
    let log = train_model(&mut model, &data, &cfg.train_config(), args.quiet)?;

    let (h, w) = data.image.dims();
    Checkpoint::capture(&cfg, data.classes, (h, w), &model).save(run.artifact("checkpoint.ckpt"))?;
    let path = run.artifact("train_log.csv");
    let mut csv = BufWriter::new(File::create(&path).with_context(|| format!("cannot create {}", path.display()))?);
    log.write_csv(&mut csv)?;
    csv.flush()?;
    save_inrf(run.artifact("fitted.inrf"), &superresolve(&model, h, w)?.image)?;

    run.summary("model", cfg.model)?;
    run.summary("epochs", log.records.len())?;
    run.summary("train_dims", [h, w])?;
    run.summary("classes", data.classes)?;
    run.summary("parameters", model.parameter_count())?;
    if let Some(last) = log.last() {
        run.summary("final_loss", last.loss)?;
        run.summary("train_psnr", psnr_value(last.psnr))?;
        run.summary("seconds", last.seconds)?;
    }
    run.finish()
}

pub fn superres(out: Option<&Path>, args: &SuperresArgs) -> Result<PathBuf> {
    let ckpt = Checkpoint::load(&args.checkpoint)?;
    let model = ckpt.model()?;
    let (h, w) = match (args.factor, args.dims.as_deref()) {
        (Some(f), None) => {
            if !(f.is_finite() && f > 0.0) {
                bail!("--factor must be a positive number, got {f}");
            }
            let scale = |n: usize| (n as f64 * f).round() as usize;
            (scale(ckpt.train_height), scale(ckpt.train_width))
        }
        (None, Some(&[h, w])) => (h, w),
        _ => bail!("give exactly one of --factor or --dims H W"),
    };
    if h == 0 || w == 0 {
        bail!("output grid {h}x{w} is empty");
    }
    let sr = superresolve(&model, h, w)?;

    let mut run = RunDir::create(&output_root(out, &ckpt.config.output_dir), "superres")?;
    run.manifest.seed = Some(ckpt.config.seed);
    run.input("checkpoint", &args.checkpoint)?;
    save_inrf(run.artifact("superres.inrf"), &sr.image)?;
    save_png16(run.artifact("superres.png"), &sr.image)?;
    if model.kind() == ModelKind::Seco {
        if let Some(classes) = &sr.classes {
            save_label_png(run.artifact("classes.png"), classes)?;
        }
    }
    run.summary("model", model.kind())?;
    run.summary("train_dims", [ckpt.train_height, ckpt.train_width])?;
    run.summary("output_dims", [h, w])?;
    run.finish()
}

pub fn eval(out: Option<&Path>, args: &EvalArgs) -> Result<PathBuf> {
    let reconstruction = load_image(&args.reconstruction)?;
    let reference = load_image(&args.reference)?;
    let range = args.data_range.map_or(DataRange::ReferenceMax, DataRange::Fixed);
    let report = evaluate(&reconstruction, &reference, range)?;

    let mut run = RunDir::create(&output_root(out, &default_root()), "eval")?;
    run.input("reconstruction", &args.reconstruction)?;
    run.input("reference", &args.reference)?;
    write_text(
        &run.artifact("metrics.csv"),
        &format!("{}\n{}\n", MetricReport::CSV_HEADER, report.to_csv_row()),
    )?;
    eprintln!("rmse {}  psnr {} dB  ssim {}", report.rmse, report.psnr, report.ssim);
    run.summary("rmse", report.rmse)?;
    run.summary("psnr", psnr_value(report.psnr))?;
    run.summary("ssim", report.ssim)?;
    run.summary("data_range", report.data_range)?;
    run.finish()
}

pub fn ablate(out: Option<&Path>, args: &ConfigArgs) -> Result<PathBuf> {
    let cfg = load_config(args)?;
    let data = Dataset::from_config(&cfg)?;
    let Some((truth, _)) = &data.truth else {
        return Err(Error::Config("ablate needs a ground truth: set `ground_truth` or use a phantom".into()).into());
    };
    require_mask(ModelKind::Seco, &data)?;

    let mut run = RunDir::create(&output_root(out, &cfg.output_dir), "ablate")?;
    record_config(&mut run, args, &cfg)?;
    let mut csv = format!("{ABLATION_HEADER}\n");
    for kind in [ModelKind::Seco, ModelKind::SecoNoSemantic] {
        let mut c = cfg.clone();
        c.model = kind;
        let mut model = Model::new(&c.architecture(data.classes), c.seed)?;
        train_model(&mut model, &data, &c.train_config(), true)?;
        let sr = superresolve(&model, truth.height(), truth.width())?;
        save_inrf(run.artifact(&format!("superres_{kind}.inrf")), &sr.image)?;
        let report = evaluate(&sr.image, truth, DataRange::ReferenceMax)?;
        eprintln!("{kind}: psnr {} dB  ssim {}", report.psnr, report.ssim);
        csv.push_str(&format!("{kind},{},{},{}\n", c.seed, c.epochs(), report.to_csv_row()));
        run.summary(&format!("{kind}_psnr"), psnr_value(report.psnr))?;
    }
    write_text(&run.artifact("ablation.csv"), &csv)?;
    run.finish()
}

pub fn bench(out: Option<&Path>, args: &BenchArgs) -> Result<PathBuf> {
    let cfg = load_config(&args.run)?;
    let threshold = args.psnr_threshold;
    if threshold.is_nan() {
        bail!("--psnr-threshold must be a number");
    }
    if cfg.bench_models.is_empty() {
        return Err(Error::Config("bench_models is empty".into()).into());
    }
    let data = Dataset::from_config(&cfg)?;
    for &kind in &cfg.bench_models {
        require_mask(kind, &data)?;
    }

    let mut run = RunDir::create(&output_root(out, &cfg.output_dir), "bench")?;
    record_config(&mut run, &args.run, &cfg)?;
    run.input("psnr_threshold", threshold)?;
    let mut csv = format!("{BENCH_HEADER}\n");
    // Sequential on purpose: concurrent training would distort the timings.
    for &kind in &cfg.bench_models {
        let mut c = cfg.clone();
        c.model = kind;
        let mut model = Model::new(&c.architecture(data.classes), c.seed)?;
        let train_cfg = TrainConfig {
            halt_at_psnr: Some(threshold),
            ..c.train_config()
        };
        let log = train_model(&mut model, &data, &train_cfg, true)?;
        let row = match log.first_reaching(threshold) {
            Some(r) => {
                eprintln!("{kind}: {threshold} dB after {} epochs, {:.3} s", r.epoch + 1, r.seconds);
                run.summary(&format!("{kind}_seconds"), r.seconds)?;
                format!("{kind},{},{threshold},true,{},{:.3}", c.seed, r.epoch, r.seconds)
            }
            None => {
                eprintln!("{kind}: {threshold} dB not reached in {} epochs", log.records.len());
                run.summary(&format!("{kind}_seconds"), NOT_REACHED)?;
                format!("{kind},{},{threshold},false,,{NOT_REACHED}", c.seed)
            }
        };
        csv.push_str(&row);
        csv.push('\n');
    }
    write_text(&run.artifact("bench.csv"), &csv)?;
    run.finish()
}

pub fn phantom_gen(out: Option<&Path>, args: &PhantomArgs) -> Result<PathBuf> {
    let spec = match (args.index, args.random) {
        (_, Some(seed)) => PhantomSpec::random(seed, args.classes, args.size, args.size)?,
        (index, None) => {
            let i = index.unwrap_or(1);
            standard_suite()
                .into_iter()
                .nth(i.wrapping_sub(1))
                .ok_or_else(|| Error::Config(format!("no standard phantom #{i} (the suite has 1-5)")))?
        }
    };
    let data = Dataset::phantom_pipeline(&spec, args.size, args.factor, args.resample)?;
    let (truth, truth_mask) = data.truth.as_ref().expect("the phantom pipeline keeps its ground truth");
    let truth_mask = truth_mask.as_ref().expect("phantoms carry their segmentation");
    let mask = data.mask.as_ref().expect("phantoms carry their segmentation");

    let mut run = RunDir::create(&output_root(out, &default_root()), "phantom-gen")?;
    run.manifest.seed = Some(spec.seed);
    write_text(&run.artifact("spec.toml"), &phantom_spec_to_toml(&spec))?;
    save_inrf(run.artifact("truth.inrf"), truth)?;
    save_png16(run.artifact("truth.png"), truth)?;
    save_label_png(run.artifact("truth_mask.png"), truth_mask)?;
    save_inrf(run.artifact("train.inrf"), &data.image)?;
    save_png16(run.artifact("train.png"), &data.image)?;
    save_label_png(run.artifact("train_mask.png"), mask)?;
    run.summary("classes", spec.classes())?;
    run.summary("truth_dims", truth.dims())?;
    run.summary("train_dims", data.image.dims())?;
    run.finish()
}
