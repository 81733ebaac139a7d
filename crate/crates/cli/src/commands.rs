use std::fmt::Write as _;
use std::path::Path;

use anyhow::{Context, Result};
use debias_core::data::{load_dataset_dir, save_dataset, synth_generate, write_atomic, Dataset, LabelColumn};
use debias_core::metrics::{evaluate, spillover_report, MetricsReport, SpilloverReport};
use debias_core::nets::{ClassifierParams, UNetParams};
use debias_core::train::{pretrain_classifier, pretrain_heads, train_debiaser, Hyperparams, TrainLog};

use crate::config::RunConfig;
use crate::svg::{emit_svg_line_chart, Series};

/// Mean and sample standard deviation of each metric at one λ.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub lambda: f64,
    pub ap: (f64, f64),
    pub dp: (f64, f64),
    pub deo: (f64, f64),
}

pub const SWEEP_HEADER: &str = "lambda,ap_mean,ap_sd,dp_mean,dp_sd,deo_mean,deo_sd";

/// Mean and `n − 1` standard deviation; a single value has sd 0.
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = format!("{SWEEP_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{:.4},{:.8e},{:.8e},{:.8e},{:.8e},{:.8e},{:.8e}",
            r.lambda, r.ap.0, r.ap.1, r.dp.0, r.dp.1, r.deo.0, r.deo.1
        );
    }
    out
}

/// Trains `repeats` one-epoch reconstructors per λ (seeds `seed + r`) and
/// summarizes their test metrics through the frozen classifier.
pub fn sweep_rows(
    train: &Dataset,
    test: &Dataset,
    classifier: &ClassifierParams,
    base: &Hyperparams,
    lambdas: &[f64],
    repeats: usize,
    threshold: f64,
) -> Result<Vec<SweepRow>> {
    lambdas
        .iter()
        .map(|&lambda| {
            let mut reports = Vec::with_capacity(repeats);
            for r in 0..repeats {
                let hyper = Hyperparams {
                    lambda,
                    epochs: 1,
                    seed: base.seed.wrapping_add(r as u64),
                    ..base.clone()
                };
                let (unet, _) = train_debiaser(train, classifier, &hyper)?;
                reports.push(evaluate(classifier, Some(&unet), test, threshold)?);
            }
            let col = |f: fn(&MetricsReport) -> f64| mean_sd(&reports.iter().map(f).collect::<Vec<_>>());
            eprintln!("sweep: lambda {lambda:.4} done");
            Ok(SweepRow {
                lambda,
                ap: col(|m| m.ap),
                dp: col(|m| m.dp),
                deo: col(|m| m.deo),
            })
        })
        .collect()
}

fn metrics_csv(rows: &[(&str, &MetricsReport)]) -> String {
    let mut out = format!("{}\n", MetricsReport::CSV_HEADER);
    for (name, m) in rows {
        out.push_str(&m.csv_row(name));
        out.push('\n');
    }
    out
}

fn write(path: &Path, text: &str) -> Result<()> {
    write_atomic(path, text.as_bytes()).with_context(|| format!("writing {}", path.display()))?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn load_split(cfg: &RunConfig, dir: &Path) -> Result<Dataset> {
    load_dataset_dir(dir, &cfg.target_attribute, &cfg.protected_attribute)
        .with_context(|| format!("loading dataset from {}", dir.display()))
}

fn load_classifier(cfg: &RunConfig) -> Result<ClassifierParams> {
    let path = cfg.classifier_path();
    ClassifierParams::load(&path).with_context(|| format!("loading classifier (run `pretrain` first): {}", path.display()))
}

fn load_unet(cfg: &RunConfig) -> Result<UNetParams> {
    let path = cfg.unet_path();
    UNetParams::load(&path).with_context(|| format!("loading reconstructor (run `train` first): {}", path.display()))
}

/// Writes both splits as PGM directories and records the full config next to
/// them. `raw` is the config as given (relative paths kept), `cfg` the
/// resolved one.
pub fn gen(raw: &RunConfig, cfg: &RunConfig) -> Result<()> {
    let (train, test) = synth_generate(&cfg.data)?;
    save_dataset(&cfg.train_dir(), &train)?;
    save_dataset(&cfg.test_dir(), &test)?;
    eprintln!("generated {} train / {} test images under {}", train.len(), test.len(), cfg.paths.data_dir.display());
    write(&cfg.paths.data_dir.join("config.json"), &raw.to_json())
}

pub fn pretrain(cfg: &RunConfig) -> Result<()> {
    let train = load_split(cfg, &cfg.train_dir())?;
    let clf = pretrain_classifier(&train, &cfg.classifier)?;
    let path = cfg.classifier_path();
    clf.save(&path)?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

pub fn train(cfg: &RunConfig) -> Result<(UNetParams, TrainLog)> {
    let train = load_split(cfg, &cfg.train_dir())?;
    let test = load_split(cfg, &cfg.test_dir())?;
    let clf = load_classifier(cfg)?;
    let (unet, log) = train_debiaser(&train, &clf, &cfg.debiaser)?;
    let path = cfg.unet_path();
    unet.save(&path)?;
    eprintln!("wrote {}", path.display());
    write(&cfg.paths.report_dir.join("train_log.csv"), &log.to_csv())?;
    report_metrics(cfg, &clf, &unet, &test)?;
    Ok((unet, log))
}

pub fn eval(cfg: &RunConfig) -> Result<(MetricsReport, MetricsReport)> {
    let test = load_split(cfg, &cfg.test_dir())?;
    let clf = load_classifier(cfg)?;
    let unet = load_unet(cfg)?;
    report_metrics(cfg, &clf, &unet, &test)
}

fn report_metrics(
    cfg: &RunConfig,
    clf: &ClassifierParams,
    unet: &UNetParams,
    test: &Dataset,
) -> Result<(MetricsReport, MetricsReport)> {
    let original = evaluate(clf, None, test, cfg.threshold)?;
    let reconstructed = evaluate(clf, Some(unet), test, cfg.threshold)?;
    write(
        &cfg.paths.report_dir.join("metrics.csv"),
        &metrics_csv(&[("original", &original), ("reconstructed", &reconstructed)]),
    )?;
    eprintln!(
        "AP {:.4} -> {:.4}, DP {:.4} -> {:.4}, DEO {:.4} -> {:.4}",
        original.ap, reconstructed.ap, original.dp, reconstructed.dp, original.deo, reconstructed.deo
    );
    Ok((original, reconstructed))
}

pub fn sweep(cfg: &RunConfig) -> Result<Vec<SweepRow>> {
    let train = load_split(cfg, &cfg.train_dir())?;
    let test = load_split(cfg, &cfg.test_dir())?;
    let clf = load_classifier(cfg)?;
    let rows = sweep_rows(
        &train,
        &test,
        &clf,
        &cfg.debiaser,
        &cfg.sweep.lambdas(),
        cfg.sweep.repeats,
        cfg.threshold,
    )?;
    let dir = &cfg.paths.report_dir;
    write(&dir.join("sweep.csv"), &sweep_csv(&rows))?;
    if rows.len() >= 2 {
        let charts: [(&str, &str, fn(&SweepRow) -> (f64, f64)); 3] = [
            ("ap", "Average precision", |r| r.ap),
            ("dp", "Demographic parity gap", |r| r.dp),
            ("deo", "Difference in equal opportunity", |r| r.deo),
        ];
        for (key, title, get) in charts {
            let series = Series {
                title: format!("{title} vs lambda"),
                x_label: "lambda".into(),
                y_label: key.to_uppercase(),
                points: rows.iter().map(|r| (r.lambda, get(r).0, get(r).1)).collect(),
            };
            let path = dir.join(format!("sweep_{key}.svg"));
            emit_svg_line_chart(&series, &path)?;
            eprintln!("wrote {}", path.display());
        }
    } else {
        eprintln!("sweep: a single grid point; charts skipped");
    }
    Ok(rows)
}

/// Trains one single-head classifier per auxiliary attribute and reports
/// their parity change under the trained reconstructor.
pub fn spillover(cfg: &RunConfig) -> Result<SpilloverReport> {
    let train = load_split(cfg, &cfg.train_dir())?;
    let test = load_split(cfg, &cfg.test_dir())?;
    let unet = load_unet(cfg)?;
    let classifiers = train
        .aux_names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let clf = pretrain_heads(&train, &[LabelColumn::Aux(j)], &cfg.attribute_classifier)
                .with_context(|| format!("training the `{name}` classifier"))?;
            clf.save(&cfg.attribute_classifier_path(name))?;
            eprintln!("trained `{name}` classifier");
            Ok(clf)
        })
        .collect::<Result<Vec<_>>>()?;
    let report = spillover_report(&train, &classifiers, &unet, &test, cfg.threshold)?;
    write(&cfg.paths.report_dir.join("spillover.csv"), &report.to_csv())?;
    eprintln!("pearson(hsic, |dDP|) = {:.4}", report.pearson_r);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_repeat_has_zero_sd() {
        assert_eq!(mean_sd(&[0.4]), (0.4, 0.0));
        let (m, s) = mean_sd(&[1.0, 2.0, 3.0]);
        assert!((m - 2.0).abs() < 1e-15 && (s - 1.0).abs() < 1e-15);
    }

    #[test]
    fn sweep_csv_layout() {
        let rows = vec![
            SweepRow {
                lambda: 0.01,
                ap: (0.9, 0.0),
                dp: (0.3, 0.0),
                deo: (0.1, 0.0),
            };
            3
        ];
        let csv = sweep_csv(&rows);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], SWEEP_HEADER);
        assert_eq!(lines.len(), 4);
        assert!(lines[1].starts_with("0.0100,9.00000000e-1,0.00000000e0,"));
    }
}
