//! Ranking and group-fairness metrics, and the attribute-spillover report.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::data::{Dataset, LabelColumn};
use crate::hsic::{hsic_median, Samples};
use crate::nets::{ClassifierParams, UNetParams};
use crate::tensor::Tensor;
use crate::{Error, Result};

/// Images are pushed through the networks in chunks of this many examples.
const EVAL_CHUNK: usize = 256;

/// Mean precision at the rank of each positive, ranking by descending score
/// with ties broken by ascending index.
pub fn average_precision(scores: &[f64], labels: &[u8]) -> Result<f64> {
    same_len(scores.len(), labels.len(), "scores", "labels")?;
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::NonFinite("average_precision: NaN score".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&i, &j| scores[j].total_cmp(&scores[i]));
    let (mut hits, mut sum) = (0usize, 0.0);
    for (rank, &i) in order.iter().enumerate() {
        if labels[i] == 1 {
            hits += 1;
            sum += hits as f64 / (rank + 1) as f64;
        }
    }
    if hits == 0 {
        return Err(Error::Degenerate("average_precision: no positive labels".into()));
    }
    Ok(sum / hits as f64)
}

/// `|P(ŷ=1 | s=0) − P(ŷ=1 | s=1)|`.
pub fn demographic_parity_gap(preds: &[u8], s: &[u8]) -> Result<f64> {
    same_len(preds.len(), s.len(), "preds", "s")?;
    let rate = |g: u8| -> Result<f64> {
        let (n, pos) = preds
            .iter()
            .zip(s)
            .filter(|&(_, &sg)| sg == g)
            .fold((0usize, 0usize), |(n, p), (&yh, _)| (n + 1, p + (yh == 1) as usize));
        if n == 0 {
            return Err(Error::Degenerate(format!("demographic parity: group s={g} is empty")));
        }
        Ok(pos as f64 / n as f64)
    };
    Ok((rate(0)? - rate(1)?).abs())
}

/// Difference in equality of opportunity: `|TPR(s=0) − TPR(s=1)|`.
pub fn deo(preds: &[u8], labels: &[u8], s: &[u8]) -> Result<f64> {
    same_len(preds.len(), labels.len(), "preds", "labels")?;
    same_len(preds.len(), s.len(), "preds", "s")?;
    let tpr = |g: u8| -> Result<f64> {
        let (p, tp) = (0..preds.len())
            .filter(|&i| s[i] == g && labels[i] == 1)
            .fold((0usize, 0usize), |(p, tp), i| (p + 1, tp + (preds[i] == 1) as usize));
        if p == 0 {
            return Err(Error::Degenerate(format!("equality of opportunity: group s={g} has no positives")));
        }
        Ok(tp as f64 / p as f64)
    };
    Ok((tpr(0)? - tpr(1)?).abs())
}

/// Sample Pearson correlation.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    same_len(x.len(), y.len(), "x", "y")?;
    if x.len() < 2 {
        return Err(Error::InvalidArgument("pearson needs at least 2 points".into()));
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Degenerate("pearson: constant input".into()));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Average ranks (1-based), ties sharing their mean rank.
pub fn ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
    let mut out = vec![0.0; v.len()];
    let mut k = 0;
    while k < order.len() {
        let mut end = k;
        while end + 1 < order.len() && v[order[end + 1]] == v[order[k]] {
            end += 1;
        }
        let r = (k + end) as f64 / 2.0 + 1.0;
        for &i in &order[k..=end] {
            out[i] = r;
        }
        k = end + 1;
    }
    out
}

/// Spearman rank correlation (Pearson on average ranks).
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    same_len(x.len(), y.len(), "x", "y")?;
    pearson(&ranks(x), &ranks(y))
}

fn same_len(a: usize, b: usize, na: &str, nb: &str) -> Result<()> {
    if a != b {
        return Err(Error::Shape(format!("{na} has {a} entries, {nb} has {b}")));
    }
    Ok(())
}

/// Fairness and accuracy through the frozen classifier.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub ap: f64,
    pub dp: f64,
    pub deo: f64,
    pub n_evaluated: usize,
    pub threshold: f64,
}

impl MetricsReport {
    pub const CSV_HEADER: &'static str = "transform,ap,dp,deo,n";

    pub fn csv_row(&self, transform: &str) -> String {
        format!(
            "{transform},{:.8e},{:.8e},{:.8e},{}",
            self.ap, self.dp, self.deo, self.n_evaluated
        )
    }
}

/// Runs `f` over the dataset images in fixed chunks and concatenates the
/// per-example outputs in index order.
fn map_images(ds: &Dataset, f: impl Fn(&Tensor<f32>) -> Result<Tensor<f32>> + Sync) -> Result<Vec<Tensor<f32>>> {
    let idx: Vec<usize> = (0..ds.len()).collect();
    let chunks: Vec<Tensor<f32>> = idx
        .par_chunks(EVAL_CHUNK)
        .map(|c| f(&ds.images(c)))
        .collect::<Result<_>>()?;
    Ok(chunks.iter().flat_map(split_rows).collect())
}

fn split_rows(t: &Tensor<f32>) -> Vec<Tensor<f32>> {
    let n = t.shape()[0];
    let inner: Vec<usize> = t.shape()[1..].to_vec();
    let width = t.len() / n.max(1);
    t.data()
        .chunks(width.max(1))
        .take(n)
        .map(|c| Tensor::new(inner.clone(), c.to_vec()).expect("row shape"))
        .collect()
}

/// Test images passed through `unet`, if any.
pub fn reconstruct_dataset(unet: &UNetParams, ds: &Dataset) -> Result<Dataset> {
    ds.with_images(map_images(ds, |b| unet.reconstruct(b))?)
}

/// `N×heads` classifier probabilities for every image of `ds`, row-major.
pub fn predict_dataset(classifier: &ClassifierParams, ds: &Dataset) -> Result<Vec<Vec<f64>>> {
    Ok(map_images(ds, |b| classifier.predict(b))?
        .into_iter()
        .map(|row| row.data().iter().map(|&v| v as f64).collect())
        .collect())
}

fn threshold_preds(scores: &[f64], threshold: f64) -> Vec<u8> {
    scores.iter().map(|&p| (p >= threshold) as u8).collect()
}

/// AP of the raw `h1` scores against `y`, DP and DEO of `h1 ≥ threshold`,
/// optionally after reconstructing the images with `unet`.
pub fn evaluate(
    classifier: &ClassifierParams,
    unet: Option<&UNetParams>,
    test: &Dataset,
    threshold: f64,
) -> Result<MetricsReport> {
    if test.is_empty() {
        return Err(Error::InvalidArgument("cannot evaluate on an empty test set".into()));
    }
    let recon;
    let images = match unet {
        Some(u) => {
            recon = reconstruct_dataset(u, test)?;
            &recon
        }
        None => test,
    };
    let scores: Vec<f64> = predict_dataset(classifier, images)?.iter().map(|r| r[0]).collect();
    let y = test.labels(LabelColumn::Target);
    let s = test.labels(LabelColumn::Protected);
    let preds = threshold_preds(&scores, threshold);
    Ok(MetricsReport {
        ap: average_precision(&scores, &y)?,
        dp: demographic_parity_gap(&preds, &s)?,
        deo: deo(&preds, &y, &s)?,
        n_evaluated: test.len(),
        threshold,
    })
}

/// One auxiliary attribute of the spillover analysis.
#[derive(Clone, Debug, PartialEq)]
pub struct SpilloverRow {
    pub attribute: String,
    pub hsic_with_target: f64,
    pub dp_original: f64,
    pub dp_reconstructed: f64,
    pub dp_delta_abs: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpilloverReport {
    pub rows: Vec<SpilloverRow>,
    /// Pearson correlation of `hsic_with_target` against `dp_delta_abs`.
    pub pearson_r: f64,
}

impl SpilloverReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("attribute,hsic,dp_orig,dp_recon,dp_delta\n");
        for r in &self.rows {
            writeln!(
                out,
                "{},{:.8e},{:.8e},{:.8e},{:.8e}",
                r.attribute, r.hsic_with_target, r.dp_original, r.dp_reconstructed, r.dp_delta_abs
            )
            .expect("string write");
        }
        out
    }
}

/// For every auxiliary attribute `j` (with a single-head classifier in
/// `attr_classifiers[j]`): HSIC between `a_j` and `y` on the training labels,
/// and the demographic-parity gap of that classifier on original versus
/// reconstructed test images.
pub fn spillover_report(
    train: &Dataset,
    attr_classifiers: &[ClassifierParams],
    unet: &UNetParams,
    test: &Dataset,
    threshold: f64,
) -> Result<SpilloverReport> {
    if attr_classifiers.len() != train.aux_names.len() {
        return Err(Error::Shape(format!(
            "{} attribute classifiers for {} auxiliary attributes",
            attr_classifiers.len(),
            train.aux_names.len()
        )));
    }
    if test.aux_names != train.aux_names {
        return Err(Error::InvalidArgument("train and test auxiliary attributes differ".into()));
    }
    let as_samples = |ds: &Dataset, c: LabelColumn| -> Result<Samples> {
        Samples::from_scalars(&ds.labels(c).iter().map(|&v| v as f64).collect::<Vec<_>>())
    };
    let target = as_samples(train, LabelColumn::Target)?;
    let s = test.labels(LabelColumn::Protected);
    let recon = reconstruct_dataset(unet, test)?;
    let rows = attr_classifiers
        .iter()
        .enumerate()
        .map(|(j, clf)| {
            if clf.heads() != 1 {
                return Err(Error::Shape(format!("attribute classifier {j} has {} heads", clf.heads())));
            }
            let hsic = hsic_median(&as_samples(train, LabelColumn::Aux(j))?, &target)?.value;
            let dp_of = |ds: &Dataset| -> Result<f64> {
                let scores: Vec<f64> = predict_dataset(clf, ds)?.iter().map(|r| r[0]).collect();
                demographic_parity_gap(&threshold_preds(&scores, threshold), &s)
            };
            let (orig, rec) = (dp_of(test)?, dp_of(&recon)?);
            Ok(SpilloverRow {
                attribute: train.aux_names[j].clone(),
                hsic_with_target: hsic,
                dp_original: orig,
                dp_reconstructed: rec,
                dp_delta_abs: (rec - orig).abs(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let h: Vec<f64> = rows.iter().map(|r| r.hsic_with_target).collect();
    let d: Vec<f64> = rows.iter().map(|r| r.dp_delta_abs).collect();
    Ok(SpilloverReport {
        pearson_r: pearson(&h, &d)?,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ap_examples() {
        let ap = average_precision(&[0.9, 0.8, 0.7, 0.6], &[1, 0, 1, 1]).unwrap();
        assert!((ap - (1.0 + 2.0 / 3.0 + 0.75) / 3.0).abs() < 1e-12);
        assert!((ap - 0.805556).abs() < 1e-6);
        assert_eq!(average_precision(&[0.1, 0.9, 0.8, 0.2], &[0, 1, 1, 0]).unwrap(), 1.0);
        assert!(average_precision(&[0.1, 0.2], &[0, 0]).is_err());
    }

    #[test]
    fn ap_ties_use_index_order() {
        // Equal scores: index 0 (negative) ranks before index 1 (positive).
        assert_eq!(average_precision(&[0.5, 0.5], &[0, 1]).unwrap(), 0.5);
        assert_eq!(average_precision(&[0.5, 0.5], &[1, 0]).unwrap(), 1.0);
    }

    /// Builds group data with the given positive-prediction counts.
    fn groups(n0: usize, pos0: usize, n1: usize, pos1: usize) -> (Vec<u8>, Vec<u8>) {
        let mut preds = Vec::new();
        let mut s = Vec::new();
        for (g, n, pos) in [(0u8, n0, pos0), (1, n1, pos1)] {
            for i in 0..n {
                preds.push((i < pos) as u8);
                s.push(g);
            }
        }
        (preds, s)
    }

    #[test]
    fn dp_examples() {
        let (p, s) = groups(10_000, 6791, 10_000, 2793);
        assert!((demographic_parity_gap(&p, &s).unwrap() - 0.3998).abs() < 1e-6);
        let (p, s) = groups(10, 4, 5, 2);
        assert_eq!(demographic_parity_gap(&p, &s).unwrap(), 0.0);
        let (p, s) = groups(3, 3, 4, 0);
        assert_eq!(demographic_parity_gap(&p, &s).unwrap(), 1.0);
        assert!(demographic_parity_gap(&[1, 0], &[0, 0]).is_err());
    }

    #[test]
    fn deo_examples() {
        // group 0: 10 positives, 8 predicted; group 1: 6 positives, 3 predicted
        let mut preds = Vec::new();
        let mut labels = Vec::new();
        let mut s = Vec::new();
        for (g, p, tp) in [(0u8, 10, 8), (1, 6, 3)] {
            for i in 0..p {
                preds.push((i < tp) as u8);
                labels.push(1);
                s.push(g);
            }
            preds.push(1);
            labels.push(0);
            s.push(g);
        }
        assert!((deo(&preds, &labels, &s).unwrap() - 0.3).abs() < 1e-12);
        assert_eq!(deo(&[1, 1], &[1, 1], &[0, 1]).unwrap(), 0.0);
        assert!(deo(&[1, 1], &[1, 0], &[0, 1]).is_err());
    }

    #[test]
    fn pearson_examples() {
        let x = [1.0, 2.0, 3.0];
        assert!((pearson(&x, &x).unwrap() - 1.0).abs() < 1e-12);
        assert!((pearson(&x, &[-1.0, -2.0, -3.0]).unwrap() + 1.0).abs() < 1e-12);
        assert!((pearson(&x, &[1.0, 2.0, 4.0]).unwrap() - 0.981981).abs() < 1e-6);
        assert!(pearson(&x, &[2.0, 2.0, 2.0]).is_err());
    }

    #[test]
    fn spearman_with_ties() {
        assert_eq!(ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
        assert!((spearman(&[1.0, 2.0, 3.0], &[1.0, 4.0, 9.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 0.0, -5.0]).unwrap() + 1.0).abs() < 1e-12);
    }

    fn binary(n: usize) -> impl Strategy<Value = Vec<u8>> {
        proptest::collection::vec(0u8..2, n)
    }

    proptest! {
        #[test]
        fn group_metrics_ignore_group_naming(preds in binary(40), labels in binary(40), s in binary(40)) {
            let flipped: Vec<u8> = s.iter().map(|v| 1 - v).collect();
            if let Ok(a) = demographic_parity_gap(&preds, &s) {
                prop_assert_eq!(a, demographic_parity_gap(&preds, &flipped).unwrap());
                prop_assert!((0.0..=1.0).contains(&a));
            }
            if let Ok(a) = deo(&preds, &labels, &s) {
                prop_assert_eq!(a, deo(&preds, &labels, &flipped).unwrap());
                prop_assert!((0.0..=1.0).contains(&a));
            }
        }

        #[test]
        fn ap_is_invariant_to_monotone_transforms(
            scores in proptest::collection::vec(-5.0f64..5.0, 30),
            labels in binary(30),
        ) {
            prop_assume!(labels.contains(&1));
            let ap = average_precision(&scores, &labels).unwrap();
            let warped: Vec<f64> = scores.iter().map(|v| (v * 0.7).exp() + 3.0).collect();
            prop_assert!((0.0..=1.0).contains(&ap));
            prop_assert_eq!(ap, average_precision(&warped, &labels).unwrap());
        }

        #[test]
        fn pearson_is_bounded(x in proptest::collection::vec(-10.0f64..10.0, 5), y in proptest::collection::vec(-10.0f64..10.0, 5)) {
            if let Ok(r) = pearson(&x, &y) {
                prop_assert!((-1.0..=1.0).contains(&r));
            }
        }
    }
}
