//! Ordinal datasets: a synthetic generator with collinear class centres,
//! CSV ingestion/export, and seeded (optionally stratified) splits.
//!
//! CSV files are comma separated, UTF-8, with a header row. Every column
//! except the label column is a numeric feature; the label column holds
//! integer class indices starting at 0.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Matrix, SeededRng};

/// Class shares of the four-grade endoscopic severity dataset the defaults
/// imitate (grades 0..3).
pub const SEVERITY_PROPORTIONS: [f64; 4] = [0.541, 0.271, 0.111, 0.077];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticParams {
    pub num_classes: usize,
    pub input_dim: usize,
    pub n_samples: usize,
    pub class_proportions: Vec<f64>,
    pub class_center_spacing: f64,
    pub noise_sigma: f64,
    /// Extra uniform offset along the ordinal axis, in units of the spacing.
    pub overlap_jitter: f64,
}

impl Default for SyntheticParams {
    fn default() -> Self {
        Self {
            num_classes: 4,
            input_dim: 8,
            n_samples: 2000,
            class_proportions: SEVERITY_PROPORTIONS.to_vec(),
            class_center_spacing: 1.0,
            noise_sigma: 0.8,
            overlap_jitter: 0.0,
        }
    }
}

impl SyntheticParams {
    pub fn validate(&self) -> Result<()> {
        let k = self.num_classes;
        if k < 2 {
            return Err(Error::InvalidInput(format!("need at least 2 classes, got {k}")));
        }
        if self.input_dim == 0 {
            return Err(Error::InvalidInput("input_dim must be at least 1".into()));
        }
        if self.class_proportions.len() != k {
            return Err(Error::InvalidInput(format!(
                "{} class proportions for {k} classes",
                self.class_proportions.len()
            )));
        }
        if self
            .class_proportions
            .iter()
            .any(|p| !(p.is_finite() && *p > 0.0))
        {
            return Err(Error::InvalidInput("class proportions must be positive".into()));
        }
        let total: f64 = self.class_proportions.iter().sum();
        if (total - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidInput(format!(
                "class proportions sum to {total}, not 1"
            )));
        }
        if !self.class_center_spacing.is_finite() {
            return Err(Error::InvalidInput("class_center_spacing must be finite".into()));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(Error::InvalidInput("noise_sigma must be non-negative".into()));
        }
        if !(self.overlap_jitter.is_finite() && self.overlap_jitter >= 0.0) {
            return Err(Error::InvalidInput("overlap_jitter must be non-negative".into()));
        }
        if self.n_samples < k {
            return Err(Error::InvalidInput(format!(
                "{} samples cannot cover {k} classes",
                self.n_samples
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum Provenance {
    Synthetic {
        seed: u64,
        params: SyntheticParams,
        /// Unit vector the class centres lie on.
        direction: Vec<f64>,
    },
    Csv {
        path: PathBuf,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Matrix,
    labels: Vec<usize>,
    num_classes: usize,
    pub class_names: Option<Vec<String>>,
    provenance: Provenance,
}

impl Dataset {
    /// Checks row/label agreement, label range and that every class occurs.
    pub fn new(
        features: Matrix,
        labels: Vec<usize>,
        num_classes: usize,
        provenance: Provenance,
    ) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let ds = Self::unchecked(features, labels, num_classes, provenance)?;
        if let Some(missing) = ds.class_counts().iter().position(|&n| n == 0) {
            return Err(Error::InvalidInput(format!(
                "class {missing} has no samples"
            )));
        }
        Ok(ds)
    }

    /// Like [`Dataset::new`] but allows empty sets and absent classes, as
    /// split parts may have.
    fn unchecked(
        features: Matrix,
        labels: Vec<usize>,
        num_classes: usize,
        provenance: Provenance,
    ) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(Error::Shape(format!(
                "{} feature rows but {} labels",
                features.rows(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::InvalidInput(format!(
                "label {bad} is not below the class count {num_classes}"
            )));
        }
        Ok(Self {
            features,
            labels,
            num_classes,
            class_names: None,
            provenance,
        })
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn input_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Class centres of a synthetic dataset, `k · spacing · direction`.
    pub fn class_centers(&self) -> Option<Vec<Vec<f64>>> {
        match &self.provenance {
            Provenance::Synthetic {
                params, direction, ..
            } => Some(
                (0..params.num_classes)
                    .map(|k| {
                        let t = k as f64 * params.class_center_spacing;
                        direction.iter().map(|u| t * u).collect()
                    })
                    .collect(),
            ),
            Provenance::Csv { .. } => None,
        }
    }

    /// Rows at `indices`, in that order. The result may be empty or miss classes.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            num_classes: self.num_classes,
            class_names: self.class_names.clone(),
            provenance: self.provenance.clone(),
        }
    }

    pub fn split(&self, spec: &SplitSpec) -> Result<(Dataset, Dataset, Dataset)> {
        let parts = split(self, spec)?;
        Ok((
            self.subset(&parts.train),
            self.subset(&parts.val),
            self.subset(&parts.test),
        ))
    }

    /// Writes features as `x0..x{d-1}` plus a trailing `label` column.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header: Vec<String> = (0..self.input_dim()).map(|i| format!("x{i}")).collect();
        header.push("label".into());
        w.write_record(&header)?;
        for (row, label) in self.features.iter_rows().zip(&self.labels) {
            let mut rec: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            rec.push(label.to_string());
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// `round(n · p_k)` per class, nudged by largest remainder so the counts sum
/// to `n`, and lifted so no class is empty.
pub fn class_counts_for(n: usize, proportions: &[f64]) -> Vec<usize> {
    let exact: Vec<f64> = proportions.iter().map(|p| n as f64 * p).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.round() as usize).collect();
    let residual = |counts: &[usize], i: usize| exact[i] - counts[i] as f64;
    loop {
        let total: usize = counts.iter().sum();
        if total == n {
            break;
        }
        if total < n {
            let i = (0..counts.len())
                .max_by(|&a, &b| residual(&counts, a).total_cmp(&residual(&counts, b)).then(b.cmp(&a)))
                .expect("non-empty");
            counts[i] += 1;
        } else {
            let i = (0..counts.len())
                .filter(|&i| counts[i] > 0)
                .min_by(|&a, &b| residual(&counts, a).total_cmp(&residual(&counts, b)).then(a.cmp(&b)))
                .expect("some class has samples");
            counts[i] -= 1;
        }
    }
    while let Some(empty) = counts.iter().position(|&c| c == 0) {
        let donor = crate::numerics::argmax(&counts.iter().map(|&c| c as f64).collect::<Vec<_>>());
        if counts[donor] <= 1 {
            break;
        }
        counts[donor] -= 1;
        counts[empty] += 1;
    }
    counts
}

/// Gaussian classes centred at `k · spacing` along a random unit direction.
pub fn generate_synthetic(params: &SyntheticParams, seed: u64) -> Result<Dataset> {
    params.validate()?;
    let mut rng = SeededRng::new(seed);
    let d = params.input_dim;

    let direction = loop {
        let v: Vec<f64> = (0..d).map(|_| rng.standard_normal()).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-8 {
            break v.into_iter().map(|x| x / norm).collect::<Vec<f64>>();
        }
    };

    let counts = class_counts_for(params.n_samples, &params.class_proportions);
    let mut labels: Vec<usize> = counts
        .iter()
        .enumerate()
        .flat_map(|(k, &n)| std::iter::repeat_n(k, n))
        .collect();
    rng.shuffle(&mut labels);

    let spacing = params.class_center_spacing;
    let mut data = Vec::with_capacity(params.n_samples * d);
    for &k in &labels {
        let jitter = params.overlap_jitter * spacing * rng.uniform(-1.0, 1.0);
        let t = k as f64 * spacing + jitter;
        for u in &direction {
            data.push(t * u + params.noise_sigma * rng.standard_normal());
        }
    }
    let features = Matrix::new(params.n_samples, d, data)?;
    Dataset::new(
        features,
        labels,
        params.num_classes,
        Provenance::Synthetic {
            seed,
            params: params.clone(),
            direction,
        },
    )
}

/// Reads a CSV with a header row. `num_classes` defaults to `max label + 1`.
pub fn load_csv(path: &Path, label_column: &str, num_classes: Option<usize>) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => match e.into_kind() {
                csv::ErrorKind::Io(io) => Error::io(path, io),
                _ => unreachable!(),
            },
            _ => Error::Csv(e),
        })?;
    let headers = reader.headers()?.clone();
    let label_idx = headers
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| Error::Schema(format!("no column named {label_column:?}")))?;
    let width = headers.len();

    let mut data = Vec::new();
    let mut labels = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let row = r + 1;
        let record = record?;
        if record.len() != width {
            return Err(Error::Parse {
                row,
                column: record.len().min(width) + 1,
                message: format!("expected {width} fields, found {}", record.len()),
            });
        }
        for (c, cell) in record.iter().enumerate() {
            if c == label_idx {
                let label = cell.parse::<usize>().map_err(|_| Error::Parse {
                    row,
                    column: c + 1,
                    message: format!("label {cell:?} is not a non-negative integer"),
                })?;
                labels.push(label);
            } else {
                let v = cell.parse::<f64>().ok().filter(|v| v.is_finite());
                data.push(v.ok_or_else(|| Error::Parse {
                    row,
                    column: c + 1,
                    message: format!("{cell:?} is not a finite number"),
                })?);
            }
        }
    }
    if labels.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let max_label = *labels.iter().max().expect("non-empty");
    let k = num_classes.unwrap_or(max_label + 1);
    if max_label >= k {
        return Err(Error::InvalidInput(format!(
            "label {max_label} found but only {k} classes declared"
        )));
    }
    let features = Matrix::new(labels.len(), width - 1, data)?;
    Dataset::new(
        features,
        labels,
        k,
        Provenance::Csv {
            path: path.to_path_buf(),
        },
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitSpec {
    pub train: f64,
    pub val: f64,
    pub test: f64,
    pub stratified: bool,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train: 0.8,
            val: 0.1,
            test: 0.1,
            stratified: true,
            seed: 0,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        let f = [self.train, self.val, self.test];
        if f.iter().any(|x| !(x.is_finite() && (0.0..=1.0).contains(x))) {
            return Err(Error::Config(format!("split fractions {f:?} must lie in [0, 1]")));
        }
        let total: f64 = f.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("split fractions sum to {total}, not 1")));
        }
        Ok(())
    }
}

/// Row indices of each split part.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Splits {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Sizes `(train, val, test)` for `n` items: train and val rounded, test gets
/// the rest. With `at_least_one`, every part with a non-zero fraction gets a
/// sample.
fn part_sizes(n: usize, spec: &SplitSpec, at_least_one: bool) -> [usize; 3] {
    let fractions = [spec.train, spec.val, spec.test];
    let mut sizes = [
        (n as f64 * spec.train).round() as usize,
        (n as f64 * spec.val).round() as usize,
        0,
    ];
    sizes[0] = sizes[0].min(n);
    sizes[1] = sizes[1].min(n - sizes[0]);
    sizes[2] = n - sizes[0] - sizes[1];
    if at_least_one {
        for part in 0..3 {
            if fractions[part] > 0.0 && sizes[part] == 0 {
                let donor = (0..3).max_by_key(|&p| (sizes[p], std::cmp::Reverse(p))).expect("3 parts");
                sizes[donor] -= 1;
                sizes[part] += 1;
            }
        }
    }
    sizes
}

pub fn split(ds: &Dataset, spec: &SplitSpec) -> Result<Splits> {
    spec.validate()?;
    let mut rng = SeededRng::new(spec.seed);
    let mut parts: [Vec<usize>; 3] = Default::default();

    if spec.stratified {
        let active = [spec.train, spec.val, spec.test]
            .iter()
            .filter(|f| **f > 0.0)
            .count();
        let mut by_class = vec![Vec::new(); ds.num_classes()];
        for (i, &l) in ds.labels().iter().enumerate() {
            by_class[l].push(i);
        }
        for (class, mut idx) in by_class.into_iter().enumerate() {
            if idx.is_empty() {
                continue;
            }
            if idx.len() < active {
                return Err(Error::Stratification(format!(
                    "class {class} has {} samples but {active} split parts",
                    idx.len()
                )));
            }
            rng.shuffle(&mut idx);
            let sizes = part_sizes(idx.len(), spec, true);
            let mut start = 0;
            for (part, size) in parts.iter_mut().zip(sizes) {
                part.extend_from_slice(&idx[start..start + size]);
                start += size;
            }
        }
        for part in &mut parts {
            rng.shuffle(part);
        }
    } else {
        let mut idx: Vec<usize> = (0..ds.len()).collect();
        rng.shuffle(&mut idx);
        let sizes = part_sizes(idx.len(), spec, false);
        let mut start = 0;
        for (part, size) in parts.iter_mut().zip(sizes) {
            part.extend_from_slice(&idx[start..start + size]);
            start += size;
        }
    }
    let [train, val, test] = parts;
    Ok(Splits { train, val, test })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn params(n: usize) -> SyntheticParams {
        SyntheticParams {
            n_samples: n,
            ..Default::default()
        }
    }

    #[test]
    fn default_counts_follow_severity_shares() {
        let ds = generate_synthetic(&params(1000), 3).unwrap();
        assert_eq!(ds.class_counts(), vec![541, 271, 111, 77]);
        assert_eq!(class_counts_for(2000, &SEVERITY_PROPORTIONS), vec![1082, 542, 222, 154]);
        assert_eq!(class_counts_for(7, &SEVERITY_PROPORTIONS).iter().sum::<usize>(), 7);
        assert!(class_counts_for(5, &SEVERITY_PROPORTIONS).iter().all(|&c| c >= 1));
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate_synthetic(&params(300), 17).unwrap();
        let b = generate_synthetic(&params(300), 17).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, generate_synthetic(&params(300), 18).unwrap());
    }

    #[test]
    fn noiseless_samples_sit_on_their_centres() {
        let p = SyntheticParams {
            noise_sigma: 0.0,
            ..params(200)
        };
        let ds = generate_synthetic(&p, 5).unwrap();
        let centers = ds.class_centers().unwrap();
        let mut correct = 0;
        for (row, &label) in ds.features().iter_rows().zip(ds.labels()) {
            let nearest = (0..centers.len())
                .min_by(|&a, &b| {
                    crate::numerics::euclidean(row, &centers[a])
                        .total_cmp(&crate::numerics::euclidean(row, &centers[b]))
                })
                .unwrap();
            assert!(crate::numerics::euclidean(row, &centers[label]) < 1e-12);
            correct += usize::from(nearest == label);
        }
        assert_eq!(correct, ds.len());
    }

    #[test]
    fn centre_distances_grow_linearly_with_class_gap() {
        let p = SyntheticParams {
            class_center_spacing: 1.7,
            ..params(100)
        };
        let ds = generate_synthetic(&p, 1).unwrap();
        let c = ds.class_centers().unwrap();
        for j in 0..4 {
            for k in 0..4 {
                let d = crate::numerics::euclidean(&c[j], &c[k]);
                assert!((d - 1.7 * j.abs_diff(k) as f64).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn generator_rejects_bad_params() {
        assert!(generate_synthetic(&params(3), 0).is_err());
        let p = SyntheticParams {
            class_proportions: vec![0.5, 0.5, 0.1, -0.1],
            ..params(100)
        };
        assert!(p.validate().is_err());
        let p = SyntheticParams {
            class_proportions: vec![0.5, 0.3, 0.1, 0.05],
            ..params(100)
        };
        assert!(p.validate().is_err());
    }

    #[test]
    fn stratified_split_preserves_class_shares() {
        let ds = generate_synthetic(&params(1000), 2).unwrap();
        let parts = split(&ds, &SplitSpec::default()).unwrap();
        let train = ds.subset(&parts.train).class_counts();
        for (got, want) in train.iter().zip([433usize, 217, 89, 62]) {
            assert!(got.abs_diff(want) <= 1, "{train:?}");
        }
        let mut all: Vec<usize> = parts
            .train
            .iter()
            .chain(&parts.val)
            .chain(&parts.test)
            .copied()
            .collect();
        all.sort_unstable();
        assert_eq!(all, (0..1000).collect::<Vec<_>>());
        assert_eq!(parts, split(&ds, &SplitSpec::default()).unwrap());
        for part in [&parts.val, &parts.test] {
            assert!(ds.subset(part).class_counts().iter().all(|&c| c > 0));
        }
    }

    #[test]
    fn whole_dataset_split() {
        let ds = generate_synthetic(&params(50), 2).unwrap();
        let spec = SplitSpec {
            train: 1.0,
            val: 0.0,
            test: 0.0,
            ..Default::default()
        };
        for stratified in [true, false] {
            let parts = split(&ds, &SplitSpec { stratified, ..spec.clone() }).unwrap();
            assert_eq!(parts.train.len(), 50);
            assert!(parts.val.is_empty() && parts.test.is_empty());
        }
    }

    #[test]
    fn tiny_class_cannot_be_stratified() {
        let features = Matrix::zeros(5, 1);
        let ds = Dataset::new(
            features,
            vec![0, 0, 0, 1, 1],
            2,
            Provenance::Csv { path: "x".into() },
        )
        .unwrap();
        assert!(matches!(
            split(&ds, &SplitSpec::default()),
            Err(Error::Stratification(_))
        ));
        assert!(split(&ds, &SplitSpec { stratified: false, ..Default::default() }).is_ok());
        assert!(split(&ds, &SplitSpec { train: 0.5, ..Default::default() }).is_err());
    }

    fn write(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn csv_fixture_loads_in_order() {
        let f = write("a,b,label\n1.5,2,0\n-1,0.25,2\n3,4,1\n");
        let ds = load_csv(f.path(), "label", None).unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.labels(), &[0, 2, 1]);
        assert_eq!(ds.features().row(1), &[-1.0, 0.25]);
        assert_eq!(ds.num_classes(), 3);
    }

    #[test]
    fn csv_errors() {
        let f = write("a,label\n1,0\n2,7\n");
        assert!(matches!(
            load_csv(f.path(), "label", Some(4)),
            Err(Error::InvalidInput(_))
        ));
        let f = write("a,label\n");
        assert!(matches!(load_csv(f.path(), "label", None), Err(Error::EmptyDataset)));
        let f = write("a,b\n1,0\n");
        assert!(matches!(load_csv(f.path(), "label", None), Err(Error::Schema(_))));
        let f = write("a,b,label\n1,2,0\n1,oops,1\n");
        match load_csv(f.path(), "label", None) {
            Err(Error::Parse { row, column, .. }) => assert_eq!((row, column), (2, 2)),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            load_csv(Path::new("/definitely/missing.csv"), "label", None),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn synthetic_export_reloads() {
        let ds = generate_synthetic(&params(40), 9).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ds.csv");
        ds.write_csv(&path).unwrap();
        let back = load_csv(&path, "label", Some(4)).unwrap();
        assert_eq!(back.labels(), ds.labels());
        assert_eq!(back.features(), ds.features());
    }
}
