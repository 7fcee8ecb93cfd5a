//! Functional datasets: ingestion, standardization, basis projection and
//! rolling-window construction from multivariate time series.

use std::collections::{BTreeMap, HashMap};
use std::io::Read;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::function_space::{Grid, GridFunction};
use crate::kernels::EigenBasis;

/// Columns whose mean squared norm falls below this after centering are
/// treated as constant.
const DEGENERATE_SCALE: f64 = 1e-14;

/// `n` observations of `p` curves on a shared grid, plus a scalar response.
#[derive(Clone, Debug, PartialEq)]
pub struct FunctionalDataset {
    grid: Arc<Grid>,
    n: usize,
    p: usize,
    /// `(i * p + j) * G + g`.
    values: Vec<f64>,
    response: Vec<f64>,
    predictor_names: Vec<String>,
    obs_ids: Vec<String>,
}

impl FunctionalDataset {
    /// `values` is laid out observation-major: curve `(i, j)` occupies
    /// `values[(i * p + j) * G..][..G]`.
    pub fn new(
        grid: Arc<Grid>,
        values: Vec<f64>,
        response: Vec<f64>,
        predictor_names: Vec<String>,
        obs_ids: Vec<String>,
    ) -> Result<FunctionalDataset> {
        let n = response.len();
        let p = predictor_names.len();
        if n == 0 {
            return Err(Error::InsufficientData(
                "dataset has no observations".into(),
            ));
        }
        if p == 0 {
            return Err(Error::InsufficientData(
                "need at least one predictor".into(),
            ));
        }
        if obs_ids.len() != n {
            return Err(Error::InvalidArgument(format!(
                "{} observation ids for {n} responses",
                obs_ids.len()
            )));
        }
        if values.len() != n * p * grid.len() {
            return Err(Error::InvalidArgument(format!(
                "expected {} curve values, got {}",
                n * p * grid.len(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("curve values".into()));
        }
        if response.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("response".into()));
        }
        Ok(FunctionalDataset {
            grid,
            n,
            p,
            values,
            response,
            predictor_names,
            obs_ids,
        })
    }

    /// Same as [`FunctionalDataset::new`] with ids `0..n`.
    pub fn with_default_ids(
        grid: Arc<Grid>,
        values: Vec<f64>,
        response: Vec<f64>,
        predictor_names: Vec<String>,
    ) -> Result<FunctionalDataset> {
        let ids = (0..response.len()).map(|i| i.to_string()).collect();
        FunctionalDataset::new(grid, values, response, predictor_names, ids)
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn response(&self) -> &[f64] {
        &self.response
    }

    pub fn predictor_names(&self) -> &[String] {
        &self.predictor_names
    }

    pub fn obs_ids(&self) -> &[String] {
        &self.obs_ids
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Observation `i`'s curve for predictor `j`.
    pub fn curve(&self, i: usize, j: usize) -> &[f64] {
        let g = self.grid.len();
        let start = (i * self.p + j) * g;
        &self.values[start..start + g]
    }

    pub fn curve_function(&self, i: usize, j: usize) -> GridFunction {
        GridFunction::new(self.grid.clone(), self.curve(i, j).to_vec())
            .expect("dataset curves are validated at construction")
    }

    /// Rows `indices`, in the given order.
    pub fn subset(&self, indices: &[usize]) -> FunctionalDataset {
        let row = self.p * self.grid.len();
        let mut values = Vec::with_capacity(indices.len() * row);
        for &i in indices {
            values.extend_from_slice(&self.values[i * row..(i + 1) * row]);
        }
        FunctionalDataset {
            grid: self.grid.clone(),
            n: indices.len(),
            p: self.p,
            values,
            response: indices.iter().map(|&i| self.response[i]).collect(),
            predictor_names: self.predictor_names.clone(),
            obs_ids: indices.iter().map(|&i| self.obs_ids[i].clone()).collect(),
        }
    }

    /// Replaces the response vector.
    pub fn with_response(mut self, response: Vec<f64>) -> Result<FunctionalDataset> {
        if response.len() != self.n {
            return Err(Error::InvalidArgument("response length changed".into()));
        }
        if response.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("response".into()));
        }
        self.response = response;
        Ok(self)
    }
}

/// Centering and scaling applied by [`standardize`], kept so the same
/// transform can be replayed on new curves.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StandardizationRecord {
    pub response_mean: f64,
    /// `p` mean curves on the dataset grid.
    pub predictor_means: Vec<Vec<f64>>,
    pub predictor_scales: Vec<f64>,
}

impl StandardizationRecord {
    /// The transform that changes nothing.
    pub fn identity(p: usize, grid_len: usize) -> StandardizationRecord {
        StandardizationRecord {
            response_mean: 0.0,
            predictor_means: vec![vec![0.0; grid_len]; p],
            predictor_scales: vec![1.0; p],
        }
    }

    /// Centers and scales `data`'s curves with the stored statistics and
    /// subtracts the stored response mean.
    pub fn apply(&self, data: &FunctionalDataset) -> Result<FunctionalDataset> {
        if self.predictor_scales.len() != data.p {
            return Err(Error::InvalidArgument(format!(
                "record covers {} predictors, data has {}",
                self.predictor_scales.len(),
                data.p
            )));
        }
        if self
            .predictor_means
            .iter()
            .any(|m| m.len() != data.grid.len())
        {
            return Err(Error::GridMismatch);
        }
        let g = data.grid.len();
        let mut values = data.values.clone();
        for (k, chunk) in values.chunks_mut(g).enumerate() {
            let j = k % data.p;
            let scale = self.predictor_scales[j];
            for (v, mean) in chunk.iter_mut().zip(&self.predictor_means[j]) {
                *v = (*v - mean) / scale;
            }
        }
        let response = data
            .response
            .iter()
            .map(|y| y - self.response_mean)
            .collect();
        Ok(FunctionalDataset {
            grid: data.grid.clone(),
            n: data.n,
            p: data.p,
            values,
            response,
            predictor_names: data.predictor_names.clone(),
            obs_ids: data.obs_ids.clone(),
        })
    }
}

/// Centers the response, centers each predictor pointwise and scales it so
/// that `n⁻¹ Σ_i ||X_ij||²_H = 1`.
pub fn standardize(data: &FunctionalDataset) -> Result<(FunctionalDataset, StandardizationRecord)> {
    let (n, p, g) = (data.n, data.p, data.grid.len());
    if n < 2 {
        return Err(Error::InsufficientData(format!(
            "standardization needs at least 2 observations, got {n}"
        )));
    }
    let nf = n as f64;
    let response_mean = data.response.iter().sum::<f64>() / nf;

    let mut predictor_means = vec![vec![0.0; g]; p];
    for i in 0..n {
        for (j, mean) in predictor_means.iter_mut().enumerate() {
            for (m, v) in mean.iter_mut().zip(data.curve(i, j)) {
                *m += v;
            }
        }
    }
    for mean in &mut predictor_means {
        mean.iter_mut().for_each(|m| *m /= nf);
    }

    let mut sq = vec![0.0; p];
    let mut centered = vec![0.0; g];
    for i in 0..n {
        for j in 0..p {
            for ((c, v), m) in centered
                .iter_mut()
                .zip(data.curve(i, j))
                .zip(&predictor_means[j])
            {
                *c = v - m;
            }
            sq[j] += data.grid.inner(&centered, &centered);
        }
    }
    let mut predictor_scales = Vec::with_capacity(p);
    for (j, s) in sq.iter().enumerate() {
        let mean_sq = s / nf;
        if mean_sq < DEGENERATE_SCALE {
            return Err(Error::DegeneratePredictor(data.predictor_names[j].clone()));
        }
        predictor_scales.push(mean_sq.sqrt());
    }

    let record = StandardizationRecord {
        response_mean,
        predictor_means,
        predictor_scales,
    };
    let standardized = record.apply(data)?;
    Ok((standardized, record))
}

/// Basis scores `s_ijl = <X_ij, v_l>_H` for every observation and predictor.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreTensor {
    basis: Arc<EigenBasis>,
    n: usize,
    p: usize,
    m: usize,
    /// `(j * n + i) * m + l`: each predictor's `n × m` block is contiguous.
    scores: Vec<f64>,
}

impl ScoreTensor {
    /// Wraps precomputed scores laid out as `(j * n + i) * m + l`.
    pub fn from_raw(
        basis: Arc<EigenBasis>,
        n: usize,
        p: usize,
        scores: Vec<f64>,
    ) -> Result<ScoreTensor> {
        let m = basis.len();
        if scores.len() != n * p * m {
            return Err(Error::InvalidArgument(format!(
                "expected {} scores, got {}",
                n * p * m,
                scores.len()
            )));
        }
        if scores.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("scores".into()));
        }
        Ok(ScoreTensor {
            basis,
            n,
            p,
            m,
            scores,
        })
    }

    pub fn basis(&self) -> &Arc<EigenBasis> {
        &self.basis
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// Predictor `j`'s `n × m` row-major block.
    #[inline]
    pub fn block(&self, j: usize) -> &[f64] {
        let len = self.n * self.m;
        &self.scores[j * len..(j + 1) * len]
    }

    /// Scores of observation `i`, predictor `j`.
    #[inline]
    pub fn row(&self, i: usize, j: usize) -> &[f64] {
        let start = (j * self.n + i) * self.m;
        &self.scores[start..start + self.m]
    }

    pub fn get(&self, i: usize, j: usize, l: usize) -> f64 {
        self.scores[(j * self.n + i) * self.m + l]
    }
}

pub fn project_scores(data: &FunctionalDataset, basis: &Arc<EigenBasis>) -> Result<ScoreTensor> {
    project_scores_with(data, basis, Exec::default())
}

/// [`project_scores`] with an explicit schedule over predictors.
pub fn project_scores_with(
    data: &FunctionalDataset,
    basis: &Arc<EigenBasis>,
    exec: Exec,
) -> Result<ScoreTensor> {
    if basis.grid().as_ref() != data.grid.as_ref() {
        return Err(Error::GridMismatch);
    }
    let (n, p, m) = (data.n, data.p, basis.len());
    let grid = &data.grid;
    // Fold the quadrature weights into the eigenfunctions once.
    let weighted: Vec<Vec<f64>> = (0..m)
        .map(|l| {
            basis
                .eigenfunction(l)
                .iter()
                .zip(grid.weights())
                .map(|(v, w)| v * w)
                .collect()
        })
        .collect();
    let blocks = exec.map(p, |j| {
        let mut block = Vec::with_capacity(n * m);
        for i in 0..n {
            let x = data.curve(i, j);
            for wv in &weighted {
                block.push(wv.iter().zip(x).map(|(a, b)| a * b).sum::<f64>());
            }
        }
        block
    });
    Ok(ScoreTensor {
        basis: basis.clone(),
        n,
        p,
        m,
        scores: blocks.concat(),
    })
}

// ---------------------------------------------------------------------------
// CSV ingestion

fn sort_ids(ids: &mut [String]) {
    let numeric: Option<Vec<i64>> = ids.iter().map(|s| s.trim().parse().ok()).collect();
    if numeric.is_some() {
        ids.sort_by_key(|s| s.trim().parse::<i64>().unwrap_or(0));
    } else {
        ids.sort();
    }
}

fn parse_value(raw: &str, what: impl Fn() -> String) -> Result<f64> {
    let v: f64 = raw
        .trim()
        .parse()
        .map_err(|_| Error::Ingestion(format!("{}: `{raw}` is not a number", what())))?;
    if !v.is_finite() {
        return Err(Error::Ingestion(format!("{}: non-finite value", what())));
    }
    Ok(v)
}

type CurveCells = HashMap<(String, String), BTreeMap<usize, f64>>;

fn read_long_curves(
    rdr: &mut csv::Reader<impl Read>,
    obs_order: &mut Vec<String>,
    predictors: &mut Vec<String>,
) -> Result<CurveCells> {
    let mut cells: CurveCells = HashMap::new();
    let mut seen_pred: HashMap<String, ()> = HashMap::new();
    let mut seen_obs: HashMap<String, ()> = HashMap::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() < 4 {
            return Err(Error::Ingestion(format!(
                "curve row {} has {} fields, expected 4",
                line + 2,
                rec.len()
            )));
        }
        let obs = rec[0].trim().to_string();
        let pred = rec[1].trim().to_string();
        let idx: usize = rec[2].trim().parse().map_err(|_| {
            Error::Ingestion(format!(
                "curve row {}: bad grid_index `{}`",
                line + 2,
                &rec[2]
            ))
        })?;
        let value = parse_value(&rec[3], || format!("({obs}, {pred}, {idx})"))?;
        if seen_pred.insert(pred.clone(), ()).is_none() {
            predictors.push(pred.clone());
        }
        if seen_obs.insert(obs.clone(), ()).is_none() {
            obs_order.push(obs.clone());
        }
        let cell = cells.entry((obs.clone(), pred.clone())).or_default();
        if cell.insert(idx, value).is_some() {
            return Err(Error::Ingestion(format!(
                "duplicate curve cell (obs {obs}, predictor {pred}, grid_index {idx})"
            )));
        }
    }
    Ok(cells)
}

fn read_wide_curves(
    rdr: &mut csv::Reader<impl Read>,
    headers: &csv::StringRecord,
    obs_order: &mut Vec<String>,
    predictors: &mut Vec<String>,
) -> Result<CurveCells> {
    // Column k > 0 is `predictor:grid_index`.
    let mut columns = Vec::with_capacity(headers.len() - 1);
    for h in headers.iter().skip(1) {
        let (pred, idx) = h
            .rsplit_once(':')
            .ok_or_else(|| Error::Ingestion(format!("wide column `{h}` is not predictor:index")))?;
        let idx: usize = idx
            .trim()
            .parse()
            .map_err(|_| Error::Ingestion(format!("wide column `{h}` has a bad grid index")))?;
        let pred = pred.trim().to_string();
        if !predictors.contains(&pred) {
            predictors.push(pred.clone());
        }
        columns.push((pred, idx));
    }
    let mut cells: CurveCells = HashMap::new();
    let mut seen = std::collections::HashSet::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != headers.len() {
            return Err(Error::Ingestion(format!(
                "curve row {} has {} fields, expected {}",
                line + 2,
                rec.len(),
                headers.len()
            )));
        }
        let obs = rec[0].trim().to_string();
        if !seen.insert(obs.clone()) {
            return Err(Error::Ingestion(format!("duplicate observation {obs}")));
        }
        obs_order.push(obs.clone());
        for ((pred, idx), raw) in columns.iter().zip(rec.iter().skip(1)) {
            let value = parse_value(raw, || format!("({obs}, {pred}, {idx})"))?;
            let cell = cells.entry((obs.clone(), pred.clone())).or_default();
            if cell.insert(*idx, value).is_some() {
                return Err(Error::Ingestion(format!(
                    "duplicate curve cell (obs {obs}, predictor {pred}, grid_index {idx})"
                )));
            }
        }
    }
    Ok(cells)
}

/// Reads a curve table and a response table into a dataset.
///
/// The curve table is either long (`obs_id,predictor_id,grid_index,value`)
/// or wide (`obs_id,<predictor>:<grid_index>,...`). The grid is uniform on
/// `[0, 1]` with as many points as there are grid indices. Observations are
/// ordered by id (numerically when every id is an integer), predictors by
/// first appearance.
pub fn load_curves(curves: impl Read, responses: impl Read) -> Result<FunctionalDataset> {
    read_dataset(curves, Some(responses))
}

/// Reads a curve table alone, for prediction. Responses are set to zero.
pub fn load_curves_only(curves: impl Read) -> Result<FunctionalDataset> {
    read_dataset(curves, None::<&[u8]>)
}

fn read_dataset(curves: impl Read, responses: Option<impl Read>) -> Result<FunctionalDataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(curves);
    let headers = rdr.headers()?.clone();
    let mut obs_order = Vec::new();
    let mut predictors = Vec::new();
    let is_long = headers.len() >= 4
        && headers[0].eq_ignore_ascii_case("obs_id")
        && headers[1].eq_ignore_ascii_case("predictor_id")
        && headers[2].eq_ignore_ascii_case("grid_index");
    let cells = if is_long {
        read_long_curves(&mut rdr, &mut obs_order, &mut predictors)?
    } else if headers.len() >= 2 && headers.iter().skip(1).all(|h| h.contains(':')) {
        read_wide_curves(&mut rdr, &headers, &mut obs_order, &mut predictors)?
    } else {
        return Err(Error::Ingestion(
            "curve header must be obs_id,predictor_id,grid_index,value or obs_id,<pred>:<idx>,..."
                .into(),
        ));
    };
    if obs_order.is_empty() {
        return Err(Error::Ingestion("curve table has no rows".into()));
    }

    let mut responses_by_obs: HashMap<String, f64> = HashMap::new();
    let has_responses = responses.is_some();
    let mut rrdr = responses.map(|r| {
        csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(r)
    });
    for (line, rec) in rrdr.iter_mut().flat_map(|r| r.records()).enumerate() {
        let rec = rec?;
        if rec.len() < 2 {
            return Err(Error::Ingestion(format!(
                "response row {} is incomplete",
                line + 2
            )));
        }
        let obs = rec[0].trim().to_string();
        let y = parse_value(&rec[1], || format!("response for {obs}"))?;
        if responses_by_obs.insert(obs.clone(), y).is_some() {
            return Err(Error::Ingestion(format!(
                "duplicate response for obs {obs}"
            )));
        }
    }

    let grid_len = cells.values().map(|c| c.len()).max().unwrap_or(0);
    if grid_len < 2 {
        return Err(Error::Ingestion(
            "curves need at least 2 grid points".into(),
        ));
    }
    let mut ids = obs_order;
    sort_ids(&mut ids);
    let known: std::collections::HashSet<&String> = ids.iter().collect();
    for id in responses_by_obs.keys() {
        if !known.contains(id) {
            return Err(Error::Ingestion(format!(
                "obs {id} has a response but no curves"
            )));
        }
    }

    let p = predictors.len();
    let mut values = Vec::with_capacity(ids.len() * p * grid_len);
    let mut response = Vec::with_capacity(ids.len());
    for obs in &ids {
        let y = match responses_by_obs.get(obs) {
            Some(y) => *y,
            None if !has_responses => 0.0,
            None => {
                return Err(Error::Ingestion(format!(
                    "obs {obs} has curves but no response"
                )))
            }
        };
        response.push(y);
        for pred in &predictors {
            let cell = cells.get(&(obs.clone(), pred.clone())).ok_or_else(|| {
                Error::Ingestion(format!("missing curve for obs {obs}, predictor {pred}"))
            })?;
            for g in 0..grid_len {
                let v = cell.get(&g).ok_or_else(|| {
                    Error::Ingestion(format!(
                        "missing cell (obs {obs}, predictor {pred}, grid_index {g})"
                    ))
                })?;
                values.push(*v);
            }
            if cell.len() != grid_len {
                return Err(Error::Ingestion(format!(
                    "curve for obs {obs}, predictor {pred} has out-of-range grid indices"
                )));
            }
        }
    }
    let grid = Arc::new(Grid::uniform(grid_len)?);
    FunctionalDataset::new(grid, values, response, predictors, ids)
}

// ---------------------------------------------------------------------------
// Time series and rolling windows

/// A multivariate series indexed by strictly increasing time stamps.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeSeries {
    pub times: Vec<String>,
    pub names: Vec<String>,
    /// One vector per named column, each of length `times.len()`.
    pub columns: Vec<Vec<f64>>,
}

fn is_iso_date(s: &str) -> bool {
    let b = s.as_bytes();
    let digits = |r: std::ops::Range<usize>| b[r].iter().all(u8::is_ascii_digit);
    match b.len() {
        7 => digits(0..4) && b[4] == b'-' && digits(5..7),
        10 => digits(0..4) && b[4] == b'-' && digits(5..7) && b[7] == b'-' && digits(8..10),
        _ => false,
    }
}

impl TimeSeries {
    /// Reads `time,<series>...` CSV. Time stamps are integers or ISO dates
    /// (`YYYY-MM` or `YYYY-MM-DD`) and must strictly increase.
    pub fn from_csv(reader: impl Read) -> Result<TimeSeries> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.len() < 2 {
            return Err(Error::Ingestion(
                "time series needs a time column and at least one series".into(),
            ));
        }
        let names: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
        let mut times = Vec::new();
        let mut columns = vec![Vec::new(); names.len()];
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() != headers.len() {
                return Err(Error::Ingestion(format!(
                    "series row {} has {} fields, expected {}",
                    line + 2,
                    rec.len(),
                    headers.len()
                )));
            }
            times.push(rec[0].to_string());
            for (k, raw) in rec.iter().skip(1).enumerate() {
                columns[k].push(parse_value(raw, || {
                    format!("series row {}, column {}", line + 2, names[k])
                })?);
            }
        }
        let ints: Option<Vec<i64>> = times.iter().map(|t| t.parse().ok()).collect();
        let increasing = match ints {
            Some(v) => v.windows(2).all(|w| w[0] < w[1]),
            None => {
                times
                    .iter()
                    .all(|t| is_iso_date(t) && t.len() == times[0].len())
                    && times.windows(2).all(|w| w[0] < w[1])
            }
        };
        if !increasing {
            return Err(Error::Ingestion(
                "time column must hold strictly increasing integers or ISO dates".into(),
            ));
        }
        Ok(TimeSeries {
            times,
            names,
            columns,
        })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Options for [`rolling_windows`].
#[derive(Clone, Debug, PartialEq)]
pub struct WindowSpec {
    pub target: String,
    pub window: usize,
    pub horizon: usize,
    /// Keep the target's own history among the predictors.
    pub target_as_predictor: bool,
}

impl WindowSpec {
    pub fn new(target: impl Into<String>) -> WindowSpec {
        WindowSpec {
            target: target.into(),
            window: 12,
            horizon: 1,
            target_as_predictor: false,
        }
    }
}

/// Turns each run of `window` consecutive rows into one functional
/// observation. The response is the target `horizon` steps after the window.
pub fn rolling_windows(series: &TimeSeries, spec: &WindowSpec) -> Result<FunctionalDataset> {
    let target = series
        .names
        .iter()
        .position(|n| *n == spec.target)
        .ok_or_else(|| Error::InvalidArgument(format!("no series named `{}`", spec.target)))?;
    if spec.window < 2 {
        return Err(Error::InvalidArgument(
            "window must span at least 2 time points".into(),
        ));
    }
    if spec.horizon < 1 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    let t = series.len();
    if t < spec.window + spec.horizon {
        return Err(Error::InsufficientData(format!(
            "{t} rows cannot form a window of {} with horizon {}",
            spec.window, spec.horizon
        )));
    }
    let n = t - spec.window - spec.horizon + 1;
    let predictors: Vec<usize> = (0..series.names.len())
        .filter(|&k| spec.target_as_predictor || k != target)
        .collect();
    if predictors.is_empty() {
        return Err(Error::InsufficientData(
            "no predictor columns besides the target".into(),
        ));
    }
    let mut values = Vec::with_capacity(n * predictors.len() * spec.window);
    let mut response = Vec::with_capacity(n);
    for i in 0..n {
        for &k in &predictors {
            values.extend_from_slice(&series.columns[k][i..i + spec.window]);
        }
        response.push(series.columns[target][i + spec.window + spec.horizon - 1]);
    }
    let width = n.to_string().len();
    let ids = (1..=n).map(|i| format!("{i:0width$}")).collect();
    let names = predictors
        .iter()
        .map(|&k| series.names[k].clone())
        .collect();
    let grid = Arc::new(Grid::uniform(spec.window)?);
    FunctionalDataset::new(grid, values, response, names, ids)
}
