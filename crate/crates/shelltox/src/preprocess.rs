//! Pipeline from raw monitoring tables to the consolidated labeled
//! dataset: per-visit sample selection, toxicity matching and
//! binarization, station-gap interpolation, environmental window
//! aggregates, class-overlap cleaning, the stratified 70/30 split, and
//! a 2-D projection for plotting.
//!
//! Date handling is day-granular throughout. All lookback windows end
//! the day before the observation; the toxicity match window starts on
//! the observation day itself.

use std::collections::BTreeMap;

use chrono::{Datelike, Days, NaiveDate};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Dataset, Label};
use crate::ingest::{
    self, Depth, HarmonizedPhyto, IngestError, MeteoRow, RiverRow, SeawaterRow, ToxMethod,
    ToxResult, ToxTest,
};
use crate::models::Scaler;
use crate::resample::{self, round_half_away, EnnOutcome, ResampleError};
use crate::seeding;
use crate::species::{SpeciesColumn, FEATURE_NAMES, N_FEATURES};

#[derive(Debug, Error, PartialEq)]
pub enum PreprocessError {
    #[error("missing value: {0}")]
    MissingValue(String),
    #[error("stratified split needs at least 2 instances of class {class}, found {found}")]
    DegenerateClass { class: Label, found: usize },
    #[error("train fraction must lie strictly between 0 and 1, got {0}")]
    BadFraction(f64),
    #[error("operation needs a non-empty dataset")]
    EmptyInput,
    #[error(transparent)]
    Resample(#[from] ResampleError),
}

/// Window lengths (days) and the regulatory decision limit (µg of
/// okadaic-acid equivalents per kg of meat).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WindowConfig {
    /// Max days between an observation and the toxin test matched to it.
    pub tox_match_days: i64,
    /// Lookback window for meteorological aggregates.
    pub meteo_window_days: i64,
    /// Lookback window for accumulated river discharge.
    pub river_window_days: i64,
    /// Max date distance when filling seawater gaps from other stations.
    pub interp_days: i64,
    /// Concentrations strictly above this are positive.
    pub regulatory_limit: f64,
}

impl Default for WindowConfig {
    fn default() -> Self {
        WindowConfig {
            tox_match_days: 30,
            meteo_window_days: 20,
            river_window_days: 30,
            interp_days: 30,
            regulatory_limit: 176.0,
        }
    }
}

/// Which side of the observation date the toxin test is taken from.
/// `Forward` labels an observation with the outcome it precedes (the
/// default); `Backward` is the alternative reading where the test may
/// be up to the window older than the observation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MatchDirection {
    #[default]
    Forward,
    Backward,
}

/// The sample kept for one station visit: the depth with the highest
/// total DSP-producer abundance.
#[derive(Debug, Clone, PartialEq)]
pub struct Visit {
    pub date: NaiveDate,
    pub station: String,
    pub depth: Depth,
    pub dsp_tot: f64,
    /// Abundance per dedicated species column, in feature order.
    pub species_cells: [f64; 5],
}

/// Collapse the phytoplankton table to one sample per (date, station)
/// visit. Among the depths sampled on a visit the one with the largest
/// DSP-tot wins; ties go to the shallowest depth, with integrated
/// samples ordered after every concrete depth. Rows of the same
/// species within one sample are summed. Output is sorted by
/// (date, station).
pub fn select_sample_per_visit(phyto: &HarmonizedPhyto) -> Vec<Visit> {
    #[derive(Default)]
    struct Acc {
        dsp_tot: f64,
        cells: [f64; 5],
    }
    let mut groups: BTreeMap<(NaiveDate, &str), BTreeMap<Depth, Acc>> = BTreeMap::new();
    for rec in phyto.records() {
        let acc = groups
            .entry((rec.date, rec.station.as_str()))
            .or_default()
            .entry(rec.depth)
            .or_insert_with(Acc::default);
        if crate::species::is_dsp_producer(&rec.species) {
            acc.dsp_tot += rec.abundance;
        }
        if let Some(col) = crate::species::species_column(&rec.species) {
            let slot = SpeciesColumn::ALL.iter().position(|c| *c == col).unwrap();
            acc.cells[slot] += rec.abundance;
        }
    }
    groups
        .into_iter()
        .map(|((date, station), depths)| {
            let mut best: Option<(Depth, &Acc)> = None;
            for (depth, acc) in &depths {
                match best {
                    Some((_, b)) if acc.dsp_tot <= b.dsp_tot => {}
                    _ => best = Some((*depth, acc)),
                }
            }
            let (depth, acc) = best.expect("group is non-empty");
            Visit {
                date,
                station: station.to_string(),
                depth,
                dsp_tot: acc.dsp_tot,
                species_cells: acc.cells,
            }
        })
        .collect()
}

/// Binary label of one toxin test. Bioassay results pass through;
/// LC-MS concentrations are positive strictly above the limit, so an
/// at-limit reading is negative.
pub fn binarize_toxicity(test: &ToxTest, limit: f64) -> Result<Label, PreprocessError> {
    match test.method {
        ToxMethod::Bioassay => match test.result {
            Some(ToxResult::Pos) => Ok(1),
            Some(ToxResult::Neg) => Ok(0),
            None => Err(PreprocessError::MissingValue(format!(
                "bioassay test at {}/{} has no result",
                test.date, test.station
            ))),
        },
        ToxMethod::Lcms => match test.concentration {
            Some(c) => Ok(u8::from(c > limit)),
            None => Err(PreprocessError::MissingValue(format!(
                "lcms test at {}/{} has no concentration",
                test.date, test.station
            ))),
        },
    }
}

/// Find the toxin test an observation is labeled with: the earliest
/// same-station test dated on or after the observation and at most
/// `tox_match_days` later. With [`MatchDirection::Backward`] the window
/// flips to tests on or before the observation and the nearest (latest)
/// one wins. Ties on the chosen date go to the first test in input
/// order.
pub fn match_toxicity<'t>(
    date: NaiveDate,
    station: &str,
    tests: &'t [ToxTest],
    cfg: &WindowConfig,
    direction: MatchDirection,
) -> Option<&'t ToxTest> {
    let mut best: Option<&ToxTest> = None;
    for t in tests.iter().filter(|t| t.station == station) {
        let delta = (t.date - date).num_days();
        let candidate = match direction {
            MatchDirection::Forward => (0..=cfg.tox_match_days).contains(&delta),
            MatchDirection::Backward => (-cfg.tox_match_days..=0).contains(&delta),
        };
        if !candidate {
            continue;
        }
        let better = match (direction, best) {
            (_, None) => true,
            (MatchDirection::Forward, Some(b)) => t.date < b.date,
            (MatchDirection::Backward, Some(b)) => t.date > b.date,
        };
        if better {
            best = Some(t);
        }
    }
    best
}

/// [`match_toxicity`] followed by [`binarize_toxicity`].
pub fn match_label(
    date: NaiveDate,
    station: &str,
    tests: &[ToxTest],
    cfg: &WindowConfig,
    direction: MatchDirection,
) -> Result<Option<Label>, PreprocessError> {
    match match_toxicity(date, station, tests, cfg, direction) {
        Some(t) => binarize_toxicity(t, cfg.regulatory_limit).map(Some),
        None => Ok(None),
    }
}

/// Donor preference for station-gap interpolation. Stations with an
/// explicit list are tried in that order; everything else falls back to
/// lexicographic order after the listed donors. The default ranking is
/// purely lexicographic.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StationRanking {
    order: BTreeMap<String, Vec<String>>,
}

impl StationRanking {
    pub fn from_config(order: BTreeMap<String, Vec<String>>) -> Self {
        StationRanking { order }
    }

    /// Sort key of `donor` as a fill source for `station`: listed
    /// donors first (by list position), then the rest by name.
    fn key(&self, station: &str, donor: &str) -> (usize, String) {
        if let Some(list) = self.order.get(station) {
            if let Some(pos) = list.iter().position(|s| s == donor) {
                return (pos, String::new());
            }
        }
        (usize::MAX, donor.to_string())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct InterpAudit {
    pub filled_sst: usize,
    pub filled_salinity: usize,
    pub missing_sst: usize,
    pub missing_salinity: usize,
}

/// Fill seawater gaps from other stations. A missing SST or salinity
/// cell takes the value measured at the donor minimizing, in order:
/// date distance, station rank, date (earlier first). Only values
/// present in the input act as donors, so fills never chain, and the
/// donor is always an alternate station. Gaps with no donor within
/// `interp_days` stay missing.
pub fn interpolate_station_gaps(
    rows: &[SeawaterRow],
    ranking: &StationRanking,
    cfg: &WindowConfig,
) -> (Vec<SeawaterRow>, InterpAudit) {
    let mut audit = InterpAudit::default();
    let fill = |pick: fn(&SeawaterRow) -> Option<f64>,
                filled: &mut usize,
                missing: &mut usize|
     -> Vec<Option<f64>> {
        let donors: Vec<(&SeawaterRow, f64)> =
            rows.iter().filter_map(|r| pick(r).map(|v| (r, v))).collect();
        rows.iter()
            .map(|row| {
                if let Some(v) = pick(row) {
                    return Some(v);
                }
                let best = donors
                    .iter()
                    .filter(|(d, _)| {
                        d.station != row.station
                            && (d.date - row.date).num_days().abs() <= cfg.interp_days
                    })
                    .min_by_key(|(d, _)| {
                        (
                            (d.date - row.date).num_days().abs(),
                            ranking.key(&row.station, &d.station),
                            d.date,
                        )
                    });
                match best {
                    Some((_, v)) => {
                        *filled += 1;
                        Some(*v)
                    }
                    None => {
                        *missing += 1;
                        None
                    }
                }
            })
            .collect()
    };
    let sst = fill(|r| r.sst, &mut audit.filled_sst, &mut audit.missing_sst);
    let sal = fill(|r| r.salinity, &mut audit.filled_salinity, &mut audit.missing_salinity);
    let out = rows
        .iter()
        .zip(sst.into_iter().zip(sal))
        .map(|(row, (sst, salinity))| SeawaterRow { sst, salinity, ..row.clone() })
        .collect();
    (out, audit)
}

/// Environmental aggregates for one observation date, or `None` where
/// the lookback window is incomplete.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EnvAggregates {
    pub air_temp: Option<f64>,
    pub wind: Option<f64>,
    pub precip: Option<f64>,
    pub solar: Option<f64>,
    pub river_flow: Option<f64>,
}

/// Windowed aggregates strictly before the observation date: mean air
/// temperature and wind, accumulated precipitation and insolation over
/// `meteo_window_days`, and accumulated river discharge over
/// `river_window_days`. A single absent day voids every aggregate of
/// its table; duplicate dates keep their first row.
pub fn aggregate_env(
    obs: NaiveDate,
    meteo: &[MeteoRow],
    river: &[RiverRow],
    cfg: &WindowConfig,
) -> EnvAggregates {
    let mut out = EnvAggregates::default();

    let mut by_date: BTreeMap<NaiveDate, &MeteoRow> = BTreeMap::new();
    for row in meteo {
        by_date.entry(row.date).or_insert(row);
    }
    let window: Option<Vec<&MeteoRow>> = (1..=cfg.meteo_window_days)
        .map(|d| obs.checked_sub_days(Days::new(d as u64)).and_then(|day| by_date.get(&day).copied()))
        .collect();
    if let Some(days) = window {
        let n = days.len() as f64;
        out.air_temp = Some(days.iter().map(|r| r.air_temp).sum::<f64>() / n);
        out.wind = Some(days.iter().map(|r| r.wind).sum::<f64>() / n);
        out.precip = Some(days.iter().map(|r| r.precip).sum());
        out.solar = Some(days.iter().map(|r| r.solar).sum());
    }

    let mut flow_by_date: BTreeMap<NaiveDate, f64> = BTreeMap::new();
    for row in river {
        flow_by_date.entry(row.date).or_insert(row.flow);
    }
    out.river_flow = (1..=cfg.river_window_days)
        .map(|d| obs.checked_sub_days(Days::new(d as u64)).and_then(|day| flow_by_date.get(&day).copied()))
        .sum::<Option<f64>>();
    out
}

/// One row of the consolidated dataset: the fixed 14-feature vector
/// plus its visit identity and, when a toxin test matched, the label.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsolidatedInstance {
    pub date: NaiveDate,
    pub station: String,
    pub features: [f64; N_FEATURES],
    pub label: Option<Label>,
}

/// Why visits fell out of the consolidated dataset. A dropped visit is
/// counted once in `dropped` and once per absent value in the
/// `missing_*` breakdown.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DropAudit {
    pub visits: usize,
    pub labeled: usize,
    pub unlabeled: usize,
    pub dropped: usize,
    pub missing_sst: usize,
    pub missing_salinity: usize,
    pub missing_meteo: usize,
    pub missing_river: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConsolidateOutput {
    pub labeled: Vec<ConsolidatedInstance>,
    pub unlabeled: Vec<ConsolidatedInstance>,
    pub audit: DropAudit,
}

/// Assemble consolidated instances from the per-visit samples and the
/// environmental tables. Visits missing any feature value are dropped;
/// visits with all features but no matched toxin test are kept in the
/// prediction-only `unlabeled` set.
pub fn consolidate(
    visits: &[Visit],
    tests: &[ToxTest],
    seawater: &[SeawaterRow],
    meteo: &[MeteoRow],
    river: &[RiverRow],
    cfg: &WindowConfig,
    direction: MatchDirection,
) -> Result<ConsolidateOutput, PreprocessError> {
    let mut sea_by_visit: BTreeMap<(NaiveDate, &str), &SeawaterRow> = BTreeMap::new();
    for row in seawater {
        sea_by_visit.entry((row.date, row.station.as_str())).or_insert(row);
    }

    let mut out = ConsolidateOutput {
        labeled: Vec::new(),
        unlabeled: Vec::new(),
        audit: DropAudit { visits: visits.len(), ..DropAudit::default() },
    };
    for visit in visits {
        let sea = sea_by_visit.get(&(visit.date, visit.station.as_str()));
        let sst = sea.and_then(|r| r.sst);
        let salinity = sea.and_then(|r| r.salinity);
        let env = aggregate_env(visit.date, meteo, river, cfg);

        let mut complete = true;
        if sst.is_none() {
            out.audit.missing_sst += 1;
            complete = false;
        }
        if salinity.is_none() {
            out.audit.missing_salinity += 1;
            complete = false;
        }
        if env.air_temp.is_none() {
            out.audit.missing_meteo += 1;
            complete = false;
        }
        if env.river_flow.is_none() {
            out.audit.missing_river += 1;
            complete = false;
        }
        if !complete {
            out.audit.dropped += 1;
            continue;
        }

        let mut features = [0.0; N_FEATURES];
        features[0] = f64::from(visit.date.month());
        features[1] = visit.dsp_tot;
        features[2..7].copy_from_slice(&visit.species_cells);
        features[7] = sst.unwrap();
        features[8] = salinity.unwrap();
        features[9] = env.air_temp.unwrap();
        features[10] = env.wind.unwrap();
        features[11] = env.precip.unwrap();
        features[12] = env.solar.unwrap();
        features[13] = env.river_flow.unwrap();

        let label = match_label(visit.date, &visit.station, tests, cfg, direction)?;
        let instance = ConsolidatedInstance {
            date: visit.date,
            station: visit.station.clone(),
            features,
            label,
        };
        match label {
            Some(_) => {
                out.audit.labeled += 1;
                out.labeled.push(instance);
            }
            None => {
                out.audit.unlabeled += 1;
                out.unlabeled.push(instance);
            }
        }
    }
    Ok(out)
}

/// Header of `consolidated.csv`: the 14 feature columns in fixed order,
/// then label (empty when unlabeled), date and station.
pub fn consolidated_header() -> String {
    format!("{},label,date,station", FEATURE_NAMES.join(","))
}

pub fn consolidated_to_csv(instances: &[ConsolidatedInstance]) -> String {
    let mut s = consolidated_header();
    s.push('\n');
    for inst in instances {
        for v in &inst.features {
            s.push_str(&v.to_string());
            s.push(',');
        }
        let label = inst.label.map(|l| l.to_string()).unwrap_or_default();
        s.push_str(&format!("{},{},{}\n", label, inst.date, inst.station));
    }
    s
}

pub fn consolidated_from_csv(text: &str) -> Result<Vec<ConsolidatedInstance>, IngestError> {
    let header = consolidated_header();
    let mut rows = ingest::open(text, &header)?;
    let mut out = Vec::new();
    while let Some(row) = rows.next_row() {
        let (line, rec) = row?;
        let mut features = [0.0; N_FEATURES];
        for (i, slot) in features.iter_mut().enumerate() {
            *slot = ingest::parse_f64(
                ingest::field(&rec, i, FEATURE_NAMES[i], line)?,
                FEATURE_NAMES[i],
                line,
            )?;
        }
        let label = match ingest::field(&rec, N_FEATURES, "label", line)? {
            "" => None,
            "0" => Some(0),
            "1" => Some(1),
            other => {
                return Err(ingest::bad(line, format!("label must be 0|1|empty, got `{other}`")))
            }
        };
        out.push(ConsolidatedInstance {
            date: ingest::parse_date(ingest::field(&rec, N_FEATURES + 1, "date", line)?, line)?,
            station: ingest::field(&rec, N_FEATURES + 2, "station", line)?.to_string(),
            features,
            label,
        });
    }
    Ok(out)
}

/// Feature matrix of the labeled instances; unlabeled ones are skipped.
pub fn to_dataset(instances: &[ConsolidatedInstance]) -> Dataset {
    let labeled: Vec<&ConsolidatedInstance> =
        instances.iter().filter(|i| i.label.is_some()).collect();
    Dataset::new(
        labeled.iter().map(|i| i.features.to_vec()).collect(),
        labeled.iter().map(|i| i.label.unwrap()).collect(),
    )
}

/// Remove hard negatives sitting inside the positive region: ENN over
/// the negatives with `k` neighbors. With `scaled` the neighbor search
/// runs on z-scored copies of the rows so no single feature's scale
/// dominates the distances; the surviving rows keep their raw values.
pub fn clean_overlap(
    dataset: &Dataset,
    k: usize,
    scaled: bool,
) -> Result<EnnOutcome, PreprocessError> {
    if scaled {
        let scaler = Scaler::fit(&dataset.x);
        let features = scaler.transform(&dataset.x);
        Ok(resample::enn_with_features(dataset, &features, k, 0)?)
    } else {
        Ok(resample::enn(dataset, k, 0)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
    pub stratified: bool,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec { train_fraction: 0.7, seed: 0, stratified: true }
    }
}

pub fn split(dataset: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Dataset), PreprocessError> {
    if spec.stratified {
        return stratified_split(dataset, spec.train_fraction, spec.seed);
    }
    let total_train = check_split(dataset, spec.train_fraction)?;
    let mut indices: Vec<usize> = (0..dataset.len()).collect();
    indices.shuffle(&mut seeding::rng_from(spec.seed));
    let (train, test) = indices.split_at(total_train);
    Ok((sorted_select(dataset, train), sorted_select(dataset, test)))
}

fn check_split(dataset: &Dataset, fraction: f64) -> Result<usize, PreprocessError> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(PreprocessError::BadFraction(fraction));
    }
    if dataset.is_empty() {
        return Err(PreprocessError::EmptyInput);
    }
    let n = dataset.len();
    Ok(round_half_away(fraction * n as f64).clamp(1, n - 1))
}

fn sorted_select(dataset: &Dataset, indices: &[usize]) -> Dataset {
    let mut indices = indices.to_vec();
    indices.sort_unstable();
    dataset.select(&indices)
}

/// Random stratified split. The train side holds `round(fraction·n)`
/// instances overall, apportioned to the classes by largest remainder
/// (ties to the negative class), so each class's train share differs
/// from `fraction·n_c` by less than one instance. Where the counts
/// allow it, both classes appear on both sides. The `seed` is expected
/// to be pre-derived; equal seeds give equal splits.
pub fn stratified_split(
    dataset: &Dataset,
    train_fraction: f64,
    seed: u64,
) -> Result<(Dataset, Dataset), PreprocessError> {
    let total_train = check_split(dataset, train_fraction)?;
    let counts = dataset.class_counts();
    for class in 0..2u8 {
        if counts[class as usize] < 2 {
            return Err(PreprocessError::DegenerateClass { class, found: counts[class as usize] });
        }
    }

    let shares = [train_fraction * counts[0] as f64, train_fraction * counts[1] as f64];
    let mut take = [shares[0].floor() as usize, shares[1].floor() as usize];
    let mut leftover = total_train.saturating_sub(take[0] + take[1]);
    let order: [usize; 2] =
        if shares[1] - take[1] as f64 > shares[0] - take[0] as f64 { [1, 0] } else { [0, 1] };
    let mut turn = 0;
    while leftover > 0 {
        let c = order[turn % 2];
        if take[c] < counts[c] {
            take[c] += 1;
            leftover -= 1;
        }
        turn += 1;
    }
    // keep each class represented on both sides when arithmetic allows
    for c in 0..2 {
        let o = 1 - c;
        if take[c] == 0 && take[o] >= 2 {
            take[c] += 1;
            take[o] -= 1;
        }
        if take[c] == counts[c] && take[o] < counts[o].saturating_sub(1) {
            take[c] -= 1;
            take[o] += 1;
        }
    }

    let mut rng = seeding::rng_from(seed);
    let mut train = Vec::with_capacity(total_train);
    let mut test = Vec::with_capacity(dataset.len() - total_train);
    for class in 0..2u8 {
        let mut members = dataset.indices_of(class);
        members.shuffle(&mut rng);
        let (tr, te) = members.split_at(take[class as usize].min(members.len()));
        train.extend_from_slice(tr);
        test.extend_from_slice(te);
    }
    Ok((sorted_select(dataset, &train), sorted_select(dataset, &test)))
}

/// First two principal components of the z-scored feature matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub points: Vec<[f64; 2]>,
    pub labels: Vec<Label>,
    /// Variance along each axis; 0 where the axis is degenerate.
    pub explained_variance: [f64; 2],
    /// True when fewer than two components carry variance; degenerate
    /// axes project to 0.
    pub rank_deficient: bool,
}

/// Project the dataset onto its top two principal components for
/// plotting. Features are z-scored first; each component's
/// largest-magnitude loading is oriented positive (ties to the lower
/// feature index) so the picture is reproducible.
pub fn project_2d(dataset: &Dataset) -> Result<Projection, PreprocessError> {
    if dataset.is_empty() {
        return Err(PreprocessError::EmptyInput);
    }
    let scaler = Scaler::fit(&dataset.x);
    let z = scaler.transform(&dataset.x);
    let n = z.len();
    let d = dataset.n_features();
    let mut cov = vec![vec![0.0; d]; d];
    for row in &z {
        for i in 0..d {
            for j in i..d {
                cov[i][j] += row[i] * row[j];
            }
        }
    }
    for i in 0..d {
        for j in i..d {
            cov[i][j] /= n as f64;
            cov[j][i] = cov[i][j];
        }
    }

    let (values, vectors) = jacobi_eigen(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));

    let mut axes = [vec![0.0; d], vec![0.0; d]];
    let mut explained = [0.0; 2];
    let mut rank_deficient = false;
    for k in 0..2 {
        match order.get(k) {
            Some(&idx) if values[idx] > 1e-12 => {
                let mut axis = vectors[idx].clone();
                orient(&mut axis);
                explained[k] = values[idx];
                axes[k] = axis;
            }
            _ => rank_deficient = true,
        }
    }

    let points = z
        .iter()
        .map(|row| {
            [
                row.iter().zip(&axes[0]).map(|(a, b)| a * b).sum(),
                row.iter().zip(&axes[1]).map(|(a, b)| a * b).sum(),
            ]
        })
        .collect();
    Ok(Projection { points, labels: dataset.y.clone(), explained_variance: explained, rank_deficient })
}

/// Flip a vector so its largest-magnitude entry is positive; ties pick
/// the lowest index.
fn orient(vec: &mut [f64]) {
    let mut best = 0;
    for i in 1..vec.len() {
        if vec[i].abs() > vec[best].abs() {
            best = i;
        }
    }
    if vec[best] < 0.0 {
        for v in vec.iter_mut() {
            *v = -*v;
        }
    }
}

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns unsorted (eigenvalues, eigenvectors); `vectors[k]` pairs
/// with `values[k]`.
pub(crate) fn jacobi_eigen(mut a: Vec<Vec<f64>>) -> (Vec<f64>, Vec<Vec<f64>>) {
    let d = a.len();
    let mut v = vec![vec![0.0; d]; d];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for _sweep in 0..64 {
        let off: f64 = (0..d)
            .flat_map(|p| ((p + 1)..d).map(move |q| (p, q)))
            .map(|(p, q)| a[p][q] * a[p][q])
            .sum();
        if off <= 1e-24 {
            break;
        }
        for p in 0..d {
            for q in (p + 1)..d {
                let apq = a[p][q];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * apq);
                let t = if theta.abs() > 1e12 {
                    1.0 / (2.0 * theta)
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                let tau = s / (1.0 + c);

                a[p][p] -= t * apq;
                a[q][q] += t * apq;
                a[p][q] = 0.0;
                a[q][p] = 0.0;
                for i in 0..d {
                    if i != p && i != q {
                        let aip = a[i][p];
                        let aiq = a[i][q];
                        a[i][p] = aip - s * (aiq + tau * aip);
                        a[p][i] = a[i][p];
                        a[i][q] = aiq + s * (aip - tau * aiq);
                        a[q][i] = a[i][q];
                    }
                }
                for row in v.iter_mut() {
                    let vip = row[p];
                    let viq = row[q];
                    row[p] = vip - s * (viq + tau * vip);
                    row[q] = viq + s * (vip - tau * viq);
                }
            }
        }
    }
    let values: Vec<f64> = (0..d).map(|i| a[i][i]).collect();
    let vectors: Vec<Vec<f64>> = (0..d).map(|k| (0..d).map(|i| v[i][k]).collect()).collect();
    (values, vectors)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{harmonize, PhytoMethod, PhytoRecord};

    fn day(y: i32, m: u32, d: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, d).unwrap()
    }

    fn phyto_row(date: NaiveDate, station: &str, depth: Depth, species: &str, abundance: f64) -> PhytoRecord {
        PhytoRecord {
            date,
            station: station.into(),
            depth,
            method: PhytoMethod::Bottle,
            species: species.into(),
            abundance,
        }
    }

    fn tox(date: NaiveDate, station: &str, conc: f64) -> ToxTest {
        ToxTest {
            date,
            station: station.into(),
            method: ToxMethod::Lcms,
            result: None,
            concentration: Some(conc),
        }
    }

    fn bioassay(date: NaiveDate, station: &str, result: ToxResult) -> ToxTest {
        ToxTest { date, station: station.into(), method: ToxMethod::Bioassay, result: Some(result), concentration: None }
    }

    fn sea(date: NaiveDate, station: &str, sst: Option<f64>, salinity: Option<f64>) -> SeawaterRow {
        SeawaterRow { date, station: station.into(), sst, salinity }
    }

    #[test]
    fn visit_selection_prefers_max_dsp_tot_then_shallowest() {
        let d = day(2020, 6, 1);
        let batch = harmonize(vec![
            phyto_row(d, "0024", Depth::Meters(5.0), "Dinophysis fortii", 300.0),
            phyto_row(d, "0024", Depth::Meters(10.0), "Dinophysis fortii", 500.0),
            phyto_row(d, "0024", Depth::Meters(10.0), "Chaetoceros socialis", 9000.0),
        ]);
        let visits = select_sample_per_visit(&batch);
        assert_eq!(visits.len(), 1);
        assert_eq!(visits[0].depth, Depth::Meters(10.0));
        assert_eq!(visits[0].dsp_tot, 500.0);
        let fortii = SpeciesColumn::ALL
            .iter()
            .position(|c| *c == SpeciesColumn::DinophysisFortii)
            .unwrap();
        assert_eq!(visits[0].species_cells[fortii], 500.0);

        // equal DSP-tot: the shallower depth wins, integrated last
        let batch = harmonize(vec![
            phyto_row(d, "0024", Depth::Meters(5.0), "Dinophysis fortii", 500.0),
            phyto_row(d, "0024", Depth::Meters(10.0), "Dinophysis fortii", 500.0),
            phyto_row(d, "0024", Depth::Integrated, "Dinophysis fortii", 500.0),
        ]);
        assert_eq!(select_sample_per_visit(&batch)[0].depth, Depth::Meters(5.0));
    }

    #[test]
    fn visit_sums_within_sample_and_counts_producers() {
        let d = day(2020, 6, 1);
        let batch = harmonize(vec![
            phyto_row(d, "0024", Depth::Meters(5.0), "Dinophysis fortii", 100.0),
            phyto_row(d, "0024", Depth::Meters(5.0), "Dinophysis fortii", 50.0),
            phyto_row(d, "0024", Depth::Meters(5.0), "Dinophysis spp.", 25.0),
            phyto_row(d, "0024", Depth::Meters(5.0), "Noctiluca scintillans", 9999.0),
        ]);
        let visits = select_sample_per_visit(&batch);
        assert_eq!(visits[0].dsp_tot, 175.0);
        let fortii = SpeciesColumn::DinophysisFortii;
        let slot = SpeciesColumn::ALL.iter().position(|c| *c == fortii).unwrap();
        assert_eq!(visits[0].species_cells[slot], 150.0);
    }

    #[test]
    fn visits_sorted_by_date_then_station() {
        let batch = harmonize(vec![
            phyto_row(day(2020, 6, 2), "000F", Depth::Meters(0.0), "Dinophysis fortii", 1.0),
            phyto_row(day(2020, 6, 1), "0024", Depth::Meters(0.0), "Dinophysis fortii", 1.0),
            phyto_row(day(2020, 6, 1), "000F", Depth::Meters(0.0), "Dinophysis fortii", 1.0),
        ]);
        let visits = select_sample_per_visit(&batch);
        let keys: Vec<(NaiveDate, &str)> =
            visits.iter().map(|v| (v.date, v.station.as_str())).collect();
        assert_eq!(
            keys,
            vec![
                (day(2020, 6, 1), "000F"),
                (day(2020, 6, 1), "0024"),
                (day(2020, 6, 2), "000F"),
            ]
        );
    }

    #[test]
    fn binarize_strictly_above_limit() {
        let d = day(2020, 6, 1);
        assert_eq!(binarize_toxicity(&tox(d, "0024", 176.0), 176.0).unwrap(), 0);
        assert_eq!(binarize_toxicity(&tox(d, "0024", 176.1), 176.0).unwrap(), 1);
        assert_eq!(binarize_toxicity(&tox(d, "0024", 0.0), 176.0).unwrap(), 0);
        assert_eq!(binarize_toxicity(&bioassay(d, "0024", ToxResult::Pos), 176.0).unwrap(), 1);
        assert_eq!(binarize_toxicity(&bioassay(d, "0024", ToxResult::Neg), 176.0).unwrap(), 0);
        let broken = ToxTest { concentration: None, ..tox(d, "0024", 0.0) };
        assert!(matches!(
            binarize_toxicity(&broken, 176.0),
            Err(PreprocessError::MissingValue(_))
        ));
    }

    #[test]
    fn forward_match_picks_earliest_in_window() {
        let cfg = WindowConfig::default();
        let obs = day(2020, 6, 1);
        let tests = vec![
            tox(day(2020, 5, 20), "0024", 500.0),  // before the observation
            tox(day(2020, 6, 20), "0024", 10.0),
            tox(day(2020, 6, 10), "000F", 999.0),  // other station
            tox(day(2020, 6, 10), "0024", 200.0),
            tox(day(2020, 7, 2), "0024", 999.0),   // 31 days out
        ];
        let hit = match_toxicity(obs, "0024", &tests, &cfg, MatchDirection::Forward).unwrap();
        assert_eq!(hit.date, day(2020, 6, 10));
        assert_eq!(hit.concentration, Some(200.0));

        // same-day test is eligible; 30 days is the last eligible day
        let tests = vec![tox(day(2020, 7, 1), "0024", 1.0)];
        assert!(match_toxicity(obs, "0024", &tests, &cfg, MatchDirection::Forward).is_some());
        let tests = vec![tox(obs, "0024", 1.0)];
        assert_eq!(
            match_toxicity(obs, "0024", &tests, &cfg, MatchDirection::Forward).unwrap().date,
            obs
        );
        assert_eq!(
            match_label(obs, "0024", &[], &cfg, MatchDirection::Forward).unwrap(),
            None
        );
    }

    #[test]
    fn backward_match_picks_latest_in_window() {
        let cfg = WindowConfig::default();
        let obs = day(2020, 6, 1);
        let tests = vec![
            tox(day(2020, 5, 10), "0024", 1.0),
            tox(day(2020, 5, 25), "0024", 200.0),
            tox(day(2020, 6, 10), "0024", 999.0), // after the observation
        ];
        let hit = match_toxicity(obs, "0024", &tests, &cfg, MatchDirection::Backward).unwrap();
        assert_eq!(hit.date, day(2020, 5, 25));
    }

    #[test]
    fn same_day_match_ties_go_to_input_order() {
        let cfg = WindowConfig::default();
        let obs = day(2020, 6, 1);
        let tests =
            vec![tox(day(2020, 6, 5), "0024", 10.0), tox(day(2020, 6, 5), "0024", 999.0)];
        let hit = match_toxicity(obs, "0024", &tests, &cfg, MatchDirection::Forward).unwrap();
        assert_eq!(hit.concentration, Some(10.0));
    }

    #[test]
    fn interpolation_prefers_date_distance_then_rank() {
        let cfg = WindowConfig::default();
        let d = day(2020, 6, 15);
        // date distance beats rank
        let rows = vec![
            sea(d, "S1", None, Some(30.0)),
            sea(day(2020, 6, 18), "S2", Some(10.0), Some(30.0)),
            sea(day(2020, 6, 14), "S3", Some(20.0), Some(30.0)),
        ];
        let (filled, audit) = interpolate_station_gaps(&rows, &StationRanking::default(), &cfg);
        assert_eq!(filled[0].sst, Some(20.0));
        assert_eq!(audit.filled_sst, 1);
        assert_eq!(audit.missing_sst, 0);

        // equal distance: lexicographic station order by default
        let rows = vec![
            sea(d, "S1", None, Some(30.0)),
            sea(day(2020, 6, 17), "S2", Some(10.0), Some(30.0)),
            sea(day(2020, 6, 13), "S3", Some(20.0), Some(30.0)),
        ];
        let (filled, _) = interpolate_station_gaps(&rows, &StationRanking::default(), &cfg);
        assert_eq!(filled[0].sst, Some(10.0));

        // an explicit ranking overrides the lexicographic fallback
        let ranking = StationRanking::from_config(
            [("S1".to_string(), vec!["S3".to_string(), "S2".to_string()])].into(),
        );
        let (filled, _) = interpolate_station_gaps(&rows, &ranking, &cfg);
        assert_eq!(filled[0].sst, Some(20.0));

        // equal distance and rank (same station ±3 days): earlier date
        let rows = vec![
            sea(d, "S1", None, None),
            sea(day(2020, 6, 12), "S2", Some(11.0), None),
            sea(day(2020, 6, 18), "S2", Some(12.0), None),
        ];
        let (filled, _) = interpolate_station_gaps(&rows, &StationRanking::default(), &cfg);
        assert_eq!(filled[0].sst, Some(11.0));
    }

    #[test]
    fn interpolation_window_and_no_chaining() {
        let cfg = WindowConfig::default();
        let d = day(2020, 6, 15);
        // donor 31 days away: gap stays missing
        let rows = vec![
            sea(d, "S1", None, Some(30.0)),
            sea(day(2020, 7, 16), "S2", Some(10.0), Some(30.0)),
        ];
        let (filled, audit) = interpolate_station_gaps(&rows, &StationRanking::default(), &cfg);
        assert_eq!(filled[0].sst, None);
        assert_eq!(audit.missing_sst, 1);

        // a same-day gap filled on another station is not a donor: the
        // original S2 value two days out wins over S2's own fill.
        let rows = vec![
            sea(d, "S1", None, Some(30.0)),
            sea(d, "S2", None, Some(30.0)),
            sea(day(2020, 6, 17), "S2", Some(11.0), Some(30.0)),
            sea(day(2020, 5, 21), "S3", Some(5.0), Some(30.0)),
        ];
        let (filled, _) = interpolate_station_gaps(&rows, &StationRanking::default(), &cfg);
        assert_eq!(filled[1].sst, Some(5.0), "S2 gap takes the only alternate-station donor");
        assert_eq!(filled[0].sst, Some(11.0), "S1 gap must use original values only");
    }

    #[test]
    fn interpolation_never_uses_own_station() {
        let cfg = WindowConfig::default();
        let d = day(2020, 6, 15);
        let rows = vec![
            sea(d, "S1", None, None),
            sea(day(2020, 6, 16), "S1", Some(10.0), None),
            sea(day(2020, 6, 25), "S2", Some(20.0), None),
        ];
        let (filled, _) = interpolate_station_gaps(&rows, &StationRanking::default(), &cfg);
        assert_eq!(filled[0].sst, Some(20.0));
    }

    fn full_meteo(from: NaiveDate, days: u64, precip: f64) -> Vec<MeteoRow> {
        (0..days)
            .map(|i| MeteoRow {
                date: from.checked_add_days(Days::new(i)).unwrap(),
                air_temp: 12.0,
                wind: 3.0,
                precip,
                solar: 8.0,
            })
            .collect()
    }

    fn full_river(from: NaiveDate, days: u64, flow: f64) -> Vec<RiverRow> {
        (0..days)
            .map(|i| RiverRow { date: from.checked_add_days(Days::new(i)).unwrap(), flow })
            .collect()
    }

    #[test]
    fn aggregates_of_constant_tables() {
        let cfg = WindowConfig::default();
        let obs = day(2020, 7, 1);
        let meteo = full_meteo(day(2020, 6, 1), 40, 2.0);
        let river = full_river(day(2020, 6, 1), 40, 100.0);
        let agg = aggregate_env(obs, &meteo, &river, &cfg);
        assert_eq!(agg.air_temp, Some(12.0));
        assert_eq!(agg.wind, Some(3.0));
        assert_eq!(agg.precip, Some(40.0)); // 20 days × 2 mm
        assert_eq!(agg.solar, Some(160.0)); // 20 days × 8 h
        assert_eq!(agg.river_flow, Some(3000.0)); // 30 days × 100 m³/s
    }

    #[test]
    fn aggregate_windows_exclude_obs_day_and_need_every_day() {
        let cfg = WindowConfig::default();
        let obs = day(2020, 7, 1);
        // the observation day itself carries an outlier: ignored
        let mut meteo = full_meteo(day(2020, 6, 1), 30, 2.0);
        meteo.push(MeteoRow { date: obs, air_temp: 45.0, wind: 30.0, precip: 500.0, solar: 0.0 });
        let mut river = full_river(day(2020, 6, 1), 30, 100.0);
        river.push(RiverRow { date: obs, flow: 1e6 });
        let agg = aggregate_env(obs, &meteo, &river, &cfg);
        assert_eq!(agg.precip, Some(40.0));
        assert_eq!(agg.river_flow, Some(3000.0));

        // one absent day voids the table's aggregates
        let gappy: Vec<MeteoRow> =
            meteo.iter().filter(|r| r.date != day(2020, 6, 20)).cloned().collect();
        let agg = aggregate_env(obs, &gappy, &river, &cfg);
        assert_eq!(agg.air_temp, None);
        assert_eq!(agg.wind, None);
        assert_eq!(agg.precip, None);
        assert_eq!(agg.solar, None);
        assert_eq!(agg.river_flow, Some(3000.0), "river table is unaffected");

        let gappy_river: Vec<RiverRow> =
            river.iter().filter(|r| r.date != day(2020, 6, 5)).cloned().collect();
        let agg = aggregate_env(obs, &meteo, &gappy_river, &cfg);
        assert_eq!(agg.river_flow, None);
        assert_eq!(agg.precip, Some(40.0));
    }

    #[test]
    fn river_window_is_longer_than_meteo_window() {
        let cfg = WindowConfig::default();
        let obs = day(2020, 7, 1);
        // 25 days of data before obs: enough for meteo (20), not river (30)
        let meteo = full_meteo(day(2020, 6, 6), 25, 1.0);
        let river = full_river(day(2020, 6, 6), 25, 100.0);
        let agg = aggregate_env(obs, &meteo, &river, &cfg);
        assert_eq!(agg.precip, Some(20.0));
        assert_eq!(agg.river_flow, None);
    }

    #[test]
    fn consolidate_routes_labeled_unlabeled_and_dropped() {
        let cfg = WindowConfig::default();
        let d1 = day(2020, 7, 1); // labeled
        let d2 = day(2020, 7, 2); // no test in window: unlabeled
        let d3 = day(2020, 9, 1); // outside env tables: dropped
        let batch = harmonize(vec![
            phyto_row(d1, "0024", Depth::Meters(5.0), "Dinophysis fortii", 300.0),
            phyto_row(d2, "000F", Depth::Meters(5.0), "Dinophysis caudata", 50.0),
            phyto_row(d3, "0024", Depth::Meters(5.0), "Dinophysis fortii", 10.0),
        ]);
        let visits = select_sample_per_visit(&batch);
        let tests = vec![tox(day(2020, 7, 20), "0024", 400.0)];
        let seawater = vec![
            sea(d1, "0024", Some(18.0), Some(35.0)),
            sea(d2, "000F", Some(19.0), Some(34.0)),
            sea(d3, "0024", Some(20.0), Some(33.0)),
        ];
        let meteo = full_meteo(day(2020, 6, 1), 35, 2.0);
        let river = full_river(day(2020, 6, 1), 35, 100.0);

        let out =
            consolidate(&visits, &tests, &seawater, &meteo, &river, &cfg, MatchDirection::Forward)
                .unwrap();
        assert_eq!(out.audit.visits, 3);
        assert_eq!(out.audit.labeled, 1);
        assert_eq!(out.audit.unlabeled, 1);
        assert_eq!(out.audit.dropped, 1);
        assert_eq!(out.audit.missing_meteo, 1);
        assert_eq!(out.audit.missing_river, 1);

        let inst = &out.labeled[0];
        assert_eq!(inst.label, Some(1));
        assert_eq!(inst.features[0], 7.0); // month
        assert_eq!(inst.features[1], 300.0); // dsp_tot
        assert_eq!(inst.features[3], 300.0); // d_fortii
        assert_eq!(inst.features[7], 18.0); // sst
        assert_eq!(inst.features[8], 35.0); // salinity
        assert_eq!(inst.features[9], 12.0); // air_temp mean
        assert_eq!(inst.features[11], 40.0); // precip sum
        assert_eq!(inst.features[13], 3000.0); // river sum

        assert_eq!(out.unlabeled[0].label, None);
        assert_eq!(out.unlabeled[0].station, "000F");
    }

    #[test]
    fn consolidate_counts_missing_seawater() {
        let cfg = WindowConfig::default();
        let d1 = day(2020, 7, 1);
        let batch = harmonize(vec![phyto_row(d1, "0024", Depth::Meters(5.0), "Dinophysis fortii", 1.0)]);
        let visits = select_sample_per_visit(&batch);
        let seawater = vec![sea(d1, "0024", Some(18.0), None)];
        let meteo = full_meteo(day(2020, 6, 1), 31, 2.0);
        let river = full_river(day(2020, 6, 1), 31, 100.0);
        let out = consolidate(&visits, &[], &seawater, &meteo, &river, &cfg, MatchDirection::Forward).unwrap();
        assert_eq!(out.audit.dropped, 1);
        assert_eq!(out.audit.missing_salinity, 1);
        assert_eq!(out.audit.missing_sst, 0);
    }

    #[test]
    fn consolidated_csv_round_trip() {
        let inst = |label| ConsolidatedInstance {
            date: day(2020, 7, 1),
            station: "0024".into(),
            features: std::array::from_fn(|i| i as f64 + 0.5),
            label,
        };
        let list = vec![inst(Some(1)), inst(Some(0)), inst(None)];
        let text = consolidated_to_csv(&list);
        assert!(text.starts_with("month,dsp_tot,"));
        assert_eq!(consolidated_from_csv(&text).unwrap(), list);

        let ds = to_dataset(&list);
        assert_eq!(ds.len(), 2, "unlabeled rows are not training data");
        assert_eq!(ds.y, vec![1, 0]);
        assert_eq!(ds.x[0][3], 3.5);
    }

    #[test]
    fn clean_overlap_scaling_changes_neighbors() {
        // x carries the class signal on a tiny scale; y is large-scale
        // interleaved noise. Raw distances are ruled by y, so every
        // negative's nearest neighbor is positive; after z-scoring the
        // x gap dominates and nothing is removed.
        let x = vec![
            vec![0.0, 0.0],
            vec![0.0, 1000.0],
            vec![0.0, 2000.0],
            vec![0.0, 3000.0],
            vec![10.0, 500.0],
            vec![10.0, 1500.0],
            vec![10.0, 2500.0],
        ];
        let y = vec![0, 0, 0, 0, 1, 1, 1];
        let ds = Dataset::new(x, y);
        let raw = clean_overlap(&ds, 1, false).unwrap();
        assert_eq!(raw.removed, vec![0, 1, 2, 3]);
        let scaled = clean_overlap(&ds, 1, true).unwrap();
        assert_eq!(scaled.removed, Vec::<usize>::new());
        assert_eq!(scaled.dataset.len(), 7);
    }

    #[test]
    fn clean_overlap_unscaled_delegates_to_enn() {
        let ds = Dataset::new(
            vec![vec![0.0], vec![0.1], vec![0.2], vec![0.3], vec![0.5], vec![5.0], vec![5.1]],
            vec![0, 0, 0, 0, 1, 1, 1],
        );
        let via_clean = clean_overlap(&ds, 3, false).unwrap();
        let direct = resample::enn(&ds, 3, 0).unwrap();
        assert_eq!(via_clean.removed, direct.removed);
        assert_eq!(via_clean.dataset, direct.dataset);
    }

    fn labeled_dataset(neg: usize, pos: usize) -> Dataset {
        let x = (0..neg + pos).map(|i| vec![i as f64]).collect();
        let y = (0..neg + pos).map(|i| u8::from(i >= neg)).collect();
        Dataset::new(x, y)
    }

    #[test]
    fn split_reproduces_study_shape() {
        let ds = labeled_dataset(745, 132);
        let (train, test) = stratified_split(&ds, 0.7, 42).unwrap();
        assert_eq!(train.len(), 614);
        assert_eq!(test.len(), 263);
        assert_eq!(train.class_counts(), [522, 92]);
        assert_eq!(test.class_counts(), [223, 40]);
    }

    #[test]
    fn split_ten_balanced() {
        let ds = labeled_dataset(5, 5);
        let (train, test) = stratified_split(&ds, 0.7, 1).unwrap();
        assert_eq!(train.len(), 7);
        assert_eq!(test.len(), 3);
        assert_eq!(train.class_counts(), [4, 3]);
    }

    #[test]
    fn split_is_a_partition() {
        let ds = labeled_dataset(23, 11);
        let (train, test) = stratified_split(&ds, 0.7, 7).unwrap();
        let mut seen: Vec<usize> = train
            .tags
            .iter()
            .chain(test.tags.iter())
            .map(|t| match t {
                crate::dataset::RowTag::Original(i) => *i,
                other => panic!("unexpected tag {other:?}"),
            })
            .collect();
        seen.sort_unstable();
        assert_eq!(seen, (0..34).collect::<Vec<_>>());
    }

    #[test]
    fn split_proportions_within_one_instance() {
        for (neg, pos) in [(5, 3), (17, 9), (101, 50), (40, 2)] {
            let ds = labeled_dataset(neg, pos);
            let (train, _) = stratified_split(&ds, 0.7, 3).unwrap();
            let counts = train.class_counts();
            assert!((counts[0] as f64 - 0.7 * neg as f64).abs() < 1.0, "neg {neg}: {counts:?}");
            assert!((counts[1] as f64 - 0.7 * pos as f64).abs() < 1.0, "pos {pos}: {counts:?}");
            assert!(counts[1] >= 1, "positives must reach the train side");
        }
    }

    #[test]
    fn split_determinism_and_seed_sensitivity() {
        let ds = labeled_dataset(30, 10);
        let a = stratified_split(&ds, 0.7, 5).unwrap();
        let b = stratified_split(&ds, 0.7, 5).unwrap();
        assert_eq!(a, b);
        let c = stratified_split(&ds, 0.7, 6).unwrap();
        assert_ne!(a.0.tags, c.0.tags);
    }

    #[test]
    fn split_rejects_degenerate_inputs() {
        let ds = labeled_dataset(5, 1);
        assert_eq!(
            stratified_split(&ds, 0.7, 0),
            Err(PreprocessError::DegenerateClass { class: 1, found: 1 })
        );
        let ds = labeled_dataset(5, 5);
        assert_eq!(stratified_split(&ds, 1.0, 0), Err(PreprocessError::BadFraction(1.0)));
        assert_eq!(stratified_split(&ds, 0.0, 0), Err(PreprocessError::BadFraction(0.0)));
        assert_eq!(
            stratified_split(&Dataset::default(), 0.7, 0),
            Err(PreprocessError::EmptyInput)
        );
    }

    #[test]
    fn unstratified_split_sizes() {
        let ds = labeled_dataset(8, 2);
        let spec = SplitSpec { train_fraction: 0.7, seed: 9, stratified: false };
        let (train, test) = split(&ds, &spec).unwrap();
        assert_eq!(train.len(), 7);
        assert_eq!(test.len(), 3);
    }

    #[test]
    fn jacobi_solves_the_analytic_two_by_two() {
        let (values, vectors) = jacobi_eigen(vec![vec![2.0, 1.0], vec![1.0, 2.0]]);
        let mut pairs: Vec<(f64, Vec<f64>)> = values.into_iter().zip(vectors).collect();
        pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
        assert!((pairs[0].0 - 3.0).abs() < 1e-12);
        assert!((pairs[1].0 - 1.0).abs() < 1e-12);
        let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
        let v0 = &pairs[0].1;
        assert!((v0[0].abs() - inv_sqrt2).abs() < 1e-12);
        assert!((v0[0] - v0[1]).abs() < 1e-12, "eigenvector of 3 is along (1,1)");
        let v1 = &pairs[1].1;
        assert!((v1[0] + v1[1]).abs() < 1e-12, "eigenvector of 1 is along (1,-1)");
    }

    #[test]
    fn jacobi_reconstructs_random_symmetric_matrices() {
        use rand::Rng;
        let mut rng = seeding::rng_from(99);
        for _ in 0..5 {
            let d = 6;
            let mut a = vec![vec![0.0; d]; d];
            for i in 0..d {
                for j in i..d {
                    let v = rng.gen_range(-3.0..3.0);
                    a[i][j] = v;
                    a[j][i] = v;
                }
            }
            let (values, vectors) = jacobi_eigen(a.clone());
            for (lambda, v) in values.iter().zip(&vectors) {
                // A v = λ v
                for i in 0..d {
                    let av: f64 = (0..d).map(|j| a[i][j] * v[j]).sum();
                    assert!((av - lambda * v[i]).abs() < 1e-8, "residual {}", av - lambda * v[i]);
                }
                let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                assert!((norm - 1.0).abs() < 1e-9);
            }
            // eigenvalue sum equals the trace
            let trace: f64 = (0..d).map(|i| a[i][i]).sum();
            assert!((values.iter().sum::<f64>() - trace).abs() < 1e-9);
        }
    }

    #[test]
    fn projection_of_correlated_cloud() {
        // y = x exactly: one informative direction along (1,1)/√2
        let x: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64, i as f64]).collect();
        let y: Vec<Label> = (0..20).map(|i| u8::from(i >= 10)).collect();
        let p = project_2d(&Dataset::new(x, y)).unwrap();
        assert!(p.rank_deficient);
        assert!((p.explained_variance[0] - 2.0).abs() < 1e-9);
        assert_eq!(p.explained_variance[1], 0.0);
        for (i, point) in p.points.iter().enumerate() {
            assert_eq!(point[1], 0.0, "degenerate axis projects to zero");
            // first coordinate is √2 times the z-score of x
            if i > 0 {
                assert!(point[0] > p.points[i - 1][0], "order along the axis is preserved");
            }
        }
        assert_eq!(p.labels.len(), 20);
    }

    #[test]
    fn orientation_rule_flips_on_negative_largest_loading() {
        let mut v = [-0.8, 0.6];
        orient(&mut v);
        assert_eq!(v, [0.8, -0.6]);
        // exact tie resolves to the lowest index
        let mut v = [-0.5, 0.5];
        orient(&mut v);
        assert_eq!(v, [0.5, -0.5]);
        let mut v = [0.5, -0.5];
        orient(&mut v);
        assert_eq!(v, [0.5, -0.5], "already oriented vectors are untouched");
        let mut v = [0.1, -0.9, 0.3];
        orient(&mut v);
        assert_eq!(v, [-0.1, 0.9, -0.3]);
    }

    #[test]
    fn projection_sign_convention_is_stable() {
        // y = -x puts the leading axis at exactly 45°, so the two
        // loadings tie in exact arithmetic and the winner is decided by
        // eigensolver rounding. The convention promises a reproducible
        // picture, not a particular diagonal: same input, same points.
        let x: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64, -(i as f64)]).collect();
        let p = project_2d(&Dataset::new(x.clone(), vec![0; 20])).unwrap();
        let q = project_2d(&Dataset::new(x, vec![0; 20])).unwrap();
        assert_eq!(p.points, q.points);
        // one oriented axis: antisymmetric coordinates, √2 × z-score scale
        for (i, pt) in p.points.iter().enumerate() {
            assert!((pt[0] + p.points[19 - i][0]).abs() < 1e-9);
            assert_eq!(pt[1], 0.0);
        }
        assert!((p.points[19][0].abs() - p.points[0][0].abs()).abs() < 1e-9);
        assert!(p.points[19][0] != 0.0);
    }

    #[test]
    fn projection_of_identical_points_is_fully_degenerate() {
        let x = vec![vec![3.0, 4.0]; 5];
        let p = project_2d(&Dataset::new(x, vec![0; 5])).unwrap();
        assert!(p.rank_deficient);
        assert_eq!(p.explained_variance, [0.0, 0.0]);
        assert!(p.points.iter().all(|pt| *pt == [0.0, 0.0]));
    }

    #[test]
    fn projection_rejects_empty() {
        assert_eq!(project_2d(&Dataset::default()), Err(PreprocessError::EmptyInput));
    }
}
