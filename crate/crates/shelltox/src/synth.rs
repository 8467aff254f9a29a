//! Desk-scale synthetic monitoring data with known ground truth.
//!
//! The generator mimics the seasonal structure of coastal HAB
//! monitoring: log-normal species pulses (early-summer *D. sacculus* /
//! *D. caudata*, a fall *D. fortii* peak), sinusoidal seawater and
//! weather series, a winter-boosted river, and a weekly-in-season /
//! monthly-off-season visit cadence. Labels come from a logistic model
//! over a known subset of features, so tests can check that trained
//! models rediscover the truly influential variables.
//!
//! Output is the five raw CSV tables in exactly the shapes [`crate::ingest`]
//! parses, plus `ground_truth.csv` with each visit's latent probability
//! and label. The whole run is a single sequential RNG stream: one seed,
//! byte-identical files.

use std::io;
use std::path::Path;

use chrono::{Datelike, Days, NaiveDate};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

use crate::ingest::{
    self, Depth, MeteoRow, PhytoMethod, PhytoRecord, RiverRow, SeawaterRow, ToxMethod, ToxResult,
    ToxTest,
};
use crate::preprocess::WindowConfig;
use crate::seeding;
use crate::species::{SpeciesColumn, N_FEATURES};

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("invalid generator config: {0}")]
    BadConfig(String),
    #[error("cannot reach target prevalence {target}; achieved {achieved}")]
    InfeasiblePrevalence { target: f64, achieved: f64 },
}

/// Gaussian seasonal bump for one species, in month units (e.g. a peak
/// at 9.5 is mid-September). `amplitude` is the mean abundance at the
/// peak in cells per liter; per-visit draws are mean-preserving
/// log-normal around the seasonal mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeciesPulse {
    pub peak_month: f64,
    pub amplitude: f64,
    /// Pulse width in months.
    pub dispersion: f64,
}

/// Annual sinusoid with Gaussian noise: `mean + amplitude·cos(...)`
/// peaking at `peak_doy` (day of year).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sinusoid {
    pub mean: f64,
    pub amplitude: f64,
    pub peak_doy: f64,
    pub noise: f64,
}

impl Sinusoid {
    fn value(&self, doy: f64) -> f64 {
        self.mean + self.amplitude * (std::f64::consts::TAU * (doy - self.peak_doy) / 365.25).cos()
    }
}

/// Logistic label model. Weights apply to z-scored transforms of the
/// generated feature matrix: ln(1+x) for the two abundances, raw values
/// for salinity and the river-discharge sum. The intercept is fitted so
/// the realized prevalence among tested visits hits the target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelModel {
    pub w_d_fortii: f64,
    pub w_d_caudata: f64,
    pub w_salinity: f64,
    pub w_river_flow: f64,
    /// Std of the latent Gaussian noise term.
    pub noise: f64,
    pub target_prevalence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub years: usize,
    pub start_year: i32,
    pub stations: Vec<String>,
    /// Fraction of visits followed by a toxin test.
    pub test_coverage: f64,
    /// Per-species seasonal pulses, in feature-column order.
    pub pulses: [SpeciesPulse; 5],
    /// Log-normal shape of per-visit abundance draws (sigma of ln).
    pub abundance_shape: f64,
    pub sst: Sinusoid,
    pub salinity: Sinusoid,
    pub air_temp: Sinusoid,
    pub wind: Sinusoid,
    pub solar: Sinusoid,
    /// Probability that a given day has any rain.
    pub precip_prob: f64,
    /// Mean rainfall on a rainy day (mm).
    pub precip_mean_mm: f64,
    /// Median summer-trough river discharge (m³/s).
    pub river_base: f64,
    /// Log-scale winter amplification of discharge.
    pub river_winter_boost: f64,
    /// Log-normal noise sigma of daily discharge.
    pub river_noise: f64,
    pub label: LabelModel,
}

impl Default for SynthConfig {
    fn default() -> SynthConfig {
        SynthConfig {
            years: 6,
            start_year: 2015,
            stations: vec!["MB1".into(), "MB2".into()],
            test_coverage: 0.8,
            pulses: [
                // d_caudata, d_fortii, d_sacculus, d_tripos, p_rotundatum
                // The two label-driving species get broad envelopes so
                // their abundance is not just a month proxy; the inert
                // d_sacculus bloom dominates dsp_tot instead.
                SpeciesPulse { peak_month: 6.8, amplitude: 230.0, dispersion: 2.6 },
                SpeciesPulse { peak_month: 9.5, amplitude: 260.0, dispersion: 2.4 },
                SpeciesPulse { peak_month: 6.2, amplitude: 300.0, dispersion: 1.0 },
                SpeciesPulse { peak_month: 10.2, amplitude: 50.0, dispersion: 1.3 },
                SpeciesPulse { peak_month: 8.5, amplitude: 20.0, dispersion: 2.8 },
            ],
            abundance_shape: 1.0,
            sst: Sinusoid { mean: 16.5, amplitude: 9.5, peak_doy: 205.0, noise: 0.9 },
            salinity: Sinusoid { mean: 36.8, amplitude: 1.0, peak_doy: 40.0, noise: 0.7 },
            air_temp: Sinusoid { mean: 14.5, amplitude: 10.5, peak_doy: 200.0, noise: 1.8 },
            wind: Sinusoid { mean: 3.2, amplitude: 0.8, peak_doy: 20.0, noise: 1.0 },
            solar: Sinusoid { mean: 8.0, amplitude: 4.5, peak_doy: 172.0, noise: 1.5 },
            precip_prob: 0.3,
            precip_mean_mm: 6.0,
            river_base: 38.0,
            river_winter_boost: 0.9,
            river_noise: 0.45,
            label: LabelModel {
                w_d_fortii: 2.8,
                w_d_caudata: 2.4,
                w_salinity: -0.35,
                w_river_flow: 0.35,
                noise: 0.4,
                target_prevalence: 0.12,
            },
        }
    }
}

/// One generated visit: the consolidated feature vector the pipeline
/// should reconstruct, the latent positive probability, the Bernoulli
/// label, and whether a toxin test was emitted for the visit.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthRow {
    pub date: NaiveDate,
    pub station: String,
    pub features: [f64; N_FEATURES],
    pub latent_p: f64,
    pub label: u8,
    pub tested: bool,
}

/// File names `generate` output is written under.
pub const PHYTO_FILE: &str = "phyto.csv";
pub const TOX_FILE: &str = "toxicity.csv";
pub const SEAWATER_FILE: &str = "seawater.csv";
pub const METEO_FILE: &str = "meteo.csv";
pub const RIVER_FILE: &str = "river.csv";
pub const GROUND_TRUTH_FILE: &str = "ground_truth.csv";

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOutput {
    pub phyto_csv: String,
    pub tox_csv: String,
    pub seawater_csv: String,
    pub meteo_csv: String,
    pub river_csv: String,
    pub ground_truth_csv: String,
    /// Per-visit ground truth, sorted by (date, station).
    pub rows: Vec<GroundTruthRow>,
    /// Fitted intercept of the label model.
    pub intercept: f64,
    /// Realized positive fraction among tested visits.
    pub achieved_prevalence: f64,
}

impl SynthOutput {
    /// Write the six CSV files into `dir` (created if absent).
    pub fn write_to(&self, dir: &Path) -> io::Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(PHYTO_FILE), &self.phyto_csv)?;
        std::fs::write(dir.join(TOX_FILE), &self.tox_csv)?;
        std::fs::write(dir.join(SEAWATER_FILE), &self.seawater_csv)?;
        std::fs::write(dir.join(METEO_FILE), &self.meteo_csv)?;
        std::fs::write(dir.join(RIVER_FILE), &self.river_csv)?;
        std::fs::write(dir.join(GROUND_TRUTH_FILE), &self.ground_truth_csv)?;
        Ok(())
    }
}

fn validate(cfg: &SynthConfig) -> Result<(), SynthError> {
    let bad = |msg: String| Err(SynthError::BadConfig(msg));
    if cfg.years == 0 {
        return bad("years must be >= 1".into());
    }
    if cfg.stations.is_empty() {
        return bad("need at least one station".into());
    }
    if cfg.stations.iter().any(|s| s.is_empty() || s.contains(',')) {
        return bad("station codes must be nonempty and comma-free".into());
    }
    if !(0.0..=1.0).contains(&cfg.test_coverage) {
        return bad(format!("test_coverage {} outside [0, 1]", cfg.test_coverage));
    }
    for p in &cfg.pulses {
        if p.amplitude < 0.0 {
            return bad(format!("pulse amplitude {} is negative", p.amplitude));
        }
        if p.dispersion <= 0.0 {
            return bad(format!("pulse dispersion {} must be positive", p.dispersion));
        }
    }
    if cfg.abundance_shape < 0.0 || cfg.river_noise < 0.0 || cfg.label.noise < 0.0 {
        return bad("noise scales must be nonnegative".into());
    }
    if !(0.0..=1.0).contains(&cfg.precip_prob) {
        return bad(format!("precip_prob {} outside [0, 1]", cfg.precip_prob));
    }
    if cfg.precip_mean_mm <= 0.0 {
        return bad("precip_mean_mm must be positive".into());
    }
    if cfg.river_base <= 0.0 {
        return bad("river_base must be positive".into());
    }
    let t = cfg.label.target_prevalence;
    if !(t > 0.0 && t < 1.0) {
        return bad(format!("target_prevalence {t} outside (0, 1)"));
    }
    Ok(())
}

fn round1(x: f64) -> f64 {
    (x * 10.0).round() / 10.0
}

fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

/// Fractional month coordinate in [1, 13): June 16 ≈ 6.5.
fn month_coord(d: NaiveDate) -> f64 {
    let first = NaiveDate::from_ymd_opt(d.year(), d.month(), 1).expect("valid month start");
    let next = if d.month() == 12 {
        NaiveDate::from_ymd_opt(d.year() + 1, 1, 1)
    } else {
        NaiveDate::from_ymd_opt(d.year(), d.month() + 1, 1)
    }
    .expect("valid next month");
    let len = (next - first).num_days() as f64;
    d.month() as f64 + (d.day0() as f64) / len
}

/// Circular month distance on the 12-month wheel.
fn month_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(12.0);
    d.min(12.0 - d)
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn logit(u: f64) -> f64 {
    (u / (1.0 - u)).ln()
}

fn in_season(month: u32) -> bool {
    (5..=11).contains(&month)
}

/// Winter-peaking daily river discharge before noise.
fn river_mean(cfg: &SynthConfig, doy: f64) -> f64 {
    cfg.river_base
        * (cfg.river_winter_boost * (std::f64::consts::TAU * (doy - 330.0) / 365.25).cos()).exp()
}

struct VisitDraw {
    date: NaiveDate,
    station: String,
    abundances: [f64; 5],
    sst: f64,
    salinity: f64,
    tested: bool,
    /// Uniform deciding the Bernoulli label once the intercept is fitted.
    label_u: f64,
    /// Latent Gaussian noise, already scaled.
    eps: f64,
    /// Raw uniforms materialized into a test only for tested visits.
    offset_u: f64,
    method_u: f64,
    conc_u: f64,
}

/// Population z-scores; a zero-variance column maps to all zeros.
fn standardize(values: &[f64]) -> Vec<f64> {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    if std > 0.0 {
        values.iter().map(|v| (v - mean) / std).collect()
    } else {
        vec![0.0; values.len()]
    }
}

/// Generate the raw tables and ground truth for one seed.
pub fn generate(cfg: &SynthConfig, seed: u64) -> Result<SynthOutput, SynthError> {
    validate(cfg)?;
    let mut rng: ChaCha8Rng = seeding::rng_from(seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let shape = cfg.abundance_shape;
    let abundance_factor =
        LogNormal::new(-shape * shape / 2.0, shape).expect("valid log-normal shape");
    let rain = LogNormal::new(cfg.precip_mean_mm.ln() - 0.405, 0.9).expect("valid rain shape");
    let river_lognoise =
        LogNormal::new(-cfg.river_noise * cfg.river_noise / 2.0, cfg.river_noise)
            .expect("valid river noise");

    // Daily weather and river series, starting early enough to cover the
    // first visit's 30-day lookback.
    let first_visit = NaiveDate::from_ymd_opt(cfg.start_year, 1, 3).expect("valid start");
    let daily_start = first_visit - Days::new(35);
    let end = NaiveDate::from_ymd_opt(cfg.start_year + cfg.years as i32, 1, 1).expect("valid end");
    let mut meteo = Vec::new();
    let mut river = Vec::new();
    let mut day = daily_start;
    while day < end {
        let doy = day.ordinal() as f64;
        let air_temp = round1(cfg.air_temp.value(doy) + cfg.air_temp.noise * normal.sample(&mut rng));
        let wind =
            round1((cfg.wind.value(doy) + cfg.wind.noise * normal.sample(&mut rng)).max(0.0));
        let raining = rng.gen::<f64>() < cfg.precip_prob;
        let rain_amount = rain.sample(&mut rng);
        let precip = if raining { round1(rain_amount) } else { 0.0 };
        let solar = round1(
            (cfg.solar.value(doy) + cfg.solar.noise * normal.sample(&mut rng)).clamp(0.0, 16.0),
        );
        meteo.push(MeteoRow { date: day, air_temp, wind, precip, solar });
        let flow = round1(river_mean(cfg, doy) * river_lognoise.sample(&mut rng));
        river.push(RiverRow { date: day, flow: flow.max(0.1) });
        day = day + Days::new(1);
    }
    let meteo_by_date: BTreeMap<NaiveDate, &MeteoRow> =
        meteo.iter().map(|r| (r.date, r)).collect();
    let river_by_date: BTreeMap<NaiveDate, f64> =
        river.iter().map(|r| (r.date, r.flow)).collect();

    // Visit calendar: weekly May-November, every 4 weeks otherwise.
    // Station k starts k days late, so stations never share a date.
    let mut calendar: Vec<(NaiveDate, String)> = Vec::new();
    for (k, station) in cfg.stations.iter().enumerate() {
        let mut d = first_visit + Days::new(k as u64);
        while d < end {
            calendar.push((d, station.clone()));
            let step = if in_season(d.month()) { 7 } else { 28 };
            d = d + Days::new(step);
        }
    }
    calendar.sort();

    // Per-visit draws, in calendar order so the stream is canonical.
    let mut visits: Vec<VisitDraw> = Vec::with_capacity(calendar.len());
    for (date, station) in calendar {
        let doy = date.ordinal() as f64;
        let m = month_coord(date);
        let mut abundances = [0.0; 5];
        for (slot, pulse) in abundances.iter_mut().zip(&cfg.pulses) {
            let dist = month_distance(m, pulse.peak_month);
            let mean = pulse.amplitude * (-0.5 * (dist / pulse.dispersion).powi(2)).exp();
            *slot = (mean * abundance_factor.sample(&mut rng)).round();
        }
        let sst = round2(
            (cfg.sst.value(doy) + cfg.sst.noise * normal.sample(&mut rng)).clamp(2.0, 32.0),
        );
        let salinity = round2(
            (cfg.salinity.value(doy) + cfg.salinity.noise * normal.sample(&mut rng))
                .clamp(5.0, 44.0),
        );
        let tested = rng.gen::<f64>() < cfg.test_coverage;
        let label_u = rng.gen::<f64>();
        let eps = cfg.label.noise * normal.sample(&mut rng);
        let offset_u = rng.gen::<f64>();
        let method_u = rng.gen::<f64>();
        let conc_u = rng.gen::<f64>();
        visits.push(VisitDraw {
            date,
            station: station.clone(),
            abundances,
            sst,
            salinity,
            tested,
            label_u,
            eps,
            offset_u,
            method_u,
            conc_u,
        });
    }

    // Feature matrix, recomputing the lookback aggregates independently
    // of the pipeline (this is what the round-trip test cross-checks).
    let windows = WindowConfig::default();
    let mut features: Vec<[f64; N_FEATURES]> = Vec::with_capacity(visits.len());
    for v in &visits {
        let mut f = [0.0; N_FEATURES];
        f[0] = v.date.month() as f64;
        f[1] = v.abundances.iter().sum();
        for (i, col) in SpeciesColumn::ALL.iter().enumerate() {
            f[col.feature_index()] = v.abundances[i];
        }
        f[7] = v.sst;
        f[8] = v.salinity;
        let mut air = 0.0;
        let mut wind = 0.0;
        let mut precip = 0.0;
        let mut solar = 0.0;
        for back in 1..=windows.meteo_window_days {
            let row = meteo_by_date[&(v.date - Days::new(back as u64))];
            air += row.air_temp;
            wind += row.wind;
            precip += row.precip;
            solar += row.solar;
        }
        let days = windows.meteo_window_days as f64;
        f[9] = air / days;
        f[10] = wind / days;
        f[11] = precip;
        f[12] = solar;
        let mut flow = 0.0;
        for back in 1..=windows.river_window_days {
            flow += river_by_date[&(v.date - Days::new(back as u64))];
        }
        f[13] = flow;
        features.push(f);
    }

    // Label scores: weights on z-scored transforms plus the noise term.
    let fortii = SpeciesColumn::DinophysisFortii.feature_index();
    let caudata = SpeciesColumn::DinophysisCaudata.feature_index();
    let z_fortii = standardize(&features.iter().map(|f| f[fortii].ln_1p()).collect::<Vec<_>>());
    let z_caudata = standardize(&features.iter().map(|f| f[caudata].ln_1p()).collect::<Vec<_>>());
    let z_salinity = standardize(&features.iter().map(|f| f[8]).collect::<Vec<_>>());
    let z_river = standardize(&features.iter().map(|f| f[13]).collect::<Vec<_>>());
    let w = &cfg.label;
    let scores: Vec<f64> = (0..visits.len())
        .map(|i| {
            w.w_d_fortii * z_fortii[i]
                + w.w_d_caudata * z_caudata[i]
                + w.w_salinity * z_salinity[i]
                + w.w_river_flow * z_river[i]
                + visits[i].eps
        })
        .collect();

    // A visit turns positive once the intercept exceeds its threshold
    // t = logit(u) − score, so the positive count is monotone in the
    // intercept; picking the midpoint between adjacent order statistics
    // of the tested thresholds realizes the target count exactly.
    let thresholds: Vec<f64> =
        scores.iter().zip(&visits).map(|(s, v)| logit(v.label_u) - s).collect();
    let mut tested_thresholds: Vec<f64> = thresholds
        .iter()
        .zip(&visits)
        .filter(|(_, v)| v.tested)
        .map(|(t, _)| *t)
        .collect();
    tested_thresholds.sort_by(f64::total_cmp);
    let n_tested = tested_thresholds.len();
    let target = w.target_prevalence;
    if n_tested == 0 {
        return Err(SynthError::InfeasiblePrevalence { target, achieved: 0.0 });
    }
    let k = ((target * n_tested as f64).round() as usize).min(n_tested);
    let intercept = if k == 0 {
        tested_thresholds[0] - 1.0
    } else if k == n_tested {
        tested_thresholds[n_tested - 1] + 1.0
    } else {
        (tested_thresholds[k - 1] + tested_thresholds[k]) / 2.0
    };
    let achieved =
        tested_thresholds.iter().filter(|&&t| t < intercept).count() as f64 / n_tested as f64;
    if (achieved - target).abs() > 0.03 {
        return Err(SynthError::InfeasiblePrevalence { target, achieved });
    }

    // Materialize records.
    let mut phyto: Vec<PhytoRecord> = Vec::with_capacity(visits.len() * 5);
    let mut tox: Vec<ToxTest> = Vec::new();
    let mut seawater: Vec<SeawaterRow> = Vec::with_capacity(visits.len());
    let mut rows: Vec<GroundTruthRow> = Vec::with_capacity(visits.len());
    let limit = windows.regulatory_limit;
    for (i, v) in visits.iter().enumerate() {
        let label = u8::from(thresholds[i] < intercept);
        let latent_p = sigmoid(intercept + scores[i]);
        for (j, col) in SpeciesColumn::ALL.iter().enumerate() {
            phyto.push(PhytoRecord {
                date: v.date,
                station: v.station.clone(),
                depth: Depth::Meters(0.5),
                method: PhytoMethod::Bottle,
                species: col.latin_name().to_string(),
                abundance: v.abundances[j],
            });
        }
        seawater.push(SeawaterRow {
            date: v.date,
            station: v.station.clone(),
            sst: Some(v.sst),
            salinity: Some(v.salinity),
        });
        if v.tested {
            // In weekly months the lag stays under the visit spacing so
            // every test is matched back to its own visit.
            let max_offset = if in_season(v.date.month()) { 6 } else { 14 };
            let offset = ((v.offset_u * (max_offset + 1) as f64) as u64).min(max_offset);
            let (method, result, concentration) = if v.method_u < 0.3 {
                let r = if label == 1 { ToxResult::Pos } else { ToxResult::Neg };
                (ToxMethod::Bioassay, Some(r), None)
            } else {
                let c = if label == 1 {
                    round1(limit * (1.1 + 2.0 * v.conc_u))
                } else {
                    round1(limit * 0.85 * v.conc_u)
                };
                (ToxMethod::Lcms, None, Some(c))
            };
            tox.push(ToxTest {
                date: v.date + Days::new(offset),
                station: v.station.clone(),
                method,
                result,
                concentration,
            });
        }
        rows.push(GroundTruthRow {
            date: v.date,
            station: v.station.clone(),
            features: features[i],
            latent_p,
            label,
            tested: v.tested,
        });
    }
    tox.sort_by(|a, b| (a.date, &a.station).cmp(&(b.date, &b.station)));

    let mut ground_truth_csv = format!(
        "# label_model: intercept={} w_d_fortii={} w_d_caudata={} w_salinity={} w_river_flow={} \
         noise={} target_prevalence={} achieved_prevalence={} transforms=ln1p(abundance),z-score\n",
        intercept, w.w_d_fortii, w.w_d_caudata, w.w_salinity, w.w_river_flow, w.noise, target,
        achieved
    );
    ground_truth_csv.push_str("date,station,latent_p,label,tested\n");
    for r in &rows {
        ground_truth_csv.push_str(&format!(
            "{},{},{},{},{}\n",
            r.date,
            r.station,
            r.latent_p,
            r.label,
            u8::from(r.tested)
        ));
    }

    Ok(SynthOutput {
        phyto_csv: ingest::phyto_to_csv(&phyto),
        tox_csv: ingest::tox_to_csv(&tox),
        seawater_csv: ingest::seawater_to_csv(&seawater),
        meteo_csv: ingest::meteo_to_csv(&meteo),
        river_csv: ingest::river_to_csv(&river),
        ground_truth_csv,
        rows,
        intercept,
        achieved_prevalence: achieved,
    })
}
