//! Parsers, validators and serializers for the five raw monitoring CSV
//! families, unit harmonization for net-method counts, and the
//! descriptive-statistics report.
//!
//! All tables are UTF-8, comma-separated, with a fixed header row and
//! day-granular ISO-8601 dates:
//!
//! * `phyto.csv`: `date,station,depth_m,method,species,abundance_cells_per_l`
//! * `toxicity.csv`: `date,station,method,result,concentration_ug_kg`
//! * `seawater.csv`: `date,station,sst_c,salinity` (empty cell = missing)
//! * `meteo.csv`: `date,air_temp_c,wind_ms,precip_mm,solar_h`
//! * `river.csv`: `date,flow_m3s`
//!
//! A zero-byte input has no header and is a schema mismatch; a
//! header-only file parses to an empty list.

use std::cmp::Ordering;
use std::fmt;

use chrono::{Datelike, NaiveDate};
use thiserror::Error;

use crate::preprocess::ConsolidatedInstance;
use crate::species::{self, FEATURE_NAMES, N_FEATURES};

#[derive(Debug, Error, PartialEq)]
pub enum IngestError {
    #[error("line {line}: {reason}")]
    MalformedRow { line: u64, reason: String },
    #[error("expected header `{expected}`, found `{found}`")]
    SchemaMismatch { expected: String, found: String },
    #[error("cannot describe an empty dataset")]
    EmptyDataset,
}

/// Sample depth: a concrete depth in meters, or a column-integrated
/// (hose) sample. Ordering puts shallower first and `Integrated` after
/// every concrete depth, which is what the shallowest-wins tie-break
/// uses.
#[derive(Debug, Clone, Copy)]
pub enum Depth {
    Meters(f64),
    Integrated,
}

impl Depth {
    fn parse(s: &str) -> Result<Depth, String> {
        if s.eq_ignore_ascii_case("integrated") {
            return Ok(Depth::Integrated);
        }
        match s.parse::<f64>() {
            Ok(v) if v.is_finite() && v >= 0.0 => Ok(Depth::Meters(v)),
            _ => Err(format!("depth_m must be non-negative meters or `integrated`, got `{s}`")),
        }
    }
}

impl fmt::Display for Depth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Depth::Meters(v) => write!(f, "{v}"),
            Depth::Integrated => write!(f, "integrated"),
        }
    }
}

impl PartialEq for Depth {
    fn eq(&self, other: &Depth) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Depth {}

impl PartialOrd for Depth {
    fn partial_cmp(&self, other: &Depth) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Depth {
    fn cmp(&self, other: &Depth) -> Ordering {
        match (self, other) {
            (Depth::Meters(a), Depth::Meters(b)) => a.total_cmp(b),
            (Depth::Meters(_), Depth::Integrated) => Ordering::Less,
            (Depth::Integrated, Depth::Meters(_)) => Ordering::Greater,
            (Depth::Integrated, Depth::Integrated) => Ordering::Equal,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhytoMethod {
    Bottle,
    Net,
    Hose,
}

impl PhytoMethod {
    fn parse(s: &str) -> Result<PhytoMethod, String> {
        match s {
            "bottle" => Ok(PhytoMethod::Bottle),
            "net" => Ok(PhytoMethod::Net),
            "hose" => Ok(PhytoMethod::Hose),
            _ => Err(format!("method must be bottle|net|hose, got `{s}`")),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            PhytoMethod::Bottle => "bottle",
            PhytoMethod::Net => "net",
            PhytoMethod::Hose => "hose",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhytoRecord {
    pub date: NaiveDate,
    pub station: String,
    pub depth: Depth,
    pub method: PhytoMethod,
    pub species: String,
    pub abundance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ToxMethod {
    Bioassay,
    Lcms,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ToxResult {
    Pos,
    Neg,
}

/// One toxin test. Bioassay rows carry a result and no concentration;
/// LC-MS rows carry a concentration and no pre-set result.
#[derive(Debug, Clone, PartialEq)]
pub struct ToxTest {
    pub date: NaiveDate,
    pub station: String,
    pub method: ToxMethod,
    pub result: Option<ToxResult>,
    pub concentration: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EnvKind {
    SstC,
    Salinity,
    AirTempC,
    WindMs,
    PrecipMm,
    SolarH,
    RiverFlowM3s,
}

/// One physical reading. Only the seawater table is per-station.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvSample {
    pub date: NaiveDate,
    pub station: Option<String>,
    pub kind: EnvKind,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeawaterRow {
    pub date: NaiveDate,
    pub station: String,
    pub sst: Option<f64>,
    pub salinity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeteoRow {
    pub date: NaiveDate,
    pub air_temp: f64,
    pub wind: f64,
    pub precip: f64,
    pub solar: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RiverRow {
    pub date: NaiveDate,
    pub flow: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Schema {
    Phyto,
    Tox,
    Seawater,
    Meteo,
    River,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ParsedTable {
    Phyto(Vec<PhytoRecord>),
    Tox(Vec<ToxTest>),
    Seawater(Vec<SeawaterRow>),
    Meteo(Vec<MeteoRow>),
    River(Vec<RiverRow>),
}

pub fn parse_table(text: &str, schema: Schema) -> Result<ParsedTable, IngestError> {
    Ok(match schema {
        Schema::Phyto => ParsedTable::Phyto(parse_phyto(text)?),
        Schema::Tox => ParsedTable::Tox(parse_tox(text)?),
        Schema::Seawater => ParsedTable::Seawater(parse_seawater(text)?),
        Schema::Meteo => ParsedTable::Meteo(parse_meteo(text)?),
        Schema::River => ParsedTable::River(parse_river(text)?),
    })
}

pub(crate) struct Rows<'a> {
    reader: csv::StringRecordsIntoIter<&'a [u8]>,
}

pub(crate) fn open<'a>(text: &'a str, expected_header: &str) -> Result<Rows<'a>, IngestError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let found = match reader.headers() {
        Ok(h) => h.iter().collect::<Vec<_>>().join(","),
        Err(e) => return Err(IngestError::MalformedRow { line: 1, reason: e.to_string() }),
    };
    if found != expected_header {
        return Err(IngestError::SchemaMismatch { expected: expected_header.to_string(), found });
    }
    Ok(Rows { reader: reader.into_records() })
}

impl Rows<'_> {
    pub(crate) fn next_row(&mut self) -> Option<Result<(u64, csv::StringRecord), IngestError>> {
        self.reader.next().map(|r| {
            r.map_err(|e| {
                let line = e.position().map_or(0, csv::Position::line);
                IngestError::MalformedRow { line, reason: e.to_string() }
            })
            .map(|rec| (rec.position().map_or(0, csv::Position::line), rec))
        })
    }
}

pub(crate) fn bad(line: u64, reason: impl Into<String>) -> IngestError {
    IngestError::MalformedRow { line, reason: reason.into() }
}

pub(crate) fn field<'r>(
    rec: &'r csv::StringRecord,
    idx: usize,
    name: &str,
    line: u64,
) -> Result<&'r str, IngestError> {
    rec.get(idx).ok_or_else(|| bad(line, format!("missing column `{name}`")))
}

pub(crate) fn parse_date(s: &str, line: u64) -> Result<NaiveDate, IngestError> {
    s.parse::<NaiveDate>().map_err(|_| bad(line, format!("date `{s}` is not ISO-8601")))
}

pub(crate) fn parse_f64(s: &str, name: &str, line: u64) -> Result<f64, IngestError> {
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(bad(line, format!("{name} `{s}` is not a finite number"))),
    }
}

fn parse_opt_f64(s: &str, name: &str, line: u64) -> Result<Option<f64>, IngestError> {
    if s.is_empty() {
        Ok(None)
    } else {
        parse_f64(s, name, line).map(Some)
    }
}

fn check_range(v: f64, lo: f64, hi: f64, name: &str, line: u64) -> Result<f64, IngestError> {
    if (lo..=hi).contains(&v) {
        Ok(v)
    } else {
        Err(bad(line, format!("{name} {v} outside [{lo}, {hi}]")))
    }
}

fn check_station(s: &str, line: u64) -> Result<String, IngestError> {
    if s.is_empty() {
        Err(bad(line, "station code is empty"))
    } else {
        Ok(s.to_string())
    }
}

pub const PHYTO_HEADER: &str = "date,station,depth_m,method,species,abundance_cells_per_l";
pub const TOX_HEADER: &str = "date,station,method,result,concentration_ug_kg";
pub const SEAWATER_HEADER: &str = "date,station,sst_c,salinity";
pub const METEO_HEADER: &str = "date,air_temp_c,wind_ms,precip_mm,solar_h";
pub const RIVER_HEADER: &str = "date,flow_m3s";

pub fn parse_phyto(text: &str) -> Result<Vec<PhytoRecord>, IngestError> {
    let mut rows = open(text, PHYTO_HEADER)?;
    let mut out = Vec::new();
    while let Some(row) = rows.next_row() {
        let (line, rec) = row?;
        let abundance = parse_f64(field(&rec, 5, "abundance_cells_per_l", line)?, "abundance", line)?;
        if abundance < 0.0 {
            return Err(bad(line, format!("abundance {abundance} is negative")));
        }
        out.push(PhytoRecord {
            date: parse_date(field(&rec, 0, "date", line)?, line)?,
            station: check_station(field(&rec, 1, "station", line)?, line)?,
            depth: Depth::parse(field(&rec, 2, "depth_m", line)?).map_err(|e| bad(line, e))?,
            method: PhytoMethod::parse(field(&rec, 3, "method", line)?).map_err(|e| bad(line, e))?,
            species: field(&rec, 4, "species", line)?.to_string(),
            abundance,
        });
    }
    Ok(out)
}

pub fn parse_tox(text: &str) -> Result<Vec<ToxTest>, IngestError> {
    let mut rows = open(text, TOX_HEADER)?;
    let mut out = Vec::new();
    while let Some(row) = rows.next_row() {
        let (line, rec) = row?;
        let method = match field(&rec, 2, "method", line)? {
            "bioassay" => ToxMethod::Bioassay,
            "lcms" => ToxMethod::Lcms,
            other => return Err(bad(line, format!("method must be bioassay|lcms, got `{other}`"))),
        };
        let result = match field(&rec, 3, "result", line)? {
            "" => None,
            "pos" => Some(ToxResult::Pos),
            "neg" => Some(ToxResult::Neg),
            other => return Err(bad(line, format!("result must be pos|neg|empty, got `{other}`"))),
        };
        let concentration =
            parse_opt_f64(field(&rec, 4, "concentration_ug_kg", line)?, "concentration", line)?;
        match method {
            ToxMethod::Bioassay => {
                if result.is_none() {
                    return Err(bad(line, "bioassay row lacks a result"));
                }
                if concentration.is_some() {
                    return Err(bad(line, "bioassay row must not carry a concentration"));
                }
            }
            ToxMethod::Lcms => {
                if result.is_some() {
                    return Err(bad(line, "lcms row must not carry a pre-set result"));
                }
                match concentration {
                    None => return Err(bad(line, "lcms row lacks a concentration")),
                    Some(c) if c < 0.0 => {
                        return Err(bad(line, format!("concentration {c} is negative")))
                    }
                    Some(_) => {}
                }
            }
        }
        out.push(ToxTest {
            date: parse_date(field(&rec, 0, "date", line)?, line)?,
            station: check_station(field(&rec, 1, "station", line)?, line)?,
            method,
            result,
            concentration,
        });
    }
    Ok(out)
}

pub fn parse_seawater(text: &str) -> Result<Vec<SeawaterRow>, IngestError> {
    let mut rows = open(text, SEAWATER_HEADER)?;
    let mut out = Vec::new();
    while let Some(row) = rows.next_row() {
        let (line, rec) = row?;
        let sst = parse_opt_f64(field(&rec, 2, "sst_c", line)?, "sst_c", line)?
            .map(|v| check_range(v, -20.0, 45.0, "sst_c", line))
            .transpose()?;
        let salinity = parse_opt_f64(field(&rec, 3, "salinity", line)?, "salinity", line)?
            .map(|v| check_range(v, 0.0, 45.0, "salinity", line))
            .transpose()?;
        out.push(SeawaterRow {
            date: parse_date(field(&rec, 0, "date", line)?, line)?,
            station: check_station(field(&rec, 1, "station", line)?, line)?,
            sst,
            salinity,
        });
    }
    Ok(out)
}

pub fn parse_meteo(text: &str) -> Result<Vec<MeteoRow>, IngestError> {
    let mut rows = open(text, METEO_HEADER)?;
    let mut out = Vec::new();
    while let Some(row) = rows.next_row() {
        let (line, rec) = row?;
        let air_temp = parse_f64(field(&rec, 1, "air_temp_c", line)?, "air_temp_c", line)?;
        check_range(air_temp, -20.0, 45.0, "air_temp_c", line)?;
        let wind = parse_f64(field(&rec, 2, "wind_ms", line)?, "wind_ms", line)?;
        let precip = parse_f64(field(&rec, 3, "precip_mm", line)?, "precip_mm", line)?;
        let solar = parse_f64(field(&rec, 4, "solar_h", line)?, "solar_h", line)?;
        for (name, v) in [("wind_ms", wind), ("precip_mm", precip), ("solar_h", solar)] {
            if v < 0.0 {
                return Err(bad(line, format!("{name} {v} is negative")));
            }
        }
        out.push(MeteoRow {
            date: parse_date(field(&rec, 0, "date", line)?, line)?,
            air_temp,
            wind,
            precip,
            solar,
        });
    }
    Ok(out)
}

pub fn parse_river(text: &str) -> Result<Vec<RiverRow>, IngestError> {
    let mut rows = open(text, RIVER_HEADER)?;
    let mut out = Vec::new();
    while let Some(row) = rows.next_row() {
        let (line, rec) = row?;
        let flow = parse_f64(field(&rec, 1, "flow_m3s", line)?, "flow_m3s", line)?;
        if flow < 0.0 {
            return Err(bad(line, format!("flow_m3s {flow} is negative")));
        }
        out.push(RiverRow { date: parse_date(field(&rec, 0, "date", line)?, line)?, flow });
    }
    Ok(out)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn phyto_to_csv(records: &[PhytoRecord]) -> String {
    let mut s = String::from(PHYTO_HEADER);
    s.push('\n');
    for r in records {
        s.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.date,
            r.station,
            r.depth,
            r.method.name(),
            r.species,
            r.abundance
        ));
    }
    s
}

pub fn tox_to_csv(tests: &[ToxTest]) -> String {
    let mut s = String::from(TOX_HEADER);
    s.push('\n');
    for t in tests {
        let method = match t.method {
            ToxMethod::Bioassay => "bioassay",
            ToxMethod::Lcms => "lcms",
        };
        let result = match t.result {
            Some(ToxResult::Pos) => "pos",
            Some(ToxResult::Neg) => "neg",
            None => "",
        };
        s.push_str(&format!(
            "{},{},{},{},{}\n",
            t.date,
            t.station,
            method,
            result,
            opt(t.concentration)
        ));
    }
    s
}

pub fn seawater_to_csv(rows: &[SeawaterRow]) -> String {
    let mut s = String::from(SEAWATER_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&format!("{},{},{},{}\n", r.date, r.station, opt(r.sst), opt(r.salinity)));
    }
    s
}

pub fn meteo_to_csv(rows: &[MeteoRow]) -> String {
    let mut s = String::from(METEO_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&format!("{},{},{},{},{}\n", r.date, r.air_temp, r.wind, r.precip, r.solar));
    }
    s
}

pub fn river_to_csv(rows: &[RiverRow]) -> String {
    let mut s = String::from(RIVER_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&format!("{},{}\n", r.date, r.flow));
    }
    s
}

/// Per-record form of the net-count correction: net samples undercount
/// by about two orders of magnitude, so their abundance is multiplied
/// by 100. The method field stays on the record for provenance.
pub fn harmonize_abundance(mut rec: PhytoRecord) -> PhytoRecord {
    if rec.method == PhytoMethod::Net {
        rec.abundance *= 100.0;
    }
    rec
}

/// A phytoplankton batch that went through [`harmonize_abundance`]
/// exactly once. Downstream grouping only accepts this wrapper, which
/// is what prevents double application.
#[derive(Debug, Clone, PartialEq)]
pub struct HarmonizedPhyto(Vec<PhytoRecord>);

impl HarmonizedPhyto {
    pub fn records(&self) -> &[PhytoRecord] {
        &self.0
    }
}

pub fn harmonize(records: Vec<PhytoRecord>) -> HarmonizedPhyto {
    HarmonizedPhyto(records.into_iter().map(harmonize_abundance).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariableStats {
    pub name: &'static str,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub median: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonthlyBand {
    pub month: u32,
    pub variable: &'static str,
    pub n: usize,
    pub mean: f64,
    pub p10: f64,
    pub p90: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonthlyLabelCounts {
    pub month: u32,
    pub pos: usize,
    pub neg: usize,
}

/// Table-1-style summary: global min/max/mean/median per variable,
/// monthly mean and 10th/90th percentile bands for the phytoplankton
/// and seawater variables, and monthly positive/negative label counts.
#[derive(Debug, Clone, PartialEq)]
pub struct DescriptiveStats {
    pub variables: Vec<VariableStats>,
    pub monthly: Vec<MonthlyBand>,
    pub monthly_labels: Vec<MonthlyLabelCounts>,
}

/// Linear-interpolation percentile (the spreadsheet/numpy convention):
/// rank = q·(n−1) between sorted neighbors. `values` must be sorted.
pub fn percentile_sorted(values: &[f64], q: f64) -> f64 {
    assert!(!values.is_empty());
    let rank = q * (values.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = rank - lo as f64;
    values[lo] + frac * (values[hi] - values[lo])
}

fn median_sorted(values: &[f64]) -> f64 {
    percentile_sorted(values, 0.5)
}

/// Variables with monthly climatology bands: DSP-tot, the five species,
/// SST and salinity (feature slots 1..=8).
const MONTHLY_VARIABLES: std::ops::Range<usize> = 1..9;

pub fn describe(instances: &[ConsolidatedInstance]) -> Result<DescriptiveStats, IngestError> {
    if instances.is_empty() {
        return Err(IngestError::EmptyDataset);
    }
    let mut variables = Vec::with_capacity(N_FEATURES);
    for f in 0..N_FEATURES {
        let mut vals: Vec<f64> = instances.iter().map(|i| i.features[f]).collect();
        vals.sort_by(f64::total_cmp);
        variables.push(VariableStats {
            name: FEATURE_NAMES[f],
            min: vals[0],
            max: *vals.last().unwrap(),
            mean: vals.iter().sum::<f64>() / vals.len() as f64,
            median: median_sorted(&vals),
        });
    }

    let mut monthly = Vec::new();
    let mut monthly_labels = Vec::new();
    for month in 1..=12u32 {
        let of_month: Vec<&ConsolidatedInstance> =
            instances.iter().filter(|i| i.date.month() == month).collect();
        if of_month.is_empty() {
            continue;
        }
        for f in MONTHLY_VARIABLES {
            let mut vals: Vec<f64> = of_month.iter().map(|i| i.features[f]).collect();
            vals.sort_by(f64::total_cmp);
            monthly.push(MonthlyBand {
                month,
                variable: FEATURE_NAMES[f],
                n: vals.len(),
                mean: vals.iter().sum::<f64>() / vals.len() as f64,
                p10: percentile_sorted(&vals, 0.1),
                p90: percentile_sorted(&vals, 0.9),
            });
        }
        let pos = of_month.iter().filter(|i| i.label == Some(1)).count();
        let neg = of_month.iter().filter(|i| i.label == Some(0)).count();
        monthly_labels.push(MonthlyLabelCounts { month, pos, neg });
    }
    Ok(DescriptiveStats { variables, monthly, monthly_labels })
}

/// DSP-tot of one sample: the summed abundance of confirmed DSP
/// producers among its records.
pub fn dsp_total(records: &[&PhytoRecord]) -> f64 {
    records
        .iter()
        .filter(|r| species::is_dsp_producer(&r.species))
        .map(|r| r.abundance)
        .sum()
}
