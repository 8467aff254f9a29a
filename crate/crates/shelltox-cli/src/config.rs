//! Optional TOML run configuration. Everything in here can also be set
//! on the command line, and flags always win; the file is for keeping a
//! campaign's settings (window lengths, station geography, grids) in one
//! reviewable place.
//!
//! ```toml
//! seed = 7
//! threads = 4
//! out = "artifacts"
//! train_fraction = 0.7
//!
//! [windows]
//! tox_match_days = 30
//! meteo_window_days = 20
//! river_window_days = 30
//! interp_days = 30
//! regulatory_limit = 176.0
//!
//! # Donor priority for cross-station seawater interpolation. Geography
//! # is data, not code: list each station's preferred donors in order.
//! [interpolation]
//! MB1 = ["MB2"]
//! MB2 = ["MB1"]
//!
//! [evaluate]
//! iters = 100
//! algos = ["dt", "rf", "svm", "mlp"]
//! optimize = "f1"
//! fixed_split = false
//!
//! [synth]
//! years = 6
//! stations = ["MB1", "MB2"]
//! test_coverage = 0.8
//! ```
//!
//! The `[synth]` table accepts every field of `shelltox::synth::SynthConfig`
//! (missing fields keep their defaults), so a whole generator scenario can
//! be versioned as a config file.

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::Deserialize;
use shelltox::preprocess::WindowConfig;
use shelltox::synth::SynthConfig;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub out: Option<PathBuf>,
    pub train_fraction: Option<f64>,
    pub windows: Option<WindowConfig>,
    pub interpolation: Option<BTreeMap<String, Vec<String>>>,
    pub evaluate: Option<EvalSection>,
    pub synth: Option<SynthConfig>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub iters: Option<usize>,
    pub algos: Option<Vec<String>>,
    pub optimize: Option<String>,
    pub fixed_split: Option<bool>,
}
