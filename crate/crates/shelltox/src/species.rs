//! Taxon whitelist and the fixed feature layout of the consolidated
//! dataset.
//!
//! Five DSP-producing species carry their own feature column; the
//! aggregate `dsp_tot` column sums every DSP producer found in a sample
//! (all *Dinophysis* and *Phalacroma* taxa plus *Prorocentrum lima*).
//! Taxon names are matched case-insensitively; unknown taxa are kept in
//! the parsed records but ignored by feature extraction.

/// Number of feature columns in the consolidated dataset.
pub const N_FEATURES: usize = 14;

/// Fixed feature order of the consolidated dataset.
pub const FEATURE_NAMES: [&str; N_FEATURES] = [
    "month",
    "dsp_tot",
    "d_caudata",
    "d_fortii",
    "d_sacculus",
    "d_tripos",
    "p_rotundatum",
    "sst",
    "salinity",
    "air_temp",
    "wind",
    "precip",
    "solar",
    "river_flow",
];

/// Column index of the month feature (the only non-physical column;
/// dropped when training the MLP).
pub const MONTH_COLUMN: usize = 0;

/// The five species with dedicated feature columns, in feature order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SpeciesColumn {
    DinophysisCaudata,
    DinophysisFortii,
    DinophysisSacculus,
    DinophysisTripos,
    PhalacromaRotundatum,
}

impl SpeciesColumn {
    /// Canonical taxon name as written in monitoring exports.
    pub fn latin_name(self) -> &'static str {
        match self {
            SpeciesColumn::DinophysisCaudata => "Dinophysis caudata",
            SpeciesColumn::DinophysisFortii => "Dinophysis fortii",
            SpeciesColumn::DinophysisSacculus => "Dinophysis sacculus",
            SpeciesColumn::DinophysisTripos => "Dinophysis tripos",
            SpeciesColumn::PhalacromaRotundatum => "Phalacroma rotundatum",
        }
    }

    /// Index of this species' column in [`FEATURE_NAMES`].
    pub fn feature_index(self) -> usize {
        match self {
            SpeciesColumn::DinophysisCaudata => 2,
            SpeciesColumn::DinophysisFortii => 3,
            SpeciesColumn::DinophysisSacculus => 4,
            SpeciesColumn::DinophysisTripos => 5,
            SpeciesColumn::PhalacromaRotundatum => 6,
        }
    }

    pub const ALL: [SpeciesColumn; 5] = [
        SpeciesColumn::DinophysisCaudata,
        SpeciesColumn::DinophysisFortii,
        SpeciesColumn::DinophysisSacculus,
        SpeciesColumn::DinophysisTripos,
        SpeciesColumn::PhalacromaRotundatum,
    ];
}

fn normalize(name: &str) -> String {
    name.trim().to_ascii_lowercase()
}

/// Map a taxon name to its dedicated feature column, if it has one.
pub fn species_column(name: &str) -> Option<SpeciesColumn> {
    match normalize(name).as_str() {
        "dinophysis caudata" | "d. caudata" => Some(SpeciesColumn::DinophysisCaudata),
        "dinophysis fortii" | "d. fortii" => Some(SpeciesColumn::DinophysisFortii),
        "dinophysis sacculus" | "d. sacculus" => Some(SpeciesColumn::DinophysisSacculus),
        "dinophysis tripos" | "d. tripos" => Some(SpeciesColumn::DinophysisTripos),
        "phalacroma rotundatum" | "p. rotundatum" => Some(SpeciesColumn::PhalacromaRotundatum),
        _ => None,
    }
}

/// Whether a taxon counts towards the `dsp_tot` aggregate.
pub fn is_dsp_producer(name: &str) -> bool {
    let n = normalize(name);
    n == "dinophysis"
        || n.starts_with("dinophysis ")
        || n == "phalacroma"
        || n.starts_with("phalacroma ")
        || n == "prorocentrum lima"
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn whitelist_is_case_insensitive() {
        assert_eq!(
            species_column("DINOPHYSIS FORTII"),
            Some(SpeciesColumn::DinophysisFortii)
        );
        assert_eq!(
            species_column("Phalacroma rotundatum"),
            Some(SpeciesColumn::PhalacromaRotundatum)
        );
        assert_eq!(species_column("Chaetoceros socialis"), None);
    }

    #[test]
    fn dsp_producers_cover_both_genera_and_p_lima() {
        assert!(is_dsp_producer("Dinophysis sacculus"));
        assert!(is_dsp_producer("Dinophysis spp."));
        assert!(is_dsp_producer("Phalacroma rotundatum"));
        assert!(is_dsp_producer("Prorocentrum lima"));
        // Other Prorocentrum species are not DSP producers here.
        assert!(!is_dsp_producer("Prorocentrum micans"));
        assert!(!is_dsp_producer("Chaetoceros socialis"));
    }

    #[test]
    fn feature_indices_match_names() {
        assert_eq!(FEATURE_NAMES[SpeciesColumn::DinophysisCaudata.feature_index()], "d_caudata");
        assert_eq!(FEATURE_NAMES[SpeciesColumn::PhalacromaRotundatum.feature_index()], "p_rotundatum");
    }
}
