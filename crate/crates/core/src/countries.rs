//! ISO-3166 alpha-3 codes and the country spellings found in JST-style extracts.

const ALIASES: &[(&str, &[&str])] = &[
    ("AUS", &["Australia"]),
    ("BEL", &["Belgium"]),
    ("CAN", &["Canada"]),
    ("CHE", &["Switzerland"]),
    ("DEU", &["Germany"]),
    ("DNK", &["Denmark"]),
    ("ESP", &["Spain"]),
    ("FIN", &["Finland"]),
    ("FRA", &["France"]),
    ("GBR", &["UK", "United Kingdom", "Great Britain"]),
    ("IRL", &["Ireland"]),
    ("ITA", &["Italy"]),
    ("JPN", &["Japan"]),
    ("NLD", &["Netherlands", "The Netherlands"]),
    ("NOR", &["Norway"]),
    ("PRT", &["Portugal"]),
    ("SWE", &["Sweden"]),
    ("USA", &["US", "United States", "United States of America"]),
];

/// Maps a country name or code to its alpha-3 code. Unknown identifiers are
/// returned unchanged so non-country panels still load.
pub fn normalize_unit(raw: &str) -> String {
    let raw = raw.trim();
    for (code, names) in ALIASES {
        if code.eq_ignore_ascii_case(raw) || names.iter().any(|n| n.eq_ignore_ascii_case(raw)) {
            return (*code).to_string();
        }
    }
    raw.to_string()
}

/// English display name for a known alpha-3 code.
pub fn display_name(code: &str) -> Option<&'static str> {
    ALIASES
        .iter()
        .find(|(c, _)| *c == code)
        .map(|(_, names)| names[0])
}
