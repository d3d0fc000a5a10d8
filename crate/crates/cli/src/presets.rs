//! Named configurations shipped with the tool, at desk-scale lattice sizes.

use anyhow::bail;

use crate::config::RunConfig;

/// `(name, JSON)` of every preset.
pub const PRESETS: [(&str, &str); 3] = [
    ("fig2", include_str!("../presets/fig2.json")),
    ("fig3", include_str!("../presets/fig3.json")),
    ("fig4", include_str!("../presets/fig4.json")),
];

pub fn preset_names() -> Vec<&'static str> {
    PRESETS.iter().map(|(n, _)| *n).collect()
}

pub fn preset(name: &str) -> anyhow::Result<RunConfig> {
    match PRESETS.iter().find(|(n, _)| *n == name) {
        Some((_, text)) => RunConfig::from_json(text),
        None => bail!("unknown preset '{name}'; available: {}", preset_names().join(", ")),
    }
}
