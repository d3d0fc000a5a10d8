//! Finite-size scaling report of a finished sweep: crossing point, rescaled
//! data, entropy-peak fit and one SVG per panel.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use qdbh_core::lattice::Shape;
use qdbh_core::scaling::{
    collapse_quality, find_crossing, fit_entropy_peak, CollapseResult, Exponents, PeakFit, ScalingDataset,
    ScalingRecord,
};
use serde::{Deserialize, Serialize};

use crate::plot::{Figure, Series};
use crate::store::CsvRow;

pub const COLLAPSE_FILE: &str = "collapse.json";
pub const RESCALED_FILE: &str = "rescaled.csv";
pub const PEAK_FILE: &str = "entropy_peak.json";
pub const PARITY_SVG: &str = "parity.svg";
pub const ENTROPY_SVG: &str = "entropy.svg";
pub const COLLAPSE_SVG: &str = "collapse.svg";

#[derive(Clone, Debug, Default)]
pub struct AnalyzeOptions {
    /// Overrides the exponents implied by the lattice dimensionality.
    pub exponents: Option<Exponents>,
    /// Also use points flagged as unconverged.
    pub include_unconverged: bool,
}

/// Contents of the collapse JSON file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CollapseReport {
    pub dimensionality: usize,
    pub exponents: Exponents,
    pub sizes: Vec<String>,
    pub collapse: Option<CollapseResult>,
    /// Collapse residual at the crossing with `β` doubled, for contrast.
    pub residual_beta_doubled: Option<f64>,
    pub error: Option<String>,
}

/// Contents of the entropy-peak JSON file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeakReport {
    pub fit: Option<PeakFit>,
    pub error: Option<String>,
}

#[derive(Clone, Debug)]
pub struct AnalysisOutput {
    pub collapse: CollapseReport,
    pub peak: PeakReport,
    pub files: Vec<PathBuf>,
}

#[derive(Serialize)]
struct RescaledRow<'a> {
    x: f64,
    y: f64,
    size: &'a str,
}

fn to_records(rows: &[CsvRow]) -> anyhow::Result<(Vec<ScalingRecord>, usize)> {
    let mut records = Vec::new();
    let mut dims = BTreeMap::new();
    let mut missing = Vec::new();
    for row in rows {
        let shape = Shape::parse(&row.size).with_context(|| format!("bad size label '{}'", row.size))?;
        match (row.parity, row.entropy) {
            (Some(parity), Some(entropy)) => {
                *dims.entry(shape.dimensionality()).or_insert(0usize) += 1;
                records.push(ScalingRecord {
                    size: shape.label(),
                    n_sites: shape.n_sites(),
                    g: row.g_over_gamma,
                    parity,
                    entropy,
                    converged: row.converged,
                });
            }
            _ => missing.push(format!("{} at G = {}", row.size, row.g_over_gamma)),
        }
    }
    if !missing.is_empty() {
        log::warn!(
            "{} failed point(s) without observables: {}",
            missing.len(),
            missing.join(", ")
        );
    }
    if dims.len() > 1 {
        bail!("the sweep mixes chains and rectangles; analyse one dimensionality at a time");
    }
    let dimensionality = dims.keys().next().copied().unwrap_or(1);
    Ok((records, dimensionality))
}

fn check_inputs(ds: &ScalingDataset) -> anyhow::Result<()> {
    let curves = ds.curves();
    let mut problems = Vec::new();
    if ds.records.is_empty() {
        problems.push("the sweep holds no points with observables".to_string());
    }
    if curves.len() < 2 {
        let have: Vec<String> = curves
            .iter()
            .map(|c| format!("{} ({} points)", c.size, c.g.len()))
            .collect();
        problems.push(format!(
            "at least two lattice sizes with usable points are required; found {}",
            if have.is_empty() {
                "none".to_string()
            } else {
                have.join(", ")
            }
        ));
    }
    if problems.is_empty() {
        Ok(())
    } else {
        bail!("cannot analyse the sweep:\n  - {}", problems.join("\n  - "))
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

fn write_svg(path: &Path, fig: &Figure) -> anyhow::Result<()> {
    std::fs::write(path, fig.to_svg()).with_context(|| format!("writing {}", path.display()))
}

/// Analyses sweep rows and writes every report into `out_dir`.
pub fn analyze_rows(rows: &[CsvRow], out_dir: &Path, opts: &AnalyzeOptions) -> anyhow::Result<AnalysisOutput> {
    let (records, dimensionality) = to_records(rows)?;
    let mut ds = ScalingDataset::new(records, dimensionality)?;
    if let Some(e) = opts.exponents {
        ds = ds.with_exponents(e);
    }
    ds.include_unconverged = opts.include_unconverged;
    check_inputs(&ds)?;
    std::fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let e = ds.exponents;
    let curves = ds.curves();
    let mut files = Vec::new();

    let (collapse, error) = match find_crossing(&ds) {
        Ok(c) => (Some(c), None),
        Err(err) => {
            log::warn!("no crossing: {err}");
            (None, Some(err.to_string()))
        }
    };
    let residual_beta_doubled = collapse.as_ref().and_then(|c| {
        let doubled = ScalingDataset {
            exponents: Exponents {
                beta: 2.0 * e.beta,
                nu: e.nu,
            },
            ..ds.clone()
        };
        collapse_quality(&doubled, c.g_c).ok()
    });
    let collapse_report = CollapseReport {
        dimensionality,
        exponents: e,
        sizes: curves.iter().map(|c| c.size.clone()).collect(),
        collapse,
        residual_beta_doubled,
        error,
    };
    let path = out_dir.join(COLLAPSE_FILE);
    write_json(&path, &collapse_report)?;
    files.push(path);

    if let Some(c) = &collapse_report.collapse {
        let path = out_dir.join(RESCALED_FILE);
        let mut w = csv::Writer::from_path(&path).with_context(|| format!("writing {}", path.display()))?;
        for p in &c.master {
            w.serialize(RescaledRow {
                x: p.x,
                y: p.y,
                size: &p.size,
            })?;
        }
        w.flush()?;
        files.push(path);
    }

    let peak = match fit_entropy_peak(&ds) {
        Ok(fit) => PeakReport {
            fit: Some(fit),
            error: None,
        },
        Err(err) => PeakReport {
            fit: None,
            error: Some(err.to_string()),
        },
    };
    let path = out_dir.join(PEAK_FILE);
    write_json(&path, &peak)?;
    files.push(path);

    let g_c_marker: Vec<(f64, String)> = collapse_report
        .collapse
        .iter()
        .map(|c| (c.g_c, format!("G_c = {:.3}", c.g_c)))
        .collect();
    let parity_fig = Figure {
        title: "Parity".into(),
        x_label: "G/γ".into(),
        y_label: "Π".into(),
        series: curves
            .iter()
            .map(|c| {
                Series::new(
                    c.size.clone(),
                    c.g.iter().copied().zip(c.parity.iter().copied()).collect(),
                )
            })
            .collect(),
        vlines: g_c_marker.clone(),
        ..Figure::default()
    };
    let entropy_fig = Figure {
        title: "Von Neumann entropy".into(),
        x_label: "G/γ".into(),
        y_label: "S".into(),
        series: curves
            .iter()
            .map(|c| {
                Series::new(
                    c.size.clone(),
                    c.g.iter().copied().zip(c.entropy.iter().copied()).collect(),
                )
            })
            .collect(),
        vlines: peak
            .fit
            .iter()
            .flat_map(|f| f.peaks.iter().map(|p| (p.g_peak, format!("max S ({})", p.size))))
            .collect(),
        ..Figure::default()
    };
    let collapse_fig = match &collapse_report.collapse {
        Some(c) => {
            let mut by_size: BTreeMap<(u64, String), Vec<(f64, f64)>> = BTreeMap::new();
            for p in &c.master {
                by_size
                    .entry((p.l.to_bits(), p.size.clone()))
                    .or_default()
                    .push((p.x, p.y));
            }
            Figure {
                title: format!("Collapse at G_c = {:.3} (β = {}, ν = {})", c.g_c, e.beta, e.nu),
                x_label: "(G − G_c) L^(1/ν)".into(),
                y_label: "Π L^(β/ν)".into(),
                series: by_size.into_iter().map(|((_, s), pts)| Series::new(s, pts)).collect(),
                vlines: vec![(0.0, "crossing".into())],
                ..Figure::default()
            }
        }
        None => {
            let series = curves
                .iter()
                .map(|c| {
                    let s = c.l.powf(e.beta / e.nu);
                    Series::new(
                        c.size.clone(),
                        c.g.iter().zip(&c.parity).map(|(&g, &p)| (g, p * s)).collect(),
                    )
                })
                .collect();
            Figure {
                title: "Rescaled parity (no crossing found)".into(),
                x_label: "G/γ".into(),
                y_label: "Π L^(β/ν)".into(),
                series,
                ..Figure::default()
            }
        }
    };
    for (name, fig) in [
        (PARITY_SVG, &parity_fig),
        (ENTROPY_SVG, &entropy_fig),
        (COLLAPSE_SVG, &collapse_fig),
    ] {
        let path = out_dir.join(name);
        write_svg(&path, fig)?;
        files.push(path);
    }
    Ok(AnalysisOutput {
        collapse: collapse_report,
        peak,
        files,
    })
}

/// Reads a sweep CSV and analyses it.
pub fn analyze_csv(csv_path: &Path, out_dir: &Path, opts: &AnalyzeOptions) -> anyhow::Result<AnalysisOutput> {
    if !csv_path.exists() {
        bail!(
            "cannot analyse the sweep: {} does not exist (run the sweep first)",
            csv_path.display()
        );
    }
    let rows = crate::store::read_csv(csv_path)?;
    analyze_rows(&rows, out_dir, opts)
}
