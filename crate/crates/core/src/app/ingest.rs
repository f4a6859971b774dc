//! Per-store CSV ingestion.
//!
//! Schema: a `week` column holding consecutive integer labels, then one
//! column per variable named `<category>__<sales|price|promo>`. Columns are
//! reordered into blocks: every sales series, then every price series, then
//! every promotion series, each block keeping header order.

use std::collections::BTreeSet;
use std::fmt;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::error::{Result, VarError};
use crate::var_model::TimeSeriesPanel;

pub const WEEK_COLUMN: &str = "week";
pub const SEPARATOR: &str = "__";

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize,
)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    Sales,
    Price,
    Promo,
}

impl Channel {
    pub const ALL: [Channel; 3] = [Channel::Sales, Channel::Price, Channel::Promo];

    pub fn name(&self) -> &'static str {
        match self {
            Channel::Sales => "sales",
            Channel::Price => "price",
            Channel::Promo => "promo",
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Channel {
    type Err = VarError;

    fn from_str(s: &str) -> Result<Self> {
        Channel::ALL
            .iter()
            .copied()
            .find(|c| c.name() == s)
            .ok_or_else(|| {
                VarError::InvalidArgument(format!(
                    "unknown channel '{s}' (expected sales, price or promo)"
                ))
            })
    }
}

/// Column order of an ingested panel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnLayout {
    /// `(category, channel)` per panel column.
    columns: Vec<(String, Channel)>,
}

impl ColumnLayout {
    /// Groups `(category, channel)` columns into sales, price and promo blocks.
    pub fn from_header(header: &[(String, Channel)]) -> Self {
        let mut columns = Vec::with_capacity(header.len());
        for ch in Channel::ALL {
            columns.extend(header.iter().filter(|(_, c)| *c == ch).cloned());
        }
        Self { columns }
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn columns(&self) -> &[(String, Channel)] {
        &self.columns
    }

    pub fn names(&self) -> Vec<String> {
        self.columns
            .iter()
            .map(|(c, ch)| format!("{c}{SEPARATOR}{ch}"))
            .collect()
    }

    pub fn index(&self, category: &str, channel: Channel) -> Option<usize> {
        self.columns
            .iter()
            .position(|(c, ch)| c == category && *ch == channel)
    }

    pub fn channel_count(&self, channel: Channel) -> usize {
        self.columns.iter().filter(|(_, ch)| *ch == channel).count()
    }

    /// Categories in order of first appearance across the blocks.
    pub fn categories(&self) -> Vec<String> {
        let mut seen = Vec::new();
        for (c, _) in &self.columns {
            if !seen.contains(c) {
                seen.push(c.clone());
            }
        }
        seen
    }

    pub fn channels(&self) -> Vec<Channel> {
        self.columns.iter().map(|(_, ch)| *ch).collect()
    }
}

#[derive(Debug, Clone)]
pub struct StoreSource {
    pub store: String,
    pub path: PathBuf,
}

#[derive(Debug, Clone, Default)]
pub struct PanelSource {
    pub stores: Vec<StoreSource>,
}

impl PanelSource {
    /// One store per CSV file, identified by the file stem.
    pub fn from_paths<P: AsRef<Path>>(paths: &[P]) -> Self {
        let stores = paths
            .iter()
            .map(|p| {
                let path = p.as_ref().to_path_buf();
                let store = path
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| path.display().to_string());
                StoreSource { store, path }
            })
            .collect();
        Self { stores }
    }
}

#[derive(Debug, Clone)]
pub struct StorePanel {
    pub store: String,
    pub weeks: Vec<i64>,
    pub layout: ColumnLayout,
    pub panel: TimeSeriesPanel,
}

fn parse_header(header: &csv::StringRecord, label: &str) -> Result<Vec<(String, Channel)>> {
    if header.get(0).map(str::trim) != Some(WEEK_COLUMN) {
        return Err(VarError::Data(format!(
            "{label}: first column must be '{WEEK_COLUMN}'"
        )));
    }
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for (c, name) in header.iter().enumerate().skip(1) {
        let name = name.trim();
        let (cat, ch) = name.rsplit_once(SEPARATOR).ok_or_else(|| {
            VarError::Data(format!(
                "{label}: column {} '{name}' is not of the form <category>{SEPARATOR}<sales|price|promo>",
                c + 1
            ))
        })?;
        let ch: Channel = ch.parse().map_err(|_| {
            VarError::Data(format!(
                "{label}: column {} '{name}' has unknown variable '{ch}'",
                c + 1
            ))
        })?;
        if cat.is_empty() {
            return Err(VarError::Data(format!(
                "{label}: column {} '{name}' has an empty category",
                c + 1
            )));
        }
        if !seen.insert(name.to_string()) {
            return Err(VarError::Data(format!(
                "{label}: duplicate column '{name}'"
            )));
        }
        out.push((cat.to_string(), ch));
    }
    if out.is_empty() {
        return Err(VarError::Data(format!("{label}: no variable columns")));
    }
    Ok(out)
}

/// Reads one store's CSV from any reader; `label` prefixes diagnostics.
pub fn read_store<R: Read>(reader: R, store: &str, label: &str) -> Result<StorePanel> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let header = rdr.headers()?.clone();
    let cols = parse_header(&header, label)?;
    let layout = ColumnLayout::from_header(&cols);
    let order: Vec<usize> = layout
        .columns()
        .iter()
        .map(|target| {
            cols.iter()
                .position(|c| c == target)
                .expect("layout built from header")
        })
        .collect();

    let mut weeks: Vec<i64> = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = r + 2;
        if rec.len() != header.len() {
            return Err(VarError::Data(format!(
                "{label}: line {line} has {} cells, header has {}",
                rec.len(),
                header.len()
            )));
        }
        let wk = rec.get(0).unwrap_or("").trim();
        let week: i64 = wk.parse().map_err(|_| {
            VarError::Data(format!(
                "{label}: line {line}: week label '{wk}' is not an integer"
            ))
        })?;
        if weeks.contains(&week) {
            return Err(VarError::Data(format!(
                "{label}: line {line}: duplicated week {week}"
            )));
        }
        if let Some(&prev) = weeks.last() {
            if week != prev + 1 {
                return Err(VarError::Data(format!(
                    "{label}: line {line}: week {week} does not follow week {prev} (weeks must be contiguous)"
                )));
            }
        }
        let mut values = Vec::with_capacity(cols.len());
        for (c, cell) in rec.iter().enumerate().skip(1) {
            let cell = cell.trim();
            let v: f64 = cell
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| {
                    VarError::Data(format!(
                        "{label}: line {line}, column '{}': missing or invalid value '{cell}'",
                        header.get(c).unwrap_or("").trim()
                    ))
                })?;
            values.push(v);
        }
        weeks.push(week);
        rows.push(values);
    }
    if rows.is_empty() {
        return Err(VarError::Data(format!("{label}: no data rows")));
    }
    let data = DMatrix::from_fn(rows.len(), order.len(), |r, c| rows[r][order[c]]);
    let panel = TimeSeriesPanel::new(data, layout.names())?;
    Ok(StorePanel {
        store: store.to_string(),
        weeks,
        layout,
        panel,
    })
}

pub fn read_store_csv(path: &Path, store: &str) -> Result<StorePanel> {
    let file = std::fs::File::open(path)
        .map_err(|e| VarError::Data(format!("{}: cannot open: {e}", path.display())))?;
    read_store(file, store, &path.display().to_string())
}

/// Reads every store and checks that all share the first store's column set.
pub fn ingest(source: &PanelSource) -> Result<Vec<StorePanel>> {
    if source.stores.is_empty() {
        return Err(VarError::InvalidArgument("no store files given".into()));
    }
    let panels: Vec<StorePanel> = source
        .stores
        .iter()
        .map(|s| read_store_csv(&s.path, &s.store))
        .collect::<Result<_>>()?;
    let reference = &panels[0];
    for p in &panels[1..] {
        if p.layout != reference.layout {
            let a: BTreeSet<String> = reference.layout.names().into_iter().collect();
            let b: BTreeSet<String> = p.layout.names().into_iter().collect();
            let missing: Vec<&String> = a.difference(&b).collect();
            let extra: Vec<&String> = b.difference(&a).collect();
            return Err(VarError::Data(format!(
                "store '{}' columns differ from store '{}': missing {:?}, extra {:?}",
                p.store, reference.store, missing, extra
            )));
        }
    }
    Ok(panels)
}

/// Reads a numeric CSV with a header row naming the series.
pub fn read_panel<R: Read>(reader: R, label: &str) -> Result<TimeSeriesPanel> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let header = rdr.headers()?.clone();
    let names: Vec<String> = header.iter().map(|h| h.trim().to_string()).collect();
    if names.is_empty() {
        return Err(VarError::Data(format!("{label}: empty header")));
    }
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = r + 2;
        if rec.len() != names.len() {
            return Err(VarError::Data(format!(
                "{label}: line {line} has {} cells, header has {}",
                rec.len(),
                names.len()
            )));
        }
        let mut row = Vec::with_capacity(names.len());
        for (c, cell) in rec.iter().enumerate() {
            let cell = cell.trim();
            let v: f64 = cell
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| {
                    VarError::Data(format!(
                        "{label}: line {line}, column '{}': missing or invalid value '{cell}'",
                        names[c]
                    ))
                })?;
            row.push(v);
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(VarError::Data(format!("{label}: no data rows")));
    }
    let data = DMatrix::from_fn(rows.len(), names.len(), |r, c| rows[r][c]);
    TimeSeriesPanel::new(data, names)
}

pub fn read_panel_csv(path: &Path) -> Result<TimeSeriesPanel> {
    let file = std::fs::File::open(path)
        .map_err(|e| VarError::Data(format!("{}: cannot open: {e}", path.display())))?;
    read_panel(file, &path.display().to_string())
}

/// Writes a store CSV: the week column followed by the panel columns.
pub fn write_store<W: std::io::Write>(store: &StorePanel, out: W) -> Result<()> {
    if store.weeks.len() != store.panel.len() {
        return Err(VarError::Dimension(format!(
            "{} week labels for {} rows",
            store.weeks.len(),
            store.panel.len()
        )));
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(std::iter::once(WEEK_COLUMN.to_string()).chain(store.layout.names()))?;
    for (r, week) in store.weeks.iter().enumerate() {
        w.write_record(
            std::iter::once(week.to_string())
                .chain(store.panel.data().row(r).iter().map(|v| v.to_string())),
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Writes a panel with a header row of series names.
pub fn write_panel<W: std::io::Write>(panel: &TimeSeriesPanel, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(panel.names())?;
    for r in 0..panel.len() {
        w.write_record(panel.data().row(r).iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn channel_parse() {
        assert_eq!("promo".parse::<Channel>().unwrap(), Channel::Promo);
        assert!("volume".parse::<Channel>().is_err());
    }

    #[test]
    fn bad_header_names_column() {
        let csv = "week,beer_sales\n1,2\n";
        let e = read_store(csv.as_bytes(), "s", "toy").unwrap_err();
        assert!(e.to_string().contains("beer_sales"));
    }
}
