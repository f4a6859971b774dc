//! Majority-vote cross-category networks from per-store fits.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;

use nalgebra::DMatrix;

use crate::app::ingest::{Channel, ColumnLayout};
use crate::error::{Result, VarError};
use crate::estimator::FitResult;
use crate::eval::{self, KendallW};

#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub struct Edge {
    pub source: String,
    pub target: String,
    pub channel: Channel,
    /// Stores in which the effect is nonzero.
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct EdgeList {
    pub channel: Channel,
    pub stores: usize,
    pub categories: Vec<String>,
    /// Cross-category edges with majority support.
    pub edges: Vec<Edge>,
    /// Support of every own-category effect, whether or not it has a majority.
    pub within: Vec<Edge>,
}

/// Whether the effect of column `pred` on equation `eq` is nonzero at any lag.
fn effect_present(fit: &FitResult, eq: usize, pred: usize) -> bool {
    fit.coefficients.lags().iter().any(|b| b[(eq, pred)] != 0.0)
}

fn check_fits(fits: &[FitResult], layout: &ColumnLayout) -> Result<()> {
    if fits.is_empty() {
        return Err(VarError::InvalidArgument("no store fits".into()));
    }
    if let Some((s, f)) = fits.iter().enumerate().find(|(_, f)| f.q() != layout.len()) {
        return Err(VarError::Dimension(format!(
            "fit for store {} has {} series, layout has {}",
            s + 1,
            f.q(),
            layout.len()
        )));
    }
    Ok(())
}

/// Per-store presence of the effect `channel of source → sales of target`,
/// or `None` when either column is absent from the layout.
fn store_presence(
    fits: &[FitResult],
    layout: &ColumnLayout,
    channel: Channel,
    source: &str,
    target: &str,
) -> Option<Vec<bool>> {
    let pred = layout.index(source, channel)?;
    let eq = layout.index(target, Channel::Sales)?;
    Some(fits.iter().map(|f| effect_present(f, eq, pred)).collect())
}

/// Edge `A → B` for the channel when the coefficient group (equation: sales
/// of B, predictor: channel of A) is nonzero in more than half the stores.
pub fn extract_network(
    fits: &[FitResult],
    layout: &ColumnLayout,
    channel: Channel,
) -> Result<EdgeList> {
    check_fits(fits, layout)?;
    let m = fits.len();
    let categories = layout.categories();
    let mut edges = Vec::new();
    let mut within = Vec::new();
    for a in &categories {
        for b in &categories {
            let Some(pres) = store_presence(fits, layout, channel, a, b) else {
                continue;
            };
            let support = pres.iter().filter(|x| **x).count();
            let edge = Edge {
                source: a.clone(),
                target: b.clone(),
                channel,
                support,
            };
            if a == b {
                within.push(edge);
            } else if 2 * support > m {
                edges.push(edge);
            }
        }
    }
    Ok(EdgeList {
        channel,
        stores: m,
        categories,
        edges,
        within,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize)]
pub struct Degree {
    /// Out-degree.
    pub influence: usize,
    /// In-degree.
    pub responsiveness: usize,
}

impl EdgeList {
    pub fn degrees(&self) -> BTreeMap<String, Degree> {
        let mut d: BTreeMap<String, Degree> = self
            .categories
            .iter()
            .map(|c| (c.clone(), Degree::default()))
            .collect();
        for e in &self.edges {
            d.get_mut(&e.source)
                .expect("edge endpoints are categories")
                .influence += 1;
            d.get_mut(&e.target)
                .expect("edge endpoints are categories")
                .responsiveness += 1;
        }
        d
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["source", "target", "channel", "support", "stores"])?;
        for e in &self.edges {
            w.write_record([
                e.source.as_str(),
                e.target.as_str(),
                e.channel.name(),
                &e.support.to_string(),
                &self.stores.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_dot(&self) -> String {
        let mut s = String::from("digraph network {\n");
        for c in &self.categories {
            let _ = writeln!(s, "  \"{}\";", escape_dot(c));
        }
        for e in &self.edges {
            let _ = writeln!(
                s,
                "  \"{}\" -> \"{}\" [channel=\"{}\", support={}, label=\"{}/{}\"];",
                escape_dot(&e.source),
                escape_dot(&e.target),
                e.channel,
                e.support,
                e.support,
                self.stores
            );
        }
        s.push_str("}\n");
        s
    }

    pub fn to_graphml(&self) -> String {
        let mut s = String::new();
        s.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
        s.push_str("<graphml xmlns=\"http://graphml.graphdrawing.org/xmlns\">\n");
        s.push_str(
            "  <key id=\"channel\" for=\"edge\" attr.name=\"channel\" attr.type=\"string\"/>\n",
        );
        s.push_str(
            "  <key id=\"support\" for=\"edge\" attr.name=\"support\" attr.type=\"int\"/>\n",
        );
        s.push_str("  <graph id=\"network\" edgedefault=\"directed\">\n");
        for c in &self.categories {
            let _ = writeln!(s, "    <node id=\"{}\"/>", escape_xml(c));
        }
        for (i, e) in self.edges.iter().enumerate() {
            let _ = writeln!(
                s,
                "    <edge id=\"e{i}\" source=\"{}\" target=\"{}\"><data key=\"channel\">{}</data><data key=\"support\">{}</data></edge>",
                escape_xml(&e.source),
                escape_xml(&e.target),
                e.channel,
                e.support
            );
        }
        s.push_str("  </graph>\n</graphml>\n");
        s
    }
}

fn escape_dot(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

fn escape_xml(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct Prevalence {
    pub channel: Channel,
    /// Share of nonzero own-category effects over stores and categories.
    pub within: f64,
    /// Share of nonzero cross-category effects over stores and category pairs.
    pub cross: f64,
}

/// Share of nonzero effects on sales, within and across categories, per channel.
pub fn prevalence(fits: &[FitResult], layout: &ColumnLayout) -> Result<Vec<Prevalence>> {
    check_fits(fits, layout)?;
    let cats = layout.categories();
    let mut out = Vec::new();
    for ch in Channel::ALL {
        let (mut wn, mut wd, mut cn, mut cd) = (0usize, 0usize, 0usize, 0usize);
        for a in &cats {
            for b in &cats {
                if let Some(pres) = store_presence(fits, layout, ch, a, b) {
                    let k = pres.iter().filter(|x| **x).count();
                    if a == b {
                        wn += k;
                        wd += pres.len();
                    } else {
                        cn += k;
                        cd += pres.len();
                    }
                }
            }
        }
        let share = |n: usize, d: usize| if d == 0 { 0.0 } else { n as f64 / d as f64 };
        out.push(Prevalence {
            channel: ch,
            within: share(wn, wd),
            cross: share(cn, cd),
        });
    }
    Ok(out)
}

/// Per-store influence (`out = true`) or responsiveness counts: a
/// `stores × categories` matrix of cross-category effect counts.
pub fn store_degrees(
    fits: &[FitResult],
    layout: &ColumnLayout,
    channel: Channel,
    out: bool,
) -> Result<DMatrix<f64>> {
    check_fits(fits, layout)?;
    let cats = layout.categories();
    let mut m = DMatrix::zeros(fits.len(), cats.len());
    for (ai, a) in cats.iter().enumerate() {
        for (bi, b) in cats.iter().enumerate() {
            if a == b {
                continue;
            }
            if let Some(pres) = store_presence(fits, layout, channel, a, b) {
                let col = if out { ai } else { bi };
                for (s, p) in pres.iter().enumerate() {
                    if *p {
                        m[(s, col)] += 1.0;
                    }
                }
            }
        }
    }
    Ok(m)
}

/// Agreement across stores on the ranking of categories by degree.
pub fn degree_concordance(
    fits: &[FitResult],
    layout: &ColumnLayout,
    channel: Channel,
    out: bool,
) -> Result<KendallW> {
    eval::kendall_w(&store_degrees(fits, layout, channel, out)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn xml_escaping() {
        assert_eq!(escape_xml("a&b<c>"), "a&amp;b&lt;c&gt;");
        assert_eq!(escape_dot("x\"y"), "x\\\"y");
    }
}
