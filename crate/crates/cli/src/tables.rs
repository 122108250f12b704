/// A header plus rows of preformatted cells.
#[derive(Debug, Clone, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self { header: header.into_iter().map(Into::into).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_tsv(&self) -> String {
        let mut out = self.header.join("\t");
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.join("\t"));
            out.push('\n');
        }
        out
    }

    /// Space-aligned text for the terminal.
    pub fn to_text(&self) -> String {
        let mut widths: Vec<usize> = self.header.iter().map(|h| h.chars().count()).collect();
        for row in &self.rows {
            for (w, cell) in widths.iter_mut().zip(row) {
                *w = (*w).max(cell.chars().count());
            }
        }
        let line = |cells: &[String]| {
            let padded: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
            padded.join("  ").trim_end().to_string()
        };
        let mut out = line(&self.header);
        out.push('\n');
        for row in &self.rows {
            out.push_str(&line(row));
            out.push('\n');
        }
        out
    }
}

pub fn fixed(v: f64, digits: usize) -> String {
    if v.is_finite() {
        format!("{v:.digits$}")
    } else if v.is_nan() {
        "NaN".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

/// `0.950 (0.012)`, or just the mean when no standard error exists.
pub fn with_se(mean: f64, se: Option<f64>) -> String {
    match se {
        Some(se) => format!("{} ({})", fixed(mean, 3), fixed(se, 3)),
        None => fixed(mean, 3),
    }
}

/// p-values in the compact style of regression tables.
pub fn p_value(p: f64) -> String {
    if p < 1e-3 {
        "<0.001".into()
    } else {
        fixed(p, 3)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_alignment() {
        let mut t = Table::new(["a", "long"]);
        t.push(vec!["xyz".into(), "1".into()]);
        assert_eq!(t.to_text(), "a    long\nxyz  1\n");
        assert_eq!(t.to_tsv(), "a\tlong\nxyz\t1\n");
    }

    #[test]
    fn cell_formats() {
        assert_eq!(with_se(0.95, Some(0.0123)), "0.950 (0.012)");
        assert_eq!(with_se(1.0, None), "1.000");
        assert_eq!(p_value(0.0004), "<0.001");
        assert_eq!(p_value(0.0456), "0.046");
        assert_eq!(fixed(f64::INFINITY, 2), "inf");
    }
}
