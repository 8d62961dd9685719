#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Align {
    Left,
    Right,
}

/// A rectangular table of pre-formatted cells.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub headers: Vec<String>,
    pub align: Vec<Align>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    /// First `left` columns are left-aligned, the rest right-aligned.
    pub fn new(headers: &[&str], left: usize) -> Self {
        Table {
            headers: headers.iter().map(|h| h.to_string()).collect(),
            align: (0..headers.len())
                .map(|i| if i < left { Align::Left } else { Align::Right })
                .collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        assert_eq!(row.len(), self.headers.len(), "row width");
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn column(&self, name: &str) -> Option<Vec<&str>> {
        let i = self.headers.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[i].as_str()).collect())
    }

    pub fn to_text(&self) -> String {
        let widths: Vec<usize> = (0..self.headers.len())
            .map(|c| {
                self.rows
                    .iter()
                    .map(|r| r[c].chars().count())
                    .chain([self.headers[c].chars().count()])
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let line = |cells: &[String]| {
            let parts: Vec<String> = cells
                .iter()
                .enumerate()
                .map(|(c, cell)| {
                    let pad = widths[c] - cell.chars().count();
                    match self.align[c] {
                        Align::Left => format!("{cell}{}", " ".repeat(pad)),
                        Align::Right => format!("{}{cell}", " ".repeat(pad)),
                    }
                })
                .collect();
            parts.join("  ").trim_end().to_string()
        };
        let mut out = line(&self.headers);
        out.push('\n');
        let total: usize = widths.iter().sum::<usize>() + 2 * widths.len().saturating_sub(1);
        out.push_str(&"-".repeat(total));
        out.push('\n');
        for r in &self.rows {
            out.push_str(&line(r));
            out.push('\n');
        }
        out
    }

    pub fn to_delimited(&self, delimiter: u8) -> String {
        let mut w = csv::WriterBuilder::new()
            .delimiter(delimiter)
            .from_writer(Vec::new());
        // writing into memory cannot fail
        w.write_record(&self.headers).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 cells")
    }

    pub fn to_csv(&self) -> String {
        self.to_delimited(b',')
    }
}

/// `+0.0123` style signed fixed-point.
pub fn signed(x: f64, decimals: usize) -> String {
    let s = format!("{:+.*}", decimals, x);
    // avoid "-0.00"
    if s.starts_with('-') && s[1..].chars().all(|c| c == '0' || c == '.') {
        format!("+{}", &s[1..])
    } else {
        s
    }
}

/// `1.217 B`, `0.186 M` or a plain integer below ten thousand.
pub fn human_count(n: u64) -> String {
    match n {
        n if n >= 100_000_000 => format!("{:.3} B", n as f64 / 1e9),
        n if n >= 10_000 => format!("{:.3} M", n as f64 / 1e6),
        n => n.to_string(),
    }
}

/// Three significant figures in scientific form, e.g. `1.5e-4`.
pub fn sci(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if x >= 0.01 {
        return format!("{x:.3}");
    }
    let exp = x.abs().log10().floor() as i32;
    let mant = x / 10f64.powi(exp);
    format!("{mant:.1}e{exp}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aligns_columns() {
        let mut t = Table::new(&["method", "z"], 1);
        t.push(vec!["softpick".into(), "+4.47".into()]);
        t.push(vec!["ssmax".into(), "-16.04".into()]);
        let text = t.to_text();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "method         z");
        assert_eq!(lines[2], "softpick   +4.47");
        assert_eq!(lines[3], "ssmax     -16.04");
    }

    #[test]
    fn delimited_round_trip() {
        let mut t = Table::new(&["a", "b"], 1);
        t.push(vec!["x,y".into(), "1".into()]);
        assert_eq!(t.to_csv(), "a,b\n\"x,y\",1\n");
        assert_eq!(t.to_delimited(b'\t'), "a\tb\nx,y\t1\n");
    }

    #[test]
    fn number_formats() {
        assert_eq!(signed(-0.0001, 2), "+0.00");
        assert_eq!(signed(0.0169, 4), "+0.0169");
        assert_eq!(sci(1.5e-4), "1.5e-4");
        assert_eq!(sci(0.027), "0.027");
        assert_eq!(sci(1.0), "1.000");
    }
}
