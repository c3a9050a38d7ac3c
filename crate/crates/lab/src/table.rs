use std::fmt::Write as _;

/// Version of every CSV schema emitted by the harness.
pub const SCHEMA_VERSION: u32 = 1;

/// A CSV table whose first line is `# blockmdp-lab <name> schema v<N>`.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, columns: Vec<&'static str>) -> Self {
        Self { name: name.to_string(), columns, rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("# blockmdp-lab {} schema v{SCHEMA_VERSION}\n", self.name);
        out.push_str(&self.columns.join(","));
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(out, "{}", r.join(","));
        }
        out
    }

    /// Rows whose first column equals `kind`.
    pub fn rows_of<'a>(&'a self, kind: &'a str) -> impl Iterator<Item = &'a Vec<String>> + 'a {
        self.rows.iter().filter(move |r| r[0] == kind)
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| *c == name)
    }
}

pub fn fmt_f(v: f64) -> String {
    format!("{v}")
}

pub fn fmt_opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let k = values.len() as f64;
    let mean = values.iter().sum::<f64>() / k;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0);
    (mean, var.sqrt())
}

/// Least-squares slope of `ln y` against `ln x`; NaN when any `y <= 0`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    if x.len() < 2 || y.iter().any(|&v| !(v > 0.0)) {
        return f64::NAN;
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let (mx, _) = mean_std(&lx);
    let (my, _) = mean_std(&ly);
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}
