use std::fmt::Write as _;
use std::path::Path;

use dbm_lab::io::sig17;

/// CSV built row by row, every number at 17 significant digits.
pub struct Csv {
    text: String,
}

pub enum Cell<'a> {
    Num(f64),
    Int(u64),
    Text(&'a str),
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        Csv { text: header.join(",") + "\n" }
    }

    pub fn row(&mut self, cells: &[Cell<'_>]) {
        for (i, c) in cells.iter().enumerate() {
            if i > 0 {
                self.text.push(',');
            }
            match c {
                Cell::Num(x) => self.text.push_str(&sig17(*x)),
                Cell::Int(k) => write!(self.text, "{k}").unwrap(),
                Cell::Text(s) => self.text.push_str(s),
            }
        }
        self.text.push('\n');
    }

    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, &self.text)
    }
}

/// Four significant digits, for reading by eye.
pub fn rounded(x: f64) -> String {
    if x == 0.0 {
        "0".into()
    } else if (1e-3..1e5).contains(&x.abs()) {
        let digits = (3 - x.abs().log10().floor() as i32).max(0) as usize;
        format!("{x:.digits$}")
    } else {
        format!("{x:.3e}")
    }
}

/// `quantity,value,rounded` table.
pub struct Summary {
    csv: Csv,
}

impl Summary {
    pub fn new() -> Self {
        Summary { csv: Csv::new(&["quantity", "value", "rounded"]) }
    }

    pub fn add(&mut self, name: &str, x: f64) {
        let r = rounded(x);
        self.csv.row(&[Cell::Text(name), Cell::Num(x), Cell::Text(&r)]);
    }

    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        self.csv.write(path)
    }
}
