//! CSV emission: ',' separator, LF line endings, numbers at 12 significant
//! digits, and a leading `# schema` comment line.

use std::io::Write;

use anyhow::Result;

/// `%.12g`: 12 significant digits, trailing zeros trimmed.
pub fn num(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return if v.is_nan() { "nan".into() } else if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let sci = format!("{v:.11e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..12).contains(&exp) {
        let fixed = format!("{v:.prec$}", prec = (11 - exp) as usize);
        trim(&fixed).to_string()
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim(mantissa), exp.abs())
    }
}

fn trim(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub struct Table {
    schema: &'static str,
    header: Vec<&'static str>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(schema: &'static str, header: &[&'static str]) -> Self {
        Table {
            schema,
            header: header.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn write(&self, out: &mut dyn Write) -> Result<()> {
        writeln!(out, "# schema: {}", self.schema)?;
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(out);
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::num;

    #[test]
    fn twelve_significant_digits() {
        assert_eq!(num(0.0), "0");
        assert_eq!(num(1.0999999999999999), "1.1");
        assert_eq!(num(4.0 / 7.0), "0.571428571429");
        assert_eq!(num(-2.5), "-2.5");
        assert_eq!(num(1234567.0), "1234567");
        assert_eq!(num(1e-7), "1e-07");
        assert_eq!(num(3.25e15), "3.25e+15");
    }
}
