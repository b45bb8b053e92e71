/// Nine decimals, dot separator; values that round to zero print unsigned.
pub fn fixed9(v: f64) -> String {
    let s = format!("{v:.9}");
    match s.strip_prefix('-') {
        Some(rest) if rest.bytes().all(|b| b == b'0' || b == b'.') => rest.to_string(),
        _ => s,
    }
}

/// Three-digit scientific notation for deviations.
pub fn sci(v: f64) -> String {
    format!("{v:.3e}")
}

/// In-memory CSV with a fixed header.
pub struct CsvTable {
    writer: csv::Writer<Vec<u8>>,
    width: usize,
}

impl CsvTable {
    pub fn new(header: &[&str]) -> Self {
        let mut writer = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        writer.write_record(header).expect("write to memory");
        Self { writer, width: header.len() }
    }

    pub fn row<const N: usize>(&mut self, fields: [String; N]) {
        debug_assert_eq!(N, self.width);
        self.writer.write_record(&fields).expect("write to memory");
    }

    pub fn finish(self) -> String {
        let bytes = self.writer.into_inner().expect("flush to memory");
        String::from_utf8(bytes).expect("fields are UTF-8")
    }
}
