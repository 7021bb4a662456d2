//! Trial datasets as CSV files.
//!
//! Columns are `cluster,sequence,period,treated,exposure,outcome`, one row
//! per individual. Reading infers the design from the rows and rejects data
//! that do not follow the stepped-wedge staircase.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::Deserialize;
use swedge_core::{Observation, TrialDataset};

use crate::error::{Error, Result};
use crate::format::fmt_num;

pub const HEADER: [&str; 6] = ["cluster", "sequence", "period", "treated", "exposure", "outcome"];

#[derive(Deserialize)]
struct Row {
    cluster: usize,
    sequence: usize,
    period: usize,
    treated: u8,
    exposure: usize,
    outcome: f64,
}

pub fn read_dataset<R: Read>(reader: R) -> Result<TrialDataset> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.iter().ne(HEADER.iter().copied()) {
        return Err(Error::Format(format!(
            "expected header '{}', found '{}'",
            HEADER.join(","),
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.deserialize::<Row>().enumerate() {
        let r = rec.map_err(|e| Error::Format(format!("data row {}: {e}", i + 1)))?;
        if r.treated > 1 {
            return Err(Error::Format(format!("data row {}: treated must be 0 or 1", i + 1)));
        }
        rows.push(Observation {
            cluster: r.cluster,
            sequence: r.sequence,
            period: r.period,
            treated: r.treated,
            exposure: r.exposure,
            outcome: r.outcome,
        });
    }
    Ok(TrialDataset::from_rows(rows)?)
}

pub fn read_dataset_file(path: &Path) -> Result<TrialDataset> {
    let file = File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    read_dataset(file)
}

pub fn write_dataset<W: Write>(writer: W, data: &TrialDataset) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(HEADER)?;
    for o in data.rows() {
        w.write_record([
            o.cluster.to_string(),
            o.sequence.to_string(),
            o.period.to_string(),
            o.treated.to_string(),
            o.exposure.to_string(),
            fmt_num(o.outcome),
        ])?;
    }
    w.flush().map_err(|e| Error::Io(e.to_string()))?;
    Ok(())
}

pub fn write_dataset_file(path: &Path, data: &TrialDataset) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    write_dataset(std::io::BufWriter::new(file), data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use swedge_core::datagen::{canonical_curve, generate, CurveKind, GenParams};
    use swedge_core::StudyDesign;

    fn sample() -> TrialDataset {
        let design = StudyDesign::new(3, 2, 3, 1).unwrap();
        let curve = canonical_curve(CurveKind::D, 6).unwrap();
        generate(&design, &curve, &GenParams::reference(5), 4).unwrap()
    }

    #[test]
    fn round_trip() {
        let data = sample();
        let mut buf = Vec::new();
        write_dataset(&mut buf, &data).unwrap();
        assert!(buf.starts_with(b"cluster,sequence,period,treated,exposure,outcome\n"));
        assert_eq!(read_dataset(buf.as_slice()).unwrap(), data);
    }

    #[test]
    fn rejects_bad_header_and_values() {
        let bad = "cluster,seq,period,treated,exposure,outcome\n1,1,1,0,0,1.0\n";
        assert!(matches!(read_dataset(bad.as_bytes()), Err(Error::Format(_))));
        let bad = "cluster,sequence,period,treated,exposure,outcome\n1,1,1,0,0,abc\n";
        let err = read_dataset(bad.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("data row 1"), "{err}");
    }

    #[test]
    fn rejects_broken_staircase() {
        let mut buf = Vec::new();
        write_dataset(&mut buf, &sample()).unwrap();
        let text = String::from_utf8(buf).unwrap();
        // Flip the treatment flag of the first control row.
        let tampered = text.replacen("\n1,1,1,0,0,", "\n1,1,1,1,0,", 1);
        assert_ne!(tampered, text);
        assert!(matches!(read_dataset(tampered.as_bytes()), Err(Error::Core(_))));
    }
}
