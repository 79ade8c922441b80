//! `x0,…,x{d−1},label` CSV files. Values are written with 17 significant
//! digits so that a write/read round trip is bit-exact.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use super::LabeledDataset;
use crate::error::{Error, Result};
use crate::tensor::Matrix;

fn header(dim: usize) -> Vec<String> {
    (0..dim).map(|i| format!("x{i}")).chain(["label".to_string()]).collect()
}

pub fn write_csv_to<W: Write>(data: &LabeledDataset, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| Error::Format {
        location: "csv writer".into(),
        message: e.to_string(),
    };
    w.write_record(header(data.dim())).map_err(csv_err)?;
    for (row, label) in data.x.iter_rows().zip(&data.labels) {
        let fields = row
            .iter()
            .map(|v| format!("{v:.16e}"))
            .chain([label.to_string()]);
        w.write_record(fields).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io("csv output", e))?;
    Ok(())
}

pub fn write_csv(data: &LabeledDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_csv_to(data, file)
}

/// Parses a dataset; the class count is one past the largest label seen.
pub fn read_csv_from<R: Read>(input: R) -> Result<LabeledDataset> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let head = r
        .headers()
        .map_err(|e| Error::format_at_line(1, e.to_string()))?
        .clone();
    let dim = head.len().saturating_sub(1);
    let expected = header(dim);
    if head.is_empty() || head.iter().ne(expected.iter().map(String::as_str)) {
        return Err(Error::format_at_line(
            1,
            format!("expected header `{}`, found `{}`", expected.join(","), head.iter().collect::<Vec<_>>().join(",")),
        ));
    }
    let mut values = Vec::new();
    let mut labels = Vec::new();
    for record in r.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            Error::format_at_line(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != dim + 1 {
            return Err(Error::format_at_line(line, format!("expected {} fields, found {}", dim + 1, record.len())));
        }
        for field in record.iter().take(dim) {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| Error::format_at_line(line, format!("not a number: `{field}`")))?;
            values.push(v);
        }
        let label = &record[dim];
        labels.push(
            label
                .trim()
                .parse::<usize>()
                .map_err(|_| Error::format_at_line(line, format!("not a label: `{label}`")))?,
        );
    }
    let classes = labels.iter().map(|l| l + 1).max().unwrap_or(0);
    LabeledDataset::new(Matrix::new(labels.len(), dim, values)?, labels, classes)
}

pub fn read_csv(path: impl AsRef<Path>) -> Result<LabeledDataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv_from(file)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::{gen_curvature_dataset, gen_gaussian_mixture, two_gaussians};

    fn roundtrip(d: &LabeledDataset) -> LabeledDataset {
        let mut buf = Vec::new();
        write_csv_to(d, &mut buf).unwrap();
        read_csv_from(buf.as_slice()).unwrap()
    }

    #[test]
    fn bit_exact_roundtrip() {
        let d = gen_gaussian_mixture(&two_gaussians(50, 0.5), 3).unwrap();
        assert_eq!(roundtrip(&d), d);
        let d = gen_curvature_dataset(200, 1).unwrap();
        assert_eq!(roundtrip(&d), d);
    }

    #[test]
    fn seventeen_significant_digits() {
        let d = LabeledDataset::new(Matrix::row_vector(&[0.1, -2.5]), vec![1], 2).unwrap();
        let mut buf = Vec::new();
        write_csv_to(&d, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "x0,x1,label\n1.0000000000000001e-1,-2.5000000000000000e0,1\n");
    }

    #[test]
    fn empty_dataset_is_header_only() {
        let d = LabeledDataset::new(Matrix::zeros(0, 3), vec![], 0).unwrap();
        let mut buf = Vec::new();
        write_csv_to(&d, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), "x0,x1,x2,label\n");
        assert_eq!(read_csv_from(buf.as_slice()).unwrap(), d);
    }

    #[test]
    fn header_mismatch_is_format_error() {
        let err = read_csv_from("a,b,label\n1,2,0\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Format { .. }), "{err}");
    }

    #[test]
    fn malformed_row_names_line() {
        let err = read_csv_from("x0,x1,label\n1,2,0\n1,oops,1\n".as_bytes()).unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
        let err = read_csv_from("x0,x1,label\n1,2,0\n1,2\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Format { .. }));
    }
}
