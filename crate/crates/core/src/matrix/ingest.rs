use std::collections::HashMap;
use std::io::Read;

use super::{MatrixError, RatingMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Delimiter {
    /// Tab if the first non-blank line contains one, comma otherwise.
    #[default]
    Auto,
    Comma,
    Tab,
}

impl Delimiter {
    fn resolve(self, text: &str) -> u8 {
        match self {
            Delimiter::Comma => b',',
            Delimiter::Tab => b'\t',
            Delimiter::Auto => {
                let first = text.lines().find(|l| !l.trim().is_empty()).unwrap_or("");
                if first.contains('\t') {
                    b'\t'
                } else {
                    b','
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct CsvOptions {
    pub delimiter: Delimiter,
    pub has_header: bool,
}

/// Reads `row_id, col_id, value` records. Ids are opaque strings and are
/// re-indexed densely in order of first appearance.
pub fn ingest_csv<R: Read>(mut reader: R, opts: &CsvOptions) -> Result<RatingMatrix, MatrixError> {
    let mut text = String::new();
    reader
        .read_to_string(&mut text)
        .map_err(|e| MatrixError::Malformed(e.to_string()))?;
    ingest_str(&text, opts)
}

pub fn ingest_str(text: &str, opts: &CsvOptions) -> Result<RatingMatrix, MatrixError> {
    let delimiter = opts.delimiter.resolve(text);
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(opts.has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());

    let mut row_index: HashMap<String, usize> = HashMap::new();
    let mut col_index: HashMap<String, usize> = HashMap::new();
    let mut row_ids = Vec::new();
    let mut col_ids = Vec::new();
    let mut seen: HashMap<(usize, usize), u64> = HashMap::new();
    let mut triplets = Vec::new();

    for record in reader.records() {
        let record = record.map_err(|e| MatrixError::Malformed(e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        if record.len() != 3 {
            return Err(MatrixError::FieldCount {
                line,
                found: record.len(),
            });
        }
        let value = parse_value(&record[2], line)?;
        let i = intern(&record[0], &mut row_index, &mut row_ids);
        let j = intern(&record[1], &mut col_index, &mut col_ids);
        if let Some(&first_line) = seen.get(&(i, j)) {
            return Err(MatrixError::Duplicate {
                row_id: row_ids[i].clone(),
                col_id: col_ids[j].clone(),
                first_line,
                second_line: line,
            });
        }
        seen.insert((i, j), line);
        triplets.push((i, j, value));
    }

    if triplets.is_empty() {
        return Err(MatrixError::Empty);
    }
    RatingMatrix::from_triplets(row_ids.len(), col_ids.len(), triplets)?.with_ids(row_ids, col_ids)
}

fn parse_value(text: &str, line: u64) -> Result<f64, MatrixError> {
    let value: f64 = text.parse().map_err(|_| MatrixError::NonNumeric {
        line,
        text: text.to_string(),
    })?;
    if !value.is_finite() {
        return Err(MatrixError::NonNumeric {
            line,
            text: text.to_string(),
        });
    }
    if value < 0.0 {
        return Err(MatrixError::NegativeValue { line, value });
    }
    Ok(value)
}

fn intern(id: &str, index: &mut HashMap<String, usize>, ids: &mut Vec<String>) -> usize {
    if let Some(&k) = index.get(id) {
        return k;
    }
    let k = ids.len();
    index.insert(id.to_string(), k);
    ids.push(id.to_string());
    k
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<RatingMatrix, MatrixError> {
        ingest_str(text, &CsvOptions::default())
    }

    #[test]
    fn basic_triples() {
        let m = parse("u1,i1,4.0\nu1,i2,2.0").unwrap();
        assert_eq!((m.n_rows(), m.n_cols()), (1, 2));
        assert_eq!(m.get(0, 0), Some(4.0));
        assert_eq!(m.get(0, 1), Some(2.0));
        assert_eq!(m.row_ids(), ["u1"]);
        assert_eq!(m.col_ids(), ["i1", "i2"]);
    }

    #[test]
    fn explicit_zero_is_observed() {
        let m = parse("u1,i1,0").unwrap();
        assert_eq!(m.get(0, 0), Some(0.0));
        assert!(m.is_observed(0, 0));
    }

    #[test]
    fn negative_value_names_line() {
        assert_eq!(
            parse("u1,i1,-3"),
            Err(MatrixError::NegativeValue { line: 1, value: -3.0 })
        );
        assert!(matches!(
            parse("a,b,1\na,c,2\nb,b,-0.5"),
            Err(MatrixError::NegativeValue { line: 3, .. })
        ));
    }

    #[test]
    fn duplicate_names_both_lines() {
        assert_eq!(
            parse("u1,i1,1\nu2,i1,2\nu1,i1,3\n"),
            Err(MatrixError::Duplicate {
                row_id: "u1".into(),
                col_id: "i1".into(),
                first_line: 1,
                second_line: 3
            })
        );
    }

    #[test]
    fn non_numeric_rejected() {
        assert!(matches!(parse("u1,i1,good"), Err(MatrixError::NonNumeric { line: 1, .. })));
        assert!(matches!(parse("u1,i1,inf"), Err(MatrixError::NonNumeric { .. })));
        assert!(matches!(parse("u1,i1,NaN"), Err(MatrixError::NonNumeric { .. })));
    }

    #[test]
    fn wrong_field_count() {
        assert_eq!(parse("u1,i1\n"), Err(MatrixError::FieldCount { line: 1, found: 2 }));
    }

    #[test]
    fn empty_input() {
        assert_eq!(parse(""), Err(MatrixError::Empty));
        assert_eq!(parse("\n\n"), Err(MatrixError::Empty));
    }

    #[test]
    fn header_and_tab_detection() {
        let opts = CsvOptions {
            delimiter: Delimiter::Auto,
            has_header: true,
        };
        let m = ingest_str("user\titem\trating\nb\tx\t1.5\na\tx\t2\n", &opts).unwrap();
        assert_eq!(m.row_ids(), ["b", "a"]);
        assert_eq!(m.get(1, 0), Some(2.0));
    }

    #[test]
    fn forced_delimiter() {
        let opts = CsvOptions {
            delimiter: Delimiter::Tab,
            has_header: false,
        };
        assert!(matches!(ingest_str("a,b,1", &opts), Err(MatrixError::FieldCount { .. })));
    }

    #[test]
    fn first_appearance_order() {
        let m = parse("z,q,1\na,p,2\nz,p,3\n").unwrap();
        assert_eq!(m.row_ids(), ["z", "a"]);
        assert_eq!(m.col_ids(), ["q", "p"]);
        assert_eq!(m.get(0, 1), Some(3.0));
    }
}
