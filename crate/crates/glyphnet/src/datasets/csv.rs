//! Zhang-style CSV classification corpora: quoted fields, 1-based class
//! index, title, body.

use std::path::Path;

use crate::error::{Error, Result};

use super::LabeledText;

/// Load a corpus. Labels are shifted to 0-based, title and body are joined
/// with ". ", and embedded `\n` escapes become spaces.
pub fn load_csv_corpus(path: &Path, num_classes: usize) -> Result<Vec<LabeledText>> {
    let mut reader = ::csv::ReaderBuilder::new()
        .has_headers(false)
        .from_path(path)?;
    let mut out = Vec::new();
    for (row_idx, record) in reader.records().enumerate() {
        let record = record?;
        let row_err = |msg: String| Error::Parse {
            path: path.display().to_string(),
            line: row_idx + 1,
            msg,
        };
        if record.len() != 3 {
            return Err(row_err(format!("expected 3 columns, got {}", record.len())));
        }
        let label_1based: usize = record[0]
            .parse()
            .map_err(|_| row_err(format!("bad class index {:?}", &record[0])))?;
        if label_1based == 0 || label_1based > num_classes {
            return Err(row_err(format!(
                "class index {label_1based} out of range 1..={num_classes}"
            )));
        }
        let clean = |s: &str| s.replace("\\n", " ");
        let title = clean(&record[1]);
        let body = clean(&record[2]);
        let text = if body.is_empty() {
            title
        } else {
            format!("{title}. {body}")
        };
        out.push(LabeledText {
            label: label_1based - 1,
            text,
        });
    }
    if out.is_empty() {
        eprintln!("warning: {} is empty", path.display());
    }
    Ok(out)
}

/// Write a corpus in the same format. The first ". " splits text back into
/// title and body so that a reload reproduces labels and texts exactly.
pub fn write_csv_corpus(samples: &[LabeledText], path: &Path) -> Result<()> {
    let mut writer = ::csv::WriterBuilder::new()
        .quote_style(::csv::QuoteStyle::Always)
        .from_path(path)?;
    for s in samples {
        let (title, body) = match s.text.split_once(". ") {
            Some((t, b)) => (t, b),
            None => (s.text.as_str(), ""),
        };
        writer.write_record([&(s.label + 1).to_string(), title, body])?;
    }
    writer.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn tmp_csv(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn joins_title_and_body_with_zero_based_label() {
        let f = tmp_csv("\"3\",\"T\",\"B\"\n");
        let corpus = load_csv_corpus(f.path(), 4).unwrap();
        assert_eq!(corpus, vec![LabeledText { label: 2, text: "T. B".into() }]);
    }

    #[test]
    fn out_of_range_label_reports_the_row() {
        let f = tmp_csv("\"1\",\"a\",\"b\"\n\"5\",\"c\",\"d\"\n");
        let err = load_csv_corpus(f.path(), 4).unwrap_err();
        assert!(err.to_string().contains(":2:"), "{err}");
    }

    #[test]
    fn wrong_column_count_reports_the_row() {
        let f = tmp_csv("\"1\",\"only title\"\n");
        let err = load_csv_corpus(f.path(), 4).unwrap_err();
        assert!(err.to_string().contains("2 columns") || err.to_string().contains("columns"));
    }

    #[test]
    fn empty_file_is_an_empty_corpus() {
        let f = tmp_csv("");
        assert!(load_csv_corpus(f.path(), 4).unwrap().is_empty());
    }

    #[test]
    fn newline_escapes_become_spaces() {
        let f = tmp_csv("\"1\",\"a\\nb\",\"c\\nd\"\n");
        let corpus = load_csv_corpus(f.path(), 2).unwrap();
        assert_eq!(corpus[0].text, "a b. c d");
    }

    #[test]
    fn round_trip_reproduces_labels_and_texts() {
        let samples = vec![
            LabeledText { label: 0, text: "Title. Body text here".into() },
            LabeledText { label: 3, text: "No body separator".into() },
            LabeledText { label: 1, text: "A. B. C".into() },
        ];
        let f = tempfile::NamedTempFile::new().unwrap();
        write_csv_corpus(&samples, f.path()).unwrap();
        let back = load_csv_corpus(f.path(), 4).unwrap();
        assert_eq!(back, samples);
    }
}
