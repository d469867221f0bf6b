//! Corpus line format:
//! `city,age_band,gender,element,element_kind,grid_period,start_index,v_0;v_1;...`
//! with `NA` for a missing value. Empty `age_band`/`gender` fields default to 0
//! (city-only datasets). Lines starting with `#` and blank lines are skipped.
//!
//! Taxonomy files hold one `parent_name,child_name` edge per line.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{Corpus, CorpusBuilder, CorpusError, ElementKind};

pub const CORPUS_HEADER: &str =
    "# city,age_band,gender,element,element_kind,grid_period,start_index,values";

fn io_err(path: &Path, e: std::io::Error) -> CorpusError {
    CorpusError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

/// Writes to a sibling temp file, then renames over `path`.
pub fn write_atomic(path: &Path, contents: &str) -> Result<(), CorpusError> {
    let file_name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".into());
    let tmp = path.with_file_name(format!(".{file_name}.tmp"));
    fs::write(&tmp, contents).map_err(|e| io_err(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| io_err(path, e))
}

fn parse_small(field: &str, name: &str, row: usize) -> Result<u8, CorpusError> {
    if field.is_empty() {
        return Ok(0);
    }
    field.parse().map_err(|_| CorpusError::Parse {
        row,
        message: format!("invalid {name} `{field}`"),
    })
}

pub fn parse_corpus(text: &str) -> Result<Corpus, CorpusError> {
    let mut builder: Option<CorpusBuilder> = None;
    for (idx, raw) in text.lines().enumerate() {
        let row = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 8 {
            return Err(CorpusError::Parse {
                row,
                message: format!("expected 8 fields, found {}", fields.len()),
            });
        }
        let parse_err = |message: String| CorpusError::Parse { row, message };
        let age_band = parse_small(fields[1], "age_band", row)?;
        let gender = parse_small(fields[2], "gender", row)?;
        let kind: ElementKind = fields[4].parse().map_err(parse_err)?;
        let grid_period: usize = fields[5]
            .parse()
            .map_err(|_| parse_err(format!("invalid grid_period `{}`", fields[5])))?;
        let start_index: usize = fields[6]
            .parse()
            .map_err(|_| parse_err(format!("invalid start_index `{}`", fields[6])))?;
        if fields[0].is_empty() || fields[3].is_empty() {
            return Err(parse_err("empty city or element name".into()));
        }
        let values = fields[7]
            .split(';')
            .map(|v| match v.trim() {
                "NA" => Ok(None),
                s => s
                    .parse::<f64>()
                    .map(Some)
                    .map_err(|_| parse_err(format!("invalid value `{s}`"))),
            })
            .collect::<Result<Vec<_>, _>>()?;

        let b = match &mut builder {
            Some(b) => b,
            slot => slot.insert(CorpusBuilder::new(grid_period).map_err(|e| parse_err(e.to_string()))?),
        };
        if b.grid_period() != grid_period {
            return Err(parse_err(
                CorpusError::GridPeriodMismatch {
                    expected: b.grid_period(),
                    found: grid_period,
                }
                .to_string(),
            ));
        }
        let attach = |e: CorpusError| CorpusError::Parse {
            row,
            message: e.to_string(),
        };
        let group = b.group(fields[0], age_band, gender).map_err(attach)?;
        let element = b.element(fields[3], kind).map_err(attach)?;
        b.push_series(group, element, start_index, values)
            .map_err(attach)?;
    }
    builder
        .map(CorpusBuilder::build)
        .ok_or_else(|| CorpusError::Parse {
            row: 0,
            message: "corpus contains no series".into(),
        })
}

pub fn render_corpus(corpus: &Corpus) -> String {
    let mut out = String::new();
    out.push_str(CORPUS_HEADER);
    out.push('\n');
    for s in &corpus.series {
        let g = &corpus.groups[s.group];
        let e = &corpus.elements[s.element];
        let _ = write!(
            out,
            "{},{},{},{},{},{},{},",
            corpus.cities[g.city], g.age_band, g.gender, e.name, e.kind, corpus.grid_period, s.start_index
        );
        out.push_str(&render_values(&s.values));
        out.push('\n');
    }
    out
}

pub(crate) fn render_values(values: &[Option<f64>]) -> String {
    values
        .iter()
        .map(|v| match v {
            Some(x) => format!("{x}"),
            None => "NA".to_string(),
        })
        .collect::<Vec<_>>()
        .join(";")
}

pub fn load_corpus(path: &Path) -> Result<Corpus, CorpusError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    parse_corpus(&text)
}

pub fn save_corpus(corpus: &Corpus, path: &Path) -> Result<(), CorpusError> {
    write_atomic(path, &render_corpus(corpus))
}

pub fn parse_taxonomy_edges(text: &str) -> Result<Vec<(String, String)>, CorpusError> {
    let mut edges = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        match fields.as_slice() {
            [p, c] if !p.is_empty() && !c.is_empty() => {
                edges.push((p.to_string(), c.to_string()));
            }
            _ => {
                return Err(CorpusError::Parse {
                    row: idx + 1,
                    message: "expected `parent_name,child_name`".into(),
                })
            }
        }
    }
    Ok(edges)
}

pub fn render_taxonomy_edges(edges: &[(String, String)]) -> String {
    let mut out = String::from("# parent_name,child_name\n");
    for (p, c) in edges {
        let _ = writeln!(out, "{p},{c}");
    }
    out
}

pub fn load_taxonomy_edges(path: &Path) -> Result<Vec<(String, String)>, CorpusError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    parse_taxonomy_edges(&text)
}

pub fn save_taxonomy_edges(edges: &[(String, String)], path: &Path) -> Result<(), CorpusError> {
    write_atomic(path, &render_taxonomy_edges(edges))
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "\
# comment
paris,1,1,dress,category,24,0,0.5;NA;0.25
paris,1,1,neckline,attribute,24,0,0.1;0.2;0.3
london,0,0,dress,category,24,3,1;0;0.125
";

    #[test]
    fn parse_and_render_round_trip() {
        let c = parse_corpus(SAMPLE).unwrap();
        assert_eq!(c.series.len(), 3);
        assert_eq!(c.cities, vec!["paris", "london"]);
        assert_eq!(c.groups.len(), 2);
        assert_eq!(c.series[0].values[1], None);
        assert_eq!(c.series[2].start_index, 3);
        let again = parse_corpus(&render_corpus(&c)).unwrap();
        assert_eq!(again, c);
    }

    #[test]
    fn out_of_range_value_names_row() {
        let text = "paris,1,1,dress,category,24,0,0.5;1.5\n";
        match parse_corpus(text) {
            Err(CorpusError::Parse { row, message }) => {
                assert_eq!(row, 1);
                assert!(message.contains("1.5"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn extra_field_rejected_with_row() {
        let text = "paris,1,1,dress,category,24,0,0.5\nparis,1,1,top,category,24,0,0.5,extra\n";
        assert!(matches!(parse_corpus(text), Err(CorpusError::Parse { row: 2, .. })));
    }

    #[test]
    fn duplicate_key_rejected() {
        let text = "paris,1,1,dress,category,24,0,0.5\nparis,1,1,dress,category,24,0,0.4\n";
        assert!(matches!(parse_corpus(text), Err(CorpusError::Parse { row: 2, .. })));
    }

    #[test]
    fn city_only_rows_default_age_and_gender() {
        let text = "chicago,,,hat,category,52,0,0.1;0.2\nberlin,,,hat,category,52,0,0.3;0.2\n";
        let c = parse_corpus(text).unwrap();
        assert_eq!(c.grid_period, 52);
        assert!(c.groups.iter().all(|g| g.age_band == 0 && g.gender == 0));
        assert_eq!(c.groups.len(), 2);
    }

    #[test]
    fn mixed_grid_period_rejected() {
        let text = "paris,1,1,dress,category,24,0,0.5\nparis,1,1,top,category,52,0,0.5\n";
        assert!(matches!(parse_corpus(text), Err(CorpusError::Parse { row: 2, .. })));
    }

    #[test]
    fn taxonomy_edges_parse() {
        let edges = parse_taxonomy_edges("# hdr\ndress,neckline\n\nneckline,turtle\n").unwrap();
        assert_eq!(edges.len(), 2);
        assert_eq!(parse_taxonomy_edges(&render_taxonomy_edges(&edges)).unwrap(), edges);
        assert!(matches!(
            parse_taxonomy_edges("a,b,c\n"),
            Err(CorpusError::Parse { row: 1, .. })
        ));
    }
}
