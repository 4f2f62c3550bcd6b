//! Log file: `query_id,item_id,position,click,conversion,f0,...,f{d-1}`.
//! Features are written with 9 significant digits. Propensity sidecar:
//! `position,theta`.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::{LogRecord, PropensityTable};
use crate::error::{Error, Result};

const FIXED_COLUMNS: [&str; 5] = ["query_id", "item_id", "position", "click", "conversion"];

pub fn write_logs(records: &[LogRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let dim = records.first().map_or(0, |r| r.features.len());
    if let Some(r) = records.iter().find(|r| r.features.len() != dim) {
        return Err(Error::Shape(format!(
            "record {} has {} features, expected {dim}",
            r.item_id,
            r.features.len()
        )));
    }
    if let Some(r) = records.iter().find(|r| r.conversion && !r.click) {
        return Err(Error::Domain(format!(
            "record {} converts without a click",
            r.item_id
        )));
    }
    let file = fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut out = BufWriter::new(file);
    let io_err = |e| Error::io(path.display().to_string(), e);

    let mut header = FIXED_COLUMNS.join(",");
    for j in 0..dim {
        header.push_str(&format!(",f{j}"));
    }
    writeln!(out, "{header}").map_err(io_err)?;
    let mut line = String::new();
    for r in records {
        line.clear();
        line.push_str(&format!(
            "{},{},{},{},{}",
            r.query_id,
            r.item_id,
            r.position,
            u8::from(r.click),
            u8::from(r.conversion)
        ));
        for x in &r.features {
            line.push_str(&format!(",{x:.8e}"));
        }
        writeln!(out, "{line}").map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}

pub fn read_logs(path: impl AsRef<Path>) -> Result<Vec<LogRecord>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };

    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_err(1, "missing header".into()))?;
    let columns: Vec<&str> = header.split(',').collect();
    if columns.len() < FIXED_COLUMNS.len() || columns[..5] != FIXED_COLUMNS {
        return Err(parse_err(1, format!("unexpected header `{header}`")));
    }
    let dim = columns.len() - FIXED_COLUMNS.len();
    for (j, c) in columns[5..].iter().enumerate() {
        if *c != format!("f{j}") {
            return Err(parse_err(1, format!("expected column f{j}, found `{c}`")));
        }
    }

    let mut records = Vec::new();
    for (idx, raw) in lines {
        let lineno = idx + 1;
        if raw.is_empty() {
            continue;
        }
        let fields: Vec<&str> = raw.split(',').collect();
        if fields.len() != columns.len() {
            return Err(parse_err(
                lineno,
                format!("expected {} columns, found {}", columns.len(), fields.len()),
            ));
        }
        let int = |i: usize| -> Result<u64> {
            fields[i].parse::<u64>().map_err(|_| {
                parse_err(
                    lineno,
                    format!("{}: `{}` is not an integer", columns[i], fields[i]),
                )
            })
        };
        let flag = |i: usize| -> Result<bool> {
            match fields[i] {
                "0" => Ok(false),
                "1" => Ok(true),
                other => Err(parse_err(
                    lineno,
                    format!("{}: `{other}` is not 0/1", columns[i]),
                )),
            }
        };
        let position = int(2)? as usize;
        if position == 0 {
            return Err(parse_err(lineno, "position must be >= 1".into()));
        }
        let click = flag(3)?;
        let conversion = flag(4)?;
        if conversion && !click {
            return Err(parse_err(lineno, "conversion=1 requires click=1".into()));
        }
        let features = (0..dim)
            .map(|j| {
                let s = fields[5 + j];
                s.parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| parse_err(lineno, format!("f{j}: `{s}` is not a finite number")))
            })
            .collect::<Result<Vec<f64>>>()?;
        records.push(LogRecord {
            query_id: int(0)?,
            item_id: int(1)?,
            features,
            position,
            click,
            conversion,
        });
    }
    Ok(records)
}

pub fn write_propensity(table: &PropensityTable, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut text = String::from("position,theta\n");
    for (i, p) in table.probabilities().iter().enumerate() {
        text.push_str(&format!("{},{}\n", i + 1, p));
    }
    fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn read_propensity(path: impl AsRef<Path>) -> Result<PropensityTable> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, "position,theta")) => {}
        _ => return Err(parse_err(1, "expected header `position,theta`".into())),
    }
    let mut probs = Vec::new();
    for (idx, raw) in lines {
        if raw.is_empty() {
            continue;
        }
        let lineno = idx + 1;
        let (pos, theta) = raw
            .split_once(',')
            .ok_or_else(|| parse_err(lineno, "expected 2 columns".into()))?;
        let pos: usize = pos
            .parse()
            .map_err(|_| parse_err(lineno, format!("bad position `{pos}`")))?;
        if pos != probs.len() + 1 {
            return Err(parse_err(
                lineno,
                format!("positions must be 1,2,...; found {pos}"),
            ));
        }
        probs.push(
            theta
                .parse::<f64>()
                .map_err(|_| parse_err(lineno, format!("bad theta `{theta}`")))?,
        );
    }
    PropensityTable::new(probs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simlog::{generate_logs, GenConfig};
    use proptest::prelude::*;

    fn tmp() -> tempfile::TempDir {
        tempfile::tempdir().unwrap()
    }

    #[test]
    fn generated_logs_roundtrip_exactly() {
        let dir = tmp();
        let cfg = GenConfig {
            num_queries: 40,
            ..GenConfig::default()
        };
        let (records, theta) = generate_logs(&cfg).unwrap();
        let p = dir.path().join("logs.csv");
        write_logs(&records, &p).unwrap();
        assert_eq!(read_logs(&p).unwrap(), records);

        let t = dir.path().join("theta.csv");
        write_propensity(&theta, &t).unwrap();
        assert_eq!(read_propensity(&t).unwrap(), theta);
    }

    #[test]
    fn same_config_gives_identical_bytes() {
        let dir = tmp();
        let cfg = GenConfig {
            num_queries: 30,
            seed: 4,
            ..GenConfig::default()
        };
        let a = dir.path().join("a.csv");
        let b = dir.path().join("b.csv");
        write_logs(&generate_logs(&cfg).unwrap().0, &a).unwrap();
        write_logs(&generate_logs(&cfg).unwrap().0, &b).unwrap();
        assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    }

    fn parse_error_line(body: &str) -> usize {
        let dir = tmp();
        let p = dir.path().join("bad.csv");
        fs::write(&p, body).unwrap();
        match read_logs(&p) {
            Err(Error::Parse { line, .. }) => line,
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn malformed_rows_name_the_line() {
        let header = "query_id,item_id,position,click,conversion,f0\n";
        let good = "0,0,1,1,0,1.0e0\n";
        assert_eq!(parse_error_line(&format!("{header}{good}0,1,2,0,0\n")), 3);
        assert_eq!(
            parse_error_line(&format!("{header}{good}{good}0,1,2,0,0,abc\n")),
            4
        );
        assert_eq!(parse_error_line(&format!("{header}0,1,2,0,1,0.5\n")), 2);
        assert_eq!(parse_error_line(&format!("{header}x,1,2,0,0,0.5\n")), 2);
        assert_eq!(parse_error_line("query_id,item,position\n"), 1);
    }

    proptest! {
        #[test]
        fn quantized_records_roundtrip(
            rows in prop::collection::vec(
                (0u64..1000, 1usize..20, any::<bool>(), any::<bool>(),
                 prop::collection::vec(-1e6f64..1e6, 3)),
                1..30)
        ) {
            let records: Vec<LogRecord> = rows
                .into_iter()
                .enumerate()
                .map(|(i, (q, p, c, v, f))| LogRecord {
                    query_id: q,
                    item_id: i as u64,
                    features: f.into_iter().map(crate::simlog::quantize_feature).collect(),
                    position: p,
                    click: c || v,
                    conversion: v,
                })
                .collect();
            let dir = tmp();
            let path = dir.path().join("r.csv");
            write_logs(&records, &path).unwrap();
            prop_assert_eq!(read_logs(&path).unwrap(), records);
        }
    }
}
