use super::{compute_signal, validate_with_names, Dataset, LocationSignal, SubjectRecord};
use crate::error::{Error, Result};
use std::collections::BTreeMap;
use std::path::Path;

/// How belief columns are encoded in an input file. There is no
/// auto-detection: a column of small percentages is indistinguishable from
/// unit-interval probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BeliefScale {
    /// Probabilities in `[0, 1]`.
    Unit,
    /// Percentages in `[0, 100]`, divided by 100 on ingestion.
    Percent,
}

impl BeliefScale {
    fn apply(&self, v: f64) -> f64 {
        match self {
            BeliefScale::Unit => v,
            BeliefScale::Percent => v / 100.0,
        }
    }
}

const REQUIRED: [&str; 8] = [
    "subject_id",
    "location",
    "enroll_date",
    "treat_date",
    "b_prior",
    "b_post",
    "b_ref",
    "z",
];

fn column(headers: &csv::StringRecord, name: &str) -> Option<usize> {
    headers.iter().position(|h| h.trim() == name)
}

fn parse_f64(field: &str, col: &str, id: &str, errors: &mut Vec<String>) -> f64 {
    match field.trim().parse::<f64>() {
        Ok(v) => v,
        Err(_) => {
            errors.push(format!("subject {id}: cannot parse {col} = `{field}`"));
            f64::NAN
        }
    }
}

fn parse_int(field: &str, col: &str, id: &str, errors: &mut Vec<String>) -> Option<i64> {
    let t = field.trim();
    if t.is_empty() {
        return None;
    }
    match t.parse::<f64>() {
        Ok(v) if v.fract() == 0.0 => Some(v as i64),
        _ => {
            errors.push(format!("subject {id}: cannot parse {col} = `{field}` as integer"));
            None
        }
    }
}

fn to_u8(v: i64, col: &str, id: &str, errors: &mut Vec<String>) -> u8 {
    u8::try_from(v).unwrap_or_else(|_| {
        errors.push(format!("subject {id}: {col} = {v} out of range"));
        u8::MAX
    })
}

/// Reads subject records from a CSV with a header row. Returns the records
/// and the names of the `x_` covariate columns in file order.
pub fn read_records(path: impl AsRef<Path>, scale: BeliefScale) -> Result<(Vec<SubjectRecord>, Vec<String>)> {
    let mut rdr = csv::Reader::from_path(path)?;
    let headers = rdr.headers()?.clone();
    let mut missing: Vec<String> = REQUIRED
        .iter()
        .filter(|c| column(&headers, c).is_none())
        .map(|c| format!("missing required column `{c}`"))
        .collect();
    let a_col = column(&headers, "a");
    let code_col = column(&headers, "raw_outcome_code");
    if a_col.is_none() && code_col.is_none() {
        missing.push("need a column `a` or `raw_outcome_code`".into());
    }
    if !missing.is_empty() {
        return Err(Error::Validation(missing));
    }
    let idx: Vec<usize> = REQUIRED.iter().map(|c| column(&headers, c).unwrap()).collect();
    let x_cols: Vec<(usize, String)> = headers
        .iter()
        .enumerate()
        .filter(|(_, h)| h.trim().starts_with("x_"))
        .map(|(i, h)| (i, h.trim().to_string()))
        .collect();

    let mut errors = Vec::new();
    let mut records = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let get = |i: usize| row.get(i).unwrap_or("");
        let id = get(idx[0]).trim().to_string();
        let code = code_col.and_then(|c| parse_int(get(c), "raw_outcome_code", &id, &mut errors));
        let a = match a_col.and_then(|c| parse_int(get(c), "a", &id, &mut errors)) {
            Some(a) => to_u8(a, "a", &id, &mut errors),
            None => match code {
                Some(code) => super::derive_outcome(code, &id).unwrap_or_else(|e| {
                    errors.push(e.to_string());
                    0
                }),
                None => {
                    errors.push(format!("subject {id}: neither a nor raw_outcome_code given"));
                    0
                }
            },
        };
        let z = parse_int(get(idx[7]), "z", &id, &mut errors).unwrap_or(i64::MAX);
        records.push(SubjectRecord {
            location: get(idx[1]).trim().to_string(),
            enroll_date: get(idx[2]).trim().to_string(),
            treat_date: get(idx[3]).trim().to_string(),
            b_prior: scale.apply(parse_f64(get(idx[4]), "b_prior", &id, &mut errors)),
            b_post: scale.apply(parse_f64(get(idx[5]), "b_post", &id, &mut errors)),
            b_ref: scale.apply(parse_f64(get(idx[6]), "b_ref", &id, &mut errors)),
            z: to_u8(z, "z", &id, &mut errors),
            a,
            raw_outcome_code: code.map(|c| to_u8(c, "raw_outcome_code", &id, &mut errors)),
            covariates: x_cols
                .iter()
                .map(|(i, name)| parse_f64(get(*i), name, &id, &mut errors))
                .collect(),
            subject_id: id,
        });
    }
    if !errors.is_empty() {
        return Err(Error::Validation(errors));
    }
    Ok((records, x_cols.into_iter().map(|(_, n)| n).collect()))
}

/// Reads `location,s` rows.
pub fn read_signals(path: impl AsRef<Path>) -> Result<Vec<LocationSignal>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let headers = rdr.headers()?.clone();
    let (Some(li), Some(si)) = (column(&headers, "location"), column(&headers, "s")) else {
        return Err(Error::Validation(vec!["signals file needs columns `location` and `s`".into()]));
    };
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let loc = row.get(li).unwrap_or("").trim().to_string();
        let s = row
            .get(si)
            .unwrap_or("")
            .trim()
            .parse::<f64>()
            .map_err(|_| Error::Validation(vec![format!("location {loc}: unparsable signal")]))?;
        out.push(LocationSignal { location: loc, s });
    }
    Ok(out)
}

/// Computes one signal per location from `subject_id,location,intent_code`
/// rows of the first survey.
pub fn read_intents(path: impl AsRef<Path>) -> Result<Vec<LocationSignal>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let headers = rdr.headers()?.clone();
    let (Some(li), Some(ci)) = (column(&headers, "location"), column(&headers, "intent_code")) else {
        return Err(Error::Validation(vec![
            "intents file needs columns `location` and `intent_code`".into(),
        ]));
    };
    let mut by_loc: BTreeMap<String, Vec<u8>> = BTreeMap::new();
    for row in rdr.records() {
        let row = row?;
        let loc = row.get(li).unwrap_or("").trim().to_string();
        let code = row
            .get(ci)
            .unwrap_or("")
            .trim()
            .parse::<u8>()
            .map_err(|_| Error::Validation(vec![format!("location {loc}: unparsable intent code")]))?;
        by_loc.entry(loc).or_default().push(code);
    }
    by_loc.iter().map(|(loc, codes)| compute_signal(codes, loc)).collect()
}

/// Reads and validates records plus signals in one call.
pub fn read_dataset(
    records: impl AsRef<Path>,
    signals: Vec<LocationSignal>,
    scale: BeliefScale,
) -> Result<Dataset> {
    let (recs, names) = read_records(records, scale)?;
    validate_with_names(recs, signals, names)
}

/// Writes records in the ingestion schema (unit-interval beliefs).
pub fn write_dataset(path: impl AsRef<Path>, ds: &Dataset) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = [
        "subject_id",
        "location",
        "enroll_date",
        "treat_date",
        "b_prior",
        "b_post",
        "b_ref",
        "z",
        "a",
        "raw_outcome_code",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    header.extend(ds.covariate_names().iter().map(|n| {
        if n.starts_with("x_") {
            n.clone()
        } else {
            format!("x_{n}")
        }
    }));
    w.write_record(&header)?;
    for r in ds.records() {
        let mut row = vec![
            r.subject_id.clone(),
            r.location.clone(),
            r.enroll_date.clone(),
            r.treat_date.clone(),
            r.b_prior.to_string(),
            r.b_post.to_string(),
            r.b_ref.to_string(),
            r.z.to_string(),
            r.a.to_string(),
            r.raw_outcome_code.map(|c| c.to_string()).unwrap_or_default(),
        ];
        row.extend(r.covariates.iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_signals(path: impl AsRef<Path>, signals: &[LocationSignal]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["location", "s"])?;
    for s in signals {
        w.write_record([s.location.clone(), s.s.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(dir: &tempfile::TempDir, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.path().join(name);
        std::fs::File::create(&p).unwrap().write_all(body.as_bytes()).unwrap();
        p
    }

    #[test]
    fn percent_scale_and_outcome_codes() {
        let dir = tempfile::tempdir().unwrap();
        let recs = write(
            &dir,
            "r.csv",
            "subject_id,location,enroll_date,treat_date,b_prior,b_post,b_ref,z,raw_outcome_code,x_age\n\
             a1,Berlin,Sep 9,Sep 17,20.0,25.5,40,1,1,31\n\
             a2,Berlin,Sep 10,Sep 18,10,5,10,0,4,45\n",
        );
        let sig = vec![LocationSignal { location: "Berlin".into(), s: 0.325 }];
        let ds = read_dataset(&recs, sig, BeliefScale::Percent).unwrap();
        assert_eq!(ds.records()[0].a, 1);
        assert_eq!(ds.records()[1].a, 0);
        assert!((ds.records()[0].b_post - 0.255).abs() < 1e-12);
        assert_eq!(ds.condition(), &[1, 0]);
        assert_eq!(ds.covariate_names(), &["x_age".to_string()]);

        let out = dir.path().join("out.csv");
        write_dataset(&out, &ds).unwrap();
        let back = read_dataset(&out, ds.signals().to_vec(), BeliefScale::Unit).unwrap();
        assert_eq!(back.records(), ds.records());
    }

    #[test]
    fn unit_scale_rejects_percent_values() {
        let dir = tempfile::tempdir().unwrap();
        let recs = write(
            &dir,
            "r.csv",
            "subject_id,location,enroll_date,treat_date,b_prior,b_post,b_ref,z,a\n\
             q7,Berlin,d,t,20,30,40,1,0\n",
        );
        let sig = vec![LocationSignal { location: "Berlin".into(), s: 0.3 }];
        let err = read_dataset(&recs, sig, BeliefScale::Unit).unwrap_err().to_string();
        assert!(err.contains("q7"));
    }

    #[test]
    fn missing_columns_are_named() {
        let dir = tempfile::tempdir().unwrap();
        let recs = write(&dir, "r.csv", "subject_id,location\nx,y\n");
        let err = read_records(&recs, BeliefScale::Unit).unwrap_err().to_string();
        assert!(err.contains("b_prior") && err.contains("raw_outcome_code"));
    }

    #[test]
    fn intents_to_signals() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            &dir,
            "i.csv",
            "subject_id,location,intent_code\n1,Hamburg,1\n2,Hamburg,4\n3,Munich,2\n4,Munich,3\n5,Munich,4\n6,Hamburg,3\n",
        );
        let sig = read_intents(&p).unwrap();
        assert_eq!(sig.len(), 2);
        assert!((sig[0].s - 1.0 / 3.0).abs() < 1e-15);
        assert!((sig[1].s - 1.0 / 3.0).abs() < 1e-15);
        let sp = dir.path().join("s.csv");
        write_signals(&sp, &sig).unwrap();
        assert_eq!(read_signals(&sp).unwrap(), sig);
    }
}
