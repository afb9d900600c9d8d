use std::collections::HashMap;
use std::io::{BufRead, BufReader, Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::matrix::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Computed,
    Imported,
}

/// A reduced representation aligned row-by-row with its source dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct Embedding {
    pub values: Matrix,
    pub method: String,
    pub params: serde_json::Value,
    pub provenance: Provenance,
    pub row_ids: Vec<String>,
}

impl Embedding {
    pub(crate) fn computed(values: Matrix, method: &str, params: serde_json::Value, row_ids: Vec<String>) -> Self {
        Self {
            values,
            method: method.to_string(),
            params,
            provenance: Provenance::Computed,
            row_ids,
        }
    }

    pub fn dims(&self) -> usize {
        self.values.cols()
    }
}

#[derive(Serialize, Deserialize)]
struct HeaderComment {
    method: String,
    #[serde(default)]
    params: serde_json::Value,
}

/// Writes `# {json}` followed by a CSV with header `id,dim_1..dim_k`.
/// Values use the shortest representation that parses back bit-exactly.
pub fn write_embedding<W: Write>(emb: &Embedding, mut out: W) -> Result<()> {
    let header = HeaderComment {
        method: emb.method.clone(),
        params: emb.params.clone(),
    };
    writeln!(out, "# {}", serde_json::to_string(&header)?)?;
    let mut w = csv::Writer::from_writer(out);
    let mut cols = vec!["id".to_string()];
    cols.extend((1..=emb.dims()).map(|k| format!("dim_{k}")));
    w.write_record(&cols)?;
    for (i, id) in emb.row_ids.iter().enumerate() {
        let mut row = vec![id.clone()];
        row.extend(emb.values.row(i).iter().map(|v| format!("{v:e}")));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads an embedding file and reorders it to `expected_ids`.
///
/// Every expected id must occur exactly once and no other ids may appear.
pub fn read_embedding<R: Read>(src: R, expected_ids: &[String]) -> Result<Embedding> {
    let mut reader = BufReader::new(src);
    let mut first = String::new();
    reader.read_line(&mut first)?;
    let (method, params, rest) = match first.trim_start().strip_prefix('#') {
        Some(json) => {
            let h: HeaderComment = serde_json::from_str(json.trim())
                .map_err(|e| Error::Schema(format!("embedding header comment: {e}")))?;
            (h.method, h.params, String::new())
        }
        None => ("imported".to_string(), serde_json::Value::Null, first),
    };
    let body = rest.as_bytes().chain(reader);
    let mut csv = csv::ReaderBuilder::new().has_headers(true).from_reader(body);
    let header = csv.headers()?.clone();
    if header.get(0) != Some("id") || header.len() < 2 {
        return Err(Error::Schema("embedding header must be id,dim_1..dim_k".into()));
    }
    let dims = header.len() - 1;
    let want: HashMap<&str, usize> = expected_ids
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect();
    let mut slots: Vec<Option<Vec<f64>>> = vec![None; expected_ids.len()];
    for (i, rec) in csv.records().enumerate() {
        let row = i + 1;
        let mismatch = |message: String| Error::EmbeddingMismatch { row, message };
        let rec = rec.map_err(|e| mismatch(e.to_string()))?;
        let id = rec.get(0).unwrap_or("");
        let &slot = want
            .get(id)
            .ok_or_else(|| mismatch(format!("id {id:?} is not in the dataset")))?;
        if slots[slot].is_some() {
            return Err(mismatch(format!("id {id:?} appears twice")));
        }
        let values = (1..=dims)
            .map(|k| {
                rec.get(k)
                    .and_then(|s| s.trim().parse::<f64>().ok())
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| mismatch(format!("dim_{k} is missing or not a finite number")))
            })
            .collect::<Result<Vec<_>>>()?;
        slots[slot] = Some(values);
    }
    let mut data = Vec::with_capacity(expected_ids.len() * dims);
    for (i, s) in slots.into_iter().enumerate() {
        match s {
            Some(v) => data.extend(v),
            None => {
                return Err(Error::EmbeddingMismatch {
                    row: i + 1,
                    message: format!("dataset id {:?} has no embedding row", expected_ids[i]),
                })
            }
        }
    }
    if dims == 0 {
        return Err(invalid("embedding has no dimensions"));
    }
    Ok(Embedding {
        values: Matrix::from_vec(expected_ids.len(), dims, data)?,
        method,
        params,
        provenance: Provenance::Imported,
        row_ids: expected_ids.to_vec(),
    })
}
