//! Line-delimited triplet files for contrastive trainers.
//!
//! Each line is `{"query", "pos": [content], "neg": [contents...]}`, the layout
//! FlagEmbedding-style trainers read. `pos_id` / `neg_ids` ride along so a
//! file can be read back into [`TrainingTriplet`]s without the corpus.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::TrainingTriplet;
use crate::corpus::{ArticleId, Corpus};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TripletRecord {
    pub query: String,
    pub pos: Vec<String>,
    pub neg: Vec<String>,
    pub pos_id: ArticleId,
    pub neg_ids: Vec<ArticleId>,
}

fn content<'a>(corpus: &'a Corpus, id: &ArticleId) -> Result<&'a str> {
    corpus
        .get(id.as_str())
        .map(|a| a.content.as_str())
        .ok_or_else(|| Error::UnknownArticle(id.to_string()))
}

pub fn write_triplets(
    triplets: &[TrainingTriplet],
    corpus: &Corpus,
    mut w: impl Write,
) -> Result<()> {
    for t in triplets {
        let rec = TripletRecord {
            query: t.query.clone(),
            pos: vec![content(corpus, &t.positive_id)?.to_string()],
            neg: t
                .negative_ids
                .iter()
                .map(|id| content(corpus, id).map(str::to_string))
                .collect::<Result<_>>()?,
            pos_id: t.positive_id.clone(),
            neg_ids: t.negative_ids.clone(),
        };
        serde_json::to_writer(&mut w, &rec)?;
        w.write_all(b"\n").map_err(|e| Error::io("<triplets>", e))?;
    }
    Ok(())
}

pub fn export_triplets(
    triplets: &[TrainingTriplet],
    corpus: &Corpus,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_triplets(triplets, corpus, &mut w)?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn import_triplets(path: impl AsRef<Path>) -> Result<Vec<TrainingTriplet>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: TripletRecord =
            serde_json::from_str(&line).map_err(|e| Error::MalformedRecord {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })?;
        out.push(TrainingTriplet {
            query: rec.query,
            positive_id: rec.pos_id,
            negative_ids: rec.neg_ids,
        });
    }
    Ok(out)
}
