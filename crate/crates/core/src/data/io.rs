use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use nalgebra::DVector;

use super::{IVectorCorpus, IVectorRecord};
use crate::{Error, Result};

const BINARY_MAGIC: &[u8; 4] = b"IVEC";
const BINARY_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Binary,
}

impl Format {
    /// `.ivec`/`.bin` are binary, everything else is CSV.
    pub fn from_path(path: &Path) -> Format {
        match path.extension().and_then(|e| e.to_str()) {
            Some("ivec") | Some("bin") => Format::Binary,
            _ => Format::Csv,
        }
    }
}

pub fn load_corpus(path: impl AsRef<Path>, format: Format) -> Result<IVectorCorpus> {
    let file = BufReader::new(File::open(path.as_ref())?);
    match format {
        Format::Csv => read_csv(file),
        Format::Binary => read_binary(file),
    }
}

pub fn save_corpus(corpus: &IVectorCorpus, path: impl AsRef<Path>, format: Format) -> Result<()> {
    let mut file = BufWriter::new(File::create(path.as_ref())?);
    match format {
        Format::Csv => write_csv(corpus, &mut file)?,
        Format::Binary => write_binary(corpus, &mut file)?,
    }
    file.flush()?;
    Ok(())
}

/// Reads `vector_id,speaker_id,duration,v0,...,v{p-1}`. An empty speaker
/// field marks an unlabeled record.
pub fn read_csv<R: Read>(reader: R) -> Result<IVectorCorpus> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut rows = rdr.records();

    let header = match rows.next() {
        None => return Err(Error::EmptyCorpus),
        Some(h) => h?,
    };
    if header.len() < 4
        || &header[0] != "vector_id"
        || &header[1] != "speaker_id"
        || &header[2] != "duration"
    {
        return Err(Error::Parse {
            line: 1,
            message: "expected header `vector_id,speaker_id,duration,v0,...`".into(),
        });
    }
    let dim = header.len() - 3;

    let mut records = Vec::new();
    for (i, row) in rows.enumerate() {
        let line = i + 2;
        let row = row?;
        if row.len() != dim + 3 {
            return Err(Error::DimensionMismatch {
                context: format!("row {line} (vector `{}`)", row.get(0).unwrap_or("")),
                expected: dim,
                found: row.len().saturating_sub(3),
            });
        }
        let parse = |s: &str| -> Result<f64> {
            s.parse::<f64>().map_err(|e| Error::Parse {
                line,
                message: format!("`{s}`: {e}"),
            })
        };
        let values = row
            .iter()
            .skip(3)
            .map(parse)
            .collect::<Result<Vec<_>>>()?;
        let speaker = &row[1];
        records.push(IVectorRecord {
            vector_id: row[0].to_string(),
            speaker_id: (!speaker.is_empty()).then(|| speaker.to_string()),
            duration_seconds: parse(&row[2])?,
            values: DVector::from_vec(values),
        });
    }
    if records.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    IVectorCorpus::new(dim, records)
}

/// Floats are written in shortest round-trip form, so a CSV written here
/// reads back bit-exactly.
pub fn write_csv<W: Write>(corpus: &IVectorCorpus, writer: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().from_writer(writer);
    let mut header = vec!["vector_id".to_string(), "speaker_id".into(), "duration".into()];
    header.extend((0..corpus.dim()).map(|i| format!("v{i}")));
    w.write_record(&header)?;
    for r in corpus.records() {
        let mut row = Vec::with_capacity(corpus.dim() + 3);
        row.push(r.vector_id.clone());
        row.push(r.speaker_id.clone().unwrap_or_default());
        row.push(format!("{:?}", r.duration_seconds));
        row.extend(r.values.iter().map(|v| format!("{v:?}")));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn read_string<R: Read>(r: &mut R) -> Result<String> {
    let len = r.read_u32::<LittleEndian>()? as usize;
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|e| Error::Format(format!("invalid UTF-8 id: {e}")))
}

fn write_string<W: Write>(w: &mut W, s: &str) -> Result<()> {
    let len = u32::try_from(s.len()).map_err(|_| Error::Format("id too long".into()))?;
    w.write_u32::<LittleEndian>(len)?;
    w.write_all(s.as_bytes())?;
    Ok(())
}

/// `IVEC`, u32 version, u32 p, u64 count, then per record: u32-length-prefixed
/// vector id and speaker id (empty = unlabeled), f64 duration, p f64 values.
/// All integers and floats little-endian.
pub fn read_binary<R: Read>(mut r: R) -> Result<IVectorCorpus> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != BINARY_MAGIC {
        return Err(Error::Format("missing IVEC magic".into()));
    }
    let version = r.read_u32::<LittleEndian>()?;
    if version != BINARY_VERSION {
        return Err(Error::Format(format!("unsupported IVEC version {version}")));
    }
    let dim = r.read_u32::<LittleEndian>()? as usize;
    let count = r.read_u64::<LittleEndian>()?;
    if count == 0 {
        return Err(Error::EmptyCorpus);
    }
    let mut records = Vec::new();
    for _ in 0..count {
        let vector_id = read_string(&mut r)?;
        let speaker = read_string(&mut r)?;
        let duration_seconds = r.read_f64::<LittleEndian>()?;
        let mut values = vec![0.0; dim];
        r.read_f64_into::<LittleEndian>(&mut values)?;
        records.push(IVectorRecord {
            vector_id,
            speaker_id: (!speaker.is_empty()).then_some(speaker),
            duration_seconds,
            values: DVector::from_vec(values),
        });
    }
    IVectorCorpus::new(dim, records)
}

pub fn write_binary<W: Write>(corpus: &IVectorCorpus, mut w: W) -> Result<()> {
    w.write_all(BINARY_MAGIC)?;
    w.write_u32::<LittleEndian>(BINARY_VERSION)?;
    w.write_u32::<LittleEndian>(corpus.dim() as u32)?;
    w.write_u64::<LittleEndian>(corpus.len() as u64)?;
    for r in corpus.records() {
        write_string(&mut w, &r.vector_id)?;
        write_string(&mut w, r.speaker_id.as_deref().unwrap_or(""))?;
        w.write_f64::<LittleEndian>(r.duration_seconds)?;
        for &v in r.values.iter() {
            w.write_f64::<LittleEndian>(v)?;
        }
    }
    Ok(())
}
