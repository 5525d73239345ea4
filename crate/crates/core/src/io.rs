//! Dataset parsers and on-disk formats.
//!
//! Anonymized tables use the line-oriented `anonrec-v1` format:
//!
//! ```text
//! anonrec-v1 <n'> <m> <k> <lo> <hi>
//! a:<id> k:<k_u> <item>=<value> <item>=<value> ...
//! ...
//! sigma:                      (optional)
//! <user> <anon-id>
//! ...
//! checksum:<fnv1a-64 hex of every preceding byte>
//! ```
//!
//! Ids and items are 1-based on disk. Values use Rust's shortest
//! round-trip decimal form, so `read(write(x)) == x` bit for bit.

use std::fmt::Write as _;
use std::io::{BufRead, Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::anonymizer::{AnonymizedMatrix, AssignmentMap};
use crate::error::{Error, Result};
use crate::evaluation::ResultRow;
use crate::ratings::{Dataset, RatingRow, RatingScale, RawRating};
use crate::similarity::{ItemSimilarityMatrix, SimilaritySource};

pub const ANON_MAGIC: &str = "anonrec-v1";
pub const SIM_MAGIC: &str = "anonrec-sim-v1";
pub const CSV_HEADER: &str = "model,k,n,rmse,rmse_sd,fallback_rate";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DatasetFormat {
    #[serde(rename = "movielens-100k")]
    MovieLens100k,
    #[serde(rename = "movielens-1m")]
    MovieLens1m,
    #[serde(rename = "csv-triples")]
    CsvTriples,
}

impl DatasetFormat {
    pub fn as_str(&self) -> &'static str {
        match self {
            DatasetFormat::MovieLens100k => "movielens-100k",
            DatasetFormat::MovieLens1m => "movielens-1m",
            DatasetFormat::CsvTriples => "csv-triples",
        }
    }
}

impl FromStr for DatasetFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "movielens-100k" | "ml-100k" => Ok(DatasetFormat::MovieLens100k),
            "movielens-1m" | "ml-1m" => Ok(DatasetFormat::MovieLens1m),
            "csv-triples" | "csv" => Ok(DatasetFormat::CsvTriples),
            other => Err(Error::InvalidConfig(format!("unknown dataset format {other:?}"))),
        }
    }
}

/// Where and how to read a rating dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetDescriptor {
    pub format: DatasetFormat,
    pub path: std::path::PathBuf,
    pub scale: RatingScale,
}

impl DatasetDescriptor {
    pub fn load(&self) -> Result<Dataset> {
        let bytes = std::fs::read(&self.path)?;
        let raw = parse_ratings(self.format, bytes.as_slice(), self.scale)?;
        Dataset::from_raw(&raw, self.scale)
    }
}

fn parse_fields(line: &str, sep: &str, lineno: usize, scale: RatingScale, min_fields: usize) -> Result<RawRating> {
    let fields: Vec<&str> = line.split(sep).collect();
    if fields.len() < min_fields || fields.len() > 4 {
        return Err(Error::MalformedLine {
            line: lineno,
            reason: format!("expected {min_fields} to 4 fields separated by {sep:?}"),
        });
    }
    let bad = |what: &str| Error::MalformedLine {
        line: lineno,
        reason: format!("invalid {what}"),
    };
    let user = fields[0].trim().parse::<u64>().map_err(|_| bad("user id"))?;
    let item = fields[1].trim().parse::<u64>().map_err(|_| bad("item id"))?;
    let value = fields[2].trim().parse::<f64>().map_err(|_| bad("rating"))?;
    if !value.is_finite() {
        return Err(bad("rating"));
    }
    scale.check(value)?;
    Ok(RawRating { user, item, value })
}

fn parse_lines<R: BufRead>(reader: R, sep: &str, scale: RatingScale, min_fields: usize) -> Result<Vec<RawRating>> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        out.push(parse_fields(line, sep, idx + 1, scale, min_fields)?);
    }
    Ok(out)
}

/// `user<TAB>item<TAB>rating<TAB>timestamp` lines (`u.data`).
pub fn parse_movielens_100k<R: BufRead>(reader: R, scale: RatingScale) -> Result<Vec<RawRating>> {
    parse_lines(reader, "\t", scale, 4)
}

/// `user::item::rating::timestamp` lines (`ratings.dat`).
pub fn parse_movielens_1m<R: BufRead>(reader: R, scale: RatingScale) -> Result<Vec<RawRating>> {
    parse_lines(reader, "::", scale, 4)
}

/// `user,item,rating[,timestamp]` lines; a non-numeric first line is taken
/// as a header.
pub fn parse_csv_triples<R: BufRead>(reader: R, scale: RatingScale) -> Result<Vec<RawRating>> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        if idx == 0 && line.split(',').next().is_some_and(|f| f.trim().parse::<u64>().is_err()) {
            continue;
        }
        out.push(parse_fields(line, ",", idx + 1, scale, 3)?);
    }
    Ok(out)
}

pub fn parse_ratings<R: BufRead>(format: DatasetFormat, reader: R, scale: RatingScale) -> Result<Vec<RawRating>> {
    match format {
        DatasetFormat::MovieLens100k => parse_movielens_100k(reader, scale),
        DatasetFormat::MovieLens1m => parse_movielens_1m(reader, scale),
        DatasetFormat::CsvTriples => parse_csv_triples(reader, scale),
    }
}

pub fn load_dataset(path: impl AsRef<Path>, format: DatasetFormat, scale: RatingScale) -> Result<Dataset> {
    DatasetDescriptor {
        format,
        path: path.as_ref().to_path_buf(),
        scale,
    }
    .load()
}

/// FNV-1a, 64 bit.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn seal(mut body: String) -> String {
    let sum = fnv1a64(body.as_bytes());
    let _ = writeln!(body, "checksum:{sum:016x}");
    body
}

/// Splits off and verifies the trailing checksum line; returns the body.
fn unseal(text: &str) -> Result<&str> {
    let trimmed = text.strip_suffix('\n').unwrap_or(text);
    let (body, last) = match trimmed.rfind('\n') {
        Some(pos) => (&text[..pos + 1], &trimmed[pos + 1..]),
        None => ("", trimmed),
    };
    let stored = last
        .strip_prefix("checksum:")
        .ok_or_else(|| Error::MalformedLine {
            line: text.lines().count(),
            reason: "missing checksum line".into(),
        })?
        .trim();
    let computed = format!("{:016x}", fnv1a64(body.as_bytes()));
    if stored != computed {
        return Err(Error::ChecksumMismatch {
            stored: stored.to_string(),
            computed,
        });
    }
    Ok(body)
}

fn check_magic(first: &str, magic: &str) -> Result<()> {
    let found = first.split_whitespace().next().unwrap_or("");
    if found != magic {
        return Err(Error::FormatVersionMismatch(found.to_string()));
    }
    Ok(())
}

pub fn format_anonymized(anon: &AnonymizedMatrix, sigma: Option<&AssignmentMap>) -> String {
    let scale = anon.scale();
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{ANON_MAGIC} {} {} {} {} {}",
        anon.n_prototypes(),
        anon.n_items(),
        anon.k(),
        scale.lo,
        scale.hi
    );
    for (a, (row, k_u)) in anon.prototypes().iter().zip(anon.multiplicities()).enumerate() {
        let _ = write!(out, "a:{} k:{}", a + 1, k_u);
        for (item, value) in row.iter() {
            let _ = write!(out, " {}={}", item + 1, value);
        }
        out.push('\n');
    }
    if let Some(sigma) = sigma {
        out.push_str("sigma:\n");
        for (u, &a) in sigma.as_slice().iter().enumerate() {
            let _ = writeln!(out, "{} {}", u + 1, a + 1);
        }
    }
    seal(out)
}

pub fn write_anonymized<W: Write>(mut w: W, anon: &AnonymizedMatrix, sigma: Option<&AssignmentMap>) -> Result<()> {
    w.write_all(format_anonymized(anon, sigma).as_bytes())?;
    Ok(())
}

fn malformed(line: usize, reason: impl Into<String>) -> Error {
    Error::MalformedLine {
        line,
        reason: reason.into(),
    }
}

fn parse_num<T: FromStr>(s: &str, line: usize, what: &str) -> Result<T> {
    s.parse::<T>()
        .map_err(|_| malformed(line, format!("invalid {what} {s:?}")))
}

pub fn parse_anonymized(text: &str) -> Result<(AnonymizedMatrix, Option<AssignmentMap>)> {
    let first = text.lines().next().unwrap_or("");
    check_magic(first, ANON_MAGIC)?;
    let body = unseal(text)?;
    let mut lines = body.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, header) = lines.next().ok_or_else(|| malformed(1, "missing header"))?;
    let h: Vec<&str> = header.split_whitespace().collect();
    if h.len() != 6 {
        return Err(malformed(1, "header needs 6 fields"));
    }
    let n_prime: usize = parse_num(h[1], 1, "prototype count")?;
    let m: usize = parse_num(h[2], 1, "item count")?;
    let k: usize = parse_num(h[3], 1, "k")?;
    let scale = RatingScale::new(parse_num(h[4], 1, "scale")?, parse_num(h[5], 1, "scale")?)?;

    let mut prototypes = Vec::with_capacity(n_prime);
    let mut multiplicities = Vec::with_capacity(n_prime);
    for expected in 1..=n_prime {
        let (ln, line) = lines
            .next()
            .ok_or_else(|| malformed(expected + 1, "missing prototype line"))?;
        let mut parts = line.split(' ');
        let id: usize = parse_num(
            parts
                .next()
                .and_then(|p| p.strip_prefix("a:"))
                .ok_or_else(|| malformed(ln, "expected a:<id>"))?,
            ln,
            "anonymous id",
        )?;
        if id != expected {
            return Err(malformed(ln, format!("expected a:{expected}")));
        }
        let k_u: usize = parse_num(
            parts
                .next()
                .and_then(|p| p.strip_prefix("k:"))
                .ok_or_else(|| malformed(ln, "expected k:<count>"))?,
            ln,
            "multiplicity",
        )?;
        let mut pairs = Vec::new();
        for p in parts {
            let (item, value) = p
                .split_once('=')
                .ok_or_else(|| malformed(ln, format!("expected item=value, got {p:?}")))?;
            let item: usize = parse_num(item, ln, "item")?;
            if item == 0 {
                return Err(malformed(ln, "items are 1-based"));
            }
            pairs.push((item - 1, parse_num::<f64>(value, ln, "value")?));
        }
        prototypes.push(RatingRow::from_pairs(pairs).map_err(|_| malformed(ln, "repeated item"))?);
        multiplicities.push(k_u);
    }
    let anon = AnonymizedMatrix::new(prototypes, multiplicities, m, k, scale)?;

    let sigma = match lines.next() {
        None => None,
        Some((_, "sigma:")) => {
            let n = anon.n_users();
            let mut mapping = vec![usize::MAX; n];
            for (ln, line) in lines.by_ref() {
                let (u, a) = line
                    .split_once(' ')
                    .ok_or_else(|| malformed(ln, "expected <user> <anon-id>"))?;
                let u: usize = parse_num(u, ln, "user")?;
                let a: usize = parse_num(a, ln, "anonymous id")?;
                if u == 0 || u > n || a == 0 || a > n_prime {
                    return Err(malformed(ln, "sigma entry out of range"));
                }
                if mapping[u - 1] != usize::MAX {
                    return Err(malformed(ln, "user listed twice"));
                }
                mapping[u - 1] = a - 1;
            }
            if mapping.contains(&usize::MAX) {
                return Err(Error::InvalidConfig("sigma does not cover every user".into()));
            }
            let sigma = AssignmentMap::new(mapping, n_prime)?;
            if sigma.preimage_sizes() != anon.multiplicities() {
                return Err(Error::InvalidConfig("sigma disagrees with multiplicities".into()));
            }
            Some(sigma)
        }
        Some((ln, _)) => return Err(malformed(ln, "unexpected trailing content")),
    };
    Ok((anon, sigma))
}

pub fn read_anonymized<R: Read>(mut r: R) -> Result<(AnonymizedMatrix, Option<AssignmentMap>)> {
    let mut text = String::new();
    r.read_to_string(&mut text)?;
    parse_anonymized(&text)
}

/// `anonrec-sim-v1 <m> <source>`, a `means:` line (`-` for undefined), then
/// one `<i> <j> <s>` line per defined pair with `i <= j`, then the checksum.
pub fn format_similarity(sims: &ItemSimilarityMatrix) -> String {
    let m = sims.n_items();
    let mut out = String::new();
    let _ = writeln!(out, "{SIM_MAGIC} {m} {}", sims.source().as_str());
    out.push_str("means:");
    for mean in sims.item_means() {
        match mean {
            Some(v) => {
                let _ = write!(out, " {v}");
            }
            None => out.push_str(" -"),
        }
    }
    out.push('\n');
    for i in 0..m {
        for j in i..m {
            if sims.is_defined(i, j) {
                let _ = writeln!(out, "{} {} {}", i + 1, j + 1, sims.get(i, j));
            }
        }
    }
    seal(out)
}

pub fn write_similarity<W: Write>(mut w: W, sims: &ItemSimilarityMatrix) -> Result<()> {
    w.write_all(format_similarity(sims).as_bytes())?;
    Ok(())
}

pub fn parse_similarity(text: &str) -> Result<ItemSimilarityMatrix> {
    let first = text.lines().next().unwrap_or("");
    check_magic(first, SIM_MAGIC)?;
    let body = unseal(text)?;
    let mut lines = body.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, header) = lines.next().ok_or_else(|| malformed(1, "missing header"))?;
    let h: Vec<&str> = header.split_whitespace().collect();
    if h.len() != 3 {
        return Err(malformed(1, "header needs 3 fields"));
    }
    let m: usize = parse_num(h[1], 1, "item count")?;
    let source = match h[2] {
        "raw" => SimilaritySource::Raw,
        "anonymized" => SimilaritySource::Anonymized,
        other => return Err(malformed(1, format!("unknown source {other:?}"))),
    };
    let (ln, means_line) = lines.next().ok_or_else(|| malformed(2, "missing means line"))?;
    let means_str = means_line
        .strip_prefix("means:")
        .ok_or_else(|| malformed(ln, "expected means:"))?;
    let item_means: Vec<Option<f64>> = means_str
        .split_whitespace()
        .map(|t| if t == "-" { Ok(None) } else { parse_num(t, ln, "mean").map(Some) })
        .collect::<Result<_>>()?;
    if item_means.len() != m {
        return Err(malformed(ln, format!("expected {m} means")));
    }
    let mut values = vec![0.0; m * m];
    let mut defined = vec![false; m * m];
    for (ln, line) in lines {
        let f: Vec<&str> = line.split(' ').collect();
        if f.len() != 3 {
            return Err(malformed(ln, "expected <i> <j> <s>"));
        }
        let i: usize = parse_num(f[0], ln, "item")?;
        let j: usize = parse_num(f[1], ln, "item")?;
        let s: f64 = parse_num(f[2], ln, "similarity")?;
        if i == 0 || j == 0 || i > m || j > m || i > j {
            return Err(malformed(ln, "pair out of range"));
        }
        let (i, j) = (i - 1, j - 1);
        values[i * m + j] = s;
        values[j * m + i] = s;
        defined[i * m + j] = true;
        defined[j * m + i] = true;
    }
    ItemSimilarityMatrix::from_parts(m, values, defined, item_means, source)
        .ok_or_else(|| Error::InvalidConfig("inconsistent similarity matrix".into()))
}

pub fn read_similarity<R: Read>(mut r: R) -> Result<ItemSimilarityMatrix> {
    let mut text = String::new();
    r.read_to_string(&mut text)?;
    parse_similarity(&text)
}

/// Result rows as CSV with a [`CSV_HEADER`] header and LF line endings.
pub fn write_results_csv<W: Write>(w: W, rows: &[ResultRow]) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w);
    for row in rows {
        wtr.serialize(row).map_err(|e| Error::Io(e.to_string()))?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_results_csv<R: Read>(r: R) -> Result<Vec<ResultRow>> {
    let mut rdr = csv::Reader::from_reader(r);
    rdr.deserialize()
        .map(|row| row.map_err(|e| Error::Io(e.to_string())))
        .collect()
}
