//! Dataset files.
//!
//! Text layout:
//!
//! ```text
//! # fadenet-dataset v1
//! # meta {"meta":{...},"dropped":[...]}
//! # rows 1500
//! # sha256 <hex of everything after this line>
//! category,r0,raw0,target0
//! 0,5.1e-1,1.3e-14,4.2e-1
//! ```
//!
//! The binary twin carries the same header JSON after a `FNDS` magic and a
//! version word, fixed-width little-endian rows, and a SHA-256 trailer over
//! all preceding bytes. Floats round-trip exactly in both forms.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{DataError, Dataset, DatasetMeta, Sample};

pub const FORMAT_VERSION: u32 = 1;
const TEXT_MAGIC: &str = "# fadenet-dataset v";
const BIN_MAGIC: &[u8; 4] = b"FNDS";

#[derive(Serialize, Deserialize)]
struct Header {
    meta: DatasetMeta,
    dropped: Vec<usize>,
}

fn header_json(ds: &Dataset) -> String {
    serde_json::to_string(&Header {
        meta: ds.meta.clone(),
        dropped: ds.dropped.clone(),
    })
    .expect("dataset meta serializes")
}

/// Writes the binary form when the extension is `bin`, text otherwise.
pub fn save_dataset(ds: &Dataset, path: &Path) -> Result<(), DataError> {
    if path.extension().is_some_and(|e| e == "bin") {
        save_dataset_binary(ds, path)
    } else {
        save_dataset_text(ds, path)
    }
}

fn format_row(s: &Sample, r_dim: usize, out_dim: usize, buf: &mut String) {
    use std::fmt::Write as _;
    buf.clear();
    let _ = write!(buf, "{}", s.category);
    for v in s.r[..r_dim].iter().chain(&s.raw[..out_dim]).chain(&s.target[..out_dim]) {
        let _ = write!(buf, ",{v:e}");
    }
    buf.push('\n');
}

fn column_header(r_dim: usize, out_dim: usize) -> String {
    let mut cols = vec!["category".to_string()];
    cols.extend((0..r_dim).map(|i| format!("r{i}")));
    cols.extend((0..out_dim).map(|i| format!("raw{i}")));
    cols.extend((0..out_dim).map(|i| format!("target{i}")));
    cols.join(",") + "\n"
}

pub fn save_dataset_text(ds: &Dataset, path: &Path) -> Result<(), DataError> {
    let (r_dim, out_dim) = (ds.meta.r_dim(), ds.meta.out_dim());
    let columns = column_header(r_dim, out_dim);
    let mut hasher = Sha256::new();
    hasher.update(columns.as_bytes());
    let mut buf = String::new();
    for s in &ds.samples {
        format_row(s, r_dim, out_dim, &mut buf);
        hasher.update(buf.as_bytes());
    }
    let digest = hex::encode(hasher.finalize());

    let mut w = std::io::BufWriter::new(fs::File::create(path)?);
    writeln!(w, "{TEXT_MAGIC}{FORMAT_VERSION}")?;
    writeln!(w, "# meta {}", header_json(ds))?;
    writeln!(w, "# rows {}", ds.samples.len())?;
    writeln!(w, "# sha256 {digest}")?;
    w.write_all(columns.as_bytes())?;
    for s in &ds.samples {
        format_row(s, r_dim, out_dim, &mut buf);
        w.write_all(buf.as_bytes())?;
    }
    w.flush()?;
    Ok(())
}

fn binary_body(ds: &Dataset) -> Vec<u8> {
    let (r_dim, out_dim) = (ds.meta.r_dim(), ds.meta.out_dim());
    let header = header_json(ds);
    let row_len = 4 + 8 * (r_dim + 2 * out_dim);
    let mut b = Vec::with_capacity(32 + header.len() + row_len * ds.samples.len());
    b.extend_from_slice(BIN_MAGIC);
    b.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    b.extend_from_slice(&(header.len() as u64).to_le_bytes());
    b.extend_from_slice(header.as_bytes());
    b.extend_from_slice(&(ds.samples.len() as u64).to_le_bytes());
    for s in &ds.samples {
        b.extend_from_slice(&s.category.to_le_bytes());
        for v in s.r[..r_dim].iter().chain(&s.raw[..out_dim]).chain(&s.target[..out_dim]) {
            b.extend_from_slice(&v.to_le_bytes());
        }
    }
    b
}

pub(super) fn fingerprint(ds: &Dataset) -> String {
    hex::encode(Sha256::digest(binary_body(ds)))
}

pub fn save_dataset_binary(ds: &Dataset, path: &Path) -> Result<(), DataError> {
    let mut body = binary_body(ds);
    let digest = Sha256::digest(&body);
    body.extend_from_slice(&digest);
    fs::write(path, body)?;
    Ok(())
}

/// Reads either form, detected from the leading bytes.
pub fn load_dataset(path: &Path) -> Result<Dataset, DataError> {
    let bytes = fs::read(path)?;
    if bytes.starts_with(BIN_MAGIC) {
        load_binary(&bytes)
    } else {
        let text = String::from_utf8(bytes).map_err(|_| DataError::Format("not UTF-8 text".into()))?;
        load_text(&text)
    }
}

fn check_version(found: u32) -> Result<(), DataError> {
    if found == FORMAT_VERSION {
        Ok(())
    } else {
        Err(DataError::Version {
            found,
            supported: FORMAT_VERSION,
        })
    }
}

fn parse_header(json: &str) -> Result<Header, DataError> {
    let h: Header = serde_json::from_str(json).map_err(|e| DataError::Format(format!("meta: {e}")))?;
    if h.dropped.len() != h.meta.n_categories() {
        return Err(DataError::Format("drop counts do not match the category table".into()));
    }
    Ok(h)
}

fn header_line<'a>(lines: &mut impl Iterator<Item = &'a str>, prefix: &str) -> Result<&'a str, DataError> {
    let line = lines.next().ok_or_else(|| DataError::Truncated {
        expected: format!("header line '{prefix}'"),
        found: "end of file".into(),
    })?;
    if !line.ends_with('\n') {
        return Err(DataError::Truncated {
            expected: format!("complete header line '{prefix}'"),
            found: format!("{} bytes", line.len()),
        });
    }
    line.strip_prefix(prefix)
        .ok_or_else(|| DataError::Format(format!("expected header '{prefix}', found '{line}'")))
}

fn load_text(text: &str) -> Result<Dataset, DataError> {
    let mut lines = text.split_inclusive('\n');
    let version = header_line(&mut lines, TEXT_MAGIC)?;
    let version: u32 = version
        .trim()
        .parse()
        .map_err(|_| DataError::Format(format!("bad version '{}'", version.trim())))?;
    check_version(version)?;
    let header = parse_header(header_line(&mut lines, "# meta ")?.trim_end())?;
    let rows: usize = header_line(&mut lines, "# rows ")?
        .trim()
        .parse()
        .map_err(|_| DataError::Format("bad row count".into()))?;
    let digest = header_line(&mut lines, "# sha256 ")?.trim().to_string();
    let body: Vec<&str> = lines.collect();
    let complete = body.last().is_none_or(|l| l.ends_with('\n'));
    let found_rows = body.len().saturating_sub(1);
    if body.is_empty() || found_rows < rows || (found_rows == rows && !complete) {
        return Err(DataError::Truncated {
            expected: format!("{rows} rows"),
            found: format!("{found_rows} rows"),
        });
    }
    if found_rows > rows {
        return Err(DataError::Format(format!("{found_rows} rows present, header says {rows}")));
    }
    let mut hasher = Sha256::new();
    for l in &body {
        hasher.update(l.as_bytes());
    }
    if hex::encode(hasher.finalize()) != digest {
        return Err(DataError::Checksum);
    }

    let meta = header.meta;
    let (r_dim, out_dim) = (meta.r_dim(), meta.out_dim());
    if body[0] != column_header(r_dim, out_dim) {
        return Err(DataError::Format("unexpected column header".into()));
    }
    let n_cat = meta.n_categories();
    let mut samples = Vec::with_capacity(rows);
    for (lineno, line) in body[1..].iter().enumerate() {
        let bad = || DataError::Format(format!("row {}", lineno + 1));
        let mut fields = line.trim_end().split(',');
        let category: u32 = fields.next().and_then(|f| f.parse().ok()).ok_or_else(bad)?;
        if category as usize >= n_cat {
            return Err(bad());
        }
        let mut vals = [0.0; 6];
        let width = r_dim + 2 * out_dim;
        for v in vals.iter_mut().take(width) {
            *v = fields.next().and_then(|f| f.parse().ok()).ok_or_else(bad)?;
        }
        if fields.next().is_some() {
            return Err(bad());
        }
        samples.push(unpack(category, &vals[..width], r_dim, out_dim));
    }
    Ok(Dataset {
        meta,
        samples,
        dropped: header.dropped,
    })
}

fn unpack(category: u32, vals: &[f64], r_dim: usize, out_dim: usize) -> Sample {
    let mut s = Sample {
        category,
        r: [0.0; 2],
        raw: [0.0; 2],
        target: [0.0; 2],
    };
    s.r[..r_dim].copy_from_slice(&vals[..r_dim]);
    s.raw[..out_dim].copy_from_slice(&vals[r_dim..r_dim + out_dim]);
    s.target[..out_dim].copy_from_slice(&vals[r_dim + out_dim..]);
    s
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], DataError> {
        if self.bytes.len() - self.pos < n {
            return Err(DataError::Truncated {
                expected: format!("{n} more bytes for {what}"),
                found: format!("{}", self.bytes.len() - self.pos),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u64(&mut self, what: &str) -> Result<u64, DataError> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }
}

fn load_binary(bytes: &[u8]) -> Result<Dataset, DataError> {
    let mut r = Reader { bytes, pos: 4 };
    check_version(u32::from_le_bytes(r.take(4, "version")?.try_into().expect("4 bytes")))?;
    let header_len = r.u64("header length")? as usize;
    let header = std::str::from_utf8(r.take(header_len, "header")?)
        .map_err(|_| DataError::Format("header is not UTF-8".into()))?;
    let header = parse_header(header)?;
    let rows = r.u64("row count")? as usize;
    let (r_dim, out_dim) = (header.meta.r_dim(), header.meta.out_dim());
    let width = r_dim + 2 * out_dim;
    let row_len = 4 + 8 * width;
    let needed = rows.checked_mul(row_len).and_then(|x| x.checked_add(32));
    match needed {
        Some(n) if bytes.len() - r.pos >= n => {
            if bytes.len() - r.pos > n {
                return Err(DataError::Format("trailing bytes after checksum".into()));
            }
        }
        _ => {
            return Err(DataError::Truncated {
                expected: format!("{rows} rows and checksum"),
                found: format!("{} bytes", bytes.len() - r.pos),
            })
        }
    }
    let body_end = bytes.len() - 32;
    if Sha256::digest(&bytes[..body_end])[..] != bytes[body_end..] {
        return Err(DataError::Checksum);
    }
    let n_cat = header.meta.n_categories();
    let mut samples = Vec::with_capacity(rows);
    let mut vals = [0.0; 6];
    for i in 0..rows {
        let row = r.take(row_len, "row")?;
        let category = u32::from_le_bytes(row[..4].try_into().expect("4 bytes"));
        if category as usize >= n_cat {
            return Err(DataError::Format(format!("row {} has category {category}", i + 1)));
        }
        for (j, v) in vals.iter_mut().take(width).enumerate() {
            *v = f64::from_le_bytes(row[4 + 8 * j..12 + 8 * j].try_into().expect("8 bytes"));
        }
        samples.push(unpack(category, &vals[..width], r_dim, out_dim));
    }
    Ok(Dataset {
        meta: header.meta,
        samples,
        dropped: header.dropped,
    })
}

#[cfg(test)]
mod tests {
    use super::super::*;
    use super::*;
    use crate::channel::{ChannelParams, NoiseParams};

    fn sample_sets() -> Vec<Dataset> {
        vec![
            generate_approach2(
                40,
                &ChannelParams::distance_experiment(),
                &NoiseParams::gaussian(1.256e-15, 1e-16),
                &paper_distances(),
                MRule::paper(),
                8,
            )
            .unwrap(),
            generate_approach1(
                5,
                &QamConstellation::qam16(),
                &ChannelParams::qam_experiment(),
                200.0,
                &NoiseParams::disabled(),
                8,
            )
            .unwrap(),
        ]
    }

    #[test]
    fn round_trips_bit_exactly() {
        let dir = tempfile::tempdir().unwrap();
        for (k, ds) in sample_sets().into_iter().enumerate() {
            for ext in ["tsv", "bin"] {
                let path = dir.path().join(format!("ds{k}.{ext}"));
                save_dataset(&ds, &path).unwrap();
                let back = load_dataset(&path).unwrap();
                assert_eq!(back, ds);
                assert_eq!(back.fingerprint(), ds.fingerprint());
            }
        }
    }

    #[test]
    fn truncation_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let ds = &sample_sets()[0];
        for ext in ["txt", "bin"] {
            let path = dir.path().join(format!("t.{ext}"));
            save_dataset(ds, &path).unwrap();
            let bytes = fs::read(&path).unwrap();
            for cut in [bytes.len() - 10, bytes.len() / 2, 30] {
                fs::write(&path, &bytes[..cut]).unwrap();
                let err = load_dataset(&path).unwrap_err();
                assert!(matches!(err, DataError::Truncated { .. }), "{ext} cut {cut}: {err}");
            }
        }
    }

    #[test]
    fn corruption_fails_checksum() {
        let dir = tempfile::tempdir().unwrap();
        let ds = &sample_sets()[0];
        for ext in ["txt", "bin"] {
            let path = dir.path().join(format!("c.{ext}"));
            save_dataset(ds, &path).unwrap();
            let mut bytes = fs::read(&path).unwrap();
            let i = bytes.len() - 40;
            // swap one digit for another so the text still parses
            bytes[i] = if bytes[i] == b'1' { b'2' } else { b'1' };
            fs::write(&path, &bytes).unwrap();
            assert!(matches!(load_dataset(&path), Err(DataError::Checksum)), "{ext}");
        }
    }

    #[test]
    fn future_version_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let ds = &sample_sets()[1];
        let text = dir.path().join("v.txt");
        save_dataset_text(ds, &text).unwrap();
        let s = fs::read_to_string(&text).unwrap().replacen("v1\n", "v2\n", 1);
        fs::write(&text, s).unwrap();
        assert!(matches!(
            load_dataset(&text),
            Err(DataError::Version { found: 2, supported: 1 })
        ));

        let bin = dir.path().join("v.bin");
        save_dataset_binary(ds, &bin).unwrap();
        let mut b = fs::read(&bin).unwrap();
        b[4] = 9;
        fs::write(&bin, b).unwrap();
        assert!(matches!(load_dataset(&bin), Err(DataError::Version { found: 9, .. })));
    }

    #[test]
    fn loaded_meta_regenerates_samples() {
        let dir = tempfile::tempdir().unwrap();
        let ds = &sample_sets()[0];
        let path = dir.path().join("r.txt");
        save_dataset(ds, &path).unwrap();
        let back = load_dataset(&path).unwrap();
        assert_eq!(regenerate(&back.meta).unwrap(), *ds);
    }
}
