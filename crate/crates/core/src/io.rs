//! File formats: binary and CSV coefficient files, spectrum CSV, sequence CSV.
//!
//! Binary layout, little-endian: magic `MFLD`, version `u32`, jmax `u32`, flags
//! `u32`, then for each scale `j` the `2^j` slots `round(-log2 |c| * 2^16)` as
//! `u32`, with `0xFFFFFFFF` for a zero coefficient.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::genspace::AdmissibleSequence;
use crate::scalar::Scalar;
use crate::spectra::{SpectrumCurve, SpectrumKind};

pub const MAGIC: &[u8; 4] = b"MFLD";
pub const VERSION: u32 = 1;
pub const ZERO_SLOT: u32 = u32::MAX;
const FIXED: f64 = 65536.0;

/// Flag bit: the rows are leaders rather than coefficients.
pub const FLAG_LEADERS: u32 = 1;

fn format_err(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}

pub fn encode_slot<T: Scalar>(c: T) -> Result<u32> {
    if c == T::zero() {
        return Ok(ZERO_SLOT);
    }
    let x = (-c.f64().log2() * FIXED).round();
    if !(0.0..ZERO_SLOT as f64).contains(&x) {
        return Err(format_err(format!("magnitude {c} is not representable (needs 0 < |c| <= 1)")));
    }
    Ok(x as u32)
}

pub fn decode_slot<T: Scalar>(slot: u32) -> T {
    if slot == ZERO_SLOT {
        T::zero()
    } else {
        T::of(-(slot as f64) / FIXED).exp2()
    }
}

pub fn write_binary<T: Scalar>(mut w: impl Write, rows: &[Vec<T>], flags: u32) -> Result<()> {
    let jmax = rows.len().checked_sub(1).ok_or_else(|| format_err("no scales to write"))? as u32;
    w.write_all(MAGIC)?;
    for v in [VERSION, jmax, flags] {
        w.write_all(&v.to_le_bytes())?;
    }
    let mut buf = Vec::new();
    for row in rows {
        buf.clear();
        for c in row {
            buf.extend_from_slice(&encode_slot(*c)?.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    Ok(())
}

pub fn read_binary<T: Scalar>(mut r: impl Read) -> Result<(Vec<Vec<T>>, u32)> {
    let mut head = [0u8; 16];
    r.read_exact(&mut head).map_err(|_| format_err("truncated header"))?;
    if &head[..4] != MAGIC {
        return Err(format_err("bad magic, not an MFLD file"));
    }
    let word = |i: usize| u32::from_le_bytes(head[i..i + 4].try_into().unwrap());
    let (version, jmax, flags) = (word(4), word(8), word(12));
    if version != VERSION {
        return Err(format_err(format!("unsupported version {version}")));
    }
    if jmax > 30 {
        return Err(format_err(format!("jmax {jmax} out of range")));
    }
    let mut rows = Vec::with_capacity(jmax as usize + 1);
    for j in 0..=jmax {
        let mut bytes = vec![0u8; 4 << j];
        r.read_exact(&mut bytes).map_err(|_| format_err(format!("truncated data at scale {j}")))?;
        rows.push(bytes.chunks_exact(4).map(|b| decode_slot(u32::from_le_bytes(b.try_into().unwrap()))).collect());
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(format_err("trailing bytes after the last scale"));
    }
    Ok((rows, flags))
}

/// Writes through a temporary sibling and renames it into place.
pub fn write_atomic(path: &Path, f: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    let tmp = std::path::PathBuf::from(tmp);
    {
        let mut w = BufWriter::new(fs::File::create(&tmp)?);
        f(&mut w)?;
        w.flush()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn save_binary<T: Scalar>(path: &Path, rows: &[Vec<T>], flags: u32) -> Result<()> {
    write_atomic(path, |w| write_binary(w, rows, flags))
}

pub fn load_binary<T: Scalar>(path: &Path) -> Result<(Vec<Vec<T>>, u32)> {
    read_binary(BufReader::new(fs::File::open(path)?))
}

/// Sparse rows `j,k,neglog2`, one per nonzero entry; the last cell of the finest scale
/// is always written (`inf` when zero) so that jmax survives.
pub fn write_coefficient_csv<T: Scalar>(mut w: impl Write, rows: &[Vec<T>]) -> Result<()> {
    writeln!(w, "j,k,neglog2")?;
    let last = rows.len().saturating_sub(1);
    for (j, row) in rows.iter().enumerate() {
        for (k, c) in row.iter().enumerate() {
            if *c > T::zero() {
                writeln!(w, "{j},{k},{}", 0.0 - c.f64().log2())?;
            } else if j == last && k + 1 == row.len() {
                writeln!(w, "{j},{k},inf")?;
            }
        }
    }
    Ok(())
}

/// Reads `j,k,neglog2`; absent cells and `inf` are zero, jmax is the largest `j` present.
pub fn read_coefficient_csv<T: Scalar>(r: impl Read) -> Result<Vec<Vec<T>>> {
    let mut entries = Vec::new();
    for (n, line) in BufReader::new(r).lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || (n == 0 && line.starts_with('j')) {
            continue;
        }
        let parts: Vec<&str> = line.split(',').map(str::trim).collect();
        if parts.len() != 3 {
            return Err(format_err(format!("line {}: expected j,k,neglog2", n + 1)));
        }
        let bad = || format_err(format!("line {}: cannot parse '{line}'", n + 1));
        let j: u32 = parts[0].parse().map_err(|_| bad())?;
        let k: u64 = parts[1].parse().map_err(|_| bad())?;
        let e: f64 = parse_value(parts[2]).ok_or_else(bad)?;
        if j > 30 || k >= 1u64 << j || e.is_nan() || e == f64::NEG_INFINITY {
            return Err(format_err(format!("line {}: entry ({j},{k}) out of range", n + 1)));
        }
        entries.push((j, k, e));
    }
    let jmax = entries.iter().map(|e| e.0).max().ok_or_else(|| format_err("no coefficients in CSV"))?;
    let mut rows: Vec<Vec<T>> = (0..=jmax).map(|j| vec![T::zero(); 1 << j]).collect();
    for (j, k, e) in entries {
        rows[j as usize][k as usize] = if e.is_finite() { T::of(-e).exp2() } else { T::zero() };
    }
    Ok(rows)
}

fn fmt_value(v: f64) -> String {
    if v == f64::NEG_INFINITY {
        "-inf".into()
    } else if v == f64::INFINITY {
        "inf".into()
    } else {
        format!("{v}")
    }
}

fn parse_value(s: &str) -> Option<f64> {
    match s {
        "-inf" => Some(f64::NEG_INFINITY),
        "inf" | "+inf" => Some(f64::INFINITY),
        _ => s.parse().ok(),
    }
}

pub fn write_spectrum_csv<T: Scalar>(mut w: impl Write, curves: &[&SpectrumCurve<T>]) -> Result<()> {
    writeln!(w, "h,value,kind")?;
    for c in curves {
        for (h, v) in c.grid.iter().zip(&c.values) {
            writeln!(w, "{},{},{}", h.f64(), fmt_value(v.f64()), c.kind.label())?;
        }
    }
    Ok(())
}

/// One curve per kind, in order of first appearance.
pub fn read_spectrum_csv<T: Scalar>(r: impl Read) -> Result<Vec<SpectrumCurve<T>>> {
    let mut groups: Vec<(SpectrumKind, Vec<T>, Vec<T>)> = Vec::new();
    for (n, line) in BufReader::new(r).lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || (n == 0 && line.starts_with('h')) {
            continue;
        }
        let parts: Vec<&str> = line.split(',').map(str::trim).collect();
        let bad = || format_err(format!("line {}: expected h,value,kind", n + 1));
        if parts.len() != 3 {
            return Err(bad());
        }
        let h = parse_value(parts[0]).filter(|h| h.is_finite()).ok_or_else(bad)?;
        let v = parse_value(parts[1]).ok_or_else(bad)?;
        let kind = SpectrumKind::parse(parts[2]).ok_or_else(|| format_err(format!("line {}: unknown kind '{}'", n + 1, parts[2])))?;
        match groups.iter_mut().find(|g| g.0 == kind) {
            Some(g) => {
                g.1.push(T::of(h));
                g.2.push(T::of(v));
            }
            None => groups.push((kind, vec![T::of(h)], vec![T::of(v)])),
        }
    }
    if groups.is_empty() {
        return Err(format_err("no spectrum rows"));
    }
    groups
        .into_iter()
        .map(|(kind, g, v)| SpectrumCurve::new(g, v, kind).map_err(|e| format_err(e.to_string())))
        .collect()
}

/// Decimal scientific notation of `2^x`, valid far beyond the f64 range.
pub fn format_pow2(x: f64) -> String {
    let l10 = x * std::f64::consts::LOG10_2;
    let mut e = l10.floor();
    let mut m = 10f64.powf(l10 - e);
    if m >= 9.999_999_999_999_999 {
        m /= 10.0;
        e += 1.0;
    }
    format!("{m:.15}e{e}")
}

/// `log2` of a positive decimal, accepting exponents outside the f64 range.
pub fn parse_log2(s: &str) -> Option<f64> {
    let (m, e) = match s.find(['e', 'E']) {
        Some(i) => (&s[..i], s[i + 1..].parse::<f64>().ok()?),
        None => (s, 0.0),
    };
    let m: f64 = m.parse().ok()?;
    (m > 0.0 && m.is_finite()).then(|| m.log2() + e * std::f64::consts::LOG2_10)
}

pub fn write_sequence_csv<T: Scalar>(mut w: impl Write, seq: &AdmissibleSequence<T>) -> Result<()> {
    writeln!(w, "j,sigma")?;
    for j in 0..=seq.jmax() {
        writeln!(w, "{j},{}", format_pow2(seq.log2_sigma(j).f64()))?;
    }
    Ok(())
}

pub fn read_sequence_csv<T: Scalar>(r: impl Read) -> Result<AdmissibleSequence<T>> {
    let mut ls = Vec::new();
    for (n, line) in BufReader::new(r).lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || (n == 0 && line.starts_with('j')) {
            continue;
        }
        let bad = || format_err(format!("line {}: expected j,sigma", n + 1));
        let (j, s) = line.split_once(',').ok_or_else(bad)?;
        let j: usize = j.trim().parse().map_err(|_| bad())?;
        if j != ls.len() {
            return Err(format_err(format!("line {}: scales must run 0,1,2,... without gaps", n + 1)));
        }
        ls.push(T::of(parse_log2(s.trim()).ok_or_else(bad)?));
    }
    AdmissibleSequence::from_log2(ls).map_err(|e| format_err(e.to_string()))
}
