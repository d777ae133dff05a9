use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlyFormat {
    Ascii,
    BinaryLittleEndian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScalarType {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl ScalarType {
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "char" | "int8" => Self::I8,
            "uchar" | "uint8" => Self::U8,
            "short" | "int16" => Self::I16,
            "ushort" | "uint16" => Self::U16,
            "int" | "int32" => Self::I32,
            "uint" | "uint32" => Self::U32,
            "float" | "float32" => Self::F32,
            "double" | "float64" => Self::F64,
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            Self::I8 => "char",
            Self::U8 => "uchar",
            Self::I16 => "short",
            Self::U16 => "ushort",
            Self::I32 => "int",
            Self::U32 => "uint",
            Self::F32 => "float",
            Self::F64 => "double",
        }
    }

    fn size(self) -> usize {
        match self {
            Self::I8 | Self::U8 => 1,
            Self::I16 | Self::U16 => 2,
            Self::I32 | Self::U32 | Self::F32 => 4,
            Self::F64 => 8,
        }
    }

    fn is_integer(self) -> bool {
        !matches!(self, Self::F32 | Self::F64)
    }

    fn range(self) -> (f64, f64) {
        match self {
            Self::I8 => (i8::MIN as f64, i8::MAX as f64),
            Self::U8 => (0.0, u8::MAX as f64),
            Self::I16 => (i16::MIN as f64, i16::MAX as f64),
            Self::U16 => (0.0, u16::MAX as f64),
            Self::I32 => (i32::MIN as f64, i32::MAX as f64),
            Self::U32 => (0.0, u32::MAX as f64),
            Self::F32 | Self::F64 => (f64::NEG_INFINITY, f64::INFINITY),
        }
    }

    fn decode(self, b: &[u8]) -> f64 {
        match self {
            Self::I8 => b[0] as i8 as f64,
            Self::U8 => b[0] as f64,
            Self::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Self::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Self::I32 => i32::from_le_bytes(b[..4].try_into().expect("4 bytes")) as f64,
            Self::U32 => u32::from_le_bytes(b[..4].try_into().expect("4 bytes")) as f64,
            Self::F32 => f32::from_le_bytes(b[..4].try_into().expect("4 bytes")) as f64,
            Self::F64 => f64::from_le_bytes(b[..8].try_into().expect("8 bytes")),
        }
    }

    /// Checks that `v` is representable; integers must be integral and in range.
    fn check(self, v: f64) -> std::result::Result<(), String> {
        if self.is_integer() {
            let (lo, hi) = self.range();
            if !(v.fract() == 0.0 && v >= lo && v <= hi) {
                return Err(format!("{v} is not representable as {}", self.name()));
            }
        }
        Ok(())
    }

    fn encode(self, v: f64, out: &mut Vec<u8>) {
        match self {
            Self::I8 => out.push(v as i8 as u8),
            Self::U8 => out.push(v as u8),
            Self::I16 => out.extend_from_slice(&(v as i16).to_le_bytes()),
            Self::U16 => out.extend_from_slice(&(v as u16).to_le_bytes()),
            Self::I32 => out.extend_from_slice(&(v as i32).to_le_bytes()),
            Self::U32 => out.extend_from_slice(&(v as u32).to_le_bytes()),
            Self::F32 => out.extend_from_slice(&(v as f32).to_le_bytes()),
            Self::F64 => out.extend_from_slice(&v.to_le_bytes()),
        }
    }

    fn format_ascii(self, v: f64, out: &mut String) {
        let _ = match self {
            Self::F32 => write!(out, "{:?}", v as f32),
            Self::F64 => write!(out, "{v:?}"),
            _ => write!(out, "{}", v as i64),
        };
    }

    fn parse_ascii(self, token: &str) -> Option<f64> {
        match self {
            Self::F32 => token.parse::<f32>().ok().map(f64::from),
            Self::F64 => token.parse::<f64>().ok(),
            _ => {
                let v = token.parse::<i64>().ok()? as f64;
                self.check(v).ok().map(|_| v)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PropertyKind {
    Scalar(ScalarType),
    List { count: ScalarType, item: ScalarType },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlyProperty {
    pub name: String,
    pub kind: PropertyKind,
}

impl PlyProperty {
    pub fn scalar(name: &str, ty: ScalarType) -> Self {
        Self {
            name: name.to_owned(),
            kind: PropertyKind::Scalar(ty),
        }
    }

    pub fn list(name: &str, count: ScalarType, item: ScalarType) -> Self {
        Self {
            name: name.to_owned(),
            kind: PropertyKind::List { count, item },
        }
    }
}

/// Values of one property over all rows of an element. Integer types are
/// held exactly as `f64`.
#[derive(Debug, Clone, PartialEq)]
pub enum PlyColumn {
    Scalar(Vec<f64>),
    List(Vec<Vec<f64>>),
}

impl PlyColumn {
    fn len(&self) -> usize {
        match self {
            Self::Scalar(v) => v.len(),
            Self::List(v) => v.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlyElement {
    pub name: String,
    pub count: usize,
    pub properties: Vec<PlyProperty>,
    /// One column per property, in declaration order.
    pub columns: Vec<PlyColumn>,
}

impl PlyElement {
    pub fn property_index(&self, name: &str) -> Option<usize> {
        self.properties.iter().position(|p| p.name == name)
    }

    pub fn scalar(&self, name: &str) -> Option<&[f64]> {
        match self.columns.get(self.property_index(name)?)? {
            PlyColumn::Scalar(v) => Some(v),
            PlyColumn::List(_) => None,
        }
    }

    pub fn list(&self, name: &str) -> Option<&[Vec<f64>]> {
        match self.columns.get(self.property_index(name)?)? {
            PlyColumn::List(v) => Some(v),
            PlyColumn::Scalar(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlyData {
    pub format: PlyFormat,
    pub comments: Vec<String>,
    pub elements: Vec<PlyElement>,
}

impl PlyData {
    pub fn element(&self, name: &str) -> Option<&PlyElement> {
        self.elements.iter().find(|e| e.name == name)
    }
}

fn parse_err(path: &Path, location: String, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_owned(),
        location,
        message: message.into(),
    }
}

struct Header {
    format: PlyFormat,
    comments: Vec<String>,
    elements: Vec<(String, usize, Vec<PlyProperty>)>,
    body_start: usize,
    lines: usize,
}

fn parse_header(bytes: &[u8], path: &Path) -> Result<Header> {
    let mut pos = 0;
    let mut line_no = 0;
    let mut format = None;
    let mut comments = Vec::new();
    let mut elements: Vec<(String, usize, Vec<PlyProperty>)> = Vec::new();
    loop {
        line_no += 1;
        let loc = format!("line {line_no}");
        let Some(end) = bytes[pos..].iter().position(|&b| b == b'\n') else {
            return Err(parse_err(path, loc, "header ends before `end_header`"));
        };
        let line = std::str::from_utf8(&bytes[pos..pos + end])
            .map_err(|_| parse_err(path, loc.clone(), "header is not valid UTF-8"))?
            .trim_end_matches('\r');
        pos += end + 1;
        let mut words = line.split_whitespace();
        let keyword = words.next().unwrap_or("");
        if line_no == 1 {
            if line.trim() != "ply" {
                return Err(parse_err(path, loc, "missing `ply` magic line"));
            }
            continue;
        }
        match keyword {
            "format" => {
                format = Some(match (words.next(), words.next()) {
                    (Some("ascii"), Some("1.0")) => PlyFormat::Ascii,
                    (Some("binary_little_endian"), Some("1.0")) => PlyFormat::BinaryLittleEndian,
                    (Some(other), _) => return Err(parse_err(path, loc, format!("unsupported format `{other}`"))),
                    _ => return Err(parse_err(path, loc, "malformed format line")),
                });
            }
            "comment" | "obj_info" => comments.push(line[keyword.len()..].trim().to_owned()),
            "element" => {
                let name = words.next();
                let count = words.next().and_then(|c| c.parse::<usize>().ok());
                match (name, count) {
                    (Some(n), Some(c)) => elements.push((n.to_owned(), c, Vec::new())),
                    _ => return Err(parse_err(path, loc, "malformed element line")),
                }
            }
            "property" => {
                let Some(element) = elements.last_mut() else {
                    return Err(parse_err(path, loc, "property before any element"));
                };
                let rest: Vec<&str> = words.collect();
                let prop = match rest.as_slice() {
                    ["list", c, i, name] => match (ScalarType::parse(c), ScalarType::parse(i)) {
                        (Some(count), Some(item)) if count.is_integer() => PlyProperty::list(name, count, item),
                        _ => return Err(parse_err(path, loc, "invalid list property types")),
                    },
                    [t, name] => match ScalarType::parse(t) {
                        Some(ty) => PlyProperty::scalar(name, ty),
                        None => return Err(parse_err(path, loc, format!("unknown property type `{t}`"))),
                    },
                    _ => return Err(parse_err(path, loc, "malformed property line")),
                };
                element.2.push(prop);
            }
            "end_header" => break,
            "" => {}
            other => return Err(parse_err(path, loc, format!("unexpected header keyword `{other}`"))),
        }
    }
    let format = format.ok_or_else(|| parse_err(path, "header".into(), "missing format line"))?;
    Ok(Header {
        format,
        comments,
        elements,
        body_start: pos,
        lines: line_no,
    })
}

fn empty_columns(props: &[PlyProperty], count: usize) -> Vec<PlyColumn> {
    props
        .iter()
        .map(|p| match p.kind {
            PropertyKind::Scalar(_) => PlyColumn::Scalar(Vec::with_capacity(count)),
            PropertyKind::List { .. } => PlyColumn::List(Vec::with_capacity(count)),
        })
        .collect()
}

fn read_ascii_body(h: &Header, bytes: &[u8], path: &Path) -> Result<Vec<PlyElement>> {
    let body = std::str::from_utf8(&bytes[h.body_start..])
        .map_err(|_| parse_err(path, format!("line {}", h.lines + 1), "ASCII body is not valid UTF-8"))?;
    let mut lines = body.lines().enumerate().map(|(i, l)| (h.lines + 1 + i, l));
    let mut out = Vec::new();
    for (name, count, props) in &h.elements {
        let mut columns = empty_columns(props, *count);
        for row in 0..*count {
            let (line_no, line) = loop {
                match lines.next() {
                    Some((_, l)) if l.trim().is_empty() => continue,
                    Some(x) => break x,
                    None => {
                        return Err(parse_err(
                            path,
                            format!("line {}", h.lines + 1 + body.lines().count()),
                            format!("file ends at {name} row {row} of {count}"),
                        ))
                    }
                }
            };
            let loc = || format!("line {line_no}");
            let mut tokens = line.split_whitespace();
            let mut next = |ty: ScalarType, what: &str| -> Result<f64> {
                let t = tokens
                    .next()
                    .ok_or_else(|| parse_err(path, loc(), format!("missing value for {name}.{what}")))?;
                ty.parse_ascii(t).ok_or_else(|| {
                    parse_err(
                        path,
                        loc(),
                        format!("invalid {} value `{t}` for {name}.{what}", ty.name()),
                    )
                })
            };
            for (p, col) in props.iter().zip(columns.iter_mut()) {
                match (p.kind, col) {
                    (PropertyKind::Scalar(ty), PlyColumn::Scalar(v)) => v.push(next(ty, &p.name)?),
                    (PropertyKind::List { count, item }, PlyColumn::List(v)) => {
                        let n = next(count, &p.name)? as usize;
                        let items = (0..n).map(|_| next(item, &p.name)).collect::<Result<Vec<_>>>()?;
                        v.push(items);
                    }
                    _ => unreachable!("columns follow property kinds"),
                }
            }
            if tokens.next().is_some() {
                return Err(parse_err(path, loc(), format!("extra values in {name} row {row}")));
            }
        }
        out.push(PlyElement {
            name: name.clone(),
            count: *count,
            properties: props.clone(),
            columns,
        });
    }
    if let Some((n, _)) = lines.find(|(_, l)| !l.trim().is_empty()) {
        return Err(parse_err(path, format!("line {n}"), "data after the last element"));
    }
    Ok(out)
}

fn read_binary_body(h: &Header, bytes: &[u8], path: &Path) -> Result<Vec<PlyElement>> {
    let mut pos = h.body_start;
    let mut out = Vec::new();
    for (name, count, props) in &h.elements {
        let mut columns = empty_columns(props, *count);
        for row in 0..*count {
            let mut take = |ty: ScalarType, what: &str| -> Result<f64> {
                let end = pos + ty.size();
                if end > bytes.len() {
                    return Err(parse_err(
                        path,
                        format!("byte {pos}"),
                        format!("file truncated in {name} row {row} of {count} ({what})"),
                    ));
                }
                let v = ty.decode(&bytes[pos..end]);
                pos = end;
                Ok(v)
            };
            for (p, col) in props.iter().zip(columns.iter_mut()) {
                match (p.kind, col) {
                    (PropertyKind::Scalar(ty), PlyColumn::Scalar(v)) => v.push(take(ty, &p.name)?),
                    (PropertyKind::List { count, item }, PlyColumn::List(v)) => {
                        let n = take(count, &p.name)?;
                        if n < 0.0 {
                            return Err(parse_err(path, format!("byte {pos}"), "negative list length"));
                        }
                        let items = (0..n as usize)
                            .map(|_| take(item, &p.name))
                            .collect::<Result<Vec<_>>>()?;
                        v.push(items);
                    }
                    _ => unreachable!("columns follow property kinds"),
                }
            }
        }
        out.push(PlyElement {
            name: name.clone(),
            count: *count,
            properties: props.clone(),
            columns,
        });
    }
    if pos != bytes.len() {
        return Err(parse_err(
            path,
            format!("byte {pos}"),
            format!("{} bytes after the last element", bytes.len() - pos),
        ));
    }
    Ok(out)
}

/// Parses PLY bytes; `path` is used in diagnostics only.
pub fn parse_ply(bytes: &[u8], path: &Path) -> Result<PlyData> {
    let header = parse_header(bytes, path)?;
    let elements = match header.format {
        PlyFormat::Ascii => read_ascii_body(&header, bytes, path)?,
        PlyFormat::BinaryLittleEndian => read_binary_body(&header, bytes, path)?,
    };
    Ok(PlyData {
        format: header.format,
        comments: header.comments,
        elements,
    })
}

pub fn read_ply(path: &Path) -> Result<PlyData> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_ply(&bytes, path)
}

/// Serializes `data` in its own format. Column lengths must equal the
/// element counts and values must fit their declared types.
pub fn encode_ply(data: &PlyData) -> Result<Vec<u8>> {
    let mut header = String::from("ply\n");
    header.push_str(match data.format {
        PlyFormat::Ascii => "format ascii 1.0\n",
        PlyFormat::BinaryLittleEndian => "format binary_little_endian 1.0\n",
    });
    for c in &data.comments {
        let _ = writeln!(header, "comment {c}");
    }
    for e in &data.elements {
        if e.columns.len() != e.properties.len() || e.columns.iter().any(|c| c.len() != e.count) {
            return Err(Error::invalid(format!(
                "element `{}` columns do not match its count",
                e.name
            )));
        }
        let _ = writeln!(header, "element {} {}", e.name, e.count);
        for p in &e.properties {
            let _ = match p.kind {
                PropertyKind::Scalar(t) => writeln!(header, "property {} {}", t.name(), p.name),
                PropertyKind::List { count, item } => {
                    writeln!(header, "property list {} {} {}", count.name(), item.name(), p.name)
                }
            };
        }
    }
    header.push_str("end_header\n");

    let check = |ty: ScalarType, v: f64, e: &PlyElement, p: &PlyProperty| {
        ty.check(v)
            .map_err(|m| Error::invalid(format!("{}.{}: {m}", e.name, p.name)))
    };
    let mut out = header.into_bytes();
    let mut line = String::new();
    for e in &data.elements {
        for row in 0..e.count {
            line.clear();
            for (p, col) in e.properties.iter().zip(&e.columns) {
                let mut emit = |ty: ScalarType, v: f64, out: &mut Vec<u8>| -> Result<()> {
                    check(ty, v, e, p)?;
                    match data.format {
                        PlyFormat::BinaryLittleEndian => ty.encode(v, out),
                        PlyFormat::Ascii => {
                            if !line.is_empty() {
                                line.push(' ');
                            }
                            ty.format_ascii(v, &mut line);
                        }
                    }
                    Ok(())
                };
                match (p.kind, col) {
                    (PropertyKind::Scalar(ty), PlyColumn::Scalar(v)) => emit(ty, v[row], &mut out)?,
                    (PropertyKind::List { count, item }, PlyColumn::List(v)) => {
                        emit(count, v[row].len() as f64, &mut out)?;
                        for &x in &v[row] {
                            emit(item, x, &mut out)?;
                        }
                    }
                    _ => {
                        return Err(Error::invalid(format!(
                            "{}.{}: column kind does not match the property",
                            e.name, p.name
                        )))
                    }
                }
            }
            if data.format == PlyFormat::Ascii {
                out.extend_from_slice(line.as_bytes());
                out.push(b'\n');
            }
        }
    }
    Ok(out)
}
