//! Deterministic serialization of results: canonical JSON, CSV and content
//! hashes.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::ser::{self, Serialize};
use serde::Deserialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Fixed-format float: 17 significant digits in scientific notation, with
/// `inf`, `-inf` and `nan` spelled out.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x == f64::INFINITY {
        "inf".into()
    } else if x == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{x:.16e}")
    }
}

/// Canonical JSON: object keys sorted, floats as 17-significant-digit
/// scientific literals, non-finite floats as the strings `"inf"`, `"-inf"`,
/// `"nan"`, two-space indentation and a trailing newline.
pub fn to_canonical_json<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let node = value.serialize(NodeSerializer)?;
    let mut out = String::new();
    write_node(&node, 0, &mut out);
    out.push('\n');
    Ok(out)
}

/// CSV text with a header row.
pub fn to_csv(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for b in digest {
        let _ = write!(out, "{b:02x}");
    }
    out
}

/// A written output file.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, Deserialize)]
pub struct OutputEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: usize,
}

/// Writes `text` to `dir/name` and records its hash.
pub fn write_output(dir: &Path, name: &str, text: &str) -> Result<OutputEntry> {
    std::fs::create_dir_all(dir)?;
    let path: PathBuf = dir.join(name);
    std::fs::write(&path, text.as_bytes())?;
    Ok(OutputEntry {
        path: name.to_string(),
        sha256: sha256_hex(text.as_bytes()),
        bytes: text.len(),
    })
}

/// Serializes `value` canonically into `dir/name`.
pub fn write_report<T: Serialize + ?Sized>(dir: &Path, name: &str, value: &T) -> Result<OutputEntry> {
    write_output(dir, name, &to_canonical_json(value)?)
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Null,
    Bool(bool),
    Int(i128),
    Float(f64),
    Str(String),
    Seq(Vec<Node>),
    Map(BTreeMap<String, Node>),
}

fn write_indent(level: usize, out: &mut String) {
    for _ in 0..level {
        out.push_str("  ");
    }
}

fn write_node(node: &Node, level: usize, out: &mut String) {
    match node {
        Node::Null => out.push_str("null"),
        Node::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Node::Int(i) => {
            let _ = write!(out, "{i}");
        }
        Node::Float(f) => {
            if f.is_finite() {
                out.push_str(&fmt_f64(*f));
            } else {
                out.push_str(&serde_json::to_string(&fmt_f64(*f)).expect("string"));
            }
        }
        Node::Str(s) => out.push_str(&serde_json::to_string(s).expect("string")),
        Node::Seq(items) => {
            if items.is_empty() {
                out.push_str("[]");
                return;
            }
            out.push_str("[\n");
            for (i, item) in items.iter().enumerate() {
                write_indent(level + 1, out);
                write_node(item, level + 1, out);
                if i + 1 < items.len() {
                    out.push(',');
                }
                out.push('\n');
            }
            write_indent(level, out);
            out.push(']');
        }
        Node::Map(map) => {
            if map.is_empty() {
                out.push_str("{}");
                return;
            }
            out.push_str("{\n");
            for (i, (k, v)) in map.iter().enumerate() {
                write_indent(level + 1, out);
                out.push_str(&serde_json::to_string(k).expect("string"));
                out.push_str(": ");
                write_node(v, level + 1, out);
                if i + 1 < map.len() {
                    out.push(',');
                }
                out.push('\n');
            }
            write_indent(level, out);
            out.push('}');
        }
    }
}

#[derive(Debug)]
pub struct SerError(String);

impl std::fmt::Display for SerError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for SerError {}

impl ser::Error for SerError {
    fn custom<T: std::fmt::Display>(msg: T) -> Self {
        SerError(msg.to_string())
    }
}

impl From<SerError> for Error {
    fn from(e: SerError) -> Self {
        Error::Io(format!("serialization failed: {e}"))
    }
}

struct NodeSerializer;

struct SeqBuilder {
    items: Vec<Node>,
    variant: Option<&'static str>,
}

struct MapBuilder {
    map: BTreeMap<String, Node>,
    key: Option<String>,
    variant: Option<&'static str>,
}

fn wrap(variant: Option<&'static str>, node: Node) -> Node {
    match variant {
        Some(v) => Node::Map(BTreeMap::from([(v.to_string(), node)])),
        None => node,
    }
}

type SResult = std::result::Result<Node, SerError>;

impl ser::Serializer for NodeSerializer {
    type Ok = Node;
    type Error = SerError;
    type SerializeSeq = SeqBuilder;
    type SerializeTuple = SeqBuilder;
    type SerializeTupleStruct = SeqBuilder;
    type SerializeTupleVariant = SeqBuilder;
    type SerializeMap = MapBuilder;
    type SerializeStruct = MapBuilder;
    type SerializeStructVariant = MapBuilder;

    fn serialize_bool(self, v: bool) -> SResult {
        Ok(Node::Bool(v))
    }
    fn serialize_i8(self, v: i8) -> SResult {
        Ok(Node::Int(v.into()))
    }
    fn serialize_i16(self, v: i16) -> SResult {
        Ok(Node::Int(v.into()))
    }
    fn serialize_i32(self, v: i32) -> SResult {
        Ok(Node::Int(v.into()))
    }
    fn serialize_i64(self, v: i64) -> SResult {
        Ok(Node::Int(v.into()))
    }
    fn serialize_u8(self, v: u8) -> SResult {
        Ok(Node::Int(v.into()))
    }
    fn serialize_u16(self, v: u16) -> SResult {
        Ok(Node::Int(v.into()))
    }
    fn serialize_u32(self, v: u32) -> SResult {
        Ok(Node::Int(v.into()))
    }
    fn serialize_u64(self, v: u64) -> SResult {
        Ok(Node::Int(v.into()))
    }
    fn serialize_f32(self, v: f32) -> SResult {
        Ok(Node::Float(v.into()))
    }
    fn serialize_f64(self, v: f64) -> SResult {
        Ok(Node::Float(v))
    }
    fn serialize_char(self, v: char) -> SResult {
        Ok(Node::Str(v.to_string()))
    }
    fn serialize_str(self, v: &str) -> SResult {
        Ok(Node::Str(v.to_string()))
    }
    fn serialize_bytes(self, v: &[u8]) -> SResult {
        Ok(Node::Seq(v.iter().map(|b| Node::Int((*b).into())).collect()))
    }
    fn serialize_none(self) -> SResult {
        Ok(Node::Null)
    }
    fn serialize_some<T: ?Sized + Serialize>(self, value: &T) -> SResult {
        value.serialize(self)
    }
    fn serialize_unit(self) -> SResult {
        Ok(Node::Null)
    }
    fn serialize_unit_struct(self, _: &'static str) -> SResult {
        Ok(Node::Null)
    }
    fn serialize_unit_variant(self, _: &'static str, _: u32, variant: &'static str) -> SResult {
        Ok(Node::Str(variant.to_string()))
    }
    fn serialize_newtype_struct<T: ?Sized + Serialize>(self, _: &'static str, value: &T) -> SResult {
        value.serialize(self)
    }
    fn serialize_newtype_variant<T: ?Sized + Serialize>(
        self,
        _: &'static str,
        _: u32,
        variant: &'static str,
        value: &T,
    ) -> SResult {
        Ok(wrap(Some(variant), value.serialize(self)?))
    }
    fn serialize_seq(self, len: Option<usize>) -> std::result::Result<SeqBuilder, SerError> {
        Ok(SeqBuilder {
            items: Vec::with_capacity(len.unwrap_or(0)),
            variant: None,
        })
    }
    fn serialize_tuple(self, len: usize) -> std::result::Result<SeqBuilder, SerError> {
        self.serialize_seq(Some(len))
    }
    fn serialize_tuple_struct(self, _: &'static str, len: usize) -> std::result::Result<SeqBuilder, SerError> {
        self.serialize_seq(Some(len))
    }
    fn serialize_tuple_variant(
        self,
        _: &'static str,
        _: u32,
        variant: &'static str,
        len: usize,
    ) -> std::result::Result<SeqBuilder, SerError> {
        Ok(SeqBuilder {
            items: Vec::with_capacity(len),
            variant: Some(variant),
        })
    }
    fn serialize_map(self, _: Option<usize>) -> std::result::Result<MapBuilder, SerError> {
        Ok(MapBuilder {
            map: BTreeMap::new(),
            key: None,
            variant: None,
        })
    }
    fn serialize_struct(self, _: &'static str, _: usize) -> std::result::Result<MapBuilder, SerError> {
        self.serialize_map(None)
    }
    fn serialize_struct_variant(
        self,
        _: &'static str,
        _: u32,
        variant: &'static str,
        _: usize,
    ) -> std::result::Result<MapBuilder, SerError> {
        Ok(MapBuilder {
            map: BTreeMap::new(),
            key: None,
            variant: Some(variant),
        })
    }
}

impl ser::SerializeSeq for SeqBuilder {
    type Ok = Node;
    type Error = SerError;
    fn serialize_element<T: ?Sized + Serialize>(&mut self, value: &T) -> std::result::Result<(), SerError> {
        self.items.push(value.serialize(NodeSerializer)?);
        Ok(())
    }
    fn end(self) -> SResult {
        Ok(wrap(self.variant, Node::Seq(self.items)))
    }
}

impl ser::SerializeTuple for SeqBuilder {
    type Ok = Node;
    type Error = SerError;
    fn serialize_element<T: ?Sized + Serialize>(&mut self, value: &T) -> std::result::Result<(), SerError> {
        ser::SerializeSeq::serialize_element(self, value)
    }
    fn end(self) -> SResult {
        ser::SerializeSeq::end(self)
    }
}

impl ser::SerializeTupleStruct for SeqBuilder {
    type Ok = Node;
    type Error = SerError;
    fn serialize_field<T: ?Sized + Serialize>(&mut self, value: &T) -> std::result::Result<(), SerError> {
        ser::SerializeSeq::serialize_element(self, value)
    }
    fn end(self) -> SResult {
        ser::SerializeSeq::end(self)
    }
}

impl ser::SerializeTupleVariant for SeqBuilder {
    type Ok = Node;
    type Error = SerError;
    fn serialize_field<T: ?Sized + Serialize>(&mut self, value: &T) -> std::result::Result<(), SerError> {
        ser::SerializeSeq::serialize_element(self, value)
    }
    fn end(self) -> SResult {
        ser::SerializeSeq::end(self)
    }
}

fn key_string(node: Node) -> std::result::Result<String, SerError> {
    match node {
        Node::Str(s) => Ok(s),
        Node::Int(i) => Ok(i.to_string()),
        Node::Bool(b) => Ok(b.to_string()),
        other => Err(SerError(format!("unsupported map key {other:?}"))),
    }
}

impl ser::SerializeMap for MapBuilder {
    type Ok = Node;
    type Error = SerError;
    fn serialize_key<T: ?Sized + Serialize>(&mut self, key: &T) -> std::result::Result<(), SerError> {
        self.key = Some(key_string(key.serialize(NodeSerializer)?)?);
        Ok(())
    }
    fn serialize_value<T: ?Sized + Serialize>(&mut self, value: &T) -> std::result::Result<(), SerError> {
        let key = self.key.take().ok_or_else(|| SerError("value without key".into()))?;
        self.map.insert(key, value.serialize(NodeSerializer)?);
        Ok(())
    }
    fn end(self) -> SResult {
        Ok(wrap(self.variant, Node::Map(self.map)))
    }
}

impl ser::SerializeStruct for MapBuilder {
    type Ok = Node;
    type Error = SerError;
    fn serialize_field<T: ?Sized + Serialize>(
        &mut self,
        key: &'static str,
        value: &T,
    ) -> std::result::Result<(), SerError> {
        self.map.insert(key.to_string(), value.serialize(NodeSerializer)?);
        Ok(())
    }
    fn end(self) -> SResult {
        Ok(wrap(self.variant, Node::Map(self.map)))
    }
}

impl ser::SerializeStructVariant for MapBuilder {
    type Ok = Node;
    type Error = SerError;
    fn serialize_field<T: ?Sized + Serialize>(
        &mut self,
        key: &'static str,
        value: &T,
    ) -> std::result::Result<(), SerError> {
        ser::SerializeStruct::serialize_field(self, key, value)
    }
    fn end(self) -> SResult {
        ser::SerializeStruct::end(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(serde::Serialize)]
    struct Sample {
        zeta: f64,
        alpha: Vec<f64>,
        name: &'static str,
        nested: BTreeMap<String, u32>,
    }

    #[test]
    fn keys_sorted_and_floats_fixed() {
        let s = Sample {
            zeta: 0.1,
            alpha: vec![1.0, f64::INFINITY],
            name: "x",
            nested: BTreeMap::from([("b".into(), 2), ("a".into(), 1)]),
        };
        let text = to_canonical_json(&s).unwrap();
        let a = text.find("\"alpha\"").unwrap();
        let n = text.find("\"name\"").unwrap();
        let z = text.find("\"zeta\"").unwrap();
        assert!(a < n && n < z);
        assert!(text.contains("1.0000000000000001e-1"));
        assert!(text.contains("\"inf\""));
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["zeta"].as_f64(), Some(0.1));
    }

    #[test]
    fn csv_shape() {
        let csv = to_csv(&["a", "b"], &[vec!["1".into(), "2".into()], vec!["3".into(), "4".into()]]);
        assert_eq!(csv, "a,b\n1,2\n3,4\n");
    }

    #[test]
    fn hash_is_stable() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
