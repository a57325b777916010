use std::fmt::Write as _;

use crate::geometry::Point3;
use crate::scalar::Scalar;

use super::{ElementKind, MshDocument, MshElement, MshError, MshNode, PhysicalName};

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        Self {
            inner: text.lines().enumerate(),
            line: 0,
        }
    }

    /// Next non-blank line, trimmed.
    fn next(&mut self) -> Option<&'a str> {
        for (i, l) in self.inner.by_ref() {
            self.line = i + 1;
            let t = l.trim();
            if !t.is_empty() {
                return Some(t);
            }
        }
        None
    }

    fn expect(&mut self, section: &str) -> Result<&'a str, MshError> {
        self.next().ok_or_else(|| MshError::Truncated {
            line: self.line,
            section: section.into(),
        })
    }

    fn malformed(&self, message: impl Into<String>) -> MshError {
        MshError::Malformed {
            line: self.line,
            message: message.into(),
        }
    }

    fn close(&mut self, section: &str) -> Result<(), MshError> {
        let l = self.expect(section)?;
        if l != format!("$End{section}") {
            return Err(self.malformed(format!("expected $End{section}, found '{l}'")));
        }
        Ok(())
    }

    fn count(&mut self, section: &str) -> Result<usize, MshError> {
        let l = self.expect(section)?;
        l.parse()
            .map_err(|_| self.malformed(format!("expected an entry count, found '{l}'")))
    }
}

fn field<F: std::str::FromStr>(
    lines: &Lines,
    tok: Option<&str>,
    what: &str,
) -> Result<F, MshError> {
    let tok = tok.ok_or_else(|| lines.malformed(format!("missing {what}")))?;
    tok.parse()
        .map_err(|_| lines.malformed(format!("invalid {what} '{tok}'")))
}

/// Parses an ASCII MSH 2.2 document.
pub fn parse_msh<T: Scalar>(text: &str) -> Result<MshDocument<T>, MshError> {
    let mut lines = Lines::new(text);
    let mut doc = MshDocument {
        version: String::new(),
        file_type: 0,
        data_size: 8,
        physical_names: Vec::new(),
        nodes: Vec::new(),
        elements: Vec::new(),
        warnings: Vec::new(),
    };
    let mut seen_format = false;
    while let Some(header) = lines.next() {
        let Some(section) = header.strip_prefix('$') else {
            return Err(lines.malformed(format!("expected a section header, found '{header}'")));
        };
        if !seen_format && section != "MeshFormat" {
            return Err(lines.malformed("file must start with $MeshFormat"));
        }
        match section {
            "MeshFormat" => {
                let l = lines.expect(section)?;
                let mut it = l.split_whitespace();
                let version: String = field(&lines, it.next(), "version")?;
                if version != "2.2" && version != "2" {
                    return Err(MshError::UnsupportedVersion {
                        line: lines.line,
                        version,
                    });
                }
                doc.file_type = field(&lines, it.next(), "file type")?;
                doc.data_size = field(&lines, it.next(), "data size")?;
                if doc.file_type != 0 {
                    return Err(MshError::UnsupportedVersion {
                        line: lines.line,
                        version: format!("{version} binary"),
                    });
                }
                doc.version = version;
                seen_format = true;
                lines.close(section)?;
            }
            "PhysicalNames" => {
                let n = lines.count(section)?;
                for _ in 0..n {
                    let l = lines.expect(section)?;
                    let mut it = l.splitn(3, char::is_whitespace);
                    let dim = field(&lines, it.next(), "physical dimension")?;
                    let tag = field(&lines, it.next(), "physical tag")?;
                    let rest = it
                        .next()
                        .ok_or_else(|| lines.malformed("missing physical name"))?
                        .trim();
                    let name = rest.trim_matches('"').to_string();
                    doc.physical_names.push(PhysicalName { dim, tag, name });
                }
                lines.close(section)?;
            }
            "Nodes" => {
                let n = lines.count(section)?;
                doc.nodes.reserve(n);
                for _ in 0..n {
                    let l = lines.expect(section)?;
                    let mut it = l.split_whitespace();
                    let id = field(&lines, it.next(), "node id")?;
                    let x: f64 = field(&lines, it.next(), "x coordinate")?;
                    let y: f64 = field(&lines, it.next(), "y coordinate")?;
                    let z: f64 = field(&lines, it.next(), "z coordinate")?;
                    doc.nodes.push(MshNode {
                        id,
                        point: Point3::new(T::of(x), T::of(y), T::of(z)),
                    });
                }
                lines.close(section)?;
            }
            "Elements" => {
                let n = lines.count(section)?;
                doc.elements.reserve(n);
                for _ in 0..n {
                    let l = lines.expect(section)?;
                    let mut it = l.split_whitespace();
                    let id = field(&lines, it.next(), "element id")?;
                    let code: u32 = field(&lines, it.next(), "element type")?;
                    let ntags: usize = field(&lines, it.next(), "tag count")?;
                    let mut tags = Vec::with_capacity(ntags);
                    for _ in 0..ntags {
                        tags.push(field(&lines, it.next(), "element tag")?);
                    }
                    let nodes: Vec<usize> = it
                        .map(|t| {
                            t.parse()
                                .map_err(|_| lines.malformed(format!("invalid node id '{t}'")))
                        })
                        .collect::<Result<_, _>>()?;
                    let kind = ElementKind::from_code(code);
                    match kind.node_count() {
                        Some(k) if k != nodes.len() => {
                            return Err(lines.malformed(format!(
                                "element {id} of type {code} lists {} nodes, expected {k}",
                                nodes.len()
                            )))
                        }
                        None => doc.warnings.push(format!(
                            "line {}: element {id} has unsupported type {code}",
                            lines.line
                        )),
                        _ => {}
                    }
                    doc.elements.push(MshElement {
                        id,
                        kind,
                        tags,
                        nodes,
                    });
                }
                lines.close(section)?;
            }
            other => {
                let start = lines.line;
                let end = format!("$End{other}");
                loop {
                    let l = lines.expect(other)?;
                    if l == end {
                        break;
                    }
                }
                doc.warnings
                    .push(format!("line {start}: skipped section ${other}"));
            }
        }
    }
    if !seen_format {
        return Err(MshError::Malformed {
            line: lines.line,
            message: "missing $MeshFormat".into(),
        });
    }
    let known: std::collections::HashSet<usize> = doc.nodes.iter().map(|n| n.id).collect();
    if known.len() != doc.nodes.len() {
        return Err(MshError::Malformed {
            line: 0,
            message: "duplicate node id".into(),
        });
    }
    for e in &doc.elements {
        if let Some(&bad) = e.nodes.iter().find(|id| !known.contains(id)) {
            return Err(MshError::UnresolvedNode {
                element: e.id,
                node: bad,
            });
        }
    }
    Ok(doc)
}

/// Serializes a document as MSH 2.2 ASCII; re-parsing yields the same document
/// apart from warnings and skipped sections.
pub fn write_msh<T: Scalar>(doc: &MshDocument<T>) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "$MeshFormat\n{} {} {}\n$EndMeshFormat",
        doc.version, doc.file_type, doc.data_size
    );
    if !doc.physical_names.is_empty() {
        let _ = writeln!(s, "$PhysicalNames\n{}", doc.physical_names.len());
        for p in &doc.physical_names {
            let _ = writeln!(s, "{} {} \"{}\"", p.dim, p.tag, p.name);
        }
        s.push_str("$EndPhysicalNames\n");
    }
    let _ = writeln!(s, "$Nodes\n{}", doc.nodes.len());
    for n in &doc.nodes {
        let [x, y, z] = n.point.to_f64();
        let _ = writeln!(s, "{} {:?} {:?} {:?}", n.id, x, y, z);
    }
    s.push_str("$EndNodes\n");
    let _ = writeln!(s, "$Elements\n{}", doc.elements.len());
    for e in &doc.elements {
        let _ = write!(s, "{} {} {}", e.id, e.kind.code(), e.tags.len());
        for t in &e.tags {
            let _ = write!(s, " {t}");
        }
        for n in &e.nodes {
            let _ = write!(s, " {n}");
        }
        s.push('\n');
    }
    s.push_str("$EndElements\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    const SINGLE_TET: &str = "$MeshFormat\n2.2 0 8\n$EndMeshFormat\n$Nodes\n4\n1 0 0 0\n2 1 0 0\n3 0 1 0\n4 0 0 1\n$EndNodes\n$Elements\n1\n1 4 2 1 1 1 2 3 4\n$EndElements\n";

    #[test]
    fn minimal_tetrahedron() {
        let doc = parse_msh::<f64>(SINGLE_TET).unwrap();
        assert_eq!(doc.nodes.len(), 4);
        assert_eq!(doc.elements.len(), 1);
        assert_eq!(doc.elements[0].kind, ElementKind::Tetrahedron);
        assert_eq!(doc.elements[0].physical(), 1);
        assert!(doc.warnings.is_empty());
    }

    #[test]
    fn unknown_section_is_skipped() {
        let text = SINGLE_TET.replace(
            "$EndNodes\n",
            "$EndNodes\n$Comments\nanything here\n$EndComments\n",
        );
        let doc = parse_msh::<f64>(&text).unwrap();
        assert_eq!(doc.elements.len(), 1);
        assert_eq!(doc.warnings.len(), 1);
        assert!(doc.warnings[0].contains("$Comments"));
    }

    #[test]
    fn version_4_rejected() {
        let text = SINGLE_TET.replace("2.2 0 8", "4.1 0 8");
        assert_eq!(
            parse_msh::<f64>(&text).unwrap_err(),
            MshError::UnsupportedVersion {
                line: 2,
                version: "4.1".into()
            }
        );
    }

    #[test]
    fn truncated_file() {
        let text = &SINGLE_TET[..SINGLE_TET.find("3 0 1 0").unwrap()];
        assert!(matches!(
            parse_msh::<f64>(text),
            Err(MshError::Truncated { line: 7, .. })
        ));
    }

    #[test]
    fn bad_coordinate_has_line_number() {
        let text = SINGLE_TET.replace("2 1 0 0", "2 1 zero 0");
        assert!(matches!(
            parse_msh::<f64>(&text),
            Err(MshError::Malformed { line: 7, .. })
        ));
    }

    #[test]
    fn missing_node_reference() {
        let text = SINGLE_TET.replace("1 4 2 1 1 1 2 3 4", "1 4 2 1 1 1 2 3 9");
        assert_eq!(
            parse_msh::<f64>(&text).unwrap_err(),
            MshError::UnresolvedNode {
                element: 1,
                node: 9
            }
        );
    }

    #[test]
    fn wrong_node_count() {
        let text = SINGLE_TET.replace("1 4 2 1 1 1 2 3 4", "1 4 2 1 1 1 2 3");
        assert!(matches!(
            parse_msh::<f64>(&text),
            Err(MshError::Malformed { line: 13, .. })
        ));
    }

    #[test]
    fn round_trip() {
        let text = SINGLE_TET.replace(
            "$Nodes",
            "$PhysicalNames\n1\n3 1 \"rock mass\"\n$EndPhysicalNames\n$Nodes",
        );
        let text = text.replace("2 1 0 0", "2 0.1 0.30000000000000004 0");
        let doc = parse_msh::<f64>(&text).unwrap();
        let again = parse_msh::<f64>(&write_msh(&doc)).unwrap();
        assert_eq!(doc, again);
        assert_eq!(again.physical_names[0].name, "rock mass");
    }
}
