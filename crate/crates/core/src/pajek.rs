//! Reader and writer for the subset of the Pajek `.net` format used by
//! multi-relational network datasets.
//!
//! Supported: `*Network`, `*Vertices n`, `*Edges` and `*Arcs` sections with
//! optional relation headers (`*Arcs :2 "advice"`), line-level relation
//! prefixes (`2: 1 5 1`), `%` comments, quoted labels, optional weights and
//! CRLF line endings. Keywords are case-insensitive.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::graph::{GraphEnsemble, Gso, NodePartition};

#[derive(Debug, Clone, PartialEq)]
pub struct Link {
    /// 1-based endpoints as written in the file.
    pub from: usize,
    pub to: usize,
    pub weight: f64,
    pub directed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Relation {
    /// Relation number; 0 when the file does not number its relations.
    pub id: u32,
    pub label: Option<String>,
    pub links: Vec<Link>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PajekDocument {
    pub name: Option<String>,
    pub n: usize,
    pub labels: Vec<Option<String>>,
    /// Sorted by relation number.
    pub relations: Vec<Relation>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IngestOptions {
    /// Replace each weight by `max(w_ij, w_ji)`.
    pub symmetrize: bool,
    /// Map every nonzero weight to 1.
    pub binarize: bool,
}

impl Default for IngestOptions {
    fn default() -> Self {
        IngestOptions {
            symmetrize: true,
            binarize: true,
        }
    }
}

#[derive(Clone, Copy)]
enum Section {
    Preamble,
    Vertices,
    Links { directed: bool, relation: u32 },
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        msg: msg.into(),
    }
}

/// Splits a line into whitespace-separated tokens, keeping quoted strings
/// (without their quotes) as single tokens.
fn tokenize(line: &str, lineno: usize) -> Result<Vec<String>> {
    let mut out = Vec::new();
    let mut chars = line.chars().peekable();
    while let Some(&c) = chars.peek() {
        if c.is_whitespace() {
            chars.next();
        } else if c == '"' {
            chars.next();
            let mut tok = String::new();
            loop {
                match chars.next() {
                    Some('"') => break,
                    Some(ch) => tok.push(ch),
                    None => return Err(parse_err(lineno, "unterminated quoted string")),
                }
            }
            out.push(tok);
        } else {
            let mut tok = String::new();
            while let Some(&ch) = chars.peek() {
                if ch.is_whitespace() {
                    break;
                }
                tok.push(ch);
                chars.next();
            }
            out.push(tok);
        }
    }
    Ok(out)
}

fn parse_relation_tag(tok: &str) -> Option<u32> {
    tok.strip_prefix(':').and_then(|t| t.parse().ok())
}

pub fn parse_pajek(text: &str) -> Result<PajekDocument> {
    let mut doc = PajekDocument::default();
    let mut relations: BTreeMap<u32, Relation> = BTreeMap::new();
    let mut section = Section::Preamble;
    let mut seen_vertices = false;

    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.trim_start_matches('\u{feff}').trim();
        if line.is_empty() || line.starts_with('%') {
            continue;
        }
        if line.starts_with('*') {
            let (keyword, rest) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
            let rest = rest.trim();
            match keyword.to_ascii_lowercase().as_str() {
                "*network" => {
                    let name = tokenize(rest, lineno)?.join(" ");
                    doc.name = (!name.is_empty()).then_some(name);
                    section = Section::Preamble;
                }
                "*vertices" => {
                    if seen_vertices {
                        return Err(parse_err(lineno, "duplicate *Vertices section"));
                    }
                    let count = rest
                        .split_whitespace()
                        .next()
                        .ok_or_else(|| parse_err(lineno, "*Vertices needs a count"))?;
                    doc.n = count.parse().map_err(|_| {
                        parse_err(lineno, format!("invalid vertex count '{count}'"))
                    })?;
                    doc.labels = vec![None; doc.n];
                    seen_vertices = true;
                    section = Section::Vertices;
                }
                kw @ ("*edges" | "*arcs") => {
                    if !seen_vertices {
                        return Err(parse_err(lineno, format!("{keyword} before *Vertices")));
                    }
                    let toks = tokenize(rest, lineno)?;
                    let mut relation = 0;
                    let mut label = None;
                    let mut it = toks.into_iter();
                    if let Some(first) = it.next() {
                        match parse_relation_tag(&first) {
                            Some(id) => {
                                relation = id;
                                label = it.next();
                            }
                            None if first.starts_with(':') => {
                                return Err(parse_err(
                                    lineno,
                                    format!("invalid relation number '{first}'"),
                                ));
                            }
                            None => label = Some(first),
                        }
                    }
                    let entry = relations.entry(relation).or_insert_with(|| Relation {
                        id: relation,
                        label: None,
                        links: Vec::new(),
                    });
                    if entry.label.is_none() {
                        entry.label = label;
                    }
                    section = Section::Links {
                        directed: kw == "*arcs",
                        relation,
                    };
                }
                _ => {
                    return Err(parse_err(
                        lineno,
                        format!("unsupported or malformed header '{keyword}'"),
                    ))
                }
            }
            continue;
        }

        let toks = tokenize(line, lineno)?;
        match section {
            Section::Preamble => return Err(parse_err(lineno, "data line outside any section")),
            Section::Vertices => {
                let id: usize = toks[0].parse().map_err(|_| {
                    parse_err(lineno, format!("invalid vertex index '{}'", toks[0]))
                })?;
                if id == 0 || id > doc.n {
                    return Err(parse_err(
                        lineno,
                        format!("vertex index {id} out of range 1..{}", doc.n),
                    ));
                }
                doc.labels[id - 1] = toks.get(1).cloned();
            }
            Section::Links { directed, relation } => {
                let mut rel = relation;
                let mut rest = &toks[..];
                if let Some(tag) = toks[0].strip_suffix(':') {
                    rel = tag.parse().map_err(|_| {
                        parse_err(lineno, format!("invalid relation prefix '{}'", toks[0]))
                    })?;
                    rest = &toks[1..];
                }
                if rest.len() < 2 {
                    return Err(parse_err(lineno, "link needs two endpoints"));
                }
                let mut ends = [0usize; 2];
                for (slot, tok) in ends.iter_mut().zip(rest) {
                    *slot = tok
                        .parse()
                        .map_err(|_| parse_err(lineno, format!("invalid vertex index '{tok}'")))?;
                    if *slot == 0 || *slot > doc.n {
                        return Err(parse_err(
                            lineno,
                            format!("vertex index {slot} out of range 1..{}", doc.n),
                        ));
                    }
                }
                let weight = match rest.get(2) {
                    Some(w) => {
                        let w: f64 = w
                            .parse()
                            .map_err(|_| parse_err(lineno, format!("non-numeric weight '{w}'")))?;
                        if !w.is_finite() {
                            return Err(parse_err(lineno, "weight must be finite"));
                        }
                        w
                    }
                    None => 1.0,
                };
                relations
                    .entry(rel)
                    .or_insert_with(|| Relation {
                        id: rel,
                        label: None,
                        links: Vec::new(),
                    })
                    .links
                    .push(Link {
                        from: ends[0],
                        to: ends[1],
                        weight,
                        directed,
                    });
            }
        }
    }
    if !seen_vertices {
        return Err(parse_err(
            text.lines().count().max(1),
            "missing *Vertices section",
        ));
    }
    doc.relations = relations.into_values().collect();
    Ok(doc)
}

fn quote(s: &str) -> String {
    format!("\"{}\"", s.replace('"', "'"))
}

/// Writes `doc` back in Pajek syntax; parsing the output reproduces `doc`.
pub fn to_pajek_string(doc: &PajekDocument) -> String {
    let mut out = String::new();
    if let Some(name) = &doc.name {
        let _ = writeln!(out, "*Network {}", quote(name));
    }
    let _ = writeln!(out, "*Vertices {}", doc.n);
    for (i, label) in doc.labels.iter().enumerate() {
        if let Some(l) = label {
            let _ = writeln!(out, "{} {}", i + 1, quote(l));
        }
    }
    for rel in &doc.relations {
        for directed in [false, true] {
            let links: Vec<&Link> = rel
                .links
                .iter()
                .filter(|l| l.directed == directed)
                .collect();
            // An undirected empty relation still gets a header so it survives a round trip.
            if links.is_empty() && (directed || rel.links.iter().any(|l| l.directed)) {
                continue;
            }
            let mut header = String::from(if directed { "*Arcs" } else { "*Edges" });
            if rel.id != 0 {
                let _ = write!(header, " :{}", rel.id);
            }
            if let Some(label) = &rel.label {
                let _ = write!(header, " {}", quote(label));
            }
            let _ = writeln!(out, "{header}");
            for l in links {
                let _ = writeln!(out, "{} {} {}", l.from, l.to, l.weight);
            }
        }
    }
    out
}

fn relation_matrix(n: usize, rel: &Relation, opts: IngestOptions) -> Result<DMatrix<f64>> {
    let mut m = DMatrix::zeros(n, n);
    let mut loops = 0;
    for l in &rel.links {
        let (i, j) = (l.from - 1, l.to - 1);
        if i == j {
            loops += 1;
            continue;
        }
        m[(i, j)] += l.weight;
        if !l.directed {
            m[(j, i)] += l.weight;
        }
    }
    if loops > 0 {
        log::warn!("relation {}: dropped {loops} self-loop(s)", rel.id);
    }
    if opts.symmetrize {
        m = m.zip_map(&m.transpose(), f64::max);
    }
    if opts.binarize {
        m.apply(|w| *w = if *w != 0.0 { 1.0 } else { 0.0 });
    }
    Gso::new(m.clone()).map_err(|e| Error::Ingest(format!("relation {}: {e}", rel.id)))?;
    Ok(m)
}

/// One GSO per relation, all nodes observed.
pub fn to_ensemble(doc: &PajekDocument, opts: IngestOptions) -> Result<GraphEnsemble> {
    if doc.relations.is_empty() {
        return Err(Error::Ingest(
            "document has no *Edges or *Arcs section".into(),
        ));
    }
    let graphs = doc
        .relations
        .iter()
        .map(|rel| relation_matrix(doc.n, rel, opts).and_then(Gso::new))
        .collect::<Result<Vec<_>>>()?;
    GraphEnsemble::new(graphs, NodePartition::all_observed(doc.n))
}

/// Combines single-relation documents (one file per layer) into an ensemble.
pub fn ensemble_from_documents(
    docs: &[PajekDocument],
    opts: IngestOptions,
) -> Result<GraphEnsemble> {
    let Some(first) = docs.first() else {
        return Err(Error::Ingest("no documents given".into()));
    };
    let mut graphs = Vec::new();
    for (i, doc) in docs.iter().enumerate() {
        if doc.n != first.n {
            return Err(Error::Ingest(format!(
                "document {i} has {} vertices, expected {}",
                doc.n, first.n
            )));
        }
        graphs.extend(to_ensemble(doc, opts)?.graphs().iter().cloned());
    }
    GraphEnsemble::new(graphs, NodePartition::all_observed(first.n))
}

/// Manifest listing one Pajek file per layer; relative paths resolve
/// against the manifest's directory.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub files: Vec<PathBuf>,
    #[serde(default = "yes")]
    pub symmetrize: bool,
    #[serde(default = "yes")]
    pub binarize: bool,
}

fn yes() -> bool {
    true
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Loads a `.net` file or a `.toml` manifest. For manifests the options
/// stored in the file take precedence over `opts`.
pub fn load_dataset(path: &Path, opts: IngestOptions) -> Result<GraphEnsemble> {
    let text = read(path)?;
    if path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("toml"))
    {
        let manifest: Manifest =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let dir = path.parent().unwrap_or_else(|| Path::new("."));
        let docs = manifest
            .files
            .iter()
            .map(|f| {
                let p = dir.join(f);
                parse_pajek(&read(&p)?).map_err(|e| Error::Ingest(format!("{}: {e}", p.display())))
            })
            .collect::<Result<Vec<_>>>()?;
        let opts = IngestOptions {
            symmetrize: manifest.symmetrize,
            binarize: manifest.binarize,
        };
        ensemble_from_documents(&docs, opts)
    } else {
        to_ensemble(&parse_pajek(&text)?, opts)
    }
}

/// Pajek document with one undirected relation per graph.
pub fn from_ensemble(ens: &GraphEnsemble, name: Option<&str>) -> PajekDocument {
    let n = ens.n();
    let relations = ens
        .graphs()
        .iter()
        .enumerate()
        .map(|(k, g)| {
            let w = g.weights();
            let links = (0..n)
                .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
                .filter(|&(i, j)| w[(i, j)] != 0.0)
                .map(|(i, j)| Link {
                    from: i + 1,
                    to: j + 1,
                    weight: w[(i, j)],
                    directed: false,
                })
                .collect();
            Relation {
                id: k as u32 + 1,
                label: Some(format!("layer{}", k + 1)),
                links,
            }
        })
        .collect();
    PajekDocument {
        name: name.map(str::to_string),
        n,
        labels: (1..=n).map(|i| Some(format!("v{i}"))).collect(),
        relations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_document() {
        let doc = parse_pajek("*Vertices 2\n1 \"a\"\n2 \"b\"\n*Edges\n1 2").unwrap();
        assert_eq!(doc.n, 2);
        assert_eq!(doc.labels, vec![Some("a".into()), Some("b".into())]);
        assert_eq!(doc.relations.len(), 1);
        assert_eq!(
            doc.relations[0].links,
            vec![Link {
                from: 1,
                to: 2,
                weight: 1.0,
                directed: false
            }]
        );
    }

    #[test]
    fn empty_edge_section() {
        let doc = parse_pajek("*vertices 3\n*EDGES\n").unwrap();
        let ens = to_ensemble(&doc, IngestOptions::default()).unwrap();
        assert_eq!(ens.graphs()[0].edge_count(), 0);
    }

    #[test]
    fn relations_comments_and_crlf() {
        let text = "% header\r\n*Network \"Class\"\r\n*Vertices 3\r\n1 \"first one\" 0.1 0.2\r\n\
                    *Arcs :1 \"likes\"\r\n1 2 3\r\n2: 2 3\r\n*Edges :2 \"works with\"\r\n% note\r\n1 3\r\n";
        let doc = parse_pajek(text).unwrap();
        assert_eq!(doc.name.as_deref(), Some("Class"));
        assert_eq!(doc.labels[0].as_deref(), Some("first one"));
        assert_eq!(doc.relations.len(), 2);
        assert_eq!(doc.relations[0].label.as_deref(), Some("likes"));
        assert_eq!(doc.relations[0].links.len(), 1);
        assert_eq!(doc.relations[1].links.len(), 2);
        assert!(doc.relations[1].links[0].directed);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let cases = [
            ("*Vertices x\n", 1),
            ("*Vertices 2\n*Edges\n1 3\n", 3),
            ("*Vertices 2\n\n*Edges\n1 2 heavy\n", 4),
            ("*Vertices 2\n*Matrix\n", 2),
            ("*Edges\n1 2\n", 1),
            ("*Vertices 2\n1 \"open\n", 2),
        ];
        for (text, line) in cases {
            match parse_pajek(text) {
                Err(Error::Parse { line: got, .. }) => assert_eq!(got, line, "{text:?}"),
                other => panic!("{text:?}: {other:?}"),
            }
        }
    }

    #[test]
    fn symmetrize_binarize_and_loops() {
        let doc = parse_pajek("*Vertices 3\n*Arcs\n1 2 3\n2 2 1\n2 3 0.5\n3 2 0.5\n").unwrap();
        let ens = to_ensemble(&doc, IngestOptions::default()).unwrap();
        let w = ens.graphs()[0].weights();
        assert_eq!(
            (w[(0, 1)], w[(1, 0)], w[(1, 1)], w[(1, 2)]),
            (1.0, 1.0, 0.0, 1.0)
        );

        let weighted = to_ensemble(
            &doc,
            IngestOptions {
                symmetrize: true,
                binarize: false,
            },
        )
        .unwrap();
        assert_eq!(weighted.graphs()[0].weights()[(1, 0)], 3.0);
        assert!(to_ensemble(
            &doc,
            IngestOptions {
                symmetrize: false,
                binarize: true
            }
        )
        .is_err());
    }

    #[test]
    fn multi_edges_are_summed() {
        let doc = parse_pajek("*Vertices 2\n*Edges\n1 2 0.5\n2 1 0.25\n").unwrap();
        let ens = to_ensemble(
            &doc,
            IngestOptions {
                symmetrize: true,
                binarize: false,
            },
        )
        .unwrap();
        assert_eq!(ens.graphs()[0].weights()[(0, 1)], 0.75);
    }

    #[test]
    fn serialize_round_trip() {
        let text = "*Network net\n*Vertices 4\n1 \"a\"\n3 \"c\"\n*Edges :1 \"x\"\n1 2 2.5\n\
                    *Arcs :1\n3 4 1\n*Edges :3\n";
        let doc = parse_pajek(text).unwrap();
        assert_eq!(parse_pajek(&to_pajek_string(&doc)).unwrap(), doc);
    }

    #[test]
    fn documents_must_share_vertex_count() {
        let a = parse_pajek("*Vertices 3\n*Edges\n1 2\n").unwrap();
        let b = parse_pajek("*Vertices 4\n*Edges\n1 2\n").unwrap();
        assert!(matches!(
            ensemble_from_documents(&[a.clone(), b], IngestOptions::default()),
            Err(Error::Ingest(_))
        ));
        assert_eq!(
            ensemble_from_documents(&[a.clone(), a], IngestOptions::default())
                .unwrap()
                .k(),
            2
        );
    }
}
