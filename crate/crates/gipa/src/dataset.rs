//! On-disk dataset format: a JSON manifest plus four headerless TSV files
//! (nodes, edges, labels, split) in one directory.
//!
//! Node ids are dense and ascending; every malformed record is rejected
//! with the file name and 1-based line number. Floats print in shortest
//! round-trip form, so write-then-read is bit-exact.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{GipaError, Result};
use crate::graph::{build_graph, Graph, Split};
use crate::matrix::Matrix;

pub const DATASET_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub n_nodes: usize,
    /// Edge records in `edges.tsv` (before any undirected duplication).
    pub n_edges: usize,
    pub num_node_features: usize,
    pub num_edge_features: usize,
    pub num_labels: usize,
    /// When set, each edge record is materialized in both directions.
    pub undirected: bool,
}

/// Parsed dataset files, structurally validated but not yet in CSR form.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetFiles {
    pub manifest: Manifest,
    pub node_feat: Matrix,
    pub edges: Vec<(usize, usize)>,
    pub edge_feat: Matrix,
    pub labels: Matrix,
    pub split: Vec<Split>,
}

/// Write `bytes` to a temp file in the target directory, then rename over
/// `path`; readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    std::fs::create_dir_all(dir)?;
    let mut tmp = path.to_path_buf();
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".to_string());
    tmp.set_file_name(format!(".{name}.tmp"));
    {
        let mut f = File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn fmt_floats(out: &mut String, values: &[f64]) {
    for v in values {
        out.push('\t');
        out.push_str(&v.to_string());
    }
}

/// Write the four TSV files and the manifest into `dir`.
pub fn write_dataset(d: &DatasetFiles, dir: &Path) -> Result<()> {
    let m = &d.manifest;
    if m.version != DATASET_FORMAT_VERSION {
        return Err(GipaError::Config(format!(
            "dataset format version {} unsupported",
            m.version
        )));
    }
    std::fs::create_dir_all(dir)?;

    let mut nodes = String::new();
    for i in 0..d.node_feat.rows {
        nodes.push_str(&i.to_string());
        fmt_floats(&mut nodes, d.node_feat.row(i));
        nodes.push('\n');
    }
    let mut edges = String::new();
    for (k, &(u, v)) in d.edges.iter().enumerate() {
        edges.push_str(&format!("{u}\t{v}"));
        fmt_floats(&mut edges, d.edge_feat.row(k));
        edges.push('\n');
    }
    let mut labels = String::new();
    for i in 0..d.labels.rows {
        labels.push_str(&i.to_string());
        fmt_floats(&mut labels, d.labels.row(i));
        labels.push('\n');
    }
    let mut split = String::new();
    for (i, tag) in d.split.iter().enumerate() {
        split.push_str(&format!("{i}\t{tag}\n"));
    }

    write_atomic(&dir.join("manifest.json"), serde_json::to_string_pretty(m)?.as_bytes())?;
    write_atomic(&dir.join("nodes.tsv"), nodes.as_bytes())?;
    write_atomic(&dir.join("edges.tsv"), edges.as_bytes())?;
    write_atomic(&dir.join("labels.tsv"), labels.as_bytes())?;
    write_atomic(&dir.join("split.tsv"), split.as_bytes())?;
    Ok(())
}

struct LineParser {
    file: &'static str,
    line_no: usize,
}

impl LineParser {
    fn err(&self, detail: impl Into<String>) -> GipaError {
        GipaError::ingest(self.file, self.line_no, detail)
    }

    fn parse_f64(&self, tok: &str) -> Result<f64> {
        tok.parse::<f64>()
            .map_err(|_| self.err(format!("bad float {tok:?}")))
    }

    fn parse_usize(&self, tok: &str) -> Result<usize> {
        tok.parse::<usize>()
            .map_err(|_| self.err(format!("bad id {tok:?}")))
    }
}

fn read_lines(dir: &Path, file: &'static str) -> Result<impl Iterator<Item = std::io::Result<String>>> {
    let path = dir.join(file);
    let f = File::open(&path)
        .map_err(|e| GipaError::ingest(file, 0, format!("cannot open {}: {e}", path.display())))?;
    Ok(BufReader::new(f).lines())
}

/// Each line carries a dense ascending id and `width` float columns.
fn read_id_rows(dir: &Path, file: &'static str, n_rows: usize, width: usize) -> Result<Matrix> {
    let mut mat = Matrix::zeros(n_rows, width);
    let mut count = 0usize;
    for (idx, line) in read_lines(dir, file)?.enumerate() {
        let p = LineParser { file, line_no: idx + 1 };
        let line = line.map_err(|e| p.err(e.to_string()))?;
        if line.is_empty() {
            continue;
        }
        let toks: Vec<&str> = line.split('\t').collect();
        if toks.len() != width + 1 {
            return Err(p.err(format!("expected {} columns, got {}", width + 1, toks.len())));
        }
        let id = p.parse_usize(toks[0])?;
        if id != count {
            return Err(p.err(format!("id {} out of order (expected {})", id, count)));
        }
        if count >= n_rows {
            return Err(p.err(format!("more than {n_rows} rows")));
        }
        for (j, tok) in toks[1..].iter().enumerate() {
            mat.set(count, j, p.parse_f64(tok)?);
        }
        count += 1;
    }
    if count != n_rows {
        return Err(GipaError::ingest(
            file,
            count,
            format!("{count} rows, manifest says {n_rows}"),
        ));
    }
    Ok(mat)
}

/// Parse and structurally validate the dataset directory.
pub fn read_dataset(dir: &Path) -> Result<DatasetFiles> {
    let manifest_path = dir.join("manifest.json");
    let text = std::fs::read_to_string(&manifest_path).map_err(|e| {
        GipaError::ingest("manifest.json", 0, format!("cannot open {}: {e}", manifest_path.display()))
    })?;
    let manifest: Manifest = serde_json::from_str(&text)?;
    if manifest.version != DATASET_FORMAT_VERSION {
        return Err(GipaError::ingest(
            "manifest.json",
            0,
            format!("format version {} unsupported", manifest.version),
        ));
    }

    let node_feat = read_id_rows(dir, "nodes.tsv", manifest.n_nodes, manifest.num_node_features)?;

    let mut edges = Vec::with_capacity(manifest.n_edges);
    let mut edge_feat = Matrix::zeros(manifest.n_edges, manifest.num_edge_features);
    let mut count = 0usize;
    for (idx, line) in read_lines(dir, "edges.tsv")?.enumerate() {
        let p = LineParser { file: "edges.tsv", line_no: idx + 1 };
        let line = line.map_err(|e| p.err(e.to_string()))?;
        if line.is_empty() {
            continue;
        }
        let toks: Vec<&str> = line.split('\t').collect();
        if toks.len() != manifest.num_edge_features + 2 {
            return Err(p.err(format!(
                "expected {} columns, got {}",
                manifest.num_edge_features + 2,
                toks.len()
            )));
        }
        if count >= manifest.n_edges {
            return Err(p.err(format!("more than {} edges", manifest.n_edges)));
        }
        let u = p.parse_usize(toks[0])?;
        let v = p.parse_usize(toks[1])?;
        if u >= manifest.n_nodes || v >= manifest.n_nodes {
            return Err(p.err(format!(
                "edge ({u}, {v}) out of range for {} nodes",
                manifest.n_nodes
            )));
        }
        edges.push((u, v));
        for (j, tok) in toks[2..].iter().enumerate() {
            edge_feat.set(count, j, p.parse_f64(tok)?);
        }
        count += 1;
    }
    if count != manifest.n_edges {
        return Err(GipaError::ingest(
            "edges.tsv",
            count,
            format!("{count} edges, manifest says {}", manifest.n_edges),
        ));
    }

    let labels = read_id_rows(dir, "labels.tsv", manifest.n_nodes, manifest.num_labels)?;
    for i in 0..labels.rows {
        for j in 0..labels.cols {
            let v = labels.get(i, j);
            if v != 0.0 && v != 1.0 {
                return Err(GipaError::ingest(
                    "labels.tsv",
                    i + 1,
                    format!("label value {v} is not binary"),
                ));
            }
        }
    }

    let mut split = Vec::with_capacity(manifest.n_nodes);
    for (idx, line) in read_lines(dir, "split.tsv")?.enumerate() {
        let p = LineParser { file: "split.tsv", line_no: idx + 1 };
        let line = line.map_err(|e| p.err(e.to_string()))?;
        if line.is_empty() {
            continue;
        }
        let toks: Vec<&str> = line.split('\t').collect();
        if toks.len() != 2 {
            return Err(p.err(format!("expected 2 columns, got {}", toks.len())));
        }
        let id = p.parse_usize(toks[0])?;
        if id != split.len() {
            return Err(p.err(format!("id {} out of order (expected {})", id, split.len())));
        }
        if split.len() >= manifest.n_nodes {
            return Err(p.err(format!("more than {} rows", manifest.n_nodes)));
        }
        split.push(toks[1].parse::<Split>().map_err(|e| p.err(e))?);
    }
    if split.len() != manifest.n_nodes {
        return Err(GipaError::ingest(
            "split.tsv",
            split.len(),
            format!("{} rows, manifest says {}", split.len(), manifest.n_nodes),
        ));
    }

    Ok(DatasetFiles {
        manifest,
        node_feat,
        edges,
        edge_feat,
        labels,
        split,
    })
}

/// Read a dataset directory into CSR form.
pub fn load_dataset(dir: &Path) -> Result<Graph> {
    let d = read_dataset(dir)?;
    build_graph(
        &d.edges,
        &d.edge_feat,
        d.node_feat,
        d.labels,
        d.split,
        d.manifest.undirected,
    )
}

/// Write a CSR graph back out as a (directed) dataset directory.
pub fn save_dataset(g: &Graph, dir: &Path) -> Result<()> {
    let dst = g.dst_ids();
    let edges: Vec<(usize, usize)> = (0..g.n_edges()).map(|k| (g.src_ids[k], dst[k])).collect();
    let files = DatasetFiles {
        manifest: Manifest {
            version: DATASET_FORMAT_VERSION,
            n_nodes: g.n_nodes,
            n_edges: edges.len(),
            num_node_features: g.node_feat.cols,
            num_edge_features: g.edge_feat.cols,
            num_labels: g.labels.cols,
            undirected: false,
        },
        node_feat: g.node_feat.clone(),
        edges,
        edge_feat: g.edge_feat.clone(),
        labels: g.labels.clone(),
        split: g.split.clone(),
    };
    write_dataset(&files, dir)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_dir() -> std::path::PathBuf {
        Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/toy")
    }

    #[test]
    fn toy_fixture_loads_with_known_structure() {
        let g = load_dataset(&toy_dir()).unwrap();
        assert_eq!(g.n_nodes, 3);
        assert_eq!(g.row_offsets, vec![0, 0, 2, 2]);
        assert_eq!(g.src_ids, vec![0, 2]);
        assert_eq!(g.edge_feat.row(0), &[0.25]);
        assert_eq!(g.edge_feat.row(1), &[-4.0]);
        assert_eq!(g.node_feat.row(1), &[0.0, 3.25]);
        assert_eq!(g.labels.row(2), &[1.0, 1.0]);
        assert_eq!(g.split, vec![Split::Train, Split::Valid, Split::Test]);
    }

    #[test]
    fn save_then_load_round_trips_bit_identically() {
        let g = load_dataset(&toy_dir()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_dataset(&g, dir.path()).unwrap();
        let g2 = load_dataset(dir.path()).unwrap();
        assert_eq!(g2, g);
    }

    #[test]
    fn nan_features_survive_the_text_round_trip() {
        let g = load_dataset(&toy_dir()).unwrap();
        let mut g = g;
        g.node_feat.set(0, 1, f64::NAN);
        g.node_feat.set(1, 0, 0.1 + 0.2); // not representable exactly
        let dir = tempfile::tempdir().unwrap();
        save_dataset(&g, dir.path()).unwrap();
        let g2 = load_dataset(dir.path()).unwrap();
        assert!(g2.node_feat.get(0, 1).is_nan());
        assert_eq!(g2.node_feat.get(1, 0).to_bits(), (0.1_f64 + 0.2).to_bits());
    }

    fn copy_toy(dir: &Path) {
        for f in ["manifest.json", "nodes.tsv", "edges.tsv", "labels.tsv", "split.tsv"] {
            std::fs::copy(toy_dir().join(f), dir.join(f)).unwrap();
        }
    }

    fn expect_located(dir: &Path, file: &str) {
        match load_dataset(dir) {
            Err(GipaError::Ingest { file: f, .. }) => assert_eq!(f, file),
            other => panic!("expected ingest error in {file}, got {other:?}"),
        }
    }

    #[test]
    fn malformed_fixtures_fail_with_located_errors() {
        let cases: Vec<(&str, Box<dyn Fn(&Path)>)> = vec![
            ("nodes.tsv", Box::new(|d: &Path| {
                // manifest says 4 nodes, files carry 3; surfaces at the node file
                let text = std::fs::read_to_string(d.join("manifest.json")).unwrap();
                std::fs::write(d.join("manifest.json"), text.replace("\"n_nodes\": 3", "\"n_nodes\": 4")).unwrap();
            })),
            ("nodes.tsv", Box::new(|d: &Path| {
                // ragged row: one feature column missing
                std::fs::write(d.join("nodes.tsv"), "0\t1.5\t-2\n1\t0\n2\t-1\t0.5\n").unwrap();
            })),
            ("nodes.tsv", Box::new(|d: &Path| {
                // id gap
                std::fs::write(d.join("nodes.tsv"), "0\t1.5\t-2\n2\t0\t3.25\n1\t-1\t0.5\n").unwrap();
            })),
            ("edges.tsv", Box::new(|d: &Path| {
                // endpoint out of range
                std::fs::write(d.join("edges.tsv"), "0\t9\t0.25\n2\t1\t-4\n").unwrap();
            })),
            ("edges.tsv", Box::new(|d: &Path| {
                // unparseable feature
                std::fs::write(d.join("edges.tsv"), "0\t1\tabc\n2\t1\t-4\n").unwrap();
            })),
            ("labels.tsv", Box::new(|d: &Path| {
                // non-binary label
                std::fs::write(d.join("labels.tsv"), "0\t1\t0\n1\t0\t2\n2\t1\t1\n").unwrap();
            })),
            ("split.tsv", Box::new(|d: &Path| {
                // unknown tag
                std::fs::write(d.join("split.tsv"), "0\ttrain\n1\tvalidation\n2\ttest\n").unwrap();
            })),
            ("split.tsv", Box::new(|d: &Path| {
                // missing row
                std::fs::write(d.join("split.tsv"), "0\ttrain\n1\tvalid\n").unwrap();
            })),
        ];
        // the nodes.tsv id-gap line fails at its first out-of-order id
        for (file, corrupt) in cases {
            let dir = tempfile::tempdir().unwrap();
            copy_toy(dir.path());
            corrupt(dir.path());
            expect_located(dir.path(), file);
        }
    }

    #[test]
    fn undirected_manifest_duplicates_edges() {
        let dir = tempfile::tempdir().unwrap();
        copy_toy(dir.path());
        let text = std::fs::read_to_string(dir.path().join("manifest.json")).unwrap();
        std::fs::write(
            dir.path().join("manifest.json"),
            text.replace("\"undirected\": false", "\"undirected\": true"),
        )
        .unwrap();
        let g = load_dataset(dir.path()).unwrap();
        assert_eq!(g.n_edges(), 4);
        assert_eq!(g.row_offsets, vec![0, 1, 3, 4]);
    }

    #[test]
    fn atomic_write_replaces_content() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.json");
        write_atomic(&path, b"first").unwrap();
        write_atomic(&path, b"second").unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), b"second");
        // no temp litter
        let entries: Vec<_> = std::fs::read_dir(dir.path()).unwrap().collect();
        assert_eq!(entries.len(), 1);
    }
}
