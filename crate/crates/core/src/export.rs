//! GraphML, DOT and edge-list writers for the patient and disease networks.

use std::fmt::Write as _;

use crate::cohort::Cohort;
use crate::comorbidity::{DifferentialNetwork, DiseaseGraph};
use crate::patient_network::{Adjacency, PatientGraph};
use crate::scalar::Scalar;

fn xml_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for ch in s.chars() {
        match ch {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

struct GraphMl {
    body: String,
}

impl GraphMl {
    /// `keys`: `(id, domain, name, type)`.
    fn new(keys: &[(&str, &str, &str, &str)]) -> Self {
        let mut body = String::from(
            "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n\
             <graphml xmlns=\"http://graphml.graphdrawing.org/xmlns\">\n",
        );
        for (id, domain, name, ty) in keys {
            let _ = writeln!(
                body,
                "  <key id=\"{id}\" for=\"{domain}\" attr.name=\"{name}\" attr.type=\"{ty}\"/>"
            );
        }
        body.push_str("  <graph edgedefault=\"undirected\">\n");
        GraphMl { body }
    }

    fn node(&mut self, id: &str, data: &[(&str, String)]) {
        let _ = write!(self.body, "    <node id=\"{}\">", xml_escape(id));
        for (k, v) in data {
            let _ = write!(self.body, "<data key=\"{k}\">{}</data>", xml_escape(v));
        }
        self.body.push_str("</node>\n");
    }

    fn edge(&mut self, a: &str, b: &str, data: &[(&str, String)]) {
        let _ = write!(
            self.body,
            "    <edge source=\"{}\" target=\"{}\">",
            xml_escape(a),
            xml_escape(b)
        );
        for (k, v) in data {
            let _ = write!(self.body, "<data key=\"{k}\">{}</data>", xml_escape(v));
        }
        self.body.push_str("</edge>\n");
    }

    fn finish(mut self) -> String {
        self.body.push_str("  </graph>\n</graphml>\n");
        self.body
    }
}

/// Patient graph with patient ids, labels and shared-disease counts.
pub fn patient_graph_graphml(g: &PatientGraph, cohort: &Cohort) -> String {
    let mut x = GraphMl::new(&[
        ("label", "node", "label", "string"),
        ("weight", "edge", "weight", "int"),
    ]);
    for p in &cohort.patients {
        x.node(&p.id, &[("label", p.label.to_string())]);
    }
    for (&(a, b), &w) in &g.edges {
        x.edge(&cohort.patients[a].id, &cohort.patients[b].id, &[("weight", w.to_string())]);
    }
    x.finish()
}

pub fn disease_graph_graphml<T: Scalar>(g: &DiseaseGraph<T>) -> String {
    let mut x = GraphMl::new(&[
        ("prevalence", "node", "prevalence", "double"),
        ("coco", "edge", "coco", "double"),
    ]);
    for (d, w) in &g.nodes {
        x.node(d.as_str(), &[("prevalence", w.to_string())]);
    }
    for ((a, b), w) in &g.edges {
        x.edge(a.as_str(), b.as_str(), &[("coco", w.to_string())]);
    }
    x.finish()
}

pub fn ddn_graphml<T: Scalar>(g: &DifferentialNetwork<T>) -> String {
    let mut x = GraphMl::new(&[
        ("weight", "node", "weight", "double"),
        ("pagerank", "node", "pagerank", "double"),
        ("eweight", "edge", "weight", "double"),
    ]);
    for (d, w) in &g.nodes {
        x.node(
            d.as_str(),
            &[("weight", w.to_string()), ("pagerank", g.rank(d).to_string())],
        );
    }
    for ((a, b), w) in &g.edges {
        x.edge(a.as_str(), b.as_str(), &[("eweight", w.to_string())]);
    }
    x.finish()
}

/// Undirected DOT with edge widths proportional to weight.
pub fn ddn_dot<T: Scalar>(g: &DifferentialNetwork<T>) -> String {
    let max = g
        .edges
        .values()
        .fold(0.0f64, |m, w| m.max(w.to_f64_lossy()))
        .max(f64::MIN_POSITIVE);
    let mut s = String::from("graph ddn {\n");
    for (d, w) in &g.nodes {
        let _ = writeln!(s, "  \"{d}\" [label=\"{d}\\n{:.3}\"];", w.to_f64_lossy());
    }
    for ((a, b), w) in &g.edges {
        let w = w.to_f64_lossy();
        let _ = writeln!(s, "  \"{a}\" -- \"{b}\" [penwidth={:.2}];", 0.5 + 3.0 * w / max);
    }
    s.push_str("}\n");
    s
}

pub fn disease_graph_dot<T: Scalar>(g: &DiseaseGraph<T>) -> String {
    let mut s = String::from("graph comorbidity {\n");
    for (d, w) in &g.nodes {
        let _ = writeln!(s, "  \"{d}\" [label=\"{d}\\n{:.3}\"];", w.to_f64_lossy());
    }
    for ((a, b), w) in &g.edges {
        let _ = writeln!(s, "  \"{a}\" -- \"{b}\" [label=\"{:.3}\"];", w.to_f64_lossy());
    }
    s.push_str("}\n");
    s
}

/// Adjacency entries as `row col` lines (0-based, self-loops included),
/// preceded by a `n nnz` header.
pub fn adjacency_coo(adj: &Adjacency) -> String {
    let mut s = format!("{} {}\n", adj.n(), adj.nnz());
    for (_, a, b) in adj.entries() {
        let _ = writeln!(s, "{a} {b}");
    }
    s
}
