//! SVG and Graphviz DOT renderings of a [`StyledGraph`].

use std::fmt::Write;

use crate::layout::{EdgeStyle, NodeStyle, StyledEdge, StyledGraph};
use crate::node::NodeId;

const NODE_W: f64 = 110.0;
const NODE_H: f64 = 34.0;
const HEAD_FILL: &str = "#f2c94c";
const TAIL_FILL: &str = "#d64545";
const BLOCK_FILL: &str = "#e8eef7";
const GRAY: &str = "#9e9e9e";
const RED: &str = "#d32f2f";

fn node_fill(style: NodeStyle) -> &'static str {
    match style {
        NodeStyle::HeadYellow => HEAD_FILL,
        NodeStyle::TailRed => TAIL_FILL,
        NodeStyle::BlockDefault => BLOCK_FILL,
    }
}

fn node_class(id: NodeId) -> &'static str {
    match id {
        NodeId::Head => "head",
        NodeId::Tail => "tail",
        NodeId::Block(_) => "block",
    }
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn edge_stroke(e: &StyledEdge) -> (&'static str, f64, f64) {
    match e.style {
        EdgeStyle::Gray => (GRAY, 1.0, 1.0),
        EdgeStyle::Red => {
            let i = e.intensity.unwrap_or(1.0);
            (RED, 0.35 + 0.65 * i, 1.5 + 2.5 * i)
        }
    }
}

/// Nodes are rounded rectangles labelled with their address, edges are
/// straight segments labelled with their weight (self loops are small arcs).
pub fn to_svg(graph: &StyledGraph) -> String {
    let (cw, rh) = (graph.col_width, graph.row_height);
    let (w, h) = (graph.canvas.width, graph.canvas.height);
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="monospace" font-size="11">"#
    );
    let title = graph
        .function_name
        .clone()
        .unwrap_or_else(|| format!("function {}", graph.function_index));
    let _ = writeln!(
        out,
        "<title>{} (threshold {})</title>",
        xml_escape(&title),
        graph.threshold
    );
    let _ = writeln!(
        out,
        r#"<g transform="translate({},{})">"#,
        cw / 2.0,
        rh / 2.0
    );

    let pos = |id: NodeId| {
        graph
            .nodes
            .binary_search_by_key(&id, |n| n.layout.id)
            .map(|i| (graph.nodes[i].layout.x, graph.nodes[i].layout.y))
            .unwrap_or((0.0, 0.0))
    };
    for e in &graph.edges {
        let ((x1, y1), (x2, y2)) = (pos(e.from), pos(e.to));
        let (color, opacity, width) = edge_stroke(e);
        let class = match e.style {
            EdgeStyle::Gray => "edge gray",
            EdgeStyle::Red => "edge red",
        };
        let (lx, ly) = if e.from == e.to {
            let (x0, y0) = (x1 + NODE_W / 2.0, y1);
            let _ = writeln!(
                out,
                r#"<path class="{class}" d="M{x0:.1},{:.1} C{:.1},{:.1} {:.1},{:.1} {x0:.1},{:.1}" fill="none" stroke="{color}" stroke-opacity="{opacity:.3}" stroke-width="{width:.2}"/>"#,
                y0 - 8.0,
                x0 + 30.0,
                y0 - 20.0,
                x0 + 30.0,
                y0 + 20.0,
                y0 + 8.0
            );
            (x0 + 26.0, y0 + 4.0)
        } else {
            let _ = writeln!(
                out,
                r#"<line class="{class}" x1="{x1:.1}" y1="{y1:.1}" x2="{x2:.1}" y2="{y2:.1}" stroke="{color}" stroke-opacity="{opacity:.3}" stroke-width="{width:.2}"/>"#
            );
            ((x1 + x2) / 2.0 + 4.0, (y1 + y2) / 2.0)
        };
        let _ = writeln!(
            out,
            r#"<text class="weight" x="{lx:.1}" y="{ly:.1}" fill="{color}">{}</text>"#,
            e.weight
        );
    }
    for n in &graph.nodes {
        let (x, y) = (n.layout.x, n.layout.y);
        let label = n.layout.id.to_string();
        let _ = writeln!(out, r#"<g class="{}">"#, node_class(n.layout.id));
        let _ = writeln!(
            out,
            r##"<rect class="node" x="{:.1}" y="{:.1}" width="{NODE_W}" height="{NODE_H}" rx="8" ry="8" fill="{}" stroke="#37474f"/>"##,
            x - NODE_W / 2.0,
            y - NODE_H / 2.0,
            node_fill(n.style)
        );
        let _ = writeln!(
            out,
            r#"<text x="{x:.1}" y="{:.1}" text-anchor="middle">{label}</text>"#,
            y + 4.0
        );
        if let Some((a, b)) = n.lines {
            let _ = writeln!(out, "<title>{label} lines {a}-{b}</title>");
        }
        out.push_str("</g>\n");
    }
    out.push_str("</g>\n</svg>\n");
    out
}

fn dot_quote(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

/// Graphviz digraph; node positions are pinned to the computed layout.
pub fn to_dot(graph: &StyledGraph) -> String {
    let name = graph
        .function_name
        .clone()
        .unwrap_or_else(|| format!("function_{}", graph.function_index));
    let mut out = String::new();
    let _ = writeln!(out, "digraph {} {{", dot_quote(&name));
    let _ = writeln!(out, "  graph [rankdir=TB, threshold={}];", graph.threshold);
    let _ = writeln!(
        out,
        "  node [shape=box, style=\"rounded,filled\", fontname=\"monospace\"];"
    );
    for n in &graph.nodes {
        let id = n.layout.id.to_string();
        let _ = writeln!(
            out,
            "  {} [label={}, class={}, fillcolor=\"{}\", pos=\"{},{}!\"];",
            dot_quote(&id),
            dot_quote(&id),
            node_class(n.layout.id),
            node_fill(n.style),
            n.layout.x,
            0.0 - n.layout.y
        );
    }
    for e in &graph.edges {
        let (color, _, width) = edge_stroke(e);
        let _ = writeln!(
            out,
            "  {} -> {} [label=\"{}\", color=\"{}\", penwidth={:.2}{}];",
            dot_quote(&e.from.to_string()),
            dot_quote(&e.to.to_string()),
            e.weight,
            color,
            width,
            if e.reversed { ", constraint=false" } else { "" }
        );
    }
    out.push_str("}\n");
    out
}
