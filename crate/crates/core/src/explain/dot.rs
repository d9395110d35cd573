use std::fmt::Write as _;

/// Categorical palette, one entry per cluster index (cycled).
pub const PALETTE: [(u8, u8, u8); 10] = [
    (31, 119, 180),
    (255, 127, 14),
    (44, 160, 44),
    (214, 39, 40),
    (148, 103, 189),
    (140, 86, 75),
    (227, 119, 194),
    (127, 127, 127),
    (188, 189, 34),
    (23, 190, 207),
];

/// Linear blend from white (`t = 0`) to the cluster's colour (`t = 1`).
pub fn cluster_shade(k: usize, t: f64) -> String {
    let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.0 };
    let (r, g, b) = PALETTE[k % PALETTE.len()];
    let mix = |c: u8| (255.0 + t * (c as f64 - 255.0)).round() as u8;
    format!("#{:02x}{:02x}{:02x}", mix(r), mix(g), mix(b))
}

/// Quotes a DOT string literal.
pub fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for ch in s.chars() {
        match ch {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

/// Incremental writer for an undirected DOT graph.
pub struct DotWriter {
    buf: String,
    depth: usize,
}

impl DotWriter {
    pub fn new(name: &str, label: &str) -> Self {
        let mut w = Self {
            buf: String::new(),
            depth: 1,
        };
        let _ = writeln!(w.buf, "graph {} {{", quote(name));
        w.line(&format!("label={};", quote(label)));
        w.line("node [style=filled, shape=circle, fontsize=10];");
        w
    }

    fn line(&mut self, s: &str) {
        for _ in 0..self.depth {
            self.buf.push_str("  ");
        }
        self.buf.push_str(s);
        self.buf.push('\n');
    }

    fn attrs(attrs: &[(&str, String)]) -> String {
        if attrs.is_empty() {
            return String::new();
        }
        let parts: Vec<String> = attrs.iter().map(|(k, v)| format!("{k}={}", quote(v))).collect();
        format!(" [{}]", parts.join(", "))
    }

    pub fn node(&mut self, id: &str, attrs: &[(&str, String)]) {
        let s = format!("{}{};", quote(id), Self::attrs(attrs));
        self.line(&s);
    }

    pub fn edge(&mut self, a: &str, b: &str, attrs: &[(&str, String)]) {
        let s = format!("{} -- {}{};", quote(a), quote(b), Self::attrs(attrs));
        self.line(&s);
    }

    pub fn open_cluster(&mut self, name: &str, label: &str) {
        let s = format!("subgraph {} {{", quote(&format!("cluster_{name}")));
        self.line(&s);
        self.depth += 1;
        self.line(&format!("label={};", quote(label)));
    }

    pub fn close_cluster(&mut self) {
        self.depth -= 1;
        self.line("}");
    }

    pub fn finish(mut self) -> String {
        while self.depth > 1 {
            self.close_cluster();
        }
        self.buf.push_str("}\n");
        self.buf
    }
}
