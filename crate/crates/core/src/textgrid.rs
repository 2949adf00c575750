//! Praat TextGrid (long text format) writer for interval tiers.

use std::fmt::Write as _;

#[derive(Debug, Clone, PartialEq)]
pub struct Interval {
    pub xmin: f64,
    pub xmax: f64,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntervalTier {
    pub name: String,
    pub intervals: Vec<Interval>,
}

impl IntervalTier {
    pub fn new(name: impl Into<String>) -> Self {
        Self { name: name.into(), intervals: Vec::new() }
    }

    pub fn push(&mut self, xmin: f64, xmax: f64, text: impl Into<String>) {
        self.intervals.push(Interval { xmin, xmax, text: text.into() });
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TextGrid {
    pub xmin: f64,
    pub xmax: f64,
    pub tiers: Vec<IntervalTier>,
}

impl TextGrid {
    pub fn new(duration: f64) -> Self {
        Self { xmin: 0.0, xmax: duration, tiers: Vec::new() }
    }

    /// Renders the grid. Gaps between intervals are filled with empty
    /// intervals so each tier covers `[xmin, xmax]` as Praat requires.
    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str("File type = \"ooTextFile\"\nObject class = \"TextGrid\"\n\n");
        let _ = writeln!(out, "xmin = {}", self.xmin);
        let _ = writeln!(out, "xmax = {}", self.xmax);
        out.push_str("tiers? <exists>\n");
        let _ = writeln!(out, "size = {}", self.tiers.len());
        out.push_str("item []:\n");
        for (i, tier) in self.tiers.iter().enumerate() {
            let filled = self.fill(tier);
            let _ = writeln!(out, "    item [{}]:", i + 1);
            out.push_str("        class = \"IntervalTier\"\n");
            let _ = writeln!(out, "        name = \"{}\"", escape(&tier.name));
            let _ = writeln!(out, "        xmin = {}", self.xmin);
            let _ = writeln!(out, "        xmax = {}", self.xmax);
            let _ = writeln!(out, "        intervals: size = {}", filled.len());
            for (j, iv) in filled.iter().enumerate() {
                let _ = writeln!(out, "        intervals [{}]:", j + 1);
                let _ = writeln!(out, "            xmin = {}", iv.xmin);
                let _ = writeln!(out, "            xmax = {}", iv.xmax);
                let _ = writeln!(out, "            text = \"{}\"", escape(&iv.text));
            }
        }
        out
    }

    fn fill(&self, tier: &IntervalTier) -> Vec<Interval> {
        let mut ivs = tier.intervals.clone();
        ivs.sort_by(|a, b| a.xmin.total_cmp(&b.xmin));
        let mut out = Vec::with_capacity(ivs.len() * 2 + 1);
        let mut cursor = self.xmin;
        for iv in ivs {
            let xmin = iv.xmin.max(cursor);
            let xmax = iv.xmax.min(self.xmax);
            if xmax <= xmin {
                continue;
            }
            if xmin > cursor + 1e-12 {
                out.push(Interval { xmin: cursor, xmax: xmin, text: String::new() });
            }
            out.push(Interval { xmin, xmax, text: iv.text });
            cursor = xmax;
        }
        if cursor < self.xmax - 1e-12 {
            out.push(Interval { xmin: cursor, xmax: self.xmax, text: String::new() });
        }
        out
    }
}

fn escape(s: &str) -> String {
    s.replace('"', "\"\"")
}
