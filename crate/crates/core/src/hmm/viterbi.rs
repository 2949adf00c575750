use serde::{Deserialize, Serialize};

use super::{HmmError, PreparedMixture, UnitInventory, UnitKind, UnitLabel};
use crate::frontend::FeatureSequence;
use crate::textgrid::{IntervalTier, TextGrid};

const NEG_INF: f64 = f64::NEG_INFINITY;

/// One maximal run of frames spent in a single state of one unit occurrence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentEntry {
    pub label: UnitLabel,
    pub state: usize,
    pub start_frame: usize,
    pub end_frame: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Alignment {
    pub entries: Vec<AlignmentEntry>,
    pub total_log_likelihood: f64,
}

/// A unit occurrence recovered from an alignment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UnitSpan {
    pub label: UnitLabel,
    pub start_frame: usize,
    pub end_frame: usize,
}

impl Alignment {
    pub fn num_frames(&self) -> usize {
        self.entries.last().map_or(0, |e| e.end_frame)
    }

    /// Groups entries into unit occurrences. A new occurrence starts at every
    /// entry in state 0.
    pub fn unit_spans(&self) -> Vec<UnitSpan> {
        let mut out: Vec<UnitSpan> = Vec::new();
        for e in &self.entries {
            match out.last_mut() {
                Some(last) if e.state != 0 => last.end_frame = e.end_frame,
                _ => out.push(UnitSpan { label: e.label, start_frame: e.start_frame, end_frame: e.end_frame }),
            }
        }
        out
    }

    pub fn labels(&self) -> Vec<UnitLabel> {
        self.unit_spans().into_iter().map(|s| s.label).collect()
    }

    /// True when the entries cover `[0, frames)` contiguously with non-empty spans.
    pub fn tiles(&self, frames: usize) -> bool {
        let mut cursor = 0;
        for e in &self.entries {
            if e.start_frame != cursor || e.end_frame <= e.start_frame {
                return false;
            }
            cursor = e.end_frame;
        }
        cursor == frames
    }

    pub fn to_jsonl(&self, utterance_id: &str, frame_shift: f64) -> String {
        let mut out = String::new();
        for e in &self.entries {
            let line = serde_json::json!({
                "utterance_id": utterance_id,
                "label": e.label,
                "state": e.state,
                "start_frame": e.start_frame,
                "end_frame": e.end_frame,
                "start": e.start_frame as f64 * frame_shift,
                "end": e.end_frame as f64 * frame_shift,
            });
            out.push_str(&line.to_string());
            out.push('\n');
        }
        out
    }

    /// Unit tier and state tier.
    pub fn to_textgrid(&self, frame_shift: f64, duration: f64) -> TextGrid {
        let mut grid = TextGrid::new(duration);
        let mut units = IntervalTier::new("units");
        for s in self.unit_spans() {
            units.push(s.start_frame as f64 * frame_shift, s.end_frame as f64 * frame_shift, s.label.to_string());
        }
        let mut states = IntervalTier::new("states");
        for e in &self.entries {
            states.push(
                e.start_frame as f64 * frame_shift,
                e.end_frame as f64 * frame_shift,
                format!("{}.{}", e.label, e.state),
            );
        }
        grid.tiers.push(units);
        grid.tiers.push(states);
        grid
    }
}

/// Unit-loop decoding graph.
#[derive(Debug, Clone, PartialEq)]
pub struct Grammar {
    pub labels: Vec<UnitLabel>,
    /// Log-domain score added on every unit entry.
    pub insertion_penalty: f64,
    /// Restrict unit order to onset → rhyme → offset.
    pub sequencing: bool,
}

impl Grammar {
    pub fn unit_loop(mut labels: Vec<UnitLabel>, insertion_penalty: f64) -> Self {
        labels.sort();
        labels.dedup();
        Self { labels, insertion_penalty, sequencing: false }
    }

    pub fn with_sequencing(mut self, on: bool) -> Self {
        self.sequencing = on;
        self
    }

    fn may_follow(&self, prev: UnitKind, next: UnitKind) -> bool {
        if !self.sequencing {
            return true;
        }
        let after = match prev {
            UnitKind::Onset => next == UnitKind::Rhyme,
            UnitKind::Rhyme => matches!(next, UnitKind::Offset | UnitKind::Transient),
            _ => true,
        };
        let before = match next {
            UnitKind::Rhyme => matches!(prev, UnitKind::Onset | UnitKind::Transient),
            UnitKind::Offset => prev == UnitKind::Rhyme,
            _ => true,
        };
        after && before
    }

    fn may_start(&self, k: UnitKind) -> bool {
        !self.sequencing || !matches!(k, UnitKind::Rhyme | UnitKind::Offset)
    }

    fn may_end(&self, k: UnitKind) -> bool {
        !self.sequencing || !matches!(k, UnitKind::Onset | UnitKind::Rhyme)
    }
}

/// States of a set of units laid out consecutively.
struct Network {
    labels: Vec<UnitLabel>,
    first: Vec<usize>,
    unit_of: Vec<usize>,
    state_in_unit: Vec<usize>,
    models: Vec<PreparedMixture>,
    log_stay: Vec<f64>,
    log_adv: Vec<f64>,
}

impl Network {
    fn build(inv: &UnitInventory, labels: &[UnitLabel]) -> Result<Self, HmmError> {
        let mut net = Network {
            labels: labels.to_vec(),
            first: Vec::new(),
            unit_of: Vec::new(),
            state_in_unit: Vec::new(),
            models: Vec::new(),
            log_stay: Vec::new(),
            log_adv: Vec::new(),
        };
        for (u, label) in labels.iter().enumerate() {
            let unit = inv.get(label)?;
            net.first.push(net.models.len());
            for (s, (g, tr)) in unit.states.iter().zip(&unit.transitions).enumerate() {
                net.unit_of.push(u);
                net.state_in_unit.push(s);
                net.models.push(g.prepare());
                net.log_stay.push(tr[0].ln());
                net.log_adv.push(tr[1].ln());
            }
        }
        Ok(net)
    }

    fn len(&self) -> usize {
        self.models.len()
    }

    fn last(&self, u: usize) -> usize {
        self.first.get(u + 1).copied().unwrap_or(self.len()) - 1
    }

    fn emissions(&self, f: &FeatureSequence) -> Vec<f64> {
        let s = self.len();
        let mut e = vec![0.0; f.num_frames() * s];
        for (t, x) in f.frames().enumerate() {
            for (g, m) in self.models.iter().enumerate() {
                e[t * s + g] = m.log_density(x);
            }
        }
        e
    }

    fn entries(&self, states: &[usize], starts: &[bool]) -> Vec<AlignmentEntry> {
        let mut out: Vec<AlignmentEntry> = Vec::new();
        for (t, (&g, &new_occ)) in states.iter().zip(starts).enumerate() {
            match out.last_mut() {
                Some(last) if !new_occ && last.state == self.state_in_unit[g] && last.end_frame == t => {
                    last.end_frame = t + 1;
                }
                _ => out.push(AlignmentEntry {
                    label: self.labels[self.unit_of[g]],
                    state: self.state_in_unit[g],
                    start_frame: t,
                    end_frame: t + 1,
                }),
            }
        }
        out
    }
}

fn check_dim(inv: &UnitInventory, f: &FeatureSequence) -> Result<(), HmmError> {
    if f.dim() != inv.feature_dim {
        return Err(HmmError::DimensionMismatch { expected: inv.feature_dim, actual: f.dim() });
    }
    Ok(())
}

/// Forced alignment of `f` to the concatenation of the transcript's units.
pub fn viterbi_align(inv: &UnitInventory, f: &FeatureSequence, transcript: &[UnitLabel]) -> Result<Alignment, HmmError> {
    if transcript.is_empty() || f.is_empty() {
        return Err(HmmError::EmptyInput);
    }
    check_dim(inv, f)?;
    let net = Network::build(inv, transcript)?;
    let (t_len, s_len) = (f.num_frames(), net.len());
    if s_len > t_len {
        return Err(HmmError::InfeasibleAlignment { states: s_len, frames: t_len });
    }
    let e = net.emissions(f);
    let mut prev = vec![NEG_INF; s_len];
    let mut cur = vec![NEG_INF; s_len];
    // advanced[t * S + s]: state s at t was entered from s-1.
    let mut advanced = vec![false; t_len * s_len];
    prev[0] = e[0];
    for t in 1..t_len {
        let lo = (s_len + t).saturating_sub(t_len);
        let hi = t.min(s_len - 1);
        cur.fill(NEG_INF);
        for s in lo..=hi {
            let stay = prev[s] + net.log_stay[s];
            let adv = if s > 0 { prev[s - 1] + net.log_adv[s - 1] } else { NEG_INF };
            let (best, from_adv) = if adv > stay { (adv, true) } else { (stay, false) };
            cur[s] = best + e[t * s_len + s];
            advanced[t * s_len + s] = from_adv;
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    let total = prev[s_len - 1];
    if total == NEG_INF || total.is_nan() {
        return Err(HmmError::InfeasibleAlignment { states: s_len, frames: t_len });
    }
    let mut states = vec![0; t_len];
    let mut starts = vec![false; t_len];
    let mut s = s_len - 1;
    for t in (0..t_len).rev() {
        states[t] = s;
        if t == 0 {
            starts[0] = true;
        } else if advanced[t * s_len + s] {
            starts[t] = net.state_in_unit[s] == 0;
            s -= 1;
        }
    }
    Ok(Alignment { entries: net.entries(&states, &starts), total_log_likelihood: total })
}

const START: u32 = u32::MAX;

/// Best label sequence and state path under a unit-loop grammar.
pub fn viterbi_decode(inv: &UnitInventory, f: &FeatureSequence, grammar: &Grammar) -> Result<Alignment, HmmError> {
    if f.is_empty() || grammar.labels.is_empty() {
        return Err(HmmError::EmptyInput);
    }
    check_dim(inv, f)?;
    let net = Network::build(inv, &grammar.labels)?;
    let (t_len, s_len, n_units) = (f.num_frames(), net.len(), net.labels.len());
    let kinds: Vec<UnitKind> = net.labels.iter().map(|l| l.kind).collect();
    let pen = grammar.insertion_penalty;
    let e = net.emissions(f);

    let mut prev = vec![NEG_INF; s_len];
    let mut cur = vec![NEG_INF; s_len];
    // back[t * S + g]: predecessor global state at t-1, or START; entry marks a unit entry.
    let mut back = vec![START; t_len * s_len];
    let mut entry = vec![false; t_len * s_len];
    for u in 0..n_units {
        if grammar.may_start(kinds[u]) {
            let g = net.first[u];
            prev[g] = pen + e[g];
            entry[g] = true;
        }
    }
    let mut exits = vec![NEG_INF; n_units];
    for t in 1..t_len {
        for u in 0..n_units {
            let l = net.last(u);
            exits[u] = prev[l] + net.log_adv[l];
        }
        let free_best = argmax_first(&exits, |_| true);
        cur.fill(NEG_INF);
        for v in 0..n_units {
            let (src, enter) = if grammar.sequencing {
                argmax_first(&exits, |u| grammar.may_follow(kinds[u], kinds[v]))
            } else {
                free_best
            };
            for g in net.first[v]..=net.last(v) {
                let idx = t * s_len + g;
                let stay = prev[g] + net.log_stay[g];
                let (cand, from, is_entry) = if g == net.first[v] {
                    (enter + pen, src.map_or(START, |u| net.last(u) as u32), true)
                } else {
                    (prev[g - 1] + net.log_adv[g - 1], (g - 1) as u32, false)
                };
                let (best, pred, ent) = if cand > stay { (cand, from, is_entry) } else { (stay, g as u32, false) };
                cur[g] = best + e[idx];
                back[idx] = pred;
                entry[idx] = ent;
            }
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    let finals: Vec<f64> = (0..n_units).map(|u| prev[net.last(u)]).collect();
    let (end_unit, total) = argmax_first(&finals, |u| grammar.may_end(kinds[u]));
    let end_unit = match end_unit {
        Some(u) if total > NEG_INF => u,
        _ => return Err(HmmError::InfeasibleAlignment { states: s_len, frames: t_len }),
    };
    let mut states = vec![0; t_len];
    let mut starts = vec![false; t_len];
    let mut g = net.last(end_unit);
    for t in (0..t_len).rev() {
        states[t] = g;
        let idx = t * s_len + g;
        starts[t] = entry[idx];
        if t > 0 {
            g = back[idx] as usize;
        }
    }
    Ok(Alignment { entries: net.entries(&states, &starts), total_log_likelihood: total })
}

/// First index attaining the maximum among allowed positions.
fn argmax_first(v: &[f64], allowed: impl Fn(usize) -> bool) -> (Option<usize>, f64) {
    let mut best = (None, NEG_INF);
    for (i, &x) in v.iter().enumerate() {
        if allowed(i) && (best.0.is_none() || x > best.1) {
            best = (Some(i), x);
        }
    }
    best
}

/// Verifies that an alignment is a legal path through left-to-right units
/// covering exactly `frames` frames.
pub(crate) fn check_path(inv: &UnitInventory, alignment: &Alignment, frames: usize) -> Result<(), HmmError> {
    if !alignment.tiles(frames) {
        return Err(HmmError::InconsistentAlignment("entries do not tile the utterance".into()));
    }
    let mut prev: Option<&AlignmentEntry> = None;
    for e in &alignment.entries {
        if e.state >= inv.get(&e.label)?.num_states() {
            return Err(HmmError::InconsistentAlignment(format!("{} has no state {}", e.label, e.state)));
        }
        let legal = match prev {
            None => e.state == 0,
            Some(p) => {
                let continues = p.label == e.label && e.state == p.state + 1;
                let restarts = e.state == 0 && p.state + 1 == inv.get(&p.label)?.num_states();
                continues || restarts
            }
        };
        if !legal {
            return Err(HmmError::InconsistentAlignment(match prev {
                None => "path starts mid-unit".into(),
                Some(p) => format!("illegal transition {}.{} -> {}.{}", p.label, p.state, e.label, e.state),
            }));
        }
        prev = Some(e);
    }
    if let Some(p) = prev {
        if p.state + 1 != inv.get(&p.label)?.num_states() {
            return Err(HmmError::InconsistentAlignment("path ends mid-unit".into()));
        }
    }
    Ok(())
}

/// Independently recomputes the score of an alignment's path.
///
/// `insertion_penalty` is `Some` for decoder output, where each unit
/// occurrence (including the first) carries the penalty; forced alignments
/// pass `None`.
pub fn score_alignment(
    inv: &UnitInventory,
    f: &FeatureSequence,
    alignment: &Alignment,
    insertion_penalty: Option<f64>,
) -> Result<f64, HmmError> {
    check_dim(inv, f)?;
    check_path(inv, alignment, f.num_frames())?;
    let mut total = 0.0;
    let n = alignment.entries.len();
    for (k, e) in alignment.entries.iter().enumerate() {
        let unit = inv.get(&e.label)?;
        let g = unit.states[e.state].prepare();
        for t in e.start_frame..e.end_frame {
            total += g.log_density(f.frame(t));
        }
        let [stay, adv] = unit.transitions[e.state];
        total += (e.end_frame - e.start_frame - 1) as f64 * stay.ln();
        if k + 1 < n {
            total += adv.ln();
        }
        if e.state == 0 {
            total += insertion_penalty.unwrap_or(0.0);
        }
    }
    Ok(total)
}
