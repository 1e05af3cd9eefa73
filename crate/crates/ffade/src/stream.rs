//! Edge-stream data model: events, interaction types, per-timestamp ticks.
//!
//! Input files are delimiter-separated text with one interaction per line
//! (`src,dst,time[,weight]`). Node identifiers are opaque strings interned
//! to dense integers; all downstream structures work on the interned ids.

use std::io::BufRead;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Dense id assigned to a node identifier in first-seen order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeId(pub u32);

/// Ordered node pair identifying a stream of same-pair interactions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct InteractionType {
    pub src: NodeId,
    pub dst: NodeId,
}

impl InteractionType {
    pub fn new(src: NodeId, dst: NodeId) -> Self {
        Self { src, dst }
    }
}

/// One interaction event: `weight` counts same-type interactions that share
/// this timestamp. Times are positive integers in the systematic granularity
/// of the input (minutes, ticks, ...).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Edge {
    pub src: NodeId,
    pub dst: NodeId,
    pub time: u64,
    pub weight: u64,
    /// Ordinal of the originating input record, used to align labels.
    pub index: u64,
}

impl Edge {
    pub fn ty(&self) -> InteractionType {
        InteractionType::new(self.src, self.dst)
    }
}

/// Bidirectional map between string node identifiers and dense ids.
#[derive(Debug, Default, Clone, Serialize, Deserialize)]
pub struct Interner {
    names: Vec<String>,
    #[serde(skip)]
    ids: IndexMap<String, NodeId>,
}

impl Interner {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn intern(&mut self, name: &str) -> NodeId {
        if let Some(&id) = self.ids.get(name) {
            return id;
        }
        let id = NodeId(self.names.len() as u32);
        self.names.push(name.to_string());
        self.ids.insert(name.to_string(), id);
        id
    }

    pub fn name(&self, id: NodeId) -> &str {
        &self.names[id.0 as usize]
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    /// Rebuilds the lookup side after deserialization.
    pub fn rebuild_index(&mut self) {
        self.ids = self
            .names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), NodeId(i as u32)))
            .collect();
    }
}

/// Returns the canonical form of a type: unchanged when directed, the
/// lexicographically smaller ordering of the two node names when undirected.
pub fn canonicalize_type(
    ty: InteractionType,
    undirected: bool,
    interner: &Interner,
) -> InteractionType {
    if !undirected {
        return ty;
    }
    if interner.name(ty.dst) < interner.name(ty.src) {
        InteractionType::new(ty.dst, ty.src)
    } else {
        ty
    }
}

/// Input format knobs for [`parse_edge_stream`].
#[derive(Debug, Clone)]
pub struct StreamFormat {
    pub delimiter: char,
    pub has_header: bool,
}

impl Default for StreamFormat {
    fn default() -> Self {
        Self {
            delimiter: ',',
            has_header: false,
        }
    }
}

/// Streaming parser over an edge file. Yields edges in file order and counts
/// (without rejecting) timestamp decreases; ordering is enforced later by
/// [`coalesce_into_ticks`].
pub struct EdgeStreamParser<'a, R: BufRead> {
    reader: R,
    format: StreamFormat,
    interner: &'a mut Interner,
    line_no: u64,
    event_index: u64,
    last_time: Option<u64>,
    monotonicity_violations: u64,
    header_skipped: bool,
}

impl<'a, R: BufRead> EdgeStreamParser<'a, R> {
    pub fn new(reader: R, format: StreamFormat, interner: &'a mut Interner) -> Self {
        Self {
            reader,
            format,
            interner,
            line_no: 0,
            event_index: 0,
            last_time: None,
            monotonicity_violations: 0,
            header_skipped: false,
        }
    }

    /// Number of events whose timestamp was lower than the preceding one.
    pub fn monotonicity_violations(&self) -> u64 {
        self.monotonicity_violations
    }

    fn parse_line(&mut self, line: &str) -> Result<Edge> {
        let mut fields = line.split(self.format.delimiter).map(str::trim);
        let src = fields
            .next()
            .filter(|s| !s.is_empty())
            .ok_or_else(|| self.malformed("missing source field"))?;
        let dst = fields
            .next()
            .filter(|s| !s.is_empty())
            .ok_or_else(|| self.malformed("missing destination field"))?;
        let time_str = fields
            .next()
            .ok_or_else(|| self.malformed("missing time field"))?;
        let time: u64 = time_str
            .parse()
            .map_err(|_| self.malformed(&format!("invalid time {time_str:?}")))?;
        if time == 0 {
            return Err(self.malformed("time must be >= 1"));
        }
        let weight = match fields.next() {
            None | Some("") => 1,
            Some(w) => {
                let w: u64 = w
                    .parse()
                    .map_err(|_| self.malformed(&format!("invalid weight {w:?}")))?;
                if w == 0 {
                    return Err(self.malformed("weight must be >= 1"));
                }
                w
            }
        };
        if fields.next().is_some() {
            return Err(self.malformed("too many fields"));
        }
        let src = self.interner.intern(src);
        let dst = self.interner.intern(dst);
        Ok(Edge {
            src,
            dst,
            time,
            weight,
            index: self.event_index,
        })
    }

    fn malformed(&self, msg: &str) -> Error {
        Error::Malformed {
            line: self.line_no,
            msg: msg.to_string(),
        }
    }
}

impl<R: BufRead> Iterator for EdgeStreamParser<'_, R> {
    type Item = Result<Edge>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let mut line = String::new();
            match self.reader.read_line(&mut line) {
                Ok(0) => return None,
                Ok(_) => {}
                Err(e) => return Some(Err(e.into())),
            }
            self.line_no += 1;
            if self.format.has_header && !self.header_skipped {
                self.header_skipped = true;
                continue;
            }
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let edge = match self.parse_line(trimmed) {
                Ok(e) => e,
                Err(e) => return Some(Err(e)),
            };
            if let Some(prev) = self.last_time {
                if edge.time < prev {
                    self.monotonicity_violations += 1;
                }
            }
            self.last_time = Some(self.last_time.unwrap_or(0).max(edge.time));
            self.event_index += 1;
            return Some(Ok(edge));
        }
    }
}

/// Parses an edge stream into a vector, for callers that do not need
/// streaming iteration.
pub fn parse_edge_stream<R: BufRead>(
    reader: R,
    format: StreamFormat,
    interner: &mut Interner,
) -> Result<Vec<Edge>> {
    EdgeStreamParser::new(reader, format, interner).collect()
}

/// Reads a labels file: one `0`/`1` per line, aligned with input events.
pub fn parse_labels<R: BufRead>(reader: R) -> Result<Vec<u8>> {
    let mut labels = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        match t {
            "0" => labels.push(0),
            "1" => labels.push(1),
            other => {
                return Err(Error::Malformed {
                    line: i as u64 + 1,
                    msg: format!("label must be 0 or 1, got {other:?}"),
                })
            }
        }
    }
    Ok(labels)
}

/// The merged weight of one interaction type within a tick, with the
/// `(event index, weight)` slices it was coalesced from (label alignment).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TypeCount {
    pub weight: u64,
    pub slices: Vec<(u64, u64)>,
}

/// All interactions sharing one timestamp. Same-type events are merged by
/// summing weights; simultaneity inside a tick is what the group channels of
/// the detector operate on.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tick {
    pub time: u64,
    pub typed_counts: IndexMap<InteractionType, TypeCount>,
}

impl Tick {
    pub fn total_weight(&self) -> u64 {
        self.typed_counts.values().map(|c| c.weight).sum()
    }
}

/// Coalesces a time-sorted edge sequence into ticks, one per distinct
/// timestamp, in strictly increasing time order. An event earlier than an
/// already-started tick is a hard error: silently reordering would corrupt
/// every downstream decay computation.
pub struct Coalescer<I> {
    edges: I,
    pending: Option<Tick>,
    done: bool,
}

impl<I: Iterator<Item = Result<Edge>>> Coalescer<I> {
    pub fn new(edges: I) -> Self {
        Self {
            edges,
            pending: None,
            done: false,
        }
    }
}

impl<I: Iterator<Item = Result<Edge>>> Iterator for Coalescer<I> {
    type Item = Result<Tick>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        loop {
            match self.edges.next() {
                None => {
                    self.done = true;
                    return self.pending.take().map(Ok);
                }
                Some(Err(e)) => {
                    self.done = true;
                    return Some(Err(e));
                }
                Some(Ok(edge)) => {
                    let tick = self.pending.get_or_insert_with(|| Tick {
                        time: edge.time,
                        typed_counts: IndexMap::new(),
                    });
                    if edge.time < tick.time {
                        self.done = true;
                        return Some(Err(Error::OutOfOrder {
                            index: edge.index,
                            time: edge.time,
                            current: tick.time,
                        }));
                    }
                    if edge.time == tick.time {
                        let entry =
                            tick.typed_counts
                                .entry(edge.ty())
                                .or_insert_with(|| TypeCount {
                                    weight: 0,
                                    slices: Vec::new(),
                                });
                        entry.weight += edge.weight;
                        entry.slices.push((edge.index, edge.weight));
                        continue;
                    }
                    // Strictly later: emit the finished tick, start the next.
                    let finished = self.pending.replace(Tick {
                        time: edge.time,
                        typed_counts: IndexMap::from_iter([(
                            edge.ty(),
                            TypeCount {
                                weight: edge.weight,
                                slices: vec![(edge.index, edge.weight)],
                            },
                        )]),
                    });
                    return finished.map(Ok);
                }
            }
        }
    }
}

/// Convenience wrapper: coalesce an in-memory edge list.
pub fn coalesce_into_ticks(edges: &[Edge]) -> Result<Vec<Tick>> {
    Coalescer::new(edges.iter().copied().map(Ok)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::io::Cursor;

    fn parse_str(input: &str) -> (Result<Vec<Edge>>, Interner) {
        let mut interner = Interner::new();
        let edges = parse_edge_stream(Cursor::new(input), StreamFormat::default(), &mut interner);
        (edges, interner)
    }

    #[test]
    fn parses_full_record() {
        let (edges, interner) = parse_str("a,b,10,2\n");
        let edges = edges.unwrap();
        assert_eq!(edges.len(), 1);
        let e = edges[0];
        assert_eq!(interner.name(e.src), "a");
        assert_eq!(interner.name(e.dst), "b");
        assert_eq!((e.time, e.weight), (10, 2));
    }

    #[test]
    fn weight_defaults_to_one() {
        let (edges, _) = parse_str("a,b,10\n");
        assert_eq!(edges.unwrap()[0].weight, 1);
    }

    #[test]
    fn rejects_zero_time() {
        let (edges, _) = parse_str("a,b,0,1\n");
        let err = edges.unwrap_err();
        assert!(matches!(err, Error::Malformed { line: 1, .. }), "{err}");
    }

    #[test]
    fn rejects_zero_weight_and_garbage() {
        assert!(parse_str("a,b,10,0\n").0.is_err());
        assert!(parse_str("a,b,ten\n").0.is_err());
        assert!(parse_str("a\n").0.is_err());
    }

    #[test]
    fn reports_offending_line_number() {
        let (edges, _) = parse_str("a,b,1\nc,d,bad\n");
        match edges.unwrap_err() {
            Error::Malformed { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn skips_header_when_configured() {
        let mut interner = Interner::new();
        let format = StreamFormat {
            delimiter: ',',
            has_header: true,
        };
        let edges = parse_edge_stream(Cursor::new("src,dst,t,w\na,b,1,1\n"), format, &mut interner)
            .unwrap();
        assert_eq!(edges.len(), 1);
    }

    #[test]
    fn skips_comment_and_blank_lines() {
        let (edges, _) = parse_str("# resolved config\n\na,b,1\n# trailing\n");
        assert_eq!(edges.unwrap().len(), 1);
    }

    #[test]
    fn counts_monotonicity_violations_without_rejecting() {
        let mut interner = Interner::new();
        let mut parser = EdgeStreamParser::new(
            Cursor::new("a,b,5\na,b,3\na,b,7\na,b,6\n"),
            StreamFormat::default(),
            &mut interner,
        );
        let edges: Result<Vec<_>> = parser.by_ref().collect();
        assert_eq!(edges.unwrap().len(), 4);
        assert_eq!(parser.monotonicity_violations(), 2);
    }

    fn edge(interner: &mut Interner, s: &str, d: &str, t: u64, w: u64, index: u64) -> Edge {
        Edge {
            src: interner.intern(s),
            dst: interner.intern(d),
            time: t,
            weight: w,
            index,
        }
    }

    #[test]
    fn coalesce_merges_same_type_same_time() {
        let mut it = Interner::new();
        let edges = vec![
            edge(&mut it, "a", "b", 5, 1, 0),
            edge(&mut it, "a", "b", 5, 1, 1),
            edge(&mut it, "c", "d", 5, 1, 2),
        ];
        let ticks = coalesce_into_ticks(&edges).unwrap();
        assert_eq!(ticks.len(), 1);
        let tick = &ticks[0];
        assert_eq!(tick.time, 5);
        let ab = InteractionType::new(NodeId(0), NodeId(1));
        let cd = InteractionType::new(NodeId(2), NodeId(3));
        assert_eq!(tick.typed_counts[&ab].weight, 2);
        assert_eq!(tick.typed_counts[&ab].slices, vec![(0, 1), (1, 1)]);
        assert_eq!(tick.typed_counts[&cd].weight, 1);
    }

    #[test]
    fn coalesce_emits_distinct_times_in_order() {
        let mut it = Interner::new();
        let edges = vec![
            edge(&mut it, "a", "b", 5, 1, 0),
            edge(&mut it, "a", "b", 7, 1, 1),
        ];
        let ticks = coalesce_into_ticks(&edges).unwrap();
        assert_eq!(ticks.iter().map(|t| t.time).collect::<Vec<_>>(), vec![5, 7]);
    }

    #[test]
    fn coalesce_rejects_out_of_order_event() {
        let mut it = Interner::new();
        let edges = vec![
            edge(&mut it, "a", "b", 7, 1, 0),
            edge(&mut it, "a", "b", 5, 1, 1),
        ];
        match coalesce_into_ticks(&edges).unwrap_err() {
            Error::OutOfOrder {
                index,
                time,
                current,
            } => {
                assert_eq!((index, time, current), (1, 5, 7));
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn canonicalize_directed_is_identity() {
        let mut it = Interner::new();
        let b = it.intern("b");
        let a = it.intern("a");
        let ty = InteractionType::new(b, a);
        assert_eq!(canonicalize_type(ty, false, &it), ty);
    }

    #[test]
    fn canonicalize_undirected_orders_by_name() {
        let mut it = Interner::new();
        let b = it.intern("b");
        let a = it.intern("a");
        assert_eq!(
            canonicalize_type(InteractionType::new(b, a), true, &it),
            InteractionType::new(a, b)
        );
        // Self-loop is a fixed point.
        assert_eq!(
            canonicalize_type(InteractionType::new(a, a), true, &it),
            InteractionType::new(a, a)
        );
    }

    #[test]
    fn labels_parse_and_reject_garbage() {
        assert_eq!(
            parse_labels(Cursor::new("0\n1\n0\n")).unwrap(),
            vec![0, 1, 0]
        );
        assert!(parse_labels(Cursor::new("0\n2\n")).is_err());
    }

    proptest! {
        /// Coalescing preserves total weight per (type, time) and emits
        /// strictly increasing tick times.
        #[test]
        fn coalesce_preserves_weight_and_order(
            raw in proptest::collection::vec((0u8..4, 0u8..4, 1u64..20, 1u64..4), 0..60)
        ) {
            let mut it = Interner::new();
            let mut edges: Vec<Edge> = raw.iter().enumerate().map(|(i, &(s, d, t, w))| Edge {
                src: it.intern(&format!("n{s}")),
                dst: it.intern(&format!("n{d}")),
                time: t,
                weight: w,
                index: i as u64,
            }).collect();
            edges.sort_by_key(|e| e.time);
            let ticks = coalesce_into_ticks(&edges).unwrap();

            let total_in: u64 = edges.iter().map(|e| e.weight).sum();
            let total_out: u64 = ticks.iter().map(|t| t.total_weight()).sum();
            prop_assert_eq!(total_in, total_out);

            for pair in ticks.windows(2) {
                prop_assert!(pair[0].time < pair[1].time);
            }
            for tick in &ticks {
                for count in tick.typed_counts.values() {
                    let slice_sum: u64 = count.slices.iter().map(|&(_, w)| w).sum();
                    prop_assert_eq!(slice_sum, count.weight);
                }
            }
        }

        /// parse -> coalesce is deterministic for identical bytes.
        #[test]
        fn parse_coalesce_deterministic(lines in proptest::collection::vec((0u8..5, 0u8..5, 1u64..30), 1..40)) {
            let text: String = lines.iter()
                .map(|(s, d, t)| format!("n{s},n{d},{t}\n"))
                .collect();
            let run = |input: &str| {
                let mut interner = Interner::new();
                let mut edges = parse_edge_stream(
                    Cursor::new(input), StreamFormat::default(), &mut interner).unwrap();
                edges.sort_by_key(|e| e.time);
                coalesce_into_ticks(&edges).unwrap()
            };
            prop_assert_eq!(run(&text), run(&text));
        }
    }
}
