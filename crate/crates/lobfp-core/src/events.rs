//! Best-quote event data model, stream parsing, and classification of raw
//! records into the queue-event taxonomy.
//!
//! Input records are normalized post-event snapshots of the best quotes
//! (prices in integer ticks, volumes in shares). Classification maps each
//! state transition to one of four kinds:
//!
//! * `VolumeChange` -- one queue's volume moved, prices unchanged;
//! * `Overtaken` -- a new queue appeared at a one-tick-improved price;
//! * `DepletedRecede` -- the best queue vanished and the price degraded one
//!   tick (the queue behind was promoted);
//! * `DepletedRefill` -- the best queue vanished and new volume reappeared
//!   at the same price.
//!
//! Transient states (an empty best, or a two-tick spread) are folded into
//! the jump event that resolves them; the resolving record decides the kind.

use crate::error::CoreError;
use crate::seasonality::IntradayProfile;
use crate::Result;
use serde::{Deserialize, Serialize};

pub const BINS_PER_SESSION: u32 = 78;
pub const BIN_SECONDS: i64 = 300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    #[serde(rename = "B", alias = "bid", alias = "Bid", alias = "b")]
    Bid,
    #[serde(rename = "A", alias = "ask", alias = "Ask", alias = "a")]
    Ask,
}

impl Side {
    pub fn opposite(self) -> Side {
        match self {
            Side::Bid => Side::Ask,
            Side::Ask => Side::Bid,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Action {
    Add,
    Cancel,
    Trade,
}

/// One post-event snapshot of the best quotes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawRecord {
    /// Nanoseconds since epoch, nondecreasing within a session.
    pub ts: i64,
    pub side: Side,
    pub action: Action,
    /// Shares touched by the order; must be positive.
    pub size: u64,
    /// Best bid price in integer ticks, post event.
    pub best_bid_px: i64,
    /// Best ask price in integer ticks, post event.
    pub best_ask_px: i64,
    /// Bid queue volume in shares, post event (0 only transiently).
    pub bid_vol: u64,
    /// Ask queue volume in shares, post event.
    pub ask_vol: u64,
}

impl RawRecord {
    fn validate(&self, line: usize) -> Result<()> {
        if self.size == 0 {
            return Err(CoreError::Parse {
                line,
                msg: "size must be positive".into(),
            });
        }
        if self.best_ask_px <= self.best_bid_px {
            return Err(CoreError::Parse {
                line,
                msg: format!(
                    "best_ask_px ({}) must exceed best_bid_px ({})",
                    self.best_ask_px, self.best_bid_px
                ),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EventKind {
    VolumeChange,
    Overtaken,
    DepletedRecede,
    DepletedRefill,
}

/// One classified best-quote event.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuoteEvent {
    /// Event-time index, consecutive within a session.
    pub t: u64,
    /// Intraday bin, 1..=78.
    pub bin: u32,
    pub side: Side,
    pub kind: EventKind,
    /// Signed volume change in shares; only meaningful for `VolumeChange`.
    pub dv: i64,
    /// (V_B, V_A) before the event (before any folded transient).
    pub pre: (u64, u64),
    /// (V_B, V_A) after the event.
    pub post: (u64, u64),
    /// Volume of the queue that becomes the best on `side`, for jump kinds.
    pub new_best_vol: u64,
}

/// Input format for [`parse_events`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamFormat {
    Ndjson,
    Csv,
}

const CSV_HEADER: [&str; 8] = [
    "ts",
    "side",
    "action",
    "size",
    "best_bid_px",
    "best_ask_px",
    "bid_vol",
    "ask_vol",
];

/// Parse an event stream. Records must be in nondecreasing `ts` order;
/// malformed lines and ordering violations error with their line number.
pub fn parse_events(input: &str, format: StreamFormat) -> Result<Vec<RawRecord>> {
    match format {
        StreamFormat::Ndjson => parse_ndjson(input),
        StreamFormat::Csv => parse_csv(input),
    }
}

fn check_order(records: &[RawRecord], rec: &RawRecord, line: usize) -> Result<()> {
    if let Some(prev) = records.last() {
        if rec.ts < prev.ts {
            return Err(CoreError::Parse {
                line,
                msg: format!("ts regression: {} after {}", rec.ts, prev.ts),
            });
        }
    }
    Ok(())
}

fn parse_ndjson(input: &str) -> Result<Vec<RawRecord>> {
    let mut out = Vec::new();
    for (i, raw_line) in input.lines().enumerate() {
        let line = i + 1;
        let trimmed = raw_line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let rec: RawRecord = serde_json::from_str(trimmed).map_err(|e| CoreError::Parse {
            line,
            msg: e.to_string(),
        })?;
        rec.validate(line)?;
        check_order(&out, &rec, line)?;
        out.push(rec);
    }
    Ok(out)
}

fn parse_csv(input: &str) -> Result<Vec<RawRecord>> {
    let mut lines = input.lines().enumerate();
    let header = loop {
        match lines.next() {
            Some((_, l)) if l.trim().is_empty() => continue,
            Some((_, l)) => break l,
            None => return Ok(Vec::new()),
        }
    };
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols != CSV_HEADER {
        return Err(CoreError::Parse {
            line: 1,
            msg: format!(
                "csv header must be {:?}, got {:?}",
                CSV_HEADER.join(","),
                header
            ),
        });
    }
    let mut out = Vec::new();
    for (i, raw_line) in lines {
        let line = i + 1;
        let trimmed = raw_line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let f: Vec<&str> = trimmed.split(',').map(str::trim).collect();
        if f.len() != 8 {
            return Err(CoreError::Parse {
                line,
                msg: format!("expected 8 fields, got {}", f.len()),
            });
        }
        let side = match f[1] {
            "B" | "b" | "Bid" | "bid" => Side::Bid,
            "A" | "a" | "Ask" | "ask" => Side::Ask,
            other => {
                return Err(CoreError::Parse {
                    line,
                    msg: format!("unknown side {other:?}"),
                })
            }
        };
        let action = match f[2].to_ascii_lowercase().as_str() {
            "add" => Action::Add,
            "cancel" => Action::Cancel,
            "trade" => Action::Trade,
            other => {
                return Err(CoreError::Parse {
                    line,
                    msg: format!("unknown action {other:?}"),
                })
            }
        };
        let num = |s: &str, name: &str| -> Result<i64> {
            s.parse().map_err(|_| CoreError::Parse {
                line,
                msg: format!("bad {name}: {s:?}"),
            })
        };
        let rec = RawRecord {
            ts: num(f[0], "ts")?,
            side,
            action,
            size: num(f[3], "size")? as u64,
            best_bid_px: num(f[4], "best_bid_px")?,
            best_ask_px: num(f[5], "best_ask_px")?,
            bid_vol: num(f[6], "bid_vol")? as u64,
            ask_vol: num(f[7], "ask_vol")? as u64,
        };
        rec.validate(line)?;
        check_order(&out, &rec, line)?;
        out.push(rec);
    }
    Ok(out)
}

/// Session layout and tolerance switches for classification.
#[derive(Debug, Clone)]
pub struct ClassifyConfig {
    /// Session open; defaults to the first record's timestamp.
    pub session_open_ns: Option<i64>,
    /// Accept sessions that do not cover all 78 bins.
    pub allow_partial: bool,
}

impl Default for ClassifyConfig {
    fn default() -> Self {
        ClassifyConfig {
            session_open_ns: None,
            allow_partial: true,
        }
    }
}

/// Bookkeeping for records that do not become events.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tally {
    /// Total records seen.
    pub records: u64,
    /// First record of the session (seeds the state, no transition).
    pub seeded: u64,
    /// Records with no best-quote change.
    pub noop: u64,
    /// Records outside the 78-bin session window (auctions etc.).
    pub out_of_window: u64,
    /// Transient records folded into a later jump event.
    pub folded: u64,
    /// Unresolvable transients (e.g. dangling at session end).
    pub dropped: u64,
    /// Records outside the model state space (spread > 2 ticks, multi-tick
    /// price moves, ambiguous double-sided changes).
    pub skipped: u64,
    pub sessions: u64,
}

impl Tally {
    /// Records that completed a state transition the model can describe.
    pub fn contributing(&self) -> u64 {
        self.records - self.seeded - self.noop - self.out_of_window - self.folded
    }

    pub fn merge(&mut self, other: &Tally) {
        self.records += other.records;
        self.seeded += other.seeded;
        self.noop += other.noop;
        self.out_of_window += other.out_of_window;
        self.folded += other.folded;
        self.dropped += other.dropped;
        self.skipped += other.skipped;
        self.sessions += other.sessions;
    }
}

#[derive(Debug, Clone)]
pub struct ClassifyOutput {
    pub events: Vec<QuoteEvent>,
    pub tally: Tally,
}

struct Pending {
    side: Side,
    /// State before the volume hit zero.
    pre: (u64, u64),
}

struct Gap {
    /// Side whose price degraded, opening the two-tick spread.
    degraded: Side,
    /// State before the gap opened.
    pre: (u64, u64),
    /// Volume sitting at the degraded price (the promoted queue).
    promoted_vol: u64,
}

/// Classify the raw records of one session into quote events.
pub fn classify(records: &[RawRecord], cfg: &ClassifyConfig) -> Result<ClassifyOutput> {
    let mut out = ClassifyOutput {
        events: Vec::new(),
        tally: Tally::default(),
    };
    if records.is_empty() {
        return Ok(out);
    }
    out.tally.sessions = 1;
    let open = cfg.session_open_ns.unwrap_or(records[0].ts);
    let session_len_ns = BINS_PER_SESSION as i64 * BIN_SECONDS * 1_000_000_000;
    let bin_of = |ts: i64| -> Option<u32> {
        let off = ts - open;
        if off < 0 || off >= session_len_ns {
            return None;
        }
        Some(1 + (off / (BIN_SECONDS * 1_000_000_000)) as u32)
    };

    let mut prev: Option<RawRecord> = None;
    let mut pending: Option<Pending> = None;
    let mut gap: Option<Gap> = None;
    let mut t: u64 = 0;
    let mut bins_seen = vec![false; BINS_PER_SESSION as usize + 1];

    for rec in records {
        out.tally.records += 1;
        let bin = match bin_of(rec.ts) {
            Some(b) => b,
            None => {
                out.tally.out_of_window += 1;
                continue;
            }
        };
        bins_seen[bin as usize] = true;
        let p = match prev {
            Some(p) => p,
            None => {
                out.tally.seeded += 1;
                prev = Some(*rec);
                continue;
            }
        };
        let dbid_px = rec.best_bid_px - p.best_bid_px;
        let dask_px = rec.best_ask_px - p.best_ask_px;
        let dbid_v = rec.bid_vol as i64 - p.bid_vol as i64;
        let dask_v = rec.ask_vol as i64 - p.ask_vol as i64;
        let spread = rec.best_ask_px - rec.best_bid_px;
        let pre_state = (p.bid_vol, p.ask_vol);
        let post_state = (rec.bid_vol, rec.ask_vol);
        prev = Some(*rec);

        if !(1..=2).contains(&spread) || dbid_px.abs() > 1 || dask_px.abs() > 1 {
            out.tally.skipped += 1;
            pending = None;
            gap = None;
            continue;
        }

        if dbid_px == 0 && dask_px == 0 {
            if dbid_v == 0 && dask_v == 0 {
                out.tally.noop += 1;
                continue;
            }
            if let Some(pd) = &pending {
                // an empty best is being resolved at the same price; the
                // opposite queue may have been redistributed in the same
                // transition, which stays folded into this event
                let side = pd.side;
                let vol_now = match side {
                    Side::Bid => rec.bid_vol,
                    Side::Ask => rec.ask_vol,
                };
                if vol_now > 0 {
                    let pre = pd.pre;
                    pending = None;
                    out.events.push(QuoteEvent {
                        t,
                        bin,
                        side,
                        kind: EventKind::DepletedRefill,
                        dv: 0,
                        pre,
                        post: post_state,
                        new_best_vol: vol_now,
                    });
                    t += 1;
                } else {
                    // still empty; fold whatever happened meanwhile
                    out.tally.folded += 1;
                }
                continue;
            }
            if dbid_v != 0 && dask_v != 0 {
                out.tally.skipped += 1;
                continue;
            }
            let (side, dv, vol_now) = if dbid_v != 0 {
                (Side::Bid, dbid_v, rec.bid_vol)
            } else {
                (Side::Ask, dask_v, rec.ask_vol)
            };
            if vol_now == 0 {
                // best emptied; hold until the next record resolves it
                pending = Some(Pending {
                    side,
                    pre: pre_state,
                });
                out.tally.folded += 1;
                continue;
            }
            out.events.push(QuoteEvent {
                t,
                bin,
                side,
                kind: EventKind::VolumeChange,
                dv,
                pre: pre_state,
                post: post_state,
                new_best_vol: 0,
            });
            t += 1;
            continue;
        }

        let pair_shift = dbid_px == dask_px && dbid_px != 0;
        if pair_shift {
            // both quotes relabeled one tick together: a single resolved jump
            let up = dbid_px > 0;
            let (side, kind) = match (&pending, up) {
                (Some(pd), true) if pd.side == Side::Ask => (Side::Ask, EventKind::DepletedRecede),
                (Some(pd), false) if pd.side == Side::Bid => (Side::Bid, EventKind::DepletedRecede),
                (_, true) => (Side::Bid, EventKind::Overtaken),
                (_, false) => (Side::Ask, EventKind::Overtaken),
            };
            let pre = match (kind, pending.take()) {
                (EventKind::DepletedRecede, Some(pd)) => pd.pre,
                (_, Some(_)) => {
                    out.tally.dropped += 1;
                    pre_state
                }
                (_, None) => pre_state,
            };
            let new_best_vol = match side {
                Side::Bid => rec.bid_vol,
                Side::Ask => rec.ask_vol,
            };
            out.events.push(QuoteEvent {
                t,
                bin,
                side,
                kind,
                dv: 0,
                pre,
                post: post_state,
                new_best_vol,
            });
            t += 1;
            gap = None;
            continue;
        }

        // single-side price move: the spread opens to 2 or closes back to 1
        let (side, improved) = if dbid_px != 0 {
            (Side::Bid, dbid_px > 0)
        } else {
            (Side::Ask, dask_px < 0)
        };
        let side_vol = match side {
            Side::Bid => rec.bid_vol,
            Side::Ask => rec.ask_vol,
        };
        if !improved {
            // price degraded: the old best vanished, the queue behind was
            // promoted
            let pre = match pending.take() {
                Some(pd) if pd.side == side => pd.pre,
                Some(_) => {
                    out.tally.dropped += 1;
                    pre_state
                }
                None => pre_state,
            };
            if spread == 2 {
                // the gap stays open; the resolution decides the kind
                gap = Some(Gap {
                    degraded: side,
                    pre,
                    promoted_vol: side_vol,
                });
                out.tally.folded += 1;
                continue;
            }
            out.events.push(QuoteEvent {
                t,
                bin,
                side,
                kind: EventKind::DepletedRecede,
                dv: 0,
                pre,
                post: post_state,
                new_best_vol: side_vol,
            });
            t += 1;
            continue;
        }
        // improved price: either a gap resolution or a plain overtake
        if let Some(g) = gap.take() {
            if g.degraded == side && spread == 1 {
                // the degraded side came back to its old price: a refill
                out.events.push(QuoteEvent {
                    t,
                    bin,
                    side,
                    kind: EventKind::DepletedRefill,
                    dv: 0,
                    pre: g.pre,
                    post: post_state,
                    new_best_vol: side_vol,
                });
                t += 1;
                continue;
            }
            if g.degraded != side && spread == 1 {
                // the opposite side filled the gap: the degrade was real,
                // then the old best on this side was overtaken
                let mid = match g.degraded {
                    Side::Bid => (g.promoted_vol, g.pre.1),
                    Side::Ask => (g.pre.0, g.promoted_vol),
                };
                out.events.push(QuoteEvent {
                    t,
                    bin,
                    side: g.degraded,
                    kind: EventKind::DepletedRecede,
                    dv: 0,
                    pre: g.pre,
                    post: mid,
                    new_best_vol: g.promoted_vol,
                });
                t += 1;
                out.events.push(QuoteEvent {
                    t,
                    bin,
                    side,
                    kind: EventKind::Overtaken,
                    dv: 0,
                    pre: mid,
                    post: post_state,
                    new_best_vol: side_vol,
                });
                t += 1;
                continue;
            }
            out.tally.skipped += 1;
            continue;
        }
        if spread == 1 {
            out.events.push(QuoteEvent {
                t,
                bin,
                side,
                kind: EventKind::Overtaken,
                dv: 0,
                pre: pre_state,
                post: post_state,
                new_best_vol: side_vol,
            });
            t += 1;
            continue;
        }
        out.tally.skipped += 1;
    }

    if pending.is_some() || gap.is_some() {
        out.tally.dropped += 1;
    }

    if !cfg.allow_partial {
        let missing: Vec<u32> = (1..=BINS_PER_SESSION)
            .filter(|b| !bins_seen[*b as usize])
            .collect();
        if !missing.is_empty() {
            return Err(CoreError::data(format!(
                "partial session: {} of 78 bins have no records (first missing: {})",
                missing.len(),
                missing[0]
            )));
        }
    }
    Ok(out)
}

/// Rescaled pre-event queue state, x = V_B / vbar(bin), y = V_A / vbar(bin).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RescaledState {
    pub x: f64,
    pub y: f64,
}

/// Rescale an event by the intraday average volume of its bin. Returns the
/// pre-event state and, for volume changes, dv / vbar.
pub fn rescale(ev: &QuoteEvent, profile: &IntradayProfile) -> Result<(RescaledState, Option<f64>)> {
    let vbar = profile.vbar_at(ev.bin)?;
    if !crate::numerics::positive(vbar) {
        return Err(CoreError::config(format!(
            "vbar({}) = {vbar} must be positive for rescaling",
            ev.bin
        )));
    }
    let state = RescaledState {
        x: ev.pre.0 as f64 / vbar,
        y: ev.pre.1 as f64 / vbar,
    };
    let dv = match ev.kind {
        EventKind::VolumeChange => Some(ev.dv as f64 / vbar),
        _ => None,
    };
    Ok((state, dv))
}

/// Mirror a record: swap bid and ask. Prices are negated and swapped so the
/// ask stays above the bid; classification commutes with this map.
pub fn mirror_record(r: &RawRecord) -> RawRecord {
    RawRecord {
        ts: r.ts,
        side: r.side.opposite(),
        action: r.action,
        size: r.size,
        best_bid_px: -r.best_ask_px,
        best_ask_px: -r.best_bid_px,
        bid_vol: r.ask_vol,
        ask_vol: r.bid_vol,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(
        ts: i64,
        side: Side,
        action: Action,
        size: u64,
        bpx: i64,
        apx: i64,
        bv: u64,
        av: u64,
    ) -> RawRecord {
        RawRecord {
            ts,
            side,
            action,
            size,
            best_bid_px: bpx,
            best_ask_px: apx,
            bid_vol: bv,
            ask_vol: av,
        }
    }

    #[test]
    fn ndjson_single_record_maps_fields() {
        let line = r#"{"ts": 1, "side": "B", "action": "trade", "size": 100, "best_bid_px": 100, "best_ask_px": 101, "bid_vol": 5000, "ask_vol": 4000}"#;
        let recs = parse_events(line, StreamFormat::Ndjson).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].side, Side::Bid);
        assert_eq!(recs[0].action, Action::Trade);
        assert_eq!(recs[0].size, 100);
    }

    #[test]
    fn empty_stream_parses_to_nothing() {
        assert!(parse_events("", StreamFormat::Ndjson).unwrap().is_empty());
        assert!(parse_events("", StreamFormat::Csv).unwrap().is_empty());
    }

    #[test]
    fn ts_regression_names_line_two() {
        let input = concat!(
            r#"{"ts": 10, "side": "B", "action": "add", "size": 1, "best_bid_px": 100, "best_ask_px": 101, "bid_vol": 10, "ask_vol": 10}"#,
            "\n",
            r#"{"ts": 9, "side": "B", "action": "add", "size": 1, "best_bid_px": 100, "best_ask_px": 101, "bid_vol": 11, "ask_vol": 10}"#,
        );
        match parse_events(input, StreamFormat::Ndjson) {
            Err(CoreError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_side_rejected() {
        let input = r#"{"ts": 1, "side": "X", "action": "add", "size": 1, "best_bid_px": 1, "best_ask_px": 2, "bid_vol": 1, "ask_vol": 1}"#;
        assert!(parse_events(input, StreamFormat::Ndjson).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let csv = "ts,side,action,size,best_bid_px,best_ask_px,bid_vol,ask_vol\n\
                   1,B,add,100,100,101,5000,4000\n\
                   2,A,trade,50,100,101,5000,3950\n";
        let recs = parse_events(csv, StreamFormat::Csv).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[1].ask_vol, 3950);
    }

    #[test]
    fn csv_header_must_match_exactly() {
        let csv = "time,side,action,size,best_bid_px,best_ask_px,bid_vol,ask_vol\n\
                   1,B,add,100,100,101,5000,4000\n";
        match parse_events(csv, StreamFormat::Csv) {
            Err(CoreError::Parse { line: 1, .. }) => {}
            other => panic!("expected header error, got {other:?}"),
        }
    }

    #[test]
    fn volume_change_classification() {
        let records = vec![
            rec(0, Side::Bid, Action::Add, 1, 100, 101, 5000, 4000),
            rec(1, Side::Bid, Action::Trade, 200, 100, 101, 4800, 4000),
        ];
        let out = classify(&records, &ClassifyConfig::default()).unwrap();
        assert_eq!(out.events.len(), 1);
        let ev = out.events[0];
        assert_eq!(ev.kind, EventKind::VolumeChange);
        assert_eq!(ev.side, Side::Bid);
        assert_eq!(ev.dv, -200);
        assert_eq!(ev.pre, (5000, 4000));
    }

    #[test]
    fn depleted_recede_via_zero_then_price_drop() {
        // bid hits 0, next record shows the best bid one tick lower
        let records = vec![
            rec(0, Side::Bid, Action::Add, 1, 100, 101, 500, 4000),
            rec(1, Side::Bid, Action::Trade, 500, 100, 101, 0, 4000),
            rec(2, Side::Bid, Action::Trade, 1, 99, 100, 7000, 4000),
        ];
        let out = classify(&records, &ClassifyConfig::default()).unwrap();
        assert_eq!(out.events.len(), 1);
        let ev = out.events[0];
        assert_eq!(ev.kind, EventKind::DepletedRecede);
        assert_eq!(ev.side, Side::Bid);
        assert_eq!(ev.new_best_vol, 7000);
        assert_eq!(ev.pre, (500, 4000), "pre is the state before depletion");
        assert_eq!(out.tally.folded, 1);
    }

    #[test]
    fn depleted_refill_keeps_price() {
        let records = vec![
            rec(0, Side::Ask, Action::Add, 1, 100, 101, 5000, 300),
            rec(1, Side::Ask, Action::Trade, 300, 100, 101, 5000, 0),
            rec(2, Side::Ask, Action::Add, 900, 100, 101, 5000, 900),
        ];
        let out = classify(&records, &ClassifyConfig::default()).unwrap();
        assert_eq!(out.events.len(), 1);
        let ev = out.events[0];
        assert_eq!(ev.kind, EventKind::DepletedRefill);
        assert_eq!(ev.side, Side::Ask);
        assert_eq!(ev.new_best_vol, 900);
    }

    #[test]
    fn pair_shift_up_is_bid_overtaken() {
        let records = vec![
            rec(0, Side::Bid, Action::Add, 1, 100, 101, 5000, 4000),
            rec(1, Side::Bid, Action::Add, 800, 101, 102, 800, 4000),
        ];
        let out = classify(&records, &ClassifyConfig::default()).unwrap();
        assert_eq!(out.events.len(), 1);
        let ev = out.events[0];
        assert_eq!(ev.kind, EventKind::Overtaken);
        assert_eq!(ev.side, Side::Bid);
        assert_eq!(ev.new_best_vol, 800);
    }

    #[test]
    fn pair_shift_down_after_bid_depletion_is_recede() {
        let records = vec![
            rec(0, Side::Bid, Action::Add, 1, 100, 101, 400, 4000),
            rec(1, Side::Bid, Action::Cancel, 400, 100, 101, 0, 4000),
            rec(2, Side::Bid, Action::Add, 1, 99, 100, 6100, 4000),
        ];
        let out = classify(&records, &ClassifyConfig::default()).unwrap();
        assert_eq!(out.events.len(), 1);
        let ev = out.events[0];
        assert_eq!(ev.kind, EventKind::DepletedRecede);
        assert_eq!(ev.side, Side::Bid);
        assert_eq!(ev.new_best_vol, 6100);
        assert_eq!(ev.pre, (400, 4000));
    }

    #[test]
    fn gap_resolution_emits_recede_then_overtaken() {
        // ask recedes (spread 2), then a buy order fills the gap: a new bid
        let records = vec![
            rec(0, Side::Ask, Action::Add, 1, 100, 101, 5000, 300),
            rec(1, Side::Ask, Action::Trade, 300, 100, 102, 5000, 2500),
            rec(2, Side::Bid, Action::Add, 700, 101, 102, 700, 2500),
        ];
        let out = classify(&records, &ClassifyConfig::default()).unwrap();
        assert_eq!(out.events.len(), 2);
        assert_eq!(out.events[0].kind, EventKind::DepletedRecede);
        assert_eq!(out.events[0].side, Side::Ask);
        assert_eq!(out.events[0].new_best_vol, 2500);
        assert_eq!(out.events[1].kind, EventKind::Overtaken);
        assert_eq!(out.events[1].side, Side::Bid);
        assert_eq!(out.events[1].new_best_vol, 700);
        // chaining: post of the first equals pre of the second
        assert_eq!(out.events[0].post, out.events[1].pre);
    }

    #[test]
    fn gap_resolution_back_to_same_price_is_refill() {
        let records = vec![
            rec(0, Side::Ask, Action::Add, 1, 100, 101, 5000, 300),
            rec(1, Side::Ask, Action::Trade, 300, 100, 102, 5000, 2500),
            rec(2, Side::Ask, Action::Add, 450, 100, 101, 5000, 450),
        ];
        let out = classify(&records, &ClassifyConfig::default()).unwrap();
        assert_eq!(out.events.len(), 1);
        assert_eq!(out.events[0].kind, EventKind::DepletedRefill);
        assert_eq!(out.events[0].side, Side::Ask);
        assert_eq!(out.events[0].new_best_vol, 450);
    }

    #[test]
    fn dangling_depletion_is_dropped() {
        let records = vec![
            rec(0, Side::Bid, Action::Add, 1, 100, 101, 500, 4000),
            rec(1, Side::Bid, Action::Trade, 500, 100, 101, 0, 4000),
        ];
        let out = classify(&records, &ClassifyConfig::default()).unwrap();
        assert!(out.events.is_empty());
        assert_eq!(out.tally.dropped, 1);
    }

    #[test]
    fn wide_spread_is_skipped() {
        let records = vec![
            rec(0, Side::Bid, Action::Add, 1, 100, 101, 500, 400),
            rec(1, Side::Bid, Action::Add, 1, 100, 104, 500, 900),
        ];
        let out = classify(&records, &ClassifyConfig::default()).unwrap();
        assert!(out.events.is_empty());
        assert_eq!(out.tally.skipped, 1);
    }

    #[test]
    fn event_chaining_and_conservation() {
        let records = vec![
            rec(0, Side::Bid, Action::Add, 1, 100, 101, 5000, 4000),
            rec(1, Side::Bid, Action::Trade, 200, 100, 101, 4800, 4000),
            rec(2, Side::Ask, Action::Add, 500, 100, 101, 4800, 4500),
            rec(3, Side::Bid, Action::Cancel, 4800, 100, 101, 0, 4500),
            rec(4, Side::Bid, Action::Add, 1, 99, 100, 8000, 4500),
            rec(5, Side::Ask, Action::Trade, 100, 99, 100, 8000, 4400),
        ];
        let out = classify(&records, &ClassifyConfig::default()).unwrap();
        for pair in out.events.windows(2) {
            assert_eq!(pair[0].post, pair[1].pre);
        }
        assert_eq!(
            out.events.len() as u64 + out.tally.dropped + out.tally.skipped,
            out.tally.contributing()
        );
        for (i, ev) in out.events.iter().enumerate() {
            assert_eq!(ev.t, i as u64);
        }
    }

    #[test]
    fn mirror_symmetry_on_mixed_stream() {
        let records = vec![
            rec(0, Side::Bid, Action::Add, 1, 100, 101, 5000, 4000),
            rec(1, Side::Bid, Action::Trade, 200, 100, 101, 4800, 4000),
            rec(2, Side::Bid, Action::Cancel, 4800, 100, 101, 0, 4000),
            rec(3, Side::Bid, Action::Add, 1, 99, 100, 8000, 4000),
            rec(4, Side::Ask, Action::Add, 900, 99, 100, 8000, 900),
            rec(5, Side::Ask, Action::Trade, 100, 99, 100, 8000, 800),
        ];
        let out = classify(&records, &ClassifyConfig::default()).unwrap();
        let mirrored: Vec<RawRecord> = records.iter().map(mirror_record).collect();
        let mout = classify(&mirrored, &ClassifyConfig::default()).unwrap();
        assert_eq!(out.events.len(), mout.events.len());
        assert!(!out.events.is_empty());
        for (a, b) in out.events.iter().zip(&mout.events) {
            assert_eq!(a.side.opposite(), b.side);
            assert_eq!(a.kind, b.kind);
            assert_eq!(a.dv, b.dv);
            assert_eq!((a.pre.1, a.pre.0), b.pre);
            assert_eq!((a.post.1, a.post.0), b.post);
            assert_eq!(a.new_best_vol, b.new_best_vol);
        }
        assert_eq!(out.tally, mout.tally);
    }

    #[test]
    fn partial_session_rejected_without_override() {
        let records = vec![
            rec(0, Side::Bid, Action::Add, 1, 100, 101, 5000, 4000),
            rec(1, Side::Bid, Action::Trade, 200, 100, 101, 4800, 4000),
        ];
        let cfg = ClassifyConfig {
            allow_partial: false,
            ..Default::default()
        };
        assert!(classify(&records, &cfg).is_err());
    }

    #[test]
    fn rescaling_is_the_plain_quotient() {
        use crate::seasonality::IntradayProfile;
        let profile = IntradayProfile::flat(22_100.0, 100.0);
        let ev = QuoteEvent {
            t: 0,
            bin: 1,
            side: Side::Bid,
            kind: EventKind::VolumeChange,
            dv: 890,
            pre: (22_100, 15_000),
            post: (22_990, 15_000),
            new_best_vol: 0,
        };
        let (state, dv) = rescale(&ev, &profile).unwrap();
        assert_eq!(state.x, 1.0);
        assert_eq!(dv.unwrap(), 890.0 / 22_100.0);
        assert!((dv.unwrap() - 0.0403).abs() < 2e-4);
        let zero = QuoteEvent {
            pre: (0, 15_000),
            ..ev
        };
        let (s0, _) = rescale(&zero, &profile).unwrap();
        assert_eq!(s0.x, 0.0);
    }

    #[test]
    fn out_of_window_records_tallied() {
        let late = BINS_PER_SESSION as i64 * BIN_SECONDS * 1_000_000_000 + 5;
        let records = vec![
            rec(0, Side::Bid, Action::Add, 1, 100, 101, 5000, 4000),
            rec(late, Side::Bid, Action::Trade, 200, 100, 101, 4800, 4000),
        ];
        let out = classify(&records, &ClassifyConfig::default()).unwrap();
        assert!(out.events.is_empty());
        assert_eq!(out.tally.out_of_window, 1);
    }
}
