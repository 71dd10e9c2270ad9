//! Multivariate sensor series in two encodings.
//!
//! CSV: header `time,node_<id>_<channel>,...` with columns grouped by node,
//! ISO-8601 timestamps (`2018-01-01T00:05:00`) at a fixed interval.
//!
//! Binary: magic `STTS1`, then little-endian `u64 T, N, C`, `i64` start
//! (Unix seconds of the naive timestamp), `u64` interval in minutes, `C`
//! channel names (`u64` length + UTF-8), a `u8` node-id flag optionally
//! followed by `N` `i64` ids, and `T·N·C` `f64` values in time, node,
//! channel order.

use std::path::Path;

use chrono::{DateTime, NaiveDateTime};

use super::calendar::Calendar;
use crate::error::{read_file, write_file, Error, Result};

pub const BINARY_MAGIC: &[u8; 5] = b"STTS1";
const TIME_FORMAT: &str = "%Y-%m-%dT%H:%M:%S";
/// Interval assumed for single-row CSV files.
pub const DEFAULT_INTERVAL: u32 = 5;

#[derive(Clone, Debug, PartialEq)]
pub struct TrafficDataset {
    steps: usize,
    nodes: usize,
    channel_names: Vec<String>,
    values: Vec<f64>,
    start: NaiveDateTime,
    interval_minutes: u32,
    node_ids: Option<Vec<i64>>,
}

impl TrafficDataset {
    pub fn new(
        steps: usize,
        nodes: usize,
        channel_names: Vec<String>,
        values: Vec<f64>,
        start: NaiveDateTime,
        interval_minutes: u32,
    ) -> Result<Self> {
        if steps == 0 || nodes == 0 || channel_names.is_empty() {
            return Err(Error::Data("dataset needs at least one step, node and channel".into()));
        }
        if values.len() != steps * nodes * channel_names.len() {
            return Err(Error::Data(format!(
                "{} values for {steps} steps x {nodes} nodes x {} channels",
                values.len(),
                channel_names.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            let c = channel_names.len();
            return Err(Error::Data(format!(
                "non-finite reading at step {}, node {}, channel {}",
                i / (nodes * c),
                (i / c) % nodes,
                i % c
            )));
        }
        // validates interval and start
        Calendar::new(start, interval_minutes, steps)?;
        Ok(Self {
            steps,
            nodes,
            channel_names,
            values,
            start,
            interval_minutes,
            node_ids: None,
        })
    }

    pub fn with_node_ids(mut self, ids: Vec<i64>) -> Result<Self> {
        if ids.len() != self.nodes {
            return Err(Error::Data(format!("{} node ids for {} nodes", ids.len(), self.nodes)));
        }
        let mut sorted = ids.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Data("duplicate node ids".into()));
        }
        self.node_ids = if ids.iter().enumerate().all(|(i, &id)| id == i as i64) {
            None
        } else {
            Some(ids)
        };
        Ok(self)
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn channels(&self) -> usize {
        self.channel_names.len()
    }

    pub fn channel_names(&self) -> &[String] {
        &self.channel_names
    }

    /// `T × N × C` row-major.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, t: usize, n: usize, c: usize) -> f64 {
        self.values[(t * self.nodes + n) * self.channels() + c]
    }

    pub fn start(&self) -> NaiveDateTime {
        self.start
    }

    pub fn interval_minutes(&self) -> u32 {
        self.interval_minutes
    }

    pub fn node_ids(&self) -> Option<&[i64]> {
        self.node_ids.as_deref()
    }

    /// Node id `i` as written in files.
    pub fn node_id(&self, i: usize) -> i64 {
        self.node_ids.as_ref().map_or(i as i64, |ids| ids[i])
    }

    pub fn calendar(&self) -> Calendar {
        Calendar::new(self.start, self.interval_minutes, self.steps).expect("validated at construction")
    }

    /// Series of one channel, `T × N`.
    pub fn channel(&self, c: usize) -> Vec<f64> {
        self.values.chunks(self.channels()).map(|r| r[c]).collect()
    }

    /// A contiguous range of steps, keeping the calendar aligned.
    pub fn slice(&self, from: usize, to: usize) -> Result<Self> {
        if from >= to || to > self.steps {
            return Err(Error::Data(format!("bad step range {from}..{to} of {}", self.steps)));
        }
        let row = self.nodes * self.channels();
        let mut out = Self::new(
            to - from,
            self.nodes,
            self.channel_names.clone(),
            self.values[from * row..to * row].to_vec(),
            self.calendar().timestamp(from),
            self.interval_minutes,
        )?;
        out.node_ids = self.node_ids.clone();
        Ok(out)
    }

    fn column_names(&self) -> Vec<String> {
        let mut cols = vec!["time".to_string()];
        for n in 0..self.nodes {
            for ch in &self.channel_names {
                cols.push(format!("node_{}_{ch}", self.node_id(n)));
            }
        }
        cols
    }

    pub fn to_csv_string(&self) -> String {
        let mut s = self.column_names().join(",");
        s.push('\n');
        let cal = self.calendar();
        let row = self.nodes * self.channels();
        for t in 0..self.steps {
            s.push_str(&cal.timestamp(t).format(TIME_FORMAT).to_string());
            for v in &self.values[t * row..(t + 1) * row] {
                s.push(',');
                s.push_str(&v.to_string());
            }
            s.push('\n');
        }
        s
    }

    pub fn from_csv_str(text: &str, path: &Path) -> Result<Self> {
        let err = |line: u64, msg: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            msg,
        };
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(true)
            .from_reader(text.as_bytes());
        let header = reader.headers().map_err(|e| err(1, e.to_string()))?.clone();
        if header.get(0).map(str::trim) != Some("time") || header.len() < 2 {
            return Err(err(1, "header must start with `time` followed by node columns".into()));
        }
        let mut ids: Vec<i64> = Vec::new();
        let mut channels: Vec<String> = Vec::new();
        let mut cols: Vec<(i64, String)> = Vec::new();
        for name in header.iter().skip(1) {
            let name = name.trim();
            let rest = name
                .strip_prefix("node_")
                .ok_or_else(|| err(1, format!("column `{name}` is not `node_<id>_<channel>`")))?;
            let (id, ch) = rest
                .split_once('_')
                .ok_or_else(|| err(1, format!("column `{name}` has no channel part")))?;
            let id: i64 = id
                .parse()
                .map_err(|_| err(1, format!("column `{name}` has a non-integer node id")))?;
            if ch.is_empty() {
                return Err(err(1, format!("column `{name}` has an empty channel name")));
            }
            cols.push((id, ch.to_string()));
            if ids.last() != Some(&id) {
                ids.push(id);
            }
            if ids.len() == 1 {
                channels.push(ch.to_string());
            }
        }
        let (n, c) = (ids.len(), channels.len());
        let expected: Vec<(i64, String)> = ids
            .iter()
            .flat_map(|&id| channels.iter().map(move |ch| (id, ch.clone())))
            .collect();
        if cols != expected {
            return Err(err(
                1,
                "columns must be grouped by node with the same channels in the same order".into(),
            ));
        }
        let mut values = Vec::new();
        let mut times: Vec<NaiveDateTime> = Vec::new();
        for rec in reader.records() {
            let rec = rec.map_err(|e| {
                let line = e.position().map_or(0, |p| p.line());
                err(line, e.to_string())
            })?;
            let line = rec.position().map_or(0, |p| p.line());
            if rec.len() != n * c + 1 {
                return Err(err(
                    line,
                    format!("expected {} fields, found {}", n * c + 1, rec.len()),
                ));
            }
            let ts = NaiveDateTime::parse_from_str(rec[0].trim(), TIME_FORMAT)
                .map_err(|e| err(line, format!("bad timestamp `{}`: {e}", &rec[0])))?;
            if times.len() >= 2 {
                let step = times[1] - times[0];
                if ts - *times.last().unwrap() != step {
                    return Err(err(line, format!("timestamp {ts} breaks the regular interval")));
                }
            }
            times.push(ts);
            for (j, field) in rec.iter().enumerate().skip(1) {
                let v: f64 = field
                    .trim()
                    .parse()
                    .map_err(|_| err(line, format!("column {}: `{field}` is not a number", j + 1)))?;
                if !v.is_finite() {
                    return Err(err(line, format!("column {}: non-finite value `{field}`", j + 1)));
                }
                values.push(v);
            }
        }
        if times.is_empty() {
            return Err(err(2, "no data rows".into()));
        }
        let interval = if times.len() >= 2 {
            let minutes = (times[1] - times[0]).num_minutes();
            if minutes <= 0 || (times[1] - times[0]).num_seconds() != minutes * 60 {
                return Err(err(3, "interval must be a positive whole number of minutes".into()));
            }
            minutes as u32
        } else {
            DEFAULT_INTERVAL
        };
        Self::new(times.len(), n, channels, values, times[0], interval)?.with_node_ids(ids)
    }

    pub fn to_binary(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(64 + self.values.len() * 8);
        out.extend_from_slice(BINARY_MAGIC);
        for v in [self.steps, self.nodes, self.channels()] {
            out.extend_from_slice(&(v as u64).to_le_bytes());
        }
        out.extend_from_slice(&self.start.and_utc().timestamp().to_le_bytes());
        out.extend_from_slice(&u64::from(self.interval_minutes).to_le_bytes());
        for name in &self.channel_names {
            out.extend_from_slice(&(name.len() as u64).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
        }
        match &self.node_ids {
            None => out.push(0),
            Some(ids) => {
                out.push(1);
                for id in ids {
                    out.extend_from_slice(&id.to_le_bytes());
                }
            }
        }
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_binary(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(5)? != BINARY_MAGIC {
            return Err(Error::Format("missing STTS1 header".into()));
        }
        let steps = r.u64()? as usize;
        let nodes = r.u64()? as usize;
        let channels = r.u64()? as usize;
        let start_secs = r.i64()?;
        let interval = u32::try_from(r.u64()?)
            .map_err(|_| Error::Format("interval out of range".into()))?;
        let mut names = Vec::with_capacity(channels);
        for _ in 0..channels {
            let len = r.u64()? as usize;
            let raw = r.take(len)?;
            names.push(
                String::from_utf8(raw.to_vec())
                    .map_err(|_| Error::Format("channel name is not UTF-8".into()))?,
            );
        }
        let ids = match r.take(1)?[0] {
            0 => None,
            1 => Some((0..nodes).map(|_| r.i64()).collect::<Result<Vec<_>>>()?),
            f => return Err(Error::Format(format!("bad node-id flag {f}"))),
        };
        let count = steps
            .checked_mul(nodes)
            .and_then(|x| x.checked_mul(channels))
            .ok_or_else(|| Error::Format("dimensions overflow".into()))?;
        let raw = r.take(count * 8)?;
        let values = raw.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect();
        if r.pos != bytes.len() {
            return Err(Error::Format("trailing bytes after data".into()));
        }
        let start = DateTime::from_timestamp(start_secs, 0)
            .ok_or_else(|| Error::Format("start timestamp out of range".into()))?
            .naive_utc();
        let ds = Self::new(steps, nodes, names, values, start, interval)?;
        match ids {
            Some(ids) => ds.with_node_ids(ids),
            None => Ok(ds),
        }
    }

    /// Binary if the file starts with the magic, CSV otherwise.
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = read_file(path)?;
        if bytes.starts_with(BINARY_MAGIC) {
            Self::from_binary(&bytes)
        } else {
            let text = String::from_utf8(bytes).map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                line: 0,
                msg: "file is neither STTS1 binary nor UTF-8 CSV".into(),
            })?;
            Self::from_csv_str(&text, path)
        }
    }

    /// CSV for a `.csv` extension, binary otherwise.
    pub fn save(&self, path: &Path) -> Result<()> {
        let is_csv = path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
        if is_csv {
            write_file(path, self.to_csv_string())?;
        } else {
            write_file(path, self.to_binary())?;
        }
        Ok(())
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let s = self
            .bytes
            .get(self.pos..self.pos + n)
            .ok_or_else(|| Error::Format("truncated file".into()))?;
        self.pos += n;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn i64(&mut self) -> Result<i64> {
        Ok(i64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    fn start() -> NaiveDateTime {
        NaiveDate::from_ymd_opt(2018, 1, 1).unwrap().and_hms_opt(0, 0, 0).unwrap()
    }

    fn p() -> &'static Path {
        Path::new("test.csv")
    }

    #[test]
    fn csv_round_trip() {
        let ds = TrafficDataset::new(3, 1, vec!["ch_0".into()], vec![1.5, 0.1, -3e-7], start(), 5)
            .unwrap();
        let text = ds.to_csv_string();
        assert!(text.starts_with("time,node_0_ch_0\n2018-01-01T00:00:00,1.5\n"));
        let back = TrafficDataset::from_csv_str(&text, p()).unwrap();
        assert_eq!(back, ds);
        assert_eq!(back.to_csv_string(), text);
    }

    #[test]
    fn binary_matches_csv() {
        let ds = TrafficDataset::new(
            4,
            2,
            vec!["flow".into(), "speed".into()],
            (0..16).map(|i| i as f64 * 0.37 - 2.0).collect(),
            start(),
            15,
        )
        .unwrap()
        .with_node_ids(vec![400, 17])
        .unwrap();
        let bin = ds.to_binary();
        let a = TrafficDataset::from_binary(&bin).unwrap();
        let b = TrafficDataset::from_csv_str(&ds.to_csv_string(), p()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_binary(), bin);
        assert_eq!(a.node_ids(), Some(&[400, 17][..]));
        assert_eq!(a.value(3, 1, 0), ds.value(3, 1, 0));
    }

    #[test]
    fn step_288_calendar() {
        let ds = TrafficDataset::new(300, 1, vec!["ch_0".into()], vec![0.0; 300], start(), 5)
            .unwrap();
        let cal = ds.calendar();
        let f0 = cal.features(0).unwrap();
        let f = cal.features(288).unwrap();
        assert_eq!(f.slot, 0);
        assert_eq!(f.weekday, f0.weekday + 1);
    }

    fn line_of(text: &str) -> u64 {
        match TrafficDataset::from_csv_str(text, p()) {
            Err(Error::Parse { line, .. }) => line,
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn parse_errors_carry_lines() {
        let head = "time,node_0_ch_0,node_1_ch_0\n";
        assert_eq!(line_of("when,node_0_ch_0\n2018-01-01T00:00:00,1\n"), 1);
        assert_eq!(line_of("time,sensor_0\n2018-01-01T00:00:00,1\n"), 1);
        let ragged = format!("{head}2018-01-01T00:00:00,1,2\n2018-01-01T00:05:00,1\n");
        assert_eq!(line_of(&ragged), 3);
        let nan = format!("{head}2018-01-01T00:00:00,1,2\n2018-01-01T00:05:00,NaN,2\n");
        assert_eq!(line_of(&nan), 3);
        let word = format!("{head}2018-01-01T00:00:00,1,x\n");
        assert_eq!(line_of(&word), 2);
        let gap = format!(
            "{head}2018-01-01T00:00:00,1,2\n2018-01-01T00:05:00,1,2\n2018-01-01T00:15:00,1,2\n"
        );
        assert_eq!(line_of(&gap), 4);
        let scrambled = "time,node_0_a,node_1_a,node_0_b\n2018-01-01T00:00:00,1,2,3\n";
        assert_eq!(line_of(scrambled), 1);
    }

    #[test]
    fn rejects_non_finite_and_bad_interval() {
        assert!(TrafficDataset::new(1, 1, vec!["c".into()], vec![f64::NAN], start(), 5).is_err());
        assert!(TrafficDataset::new(1, 1, vec!["c".into()], vec![1.0], start(), 7).is_err());
    }
}
