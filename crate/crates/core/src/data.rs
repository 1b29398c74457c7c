//! Penalty-kick panel ingestion: CSV schema, attempt filter, design-matrix
//! construction and descriptive statistics.
//!
//! CSV header (comma-delimited, UTF-8):
//! `player_id,goalkeeper_id,season_start_year,matchday,home,minute,experience_taker,experience_keeper,score_diff,outcome`

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, RowError};
use crate::model::{Sequence, SequenceSet};

pub const CSV_COLUMNS: [&str; 10] = [
    "player_id",
    "goalkeeper_id",
    "season_start_year",
    "matchday",
    "home",
    "minute",
    "experience_taker",
    "experience_keeper",
    "score_diff",
    "outcome",
];

#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyRecord {
    pub player_id: String,
    pub goalkeeper_id: String,
    pub season_start_year: i32,
    pub matchday: u32,
    pub home: u8,
    pub minute: u32,
    pub experience_taker: f64,
    pub experience_keeper: f64,
    /// Goal difference from the taker's side before the kick.
    pub score_diff: i32,
    pub outcome: u8,
}

impl PenaltyRecord {
    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.player_id.is_empty() {
            return Err("player_id must not be empty".into());
        }
        if self.goalkeeper_id.is_empty() {
            return Err("goalkeeper_id must not be empty".into());
        }
        if !(1..=38).contains(&self.matchday) {
            return Err(format!("matchday {} outside range 1..38", self.matchday));
        }
        if self.home > 1 {
            return Err(format!("home {} must be 0 or 1", self.home));
        }
        if self.minute < 1 {
            return Err(format!("minute {} outside range 1..90+ (must be >= 1)", self.minute));
        }
        for (name, v) in [
            ("experience_taker", self.experience_taker),
            ("experience_keeper", self.experience_keeper),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(format!("{name} {v} must be a finite number of years >= 0"));
            }
        }
        if self.outcome > 1 {
            return Err(format!("outcome {} must be 0 or 1", self.outcome));
        }
        Ok(())
    }
}

#[derive(Debug, Deserialize)]
struct RawRecord {
    player_id: String,
    goalkeeper_id: String,
    season_start_year: String,
    matchday: String,
    home: String,
    minute: String,
    experience_taker: String,
    experience_keeper: String,
    score_diff: String,
    outcome: String,
}

fn parse_field<T: std::str::FromStr>(name: &str, v: &str) -> std::result::Result<T, String> {
    v.trim()
        .parse()
        .map_err(|_| format!("cannot parse {name} from {v:?}"))
}

impl RawRecord {
    fn parse(self) -> std::result::Result<PenaltyRecord, String> {
        let r = PenaltyRecord {
            player_id: self.player_id.trim().to_string(),
            goalkeeper_id: self.goalkeeper_id.trim().to_string(),
            season_start_year: parse_field("season_start_year", &self.season_start_year)?,
            matchday: parse_field("matchday", &self.matchday)?,
            home: parse_field("home", &self.home)?,
            minute: parse_field("minute", &self.minute)?,
            experience_taker: parse_field("experience_taker", &self.experience_taker)?,
            experience_keeper: parse_field("experience_keeper", &self.experience_keeper)?,
            score_diff: parse_field("score_diff", &self.score_diff)?,
            outcome: parse_field("outcome", &self.outcome)?,
        };
        r.validate()?;
        Ok(r)
    }
}

pub fn load_csv(path: impl AsRef<Path>) -> Result<Vec<PenaltyRecord>> {
    let file = std::fs::File::open(path)?;
    read_csv(file)
}

/// Parse and validate every row. All malformed rows are reported together.
pub fn read_csv<R: Read>(reader: R) -> Result<Vec<PenaltyRecord>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    for col in CSV_COLUMNS {
        if !headers.iter().any(|h| h.trim() == col) {
            return Err(Error::MissingColumn(col.to_string()));
        }
    }
    let mut records = Vec::new();
    let mut bad = Vec::new();
    for row in rdr.deserialize::<RawRecord>() {
        match row {
            Ok(raw) => {
                let line = records.len() as u64 + bad.len() as u64 + 2;
                match raw.parse() {
                    Ok(r) => records.push(r),
                    Err(message) => bad.push(RowError { line, message }),
                }
            }
            Err(e) => {
                let line = e
                    .position()
                    .map_or(records.len() as u64 + bad.len() as u64 + 2, |p| p.line());
                bad.push(RowError {
                    line,
                    message: e.to_string(),
                });
            }
        }
    }
    if !bad.is_empty() {
        return Err(Error::InvalidRows(bad));
    }
    Ok(records)
}

pub fn write_csv<W: Write>(records: &[PenaltyRecord], writer: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    w.write_record(CSV_COLUMNS)?;
    for r in records {
        w.write_record([
            r.player_id.clone(),
            r.goalkeeper_id.clone(),
            r.season_start_year.to_string(),
            r.matchday.to_string(),
            r.home.to_string(),
            r.minute.to_string(),
            r.experience_taker.to_string(),
            r.experience_keeper.to_string(),
            r.score_diff.to_string(),
            r.outcome.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FilterReport {
    pub players_kept: usize,
    pub players_dropped: usize,
    pub rows_kept: usize,
    pub rows_dropped: usize,
}

/// Keep only players with at least `min_attempts` kicks; file order is kept.
pub fn filter_min_attempts(
    records: &[PenaltyRecord],
    min_attempts: usize,
) -> (Vec<PenaltyRecord>, FilterReport) {
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for r in records {
        *counts.entry(r.player_id.as_str()).or_default() += 1;
    }
    let kept: Vec<PenaltyRecord> = records
        .iter()
        .filter(|r| counts[r.player_id.as_str()] >= min_attempts)
        .cloned()
        .collect();
    let players_kept = counts.values().filter(|&&c| c >= min_attempts).count();
    let report = FilterReport {
        players_kept,
        players_dropped: counts.len() - players_kept,
        rows_kept: kept.len(),
        rows_dropped: records.len() - kept.len(),
    };
    (kept, report)
}

/// Score-difference categories in column order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ScoreCategory {
    BehindMoreThan2,
    Behind2,
    Behind1,
    Level,
    Ahead1,
    Ahead2,
    AheadMoreThan2,
}

impl ScoreCategory {
    pub const ALL: [ScoreCategory; 7] = [
        ScoreCategory::BehindMoreThan2,
        ScoreCategory::Behind2,
        ScoreCategory::Behind1,
        ScoreCategory::Level,
        ScoreCategory::Ahead1,
        ScoreCategory::Ahead2,
        ScoreCategory::AheadMoreThan2,
    ];

    pub fn from_diff(diff: i32) -> Self {
        match diff {
            i32::MIN..=-3 => ScoreCategory::BehindMoreThan2,
            -2 => ScoreCategory::Behind2,
            -1 => ScoreCategory::Behind1,
            0 => ScoreCategory::Level,
            1 => ScoreCategory::Ahead1,
            2 => ScoreCategory::Ahead2,
            _ => ScoreCategory::AheadMoreThan2,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            ScoreCategory::BehindMoreThan2 => "more than 2 goals behind",
            ScoreCategory::Behind2 => "2 goals behind",
            ScoreCategory::Behind1 => "1 goal behind",
            ScoreCategory::Level => "level",
            ScoreCategory::Ahead1 => "1 goal ahead",
            ScoreCategory::Ahead2 => "2 goals ahead",
            ScoreCategory::AheadMoreThan2 => "more than 2 goals ahead",
        }
    }
}

/// Rule-change eras keyed by the season's starting year.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Era {
    UpTo1985,
    From1986To1995,
    Season1996,
    From1997,
}

impl Era {
    pub const ALL: [Era; 4] = [Era::UpTo1985, Era::From1986To1995, Era::Season1996, Era::From1997];
    pub const REFERENCE: Era = Era::From1997;

    pub fn from_season(start_year: i32) -> Self {
        match start_year {
            i32::MIN..=1985 => Era::UpTo1985,
            1986..=1995 => Era::From1986To1995,
            1996 => Era::Season1996,
            _ => Era::From1997,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Era::UpTo1985 => "season 1985/86 and before",
            Era::From1986To1995 => "season 1986/87 to 1995/96",
            Era::Season1996 => "season 1996/97",
            Era::From1997 => "season 1997/98 onward",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ColumnKind {
    Binary,
    Metric,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ColumnSource {
    Home,
    Matchday,
    Minute,
    ExperienceTaker,
    ExperienceKeeper,
    Score(ScoreCategory),
    ScoreMinute(ScoreCategory),
    Era(Era),
    Player(String),
    Goalkeeper(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub kind: ColumnKind,
    pub source: ColumnSource,
    /// Subtracted before scaling (0 for binary columns).
    pub center: f64,
    /// Divisor after centering (1 for binary columns).
    pub scale: f64,
}

/// Column layout learned from a training panel; encodes any panel with the
/// same players and goalkeepers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignLayout {
    pub columns: Vec<Column>,
    pub score_reference: ScoreCategory,
    pub era_reference: Era,
}

/// Encoded panel plus its layout.
#[derive(Debug, Clone)]
pub struct Design {
    pub data: SequenceSet<f64>,
    pub layout: DesignLayout,
}

impl DesignLayout {
    /// Columns in fixed order: base covariates, score dummies, score x minute
    /// interactions, era dummies, player dummies, goalkeeper dummies
    /// (ids sorted). Metric columns are standardized with the sample mean
    /// and standard deviation of `records`.
    pub fn from_records(records: &[PenaltyRecord]) -> Self {
        let has_level = records.iter().any(|r| r.score_diff == 0);
        let score_reference = if has_level {
            ScoreCategory::Level
        } else {
            ScoreCategory::Ahead1
        };
        let era_reference = Era::REFERENCE;
        let players: BTreeSet<&str> = records.iter().map(|r| r.player_id.as_str()).collect();
        let keepers: BTreeSet<&str> = records.iter().map(|r| r.goalkeeper_id.as_str()).collect();

        let mut columns = Vec::new();
        let mut push = |name: String, kind: ColumnKind, source: ColumnSource| {
            columns.push(Column {
                name,
                kind,
                source,
                center: 0.0,
                scale: 1.0,
            })
        };
        push("home".into(), ColumnKind::Binary, ColumnSource::Home);
        push("matchday".into(), ColumnKind::Metric, ColumnSource::Matchday);
        push("minute".into(), ColumnKind::Metric, ColumnSource::Minute);
        push("experience (penalty taker)".into(), ColumnKind::Metric, ColumnSource::ExperienceTaker);
        push("experience (goalkeeper)".into(), ColumnKind::Metric, ColumnSource::ExperienceKeeper);
        let cats: Vec<ScoreCategory> = ScoreCategory::ALL
            .into_iter()
            .filter(|&c| c != score_reference)
            .collect();
        for &c in &cats {
            push(format!("score: {}", c.label()), ColumnKind::Binary, ColumnSource::Score(c));
        }
        for &c in &cats {
            push(
                format!("score: {} x minute", c.label()),
                ColumnKind::Metric,
                ColumnSource::ScoreMinute(c),
            );
        }
        for e in Era::ALL.into_iter().filter(|&e| e != era_reference) {
            push(format!("era: {}", e.label()), ColumnKind::Binary, ColumnSource::Era(e));
        }
        for p in players {
            push(format!("{p} (player)"), ColumnKind::Binary, ColumnSource::Player(p.to_string()));
        }
        for g in keepers {
            push(format!("{g} (goalkeeper)"), ColumnKind::Binary, ColumnSource::Goalkeeper(g.to_string()));
        }

        let mut layout = Self {
            columns,
            score_reference,
            era_reference,
        };
        let n = records.len();
        for j in 0..layout.columns.len() {
            if layout.columns[j].kind != ColumnKind::Metric || n < 2 {
                continue;
            }
            let vals: Vec<f64> = records.iter().map(|r| raw_value(&layout.columns[j].source, r)).collect();
            let mean = vals.iter().sum::<f64>() / n as f64;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            let sd = var.sqrt();
            layout.columns[j].center = mean;
            layout.columns[j].scale = if sd > 0.0 { sd } else { 1.0 };
        }
        layout
    }

    pub fn n_columns(&self) -> usize {
        self.columns.len()
    }

    pub fn names(&self) -> Vec<String> {
        self.columns.iter().map(|c| c.name.clone()).collect()
    }

    fn check_known(&self, records: &[PenaltyRecord]) -> Result<()> {
        let players: BTreeSet<&str> = self
            .columns
            .iter()
            .filter_map(|c| match &c.source {
                ColumnSource::Player(p) => Some(p.as_str()),
                _ => None,
            })
            .collect();
        let keepers: BTreeSet<&str> = self
            .columns
            .iter()
            .filter_map(|c| match &c.source {
                ColumnSource::Goalkeeper(g) => Some(g.as_str()),
                _ => None,
            })
            .collect();
        for r in records {
            if !players.contains(r.player_id.as_str()) {
                return Err(Error::UnknownCategory(format!("player_id {:?}", r.player_id)));
            }
            if !keepers.contains(r.goalkeeper_id.as_str()) {
                return Err(Error::UnknownCategory(format!("goalkeeper_id {:?}", r.goalkeeper_id)));
            }
        }
        Ok(())
    }

    /// Unstandardized design rows for `records`, in the given order.
    pub fn raw_rows(&self, records: &[PenaltyRecord]) -> Result<Vec<Vec<f64>>> {
        self.check_known(records)?;
        Ok(records
            .iter()
            .map(|r| self.columns.iter().map(|c| raw_value(&c.source, r)).collect())
            .collect())
    }

    /// One chronologically ordered sequence per player (players sorted by
    /// id), with standardized metric columns.
    pub fn encode(&self, records: &[PenaltyRecord]) -> Result<SequenceSet<f64>> {
        self.check_known(records)?;
        let mut by_player: BTreeMap<&str, Vec<&PenaltyRecord>> = BTreeMap::new();
        for r in records {
            by_player.entry(r.player_id.as_str()).or_default().push(r);
        }
        let k = self.columns.len();
        let mut seqs = Vec::with_capacity(by_player.len());
        for (id, mut rows) in by_player {
            // stable: ties keep file order
            rows.sort_by_key(|r| chronological_key(r));
            let mut x = Vec::with_capacity(rows.len() * k);
            for r in &rows {
                for c in &self.columns {
                    x.push((raw_value(&c.source, r) - c.center) / c.scale);
                }
            }
            let y = rows.iter().map(|r| r.outcome == 1).collect();
            seqs.push(Sequence::new(id, y, x, k)?);
        }
        SequenceSet::new(seqs)
    }
}

/// Ordering key within a player: (season, matchday, minute).
pub fn chronological_key(r: &PenaltyRecord) -> (i32, u32, u32) {
    (r.season_start_year, r.matchday, r.minute)
}

fn raw_value(source: &ColumnSource, r: &PenaltyRecord) -> f64 {
    let ind = |b: bool| if b { 1.0 } else { 0.0 };
    match source {
        ColumnSource::Home => r.home as f64,
        ColumnSource::Matchday => r.matchday as f64,
        ColumnSource::Minute => r.minute as f64,
        ColumnSource::ExperienceTaker => r.experience_taker,
        ColumnSource::ExperienceKeeper => r.experience_keeper,
        ColumnSource::Score(c) => ind(ScoreCategory::from_diff(r.score_diff) == *c),
        ColumnSource::ScoreMinute(c) => ind(ScoreCategory::from_diff(r.score_diff) == *c) * r.minute as f64,
        ColumnSource::Era(e) => ind(Era::from_season(r.season_start_year) == *e),
        ColumnSource::Player(p) => ind(&r.player_id == p),
        ColumnSource::Goalkeeper(g) => ind(&r.goalkeeper_id == g),
    }
}

/// Learn the layout from `records` and encode them.
pub fn build_design(records: &[PenaltyRecord]) -> Result<Design> {
    if records.is_empty() {
        return Err(Error::EmptyData);
    }
    let layout = DesignLayout::from_records(records);
    let data = layout.encode(records)?;
    Ok(Design { data, layout })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DescriptiveRow {
    pub variable: &'static str,
    pub mean: Option<f64>,
    pub sd: Option<f64>,
    pub min: f64,
    pub max: f64,
}

/// Mean, sample standard deviation, minimum and maximum of the outcome and
/// metric covariates (only min/max for matchday).
pub fn descriptives(records: &[PenaltyRecord]) -> Result<Vec<DescriptiveRow>> {
    if records.is_empty() {
        return Err(Error::EmptyData);
    }
    type Getter = fn(&PenaltyRecord) -> f64;
    let vars: [(&'static str, Getter, bool); 6] = [
        ("successful penalty", |r| r.outcome as f64, true),
        ("matchday", |r| r.matchday as f64, false),
        ("home", |r| r.home as f64, true),
        ("experience (penalty taker)", |r| r.experience_taker, true),
        ("experience (goalkeeper)", |r| r.experience_keeper, true),
        ("minute", |r| r.minute as f64, true),
    ];
    Ok(vars
        .iter()
        .map(|&(variable, get, moments)| {
            let vals: Vec<f64> = records.iter().map(get).collect();
            let n = vals.len() as f64;
            let mean = vals.iter().sum::<f64>() / n;
            let sd = if vals.len() > 1 {
                (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
            } else {
                0.0
            };
            DescriptiveRow {
                variable,
                mean: moments.then_some(mean),
                sd: moments.then_some(sd),
                min: vals.iter().copied().fold(f64::INFINITY, f64::min),
                max: vals.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            }
        })
        .collect())
}

/// Distinct player and goalkeeper counts.
pub fn panel_counts(records: &[PenaltyRecord]) -> (usize, usize) {
    let p: BTreeSet<&str> = records.iter().map(|r| r.player_id.as_str()).collect();
    let g: BTreeSet<&str> = records.iter().map(|r| r.goalkeeper_id.as_str()).collect();
    (p.len(), g.len())
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "player_id,goalkeeper_id,season_start_year,matchday,home,minute,experience_taker,experience_keeper,score_diff,outcome\n";

    fn rec(player: &str, keeper: &str, season: i32, matchday: u32, minute: u32, diff: i32, y: u8) -> PenaltyRecord {
        PenaltyRecord {
            player_id: player.into(),
            goalkeeper_id: keeper.into(),
            season_start_year: season,
            matchday,
            home: 1,
            minute,
            experience_taker: 3.0,
            experience_keeper: 5.5,
            score_diff: diff,
            outcome: y,
        }
    }

    #[test]
    fn empty_file_with_header() {
        assert!(read_csv(HEADER.as_bytes()).unwrap().is_empty());
    }

    #[test]
    fn one_row_round_trips_byte_for_byte() {
        let text = format!("{HEADER}Gerd Mueller,Wolfgang Kneib,1975,15,0,90,1,3.5,-1,1\n");
        let recs = read_csv(text.as_bytes()).unwrap();
        assert_eq!(recs.len(), 1);
        let mut out = Vec::new();
        write_csv(&recs, &mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), text);
    }

    #[test]
    fn minute_zero_is_rejected_with_line_number() {
        let text = format!("{HEADER}a,b,1990,3,1,10,1,1,0,1\na,b,1990,4,1,0,1,1,0,1\n");
        match read_csv(text.as_bytes()) {
            Err(Error::InvalidRows(rows)) => {
                assert_eq!(rows.len(), 1);
                assert_eq!(rows[0].line, 3);
                assert!(rows[0].message.contains("minute"));
                assert!(rows[0].message.contains("1..90+"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_column_and_bad_values() {
        let text = "player_id,goalkeeper_id\na,b\n";
        assert!(matches!(read_csv(text.as_bytes()), Err(Error::MissingColumn(_))));
        let text = format!("{HEADER}a,b,1990,39,1,10,1,1,0,1\na,b,1990,3,2,10,1,1,0,1\na,b,x,3,1,10,1,1,0,1\n");
        match read_csv(text.as_bytes()) {
            Err(Error::InvalidRows(rows)) => assert_eq!(rows.len(), 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn attempt_filter_threshold() {
        let mut recs: Vec<_> = (0..4).map(|i| rec("four", "g", 1990, i + 1, 10, 0, 1)).collect();
        recs.extend((0..5).map(|i| rec("five", "g", 1990, i + 1, 10, 0, 1)));
        let (kept, report) = filter_min_attempts(&recs, 5);
        assert_eq!(kept.len(), 5);
        assert!(kept.iter().all(|r| r.player_id == "five"));
        assert_eq!(report.players_dropped, 1);
        assert_eq!(report.rows_dropped, 4);
    }

    #[test]
    fn score_and_era_coding() {
        assert_eq!(ScoreCategory::from_diff(-3), ScoreCategory::BehindMoreThan2);
        assert_eq!(ScoreCategory::from_diff(-7), ScoreCategory::BehindMoreThan2);
        assert_eq!(ScoreCategory::from_diff(2), ScoreCategory::Ahead2);
        assert_eq!(ScoreCategory::from_diff(3), ScoreCategory::AheadMoreThan2);
        assert_eq!(Era::from_season(1985), Era::UpTo1985);
        assert_eq!(Era::from_season(1986), Era::From1986To1995);
        assert_eq!(Era::from_season(1995), Era::From1986To1995);
        assert_eq!(Era::from_season(1996), Era::Season1996);
        assert_eq!(Era::from_season(1997), Era::From1997);
    }

    #[test]
    fn design_columns_for_specific_rows() {
        let recs = vec![
            rec("p1", "g1", 1996, 1, 80, 1, 1),
            rec("p1", "g2", 1970, 2, 30, -3, 0),
            rec("p2", "g1", 2000, 3, 60, 0, 1),
        ];
        let layout = DesignLayout::from_records(&recs);
        assert_eq!(layout.score_reference, ScoreCategory::Level);
        let raw = layout.raw_rows(&recs).unwrap();
        let col = |name: &str| layout.columns.iter().position(|c| c.name == name).unwrap();
        assert_eq!(raw[0][col("score: 1 goal ahead")], 1.0);
        assert_eq!(raw[0][col("score: 1 goal ahead x minute")], 80.0);
        assert_eq!(raw[0][col("era: season 1996/97")], 1.0);
        assert_eq!(raw[1][col("score: more than 2 goals behind")], 1.0);
        assert_eq!(raw[1][col("era: season 1985/86 and before")], 1.0);
        // level score is the reference: no score dummy set
        let score_cols: Vec<usize> = layout
            .columns
            .iter()
            .enumerate()
            .filter(|(_, c)| matches!(c.source, ColumnSource::Score(_)))
            .map(|(i, _)| i)
            .collect();
        assert_eq!(score_cols.len(), 6);
        assert!(score_cols.iter().all(|&j| raw[2][j] == 0.0));
    }

    #[test]
    fn reference_falls_back_without_level_rows() {
        let recs = vec![rec("p1", "g1", 1996, 1, 80, 1, 1), rec("p1", "g1", 1996, 2, 10, -1, 1)];
        let layout = DesignLayout::from_records(&recs);
        assert_eq!(layout.score_reference, ScoreCategory::Ahead1);
        assert!(layout.columns.iter().any(|c| c.source == ColumnSource::Score(ScoreCategory::Level)));
    }

    #[test]
    fn player_and_keeper_blocks_have_one_hot_rows() {
        let recs = vec![
            rec("p1", "g1", 1990, 1, 10, 0, 1),
            rec("p2", "g2", 1991, 1, 10, 0, 0),
            rec("p1", "g2", 1992, 1, 10, 0, 1),
        ];
        let layout = DesignLayout::from_records(&recs);
        for row in layout.raw_rows(&recs).unwrap() {
            let sum = |pred: fn(&ColumnSource) -> bool| -> f64 {
                layout
                    .columns
                    .iter()
                    .zip(&row)
                    .filter(|(c, _)| pred(&c.source))
                    .map(|(_, v)| v)
                    .sum()
            };
            assert_eq!(sum(|s| matches!(s, ColumnSource::Player(_))), 1.0);
            assert_eq!(sum(|s| matches!(s, ColumnSource::Goalkeeper(_))), 1.0);
        }
    }

    #[test]
    fn encode_orders_chronologically_and_rejects_unknown_ids() {
        let recs = vec![
            rec("p1", "g1", 1992, 5, 10, 0, 0),
            rec("p1", "g1", 1990, 5, 10, 0, 1),
            rec("p1", "g1", 1990, 5, 10, 0, 0),
        ];
        let design = build_design(&recs).unwrap();
        let seq = &design.data.sequences()[0];
        assert_eq!(seq.outcomes(), &[true, false, false]);
        let stranger = vec![rec("p9", "g1", 1990, 5, 10, 0, 0)];
        assert!(matches!(design.layout.encode(&stranger), Err(Error::UnknownCategory(_))));
    }

    #[test]
    fn metric_columns_are_standardized() {
        let recs: Vec<_> = (1..=10).map(|i| rec("p", "g", 1990, i, i * 9, 0, 1)).collect();
        let design = build_design(&recs).unwrap();
        let j = design.layout.columns.iter().position(|c| c.name == "minute").unwrap();
        let col: Vec<f64> = (0..10).map(|t| design.data.sequences()[0].row(t)[j]).collect();
        let mean = col.iter().sum::<f64>() / 10.0;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 9.0;
        assert!(mean.abs() < 1e-12 && (var - 1.0).abs() < 1e-12);
        // constant metric column: scale left at 1
        let e = design.layout.columns.iter().position(|c| c.name == "experience (penalty taker)").unwrap();
        assert_eq!(design.layout.columns[e].scale, 1.0);
    }

    #[test]
    fn descriptives_hand_computed() {
        let mut recs = vec![
            rec("a", "g", 1990, 1, 10, 0, 1),
            rec("a", "g", 1990, 2, 20, 0, 0),
            rec("b", "g", 1990, 3, 30, 0, 1),
            rec("b", "g", 1990, 38, 40, 0, 1),
        ];
        recs[1].home = 0;
        let d = descriptives(&recs).unwrap();
        let get = |name: &str| d.iter().find(|r| r.variable == name).unwrap().clone();
        assert_eq!(get("successful penalty").mean, Some(0.75));
        assert_eq!(get("home").mean, Some(0.75));
        assert_eq!(get("minute").mean, Some(25.0));
        assert!((get("minute").sd.unwrap() - (500.0_f64 / 3.0).sqrt()).abs() < 1e-12);
        assert_eq!(get("experience (penalty taker)").sd, Some(0.0));
        let md = get("matchday");
        assert_eq!((md.mean, md.min, md.max), (None, 1.0, 38.0));
        assert!(descriptives(&[]).is_err());
    }
}
