//! Transaction-log parsing and user-item matrix extraction.
//!
//! Two matrices are extracted from the same log. The item-side matrix keeps
//! the transactions of the last `tau_days` days and feeds item-item
//! similarity. The user-side matrix keeps, for every user, only the most
//! recent `q` orders, where `q` is a global order-count percentile. Every
//! user with at least one order keeps at least one order in it.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{BufRead, BufReader, Read, Write};

use chrono::{DateTime, Duration, NaiveDate, NaiveDateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ids::{Category, ItemId, OrderId, UserId};

pub const CSV_HEADER: [&str; 6] = [
    "order_id",
    "user_id",
    "item_id",
    "quantity",
    "timestamp",
    "category",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PurchaseEvent {
    pub order_id: OrderId,
    pub user_id: UserId,
    pub item_id: ItemId,
    pub quantity: u32,
    pub timestamp: DateTime<Utc>,
    pub category: Category,
}

impl PurchaseEvent {
    pub fn date(&self) -> NaiveDate {
        self.timestamp.date_naive()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LogFormat {
    Csv,
    Jsonl,
}

impl std::str::FromStr for LogFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(LogFormat::Csv),
            "jsonl" | "ndjson" => Ok(LogFormat::Jsonl),
            other => Err(Error::Config(format!("unknown log format {other:?}"))),
        }
    }
}

/// One order as seen by the ranking code: its owner, the timestamp of its
/// first event and the distinct items it contains in first-seen order.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderSummary {
    pub order_id: OrderId,
    pub user_id: UserId,
    pub first_timestamp: DateTime<Utc>,
    pub items: Vec<ItemId>,
}

/// Immutable purchase log. Construction validates that every order belongs
/// to one user and that all quantities are positive.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TransactionLog {
    events: Vec<PurchaseEvent>,
}

impl TransactionLog {
    pub fn new(events: Vec<PurchaseEvent>) -> Result<Self> {
        let mut owners: HashMap<&OrderId, &UserId> = HashMap::new();
        for (idx, ev) in events.iter().enumerate() {
            if ev.quantity == 0 {
                return Err(Error::MalformedRow {
                    line: idx + 1,
                    reason: "quantity must be at least 1".into(),
                });
            }
            match owners.get(&ev.order_id) {
                Some(owner) if *owner != &ev.user_id => {
                    return Err(Error::DuplicateOrderUser {
                        order_id: ev.order_id.to_string(),
                        first: owner.to_string(),
                        second: ev.user_id.to_string(),
                    })
                }
                Some(_) => {}
                None => {
                    owners.insert(&ev.order_id, &ev.user_id);
                }
            }
        }
        Ok(Self { events })
    }

    pub fn events(&self) -> &[PurchaseEvent] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Keeps the events matching `keep`, preserving order. Subsets of a valid
    /// log are valid, so no re-validation happens.
    pub fn filter(&self, mut keep: impl FnMut(&PurchaseEvent) -> bool) -> TransactionLog {
        TransactionLog {
            events: self.events.iter().filter(|e| keep(e)).cloned().collect(),
        }
    }

    /// Distinct item ids, sorted.
    pub fn assortment(&self) -> Vec<ItemId> {
        let set: BTreeSet<&ItemId> = self.events.iter().map(|e| &e.item_id).collect();
        set.into_iter().cloned().collect()
    }

    pub fn assortment_size(&self) -> usize {
        self.assortment().len()
    }

    /// Distinct user ids, sorted.
    pub fn users(&self) -> Vec<UserId> {
        let set: BTreeSet<&UserId> = self.events.iter().map(|e| &e.user_id).collect();
        set.into_iter().cloned().collect()
    }

    /// Item -> category, taking the first category seen for each item.
    pub fn catalog(&self) -> BTreeMap<ItemId, Category> {
        let mut catalog = BTreeMap::new();
        for ev in &self.events {
            catalog
                .entry(ev.item_id.clone())
                .or_insert_with(|| ev.category.clone());
        }
        catalog
    }

    pub fn first_date(&self) -> Option<NaiveDate> {
        self.events.iter().map(PurchaseEvent::date).min()
    }

    pub fn last_date(&self) -> Option<NaiveDate> {
        self.events.iter().map(PurchaseEvent::date).max()
    }

    /// Orders sorted by (first timestamp, order id).
    pub fn orders(&self) -> Vec<OrderSummary> {
        let mut index: HashMap<&OrderId, usize> = HashMap::new();
        let mut orders: Vec<OrderSummary> = Vec::new();
        let mut seen: Vec<BTreeSet<&ItemId>> = Vec::new();
        for ev in &self.events {
            let slot = *index.entry(&ev.order_id).or_insert_with(|| {
                orders.push(OrderSummary {
                    order_id: ev.order_id.clone(),
                    user_id: ev.user_id.clone(),
                    first_timestamp: ev.timestamp,
                    items: Vec::new(),
                });
                seen.push(BTreeSet::new());
                orders.len() - 1
            });
            let order = &mut orders[slot];
            if ev.timestamp < order.first_timestamp {
                order.first_timestamp = ev.timestamp;
            }
            if seen[slot].insert(&ev.item_id) {
                order.items.push(ev.item_id.clone());
            }
        }
        orders.sort_by(|a, b| {
            a.first_timestamp
                .cmp(&b.first_timestamp)
                .then_with(|| a.order_id.cmp(&b.order_id))
        });
        orders
    }

    /// Writes the log in the given format. `parse_transaction_log` reads the
    /// output back to an equal log.
    pub fn write<W: Write>(&self, writer: W, format: LogFormat) -> Result<()> {
        match format {
            LogFormat::Csv => {
                let mut w = csv::Writer::from_writer(writer);
                w.write_record(CSV_HEADER).map_err(csv_io)?;
                for ev in &self.events {
                    let quantity = ev.quantity.to_string();
                    let ts = format_timestamp(&ev.timestamp);
                    w.write_record([
                        ev.order_id.as_str(),
                        ev.user_id.as_str(),
                        ev.item_id.as_str(),
                        quantity.as_str(),
                        ts.as_str(),
                        ev.category.as_str(),
                    ])
                    .map_err(csv_io)?;
                }
                w.flush()?;
            }
            LogFormat::Jsonl => {
                let mut w = std::io::BufWriter::new(writer);
                for ev in &self.events {
                    let raw = RawEvent {
                        order_id: ev.order_id.to_string(),
                        user_id: ev.user_id.to_string(),
                        item_id: ev.item_id.to_string(),
                        quantity: ev.quantity as i64,
                        timestamp: format_timestamp(&ev.timestamp),
                        category: ev.category.to_string(),
                    };
                    serde_json::to_writer(&mut w, &raw).map_err(|e| Error::Io(e.to_string()))?;
                    w.write_all(b"\n")?;
                }
                w.flush()?;
            }
        }
        Ok(())
    }
}

fn csv_io(err: csv::Error) -> Error {
    Error::Io(err.to_string())
}

pub fn format_timestamp(ts: &DateTime<Utc>) -> String {
    ts.to_rfc3339_opts(SecondsFormat::AutoSi, true)
}

/// Accepts RFC 3339 timestamps, naive `YYYY-MM-DDTHH:MM:SS` (read as UTC)
/// and plain dates (midnight UTC).
pub fn parse_timestamp(raw: &str) -> Option<DateTime<Utc>> {
    let raw = raw.trim();
    if let Ok(ts) = DateTime::parse_from_rfc3339(raw) {
        return Some(ts.with_timezone(&Utc));
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f"] {
        if let Ok(naive) = NaiveDateTime::parse_from_str(raw, fmt) {
            return Some(naive.and_utc());
        }
    }
    NaiveDate::parse_from_str(raw, "%Y-%m-%d")
        .ok()
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .map(|naive| naive.and_utc())
}

#[derive(Debug, Serialize, Deserialize)]
struct RawEvent {
    order_id: String,
    user_id: String,
    item_id: String,
    quantity: i64,
    timestamp: String,
    category: String,
}

#[derive(Default)]
struct Interner {
    strings: HashMap<String, std::sync::Arc<str>>,
}

impl Interner {
    fn get(&mut self, s: &str) -> std::sync::Arc<str> {
        if let Some(existing) = self.strings.get(s) {
            return existing.clone();
        }
        let arc: std::sync::Arc<str> = std::sync::Arc::from(s);
        self.strings.insert(s.to_owned(), arc.clone());
        arc
    }

    fn event(&mut self, raw: RawEvent, line: usize) -> Result<PurchaseEvent> {
        let malformed = |reason: String| Error::MalformedRow { line, reason };
        for (name, value) in [
            ("order_id", &raw.order_id),
            ("user_id", &raw.user_id),
            ("item_id", &raw.item_id),
        ] {
            if value.trim().is_empty() {
                return Err(malformed(format!("{name} is empty")));
            }
        }
        if raw.quantity < 1 || raw.quantity > u32::MAX as i64 {
            return Err(malformed(format!(
                "quantity {} is not a positive integer",
                raw.quantity
            )));
        }
        let timestamp = parse_timestamp(&raw.timestamp)
            .ok_or_else(|| malformed(format!("unparseable timestamp {:?}", raw.timestamp)))?;
        Ok(PurchaseEvent {
            order_id: OrderId::from(self.get(&raw.order_id)),
            user_id: UserId::from(self.get(&raw.user_id)),
            item_id: ItemId::from(self.get(&raw.item_id)),
            quantity: raw.quantity as u32,
            timestamp,
            category: Category::from(self.get(&raw.category)),
        })
    }
}

/// Parses a CSV (header required) or JSON-lines purchase log. Every record is
/// either accepted or reported; nothing is dropped silently.
pub fn parse_transaction_log<R: Read>(source: R, format: LogFormat) -> Result<TransactionLog> {
    let mut interner = Interner::default();
    let mut events = Vec::new();
    match format {
        LogFormat::Csv => {
            let mut reader = csv::ReaderBuilder::new()
                .has_headers(true)
                .trim(csv::Trim::All)
                .from_reader(source);
            let headers = reader
                .headers()
                .map_err(|e| Error::MalformedRow {
                    line: 1,
                    reason: e.to_string(),
                })?
                .clone();
            let mut columns = [usize::MAX; 6];
            for (slot, name) in columns.iter_mut().zip(CSV_HEADER) {
                *slot =
                    headers
                        .iter()
                        .position(|h| h == name)
                        .ok_or_else(|| Error::MalformedRow {
                            line: 1,
                            reason: format!("header lacks column {name:?}"),
                        })?;
            }
            for record in reader.records() {
                let record = record.map_err(|e| Error::MalformedRow {
                    line: e.position().map(|p| p.line() as usize).unwrap_or(0),
                    reason: e.to_string(),
                })?;
                let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
                let field = |k: usize| record.get(columns[k]).unwrap_or("").to_owned();
                let quantity = field(3);
                let quantity: i64 = quantity.parse().map_err(|_| Error::MalformedRow {
                    line,
                    reason: format!("quantity {quantity:?} is not an integer"),
                })?;
                let raw = RawEvent {
                    order_id: field(0),
                    user_id: field(1),
                    item_id: field(2),
                    quantity,
                    timestamp: field(4),
                    category: field(5),
                };
                events.push(interner.event(raw, line)?);
            }
        }
        LogFormat::Jsonl => {
            for (idx, line) in BufReader::new(source).lines().enumerate() {
                let line_no = idx + 1;
                let line = line.map_err(|e| Error::MalformedRow {
                    line: line_no,
                    reason: e.to_string(),
                })?;
                if line.trim().is_empty() {
                    continue;
                }
                let raw: RawEvent =
                    serde_json::from_str(&line).map_err(|e| Error::MalformedRow {
                        line: line_no,
                        reason: e.to_string(),
                    })?;
                events.push(interner.event(raw, line_no)?);
            }
        }
    }
    TransactionLog::new(events)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValueMode {
    #[default]
    Binary,
    Count,
}

/// Extraction parameters for both matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixSpec {
    /// Item-side transaction window in days; `None` keeps everything.
    pub tau_days: Option<u32>,
    /// User-side order-count percentile in (0, 100].
    pub sigma_percent: f64,
    /// Last day (inclusive) of data the matrices may see.
    pub reference_date: NaiveDate,
    pub value_mode: ValueMode,
}

impl MatrixSpec {
    pub fn new(reference_date: NaiveDate) -> Self {
        Self {
            tau_days: None,
            sigma_percent: 100.0,
            reference_date,
            value_mode: ValueMode::Binary,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_percent > 0.0 && self.sigma_percent <= 100.0) {
            return Err(Error::Config(format!(
                "sigma must lie in (0, 100], got {}",
                self.sigma_percent
            )));
        }
        if self.tau_days == Some(0) {
            return Err(Error::Config("tau must be at least one day".into()));
        }
        Ok(())
    }

    /// Whether `date` lies in the half-open window (reference - tau, reference].
    pub fn in_item_window(&self, date: NaiveDate) -> bool {
        if date > self.reference_date {
            return false;
        }
        match self.tau_days {
            None => true,
            Some(tau) => date > self.reference_date - Duration::days(tau as i64),
        }
    }
}

/// Sparse user x item matrix stored row-wise. Rows are sorted by item index
/// and never hold zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionMatrix {
    users: Vec<UserId>,
    items: Vec<ItemId>,
    rows: Vec<Vec<(u32, f64)>>,
}

impl InteractionMatrix {
    /// Builds a matrix over the given id lists (sorted, unique) from (user
    /// index, item index, value) triples; repeated cells are summed, or set to
    /// 1 in binary mode.
    pub fn from_triples(
        users: Vec<UserId>,
        items: Vec<ItemId>,
        triples: impl IntoIterator<Item = (usize, usize, f64)>,
        mode: ValueMode,
    ) -> Result<Self> {
        if !users.windows(2).all(|w| w[0] < w[1]) || !items.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::IdMismatch(
                "id lists must be sorted and unique".into(),
            ));
        }
        let mut acc: Vec<BTreeMap<u32, f64>> = vec![BTreeMap::new(); users.len()];
        for (u, i, v) in triples {
            if u >= users.len() || i >= items.len() {
                return Err(Error::IdMismatch(format!("cell ({u}, {i}) outside matrix")));
            }
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::DomainError(format!("matrix value {v}")));
            }
            if v == 0.0 {
                continue;
            }
            let cell = acc[u].entry(i as u32).or_insert(0.0);
            match mode {
                ValueMode::Binary => *cell = 1.0,
                ValueMode::Count => *cell += v,
            }
        }
        let rows = acc.into_iter().map(|r| r.into_iter().collect()).collect();
        Ok(Self { users, items, rows })
    }

    pub fn users(&self) -> &[UserId] {
        &self.users
    }

    pub fn items(&self) -> &[ItemId] {
        &self.items
    }

    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn n_items(&self) -> usize {
        self.items.len()
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn row(&self, user: usize) -> &[(u32, f64)] {
        &self.rows[user]
    }

    pub fn rows(&self) -> &[Vec<(u32, f64)>] {
        &self.rows
    }

    pub fn get(&self, user: usize, item: usize) -> f64 {
        let row = &self.rows[user];
        row.binary_search_by_key(&(item as u32), |&(i, _)| i)
            .map(|pos| row[pos].1)
            .unwrap_or(0.0)
    }

    pub fn user_index(&self, id: &str) -> Option<usize> {
        self.users.binary_search_by(|u| u.as_str().cmp(id)).ok()
    }

    pub fn item_index(&self, id: &str) -> Option<usize> {
        self.items.binary_search_by(|i| i.as_str().cmp(id)).ok()
    }

    /// Column-major copy: for each item, (user index, value) sorted by user.
    pub fn columns(&self) -> Vec<Vec<(u32, f64)>> {
        let mut cols = vec![Vec::new(); self.items.len()];
        for (u, row) in self.rows.iter().enumerate() {
            for &(i, v) in row {
                cols[i as usize].push((u as u32, v));
            }
        }
        cols
    }

    /// Stored cells as (user id, item id, value), row-major.
    pub fn entries(&self) -> impl Iterator<Item = (&UserId, &ItemId, f64)> + '_ {
        self.rows.iter().enumerate().flat_map(move |(u, row)| {
            row.iter()
                .map(move |&(i, v)| (&self.users[u], &self.items[i as usize], v))
        })
    }
}

fn universe_index<T: Ord + Clone + std::hash::Hash>(ids: &[T]) -> HashMap<T, usize> {
    ids.iter()
        .enumerate()
        .map(|(i, id)| (id.clone(), i))
        .collect()
}

fn build_matrix<'a>(
    log: &TransactionLog,
    events: impl Iterator<Item = &'a PurchaseEvent>,
    mode: ValueMode,
) -> Result<InteractionMatrix> {
    let users = log.users();
    let items = log.assortment();
    let user_idx = universe_index(&users);
    let item_idx = universe_index(&items);
    let triples: Vec<_> = events
        .map(|e| {
            (
                user_idx[&e.user_id],
                item_idx[&e.item_id],
                e.quantity as f64,
            )
        })
        .collect();
    InteractionMatrix::from_triples(users, items, triples, mode)
}

/// Item-side matrix: every event whose date lies in (reference - tau, reference].
/// Row and column id lists span the whole log so both matrices share one id space.
pub fn extract_item_matrix(log: &TransactionLog, spec: &MatrixSpec) -> Result<InteractionMatrix> {
    spec.validate()?;
    let mut any = false;
    let selected = log.events().iter().filter(|e| {
        let keep = spec.in_item_window(e.date());
        any |= keep;
        keep
    });
    let matrix = build_matrix(log, selected, spec.value_mode)?;
    if !any {
        return Err(Error::EmptyWindow);
    }
    Ok(matrix)
}

/// Nearest-rank percentile of a list of per-user order counts, floored at 1.
pub fn nearest_rank_cap(counts: &[usize], sigma_percent: f64) -> Result<usize> {
    if counts.is_empty() {
        return Err(Error::DomainError(
            "no users to take a percentile over".into(),
        ));
    }
    if !(sigma_percent > 0.0 && sigma_percent <= 100.0) {
        return Err(Error::Config(format!(
            "sigma must lie in (0, 100], got {sigma_percent}"
        )));
    }
    let mut sorted = counts.to_vec();
    sorted.sort_unstable();
    let n = sorted.len();
    let rank = ((sigma_percent / 100.0) * n as f64).ceil() as usize;
    let rank = rank.clamp(1, n);
    Ok(sorted[rank - 1].max(1))
}

fn orders_per_user(
    log: &TransactionLog,
    until: Option<NaiveDate>,
) -> BTreeMap<UserId, Vec<OrderSummary>> {
    let mut per_user: BTreeMap<UserId, Vec<OrderSummary>> = BTreeMap::new();
    let scoped;
    let source = match until {
        Some(date) => {
            scoped = log.filter(|e| e.date() <= date);
            &scoped
        }
        None => log,
    };
    for order in source.orders() {
        per_user
            .entry(order.user_id.clone())
            .or_default()
            .push(order);
    }
    per_user
}

/// Global cap `q` on orders per user: the sigma-th nearest-rank percentile of
/// the orders-per-user distribution.
pub fn order_quantile_cap(log: &TransactionLog, sigma_percent: f64) -> Result<usize> {
    let counts: Vec<usize> = orders_per_user(log, None).values().map(Vec::len).collect();
    nearest_rank_cap(&counts, sigma_percent)
}

/// User-side matrix: each user's `q` most recent orders up to the reference
/// date, with `q` the sigma percentile cap.
pub fn extract_user_matrix(log: &TransactionLog, spec: &MatrixSpec) -> Result<InteractionMatrix> {
    spec.validate()?;
    let per_user = orders_per_user(log, Some(spec.reference_date));
    if per_user.is_empty() {
        return Err(Error::EmptyWindow);
    }
    let counts: Vec<usize> = per_user.values().map(Vec::len).collect();
    let cap = nearest_rank_cap(&counts, spec.sigma_percent)?;
    let kept: BTreeSet<&OrderId> = per_user
        .values()
        .flat_map(|orders| {
            orders[orders.len().saturating_sub(cap)..]
                .iter()
                .map(|o| &o.order_id)
        })
        .collect();
    let reference = spec.reference_date;
    let selected = log
        .events()
        .iter()
        .filter(|e| e.date() <= reference && kept.contains(&e.order_id));
    build_matrix(log, selected, spec.value_mode)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ts(day: u32) -> DateTime<Utc> {
        NaiveDate::from_ymd_opt(2017, 8, day)
            .unwrap()
            .and_hms_opt(10, 0, 0)
            .unwrap()
            .and_utc()
    }

    fn ev(order: &str, user: &str, item: &str, day: u32) -> PurchaseEvent {
        PurchaseEvent {
            order_id: order.into(),
            user_id: user.into(),
            item_id: item.into(),
            quantity: 1,
            timestamp: ts(day),
            category: "c".into(),
        }
    }

    const HEADER: &str = "order_id,user_id,item_id,quantity,timestamp,category\n";

    #[test]
    fn empty_body_parses_to_empty_log() {
        let log = parse_transaction_log(HEADER.as_bytes(), LogFormat::Csv).unwrap();
        assert!(log.is_empty());
    }

    #[test]
    fn three_rows() {
        let body = format!(
            "{HEADER}o1,u1,a,1,2017-08-17T10:00:00Z,c1\no1,u1,b,2,2017-08-17T10:00:00Z,c1\no2,u2,a,1,2017-08-18T09:30:00Z,c2\n"
        );
        let log = parse_transaction_log(body.as_bytes(), LogFormat::Csv).unwrap();
        assert_eq!(log.len(), 3);
        assert_eq!(log.assortment_size(), 2);
        assert_eq!(log.events()[1].quantity, 2);
    }

    #[test]
    fn zero_quantity_is_malformed() {
        let body =
            format!("{HEADER}o1,u1,a,1,2017-08-17T10:00:00Z,c\no1,u1,b,0,2017-08-17T10:00:00Z,c\n");
        let err = parse_transaction_log(body.as_bytes(), LogFormat::Csv).unwrap_err();
        assert!(
            matches!(err, Error::MalformedRow { line: 3, .. }),
            "{err:?}"
        );
    }

    #[test]
    fn bad_timestamp_and_missing_column() {
        let body = format!("{HEADER}o1,u1,a,1,yesterday,c\n");
        assert!(matches!(
            parse_transaction_log(body.as_bytes(), LogFormat::Csv),
            Err(Error::MalformedRow { line: 2, .. })
        ));
        let body = "order_id,user_id,item_id,quantity,timestamp\n";
        assert!(matches!(
            parse_transaction_log(body.as_bytes(), LogFormat::Csv),
            Err(Error::MalformedRow { line: 1, .. })
        ));
    }

    #[test]
    fn order_with_two_users_is_rejected() {
        let body = format!("{HEADER}o1,u1,a,1,2017-08-17,c\no1,u2,b,1,2017-08-17,c\n");
        assert!(matches!(
            parse_transaction_log(body.as_bytes(), LogFormat::Csv),
            Err(Error::DuplicateOrderUser { .. })
        ));
    }

    #[test]
    fn jsonl_parses_and_reports_line() {
        let body = "{\"order_id\":\"o1\",\"user_id\":\"u1\",\"item_id\":\"a\",\"quantity\":1,\"timestamp\":\"2017-08-17T10:00:00Z\",\"category\":\"c\"}\n\n{\"order_id\":\"o2\"}\n";
        let err = parse_transaction_log(body.as_bytes(), LogFormat::Jsonl).unwrap_err();
        assert!(matches!(err, Error::MalformedRow { line: 3, .. }));
        let first = body.lines().next().unwrap();
        let log = parse_transaction_log(first.as_bytes(), LogFormat::Jsonl).unwrap();
        assert_eq!(log.len(), 1);
    }

    #[test]
    fn item_window_is_half_open() {
        // day offsets -10, -4, 0 relative to Aug 20
        let log = TransactionLog::new(vec![
            ev("o1", "u1", "a", 10),
            ev("o2", "u1", "b", 16),
            ev("o3", "u2", "c", 20),
        ])
        .unwrap();
        let mut spec = MatrixSpec::new(NaiveDate::from_ymd_opt(2017, 8, 20).unwrap());
        spec.tau_days = Some(5);
        let m = extract_item_matrix(&log, &spec).unwrap();
        let kept: Vec<_> = m.entries().map(|(_, i, _)| i.to_string()).collect();
        assert_eq!(kept, vec!["b", "c"]);

        spec.tau_days = None;
        assert_eq!(extract_item_matrix(&log, &spec).unwrap().nnz(), 3);

        // exactly tau days back is excluded
        spec.tau_days = Some(4);
        let m = extract_item_matrix(&log, &spec).unwrap();
        assert_eq!(m.nnz(), 1);
    }

    #[test]
    fn empty_window() {
        let log = TransactionLog::new(vec![ev("o1", "u1", "a", 10)]).unwrap();
        let mut spec = MatrixSpec::new(NaiveDate::from_ymd_opt(2017, 8, 20).unwrap());
        spec.tau_days = Some(3);
        assert_eq!(extract_item_matrix(&log, &spec), Err(Error::EmptyWindow));
    }

    #[test]
    fn binary_mode_collapses_repeats() {
        let log =
            TransactionLog::new(vec![ev("o1", "u1", "a", 10), ev("o2", "u1", "a", 11)]).unwrap();
        let mut spec = MatrixSpec::new(NaiveDate::from_ymd_opt(2017, 8, 20).unwrap());
        assert_eq!(extract_item_matrix(&log, &spec).unwrap().get(0, 0), 1.0);
        spec.value_mode = ValueMode::Count;
        assert_eq!(extract_item_matrix(&log, &spec).unwrap().get(0, 0), 2.0);
    }

    #[test]
    fn nearest_rank_examples() {
        let counts = [1, 2, 3, 4, 5];
        assert_eq!(nearest_rank_cap(&counts, 100.0).unwrap(), 5);
        assert_eq!(nearest_rank_cap(&counts, 50.0).unwrap(), 3);
        assert_eq!(nearest_rank_cap(&counts, 1e-9).unwrap(), 1);
        assert_eq!(nearest_rank_cap(&[1, 9], 50.0).unwrap(), 1);
        assert!(nearest_rank_cap(&counts, 0.0).is_err());
        assert!(nearest_rank_cap(&counts, 100.5).is_err());
    }

    #[test]
    fn user_matrix_keeps_latest_orders() {
        // u1 has 10 orders, u2 has 2: sigma 50 -> cap 2 (nearest rank of {2, 10})
        let mut events = Vec::new();
        for d in 1..=10 {
            events.push(ev(&format!("a{d:02}"), "u1", &format!("i{d:02}"), d));
        }
        events.push(ev("b1", "u2", "i01", 3));
        events.push(ev("b2", "u2", "i02", 4));
        let log = TransactionLog::new(events).unwrap();
        let mut spec = MatrixSpec::new(NaiveDate::from_ymd_opt(2017, 8, 31).unwrap());
        spec.sigma_percent = 50.0;
        let m = extract_user_matrix(&log, &spec).unwrap();
        let u1 = m.user_index("u1").unwrap();
        let items: Vec<_> = m
            .row(u1)
            .iter()
            .map(|&(i, _)| m.items()[i as usize].to_string())
            .collect();
        assert_eq!(items, vec!["i09", "i10"]);
        assert_eq!(m.row(m.user_index("u2").unwrap()).len(), 2);

        spec.sigma_percent = 100.0;
        let full = extract_user_matrix(&log, &spec).unwrap();
        assert_eq!(full, extract_item_matrix(&log, &spec).unwrap());
    }

    #[test]
    fn cap_one_still_covers_every_user() {
        let mut events = vec![ev("x", "u1", "a", 1)];
        for d in 1..=9 {
            events.push(ev(&format!("y{d}"), "u2", "b", d));
        }
        let log = TransactionLog::new(events).unwrap();
        assert_eq!(order_quantile_cap(&log, 50.0).unwrap(), 1);
        let mut spec = MatrixSpec::new(NaiveDate::from_ymd_opt(2017, 8, 31).unwrap());
        spec.sigma_percent = 50.0;
        let m = extract_user_matrix(&log, &spec).unwrap();
        assert!(m.rows().iter().all(|r| !r.is_empty()));
    }

    #[test]
    fn orders_sorted_with_distinct_items() {
        let log = TransactionLog::new(vec![
            ev("o2", "u1", "a", 2),
            ev("o1", "u1", "b", 2),
            ev("o1", "u1", "b", 2),
            ev("o0", "u2", "c", 5),
        ])
        .unwrap();
        let orders = log.orders();
        let ids: Vec<_> = orders.iter().map(|o| o.order_id.to_string()).collect();
        assert_eq!(ids, vec!["o1", "o2", "o0"]);
        assert_eq!(orders[0].items.len(), 1);
    }
}
