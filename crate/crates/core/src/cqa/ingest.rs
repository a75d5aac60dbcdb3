//! Stack Exchange data-dump ingestion (`Posts.xml`, `Votes.xml`).

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use chrono::NaiveDateTime;
use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;
use serde::Serialize;

use super::{ColdQuestion, QARecord};
use crate::error::{Error, Result};

/// Vote type carrying the awarded bounty amount.
const BOUNTY_CLOSE: &str = "9";

#[derive(Clone, Debug, Default, Serialize, PartialEq, Eq)]
pub struct IngestReport {
    pub questions: usize,
    pub answers: usize,
    pub questions_without_owner: usize,
    pub answers_without_owner: usize,
    pub rows_missing_attributes: usize,
    pub orphan_answers: usize,
    /// Accepted answers written by the asker; kept unresolved.
    pub self_accepted: usize,
    pub bounty_votes: usize,
}

/// Calls `f` with the attribute map of every `<row .../>` element.
fn for_each_row<R: BufRead>(
    reader: R,
    mut f: impl FnMut(&HashMap<String, String>),
) -> Result<()> {
    let mut xml = Reader::from_reader(reader);
    let mut buf = Vec::new();
    let mut attrs = HashMap::new();
    loop {
        let ev = xml
            .read_event_into(&mut buf)
            .map_err(|e| Error::Xml(format!("at byte {}: {e}", xml.buffer_position())))?;
        match ev {
            Event::Empty(ref e) | Event::Start(ref e) if e.name().as_ref() == b"row" => {
                collect_attrs(e, &mut attrs)?;
                f(&attrs);
            }
            Event::Eof => return Ok(()),
            _ => {}
        }
        buf.clear();
    }
}

fn collect_attrs(e: &BytesStart, out: &mut HashMap<String, String>) -> Result<()> {
    out.clear();
    for a in e.attributes() {
        let a = a.map_err(|e| Error::Xml(e.to_string()))?;
        let key = String::from_utf8_lossy(a.key.as_ref()).into_owned();
        let value = a.unescape_value().map_err(|e| Error::Xml(e.to_string()))?;
        out.insert(key, value.into_owned());
    }
    Ok(())
}

fn parse_time(s: &str) -> Option<i64> {
    NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S%.f")
        .ok()
        .map(|t| t.and_utc().timestamp_millis())
}

struct Question {
    asker: String,
    accepted: Option<String>,
    time: i64,
}

struct Answer {
    parent: String,
    owner: String,
}

/// Streams `Posts.xml` into questions (with answers attached).
pub fn read_posts<R: BufRead>(reader: R, report: &mut IngestReport) -> Result<Vec<QARecord>> {
    let mut questions: BTreeMap<String, Question> = BTreeMap::new();
    let mut order: Vec<String> = Vec::new();
    let mut answers: HashMap<String, Answer> = HashMap::new();
    let mut answer_order: Vec<String> = Vec::new();
    for_each_row(reader, |row| {
        let get = |k: &str| row.get(k).map(String::as_str);
        match get("PostTypeId") {
            Some("1") => {
                let (Some(id), Some(time)) = (get("Id"), get("CreationDate").and_then(parse_time)) else {
                    report.rows_missing_attributes += 1;
                    return;
                };
                let Some(owner) = get("OwnerUserId") else {
                    report.questions_without_owner += 1;
                    return;
                };
                order.push(id.to_string());
                questions.insert(
                    id.to_string(),
                    Question {
                        asker: owner.to_string(),
                        accepted: get("AcceptedAnswerId").map(str::to_string),
                        time,
                    },
                );
            }
            Some("2") => {
                let (Some(id), Some(parent)) = (get("Id"), get("ParentId")) else {
                    report.rows_missing_attributes += 1;
                    return;
                };
                let Some(owner) = get("OwnerUserId") else {
                    report.answers_without_owner += 1;
                    return;
                };
                answer_order.push(id.to_string());
                answers.insert(
                    id.to_string(),
                    Answer {
                        parent: parent.to_string(),
                        owner: owner.to_string(),
                    },
                );
            }
            _ => {}
        }
    })?;

    let mut answerers: HashMap<&str, Vec<String>> = HashMap::new();
    for id in &answer_order {
        let a = &answers[id];
        match questions.get(&a.parent) {
            Some(q) => {
                report.answers += 1;
                let list = answerers.entry(a.parent.as_str()).or_default();
                if a.owner != q.asker && !list.contains(&a.owner) {
                    list.push(a.owner.clone());
                }
            }
            None => report.orphan_answers += 1,
        }
    }

    let mut out = Vec::with_capacity(order.len());
    for id in &order {
        let q = &questions[id];
        report.questions += 1;
        let mut best = q
            .accepted
            .as_ref()
            .and_then(|a| answers.get(a))
            .filter(|a| a.parent == *id)
            .map(|a| a.owner.clone());
        if best.as_ref() == Some(&q.asker) {
            report.self_accepted += 1;
            best = None;
        }
        out.push(QARecord {
            question_id: id.clone(),
            asker_id: q.asker.clone(),
            best_answerer_id: best,
            answerer_ids: answerers.remove(id.as_str()).unwrap_or_default(),
            creation_time: q.time,
            bounty: 0,
        });
    }
    Ok(out)
}

/// Summed bounty-close amounts per post id.
pub fn read_votes<R: BufRead>(reader: R, report: &mut IngestReport) -> Result<HashMap<String, u64>> {
    let mut bounty: HashMap<String, u64> = HashMap::new();
    for_each_row(reader, |row| {
        if row.get("VoteTypeId").map(String::as_str) != Some(BOUNTY_CLOSE) {
            return;
        }
        let amount = row.get("BountyAmount").and_then(|a| a.parse::<u64>().ok());
        match (row.get("PostId"), amount) {
            (Some(post), Some(amount)) => {
                report.bounty_votes += 1;
                *bounty.entry(post.clone()).or_default() += amount;
            }
            _ => report.rows_missing_attributes += 1,
        }
    })?;
    Ok(bounty)
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?))
}

/// All question records, with bounties attached when a votes file is given.
pub fn ingest_stackexchange(posts: &Path, votes: Option<&Path>) -> Result<(Vec<QARecord>, IngestReport)> {
    let mut report = IngestReport::default();
    let mut records = read_posts(open(posts)?, &mut report)?;
    if let Some(votes) = votes {
        let bounty = read_votes(open(votes)?, &mut report)?;
        for r in &mut records {
            r.bounty = bounty.get(&r.question_id).copied().unwrap_or(0);
        }
    }
    Ok((records, report))
}

/// Holds out, per asker, the latest resolved question that has at least
/// `min_answerers` answerers and at least one earlier resolved question by
/// the same asker. Returns the remaining training records and the held-out
/// cold questions, both in input order.
pub fn select_cold(records: &[QARecord], min_answerers: usize) -> (Vec<QARecord>, Vec<ColdQuestion>) {
    let mut by_asker: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        if r.best_answerer_id.is_some() {
            by_asker.entry(&r.asker_id).or_default().push(i);
        }
    }
    let mut held = vec![false; records.len()];
    for idx in by_asker.values() {
        let mut idx = idx.clone();
        idx.sort_by_key(|&i| (records[i].creation_time, records[i].question_id.clone()));
        if let Some(&last) = idx.last() {
            let r = &records[last];
            let earlier = idx.iter().any(|&i| records[i].creation_time < r.creation_time);
            if earlier && r.answerer_ids.len() >= min_answerers.max(1) {
                held[last] = true;
            }
        }
    }
    let mut train = Vec::new();
    let mut cold = Vec::new();
    for (i, r) in records.iter().enumerate() {
        if !held[i] {
            train.push(r.clone());
            continue;
        }
        let best = r.best_answerer_id.clone().expect("resolved");
        let mut candidates = r.answerer_ids.clone();
        if !candidates.contains(&best) {
            candidates.push(best.clone());
        }
        cold.push(ColdQuestion {
            question_id: r.question_id.clone(),
            asker_id: r.asker_id.clone(),
            creation_time: r.creation_time,
            text_vector: None,
            candidate_answerers: candidates,
            true_best_answerer: best,
        });
    }
    (train, cold)
}

#[cfg(test)]
mod tests {
    use super::*;

    const POSTS: &str = r#"<?xml version="1.0" encoding="utf-8"?>
<posts>
  <row Id="1" PostTypeId="1" AcceptedAnswerId="3" CreationDate="2017-01-01T10:00:00.000" OwnerUserId="10" Title="a &amp; b" />
  <row Id="2" PostTypeId="2" ParentId="1" CreationDate="2017-01-01T11:00:00.000" OwnerUserId="20" />
  <row Id="3" PostTypeId="2" ParentId="1" CreationDate="2017-01-01T12:00:00.000" OwnerUserId="30" />
  <row Id="4" PostTypeId="1" CreationDate="2017-01-02T10:00:00.000" OwnerUserId="10" />
  <row Id="5" PostTypeId="2" ParentId="4" CreationDate="2017-01-02T11:00:00.000" OwnerUserId="20" />
  <row Id="6" PostTypeId="1" CreationDate="2017-01-03T10:00:00.000" />
  <row Id="7" PostTypeId="2" ParentId="99" CreationDate="2017-01-03T10:00:00.000" OwnerUserId="20" />
  <row Id="8" PostTypeId="2" ParentId="4" CreationDate="2017-01-03T10:00:00.000" />
</posts>"#;

    const VOTES: &str = r#"<votes>
  <row Id="1" PostId="1" VoteTypeId="9" BountyAmount="100" CreationDate="2017-01-05T00:00:00.000" />
  <row Id="2" PostId="1" VoteTypeId="9" BountyAmount="50" CreationDate="2017-01-06T00:00:00.000" />
  <row Id="3" PostId="1" VoteTypeId="8" BountyAmount="100" CreationDate="2017-01-04T00:00:00.000" />
  <row Id="4" PostId="4" VoteTypeId="2" CreationDate="2017-01-04T00:00:00.000" />
</votes>"#;

    #[test]
    fn posts_map_to_records() {
        let mut rep = IngestReport::default();
        let recs = read_posts(POSTS.as_bytes(), &mut rep).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[0].question_id, "1");
        assert_eq!(recs[0].asker_id, "10");
        assert_eq!(recs[0].best_answerer_id.as_deref(), Some("30"));
        assert_eq!(recs[0].answerer_ids, vec!["20", "30"]);
        assert!(recs[0].creation_time < recs[1].creation_time);
        assert_eq!(recs[1].best_answerer_id, None);
        assert_eq!(recs[1].answerer_ids, vec!["20"]);
        assert_eq!(rep.questions_without_owner, 1);
        assert_eq!(rep.answers_without_owner, 1);
        assert_eq!(rep.orphan_answers, 1);
    }

    #[test]
    fn bounty_close_votes_are_summed() {
        let mut rep = IngestReport::default();
        let b = read_votes(VOTES.as_bytes(), &mut rep).unwrap();
        assert_eq!(b["1"], 150);
        assert!(!b.contains_key("4"));
        assert_eq!(rep.bounty_votes, 2);
    }

    #[test]
    fn malformed_xml_is_an_error() {
        let mut rep = IngestReport::default();
        assert!(matches!(
            read_posts("<posts><row Id=\"1\" PostTypeId=\"1 /></posts>".as_bytes(), &mut rep),
            Err(Error::Xml(_))
        ));
    }

    #[test]
    fn cold_selection_takes_latest_with_history() {
        let mk = |q: &str, a: &str, best: &str, t: i64, answerers: &[&str]| QARecord {
            question_id: q.into(),
            asker_id: a.into(),
            best_answerer_id: Some(best.into()),
            answerer_ids: answerers.iter().map(|s| s.to_string()).collect(),
            creation_time: t,
            bounty: 0,
        };
        let recs = vec![
            mk("q1", "a", "x", 1, &["x", "y"]),
            mk("q2", "a", "y", 2, &["x", "y"]),
            mk("q3", "b", "x", 3, &["x", "y"]),
        ];
        let (train, cold) = select_cold(&recs, 2);
        assert_eq!(train.len(), 2);
        assert_eq!(cold.len(), 1);
        assert_eq!(cold[0].question_id, "q2");
        assert_eq!(cold[0].true_best_answerer, "y");
        let (_, cold) = select_cold(&recs, 3);
        assert!(cold.is_empty());
    }
}
