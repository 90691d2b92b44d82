//! Dataset ingestion: CSV loading, text normalization and label statistics.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use unicode_general_category::{get_general_category, GeneralCategory};

use crate::error::{Error, Result};

/// Binary hope-speech label. `Hope` is the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    #[serde(rename = "Not Hope")]
    NotHope,
    #[serde(rename = "Hope")]
    Hope,
}

impl Label {
    /// Both labels in class-index order.
    pub const ALL: [Label; 2] = [Label::NotHope, Label::Hope];

    pub fn numeric(self) -> u8 {
        match self {
            Label::NotHope => 0,
            Label::Hope => 1,
        }
    }

    pub fn from_numeric(value: u8) -> Option<Label> {
        match value {
            0 => Some(Label::NotHope),
            1 => Some(Label::Hope),
            _ => None,
        }
    }

    /// Position in a [`crate::classifier::ProbDist`] and in confusion matrices.
    pub fn index(self) -> usize {
        self.numeric() as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::NotHope => "Not Hope",
            Label::Hope => "Hope",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("hope") {
            Ok(Label::Hope)
        } else if s.eq_ignore_ascii_case("not hope") {
            Ok(Label::NotHope)
        } else {
            Err(())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    /// Normalized form of `raw_text`.
    pub text: String,
    pub raw_text: String,
}

impl Document {
    pub fn new(id: impl Into<String>, raw_text: impl Into<String>) -> Self {
        let raw_text = raw_text.into();
        Document {
            id: id.into(),
            text: normalize(&raw_text),
            raw_text,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledDocument {
    pub doc: Document,
    pub label: Label,
}

impl LabeledDocument {
    pub fn new(id: impl Into<String>, raw_text: impl Into<String>, label: Label) -> Self {
        LabeledDocument {
            doc: Document::new(id, raw_text),
            label,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Language {
    English,
    German,
    Spanish,
    Urdu,
    Other(String),
}

impl FromStr for Language {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s.trim().to_lowercase().as_str() {
            "en" | "eng" | "english" => Language::English,
            "de" | "ger" | "german" => Language::German,
            "es" | "spa" | "spanish" => Language::Spanish,
            "ur" | "urd" | "urdu" => Language::Urdu,
            other => Language::Other(other.to_string()),
        })
    }
}

impl fmt::Display for Language {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Language::English => f.write_str("english"),
            Language::German => f.write_str("german"),
            Language::Spanish => f.write_str("spanish"),
            Language::Urdu => f.write_str("urdu"),
            Language::Other(tag) => f.write_str(tag),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    /// Train and dev splits must be fully labeled.
    pub fn requires_labels(self) -> bool {
        !matches!(self, Split::Test)
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "dev" | "development" | "val" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split `{other}`")),
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        })
    }
}

/// A column reference: a header name, or a zero-based position.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Column {
    Name(String),
    Index(usize),
}

impl Column {
    fn resolve(&self, headers: Option<&csv::StringRecord>) -> Result<usize> {
        match (self, headers) {
            (Column::Index(i), Some(h)) if *i < h.len() => Ok(*i),
            (Column::Index(i), None) => Ok(*i),
            (Column::Name(name), Some(h)) => h
                .iter()
                .position(|c| c.trim() == name)
                .or_else(|| name.parse::<usize>().ok().filter(|&i| i < h.len()))
                .ok_or_else(|| Error::MissingColumn(name.clone())),
            (Column::Name(name), None) => name.parse::<usize>().map_err(|_| Error::MissingColumn(name.clone())),
            (Column::Index(i), Some(_)) => Err(Error::MissingColumn(i.to_string())),
        }
    }
}

impl From<&str> for Column {
    fn from(s: &str) -> Self {
        Column::Name(s.to_string())
    }
}

impl fmt::Display for Column {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Column::Name(n) => f.write_str(n),
            Column::Index(i) => write!(f, "#{i}"),
        }
    }
}

/// Which CSV columns hold the id, text and label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CsvSchema {
    /// Ids are synthesized as zero-based row indices when absent.
    pub id: Option<Column>,
    pub text: Column,
    pub label: Option<Column>,
    pub has_header: bool,
}

impl Default for CsvSchema {
    fn default() -> Self {
        CsvSchema {
            id: None,
            text: Column::Name("text".into()),
            label: Some(Column::Name("label".into())),
            has_header: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entry {
    pub doc: Document,
    pub label: Option<Label>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Corpus {
    pub name: String,
    pub language: Language,
    pub split: Split,
    /// File order.
    pub entries: Vec<Entry>,
}

impl Corpus {
    pub fn from_labeled(name: impl Into<String>, language: Language, split: Split, docs: Vec<LabeledDocument>) -> Self {
        Corpus {
            name: name.into(),
            language,
            split,
            entries: docs
                .into_iter()
                .map(|d| Entry {
                    doc: d.doc,
                    label: Some(d.label),
                })
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn documents(&self) -> impl Iterator<Item = &Document> {
        self.entries.iter().map(|e| &e.doc)
    }

    pub fn is_labeled(&self) -> bool {
        self.entries.iter().all(|e| e.label.is_some())
    }

    /// All documents with their labels; fails if any document is unlabeled.
    pub fn labeled(&self) -> Result<Vec<LabeledDocument>> {
        self.entries
            .iter()
            .map(|e| {
                e.label
                    .map(|label| LabeledDocument {
                        doc: e.doc.clone(),
                        label,
                    })
                    .ok_or_else(|| Error::Unlabeled(self.name.clone()))
            })
            .collect()
    }
}

/// Loads a corpus from a CSV file. See [`read_corpus`].
pub fn load_corpus(path: &Path, schema: &CsvSchema, split: Split, language: Language) -> Result<Corpus> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let mut corpus = read_corpus(file, schema, split)?;
    corpus.name = name;
    corpus.language = language;
    Ok(corpus)
}

/// Parses CSV rows into a corpus. Row numbers in errors are 1-based data rows.
pub fn read_corpus<R: Read>(reader: R, schema: &CsvSchema, split: Split) -> Result<Corpus> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(schema.has_header)
        .flexible(true)
        .from_reader(reader);

    let headers = if schema.has_header {
        let h = rdr.headers()?.clone();
        Some(h)
    } else {
        None
    };

    let mut entries = Vec::new();
    // A file with no bytes at all has neither header nor rows.
    if headers.as_ref().is_some_and(|h| h.is_empty()) {
        return Ok(Corpus {
            name: String::new(),
            language: Language::Other(String::new()),
            split,
            entries,
        });
    }

    let text_col = schema.text.resolve(headers.as_ref())?;
    let id_col = schema.id.as_ref().map(|c| c.resolve(headers.as_ref())).transpose()?;
    let label_col = match &schema.label {
        Some(c) => match c.resolve(headers.as_ref()) {
            Ok(i) => Some(i),
            Err(e) if split.requires_labels() => return Err(e),
            Err(_) => None,
        },
        None if split.requires_labels() => return Err(Error::Config("labeled split needs a label column".into())),
        None => None,
    };

    let mut seen = HashSet::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let row = i + 1;
        let cell = |col: usize| -> Result<&str> {
            record
                .get(col)
                .ok_or_else(|| Error::MissingColumn(format!("column {col} on row {row}")))
        };
        let id = match id_col {
            Some(c) => cell(c)?.trim().to_string(),
            None => i.to_string(),
        };
        if !seen.insert(id.clone()) {
            return Err(Error::DuplicateId { row, id });
        }
        let raw_text = cell(text_col)?.to_string();
        let label = match label_col {
            Some(c) => {
                let value = record.get(c).unwrap_or("");
                if value.trim().is_empty() {
                    if split.requires_labels() {
                        return Err(Error::MissingLabel { row });
                    }
                    None
                } else {
                    Some(value.parse::<Label>().map_err(|_| Error::UnknownLabel {
                        row,
                        value: value.to_string(),
                    })?)
                }
            }
            None => None,
        };
        entries.push(Entry {
            doc: Document::new(id, raw_text),
            label,
        });
    }

    Ok(Corpus {
        name: String::new(),
        language: Language::Other(String::new()),
        split,
        entries,
    })
}

/// Writes `id,text,label` rows with the raw text; unlabeled rows get an empty label.
pub fn write_corpus<W: Write>(corpus: &Corpus, writer: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(writer);
    w.write_record(["id", "text", "label"])?;
    for e in &corpus.entries {
        let label = e.label.map(Label::as_str).unwrap_or("");
        w.write_record([e.doc.id.as_str(), e.doc.raw_text.as_str(), label])?;
    }
    w.flush().map_err(|e| Error::io("<csv output>", e))?;
    Ok(())
}

const URL_PREFIXES: [&str; 3] = ["http://", "https://", "www."];

fn url_prefix_at(s: &str) -> bool {
    URL_PREFIXES
        .iter()
        .any(|p| s.len() >= p.len() && s.is_char_boundary(p.len()) && s[..p.len()].eq_ignore_ascii_case(p))
}

fn strip_urls(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    let mut rest = raw;
    while let Some(c) = rest.chars().next() {
        if url_prefix_at(rest) {
            let end = rest.find(char::is_whitespace).unwrap_or(rest.len());
            rest = &rest[end..];
        } else {
            out.push(c);
            rest = &rest[c.len_utf8()..];
        }
    }
    out
}

fn is_punctuation(c: char) -> bool {
    matches!(
        get_general_category(c),
        GeneralCategory::ConnectorPunctuation
            | GeneralCategory::DashPunctuation
            | GeneralCategory::OpenPunctuation
            | GeneralCategory::ClosePunctuation
            | GeneralCategory::InitialPunctuation
            | GeneralCategory::FinalPunctuation
            | GeneralCategory::OtherPunctuation
    )
}

/// Canonical text form: URLs removed, lowercased, punctuation (Unicode
/// category P*) removed and whitespace collapsed. Idempotent.
///
/// URL prefixes are matched ASCII case-insensitively.
pub fn normalize(raw: &str) -> String {
    let lowered = strip_urls(raw).to_lowercase();
    let mut out = String::with_capacity(lowered.len());
    for word in lowered
        .split(char::is_whitespace)
        .map(|w| w.chars().filter(|&c| !is_punctuation(c)).collect::<String>())
        .filter(|w| !w.is_empty())
    {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(&word);
    }
    out
}

/// Label distribution and average length of a labeled corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub total: usize,
    pub per_class: BTreeMap<Label, usize>,
    /// Mean whitespace-token count of the normalized text; classes without
    /// documents are absent.
    pub mean_words_per_class: BTreeMap<Label, f64>,
}

impl CorpusStats {
    pub fn count(&self, label: Label) -> usize {
        self.per_class.get(&label).copied().unwrap_or(0)
    }
}

pub fn corpus_stats(corpus: &Corpus) -> Result<CorpusStats> {
    let docs = corpus.labeled()?;
    let mut counts = [0usize; 2];
    let mut words = [0usize; 2];
    for d in &docs {
        counts[d.label.index()] += 1;
        words[d.label.index()] += d.doc.text.split_whitespace().count();
    }
    let per_class = Label::ALL.iter().map(|&l| (l, counts[l.index()])).collect();
    let mean_words_per_class = Label::ALL
        .iter()
        .filter(|l| counts[l.index()] > 0)
        .map(|&l| (l, words[l.index()] as f64 / counts[l.index()] as f64))
        .collect();
    Ok(CorpusStats {
        total: docs.len(),
        per_class,
        mean_words_per_class,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn parse(csv: &str, split: Split) -> Result<Corpus> {
        let schema = CsvSchema {
            id: Some("id".into()),
            ..CsvSchema::default()
        };
        read_corpus(csv.as_bytes(), &schema, split)
    }

    #[test]
    fn loads_minimal_labeled_file() {
        let c = parse(
            "id,text,label\n1,Great things ahead!,Hope\n2,nothing matters,Not Hope\n",
            Split::Train,
        )
        .unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c.entries[0].doc.id, "1");
        assert_eq!(c.entries[0].doc.raw_text, "Great things ahead!");
        assert_eq!(c.entries[0].doc.text, "great things ahead");
        let stats = corpus_stats(&c).unwrap();
        assert_eq!(stats.count(Label::Hope), 1);
        assert_eq!(stats.count(Label::NotHope), 1);
        assert_eq!(stats.mean_words_per_class[&Label::Hope], 3.0);
        assert_eq!(stats.mean_words_per_class[&Label::NotHope], 2.0);
    }

    #[test]
    fn label_matching_trims_and_ignores_case() {
        let c = parse("id,text,label\na,x,  HOPE \nb,y,not HOPE\n", Split::Dev).unwrap();
        assert_eq!(c.entries[0].label, Some(Label::Hope));
        assert_eq!(c.entries[1].label, Some(Label::NotHope));
    }

    #[test]
    fn unknown_label_names_row_and_value() {
        let err = parse("id,text,label\n1,a,Hope\n2,b,Not Hope\n3,c,maybe\n", Split::Train).unwrap_err();
        match err {
            Error::UnknownLabel { row, value } => {
                assert_eq!(row, 3);
                assert_eq!(value, "maybe");
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(format!(
            "{}",
            parse("id,text,label\n1,a,Hope\n2,b,Hope\n3,c,maybe\n", Split::Train).unwrap_err()
        )
        .contains("row 3"));
    }

    #[test]
    fn duplicate_ids_rejected() {
        let err = parse("id,text,label\n1,a,Hope\n1,b,Hope\n", Split::Train).unwrap_err();
        assert!(matches!(err, Error::DuplicateId { row: 2, .. }));
    }

    #[test]
    fn missing_label_in_labeled_split() {
        let err = parse("id,text,label\n1,a,\n", Split::Train).unwrap_err();
        assert!(matches!(err, Error::MissingLabel { row: 1 }));
        let test = parse("id,text,label\n1,a,\n", Split::Test).unwrap();
        assert_eq!(test.entries[0].label, None);
    }

    #[test]
    fn missing_columns() {
        let err = parse("id,body,label\n1,a,Hope\n", Split::Train).unwrap_err();
        assert!(matches!(err, Error::MissingColumn(ref c) if c == "text"));
        let err = parse("id,text\n1,a\n", Split::Train).unwrap_err();
        assert!(matches!(err, Error::MissingColumn(ref c) if c == "label"));
        // test splits tolerate an absent label column
        let c = parse("id,text\n1,a\n", Split::Test).unwrap();
        assert!(!c.is_labeled());
    }

    #[test]
    fn synthesized_ids_are_row_indices() {
        let c = read_corpus(
            "text,label\nx,Hope\ny,Hope\n".as_bytes(),
            &CsvSchema::default(),
            Split::Train,
        )
        .unwrap();
        let ids: Vec<_> = c.documents().map(|d| d.id.as_str()).collect();
        assert_eq!(ids, ["0", "1"]);
    }

    #[test]
    fn headerless_files_use_positions() {
        let schema = CsvSchema {
            id: Some(Column::Index(0)),
            text: Column::Index(1),
            label: Some(Column::Index(2)),
            has_header: false,
        };
        let c = read_corpus("7,\"a, \"\"quoted\"\" text\",Hope\n".as_bytes(), &schema, Split::Train).unwrap();
        assert_eq!(c.entries[0].doc.id, "7");
        assert_eq!(c.entries[0].doc.raw_text, "a, \"quoted\" text");
    }

    #[test]
    fn empty_file_is_empty_corpus() {
        let c = read_corpus("".as_bytes(), &CsvSchema::default(), Split::Test).unwrap();
        assert!(c.is_empty());
    }

    #[test]
    fn empty_corpus_stats_are_zero() {
        let c = parse("id,text,label\n", Split::Train).unwrap();
        let s = corpus_stats(&c).unwrap();
        assert_eq!(s.total, 0);
        assert_eq!(s.count(Label::Hope), 0);
        assert!(s.mean_words_per_class.is_empty());
    }

    #[test]
    fn stats_reject_unlabeled() {
        let c = parse("id,text,label\n1,a,\n", Split::Test).unwrap();
        assert!(matches!(corpus_stats(&c), Err(Error::Unlabeled(_))));
    }

    #[test]
    fn stats_json_keys() {
        let c = parse("id,text,label\n1,a b,Hope\n", Split::Train).unwrap();
        let v = serde_json::to_value(corpus_stats(&c).unwrap()).unwrap();
        assert_eq!(v["total"], 1);
        assert_eq!(v["per_class"]["Hope"], 1);
        assert_eq!(v["per_class"]["Not Hope"], 0);
        assert_eq!(v["mean_words_per_class"]["Hope"], 2.0);
        assert!(v["mean_words_per_class"].get("Not Hope").is_none());
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize("Check https://x.co NOW!"), "check now");
        assert_eq!(normalize(""), "");
        assert_eq!(normalize("already normalized text"), "already normalized text");
        assert_eq!(normalize("see WWW.Example.com/a?b=c, ok"), "see ok");
        assert_eq!(normalize("  ¡Hola,   MUNDO!  "), "hola mundo");
        assert_eq!(normalize("«Über» – Straße"), "über straße");
        // Urdu: caseless script, Arabic comma and full stop are punctuation
        assert_eq!(normalize("امید، زندگی۔"), "امید زندگی");
    }

    #[test]
    fn label_mapping_is_a_bijection() {
        for l in Label::ALL {
            assert_eq!(Label::from_numeric(l.numeric()), Some(l));
            assert_eq!(l.as_str().parse::<Label>(), Ok(l));
        }
        assert_eq!(Label::Hope.numeric(), 1);
        assert_eq!(Label::NotHope.numeric(), 0);
    }

    fn label_strategy() -> impl Strategy<Value = Option<Label>> {
        prop_oneof![Just(None), Just(Some(Label::Hope)), Just(Some(Label::NotHope))]
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent(s in any::<String>()) {
            let once = normalize(&s);
            prop_assert_eq!(normalize(&once), once);
        }

        #[test]
        fn normalize_is_idempotent_on_urlish_text(s in "[a-zA-Z :/.!?,wWhHtTpPsS\u{00e9}\u{0627}\u{060c} ]{0,40}") {
            let once = normalize(&s);
            prop_assert_eq!(normalize(&once), once);
        }

        #[test]
        fn write_then_read_round_trips(rows in proptest::collection::vec(("[^\u{0}]{0,30}", label_strategy()), 0..20)) {
            let corpus = Corpus {
                name: String::new(),
                language: Language::Other(String::new()),
                split: Split::Test,
                entries: rows
                    .iter()
                    .enumerate()
                    .map(|(i, (t, l))| Entry { doc: Document::new(format!("d{i}"), t.clone()), label: *l })
                    .collect(),
            };
            let mut buf = Vec::new();
            write_corpus(&corpus, &mut buf).unwrap();
            let schema = CsvSchema { id: Some("id".into()), ..CsvSchema::default() };
            let back = read_corpus(buf.as_slice(), &schema, Split::Test).unwrap();
            prop_assert_eq!(back.entries.len(), corpus.entries.len());
            for (a, b) in back.entries.iter().zip(&corpus.entries) {
                prop_assert_eq!(&a.doc.id, &b.doc.id);
                prop_assert_eq!(&a.doc.raw_text, &b.doc.raw_text);
                prop_assert_eq!(a.label, b.label);
            }
        }

        #[test]
        fn class_counts_sum_to_total(labels in proptest::collection::vec(any::<bool>(), 0..50)) {
            let docs = labels
                .iter()
                .enumerate()
                .map(|(i, &h)| LabeledDocument::new(i.to_string(), "w", if h { Label::Hope } else { Label::NotHope }))
                .collect();
            let c = Corpus::from_labeled("t", Language::English, Split::Train, docs);
            let s = corpus_stats(&c).unwrap();
            prop_assert_eq!(s.per_class.values().sum::<usize>(), s.total);
            prop_assert_eq!(s.total, labels.len());
        }
    }
}
