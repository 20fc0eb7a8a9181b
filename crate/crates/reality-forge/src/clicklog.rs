//! Clickstream ingestion and synthetic log generation.
//!
//! A [`Click`] is one query/response event; a [`Clickstream`] is one user's
//! ordered thread of clicks; a [`ClickstreamCollection`] groups streams and
//! owns the term vocabulary built while parsing. Logs are line oriented:
//! JSONL records `{stream_id, seq, timestamp_ms, query, response}` or an
//! equivalent 5-column TSV (literal tabs, no quoting, control characters
//! forbidden in fields).

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::BufRead;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ClickLogError {
    #[error("line {line}: decode error: {msg}")]
    Decode { line: usize, msg: String },
    #[error("line {line}: stream {stream_id:?}: expected seq {expected}, found {found}")]
    Sequence {
        line: usize,
        stream_id: String,
        expected: u64,
        found: u64,
    },
    #[error("line {line}: stream {stream_id:?}: timestamp decreases at seq {seq}")]
    Order {
        line: usize,
        stream_id: String,
        seq: u64,
    },
    #[error("invalid synthetic config: {0}")]
    Config(String),
    #[error("field contains a control character or tab, not representable in TSV")]
    TsvField,
}

/// Input / output log format.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LogFormat {
    Jsonl,
    Tsv,
}

/// One query/response event. `seq` is the position within its stream.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Click {
    pub stream_id: String,
    pub seq: u64,
    pub timestamp_ms: i64,
    pub query: String,
    pub response: String,
}

/// One user's ordered thread of clicks (nonempty, consecutive `seq`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Clickstream {
    pub stream_id: String,
    pub clicks: Vec<Click>,
}

impl Clickstream {
    pub fn len(&self) -> usize {
        self.clicks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clicks.is_empty()
    }
}

/// Sparse bag of interned terms; zero counts are never stored.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TermBag {
    /// Sorted by term id.
    counts: Vec<(u32, u32)>,
}

impl TermBag {
    pub fn from_counts(mut counts: Vec<(u32, u32)>) -> Self {
        counts.retain(|&(_, c)| c > 0);
        counts.sort_unstable_by_key(|&(id, _)| id);
        let mut merged: Vec<(u32, u32)> = Vec::with_capacity(counts.len());
        for (id, c) in counts {
            match merged.last_mut() {
                Some(last) if last.0 == id => last.1 += c,
                _ => merged.push((id, c)),
            }
        }
        TermBag { counts: merged }
    }

    pub fn entries(&self) -> &[(u32, u32)] {
        &self.counts
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&(_, c)| c as u64).sum()
    }

    /// Bag union (counts add).
    pub fn merge(&self, other: &TermBag) -> TermBag {
        let mut out = Vec::with_capacity(self.counts.len() + other.counts.len());
        let (mut i, mut j) = (0, 0);
        while i < self.counts.len() && j < other.counts.len() {
            let (a, b) = (self.counts[i], other.counts[j]);
            if a.0 < b.0 {
                out.push(a);
                i += 1;
            } else if a.0 > b.0 {
                out.push(b);
                j += 1;
            } else {
                out.push((a.0, a.1 + b.1));
                i += 1;
                j += 1;
            }
        }
        out.extend_from_slice(&self.counts[i..]);
        out.extend_from_slice(&other.counts[j..]);
        TermBag { counts: out }
    }
}

/// Term interner shared by all clicks of a collection.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocabulary {
    terms: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocabulary {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn intern(&mut self, term: &str) -> u32 {
        if let Some(&id) = self.index.get(term) {
            return id;
        }
        let id = self.terms.len() as u32;
        self.terms.push(term.to_string());
        self.index.insert(term.to_string(), id);
        id
    }

    pub fn get(&self, term: &str) -> Option<u32> {
        self.index.get(term).copied()
    }

    pub fn term(&self, id: u32) -> &str {
        &self.terms[id as usize]
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }
}

/// Lowercase, split on maximal runs of non-alphanumeric characters, drop
/// empty tokens; counts are occurrence counts.
pub fn tokenize(vocab: &mut Vocabulary, text: &str) -> TermBag {
    let lower = text.to_lowercase();
    let mut counts: Vec<(u32, u32)> = Vec::new();
    for token in lower.split(|c: char| !c.is_alphanumeric()) {
        if token.is_empty() {
            continue;
        }
        let id = vocab.intern(token);
        counts.push((id, 1));
    }
    TermBag::from_counts(counts)
}

/// Parsed log: streams plus the vocabulary and per-click term bags built at
/// parse time. Immutable after construction.
#[derive(Debug, Clone)]
pub struct ClickstreamCollection {
    streams: Vec<Clickstream>,
    vocabulary: Vocabulary,
    /// bags[stream_index][seq] = tokenized query ⊎ response.
    bags: Vec<Vec<TermBag>>,
}

impl ClickstreamCollection {
    /// Validates the stream invariants and builds vocabulary and bags.
    /// `lines`, when present, maps each click back to its input line for
    /// error reporting (parallel to the clicks of each stream).
    fn from_streams(
        streams: Vec<Clickstream>,
        lines: Option<&[Vec<usize>]>,
    ) -> Result<Self, ClickLogError> {
        let line_of = |si: usize, ci: usize| lines.map(|l| l[si][ci]).unwrap_or(0);
        for (si, s) in streams.iter().enumerate() {
            debug_assert!(!s.clicks.is_empty());
            let mut prev_ts = i64::MIN;
            for (ci, c) in s.clicks.iter().enumerate() {
                if c.seq != ci as u64 {
                    return Err(ClickLogError::Sequence {
                        line: line_of(si, ci),
                        stream_id: s.stream_id.clone(),
                        expected: ci as u64,
                        found: c.seq,
                    });
                }
                if c.timestamp_ms < prev_ts {
                    return Err(ClickLogError::Order {
                        line: line_of(si, ci),
                        stream_id: s.stream_id.clone(),
                        seq: c.seq,
                    });
                }
                prev_ts = c.timestamp_ms;
            }
        }
        let mut vocabulary = Vocabulary::new();
        let mut bags = Vec::with_capacity(streams.len());
        for s in &streams {
            let mut stream_bags = Vec::with_capacity(s.clicks.len());
            for c in &s.clicks {
                let q = tokenize(&mut vocabulary, &c.query);
                let r = tokenize(&mut vocabulary, &c.response);
                stream_bags.push(q.merge(&r));
            }
            bags.push(stream_bags);
        }
        Ok(ClickstreamCollection {
            streams,
            vocabulary,
            bags,
        })
    }

    pub fn streams(&self) -> &[Clickstream] {
        &self.streams
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocabulary
    }

    pub fn num_clicks(&self) -> usize {
        self.streams.iter().map(|s| s.clicks.len()).sum()
    }

    /// Combined query ⊎ response bag of one click.
    pub fn bag(&self, stream_index: usize, seq: usize) -> &TermBag {
        &self.bags[stream_index][seq]
    }

    pub fn click(&self, stream_index: usize, seq: usize) -> &Click {
        &self.streams[stream_index].clicks[seq]
    }

    /// Longest stream length (number of transversal layers).
    pub fn max_stream_len(&self) -> usize {
        self.streams.iter().map(|s| s.clicks.len()).max().unwrap_or(0)
    }

    pub fn serialize(&self, format: LogFormat) -> Result<String, ClickLogError> {
        let mut out = String::new();
        for s in &self.streams {
            for c in &s.clicks {
                match format {
                    LogFormat::Jsonl => {
                        let rec = serde_json::to_string(c).expect("click serializes");
                        out.push_str(&rec);
                        out.push('\n');
                    }
                    LogFormat::Tsv => {
                        for field in [&c.stream_id, &c.query, &c.response] {
                            if field.chars().any(|ch| ch.is_control() || ch == '\t') {
                                return Err(ClickLogError::TsvField);
                            }
                        }
                        writeln!(
                            out,
                            "{}\t{}\t{}\t{}\t{}",
                            c.stream_id, c.seq, c.timestamp_ms, c.query, c.response
                        )
                        .expect("write to string");
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Parse a JSONL or TSV log into a validated collection. Streams appear in
/// order of first occurrence; clicks are sorted by `seq` before the
/// no-gap / no-duplicate check.
pub fn parse_log<R: BufRead>(
    input: R,
    format: LogFormat,
) -> Result<ClickstreamCollection, ClickLogError> {
    let mut order: Vec<String> = Vec::new();
    let mut by_id: HashMap<String, Vec<(usize, Click)>> = HashMap::new();
    for (idx, line) in input.lines().enumerate() {
        let line_no = idx + 1;
        let text = line.map_err(|e| ClickLogError::Decode {
            line: line_no,
            msg: e.to_string(),
        })?;
        if text.trim().is_empty() {
            continue;
        }
        let click = parse_record(&text, format).map_err(|msg| ClickLogError::Decode {
            line: line_no,
            msg,
        })?;
        let entry = by_id.entry(click.stream_id.clone()).or_insert_with(|| {
            order.push(click.stream_id.clone());
            Vec::new()
        });
        entry.push((line_no, click));
    }
    let mut streams = Vec::with_capacity(order.len());
    let mut lines = Vec::with_capacity(order.len());
    for id in order {
        let mut recs = by_id.remove(&id).expect("stream recorded");
        recs.sort_by_key(|(line, c)| (c.seq, *line));
        lines.push(recs.iter().map(|(line, _)| *line).collect::<Vec<_>>());
        streams.push(Clickstream {
            stream_id: id,
            clicks: recs.into_iter().map(|(_, c)| c).collect(),
        });
    }
    ClickstreamCollection::from_streams(streams, Some(&lines))
}

fn parse_record(text: &str, format: LogFormat) -> Result<Click, String> {
    match format {
        LogFormat::Jsonl => serde_json::from_str(text).map_err(|e| e.to_string()),
        LogFormat::Tsv => {
            let fields: Vec<&str> = text.split('\t').collect();
            if fields.len() != 5 {
                return Err(format!("expected 5 tab-separated fields, found {}", fields.len()));
            }
            for f in &fields {
                if f.chars().any(|ch| ch.is_control()) {
                    return Err("control character in field".to_string());
                }
            }
            Ok(Click {
                stream_id: fields[0].to_string(),
                seq: fields[1].parse().map_err(|e| format!("bad seq: {e}"))?,
                timestamp_ms: fields[2]
                    .parse()
                    .map_err(|e| format!("bad timestamp: {e}"))?,
                query: fields[3].to_string(),
                response: fields[4].to_string(),
            })
        }
    }
}

/// How synthetic clickstreams are generated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyntheticMode {
    /// Independent random terms from a small vocabulary.
    Random,
    /// Latent points on straight lines in flat `R^n`; term bags are built so
    /// that cosine click distance approximates latent Euclidean distance.
    PlantedGeodesic,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub num_streams: usize,
    pub stream_len: usize,
    pub mode: SyntheticMode,
    /// Latent spatial dimension (planted mode).
    pub latent_dim: usize,
    /// Latent step length between consecutive clicks of a stream.
    pub step_len: f64,
    /// Side length of the box stream start points are drawn from. Small
    /// spans cluster the first layer, which keeps all of its pairwise
    /// distances inside the encoding's linear range.
    pub start_span: f64,
    /// Number of projection directions used by the bag encoding.
    pub num_directions: usize,
    /// Sub-bins per projection window; higher is a finer distance resolution.
    pub resolution: usize,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            num_streams: 4,
            stream_len: 8,
            mode: SyntheticMode::Random,
            latent_dim: 2,
            step_len: 0.05,
            start_span: 1.0,
            num_directions: 48,
            resolution: 200,
        }
    }
}

/// Synthetic generator output; `latent[s][k]` is the planted latent point of
/// click `k` of stream `s` (planted mode only).
#[derive(Debug, Clone)]
pub struct Synthetic {
    pub collection: ClickstreamCollection,
    pub latent: Option<Vec<Vec<Vec<f64>>>>,
}

/// Deterministic synthetic clickstreams; see [`synthesize`] for the variant
/// that also exposes the planted latent coordinates.
pub fn generate_synthetic(
    config: &SyntheticConfig,
    seed: u64,
) -> Result<ClickstreamCollection, ClickLogError> {
    Ok(synthesize(config, seed)?.collection)
}

pub fn synthesize(config: &SyntheticConfig, seed: u64) -> Result<Synthetic, ClickLogError> {
    if config.num_streams == 0 || config.stream_len == 0 {
        return Err(ClickLogError::Config(
            "num_streams and stream_len must be positive".to_string(),
        ));
    }
    match config.mode {
        SyntheticMode::Random => {
            let collection = synth_random(config, seed)?;
            Ok(Synthetic {
                collection,
                latent: None,
            })
        }
        SyntheticMode::PlantedGeodesic => synth_planted(config, seed),
    }
}

fn synth_random(config: &SyntheticConfig, seed: u64) -> Result<ClickstreamCollection, ClickLogError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vocab_size = 50usize;
    let mut streams = Vec::with_capacity(config.num_streams);
    for s in 0..config.num_streams {
        let mut clicks = Vec::with_capacity(config.stream_len);
        let mut ts = 1_000_000i64;
        for k in 0..config.stream_len {
            let pick = |rng: &mut ChaCha8Rng, n: usize| {
                (0..n)
                    .map(|_| format!("w{}", rng.gen_range(0..vocab_size)))
                    .collect::<Vec<_>>()
                    .join(" ")
            };
            let query = pick(&mut rng, 3);
            let response = pick(&mut rng, 8);
            ts += rng.gen_range(100..5000);
            clicks.push(Click {
                stream_id: format!("s{s}"),
                seq: k as u64,
                timestamp_ms: ts,
                query,
                response,
            });
        }
        streams.push(Clickstream {
            stream_id: format!("s{s}"),
            clicks,
        });
    }
    ClickstreamCollection::from_streams(streams, None)
}

/// Planted mode. Each latent point `x` is encoded, per projection direction
/// `u_m`, as the set of sub-bins covered by the window
/// `[⟨u_m,x⟩, ⟨u_m,x⟩ + W)`. Two windows offset by `δ` overlap in a fraction
/// `1 − |δ|/W` of their sub-bins, so the cosine distance of two bags is
/// `(1/M)·Σ_m |⟨u_m, x−y⟩| / W`. With `W` set to the mean of `|⟨u, e⟩|` over
/// directions, that sum is calibrated to `‖x−y‖` itself, making cosine click
/// distance a unit-scale proxy for latent Euclidean distance (up to sub-bin
/// quantization and window saturation beyond `W`).
fn synth_planted(config: &SyntheticConfig, seed: u64) -> Result<Synthetic, ClickLogError> {
    let n = config.latent_dim;
    if n == 0 {
        return Err(ClickLogError::Config("latent_dim must be positive".to_string()));
    }
    if config.num_directions == 0 || config.resolution == 0 {
        return Err(ClickLogError::Config(
            "num_directions and resolution must be positive".to_string(),
        ));
    }
    if config.start_span <= 0.0 || !config.start_span.is_finite() {
        return Err(ClickLogError::Config("start_span must be positive".to_string()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dirs = projection_directions(n, config.num_directions, &mut rng);
    // Mean |⟨u, e⟩| over the direction set, averaged over random e; for the
    // evenly spaced planar set this is 2/π.
    let window = mean_abs_projection(&dirs, &mut rng);

    let mut latent_all = Vec::with_capacity(config.num_streams);
    let mut streams = Vec::with_capacity(config.num_streams);
    for s in 0..config.num_streams {
        let start: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..config.start_span)).collect();
        let dir = random_unit(n, &mut rng);
        let mut latent_stream = Vec::with_capacity(config.stream_len);
        let mut clicks = Vec::with_capacity(config.stream_len);
        for k in 0..config.stream_len {
            let x: Vec<f64> = (0..n)
                .map(|a| start[a] + k as f64 * config.step_len * dir[a])
                .collect();
            let terms = encode_point(&x, &dirs, window, config.resolution);
            // Split the term list between query and response fields.
            let half = terms.len() / 2;
            clicks.push(Click {
                stream_id: format!("s{s}"),
                seq: k as u64,
                timestamp_ms: 1_000_000 + k as i64 * 1000,
                query: terms[..half].join(" "),
                response: terms[half..].join(" "),
            });
            latent_stream.push(x);
        }
        streams.push(Clickstream {
            stream_id: format!("s{s}"),
            clicks,
        });
        latent_all.push(latent_stream);
    }
    let collection = ClickstreamCollection::from_streams(streams, None)?;
    Ok(Synthetic {
        collection,
        latent: Some(latent_all),
    })
}

/// Evenly spaced half-circle directions for n = 2 (low distortion),
/// seeded random unit vectors otherwise.
fn projection_directions(n: usize, m: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    if n == 2 {
        (0..m)
            .map(|i| {
                let theta = std::f64::consts::PI * i as f64 / m as f64;
                vec![theta.cos(), theta.sin()]
            })
            .collect()
    } else {
        (0..m).map(|_| random_unit(n, rng)).collect()
    }
}

fn random_unit(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-3 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

fn mean_abs_projection(dirs: &[Vec<f64>], rng: &mut ChaCha8Rng) -> f64 {
    let n = dirs[0].len();
    if n == 2 {
        return std::f64::consts::FRAC_2_PI;
    }
    // Monte-Carlo estimate, deterministic under the caller's rng.
    let samples = 4096;
    let mut acc = 0.0;
    for _ in 0..samples {
        let e = random_unit(n, rng);
        for u in dirs {
            acc += u.iter().zip(&e).map(|(a, b)| a * b).sum::<f64>().abs();
        }
    }
    acc / (samples as f64 * dirs.len() as f64)
}

fn encode_point(x: &[f64], dirs: &[Vec<f64>], window: f64, resolution: usize) -> Vec<String> {
    let sub = window / resolution as f64;
    let mut terms = Vec::with_capacity(dirs.len() * resolution);
    for (m, u) in dirs.iter().enumerate() {
        let p: f64 = u.iter().zip(x).map(|(a, b)| a * b).sum();
        let first = (p / sub).ceil() as i64;
        for j in first..first + resolution as i64 {
            // Offset keeps the token purely alphanumeric.
            terms.push(format!("d{m}b{}", j + 1_000_000));
        }
    }
    terms
}
