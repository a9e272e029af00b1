//! Built-in jobs and the registry users extend with their own.
//!
//! A job must be decomposable: reducing the per-packet map outputs (in
//! canonical packet order) has to give the same bytes as `centralized` on
//! the full dataset.

use std::collections::BTreeMap;
use std::sync::Arc;

use super::{Dataset, MapReduceError, Record};

pub trait Job: Send + Sync {
    fn name(&self) -> &str;

    /// `m_q` on one packet. `functions` is `Q`; `q` is 1-based.
    fn map(&self, q: usize, functions: usize, packet: &[Record]) -> Vec<u8>;

    /// `r_q` over the `S` intermediate values in canonical packet order.
    fn reduce(&self, q: usize, functions: usize, values: &[&[u8]]) -> Result<Vec<u8>, MapReduceError>;

    /// `phi_q` computed without packets.
    fn centralized(&self, q: usize, functions: usize, dataset: &Dataset) -> Vec<u8>;
}

/// Jobs keyed by name.
#[derive(Clone, Default)]
pub struct JobRegistry {
    jobs: BTreeMap<String, Arc<dyn Job>>,
}

impl JobRegistry {
    pub fn with_builtins() -> Self {
        let mut reg = Self::default();
        reg.register(Arc::new(WordCount));
        reg.register(Arc::new(SortBucket));
        reg.register(Arc::new(Sum));
        reg
    }

    pub fn register(&mut self, job: Arc<dyn Job>) {
        self.jobs.insert(job.name().to_string(), job);
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn Job>, MapReduceError> {
        self.jobs
            .get(name)
            .cloned()
            .ok_or_else(|| MapReduceError::UnknownJob(name.to_string()))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.jobs.keys().map(String::as_str)
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3)
    })
}

fn malformed(job: &str, reason: impl Into<String>) -> MapReduceError {
    MapReduceError::MalformedPayload {
        job: job.to_string(),
        reason: reason.into(),
    }
}

/// Word frequencies; word `w` belongs to function `fnv(w) mod Q + 1`.
/// Values are sorted `word\tcount\n` lines.
pub struct WordCount;

impl WordCount {
    pub fn bucket(word: &[u8], functions: usize) -> usize {
        (fnv1a(word) % functions as u64) as usize + 1
    }

    fn count<'a>(q: usize, functions: usize, records: impl Iterator<Item = &'a Record>) -> BTreeMap<Vec<u8>, u64> {
        let mut counts = BTreeMap::new();
        for record in records {
            for word in record.split(|b| b.is_ascii_whitespace()).filter(|w| !w.is_empty()) {
                if Self::bucket(word, functions) == q {
                    *counts.entry(word.to_vec()).or_insert(0) += 1;
                }
            }
        }
        counts
    }

    fn encode(counts: &BTreeMap<Vec<u8>, u64>) -> Vec<u8> {
        let mut out = Vec::new();
        for (word, n) in counts {
            out.extend_from_slice(word);
            out.push(b'\t');
            out.extend_from_slice(n.to_string().as_bytes());
            out.push(b'\n');
        }
        out
    }

    pub fn decode(value: &[u8]) -> Result<BTreeMap<Vec<u8>, u64>, MapReduceError> {
        let mut counts = BTreeMap::new();
        for line in value.split(|&b| b == b'\n').filter(|l| !l.is_empty()) {
            let tab = line
                .iter()
                .rposition(|&b| b == b'\t')
                .ok_or_else(|| malformed("word-count", "missing tab"))?;
            let n: u64 = std::str::from_utf8(&line[tab + 1..])
                .ok()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| malformed("word-count", "bad count"))?;
            *counts.entry(line[..tab].to_vec()).or_insert(0) += n;
        }
        Ok(counts)
    }
}

impl Job for WordCount {
    fn name(&self) -> &str {
        "word-count"
    }

    fn map(&self, q: usize, functions: usize, packet: &[Record]) -> Vec<u8> {
        Self::encode(&Self::count(q, functions, packet.iter()))
    }

    fn reduce(&self, _q: usize, _functions: usize, values: &[&[u8]]) -> Result<Vec<u8>, MapReduceError> {
        let mut total = BTreeMap::new();
        for v in values {
            for (word, n) in Self::decode(v)? {
                *total.entry(word).or_insert(0) += n;
            }
        }
        Ok(Self::encode(&total))
    }

    fn centralized(&self, q: usize, functions: usize, dataset: &Dataset) -> Vec<u8> {
        Self::encode(&Self::count(q, functions, dataset.records().iter()))
    }
}

/// TeraSort-style range partitioning: records whose first byte falls in
/// the `q`-th slice of `0..=255` go to function `q`, which sorts them.
/// Values are length-prefixed records in ascending order.
pub struct SortBucket;

impl SortBucket {
    pub fn bucket(record: &[u8], functions: usize) -> usize {
        let first = record.first().copied().unwrap_or(0) as usize;
        first * functions / 256 + 1
    }

    fn encode<'a>(records: impl IntoIterator<Item = &'a [u8]>) -> Vec<u8> {
        let mut out = Vec::new();
        for r in records {
            out.extend_from_slice(&(r.len() as u32).to_le_bytes());
            out.extend_from_slice(r);
        }
        out
    }

    pub fn decode(mut value: &[u8]) -> Result<Vec<&[u8]>, MapReduceError> {
        let mut out = Vec::new();
        while !value.is_empty() {
            if value.len() < 4 {
                return Err(malformed("sort-bucket", "truncated length prefix"));
            }
            let n = u32::from_le_bytes(value[..4].try_into().unwrap()) as usize;
            let rest = &value[4..];
            if rest.len() < n {
                return Err(malformed("sort-bucket", "truncated record"));
            }
            out.push(&rest[..n]);
            value = &rest[n..];
        }
        Ok(out)
    }

    fn sorted_bucket<'a>(q: usize, functions: usize, records: impl Iterator<Item = &'a Record>) -> Vec<u8> {
        let mut picked: Vec<&[u8]> = records
            .filter(|r| Self::bucket(r, functions) == q)
            .map(Vec::as_slice)
            .collect();
        picked.sort_unstable();
        Self::encode(picked)
    }
}

impl Job for SortBucket {
    fn name(&self) -> &str {
        "sort-bucket"
    }

    fn map(&self, q: usize, functions: usize, packet: &[Record]) -> Vec<u8> {
        Self::sorted_bucket(q, functions, packet.iter())
    }

    fn reduce(&self, _q: usize, _functions: usize, values: &[&[u8]]) -> Result<Vec<u8>, MapReduceError> {
        let mut all = Vec::new();
        for v in values {
            all.extend(Self::decode(v)?);
        }
        all.sort_unstable();
        Ok(Self::encode(all))
    }

    fn centralized(&self, q: usize, functions: usize, dataset: &Dataset) -> Vec<u8> {
        Self::sorted_bucket(q, functions, dataset.records().iter())
    }
}

/// Sums record values by residue class: value `v` goes to function
/// `v mod Q + 1`. A record's value is its decimal reading when it is all
/// digits, otherwise the sum of its bytes. Sums wrap at 2^64.
pub struct Sum;

impl Sum {
    pub fn value(record: &[u8]) -> u64 {
        let trimmed = record.trim_ascii();
        if !trimmed.is_empty() && trimmed.iter().all(u8::is_ascii_digit) {
            if let Some(v) = std::str::from_utf8(trimmed).ok().and_then(|s| s.parse().ok()) {
                return v;
            }
        }
        record.iter().map(|&b| u64::from(b)).sum()
    }

    fn class_sum<'a>(q: usize, functions: usize, records: impl Iterator<Item = &'a Record>) -> u64 {
        records
            .map(|r| Self::value(r))
            .filter(|v| (v % functions as u64) as usize + 1 == q)
            .fold(0u64, u64::wrapping_add)
    }
}

impl Job for Sum {
    fn name(&self) -> &str {
        "sum"
    }

    fn map(&self, q: usize, functions: usize, packet: &[Record]) -> Vec<u8> {
        Self::class_sum(q, functions, packet.iter()).to_le_bytes().to_vec()
    }

    fn reduce(&self, _q: usize, _functions: usize, values: &[&[u8]]) -> Result<Vec<u8>, MapReduceError> {
        let mut total = 0u64;
        for v in values {
            let bytes: [u8; 8] = (*v).try_into().map_err(|_| malformed("sum", "expected 8 bytes"))?;
            total = total.wrapping_add(u64::from_le_bytes(bytes));
        }
        Ok(total.to_string().into_bytes())
    }

    fn centralized(&self, q: usize, functions: usize, dataset: &Dataset) -> Vec<u8> {
        Self::class_sum(q, functions, dataset.records().iter())
            .to_string()
            .into_bytes()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn recs(words: &[&str]) -> Vec<Record> {
        words.iter().map(|w| w.as_bytes().to_vec()).collect()
    }

    #[test]
    fn word_count_packet() {
        let q = WordCount::bucket(b"a", 4);
        let value = WordCount.map(q, 4, &recs(&["a", "b", "a"]));
        let counts = WordCount::decode(&value).unwrap();
        assert_eq!(counts.get(b"a".as_slice()), Some(&2));
        let other = (1..=4).find(|&x| x != q).unwrap();
        let none = WordCount::decode(&WordCount.map(other, 4, &recs(&["a", "a"]))).unwrap();
        assert!(!none.contains_key(b"a".as_slice()));
    }

    #[test]
    fn word_count_decomposes() {
        let ds = Dataset::from_records(recs(&["x y", "y z", "x x", "q"]));
        for q in 1..=3 {
            let parts = [
                WordCount.map(q, 3, &ds.records()[..2]),
                WordCount.map(q, 3, &ds.records()[2..]),
            ];
            let refs: Vec<&[u8]> = parts.iter().map(Vec::as_slice).collect();
            assert_eq!(WordCount.reduce(q, 3, &refs).unwrap(), WordCount.centralized(q, 3, &ds));
        }
    }

    #[test]
    fn sum_over_one_to_hundred() {
        let ds = Dataset::from_records((1..=100).map(|i: u32| i.to_string().into_bytes()).collect());
        let total: u64 = (1..=7)
            .map(|q| {
                String::from_utf8(Sum.centralized(q, 7, &ds))
                    .unwrap()
                    .parse::<u64>()
                    .unwrap()
            })
            .sum();
        assert_eq!(total, 5050);
        assert_eq!(Sum::value(b"ab"), 97 + 98);
        assert_eq!(Sum::value(b" 42 "), 42);
    }

    #[test]
    fn sort_buckets_concatenate_sorted() {
        let ds = Dataset::from_records(recs(&["zeta", "alpha", "Mike", "", "delta", "~x", "0"]));
        let mut concat = Vec::new();
        for q in 1..=5 {
            let value = SortBucket.centralized(q, 5, &ds);
            concat.extend(SortBucket::decode(&value).unwrap().into_iter().map(<[u8]>::to_vec));
        }
        let mut expected = ds.records().to_vec();
        expected.sort();
        assert_eq!(concat, expected);
    }

    #[test]
    fn malformed_values_are_errors() {
        assert!(Sum.reduce(1, 2, &[&[1, 2, 3][..]]).is_err());
        assert!(SortBucket.reduce(1, 2, &[&[9, 0, 0, 0, 1][..]]).is_err());
        assert!(WordCount.reduce(1, 2, &[&b"nocount\n"[..]]).is_err());
    }

    #[test]
    fn registry_lookup() {
        let reg = JobRegistry::with_builtins();
        assert_eq!(
            reg.names().collect::<Vec<_>>(),
            vec!["sort-bucket", "sum", "word-count"]
        );
        assert!(matches!(reg.get("nope"), Err(MapReduceError::UnknownJob(_))));
    }
}
