use std::io::BufRead;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Zipf};

use super::MapReduceError;

pub type Record = Vec<u8>;

/// An ordered list of opaque records.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Dataset {
    records: Vec<Record>,
}

impl Dataset {
    pub fn from_records(records: Vec<Record>) -> Self {
        Self { records }
    }

    /// One record per line, line terminators stripped.
    pub fn from_reader(reader: impl BufRead) -> Result<Self, MapReduceError> {
        let mut records = Vec::new();
        for line in reader.split(b'\n') {
            let mut line = line.map_err(|e| MapReduceError::Io(e.to_string()))?;
            if line.last() == Some(&b'\r') {
                line.pop();
            }
            records.push(line);
        }
        Ok(Self { records })
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, MapReduceError> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| MapReduceError::Io(format!("{}: {e}", path.display())))?;
        Self::from_reader(std::io::BufReader::new(file))
    }

    /// `count` records of `len` lowercase letters drawn uniformly from
    /// `a..=h`, so short records repeat often enough to be interesting for
    /// word counting.
    pub fn synthetic(count: usize, len: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let records = (0..count)
            .map(|_| (0..len).map(|_| rng.gen_range(b'a'..=b'h')).collect())
            .collect();
        Self { records }
    }

    /// Zipf-distributed words from a vocabulary of `vocabulary` entries,
    /// `words_per_record` per line.
    pub fn synthetic_skewed(count: usize, words_per_record: usize, vocabulary: u64, exponent: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let zipf = Zipf::new(vocabulary, exponent).expect("valid zipf parameters");
        let records = (0..count)
            .map(|_| {
                (0..words_per_record)
                    .map(|_| format!("w{}", zipf.sample(&mut rng) as u64))
                    .collect::<Vec<_>>()
                    .join(" ")
                    .into_bytes()
            })
            .collect();
        Self { records }
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    /// `F`.
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}
