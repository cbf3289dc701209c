//! Seeded dataset generators. The same parameters always produce the same
//! bytes, on any platform.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Zipf};

use super::kmeans::Point;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZipfCorpus {
    /// Target size; generation stops at the first line break past it.
    pub bytes: usize,
    pub vocabulary: usize,
    pub exponent: f64,
    pub seed: u64,
}

impl Default for ZipfCorpus {
    fn default() -> Self {
        ZipfCorpus { bytes: 1 << 20, vocabulary: 5000, exponent: 1.1, seed: 1 }
    }
}

/// Word for Zipf rank `rank` (1-based): base-26 letters, with a digit
/// suffix on every seventh word.
pub fn vocabulary_word(rank: u64) -> String {
    let mut n = rank;
    let mut letters = Vec::new();
    while n > 0 {
        n -= 1;
        letters.push(b'a' + (n % 26) as u8);
        n /= 26;
    }
    letters.reverse();
    let mut word = String::from_utf8(letters).expect("ascii");
    if rank.is_multiple_of(7) {
        word.push_str(&(rank % 10).to_string());
    }
    word
}

// Separators exercise the tokenizer: punctuation, tabs and non-ASCII text.
const SEPARATORS: [&str; 9] = [" ", " ", " ", " ", ", ", ". ", " - ", "\t", " \u{e9}t\u{e9} "];

impl ZipfCorpus {
    pub fn generate(&self) -> Result<String> {
        if self.vocabulary == 0 || self.exponent.is_nan() || self.exponent <= 0.0 {
            return Err(Error::Config("zipf corpus needs vocabulary >= 1 and exponent > 0".into()));
        }
        let zipf = Zipf::new(self.vocabulary as f64, self.exponent)
            .map_err(|e| Error::Config(format!("zipf parameters: {e}")))?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut text = String::with_capacity(self.bytes + 128);
        while text.len() < self.bytes {
            let words = rng.random_range(4..16);
            for i in 0..words {
                if i > 0 {
                    text.push_str(SEPARATORS[rng.random_range(0..SEPARATORS.len())]);
                }
                let word = vocabulary_word(zipf.sample(&mut rng) as u64);
                if rng.random_bool(0.1) {
                    let mut chars = word.chars();
                    let first = chars.next().expect("non-empty word").to_ascii_uppercase();
                    text.push(first);
                    text.push_str(chars.as_str());
                } else {
                    text.push_str(&word);
                }
            }
            text.push('\n');
        }
        Ok(text)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianBlobs {
    pub points: usize,
    pub dim: usize,
    pub centers: usize,
    /// Standard deviation of each blob.
    pub spread: f64,
    pub seed: u64,
}

impl Default for GaussianBlobs {
    fn default() -> Self {
        GaussianBlobs { points: 200, dim: 2, centers: 3, spread: 1.0, seed: 7 }
    }
}

impl GaussianBlobs {
    /// Centers are uniform in `[-10, 10]^dim`; each point picks a random
    /// center and adds isotropic Gaussian noise.
    pub fn generate(&self) -> Result<Vec<Point>> {
        if self.dim == 0 || self.centers == 0 {
            return Err(Error::Config("blobs need dim >= 1 and centers >= 1".into()));
        }
        let noise = Normal::new(0.0, self.spread).map_err(|e| Error::Config(format!("blob spread: {e}")))?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let centers: Vec<Point> =
            (0..self.centers).map(|_| (0..self.dim).map(|_| rng.random_range(-10.0..10.0)).collect()).collect();
        Ok((0..self.points)
            .map(|_| {
                let c = &centers[rng.random_range(0..self.centers)];
                c.iter().map(|x| x + noise.sample(&mut rng)).collect()
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn words() {
        assert_eq!(vocabulary_word(1), "a");
        assert_eq!(vocabulary_word(26), "z");
        assert_eq!(vocabulary_word(27), "aa");
        assert_eq!(vocabulary_word(7), "g7");
    }

    #[test]
    fn corpus_is_seeded() {
        let small = ZipfCorpus { bytes: 4096, ..Default::default() };
        let a = small.generate().unwrap();
        assert_eq!(a, small.generate().unwrap());
        assert!(a.len() >= 4096 && a.ends_with('\n'));
        assert_ne!(a, ZipfCorpus { seed: 2, ..small }.generate().unwrap());
    }

    #[test]
    fn blobs_are_seeded() {
        let b = GaussianBlobs::default();
        let pts = b.generate().unwrap();
        assert_eq!(pts.len(), 200);
        assert!(pts.iter().all(|p| p.len() == 2 && p.iter().all(|x| x.is_finite())));
        assert_eq!(pts, b.generate().unwrap());
    }
}
