//! Whitespace tokenization and TF-IDF vectors.
//!
//! Weights are raw term counts times the smoothed inverse document frequency
//! `ln((1 + N) / (1 + df)) + 1`, then each document vector is scaled to unit
//! Euclidean norm. The vocabulary is fixed at fit time; unseen tokens are
//! dropped by `transform`.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub fn tokenize(text: &str) -> Vec<&str> {
    text.split_whitespace().collect()
}

/// Sparse vector with strictly increasing indices and no stored zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseVector<T> {
    dim: usize,
    entries: Vec<(usize, T)>,
}

impl<T: Scalar> SparseVector<T> {
    pub fn zeros(dim: usize) -> Self {
        SparseVector {
            dim,
            entries: Vec::new(),
        }
    }

    /// Build from `(index, weight)` pairs; zeros are dropped.
    pub fn from_pairs(dim: usize, mut pairs: Vec<(usize, T)>) -> Result<Self> {
        pairs.retain(|&(_, w)| w != T::zero());
        pairs.sort_by_key(|&(i, _)| i);
        if let Some(&(i, _)) = pairs.last() {
            if i >= dim {
                return Err(Error::Dimension {
                    expected: dim,
                    actual: i + 1,
                });
            }
        }
        if pairs.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::Precondition(
                "duplicate index in sparse vector".into(),
            ));
        }
        Ok(SparseVector {
            dim,
            entries: pairs,
        })
    }

    /// Dense slice to sparse, keeping non-zeros.
    pub fn from_dense(values: &[T]) -> Self {
        SparseVector {
            dim: values.len(),
            entries: values
                .iter()
                .enumerate()
                .filter(|(_, &v)| v != T::zero())
                .map(|(i, &v)| (i, v))
                .collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[(usize, T)] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn norm(&self) -> T {
        self.entries.iter().map(|&(_, w)| w * w).sum::<T>().sqrt()
    }

    /// Dot product with a dense row of length `dim`.
    pub fn dot(&self, dense: &[T]) -> T {
        self.entries.iter().map(|&(i, w)| w * dense[i]).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TfidfModel<T> {
    vocabulary: HashMap<String, usize>,
    tokens: Vec<String>,
    doc_freq: Vec<usize>,
    num_docs: usize,
    idf: Vec<T>,
}

fn idf_weight<T: Scalar>(num_docs: usize, df: usize) -> T {
    let ratio = T::of_usize(1 + num_docs) / T::of_usize(1 + df);
    ratio.ln() + T::one()
}

impl<T: Scalar> TfidfModel<T> {
    /// Fit on tokenized documents. Indices follow first appearance.
    pub fn fit<S: AsRef<str>>(docs: &[Vec<S>]) -> Result<Self> {
        if docs.iter().all(Vec::is_empty) {
            return Err(Error::Fit("no document has any tokens".into()));
        }
        let mut vocabulary: HashMap<String, usize> = HashMap::new();
        let mut tokens = Vec::new();
        let mut doc_freq: Vec<usize> = Vec::new();
        let mut last_seen: Vec<usize> = Vec::new();
        for (d, doc) in docs.iter().enumerate() {
            for tok in doc {
                let tok = tok.as_ref();
                let idx = match vocabulary.get(tok) {
                    Some(&i) => i,
                    None => {
                        let i = tokens.len();
                        vocabulary.insert(tok.to_string(), i);
                        tokens.push(tok.to_string());
                        doc_freq.push(0);
                        last_seen.push(usize::MAX);
                        i
                    }
                };
                if last_seen[idx] != d {
                    last_seen[idx] = d;
                    doc_freq[idx] += 1;
                }
            }
        }
        Ok(Self::from_parts(tokens, doc_freq, docs.len()))
    }

    fn from_parts(tokens: Vec<String>, doc_freq: Vec<usize>, num_docs: usize) -> Self {
        let vocabulary = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        let idf = doc_freq
            .iter()
            .map(|&df| idf_weight(num_docs, df))
            .collect();
        TfidfModel {
            vocabulary,
            tokens,
            doc_freq,
            num_docs,
            idf,
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.tokens.len()
    }

    pub fn num_docs(&self) -> usize {
        self.num_docs
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.vocabulary.get(token).copied()
    }

    pub fn token(&self, index: usize) -> &str {
        &self.tokens[index]
    }

    pub fn doc_freq(&self, index: usize) -> usize {
        self.doc_freq[index]
    }

    pub fn idf(&self, index: usize) -> T {
        self.idf[index]
    }

    pub fn transform<S: AsRef<str>>(&self, doc: &[S]) -> SparseVector<T> {
        let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
        for tok in doc {
            if let Some(i) = self.index_of(tok.as_ref()) {
                *counts.entry(i).or_default() += 1;
            }
        }
        let mut entries: Vec<(usize, T)> = counts
            .into_iter()
            .map(|(i, c)| (i, T::of_usize(c) * self.idf[i]))
            .collect();
        let norm = entries.iter().map(|&(_, w)| w * w).sum::<T>().sqrt();
        if norm > T::zero() {
            for e in &mut entries {
                e.1 = e.1 / norm;
            }
        }
        SparseVector {
            dim: self.vocab_size(),
            entries,
        }
    }

    /// Write `N<TAB>V` followed by one `token<TAB>index<TAB>df` line per entry.
    pub fn save(&self, path: &Path, header_comment: Option<&str>) -> Result<()> {
        let mut out = String::new();
        if let Some(c) = header_comment {
            out.push_str(&format!("# {c}\n"));
        }
        out.push_str(&format!("{}\t{}\n", self.num_docs, self.vocab_size()));
        for (i, (t, df)) in self.tokens.iter().zip(&self.doc_freq).enumerate() {
            out.push_str(&format!("{t}\t{i}\t{df}\n"));
        }
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let malformed = |line: usize, message: &str| Error::Malformed {
            path: path.into(),
            line: line as u64,
            message: message.into(),
        };
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l))
            .filter(|(_, l)| !l.starts_with('#'));
        let (hline, header) = lines.next().ok_or_else(|| malformed(1, "missing header"))?;
        let (n, v) = header
            .split_once('\t')
            .and_then(|(n, v)| Some((n.parse::<usize>().ok()?, v.parse::<usize>().ok()?)))
            .ok_or_else(|| malformed(hline, "expected N<TAB>V"))?;
        let mut tokens = vec![None; v];
        let mut doc_freq = vec![0; v];
        for (ln, line) in lines {
            let parts: Vec<&str> = line.split('\t').collect();
            let [tok, idx, df] = parts[..] else {
                return Err(malformed(ln, "expected token<TAB>index<TAB>df"));
            };
            let idx: usize = idx.parse().map_err(|_| malformed(ln, "bad index"))?;
            let df: usize = df.parse().map_err(|_| malformed(ln, "bad df"))?;
            if idx >= v || tokens[idx].is_some() {
                return Err(malformed(ln, "index out of range or repeated"));
            }
            if df == 0 || df > n {
                return Err(malformed(ln, "df outside 1..=N"));
            }
            tokens[idx] = Some(tok.to_string());
            doc_freq[idx] = df;
        }
        let tokens = tokens
            .into_iter()
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| malformed(hline, "fewer entries than V"))?;
        Ok(Self::from_parts(tokens, doc_freq, n))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn docs(v: &[&[&str]]) -> Vec<Vec<String>> {
        v.iter()
            .map(|d| d.iter().map(|s| s.to_string()).collect())
            .collect()
    }

    #[test]
    fn tokenize_cases() {
        assert_eq!(tokenize("مبروك عقبالي"), vec!["مبروك", "عقبالي"]);
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("a  b\tc"), vec!["a", "b", "c"]);
    }

    #[test]
    fn fit_two_docs() {
        let m: TfidfModel<f64> = TfidfModel::fit(&docs(&[&["a", "b"], &["a"]])).unwrap();
        let (a, b) = (m.index_of("a").unwrap(), m.index_of("b").unwrap());
        assert_eq!(m.num_docs(), 2);
        assert_eq!((m.doc_freq(a), m.doc_freq(b)), (2, 1));
        assert_eq!(m.idf(a), 1.0);
        // ln(3/2) + 1
        assert!((m.idf(b) - 1.405_465_108_108_164_4).abs() < 1e-12);

        let v = m.transform(&["a", "b"]);
        let raw_norm = (1.0f64 + m.idf(b) * m.idf(b)).sqrt();
        assert!((raw_norm - 1.7250).abs() < 1e-4);
        assert!((v.entries()[0].1 - 0.5798).abs() < 1e-4);
        assert!((v.entries()[1].1 - 0.8148).abs() < 1e-4);

        assert!(m.transform(&["zzz"]).is_empty());
        assert_eq!(m.transform(&["a"]).entries(), &[(a, 1.0)]);
    }

    #[test]
    fn single_doc_and_empty_corpus() {
        let m: TfidfModel<f64> = TfidfModel::fit(&docs(&[&["x"]])).unwrap();
        assert_eq!(m.vocab_size(), 1);
        assert_eq!(m.idf(0), 1.0);
        assert!(TfidfModel::<f64>::fit(&docs(&[&[], &[]])).is_err());
        assert!(TfidfModel::<f64>::fit::<String>(&[]).is_err());
    }

    #[test]
    fn counts_repeat_tokens() {
        let m: TfidfModel<f64> = TfidfModel::fit(&docs(&[&["a", "b"], &["a"]])).unwrap();
        let v = m.transform(&["a", "a", "b"]);
        let ratio = v.entries()[0].1 / v.entries()[1].1;
        assert!((ratio - 2.0 / m.idf(1)).abs() < 1e-12);
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("tfidf.tsv");
        let m: TfidfModel<f64> =
            TfidfModel::fit(&docs(&[&["a", "b"], &["a", "c"], &["d"]])).unwrap();
        m.save(&p, Some("test")).unwrap();
        let back = TfidfModel::<f64>::load(&p).unwrap();
        assert_eq!(back, m);
        std::fs::write(&p, "3\t2\na\t0\t1\n").unwrap();
        assert!(TfidfModel::<f64>::load(&p).is_err());
    }

    #[test]
    fn sparse_vector_checks() {
        assert!(SparseVector::from_pairs(3, vec![(3, 1.0f64)]).is_err());
        assert!(SparseVector::from_pairs(3, vec![(1, 1.0f64), (1, 2.0)]).is_err());
        let v = SparseVector::from_pairs(3, vec![(2, 1.0f64), (0, 0.0), (1, 2.0)]).unwrap();
        assert_eq!(v.entries(), &[(1, 2.0), (2, 1.0)]);
        assert_eq!(
            SparseVector::from_dense(&[0.0f64, 3.0]).entries(),
            &[(1, 3.0)]
        );
    }

    #[test]
    fn works_in_f32() {
        let m: TfidfModel<f32> = TfidfModel::fit(&docs(&[&["a", "b"], &["a"]])).unwrap();
        let v = m.transform(&["a", "b"]);
        assert!((v.norm() - 1.0).abs() < 1e-6);
    }

    proptest! {
        #[test]
        fn unit_norm_and_bounded_indices(
            corpus in proptest::collection::vec(proptest::collection::vec(0u8..30, 0..12), 1..40),
            probe in proptest::collection::vec(0u8..40, 0..12),
        ) {
            let corpus: Vec<Vec<String>> = corpus.iter()
                .map(|d| d.iter().map(|t| format!("w{t}")).collect()).collect();
            prop_assume!(corpus.iter().any(|d| !d.is_empty()));
            let m: TfidfModel<f64> = TfidfModel::fit(&corpus).unwrap();
            let v_before = m.vocab_size();
            for d in &corpus {
                let v = m.transform(d);
                prop_assert!(v.entries().iter().all(|&(i, _)| i < v_before));
                if !v.is_empty() {
                    prop_assert!((v.norm() - 1.0).abs() < 1e-9);
                }
            }
            let probe: Vec<String> = probe.iter().map(|t| format!("w{t}")).collect();
            let _ = m.transform(&probe);
            prop_assert_eq!(m.vocab_size(), v_before);
            for i in 0..v_before {
                for j in 0..v_before {
                    if m.doc_freq(i) < m.doc_freq(j) {
                        prop_assert!(m.idf(i) > m.idf(j));
                    }
                }
                prop_assert!(m.idf(i) >= 1.0);
            }
        }
    }
}
