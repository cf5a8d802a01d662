//! Tf-Idf ranking of candidate posts against a reader's history.
//!
//! Weights are raw term count times `ln((1 + |D|) / (1 + df)) + 1`, with `D`
//! the candidate collection; vectors are L2-normalized and compared by dot
//! product. Scores are quantized to 1e-9 before ranking so mathematically
//! equal scores tie exactly, and ties go to the smaller post id.

use std::collections::HashMap;

use crate::tokenize::normalized_tokens;

pub const SCORE_QUANTUM: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RankError {
    #[error("reader history has no tokens")]
    EmptyHistory,
    #[error("k must be at least 1")]
    ZeroK,
}

/// Sparse term counts sorted by term id.
type TermCounts = Vec<(u32, f64)>;

#[derive(Debug, Clone, Default)]
pub struct CandidatePool {
    vocab: HashMap<String, u32>,
    ids: Vec<String>,
    owners: Vec<String>,
    docs: Vec<TermCounts>,
    df: Vec<usize>,
}

fn quantize(score: f64) -> i64 {
    (score / SCORE_QUANTUM).round() as i64
}

impl CandidatePool {
    /// `candidates` are `(post_id, author_id, text)`.
    pub fn new<'a>(candidates: impl IntoIterator<Item = (&'a str, &'a str, &'a str)>) -> Self {
        let mut pool = Self::default();
        for (id, owner, text) in candidates {
            let mut counts: HashMap<u32, f64> = HashMap::new();
            for tok in normalized_tokens(text) {
                let next = pool.vocab.len() as u32;
                let tid = *pool.vocab.entry(tok).or_insert(next);
                if tid as usize == pool.df.len() {
                    pool.df.push(0);
                }
                *counts.entry(tid).or_insert(0.0) += 1.0;
            }
            let mut doc: TermCounts = counts.into_iter().collect();
            doc.sort_by_key(|&(t, _)| t);
            for &(t, _) in &doc {
                pool.df[t as usize] += 1;
            }
            pool.ids.push(id.to_string());
            pool.owners.push(owner.to_string());
            pool.docs.push(doc);
        }
        pool
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Candidates not owned by `exclude_owner`.
    pub fn eligible_count(&self, exclude_owner: Option<&str>) -> usize {
        match exclude_owner {
            Some(o) => self.owners.iter().filter(|x| *x != o).count(),
            None => self.len(),
        }
    }

    /// Ranked post ids, best first, at most `k` of them. Candidates owned by
    /// `exclude_owner` are removed from the collection before idf is computed.
    pub fn rank(&self, history: &[String], exclude_owner: Option<&str>, k: usize) -> Result<Vec<String>, RankError> {
        if k == 0 {
            return Err(RankError::ZeroK);
        }
        let history_tokens: Vec<String> = history.iter().flat_map(|h| normalized_tokens(h)).collect();
        if history_tokens.is_empty() {
            return Err(RankError::EmptyHistory);
        }

        let keep: Vec<bool> = self.owners.iter().map(|o| exclude_owner != Some(o.as_str())).collect();
        let mut df = self.df.clone();
        for (doc, _) in self.docs.iter().zip(&keep).filter(|(_, k)| !**k) {
            for &(t, _) in doc {
                df[t as usize] -= 1;
            }
        }
        let n_docs = keep.iter().filter(|k| **k).count() as f64;
        let idf = |df: usize| ((1.0 + n_docs) / (1.0 + df as f64)).ln() + 1.0;

        let mut hist_counts: HashMap<&str, f64> = HashMap::new();
        for t in &history_tokens {
            *hist_counts.entry(t.as_str()).or_insert(0.0) += 1.0;
        }
        let mut hist_norm_sq = 0.0;
        let mut hist_weights: HashMap<u32, f64> = HashMap::new();
        let mut sorted_terms: Vec<(&str, f64)> = hist_counts.into_iter().collect();
        sorted_terms.sort_by(|a, b| a.0.cmp(b.0));
        for (term, tf) in sorted_terms {
            let term_df = self.vocab.get(term).map_or(0, |&t| df[t as usize]);
            let w = tf * idf(term_df);
            hist_norm_sq += w * w;
            if let Some(&t) = self.vocab.get(term) {
                hist_weights.insert(t, w);
            }
        }
        let hist_norm = hist_norm_sq.sqrt();

        let mut scored: Vec<(i64, &str)> = Vec::new();
        for (i, doc) in self.docs.iter().enumerate() {
            if !keep[i] {
                continue;
            }
            let mut norm_sq = 0.0;
            let mut dot = 0.0;
            for &(t, tf) in doc {
                let w = tf * idf(df[t as usize]);
                norm_sq += w * w;
                if let Some(h) = hist_weights.get(&t) {
                    dot += (w) * (h / hist_norm);
                }
            }
            let score = if norm_sq > 0.0 { dot / norm_sq.sqrt() } else { 0.0 };
            scored.push((quantize(score), self.ids[i].as_str()));
        }
        scored.sort_by(|a, b| b.0.cmp(&a.0).then_with(|| a.1.cmp(b.1)));
        Ok(scored.into_iter().take(k).map(|(_, id)| id.to_string()).collect())
    }
}

/// Ranks `candidates` (`(post_id, text)`) by Tf-Idf cosine similarity to the
/// concatenated `reader_history`; returns `min(k, |candidates|)` ids.
pub fn select_topk_posts(reader_history: &[String], candidates: &[(String, String)], k: usize) -> Result<Vec<String>, RankError> {
    let pool = CandidatePool::new(candidates.iter().map(|(id, text)| (id.as_str(), "", text.as_str())));
    pool.rank(reader_history, None, k)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cands(items: &[(&str, &str)]) -> Vec<(String, String)> {
        items.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect()
    }

    #[test]
    fn three_doc_example() {
        // Brute force over D = {A: "apple apple", B: "car road", C: "banana"}:
        // idf(apple) = idf(banana) = ln(4/2) + 1, so after normalization
        // A = (1, 0) and C = (0, 1) in (apple, banana); the history
        // "apple banana" is (1, 1)/sqrt(2). Both score 1/sqrt(2); B scores 0.
        // Equal scores fall back to id order: A, C.
        let c = cands(&[("A", "apple apple"), ("B", "car road"), ("C", "banana")]);
        let top = select_topk_posts(&["apple banana".into()], &c, 2).unwrap();
        assert_eq!(top, vec!["A", "C"]);
    }

    #[test]
    fn k_beyond_candidates_returns_all_ranked() {
        let c = cands(&[("x", "red blue"), ("y", "blue"), ("z", "green")]);
        let top = select_topk_posts(&["blue".into()], &c, 10).unwrap();
        assert_eq!(top.len(), 3);
        assert_eq!(top[2], "z");
    }

    #[test]
    fn empty_history_rejected() {
        let c = cands(&[("x", "a")]);
        assert_eq!(select_topk_posts(&[], &c, 1), Err(RankError::EmptyHistory));
        assert_eq!(select_topk_posts(&["  ".into()], &c, 1), Err(RankError::EmptyHistory));
        assert_eq!(select_topk_posts(&["a".into()], &c, 0), Err(RankError::ZeroK));
    }

    #[test]
    fn excluding_owner_drops_its_posts_and_shifts_idf() {
        let pool = CandidatePool::new([("p1", "u1", "cat dog"), ("p2", "u2", "cat"), ("p3", "u2", "dog fish")]);
        let r = pool.rank(&["cat".into()], Some("u1"), 5).unwrap();
        assert_eq!(r, vec!["p2", "p3"]);
        assert_eq!(pool.eligible_count(Some("u2")), 1);
    }
}
