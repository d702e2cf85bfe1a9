use std::collections::BTreeMap;

use crate::digest;
use crate::error::{Error, Result};

use super::{with_retry, EmbeddingProvider, Journal, ProviderError, RetryPolicy};

const BATCH: usize = 64;

fn reject_empty(texts: &[String]) -> Result<()> {
    if texts.is_empty() {
        return Err(Error::Argument("nothing to embed".into()));
    }
    let empty: Vec<usize> = texts
        .iter()
        .enumerate()
        .filter(|(_, t)| t.trim().is_empty())
        .map(|(i, _)| i)
        .collect();
    if !empty.is_empty() {
        return Err(Error::Validation(format!("empty text at indices {empty:?}")));
    }
    Ok(())
}

fn check_widths(vectors: &[Vec<f64>]) -> Result<()> {
    let width = vectors.first().map_or(0, Vec::len);
    let bad: Vec<usize> = vectors
        .iter()
        .enumerate()
        .filter(|(_, v)| v.len() != width || width == 0)
        .map(|(i, _)| i)
        .collect();
    if bad.is_empty() {
        Ok(())
    } else {
        Err(Error::provider(bad, format!("embedding width differs from {width}")))
    }
}

fn call(provider: &dyn EmbeddingProvider, texts: &[String], offset: usize) -> std::result::Result<Vec<Vec<f64>>, (Vec<usize>, String)> {
    let indices = || (offset..offset + texts.len()).collect::<Vec<_>>();
    match provider.embed(texts) {
        Ok(v) if v.len() == texts.len() => Ok(v),
        Ok(v) => Err((indices(), format!("{} vectors for {} texts", v.len(), texts.len()))),
        Err(e) => Err((indices(), e.to_string())),
    }
}

/// Uncached embedding: one provider call per batch, no retries.
pub fn embed_direct(texts: &[String], provider: &dyn EmbeddingProvider) -> Result<Vec<Vec<f64>>> {
    reject_empty(texts)?;
    let mut out = Vec::with_capacity(texts.len());
    for (c, chunk) in texts.chunks(BATCH).enumerate() {
        out.extend(call(provider, chunk, c * BATCH).map_err(|(i, m)| Error::provider(i, m))?);
    }
    check_widths(&out)?;
    Ok(out)
}

fn embed_key(provider_id: &str, text: &str) -> String {
    digest::fields_hex([provider_id.as_bytes(), digest::sha256_hex(text.as_bytes()).as_bytes()])
}

/// Cached embedding keyed by (provider id, text digest). Misses are fetched
/// in batches with retries; failures report the indices they affect.
pub fn embed(
    texts: &[String],
    provider: &dyn EmbeddingProvider,
    cache: &Journal<Vec<f64>>,
    policy: RetryPolicy,
) -> Result<Vec<Vec<f64>>> {
    reject_empty(texts)?;
    let keys: Vec<String> = texts.iter().map(|t| embed_key(provider.provider_id(), t)).collect();

    // unique misses, remembering every index that shares the text
    let mut misses: BTreeMap<&str, (String, Vec<usize>)> = BTreeMap::new();
    for (i, key) in keys.iter().enumerate() {
        if cache.get(key).is_none() {
            misses
                .entry(key.as_str())
                .or_insert_with(|| (texts[i].clone(), Vec::new()))
                .1
                .push(i);
        }
    }
    let pending: Vec<(&str, String, Vec<usize>)> =
        misses.into_iter().map(|(k, (t, idx))| (k, t, idx)).collect();
    let mut failed = Vec::new();
    let mut messages = Vec::new();
    for chunk in pending.chunks(BATCH) {
        let batch: Vec<String> = chunk.iter().map(|(_, t, _)| t.clone()).collect();
        let result = with_retry(policy, || match call(provider, &batch, 0) {
            Ok(v) => Ok(v),
            Err((_, m)) => Err(ProviderError::Transient(m)),
        });
        match result {
            Ok(vectors) => {
                for ((key, _, _), v) in chunk.iter().zip(vectors) {
                    cache.insert(
                        key,
                        key,
                        v,
                        serde_json::json!({"provider": provider.provider_id()}),
                    )?;
                }
            }
            Err(e) => {
                failed.extend(chunk.iter().flat_map(|(_, _, idx)| idx.iter().copied()));
                messages.push(e.to_string());
            }
        }
    }
    if !failed.is_empty() {
        failed.sort_unstable();
        return Err(Error::provider(failed, messages.join("; ")));
    }
    let out: Vec<Vec<f64>> = keys
        .iter()
        .map(|k| cache.get(k).expect("inserted above"))
        .collect();
    check_widths(&out)?;
    Ok(out)
}

/// An [`EmbeddingProvider`] that consults a journal before the wrapped provider.
pub struct CachedEmbedder<'a> {
    inner: &'a dyn EmbeddingProvider,
    cache: Journal<Vec<f64>>,
    policy: RetryPolicy,
}

impl<'a> CachedEmbedder<'a> {
    pub fn new(inner: &'a dyn EmbeddingProvider, cache: Journal<Vec<f64>>, policy: RetryPolicy) -> Self {
        CachedEmbedder {
            inner,
            cache,
            policy,
        }
    }

    pub fn embed_checked(&self, texts: &[String]) -> Result<Vec<Vec<f64>>> {
        embed(texts, self.inner, &self.cache, self.policy)
    }
}

impl EmbeddingProvider for CachedEmbedder<'_> {
    fn provider_id(&self) -> &str {
        self.inner.provider_id()
    }

    fn embed(&self, texts: &[String]) -> std::result::Result<Vec<Vec<f64>>, ProviderError> {
        self.embed_checked(texts)
            .map_err(|e| ProviderError::Invalid(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use std::sync::atomic::{AtomicUsize, Ordering};

    use super::*;

    struct Counting {
        calls: AtomicUsize,
        fail: bool,
    }

    impl EmbeddingProvider for Counting {
        fn provider_id(&self) -> &str {
            "counting"
        }
        fn embed(&self, texts: &[String]) -> std::result::Result<Vec<Vec<f64>>, ProviderError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            if self.fail {
                return Err(ProviderError::Transient("down".into()));
            }
            Ok(texts.iter().map(|t| vec![t.len() as f64, 1.0]).collect())
        }
    }

    #[test]
    fn caches_and_dedups() {
        let dir = tempfile::tempdir().unwrap();
        let cache = Journal::open(dir.path(), "emb").unwrap();
        let p = Counting { calls: AtomicUsize::new(0), fail: false };
        let texts: Vec<String> = vec!["ab".into(), "abc".into(), "ab".into()];
        let v = embed(&texts, &p, &cache, RetryPolicy::immediate()).unwrap();
        assert_eq!(v[0], v[2]);
        assert_eq!(v[1], vec![3.0, 1.0]);
        assert_eq!(p.calls.load(Ordering::SeqCst), 1);
        assert_eq!(cache.len(), 2);
        embed(&texts, &p, &cache, RetryPolicy::immediate()).unwrap();
        assert_eq!(p.calls.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn rejects_empty_and_reports_failed_indices() {
        let dir = tempfile::tempdir().unwrap();
        let cache = Journal::open(dir.path(), "emb").unwrap();
        let p = Counting { calls: AtomicUsize::new(0), fail: true };
        assert!(matches!(
            embed(&["a".into(), " ".into()], &p, &cache, RetryPolicy::immediate()),
            Err(Error::Validation(_))
        ));
        match embed(&["a".into(), "b".into(), "a".into()], &p, &cache, RetryPolicy::immediate()) {
            Err(Error::Provider { indices, .. }) => assert_eq!(indices, vec![0, 1, 2]),
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(p.calls.load(Ordering::SeqCst), 3);
    }
}
