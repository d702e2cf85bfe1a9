use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;

use crate::corpus::ExperienceRecord;
use crate::error::{Error, Result};
use crate::persona::Persona;

use super::cache::ResultLog;
use super::{
    build_affective_prompt, build_cognitive_prompt, now_millis, with_retry, ChatProvider,
    ChatRequest, Journal, ProviderError, RetryPolicy, RunResult, Task,
};

/// One (record, persona, task) interaction with its prepared request.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanItem {
    pub record_id: String,
    pub persona: Persona,
    pub task: Task,
    pub request: ChatRequest,
}

impl PlanItem {
    pub fn new(record: &ExperienceRecord, persona: &Persona, task: Task) -> Result<Self> {
        let request = match task {
            Task::Affective => build_affective_prompt(persona, record),
            Task::Cognitive => build_cognitive_prompt(persona, record)?,
        };
        Ok(PlanItem {
            record_id: record.id.clone(),
            persona: persona.clone(),
            task,
            request,
        })
    }
}

#[derive(Debug, Clone)]
pub struct ExecuteOptions {
    pub parallelism: usize,
    pub retry: RetryPolicy,
    /// Results are appended here as they complete.
    pub results_log: Option<PathBuf>,
}

impl Default for ExecuteOptions {
    fn default() -> Self {
        ExecuteOptions {
            parallelism: 4,
            retry: RetryPolicy::default(),
            results_log: None,
        }
    }
}

/// Runs every plan item through the cache and then the provider, with at most
/// `parallelism` requests in flight. Results come back in plan order.
///
/// Items whose retries run out are returned with `error` set. A fatal
/// provider error stops the run with [`Error::Aborted`].
pub fn execute(
    plan: &[PlanItem],
    client: &dyn ChatProvider,
    cache: &Journal<String>,
    options: &ExecuteOptions,
) -> Result<Vec<RunResult>> {
    if options.parallelism == 0 {
        return Err(Error::Argument("parallelism must be at least 1".into()));
    }
    let log = options.results_log.as_deref().map(ResultLog::open).transpose()?;
    let model_id = client.model_id().to_owned();
    let next = AtomicUsize::new(0);
    let abort = AtomicBool::new(false);
    let fatal: Mutex<Option<Error>> = Mutex::new(None);
    let slots: Mutex<Vec<Option<RunResult>>> = Mutex::new(vec![None; plan.len()]);

    let worker = || {
        while !abort.load(Ordering::SeqCst) {
            let i = next.fetch_add(1, Ordering::SeqCst);
            let Some(item) = plan.get(i) else { break };
            let key = item.request.cache_key(&model_id);
            let (raw_output, error, cache_hit) = match cache.get(&key) {
                Some(hit) => (Some(hit), None, true),
                None => match with_retry(options.retry, || client.complete(&item.request)) {
                    Ok(text) => {
                        let meta = serde_json::json!({"model_id": model_id, "task": item.task});
                        if let Err(e) = cache.insert(&key, &item.request.digest(), text.clone(), meta) {
                            fail(&abort, &fatal, e);
                            break;
                        }
                        (Some(text), None, false)
                    }
                    Err(ProviderError::Fatal(msg)) => {
                        fail(&abort, &fatal, Error::provider(vec![i], msg));
                        break;
                    }
                    Err(e) => (None, Some(e.to_string()), false),
                },
            };
            let result = RunResult {
                record_id: item.record_id.clone(),
                persona: item.persona.clone(),
                task: item.task,
                model_id: model_id.clone(),
                raw_output,
                error,
                cache_hit,
                timestamp: now_millis(),
            };
            if let Some(log) = &log {
                if let Err(e) = log.append(&result) {
                    fail(&abort, &fatal, e);
                    break;
                }
            }
            slots.lock().unwrap_or_else(|p| p.into_inner())[i] = Some(result);
        }
    };

    std::thread::scope(|s| {
        for _ in 0..options.parallelism.min(plan.len().max(1)) {
            s.spawn(worker);
        }
    });

    let slots = slots.into_inner().unwrap_or_else(|p| p.into_inner());
    if let Some(err) = fatal.into_inner().unwrap_or_else(|p| p.into_inner()) {
        let completed = slots.iter().filter(|s| s.is_some()).count();
        return Err(match err {
            Error::Provider { message, .. } => Error::Aborted {
                completed,
                total: plan.len(),
                message,
            },
            other => other,
        });
    }
    Ok(slots
        .into_iter()
        .map(|s| s.expect("every slot filled when not aborted"))
        .collect())
}

fn fail(abort: &AtomicBool, slot: &Mutex<Option<Error>>, e: Error) {
    abort.store(true, Ordering::SeqCst);
    let mut s = slot.lock().unwrap_or_else(|p| p.into_inner());
    if s.is_none() {
        *s = Some(e);
    }
}
