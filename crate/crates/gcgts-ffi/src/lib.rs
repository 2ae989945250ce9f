//! C ABI for the gcgts library: opaque handles, integer status codes, and a
//! per-thread error message. The build script renders `include/gcgts.h` with
//! cbindgen.
//!
//! Conventions:
//! - Functions returning [`GcgtsStatus`] write their result through an out
//!   pointer on `Ok` and leave it untouched on any other status.
//! - [`gcgts_last_error`] describes the calling thread's most recent failure;
//!   the pointer stays valid until the next failing call on that thread.
//! - `*_free` functions accept NULL and free exactly one ownership.
//! - Unknown characters, POS tags, or relations in a corpus are mapped to the
//!   model's unknown-symbol embeddings.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::fmt::Display;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use gcgts::corpus::{generate, read_corpus, write_corpus, Sentence, Span, SynthParams, Vocabs};
use gcgts::decode::ExtractionResult;
use gcgts::model::{EncoderKind, Model, ModelConfig, Preset};
use gcgts::train::{evaluate, Trainer};

// ── Status codes and handles ─────────────────────────────────────────────

/// Result of every fallible call. Anything but `Ok` leaves a message in
/// [`gcgts_last_error`].
#[repr(C)]
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum GcgtsStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    IndexOutOfRange = 4,
    Io = 5,
    Corpus = 6,
    Checkpoint = 7,
    Training = 8,
    Unsupported = 9,
    Panic = 10,
}

/// An in-memory annotated corpus (opaque).
pub struct GcgtsCorpus {
    sentences: Vec<Sentence>,
}

/// A trained or loaded model (opaque).
pub struct GcgtsModel {
    inner: Model<f32>,
}

/// One precision/recall/F1 triple.
#[repr(C)]
#[derive(Clone, Copy)]
pub struct GcgtsPrf {
    pub p: f64,
    pub r: f64,
    pub f1: f64,
}

/// Exact-match extraction metrics, micro-averaged over a corpus.
#[repr(C)]
#[derive(Clone, Copy)]
pub struct GcgtsMetrics {
    pub pair: GcgtsPrf,
    pub aspect: GcgtsPrf,
    pub opinion: GcgtsPrf,
    pub n_sentences: usize,
}

// ── Error plumbing ───────────────────────────────────────────────────────

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn fail(status: GcgtsStatus, message: impl Display) -> GcgtsStatus {
    let text = message.to_string().replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(text).expect("NUL bytes replaced above");
    });
    status
}

/// Runs a body, converting panics into [`GcgtsStatus::Panic`] so unwinding
/// never crosses the C boundary.
fn guarded<F: FnOnce() -> GcgtsStatus>(f: F) -> GcgtsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(payload) => {
            let message = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unidentified panic".to_string());
            fail(GcgtsStatus::Panic, format!("internal panic: {message}"))
        }
    }
}

unsafe fn str_arg<'a>(ptr: *const c_char, name: &str) -> Result<&'a str, GcgtsStatus> {
    if ptr.is_null() {
        return Err(fail(GcgtsStatus::NullArgument, format!("{name} is NULL")));
    }
    CStr::from_ptr(ptr)
        .to_str()
        .map_err(|_| fail(GcgtsStatus::InvalidUtf8, format!("{name} is not valid UTF-8")))
}

unsafe fn ref_arg<'a, T>(ptr: *const T, name: &str) -> Result<&'a T, GcgtsStatus> {
    ptr.as_ref()
        .ok_or_else(|| fail(GcgtsStatus::NullArgument, format!("{name} is NULL")))
}

fn out_arg<T>(ptr: *mut T, name: &str) -> Result<(), GcgtsStatus> {
    if ptr.is_null() {
        return Err(fail(GcgtsStatus::NullArgument, format!("{name} is NULL")));
    }
    Ok(())
}

fn sentence_at<'a>(
    corpus: &'a GcgtsCorpus,
    index: usize,
) -> Result<&'a Sentence, GcgtsStatus> {
    corpus.sentences.get(index).ok_or_else(|| {
        fail(
            GcgtsStatus::IndexOutOfRange,
            format!("sentence index {index} out of range (corpus has {})", corpus.sentences.len()),
        )
    })
}

/// The C surface runs models without vector sidecars, so file-backed
/// encoders are rejected up front instead of panicking mid-forward.
fn reject_file_backed(model: &GcgtsModel) -> Result<(), GcgtsStatus> {
    if model.inner.config.encoder == EncoderKind::FileBacked {
        return Err(fail(
            GcgtsStatus::Unsupported,
            "this checkpoint uses the file-backed encoder, which the C API does not drive",
        ));
    }
    Ok(())
}

// ── Library metadata ─────────────────────────────────────────────────────

/// The library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn gcgts_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Message of the calling thread's most recent failure (empty string when
/// nothing failed yet). Valid until that thread's next failing call.
#[no_mangle]
pub extern "C" fn gcgts_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

// ── Corpus ───────────────────────────────────────────────────────────────

/// Generates a synthetic annotated corpus.
///
/// # Safety
/// `out` must be a valid pointer to a `GcgtsCorpus*`.
#[no_mangle]
pub unsafe extern "C" fn gcgts_corpus_generate(
    seed: u64,
    count: usize,
    simple_profile: bool,
    out: *mut *mut GcgtsCorpus,
) -> GcgtsStatus {
    guarded(|| {
        if let Err(status) = out_arg(out, "out") {
            return status;
        }
        let params = if simple_profile { SynthParams::simple() } else { SynthParams::mixed() };
        let sentences = generate(seed, count, &params);
        *out = Box::into_raw(Box::new(GcgtsCorpus { sentences }));
        GcgtsStatus::Ok
    })
}

/// Reads a JSON-lines corpus file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be a valid pointer to
/// a `GcgtsCorpus*`.
#[no_mangle]
pub unsafe extern "C" fn gcgts_corpus_read(
    path: *const c_char,
    out: *mut *mut GcgtsCorpus,
) -> GcgtsStatus {
    guarded(|| {
        let path = match str_arg(path, "path") {
            Ok(p) => p,
            Err(status) => return status,
        };
        if let Err(status) = out_arg(out, "out") {
            return status;
        }
        match read_corpus(Path::new(path)) {
            Ok(sentences) => {
                *out = Box::into_raw(Box::new(GcgtsCorpus { sentences }));
                GcgtsStatus::Ok
            }
            Err(e) => fail(GcgtsStatus::Corpus, format!("reading {path}: {e}")),
        }
    })
}

/// Writes a corpus back to a JSON-lines file.
///
/// # Safety
/// `corpus` must be a live handle; `path` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn gcgts_corpus_write(
    corpus: *const GcgtsCorpus,
    path: *const c_char,
) -> GcgtsStatus {
    guarded(|| {
        let corpus = match ref_arg(corpus, "corpus") {
            Ok(c) => c,
            Err(status) => return status,
        };
        let path = match str_arg(path, "path") {
            Ok(p) => p,
            Err(status) => return status,
        };
        match write_corpus(Path::new(path), &corpus.sentences) {
            Ok(()) => GcgtsStatus::Ok,
            Err(e) => fail(GcgtsStatus::Io, format!("writing {path}: {e}")),
        }
    })
}

/// Number of sentences; 0 for NULL.
///
/// # Safety
/// `corpus` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn gcgts_corpus_len(corpus: *const GcgtsCorpus) -> usize {
    corpus.as_ref().map_or(0, |c| c.sentences.len())
}

/// Character count of one sentence.
///
/// # Safety
/// `corpus` must be a live handle; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gcgts_corpus_sentence_len(
    corpus: *const GcgtsCorpus,
    index: usize,
    out: *mut usize,
) -> GcgtsStatus {
    guarded(|| {
        let corpus = match ref_arg(corpus, "corpus") {
            Ok(c) => c,
            Err(status) => return status,
        };
        if let Err(status) = out_arg(out, "out") {
            return status;
        }
        match sentence_at(corpus, index) {
            Ok(s) => {
                *out = s.n_chars();
                GcgtsStatus::Ok
            }
            Err(status) => status,
        }
    })
}

/// Frees a corpus handle (NULL is a no-op).
///
/// # Safety
/// `corpus` must be NULL or a handle returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gcgts_corpus_free(corpus: *mut GcgtsCorpus) {
    if !corpus.is_null() {
        drop(Box::from_raw(corpus));
    }
}

// ── Model ────────────────────────────────────────────────────────────────

/// Trains a fresh model on a corpus with library-default hyperparameters and
/// the given ablation preset (NULL means "gcgts", the full model).
///
/// # Safety
/// `train` must be a live handle; `preset` must be NULL or NUL-terminated;
/// `out` must be a valid pointer to a `GcgtsModel*`.
#[no_mangle]
pub unsafe extern "C" fn gcgts_model_train(
    train: *const GcgtsCorpus,
    epochs: usize,
    seed: u64,
    preset: *const c_char,
    out: *mut *mut GcgtsModel,
) -> GcgtsStatus {
    guarded(|| {
        let corpus = match ref_arg(train, "train") {
            Ok(c) => c,
            Err(status) => return status,
        };
        if let Err(status) = out_arg(out, "out") {
            return status;
        }
        if corpus.sentences.is_empty() {
            return fail(GcgtsStatus::Corpus, "train corpus is empty");
        }
        let preset = if preset.is_null() {
            Preset::Gcgts
        } else {
            let name = match str_arg(preset, "preset") {
                Ok(n) => n,
                Err(status) => return status,
            };
            match Preset::from_name(name) {
                Some(p) => p,
                None => {
                    return fail(
                        GcgtsStatus::InvalidArgument,
                        format!("unknown preset '{name}'"),
                    )
                }
            }
        };
        let mut config = ModelConfig::default();
        preset.apply(&mut config);
        let vocabs = Vocabs::build(&corpus.sentences);
        let mut model = Model::new(config, vocabs, seed);
        let trainer = Trainer {
            train_set: &corpus.sentences,
            dev_set: &[],
            epochs,
            seed,
            eval_every: 0,
            checkpoint: None,
            vectors: None,
        };
        if let Err(e) = trainer.run(&mut model) {
            return fail(GcgtsStatus::Training, e);
        }
        *out = Box::into_raw(Box::new(GcgtsModel { inner: model }));
        GcgtsStatus::Ok
    })
}

/// Loads a checkpoint file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be a valid pointer to
/// a `GcgtsModel*`.
#[no_mangle]
pub unsafe extern "C" fn gcgts_model_load(
    path: *const c_char,
    out: *mut *mut GcgtsModel,
) -> GcgtsStatus {
    guarded(|| {
        let path = match str_arg(path, "path") {
            Ok(p) => p,
            Err(status) => return status,
        };
        if let Err(status) = out_arg(out, "out") {
            return status;
        }
        match gcgts::io::load(Path::new(path)) {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(GcgtsModel { inner }));
                GcgtsStatus::Ok
            }
            Err(e) => fail(GcgtsStatus::Checkpoint, format!("loading {path}: {e}")),
        }
    })
}

/// Saves a model as a checkpoint file.
///
/// # Safety
/// `model` must be a live handle; `path` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn gcgts_model_save(
    model: *const GcgtsModel,
    path: *const c_char,
) -> GcgtsStatus {
    guarded(|| {
        let model = match ref_arg(model, "model") {
            Ok(m) => m,
            Err(status) => return status,
        };
        let path = match str_arg(path, "path") {
            Ok(p) => p,
            Err(status) => return status,
        };
        match gcgts::io::save(Path::new(path), &model.inner) {
            Ok(()) => GcgtsStatus::Ok,
            Err(e) => fail(GcgtsStatus::Checkpoint, format!("saving {path}: {e}")),
        }
    })
}

/// Scores a model against an annotated corpus.
///
/// # Safety
/// `model` and `corpus` must be live handles; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gcgts_model_evaluate(
    model: *const GcgtsModel,
    corpus: *const GcgtsCorpus,
    out: *mut GcgtsMetrics,
) -> GcgtsStatus {
    guarded(|| {
        let model = match ref_arg(model, "model") {
            Ok(m) => m,
            Err(status) => return status,
        };
        let corpus = match ref_arg(corpus, "corpus") {
            Ok(c) => c,
            Err(status) => return status,
        };
        if let Err(status) = out_arg(out, "out") {
            return status;
        }
        if let Err(status) = reject_file_backed(model) {
            return status;
        }
        let metrics = evaluate(&model.inner, &corpus.sentences, None)
            .expect("no sidecar involved, evaluation cannot fail");
        let prf = |p: gcgts::eval::Prf| GcgtsPrf { p: p.p, r: p.r, f1: p.f1 };
        *out = GcgtsMetrics {
            pair: prf(metrics.pair),
            aspect: prf(metrics.aspect),
            opinion: prf(metrics.opinion),
            n_sentences: metrics.n_sentences,
        };
        GcgtsStatus::Ok
    })
}

fn extraction_json(s: &Sentence, r: &ExtractionResult) -> serde_json::Value {
    let term = |span: Span| {
        serde_json::json!({
            "span": [span.start, span.end],
            "text": s.chars[span.start..span.end].concat(),
        })
    };
    serde_json::json!({
        "id": s.id,
        "aspects": r.aspects.iter().map(|&a| term(a)).collect::<Vec<_>>(),
        "opinions": r.opinions.iter().map(|&o| term(o)).collect::<Vec<_>>(),
        "pairs": r
            .pairs
            .iter()
            .map(|&(a, o)| serde_json::json!({ "aspect": term(a), "opinion": term(o) }))
            .collect::<Vec<_>>(),
    })
}

/// Runs extraction on one sentence and returns it as a JSON object (spans
/// plus surface strings). The string is owned by the caller: release it with
/// [`gcgts_string_free`].
///
/// # Safety
/// `model` and `corpus` must be live handles; `out_json` must be a valid
/// pointer to a `char*`.
#[no_mangle]
pub unsafe extern "C" fn gcgts_model_predict_json(
    model: *const GcgtsModel,
    corpus: *const GcgtsCorpus,
    index: usize,
    out_json: *mut *mut c_char,
) -> GcgtsStatus {
    guarded(|| {
        let model = match ref_arg(model, "model") {
            Ok(m) => m,
            Err(status) => return status,
        };
        let corpus = match ref_arg(corpus, "corpus") {
            Ok(c) => c,
            Err(status) => return status,
        };
        if let Err(status) = out_arg(out_json, "out_json") {
            return status;
        }
        if let Err(status) = reject_file_backed(model) {
            return status;
        }
        let sentence = match sentence_at(corpus, index) {
            Ok(s) => s,
            Err(status) => return status,
        };
        let result = model.inner.predict(sentence, None);
        let json = extraction_json(sentence, &result).to_string();
        *out_json = CString::new(json)
            .expect("serde_json output has no NUL bytes")
            .into_raw();
        GcgtsStatus::Ok
    })
}

/// Fills `out` (length `out_len`, which must equal n*n for the sentence's
/// character count n) with the row-major pair-probability grid.
///
/// # Safety
/// `model` and `corpus` must be live handles; `out` must point to at least
/// `out_len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn gcgts_model_pair_grid(
    model: *const GcgtsModel,
    corpus: *const GcgtsCorpus,
    index: usize,
    out: *mut f64,
    out_len: usize,
) -> GcgtsStatus {
    guarded(|| {
        let model = match ref_arg(model, "model") {
            Ok(m) => m,
            Err(status) => return status,
        };
        let corpus = match ref_arg(corpus, "corpus") {
            Ok(c) => c,
            Err(status) => return status,
        };
        if let Err(status) = out_arg(out, "out") {
            return status;
        }
        if let Err(status) = reject_file_backed(model) {
            return status;
        }
        let sentence = match sentence_at(corpus, index) {
            Ok(s) => s,
            Err(status) => return status,
        };
        let n = sentence.n_chars();
        if out_len != n * n {
            return fail(
                GcgtsStatus::InvalidArgument,
                format!("out_len {out_len} does not match the {n}x{n} grid ({} cells)", n * n),
            );
        }
        let probs = model.inner.pair_probabilities(sentence, None);
        std::ptr::copy_nonoverlapping(probs.as_ptr(), out, probs.len());
        GcgtsStatus::Ok
    })
}

/// Frees a model handle (NULL is a no-op).
///
/// # Safety
/// `model` must be NULL or a handle returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gcgts_model_free(model: *mut GcgtsModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Frees a string returned by this library (NULL is a no-op).
///
/// # Safety
/// `s` must be NULL or a string returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gcgts_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
