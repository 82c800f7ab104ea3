//! C interface to the maya engine.
//!
//! Every function returns a [`MayaStatus`]. On failure the message is kept per
//! thread and read with [`maya_last_error`]. Handles are opaque and must be
//! released with their `_free` function; strings returned through `out`
//! pointers are released with [`maya_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use maya::fer::{self, FerModel, GalleryError, IdentityGallery, EMBEDDING_DIM};
use maya::landmark::{EmotionLabel, LandmarkSet, NUM_POINTS};
use maya::sessions::{Command, GameConfig, LogicalClock, Session, SessionError, SessionSpec};
use maya::stats;

// Literals so the generated header can spell them out.
pub const MAYA_NUM_CLASSES: usize = 7;
pub const MAYA_EMBEDDING_DIM: usize = 48;
pub const MAYA_NUM_POINTS: usize = 68;

const _: () = assert!(MAYA_NUM_CLASSES == EmotionLabel::COUNT);
const _: () = assert!(MAYA_EMBEDDING_DIM == EMBEDDING_DIM);
const _: () = assert!(MAYA_NUM_POINTS == NUM_POINTS);

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MayaStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidArgument = 2,
    Io = 3,
    InvalidLandmarks = 4,
    Model = 5,
    Phase = 6,
    NotFound = 7,
    NoMatch = 8,
    Stats = 9,
    Panic = 99,
}

/// Loaded expression classifier.
pub struct MayaModel(FerModel);

/// Enrolled identities.
pub struct MayaGallery(IdentityGallery);

/// One game session with a deterministic clock.
pub struct MayaGame {
    session: Session,
    clock: LogicalClock,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

type Res = Result<(), (MayaStatus, String)>;

fn guard(f: impl FnOnce() -> Res) -> MayaStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            MayaStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            MayaStatus::Panic
        }
    }
}

fn null(what: &str) -> (MayaStatus, String) {
    (MayaStatus::NullArgument, format!("{what} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, (MayaStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (MayaStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn slice_arg<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], (MayaStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, (MayaStatus, String)> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn handle_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, (MayaStatus, String)> {
    p.as_mut().ok_or_else(|| null(what))
}

fn out_string(out: *mut *mut c_char, s: String) -> Res {
    let c = CString::new(s).map_err(|e| (MayaStatus::InvalidArgument, e.to_string()))?;
    unsafe { *out = c.into_raw() };
    Ok(())
}

fn gallery_err(e: GalleryError) -> (MayaStatus, String) {
    let status = match e {
        GalleryError::Io(_) => MayaStatus::Io,
        GalleryError::UnknownPerson(_) => MayaStatus::NotFound,
        _ => MayaStatus::InvalidArgument,
    };
    (status, e.to_string())
}

fn session_err(e: SessionError) -> (MayaStatus, String) {
    let status = match e {
        SessionError::Phase { .. } | SessionError::WrongKind { .. } | SessionError::Closed(_) => MayaStatus::Phase,
        SessionError::Stats(_) => MayaStatus::Stats,
        _ => MayaStatus::InvalidArgument,
    };
    (status, e.to_string())
}

/// Message for the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn maya_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn maya_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Frees a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn maya_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Loads a checkpoint file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn maya_model_load(path: *const c_char, out: *mut *mut MayaModel) -> MayaStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let m = FerModel::load(Path::new(path)).map_err(|e| (MayaStatus::Io, e.to_string()))?;
        *out = Box::into_raw(Box::new(MayaModel(m)));
        Ok(())
    })
}

/// Untrained network with seeded weights.
///
/// # Safety
/// `out` must be a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn maya_model_new(seed: u64, out: *mut *mut MayaModel) -> MayaStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = Box::into_raw(Box::new(MayaModel(fer::build_maya_net(seed))));
        Ok(())
    })
}

/// # Safety
/// `model` must come from `maya_model_load` or `maya_model_new`, or be null.
#[no_mangle]
pub unsafe extern "C" fn maya_model_free(model: *mut MayaModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Classifies one face given as `n_points` (x, y) pairs, flattened.
///
/// Writes `MAYA_NUM_CLASSES` probabilities to `probs`, the top class code to
/// `top` and, when `embedding` is not null, `MAYA_EMBEDDING_DIM` values to it.
///
/// # Safety
/// `points` must hold `2 * n_points` values; output buffers must have the
/// sizes above.
#[no_mangle]
pub unsafe extern "C" fn maya_model_predict(
    model: *const MayaModel,
    points: *const f64,
    n_points: usize,
    probs: *mut f64,
    top: *mut u8,
    embedding: *mut f64,
) -> MayaStatus {
    guard(|| {
        let model = handle(model, "model")?;
        let flat = slice_arg(points, n_points * 2, "points")?;
        if probs.is_null() || top.is_null() {
            return Err(null("probs or top"));
        }
        let pts = flat.chunks_exact(2).map(|p| [p[0], p[1]]).collect();
        let set = LandmarkSet::new(pts, "ffi").map_err(|e| (MayaStatus::InvalidLandmarks, e.to_string()))?;
        let pred = model.0.predict(&set).map_err(|e| match e {
            fer::FerError::Landmark { .. } => (MayaStatus::InvalidLandmarks, e.to_string()),
            other => (MayaStatus::Model, other.to_string()),
        })?;
        ptr::copy_nonoverlapping(pred.probs.as_ptr(), probs, pred.probs.len());
        *top = pred.top.code();
        if !embedding.is_null() {
            ptr::copy_nonoverlapping(pred.embedding.as_ptr(), embedding, pred.embedding.len());
        }
        Ok(())
    })
}

/// Name of an emotion class code, or null for an unknown code.
#[no_mangle]
pub extern "C" fn maya_emotion_name(code: u8) -> *const c_char {
    const NAMES: [&CStr; MAYA_NUM_CLASSES] =
        [c"neutral", c"anger", c"disgust", c"happiness", c"sadness", c"stress", c"surprise"];
    match EmotionLabel::from_code(code) {
        Some(l) => NAMES
            .iter()
            .find(|n| n.to_bytes() == l.name().as_bytes())
            .map_or(ptr::null(), |n| n.as_ptr()),
        None => ptr::null(),
    }
}

/// Empty gallery matching at cosine similarity `threshold` or above.
///
/// # Safety
/// `out` must be a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn maya_gallery_new(threshold: f64, out: *mut *mut MayaGallery) -> MayaStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let g = IdentityGallery::with_threshold(threshold).map_err(gallery_err)?;
        *out = Box::into_raw(Box::new(MayaGallery(g)));
        Ok(())
    })
}

/// # Safety
/// `gallery` must come from `maya_gallery_new` or be null.
#[no_mangle]
pub unsafe extern "C" fn maya_gallery_free(gallery: *mut MayaGallery) {
    if !gallery.is_null() {
        drop(Box::from_raw(gallery));
    }
}

/// Enrolls a new person with one unit-norm embedding.
///
/// # Safety
/// `name` must be NUL-terminated, `embedding` must hold `len` values and
/// `person_id` must be writable.
#[no_mangle]
pub unsafe extern "C" fn maya_gallery_enroll(
    gallery: *mut MayaGallery,
    name: *const c_char,
    embedding: *const f64,
    len: usize,
    person_id: *mut u64,
) -> MayaStatus {
    guard(|| {
        let g = handle_mut(gallery, "gallery")?;
        let name = str_arg(name, "name")?;
        let emb = slice_arg(embedding, len, "embedding")?;
        if person_id.is_null() {
            return Err(null("person_id"));
        }
        *person_id = g.0.enroll(name, emb.to_vec()).map_err(gallery_err)?;
        Ok(())
    })
}

/// Best match at or above the threshold. Returns `NoMatch` when nobody
/// qualifies; `person_id` and `similarity` are then left untouched.
///
/// # Safety
/// `embedding` must hold `len` values; the outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn maya_gallery_identify(
    gallery: *const MayaGallery,
    embedding: *const f64,
    len: usize,
    person_id: *mut u64,
    similarity: *mut f64,
) -> MayaStatus {
    guard(|| {
        let g = handle(gallery, "gallery")?;
        let emb = slice_arg(embedding, len, "embedding")?;
        if person_id.is_null() || similarity.is_null() {
            return Err(null("person_id or similarity"));
        }
        match g.0.identify(emb).map_err(gallery_err)? {
            Some(m) => {
                *person_id = m.person_id;
                *similarity = m.similarity;
                Ok(())
            }
            None => Err((MayaStatus::NoMatch, "no enrolled person above the threshold".into())),
        }
    })
}

/// Starts a game. `config_json` is a game config object or null for the
/// defaults with `seed`; a seed inside the JSON wins.
///
/// # Safety
/// `config_json` must be null or NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn maya_game_new(config_json: *const c_char, seed: u64, out: *mut *mut MayaGame) -> MayaStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let config = if config_json.is_null() {
            GameConfig {
                seed,
                ..GameConfig::default()
            }
        } else {
            let text = str_arg(config_json, "config_json")?;
            let mut v: serde_json::Value =
                serde_json::from_str(text).map_err(|e| (MayaStatus::InvalidArgument, e.to_string()))?;
            if let Some(obj) = v.as_object_mut() {
                obj.entry("seed").or_insert(seed.into());
            }
            serde_json::from_value(v).map_err(|e| (MayaStatus::InvalidArgument, e.to_string()))?
        };
        let clock = LogicalClock::default();
        let session =
            Session::create(&format!("ffi-{}", config.seed), SessionSpec::Game(config), &clock).map_err(session_err)?;
        *out = Box::into_raw(Box::new(MayaGame { session, clock }));
        Ok(())
    })
}

/// # Safety
/// `game` must come from `maya_game_new` or be null.
#[no_mangle]
pub unsafe extern "C" fn maya_game_free(game: *mut MayaGame) {
    if !game.is_null() {
        drop(Box::from_raw(game));
    }
}

/// Runs one command, e.g. `{"command":"roll"}`. On success `result_json`
/// receives `{"events": [...], "result": {...}}`.
///
/// # Safety
/// `command_json` must be NUL-terminated; `result_json` must be writable or null.
#[no_mangle]
pub unsafe extern "C" fn maya_game_command(
    game: *mut MayaGame,
    command_json: *const c_char,
    result_json: *mut *mut c_char,
) -> MayaStatus {
    guard(|| {
        let g = handle_mut(game, "game")?;
        let text = str_arg(command_json, "command_json")?;
        let mut v: serde_json::Value =
            serde_json::from_str(text).map_err(|e| (MayaStatus::InvalidArgument, e.to_string()))?;
        if let Some(obj) = v.as_object_mut() {
            obj.entry("payload").or_insert_with(|| serde_json::json!({}));
        }
        let cmd: Command = serde_json::from_value(v).map_err(|e| (MayaStatus::InvalidArgument, e.to_string()))?;
        let (events, result) = g.session.execute(&cmd, &g.clock).map_err(session_err)?;
        if !result_json.is_null() {
            out_string(result_json, serde_json::json!({ "events": events, "result": result }).to_string())?;
        }
        Ok(())
    })
}

/// Whole event log as JSON lines.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn maya_game_events(game: *const MayaGame, out: *mut *mut c_char) -> MayaStatus {
    guard(|| {
        let g = handle(game, "game")?;
        if out.is_null() {
            return Err(null("out"));
        }
        out_string(out, maya::sessions::to_jsonl(&g.session.events))
    })
}

/// Two-tailed t-test. `paired` selects the paired test; otherwise Welch.
///
/// # Safety
/// `a` must hold `n_a` values and `b` `n_b`; outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn maya_t_test(
    a: *const f64,
    n_a: usize,
    b: *const f64,
    n_b: usize,
    paired: bool,
    t: *mut f64,
    df: *mut f64,
    p: *mut f64,
) -> MayaStatus {
    guard(|| {
        let a = slice_arg(a, n_a, "a")?;
        let b = slice_arg(b, n_b, "b")?;
        if t.is_null() || df.is_null() || p.is_null() {
            return Err(null("t, df or p"));
        }
        let r = if paired {
            stats::paired_t_test(a, b)
        } else {
            stats::welch_t_test(a, b)
        }
        .map_err(|e| (MayaStatus::Stats, format!("{}: {e}", e.code())))?;
        *t = r.t;
        *df = r.df;
        *p = r.p_two_tailed;
        Ok(())
    })
}
