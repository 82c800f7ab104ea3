use std::ffi::{CStr, CString};
use std::ptr;

use maya::augment::synth;
use maya::fer::build_maya_net;
use maya_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(maya_last_error()) }.to_string_lossy().into_owned()
}

fn flat_points(seed: u64) -> Vec<f64> {
    let face = synth::synth_corpus(1, seed).remove(0);
    face.points.iter().flat_map(|p| [p[0], p[1]]).collect()
}

#[test]
fn predict_matches_library() {
    let mut model = ptr::null_mut();
    assert_eq!(unsafe { maya_model_new(5, &mut model) }, MayaStatus::Ok);
    let pts = flat_points(2);
    let mut probs = [0.0; MAYA_NUM_CLASSES];
    let mut emb = [0.0; MAYA_EMBEDDING_DIM];
    let mut top = 255u8;
    let st = unsafe { maya_model_predict(model, pts.as_ptr(), MAYA_NUM_POINTS, probs.as_mut_ptr(), &mut top, emb.as_mut_ptr()) };
    assert_eq!(st, MayaStatus::Ok, "{}", last_error());

    let face = synth::synth_corpus(1, 2).remove(0);
    let direct = build_maya_net(5).predict(&face).unwrap();
    assert_eq!(probs.to_vec(), direct.probs);
    assert_eq!(emb.to_vec(), direct.embedding);
    assert_eq!(top, direct.top.code());
    let name = unsafe { CStr::from_ptr(maya_emotion_name(top)) }.to_str().unwrap();
    assert_eq!(name, direct.top.name());
    assert!(maya_emotion_name(200).is_null());

    let st = unsafe { maya_model_predict(model, pts.as_ptr(), 67, probs.as_mut_ptr(), &mut top, ptr::null_mut()) };
    assert_eq!(st, MayaStatus::InvalidLandmarks);
    assert!(last_error().contains("68"), "{}", last_error());
    let st = unsafe { maya_model_predict(ptr::null(), pts.as_ptr(), 68, probs.as_mut_ptr(), &mut top, ptr::null_mut()) };
    assert_eq!(st, MayaStatus::NullArgument);
    unsafe { maya_model_free(model) };

    let missing = CString::new("/nonexistent/model.maya").unwrap();
    let mut m2 = ptr::null_mut();
    assert_eq!(unsafe { maya_model_load(missing.as_ptr(), &mut m2) }, MayaStatus::Io);
    assert!(m2.is_null());
}

#[test]
fn gallery_enroll_and_identify() {
    let mut g = ptr::null_mut();
    assert_eq!(unsafe { maya_gallery_new(0.9, &mut g) }, MayaStatus::Ok);
    assert_eq!(unsafe { maya_gallery_new(2.0, &mut ptr::null_mut()) }, MayaStatus::InvalidArgument);
    let mut e1 = vec![0.0; MAYA_EMBEDDING_DIM];
    e1[0] = 1.0;
    let mut e2 = vec![0.0; MAYA_EMBEDDING_DIM];
    e2[1] = 1.0;
    let (a, b) = (CString::new("ana").unwrap(), CString::new("ben").unwrap());
    let (mut ida, mut idb) = (0, 0);
    unsafe {
        assert_eq!(maya_gallery_enroll(g, a.as_ptr(), e1.as_ptr(), e1.len(), &mut ida), MayaStatus::Ok);
        assert_eq!(maya_gallery_enroll(g, b.as_ptr(), e2.as_ptr(), e2.len(), &mut idb), MayaStatus::Ok);
    }
    assert_ne!(ida, idb);
    let (mut id, mut sim) = (0, 0.0);
    assert_eq!(unsafe { maya_gallery_identify(g, e2.as_ptr(), e2.len(), &mut id, &mut sim) }, MayaStatus::Ok);
    assert_eq!((id, sim), (idb, 1.0));
    let probe: Vec<f64> = e1.iter().zip(&e2).map(|(x, y)| (x + y) / 2f64.sqrt()).collect();
    assert_eq!(unsafe { maya_gallery_identify(g, probe.as_ptr(), probe.len(), &mut id, &mut sim) }, MayaStatus::NoMatch);
    let bad = vec![0.5; 3];
    assert_eq!(unsafe { maya_gallery_identify(g, bad.as_ptr(), 3, &mut id, &mut sim) }, MayaStatus::InvalidArgument);
    unsafe { maya_gallery_free(g) };
}

#[test]
fn game_commands_and_log() {
    let mut game = ptr::null_mut();
    assert_eq!(unsafe { maya_game_new(ptr::null(), 7, &mut game) }, MayaStatus::Ok);
    let roll = CString::new(r#"{"command":"roll"}"#).unwrap();
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { maya_game_command(game, roll.as_ptr(), &mut out) }, MayaStatus::Phase);
    assert!(last_error().contains("awaiting_neutral_calibration"), "{}", last_error());
    let cal = CString::new(r#"{"command":"calibrate"}"#).unwrap();
    assert_eq!(unsafe { maya_game_command(game, cal.as_ptr(), ptr::null_mut()) }, MayaStatus::Ok);
    assert_eq!(unsafe { maya_game_command(game, roll.as_ptr(), &mut out) }, MayaStatus::Ok);
    let v: serde_json::Value = serde_json::from_str(unsafe { CStr::from_ptr(out) }.to_str().unwrap()).unwrap();
    unsafe { maya_string_free(out) };
    assert_eq!(v["events"][0]["kind"], "dice_rolled");
    let bad = CString::new("{").unwrap();
    assert_eq!(unsafe { maya_game_command(game, bad.as_ptr(), &mut out) }, MayaStatus::InvalidArgument);

    let mut log = ptr::null_mut();
    assert_eq!(unsafe { maya_game_events(game, &mut log) }, MayaStatus::Ok);
    let text = unsafe { CStr::from_ptr(log) }.to_str().unwrap().to_string();
    unsafe { maya_string_free(log) };
    let events = maya::sessions::parse_log(&text).unwrap();
    assert_eq!(events.len() as u64, events.last().unwrap().seq);
    unsafe { maya_game_free(game) };

    let cfg = CString::new(r#"{"board":{"ladders":[[40,2]]}}"#).unwrap();
    let mut g2 = ptr::null_mut();
    assert_eq!(unsafe { maya_game_new(cfg.as_ptr(), 1, &mut g2) }, MayaStatus::InvalidArgument);
    assert!(last_error().contains("ladders"), "{}", last_error());
}

#[test]
fn t_test_codes() {
    let a = [8.0, 9.0, 9.0, 8.0, 9.0];
    let b = [4.0, 5.0, 4.0, 5.0, 6.0];
    let (mut t, mut df, mut p) = (0.0, 0.0, 0.0);
    assert_eq!(unsafe { maya_t_test(a.as_ptr(), 5, b.as_ptr(), 5, true, &mut t, &mut df, &mut p) }, MayaStatus::Ok);
    let r = maya::stats::paired_t_test(&a, &b).unwrap();
    assert_eq!((t, df, p), (r.t, r.df, r.p_two_tailed));
    let c = [4.0, 5.0, 5.0, 4.0, 5.0];
    assert_eq!(unsafe { maya_t_test(a.as_ptr(), 5, c.as_ptr(), 5, true, &mut t, &mut df, &mut p) }, MayaStatus::Stats);
    assert!(last_error().starts_with("degenerate_variance"));
    let v = unsafe { CStr::from_ptr(maya_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}
