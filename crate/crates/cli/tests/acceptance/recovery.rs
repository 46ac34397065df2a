use std::collections::BTreeSet;

use emomap_core::export::{format_decimal6, parse_csv};
use serde_json::{json, Value};

use crate::artifacts::Live;
use crate::common::{emomap, error_code, png, stdout};
use crate::{check, Outcome};

fn upload(live: &Live, exp: &str, n: u8) -> Result<Vec<String>, String> {
    let images: Vec<Vec<u8>> = (0..n).map(|i| png(100 + i)).collect();
    let r = live.admin.upload(exp, &images);
    check!(r.status() == 201, "add pictures: {}", r.status());
    Ok(r.json::<Vec<Value>>()
        .unwrap()
        .iter()
        .map(|p| p["id"].as_str().unwrap().to_string())
        .collect())
}

pub fn crash() -> Outcome {
    const PARTICIPANTS: usize = 5;
    const N: usize = 37;

    let mut live = Live::start()?;
    let exp = live.create("CURATED")?;
    let pics = upload(&live, &exp, 8)?;
    let r = live.admin.post(&format!("/api/experiments/{exp}/activate")).send().unwrap();
    check!(r.status() == 200, "activate: {}", r.status());
    let sessions: Vec<_> = (0..PARTICIPANTS).map(|i| live.join(&exp, &format!("p{i}"))).collect();

    let mut acked = BTreeSet::new();
    for k in 0..N {
        let (who, pic) = (k % PARTICIPANTS, k / PARTICIPANTS);
        let angle = k as f64 * 29.0;
        let (x, y) = (0.5 * angle.to_radians().sin(), 0.5 * angle.to_radians().cos());
        let r = sessions[who]
            .post("/api/tags")
            .json(&json!({"picture_id": pics[pic], "x": x, "y": y}))
            .send()
            .unwrap();
        check!(r.status() == 201, "tag {k}: {}", r.status());
        acked.insert((format!("p{who}"), pics[pic].clone(), format_decimal6(x), format_decimal6(y)));
    }
    live.server.take().unwrap().kill();

    live.restart()?;
    let csv = live
        .admin
        .get(&format!("/api/experiments/{exp}/export.csv"))
        .send()
        .unwrap()
        .text()
        .unwrap();
    let rows = parse_csv(&csv).map_err(|e| e.to_string())?;
    check!(rows.len() == N, "recovered {} events, {N} were acknowledged", rows.len());
    let recovered: BTreeSet<_> = rows
        .iter()
        .map(|r| (r.participant_id.clone(), r.picture_id.clone(), format_decimal6(r.x), format_decimal6(r.y)))
        .collect();
    check!(recovered == acked, "recovered events differ from the acknowledged ones");
    let cli = emomap(live.store(), &["export", "--experiment", &exp]);
    check!(stdout(&cli) == csv, "CLI export after recovery differs");

    let mut total = 0;
    for pic in &pics {
        let v: Value = live
            .admin
            .get(&format!("/api/experiments/{exp}/results/pictures/{pic}"))
            .send()
            .unwrap()
            .json()
            .unwrap();
        total += v["summary"]["n"].as_u64().unwrap() as usize;
    }
    check!(total == N, "picture views count {total}");
    Ok(format!("{N} acknowledged tags survive kill -9 and export intact"))
}

pub fn end_to_end() -> Outcome {
    let live = Live::start()?;
    let admin = &live.admin;
    let exp = live.create("CURATED")?;
    let path = format!("/api/experiments/{exp}");
    let pics = upload(&live, &exp, 3)?;
    check!(pics.len() == 3, "3 pictures");

    let (status, code) = error_code(admin.patch(&path).json(&json!({"mode": "FIELD"})).send().unwrap());
    check!((status, code.as_str()) == (409, "mode_immutable"), "mode change gave {status} {code}");
    let (status, code) = error_code(admin.post(&format!("{path}/finish")).send().unwrap());
    check!((status, code.as_str()) == (409, "invalid_transition"), "finish from draft gave {status} {code}");

    let r = admin.post(&format!("{path}/activate")).send().unwrap();
    check!(r.status() == 200, "activate: {}", r.status());
    let v: Value = r.json().unwrap();
    check!(v["state"] == "ACTIVE", "state after activate {}", v["state"]);
    let (status, code) = error_code(admin.post(&format!("{path}/activate")).send().unwrap());
    check!((status, code.as_str()) == (409, "invalid_transition"), "second activate gave {status} {code}");
    let (status, code) = error_code(admin.patch(&path).json(&json!({"mode": "FIELD"})).send().unwrap());
    check!((status, code.as_str()) == (409, "mode_immutable"), "mode change when active gave {status} {code}");

    let inv = live.invite(&exp, "eve");
    let token = inv["token"].as_str().unwrap();
    check!(inv["url_payload"].as_str().unwrap().ends_with(token), "url payload carries the token");
    let first = live.join(&exp, "eve");
    let p = live.join(&exp, "eve");
    let (status, code) = error_code(first.get("/api/session/next").send().unwrap());
    check!((status, code.as_str()) == (401, "session_closed"), "superseded session gave {status} {code}");
    let (status, code) = error_code(p.get("/api/experiments").send().unwrap());
    check!((status, code.as_str()) == (403, "forbidden"), "participant on researcher route gave {status} {code}");

    let (status, code) = error_code(p.post("/api/tags").json(&json!({"picture_id": pics[0], "x": 0.9, "y": 0.9})).send().unwrap());
    check!((status, code.as_str()) == (422, "out_of_disc"), "outside the disc gave {status} {code}");
    let (status, code) = error_code(p.post("/api/tags").json(&json!({"picture_id": pics[0], "x": 0.0, "y": 0.001})).send().unwrap());
    check!((status, code.as_str()) == (422, "center_ambiguous"), "center gave {status} {code}");

    let mut seen = Vec::new();
    for step in 0..3 {
        let next: Value = p.get("/api/session/next").send().unwrap().json().unwrap();
        check!(next["position"] == step && next["total"] == 3, "next at step {step}: {next}");
        let pic = next["picture_id"].as_str().unwrap().to_string();
        let img = p.get(next["picture_url"].as_str().unwrap_or(&format!("/api/pictures/{pic}"))).send().unwrap();
        check!(img.status() == 200, "picture fetch: {}", img.status());
        let r = p
            .post("/api/tags")
            .json(&json!({"picture_id": pic, "x": 0.3 * step as f64, "y": 0.5}))
            .send()
            .unwrap();
        check!(r.status() == 201, "tag {step}: {}", r.status());
        let ev: Value = r.json().unwrap();
        check!(ev["classification"]["label"].is_string(), "tag response lacks a label");
        seen.push(pic);
    }
    let done: Value = p.get("/api/session/next").send().unwrap().json().unwrap();
    check!(done["done"] == true, "after all pictures: {done}");
    seen.sort();
    let mut expected = pics.clone();
    expected.sort();
    check!(seen == expected, "presented pictures differ from the experiment");

    let r = admin.post(&format!("{path}/finish")).send().unwrap();
    check!(r.status() == 200, "finish: {}", r.status());
    let (status, code) = error_code(p.post("/api/tags").json(&json!({"picture_id": pics[0], "x": 0.0, "y": 0.5})).send().unwrap());
    check!(code == "experiment_not_active" || code == "session_closed", "tag after finish gave {status} {code}");
    check!(status == 401 || status == 403, "tag after finish gave {status}");
    let (status, code) = error_code(admin.post(&format!("{path}/activate")).send().unwrap());
    check!((status, code.as_str()) == (409, "invalid_transition"), "reactivate gave {status} {code}");

    let csv = admin.get(&format!("{path}/export.csv")).send().unwrap().text().unwrap();
    let rows = parse_csv(&csv).map_err(|e| e.to_string())?;
    check!(rows.len() == 3 && rows.iter().all(|r| r.participant_id == "eve"), "export rows: {}", rows.len());
    let cli = emomap(live.store(), &["export", "--experiment", &exp]);
    check!(stdout(&cli) == csv, "CLI export differs from API export");
    let user: Value = admin.get(&format!("{path}/results/users/eve")).send().unwrap().json().unwrap();
    check!(user.as_array().map(Vec::len) == Some(3), "user view: {user}");
    Ok("create, 3 pictures, invite, session, tag all, finish, export with all error codes".into())
}
