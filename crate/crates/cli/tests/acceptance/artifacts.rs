use std::path::Path;

use emomap_core::export::{parse_csv, write_rows};
use reqwest::blocking::multipart;
use serde_json::{json, Value};

use crate::common::{emomap, png, stdout, Api, Server, RESEARCHER};
use crate::{check, Outcome};

const GOLDEN: &str = include_str!("../fixtures/golden_50.csv");

/// A temporary store with a researcher account and a running server.
pub struct Live {
    pub dir: tempfile::TempDir,
    pub server: Option<Server>,
    pub admin: Api,
}

impl Live {
    pub fn start() -> Result<Live, String> {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let o = emomap(dir.path(), &["researcher-add", "--username", RESEARCHER.0, "--password", RESEARCHER.1]);
        check!(o.status.success(), "researcher-add failed");
        let server = Server::try_start(dir.path(), "127.0.0.1:0")?;
        let admin = Api::researcher(&server.base);
        Ok(Live { dir, server: Some(server), admin })
    }

    pub fn store(&self) -> &Path {
        self.dir.path()
    }

    /// Restarts the server on the same store after the old one is gone.
    pub fn restart(&mut self) -> Result<(), String> {
        let server = Server::try_start(self.dir.path(), "127.0.0.1:0")?;
        self.admin = Api::researcher(&server.base);
        self.server = Some(server);
        Ok(())
    }

    pub fn create(&self, mode: &str) -> Result<String, String> {
        let r = self
            .admin
            .post("/api/experiments")
            .json(&json!({
                "mode": mode,
                "start_time": "2026-01-01T00:00:00Z",
                "finish_time": "2099-01-01T00:00:00Z",
            }))
            .send()
            .map_err(|e| e.to_string())?;
        check!(r.status() == 201, "create {mode}: {}", r.status());
        Ok(r.json::<Value>().unwrap()["id"].as_str().unwrap().to_string())
    }

    pub fn invite(&self, experiment: &str, participant: &str) -> Value {
        let r = self
            .admin
            .post("/api/invitations")
            .json(&json!({"experiment_id": experiment, "participant_id": participant}))
            .send()
            .unwrap();
        assert_eq!(r.status(), 201);
        r.json().unwrap()
    }

    /// Session client for a fresh invitation.
    pub fn join(&self, experiment: &str, participant: &str) -> Api {
        let inv = self.invite(experiment, participant);
        let r = Api::new(&self.admin.base)
            .post("/api/session")
            .json(&json!({"token": inv["token"]}))
            .send()
            .unwrap();
        assert_eq!(r.status(), 200);
        self.admin.with_token(r.json::<Value>().unwrap()["token"].as_str().unwrap())
    }
}

pub fn csv() -> Outcome {
    let rows = parse_csv(GOLDEN).map_err(|e| e.to_string())?;
    check!(rows.len() == 50, "fixture has {} rows", rows.len());
    let again = write_rows(&rows);
    check!(again == GOLDEN, "re-export differs from the fixture");
    check!(parse_csv(&again).map_err(|e| e.to_string())? == rows, "second parse differs");

    let live = Live::start()?;
    let exp = live.create("FIELD")?;
    let r = live.admin.post(&format!("/api/experiments/{exp}/activate")).send().unwrap();
    check!(r.status() == 200, "activate: {}", r.status());
    let mut tagged = 0;
    for (k, who) in ["ula", "wit", "ola"].iter().enumerate() {
        let p = live.join(&exp, who);
        for i in 0..4u8 {
            let lat = 52.2297 + 0.0078125 * f64::from(i) - k as f64 * 0.3;
            let form = multipart::Form::new()
                .part("image", multipart::Part::bytes(png(i * 3 + k as u8)).file_name("p.png"))
                .text("lat", lat.to_string())
                .text("lon", "21.0122");
            let r = p.post("/api/field-pictures").multipart(form).send().unwrap();
            check!(r.status() == 201, "upload: {}", r.status());
            let pic = r.json::<Value>().unwrap()["picture_id"].clone();
            let angle = f64::from(i) * 97.0 + k as f64 * 13.0;
            let r = p
                .post("/api/tags")
                .json(&json!({
                    "picture_id": pic,
                    "x": 0.61 * angle.to_radians().sin(),
                    "y": 0.61 * angle.to_radians().cos(),
                    "lat": lat, "lon": 21.0122,
                    "client_time": "2026-10-16T12:00:00+02:00",
                }))
                .send()
                .unwrap();
            check!(r.status() == 201, "tag: {}", r.status());
            tagged += 1;
        }
    }
    let api = live.admin.get(&format!("/api/experiments/{exp}/export.csv")).send().unwrap();
    check!(
        api.headers()["content-type"].to_str().unwrap().starts_with("text/csv"),
        "export content type"
    );
    let api = api.bytes().unwrap();
    let cli = emomap(live.store(), &["export", "--experiment", &exp]);
    check!(cli.status.success(), "cli export exited {:?}", cli.status.code());
    check!(cli.stdout == api.to_vec(), "CLI export differs from API export");
    let rows = parse_csv(&stdout(&cli)).map_err(|e| e.to_string())?;
    check!(rows.len() == tagged, "export has {} rows, {tagged} tagged", rows.len());
    check!(write_rows(&rows).as_bytes() == &api[..], "live export is not a fixed point");
    Ok(format!("golden 50 rows re-export identically; CLI and API exports match over {tagged} rows"))
}
