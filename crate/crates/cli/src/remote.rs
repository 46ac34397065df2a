//! The same operations over the HTTP API of a running server.

use anyhow::Context;
use chrono::{DateTime, Utc};
use emomap_core::model::{Experiment, Invitation, Picture};
use emomap_core::platform::{ExperimentDraft, NewParticipant};
use emomap_core::TagMapDoc;
use reqwest::blocking::{multipart, Client, RequestBuilder, Response};
use serde::de::DeserializeOwned;
use serde_json::{json, Value};

use crate::backend::Backend;

/// An error response from the server.
#[derive(Debug, thiserror::Error)]
#[error("{code}: {message} (HTTP {status})")]
pub struct RemoteError {
    pub status: u16,
    pub code: String,
    pub message: String,
}

pub struct Remote {
    base: String,
    client: Client,
    token: String,
}

fn check(res: Response) -> anyhow::Result<Response> {
    let status = res.status();
    if status.is_success() {
        return Ok(res);
    }
    let body: Value = res.json().unwrap_or(Value::Null);
    let err = &body["error"];
    Err(RemoteError {
        status: status.as_u16(),
        code: err["code"].as_str().unwrap_or("http_error").to_string(),
        message: err["message"]
            .as_str()
            .unwrap_or_else(|| status.canonical_reason().unwrap_or("request failed"))
            .to_string(),
    }
    .into())
}

impl Remote {
    pub fn login(base: &str, username: &str, password: &str) -> anyhow::Result<Self> {
        let base = base.trim_end_matches('/').to_string();
        let client = Client::builder().build()?;
        let res = client
            .post(format!("{base}/api/login"))
            .json(&json!({ "username": username, "password": password }))
            .send()
            .with_context(|| format!("cannot reach {base}"))?;
        let login: Value = check(res)?.json()?;
        let token = login["token"]
            .as_str()
            .context("login response without a token")?
            .to_string();
        Ok(Self { base, client, token })
    }

    fn request(&self, method: reqwest::Method, path: &str) -> RequestBuilder {
        self.client
            .request(method, format!("{}{path}", self.base))
            .bearer_auth(&self.token)
    }

    fn send(&self, req: RequestBuilder) -> anyhow::Result<Response> {
        check(req.send().with_context(|| format!("cannot reach {}", self.base))?)
    }

    fn json<T: DeserializeOwned>(&self, req: RequestBuilder) -> anyhow::Result<T> {
        Ok(self.send(req)?.json()?)
    }

    fn text(&self, req: RequestBuilder) -> anyhow::Result<String> {
        Ok(self.send(req)?.text()?)
    }

    fn post(&self, path: &str) -> RequestBuilder {
        self.request(reqwest::Method::POST, path)
    }

    fn get(&self, path: &str) -> RequestBuilder {
        self.request(reqwest::Method::GET, path)
    }
}

impl Backend for Remote {
    fn create(&self, draft: ExperimentDraft) -> anyhow::Result<Experiment> {
        self.json(self.post("/api/experiments").json(&draft))
    }

    fn list(&self) -> anyhow::Result<Vec<Experiment>> {
        self.json(self.get("/api/experiments"))
    }

    fn activate(&self, id: &str) -> anyhow::Result<Experiment> {
        self.json(self.post(&format!("/api/experiments/{id}/activate")))
    }

    fn finish(&self, id: &str) -> anyhow::Result<Experiment> {
        self.json(self.post(&format!("/api/experiments/{id}/finish")))
    }

    fn add_pictures(&self, id: &str, images: Vec<(String, Vec<u8>)>) -> anyhow::Result<Vec<Picture>> {
        let mut form = multipart::Form::new();
        for (name, bytes) in images {
            form = form.part("image", multipart::Part::bytes(bytes).file_name(name));
        }
        self.json(self.post(&format!("/api/experiments/{id}/pictures")).multipart(form))
    }

    fn invite(
        &self,
        experiment_id: &str,
        participant_id: &str,
        expires_at: Option<DateTime<Utc>>,
    ) -> anyhow::Result<Invitation> {
        self.json(self.post("/api/invitations").json(&json!({
            "experiment_id": experiment_id,
            "participant_id": participant_id,
            "expires_at": expires_at,
        })))
    }

    fn add_participant(&self, new: NewParticipant) -> anyhow::Result<String> {
        let v: Value = self.json(self.post("/api/participants").json(&new))?;
        Ok(v["id"].as_str().unwrap_or_default().to_string())
    }

    fn import_tag_map(&self, doc: TagMapDoc) -> anyhow::Result<String> {
        let v: Value = self.json(self.post("/api/tag-maps").json(&doc))?;
        Ok(v["id"].as_str().unwrap_or_default().to_string())
    }

    fn export(&self, id: &str) -> anyhow::Result<String> {
        self.text(self.get(&format!("/api/experiments/{id}/export.csv")))
    }

    fn map(&self, id: &str, cell_size_deg: f64) -> anyhow::Result<String> {
        self.text(
            self.get(&format!("/api/experiments/{id}/map"))
                .query(&[("cell_size", cell_size_deg)]),
        )
    }
}
