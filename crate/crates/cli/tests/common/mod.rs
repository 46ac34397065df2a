#![allow(dead_code)]

use std::io::{BufRead, BufReader, Cursor};
use std::path::Path;
use std::process::{Child, Command, Output, Stdio};
use std::sync::mpsc;
use std::time::Duration;

use reqwest::blocking::{multipart, Client, RequestBuilder, Response};
use serde_json::{json, Value};

pub const RESEARCHER: (&str, &str) = ("ada", "lovelace");

pub fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_emomap")
}

/// Runs the CLI against `store` with a clean environment.
pub fn emomap(store: &Path, args: &[&str]) -> Output {
    command(store).args(args).output().expect("spawn emomap")
}

pub fn command(store: &Path) -> Command {
    let mut cmd = Command::new(bin());
    for var in [
        "EMOMAP_STORE",
        "EMOMAP_BIND",
        "EMOMAP_BASE_URL",
        "EMOMAP_MAX_IMAGE_BYTES",
        "EMOMAP_SERVER",
        "EMOMAP_USER",
        "EMOMAP_PASSWORD",
    ] {
        cmd.env_remove(var);
    }
    cmd.arg("--store").arg(store);
    cmd
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

pub fn ok(o: Output) -> String {
    assert!(o.status.success(), "exit {:?}: {}", o.status.code(), stderr(&o));
    stdout(&o)
}

pub fn png(seed: u8) -> Vec<u8> {
    let img = image::RgbImage::from_fn(8, 8, |x, y| image::Rgb([seed, x as u8 * 16, y as u8 * 16]));
    let mut out = Cursor::new(Vec::new());
    img.write_to(&mut out, image::ImageFormat::Png).unwrap();
    out.into_inner()
}

/// A `serve` child process, killed on drop.
pub struct Server {
    pub child: Child,
    pub base: String,
}

impl Server {
    pub fn start(store: &Path) -> Server {
        Self::try_start(store, "127.0.0.1:0").unwrap_or_else(|e| panic!("{e}"))
    }

    pub fn try_start(store: &Path, bind: &str) -> Result<Server, String> {
        let mut child = command(store)
            .args(["serve", "--bind", bind])
            .env("RUST_LOG", "warn")
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .expect("spawn emomap serve");
        let out = child.stdout.take().unwrap();
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            let mut line = String::new();
            let _ = BufReader::new(out).read_line(&mut line);
            let _ = tx.send(line);
        });
        let line = rx.recv_timeout(Duration::from_secs(30)).unwrap_or_default();
        match line.trim().strip_prefix("listening on ") {
            Some(base) => Ok(Server {
                child,
                base: base.to_string(),
            }),
            None => {
                let status = child.wait().ok().and_then(|s| s.code());
                let mut err = String::new();
                if let Some(mut e) = child.stderr.take() {
                    use std::io::Read;
                    let _ = e.read_to_string(&mut err);
                }
                Err(format!("serve exited with {status:?}: {err}"))
            }
        }
    }

    /// SIGKILL: no chance to flush or clean up.
    pub fn kill(mut self) {
        self.child.kill().unwrap();
        self.child.wait().unwrap();
    }

    /// SIGTERM and wait; returns the exit code.
    pub fn terminate(mut self) -> Option<i32> {
        Command::new("kill")
            .args(["-TERM", &self.child.id().to_string()])
            .status()
            .unwrap();
        self.child.wait().unwrap().code()
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Minimal HTTP client for the API.
pub struct Api {
    pub base: String,
    pub client: Client,
    pub token: Option<String>,
}

impl Api {
    pub fn new(base: &str) -> Self {
        Self {
            base: base.to_string(),
            client: Client::new(),
            token: None,
        }
    }

    pub fn researcher(base: &str) -> Self {
        let mut api = Self::new(base);
        let r = api.post("/api/login").json(&json!({"username": RESEARCHER.0, "password": RESEARCHER.1})).send().unwrap();
        assert_eq!(r.status(), 200);
        api.token = Some(r.json::<Value>().unwrap()["token"].as_str().unwrap().to_string());
        api
    }

    pub fn with_token(&self, token: &str) -> Self {
        Self {
            base: self.base.clone(),
            client: self.client.clone(),
            token: Some(token.to_string()),
        }
    }

    fn req(&self, method: reqwest::Method, path: &str) -> RequestBuilder {
        let r = self.client.request(method, format!("{}{path}", self.base));
        match &self.token {
            Some(t) => r.bearer_auth(t),
            None => r,
        }
    }

    pub fn get(&self, path: &str) -> RequestBuilder {
        self.req(reqwest::Method::GET, path)
    }

    pub fn post(&self, path: &str) -> RequestBuilder {
        self.req(reqwest::Method::POST, path)
    }

    pub fn patch(&self, path: &str) -> RequestBuilder {
        self.req(reqwest::Method::PATCH, path)
    }

    pub fn upload(&self, experiment: &str, images: &[Vec<u8>]) -> Response {
        let mut form = multipart::Form::new();
        for (i, b) in images.iter().enumerate() {
            form = form.part("image", multipart::Part::bytes(b.clone()).file_name(format!("{i}.png")));
        }
        self.post(&format!("/api/experiments/{experiment}/pictures")).multipart(form).send().unwrap()
    }
}

pub fn error_code(r: Response) -> (u16, String) {
    let status = r.status().as_u16();
    let v: Value = r.json().unwrap_or(Value::Null);
    (status, v["error"]["code"].as_str().unwrap_or_default().to_string())
}
