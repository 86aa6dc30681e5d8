//! Minimal scripted HTTP/1.1 server for exercising the endpoint client.

#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::{Arc, Mutex};
use std::thread;

#[derive(Debug, Clone)]
pub struct Recorded {
    pub method: String,
    pub path: String,
    pub headers: Vec<(String, String)>,
    pub body: String,
}

impl Recorded {
    pub fn header(&self, name: &str) -> Option<&str> {
        self.headers
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    }
}

pub enum Reply {
    Json(u16, String),
    /// Close the connection without answering.
    Hangup,
}

type Handler = dyn Fn(&Recorded, usize) -> Reply + Send + Sync;

pub struct MockServer {
    pub url: String,
    requests: Arc<Mutex<Vec<Recorded>>>,
}

impl MockServer {
    /// Serves `handler(request, index)` for every request, index counting
    /// from 0 in arrival order.
    pub fn start(handler: impl Fn(&Recorded, usize) -> Reply + Send + Sync + 'static) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}", listener.local_addr().unwrap());
        let requests = Arc::new(Mutex::new(Vec::new()));
        let handler: Arc<Handler> = Arc::new(handler);
        let log = requests.clone();
        thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(stream) = stream else { break };
                let log = log.clone();
                let handler = handler.clone();
                thread::spawn(move || serve(stream, &log, &*handler));
            }
        });
        MockServer { url, requests }
    }

    /// Replies from a fixed script; the last entry repeats.
    pub fn scripted(script: Vec<Reply>) -> Self {
        let script: Vec<Arc<Reply>> = script.into_iter().map(Arc::new).collect();
        Self::start(move |_, i| match &*script[i.min(script.len() - 1)] {
            Reply::Json(s, b) => Reply::Json(*s, b.clone()),
            Reply::Hangup => Reply::Hangup,
        })
    }

    pub fn requests(&self) -> Vec<Recorded> {
        self.requests.lock().unwrap().clone()
    }
}

fn serve(stream: TcpStream, log: &Mutex<Vec<Recorded>>, handler: &Handler) {
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut line = String::new();
    if reader.read_line(&mut line).unwrap_or(0) == 0 {
        return;
    }
    let mut parts = line.split_whitespace();
    let method = parts.next().unwrap_or_default().to_string();
    let path = parts.next().unwrap_or_default().to_string();
    let mut headers = Vec::new();
    loop {
        let mut h = String::new();
        if reader.read_line(&mut h).unwrap_or(0) == 0 || h == "\r\n" {
            break;
        }
        if let Some((k, v)) = h.trim_end().split_once(':') {
            headers.push((k.trim().to_string(), v.trim().to_string()));
        }
    }
    let len = headers
        .iter()
        .find(|(k, _)| k.eq_ignore_ascii_case("content-length"))
        .and_then(|(_, v)| v.parse::<usize>().ok())
        .unwrap_or(0);
    let mut body = vec![0; len];
    reader.read_exact(&mut body).unwrap();
    let rec = Recorded { method, path, headers, body: String::from_utf8(body).unwrap() };
    let index = {
        let mut l = log.lock().unwrap();
        l.push(rec.clone());
        l.len() - 1
    };
    match handler(&rec, index) {
        Reply::Hangup => {}
        Reply::Json(status, body) => {
            let mut s = stream;
            let _ = write!(
                s,
                "HTTP/1.1 {status} Mock\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            );
        }
    }
}

/// A chat-completion response body listing `texts` in order.
pub fn completion(texts: &[&str]) -> String {
    let choices: Vec<serde_json::Value> = texts
        .iter()
        .map(|t| serde_json::json!({"index": 0, "message": {"role": "assistant", "content": t}}))
        .collect();
    serde_json::json!({ "choices": choices }).to_string()
}
