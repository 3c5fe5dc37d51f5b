//! A minimal HTTP/1.1 server standing in for the inference sidecar.

#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;

use ponte::backend::{mock_embed, WireRequest, WireResponse};
use ponte::prompting::PromptTemplate;

pub type Handler = dyn Fn(&WireRequest) -> (u16, String) + Send + Sync;

#[derive(Debug, Clone)]
pub struct Seen {
    pub method: String,
    pub path: String,
    pub content_type: Option<String>,
    pub body: String,
}

pub struct FakeSidecar {
    pub url: String,
    pub seen: Arc<Mutex<Vec<Seen>>>,
    pub peak: Arc<AtomicUsize>,
}

impl FakeSidecar {
    pub fn start(handler: impl Fn(&WireRequest) -> (u16, String) + Send + Sync + 'static) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").expect("bind loopback");
        let url = format!("http://{}", listener.local_addr().unwrap());
        let handler: Arc<Handler> = Arc::new(handler);
        let seen = Arc::new(Mutex::new(Vec::new()));
        let in_flight = Arc::new(AtomicUsize::new(0));
        let peak = Arc::new(AtomicUsize::new(0));
        {
            let (seen, in_flight, peak) = (seen.clone(), in_flight.clone(), peak.clone());
            thread::spawn(move || {
                for stream in listener.incoming() {
                    let Ok(stream) = stream else { continue };
                    let (handler, seen, in_flight, peak) =
                        (handler.clone(), seen.clone(), in_flight.clone(), peak.clone());
                    thread::spawn(move || {
                        // counted only while the handler runs, so a finished
                        // request never overlaps the client's next one
                        let counted = |req: &WireRequest| {
                            let now = in_flight.fetch_add(1, Ordering::SeqCst) + 1;
                            peak.fetch_max(now, Ordering::SeqCst);
                            let out = handler(req);
                            in_flight.fetch_sub(1, Ordering::SeqCst);
                            out
                        };
                        serve(stream, &counted, &seen);
                    });
                }
            });
        }
        Self { url, seen, peak }
    }

    /// Behaves like a real sidecar for model `model_id`, backed by the mock.
    pub fn echo(model_id: &'static str, dim: usize) -> Self {
        Self::start(move |req| (200, mock_response(req, model_id, dim)))
    }

    pub fn requests(&self) -> Vec<Seen> {
        self.seen.lock().unwrap().clone()
    }

    pub fn count(&self) -> usize {
        self.seen.lock().unwrap().len()
    }
}

pub fn mock_response(req: &WireRequest, model_id: &str, dim: usize) -> String {
    let template = PromptTemplate::new("raw", "{text}\"").unwrap();
    let text = req.prompt.strip_suffix('"').unwrap_or(&req.prompt);
    let prompt = template.render(text, "").unwrap();
    let r = mock_embed(&prompt, dim, 0).unwrap();
    let resp = WireResponse {
        embedding: r.embedding.as_slice().iter().map(|&v| f64::from(v)).collect(),
        generated_word: req.generate_word.then(|| r.generated_word.unwrap()),
        model_id: model_id.to_owned(),
        hidden_size: dim,
    };
    serde_json::to_string(&resp).unwrap()
}

fn serve(stream: TcpStream, handler: &dyn Fn(&WireRequest) -> (u16, String), seen: &Mutex<Vec<Seen>>) {
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut request_line = String::new();
    if reader.read_line(&mut request_line).unwrap_or(0) == 0 {
        return;
    }
    let mut parts = request_line.split_whitespace();
    let method = parts.next().unwrap_or_default().to_owned();
    let path = parts.next().unwrap_or_default().to_owned();

    let mut length = 0usize;
    let mut content_type = None;
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line).unwrap_or(0) == 0 {
            return;
        }
        let line = line.trim_end();
        if line.is_empty() {
            break;
        }
        if let Some((name, value)) = line.split_once(':') {
            match name.trim().to_ascii_lowercase().as_str() {
                "content-length" => length = value.trim().parse().unwrap_or(0),
                "content-type" => content_type = Some(value.trim().to_owned()),
                _ => {}
            }
        }
    }
    let mut body = vec![0u8; length];
    if reader.read_exact(&mut body).is_err() {
        return;
    }
    let body = String::from_utf8_lossy(&body).into_owned();
    seen.lock().unwrap().push(Seen {
        method: method.clone(),
        path: path.clone(),
        content_type,
        body: body.clone(),
    });

    let (status, payload) = if method != "POST" || path != "/embed" {
        (404, r#"{"error":"not found"}"#.to_owned())
    } else {
        match serde_json::from_str::<WireRequest>(&body) {
            Ok(req) => handler(&req),
            Err(e) => (400, format!(r#"{{"error":"bad request: {e}"}}"#)),
        }
    };
    let reason = if status == 200 { "OK" } else { "Error" };
    let response = format!(
        "HTTP/1.1 {status} {reason}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{payload}",
        payload.len()
    );
    let mut stream = stream;
    let _ = stream.write_all(response.as_bytes());
    let _ = stream.flush();
}
