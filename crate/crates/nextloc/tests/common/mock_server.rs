//! A minimal scripted chat-completion endpoint for contract tests.

use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use nextloc::manifest::sha256_hex;

/// What the server does with one request, keyed on the prompt content.
#[derive(Clone)]
pub enum Behavior {
    /// Echo a digest of the prompt.
    Echo,
    /// Fail each distinct prompt with `status` until its attempt counter
    /// exceeds `until_attempt`, then echo.
    FlakyUntil { status: u16, until_attempt: usize },
    /// Permanent failure for prompts containing the marker; echo otherwise.
    PoisonMarker { marker: String, status: u16 },
    /// Unconditional status (auth tests).
    Always(u16),
}

pub struct MockServer {
    pub url: String,
    hits: Arc<Mutex<Vec<Instant>>>,
    stop: Arc<AtomicBool>,
    handle: Option<std::thread::JoinHandle<()>>,
}

impl MockServer {
    pub fn start(behavior: Behavior) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        listener.set_nonblocking(true).unwrap();
        let hits = Arc::new(Mutex::new(Vec::new()));
        let stop = Arc::new(AtomicBool::new(false));
        let attempts: Arc<Mutex<std::collections::HashMap<String, usize>>> =
            Arc::new(Mutex::new(std::collections::HashMap::new()));

        let hits2 = hits.clone();
        let stop2 = stop.clone();
        let handle = std::thread::spawn(move || {
            while !stop2.load(Ordering::SeqCst) {
                match listener.accept() {
                    Ok((stream, _)) => {
                        let behavior = behavior.clone();
                        let hits = hits2.clone();
                        let attempts = attempts.clone();
                        std::thread::spawn(move || handle_conn(stream, behavior, hits, attempts));
                    }
                    Err(ref e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                        std::thread::sleep(Duration::from_millis(2));
                    }
                    Err(_) => break,
                }
            }
        });
        MockServer {
            url: format!("http://{addr}/v1/chat/completions"),
            hits,
            stop,
            handle: Some(handle),
        }
    }

    pub fn hit_count(&self) -> usize {
        self.hits.lock().unwrap().len()
    }

    pub fn hit_times(&self) -> Vec<Instant> {
        self.hits.lock().unwrap().clone()
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

/// The scripted answer for a prompt: a digest binding the reply to exactly
/// the request it answered.
pub fn echo_answer(prompt: &str) -> String {
    format!("answer-for:{}", &sha256_hex(prompt.as_bytes())[..16])
}

fn handle_conn(
    mut stream: TcpStream,
    behavior: Behavior,
    hits: Arc<Mutex<Vec<Instant>>>,
    attempts: Arc<Mutex<std::collections::HashMap<String, usize>>>,
) {
    let mut buf = Vec::new();
    let mut tmp = [0u8; 4096];
    let header_end;
    loop {
        match stream.read(&mut tmp) {
            Ok(0) => return,
            Ok(n) => {
                buf.extend_from_slice(&tmp[..n]);
                if let Some(pos) = find_header_end(&buf) {
                    header_end = pos;
                    break;
                }
            }
            Err(_) => return,
        }
    }
    let headers = String::from_utf8_lossy(&buf[..header_end]).to_string();
    let content_length: usize = headers
        .lines()
        .find_map(|l| {
            let l = l.to_ascii_lowercase();
            l.strip_prefix("content-length:")
                .map(|v| v.trim().parse().unwrap_or(0))
        })
        .unwrap_or(0);
    while buf.len() < header_end + 4 + content_length {
        match stream.read(&mut tmp) {
            Ok(0) => break,
            Ok(n) => buf.extend_from_slice(&tmp[..n]),
            Err(_) => return,
        }
    }
    hits.lock().unwrap().push(Instant::now());
    let body = String::from_utf8_lossy(&buf[header_end + 4..]).to_string();
    let content = serde_json::from_str::<serde_json::Value>(&body)
        .ok()
        .and_then(|v| {
            v.pointer("/messages/0/content")
                .and_then(|c| c.as_str())
                .map(|s| s.to_string())
        })
        .unwrap_or_default();

    let status = match &behavior {
        Behavior::Echo => 200,
        Behavior::Always(s) => *s,
        Behavior::PoisonMarker { marker, status } => {
            if content.contains(marker) {
                *status
            } else {
                200
            }
        }
        Behavior::FlakyUntil {
            status,
            until_attempt,
        } => {
            let mut map = attempts.lock().unwrap();
            let n = map.entry(sha256_hex(content.as_bytes())).or_insert(0);
            *n += 1;
            if *n <= *until_attempt {
                *status
            } else {
                200
            }
        }
    };

    let response_body = if status == 200 {
        serde_json::json!({
            "choices": [{"message": {"role": "assistant", "content": echo_answer(&content)}}]
        })
        .to_string()
    } else {
        "{\"error\": \"scripted failure\"}".to_string()
    };
    let reason = match status {
        200 => "OK",
        401 => "Unauthorized",
        429 => "Too Many Requests",
        _ => "Internal Server Error",
    };
    let _ = write!(
        stream,
        "HTTP/1.1 {status} {reason}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{response_body}",
        response_body.len()
    );
}

fn find_header_end(buf: &[u8]) -> Option<usize> {
    buf.windows(4).position(|w| w == b"\r\n\r\n")
}
