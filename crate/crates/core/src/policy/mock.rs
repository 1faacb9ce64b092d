//! A tiny HTTP endpoint that replays canned policy responses in order.
//! Used to exercise [`super::ExternalPolicy`] without a model server.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MockReply {
    /// 200 with this body.
    Body(String),
    /// Bare status code with an empty body.
    Status(u16),
    /// Close the connection without answering.
    Hangup,
}

#[derive(Default)]
struct Shared {
    replies: Vec<MockReply>,
    next: usize,
    received: Vec<String>,
}

pub struct MockPolicyServer {
    addr: SocketAddr,
    shared: Arc<Mutex<Shared>>,
    stop: Arc<AtomicBool>,
    handle: Option<JoinHandle<()>>,
}

/// Served once the scripted replies run out.
pub const EXHAUSTED_BODY: &str = r#"{"answers": [], "exploration_paths": []}"#;

impl MockPolicyServer {
    pub fn start(replies: Vec<MockReply>) -> std::io::Result<Self> {
        let listener = TcpListener::bind("127.0.0.1:0")?;
        let addr = listener.local_addr()?;
        let shared = Arc::new(Mutex::new(Shared {
            replies,
            ..Default::default()
        }));
        let stop = Arc::new(AtomicBool::new(false));
        let handle = {
            let shared = Arc::clone(&shared);
            let stop = Arc::clone(&stop);
            std::thread::spawn(move || {
                for conn in listener.incoming() {
                    if stop.load(Ordering::SeqCst) {
                        break;
                    }
                    if let Ok(stream) = conn {
                        let _ = serve(stream, &shared);
                    }
                }
            })
        };
        Ok(Self {
            addr,
            shared,
            stop,
            handle: Some(handle),
        })
    }

    pub fn url(&self) -> String {
        format!("http://{}/act", self.addr)
    }

    /// Request bodies received so far, in arrival order.
    pub fn received(&self) -> Vec<String> {
        self.shared.lock().unwrap().received.clone()
    }
}

impl Drop for MockPolicyServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        let _ = TcpStream::connect(self.addr);
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

fn serve(mut stream: TcpStream, shared: &Mutex<Shared>) -> std::io::Result<()> {
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut content_length = 0usize;
    let mut line = String::new();
    loop {
        line.clear();
        if reader.read_line(&mut line)? == 0 {
            return Ok(());
        }
        let trimmed = line.trim_end();
        if trimmed.is_empty() {
            break;
        }
        if let Some((k, v)) = trimmed.split_once(':') {
            if k.eq_ignore_ascii_case("content-length") {
                content_length = v.trim().parse().unwrap_or(0);
            }
        }
    }
    let mut body = vec![0; content_length];
    reader.read_exact(&mut body)?;

    let reply = {
        let mut s = shared.lock().unwrap();
        s.received.push(String::from_utf8_lossy(&body).into_owned());
        let r = s.replies.get(s.next).cloned();
        s.next += 1;
        r.unwrap_or_else(|| MockReply::Body(EXHAUSTED_BODY.to_string()))
    };
    let (status, text) = match reply {
        MockReply::Body(b) => (200, b),
        MockReply::Status(code) => (code, String::new()),
        MockReply::Hangup => return Ok(()),
    };
    write!(
        stream,
        "HTTP/1.1 {status} X\r\nContent-Type: text/plain\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{text}",
        text.len()
    )?;
    stream.flush()
}
