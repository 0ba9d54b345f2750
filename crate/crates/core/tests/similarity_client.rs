use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use t2i_harness_core::bias::{classify_gender, Gender, HttpSimilarityClient, SimilarityClient, SimilarityConfig};
use t2i_harness_core::Error;

enum Behavior {
    Hang,
    Status(u16),
    Body(&'static str),
}

/// Minimal HTTP/1.1 responder. Returns the URL and a connection counter.
fn stub(behavior: Behavior) -> (String, Arc<AtomicUsize>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/similarity", listener.local_addr().unwrap());
    let hits = Arc::new(AtomicUsize::new(0));
    let counter = hits.clone();
    let behavior = Arc::new(behavior);
    thread::spawn(move || {
        for stream in listener.incoming().flatten() {
            counter.fetch_add(1, Ordering::SeqCst);
            let behavior = behavior.clone();
            thread::spawn(move || handle(stream, &behavior));
        }
    });
    (url, hits)
}

fn handle(stream: TcpStream, behavior: &Behavior) {
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut len = 0usize;
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line).unwrap_or(0) == 0 {
            return;
        }
        let lower = line.to_ascii_lowercase();
        if let Some(v) = lower.strip_prefix("content-length:") {
            len = v.trim().parse().unwrap();
        }
        if line == "\r\n" {
            break;
        }
    }
    let mut body = vec![0; len];
    reader.read_exact(&mut body).unwrap();
    let req: serde_json::Value = serde_json::from_slice(&body).unwrap();
    assert!(req["image"].is_string());
    assert_eq!(req["texts"].as_array().unwrap().len(), 2);

    let mut stream = stream;
    let (status, payload) = match behavior {
        Behavior::Hang => {
            thread::sleep(Duration::from_secs(5));
            return;
        }
        Behavior::Status(code) => (*code, "{}"),
        Behavior::Body(b) => (200, *b),
    };
    let _ = write!(
        stream,
        "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{payload}",
        payload.len()
    );
}

fn image_file() -> tempfile::NamedTempFile {
    let mut f = tempfile::NamedTempFile::new().unwrap();
    f.write_all(b"\x89PNG fake bytes").unwrap();
    f
}

fn config(url: String) -> SimilarityConfig {
    SimilarityConfig {
        timeout_ms: 200,
        retries: 2,
        ..SimilarityConfig::new(url)
    }
}

#[test]
fn timeout_exhausts_retries() {
    let (url, hits) = stub(Behavior::Hang);
    let client = HttpSimilarityClient::new(config(url)).unwrap();
    let img = image_file();
    let start = Instant::now();
    let err = classify_gender(img.path(), &client).unwrap_err();
    assert!(start.elapsed() < Duration::from_secs(4));
    match &err {
        Error::Transport { attempts, .. } => assert_eq!(*attempts, 3),
        other => panic!("unexpected {other:?}"),
    }
    assert!(err.to_string().contains('3'), "{err}");
    assert_eq!(hits.load(Ordering::SeqCst), 3);
}

#[test]
fn server_errors_are_retried() {
    let (url, hits) = stub(Behavior::Status(503));
    let client = HttpSimilarityClient::new(config(url)).unwrap();
    let img = image_file();
    assert!(matches!(
        client.scores(img.path(), &["a", "b"]),
        Err(Error::Transport { attempts: 3, .. })
    ));
    assert_eq!(hits.load(Ordering::SeqCst), 3);
}

#[test]
fn client_errors_are_not_retried() {
    let (url, hits) = stub(Behavior::Status(400));
    let client = HttpSimilarityClient::new(config(url)).unwrap();
    let img = image_file();
    assert!(client.scores(img.path(), &["a", "b"]).is_err());
    assert_eq!(hits.load(Ordering::SeqCst), 1);
}

#[test]
fn malformed_and_valid_bodies() {
    let img = image_file();
    let (url, _) = stub(Behavior::Body(r#"{"scores": "nope"}"#));
    let client = HttpSimilarityClient::new(config(url)).unwrap();
    assert!(matches!(classify_gender(img.path(), &client), Err(Error::MalformedResponse(_))));

    let (url, _) = stub(Behavior::Body(r#"{"scores": [0.1]}"#));
    let client = HttpSimilarityClient::new(config(url)).unwrap();
    assert!(matches!(classify_gender(img.path(), &client), Err(Error::MalformedResponse(_))));

    let (url, _) = stub(Behavior::Body(r#"{"scores": [0.18, 0.27]}"#));
    let client = HttpSimilarityClient::new(config(url)).unwrap();
    assert_eq!(classify_gender(img.path(), &client).unwrap(), Gender::Female);
}

#[test]
fn zero_timeout_rejected() {
    let cfg = SimilarityConfig {
        timeout_ms: 0,
        ..SimilarityConfig::new("http://127.0.0.1:9")
    };
    assert!(HttpSimilarityClient::new(cfg).is_err());
}
