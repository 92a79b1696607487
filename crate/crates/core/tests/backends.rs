use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::thread;

use eae_core::data::parse_dataset;
use eae_core::parser_client::{fetch_amr, AmrCache, BackendDescriptor, ParseRequest, ParserError};

/// Serves `replies` in order, one connection each, and returns the request
/// bodies it received.
fn serve(replies: Vec<(u16, &'static str)>) -> (String, thread::JoinHandle<Vec<String>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/parse", listener.local_addr().unwrap());
    let handle = thread::spawn(move || {
        let mut bodies = Vec::new();
        for (status, body) in replies {
            let (mut stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut len = 0;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if line == "\r\n" || line.is_empty() {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
            }
            let mut buf = vec![0; len];
            reader.read_exact(&mut buf).unwrap();
            bodies.push(String::from_utf8(buf).unwrap());
            let reply = format!("HTTP/1.1 {status} X\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}", body.len());
            stream.write_all(reply.as_bytes()).unwrap();
        }
        bodies
    });
    (url, handle)
}

fn request() -> ParseRequest {
    let inst = parse_dataset(r#"{"doc_id":"p1","tokens":["they","appeal","."],"trigger":{"start":1,"end":2,"event_type":"Justice:Appeal"}}"#)
        .unwrap()
        .remove(0);
    ParseRequest::for_instance(&inst)
}

#[test]
fn http_backend_parses_and_caches() {
    let (url, server) = serve(vec![(200, "(a / appeal-01 :ARG0 (t / they))")]);
    let backend = BackendDescriptor::Http { url }.build().unwrap();
    let dir = tempfile::tempdir().unwrap();
    let cache = AmrCache::open(dir.path()).unwrap();
    let g = fetch_amr(&request(), &cache, Some(backend.as_ref())).unwrap();
    assert_eq!(g.concept_of(g.root()), Some("appeal-01"));
    let again = fetch_amr(&request(), &cache, None).unwrap();
    assert!(again.is_isomorphic(&g));
    let bodies = server.join().unwrap();
    let sent: serde_json::Value = serde_json::from_str(&bodies[0]).unwrap();
    assert_eq!(sent["text"], "they appeal .");
}

#[test]
fn http_errors_and_bad_penman_are_reported() {
    let (url, server) = serve(vec![(500, "boom"), (200, "(a / appeal-01")]);
    let backend = BackendDescriptor::Http { url }.build().unwrap();
    let dir = tempfile::tempdir().unwrap();
    let cache = AmrCache::open(dir.path()).unwrap();
    assert!(matches!(fetch_amr(&request(), &cache, Some(backend.as_ref())), Err(ParserError::Backend { .. })));
    assert!(matches!(fetch_amr(&request(), &cache, Some(backend.as_ref())), Err(ParserError::InvalidBackendOutput { .. })));
    assert!(!cache.contains("p1"));
    server.join().unwrap();
}
