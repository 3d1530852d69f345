//! The HTTP inpainting client against a scripted in-process server.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use splatinsert::camera::{make_trajectory, ArcSide, Intrinsics, TrajectorySpec};
use splatinsert::imageio::{decode_png_image, encode_png8};
use splatinsert::pipeline::protocol::{decode_request, encode_response, WireRequest, WireResponse, HEALTH_PATH, INPAINT_PATH};
use splatinsert::pipeline::{extract_view_bundles, inpaint, seed_coarse_prior, Endpoint, HttpInpainter, InpaintRequest, MockInpainter};
use splatinsert::synthetic::{room_bbox, room_scene};
use splatinsert::Error;

type Handler = dyn Fn(usize, &str, &str) -> (u16, String) + Send + Sync;

/// Serves `handler(hit, path, body)` on a random local port, one request per
/// connection.
fn serve(handler: Box<Handler>) -> (String, Arc<AtomicUsize>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    let hits = Arc::new(AtomicUsize::new(0));
    let counter = hits.clone();
    std::thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { continue };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut line = String::new();
            reader.read_line(&mut line).unwrap();
            let path = line.split_whitespace().nth(1).unwrap_or("").to_string();
            let mut length = 0;
            loop {
                let mut header = String::new();
                reader.read_line(&mut header).unwrap();
                if header.trim().is_empty() {
                    break;
                }
                if let Some((k, v)) = header.split_once(':') {
                    if k.eq_ignore_ascii_case("content-length") {
                        length = v.trim().parse().unwrap();
                    }
                }
            }
            let mut body = vec![0; length];
            reader.read_exact(&mut body).unwrap();
            let hit = counter.fetch_add(1, Ordering::SeqCst);
            let (status, text) = handler(hit, &path, &String::from_utf8(body).unwrap());
            let response = format!(
                "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{text}",
                text.len()
            );
            let _ = stream.write_all(response.as_bytes());
        }
    });
    (url, hits)
}

fn client(url: &str) -> HttpInpainter {
    let mut c = HttpInpainter::new(url);
    c.backoff = Duration::from_millis(1);
    c.timeout = Duration::from_secs(30);
    c
}

fn request() -> InpaintRequest {
    let bbox = room_bbox();
    let mut spec = TrajectorySpec::new(ArcSide::Left, Intrinsics::from_fov(20, 16, 60.0));
    spec.n_views = 3;
    let cams = make_trajectory(&bbox, &spec).unwrap();
    let coarse = seed_coarse_prior(&bbox, 30, 0).unwrap();
    let bundles = extract_view_bundles(&room_scene(0), &coarse, &bbox, &cams, &Default::default()).unwrap();
    InpaintRequest::new(bundles, "a toy", 11).unwrap()
}

/// What a conforming server running the mock answers.
fn mock_answer(body: &str) -> WireResponse {
    let wire: WireRequest = serde_json::from_str(body).unwrap();
    let req = decode_request(&wire).unwrap();
    let images = MockInpainter::new(room_bbox()).inpaint(&req.bundles, &req.prompt, req.seed).unwrap();
    encode_response(req.seed, &images).unwrap()
}

#[test]
fn health_reports_status() {
    let (url, hits) = serve(Box::new(|_, path, _| {
        assert_eq!(path, HEALTH_PATH);
        (200, r#"{"status":"ok","version":"test-1"}"#.into())
    }));
    let h = client(&url).health().unwrap();
    assert_eq!((h.status.as_str(), h.version.as_str()), ("ok", "test-1"));
    assert_eq!(hits.load(Ordering::SeqCst), 1);
}

#[test]
fn remote_mock_matches_local_mock_on_the_wire_inputs() {
    let (url, _) = serve(Box::new(|_, path, body| {
        assert_eq!(path, INPAINT_PATH);
        (200, serde_json::to_string(&mock_answer(body)).unwrap())
    }));
    let req = request();
    let resp = inpaint(&req, &Endpoint::Http(client(&url))).unwrap();
    assert_eq!(resp.images.len(), req.bundles.len());

    // The server sees 8-bit backgrounds and answers with 8-bit PNGs; inside
    // each mask the result must equal that, outside it the exact background.
    let wire = splatinsert::pipeline::protocol::encode_request(&req).unwrap();
    let seen = decode_request(&wire).unwrap();
    let local = MockInpainter::new(room_bbox()).inpaint(&seen.bundles, "a toy", 11).unwrap();
    for ((img, b), l) in resp.images.iter().zip(&req.bundles).zip(&local) {
        let quantized = decode_png_image(&encode_png8(l).unwrap()).unwrap();
        assert_eq!(*img, b.background.composite_inside(&quantized, &b.mask));
    }
}

#[test]
fn server_errors_are_retried_then_succeed() {
    let (url, hits) = serve(Box::new(|hit, _, body| {
        if hit < 2 {
            (503, "busy".into())
        } else {
            (200, serde_json::to_string(&mock_answer(body)).unwrap())
        }
    }));
    assert!(inpaint(&request(), &Endpoint::Http(client(&url))).is_ok());
    assert_eq!(hits.load(Ordering::SeqCst), 3);
}

#[test]
fn persistent_server_errors_become_transport_errors() {
    let (url, hits) = serve(Box::new(|_, _, _| (500, "boom".into())));
    let err = inpaint(&request(), &Endpoint::Http(client(&url))).unwrap_err();
    assert!(matches!(err, Error::Transport { attempts: 3, .. }), "{err}");
    assert!(err.is_retriable());
    assert_eq!(hits.load(Ordering::SeqCst), 3);
}

#[test]
fn unreachable_service_is_a_transport_error() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let err = client(&format!("http://127.0.0.1:{port}")).health().unwrap_err();
    assert!(matches!(err, Error::Transport { attempts: 3, .. }), "{err}");
}

#[test]
fn client_errors_are_not_retried() {
    let (url, hits) = serve(Box::new(|_, _, _| (400, r#"{"error":"bad views"}"#.into())));
    let err = inpaint(&request(), &Endpoint::Http(client(&url))).unwrap_err();
    assert!(matches!(err, Error::Protocol(_)), "{err}");
    assert_eq!(hits.load(Ordering::SeqCst), 1);
}

#[test]
fn wrong_image_count_is_a_protocol_error() {
    let (url, _) = serve(Box::new(|_, _, body| {
        let mut r = mock_answer(body);
        r.images.pop();
        (200, serde_json::to_string(&r).unwrap())
    }));
    let err = inpaint(&request(), &Endpoint::Http(client(&url))).unwrap_err();
    assert!(matches!(err, Error::Protocol(_)), "{err}");
}

#[test]
fn seed_must_be_echoed() {
    let (url, _) = serve(Box::new(|_, _, body| {
        let mut r = mock_answer(body);
        r.seed += 1;
        (200, serde_json::to_string(&r).unwrap())
    }));
    let err = inpaint(&request(), &Endpoint::Http(client(&url))).unwrap_err();
    assert!(matches!(err, Error::Protocol(_)), "{err}");
}

#[test]
fn wrong_image_size_and_garbage_are_protocol_errors() {
    let (url, _) = serve(Box::new(|hit, _, body| {
        if hit == 0 {
            let mut r = mock_answer(body);
            r.images[0] = r.images[1].clone();
            let small = splatinsert::Image::rgb(3, 3, [0.5; 3]);
            r.images[1] = base64_png(&small);
            (200, serde_json::to_string(&r).unwrap())
        } else {
            (200, "not json".into())
        }
    }));
    let c = client(&url);
    for _ in 0..2 {
        let err = inpaint(&request(), &Endpoint::Http(c.clone())).unwrap_err();
        assert!(matches!(err, Error::Protocol(_)), "{err}");
    }
}

fn base64_png(img: &splatinsert::Image) -> String {
    let wire = encode_response(0, std::slice::from_ref(img)).unwrap();
    wire.images[0].clone()
}
