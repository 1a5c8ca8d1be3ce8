use std::path::Path;
use std::time::Duration;

use contrastseg::amcp::{AmcpConfig, Engine, Prompt};
use contrastseg::painter::{PaintMode, PaintRequest};
use contrastseg::protocol::{self, PaintRequestBody};
use contrastseg::{
    BitMask, Error, IdentityProjector, ImageBuf, MeanFillPainter, Painter, Projector, Rect,
    RemotePainter, RemoteProjector,
};
use contrastseg_stub_server::{Fault, Projection, StubConfig, StubServer};

fn image(w: usize, h: usize) -> ImageBuf {
    ImageBuf::from_fn(w, h, |x, y| {
        [
            (x * 7 % 256) as f32 / 255.0,
            (y * 11 % 256) as f32 / 255.0,
            ((x + y) % 256) as f32 / 255.0,
        ]
    })
}

fn keep(w: usize, h: usize) -> BitMask {
    BitMask::from_fn(w, h, |x, y| !(10..25).contains(&x) || !(8..20).contains(&y))
}

fn request<'a>(img: &'a ImageBuf, keep: &'a BitMask, n: usize) -> PaintRequest<'a> {
    PaintRequest {
        image: img,
        keep_mask: keep,
        n_samples: n,
        seed: 3,
        diffusion_steps: 50,
        mode: PaintMode::Inpaint,
    }
}

fn stub(fault: Fault) -> StubServer {
    StubServer::start(StubConfig {
        fault,
        ..Default::default()
    })
}

#[test]
fn remote_meanfill_matches_local() {
    let server = stub(Fault::None);
    let (img, k) = (image(40, 30), keep(40, 30));
    let remote = RemotePainter::with_options(server.url(), Duration::from_secs(10), 64).unwrap();
    let got = remote.paint(&request(&img, &k, 3)).unwrap();
    let want = MeanFillPainter.paint(&request(&img, &k, 3)).unwrap();
    assert_eq!(got, want);
    assert_eq!(server.requests(), 1);
}

#[test]
fn kept_pixels_survive_transport_exactly() {
    let server = stub(Fault::None);
    let img = ImageBuf::from_fn(20, 20, |x, y| [x as f32 / 19.3, y as f32 / 21.7, 0.123_456]);
    let k = BitMask::from_fn(20, 20, |x, _| x < 12);
    let remote = RemotePainter::with_options(server.url(), Duration::from_secs(10), 32).unwrap();
    let out = remote.paint(&request(&img, &k, 2)).unwrap();
    for s in &out.samples {
        for y in 0..20 {
            for x in 0..12 {
                assert_eq!(s.pixel(x, y), img.pixel(x, y));
            }
        }
    }
}

#[test]
fn echo_projection_equals_identity() {
    let server = stub(Fault::None);
    let img = image(24, 18);
    let remote = RemoteProjector::with_options(server.url(), Duration::from_secs(10), 32).unwrap();
    let got = remote.project(&img).unwrap();
    let want = IdentityProjector.project(&img).unwrap();
    assert_eq!(got.dims(), want.dims());
    assert_eq!(got.channels(), 3);
    for (a, b) in got.data().iter().zip(want.data()) {
        assert!((a - b).abs() <= 1e-5, "{a} vs {b}");
    }
}

#[test]
fn strided_grid_is_upsampled_bilinearly() {
    // channel 0: [[0, 1], [2, 3]], channel 1: [[10, 10], [30, 30]]
    let data = vec![0.0, 1.0, 2.0, 3.0, 10.0, 10.0, 30.0, 30.0];
    let server = StubServer::start(StubConfig {
        projection: Projection::Grid {
            stride: 8,
            channels: 2,
            data,
        },
        fault: Fault::None,
    });
    let remote = RemoteProjector::with_options(server.url(), Duration::from_secs(10), 16).unwrap();
    let f = remote.project(&image(16, 16)).unwrap();
    assert_eq!((f.dims(), f.channels()), ((16, 16), 2));
    let weight = |p: usize| ((p as f32 - 3.5) / 8.0).clamp(0.0, 1.0);
    for y in 0..16 {
        for x in 0..16 {
            let (wx, wy) = (weight(x), weight(y));
            let v = f.vector(y * 16 + x);
            assert!((v[0] - (wx + 2.0 * wy)).abs() < 1e-5, "({x},{y}) {}", v[0]);
            assert!(
                (v[1] - (10.0 + 20.0 * wy)).abs() < 1e-5,
                "({x},{y}) {}",
                v[1]
            );
        }
    }
    assert_eq!(f.vector(0), &[0.0, 10.0]);
    assert_eq!(f.vector(255), &[3.0, 30.0]);
}

#[test]
fn stride_must_divide_canvas() {
    let server = StubServer::start(StubConfig {
        projection: Projection::Grid {
            stride: 5,
            channels: 1,
            data: vec![0.0; 9],
        },
        fault: Fault::None,
    });
    let remote = RemoteProjector::with_options(server.url(), Duration::from_secs(10), 16).unwrap();
    assert!(matches!(
        remote.project(&image(16, 16)),
        Err(Error::Protocol(_))
    ));
}

#[test]
fn server_faults_map_to_errors() {
    let (img, k) = (image(16, 16), keep(16, 16));
    let call = |fault: Fault, timeout: Duration| {
        let server = stub(fault);
        RemotePainter::with_options(server.url(), timeout, 32)
            .unwrap()
            .paint(&request(&img, &k, 2))
    };
    let t = Duration::from_secs(10);
    assert!(matches!(
        call(Fault::Unavailable, t),
        Err(Error::BackendUnavailable(_))
    ));
    assert!(matches!(call(Fault::Garbage, t), Err(Error::Protocol(_))));
    assert!(matches!(
        call(Fault::ShortSamples, t),
        Err(Error::Protocol(_))
    ));
    let slow = call(
        Fault::Slow(Duration::from_millis(800)),
        Duration::from_millis(150),
    );
    assert!(matches!(slow, Err(Error::Timeout(_))), "{slow:?}");
}

#[test]
fn unreachable_endpoint_is_unavailable() {
    let url = {
        let server = stub(Fault::None);
        server.url().to_string()
    };
    let (img, k) = (image(8, 8), keep(8, 8));
    let r = RemotePainter::with_options(&url, Duration::from_secs(2), 16)
        .unwrap()
        .paint(&request(&img, &k, 1));
    assert!(matches!(r, Err(Error::BackendUnavailable(_))), "{r:?}");
}

#[test]
fn schema_errors_answer_400() {
    use std::io::{Read, Write};
    let server = stub(Fault::None);
    let addr = server.url().trim_start_matches("http://").to_string();
    let body = r#"{"image": 3}"#;
    let mut conn = std::net::TcpStream::connect(addr).unwrap();
    write!(
        conn,
        "POST {} HTTP/1.1\r\nHost: x\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        protocol::PAINT_PATH,
        body.len()
    )
    .unwrap();
    let mut reply = String::new();
    conn.read_to_string(&mut reply).unwrap();
    assert!(reply.starts_with("HTTP/1.1 400"), "{reply}");
    assert!(reply.contains("\"error\""));
}

#[test]
fn engine_over_remote_matches_local() {
    let server = stub(Fault::None);
    let img = ImageBuf::from_fn(48, 48, |x, y| {
        let inside = (14..34).contains(&x) && (12..36).contains(&y);
        if inside {
            [0.8, 0.2, 0.2]
        } else {
            [0.2, 0.3, 0.7]
        }
    });
    let cfg = AmcpConfig {
        n_samples: 2,
        ..Default::default()
    };
    let prompt = Prompt::Box(Rect::new(10, 8, 38, 40).unwrap());
    let remote = RemotePainter::with_options(server.url(), Duration::from_secs(10), 64).unwrap();
    let rproj = RemoteProjector::with_options(server.url(), Duration::from_secs(10), 64).unwrap();
    let a = Engine::new(cfg.clone(), &remote, &rproj)
        .unwrap()
        .run(&img, &prompt)
        .unwrap();
    let b = Engine::new(cfg, &MeanFillPainter, &IdentityProjector)
        .unwrap()
        .run(&img, &prompt)
        .unwrap();
    assert_eq!(a.mask, b.mask);
}

#[test]
fn paint_request_golden() {
    let img = ImageBuf::from_fn(6, 4, |x, y| [x as f32 / 5.0, y as f32 / 3.0, 0.5]).quantized();
    let k = BitMask::from_fn(6, 4, |x, y| x < 3 || y == 0);
    let client =
        RemotePainter::with_options("http://127.0.0.1:9", Duration::from_secs(1), 8).unwrap();
    let body = client.request_body(&request(&img, &k, 2)).unwrap();
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/paint_request.json");
    let text = serde_json::to_string_pretty(&body).unwrap();
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&path, &text).unwrap();
    }
    let golden: PaintRequestBody =
        serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(body, golden);
    assert_eq!(
        (
            golden.pad.left,
            golden.pad.top,
            golden.pad.orig_w,
            golden.pad.orig_h
        ),
        (1, 2, 6, 4)
    );
    let mask = protocol::mask_from_b64(&golden.keep_mask).unwrap();
    assert_eq!(mask.dims(), (8, 8));
    assert_eq!(protocol::crop_mask(&mask, golden.pad).unwrap(), k);
    assert!(!mask.get(0, 0));
    let canvas = protocol::image_from_b64(&golden.image).unwrap();
    assert_eq!(protocol::crop_image(&canvas, golden.pad).unwrap(), img);
}
