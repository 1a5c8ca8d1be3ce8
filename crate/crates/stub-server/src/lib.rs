//! A tiny HTTP server speaking the painter/projector wire protocol.
//!
//! Painting is mean-fill on the unpadded region, projection echoes RGB at
//! stride 1 or returns a fixed grid. Failure modes can be switched on to
//! exercise client error handling.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::Duration;

use contrastseg::painter::{MeanFillPainter, PaintMode, PaintRequest, Painter};
use contrastseg::protocol::{
    self, ErrorBody, PaintRequestBody, PaintResponseBody, ProjectRequestBody, ProjectResponseBody,
    HEALTH_PATH, PAINT_PATH, PROJECT_PATH,
};
use tiny_http::{Header, Method, Response, Server};

#[derive(Debug, Clone, PartialEq)]
pub enum Projection {
    /// RGB of the padded canvas at stride 1.
    Echo,
    /// A fixed channel-major grid with the given stride.
    Grid {
        stride: usize,
        channels: usize,
        data: Vec<f32>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Fault {
    None,
    /// Every request answers 503.
    Unavailable,
    /// Paint responses carry one sample fewer than requested.
    ShortSamples,
    /// Responses are not JSON.
    Garbage,
    /// Sleep before answering.
    Slow(Duration),
}

#[derive(Debug, Clone)]
pub struct StubConfig {
    pub projection: Projection,
    pub fault: Fault,
}

impl Default for StubConfig {
    fn default() -> Self {
        Self {
            projection: Projection::Echo,
            fault: Fault::None,
        }
    }
}

pub struct StubServer {
    server: Arc<Server>,
    url: String,
    requests: Arc<AtomicUsize>,
    worker: Option<JoinHandle<()>>,
}

impl StubServer {
    pub fn start(cfg: StubConfig) -> Self {
        let server = Arc::new(Server::http("127.0.0.1:0").expect("bind stub server"));
        let port = server.server_addr().to_ip().expect("ip listener").port();
        let requests = Arc::new(AtomicUsize::new(0));
        let worker = {
            let server = Arc::clone(&server);
            let requests = Arc::clone(&requests);
            thread::spawn(move || {
                for mut req in server.incoming_requests() {
                    requests.fetch_add(1, Ordering::SeqCst);
                    let mut body = String::new();
                    let (status, text) = match req.as_reader().read_to_string(&mut body) {
                        Ok(_) => handle(&cfg, req.method(), req.url(), &body),
                        Err(e) => (400, error_json(&e.to_string())),
                    };
                    let header = Header::from_bytes("Content-Type", "application/json")
                        .expect("static header");
                    let _ = req.respond(
                        Response::from_string(text)
                            .with_status_code(status)
                            .with_header(header),
                    );
                }
            })
        };
        Self {
            server,
            url: format!("http://127.0.0.1:{port}"),
            requests,
            worker: Some(worker),
        }
    }

    pub fn url(&self) -> &str {
        &self.url
    }

    pub fn requests(&self) -> usize {
        self.requests.load(Ordering::SeqCst)
    }
}

impl Drop for StubServer {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(w) = self.worker.take() {
            let _ = w.join();
        }
    }
}

fn error_json(msg: &str) -> String {
    serde_json::to_string(&ErrorBody {
        error: msg.to_string(),
    })
    .expect("serializable")
}

fn handle(cfg: &StubConfig, method: &Method, url: &str, body: &str) -> (u16, String) {
    match &cfg.fault {
        Fault::Unavailable => return (503, error_json("model unavailable")),
        Fault::Garbage => return (200, "not json".into()),
        Fault::Slow(d) => thread::sleep(*d),
        Fault::None | Fault::ShortSamples => {}
    }
    let result = match (method, url) {
        (Method::Get, HEALTH_PATH) => Ok("{\"status\":\"ok\"}".to_string()),
        (Method::Post, PAINT_PATH) => paint(body, cfg.fault == Fault::ShortSamples),
        (Method::Post, PROJECT_PATH) => project(body, &cfg.projection),
        _ => return (404, error_json(&format!("no route {url}"))),
    };
    match result {
        Ok(text) => (200, text),
        Err(msg) => (400, error_json(&msg)),
    }
}

fn paint(body: &str, short: bool) -> Result<String, String> {
    let req: PaintRequestBody = serde_json::from_str(body).map_err(|e| e.to_string())?;
    let canvas = protocol::image_from_b64(&req.image).map_err(|e| e.to_string())?;
    let keep = protocol::mask_from_b64(&req.keep_mask).map_err(|e| e.to_string())?;
    let image = protocol::crop_image(&canvas, req.pad).map_err(|e| e.to_string())?;
    let keep = protocol::crop_mask(&keep, req.pad).map_err(|e| e.to_string())?;
    let painted = MeanFillPainter
        .paint(&PaintRequest {
            image: &image,
            keep_mask: &keep,
            n_samples: req.n_samples,
            seed: req.seed,
            diffusion_steps: req.diffusion_steps,
            mode: PaintMode::Inpaint,
        })
        .map_err(|e| e.to_string())?;
    let n = if short {
        req.n_samples.saturating_sub(1)
    } else {
        req.n_samples
    };
    let samples = painted.samples[..n]
        .iter()
        .map(|s| protocol::image_to_b64(&protocol::pad_image(s, req.pad, canvas.width())))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    serde_json::to_string(&PaintResponseBody { samples }).map_err(|e| e.to_string())
}

fn project(body: &str, projection: &Projection) -> Result<String, String> {
    let req: ProjectRequestBody = serde_json::from_str(body).map_err(|e| e.to_string())?;
    let canvas = protocol::image_from_b64(&req.image).map_err(|e| e.to_string())?;
    let resp = match projection {
        Projection::Echo => {
            let (w, h) = canvas.dims();
            let mut data = Vec::with_capacity(3 * w * h);
            for c in 0..3 {
                for y in 0..h {
                    for x in 0..w {
                        data.push(canvas.pixel(x, y)[c]);
                    }
                }
            }
            ProjectResponseBody {
                stride: 1,
                channels: 3,
                data: protocol::features_to_b64(&data),
            }
        }
        Projection::Grid {
            stride,
            channels,
            data,
        } => ProjectResponseBody {
            stride: *stride,
            channels: *channels,
            data: protocol::features_to_b64(data),
        },
    };
    serde_json::to_string(&resp).map_err(|e| e.to_string())
}
