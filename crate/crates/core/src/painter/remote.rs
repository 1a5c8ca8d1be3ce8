use std::time::Duration;

use super::{PaintRequest, PaintResult, Painter};
use crate::error::{Error, Result};
use crate::http::JsonClient;
use crate::protocol::{self, Pad, PaintRequestBody, PaintResponseBody, DEFAULT_CANVAS, PAINT_PATH};

/// Client for a painting service speaking the `/v1/paint` protocol.
#[derive(Debug, Clone)]
pub struct RemotePainter {
    client: JsonClient,
    canvas: usize,
}

impl RemotePainter {
    pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(120);

    pub fn new(endpoint: &str) -> Result<Self> {
        Self::with_options(endpoint, Self::DEFAULT_TIMEOUT, DEFAULT_CANVAS)
    }

    pub fn with_options(endpoint: &str, timeout: Duration, canvas: usize) -> Result<Self> {
        Ok(Self {
            client: JsonClient::new(endpoint, timeout)?,
            canvas,
        })
    }

    /// Builds the request body that [`Painter::paint`] sends.
    pub fn request_body(&self, req: &PaintRequest<'_>) -> Result<PaintRequestBody> {
        req.validate()?;
        let pad = Pad::centered(req.image.width(), req.image.height(), self.canvas)?;
        Ok(PaintRequestBody {
            image: protocol::image_to_b64(&protocol::pad_image(req.image, pad, self.canvas))?,
            keep_mask: protocol::mask_to_b64(&protocol::pad_mask(req.keep_mask, pad, self.canvas))?,
            n_samples: req.n_samples,
            seed: req.seed,
            diffusion_steps: req.diffusion_steps,
            pad,
        })
    }
}

impl Painter for RemotePainter {
    fn paint(&self, req: &PaintRequest<'_>) -> Result<PaintResult> {
        let body = self.request_body(req)?;
        let pad = body.pad;
        let resp: PaintResponseBody = self.client.post(PAINT_PATH, &body)?;
        if resp.samples.len() != req.n_samples {
            return Err(Error::Protocol(format!(
                "requested {} samples, received {}",
                req.n_samples,
                resp.samples.len()
            )));
        }
        let samples = resp
            .samples
            .iter()
            .map(|s| {
                let padded = protocol::image_from_b64(s)?;
                if padded.dims() != (self.canvas, self.canvas) {
                    return Err(Error::Protocol(format!(
                        "sample is {}x{}, expected {c}x{c}",
                        padded.width(),
                        padded.height(),
                        c = self.canvas
                    )));
                }
                let mut sample = protocol::crop_image(&padded, pad)?;
                // kept pixels come from the original, not the 8-bit transport
                req.image.composite_into(&mut sample, req.keep_mask)?;
                Ok(sample)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(PaintResult { samples })
    }

    fn name(&self) -> String {
        format!("remote:{}", self.client.endpoint())
    }
}
