use std::time::Duration;

use super::{FeatureMap, Projector};
use crate::error::{Error, Result};
use crate::http::JsonClient;
use crate::protocol::{
    self, Pad, ProjectRequestBody, ProjectResponseBody, DEFAULT_CANVAS, PROJECT_PATH,
};
use crate::raster::ImageBuf;

/// Client for a feature service speaking the `/v1/project` protocol.
///
/// The server returns a strided grid over the padded canvas; the client
/// upsamples it bilinearly (cell centers at `(g + 0.5) * stride - 0.5`) and
/// crops back to the original frame.
#[derive(Debug, Clone)]
pub struct RemoteProjector {
    client: JsonClient,
    canvas: usize,
}

impl RemoteProjector {
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
}

impl Projector for RemoteProjector {
    fn project(&self, image: &ImageBuf) -> Result<FeatureMap> {
        let pad = Pad::centered(image.width(), image.height(), self.canvas)?;
        let body = ProjectRequestBody {
            image: protocol::image_to_b64(&protocol::pad_image(image, pad, self.canvas))?,
            pad,
        };
        let resp: ProjectResponseBody = self.client.post(PROJECT_PATH, &body)?;
        let grid = decode_grid(&resp, self.canvas)?;
        Ok(upsample_crop(&grid, resp.stride, pad))
    }

    fn name(&self) -> String {
        format!("remote:{}", self.client.endpoint())
    }
}

/// Channel-major strided feature grid.
pub(crate) struct Grid {
    pub channels: usize,
    pub side: usize,
    pub data: Vec<f32>,
}

pub(crate) fn decode_grid(resp: &ProjectResponseBody, canvas: usize) -> Result<Grid> {
    if resp.stride == 0 || !canvas.is_multiple_of(resp.stride) {
        return Err(Error::Protocol(format!(
            "stride {} does not divide canvas {canvas}",
            resp.stride
        )));
    }
    if resp.channels == 0 {
        return Err(Error::Protocol("zero feature channels".into()));
    }
    let side = canvas / resp.stride;
    let data = protocol::features_from_b64(&resp.data)?;
    if data.len() != resp.channels * side * side {
        return Err(Error::Protocol(format!(
            "expected {}x{side}x{side} features, got {} values",
            resp.channels,
            data.len()
        )));
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::Protocol("non-finite feature value".into()));
    }
    Ok(Grid {
        channels: resp.channels,
        side,
        data,
    })
}

pub(crate) fn upsample_crop(grid: &Grid, stride: usize, pad: Pad) -> FeatureMap {
    let (c, g) = (grid.channels, grid.side);
    let coord = |p: usize| -> (usize, usize, f32) {
        let f = ((p as f32 + 0.5) / stride as f32 - 0.5).clamp(0.0, (g - 1) as f32);
        let i0 = f.floor() as usize;
        let i1 = (i0 + 1).min(g - 1);
        (i0, i1, f - i0 as f32)
    };
    let mut data = Vec::with_capacity(pad.orig_w * pad.orig_h * c);
    for y in 0..pad.orig_h {
        let (y0, y1, ty) = coord(y + pad.top);
        for x in 0..pad.orig_w {
            let (x0, x1, tx) = coord(x + pad.left);
            for ch in 0..c {
                let at = |gy: usize, gx: usize| grid.data[(ch * g + gy) * g + gx];
                let top = at(y0, x0) * (1.0 - tx) + at(y0, x1) * tx;
                let bottom = at(y1, x0) * (1.0 - tx) + at(y1, x1) * tx;
                data.push(top * (1.0 - ty) + bottom * ty);
            }
        }
    }
    FeatureMap::new(pad.orig_w, pad.orig_h, c, data).expect("sized by construction")
}
