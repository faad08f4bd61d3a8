//! Wire protocol between the pipeline and an external segmenter adapter.
//!
//! Every message is a JSON object with an `id` (request id, echoed in the
//! response) and a `type` tag. On child-process stdio each message is framed
//! by a 4-byte big-endian length; over HTTP the message is the POST body.
//!
//! Requests:
//! - `{"id":1,"type":"hello"}`
//! - `{"id":2,"type":"set_image","image_id":"..","png_base64":".."}`
//! - `{"id":3,"type":"segment","image_id":"..","points":[{"x":..,"y":..}]}`
//!
//! Responses: `hello{name,version,max_prompts}`, `image_set{image_id}`,
//! `masks{masks:[{rle_counts,size:[h,w],bbox:[x,y,w,h],score,prompt_index}]}`,
//! `error{code,message}`.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::sync::Arc;

use base64::Engine as _;
use serde::{Deserialize, Serialize};

use super::{rle, Capabilities, SegmenterBackend};
use crate::error::{Error, Result};
use crate::io::{decode_png_frame, encode_png_frame};
use crate::raster::{Frame, PixelPoint};

/// Largest accepted frame payload.
pub const MAX_FRAME_BYTES: usize = 256 << 20;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Envelope<T> {
    pub id: u64,
    #[serde(flatten)]
    pub body: T,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WirePoint {
    pub x: u32,
    pub y: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Request {
    Hello,
    SetImage { image_id: String, png_base64: String },
    Segment { image_id: String, points: Vec<WirePoint> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WireMask {
    pub rle_counts: Vec<u32>,
    /// `[height, width]`.
    pub size: [u32; 2],
    /// `[x, y, w, h]`.
    pub bbox: [u32; 4],
    pub score: f64,
    /// Index into the request's `points` of the prompt that produced the mask.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_index: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Response {
    Hello {
        name: String,
        version: String,
        max_prompts: usize,
    },
    ImageSet {
        image_id: String,
    },
    Masks {
        masks: Vec<WireMask>,
    },
    Error {
        code: String,
        message: String,
    },
}

pub fn write_frame(w: &mut impl Write, payload: &[u8]) -> Result<()> {
    let len = u32::try_from(payload.len())
        .map_err(|_| Error::Protocol("frame too large".into()))?;
    w.write_all(&len.to_be_bytes())?;
    w.write_all(payload)?;
    w.flush()?;
    Ok(())
}

/// `Ok(None)` on a clean end of stream before a length prefix.
pub fn read_frame(r: &mut impl Read) -> Result<Option<Vec<u8>>> {
    let mut len = [0u8; 4];
    let mut filled = 0;
    while filled < 4 {
        let n = r.read(&mut len[filled..])?;
        if n == 0 {
            return if filled == 0 {
                Ok(None)
            } else {
                Err(Error::Protocol("truncated frame header".into()))
            };
        }
        filled += n;
    }
    let len = u32::from_be_bytes(len) as usize;
    if len > MAX_FRAME_BYTES {
        return Err(Error::Protocol(format!("frame of {len} bytes exceeds limit")));
    }
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)
        .map_err(|e| Error::Protocol(format!("truncated frame body: {e}")))?;
    Ok(Some(buf))
}

pub fn write_message<T: Serialize>(w: &mut impl Write, msg: &Envelope<T>) -> Result<()> {
    let bytes = serde_json::to_vec(msg).map_err(|e| Error::Protocol(e.to_string()))?;
    write_frame(w, &bytes)
}

pub fn parse_message<T: for<'de> Deserialize<'de>>(bytes: &[u8]) -> Result<Envelope<T>> {
    serde_json::from_slice(bytes).map_err(|e| Error::Protocol(format!("malformed message: {e}")))
}

pub fn png_base64(frame: &Frame) -> Result<String> {
    Ok(base64::engine::general_purpose::STANDARD.encode(encode_png_frame(frame)?))
}

pub fn frame_from_base64(data: &str) -> Result<Frame> {
    let bytes = base64::engine::general_purpose::STANDARD
        .decode(data)
        .map_err(|e| Error::Protocol(format!("bad base64: {e}")))?;
    decode_png_frame(&bytes)
}

/// Adapter side: answers requests with a local backend. Images are kept
/// until the adapter exits.
pub struct AdapterServer {
    backend: Arc<dyn SegmenterBackend>,
    images: HashMap<String, Frame>,
}

impl AdapterServer {
    pub fn new(backend: Arc<dyn SegmenterBackend>) -> Self {
        Self {
            backend,
            images: HashMap::new(),
        }
    }

    fn error(code: &str, message: impl Into<String>) -> Response {
        Response::Error {
            code: code.into(),
            message: message.into(),
        }
    }

    pub fn handle(&mut self, request: Request) -> Response {
        match request {
            Request::Hello => {
                let caps: Capabilities = self.backend.capabilities();
                Response::Hello {
                    name: caps.name,
                    version: caps.version,
                    max_prompts: caps.max_prompts,
                }
            }
            Request::SetImage {
                image_id,
                png_base64,
            } => match frame_from_base64(&png_base64) {
                Ok(frame) => {
                    self.images.insert(image_id.clone(), frame);
                    Response::ImageSet { image_id }
                }
                Err(e) => Self::error("bad_image", e.to_string()),
            },
            Request::Segment { image_id, points } => {
                let Some(frame) = self.images.get(&image_id) else {
                    return Self::error("unknown_image", format!("no image `{image_id}`"));
                };
                let prompts: Vec<PixelPoint> =
                    points.iter().map(|p| PixelPoint::new(p.x, p.y)).collect();
                if let Some(p) = prompts
                    .iter()
                    .find(|p| p.x >= frame.width() || p.y >= frame.height())
                {
                    return Self::error("out_of_bounds", format!("point ({}, {})", p.x, p.y));
                }
                match self.backend.segment_prompts(frame, &prompts) {
                    Ok(masks) => Response::Masks {
                        masks: masks
                            .iter()
                            .map(|m| WireMask {
                                rle_counts: rle::encode(&m.to_mask()),
                                size: [m.dims.1, m.dims.0],
                                bbox: [m.bbox.x, m.bbox.y, m.bbox.w, m.bbox.h],
                                score: m.confidence,
                                prompt_index: prompts.iter().position(|&p| p == m.source_prompt),
                            })
                            .collect(),
                    },
                    Err(e) => Self::error("backend", e.to_string()),
                }
            }
        }
    }

    pub fn handle_bytes(&mut self, bytes: &[u8]) -> Envelope<Response> {
        match parse_message::<Request>(bytes) {
            Ok(env) => Envelope {
                id: env.id,
                body: self.handle(env.body),
            },
            Err(e) => Envelope {
                id: serde_json::from_slice::<serde_json::Value>(bytes)
                    .ok()
                    .and_then(|v| v.get("id").and_then(|id| id.as_u64()))
                    .unwrap_or(0),
                body: Self::error("bad_request", e.to_string()),
            },
        }
    }

    /// Serves framed requests until `reader` reaches end of stream.
    pub fn serve(&mut self, reader: &mut impl Read, writer: &mut impl Write) -> Result<()> {
        while let Some(frame) = read_frame(reader)? {
            let response = self.handle_bytes(&frame);
            write_message(writer, &response)?;
        }
        Ok(())
    }
}
