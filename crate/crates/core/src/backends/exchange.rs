//! File-exchange adapter for externally served models.
//!
//! ```text
//! <dir>/request/<uuid>/request.json    written last, announces the request
//! <dir>/request/<uuid>/<item files>
//! <dir>/response/<uuid>/response.json  written last by the responder
//! <dir>/response/<uuid>/<item files>   16-bit probability PNGs
//! <dir>/response/<uuid>/error.json     optional failure report
//! ```

use std::fs;
use std::path::{Path, PathBuf};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{FullBackend, PatchBackend, Reconnector};
use crate::error::{Error, Result};
use crate::imagecore::io::{read_gray, read_mask, read_prob, write_gray, write_mask, write_prob};
use crate::imagecore::morph::binarize;
use crate::imagecore::raster::{BinaryMask, GrayImage, Point, ProbMap};
use crate::patchvote::{Patch, PatchSize};
use crate::scalar::Scalar;

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RequestKind {
    Full,
    Patch,
    Reconnect,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RequestItem {
    pub id: String,
    /// Relative to the request directory.
    pub path: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offset: Option<Point>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub size: Option<PatchSize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Request {
    pub version: u32,
    pub kind: RequestKind,
    pub items: Vec<RequestItem>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResponseItem {
    pub id: String,
    /// Relative to the response directory.
    pub path: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Response {
    pub version: u32,
    pub items: Vec<ResponseItem>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub version: u32,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExchangeParams {
    pub timeout_ms: u64,
    pub poll_ms: u64,
    /// Cut-off used when a reconnect response is turned back into a mask.
    pub mask_threshold: f64,
}

impl Default for ExchangeParams {
    fn default() -> Self {
        ExchangeParams {
            timeout_ms: 60_000,
            poll_ms: 20,
            mask_threshold: 0.5,
        }
    }
}

/// Raster payloads a request can carry.
pub enum Payload<'a> {
    Image(&'a GrayImage),
    Mask(&'a BinaryMask),
}

pub struct OutItem<'a> {
    pub id: String,
    pub payload: Payload<'a>,
    pub offset: Option<Point>,
    pub size: Option<PatchSize>,
}

#[derive(Debug, Clone)]
pub struct ExchangeClient {
    dir: PathBuf,
    params: ExchangeParams,
}

impl ExchangeClient {
    pub fn new(dir: impl Into<PathBuf>, params: ExchangeParams) -> Result<Self> {
        let dir = dir.into();
        if !dir.is_dir() {
            return Err(Error::param(format!("exchange directory {} does not exist", dir.display())));
        }
        if params.poll_ms == 0 {
            return Err(Error::param("poll interval must be positive"));
        }
        Ok(ExchangeClient { dir, params })
    }

    /// Sends one request and waits for its probability maps, in item order.
    pub fn call<S: Scalar>(&self, kind: RequestKind, items: &[OutItem<'_>]) -> Result<Vec<ProbMap<S>>> {
        let uuid = uuid::Uuid::new_v4().to_string();
        let req_dir = self.dir.join("request").join(&uuid);
        fs::create_dir_all(&req_dir).map_err(|e| Error::io(&req_dir, e))?;
        let mut listed = Vec::with_capacity(items.len());
        for (i, item) in items.iter().enumerate() {
            let path = format!("item_{i:04}.png");
            match item.payload {
                Payload::Image(img) => write_gray(&req_dir.join(&path), img)?,
                Payload::Mask(m) => write_mask(&req_dir.join(&path), m)?,
            }
            listed.push(RequestItem {
                id: item.id.clone(),
                path,
                offset: item.offset,
                size: item.size,
            });
        }
        let request = Request {
            version: PROTOCOL_VERSION,
            kind,
            items: listed,
        };
        publish_json(&req_dir.join("request.json"), &request)?;
        let resp_dir = self.dir.join("response").join(&uuid);
        let response = self.wait(&uuid, &resp_dir)?;
        collect(&uuid, &resp_dir, &request, &response)
    }

    fn wait(&self, uuid: &str, resp_dir: &Path) -> Result<Response> {
        let deadline = Instant::now() + Duration::from_millis(self.params.timeout_ms);
        let fail = |reason: String| Error::Exchange {
            uuid: uuid.to_string(),
            reason,
        };
        loop {
            let err_path = resp_dir.join("error.json");
            if err_path.is_file() {
                let report: ErrorReport = read_json_file(&err_path)?;
                return Err(fail(format!("responder reported: {}", report.message)));
            }
            let path = resp_dir.join("response.json");
            if path.is_file() {
                let value: serde_json::Value = read_json_file(&path)?;
                let version = value.get("version").and_then(|v| v.as_u64());
                if version != Some(PROTOCOL_VERSION as u64) {
                    return Err(Error::Protocol(format!(
                        "response {uuid} has version {version:?}, expected {PROTOCOL_VERSION}"
                    )));
                }
                return serde_json::from_value(value)
                    .map_err(|e| Error::Protocol(format!("response {uuid}: {e}")));
            }
            if Instant::now() >= deadline {
                return Err(fail(format!("no response after {} ms", self.params.timeout_ms)));
            }
            thread::sleep(Duration::from_millis(self.params.poll_ms));
        }
    }
}

fn collect<S: Scalar>(uuid: &str, dir: &Path, request: &Request, response: &Response) -> Result<Vec<ProbMap<S>>> {
    request
        .items
        .iter()
        .map(|item| {
            let found = response.items.iter().find(|r| r.id == item.id).ok_or_else(|| {
                Error::Protocol(format!("response {uuid} lacks item {}", item.id))
            })?;
            read_prob(&dir.join(&found.path)).map_err(|e| Error::Exchange {
                uuid: uuid.to_string(),
                reason: format!("item {}: {e}", item.id),
            })
        })
        .collect()
}

/// Writes through a temporary name so readers never see a partial file.
fn publish_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let tmp = path.with_extension("json.tmp");
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(&tmp, text).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn read_json_file<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Answers every pending request by echoing its rasters as probability
/// maps (images as `v / 65535`, masks as 0 or 1). Returns how many
/// requests were answered. Intended as a test double for a model server.
pub fn echo_pending(dir: &Path) -> Result<usize> {
    let requests = dir.join("request");
    let Ok(entries) = fs::read_dir(&requests) else {
        return Ok(0);
    };
    let mut names: Vec<String> = entries
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    let mut answered = 0;
    for uuid in names {
        let req_path = requests.join(&uuid).join("request.json");
        let resp_dir = dir.join("response").join(&uuid);
        if !req_path.is_file() || resp_dir.join("response.json").exists() || resp_dir.join("error.json").exists() {
            continue;
        }
        fs::create_dir_all(&resp_dir).map_err(|e| Error::io(&resp_dir, e))?;
        let request: Request = match read_json_file(&req_path) {
            Ok(r) => r,
            Err(e) => {
                let report = ErrorReport {
                    version: PROTOCOL_VERSION,
                    message: e.to_string(),
                };
                publish_json(&resp_dir.join("error.json"), &report)?;
                answered += 1;
                continue;
            }
        };
        let mut items = Vec::with_capacity(request.items.len());
        for item in &request.items {
            let src = requests.join(&uuid).join(&item.path);
            let probs: ProbMap<f64> = match request.kind {
                RequestKind::Full | RequestKind::Patch => {
                    let img = read_gray(&src)?;
                    let values = img.as_slice().iter().map(|&v| v as f64 / 65535.0).collect();
                    ProbMap::from_probabilities(img.rows(), img.cols(), values)?
                }
                RequestKind::Reconnect => read_mask(&src)?.map(|&b| if b { 1.0 } else { 0.0 }),
            };
            write_prob(&resp_dir.join(&item.path), &probs)?;
            items.push(ResponseItem {
                id: item.id.clone(),
                path: item.path.clone(),
            });
        }
        publish_json(
            &resp_dir.join("response.json"),
            &Response {
                version: PROTOCOL_VERSION,
                items,
            },
        )?;
        answered += 1;
    }
    Ok(answered)
}

/// Backend that forwards every prediction to an external responder.
#[derive(Debug, Clone)]
pub struct ExternalBackend {
    client: ExchangeClient,
}

impl ExternalBackend {
    pub fn new(client: ExchangeClient) -> Self {
        ExternalBackend { client }
    }
}

fn single<T>(mut items: Vec<T>) -> T {
    items.pop().expect("one item requested, one returned")
}

impl<S: Scalar> FullBackend<S> for ExternalBackend {
    fn predict_full(&self, img: &GrayImage) -> Result<ProbMap<S>> {
        let item = OutItem {
            id: "full".into(),
            payload: Payload::Image(img),
            offset: None,
            size: None,
        };
        let out = single(self.client.call::<S>(RequestKind::Full, &[item])?);
        img.same_dims(&out)?;
        Ok(out)
    }
}

impl<S: Scalar> PatchBackend<S> for ExternalBackend {
    fn patch_probabilities(&self, patch: &Patch<u16>) -> Result<Patch<S>> {
        Ok(single(PatchBackend::<S>::patches_probabilities(self, std::slice::from_ref(patch))?))
    }

    fn predict_patch(&self, patch: &Patch<u16>) -> Result<Patch<bool>> {
        let p = PatchBackend::<S>::patch_probabilities(self, patch)?;
        patch.with_payload(binarize(&p.payload, S::of(0.5)))
    }

    /// One request for the whole batch.
    fn patches_probabilities(&self, patches: &[Patch<u16>]) -> Result<Vec<Patch<S>>> {
        let items: Vec<OutItem<'_>> = patches
            .iter()
            .enumerate()
            .map(|(i, p)| OutItem {
                id: format!("p{i:04}"),
                payload: Payload::Image(&p.payload),
                offset: Some(p.offset),
                size: Some(p.size()),
            })
            .collect();
        let maps = self.client.call::<S>(RequestKind::Patch, &items)?;
        patches.iter().zip(maps).map(|(p, m)| p.with_payload(m)).collect()
    }

    fn predict_patches(&self, patches: &[Patch<u16>]) -> Result<Vec<Patch<bool>>> {
        Ok(PatchBackend::<S>::patches_probabilities(self, patches)?
            .into_iter()
            .map(|p| Patch::new(p.offset, binarize(&p.payload, S::of(0.5))))
            .collect())
    }
}

impl Reconnector for ExternalBackend {
    fn reconnect(&self, mask: &BinaryMask) -> Result<BinaryMask> {
        let item = OutItem {
            id: "mask".into(),
            payload: Payload::Mask(mask),
            offset: None,
            size: None,
        };
        let out = single(self.client.call::<f64>(RequestKind::Reconnect, &[item])?);
        mask.same_dims(&out)?;
        Ok(binarize(&out, self.client.params.mask_threshold))
    }
}
