//! Line-delimited JSON over TCP: one connection per `generate` call, one
//! request line out, one reply line back.
//!
//! Request: `{"prompt": .., "blocks": [{"label", "rows", "cols", "data", "timestamps"}]}`
//! where `data` is base64 of the row-major tokens as little-endian `f32`.
//! Reply: `{"text": ..}`.

use std::io::{BufRead, BufReader, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::time::Duration;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use super::backend::{LanguageBackend, VisualBlock};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireBlock {
    pub label: String,
    pub rows: usize,
    pub cols: usize,
    pub data: String,
    pub timestamps: Vec<f64>,
}

impl WireBlock {
    pub fn encode(block: &VisualBlock<'_>) -> Self {
        let m = &block.tokens.tokens;
        let bytes: Vec<u8> = m
            .data()
            .iter()
            .flat_map(|&v| (v as f32).to_le_bytes())
            .collect();
        Self {
            label: block.label.to_owned(),
            rows: m.rows(),
            cols: m.cols(),
            data: STANDARD.encode(bytes),
            timestamps: block.tokens.timestamps_s.clone(),
        }
    }

    pub fn decode_data(&self) -> Result<Vec<f32>> {
        let bytes = STANDARD
            .decode(&self.data)
            .map_err(|e| Error::Format(format!("block {}: {e}", self.label)))?;
        if bytes.len() != self.rows * self.cols * 4 {
            return Err(Error::Format(format!(
                "block {}: {} bytes for {}x{} f32",
                self.label,
                bytes.len(),
                self.rows,
                self.cols
            )));
        }
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireRequest {
    pub prompt: String,
    pub blocks: Vec<WireBlock>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireReply {
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RemoteConfig {
    /// `host:port`.
    pub endpoint: String,
    pub timeout: Duration,
    /// Extra attempts after the first failure.
    pub retries: u32,
    pub max_concurrency: usize,
}

impl RemoteConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            timeout: Duration::from_secs(60),
            retries: 2,
            max_concurrency: 4,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RemoteBackend {
    cfg: RemoteConfig,
}

impl RemoteBackend {
    pub fn new(cfg: RemoteConfig) -> Self {
        Self { cfg }
    }

    fn exchange(&self, line: &str) -> Result<String> {
        let addr = self
            .cfg
            .endpoint
            .to_socket_addrs()?
            .next()
            .ok_or_else(|| Error::Backend(format!("cannot resolve {}", self.cfg.endpoint)))?;
        let mut stream = TcpStream::connect_timeout(&addr, self.cfg.timeout)?;
        stream.set_read_timeout(Some(self.cfg.timeout))?;
        stream.set_write_timeout(Some(self.cfg.timeout))?;
        stream.write_all(line.as_bytes())?;
        stream.write_all(b"\n")?;
        stream.flush()?;
        let mut reply = String::new();
        BufReader::new(stream).read_line(&mut reply)?;
        if reply.trim().is_empty() {
            return Err(Error::Backend("empty reply".into()));
        }
        let parsed: WireReply = serde_json::from_str(&reply)?;
        Ok(parsed.text)
    }
}

impl LanguageBackend for RemoteBackend {
    fn generate(&self, blocks: &[VisualBlock<'_>], prompt: &str) -> Result<String> {
        let request = WireRequest {
            prompt: prompt.to_owned(),
            blocks: blocks.iter().map(WireBlock::encode).collect(),
        };
        let line = serde_json::to_string(&request)?;
        let mut last = None;
        for _ in 0..=self.cfg.retries {
            match self.exchange(&line) {
                Ok(text) => return Ok(text),
                Err(e) => last = Some(e),
            }
        }
        Err(Error::Backend(format!(
            "{} after {} attempt(s): {}",
            self.cfg.endpoint,
            self.cfg.retries + 1,
            last.map(|e| e.to_string()).unwrap_or_default()
        )))
    }

    fn max_concurrency(&self) -> usize {
        self.cfg.max_concurrency.max(1)
    }
}
