//! wasm-bindgen wrapper around [`Session`] for the static demo page in
//! `www/`. Every method takes and returns JSON strings so the page needs no
//! generated typings.
//!
//! The log lives in memory; reloading the page starts over.

use std::collections::BTreeMap;
use std::sync::Arc;

use gridwrangle::detect::CodeCounts;
use gridwrangle::sampler::{SampleParams, Sampling};
use gridwrangle::script::RenderTarget;
use gridwrangle::storage::MemoryStorage;
use gridwrangle::{ErrorCode, GroupKey, IngestOptions, RepairAction, Session, SessionConfig};
use serde::Serialize;
use wasm_bindgen::prelude::*;

type Result<T> = std::result::Result<T, gridwrangle::Error>;

#[derive(Serialize)]
struct Ranked {
    key: String,
    errors: usize,
    error_counts: CodeCounts,
}

fn json<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("payloads serialize")
}

/// Native half of the binding, usable without a JS host.
pub struct Demo {
    session: Session,
}

impl Demo {
    /// `config` is a JSON object merged over [`SessionConfig`] defaults; empty
    /// means defaults.
    pub fn new(csv: &str, config: &str) -> Result<Demo> {
        let config = parse_config(config)?;
        let session = Session::create(
            csv.as_bytes(),
            &IngestOptions::default(),
            config,
            Box::new(MemoryStorage::new()),
            Arc::new(|| 0),
        )?;
        Ok(Demo { session })
    }

    pub fn session(&self) -> &Session {
        &self.session
    }

    pub fn info(&self) -> String {
        json(&self.session.info())
    }

    /// Pairs in chart order as `[[cat, num], ...]`.
    pub fn charts(&self) -> String {
        let mut pairs: Vec<(&str, &str)> = Vec::new();
        for g in self.session.engine().groups().iter() {
            let p = (g.cat_column, g.num_column);
            if pairs.last() != Some(&p) {
                pairs.push(p);
            }
        }
        json(&pairs)
    }

    pub fn chart(&self, cat: &str, num: &str, sampling: &str, k: usize, seed: u64) -> Result<String> {
        let params = SampleParams {
            sampling: sampling.parse::<Sampling>()?,
            k,
            seed,
        };
        Ok(json(&self.session.engine().chart(cat, num, &params)?))
    }

    pub fn ranked(&self) -> String {
        let engine = self.session.engine();
        let rows: Vec<Ranked> = engine
            .ranked_groups()
            .into_iter()
            .map(|(k, n)| Ranked {
                key: k.to_string(),
                errors: n,
                error_counts: engine.store().counts(&k),
            })
            .collect();
        json(&rows)
    }

    pub fn suggest(&self, key: &str, code: &str) -> Result<String> {
        let key: GroupKey = key.parse()?;
        let code: ErrorCode = code.parse()?;
        Ok(json(&self.session.suggest(&key, &code)?))
    }

    pub fn preview(&self, action: &str) -> Result<String> {
        Ok(json(&self.session.preview(&parse_action(action)?)?))
    }

    pub fn apply(&mut self, action: &str) -> Result<String> {
        Ok(json(&self.session.apply(&parse_action(action)?)?))
    }

    pub fn undo(&mut self) -> Result<String> {
        Ok(json(&self.session.undo()?))
    }

    pub fn redo(&mut self) -> Result<String> {
        Ok(json(&self.session.redo()?))
    }

    pub fn script(&self, target: &str) -> Result<String> {
        Ok(self.session.render_script(target.parse::<RenderTarget>()?))
    }
}

fn parse_config(src: &str) -> Result<SessionConfig> {
    if src.trim().is_empty() {
        return Ok(SessionConfig::default());
    }
    let bad = |e: serde_json::Error| gridwrangle::Error::InvalidConfig(e.to_string());
    let mut base = serde_json::to_value(SessionConfig::default()).map_err(bad)?;
    let patch: BTreeMap<String, serde_json::Value> = serde_json::from_str(src).map_err(bad)?;
    for (k, v) in patch {
        base[k] = v;
    }
    let config: SessionConfig = serde_json::from_value(base).map_err(bad)?;
    config.validate()?;
    Ok(config)
}

fn parse_action(src: &str) -> Result<RepairAction> {
    serde_json::from_str(src).map_err(|e| gridwrangle::Error::InvalidAction(e.to_string()))
}

fn js(e: gridwrangle::Error) -> JsError {
    JsError::new(&format!("{}: {e}", e.code()))
}

#[wasm_bindgen]
pub fn fixture_csv() -> String {
    gridwrangle::fixture::SALARIES_CSV.to_string()
}

#[wasm_bindgen]
pub struct WasmSession(Demo);

#[wasm_bindgen]
impl WasmSession {
    #[wasm_bindgen(constructor)]
    pub fn new(csv: &str, config: &str) -> std::result::Result<WasmSession, JsError> {
        Demo::new(csv, config).map(WasmSession).map_err(js)
    }

    pub fn info(&self) -> String {
        self.0.info()
    }

    pub fn charts(&self) -> String {
        self.0.charts()
    }

    pub fn chart(&self, cat: &str, num: &str, sampling: &str, k: usize, seed: u64) -> std::result::Result<String, JsError> {
        self.0.chart(cat, num, sampling, k, seed).map_err(js)
    }

    pub fn ranked(&self) -> String {
        self.0.ranked()
    }

    pub fn suggest(&self, key: &str, code: &str) -> std::result::Result<String, JsError> {
        self.0.suggest(key, code).map_err(js)
    }

    pub fn preview(&self, action: &str) -> std::result::Result<String, JsError> {
        self.0.preview(action).map_err(js)
    }

    pub fn apply(&mut self, action: &str) -> std::result::Result<String, JsError> {
        self.0.apply(action).map_err(js)
    }

    pub fn undo(&mut self) -> std::result::Result<String, JsError> {
        self.0.undo().map_err(js)
    }

    pub fn redo(&mut self) -> std::result::Result<String, JsError> {
        self.0.redo().map_err(js)
    }

    pub fn script(&self, target: &str) -> std::result::Result<String, JsError> {
        self.0.script(target).map_err(js)
    }
}
