//! Request routing independent of the HTTP transport.

use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use warebus::dsl::{parse_schema, SourceText};
use warebus::etl::{load_rules, prepare_catalog, run_manifest, SourceOutcome, SourcesManifest};
use warebus::olap::{self, CubeQuery, Filter, Literal, Selection};
use warebus::store::{Catalog, Snapshot};

use crate::error::{ApiError, ErrorCode};

pub const SCHEMA_VERSION_HEADER: &str = "X-Schema-Version";
pub const CHECKSUM_HEADER: &str = "X-Checksum-Sha256";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Get,
    Post,
    Other,
}

impl Method {
    pub fn parse(s: &str) -> Self {
        match s {
            "GET" | "HEAD" => Method::Get,
            "POST" => Method::Post,
            _ => Method::Other,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ApiRequest {
    pub method: Method,
    pub path: String,
    pub query: Vec<(String, String)>,
    pub body: Vec<u8>,
}

impl ApiRequest {
    /// Splits a request target such as `/a/b?x=1` into path and decoded query pairs.
    pub fn new(method: Method, target: &str, body: Vec<u8>) -> Self {
        let (path, query) = target.split_once('?').unwrap_or((target, ""));
        ApiRequest {
            method,
            path: path.to_string(),
            query: form_urlencoded::parse(query.as_bytes()).into_owned().collect(),
            body,
        }
    }

    fn param(&self, name: &str) -> Option<&str> {
        self.query.iter().find(|(k, _)| k == name).map(|(_, v)| v.as_str())
    }

    fn required(&self, name: &str) -> Result<&str, ApiError> {
        self.param(name)
            .ok_or_else(|| ApiError::bad_request(format!("missing query parameter `{name}`")).at(name))
    }

    fn json<'a, T: Deserialize<'a>>(&'a self) -> Result<T, ApiError> {
        serde_json::from_slice(&self.body).map_err(|e| ApiError::from_json(&e))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApiResponse {
    pub status: u16,
    pub content_type: String,
    pub headers: Vec<(String, String)>,
    pub body: Vec<u8>,
}

impl ApiResponse {
    fn new(status: u16, content_type: &str, body: Vec<u8>) -> Self {
        ApiResponse {
            status,
            content_type: content_type.to_string(),
            headers: Vec::new(),
            body,
        }
    }

    fn json<T: Serialize>(value: &T) -> Self {
        Self::new(200, JSON, serde_json::to_vec(value).expect("response serializes"))
    }

    fn error(e: &ApiError) -> Self {
        Self::new(e.code.status(), JSON, serde_json::to_vec(e).expect("error serializes"))
    }

    pub fn header(&self, name: &str) -> Option<&str> {
        self.headers
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    }
}

const JSON: &str = "application/json";

/// Navigation request: the current query plus one operation.
#[derive(Debug, Clone, Deserialize)]
pub struct NavigateRequest {
    pub query: CubeQuery,
    #[serde(flatten)]
    pub step: Navigation,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Navigation {
    RollUp { dimension: String },
    DrillDown { dimension: String },
    Slice { dimension: String, level: String, value: Literal },
    Dice { filters: Vec<Filter> },
}

#[derive(Debug, Clone, Deserialize)]
pub struct LoadRequest {
    pub manifest: PathBuf,
    #[serde(default)]
    pub schema: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct LoadResponse {
    generation: u64,
    outcomes: Vec<SourceOutcome>,
}

#[derive(Debug, Serialize)]
struct MembersResponse<'a> {
    dimension: &'a str,
    level: &'a str,
    attributes: Vec<String>,
    members: Vec<Vec<warebus::Value>>,
}

pub struct Service {
    catalog: Catalog,
    read_only: bool,
}

impl Service {
    pub fn new(catalog: Catalog, read_only: bool) -> Self {
        Service { catalog, read_only }
    }

    pub fn catalog(&self) -> &Catalog {
        &self.catalog
    }

    /// Snapshot for a read request. A read-only service follows commits made
    /// by other processes.
    fn snapshot(&self) -> Result<Arc<Snapshot>, ApiError> {
        if self.read_only {
            Ok(self.catalog.refresh_if_stale()?)
        } else {
            Ok(self.catalog.snapshot())
        }
    }

    pub fn handle(&self, req: &ApiRequest) -> ApiResponse {
        let snap = match self.snapshot() {
            Ok(snap) => snap,
            Err(e) => return self.reject(&e),
        };
        let mut resp = self.route(req, &snap).unwrap_or_else(|e| ApiResponse::error(&e));
        if resp.header(SCHEMA_VERSION_HEADER).is_none() {
            resp.headers.push((SCHEMA_VERSION_HEADER.to_string(), schema_version(&snap)));
        }
        resp
    }

    /// Error response for a request that never reached routing.
    pub fn reject(&self, e: &ApiError) -> ApiResponse {
        let mut resp = ApiResponse::error(e);
        resp.headers.push((SCHEMA_VERSION_HEADER.to_string(), schema_version(&self.catalog.snapshot())));
        resp
    }

    fn route(&self, req: &ApiRequest, snap: &Arc<Snapshot>) -> Result<ApiResponse, ApiError> {
        let segments: Vec<&str> = req.path.trim_matches('/').split('/').collect();
        let expect = |m: Method| {
            if req.method == m {
                Ok(())
            } else {
                Err(ApiError::new(
                    ErrorCode::MethodNotAllowed,
                    format!("{} does not accept this method", req.path),
                ))
            }
        };
        match segments.as_slice() {
            ["schema"] => {
                expect(Method::Get)?;
                Ok(ApiResponse::json(snap.require_schema()?.as_ref()))
            }
            ["dimensions", name, "members"] => {
                expect(Method::Get)?;
                let level = req.param("level").filter(|l| !l.is_empty());
                let filter = req.param("filter").filter(|f| !f.is_empty());
                let (attributes, members) = olap::level_members(snap, name, level, filter)?;
                Ok(ApiResponse::json(&MembersResponse {
                    dimension: name,
                    level: level.unwrap_or(name),
                    attributes,
                    members,
                }))
            }
            ["query"] => {
                expect(Method::Post)?;
                let q: CubeQuery = req.json()?;
                let result = olap::execute(snap, &q)?;
                Ok(ApiResponse::new(200, JSON, result.to_canonical_json().into_bytes()))
            }
            ["navigate"] => {
                expect(Method::Post)?;
                let nav: NavigateRequest = req.json()?;
                let schema = snap.require_schema()?;
                let q = &nav.query;
                let next = match nav.step {
                    Navigation::RollUp { dimension } => olap::roll_up(schema, q, &dimension),
                    Navigation::DrillDown { dimension } => olap::drill_down(schema, q, &dimension),
                    Navigation::Slice {
                        dimension,
                        level,
                        value,
                    } => olap::slice(schema, q, &dimension, &level, value),
                    Navigation::Dice { filters } => olap::dice(schema, q, filters),
                }?;
                olap::validate_query(schema, &next)?;
                Ok(ApiResponse::json(&next))
            }
            ["facts", table, "attribute-value"] => {
                expect(Method::Get)?;
                let filters = match req.param("filters").filter(|f| !f.is_empty()) {
                    Some(text) => serde_json::from_str(text)
                        .map_err(|e| ApiError::bad_request(e.to_string()).at("filters"))?,
                    None => Vec::new(),
                };
                let selection = Selection {
                    fact: table.to_string(),
                    dimension: req.required("dimension")?.to_string(),
                    attribute: req.required("attribute")?.to_string(),
                    measures: req
                        .param("measures")
                        .map(|m| m.split(',').filter(|s| !s.is_empty()).map(str::to_string).collect())
                        .unwrap_or_default(),
                    filters,
                };
                let view = olap::export_attribute_value(snap, &selection)?;
                Ok(ApiResponse::new(200, "text/csv; charset=utf-8", view.to_csv()?.into_bytes()))
            }
            ["complex", group, id] => {
                expect(Method::Get)?;
                let id = parse_id(id)?;
                Ok(ApiResponse::json(&olap::assemble_complex_fact(snap, group, id)?))
            }
            ["documents", id] => {
                expect(Method::Get)?;
                let id = parse_id(id)?;
                let (doc, bytes) = snap.read_document(id)?;
                let mut resp = ApiResponse::new(200, &doc.media_type, bytes);
                resp.headers.push((CHECKSUM_HEADER.to_string(), doc.checksum.to_string()));
                Ok(resp)
            }
            ["load"] => {
                expect(Method::Post)?;
                if self.read_only {
                    return Err(ApiError::new(ErrorCode::ReadOnly, "this service was started read-only"));
                }
                let load: LoadRequest = req.json()?;
                self.load(&load)
            }
            _ => Err(ApiError::not_found(format!("no route for {}", req.path))),
        }
    }

    fn load(&self, req: &LoadRequest) -> Result<ApiResponse, ApiError> {
        let manifest = SourcesManifest::read(&req.manifest)?;
        let (rules, intervals) = load_rules(&manifest)?;
        let schema = match &req.schema {
            Some(path) => {
                let text = SourceText::read(path).map_err(|e| {
                    ApiError::new(ErrorCode::IoError, format!("{}: {e}", path.display()))
                })?;
                let schema = parse_schema(&text).map_err(|diags| {
                    let first = &diags[0];
                    ApiError::new(ErrorCode::ValidationFailed, first.message.clone())
                        .at(format!("{}:{}", path.display(), first.pos.line))
                })?;
                Some(schema)
            }
            None => None,
        };
        match schema.or_else(|| self.catalog.snapshot().schema().map(|s| s.as_ref().clone())) {
            Some(schema) => {
                prepare_catalog(&self.catalog, &schema, Some(intervals))?;
            }
            None => {
                return Err(ApiError::new(
                    ErrorCode::ValidationFailed,
                    "the catalog has no schema; pass one with the load request",
                ))
            }
        }
        let outcomes = run_manifest(&self.catalog, &manifest, &rules)?;
        let snap = self.catalog.snapshot();
        let mut resp = ApiResponse::json(&LoadResponse {
            generation: snap.generation(),
            outcomes,
        });
        resp.headers.push((SCHEMA_VERSION_HEADER.to_string(), schema_version(&snap)));
        Ok(resp)
    }
}

fn schema_version(snap: &Snapshot) -> String {
    snap.schema().map_or_else(|| "none".to_string(), |s| s.version.to_string())
}

fn parse_id(raw: &str) -> Result<u64, ApiError> {
    raw.parse()
        .map_err(|_| ApiError::bad_request(format!("`{raw}` is not a numeric id")).at("path"))
}
