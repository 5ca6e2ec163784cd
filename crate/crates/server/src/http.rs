//! HTTP transport over `tiny_http`: a fixed pool of worker threads pulling
//! requests from one listener and answering through [`Service::handle`].

use std::io::Read;
use std::net::{SocketAddr, TcpListener};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;

use tiny_http::{Header, Response, Server};
use warebus::store::{open_catalog, OpenMode, StoreError};

use crate::api::{ApiRequest, Method, Service};
use crate::error::ApiError;

/// Largest request body accepted, in bytes.
pub const MAX_BODY: u64 = 16 * 1024 * 1024;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServerConfig {
    pub catalog: PathBuf,
    pub bind: String,
    pub port: u16,
    pub read_only: bool,
    pub threads: usize,
}

impl ServerConfig {
    pub fn new(catalog: impl Into<PathBuf>, port: u16) -> Self {
        ServerConfig {
            catalog: catalog.into(),
            bind: "127.0.0.1".to_string(),
            port,
            read_only: false,
            threads: 4,
        }
    }

    pub fn validate(&self) -> Result<(), ServeError> {
        if self.port == 0 {
            return Err(ServeError::Config("port must be between 1 and 65535".into()));
        }
        if self.threads == 0 {
            return Err(ServeError::Config("at least one worker thread is needed".into()));
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("cannot open catalog: {0}")]
    Catalog(#[from] StoreError),
    #[error("cannot listen on {addr}: {source}")]
    Bind { addr: String, source: std::io::Error },
}

pub struct RunningServer {
    addr: SocketAddr,
    server: Arc<Server>,
    stopping: Arc<AtomicBool>,
    workers: Vec<JoinHandle<()>>,
}

impl RunningServer {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// Blocks until every worker exits.
    pub fn join(self) {
        for w in self.workers {
            let _ = w.join();
        }
    }

    /// Stops accepting requests and waits for in-flight ones to finish.
    pub fn shutdown(self) {
        self.stopping.store(true, Ordering::SeqCst);
        for _ in &self.workers {
            self.server.unblock();
        }
        self.join();
    }
}

fn respond(service: &Service, mut rq: tiny_http::Request) {
    let method = Method::parse(rq.method().as_str());
    let mut body = Vec::new();
    let too_big = rq.body_length().is_some_and(|n| n as u64 > MAX_BODY);
    let read = if too_big {
        Ok(0)
    } else {
        rq.as_reader().take(MAX_BODY + 1).read_to_end(&mut body)
    };
    let api = match read {
        Ok(_) if !too_big && body.len() as u64 <= MAX_BODY => {
            service.handle(&ApiRequest::new(method, rq.url(), body))
        }
        _ => service.reject(&ApiError::bad_request(format!("unreadable body or larger than {MAX_BODY} bytes"))),
    };
    let mut response = Response::from_data(api.body).with_status_code(api.status);
    let content_type = Header::from_bytes("Content-Type", api.content_type.as_bytes()).expect("valid header");
    response.add_header(content_type);
    for (k, v) in &api.headers {
        if let Ok(h) = Header::from_bytes(k.as_bytes(), v.as_bytes()) {
            response.add_header(h);
        }
    }
    // The client may have gone away; nothing else to do then.
    let _ = rq.respond(response);
}

/// Serves `service` on an already bound listener.
pub fn start(service: Arc<Service>, listener: TcpListener, threads: usize) -> Result<RunningServer, ServeError> {
    let addr = listener.local_addr().map_err(|e| ServeError::Bind {
        addr: "listener".into(),
        source: e,
    })?;
    let server = Server::from_listener(listener, None).map_err(|e| ServeError::Bind {
        addr: addr.to_string(),
        source: std::io::Error::other(e.to_string()),
    })?;
    let server = Arc::new(server);
    let stopping = Arc::new(AtomicBool::new(false));
    let workers = (0..threads.max(1))
        .map(|_| {
            let server = Arc::clone(&server);
            let service = Arc::clone(&service);
            let stopping = Arc::clone(&stopping);
            std::thread::spawn(move || loop {
                match server.recv() {
                    Ok(rq) => respond(&service, rq),
                    Err(_) if stopping.load(Ordering::SeqCst) => break,
                    // A failed accept only affects that connection.
                    Err(_) => continue,
                }
            })
        })
        .collect();
    Ok(RunningServer {
        addr,
        server,
        stopping,
        workers,
    })
}

/// Opens the catalog and starts serving it.
pub fn bind(config: &ServerConfig) -> Result<RunningServer, ServeError> {
    config.validate()?;
    let mode = if config.read_only {
        OpenMode::ReadOnly
    } else {
        OpenMode::ReadWrite
    };
    let catalog = open_catalog(&config.catalog, mode)?;
    let addr = format!("{}:{}", config.bind, config.port);
    let listener = TcpListener::bind(&addr).map_err(|source| ServeError::Bind { addr, source })?;
    start(Arc::new(Service::new(catalog, config.read_only)), listener, config.threads)
}
