//! axum adapter around [`Service`].

use std::io;
use std::net::SocketAddr;
use std::sync::Arc;
use std::thread::JoinHandle;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::{header, HeaderMap, HeaderName, HeaderValue, Method as HttpMethod, StatusCode, Uri};
use axum::response::{IntoResponse, Response as AxumResponse};
use axum::Router;
use log::{error, info};
use tokio::net::TcpListener;
use tokio::sync::oneshot;
use tower_http::cors::{Any, CorsLayer};

use crate::service::{Method, Request, Response, Service, AUTH_HEADER};

pub fn router(service: Arc<Service>) -> Router {
    // the dashboard is served from its own origin
    let cors = CorsLayer::new()
        .allow_origin(Any)
        .allow_methods([HttpMethod::GET, HttpMethod::POST])
        .allow_headers([header::CONTENT_TYPE, HeaderName::from_static(AUTH_HEADER)]);
    // routing happens in Service::handle so every transport answers the same way
    Router::new().fallback(dispatch).with_state(service).layer(cors)
}

async fn dispatch(
    State(service): State<Arc<Service>>,
    method: HttpMethod,
    uri: Uri,
    headers: HeaderMap,
    body: Bytes,
) -> AxumResponse {
    let method = match method {
        HttpMethod::GET => Method::Get,
        HttpMethod::POST => Method::Post,
        _ => Method::Other,
    };
    let path = uri.path().to_owned();
    let query = uri.query().unwrap_or_default().to_owned();
    let token = headers
        .get(AUTH_HEADER)
        .and_then(|v| v.to_str().ok())
        .map(str::to_owned);
    let body = String::from_utf8_lossy(&body).into_owned();

    // store appends do blocking file I/O
    let result = tokio::task::spawn_blocking(move || {
        service.handle(&Request {
            method,
            path: &path,
            query: &query,
            body: &body,
            auth_token: token.as_deref(),
        })
    })
    .await;

    match result {
        Ok(resp) => into_axum(resp),
        Err(e) => {
            error!("request handler failed: {e}");
            (StatusCode::INTERNAL_SERVER_ERROR, "ERR INTERNAL").into_response()
        }
    }
}

fn into_axum(resp: Response) -> AxumResponse {
    let status = StatusCode::from_u16(resp.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
    let mut out = (status, resp.body).into_response();
    out.headers_mut()
        .insert(header::CONTENT_TYPE, HeaderValue::from_static(resp.content_type.mime()));
    out
}

pub async fn serve(listener: TcpListener, service: Arc<Service>) -> io::Result<()> {
    axum::serve(listener, router(service)).await
}

/// A server running on its own runtime thread; shut down on drop.
pub struct ServerHandle {
    addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<JoinHandle<()>>,
}

impl ServerHandle {
    /// Binds `listen` (use port 0 for an ephemeral port) and starts serving.
    pub fn spawn(service: Arc<Service>, listen: &str) -> io::Result<ServerHandle> {
        let std_listener = std::net::TcpListener::bind(listen)?;
        std_listener.set_nonblocking(true)?;
        let addr = std_listener.local_addr()?;
        let (tx, rx) = oneshot::channel::<()>();
        let runtime = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(2)
            .enable_all()
            .build()?;
        let thread = std::thread::Builder::new()
            .name(format!("ingest-{}", addr.port()))
            .spawn(move || {
                runtime.block_on(async move {
                    let listener = match TcpListener::from_std(std_listener) {
                        Ok(l) => l,
                        Err(e) => {
                            error!("listener setup failed: {e}");
                            return;
                        }
                    };
                    let server = axum::serve(listener, router(service)).with_graceful_shutdown(async {
                        let _ = rx.await;
                    });
                    if let Err(e) = server.await {
                        error!("server error: {e}");
                    }
                });
            })?;
        info!("ingest service listening on {addr}");
        Ok(ServerHandle {
            addr,
            shutdown: Some(tx),
            thread: Some(thread),
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn shutdown(mut self) {
        self.stop();
    }

    fn stop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.stop();
    }
}
