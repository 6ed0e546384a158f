//! Thin async client for the g2t HTTP/JSON service.

use std::time::Duration;

use g2t_core::api::{
    BenchRequest, BenchResponse, ErrorBody, ExportEmbeddingsRequest, GenerateRequest, GenerateResponse,
    GraphDumpRequest, Health, JobState, JobStatus, ReportRequest, ReportResponse, SolveRequest, TextResponse,
    TrainRequest, TrainResponse,
};
use g2t_core::bench::BenchRecord;
use serde::de::DeserializeOwned;
use serde::Serialize;

pub const DEFAULT_SERVER: &str = "http://127.0.0.1:7878";

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("transport: {0}")]
    Transport(#[from] reqwest::Error),
    /// The service answered with an error status.
    #[error("server returned {status}: {message}")]
    Server { status: u16, message: String },
    #[error("job {id} failed: {message}")]
    JobFailed { id: String, message: String },
    #[error("job {id} result: {message}")]
    BadJobResult { id: String, message: String },
}

#[derive(Debug, Clone)]
pub struct Client {
    base: String,
    http: reqwest::Client,
    /// Delay between job status polls.
    pub poll_interval: Duration,
}

impl Client {
    pub fn new(base: impl Into<String>) -> Self {
        Client { base: base.into().trim_end_matches('/').to_string(), http: reqwest::Client::new(), poll_interval: Duration::from_millis(500) }
    }

    async fn decode<T: DeserializeOwned>(resp: reqwest::Response) -> Result<T, ClientError> {
        let status = resp.status();
        if status.is_success() {
            return Ok(resp.json().await?);
        }
        let text = resp.text().await?;
        let message = serde_json::from_str::<ErrorBody>(&text).map(|e| e.error).unwrap_or(text);
        Err(ClientError::Server { status: status.as_u16(), message })
    }

    async fn post<B: Serialize, T: DeserializeOwned>(&self, path: &str, body: &B) -> Result<T, ClientError> {
        Self::decode(self.http.post(format!("{}{path}", self.base)).json(body).send().await?).await
    }

    async fn get<T: DeserializeOwned>(&self, path: &str) -> Result<T, ClientError> {
        Self::decode(self.http.get(format!("{}{path}", self.base)).send().await?).await
    }

    pub async fn health(&self) -> Result<Health, ClientError> {
        self.get("/health").await
    }

    pub async fn generate(&self, req: &GenerateRequest) -> Result<GenerateResponse, ClientError> {
        self.post("/corpus/generate", req).await
    }

    pub async fn start_train(&self, req: &TrainRequest) -> Result<JobStatus, ClientError> {
        self.post("/jobs/train", req).await
    }

    pub async fn start_bench(&self, req: &BenchRequest) -> Result<JobStatus, ClientError> {
        self.post("/jobs/bench", req).await
    }

    pub async fn job(&self, id: &str) -> Result<JobStatus, ClientError> {
        self.get(&format!("/jobs/{id}")).await
    }

    /// Polls a job until it leaves the running state; `on_progress` sees
    /// every new progress line.
    pub async fn wait<T: DeserializeOwned>(&self, id: &str, mut on_progress: impl FnMut(&str)) -> Result<T, ClientError> {
        let mut last = None;
        loop {
            let s = self.job(id).await?;
            if s.progress.is_some() && s.progress != last {
                on_progress(s.progress.as_deref().unwrap_or_default());
                last = s.progress.clone();
            }
            match s.state {
                JobState::Running => tokio::time::sleep(self.poll_interval).await,
                JobState::Failed => {
                    return Err(ClientError::JobFailed { id: id.into(), message: s.error.unwrap_or_default() })
                }
                JobState::Done => {
                    let v = s.result.unwrap_or_default();
                    return serde_json::from_value(v)
                        .map_err(|e| ClientError::BadJobResult { id: id.into(), message: e.to_string() });
                }
            }
        }
    }

    pub async fn train(&self, req: &TrainRequest, on_progress: impl FnMut(&str)) -> Result<TrainResponse, ClientError> {
        let job = self.start_train(req).await?;
        self.wait(&job.id, on_progress).await
    }

    pub async fn bench(&self, req: &BenchRequest, on_progress: impl FnMut(&str)) -> Result<BenchResponse, ClientError> {
        let job = self.start_bench(req).await?;
        self.wait(&job.id, on_progress).await
    }

    pub async fn report(&self, req: &ReportRequest) -> Result<ReportResponse, ClientError> {
        self.post("/report", req).await
    }

    pub async fn solve(&self, req: &SolveRequest) -> Result<BenchRecord, ClientError> {
        self.post("/solve", req).await
    }

    pub async fn graph_dump(&self, req: &GraphDumpRequest) -> Result<TextResponse, ClientError> {
        self.post("/graph/dump", req).await
    }

    pub async fn export_embeddings(&self, req: &ExportEmbeddingsRequest) -> Result<TextResponse, ClientError> {
        self.post("/embeddings/export", req).await
    }
}
