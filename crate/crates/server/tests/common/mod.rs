#![allow(dead_code)]

use srss_core::manifest::write_sample_set;
use srss_core::{Image, SampleSet, ScaleFactor, StudyConfig};
use srss_server::{serve, App, ServeOptions, Store};
use std::net::SocketAddr;
use std::path::Path;
use tokio::sync::oneshot;

pub fn candidate(i: usize, w: usize, c: usize) -> Image {
    Image::from_fn(w, w, c, |x, y, ch| {
        ((x * 7 + y * 3 + i * 11 + ch * 5) % 256) as f64 / 255.0
    })
    .unwrap()
}

/// Writes a set with `n` candidates of `4*lr` pixels and an HR image.
pub fn write_set(parent: &Path, id: &str, n: usize, lr: usize, question: Option<&str>) -> Image {
    let c = 3;
    let lr_img = Image::filled(lr, lr, c, 0.5).unwrap();
    let cands = (0..n).map(|i| candidate(i, lr * 4, c)).collect();
    let set = SampleSet::new(
        id,
        lr_img,
        cands,
        ScaleFactor::X4,
        question.map(String::from),
    )
    .unwrap();
    let hr = Image::filled(lr * 4, lr * 4, c, 0.9).unwrap();
    write_sample_set(parent, &set, Some(&hr)).unwrap();
    hr
}

pub struct Running {
    pub addr: SocketAddr,
    pub client: reqwest::Client,
    stop: Option<oneshot::Sender<()>>,
    handle: Option<tokio::task::JoinHandle<()>>,
}

impl Running {
    pub fn url(&self, path: &str) -> String {
        format!("http://{}{}", self.addr, path)
    }

    pub async fn shutdown(mut self) {
        let _ = self.stop.take().unwrap().send(());
        self.handle.take().unwrap().await.unwrap();
    }
}

pub async fn start(root: &Path, config: StudyConfig) -> Running {
    let store = Store::open(root).unwrap();
    let app = App::new(config, store).unwrap();
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    let (tx, rx) = oneshot::channel::<()>();
    let handle = tokio::spawn(async move {
        serve(app, listener, ServeOptions::default(), async {
            let _ = rx.await;
        })
        .await
        .unwrap();
    });
    Running {
        addr,
        client: reqwest::Client::new(),
        stop: Some(tx),
        handle: Some(handle),
    }
}
