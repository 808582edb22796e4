//! HTTP implementations of the adapters.
//!
//! Every adapter POSTs JSON to its endpoint and expects JSON back. Audio
//! travels as `{"sample_rate": u32, "samples": [f64, ...]}`.
//!
//! | adapter    | request body                                                                | response body                                   |
//! |------------|-----------------------------------------------------------------------------|-------------------------------------------------|
//! | transcript | `{head_text, tail_text, head_emotion, tail_emotion, target_words, prompt}`   | `{"reply": str}` or the option object itself     |
//! | tts        | `{text, prefix: audio, suffix: audio, duration_secs, attempt}`               | audio                                           |
//! | speaker    | audio                                                                       | `{"embedding": [f64, ...]}`                     |
//! | asr        | audio                                                                       | `{"text": str}`                                 |
//!
//! Endpoints come from [`TRANSCRIPT_URL`], [`TTS_URL`], [`SPEAKER_URL`] and
//! [`ASR_URL`]; [`API_KEY`], when set, is sent as a bearer token.

use std::time::Duration;

use emogest_core::AudioClip;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::adapters::{
    Adapters, AsrAdapter, SpeakerAdapter, TranscriptAdapter, TranscriptRequest, TransitionCandidate, TtsAdapter,
    TtsRequest,
};
use crate::error::{DataError, Result};

pub const TRANSCRIPT_URL: &str = "EMOGEST_TRANSCRIPT_URL";
pub const TTS_URL: &str = "EMOGEST_TTS_URL";
pub const SPEAKER_URL: &str = "EMOGEST_SPEAKER_URL";
pub const ASR_URL: &str = "EMOGEST_ASR_URL";
pub const API_KEY: &str = "EMOGEST_API_KEY";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AudioBody {
    pub sample_rate: u32,
    pub samples: Vec<f64>,
}

impl From<&AudioClip> for AudioBody {
    fn from(a: &AudioClip) -> Self {
        Self {
            sample_rate: a.sample_rate,
            samples: a.samples.clone(),
        }
    }
}

/// Prompt sent alongside the structured transcript request.
pub fn transcript_prompt(req: &TranscriptRequest) -> String {
    format!(
        "Two speech segments by the same speaker are separated by a short gap. The first sounds {}, \
         the second sounds {}.\nFirst: \"{}\"\nSecond: \"{}\"\nWrite a transition of {} words that links \
         them naturally. Give three potential options along with your confidence level (1-5) as JSON: \
         {{\"opt1\": \"...\", \"opt2\": \"...\", \"opt3\": \"...\", \"confi\": n}}",
        req.head_emotion, req.tail_emotion, req.head_text, req.tail_text, req.target_words
    )
}

#[derive(Debug, Clone)]
pub struct HttpEndpoint {
    name: &'static str,
    url: String,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
}

impl HttpEndpoint {
    pub fn new(name: &'static str, url: impl Into<String>, api_key: Option<String>) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(120))
            .build()
            .map_err(|e| DataError::adapter(name, e.to_string()))?;
        Ok(Self {
            name,
            url: url.into(),
            api_key,
            client,
        })
    }

    fn post<B: Serialize, R: for<'de> Deserialize<'de>>(&self, body: &B) -> Result<R> {
        let mut req = self.client.post(&self.url).json(body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| DataError::adapter(self.name, e.to_string()))?;
        let status = resp.status();
        if !status.is_success() {
            return Err(DataError::adapter(self.name, format!("HTTP {status}")));
        }
        resp.json().map_err(|e| DataError::adapter(self.name, format!("bad response body: {e}")))
    }
}

pub struct HttpTranscript(pub HttpEndpoint);
pub struct HttpTts(pub HttpEndpoint);
pub struct HttpSpeaker(pub HttpEndpoint);
pub struct HttpAsr(pub HttpEndpoint);

impl TranscriptAdapter for HttpTranscript {
    fn complete(&self, req: &TranscriptRequest) -> Result<TransitionCandidate> {
        let body = json!({
            "head_text": req.head_text,
            "tail_text": req.tail_text,
            "head_emotion": req.head_emotion,
            "tail_emotion": req.tail_emotion,
            "target_words": req.target_words,
            "prompt": transcript_prompt(req),
        });
        let v: Value = self.0.post(&body)?;
        match v.get("reply").and_then(Value::as_str) {
            Some(reply) => TransitionCandidate::parse(reply),
            None => TransitionCandidate::parse(&v.to_string()),
        }
    }
}

impl TtsAdapter for HttpTts {
    fn inpaint(&self, req: &TtsRequest) -> Result<AudioClip> {
        let body = json!({
            "text": req.text,
            "prefix": AudioBody::from(req.prefix),
            "suffix": AudioBody::from(req.suffix),
            "duration_secs": req.duration_secs,
            "attempt": req.attempt,
        });
        let a: AudioBody = self.0.post(&body)?;
        Ok(AudioClip::new(a.samples, a.sample_rate)?)
    }
}

impl SpeakerAdapter for HttpSpeaker {
    fn embed(&self, audio: &AudioClip) -> Result<Vec<f64>> {
        #[derive(Deserialize)]
        struct Resp {
            embedding: Vec<f64>,
        }
        let r: Resp = self.0.post(&AudioBody::from(audio))?;
        Ok(r.embedding)
    }
}

impl AsrAdapter for HttpAsr {
    fn transcribe(&self, audio: &AudioClip) -> Result<String> {
        #[derive(Deserialize)]
        struct Resp {
            text: String,
        }
        let r: Resp = self.0.post(&AudioBody::from(audio))?;
        Ok(r.text)
    }
}

/// Builds all four HTTP adapters from environment variables.
pub fn adapters_from_env() -> Result<Adapters> {
    let var = |name: &str| {
        std::env::var(name).map_err(|_| {
            DataError::Invalid(format!(
                "{name} is not set; set the adapter endpoints or use --mock-adapters / --synthetic"
            ))
        })
    };
    let key = std::env::var(API_KEY).ok();
    Ok(Adapters {
        transcript: Box::new(HttpTranscript(HttpEndpoint::new("transcript", var(TRANSCRIPT_URL)?, key.clone())?)),
        tts: Box::new(HttpTts(HttpEndpoint::new("tts", var(TTS_URL)?, key.clone())?)),
        speaker: Box::new(HttpSpeaker(HttpEndpoint::new("speaker", var(SPEAKER_URL)?, key.clone())?)),
        asr: Box::new(HttpAsr(HttpEndpoint::new("asr", var(ASR_URL)?, key)?)),
    })
}

#[cfg(test)]
mod tests {
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::thread;

    use super::*;

    /// Serves one canned JSON response and returns the request body it saw.
    fn serve_once(status: u16, body: &'static str) -> (String, thread::JoinHandle<String>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/", listener.local_addr().unwrap());
        let handle = thread::spawn(move || {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut len = 0;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if line.trim().is_empty() {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
            }
            let mut buf = vec![0; len];
            reader.read_exact(&mut buf).unwrap();
            let mut stream = stream;
            write!(
                stream,
                "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                body.len()
            )
            .unwrap();
            String::from_utf8(buf).unwrap()
        });
        (url, handle)
    }

    #[test]
    fn transcript_over_http() {
        let (url, h) = serve_once(200, r#"{"reply": "ok {\"opt1\":\"a b\",\"opt2\":\"c\",\"opt3\":\"d\",\"confi\":5,}"}"#);
        let a = HttpTranscript(HttpEndpoint::new("transcript", url, Some("k".into())).unwrap());
        let req = TranscriptRequest {
            head_text: "hi",
            tail_text: "bye",
            head_emotion: "neutral",
            tail_emotion: "anger",
            target_words: 10,
        };
        let c = a.complete(&req).unwrap();
        assert_eq!(c.options[0], "a b");
        let sent: Value = serde_json::from_str(&h.join().unwrap()).unwrap();
        assert_eq!(sent["target_words"], 10);
        assert!(sent["prompt"].as_str().unwrap().contains("10 words"));
    }

    #[test]
    fn audio_adapters_over_http() {
        let clip = AudioClip::new(vec![0.0, 0.5], 8000).unwrap();
        let (url, h) = serve_once(200, r#"{"text": "hello there"}"#);
        let asr = HttpAsr(HttpEndpoint::new("asr", url, None).unwrap());
        assert_eq!(asr.transcribe(&clip).unwrap(), "hello there");
        let sent: AudioBody = serde_json::from_str(&h.join().unwrap()).unwrap();
        assert_eq!(sent.samples, vec![0.0, 0.5]);

        let (url, _h) = serve_once(200, r#"{"sample_rate": 8000, "samples": [0.1, 0.2, 0.3]}"#);
        let tts = HttpTts(HttpEndpoint::new("tts", url, None).unwrap());
        let req = TtsRequest {
            text: "x",
            prefix: &clip,
            suffix: &clip,
            duration_secs: 2.0,
            attempt: 0,
        };
        assert_eq!(tts.inpaint(&req).unwrap().len(), 3);

        let (url, _h) = serve_once(500, "{}");
        let spk = HttpSpeaker(HttpEndpoint::new("speaker", url, None).unwrap());
        let err = spk.embed(&clip).unwrap_err().to_string();
        assert!(err.contains("speaker") && err.contains("500"), "{err}");
    }
}
