//! Question/answer protocol for an out-of-process perceiver.
//!
//! Requests and responses are single-line JSON objects. Each degradation is
//! asked about in turn with `Is there <dis> in this image?`; a "Yes" to noise
//! triggers the intensity question with options A/B/C.

use std::io::{BufRead, BufReader, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::path::{Path, PathBuf};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{InternalPerceiver, Perceiver, PerceptionOutcome};
use crate::error::{Error, Result};
use crate::labels::{LabelBit, PerceptionVector};
use crate::ImageF;

pub const NOISE_INTENSITY_QUESTION: &str =
    "What is the intensity of the noise present in this image: A. low B. medium C. high.";

/// Question order and the `<dis>` phrase for each degradation; noise first so
/// its follow-up comes right after its answer.
pub const DEGRADATION_PHRASES: [(&str, Option<LabelBit>); 8] = [
    ("noise", None),
    ("JPEG compression artifacts", Some(LabelBit::Jpeg)),
    ("rain", Some(LabelBit::Rain)),
    ("haze", Some(LabelBit::Haze)),
    ("motion blur", Some(LabelBit::MotionBlur)),
    ("defocus blur", Some(LabelBit::DefocusBlur)),
    ("low light", Some(LabelBit::LowLight)),
    ("low resolution", Some(LabelBit::LowRes)),
];

pub fn presence_question(dis: &str) -> String {
    format!("Is there {dis} in this image?")
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PerceiverQuestion {
    pub id: u64,
    pub image: String,
    pub question: String,
    pub dis: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PerceiverAnswer {
    pub id: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub choice: Option<String>,
}

/// One request/response exchange over a line-delimited channel.
pub trait Transport: Send {
    fn exchange(&mut self, line: &str, timeout: Duration) -> Result<String>;
}

/// Adapts a closure; handy for stubs.
pub struct FnTransport<F>(pub F);

impl<F: FnMut(&str) -> Result<String> + Send> Transport for FnTransport<F> {
    fn exchange(&mut self, line: &str, _timeout: Duration) -> Result<String> {
        (self.0)(line)
    }
}

/// Child process speaking the protocol on stdin/stdout.
pub struct StdioTransport {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<std::io::Result<String>>,
}

impl StdioTransport {
    pub fn spawn(program: &str, args: &[String]) -> Result<Self> {
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Error::Transport(format!("spawn {program}: {e}")))?;
        let stdin = child
            .stdin
            .take()
            .ok_or_else(|| Error::Transport("no stdin".into()))?;
        let stdout = child
            .stdout
            .take()
            .ok_or_else(|| Error::Transport("no stdout".into()))?;
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        Ok(Self {
            child,
            stdin,
            lines: rx,
        })
    }
}

impl Transport for StdioTransport {
    fn exchange(&mut self, line: &str, timeout: Duration) -> Result<String> {
        writeln!(self.stdin, "{line}").map_err(|e| Error::Transport(e.to_string()))?;
        self.stdin
            .flush()
            .map_err(|e| Error::Transport(e.to_string()))?;
        match self.lines.recv_timeout(timeout) {
            Ok(Ok(l)) => Ok(l),
            Ok(Err(e)) => Err(Error::Transport(e.to_string())),
            Err(mpsc::RecvTimeoutError::Timeout) => Err(Error::Transport("timed out".into())),
            Err(mpsc::RecvTimeoutError::Disconnected) => {
                Err(Error::Transport("perceiver exited".into()))
            }
        }
    }
}

impl Drop for StdioTransport {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// TCP connection speaking the protocol.
pub struct TcpTransport {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
}

impl TcpTransport {
    pub fn connect(addr: &str, timeout: Duration) -> Result<Self> {
        let sock = addr
            .to_socket_addrs()
            .map_err(|e| Error::Transport(format!("{addr}: {e}")))?
            .next()
            .ok_or_else(|| Error::Transport(format!("{addr}: no address")))?;
        let stream = TcpStream::connect_timeout(&sock, timeout)
            .map_err(|e| Error::Transport(e.to_string()))?;
        let writer = stream
            .try_clone()
            .map_err(|e| Error::Transport(e.to_string()))?;
        Ok(Self {
            reader: BufReader::new(stream),
            writer,
        })
    }
}

impl Transport for TcpTransport {
    fn exchange(&mut self, line: &str, timeout: Duration) -> Result<String> {
        let io = |e: std::io::Error| Error::Transport(e.to_string());
        self.reader
            .get_ref()
            .set_read_timeout(Some(timeout))
            .map_err(io)?;
        writeln!(self.writer, "{line}").map_err(io)?;
        self.writer.flush().map_err(io)?;
        let mut buf = String::new();
        let n = self.reader.read_line(&mut buf).map_err(io)?;
        if n == 0 {
            return Err(Error::Transport("connection closed".into()));
        }
        Ok(buf.trim_end().to_string())
    }
}

fn ask(
    transport: &mut dyn Transport,
    q: &PerceiverQuestion,
    timeout: Duration,
) -> Result<PerceiverAnswer> {
    let line = serde_json::to_string(q)?;
    let reply = transport.exchange(&line, timeout)?;
    let a: PerceiverAnswer = serde_json::from_str(reply.trim())
        .map_err(|e| Error::MalformedAnswer(format!("{e}: {reply}")))?;
    if a.id != q.id {
        return Err(Error::MalformedAnswer(format!(
            "expected id {}, got {}",
            q.id, a.id
        )));
    }
    Ok(a)
}

fn yes_no(a: &PerceiverAnswer) -> Result<bool> {
    match a.answer.as_deref().map(str::trim) {
        Some(s) if s.eq_ignore_ascii_case("yes") => Ok(true),
        Some(s) if s.eq_ignore_ascii_case("no") => Ok(false),
        other => Err(Error::MalformedAnswer(format!(
            "expected Yes/No, got {other:?}"
        ))),
    }
}

/// Asks the full question sequence about `image_ref`. Question ids start at
/// `first_id` and increase by one.
pub fn external_perceive(
    image_ref: &Path,
    transport: &mut dyn Transport,
    timeout: Duration,
    first_id: u64,
) -> Result<PerceptionVector> {
    let image = image_ref.display().to_string();
    let mut id = first_id;
    let mut v = PerceptionVector::empty();
    for (dis, bit) in DEGRADATION_PHRASES {
        let q = PerceiverQuestion {
            id,
            image: image.clone(),
            question: presence_question(dis),
            dis: dis.to_string(),
        };
        id += 1;
        if !yes_no(&ask(transport, &q, timeout)?)? {
            continue;
        }
        match bit {
            Some(b) => v.set(b),
            None => {
                let q = PerceiverQuestion {
                    id,
                    image: image.clone(),
                    question: NOISE_INTENSITY_QUESTION.to_string(),
                    dis: dis.to_string(),
                };
                id += 1;
                let a = ask(transport, &q, timeout)?;
                let bit = match a.choice.as_deref().map(str::trim) {
                    Some("A") => LabelBit::NoiseLow,
                    Some("B") => LabelBit::NoiseMid,
                    Some("C") => LabelBit::NoiseHigh,
                    other => {
                        return Err(Error::MalformedAnswer(format!(
                            "expected A/B/C, got {other:?}"
                        )))
                    }
                };
                v.set(bit);
            }
        }
    }
    Ok(v)
}

/// External perceiver with the internal detectors as fallback on any
/// transport or protocol failure.
pub struct ExternalPerceiver {
    transport: Mutex<(Box<dyn Transport>, u64)>,
    pub timeout: Duration,
    pub fallback: InternalPerceiver,
}

impl ExternalPerceiver {
    pub fn new(
        transport: Box<dyn Transport>,
        timeout: Duration,
        fallback: InternalPerceiver,
    ) -> Self {
        Self {
            transport: Mutex::new((transport, 0)),
            timeout,
            fallback,
        }
    }

    /// `tcp://host:port`, or a command line for a stdio child process.
    pub fn from_endpoint(
        endpoint: &str,
        timeout: Duration,
        fallback: InternalPerceiver,
    ) -> Result<Self> {
        let transport: Box<dyn Transport> = match endpoint.strip_prefix("tcp://") {
            Some(addr) => Box::new(TcpTransport::connect(addr, timeout)?),
            None => {
                let mut parts = endpoint.split_whitespace();
                let prog = parts
                    .next()
                    .ok_or_else(|| Error::Transport("empty endpoint".into()))?;
                let args: Vec<String> = parts.map(str::to_string).collect();
                Box::new(StdioTransport::spawn(prog, &args)?)
            }
        };
        Ok(Self::new(transport, timeout, fallback))
    }
}

impl Perceiver for ExternalPerceiver {
    fn perceive(&self, img: &ImageF, image_ref: Option<&Path>) -> Result<PerceptionOutcome> {
        let path = image_ref
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("<memory>"));
        let answer = {
            let mut guard = self.transport.lock().unwrap_or_else(|p| p.into_inner());
            let (ref mut t, ref mut next_id) = *guard;
            let start = *next_id;
            let r = external_perceive(&path, t.as_mut(), self.timeout, start);
            *next_id = start + 16;
            r
        };
        match answer {
            Ok(vector) => Ok(PerceptionOutcome {
                vector,
                report: None,
                fallback: None,
            }),
            Err(e) => {
                log::warn!(
                    "external perceiver failed for {}: {e}; using internal detectors",
                    path.display()
                );
                let mut out = self.fallback.perceive(img, image_ref)?;
                out.fallback = Some(e.to_string());
                Ok(out)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stub(
        yes_for: &'static [&'static str],
        choice: &'static str,
    ) -> FnTransport<impl FnMut(&str) -> Result<String> + Send> {
        FnTransport(move |line: &str| {
            let q: PerceiverQuestion = serde_json::from_str(line).unwrap();
            let a = if q.question == NOISE_INTENSITY_QUESTION {
                PerceiverAnswer {
                    id: q.id,
                    answer: None,
                    choice: Some(choice.into()),
                }
            } else {
                assert_eq!(q.question, presence_question(&q.dis));
                let yes = yes_for.contains(&q.dis.as_str());
                PerceiverAnswer {
                    id: q.id,
                    answer: Some(if yes { "Yes" } else { "No" }.into()),
                    choice: None,
                }
            };
            Ok(serde_json::to_string(&a).unwrap())
        })
    }

    fn ask_all(t: &mut dyn Transport) -> Result<PerceptionVector> {
        external_perceive(Path::new("x.png"), t, Duration::from_secs(1), 0)
    }

    #[test]
    fn all_no_is_empty() {
        assert!(ask_all(&mut stub(&[], "A")).unwrap().is_empty());
    }

    #[test]
    fn haze_only() {
        let v = ask_all(&mut stub(&["haze"], "A")).unwrap();
        assert_eq!(v.iter_set().collect::<Vec<_>>(), vec![LabelBit::Haze]);
    }

    #[test]
    fn noise_choice_c_is_high() {
        let v = ask_all(&mut stub(&["noise"], "C")).unwrap();
        assert_eq!(v.iter_set().collect::<Vec<_>>(), vec![LabelBit::NoiseHigh]);
    }

    #[test]
    fn malformed_and_failed_answers_fall_back() {
        let bad =
            FnTransport(|_: &str| Ok::<_, Error>("{\"id\": 0, \"answer\": \"maybe\"}".to_string()));
        assert!(matches!(
            ask_all(&mut FnTransport(bad.0)),
            Err(Error::MalformedAnswer(_))
        ));
        let dead = FnTransport(|_: &str| Err::<String, _>(Error::Transport("down".into())));
        let p = ExternalPerceiver::new(
            Box::new(dead),
            Duration::from_millis(10),
            InternalPerceiver::default(),
        );
        let img = ImageF::gray(64, 64, 0.5);
        let out = p.perceive(&img, None).unwrap();
        assert!(out.fallback.is_some() && out.report.is_some());
    }

    #[test]
    fn request_wire_shape() {
        let q = PerceiverQuestion {
            id: 3,
            image: "a.png".into(),
            question: presence_question("rain"),
            dis: "rain".into(),
        };
        let v: serde_json::Value = serde_json::to_value(&q).unwrap();
        assert_eq!(v["question"], "Is there rain in this image?");
        assert_eq!(v["id"], 3);
    }
}
