use std::fmt;
use std::io::{Read, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use super::protocol::{self, RESPONSE_LEN};
use super::{ClassifierBlock, ClassifierError, CloudScore, SceneClassifier, BLOCK_EDGE};

/// Keep at most this much worker stderr for diagnostics.
const STDERR_TAIL: usize = 4096;

/// Program and arguments of an external worker, split on whitespace. No shell
/// is involved.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WorkerCommand {
    pub program: String,
    pub args: Vec<String>,
}

impl WorkerCommand {
    pub fn parse(line: &str) -> Option<Self> {
        let mut parts = line.split_whitespace().map(str::to_string);
        let program = parts.next()?;
        Some(Self {
            program,
            args: parts.collect(),
        })
    }

    pub fn new(program: impl Into<String>, args: &[&str]) -> Self {
        Self {
            program: program.into(),
            args: args.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl fmt::Display for WorkerCommand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.program)?;
        for a in &self.args {
            write!(f, " {a}")?;
        }
        Ok(())
    }
}

struct Worker {
    child: Child,
    stdin: Option<ChildStdin>,
    responses: Receiver<std::io::Result<[u8; RESPONSE_LEN]>>,
    stderr: Arc<Mutex<Vec<u8>>>,
    failed: bool,
}

impl Worker {
    fn spawn(cmd: &WorkerCommand) -> Result<Self, ClassifierError> {
        let mut child = Command::new(&cmd.program)
            .args(&cmd.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| ClassifierError::Backend(format!("failed to launch `{cmd}`: {e}")))?;

        let mut stdout = child.stdout.take().expect("piped stdout");
        let (tx, responses) = mpsc::channel();
        thread::spawn(move || loop {
            let mut frame = [0u8; RESPONSE_LEN];
            let res = stdout.read_exact(&mut frame).map(|_| frame);
            let stop = res.is_err();
            if tx.send(res).is_err() || stop {
                break;
            }
        });

        let mut err_pipe = child.stderr.take().expect("piped stderr");
        let stderr = Arc::new(Mutex::new(Vec::new()));
        let sink = Arc::clone(&stderr);
        thread::spawn(move || {
            let mut buf = [0u8; 1024];
            while let Ok(n) = err_pipe.read(&mut buf) {
                if n == 0 {
                    break;
                }
                let mut tail = sink.lock().unwrap();
                tail.extend_from_slice(&buf[..n]);
                let excess = tail.len().saturating_sub(STDERR_TAIL);
                tail.drain(..excess);
            }
        });

        let stdin = child.stdin.take();
        Ok(Self {
            child,
            stdin,
            responses,
            stderr,
            failed: false,
        })
    }

    fn diagnostics(&mut self) -> String {
        let status = match self.child.try_wait() {
            Ok(Some(status)) => format!("worker exited with {status}"),
            Ok(None) => "worker still running".to_string(),
            Err(e) => format!("worker status unknown: {e}"),
        };
        // give the stderr reader a moment to drain after an exit
        thread::sleep(Duration::from_millis(20));
        let tail = self.stderr.lock().unwrap();
        let text = String::from_utf8_lossy(&tail);
        let text = text.trim();
        if text.is_empty() {
            status
        } else {
            format!("{status}; stderr: {text}")
        }
    }

    fn fail(&mut self, what: &str) -> ClassifierError {
        self.failed = true;
        let _ = self.child.kill();
        let _ = self.child.wait();
        ClassifierError::Backend(format!("{what} ({})", self.diagnostics()))
    }

    fn roundtrip(&mut self, frame: &[u8], timeout: Duration) -> Result<f32, ClassifierError> {
        if self.failed {
            return Err(ClassifierError::Backend("worker previously failed".to_string()));
        }
        let stdin = self.stdin.as_mut().expect("stdin open while worker alive");
        if let Err(e) = stdin.write_all(frame).and_then(|_| stdin.flush()) {
            return Err(self.fail(&format!("write to worker failed: {e}")));
        }
        match self.responses.recv_timeout(timeout) {
            Ok(Ok(reply)) => protocol::decode_response(&reply).map_err(|m| {
                self.failed = true;
                let _ = self.child.kill();
                ClassifierError::Protocol(m)
            }),
            Ok(Err(e)) => Err(self.fail(&format!("worker closed its output: {e}"))),
            Err(RecvTimeoutError::Timeout) => {
                Err(self.fail(&format!("no response within {:.1} s", timeout.as_secs_f64())))
            }
            Err(RecvTimeoutError::Disconnected) => Err(self.fail("worker output disconnected")),
        }
    }
}

impl Drop for Worker {
    fn drop(&mut self) {
        // closing stdin tells a well-behaved worker to exit
        drop(self.stdin.take());
        if !self.failed {
            for _ in 0..50 {
                if let Ok(Some(_)) = self.child.try_wait() {
                    return;
                }
                thread::sleep(Duration::from_millis(10));
            }
        }
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Classifier backed by one or more external worker processes speaking the
/// binary frame protocol in [`protocol`]. Frames are dispatched round-robin;
/// each worker handles one frame at a time.
pub struct SubprocessClassifier {
    workers: Vec<Mutex<Worker>>,
    next: AtomicUsize,
    timeout: Duration,
}

impl SubprocessClassifier {
    pub fn launch(cmd: &WorkerCommand, pool_size: usize, timeout: Duration) -> Result<Self, ClassifierError> {
        let workers = (0..pool_size.max(1))
            .map(|_| Worker::spawn(cmd).map(Mutex::new))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            workers,
            next: AtomicUsize::new(0),
            timeout,
        })
    }

    pub fn pool_size(&self) -> usize {
        self.workers.len()
    }
}

impl SceneClassifier for SubprocessClassifier {
    fn classify(&self, block: &ClassifierBlock) -> Result<CloudScore, ClassifierError> {
        let frame = protocol::encode_request(
            BLOCK_EDGE as u32,
            BLOCK_EDGE as u32,
            block.band_names().len() as u32,
            block.data(),
        );
        let slot = self.next.fetch_add(1, Ordering::Relaxed) % self.workers.len();
        let mut worker = self.workers[slot]
            .lock()
            .map_err(|_| ClassifierError::Backend("worker lock poisoned".to_string()))?;
        let score = worker.roundtrip(&frame, self.timeout)?;
        CloudScore::new(score).map_err(|_| ClassifierError::Protocol(format!("score {score} is outside [0, 1]")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn command_parsing() {
        let cmd = WorkerCommand::parse("  worker  --mode  fast ").unwrap();
        assert_eq!(cmd.program, "worker");
        assert_eq!(cmd.args, vec!["--mode", "fast"]);
        assert_eq!(cmd.to_string(), "worker --mode fast");
        assert!(WorkerCommand::parse("").is_none());
    }

    #[test]
    fn missing_program_is_a_backend_error() {
        let cmd = WorkerCommand::new("/nonexistent/specmcd-worker", &[]);
        assert!(matches!(
            SubprocessClassifier::launch(&cmd, 1, Duration::from_secs(1)),
            Err(ClassifierError::Backend(_))
        ));
    }
}
