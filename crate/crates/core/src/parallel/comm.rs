//! Message-passing communicators: a single-rank loopback and in-process
//! ranks on threads exchanging little-endian `f64` frames over channels.

use std::collections::{HashMap, VecDeque};
use std::sync::mpsc::{channel, Receiver, RecvTimeoutError, Sender};
use std::sync::Mutex;
use std::time::Duration;

use crate::error::{Error, Result};

/// Operation ids stored in the top byte of message tags.
pub mod op {
    pub const ACCUMULATE: u64 = 1;
    pub const COLLECTIVE: u64 = 2;
    pub const CONSISTENCY: u64 = 3;
}

/// `op << 56 | level << 48 | id`
pub fn make_tag(op: u64, level: usize, id: u64) -> u64 {
    op << 56 | (level as u64 & 0xff) << 48 | (id & 0xffff_ffff_ffff)
}

pub fn tag_op(tag: u64) -> u64 {
    tag >> 56
}

/// One sent message as recorded by the sender.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MessageRecord {
    pub from: usize,
    pub to: usize,
    pub tag: u64,
    pub bytes: usize,
}

/// Point-to-point messages of tagged `f64` arrays plus collectives that
/// every rank enters in the same order. Reductions sum in ascending rank
/// order on every rank.
pub trait Communicator {
    fn rank(&self) -> usize;
    fn size(&self) -> usize;
    fn send(&self, to: usize, tag: u64, data: &[f64]) -> Result<()>;
    fn recv(&self, from: usize, tag: u64) -> Result<Vec<f64>>;
    /// Contributions of all ranks, indexed by rank.
    fn all_gather(&self, data: &[f64]) -> Result<Vec<Vec<f64>>>;
    /// Messages sent by this rank so far.
    fn log(&self) -> Vec<MessageRecord>;

    fn all_reduce_sum(&self, x: f64) -> Result<f64> {
        Ok(self.all_gather(&[x])?.iter().fold(0.0, |acc, v| acc + v[0]))
    }

    fn bytes_sent(&self) -> usize {
        self.log().iter().map(|m| m.bytes).sum()
    }
}

/// The communicator of a single rank.
#[derive(Debug, Default)]
pub struct Loopback {
    pending: Mutex<HashMap<u64, VecDeque<Vec<f64>>>>,
    log: Mutex<Vec<MessageRecord>>,
}

impl Loopback {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Communicator for Loopback {
    fn rank(&self) -> usize {
        0
    }

    fn size(&self) -> usize {
        1
    }

    fn send(&self, to: usize, tag: u64, data: &[f64]) -> Result<()> {
        if to != 0 {
            return Err(Error::Transport(format!("loopback has no rank {to}")));
        }
        self.log.lock().unwrap().push(MessageRecord {
            from: 0,
            to: 0,
            tag,
            bytes: 8 * data.len(),
        });
        self.pending.lock().unwrap().entry(tag).or_default().push_back(data.to_vec());
        Ok(())
    }

    fn recv(&self, from: usize, tag: u64) -> Result<Vec<f64>> {
        if from != 0 {
            return Err(Error::Transport(format!("loopback has no rank {from}")));
        }
        self.pending
            .lock()
            .unwrap()
            .get_mut(&tag)
            .and_then(|q| q.pop_front())
            .ok_or_else(|| Error::Transport(format!("no pending message with tag {tag:#x}")))
    }

    fn all_gather(&self, data: &[f64]) -> Result<Vec<Vec<f64>>> {
        Ok(vec![data.to_vec()])
    }

    fn log(&self) -> Vec<MessageRecord> {
        self.log.lock().unwrap().clone()
    }
}

struct Frame {
    from: usize,
    bytes: Vec<u8>,
}

/// Frame layout: tag (`u64` LE), element count (`u64` LE), payload (`f64` LE).
pub fn encode_frame(tag: u64, data: &[f64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + 8 * data.len());
    out.extend_from_slice(&tag.to_le_bytes());
    out.extend_from_slice(&(data.len() as u64).to_le_bytes());
    for v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_frame(bytes: &[u8]) -> Result<(u64, Vec<f64>)> {
    let word = |i: usize| -> Result<[u8; 8]> {
        bytes
            .get(8 * i..8 * i + 8)
            .and_then(|s| s.try_into().ok())
            .ok_or_else(|| Error::Transport("truncated frame".into()))
    };
    let tag = u64::from_le_bytes(word(0)?);
    let len = u64::from_le_bytes(word(1)?) as usize;
    if bytes.len() != 16 + 8 * len {
        return Err(Error::Transport(format!(
            "frame length {} does not match element count {len}",
            bytes.len()
        )));
    }
    let data = (0..len)
        .map(|i| word(2 + i).map(f64::from_le_bytes))
        .collect::<Result<Vec<_>>>()?;
    Ok((tag, data))
}

/// One of `R` ranks living in the same process.
pub struct InProc {
    rank: usize,
    senders: Vec<Sender<Frame>>,
    inbox: Receiver<Frame>,
    pending: Mutex<HashMap<(usize, u64), VecDeque<Vec<f64>>>>,
    log: Mutex<Vec<MessageRecord>>,
    collective_seq: Mutex<u64>,
    timeout: Duration,
}

impl InProc {
    /// Creates the endpoints of `size` connected ranks.
    pub fn create(size: usize) -> Result<Vec<InProc>> {
        if size == 0 {
            return Err(Error::Config("rank count must be positive".into()));
        }
        let (senders, receivers): (Vec<_>, Vec<_>) = (0..size).map(|_| channel()).unzip();
        Ok(receivers
            .into_iter()
            .enumerate()
            .map(|(rank, inbox)| InProc {
                rank,
                senders: senders.clone(),
                inbox,
                pending: Mutex::new(HashMap::new()),
                log: Mutex::new(Vec::new()),
                collective_seq: Mutex::new(0),
                timeout: Duration::from_secs(120),
            })
            .collect())
    }
}

impl Communicator for InProc {
    fn rank(&self) -> usize {
        self.rank
    }

    fn size(&self) -> usize {
        self.senders.len()
    }

    fn send(&self, to: usize, tag: u64, data: &[f64]) -> Result<()> {
        let sender = self
            .senders
            .get(to)
            .ok_or_else(|| Error::Transport(format!("no rank {to}")))?;
        sender
            .send(Frame {
                from: self.rank,
                bytes: encode_frame(tag, data),
            })
            .map_err(|_| Error::Transport(format!("rank {to} is gone")))?;
        self.log.lock().unwrap().push(MessageRecord {
            from: self.rank,
            to,
            tag,
            bytes: 8 * data.len(),
        });
        Ok(())
    }

    fn recv(&self, from: usize, tag: u64) -> Result<Vec<f64>> {
        if let Some(v) = self
            .pending
            .lock()
            .unwrap()
            .get_mut(&(from, tag))
            .and_then(|q| q.pop_front())
        {
            return Ok(v);
        }
        loop {
            let frame = self.inbox.recv_timeout(self.timeout).map_err(|e| match e {
                RecvTimeoutError::Timeout => {
                    Error::Transport(format!("rank {} timed out waiting for rank {from}", self.rank))
                }
                RecvTimeoutError::Disconnected => Error::Transport("all peers disconnected".into()),
            })?;
            let (t, data) = decode_frame(&frame.bytes)?;
            if frame.from == from && t == tag {
                return Ok(data);
            }
            self.pending
                .lock()
                .unwrap()
                .entry((frame.from, t))
                .or_default()
                .push_back(data);
        }
    }

    fn all_gather(&self, data: &[f64]) -> Result<Vec<Vec<f64>>> {
        let seq = {
            let mut s = self.collective_seq.lock().unwrap();
            *s += 1;
            *s
        };
        let tag = make_tag(op::COLLECTIVE, 0, seq);
        for to in 0..self.size() {
            if to != self.rank {
                self.send(to, tag, data)?;
            }
        }
        (0..self.size())
            .map(|from| if from == self.rank { Ok(data.to_vec()) } else { self.recv(from, tag) })
            .collect()
    }

    fn log(&self) -> Vec<MessageRecord> {
        self.log.lock().unwrap().clone()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Backend {
    Loopback,
    InProc,
}

impl std::str::FromStr for Backend {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "loopback" => Ok(Backend::Loopback),
            "inproc" => Ok(Backend::InProc),
            other => Err(Error::Config(format!(
                "unknown backend '{other}' (expected loopback or inproc)"
            ))),
        }
    }
}

impl std::fmt::Display for Backend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Backend::Loopback => "loopback",
            Backend::InProc => "inproc",
        })
    }
}

/// Runs `body` on `ranks` ranks and returns the per-rank results in rank
/// order. The loopback backend supports exactly one rank.
pub fn run_ranks<T, F>(backend: Backend, ranks: usize, body: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&dyn Communicator) -> Result<T> + Sync,
{
    match backend {
        Backend::Loopback => {
            if ranks != 1 {
                return Err(Error::Config(format!("loopback backend runs 1 rank, not {ranks}")));
            }
            Ok(vec![body(&Loopback::new())?])
        }
        Backend::InProc => {
            let comms = InProc::create(ranks)?;
            let body = &body;
            std::thread::scope(|scope| {
                let handles: Vec<_> = comms
                    .into_iter()
                    .map(|c| scope.spawn(move || body(&c)))
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().unwrap_or_else(|_| Err(Error::Transport("rank panicked".into()))))
                    .collect()
            })
        }
    }
}
