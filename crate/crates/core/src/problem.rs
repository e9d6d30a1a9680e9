//! Message structure and the per-block optimization problem.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::channel_model::UserChannelState;
use crate::error::{Error, Result};
use crate::linalg::{CMatrix, CVector};

/// One transmitted message. Users and groups are zero-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MessageId {
    Common,
    Partial(usize),
    Private(usize),
}

impl fmt::Display for MessageId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MessageId::Common => write!(f, "common"),
            MessageId::Partial(i) => write!(f, "partial[{i}]"),
            MessageId::Private(k) => write!(f, "private[{k}]"),
        }
    }
}

/// Layer structure: an optional common message, `G` partial common messages
/// for disjoint user groups, and one private message per user.
///
/// Block order is `common | partial_0 .. partial_{G-1} | private_0 .. private_{K-1}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MessageSet {
    num_users: usize,
    groups: Vec<Vec<usize>>,
    has_common: bool,
}

impl MessageSet {
    /// One common message plus private messages.
    pub fn single_layer(num_users: usize) -> Self {
        MessageSet {
            num_users,
            groups: Vec::new(),
            has_common: true,
        }
    }

    /// Private messages only.
    pub fn sdma(num_users: usize) -> Self {
        MessageSet {
            num_users,
            groups: Vec::new(),
            has_common: false,
        }
    }

    /// Common, partial common and private messages.
    pub fn multi_layer(num_users: usize, groups: Vec<Vec<usize>>) -> Result<Self> {
        let mut seen = vec![false; num_users];
        for (i, group) in groups.iter().enumerate() {
            if group.is_empty() {
                return Err(Error::invalid(format!("group {i} is empty")));
            }
            for &k in group {
                if k >= num_users {
                    return Err(Error::invalid(format!("group {i} names user {k} but K = {num_users}")));
                }
                if seen[k] {
                    return Err(Error::invalid(format!("user {k} appears in more than one group")));
                }
                seen[k] = true;
            }
        }
        Ok(MessageSet {
            num_users,
            groups,
            has_common: true,
        })
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    pub fn num_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn has_common(&self) -> bool {
        self.has_common
    }

    pub fn num_messages(&self) -> usize {
        usize::from(self.has_common) + self.groups.len() + self.num_users
    }

    /// The same set without partial common messages.
    pub fn without_groups(&self) -> Self {
        MessageSet {
            num_users: self.num_users,
            groups: Vec::new(),
            has_common: self.has_common,
        }
    }

    /// Messages in block order.
    pub fn messages(&self) -> Vec<MessageId> {
        let mut out = Vec::with_capacity(self.num_messages());
        if self.has_common {
            out.push(MessageId::Common);
        }
        out.extend((0..self.groups.len()).map(MessageId::Partial));
        out.extend((0..self.num_users).map(MessageId::Private));
        out
    }

    pub fn block_index(&self, message: MessageId) -> Option<usize> {
        let offset = usize::from(self.has_common);
        match message {
            MessageId::Common => self.has_common.then_some(0),
            MessageId::Partial(i) => (i < self.groups.len()).then(|| offset + i),
            MessageId::Private(k) => (k < self.num_users).then(|| offset + self.groups.len() + k),
        }
    }

    pub fn group_of(&self, user: usize) -> Option<usize> {
        self.groups.iter().position(|g| g.contains(&user))
    }

    /// Users that must decode `message`.
    pub fn decoders(&self, message: MessageId) -> Vec<usize> {
        match message {
            MessageId::Common if self.has_common => (0..self.num_users).collect(),
            MessageId::Partial(i) if i < self.groups.len() => self.groups[i].clone(),
            MessageId::Private(k) if k < self.num_users => vec![k],
            _ => Vec::new(),
        }
    }

    /// Messages user `user` has already removed by SIC when it decodes `message`.
    ///
    /// Decoding order is common → own partial common → private.
    pub fn cancelled(&self, message: MessageId, user: usize) -> Result<Vec<MessageId>> {
        if !self.decoders(message).contains(&user) {
            return Err(Error::NotADecoder {
                message: message.to_string(),
                user,
            });
        }
        let mut out = Vec::new();
        match message {
            MessageId::Common => {}
            MessageId::Partial(_) => out.push(MessageId::Common),
            MessageId::Private(k) => {
                if self.has_common {
                    out.push(MessageId::Common);
                }
                if let Some(i) = self.group_of(k) {
                    out.push(MessageId::Partial(i));
                }
            }
        }
        Ok(out)
    }

    /// Every (message, decoding user) pair, grouped by message in block order.
    pub fn rate_terms(&self) -> Vec<(MessageId, usize)> {
        self.messages()
            .into_iter()
            .flat_map(|m| self.decoders(m).into_iter().map(move |k| (m, k)))
            .collect()
    }
}

/// Transmitter-side view of one fading block: channel estimates, error
/// covariances, the message structure and the inverse SNR `σ²/P`.
#[derive(Debug, Clone)]
pub struct Problem {
    num_antennas: usize,
    channels: Vec<CVector>,
    error_covs: Vec<CMatrix>,
    messages: MessageSet,
    snr_inv: f64,
}

impl Problem {
    pub fn new(channels: Vec<CVector>, error_covs: Vec<CMatrix>, messages: MessageSet, snr_inv: f64) -> Result<Self> {
        let num_users = messages.num_users();
        if num_users == 0 {
            return Err(Error::invalid("at least one user is required"));
        }
        if channels.len() != num_users {
            return Err(Error::DimensionMismatch {
                expected: num_users,
                got: channels.len(),
            });
        }
        if error_covs.len() != num_users {
            return Err(Error::DimensionMismatch {
                expected: num_users,
                got: error_covs.len(),
            });
        }
        let n = channels[0].len();
        if n == 0 {
            return Err(Error::invalid("at least one antenna is required"));
        }
        for (h, phi) in channels.iter().zip(&error_covs) {
            if h.len() != n {
                return Err(Error::DimensionMismatch { expected: n, got: h.len() });
            }
            if phi.nrows() != n || phi.ncols() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: phi.nrows(),
                });
            }
        }
        if !(snr_inv > 0.0) || !snr_inv.is_finite() {
            return Err(Error::invalid(format!("σ²/P must be positive and finite, got {snr_inv}")));
        }
        Ok(Problem {
            num_antennas: n,
            channels,
            error_covs,
            messages,
            snr_inv,
        })
    }

    pub fn from_states(states: &[UserChannelState], messages: MessageSet, snr_inv: f64) -> Result<Self> {
        Problem::new(
            states.iter().map(|s| s.h_hat.clone()).collect(),
            states.iter().map(|s| s.error_cov.clone()).collect(),
            messages,
            snr_inv,
        )
    }

    pub fn num_antennas(&self) -> usize {
        self.num_antennas
    }

    pub fn num_users(&self) -> usize {
        self.messages.num_users()
    }

    pub fn channel(&self, user: usize) -> &CVector {
        &self.channels[user]
    }

    pub fn channels(&self) -> &[CVector] {
        &self.channels
    }

    pub fn error_cov(&self, user: usize) -> &CMatrix {
        &self.error_covs[user]
    }

    pub fn messages(&self) -> &MessageSet {
        &self.messages
    }

    pub fn snr_inv(&self) -> f64 {
        self.snr_inv
    }

    /// SNR `P/σ²` in dB.
    pub fn snr_db(&self) -> f64 {
        -10.0 * self.snr_inv.log10()
    }

    /// Same channels under a different message structure.
    pub fn with_messages(&self, messages: MessageSet) -> Result<Self> {
        if messages.num_users() != self.num_users() {
            return Err(Error::DimensionMismatch {
                expected: self.num_users(),
                got: messages.num_users(),
            });
        }
        Ok(Problem {
            messages,
            ..self.clone()
        })
    }

    /// Treats the estimates as exact (`Φ = 0`).
    pub fn without_error_cov(&self) -> Self {
        let n = self.num_antennas;
        Problem {
            error_covs: vec![CMatrix::zeros(n, n); self.num_users()],
            ..self.clone()
        }
    }
}
