use std::collections::{BTreeMap, BTreeSet};

use crate::bilinear::{random_gt, DetRng};
use crate::pvc::{
    compute, sign_output, EncodedInput, EvaluationKey, FunctionId, ServerKey, VerificationKey,
};

use super::config::{Behaviour, ServerConfig};
use super::message::{Dispatch, Message, Note};
use super::net::{Actor, Outbox};
use super::KDC;

struct Waiting {
    from: String,
    dispatch: Dispatch,
    sigma_x: EncodedInput,
    vk: VerificationKey,
}

/// A compute server. Keeps only its newest evaluation key per function.
pub struct Server {
    cfg: ServerConfig,
    sk: Option<ServerKey>,
    eks: BTreeMap<FunctionId, EvaluationKey>,
    requests: u32,
    waiting: Vec<Waiting>,
    refreshing: BTreeSet<FunctionId>,
    /// Every output this server sent, with the behaviour that produced it.
    pub served: Vec<(Dispatch, Behaviour)>,
    rng: DetRng,
}

impl Server {
    pub fn new(cfg: ServerConfig, rng: DetRng) -> Self {
        Self {
            cfg,
            sk: None,
            eks: BTreeMap::new(),
            requests: 0,
            waiting: Vec::new(),
            refreshing: BTreeSet::new(),
            served: Vec::new(),
            rng,
        }
    }

    fn misbehave(&mut self, mode: Behaviour, w: Waiting, out: &mut Outbox) {
        let Some(sk) = &self.sk else {
            out.send(w.from, Message::Unavailable { dispatch: w.dispatch });
            return;
        };
        let sigma_y = match mode {
            Behaviour::Garbage => {
                let (e1, e2) = (random_gt(&mut self.rng), random_gt(&mut self.rng));
                sign_output(Some(e1), Some(e2), sk, &w.vk)
            }
            _ => sign_output(None, None, sk, &w.vk),
        };
        self.served.push((w.dispatch.clone(), mode));
        out.send(w.from, Message::ComputeReply { dispatch: w.dispatch, sigma_y });
    }

    fn try_compute(&mut self, w: Waiting, out: &mut Outbox) {
        let Some(sk) = &self.sk else {
            out.send(w.from, Message::Unavailable { dispatch: w.dispatch });
            return;
        };
        let function = w.sigma_x.function.clone();
        match self.eks.get(&function) {
            Some(ek) if ek.epoch() > w.sigma_x.epoch => {
                let key = ek.epoch();
                let input = w.sigma_x.epoch;
                out.send(w.from, Message::StaleEpoch { dispatch: w.dispatch, key, input });
            }
            Some(ek) if ek.epoch() == w.sigma_x.epoch => match compute(&w.sigma_x, &w.vk, ek, sk) {
                Ok(sigma_y) => {
                    self.served.push((w.dispatch.clone(), Behaviour::Honest));
                    out.send(w.from, Message::ComputeReply { dispatch: w.dispatch, sigma_y });
                }
                Err(_) => out.send(w.from, Message::Unavailable { dispatch: w.dispatch }),
            },
            _ => {
                if self.refreshing.insert(function.clone()) {
                    out.send(KDC, Message::RefreshRequest { function });
                }
                self.waiting.push(w);
            }
        }
    }

    fn install(&mut self, ek: EvaluationKey, out: &mut Outbox) {
        if self.sk.as_ref().map(|sk| sk.id()) != Some(&ek.server) {
            out.note(Note::ProtocolError {
                detail: format!("key issued for {}", ek.server),
            });
            return;
        }
        let function = ek.function.clone();
        let newer = self.eks.get(&function).is_none_or(|old| old.epoch() <= ek.epoch());
        if newer {
            self.eks.insert(function.clone(), ek);
        }
        self.refreshing.remove(&function);
        let (retry, keep) = std::mem::take(&mut self.waiting)
            .into_iter()
            .partition(|w| w.sigma_x.function == function);
        self.waiting = keep;
        for w in retry {
            self.try_compute(w, out);
        }
    }
}

impl Actor for Server {
    fn id(&self) -> &str {
        &self.cfg.id
    }

    fn start(&mut self, out: &mut Outbox) {
        out.send(KDC, Message::RegisterRequest);
    }

    fn handle(&mut self, from: &str, msg: Message, out: &mut Outbox) {
        match msg {
            Message::RegisterReply { sk } => {
                self.sk = Some(sk);
                for f in &self.cfg.functions {
                    out.send(KDC, Message::CertifyRequest { function: FunctionId::new(f.as_str()) });
                }
            }
            Message::CertifyReply { ek } | Message::KeyRefresh { ek } => self.install(ek, out),
            Message::NotCertified { function } => {
                self.refreshing.remove(&function);
                let (failed, keep) = std::mem::take(&mut self.waiting)
                    .into_iter()
                    .partition(|w| w.sigma_x.function == function);
                self.waiting = keep;
                for w in failed {
                    out.send(w.from, Message::Unavailable { dispatch: w.dispatch });
                }
            }
            Message::ComputeRequest { dispatch, sigma_x, vk } => {
                self.requests += 1;
                let w = Waiting {
                    from: from.to_owned(),
                    dispatch,
                    sigma_x,
                    vk,
                };
                match self.cfg.mode_at(self.requests) {
                    Behaviour::Honest => self.try_compute(w, out),
                    mode => self.misbehave(mode, w, out),
                }
            }
            Message::Refused { reason } => out.note(Note::ProtocolError {
                detail: format!("{from} refused: {reason}"),
            }),
            other => out.note(Note::ProtocolError {
                detail: format!("server cannot handle {} from {from}", other.kind()),
            }),
        }
    }
}
