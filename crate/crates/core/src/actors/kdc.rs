use std::collections::{BTreeMap, BTreeSet};

use crate::bilinear::DetRng;
use crate::circuits::BoolFormula;
use crate::pvc::{
    certify, fninit, refresh, register, revoke, setup, FunctionId, FunctionRecord, MasterSecret,
    PublicParams, PvcError, ServerId, SetupParams, Token,
};

use super::message::{Message, Note};
use super::net::{Actor, Outbox};
use super::KDC;

/// The key distribution center: sole owner of the master secret, the
/// registry and every `L_F`.
pub struct Kdc {
    params: SetupParams,
    functions: BTreeMap<FunctionId, BoolFormula>,
    state: Option<(PublicParams, MasterSecret)>,
    records: BTreeMap<FunctionId, FunctionRecord>,
    subscribers: BTreeMap<FunctionId, BTreeSet<String>>,
    pub revocations: Vec<(FunctionId, ServerId, u64)>,
    rng: DetRng,
}

impl Kdc {
    pub fn new(params: SetupParams, functions: BTreeMap<FunctionId, BoolFormula>, rng: DetRng) -> Self {
        Self {
            params,
            functions,
            state: None,
            records: BTreeMap::new(),
            subscribers: BTreeMap::new(),
            revocations: Vec::new(),
            rng,
        }
    }

    pub fn pp(&self) -> Option<&PublicParams> {
        self.state.as_ref().map(|(pp, _)| pp)
    }

    pub fn records(&self) -> &BTreeMap<FunctionId, FunctionRecord> {
        &self.records
    }

    fn published(&self, function: &FunctionId) -> Option<Message> {
        let (pp, _) = self.state.as_ref()?;
        let rec = self.records.get(function)?;
        Some(Message::Published {
            pk: rec.delegation_key(pp),
            certified: rec.certified_list(),
        })
    }

    fn broadcast(&self, function: &FunctionId, out: &mut Outbox) {
        for to in self.subscribers.get(function).into_iter().flatten() {
            if let Some(m) = self.published(function) {
                out.send(to.clone(), m);
            }
        }
    }

    fn on_revoke(&mut self, function: FunctionId, token: Token, out: &mut Outbox) -> Result<Message, PvcError> {
        let (pp, msk) = self.state.as_mut().expect("set up at start");
        let rec = self.records.get_mut(&function).ok_or(PvcError::FunctionMismatch)?;
        let Some(fresh) = revoke(pp, msk, &token, rec)? else {
            return Ok(Message::RevokeReply { function, token, revoked: false, epoch: pp.epoch() });
        };
        let server = token.server().cloned().expect("revoked tokens name a server");
        out.note(Note::Revoked {
            function: function.clone(),
            server: server.clone(),
            epoch: pp.epoch(),
        });
        self.revocations.push((function.clone(), server, pp.epoch()));
        let mut reissued = fresh;
        for (id, rec) in self.records.iter_mut() {
            if *id != function {
                reissued.extend(refresh(pp, msk, rec)?);
            }
        }
        for ek in reissued {
            out.send(ek.server.to_string(), Message::KeyRefresh { ek });
        }
        let epoch = pp.epoch();
        let ids: Vec<FunctionId> = self.records.keys().cloned().collect();
        for id in &ids {
            self.broadcast(id, out);
        }
        Ok(Message::RevokeReply { function, token, revoked: true, epoch })
    }

    fn reply(&mut self, from: &str, msg: Message, out: &mut Outbox) -> Result<Option<Message>, PvcError> {
        let (pp, msk) = self.state.as_mut().expect("set up at start");
        Ok(Some(match msg {
            Message::ParamsRequest { function } => {
                let Some(m) = self.published(&function) else {
                    return Ok(Some(refused(format!("no function {function}"))));
                };
                self.subscribers.entry(function).or_default().insert(from.to_owned());
                m
            }
            Message::RegisterRequest => {
                let sk = register(pp, msk, ServerId::new(from), &mut self.rng)?;
                Message::RegisterReply { sk }
            }
            Message::CertifyRequest { function } => {
                let rec = self.records.get_mut(&function).ok_or(PvcError::FunctionMismatch)?;
                let ek = certify(pp, msk, rec, &ServerId::new(from), &mut self.rng)?;
                self.broadcast(&function, out);
                Message::CertifyReply { ek }
            }
            Message::RefreshRequest { function } => {
                let ek = self
                    .records
                    .get(&function)
                    .and_then(|rec| rec.evaluation_key(&ServerId::new(from)));
                match ek {
                    Some(ek) => Message::KeyRefresh { ek },
                    None => Message::NotCertified { function },
                }
            }
            Message::RevokeReport { function, token } => self.on_revoke(function, token, out)?,
            other => {
                out.note(Note::ProtocolError {
                    detail: format!("kdc cannot handle {} from {from}", other.kind()),
                });
                return Ok(None);
            }
        }))
    }
}

fn refused(reason: String) -> Message {
    Message::Refused { reason }
}

impl Actor for Kdc {
    fn id(&self) -> &str {
        KDC
    }

    fn start(&mut self, out: &mut Outbox) {
        let (pp, mut msk) = setup(&self.params, &mut self.rng).expect("validated parameters");
        out.note(Note::Setup { epoch: pp.epoch() });
        for (id, formula) in &self.functions {
            let rec = fninit(&pp, &mut msk, id.clone(), formula.clone()).expect("validated formula");
            out.note(Note::FnInit { function: id.clone() });
            self.records.insert(id.clone(), rec);
        }
        self.state = Some((pp, msk));
    }

    fn handle(&mut self, from: &str, msg: Message, out: &mut Outbox) {
        match self.reply(from, msg, out) {
            Ok(Some(m)) => out.send(from, m),
            Ok(None) => {}
            Err(e) => out.send(from, refused(e.to_string())),
        }
    }
}
