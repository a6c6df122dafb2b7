use std::collections::BTreeMap;

use crate::pvc::{blindverify, CertifiedList, FunctionId, FunctionKey, Token};

use super::message::{Dispatch, Message, Note};
use super::net::{Actor, Outbox};
use super::KDC;

/// A third party that blind-verifies outputs clients forward to it.
pub struct Verifier {
    id: String,
    functions: Vec<FunctionId>,
    params: BTreeMap<FunctionId, (FunctionKey, CertifiedList)>,
    pub verdicts: BTreeMap<Dispatch, Token>,
}

impl Verifier {
    pub fn new(id: String, functions: Vec<FunctionId>) -> Self {
        Self {
            id,
            functions,
            params: BTreeMap::new(),
            verdicts: BTreeMap::new(),
        }
    }
}

impl Actor for Verifier {
    fn id(&self) -> &str {
        &self.id
    }

    fn start(&mut self, out: &mut Outbox) {
        for function in &self.functions {
            out.send(KDC, Message::ParamsRequest { function: function.clone() });
        }
    }

    fn handle(&mut self, from: &str, msg: Message, out: &mut Outbox) {
        match msg {
            Message::Published { pk, certified } => {
                self.params.insert(pk.function.clone(), (pk, certified));
            }
            Message::VerifyRequest { dispatch, sigma_y, vk } => {
                let Some((pk, lf)) = self.params.get(&vk.function) else {
                    out.note(Note::ProtocolError {
                        detail: format!("no parameters for {}", vk.function),
                    });
                    return;
                };
                let (_, token) = blindverify(&pk.pp, &sigma_y, &vk, lf);
                out.note(Note::Verdict { dispatch: dispatch.clone(), token: token.clone() });
                self.verdicts.insert(dispatch, token);
            }
            other => out.note(Note::ProtocolError {
                detail: format!("verifier cannot handle {} from {from}", other.kind()),
            }),
        }
    }
}
