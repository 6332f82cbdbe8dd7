//! Genesis configuration: the keys and parameters every replica and client
//! knows when the system is initialized. The genesis acts as the view-0
//! certificate; view 0's counter public key and all replica, client, and
//! TMC identity keys are fixed here.

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::baselines::ProtocolVariant;
use crate::crypto::{KeyPair, PublicKey};
use crate::tmc::{CounterInstance, Tmc};

pub type ViewId = u64;
pub type ReplicaId = u32;
pub type ClientId = u32;
pub type RequestId = u64;
pub type CounterValue = u64;

/// Public part of the genesis configuration, shared by every node.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Genesis {
    pub variant: ProtocolVariant,
    pub n: u32,
    pub f: u32,
    /// TMC-equipped replicas are numbered first: ids `0..n_tmc`.
    pub n_tmc: u32,
    pub replica_pks: Vec<PublicKey>,
    pub client_pks: Vec<PublicKey>,
    pub tmc_identity_pks: Vec<Option<PublicKey>>,
    /// Counter public key of the first primary's instance (or the primary's
    /// own key for variants without a trusted counter).
    pub view0_counter_pk: PublicKey,
    pub checkpoint_interval: u64,
    /// Order-requests further than `checkpoint_interval * window_factor`
    /// past the last stable checkpoint are rejected.
    pub window_factor: u64,
}

impl Genesis {
    pub fn primary_of(&self, view: ViewId) -> ReplicaId {
        if self.variant.uses_tmc() {
            (view % self.n_tmc as u64) as ReplicaId
        } else {
            (view % self.n as u64) as ReplicaId
        }
    }

    /// f+1: enough that one member is correct.
    pub fn small_quorum(&self) -> usize {
        (self.f + 1) as usize
    }

    /// 2f+1: any two such sets share a correct member.
    pub fn large_quorum(&self) -> usize {
        (2 * self.f + 1) as usize
    }

    pub fn completion_threshold(&self) -> usize {
        self.variant.completion_threshold(self.f) as usize
    }

    pub fn replica_pk(&self, id: ReplicaId) -> Option<&PublicKey> {
        self.replica_pks.get(id as usize)
    }

    pub fn client_pk(&self, id: ClientId) -> Option<&PublicKey> {
        self.client_pks.get(id as usize)
    }

    pub fn tmc_identity_pk(&self, id: ReplicaId) -> Option<&PublicKey> {
        self.tmc_identity_pks.get(id as usize).and_then(|k| k.as_ref())
    }

    pub fn has_tmc(&self, id: ReplicaId) -> bool {
        self.tmc_identity_pk(id).is_some()
    }
}

/// Private keys produced alongside the genesis; handed to the nodes that own
/// them by the simulation builder.
pub struct GenesisSecrets {
    pub replica_keys: Vec<KeyPair>,
    pub client_keys: Vec<KeyPair>,
    pub tmc_identities: Vec<Option<KeyPair>>,
    /// Replica 0's bootstrapped counter instance for view 0.
    pub view0_instance: Option<CounterInstance>,
}

impl GenesisSecrets {
    pub fn tmc_for(&self, id: ReplicaId) -> Tmc {
        Tmc::new(self.tmc_identities[id as usize].clone())
    }
}

pub fn build_genesis(
    variant: ProtocolVariant,
    f: u32,
    n: u32,
    n_tmc: u32,
    n_clients: u32,
    checkpoint_interval: u64,
    rng: &mut impl RngCore,
) -> (Genesis, GenesisSecrets) {
    let replica_keys: Vec<KeyPair> = (0..n).map(|_| KeyPair::generate(rng)).collect();
    let client_keys: Vec<KeyPair> = (0..n_clients).map(|_| KeyPair::generate(rng)).collect();
    let tmc_identities: Vec<Option<KeyPair>> = (0..n)
        .map(|i| {
            if variant.uses_tmc() && i < n_tmc {
                Some(KeyPair::generate(rng))
            } else {
                None
            }
        })
        .collect();

    let (view0_instance, view0_counter_pk) = if variant.uses_tmc() {
        let tmc = Tmc::new(tmc_identities[0].clone());
        let (instance, attestation) = tmc.init(rng).expect("replica 0 has a TMC");
        (Some(instance), attestation.instance_pk)
    } else {
        (None, replica_keys[0].public_key())
    };

    let genesis = Genesis {
        variant,
        n,
        f,
        n_tmc,
        replica_pks: replica_keys.iter().map(|k| k.public_key()).collect(),
        client_pks: client_keys.iter().map(|k| k.public_key()).collect(),
        tmc_identity_pks: tmc_identities
            .iter()
            .map(|k| k.as_ref().map(|k| k.public_key()))
            .collect(),
        view0_counter_pk,
        checkpoint_interval,
        window_factor: 2,
    };
    let secrets = GenesisSecrets { replica_keys, client_keys, tmc_identities, view0_instance };
    (genesis, secrets)
}
