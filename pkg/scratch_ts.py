"""Scratch: timestamping fork-choice smoke test (not part of the package)."""
import sys
sys.path.insert(0, "src")

from remotestake.consensus import ConsumerBlock, GENESIS_BLOCK, GENESIS_ID
from remotestake.crypto import daps_keygen, schnorr_keygen
from remotestake.finality import FinalVote, make_final_vote
from remotestake.provider import BondRegistry, BondRecord
from remotestake.timestamping import (
    ClientState, Mode, OnchainTimestamp, ProtocolParams, ProviderView,
    Schedule, Timestamp, period_of, last_height_of_period,
    timestamp_delay, unbonding_delay,
)

params = ProtocolParams(n=4, f=1, m=3, k_c=4, k_f=2, duty_span=60, delta=4)
assert params.k_d == 10 and params.k_u == 16 and params.quorum == 3
assert period_of(0, 3) == 1 and period_of(2, 3) == 1 and period_of(3, 3) == 2
assert last_height_of_period(1, 3) == 2 and last_height_of_period(2, 3) == 5

kps = {i: daps_keygen(bytes([i]) * 32, horizon=32) for i in range(4)}

# fake provider state: refs resolve by hash->height map
ref_map = {b"\x00" * 32: 0}
prov_hash = {}
for h in range(1, 40):
    hh = bytes([h]) + b"\x00" * 31
    prov_hash[h] = hh
    ref_map[hh] = h

registry = BondRegistry(smart=False, k_u=params.k_u, duty_span=params.duty_span)
for i in range(4):
    registry.records[i] = BondRecord(
        validator=i, amount=100, utxo=(bytes([i]) * 32, 0), bond_height=0,
        duty_end=60, timelock=76, status="bonded", burn_height=None)
assert sorted(registry.bonded_ids_at(5)) == [0, 1, 2, 3]

sched = Schedule(params, [0, 1, 2, 3])

def mkblock(height, parent, ref_h):
    return ConsumerBlock(height, parent, proposer=height % 4,
                         provider_ref=prov_hash.get(ref_h, b"\x00" * 32), txs=())

b1 = mkblock(1, GENESIS_ID, 1)
b2 = mkblock(2, b1.block_id(), 1)
b3 = mkblock(3, b2.block_id(), 2)

client = ClientState("c1", params, Mode.DUMB_COVENANT, sched,
                     daps_pk_of=lambda i: kps[i].pk,
                     vote_pk_of=lambda i: None)
for b in (b1, b2, b3):
    client.add_block(b)
for b in (b1, b2, b3):
    for i in range(3):  # 3 of 4 vote: quorum
        client.add_vote(make_final_vote(kps[i], i, b.height, b.block_id()))

cert2 = tuple(make_final_vote(kps[i], i, 2, b2.block_id()) for i in range(3))
ts2 = Timestamp(2, b2.block_id(), cert2)
rt = Timestamp.decode(ts2.encode())
assert rt == ts2, "timestamp codec round trip"

view = ProviderView(height=6, ref_height_of=ref_map.get,
                    timestamps=[OnchainTimestamp(ts2, 3, 0)], registry=registry)
events = client.process(view)
names = [e.rule for e in events]
print("events:", names)
assert "update" in names, names
assert [b.height for b in client.canonical] == [0, 1, 2, 3], \
    [b.height for b in client.canonical]  # b3 via fast progress
assert client.canonical[3] == b3

# replay determinism: a fresh client on the same inputs lands identically
client_b = ClientState("c2", params, Mode.DUMB_COVENANT, sched,
                       daps_pk_of=lambda i: kps[i].pk,
                       vote_pk_of=lambda i: None)
for b in (b1, b2, b3):
    client_b.add_block(b)
for v in client.all_votes():
    client_b.add_vote(v)
client_b.process(view)
assert client_b.canonical == client.canonical

# a conflicting block at height 3 stops the suffix walk
b3x = mkblock(3, b2.block_id(), 3)
client_c = ClientState("c3", params, Mode.DUMB_COVENANT, sched,
                       daps_pk_of=lambda i: kps[i].pk,
                       vote_pk_of=lambda i: None)
for b in (b1, b2, b3, b3x):
    client_c.add_block(b)
for v in client.all_votes():
    client_c.add_vote(v)
for i in range(3):
    client_c.add_vote(make_final_vote(kps[i], i, 3, b3x.block_id()))
ev = client_c.process(view)
assert any(e.rule == "suffix_fork" for e in ev), [e.rule for e in ev]
assert [b.height for b in client_c.canonical] == [0, 1, 2]

# rule 1: correct timestamp for an unavailable block
hidden = mkblock(2, b1.block_id(), 1)
cert_h = tuple(make_final_vote(kps[i], i, 2, hidden.block_id()) for i in range(3))
ts_h = Timestamp(2, hidden.block_id(), cert_h)
client_d = ClientState("c4", params, Mode.DUMB_COVENANT, sched,
                       daps_pk_of=lambda i: kps[i].pk,
                       vote_pk_of=lambda i: None)
client_d.add_block(b1)
for i in range(3):
    client_d.add_vote(make_final_vote(kps[i], i, 1, b1.block_id()))
view_h = ProviderView(height=6, ref_height_of=ref_map.get,
                      timestamps=[OnchainTimestamp(ts_h, 3, 0)], registry=registry)
ev = client_d.process(view_h)
assert client_d.halted == "rule1", (client_d.halted, [e.rule for e in ev])

# stale and wrong-period timestamps are ignored
ts_stale = Timestamp(1, b1.block_id(),
                     tuple(make_final_vote(kps[i], i, 1, b1.block_id()) for i in range(3)))
ts_late = Timestamp(2, b2.block_id(), cert2)
view2 = ProviderView(height=12, ref_height_of=ref_map.get,
                     timestamps=[OnchainTimestamp(ts2, 3, 0),
                                 OnchainTimestamp(ts_stale, 4, 1),
                                 OnchainTimestamp(ts_late, 11, 2)],
                     registry=registry)
client_e = ClientState("c5", params, Mode.DUMB_COVENANT, sched,
                       daps_pk_of=lambda i: kps[i].pk,
                       vote_pk_of=lambda i: None)
for b in (b1, b2):
    client_e.add_block(b)
for v in client.all_votes():
    client_e.add_vote(v)
ev = client_e.process(view2)
kinds = [e.rule for e in ev]
assert kinds.count("ignore_stale") == 2, kinds  # both later ts are below tip
print("fork choice smoke ok")
