"""Golden vectors for the crypto and byte-layout layers.

The committed files pin down hashing domains, signature math, and every
on-chain payload format. Regenerating them from scratch and comparing
against the checked-in copies catches accidental changes that would
silently invalidate stored traces or cross-version payload parsing.
"""

from pathlib import Path
from typing import Callable, Dict, List

from ..consensus import (
    ConsumerBlock,
    GENESIS_ID,
    Precommit,
    Prevote,
    Proposal,
    SignedMessage,
)
from ..crypto import (
    daps_extract,
    daps_keygen,
    daps_sign,
    hash_to_scalar,
    id_hash,
    schnorr_keygen,
    schnorr_sign,
    tagged_hash,
)
from ..finality import ConfirmSig, confirm_message, make_final_vote
from ..group import encode_point, generator_mul
from ..musig import aggregate, key_aggregate, nonce_gen, partial_sign
from ..provider import (
    ProviderTx,
    TxIn,
    TxOut,
    build_slashing_tx,
    committee_bond_script,
    covenant_bond_script,
    ctv_template_hash,
    data_script,
    encode_chunks,
    encode_script,
    encode_tx,
    sighash,
)
from ..timestamping import Timestamp, evidence_payload, stamp_payload


def _seed(label: str) -> bytes:
    return tagged_hash("remotestake/vector-seed", label.encode())


def crypto_vectors() -> Dict[str, str]:
    out: Dict[str, str] = {}
    out["tagged_hash"] = tagged_hash("remotestake/vector-demo", b"abc").hex()
    out["hash_to_scalar"] = "%064x" % hash_to_scalar("remotestake/vector-demo", b"abc")
    out["id_hash"] = id_hash(b"vector payload").hex()

    kp = schnorr_keygen(_seed("schnorr"))
    out["schnorr_pk"] = encode_point(kp.pk).hex()
    sig = schnorr_sign(kp, b"schnorr vector message")
    out["schnorr_sig"] = sig.encode().hex()

    daps = daps_keygen(_seed("daps"), horizon=4)
    out["daps_pk"] = daps.pk.encode().hex()
    s1 = daps_sign(daps, b"message one", 2)
    s2 = daps_sign(daps, b"message two", 2)
    out["daps_sig_ct2_m1"] = s1.encode().hex()
    out["daps_sig_ct2_m2"] = s2.encode().hex()
    secret = daps_extract(daps.pk, 2, b"message one", s1, b"message two", s2)
    out["daps_extracted_secret"] = "%064x" % secret
    out["daps_secret_point"] = encode_point(generator_mul(secret)).hex()

    members = [schnorr_keygen(_seed(f"committee-{i}")) for i in range(3)]
    ctx = key_aggregate([kp.pk for kp in members])
    out["agg_pk"] = encode_point(ctx.agg_pk).hex()
    msg = b"aggregate vector message"
    pairs = []
    secrets = []
    for i in range(3):
        sec, pub = nonce_gen(_seed(f"nonce-{i}"), i, msg)
        secrets.append(sec)
        pairs.append(pub)
    partials = {
        i: partial_sign(secrets[i], members[i].sk, i, ctx, pairs, msg)
        for i in range(3)
    }
    for i in range(3):
        out[f"agg_partial_{i}"] = "%064x" % partials[i]
    out["agg_sig"] = aggregate(partials, ctx, pairs, msg).encode().hex()
    return out


def encoding_vectors() -> Dict[str, str]:
    out: Dict[str, str] = {}
    out["genesis_id"] = GENESIS_ID.hex()
    block = ConsumerBlock(3, GENESIS_ID, 1, id_hash(b"provider tip"), (b"tx-a", b"tx-b"))
    out["consumer_block"] = block.encode().hex()
    out["consumer_block_id"] = block.block_id().hex()

    prop = Proposal(3, 1, block, -1, 2)
    out["proposal"] = prop.encode().hex()
    pv = Prevote(3, 1, block.block_id(), 2)
    out["prevote"] = pv.encode().hex()
    pc = Precommit(3, 1, block.block_id(), 2)
    out["precommit"] = pc.encode().hex()
    kp = schnorr_keygen(_seed("signer"))
    out["signed_prevote"] = SignedMessage(pv, schnorr_sign(kp, pv.encode())).encode().hex()

    daps = daps_keygen(_seed("finality"), horizon=8)
    vote = make_final_vote(daps, 1, 3, block.block_id())
    out["final_vote"] = vote.encode().hex()
    out["confirm_message"] = confirm_message(3, block.block_id()).hex()
    confirm = ConfirmSig(3, block.block_id(), 1,
                         schnorr_sign(kp, confirm_message(3, block.block_id())))
    out["confirm_sig"] = confirm.encode().hex()

    stamp = Timestamp(3, block.block_id(), (vote,))
    out["timestamp"] = stamp.encode().hex()
    out["stamp_payload"] = stamp_payload(stamp).hex()
    out["evidence_payload"] = evidence_payload(3, (confirm,), (confirm,)).hex()

    out["data_script"] = encode_script(data_script(b"payload bytes")).hex()
    slash = build_slashing_tx(id_hash(b"deposit"), 0, 50_000)
    out["slashing_tx"] = encode_tx(slash).hex()
    out["slashing_txid"] = slash.txid().hex()
    template = ctv_template_hash(slash)
    out["ctv_template_hash"] = template.hex()
    cov = covenant_bond_script(encode_point(kp.pk), 144, template)
    out["covenant_bond_script"] = encode_script(cov).hex()
    com = committee_bond_script(encode_point(kp.pk), 144, encode_point(kp.pk))
    out["committee_bond_script"] = encode_script(com).hex()

    deposit = ProviderTx(
        inputs=(TxIn(id_hash(b"coin"), 0, ()),),
        outputs=(TxOut(25_000, cov),),
        locktime=0,
    )
    out["provider_tx"] = encode_tx(deposit).hex()
    out["provider_txid"] = deposit.txid().hex()
    out["provider_sighash"] = sighash(deposit, 0).hex()
    chunks = encode_chunks(bytes(range(200)))
    out["chunk_count"] = "%02x" % len(chunks)
    out["chunk_0"] = chunks[0].hex()
    out["chunk_last"] = chunks[-1].hex()
    return out


FILES: Dict[str, Callable[[], Dict[str, str]]] = {
    "crypto_vectors.txt": crypto_vectors,
    "encoding_vectors.txt": encoding_vectors,
}


def render(vectors: Dict[str, str]) -> str:
    lines = [f"{name} = {value}" for name, value in vectors.items()]
    return "\n".join(lines) + "\n"


def parse(text: str) -> Dict[str, str]:
    out: Dict[str, str] = {}
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        name, _, value = line.partition(" = ")
        out[name] = value
    return out


def default_dir() -> Path:
    return Path(__file__).resolve().parent


def refresh(directory: Path) -> List[str]:
    """Write every missing vector file; compare the rest against a fresh
    regeneration. Returns mismatch descriptions (empty means clean)."""
    problems: List[str] = []
    directory.mkdir(parents=True, exist_ok=True)
    for fname, gen in FILES.items():
        fresh = gen()
        path = directory / fname
        if not path.exists():
            path.write_text(render(fresh))
            continue
        stored = parse(path.read_text())
        if stored == fresh:
            continue
        missing = sorted(set(fresh) - set(stored))
        extra = sorted(set(stored) - set(fresh))
        changed = sorted(k for k in set(fresh) & set(stored) if fresh[k] != stored[k])
        for k in changed:
            problems.append(f"{fname}: {k} differs")
        for k in missing:
            problems.append(f"{fname}: {k} missing from stored file")
        for k in extra:
            problems.append(f"{fname}: stored file has unknown entry {k}")
    return problems
