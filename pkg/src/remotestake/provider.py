"""Simulated provider chain: scripts, transactions, UTXO ledger, bonds.

The provider chain is a single canonical chain grown by the simulator's
scheduler. Confirmation is folded into that abstraction: a mined block is a
confirmed block, and every client reads the same chain (clients that lag do
so by processing later, not by seeing a different chain). The delivery
contract the rest of the stack relies on:

* a valid transaction submitted when the chain has height h is included in a
  block of height < h + k_f (the adversary may delay inclusion inside that
  window, and may order transactions within a block);
* the chain grows by at most k_c blocks per T_confirm span of simulator time
  (enforced by the mining cadence, asserted per run).

Scripts support exactly the operations the bond contracts need: PUSH,
OP_IF/OP_ELSE/OP_ENDIF, OP_CHECKLOCKTIMEVERIFY, OP_DROP,
OP_CHECKTEMPLATEVERIFY, OP_CHECKSIG, OP_CHECKSIGVERIFY and OP_RETURN.
OP_CHECKTEMPLATEVERIFY here pops the committed hash: the contract scripts
place it mid-script, so leave-on-stack semantics would never balance.
"""

import enum
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Set, Tuple

from .crypto import id_hash, schnorr_verify_bytes

MAX_DATA_PAYLOAD = 80  # bytes per OP_RETURN data push
CHUNK_HEADER = 6       # session id u32, index u8, total u8
CHUNK_BODY = MAX_DATA_PAYLOAD - CHUNK_HEADER


class ScriptError(ValueError):
    """Structurally malformed script or witness."""


class TxRejected(ValueError):
    def __init__(self, reason: str):
        self.reason = reason
        super().__init__(reason)


class Op(enum.Enum):
    PUSH = "PUSH"
    IF = "OP_IF"
    ELSE = "OP_ELSE"
    ENDIF = "OP_ENDIF"
    CHECKLOCKTIMEVERIFY = "OP_CHECKLOCKTIMEVERIFY"
    DROP = "OP_DROP"
    CHECKTEMPLATEVERIFY = "OP_CHECKTEMPLATEVERIFY"
    CHECKSIG = "OP_CHECKSIG"
    CHECKSIGVERIFY = "OP_CHECKSIGVERIFY"
    RETURN = "OP_RETURN"


# a script is a tuple of (Op, payload) pairs; payload is bytes for PUSH/RETURN
Script = Tuple[Tuple[Op, bytes], ...]


def push(data: bytes) -> Tuple[Op, bytes]:
    return (Op.PUSH, bytes(data))


def push_int(v: int) -> Tuple[Op, bytes]:
    if v < 0:
        raise ValueError("script numbers are unsigned here")
    return (Op.PUSH, v.to_bytes((v.bit_length() + 7) // 8 or 1, "big"))


def op(code: Op) -> Tuple[Op, bytes]:
    return (code, b"")


def _truthy(item: bytes) -> bool:
    return any(item)


def _to_int(item: bytes) -> int:
    return int.from_bytes(item, "big")


@dataclass
class TxContext:
    """What a script can see of the spending transaction."""

    current_height: int
    template_hash: bytes
    sighash: bytes
    checksig: Callable[[bytes, bytes, bytes], bool] = schnorr_verify_bytes


def eval_script(script: Script, witness: Sequence[bytes], ctx: TxContext) -> bool:
    """Run witness pushes then the script; True iff the final stack top is truthy.

    Raises ScriptError for structural problems (unbalanced conditionals,
    stack underflow); clean verification failures just return False.
    """
    stack: List[bytes] = [bytes(w) for w in witness]
    # exec[i] is False while inside a non-taken branch
    exec_flags: List[bool] = []
    saw_else: List[bool] = []

    def executing() -> bool:
        return all(exec_flags)

    for code, payload in script:
        if code == Op.IF:
            if executing():
                if not stack:
                    raise ScriptError("OP_IF on empty stack")
                exec_flags.append(_truthy(stack.pop()))
            else:
                exec_flags.append(False)
            saw_else.append(False)
            continue
        if code == Op.ELSE:
            if not exec_flags or saw_else[-1]:
                raise ScriptError("OP_ELSE without matching OP_IF")
            saw_else[-1] = True
            exec_flags[-1] = (not exec_flags[-1]) and all(exec_flags[:-1])
            continue
        if code == Op.ENDIF:
            if not exec_flags:
                raise ScriptError("OP_ENDIF without matching OP_IF")
            exec_flags.pop()
            saw_else.pop()
            continue
        if not executing():
            continue

        if code == Op.PUSH:
            stack.append(payload)
        elif code == Op.RETURN:
            return False
        elif code == Op.DROP:
            if not stack:
                raise ScriptError("OP_DROP on empty stack")
            stack.pop()
        elif code == Op.CHECKLOCKTIMEVERIFY:
            if not stack:
                raise ScriptError("OP_CHECKLOCKTIMEVERIFY on empty stack")
            locktime = _to_int(stack[-1])  # left on the stack, like the original
            if ctx.current_height < locktime:
                return False
        elif code == Op.CHECKTEMPLATEVERIFY:
            if not stack:
                raise ScriptError("OP_CHECKTEMPLATEVERIFY on empty stack")
            if stack.pop() != ctx.template_hash:
                return False
        elif code in (Op.CHECKSIG, Op.CHECKSIGVERIFY):
            if len(stack) < 2:
                raise ScriptError(f"{code.value} needs pubkey and signature")
            pk = stack.pop()
            sig = stack.pop()
            ok = bool(sig) and ctx.checksig(pk, ctx.sighash, sig)
            if code == Op.CHECKSIG:
                stack.append(b"\x01" if ok else b"")
            elif not ok:
                return False
        else:  # pragma: no cover
            raise ScriptError(f"unknown opcode {code}")

    if exec_flags:
        raise ScriptError("unterminated OP_IF")
    return bool(stack) and _truthy(stack[-1])


def is_data_script(script: Script) -> bool:
    return bool(script) and script[0][0] == Op.RETURN


def data_script(payload: bytes) -> Script:
    if len(payload) > MAX_DATA_PAYLOAD:
        raise ValueError(f"data payload over {MAX_DATA_PAYLOAD} bytes")
    return (op(Op.RETURN), push(payload))


def data_payload(script: Script) -> Optional[bytes]:
    if is_data_script(script) and len(script) == 2 and script[1][0] == Op.PUSH:
        return script[1][1]
    return None


# ---------------------------------------------------------------------------
# transactions and encoding
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TxIn:
    txid: bytes
    vout: int
    witness: Tuple[bytes, ...] = ()


@dataclass(frozen=True)
class TxOut:
    amount: int
    script: Script


@dataclass(frozen=True)
class ProviderTx:
    inputs: Tuple[TxIn, ...]
    outputs: Tuple[TxOut, ...]
    locktime: int = 0

    def txid(self) -> bytes:
        return id_hash(b"tx" + encode_tx(self, include_witness=False))


def encode_script(script: Script) -> bytes:
    out = len(script).to_bytes(2, "big")
    for code, payload in script:
        out += code.value.encode().ljust(24, b"\x00")
        out += len(payload).to_bytes(2, "big") + payload
    return out


def encode_tx(tx: ProviderTx, include_witness: bool = True) -> bytes:
    out = len(tx.inputs).to_bytes(2, "big")
    for i in tx.inputs:
        out += i.txid + i.vout.to_bytes(2, "big")
        if include_witness:
            out += len(i.witness).to_bytes(2, "big")
            for w in i.witness:
                out += len(w).to_bytes(2, "big") + w
    out += len(tx.outputs).to_bytes(2, "big")
    for o in tx.outputs:
        out += o.amount.to_bytes(8, "big") + encode_script(o.script)
    out += tx.locktime.to_bytes(8, "big")
    return out


def ctv_template_hash(tx: ProviderTx) -> bytes:
    """Commits to outputs, locktime and input count of the spending tx."""
    out = len(tx.inputs).to_bytes(2, "big")
    for o in tx.outputs:
        out += o.amount.to_bytes(8, "big") + encode_script(o.script)
    out += tx.locktime.to_bytes(8, "big")
    return id_hash(b"ctv" + out)


def sighash(tx: ProviderTx, input_index: int) -> bytes:
    """Message signed by OP_CHECKSIG: the spent outpoint, outputs, locktime."""
    ref = tx.inputs[input_index]
    out = ref.txid + ref.vout.to_bytes(2, "big")
    for o in tx.outputs:
        out += o.amount.to_bytes(8, "big") + encode_script(o.script)
    out += tx.locktime.to_bytes(8, "big")
    return id_hash(b"sighash" + out)


# ---------------------------------------------------------------------------
# bond contracts
# ---------------------------------------------------------------------------


def covenant_bond_script(validator_pk: bytes, timelock: int, slash_template: bytes) -> Script:
    """Either spend after the timelock, or spend to the committed slashing tx."""
    return (
        op(Op.IF),
        push_int(timelock),
        op(Op.CHECKLOCKTIMEVERIFY),
        op(Op.DROP),
        op(Op.ELSE),
        push(slash_template),
        op(Op.CHECKTEMPLATEVERIFY),
        op(Op.ENDIF),
        push(validator_pk),
        op(Op.CHECKSIG),
    )


def committee_bond_script(validator_pk: bytes, timelock: int, committee_pk: bytes) -> Script:
    """Committee variant: the slashing path needs the committee aggregate key."""
    return (
        op(Op.IF),
        push_int(timelock),
        op(Op.CHECKLOCKTIMEVERIFY),
        op(Op.DROP),
        op(Op.ELSE),
        push(committee_pk),
        op(Op.CHECKSIGVERIFY),
        op(Op.ENDIF),
        push(validator_pk),
        op(Op.CHECKSIG),
    )


def build_slashing_tx(deposit_txid: bytes, deposit_vout: int, amount: int) -> ProviderTx:
    """Single input, single output burning the whole deposit."""
    return ProviderTx(
        inputs=(TxIn(deposit_txid, deposit_vout),),
        outputs=(TxOut(amount, data_script(b"SLSH")),),
        locktime=0,
    )


WITHDRAW_SELECTOR = b"\x01"
SLASH_SELECTOR = b""


# ---------------------------------------------------------------------------
# chunked data payloads (timestamps etc.)
# ---------------------------------------------------------------------------


def encode_chunks(payload: bytes) -> List[bytes]:
    """Split a payload into <=80-byte chunks: (session u32, index u8, total u8, body)."""
    if not payload:
        raise ValueError("empty payload")
    session = id_hash(payload)[:4]
    bodies = [payload[i : i + CHUNK_BODY] for i in range(0, len(payload), CHUNK_BODY)]
    if len(bodies) > 255:
        raise ValueError("payload too large to chunk")
    total = len(bodies)
    return [
        session + bytes([idx, total]) + body for idx, body in enumerate(bodies)
    ]


class ChunkAssembler:
    """Reassembles chunked payloads scanned off the chain in order.

    feed() returns the payloads completed by this chunk together with the
    height at which their final missing piece landed. Junk and partial
    sessions are silently dropped, which downstream treats as "no timestamp".
    """

    def __init__(self):
        self._sessions: Dict[bytes, Dict[int, bytes]] = {}
        self._totals: Dict[bytes, int] = {}
        self._done: Set[bytes] = set()

    def feed(self, height: int, data: bytes) -> List[Tuple[bytes, int]]:
        if len(data) < CHUNK_HEADER or len(data) > MAX_DATA_PAYLOAD:
            return []
        session, idx, total = data[:4], data[4], data[5]
        if total == 0 or idx >= total:
            return []
        if session in self._done:
            return []
        if session in self._totals and self._totals[session] != total:
            # inconsistent chunks: poison the session
            self._sessions.pop(session, None)
            self._totals.pop(session, None)
            self._done.add(session)
            return []
        self._totals[session] = total
        parts = self._sessions.setdefault(session, {})
        if idx in parts and parts[idx] != data[6:]:
            self._sessions.pop(session, None)
            self._totals.pop(session, None)
            self._done.add(session)
            return []
        parts[idx] = data[6:]
        if len(parts) == total:
            payload = b"".join(parts[i] for i in range(total))
            self._done.add(session)
            del self._sessions[session]
            del self._totals[session]
            if id_hash(payload)[:4] != session:
                return []
            return [(payload, height)]
        return []


# ---------------------------------------------------------------------------
# bond registry (both modes) and the smart-contract state machine
# ---------------------------------------------------------------------------

BOND_MARKER = b"BOND"
UNBOND_MARKER = b"UNBD"
EVIDENCE_MARKER = b"EVID"


@dataclass
class BondRecord:
    validator: int
    amount: int
    utxo: Tuple[bytes, int]
    bond_height: int
    duty_end: int        # provider height at which duties end
    timelock: int        # height at which withdrawal unlocks
    status: str = "bonded"  # bonded | withdrawn | slashed
    burn_height: Optional[int] = None


class BondRegistry:
    """Tracks deposits scanned off the chain; in smart mode it is also the
    contract state machine that authorizes withdrawals and executes slashes."""

    def __init__(self, smart: bool, k_u: int, duty_span: int):
        self.smart = smart
        self.k_u = k_u
        self.duty_span = duty_span  # K_a, provider blocks of duty per bond
        self.records: Dict[int, BondRecord] = {}
        self.pending_slashes: List[int] = []  # validators slashed, awaiting burn tx
        self.evidence_log: List[dict] = []

    def register(self, validator: int, amount: int, utxo: Tuple[bytes, int], height: int):
        self.records[validator] = BondRecord(
            validator=validator,
            amount=amount,
            utxo=utxo,
            bond_height=height,
            duty_end=height + self.duty_span,
            timelock=height + self.duty_span + self.k_u,
        )

    def on_unbond_request(self, validator: int, height: int):
        rec = self.records.get(validator)
        if rec and rec.status == "bonded":
            rec.duty_end = min(rec.duty_end, height)
            rec.timelock = rec.duty_end + self.k_u

    def on_spend(self, utxo: Tuple[bytes, int], burned: bool, height: int):
        for rec in self.records.values():
            if rec.utxo == utxo and rec.status == "bonded":
                if burned:
                    rec.status = "slashed"
                    rec.burn_height = height
                else:
                    rec.status = "withdrawn"

    def withdrawal_allowed(self, utxo: Tuple[bytes, int], height: int) -> bool:
        """Smart mode only: the contract refuses early or slashed withdrawals."""
        for rec in self.records.values():
            if rec.utxo == utxo:
                return rec.status == "bonded" and height >= rec.timelock
        return True

    def mark_slashed_by_evidence(self, validators: Sequence[int], height: int):
        for v in validators:
            rec = self.records.get(v)
            if rec and rec.status == "bonded":
                rec.status = "slashed"
                rec.burn_height = None  # set when the burn tx lands
                if v not in self.pending_slashes:
                    self.pending_slashes.append(v)

    def bonded_ids_at(self, height: int) -> List[int]:
        """Validators bonded by `height` whose duties have not ended by it.
        Purely historical: later withdrawals or slashes do not rewrite the
        set that was in force at `height`."""
        out = []
        for rec in self.records.values():
            if rec.bond_height <= height < rec.duty_end:
                out.append(rec.validator)
        return sorted(out)


# ---------------------------------------------------------------------------
# chain and ledger
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ProviderBlock:
    height: int
    parent: bytes
    txs: Tuple[ProviderTx, ...]

    def hash(self) -> bytes:
        body = self.height.to_bytes(8, "big") + self.parent
        for tx in self.txs:
            body += tx.txid()
        return id_hash(b"pblock" + body)


@dataclass
class MempoolEntry:
    tx: ProviderTx
    submit_height: int
    note: str = ""


class ProviderChain:
    """Canonical chain plus UTXO ledger.

    Inclusion contract: a pending valid tx is force-included once the next
    block would otherwise breach submit_height + k_f - 1. The adversary may
    defer inclusion of individual txs up to that bound via the `defer` hook.
    """

    def __init__(self, k_f: int, registry: Optional[BondRegistry] = None):
        self.k_f = k_f
        self.registry = registry
        self.blocks: List[ProviderBlock] = []
        self.utxos: Dict[Tuple[bytes, int], TxOut] = {}
        self.burned_total = 0
        self.minted_total = 0
        self.mempool: List[MempoolEntry] = []
        self.included_txids: Set[bytes] = set()
        self.rejections: List[Tuple[bytes, str]] = []
        self.events: List[dict] = []
        # scanner hooks: called with (height, payload) per data output
        self.data_listeners: List[Callable[[int, bytes], None]] = []

    @property
    def height(self) -> int:
        return len(self.blocks) - 1

    def tip_hash(self) -> bytes:
        return self.blocks[-1].hash() if self.blocks else b"\x00" * 32

    def block_hash_at(self, height: int) -> bytes:
        return self.blocks[height].hash()

    def submit(self, tx: ProviderTx, note: str = "") -> bytes:
        # txids are unique per chain: duplicate submissions (same payload
        # from two independent actors) collapse onto the first one
        tid = tx.txid()
        if tid in self.included_txids or any(e.tx.txid() == tid for e in self.mempool):
            return tid
        entry = MempoolEntry(tx, self.height, note)
        self.mempool.append(entry)
        return tid

    # -- validation ---------------------------------------------------------

    def _validate(self, tx: ProviderTx, height: int) -> Optional[str]:
        if tx.txid() in self.included_txids:
            return "already included"
        if tx.locktime > height:
            return "locktime not reached"
        if not tx.inputs:
            # data/mint transaction: minting only in the genesis block
            mint = sum(o.amount for o in tx.outputs if not is_data_script(o.script))
            if mint and height > 0:
                return "minting outside genesis"
            return None
        seen: Set[Tuple[bytes, int]] = set()
        in_value = 0
        for idx, txin in enumerate(tx.inputs):
            ref = (txin.txid, txin.vout)
            if ref in seen:
                return "duplicate input"
            seen.add(ref)
            utxo = self.utxos.get(ref)
            if utxo is None:
                return "missing or spent input"
            if self.registry and self.registry.smart:
                burn = all(is_data_script(o.script) for o in tx.outputs)
                if not burn and not self.registry.withdrawal_allowed(ref, height):
                    return "contract refuses withdrawal"
            ctx = TxContext(
                current_height=height,
                template_hash=ctv_template_hash(tx),
                sighash=sighash(tx, idx),
            )
            try:
                if not eval_script(utxo.script, txin.witness, ctx):
                    return "script failure"
            except ScriptError as e:
                return f"malformed script: {e}"
            in_value += utxo.amount
        out_value = sum(o.amount for o in tx.outputs)
        if in_value != out_value:
            return "value not conserved"
        return None

    def _apply(self, tx: ProviderTx, height: int):
        txid = tx.txid()
        self.included_txids.add(txid)
        if not tx.inputs:
            self.minted_total += sum(
                o.amount for o in tx.outputs if not is_data_script(o.script)
            )
        burned_all = bool(tx.inputs) and all(is_data_script(o.script) for o in tx.outputs)
        for txin in tx.inputs:
            ref = (txin.txid, txin.vout)
            spent = self.utxos.pop(ref)
            if self.registry:
                self.registry.on_spend(ref, burned_all, height)
        for vout, out in enumerate(tx.outputs):
            if is_data_script(out.script):
                self.burned_total += out.amount
                payload = data_payload(out.script)
                if payload is not None:
                    self._scan_data(height, payload, txid)
            else:
                self.utxos[(txid, vout)] = out

    def _scan_data(self, height: int, payload: bytes, txid: bytes):
        if payload.startswith(BOND_MARKER) and self.registry:
            validator = int.from_bytes(payload[4:6], "big")
            vout = payload[6]
            amount = int.from_bytes(payload[7:15], "big")
            self.registry.register(validator, amount, (txid, vout), height)
        elif payload.startswith(UNBOND_MARKER) and self.registry:
            validator = int.from_bytes(payload[4:6], "big")
            self.registry.on_unbond_request(validator, height)
        for listener in self.data_listeners:
            listener(height, payload)

    # -- growth -------------------------------------------------------------

    def genesis(self, txs: Sequence[ProviderTx]):
        if self.blocks:
            raise ValueError("genesis already exists")
        block = ProviderBlock(0, b"\x00" * 32, tuple(txs))
        for tx in txs:
            err = self._validate(tx, 0)
            if err:
                raise TxRejected(f"genesis tx invalid: {err}")
            self._apply(tx, 0)
        self.blocks.append(block)
        self.events.append({"kind": "provider_block", "height": 0, "txs": len(txs)})

    def mine(self, defer: Optional[Callable[[MempoolEntry, int], bool]] = None) -> ProviderBlock:
        """Mine the next block. `defer(entry, next_height)` may hold a tx back
        while its inclusion deadline permits; overdue txs are force-included."""
        next_height = self.height + 1
        taken: List[MempoolEntry] = []
        kept: List[MempoolEntry] = []
        for entry in self.mempool:
            deadline = entry.submit_height + self.k_f - 1
            overdue = next_height >= deadline
            if not overdue and defer is not None and defer(entry, next_height):
                kept.append(entry)
            else:
                taken.append(entry)
        self.mempool = kept
        included: List[ProviderTx] = []
        for entry in taken:
            err = self._validate(entry.tx, next_height)
            if err:
                self.rejections.append((entry.tx.txid(), err))
                self.events.append(
                    {"kind": "tx_rejected", "txid": entry.tx.txid().hex(), "reason": err}
                )
                continue
            self._apply(entry.tx, next_height)
            included.append(entry.tx)
        # smart-contract slash queue: burn txs are system-generated
        if self.registry and self.registry.smart and self.registry.pending_slashes:
            for validator in list(self.registry.pending_slashes):
                rec = self.registry.records[validator]
                if self.utxos.get(rec.utxo) is None:
                    self.registry.pending_slashes.remove(validator)
                    continue
                burn = ProviderTx(
                    inputs=(TxIn(rec.utxo[0], rec.utxo[1], (b"contract",)),),
                    outputs=(TxOut(rec.amount, data_script(b"SLSH")),),
                )
                # contract spends bypass script evaluation by construction
                self._apply(burn, next_height)
                rec.burn_height = next_height
                included.append(burn)
                self.registry.pending_slashes.remove(validator)
        block = ProviderBlock(next_height, self.tip_hash(), tuple(included))
        self.blocks.append(block)
        self.events.append(
            {"kind": "provider_block", "height": next_height, "txs": len(included)}
        )
        return block

    # -- inspection ---------------------------------------------------------

    def total_value(self) -> int:
        return sum(o.amount for o in self.utxos.values()) + self.burned_total

    def dump_records(self) -> List[str]:
        """Line-delimited chain state dump."""
        lines = []
        for b in self.blocks:
            lines.append(
                f"block {b.height} {b.hash().hex()} parent={b.parent.hex()} txs={len(b.txs)}"
            )
            for tx in b.txs:
                lines.append(f"  tx {tx.txid().hex()} in={len(tx.inputs)} out={len(tx.outputs)}")
        for (txid, vout), out in sorted(self.utxos.items()):
            lines.append(f"utxo {txid.hex()}:{vout} amount={out.amount}")
        lines.append(f"burned {self.burned_total}")
        return lines
