"""Binary wire format used for byte accounting.

Every message is framed as ``u32 length | u8 kind | body`` with all integers
little-endian; ``length`` counts the kind byte plus the body.

Kind tags::

    0x01-0x04  rbc propose/echo/vote/ready   i32 broadcaster, u32 seq, u32 len, payload
    0x11-0x15  coded rbc propose/propose_full/echo/vote/ready
                                             i32 broadcaster, u32 seq, root[32], u8 flags,
                                             [fragment], [u32 len, payload]
    0x21-0x26  dispersal disperse/echo/vote/ready/retrieve/symbol
                                             i32 client, u32 seq, root[32], u8 flags, [fragment]
    0x31       round timeout                 u32 round

A fragment is ``u16 index, u32 len, share, u16 leaf_count, u8 count, count x digest[32]``.
Flag bit 0 marks a fragment, bit 1 a payload.
"""

from __future__ import annotations

import struct

from ..avid import AvidKind, AvidMessage
from ..balanced import BalancedMessage, BrbcKind
from ..coding import CodedFragment, MerkleProof
from ..rbc import InstanceId, RbcKind, RbcMessage
from ..sailfish.node import TimeoutMessage

RBC_BASE = 0x00
BRBC_BASE = 0x10
AVID_BASE = 0x20
TIMEOUT_TAG = 0x31

_IID = struct.Struct("<iI")
_FRAME = struct.Struct("<IB")


class WireError(ValueError):
    pass


def _fragment(frag: CodedFragment) -> bytes:
    sibs = frag.proof.siblings
    return b"".join(
        [
            struct.pack("<HI", frag.index, len(frag.share)),
            frag.share,
            struct.pack("<HB", frag.proof.leaf_count, len(sibs)),
            *sibs,
        ]
    )


def _read_fragment(data: bytes, pos: int, root: bytes) -> tuple[CodedFragment, int]:
    index, size = struct.unpack_from("<HI", data, pos)
    pos += 6
    share = data[pos:pos + size]
    if len(share) != size:
        raise WireError("truncated share")
    pos += size
    leaf_count, count = struct.unpack_from("<HB", data, pos)
    pos += 3
    sibs = tuple(data[pos + 32 * i:pos + 32 * (i + 1)] for i in range(count))
    if any(len(s) != 32 for s in sibs):
        raise WireError("truncated proof")
    pos += 32 * count
    return CodedFragment(index, share, MerkleProof(leaf_count, sibs), root), pos


def encode_message(msg) -> bytes:
    if isinstance(msg, RbcMessage):
        tag = RBC_BASE + int(msg.kind)
        body = _IID.pack(*msg.instance) + struct.pack("<I", len(msg.payload)) + msg.payload
    elif isinstance(msg, BalancedMessage):
        tag = BRBC_BASE + int(msg.kind)
        flags = (msg.fragment is not None) | ((msg.payload is not None) << 1)
        parts = [_IID.pack(*msg.instance), msg.root, bytes([flags])]
        if msg.fragment is not None:
            parts.append(_fragment(msg.fragment))
        if msg.payload is not None:
            parts.append(struct.pack("<I", len(msg.payload)) + msg.payload)
        body = b"".join(parts)
    elif isinstance(msg, AvidMessage):
        tag = AVID_BASE + int(msg.kind)
        parts = [_IID.pack(*msg.instance), msg.root, bytes([msg.fragment is not None])]
        if msg.fragment is not None:
            parts.append(_fragment(msg.fragment))
        body = b"".join(parts)
    elif isinstance(msg, TimeoutMessage):
        tag = TIMEOUT_TAG
        body = struct.pack("<I", msg.round)
    else:
        raise WireError(f"cannot encode {type(msg).__name__}")
    return _FRAME.pack(len(body) + 1, tag) + body


def decode_message(data: bytes):
    try:
        return _decode(data)
    except (struct.error, ValueError) as exc:
        raise WireError(f"malformed frame: {exc}") from None


def _decode(data: bytes):
    length, tag = _FRAME.unpack_from(data, 0)
    if length + 4 != len(data):
        raise WireError(f"frame length {length} does not match {len(data) - 4} bytes")
    pos = _FRAME.size
    if tag == TIMEOUT_TAG:
        (rnd,) = struct.unpack_from("<I", data, pos)
        pos += 4
        msg = TimeoutMessage(rnd)
    elif RBC_BASE < tag <= RBC_BASE + 4:
        iid = InstanceId(*_IID.unpack_from(data, pos))
        pos += _IID.size
        (size,) = struct.unpack_from("<I", data, pos)
        pos += 4
        payload = data[pos:pos + size]
        pos += size
        msg = RbcMessage(RbcKind(tag - RBC_BASE), iid, payload)
    elif BRBC_BASE < tag <= BRBC_BASE + 5 or AVID_BASE < tag <= AVID_BASE + 6:
        iid = InstanceId(*_IID.unpack_from(data, pos))
        pos += _IID.size
        root = data[pos:pos + 32]
        pos += 32
        flags = data[pos]
        pos += 1
        frag = payload = None
        if flags & 1:
            frag, pos = _read_fragment(data, pos, root)
        if flags & 2:
            (size,) = struct.unpack_from("<I", data, pos)
            pos += 4
            payload = data[pos:pos + size]
            pos += size
        if tag < AVID_BASE:
            msg = BalancedMessage(BrbcKind(tag - BRBC_BASE), iid, root, frag, payload)
        else:
            msg = AvidMessage(AvidKind(tag - AVID_BASE), iid, root, frag)
    else:
        raise WireError(f"unknown kind tag {tag:#x}")
    if pos != len(data):
        raise WireError("trailing bytes in frame")
    return msg


def kind_name(msg) -> str:
    if isinstance(msg, RbcMessage):
        return "rbc." + msg.kind.name.lower()
    if isinstance(msg, BalancedMessage):
        return "brbc." + msg.kind.name.lower()
    if isinstance(msg, AvidMessage):
        return "avid." + msg.kind.name.lower()
    if isinstance(msg, TimeoutMessage):
        return "timeout"
    return type(msg).__name__
