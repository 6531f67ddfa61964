"""Synchronous-SGD worker: emulated compute, PUSH, wait for GLOBAL."""

from __future__ import annotations

import logging
import socket
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np

from ..codec import Codec, EncodedBlob, ParamBlob
from ..cost_model import ClusterConfig
from .frames import Frame, FrameError, MsgType, read_frame
from .server import DEFAULT_TIMEOUT_S, WIRE_FACTOR, HarnessError
from .throttle import TokenBucket, send_throttled

log = logging.getLogger(__name__)

CONNECT_ATTEMPTS = 3
BACKOFF_S = 0.2

BlobFn = Callable[[int, int, int], ParamBlob]


def local_blob(worker_id: int, rnd: int, seed: int, count: int) -> ParamBlob:
    """Deterministic stand-in for a worker's local parameters."""
    rng = np.random.default_rng([seed, worker_id, rnd])
    return ParamBlob(rng.standard_normal(count, dtype=np.float32) * np.float32(0.01))


@dataclass
class RoundTiming:
    round: int
    compute_s: float
    encode_s: float
    push_s: float
    wait_s: float
    decode_s: float


@dataclass
class WorkerResult:
    worker_id: int
    timings: list[RoundTiming] = field(default_factory=list)
    last_pushed: Optional[EncodedBlob] = None
    last_global: Optional[EncodedBlob] = None
    last_decoded: Optional[ParamBlob] = None

    def to_dict(self) -> dict:
        return {"worker_id": self.worker_id, "timings": [asdict(t) for t in self.timings]}


def connect(addr: tuple[str, int], timeout_s: float,
            attempts: int = CONNECT_ATTEMPTS, backoff_s: float = BACKOFF_S) -> socket.socket:
    last = None
    for attempt in range(attempts):
        try:
            sock = socket.create_connection(addr, timeout=timeout_s)
            sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            return sock
        except (ConnectionRefusedError, ConnectionResetError, socket.timeout) as exc:
            last = exc
            log.debug("connect to %s failed (attempt %d): %s", addr, attempt + 1, exc)
            if attempt + 1 < attempts:
                time.sleep(backoff_s * 2 ** attempt)
    raise HarnessError(f"could not reach server at {addr[0]}:{addr[1]} "
                       f"after {attempts} attempts: {last}")


def run_worker(
    server_addr: tuple[str, int],
    worker_id: int,
    cfg: ClusterConfig,
    codec: Codec,
    rounds: int,
    *,
    seed: int = 0,
    compute_s: Optional[float] = None,
    chi: Optional[float] = None,
    blob_fn: Optional[BlobFn] = None,
    timeout_s: float = DEFAULT_TIMEOUT_S,
) -> WorkerResult:
    """Run ``rounds`` synchronous updates against the server.

    ``compute_s`` defaults to i * C / M.  ``chi`` throttles this worker's own
    pushes (per-link mode); leave it None when the server shares one bucket.
    """
    if compute_s is None:
        compute_s = cfg.iterations * cfg.minibatch_time / cfg.workers
    count = max(1, int(cfg.weight_bytes) // 4)
    make = blob_fn or (lambda wid, rnd, s: local_blob(wid, rnd, s, count))
    bucket = TokenBucket(chi * WIRE_FACTOR) if chi is not None else None
    result = WorkerResult(worker_id)

    sock = connect(server_addr, timeout_s)
    try:
        sock.sendall(Frame.hello(worker_id).to_bytes())
        for rnd in range(1, rounds + 1):
            t0 = time.monotonic()
            time.sleep(compute_s)
            t1 = time.monotonic()
            enc = codec.encode(make(worker_id, rnd, seed))
            t2 = time.monotonic()
            send_throttled(sock, Frame(MsgType.PUSH, rnd, enc.to_bytes()).to_bytes(), bucket)
            t3 = time.monotonic()
            frame = read_frame(sock)
            t4 = time.monotonic()
            if frame.msg_type is not MsgType.GLOBAL or frame.round != rnd:
                raise FrameError(f"expected GLOBAL for round {rnd}, got "
                                 f"{frame.msg_type.name} round {frame.round}")
            glob = EncodedBlob.from_bytes(frame.payload)
            decoded = codec.decode(glob)
            t5 = time.monotonic()
            result.timings.append(RoundTiming(rnd, t1 - t0, t2 - t1, t3 - t2, t4 - t3, t5 - t4))
            result.last_pushed, result.last_global, result.last_decoded = enc, glob, decoded
        sock.sendall(Frame(MsgType.DONE, rounds + 1).to_bytes())
        frame = read_frame(sock, max_payload=0)
        if frame.msg_type is not MsgType.DONE:
            raise FrameError(f"expected DONE, got {frame.msg_type.name}")
    except (FrameError, ConnectionError, OSError) as exc:
        raise HarnessError(f"worker {worker_id}: {exc}") from exc
    finally:
        sock.close()
    return result
