"""Loopback parameter-server emulation over TCP."""

from __future__ import annotations

import threading
from typing import Optional

from ..codec import Codec
from ..cost_model import ClusterConfig
from .frames import Frame, FrameError, MsgType, decode_frame, read_frame
from .server import (
    HarnessError,
    HarnessReport,
    ParameterServer,
    RoundAborted,
    RoundReport,
    aggregate,
    run_server,
)
from .throttle import TokenBucket, throttle
from .worker import BlobFn, RoundTiming, WorkerResult, local_blob, run_worker

__all__ = [
    "BlobFn", "Frame", "FrameError", "HarnessError", "HarnessReport", "MsgType",
    "ParameterServer", "RoundAborted", "RoundReport", "RoundTiming", "TokenBucket",
    "WorkerResult", "aggregate", "decode_frame", "local_blob", "read_frame", "run_local",
    "run_server", "run_worker", "throttle",
]


def run_local(
    cfg: ClusterConfig,
    codec: Codec,
    rounds: int,
    *,
    chi: Optional[float] = None,
    per_link: bool = False,
    seed: int = 0,
    compute_s: Optional[float] = None,
    blob_fn: Optional[BlobFn] = None,
    timeout_s: float = 30.0,
    host: str = "127.0.0.1",
) -> tuple[HarnessReport, list[WorkerResult]]:
    """Server plus M worker threads on loopback; raises the first failure."""
    server = ParameterServer((host, 0), cfg, codec, rounds, chi=chi,
                             per_link=per_link, timeout_s=timeout_s)
    results: dict[int, WorkerResult] = {}
    errors: list[BaseException] = []

    def work(wid: int):
        try:
            results[wid] = run_worker(
                server.address, wid, cfg, codec, rounds, seed=seed, compute_s=compute_s,
                chi=chi if per_link else None, blob_fn=blob_fn, timeout_s=timeout_s,
            )
        except BaseException as exc:
            errors.append(exc)

    threads = [threading.Thread(target=work, args=(k,), daemon=True)
               for k in range(cfg.workers)]
    for t in threads:
        t.start()
    try:
        report = server.serve()
    finally:
        for t in threads:
            t.join(timeout_s)
    if errors:
        raise errors[0]
    return report, [results[k] for k in sorted(results)]
