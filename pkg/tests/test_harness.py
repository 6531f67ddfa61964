import socket
import threading
import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from homcomp.codec import DeflateCodec, IdentityCodec, ParamBlob, QuantCodec, average_error_bound
from homcomp.cost_model import ClusterConfig
from homcomp.harness import (
    Frame,
    FrameError,
    HarnessError,
    MsgType,
    ParameterServer,
    RoundAborted,
    TokenBucket,
    decode_frame,
    local_blob,
    run_local,
    run_worker,
    throttle,
)


def small_cfg(m, count=1000, i=1, c=0.001):
    return ClusterConfig(workers=m, minibatch_time=c, iterations=i, weight_bytes=4 * count,
                         bandwidth=1e9)


def test_throttle_rate_bound():
    data = bytes(2_000_000)
    t0 = time.monotonic()
    out = b"".join(throttle([data], chi=1_000_000))
    elapsed = time.monotonic() - t0
    assert out == data
    assert 2.0 <= elapsed < 2.6


def test_throttle_unlimited_passthrough():
    chunks = [b"ab", b"cd"]
    assert list(throttle(chunks, None)) == chunks


def test_bucket_is_shared_fairly():
    bucket = TokenBucket(2_000_000)
    t0 = time.monotonic()
    threads = [threading.Thread(target=lambda: [bucket.consume(50_000) for _ in range(10)])
               for _ in range(2)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    # 1 MB at 2 MB/s no matter how many callers
    assert time.monotonic() - t0 >= 0.5


def test_bucket_rejects_bad_rate():
    with pytest.raises(ValueError):
        TokenBucket(0)


@settings(max_examples=200)
@given(st.sampled_from(list(MsgType)), st.integers(0, 2**32 - 1), st.binary(max_size=64))
def test_frame_roundtrip(kind, rnd, payload):
    if kind is MsgType.DONE:
        payload = b""
    if kind is MsgType.HELLO:
        payload = payload[:4].ljust(4, b"\0")
    frame = Frame(kind, rnd, payload)
    assert decode_frame(frame.to_bytes()) == frame


@settings(max_examples=500)
@given(st.binary(max_size=40))
def test_frame_fuzz_never_crashes(raw):
    try:
        frame = decode_frame(raw)
    except FrameError:
        return
    assert frame.to_bytes() == raw


def test_frame_rejects_bad_headers():
    with pytest.raises(FrameError):
        decode_frame(bytes([9, 0, 0, 0, 0, 0, 0, 0, 0]))
    with pytest.raises(FrameError):
        decode_frame(Frame(MsgType.PUSH, 1, b"abc").to_bytes()[:-1])
    with pytest.raises(FrameError):
        decode_frame(bytes([4, 1, 0, 0, 0, 1, 0, 0, 0, 0]))
    with pytest.raises(FrameError):
        decode_frame(Frame(MsgType.PUSH, 1, b"abcd").to_bytes(), max_payload=3)


def test_single_worker_identity_is_exact():
    report, results = run_local(small_cfg(1), IdentityCodec(), 2, seed=3)
    assert results[0].last_global.to_bytes() == results[0].last_pushed.to_bytes()
    assert len(report.rounds) == 2


def test_four_constant_workers_average():
    def blob(wid, rnd, seed):
        return ParamBlob(np.full(100, wid + 1, dtype=np.float32))

    _, results = run_local(small_cfg(4, 100), IdentityCodec(), 1, blob_fn=blob)
    for r in results:
        assert r.last_decoded.values.tolist() == [2.5] * 100


def test_deflate_aggregate_is_float_mean():
    _, results = run_local(small_cfg(3, 500), DeflateCodec(), 1, seed=11)
    mean = np.mean([local_blob(w, 1, 11, 500).values.astype(np.float64) for w in range(3)],
                   axis=0).astype(np.float32)
    assert results[0].last_decoded.to_bytes() == mean.tobytes()


def test_quant_aggregate_within_bound():
    codec = QuantCodec(8)
    _, results = run_local(small_cfg(4, 2000), codec, 1, seed=5)
    mean = np.mean([local_blob(w, 1, 5, 2000).values.astype(np.float64) for w in range(4)],
                   axis=0)
    glob = codec.unwrap(results[0].last_global)
    slack = np.finfo(np.float32).eps * np.abs(mean).max()
    assert np.abs(glob.dequantize() - mean).max() <= average_error_bound(4) * glob.scale + slack


def test_runs_are_deterministic():
    a = run_local(small_cfg(2, 300), QuantCodec(8), 2, seed=9)[1]
    b = run_local(small_cfg(2, 300), QuantCodec(8), 2, seed=9)[1]
    assert a[0].last_global.to_bytes() == b[0].last_global.to_bytes()


def test_compute_phase_is_injected():
    _, results = run_local(small_cfg(1, 10, i=100, c=0.001), IdentityCodec(), 1)
    t = results[0].timings[0].compute_s
    assert 0.1 <= t < 0.3


def test_report_models_transfer():
    report, _ = run_local(small_cfg(2, 25_000), IdentityCodec(), 1, chi=1_000_000)
    # two pushes and two broadcasts of (100_000 + 9 envelope) bytes over a 2-way link
    assert report.modeled_t_tnf == pytest.approx(4 * 100_009 / (2 * 1_000_000), rel=1e-12)
    assert report.relative_error < 0.3
    d = report.to_dict()
    assert d["rounds"][0]["round"] == 1


def _raw_hello(addr, wid):
    s = socket.create_connection(addr)
    s.sendall(Frame.hello(wid).to_bytes())
    return s


def test_worker_disconnect_aborts_round():
    cfg = small_cfg(2)
    server = ParameterServer(("127.0.0.1", 0), cfg, IdentityCodec(), 1, timeout_s=5)
    errors = []

    def good():
        try:
            run_worker(server.address, 0, cfg, IdentityCodec(), 1, timeout_s=5)
        except HarnessError as exc:
            errors.append(exc)

    t = threading.Thread(target=good)
    t.start()
    bad = _raw_hello(server.address, 1)
    threading.Timer(0.2, bad.close).start()
    with pytest.raises(RoundAborted, match="worker 1"):
        server.serve()
    t.join(5)
    assert errors  # the healthy worker sees the abort too


def test_duplicate_worker_id_rejected():
    server = ParameterServer(("127.0.0.1", 0), small_cfg(2), IdentityCodec(), 1, timeout_s=1)
    a = _raw_hello(server.address, 0)
    b = _raw_hello(server.address, 0)
    try:
        with pytest.raises(HarnessError, match="only 1 of 2"):
            server.serve()
    finally:
        a.close()
        b.close()


def test_worker_gives_up_without_server():
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        port = s.getsockname()[1]
    with pytest.raises(HarnessError, match="could not reach"):
        run_worker(("127.0.0.1", port), 0, small_cfg(1), IdentityCodec(), 1, timeout_s=1)
