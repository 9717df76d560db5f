import json
import socket
import threading

import numpy as np
import pytest

from attacklab.numerics import make_rng
from attacklab.remote import HandshakeError, TransportError, connect_remote_victim, parse_address, serve_victim
from attacklab.victims import VictimSpec, build_victim


@pytest.fixture
def linear_server():
    spec = VictimSpec.from_dict({"kind": "linear", "w": [1.0, 0.0]})
    server = serve_victim(spec)
    server.start_background()
    yield server
    server.shutdown()
    server.server_close()


def _raw(server):
    s = socket.create_connection(parse_address(server.address), timeout=5)
    return s, s.makefile("rb")


def test_loopback_query(linear_server):
    with connect_remote_victim("tcp://" + linear_server.address, 2) as o:
        assert o.query_sign(np.array([0.5, 0.0])) == 1
        assert o.query_sign(np.array([-0.5, 0.0])) == -1
        assert o.query_count == 2


def test_loopback_matches_local_bit_for_bit():
    rng = make_rng(0)
    doc = {"kind": "quadratic", "w": list(rng.standard_normal(5)), "b": [0.0] * 5,
           "H": np.diag(rng.standard_normal(5)).tolist()}
    spec = VictimSpec.from_dict(doc)
    server = serve_victim(spec)
    server.start_background()
    try:
        local, _ = build_victim(spec)
        X = 1e-3 * rng.standard_normal((1000, 5))
        with connect_remote_victim(server.address, 5) as o:
            assert np.array_equal(o.query_signs(X), local.query_signs(X))
            assert o.query_count == 1000
    finally:
        server.shutdown()
        server.server_close()


def test_handshake_mismatch(linear_server):
    with pytest.raises(HandshakeError):
        connect_remote_victim(linear_server.address, 3)


def test_malformed_lines_keep_connection(linear_server):
    s, f = _raw(linear_server)
    try:
        s.sendall(b'{"id":0,"x":[1.0,0.0]}\n')
        assert json.loads(f.readline()) == {"err": "bad_request"}  # no handshake yet
        s.sendall(b'{"hello":{"dim":2}}\n')
        assert json.loads(f.readline()) == {"ok": {"dim": 2}}
        for bad in (b"not json\n", b'{"id":1,"x":[1.0]}\n', b'{"id":-1,"x":[1.0,0.0]}\n',
                    b'{"id":1,"x":[1.0,"a"]}\n', b"[1,2]\n"):
            s.sendall(bad)
            assert json.loads(f.readline()) == {"err": "bad_request"}
        s.sendall(b'{"id":18446744073709551615,"x":[-1.0,0.0]}\n')
        assert json.loads(f.readline()) == {"id": 18446744073709551615, "sign": -1}
    finally:
        s.close()


def test_four_concurrent_clients_preserve_order(linear_server):
    errors = []

    def client(k):
        try:
            with connect_remote_victim(linear_server.address, 2) as o:
                xs = make_rng(k).standard_normal((200, 2))
                got = [o.query_sign(x) for x in xs]
                assert got == [1 if x[0] >= 0 else -1 for x in xs]
        except Exception as exc:  # surfaced below
            errors.append(exc)

    ts = [threading.Thread(target=client, args=(k,)) for k in range(4)]
    for t in ts:
        t.start()
    for t in ts:
        t.join()
    assert not errors


def test_connect_refused():
    s = socket.socket()
    s.bind(("127.0.0.1", 0))
    port = s.getsockname()[1]
    s.close()
    with pytest.raises(TransportError):
        connect_remote_victim(f"127.0.0.1:{port}", 2, timeout_ms=500)


def test_bind_failure_is_transport_error(linear_server):
    spec = VictimSpec.from_dict({"kind": "linear", "w": [1.0, 0.0]})
    with pytest.raises(TransportError):
        serve_victim(spec, "256.0.0.1:1")
