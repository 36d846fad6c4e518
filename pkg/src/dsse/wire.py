"""Binary message formats and transports between the three parties.

Message layout:

    version(1) = 0x01 | kind(1) | body

Request kinds 0x01..0x05 (ADD, REFRESH, SEARCH, GET_BLOOM, ROTATE) and
response kinds 0x81..0x85. Every variable-length field is a 4-byte
big-endian length followed by the bytes; integers are big-endian
(timestamps and epochs 8 bytes, counts 4 bytes). Responses open with a
1-byte status code.

The filter bytes and 8-byte timestamps on the wire are exactly the MAC
inputs, so no re-canonicalization happens anywhere between parties.

Two transports speak the same bytes: an in-process channel (test default)
and a length-prefixed TCP socket (4-byte big-endian frame length).
"""

from __future__ import annotations

import socket
import socketserver
import threading
from dataclasses import dataclass, field

from .encoding import Reader, put_bytes, put_str, put_u8, put_u32, put_u64
from .errors import (
    DecryptionError,
    DsseError,
    FormatError,
    NotFoundError,
    ProtocolError,
    StaleEpochError,
    TransportError,
    UsageError,
)
from .protocol import AddPayload, Proof, RefreshPayload, SearchTokenEnvelope
from .server import CloudServer

VERSION = 0x01

KIND_ADD = 0x01
KIND_REFRESH = 0x02
KIND_SEARCH = 0x03
KIND_GET_BLOOM = 0x04
KIND_ROTATE = 0x05
_RESPONSE_BIT = 0x80

CODE_OK = 0x00
CODE_STALE_EPOCH = 0x01
CODE_NOT_FOUND = 0x02
CODE_PROTOCOL = 0x03
CODE_FORMAT = 0x04
CODE_UNSUPPORTED = 0x05
CODE_BAD_TOKEN = 0x06

_CODE_TO_ERROR = {
    CODE_STALE_EPOCH: StaleEpochError,
    CODE_NOT_FOUND: NotFoundError,
    CODE_PROTOCOL: ProtocolError,
    CODE_FORMAT: FormatError,
    CODE_UNSUPPORTED: UsageError,
    CODE_BAD_TOKEN: DecryptionError,
}


# ---------------------------------------------------------------------------
# Message dataclasses
# ---------------------------------------------------------------------------

@dataclass
class AddRequest:
    payload: AddPayload


@dataclass
class RefreshRequest:
    payload: RefreshPayload


@dataclass
class SearchRequest:
    envelope: SearchTokenEnvelope


@dataclass
class GetBloomRequest:
    pass


@dataclass
class RotateRequest:
    group_key: bytes
    epoch: int


@dataclass
class StatusResponse:
    kind: int  # response kind byte
    code: int
    message: str = ""


@dataclass
class SearchResponse:
    code: int
    ids: list[bytes] = field(default_factory=list)
    ciphertexts: list[bytes] = field(default_factory=list)
    proof: Proof | None = None
    message: str = ""


@dataclass
class GetBloomResponse:
    code: int
    bf_bytes: bytes = b""
    sigma: bytes = b""
    t: int = 0
    message: str = ""


Message = (
    AddRequest
    | RefreshRequest
    | SearchRequest
    | GetBloomRequest
    | RotateRequest
    | StatusResponse
    | SearchResponse
    | GetBloomResponse
)


# ---------------------------------------------------------------------------
# Encoding
# ---------------------------------------------------------------------------

def encode(msg: Message) -> bytes:
    buf = bytearray((VERSION,))
    if isinstance(msg, AddRequest):
        p = msg.payload
        put_u8(buf, KIND_ADD)
        put_bytes(buf, p.file_id)
        put_bytes(buf, p.ciphertext)
        put_u32(buf, len(p.entries))
        for tau, mu in p.entries:
            put_bytes(buf, tau)
            put_bytes(buf, mu)
        if p.sigma is not None:
            put_u8(buf, 1)
            put_bytes(buf, p.sigma)
            put_u64(buf, p.t)
        else:
            put_u8(buf, 0)
    elif isinstance(msg, RefreshRequest):
        p = msg.payload
        put_u8(buf, KIND_REFRESH)
        put_bytes(buf, p.bf_bytes)
        put_bytes(buf, p.sigma)
        put_u64(buf, p.t)
    elif isinstance(msg, SearchRequest):
        put_u8(buf, KIND_SEARCH)
        put_u64(buf, msg.envelope.epoch)
        put_bytes(buf, msg.envelope.body)
    elif isinstance(msg, GetBloomRequest):
        put_u8(buf, KIND_GET_BLOOM)
    elif isinstance(msg, RotateRequest):
        put_u8(buf, KIND_ROTATE)
        put_bytes(buf, msg.group_key)
        put_u64(buf, msg.epoch)
    elif isinstance(msg, SearchResponse):
        put_u8(buf, KIND_SEARCH | _RESPONSE_BIT)
        put_u8(buf, msg.code)
        if msg.code == CODE_OK:
            put_u32(buf, len(msg.ids))
            for fid in msg.ids:
                put_bytes(buf, fid)
            put_u32(buf, len(msg.ciphertexts))
            for ct in msg.ciphertexts:
                put_bytes(buf, ct)
            if msg.proof is not None:
                put_u8(buf, 1)
                put_bytes(buf, msg.proof.sigma)
                put_u64(buf, msg.proof.t)
                put_bytes(buf, msg.proof.bf_bytes)
                put_bytes(buf, msg.proof.gamma)
            else:
                put_u8(buf, 0)
        else:
            put_str(buf, msg.message)
    elif isinstance(msg, GetBloomResponse):
        put_u8(buf, KIND_GET_BLOOM | _RESPONSE_BIT)
        put_u8(buf, msg.code)
        if msg.code == CODE_OK:
            put_bytes(buf, msg.bf_bytes)
            put_bytes(buf, msg.sigma)
            put_u64(buf, msg.t)
        else:
            put_str(buf, msg.message)
    elif isinstance(msg, StatusResponse):
        put_u8(buf, msg.kind)
        put_u8(buf, msg.code)
        put_str(buf, msg.message)
    else:
        raise UsageError(f"cannot encode {type(msg).__name__}")
    return bytes(buf)


def decode(data: bytes) -> Message:
    r = Reader(data)
    version = r.u8()
    if version != VERSION:
        raise FormatError(f"unknown version 0x{version:02x}", offset=0)
    kind = r.u8()
    msg = _decode_body(kind, r)
    r.expect_end()
    return msg


def _decode_body(kind: int, r: Reader) -> Message:
    if kind == KIND_ADD:
        file_id = r.bytes_()
        ciphertext = r.bytes_()
        entries = [(r.bytes_(), r.bytes_()) for _ in range(r.u32())]
        sigma = t = None
        if r.u8():
            sigma = r.bytes_()
            t = r.u64()
        return AddRequest(AddPayload(file_id, ciphertext, entries, sigma, t))
    if kind == KIND_REFRESH:
        return RefreshRequest(RefreshPayload(r.bytes_(), r.bytes_(), r.u64()))
    if kind == KIND_SEARCH:
        return SearchRequest(SearchTokenEnvelope(r.u64(), r.bytes_()))
    if kind == KIND_GET_BLOOM:
        return GetBloomRequest()
    if kind == KIND_ROTATE:
        return RotateRequest(r.bytes_(), r.u64())
    if kind == (KIND_SEARCH | _RESPONSE_BIT):
        code = r.u8()
        if code != CODE_OK:
            return SearchResponse(code, message=r.str_())
        ids = [r.bytes_() for _ in range(r.u32())]
        cts = [r.bytes_() for _ in range(r.u32())]
        proof = None
        if r.u8():
            proof = Proof(sigma=r.bytes_(), t=r.u64(), bf_bytes=r.bytes_(), gamma=r.bytes_())
        return SearchResponse(code, ids, cts, proof)
    if kind == (KIND_GET_BLOOM | _RESPONSE_BIT):
        code = r.u8()
        if code != CODE_OK:
            return GetBloomResponse(code, message=r.str_())
        return GetBloomResponse(code, bf_bytes=r.bytes_(), sigma=r.bytes_(), t=r.u64())
    if kind in (
        KIND_ADD | _RESPONSE_BIT,
        KIND_REFRESH | _RESPONSE_BIT,
        KIND_ROTATE | _RESPONSE_BIT,
    ):
        return StatusResponse(kind, r.u8(), r.str_())
    raise FormatError(f"unknown message kind 0x{kind:02x}", offset=1)


# ---------------------------------------------------------------------------
# Server endpoint: bytes in, bytes out
# ---------------------------------------------------------------------------

def _error_code(exc: DsseError) -> int:
    if isinstance(exc, StaleEpochError):
        return CODE_STALE_EPOCH
    if isinstance(exc, NotFoundError):
        return CODE_NOT_FOUND
    if isinstance(exc, DecryptionError):
        return CODE_BAD_TOKEN
    if isinstance(exc, FormatError):
        return CODE_FORMAT
    if isinstance(exc, ProtocolError):
        return CODE_PROTOCOL
    if isinstance(exc, UsageError):
        return CODE_UNSUPPORTED
    return CODE_PROTOCOL


class ServerEndpoint:
    """Dispatches decoded requests onto a CloudServer and encodes replies."""

    def __init__(self, server: CloudServer):
        self.server = server

    def handle_bytes(self, data: bytes) -> bytes:
        try:
            request = decode(data)
        except FormatError as exc:
            return encode(
                StatusResponse(KIND_ADD | _RESPONSE_BIT, CODE_FORMAT, str(exc))
            )
        return encode(self.handle(request))

    def handle(self, request: Message) -> Message:
        try:
            if isinstance(request, AddRequest):
                self.server.add(request.payload)
                return StatusResponse(KIND_ADD | _RESPONSE_BIT, CODE_OK)
            if isinstance(request, RefreshRequest):
                self.server.refresh(request.payload)
                return StatusResponse(KIND_REFRESH | _RESPONSE_BIT, CODE_OK)
            if isinstance(request, RotateRequest):
                self.server.set_group_key(request.group_key, request.epoch)
                return StatusResponse(KIND_ROTATE | _RESPONSE_BIT, CODE_OK)
            if isinstance(request, SearchRequest):
                ids, proof = self.server.search(request.envelope)
                cts = self.server.ciphertexts_for(ids)
                return SearchResponse(CODE_OK, ids, cts, proof)
            if isinstance(request, GetBloomRequest):
                bf_bytes, sigma, t = self.server.get_bloom()
                return GetBloomResponse(CODE_OK, bf_bytes, sigma, t)
            raise UsageError(f"not a request: {type(request).__name__}")
        except DsseError as exc:
            code = _error_code(exc)
            kind = _response_kind_for(request)
            if isinstance(request, SearchRequest):
                return SearchResponse(code, message=str(exc))
            if isinstance(request, GetBloomRequest):
                return GetBloomResponse(code, message=str(exc))
            return StatusResponse(kind, code, str(exc))


def _response_kind_for(request: Message) -> int:
    table = {
        AddRequest: KIND_ADD,
        RefreshRequest: KIND_REFRESH,
        SearchRequest: KIND_SEARCH,
        GetBloomRequest: KIND_GET_BLOOM,
        RotateRequest: KIND_ROTATE,
    }
    return table.get(type(request), KIND_ADD) | _RESPONSE_BIT


# ---------------------------------------------------------------------------
# Transports
# ---------------------------------------------------------------------------

class InProcessTransport:
    """Same byte path as the socket, minus the socket."""

    def __init__(self, endpoint: ServerEndpoint):
        self.endpoint = endpoint

    def request(self, data: bytes) -> bytes:
        return self.endpoint.handle_bytes(data)

    def close(self) -> None:
        pass


class SocketTransport:
    """Client side of the length-prefixed TCP framing."""

    def __init__(self, host: str, port: int, timeout: float = 30.0):
        try:
            self._sock = socket.create_connection((host, port), timeout=timeout)
        except OSError as exc:
            raise TransportError(f"connect to {host}:{port} failed: {exc}") from exc
        self._lock = threading.Lock()

    def request(self, data: bytes) -> bytes:
        with self._lock:
            try:
                self._sock.sendall(len(data).to_bytes(4, "big") + data)
                return _recv_frame(self._sock)
            except OSError as exc:
                raise TransportError(str(exc)) from exc

    def close(self) -> None:
        self._sock.close()


def _recv_exact(sock: socket.socket, n: int) -> bytes:
    chunks = bytearray()
    while len(chunks) < n:
        part = sock.recv(n - len(chunks))
        if not part:
            raise TransportError("connection closed mid-frame")
        chunks += part
    return bytes(chunks)


def _recv_frame(sock: socket.socket) -> bytes:
    n = int.from_bytes(_recv_exact(sock, 4), "big")
    return _recv_exact(sock, n)


class _FrameHandler(socketserver.BaseRequestHandler):
    def handle(self) -> None:
        endpoint: ServerEndpoint = self.server.endpoint  # type: ignore[attr-defined]
        sock = self.request
        while True:
            try:
                frame = _recv_frame(sock)
            except TransportError:
                return
            reply = endpoint.handle_bytes(frame)
            sock.sendall(len(reply).to_bytes(4, "big") + reply)


class WireServer:
    """Threaded TCP listener serving one CloudServer."""

    def __init__(self, server: CloudServer, host: str = "127.0.0.1", port: int = 0):
        self.endpoint = ServerEndpoint(server)
        self._tcp = socketserver.ThreadingTCPServer((host, port), _FrameHandler)
        self._tcp.daemon_threads = True
        self._tcp.endpoint = self.endpoint  # type: ignore[attr-defined]
        self._thread: threading.Thread | None = None

    @property
    def address(self) -> tuple[str, int]:
        return self._tcp.server_address  # type: ignore[return-value]

    def start(self) -> None:
        self._thread = threading.Thread(target=self._tcp.serve_forever, daemon=True)
        self._thread.start()

    def stop(self) -> None:
        self._tcp.shutdown()
        self._tcp.server_close()


# ---------------------------------------------------------------------------
# Client
# ---------------------------------------------------------------------------

class Client:
    """Typed request/response wrapper over either transport.

    Non-OK response codes are raised back as the matching exception types,
    so in-process and remote callers see identical behavior.
    """

    def __init__(self, transport: InProcessTransport | SocketTransport):
        self.transport = transport

    @classmethod
    def in_process(cls, server: CloudServer) -> "Client":
        return cls(InProcessTransport(ServerEndpoint(server)))

    @classmethod
    def connect(cls, host: str, port: int) -> "Client":
        return cls(SocketTransport(host, port))

    def _round_trip(self, msg: Message) -> Message:
        return decode(self.transport.request(encode(msg)))

    @staticmethod
    def _raise_for(code: int, message: str) -> None:
        exc_type = _CODE_TO_ERROR.get(code, ProtocolError)
        raise exc_type(message or f"server returned code {code}")

    def add(self, payload: AddPayload) -> None:
        resp = self._round_trip(AddRequest(payload))
        if resp.code != CODE_OK:
            self._raise_for(resp.code, resp.message)

    def refresh(self, payload: RefreshPayload) -> None:
        resp = self._round_trip(RefreshRequest(payload))
        if resp.code != CODE_OK:
            self._raise_for(resp.code, resp.message)

    def rotate(self, group_key: bytes, epoch: int) -> None:
        resp = self._round_trip(RotateRequest(group_key, epoch))
        if resp.code != CODE_OK:
            self._raise_for(resp.code, resp.message)

    def search(
        self, envelope: SearchTokenEnvelope
    ) -> tuple[list[bytes], list[bytes], Proof | None]:
        resp = self._round_trip(SearchRequest(envelope))
        if resp.code != CODE_OK:
            self._raise_for(resp.code, resp.message)
        return resp.ids, resp.ciphertexts, resp.proof

    def get_bloom(self) -> tuple[bytes, bytes, int]:
        resp = self._round_trip(GetBloomRequest())
        if resp.code != CODE_OK:
            self._raise_for(resp.code, resp.message)
        return resp.bf_bytes, resp.sigma, resp.t

    def close(self) -> None:
        self.transport.close()
