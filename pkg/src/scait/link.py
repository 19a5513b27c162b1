"""UDP realization of the sensor -> edge-server path.

Wire frame (little-endian)::

    magic u32 = 0x53434149 | version u8 = 1 | frame_type u8 | task_id u16
    payload_len u32 | payload | crc32 u32 (IEEE, over the payload)

SEMANTIC and IMAGE payloads start with a u16 sequence number. Delivery is
stop-and-wait: every frame is acknowledged (ACK payload echoes the sequence
number; empty for KB_SYNC) and retransmitted up to 3 times after a 500 ms
timeout.
"""

from __future__ import annotations

import csv
import logging
import socket
import struct
import threading
import time
import zlib
from dataclasses import dataclass

from . import baseline_codec as codec
from .knowledge_base import kb_bytes, sync_kb
from .nn import model_fingerprint
from .pipeline import baseline_receive, extract_features, image_channel, impair_frame, impair_stream, semantic_indices, semantic_receive
from .semantic_codec import SemanticFrame, encode_frame

log = logging.getLogger(__name__)

MAGIC = 0x53434149
VERSION = 1
KB_SYNC, SEMANTIC, IMAGE, ACK = 1, 2, 3, 4
FRAME_TYPES = {KB_SYNC: "KB_SYNC", SEMANTIC: "SEMANTIC", IMAGE: "IMAGE", ACK: "ACK"}
_HEADER = struct.Struct("<IBBHI")
_SEQ = struct.Struct("<H")
OVERHEAD = _HEADER.size + 4
MAX_PAYLOAD = 65507 - OVERHEAD
ACK_TIMEOUT = 0.5
MAX_RETRIES = 3
LOG_FIELDS = ("seq", "frame_type", "bytes", "predicted_class", "latency_ms")


class WireError(ValueError):
    pass


class IntegrityError(WireError):
    pass


class TransportError(OSError):
    pass


class LinkSetupError(RuntimeError):
    pass


@dataclass
class WireFrame:
    frame_type: int
    task_id: int
    payload: bytes


def crc32(data):
    return zlib.crc32(data) & 0xFFFFFFFF


def encode_wire(frame):
    if frame.frame_type not in FRAME_TYPES:
        raise WireError(f"unknown frame type {frame.frame_type}")
    if len(frame.payload) > MAX_PAYLOAD:
        raise WireError(f"payload of {len(frame.payload)} bytes does not fit one datagram")
    header = _HEADER.pack(MAGIC, VERSION, frame.frame_type, frame.task_id, len(frame.payload))
    return header + frame.payload + struct.pack("<I", crc32(frame.payload))


def decode_wire(data):
    if len(data) < OVERHEAD:
        raise WireError(f"datagram of {len(data)} bytes is shorter than the frame overhead")
    magic, version, ftype, task_id, length = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise WireError(f"bad magic 0x{magic:08x}")
    if version != VERSION:
        raise WireError(f"unsupported version {version}")
    if ftype not in FRAME_TYPES:
        raise WireError(f"unknown frame type {ftype}")
    if len(data) != OVERHEAD + length:
        raise WireError(f"length field {length} disagrees with datagram size {len(data)}")
    payload = data[_HEADER.size:_HEADER.size + length]
    (crc,) = struct.unpack_from("<I", data, _HEADER.size + length)
    if crc != crc32(payload):
        raise IntegrityError("payload CRC mismatch")
    return WireFrame(ftype, task_id, bytes(payload))


def split_seq(payload):
    if len(payload) < _SEQ.size:
        raise WireError("payload lacks a sequence number")
    return _SEQ.unpack_from(payload)[0], payload[_SEQ.size:]


def parse_endpoint(text):
    host, _, port = text.rpartition(":")
    if not host or not port.isdigit():
        raise ValueError(f"endpoint must be host:port, got {text!r}")
    return host, int(port)


# --------------------------------------------------------------------------
# transmitter


class _StopAndWait:
    def __init__(self, endpoint, task_id, timeout, retries):
        self.endpoint = endpoint
        self.task_id = task_id
        self.timeout = timeout
        self.retries = retries
        self.sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        self.sock.settimeout(timeout)

    def close(self):
        self.sock.close()

    def send(self, frame_type, payload, seq=None):
        """Send until acknowledged; returns the number of attempts, or 0 if dropped."""
        data = encode_wire(WireFrame(frame_type, self.task_id, payload))
        expect = b"" if seq is None else _SEQ.pack(seq)
        for attempt in range(1, self.retries + 2):
            try:
                self.sock.sendto(data, self.endpoint)
            except OSError as exc:
                raise TransportError(f"cannot reach {self.endpoint[0]}:{self.endpoint[1]}: {exc}") from exc
            deadline = time.monotonic() + self.timeout
            while True:
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    break
                self.sock.settimeout(remaining)
                try:
                    reply, _ = self.sock.recvfrom(65535)
                except socket.timeout:
                    break
                except ConnectionRefusedError as exc:
                    raise TransportError(f"endpoint {self.endpoint[0]}:{self.endpoint[1]} refused") from exc
                try:
                    ack = decode_wire(reply)
                except WireError:
                    continue
                if ack.frame_type == ACK and ack.payload == expect:
                    return attempt
        return 0


def run_transmitter(endpoint, model, kb, images, cr=0.0, channel=None, scheme="sc_ait", quality=75,
                    task_id=0, timeout=ACK_TIMEOUT, retries=MAX_RETRIES, seed=0):
    """Send a KB_SYNC frame, then one SEMANTIC (or IMAGE) frame per image.

    ``channel`` impairs each payload in-process before it is sent; image ``i``
    uses the same derived channel seed as the offline sweep. Returns the send
    log: one dict per frame.
    """
    if kb.fingerprint != model_fingerprint(model):
        raise LinkSetupError("knowledge base fingerprint does not match the loaded model")
    if isinstance(endpoint, str):
        endpoint = parse_endpoint(endpoint)
    link = _StopAndWait(endpoint, task_id, timeout, retries)
    send_log = []
    ranking = kb.ranking()
    try:
        payload = kb_bytes(kb)
        attempts = link.send(KB_SYNC, payload)
        send_log.append({"seq": None, "frame_type": "KB_SYNC", "bytes": len(payload), "attempts": attempts,
                         "status": "acked" if attempts else "dropped"})
        for i, image in enumerate(images):
            seq = i & 0xFFFF
            ch = image_channel(channel, i)
            if scheme == "baseline_codec":
                stream, _ = impair_stream(codec.encode_image(image, quality), ch)
                ftype, body = IMAGE, stream.to_bytes()
            else:
                maps = extract_features(model, [image])[0]
                indices = semantic_indices(scheme, ranking, cr, model.spec.num_maps, seed, i)
                frame, _ = impair_frame(encode_frame(maps, indices), ch)
                ftype, body = SEMANTIC, frame.to_bytes()
            attempts = link.send(ftype, _SEQ.pack(seq) + body, seq)
            if not attempts:
                log.warning("frame %d dropped after %d retries", seq, retries)
            send_log.append({"seq": seq, "frame_type": FRAME_TYPES[ftype], "bytes": len(body),
                             "attempts": attempts, "status": "acked" if attempts else "dropped"})
    finally:
        link.close()
    return send_log


# --------------------------------------------------------------------------
# receiver


class Receiver:
    """Edge-server side: validates frames, classifies, acknowledges.

    ``decoder_model`` classifies SEMANTIC frames; ``image_model`` (defaults to
    the same model) classifies decoded IMAGE frames.
    """

    def __init__(self, endpoint, decoder_model, kb_path=None, image_model=None, log_path=None, task_id=0):
        if isinstance(endpoint, str):
            endpoint = parse_endpoint(endpoint)
        self.model = decoder_model
        self.image_model = image_model or decoder_model
        self.kb_path = kb_path
        self.task_id = task_id
        self.log = []
        self.kb_syncs = 0
        self.rejected = 0
        self._seen = set()
        self._stop = threading.Event()
        self._log_path = log_path
        self.sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        self.sock.bind(endpoint)
        self.sock.settimeout(0.1)

    @property
    def address(self):
        return self.sock.getsockname()

    def stop(self):
        self._stop.set()

    def close(self):
        self.sock.close()

    def serve(self, max_frames=None, idle_timeout=None):
        """Process datagrams until stopped, ``max_frames`` data frames were
        logged, or nothing arrives for ``idle_timeout`` seconds."""
        writer = None
        fh = None
        if self._log_path:
            fh = open(self._log_path, "w", newline="")
            writer = csv.DictWriter(fh, fieldnames=LOG_FIELDS)
            writer.writeheader()
            fh.flush()
        last = time.monotonic()
        try:
            while not self._stop.is_set():
                if max_frames is not None and len(self.log) >= max_frames:
                    break
                try:
                    data, peer = self.sock.recvfrom(65535)
                except socket.timeout:
                    if idle_timeout is not None and time.monotonic() - last > idle_timeout:
                        break
                    continue
                last = time.monotonic()
                row = self.handle(data, peer)
                if row is not None and writer is not None:
                    writer.writerow(row)
                    fh.flush()
        finally:
            if fh is not None:
                fh.close()
        return self.log

    def _ack(self, peer, payload):
        self.sock.sendto(encode_wire(WireFrame(ACK, self.task_id, payload)), peer)

    def handle(self, data, peer):
        """Process one datagram; returns the new log row, if any."""
        start = time.perf_counter()
        try:
            frame = decode_wire(data)
        except WireError as exc:
            self.rejected += 1
            log.info("discarding datagram from %s: %s", peer, exc)
            return None
        if frame.task_id != self.task_id:
            self.rejected += 1
            return None
        if frame.frame_type == KB_SYNC:
            if self.kb_path is not None:
                sync_kb(frame.payload, self.kb_path)
            self.kb_syncs += 1
            self._ack(peer, b"")
            return None
        if frame.frame_type not in (SEMANTIC, IMAGE):
            return None
        seq, body = split_seq(frame.payload)
        if seq in self._seen:
            self._ack(peer, _SEQ.pack(seq))
            return None
        try:
            if frame.frame_type == SEMANTIC:
                predicted = semantic_receive(self.model, SemanticFrame.from_bytes(body))
            else:
                predicted = baseline_receive(self.image_model, codec.BlockStream.from_bytes(body))
        except ValueError as exc:
            self.rejected += 1
            log.info("undecodable frame %d: %s", seq, exc)
            return None
        self._seen.add(seq)
        row = {"seq": seq, "frame_type": FRAME_TYPES[frame.frame_type], "bytes": len(body),
               "predicted_class": predicted, "latency_ms": 1000.0 * (time.perf_counter() - start)}
        self.log.append(row)
        self._ack(peer, _SEQ.pack(seq))
        return row


def run_receiver(endpoint, decoder_model, kb_path=None, image_model=None, log_path=None,
                 max_frames=None, idle_timeout=None, task_id=0):
    """Blocking receiver; returns the classification log."""
    rx = Receiver(endpoint, decoder_model, kb_path, image_model, log_path, task_id)
    try:
        return rx.serve(max_frames=max_frames, idle_timeout=idle_timeout)
    finally:
        rx.close()
