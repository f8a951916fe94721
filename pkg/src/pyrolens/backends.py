"""Detector/classifier contracts, deterministic mocks, and the subprocess
wire-protocol client.

Wire protocol (version 1), line-delimited JSON over the child process's
standard streams:

    request   {"v":1,"id":<u64>,"op":"hello"}
              {"v":1,"id":<u64>,"op":"detect","image":{"w":W,"h":H,"c":1|3,"data":"<base64>"}}
              {"v":1,"id":<u64>,"op":"classify","image":{...}}
    response  {"v":1,"id":<u64>,"hello":{"name":...,"capacity":N,"channels":[...],"ops":[...]}}
              {"v":1,"id":<u64>,"detections":[{"category":C,"score":S,"bbox":[x,y,w,h]},...]}
              {"v":1,"id":<u64>,"category":C,"score":S}
              {"v":1,"id":<u64>,"error":"<message>"}

``data`` is base64 of the raw row-major 8-bit samples (interleaved RGB for
c=3), never an encoded image format, so both sides agree on pixels
bit-exactly.  Classifier categories: 0 = fire, 1 = no-fire.
"""

from __future__ import annotations

import base64
import hashlib
import json
import queue
import random
import shlex
import subprocess
import threading
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Protocol, runtime_checkable

import numpy as np

from .boxes import Box, Detection

PROTOCOL_VERSION = 1
FIRE = 0
NO_FIRE = 1

DEFAULT_TIMEOUT = 10.0
BACKEND_CMD_ENV = "PYROLENS_BACKEND_CMD"


class BackendError(Exception):
    """Base for backend failures; ``payload`` holds the raw offending data."""

    def __init__(self, message: str, payload: Optional[str] = None):
        super().__init__(message)
        self.payload = payload


class BackendUnavailable(BackendError):
    pass


class MalformedResponse(BackendError):
    pass


class VersionMismatch(BackendError):
    pass


class BackendTimeout(BackendError):
    pass


class RemoteError(BackendError):
    """Well-formed error response reported by the backend itself."""


@dataclass(frozen=True)
class BackendInfo:
    name: str
    capacity: int = 1
    channels: tuple[str, ...] = ("gray", "rgb")
    ops: tuple[str, ...] = ("detect", "classify")

    def __post_init__(self):
        if self.capacity < 1:
            raise ValueError(f"capacity must be >= 1, got {self.capacity}")


@runtime_checkable
class Detector(Protocol):
    info: BackendInfo

    def detect(self, img: np.ndarray) -> list[Detection]: ...


@runtime_checkable
class Classifier(Protocol):
    info: BackendInfo

    def classify(self, img: np.ndarray) -> tuple[int, float]: ...


def _channels(img: np.ndarray) -> int:
    if img.ndim == 2:
        return 1
    if img.ndim == 3 and img.shape[2] == 3:
        return 3
    raise ValueError(f"expected gray or RGB uint8 image, got shape {img.shape}")


def fingerprint(img: np.ndarray) -> str:
    """Stable identity of an image's exact pixel content."""
    img = np.ascontiguousarray(img, dtype=np.uint8)
    c = _channels(img)
    h, w = img.shape[:2]
    return hashlib.sha256(f"{w}x{h}x{c}:".encode("ascii") + img.tobytes()).hexdigest()


def image_to_wire(img: np.ndarray) -> dict:
    img = np.ascontiguousarray(img, dtype=np.uint8)
    c = _channels(img)
    h, w = img.shape[:2]
    return {"w": w, "h": h, "c": c, "data": base64.b64encode(img.tobytes()).decode("ascii")}


def wire_to_image(obj: dict) -> np.ndarray:
    w, h, c = int(obj["w"]), int(obj["h"]), int(obj["c"])
    raw = base64.b64decode(obj["data"])
    if c not in (1, 3):
        raise ValueError(f"c must be 1 or 3, got {c}")
    if len(raw) != w * h * c:
        raise ValueError(f"expected {w * h * c} sample bytes, got {len(raw)}")
    arr = np.frombuffer(raw, dtype=np.uint8)
    return arr.reshape(h, w) if c == 1 else arr.reshape(h, w, 3)


def _check_channels(info: BackendInfo, img: np.ndarray) -> None:
    kind = "gray" if _channels(img) == 1 else "rgb"
    if kind not in info.channels:
        raise ValueError(f"backend {info.name!r} does not accept {kind} images")


# --------------------------------------------------------------------------
# Scripted mock backends


@dataclass
class MockScript:
    """Deterministic responses keyed by image fingerprint.

    ``jitter`` > 0 perturbs scripted boxes/scores pseudo-randomly, seeded
    per (seed, fingerprint) so identical inputs always yield identical
    outputs.
    """

    detect_by_fingerprint: dict[str, list[Detection]] = field(default_factory=dict)
    detect_default: list[Detection] = field(default_factory=list)
    classify_by_fingerprint: dict[str, tuple[int, float]] = field(default_factory=dict)
    classify_default: tuple[int, float] = (FIRE, 0.0)
    jitter: float = 0.0
    seed: int = 0

    def detections_for(self, key: str) -> list[Detection]:
        dets = self.detect_by_fingerprint.get(key, self.detect_default)
        if not self.jitter:
            return list(dets)
        rng = random.Random(f"{self.seed}:{key}")
        out = []
        for d in dets:
            j = self.jitter
            b = d.box
            box = Box(b.x + rng.uniform(-j, j), b.y + rng.uniform(-j, j), b.w, b.h)
            score = min(1.0, max(0.0, d.score + rng.uniform(-j, j) / 100.0))
            out.append(Detection(box, d.category, score, d.source))
        return out

    def classification_for(self, key: str) -> tuple[int, float]:
        return self.classify_by_fingerprint.get(key, self.classify_default)

    @classmethod
    def from_obj(cls, obj: dict) -> "MockScript":
        from .boxes import detection_from_obj

        det = obj.get("detect", {})
        cl = obj.get("classify", {})

        def pair(entry) -> tuple[int, float]:
            return int(entry["category"]), float(entry["score"])

        return cls(
            detect_by_fingerprint={
                k: [detection_from_obj(o) for o in v]
                for k, v in det.get("by_fingerprint", {}).items()
            },
            detect_default=[detection_from_obj(o) for o in det.get("default", [])],
            classify_by_fingerprint={
                k: pair(v) for k, v in cl.get("by_fingerprint", {}).items()
            },
            classify_default=pair(cl["default"]) if "default" in cl else (FIRE, 0.0),
            jitter=float(obj.get("jitter", 0.0)),
            seed=int(obj.get("seed", 0)),
        )

    def to_obj(self, name: str = "mock", capacity: int = 1) -> dict:
        from .boxes import detection_to_obj

        return {
            "name": name,
            "capacity": capacity,
            "channels": ["gray", "rgb"],
            "detect": {
                "default": [detection_to_obj(d) for d in self.detect_default],
                "by_fingerprint": {
                    k: [detection_to_obj(d) for d in v]
                    for k, v in sorted(self.detect_by_fingerprint.items())
                },
            },
            "classify": {
                "default": {"category": self.classify_default[0], "score": self.classify_default[1]},
                "by_fingerprint": {
                    k: {"category": c, "score": s}
                    for k, (c, s) in sorted(self.classify_by_fingerprint.items())
                },
            },
            "jitter": self.jitter,
            "seed": self.seed,
        }

    @classmethod
    def from_file(cls, path: str | Path) -> "MockScript":
        return cls.from_obj(json.loads(Path(path).read_text(encoding="utf-8")))


class MockDetector:
    def __init__(self, script: Optional[MockScript] = None, *, name: str = "mock-detector", capacity: int = 8):
        self.script = script or MockScript()
        self.info = BackendInfo(name=name, capacity=capacity, ops=("detect",))

    def detect(self, img: np.ndarray) -> list[Detection]:
        _check_channels(self.info, img)
        return self.script.detections_for(fingerprint(img))


class MockClassifier:
    def __init__(self, script: Optional[MockScript] = None, *, name: str = "mock-classifier", capacity: int = 8):
        self.script = script or MockScript()
        self.info = BackendInfo(name=name, capacity=capacity, ops=("classify",))

    def classify(self, img: np.ndarray) -> tuple[int, float]:
        _check_channels(self.info, img)
        return self.script.classification_for(fingerprint(img))


# --------------------------------------------------------------------------
# Subprocess wire-protocol client


def _parse_detection(obj: dict, raw: str) -> Detection:
    try:
        bbox = obj["bbox"]
        category = obj["category"]
        score = obj["score"]
        if not isinstance(category, int) or isinstance(category, bool) or category < 0:
            raise ValueError(f"bad category {category!r}")
        if not isinstance(score, (int, float)) or not 0.0 <= float(score) <= 1.0:
            raise ValueError(f"score {score!r} outside [0, 1]")
        if not isinstance(bbox, list) or len(bbox) != 4:
            raise ValueError(f"bad bbox {bbox!r}")
        return Detection(Box(*bbox), category, float(score))
    except MalformedResponse:
        raise
    except Exception as exc:
        raise MalformedResponse(f"invalid detection in response: {exc}", payload=raw) from exc


class SubprocessBackend:
    """Client for an external model process speaking protocol version 1.

    Writes are serialized; responses are demultiplexed by id, so the
    backend may answer out of order.  At most ``info.capacity`` requests
    are in flight at once.  Implements both the detector and classifier
    contracts, subject to the ops the backend advertises.
    """

    def __init__(self, command: str | list[str], *, timeout: float = DEFAULT_TIMEOUT):
        argv = shlex.split(command) if isinstance(command, str) else list(command)
        self.command = argv
        self.timeout = timeout
        self._proc = subprocess.Popen(
            argv,
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            stderr=subprocess.PIPE,
            text=True,
            bufsize=1,
        )
        self._write_lock = threading.Lock()
        self._state_lock = threading.Lock()
        self._handshake_lock = threading.Lock()
        self._pending: dict[int, queue.Queue] = {}
        self._abandoned: set[int] = set()
        self._next_id = 0
        self._fatal: Optional[BackendError] = None
        self._capacity: Optional[threading.BoundedSemaphore] = None
        self.info: Optional[BackendInfo] = None
        self._stderr_tail: deque[str] = deque(maxlen=20)
        threading.Thread(target=self._read_loop, daemon=True).start()
        threading.Thread(target=self._stderr_loop, daemon=True).start()

    # -- plumbing

    def _stderr_loop(self) -> None:
        if self._proc.stderr is None:
            return
        for line in self._proc.stderr:
            self._stderr_tail.append(line.rstrip("\n"))

    def _fail_all(self, exc: BackendError) -> None:
        with self._state_lock:
            if self._fatal is None:
                self._fatal = exc
            waiters = list(self._pending.values())
            self._pending.clear()
        for q in waiters:
            q.put(exc)

    def _read_loop(self) -> None:
        assert self._proc.stdout is not None
        for line in self._proc.stdout:
            line = line.rstrip("\n")
            if not line.strip():
                continue
            try:
                msg = json.loads(line)
                rid = msg["id"]
            except Exception:
                self._fail_all(MalformedResponse("unparseable response line", payload=line))
                return
            with self._state_lock:
                waiter = self._pending.pop(rid, None)
                orphan = waiter is None and rid not in self._abandoned
                self._abandoned.discard(rid)
            if waiter is not None:
                waiter.put((msg, line))
            elif orphan:
                self._fail_all(MalformedResponse(f"response with unknown id {rid!r}", payload=line))
                return
        self._fail_all(
            BackendUnavailable(
                "backend closed its output stream"
                + (f" (stderr: {' | '.join(self._stderr_tail)})" if self._stderr_tail else "")
            )
        )

    def _send(self, obj: dict) -> None:
        line = json.dumps(obj, sort_keys=True, separators=(",", ":"))
        try:
            with self._write_lock:
                assert self._proc.stdin is not None
                self._proc.stdin.write(line + "\n")
                self._proc.stdin.flush()
        except (BrokenPipeError, ValueError, OSError) as exc:
            raise BackendUnavailable(f"cannot write to backend: {exc}") from exc

    def _roundtrip(self, op: str, extra: dict, timeout: Optional[float]) -> tuple[dict, str]:
        timeout = self.timeout if timeout is None else timeout
        with self._state_lock:
            if self._fatal is not None:
                raise self._fatal
            rid = self._next_id
            self._next_id += 1
            waiter: queue.Queue = queue.Queue(maxsize=1)
            self._pending[rid] = waiter
        try:
            self._send({"v": PROTOCOL_VERSION, "id": rid, "op": op, **extra})
            got = waiter.get(timeout=timeout)
        except queue.Empty:
            with self._state_lock:
                self._pending.pop(rid, None)
                self._abandoned.add(rid)
            raise BackendTimeout(f"no response to {op!r} within {timeout} s") from None
        except BaseException:
            with self._state_lock:
                self._pending.pop(rid, None)
            raise
        if isinstance(got, BackendError):
            raise got
        msg, raw = got
        if msg.get("v") != PROTOCOL_VERSION:
            exc: BackendError = (
                VersionMismatch(f"backend speaks protocol version {msg.get('v')!r}, need {PROTOCOL_VERSION}", payload=raw)
                if op == "hello"
                else MalformedResponse(f"bad protocol version {msg.get('v')!r}", payload=raw)
            )
            raise exc
        if "error" in msg:
            raise RemoteError(str(msg["error"]), payload=raw)
        return msg, raw

    # -- public surface

    def handshake(self, timeout: Optional[float] = None) -> BackendInfo:
        """Exchange protocol version and capabilities; fail fast on mismatch."""
        with self._handshake_lock:
            if self.info is not None:
                return self.info
            try:
                msg, raw = self._roundtrip("hello", {}, timeout)
            except RemoteError as exc:
                raise BackendUnavailable(f"handshake failed: {exc}", payload=exc.payload) from exc
            try:
                hello = msg["hello"]
                info = BackendInfo(
                    name=str(hello["name"]),
                    capacity=int(hello["capacity"]),
                    channels=tuple(hello["channels"]),
                    ops=tuple(hello["ops"]),
                )
            except MalformedResponse:
                raise
            except Exception as exc:
                raise MalformedResponse(f"invalid hello response: {exc}", payload=raw) from exc
            self._capacity = threading.BoundedSemaphore(info.capacity)
            self.info = info
            return info

    def _op(self, op: str, img: np.ndarray, timeout: Optional[float]) -> tuple[dict, str]:
        info = self.handshake()
        if op not in info.ops:
            raise ValueError(f"backend {info.name!r} does not support {op!r}")
        _check_channels(info, img)
        slots = self._capacity
        assert slots is not None
        if not slots.acquire(timeout=self.timeout if timeout is None else timeout):
            raise BackendTimeout(f"backend at capacity, no slot for {op!r}")
        try:
            return self._roundtrip(op, {"image": image_to_wire(img)}, timeout)
        finally:
            slots.release()

    def detect(self, img: np.ndarray, timeout: Optional[float] = None) -> list[Detection]:
        msg, raw = self._op("detect", img, timeout)
        dets = msg.get("detections")
        if not isinstance(dets, list):
            raise MalformedResponse("detect response lacks a detections array", payload=raw)
        return [_parse_detection(o, raw) for o in dets]

    def classify(self, img: np.ndarray, timeout: Optional[float] = None) -> tuple[int, float]:
        msg, raw = self._op("classify", img, timeout)
        category, score = msg.get("category"), msg.get("score")
        if (
            not isinstance(category, int)
            or isinstance(category, bool)
            or category < 0
            or not isinstance(score, (int, float))
            or not 0.0 <= float(score) <= 1.0
        ):
            raise MalformedResponse("classify response needs category >= 0 and score in [0, 1]", payload=raw)
        return category, float(score)

    def close(self) -> None:
        for stream in (self._proc.stdin,):
            try:
                if stream:
                    stream.close()
            except OSError:
                pass
        if self._proc.poll() is None:
            self._proc.terminate()
            try:
                self._proc.wait(timeout=3)
            except subprocess.TimeoutExpired:
                self._proc.kill()
                self._proc.wait()

    def __enter__(self) -> "SubprocessBackend":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def detect(backend: Detector, img: np.ndarray) -> list[Detection]:
    """Run a detector backend on one image."""
    return backend.detect(img)


def classify(backend: Classifier, crop: np.ndarray) -> tuple[int, float]:
    """Run a classifier backend on one crop."""
    if crop.size == 0:
        raise ValueError("cannot classify an empty crop")
    return backend.classify(crop)


def scripts_from_args(
    mock_script: Optional[str | Path], seed: int = 0
) -> tuple[MockDetector, MockClassifier]:
    """Build mock backends from an optional script file (empty script otherwise)."""
    script = MockScript.from_file(mock_script) if mock_script else MockScript()
    script.seed = seed
    return MockDetector(script), MockClassifier(script)
