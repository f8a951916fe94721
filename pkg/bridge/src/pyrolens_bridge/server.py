"""The serve loop: load backends, answer the handshake, dispatch requests.

Models load before the handshake can succeed, so a client never talks to
a bridge whose weights are missing.  Requests are handled serially (the
reference bridge advertises capacity 1 unless configured otherwise);
malformed requests get a per-id error response and serving continues.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .protocol import PROTOCOL_VERSION, canonical, decode_image
from .stub import StubHandlers, load_script


@dataclass
class BridgeConfig:
    stub_script: Optional[Path] = None
    detector_model: Optional[Path] = None
    classifier_model: Optional[Path] = None
    device: str = "cpu"
    mode: str = "both"  # detect | classify | both
    input_size: Optional[tuple[int, int]] = None  # None = native resolution
    name: str = "pyrolens-bridge"
    capacity: int = 1
    channels: tuple[str, ...] = ("gray", "rgb")
    advertise_version: int = PROTOCOL_VERSION
    reorder: int = 0
    silent: bool = False


def _build_handlers(cfg: BridgeConfig) -> tuple[dict, dict]:
    """Op handler map and the hello descriptor, loading models eagerly."""
    handlers: dict = {}
    hello = {
        "name": cfg.name,
        "capacity": cfg.capacity,
        "channels": list(cfg.channels),
        "ops": [],
    }
    if cfg.stub_script is not None:
        script = load_script(cfg.stub_script)
        stub = StubHandlers(script)
        hello["name"] = script.get("name", cfg.name)
        hello["capacity"] = script.get("capacity", cfg.capacity)
        hello["channels"] = script.get("channels", list(cfg.channels))
        ops = script.get("ops", ["detect", "classify"])
        if "detect" in ops:
            handlers["detect"] = stub.detect
        if "classify" in ops:
            handlers["classify"] = stub.classify
        hello["ops"] = ops
        return handlers, hello

    from .models import TorchClassifier, TorchDetector

    if cfg.detector_model is not None and cfg.mode in ("detect", "both"):
        handlers["detect"] = TorchDetector(cfg.detector_model, cfg.device, cfg.input_size).detect
    if cfg.classifier_model is not None and cfg.mode in ("classify", "both"):
        handlers["classify"] = TorchClassifier(
            cfg.classifier_model, cfg.device, cfg.input_size
        ).classify
    if not handlers:
        raise ValueError("nothing to serve: give --stub or at least one model")
    hello["ops"] = sorted(handlers)
    return handlers, hello


def _respond(line: str, handlers: dict, hello: dict, version: int) -> dict:
    import json

    try:
        msg = json.loads(line)
        rid = msg.get("id")
        op = msg.get("op")
    except Exception:
        return {"v": version, "id": None, "error": "malformed request"}
    if op == "hello":
        return {"v": version, "id": rid, "hello": hello}
    handler = handlers.get(op)
    if handler is None:
        return {"v": version, "id": rid, "error": f"unsupported op: {op}"}
    try:
        img = decode_image(msg["image"])
    except Exception:
        return {"v": version, "id": rid, "error": "invalid image payload"}
    try:
        return {"v": version, "id": rid, **handler(img)}
    except Exception as exc:
        return {"v": version, "id": rid, "error": f"{op} failed: {exc}"}


def serve(cfg: BridgeConfig, stdin=None, stdout=None) -> int:
    stdin = stdin if stdin is not None else sys.stdin
    stdout = stdout if stdout is not None else sys.stdout
    try:
        handlers, hello = _build_handlers(cfg)
    except Exception as exc:
        stdout.write(canonical({"v": cfg.advertise_version, "id": None, "error": str(exc)}) + "\n")
        stdout.flush()
        return 1

    held: list[dict] = []

    def emit(obj: dict) -> None:
        stdout.write(canonical(obj) + "\n")
        stdout.flush()

    for line in stdin:
        if not line.strip():
            continue
        if cfg.silent:
            continue
        response = _respond(line, handlers, hello, cfg.advertise_version)
        # The handshake answers immediately; only payload ops are reordered.
        if cfg.reorder > 1 and "hello" not in response:
            held.append(response)
            if len(held) >= cfg.reorder:
                for r in reversed(held):
                    emit(r)
                held.clear()
        else:
            emit(response)
    for r in reversed(held):
        emit(r)
    return 0
