"""Scripted reference backend speaking wire protocol version 1 over stdio.

Serves detections/classifications straight from a script file keyed by
image fingerprint, with deliberately misbehaving modes for exercising the
client: advertise a wrong protocol version, answer out of order, or stay
silent.  Script payloads are passed through verbatim, so a script may
carry out-of-contract values (e.g. score 1.5) to probe client validation.

Run with ``python -m pyrolens.stub_backend --script script.json``.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Optional

from .backends import PROTOCOL_VERSION, fingerprint, wire_to_image


def canonical(obj: dict) -> str:
    """The canonical response encoding pinned by the golden transcripts."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


class StubServer:
    def __init__(
        self,
        script: Optional[dict] = None,
        advertise_version: int = PROTOCOL_VERSION,
        reorder: int = 0,
        silent: bool = False,
    ):
        script = script or {}
        self.version = advertise_version
        self.reorder = reorder
        self.silent = silent
        self.hello = {
            "name": script.get("name", "stub"),
            "capacity": script.get("capacity", 1),
            "channels": script.get("channels", ["gray", "rgb"]),
            "ops": script.get("ops", ["detect", "classify"]),
        }
        detect = script.get("detect", {})
        classify = script.get("classify", {})
        self.detect_map = detect.get("by_fingerprint", {})
        self.detect_default = detect.get("default", [])
        self.classify_map = classify.get("by_fingerprint", {})
        self.classify_default = classify.get("default", {"category": 0, "score": 0.0})

    def _respond(self, line: str) -> dict:
        try:
            msg = json.loads(line)
            rid = msg.get("id")
            op = msg.get("op")
        except Exception:
            return {"v": self.version, "id": None, "error": "malformed request"}
        if op == "hello":
            return {"v": self.version, "id": rid, "hello": self.hello}
        if op in ("detect", "classify"):
            try:
                key = fingerprint(wire_to_image(msg["image"]))
            except Exception:
                return {"v": self.version, "id": rid, "error": "invalid image payload"}
            if op == "detect":
                dets = self.detect_map.get(key, self.detect_default)
                return {"v": self.version, "id": rid, "detections": dets}
            entry = self.classify_map.get(key, self.classify_default)
            return {"v": self.version, "id": rid, **entry}
        return {"v": self.version, "id": rid, "error": f"unsupported op: {op}"}

    def serve(self, stdin=None, stdout=None) -> None:
        stdin = stdin if stdin is not None else sys.stdin
        stdout = stdout if stdout is not None else sys.stdout
        held: list[dict] = []

        def emit(obj: dict) -> None:
            stdout.write(canonical(obj) + "\n")
            stdout.flush()

        for line in stdin:
            if not line.strip():
                continue
            if self.silent:
                continue
            response = self._respond(line)
            # Handshake stays synchronous; only payload ops get reordered.
            if self.reorder > 1 and "hello" not in response:
                held.append(response)
                if len(held) >= self.reorder:
                    for r in reversed(held):
                        emit(r)
                    held.clear()
            else:
                emit(response)
        for r in reversed(held):
            emit(r)


def main(argv: Optional[list[str]] = None) -> int:
    parser = argparse.ArgumentParser(description="scripted stdio detection backend")
    parser.add_argument("--script", type=Path, help="JSON script of fingerprint-keyed responses")
    parser.add_argument("--advertise-version", type=int, default=PROTOCOL_VERSION)
    parser.add_argument("--reorder", type=int, default=0, help="buffer N requests, answer newest-first")
    parser.add_argument("--silent", action="store_true", help="never respond (timeout testing)")
    args = parser.parse_args(argv)
    script = json.loads(args.script.read_text(encoding="utf-8")) if args.script else {}
    StubServer(script, args.advertise_version, args.reorder, args.silent).serve()
    return 0


if __name__ == "__main__":
    sys.exit(main())
