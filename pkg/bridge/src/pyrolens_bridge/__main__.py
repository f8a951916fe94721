"""Command line for the bridge: ``python -m pyrolens_bridge`` or the
``pyrolens-bridge`` entry point."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Optional

from .protocol import PROTOCOL_VERSION
from .server import BridgeConfig, serve


def _parse_input_size(text: str) -> Optional[tuple[int, int]]:
    if text == "native":
        return None
    try:
        w, h = text.lower().split("x")
        return int(w), int(h)
    except ValueError:
        raise argparse.ArgumentTypeError(f"--input-size expects WxH or 'native', got {text!r}")


def main(argv: Optional[list[str]] = None) -> int:
    parser = argparse.ArgumentParser(prog="pyrolens-bridge", description=__doc__)
    parser.add_argument("--stub", type=Path, help="serve scripted responses from this JSON file")
    parser.add_argument("--detector-model", type=Path, help="TorchScript detector weights")
    parser.add_argument("--classifier-model", type=Path, help="TorchScript classifier weights")
    parser.add_argument("--device", default="cpu")
    parser.add_argument("--mode", choices=("detect", "classify", "both"), default="both")
    parser.add_argument("--input-size", type=_parse_input_size, default=None,
                        help="resize crops to WxH before inference ('native' to disable)")
    parser.add_argument("--name", default="pyrolens-bridge")
    parser.add_argument("--capacity", type=int, default=1)
    parser.add_argument("--advertise-version", type=int, default=PROTOCOL_VERSION)
    parser.add_argument("--reorder", type=int, default=0,
                        help="buffer N requests and answer newest-first (conformance testing)")
    parser.add_argument("--silent", action="store_true", help="never respond (timeout testing)")
    args = parser.parse_args(argv)

    cfg = BridgeConfig(
        stub_script=args.stub,
        detector_model=args.detector_model,
        classifier_model=args.classifier_model,
        device=args.device,
        mode=args.mode,
        input_size=args.input_size,
        name=args.name,
        capacity=args.capacity,
        advertise_version=args.advertise_version,
        reorder=args.reorder,
        silent=args.silent,
    )
    return serve(cfg)


if __name__ == "__main__":
    sys.exit(main())
