"""Model bridge: serves detector/classifier models over the pyrolens
stdio wire protocol (version 1).

The bridge is the server side of the protocol: it answers ``hello`` with a
capability descriptor, then ``detect``/``classify`` requests whose image
payloads are base64 raw pixel samples.  Models are TorchScript files; a
stub mode answers from a fingerprint-keyed script file instead, with
deliberately misbehaving variants for conformance testing.
"""

__version__ = "0.1.0"

from .server import BridgeConfig, serve

__all__ = ["BridgeConfig", "serve", "__version__"]
