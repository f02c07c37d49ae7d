"""Gate calibrations and FPROC channel maps."""

import json
import math

from ..errors import SchemaError, UnknownFprocChannel, UnknownGate
from .statements import Pulse, VirtualZ, statement_from_dict


class GateCalibration:
    """Native-gate expansions plus the named-frequency table.

    Document layout::

        {"freqs": {"Q0.freq": 4.9e9, ...},
         "gates": [{"name": "X90", "qubits": ["Q0"], "symmetric": false,
                    "contents": [{"name": "pulse", "dest": "Q0.qdrv", "freq": "Q0.freq",
                                  "phase": 0.0, "amp": 0.5, "env": {...},
                                  "t0": 0.0, "primary": true},
                                 {"name": "virtual_z", "freq": "Q1.freq", "phase": 0.1}]}]}

    ``t0`` offsets (seconds) are relative to the gate's start. The primary
    pulse is the one that carries the gate's unitary in the statevector model;
    it defaults to the first pulse.
    """

    def __init__(self, freqs, gates, source=None):
        self.freqs = dict(freqs)
        self.gates = dict(gates)
        self.source = source

    @classmethod
    def from_dict(cls, doc):
        freqs = {k: float(v) for k, v in doc.get("freqs", {}).items()}
        gates = {}
        for entry in doc.get("gates", []):
            qubits = tuple(entry["qubits"])
            contents = []
            primary_seen = any(c.get("primary") for c in entry["contents"])
            for item in entry["contents"]:
                stmt = statement_from_dict({k: v for k, v in item.items() if k not in ("t0", "primary")})
                if not isinstance(stmt, (Pulse, VirtualZ)):
                    raise SchemaError(f"gate {entry['name']}{list(qubits)}: only pulses and virtual_z allowed")
                primary = bool(item.get("primary")) if primary_seen else (
                    isinstance(stmt, Pulse) and not any(isinstance(c[0], Pulse) for c in contents))
                contents.append((stmt, float(item.get("t0", 0.0)), primary))
            key = (entry["name"], qubits)
            if key in gates:
                raise SchemaError(f"duplicate calibration for {entry['name']}{list(qubits)}")
            gates[key] = tuple(contents)
            if entry.get("symmetric") and len(qubits) == 2:
                gates.setdefault((entry["name"], qubits[::-1]), tuple(contents))
        return cls(freqs, gates, source=doc)

    @classmethod
    def load(cls, path):
        with open(path) as f:
            return cls.from_dict(json.load(f))

    def to_dict(self):
        return self.source

    def expansion(self, name, qubits):
        """(statement, t0 seconds, primary) triples for a gate instance."""
        try:
            return self.gates[(name, tuple(qubits))]
        except KeyError:
            raise UnknownGate(name, tuple(qubits)) from None

    def freq_hz(self, freq):
        if isinstance(freq, str):
            try:
                return self.freqs[freq]
            except KeyError:
                raise SchemaError(f"named frequency {freq!r} is not in the calibration") from None
        return float(freq)


class FprocChannelMap:
    """Named measurement result channels -> FPROC id, measurement delay and demod channel."""

    def __init__(self, entries):
        self.entries = {}
        ids = set()
        for name, entry in entries.items():
            func_id = int(entry["func_id"])
            delay = float(entry.get("measurement_delay", 0.0))
            if not 0 <= func_id <= 255:
                raise SchemaError(f"FPROC channel {name!r}: func_id {func_id} outside 0..255")
            if not (delay >= 0 and math.isfinite(delay)):
                raise SchemaError(f"FPROC channel {name!r}: measurement_delay must be >= 0")
            if func_id in ids:
                raise SchemaError(f"FPROC func_id {func_id} used twice")
            ids.add(func_id)
            channel = entry.get("channel") or f"{name.split('.')[0]}.rdlo"
            self.entries[name] = {"func_id": func_id, "measurement_delay": delay, "channel": channel}

    @classmethod
    def from_dict(cls, doc):
        return cls(doc)

    @classmethod
    def load(cls, path):
        with open(path) as f:
            return cls(json.load(f))

    def to_dict(self):
        return {k: dict(v) for k, v in self.entries.items()}

    def lookup(self, func_id):
        """Entry for a named channel or a numeric id."""
        if isinstance(func_id, str):
            if func_id not in self.entries:
                raise UnknownFprocChannel(f"FPROC channel {func_id!r} is not in the channel map")
            return self.entries[func_id]
        for entry in self.entries.values():
            if entry["func_id"] == func_id:
                return entry
        raise UnknownFprocChannel(f"FPROC id {func_id} is not in the channel map")

    def items(self):
        return self.entries.items()
