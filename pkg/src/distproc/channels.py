"""Channel configuration: named output channels mapped to cores and elements."""

from dataclasses import dataclass, field
import json

from .elementconfig import ElementConfig
from .errors import UnknownChannel

CHANNEL_KINDS = ("qdrv", "rdrv", "rdlo")


@dataclass(frozen=True)
class Channel:
    name: str
    core_ind: int
    elem_ind: int
    kind: str
    qubit: str
    element: ElementConfig
    attrs: dict = field(default_factory=dict, compare=False, hash=False)


class ChannelConfig:
    """Lookup tables over the channel configuration document.

    Document layout::

        {"clock_freq": 5e8,
         "element_defaults": {"sample_rate": 8e9, "interp_ratio": 16},
         "channels": {"Q0.qdrv": {"core_ind": 0, "elem_ind": 0}, ...}}

    ``kind`` and ``qubit`` default to the parts of ``<qubit>.<kind>`` names.
    """

    def __init__(self, channels, clock_freq=500e6, source=None):
        self.channels = dict(channels)
        self.clock_freq = clock_freq
        self.source = source
        by_core = {}
        for ch in self.channels.values():
            by_core.setdefault(ch.core_ind, []).append(ch)
        self._core_keys = {}
        for core, chans in sorted(by_core.items()):
            elems = [c.elem_ind for c in chans]
            if len(set(elems)) != len(elems):
                raise ValueError(f"core {core} has duplicate element indices")
            self._core_keys[core] = tuple(c.name for c in sorted(chans, key=lambda c: c.elem_ind))
        self._core_of_key = {key: core for core, key in self._core_keys.items()}

    @classmethod
    def from_dict(cls, doc, elem_defaults=None):
        clock = doc.get("clock_freq", 500e6)
        base = elem_defaults or ElementConfig(clock_freq=clock)
        base = base.updated(doc.get("element_defaults", {}))
        channels = {}
        for name, entry in doc["channels"].items():
            qubit, _, suffix = name.partition(".")
            element = base.updated(entry.get("element", {}))
            channels[name] = Channel(
                name=name,
                core_ind=int(entry["core_ind"]),
                elem_ind=int(entry["elem_ind"]),
                kind=entry.get("kind", suffix),
                qubit=entry.get("qubit", qubit),
                element=element,
                attrs={k: v for k, v in entry.items() if k != "element"},
            )
        return cls(channels, clock_freq=clock, source=doc)

    @classmethod
    def load(cls, path):
        with open(path) as f:
            return cls.from_dict(json.load(f))

    def to_dict(self):
        if self.source is not None:
            return self.source
        return {"clock_freq": self.clock_freq,
                "channels": {n: dict(c.attrs) for n, c in self.channels.items()}}

    def __contains__(self, name):
        return name in self.channels

    def __getitem__(self, name):
        try:
            return self.channels[name]
        except KeyError:
            raise UnknownChannel(f"unknown channel {name!r}") from None

    @property
    def cores(self):
        """core index -> core key (channel names ordered by element index)."""
        return dict(self._core_keys)

    def core_key(self, core_ind):
        return self._core_keys[core_ind]

    def core_of(self, channel):
        return self[channel].core_ind

    def resolve_core_key(self, key):
        """Core index for a core key given as a tuple or comma-joined string."""
        if isinstance(key, str):
            key = tuple(k.strip() for k in key.split(","))
        key = tuple(key)
        for name in key:
            self[name]
        cores = {self[name].core_ind for name in key}
        if len(cores) != 1:
            raise UnknownChannel(f"core key {key} spans several cores")
        return cores.pop()

    def attr(self, channel, name):
        ch = self[channel]
        if name in ch.attrs:
            return ch.attrs[name]
        if name in ("core_ind", "elem_ind", "kind", "qubit"):
            return getattr(ch, name)
        raise UnknownChannel(f"channel {channel!r} has no attribute {name!r}")

    def qubit_channels(self, qubit):
        return [c.name for c in self.channels.values() if c.qubit == qubit]

    def channel_for(self, qubit, kind):
        for c in self.channels.values():
            if c.qubit == qubit and c.kind == kind:
                return c.name
        raise UnknownChannel(f"no {kind} channel for qubit {qubit!r}")

    @property
    def qubits(self):
        return sorted({c.qubit for c in self.channels.values()})
