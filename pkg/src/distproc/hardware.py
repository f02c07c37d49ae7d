"""A bundled hardware description (channels, gate calibration, FPROC map) and
the compile -> assemble -> simulate round trip over it."""

from dataclasses import dataclass, field
from importlib import resources
import json

from . import qbackend, sim
from .channels import ChannelConfig
from .ir import FprocChannelMap, GateCalibration, compile_program, program_from_list
from .ir.compiler import DEFAULT_PASSES
from .timing import CostTable


def data_path(name):
    return resources.files("distproc.data") / name


def load_data(name):
    with data_path(name).open() as f:
        return json.load(f)


@dataclass
class Setup:
    chan_cfg: ChannelConfig
    cal: GateCalibration
    fproc_map: FprocChannelMap
    costs: CostTable = field(default_factory=CostTable)

    @classmethod
    def default(cls, costs=None):
        """Eight transmons Q0..Q7 on a linear coupling chain, one core per qubit."""
        return cls(ChannelConfig.from_dict(load_data("channels.json")),
                   GateCalibration.from_dict(load_data("calibration.json")),
                   FprocChannelMap.from_dict(load_data("fproc_map.json")),
                   costs or CostTable())

    def compile(self, program, passes=DEFAULT_PASSES):
        if isinstance(program, list):
            program = program_from_list(program)
        return compile_program(program, self.cal, self.chan_cfg, self.fproc_map, passes, costs=self.costs)

    def sim_config(self, strict=True, **kw):
        readout = sim.readout_from_fproc_map(self.fproc_map.to_dict(), self.chan_cfg, self.chan_cfg.clock_freq)
        return sim.SimulationConfig(clock_freq=self.chan_cfg.clock_freq, costs=self.costs, strict=strict,
                                    readout=readout, **kw)

    def build(self, program, passes=DEFAULT_PASSES, strict=True):
        """Compile and assemble; returns (compiled program, core images, simulation config)."""
        compiled = self.compile(program, passes)
        return compiled, compiled.assemble(self.chan_cfg), self.sim_config(strict)

    def run_once(self, program, backend=None, seed=0, strict=True):
        compiled, images, cfg = self.build(program, strict=strict)
        machine = sim.load(images, cfg, compiled.symbols)
        return sim.run(machine, backend, qbackend.shot_rng(seed, 0))

    def run_shots(self, program, backend_factory, n_shots, seed=0, strict=True, workers=1):
        compiled, images, cfg = self.build(program, strict=strict)
        records, _ = qbackend.run_shots(images, cfg, backend_factory, n_shots, seed, compiled.symbols, workers)
        return records
