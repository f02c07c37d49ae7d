"""Command-line front end: ``distproc compile|asm|disasm|sim|timeline``.

Exit codes: 0 success, 2 malformed or schema-invalid input, 3 compile or
assembly error, 4 I/O error, 5 simulation error. Errors are written to
standard error as one JSON object per line.
"""

from dataclasses import dataclass, field
import argparse
import hashlib
import json
import os
import sys

from . import asm, isa, qbackend, sim
from .channels import ChannelConfig
from .elementconfig import ElementConfig
from .errors import AsmError, CompileError, IsaError, PassErrors, SchemaError, SimulationError
from .hardware import data_path
from .ir import FprocChannelMap, GateCalibration, compile_program, program_from_list
from .ir.compiler import DEFAULT_PASSES, CompiledProgram
from .timing import CostTable

EXIT_SCHEMA, EXIT_COMPILE, EXIT_IO, EXIT_SIM = 2, 3, 4, 5


class CliError(Exception):
    def __init__(self, code, kind, message, **extra):
        super().__init__(message)
        self.code, self.kind, self.extra = code, kind, extra


def _read_json(path):
    try:
        with open(path) as f:
            return json.load(f)
    except json.JSONDecodeError as exc:
        raise CliError(EXIT_SCHEMA, "JSONDecodeError", exc.msg, file=path, line=exc.lineno,
                       column=exc.colno) from None


def _sha256(path):
    with open(path, "rb") as f:
        return hashlib.sha256(f.read()).hexdigest()


@dataclass
class ProjectConfig:
    """Paths to the hardware description files plus tool parameters.

    Relative paths resolve against the config file's directory; omitted
    files fall back to the bundled eight-qubit description.
    """

    channels: str = None
    calibration: str = None
    fproc_map: str = None
    element: dict = field(default_factory=dict)
    simulation: dict = field(default_factory=dict)
    passes: list = None

    @classmethod
    def load(cls, path=None):
        if path is None:
            cfg = cls()
        else:
            doc = _read_json(path)
            asm.validate(doc, "project.schema.json")
            root = os.path.dirname(os.path.abspath(path))
            cfg = cls(**doc)
            for name in ("channels", "calibration", "fproc_map"):
                value = getattr(cfg, name)
                if value is not None:
                    setattr(cfg, name, os.path.join(root, value))
        for name, default in (("channels", "channels.json"), ("calibration", "calibration.json"),
                              ("fproc_map", "fproc_map.json")):
            if getattr(cfg, name) is None:
                setattr(cfg, name, str(data_path(default)))
            if not os.path.exists(getattr(cfg, name)):
                raise FileNotFoundError(f"{name} file {getattr(cfg, name)} does not exist")
        return cfg

    def chan_cfg(self):
        doc = _read_json(self.channels)
        base = ElementConfig.from_dict(self.element) if self.element else None
        return ChannelConfig.from_dict(doc, base)

    def cal(self):
        return GateCalibration.from_dict(_read_json(self.calibration))

    def fproc(self):
        return FprocChannelMap.from_dict(_read_json(self.fproc_map))

    def costs(self):
        s = self.simulation
        return CostTable(s.get("cost_default", 2), dict(s.get("cost_overrides", {})), s.get("fproc_latency", 4))

    def inputs(self):
        return {name: _sha256(getattr(self, name)) for name in ("channels", "calibration", "fproc_map")}


def _costs_doc(costs):
    return {"default": costs.default, "overrides": dict(sorted(costs.overrides.items())),
            "fproc_latency": costs.fproc_latency}


def _sim_section(project, chan_cfg, costs):
    fmap = project.fproc().to_dict()
    readout = sim.readout_from_fproc_map(fmap, chan_cfg, chan_cfg.clock_freq)
    return {"clock_freq": chan_cfg.clock_freq, "costs": _costs_doc(costs),
            "max_cycles": project.simulation.get("max_cycles", 1 << 32),
            "readout": [[r.channel, r.qubit, r.func_id, r.delay_cycles] for r in readout]}


def _write_outputs(images, out_dir, extra, files):
    path = asm.write_images(images, out_dir, extra)
    for name, doc in files.items():
        with open(os.path.join(out_dir, name), "w") as f:
            json.dump(doc, f, indent=1, sort_keys=True)
            f.write("\n")
    return path


# --- commands ------------------------------------------------------------------

def cmd_compile(ir_file, config, out_dir, passes=None):
    """Compile an IR program; write core images, symbols and ``manifest.json``."""
    project = ProjectConfig.load(config)
    doc = _read_json(ir_file)
    asm.validate(doc, "ir.schema.json")
    chan_cfg = project.chan_cfg()
    costs = project.costs()
    passes = passes or project.passes or list(DEFAULT_PASSES)
    compiled = compile_program(program_from_list(doc), project.cal(), chan_cfg, project.fproc(), passes,
                               costs=costs)
    for d in compiled.diagnostics:
        _diag({"warning": d.kind, "core": d.core, "index": d.index, "message": d.message})
    images = compiled.assemble(chan_cfg)
    extra = {"source": {"program": _sha256(ir_file), **project.inputs()}, "passes": list(passes),
             "symbols": "symbols.json", "asm": "program.asm.json",
             "simulation": _sim_section(project, chan_cfg, costs)}
    return _write_outputs(images, out_dir, extra, {"symbols.json": compiled.symbols_json(),
                                                   "program.asm.json": compiled.asm})


def cmd_asm(asm_file, config, out_dir):
    """Assemble a JSON assembly program into core images and ``manifest.json``."""
    project = ProjectConfig.load(config)
    doc = _read_json(asm_file)
    chan_cfg = project.chan_cfg()
    images = asm.assemble(doc, chan_cfg)
    extra = {"source": {"program": _sha256(asm_file), **project.inputs()},
             "simulation": _sim_section(project, chan_cfg, project.costs())}
    return _write_outputs(images, out_dir, extra, {})


def cmd_disasm(path, strict=True):
    """Listing of a binary file, or of every core in a manifest."""
    if path.endswith(".json"):
        images, _ = asm.load_images(path)
        parts = []
        for key, image in images.items():
            parts.append(f"# core {asm.core_key_str(key)}\n" + isa.disassemble(image.binary, strict))
        return "".join(parts)
    with open(path, "rb") as f:
        return isa.disassemble(isa.bytes_to_words(f.read()), strict)


def _load_manifest(manifest_path, strict):
    images, manifest = asm.load_images(manifest_path)
    section = manifest.get("simulation", {})
    c = section.get("costs", {})
    costs = CostTable(c.get("default", 2), dict(c.get("overrides", {})), c.get("fproc_latency", 4))
    cfg = sim.SimulationConfig(clock_freq=section.get("clock_freq", 500e6), costs=costs, strict=strict,
                               max_cycles=section.get("max_cycles", 1 << 32),
                               readout=tuple(sim.ReadoutChannel(*r) for r in section.get("readout", [])))
    symbols = {}
    if manifest.get("symbols"):
        sym_doc = _read_json(os.path.join(os.path.dirname(os.path.abspath(manifest_path)), manifest["symbols"]))
        symbols = CompiledProgram.symbols_from_json(sym_doc)
    return images, cfg, symbols


def _backend_factory(spec, symbols):
    if spec.startswith("scripted:"):
        script = _read_json(spec.split(":", 1)[1])
        return _ScriptedFactory(script)
    if spec == "statevector":
        qubits = sorted({q for s in symbols.values() for q in s.get("qubits", [])})
        if not qubits:
            raise SimulationError("the statevector backend needs a compiled manifest with a symbol table")
        return _StatevectorFactory(tuple(qubits))
    if spec == "null":
        return sim.NullBackend
    raise CliError(EXIT_SCHEMA, "BackendSpec", f"unknown backend {spec!r}; use scripted:<file>, "
                                               f"statevector or null")


@dataclass
class _ScriptedFactory:
    script: dict

    def __call__(self):
        return qbackend.ScriptedBackend(self.script)


@dataclass
class _StatevectorFactory:
    qubits: tuple

    def __call__(self):
        return qbackend.StatevectorBackend(list(self.qubits))


def _report(records, seed, backend, n_shots):
    finals = sorted({q for r in records for q in r.final})
    mids = sorted({q for r in records for q in r.mid})
    report = {"shots": n_shots, "seed": seed, "backend": backend,
              "expectations": {q: qbackend.expectation(records, q) for q in finals}}
    if mids:
        report["partitions"] = {
            ",".join(f"{q}={b}" for q, b in zip(mids, key)): {
                "n": len(group), "expectations": {q: qbackend.expectation(group, q) for q in finals}}
            for key, group in sorted(qbackend.partition(records, mids).items(), key=lambda kv: str(kv[0]))}
    return report


def cmd_sim(manifest, backend="null", shots=1, seed=0, out_dir=".", strict=True, workers=1):
    """Run shots; write ``timeline.csv`` (first shot), ``shots.jsonl`` and ``report.json``."""
    images, cfg, symbols = _load_manifest(manifest, strict)
    factory = _backend_factory(backend, symbols)
    os.makedirs(out_dir, exist_ok=True)
    try:
        records, traces = qbackend.run_shots(images, cfg, factory, 1 if shots else 0, seed, symbols,
                                             keep_traces=True)
        if shots > 1:
            records, _ = qbackend.run_shots(images, cfg, factory, shots, seed, symbols, workers=workers)
    except SimulationError as exc:
        trace = getattr(exc, "trace", None)
        if trace is not None:
            with open(os.path.join(out_dir, "failed_shot.jsonl"), "w") as f:
                f.write(trace.to_jsonl())
        raise
    with open(os.path.join(out_dir, "timeline.csv"), "w", newline="") as f:
        f.write(sim.timeline_csv(traces[0]) if traces else sim.timeline_csv(sim.SimulationTrace()))
    with open(os.path.join(out_dir, "shots.jsonl"), "w") as f:
        f.writelines(r.to_json() + "\n" for r in records)
    path = os.path.join(out_dir, "report.json")
    with open(path, "w") as f:
        json.dump(_report(records, seed, backend, shots), f, indent=1, sort_keys=True)
        f.write("\n")
    return path


def cmd_timeline(manifest, backend="null", seed=0, strict=True):
    images, cfg, symbols = _load_manifest(manifest, strict)
    _, traces = qbackend.run_shots(images, cfg, _backend_factory(backend, symbols), 1, seed, symbols,
                                   keep_traces=True)
    return sim.timeline_csv(traces[0])


# --- entry point -------------------------------------------------------------------

def _diag(obj):
    sys.stderr.write(json.dumps(obj, sort_keys=True) + "\n")


def _add_strict(p):
    g = p.add_mutually_exclusive_group()
    g.add_argument("--strict", dest="strict", action="store_true", default=True,
                   help="reserved bits, missed triggers and empty FPROC slots are errors (default)")
    g.add_argument("--lenient", dest="strict", action="store_false",
                   help="tolerate reserved bits and read empty FPROC slots as 0")


def build_parser():
    parser = argparse.ArgumentParser(prog="distproc", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("compile", help="IR program -> core images + symbol table + manifest")
    p.add_argument("program")
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.add_argument("--passes", help="comma-separated pass list ending in 'emit'")

    p = sub.add_parser("asm", help="JSON assembly -> core images + manifest")
    p.add_argument("program")
    p.add_argument("--config")
    p.add_argument("--out", required=True)

    p = sub.add_parser("disasm", help="binary or manifest -> listing")
    p.add_argument("binary")
    p.add_argument("--out")
    _add_strict(p)

    for name in ("sim", "timeline"):
        p = sub.add_parser(name, help="simulate a manifest" if name == "sim" else "single-shot timeline CSV")
        p.add_argument("manifest")
        p.add_argument("--backend", default="null", help="scripted:<file> | statevector | null")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", default=None if name == "timeline" else ".")
        p.add_argument("--config", help="project config (simulation.workers sets shot parallelism)")
        _add_strict(p)
        if name == "sim":
            p.add_argument("--shots", type=int, default=1)
    return parser


def _emit(text, out):
    if out:
        with open(out, "w") as f:
            f.write(text)
    else:
        sys.stdout.write(text)


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "compile":
            passes = [p.strip() for p in args.passes.split(",")] if args.passes else None
            print(cmd_compile(args.program, args.config, args.out, passes))
        elif args.command == "asm":
            print(cmd_asm(args.program, args.config, args.out))
        elif args.command == "disasm":
            _emit(cmd_disasm(args.binary, args.strict), args.out)
        elif args.command == "sim":
            if args.shots < 0:
                raise CliError(EXIT_SCHEMA, "ArgumentError", "--shots must be >= 0")
            workers = ProjectConfig.load(args.config).simulation.get("workers", 1) if args.config else 1
            print(cmd_sim(args.manifest, args.backend, args.shots, args.seed, args.out, args.strict, workers))
        elif args.command == "timeline":
            _emit(cmd_timeline(args.manifest, args.backend, args.seed, args.strict), args.out)
    except CliError as exc:
        _diag({"error": exc.kind, "message": str(exc), **exc.extra})
        return exc.code
    except SchemaError as exc:
        _diag({"error": type(exc).__name__, "message": str(exc)})
        return EXIT_SCHEMA
    except PassErrors as exc:
        for e in exc.errors:
            _diag({"error": type(e).__name__, "message": str(e)})
        return EXIT_COMPILE
    except (CompileError, AsmError, IsaError) as exc:
        _diag({"error": type(exc).__name__, "message": str(exc)})
        return EXIT_COMPILE
    except SimulationError as exc:
        _diag({"error": type(exc).__name__, "message": str(exc), "shot": getattr(exc, "shot", None)})
        return EXIT_SIM
    except OSError as exc:
        _diag({"error": type(exc).__name__, "message": str(exc)})
        return EXIT_IO
    return 0


if __name__ == "__main__":
    sys.exit(main())
