"""Toolchain for a distributed qubit-control processor.

Submodules: ``isa`` (128-bit instruction words), ``asm`` (assembler and
disassembler), ``ir`` (compiler passes), ``sim`` (cycle-level multi-core
simulator), ``qbackend`` (measurement models and multi-shot runs) and ``cli``.
"""

__version__ = "0.1.0"
