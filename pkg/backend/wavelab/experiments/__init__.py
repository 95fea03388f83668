"""Experiment runners, one module per experiment kind.

Each module exposes ``Params`` (the pydantic model of its ``[params]`` table),
``STAGES`` (the named random streams it draws from) and ``run(ctx)``.
"""

from wavelab.experiments import diag_sweep, moyal_d1, mourre, pde_disperse, pde_trap, rays, symbol_check

RUNNERS = {
    "symbol_check": symbol_check,
    "moyal_d1": moyal_d1,
    "diag_sweep": diag_sweep,
    "rays": rays,
    "mourre": mourre,
    "pde_trap": pde_trap,
    "pde_disperse": pde_disperse,
}
